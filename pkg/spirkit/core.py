"""Finite-field arithmetic, protocol parameters, message storage
and the two sources of randomness.
"""

from __future__ import annotations

import dataclasses
import functools
import logging
import threading
from dataclasses import dataclass
from typing import Sequence, Type

import galois
import numpy as np

from spirkit import exceptions, info

logger = logging.getLogger(__name__)

Seed = int | np.random.Generator | None
SymbolVector = galois.FieldArray


class FieldError(exceptions.UserError):
    """Invalid field, symbol or vector shape."""


class ParameterError(exceptions.UserError):
    """Invalid protocol parameters."""


@functools.lru_cache(maxsize=None)
def galois_field(p: int) -> Type[galois.FieldArray]:
    """Get the galois array class of the prime field F_p.

    Args:
        p (int): Prime

    Returns:
        Type[galois.FieldArray]: Field array class
    """

    return galois.GF(p)


@dataclass(frozen=True)
class FieldPrime:
    """The prime field F_p every symbol lives in."""

    p: int = info.DEFAULT_PRIME

    def __post_init__(self) -> None:
        if not isinstance(self.p, int) or self.p < 2 or not galois.is_prime(self.p):
            raise FieldError(f"Field order {self.p} is not a prime")

    @property
    def gf(self) -> Type[galois.FieldArray]:
        return galois_field(self.p)

    @property
    def symbol_bits(self) -> int:
        """Bits needed for one symbol on the wire and on disk."""

        return (self.p - 1).bit_length()

    def vector(self, symbols: Sequence[int] | np.ndarray) -> SymbolVector:
        """Build a symbol vector, checking every symbol is in [0, p-1].

        Args:
            symbols (Sequence[int] | np.ndarray): Symbols

        Raises:
            FieldError: A symbol is out of range

        Returns:
            SymbolVector: Field array
        """

        raw = np.asarray(symbols, dtype=np.int64)
        if raw.size and (raw.min() < 0 or raw.max() >= self.p):
            raise FieldError(f"Symbols must lie in [0, {self.p - 1}]")
        return self.gf(raw)

    def zeros(self, shape: int | tuple[int, ...]) -> SymbolVector:
        return self.gf.Zeros(shape)


def field_add(a: int, b: int, field_prime: FieldPrime) -> int:
    """Add two symbols in F_p.

    Args:
        a (int): Symbol
        b (int): Symbol
        field_prime (FieldPrime): Field

    Returns:
        int: (a + b) mod p
    """

    gf = field_prime.gf
    return int(gf(a) + gf(b))


def inner_product(
    coeffs: Sequence[int] | np.ndarray,
    data: Sequence[int] | np.ndarray,
    field_prime: FieldPrime,
) -> SymbolVector:
    """Combine data symbols with coefficients over F_p.
    Leading axes are batch axes, the last axis is summed.

    Args:
        coeffs (Sequence[int] | np.ndarray): Coefficients
        data (Sequence[int] | np.ndarray): Data symbols
        field_prime (FieldPrime): Field

    Raises:
        FieldError: Lengths differ

    Returns:
        SymbolVector: sum(coeffs[i] * data[i]) mod p
    """

    coeffs = as_symbols(coeffs, field_prime)
    data = as_symbols(data, field_prime)
    if coeffs.shape[-1:] != data.shape[-1:]:
        raise FieldError(
            f"Cannot combine {coeffs.shape[-1:]} coefficients "
            f"with {data.shape[-1:]} symbols"
        )
    return (coeffs * data).sum(axis=-1)


def as_symbols(
    values: Sequence[int] | np.ndarray, field_prime: FieldPrime
) -> SymbolVector:
    """Return values as an array of field_prime, validating plain input."""

    if isinstance(values, galois.FieldArray) and type(values).order == field_prime.p:
        return values
    return field_prime.vector(values)


def make_rng(seed: Seed) -> np.random.Generator:
    """Get a numpy generator from an integer seed or an existing generator."""

    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_uniform(count: int, field_prime: FieldPrime, seed: Seed) -> SymbolVector:
    """Draw i.i.d. uniform symbols. Reproducible under a fixed integer seed.

    Args:
        count (int): Number of symbols
        field_prime (FieldPrime): Field
        seed (Seed): Integer seed or generator

    Returns:
        SymbolVector: Uniform symbols
    """

    if count < 0:
        raise ParameterError(f"Cannot sample {count} symbols")

    rng = make_rng(seed)
    return field_prime.gf(rng.integers(0, field_prime.p, size=count, dtype=np.int64))


@dataclass(frozen=True)
class ProtocolParams:
    """The world shape: N databases, K messages of given symbol counts over F_p."""

    n: int
    k: int
    lengths: tuple[int, ...]
    field: FieldPrime = dataclasses.field(default_factory=FieldPrime)

    def __post_init__(self) -> None:
        if self.n < 1 or self.k < 1:
            raise ParameterError(
                f"Need at least one database and one message, got N={self.n}, "
                f"K={self.k}"
            )
        object.__setattr__(self, "lengths", tuple(int(i) for i in self.lengths))
        if len(self.lengths) != self.k:
            raise ParameterError(
                f"Got {len(self.lengths)} message lengths for K={self.k} messages"
            )
        if any(length < 1 for length in self.lengths):
            raise ParameterError("Every message needs at least one symbol")

    @classmethod
    def uniform(cls, n: int, k: int, length: int, p: int = info.DEFAULT_PRIME):
        """Parameters with K messages of the same length."""

        return cls(n, k, (length,) * k, FieldPrime(p))

    @property
    def p(self) -> int:
        return self.field.p

    @property
    def equal_lengths(self) -> bool:
        return len(set(self.lengths)) == 1

    @property
    def max_length(self) -> int:
        return max(self.lengths)

    @property
    def message_symbols(self) -> int:
        return sum(self.lengths)

    def to_dict(self) -> dict:
        return {"n": self.n, "k": self.k, "lengths": list(self.lengths), "p": self.p}

    @classmethod
    def from_dict(cls, data: dict) -> ProtocolParams:
        try:
            return cls(
                int(data["n"]),
                int(data["k"]),
                tuple(data["lengths"]),
                FieldPrime(int(data.get("p", info.DEFAULT_PRIME))),
            )
        except KeyError as err:
            raise ParameterError(f"Parameter {err.args[0]} is missing") from err
        except (TypeError, ValueError) as err:
            raise ParameterError(f"Invalid parameters: {err}") from err


def _frozen(array: SymbolVector) -> SymbolVector:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class MessageStore:
    """The K messages, replicated identically at every database."""

    field: FieldPrime
    messages: tuple[SymbolVector, ...]

    def __post_init__(self) -> None:
        if not self.messages:
            raise ParameterError("A store holds at least one message")
        messages = tuple(
            _frozen(as_symbols(message, self.field).copy()) for message in self.messages
        )
        if any(message.ndim != 1 or message.size == 0 for message in messages):
            raise ParameterError("Messages must be non-empty symbol vectors")
        object.__setattr__(self, "messages", messages)

    @classmethod
    def from_symbols(
        cls, field_prime: FieldPrime, messages: Sequence[Sequence[int]]
    ) -> MessageStore:
        return cls(field_prime, tuple(field_prime.vector(m) for m in messages))

    @classmethod
    def random(cls, params: ProtocolParams, seed: Seed) -> MessageStore:
        """Fill a store with uniform messages of the parameter lengths."""

        rng = make_rng(seed)
        return cls(
            params.field,
            tuple(sample_uniform(length, params.field, rng) for length in params.lengths),
        )

    @property
    def k(self) -> int:
        return len(self.messages)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(message.size for message in self.messages)

    def matches(self, params: ProtocolParams) -> bool:
        return self.field == params.field and self.lengths == params.lengths

    def window(self, offset: int, width: int) -> SymbolVector:
        """Concatenate symbols [offset, offset + width) of every message.
        Positions past the end of a message are zero symbols.

        Args:
            offset (int): First symbol position
            width (int): Symbols per message

        Returns:
            SymbolVector: K * width symbols, message-major
        """

        if offset < 0 or width < 0:
            raise ParameterError(f"Invalid window ({offset}, {width})")

        window = self.field.zeros(self.k * width)
        for index, message in enumerate(self.messages):
            part = message[offset : offset + width]
            window[index * width : index * width + part.size] = part
        return window

    def message(self, index: int) -> SymbolVector:
        """Get message by its 1-based index."""

        if not 1 <= index <= self.k:
            raise ParameterError(f"Message index {index} not in [1, {self.k}]")
        return self.messages[index - 1]

    def to_lists(self) -> list[list[int]]:
        return [message.tolist() for message in self.messages]


class CommonRandomness:
    """Symbols shared by all databases and hidden from the user (S).
    The consumption tally is the only mutable state.
    """

    def __init__(self, symbols: SymbolVector) -> None:
        """Symbols shared by all databases and hidden from the user.

        Args:
            symbols (SymbolVector): Shared symbols
        """

        self.symbols = _frozen(symbols.copy())
        self._consumed: set[int] = set()
        self._lock = threading.Lock()

    @classmethod
    def random(
        cls, count: int, field_prime: FieldPrime, seed: Seed
    ) -> CommonRandomness:
        return cls(sample_uniform(count, field_prime, seed))

    def __len__(self) -> int:
        return self.symbols.size

    @property
    def consumed_count(self) -> int:
        with self._lock:
            return len(self._consumed)

    def symbol(self, index: int) -> SymbolVector:
        """Get one shared symbol and record its consumption.
        Asking for the same index again does not consume more.

        Args:
            index (int): Symbol index

        Raises:
            ParameterError: Index out of range

        Returns:
            SymbolVector: The symbol as a 0-d field array
        """

        if not 0 <= index < self.symbols.size:
            raise ParameterError(
                f"Common randomness index {index} out of range "
                f"[0, {self.symbols.size - 1}]"
            )
        with self._lock:
            self._consumed.add(index)
        return self.symbols[index]


@dataclass(frozen=True, eq=False)
class UserRandomness:
    """Private coins of one retrieval session (F), drawn before anything else."""

    coins: SymbolVector

    def __post_init__(self) -> None:
        object.__setattr__(self, "coins", _frozen(self.coins.copy()))

    def __len__(self) -> int:
        return self.coins.size

    def split(self, sizes: Sequence[int]) -> list[SymbolVector]:
        """Cut the coins into per-round vectors.

        Args:
            sizes (Sequence[int]): Coins needed by each round

        Raises:
            ParameterError: Sizes do not add up to the coin count

        Returns:
            list[SymbolVector]: Coins per round
        """

        if sum(sizes) != self.coins.size:
            raise ParameterError(
                f"Rounds need {sum(sizes)} coins, session has {self.coins.size}"
            )
        bounds = np.cumsum([0, *sizes])
        return [self.coins[bounds[i] : bounds[i + 1]] for i in range(len(sizes))]
