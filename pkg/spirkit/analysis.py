"""Closed-form capacity, threshold and feasibility calculators.
All arithmetic is in exact rationals.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from spirkit import core, utils

Rational = Fraction | int

ZERO = Fraction(0)
ONE = Fraction(1)


class Regime(enum.StrEnum):
    TRIVIAL_K1 = "trivial_K1"
    INFEASIBLE_N1 = "infeasible_N1"
    BELOW_THRESHOLD = "below_threshold"
    AT_CAPACITY = "at_capacity"


@dataclass(frozen=True)
class CapacityVerdict:
    """Capacity of a SPIR setting and the randomness it takes to reach it.

    rho_threshold is None when no amount of common randomness helps (N=1).
    """

    capacity: Fraction
    feasible: bool
    rho_threshold: Fraction | None
    regime: Regime
    # Only set for finite message length
    min_download: int | None = None
    min_randomness: int | None = None

    def to_dict(self) -> dict:
        data: dict = {
            "capacity": utils.rational_str(self.capacity),
            "feasible": self.feasible,
            "regime": str(self.regime),
            "rho_threshold": (
                None
                if self.rho_threshold is None
                else utils.rational_str(self.rho_threshold)
            ),
        }
        if self.min_download is not None:
            data["min_download"] = self.min_download
            data["min_randomness"] = self.min_randomness
        return data


@dataclass(frozen=True)
class RegionBound:
    """Per-message rate caps for unequal message sizes."""

    caps: tuple[Fraction, ...]
    # D / L, the same for every message
    normalized_download: Fraction
    # Randomness per symbol of the largest message
    rho_threshold: Fraction

    def to_dict(self) -> dict:
        return {
            "caps": [utils.rational_str(cap) for cap in self.caps],
            "normalized_download": utils.rational_str(self.normalized_download),
            "rho_threshold": utils.rational_str(self.rho_threshold),
        }


def _check_counts(n: int, k: int) -> None:
    if n < 1 or k < 1:
        raise core.ParameterError(
            f"Need at least one database and one message, got N={n}, K={k}"
        )


def _degenerate(n: int, k: int) -> CapacityVerdict | None:
    if k == 1:
        return CapacityVerdict(ONE, True, ZERO, Regime.TRIVIAL_K1)
    if n == 1:
        return CapacityVerdict(ZERO, False, None, Regime.INFEASIBLE_N1)
    return None


def _rho(rho: Rational | str | None) -> Fraction | None:
    if rho is None:
        return None
    value = utils.parse_rational(rho) if isinstance(rho, str) else Fraction(rho)
    if value < 0:
        raise core.ParameterError(f"Randomness ratio must be non-negative, got {rho}")
    return value


def capacity_spir(n: int, k: int, rho: Rational | str | None = None) -> CapacityVerdict:
    """SPIR capacity with N databases, K messages and rho symbols of common
    randomness per message symbol. None stands for unlimited randomness.

    Args:
        n (int): Databases
        k (int): Messages
        rho (Rational | str | None): Common randomness ratio

    Returns:
        CapacityVerdict: 1 - 1/N when rho >= 1/(N-1), otherwise 0
    """

    _check_counts(n, k)
    rho = _rho(rho)
    verdict = _degenerate(n, k)
    if verdict is not None:
        return verdict

    threshold = Fraction(1, n - 1)
    if rho is None or rho >= threshold:
        return CapacityVerdict(ONE - Fraction(1, n), True, threshold, Regime.AT_CAPACITY)
    return CapacityVerdict(ZERO, False, threshold, Regime.BELOW_THRESHOLD)


def capacity_pir(n: int, k: int) -> Fraction:
    """PIR capacity (1 + 1/N + ... + 1/N^(K-1))^-1.

    Args:
        n (int): Databases
        k (int): Messages

    Returns:
        Fraction: Capacity
    """

    _check_counts(n, k)
    return 1 / sum(Fraction(1, n**i) for i in range(k))


def min_download(n: int, length: int) -> int:
    """Fewest answer symbols a zero-error SPIR scheme needs for a message of
    the given length: ceil(L / (1 - 1/N)).
    """

    return utils.ceil_div(length * n, n - 1)


def min_randomness(n: int, length: int) -> int:
    """Fewest common randomness symbols: ceil(L / (N-1))."""

    return utils.ceil_div(length, n - 1)


def region_bound(n: int, k: int, lengths: Sequence[int]) -> RegionBound:
    """Capacity region for messages of different sizes: message k can be
    retrieved at no more than (l_k / max l)(1 - 1/N).

    Args:
        n (int): Databases, at least 2
        k (int): Messages, at least 2
        lengths (Sequence[int]): Message sizes

    Raises:
        core.ParameterError: Sizes do not match K or N, K below 2

    Returns:
        RegionBound: Rate caps and normalized download
    """

    if n < 2 or k < 2:
        raise core.ParameterError(f"The capacity region needs N, K >= 2, got {n}, {k}")
    if len(lengths) != k or any(length < 1 for length in lengths):
        raise core.ParameterError(f"Need {k} positive message sizes, got {lengths}")

    largest = max(lengths)
    full = ONE - Fraction(1, n)
    return RegionBound(
        tuple(Fraction(length, largest) * full for length in lengths),
        Fraction(largest * n, n - 1),
        Fraction(1, n - 1),
    )


def capacity_finite(
    n: int, k: int, length: int, rho: Rational | str | None = None
) -> CapacityVerdict:
    """Zero-error SPIR capacity for messages of exactly L symbols.

    Args:
        n (int): Databases
        k (int): Messages
        length (int): Symbols per message
        rho (Rational | str | None): Common randomness ratio, None for unlimited

    Returns:
        CapacityVerdict: L / ceil(L / (1 - 1/N)) when rho >= ceil(L/(N-1)) / L,
        otherwise 0
    """

    _check_counts(n, k)
    if length < 1:
        raise core.ParameterError(f"Message length must be positive, got {length}")
    rho = _rho(rho)
    verdict = _degenerate(n, k)
    if verdict is not None:
        return verdict

    download = min_download(n, length)
    randomness = min_randomness(n, length)
    threshold = Fraction(randomness, length)
    if rho is None or rho >= threshold:
        return CapacityVerdict(
            Fraction(length, download),
            True,
            threshold,
            Regime.AT_CAPACITY,
            download,
            randomness,
        )
    return CapacityVerdict(
        ZERO, False, threshold, Regime.BELOW_THRESHOLD, download, randomness
    )
