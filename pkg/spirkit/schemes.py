"""Capacity-achieving SPIR constructions: the base scheme, the region scheme
for unequal message sizes and the finite-length planner, plus the session
driver that runs any plan round by round.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import galois
import numpy as np

from spirkit import core, exceptions
from spirkit.core import (
    CommonRandomness,
    MessageStore,
    ProtocolParams,
    Seed,
    SymbolVector,
    UserRandomness,
)
from spirkit.variant_managers import VariantManager, honest

logger = logging.getLogger(__name__)


class InfeasibleParamsError(exceptions.UserError):
    """SPIR is trivial or infeasible for these parameters."""

    def __init__(self, params: ProtocolParams, message: str) -> None:
        super().__init__(message)
        self.params = params


class PlanError(exceptions.UserError):
    """A plan does not fit its parameters."""


class IncompleteSessionError(exceptions.AppError):
    """A round is missing answers."""


class PlanKind:
    BASE = "base"
    FINITE = "finite"
    REGION = "region"

    ALL = (BASE, FINITE, REGION)


@dataclass(frozen=True)
class RetrievalRequest:
    """The desired message index (theta), 1-based."""

    desired_index: int

    def validate(self, params: ProtocolParams) -> None:
        if not 1 <= self.desired_index <= params.k:
            raise core.ParameterError(
                f"Desired index {self.desired_index} not in [1, {params.k}]"
            )


@dataclass(frozen=True)
class RoundPlan:
    """One run of the base scheme over a symbol window."""

    offset: int
    width: int
    participants: tuple[int, ...]
    group: int = 1

    def __post_init__(self) -> None:
        if self.width < 1:
            raise PlanError("A round retrieves at least one symbol")
        if len(self.participants) != self.width + 1:
            raise PlanError(
                f"A round of width {self.width} needs {self.width + 1} databases, "
                f"got {len(self.participants)}"
            )

    def coin_count(self, k: int) -> int:
        return self.width * k

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "offset": self.offset,
            "participants": list(self.participants),
            "width": self.width,
        }


@dataclass(frozen=True)
class SessionPlan:
    """Rounds of one retrieval session, their windows and databases."""

    kind: str
    params: ProtocolParams
    rounds: tuple[RoundPlan, ...]
    # Message indices (1-based) sorted by length, as the region scheme sees them
    order: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if not self.rounds:
            raise PlanError("A plan needs at least one round")

        position = 0
        for round_plan in self.rounds:
            if round_plan.offset != position:
                raise PlanError("Round windows must be contiguous from symbol 0")
            if any(not 1 <= n <= self.params.n for n in round_plan.participants):
                raise PlanError(f"Round uses a database outside [1, {self.params.n}]")
            position += round_plan.width

        if position < self.params.max_length:
            raise PlanError(
                f"Plan covers {position} symbols, longest message has "
                f"{self.params.max_length}"
            )
        if not self.order:
            object.__setattr__(self, "order", tuple(range(1, self.params.k + 1)))

    @property
    def download(self) -> int:
        """Answer symbols the user downloads (D)."""

        return sum(len(round_plan.participants) for round_plan in self.rounds)

    @property
    def randomness(self) -> int:
        """Common randomness symbols consumed, one per round."""

        return len(self.rounds)

    @property
    def coin_count(self) -> int:
        return sum(round_plan.coin_count(self.params.k) for round_plan in self.rounds)

    @property
    def covered(self) -> int:
        return sum(round_plan.width for round_plan in self.rounds)

    def per_database_download(self) -> tuple[int, ...]:
        counts = [0] * self.params.n
        for round_plan in self.rounds:
            for n in round_plan.participants:
                counts[n - 1] += 1
        return tuple(counts)

    def to_dict(self) -> dict:
        return {
            "coins": self.coin_count,
            "download": self.download,
            "kind": self.kind,
            "order": list(self.order),
            "params": self.params.to_dict(),
            "per_database_download": list(self.per_database_download()),
            "randomness": self.randomness,
            "rounds": [round_plan.to_dict() for round_plan in self.rounds],
        }


@dataclass(frozen=True, eq=False)
class Query:
    round: int
    db_index: int
    offset: int
    coeffs: SymbolVector

    def to_dict(self) -> dict:
        return {"coeffs": self.coeffs.tolist(), "db": self.db_index}


@dataclass(frozen=True)
class Answer:
    round: int
    db_index: int
    value: int

    def to_dict(self) -> dict:
        return {"db": self.db_index, "value": self.value}


class DownloadLedger:
    """Answer symbols received, counted per database."""

    def __init__(self, n: int) -> None:
        self.counts = [0] * n
        self._lock = threading.Lock()

    def record(self, db_index: int, symbols: int = 1) -> None:
        with self._lock:
            self.counts[db_index - 1] += symbols

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self.counts)

    def to_dict(self) -> dict:
        with self._lock:
            return {"per_database": list(self.counts), "total": sum(self.counts)}


@dataclass(frozen=True, eq=False)
class Transcript:
    """Everything one retrieval session produced, the auditor's evidence."""

    plan: SessionPlan
    request: RetrievalRequest
    user_randomness: UserRandomness
    queries: tuple[tuple[Query, ...], ...]
    answers: tuple[tuple[Answer, ...], ...]
    decoded: SymbolVector
    ledger: DownloadLedger
    variant: str
    # Distinct common randomness symbols the rounds were masked with
    randomness_used: int

    @property
    def download(self) -> int:
        return self.ledger.total

    def to_dict(self) -> dict:
        rounds = []
        for index, (queries, answers) in enumerate(zip(self.queries, self.answers)):
            rounds.append(
                {
                    "answers": [answer.to_dict() for answer in answers],
                    "offset": self.plan.rounds[index].offset,
                    "queries": [query.to_dict() for query in queries],
                    "round": index,
                }
            )
        return {
            "coins": self.user_randomness.coins.tolist(),
            "decoded": self.decoded.tolist(),
            "desired_index": self.request.desired_index,
            "ledger": self.ledger.to_dict(),
            "plan": self.plan.to_dict(),
            "randomness_used": self.randomness_used,
            "rounds": rounds,
            "variant": self.variant,
        }


def require_feasible(params: ProtocolParams) -> None:
    """Reject parameters where SPIR is trivial (K=1) or infeasible (N=1).

    Args:
        params (ProtocolParams): Parameters

    Raises:
        InfeasibleParamsError: N < 2 or K < 2
    """

    if params.n < 2:
        raise InfeasibleParamsError(
            params,
            f"SPIR with N={params.n} database is infeasible (capacity 0)",
        )
    if params.k < 2:
        raise InfeasibleParamsError(
            params,
            f"SPIR with K={params.k} message is plain retrieval (capacity 1)",
        )


def full_round(params: ProtocolParams, offset: int = 0) -> RoundPlan:
    return RoundPlan(offset, params.n - 1, tuple(range(1, params.n + 1)))


def round_queries(
    k: int, coins: galois.FieldArray, width: int, message_count: int
) -> galois.FieldArray:
    """Build the queries of one round: the coins themselves for the first
    database, and the coins with +1 at the coordinate of x_{k,i} for the
    (i+1)-th. Leading axes of coins are batch axes.

    Args:
        k (int): Desired index, 1-based
        coins (galois.FieldArray): Coins, last axis of width * K symbols
        width (int): Symbols retrieved per message
        message_count (int): K

    Returns:
        galois.FieldArray: Queries, shape (..., width + 1, width * K)
    """

    gf = type(coins)
    shift = np.zeros((width + 1, width * message_count), dtype=np.int64)
    for i in range(width):
        shift[i + 1, (k - 1) * width + i] = 1
    return coins[..., np.newaxis, :] + gf(shift)


def combine_answer(
    coeffs: galois.FieldArray,
    window: galois.FieldArray,
    mask: galois.FieldArray,
    variant: VariantManager,
) -> galois.FieldArray:
    """Answer of one database: the query as combining coefficients over
    the message window, folded with the common randomness by the variant.
    The desired index is never an input.
    """

    return variant.apply_mask((coeffs * window).sum(axis=-1), mask)


def base_build_queries(
    request: RetrievalRequest,
    user_randomness: UserRandomness,
    params: ProtocolParams,
    round_plan: RoundPlan | None = None,
    round_index: int = 0,
) -> list[Query]:
    """Build one query per participating database for a round.

    Args:
        request (RetrievalRequest): Desired index
        user_randomness (UserRandomness): Coins of this round
        params (ProtocolParams): Parameters
        round_plan (RoundPlan | None): Round, defaults to a full base round
        round_index (int): Round number in the session

    Raises:
        InfeasibleParamsError: N < 2 or K < 2
        PlanError: Wrong number of coins

    Returns:
        list[Query]: Queries ordered by participant
    """

    require_feasible(params)
    request.validate(params)
    round_plan = round_plan or full_round(params)

    coins = user_randomness.coins
    if coins.size != round_plan.coin_count(params.k):
        raise PlanError(
            f"Round needs {round_plan.coin_count(params.k)} coins, got {coins.size}"
        )

    queries = round_queries(request.desired_index, coins, round_plan.width, params.k)
    return [
        Query(round_index, db_index, round_plan.offset, queries[position])
        for position, db_index in enumerate(round_plan.participants)
    ]


def base_answer(
    query: Query,
    store: MessageStore,
    mask: int | galois.FieldArray,
    variant: VariantManager | None = None,
) -> Answer:
    """Answer a query from the store and one common randomness symbol.

    Args:
        query (Query): Query
        store (MessageStore): Messages
        mask (int | galois.FieldArray): Common randomness symbol
        variant (VariantManager | None): Scheme variant, honest by default

    Raises:
        core.FieldError: Query length does not fit the store

    Returns:
        Answer: One symbol
    """

    variant = variant or honest()
    if query.coeffs.size % store.k:
        raise core.FieldError(
            f"Query of {query.coeffs.size} symbols does not fit {store.k} messages"
        )

    width = query.coeffs.size // store.k
    window = store.window(query.offset, width)
    coeffs = core.as_symbols(query.coeffs, store.field)
    value = combine_answer(coeffs, window, store.field.gf(int(mask)), variant)
    return Answer(query.round, query.db_index, int(value))


def base_decode(
    answers: Sequence[Answer],
    request: RetrievalRequest,
    params: ProtocolParams,
    round_plan: RoundPlan | None = None,
    variant: VariantManager | None = None,
) -> SymbolVector:
    """Recover the desired symbols of a round by subtracting the first answer.

    Args:
        answers (Sequence[Answer]): Answers of one round
        request (RetrievalRequest): Desired index
        params (ProtocolParams): Parameters
        round_plan (RoundPlan | None): Round, defaults to a full base round
        variant (VariantManager | None): Scheme variant, honest by default

    Raises:
        IncompleteSessionError: An answer is missing

    Returns:
        SymbolVector: width symbols of the desired message
    """

    variant = variant or honest()
    request.validate(params)
    round_plan = round_plan or full_round(params)

    by_db = {answer.db_index: answer for answer in answers}
    missing = [n for n in round_plan.participants if n not in by_db]
    if missing:
        raise IncompleteSessionError(f"Missing answers from databases {missing}")
    if len({answer.round for answer in answers}) > 1:
        raise IncompleteSessionError("Answers belong to different rounds")

    values = params.field.vector([by_db[n].value for n in round_plan.participants])
    return variant.recover_block(values)


def plan_finite(params: ProtocolParams) -> SessionPlan:
    """Plan a session for equal message length L. G1 = floor(L/(N-1)) full rounds,
    then one round over the first L1 + 1 databases for the L1 leftover symbols.

    Args:
        params (ProtocolParams): Parameters with equal lengths

    Raises:
        InfeasibleParamsError: N < 2 or K < 2
        PlanError: Lengths differ

    Returns:
        SessionPlan: Plan
    """

    require_feasible(params)
    if not params.equal_lengths:
        raise PlanError("The finite-length scheme needs equal message lengths")

    length = params.lengths[0]
    full_rounds, leftover = divmod(length, params.n - 1)

    rounds = [
        full_round(params, index * (params.n - 1)) for index in range(full_rounds)
    ]
    if leftover:
        rounds.append(
            RoundPlan(
                full_rounds * (params.n - 1),
                leftover,
                tuple(range(1, leftover + 2)),
                group=2,
            )
        )

    kind = PlanKind.FINITE if leftover else PlanKind.BASE
    plan = SessionPlan(kind, params, tuple(rounds))
    logger.debug(
        "Planned %d full and %d residual rounds, D=%d",
        full_rounds,
        1 if leftover else 0,
        plan.download,
    )
    return plan


def plan_base(params: ProtocolParams) -> SessionPlan:
    """Plan repetitions of the base scheme, each with fresh coins and a fresh
    common randomness symbol. Message length must be a multiple of N-1.

    Raises:
        PlanError: Length is not a multiple of N-1
    """

    require_feasible(params)
    if not params.equal_lengths or params.lengths[0] % (params.n - 1):
        raise PlanError(
            f"The base scheme needs equal lengths that are multiples of "
            f"N-1={params.n - 1}, got {list(params.lengths)}"
        )
    return plan_finite(params)


def plan_region(params: ProtocolParams) -> SessionPlan:
    """Plan a session for unequal message sizes l_1 <= ... <= l_K (in units of
    N-1 symbols). Group i runs l_i - l_{i-1} base rounds over the next
    windows; messages shorter than the window read zero symbols there.

    Args:
        params (ProtocolParams): Parameters, lengths multiples of N-1

    Raises:
        InfeasibleParamsError: N < 2 or K < 2
        PlanError: A length is not a multiple of N-1

    Returns:
        SessionPlan: Plan
    """

    require_feasible(params)
    unit = params.n - 1
    if any(length % unit for length in params.lengths):
        raise PlanError(
            f"Region scheme lengths must be multiples of N-1={unit}, "
            f"got {list(params.lengths)}"
        )

    order = tuple(
        sorted(range(1, params.k + 1), key=lambda index: params.lengths[index - 1])
    )
    units = [params.lengths[index - 1] // unit for index in order]

    rounds: list[RoundPlan] = []
    previous = 0
    for group, current in enumerate(units, start=1):
        for _ in range(current - previous):
            rounds.append(
                RoundPlan(
                    len(rounds) * unit,
                    unit,
                    tuple(range(1, params.n + 1)),
                    group=group,
                )
            )
        previous = current

    plan = SessionPlan(PlanKind.REGION, params, tuple(rounds), order)
    logger.debug("Planned region scheme with %d rounds for units %s", len(rounds), units)
    return plan


def default_plan_kind(params: ProtocolParams) -> str:
    """Finite-length plan for equal lengths, region plan otherwise."""

    return PlanKind.FINITE if params.equal_lengths else PlanKind.REGION


def make_plan(kind: str, params: ProtocolParams) -> SessionPlan:
    """Plan a session of the given kind.

    Raises:
        PlanError: Unknown kind
    """

    match kind:
        case PlanKind.BASE:
            return plan_base(params)
        case PlanKind.FINITE:
            return plan_finite(params)
        case PlanKind.REGION:
            return plan_region(params)
        case _:
            raise PlanError(f'Unknown plan kind "{kind}"')


def draw_session_coins(
    plan: SessionPlan, seed: Seed, variant: VariantManager
) -> UserRandomness:
    """Draw every coin of a session up front, before any query exists.

    Args:
        plan (SessionPlan): Plan
        seed (Seed): Seed of the user's generator
        variant (VariantManager): Scheme variant

    Returns:
        UserRandomness: Coins of all rounds, in round order
    """

    rng = core.make_rng(seed)
    gf = plan.params.field.gf
    parts = [
        variant.draw_coins(round_plan.coin_count(plan.params.k), gf, rng)
        for round_plan in plan.rounds
    ]
    return UserRandomness(gf(np.concatenate([part.view(np.ndarray) for part in parts])))


# Receives the round index and its queries, returns one answer per query
Responder = Callable[[int, Sequence[Query]], Sequence[Answer]]


def drive_session(
    plan: SessionPlan,
    request: RetrievalRequest,
    seed: Seed,
    responder: Responder,
    variant: VariantManager | None = None,
) -> Transcript:
    """Run a plan round by round: build queries, collect every answer of a
    round, decode, then concatenate the blocks of the desired message.

    Args:
        plan (SessionPlan): Plan
        request (RetrievalRequest): Desired index
        seed (Seed): User's seed
        responder (Responder): Delivers queries and returns answers
        variant (VariantManager | None): Scheme variant, honest by default

    Raises:
        IncompleteSessionError: A round is missing answers

    Returns:
        Transcript: Session transcript
    """

    variant = variant or honest()
    params = plan.params
    request.validate(params)

    user_randomness = draw_session_coins(plan, seed, variant)
    round_coins = user_randomness.split(
        [round_plan.coin_count(params.k) for round_plan in plan.rounds]
    )

    ledger = DownloadLedger(params.n)
    all_queries: list[tuple[Query, ...]] = []
    all_answers: list[tuple[Answer, ...]] = []
    blocks: list[SymbolVector] = []

    for index, (round_plan, coins) in enumerate(zip(plan.rounds, round_coins)):
        queries = base_build_queries(
            request, UserRandomness(coins), params, round_plan, index
        )
        answers = tuple(responder(index, queries))
        for answer in answers:
            ledger.record(answer.db_index)

        blocks.append(base_decode(answers, request, params, round_plan, variant))
        all_queries.append(tuple(queries))
        all_answers.append(answers)

    length = params.lengths[request.desired_index - 1]
    decoded = params.field.gf(
        np.concatenate([block.view(np.ndarray) for block in blocks])[:length]
    )
    logger.debug(
        "Decoded %d symbols of message %d with D=%d",
        length,
        request.desired_index,
        ledger.total,
    )

    return Transcript(
        plan,
        request,
        user_randomness,
        tuple(all_queries),
        tuple(all_answers),
        decoded,
        ledger,
        variant.name,
        len({variant.mask_index(index) for index in range(len(plan.rounds))}),
    )


class LocalResponder:
    """Answers queries directly from a store, as every database would."""

    def __init__(
        self,
        store: MessageStore,
        common: CommonRandomness,
        variant: VariantManager | None = None,
    ) -> None:
        self.store = store
        self.common = common
        self.variant = variant or honest()

    def __call__(self, round_index: int, queries: Sequence[Query]) -> list[Answer]:
        mask = self.common.symbol(self.variant.mask_index(round_index))
        return [
            base_answer(query, self.store, mask, self.variant) for query in queries
        ]


def run_session(
    plan: SessionPlan,
    request: RetrievalRequest,
    store: MessageStore,
    common: CommonRandomness,
    seed: Seed,
    variant: VariantManager | None = None,
) -> Transcript:
    """Run a whole session in-process.

    Args:
        plan (SessionPlan): Plan
        request (RetrievalRequest): Desired index
        store (MessageStore): Messages
        common (CommonRandomness): Shared symbols, one per round
        seed (Seed): User's seed
        variant (VariantManager | None): Scheme variant, honest by default

    Raises:
        PlanError: Store or randomness does not fit the plan

    Returns:
        Transcript: Session transcript
    """

    if not store.matches(plan.params):
        raise PlanError("Store does not match the plan parameters")
    if len(common) < plan.randomness:
        raise PlanError(
            f"Plan consumes {plan.randomness} shared symbols, only {len(common)} given"
        )

    variant = variant or honest()
    return drive_session(
        plan, request, seed, LocalResponder(store, common, variant), variant
    )

