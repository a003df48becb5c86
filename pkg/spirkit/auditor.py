"""Exhaustive audit of a scheme.

Every assignment of user coins, messages and common randomness is enumerated
for each desired index. The views each party sees are reduced to counts,
and privacy, correctness and rates are checked as exact numbers.
"""

from __future__ import annotations

import concurrent.futures
import enum
import hashlib
import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import galois
import numpy as np

from spirkit import analysis, core, exceptions, info, schemes, utils, variant_api
from spirkit.core import MessageStore, ProtocolParams, Seed
from spirkit.schemes import SessionPlan, Transcript
from spirkit.variant_managers import VariantManager, honest

logger = logging.getLogger(__name__)

STATISTICAL_LABEL = "statistical, not certifying"
DEFAULT_CHUNK_SIZE = 2**18

# Observation keys are packed into int64
KEY_LIMIT = 2**62


class BudgetExceededError(exceptions.UserError):
    """Enumeration would exceed the state budget."""

    def __init__(self, required: int, budget: int) -> None:
        super().__init__(
            f"Enumeration needs {required} states per desired index, "
            f"budget is {budget}"
        )
        self.required = required
        self.budget = budget


class AuditError(exceptions.AppError):
    """The audit cannot represent these parameters."""


class AuditMode(enum.StrEnum):
    EXHAUSTIVE = "exhaustive"
    STATISTICAL = "statistical"


@dataclass(frozen=True, eq=False)
class Distribution:
    """Counts of observation keys, keys sorted and unique."""

    keys: np.ndarray
    counts: np.ndarray

    @classmethod
    def of(cls, keys: np.ndarray) -> Distribution:
        unique, counts = np.unique(keys, return_counts=True)
        return cls(unique, counts.astype(np.int64))

    @classmethod
    def merge(cls, parts: Sequence[Distribution]) -> Distribution:
        """Merge partial counts. Parts are combined in the given order."""

        if not parts:
            return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

        keys = np.concatenate([part.keys for part in parts])
        counts = np.concatenate([part.counts for part in parts])
        unique, inverse = np.unique(keys, return_inverse=True)
        merged = np.zeros(unique.size, dtype=np.int64)
        np.add.at(merged, inverse, counts)
        return cls(unique, merged)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def marginal(self, divisor: int, low: bool) -> tuple[np.ndarray, np.ndarray]:
        """Split keys as (key // divisor, key % divisor) and count one side.

        Args:
            divisor (int): Radix of the low part
            low (bool): Count the low part, otherwise the high part

        Returns:
            tuple[np.ndarray, np.ndarray]: Marginal count of every entry's part,
            and the part itself
        """

        parts = self.keys % divisor if low else self.keys // divisor
        _, inverse = np.unique(parts, return_inverse=True)
        sums = np.zeros(inverse.max(initial=-1) + 1, dtype=np.int64)
        np.add.at(sums, inverse, self.counts)
        return sums[inverse], parts


def absolute_difference(a: Distribution, b: Distribution) -> int:
    """Sum over all keys of |count_a - count_b|."""

    keys = np.concatenate([a.keys, b.keys])
    counts = np.concatenate([a.counts, -b.counts])
    unique, inverse = np.unique(keys, return_inverse=True)
    difference = np.zeros(unique.size, dtype=np.int64)
    np.add.at(difference, inverse, counts)
    return int(np.abs(difference).sum())


@dataclass(frozen=True)
class StateLayout:
    """Digits of one joint state: coins, then messages, then shared symbols."""

    coins: int
    messages: int
    shared: int
    p: int

    @property
    def digits(self) -> int:
        return self.coins + self.messages + self.shared

    @property
    def states(self) -> int:
        return self.p**self.digits

    def to_dict(self) -> dict:
        return {
            "coins": self.coins,
            "messages": self.messages,
            "shared": self.shared,
            "states": self.states,
        }


@dataclass(frozen=True, eq=False)
class ConditionedTable:
    """Reduced joint distribution for one desired index."""

    k: int
    states: int
    # Per database: (Q_n, A_n, W_{1:K}, S)
    user_views: dict[int, Distribution]
    # (F, A_{1:N}) in the high digits, undesired messages in the low digits
    db_view: Distribution
    hidden_radix: int
    errors: int


@dataclass(frozen=True, eq=False)
class JointTable:
    """Every enumerated state, reduced to what the checks need."""

    plan: SessionPlan
    variant: str
    mode: AuditMode
    layout: StateLayout
    tables: dict[int, ConditionedTable]

    @property
    def params(self) -> ProtocolParams:
        return self.plan.params

    @property
    def size(self) -> int:
        return sum(table.states for table in self.tables.values())

    def total_probability(self) -> Fraction:
        """Each desired index is weighted uniformly, each state within it too."""

        weight = Fraction(1, len(self.tables))
        return sum(
            (
                weight * Fraction(table.db_view.total, table.states)
                for table in self.tables.values()
            ),
            Fraction(0),
        )

    def digest(self) -> str:
        """Fingerprint of the table, equal across reruns."""

        sha = hashlib.sha256()
        for k in sorted(self.tables):
            table = self.tables[k]
            sha.update(f"{k}:{table.states}:{table.errors}".encode())
            for n in sorted(table.user_views):
                sha.update(table.user_views[n].keys.tobytes())
                sha.update(table.user_views[n].counts.tobytes())
            sha.update(table.db_view.keys.tobytes())
            sha.update(table.db_view.counts.tobytes())
        return sha.hexdigest()


class DigitSource:
    """Hands enumerated digits to a variant in place of the user's generator."""

    def __init__(self, digits: np.ndarray) -> None:
        self.digits = digits

    def integers(self, low, high=None, size=None, dtype=np.int64, endpoint=False):
        shape = tuple(np.atleast_1d(size)) if size is not None else ()
        if shape != self.digits.shape:
            raise variant_api.VariantError(
                f"Variant asked for coins of shape {shape}, "
                f"enumeration provides {self.digits.shape}"
            )
        return self.digits.astype(dtype)


def state_layout(plan: SessionPlan, store: MessageStore | None = None) -> StateLayout:
    """Digits of the joint state space of a plan.

    Args:
        plan (SessionPlan): Plan
        store (MessageStore | None): Fixed messages, not enumerated when given

    Returns:
        StateLayout: Layout
    """

    params = plan.params
    return StateLayout(
        plan.coin_count,
        0 if store is not None else params.message_symbols,
        plan.randomness,
        params.p,
    )


def to_digits(indices: np.ndarray, p: int, width: int) -> np.ndarray:
    """Base-p digits of state indices, least significant first."""

    powers = p ** np.arange(width, dtype=np.int64)
    return (indices[:, np.newaxis] // powers) % p


def pack_keys(columns: Sequence[np.ndarray], p: int, rows: int) -> np.ndarray:
    """Pack observation columns of base-p digits into one int64 key per row.

    Raises:
        AuditError: Observation does not fit a key
    """

    columns = [column.reshape(rows, -1) for column in columns if column.size]
    matrix = (
        np.concatenate(columns, axis=1)
        if columns
        else np.zeros((rows, 0), dtype=np.int64)
    )
    width = matrix.shape[1]
    if p**width >= KEY_LIMIT:
        raise AuditError(f"Observation of {width} symbols is too wide to enumerate")
    powers = p ** np.arange(width, dtype=np.int64)
    return matrix.astype(np.int64) @ powers


def _ints(values: galois.FieldArray) -> np.ndarray:
    return values.view(np.ndarray).astype(np.int64)


@dataclass(frozen=True, eq=False)
class ChunkCounts:
    user_views: dict[int, Distribution]
    db_view: Distribution
    errors: int
    states: int


class StateEvaluator:
    """Runs a plan on a batch of joint states at once."""

    def __init__(
        self,
        plan: SessionPlan,
        variant: VariantManager,
        store: MessageStore | None = None,
    ) -> None:
        self.plan = plan
        self.variant = variant
        self.store = store
        self.layout = state_layout(plan, store)
        self.params = plan.params
        self.gf = self.params.field.gf
        self.mask_indices = [
            variant.mask_index(index) for index in range(len(plan.rounds))
        ]
        if any(not 0 <= index < plan.randomness for index in self.mask_indices):
            raise variant_api.VariantError(
                f"Variant uses shared symbols {self.mask_indices}, "
                f"plan provides {plan.randomness}"
            )

    def _messages(self, message_digits: np.ndarray, rows: int) -> np.ndarray:
        """Messages as (rows, K, covered) ints, zero past each message's end."""

        params = self.params
        padded = np.zeros((rows, params.k, self.plan.covered), dtype=np.int64)
        if self.store is not None:
            for index, message in enumerate(self.store.messages):
                padded[:, index, : message.size] = _ints(message)
            return padded

        start = 0
        for index, length in enumerate(params.lengths):
            padded[:, index, :length] = message_digits[:, start : start + length]
            start += length
        return padded

    def hidden_digits(self, k: int, message_digits: np.ndarray) -> np.ndarray:
        """Digits of every message but the desired one."""

        if self.store is not None:
            return message_digits[:, :0]
        start = sum(self.params.lengths[: k - 1])
        end = start + self.params.lengths[k - 1]
        return np.concatenate(
            [message_digits[:, :start], message_digits[:, end:]], axis=1
        )

    def evaluate(self, k: int, digits: np.ndarray) -> ChunkCounts:
        """Count the views of a batch of states for desired index k.

        Args:
            k (int): Desired index
            digits (np.ndarray): States as rows of base-p digits

        Returns:
            ChunkCounts: Partial counts
        """

        params, layout, gf, p = self.params, self.layout, self.gf, self.params.p
        rows = digits.shape[0]
        coin_digits = digits[:, : layout.coins]
        message_digits = digits[:, layout.coins : layout.coins + layout.messages]
        shared_digits = digits[:, layout.coins + layout.messages :]

        coins = self.variant.draw_coins(
            (rows, layout.coins), gf, DigitSource(coin_digits)
        )
        padded = self._messages(message_digits, rows)
        messages = gf(padded)
        shared = gf(shared_digits)

        views: dict[int, list[np.ndarray]] = {
            n: [] for n in range(1, params.n + 1)
        }
        all_answers: list[np.ndarray] = []
        blocks: list[np.ndarray] = []
        start = 0
        for index, round_plan in enumerate(self.plan.rounds):
            width = round_plan.width
            round_coins = coins[:, start : start + round_plan.coin_count(params.k)]
            start += round_plan.coin_count(params.k)

            queries = schemes.round_queries(k, round_coins, width, params.k)
            window = messages[
                :, :, round_plan.offset : round_plan.offset + width
            ].reshape(rows, params.k * width)
            mask = shared[:, self.mask_indices[index]]
            answers = schemes.combine_answer(
                queries, window[:, np.newaxis, :], mask[:, np.newaxis], self.variant
            )
            blocks.append(_ints(self.variant.recover_block(answers)))

            answer_ints = _ints(answers)
            query_ints = _ints(queries)
            all_answers.append(answer_ints)
            for position, n in enumerate(round_plan.participants):
                views[n].append(query_ints[:, position, :])
                views[n].append(answer_ints[:, position])

        length = params.lengths[k - 1]
        decoded = np.concatenate(blocks, axis=1)[:, :length]
        errors = int(np.any(decoded != padded[:, k - 1, :length], axis=1).sum())

        user_views = {
            n: Distribution.of(
                pack_keys([*columns, message_digits, shared_digits], p, rows)
            )
            for n, columns in views.items()
        }
        hidden = self.hidden_digits(k, message_digits)
        db_view = Distribution.of(
            pack_keys([hidden, _ints(coins), *all_answers], p, rows)
        )
        return ChunkCounts(user_views, db_view, errors, rows)


def _merge(k: int, parts: Sequence[ChunkCounts], hidden_radix: int) -> ConditionedTable:
    databases = parts[0].user_views.keys()
    return ConditionedTable(
        k,
        sum(part.states for part in parts),
        {
            n: Distribution.merge([part.user_views[n] for part in parts])
            for n in databases
        },
        Distribution.merge([part.db_view for part in parts]),
        hidden_radix,
        sum(part.errors for part in parts),
    )


def _exhaustive_chunks(
    layout: StateLayout, chunk_size: int
) -> Iterable[np.ndarray]:
    for start in range(0, layout.states, chunk_size):
        stop = min(start + chunk_size, layout.states)
        yield to_digits(np.arange(start, stop, dtype=np.int64), layout.p, layout.digits)


def _sampled_chunks(
    layout: StateLayout, chunk_size: int, samples: int, k: int, seed: int
) -> Iterable[np.ndarray]:
    for number, start in enumerate(range(0, samples, chunk_size)):
        rng = np.random.default_rng([seed, k, number])
        rows = min(chunk_size, samples - start)
        yield rng.integers(0, layout.p, size=(rows, layout.digits), dtype=np.int64)


def enumerate_joint(
    plan: SessionPlan,
    variant: VariantManager | None = None,
    budget: int = info.DEFAULT_BUDGET,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
    samples: int = 0,
    seed: int = 0,
    store: MessageStore | None = None,
    indices: Sequence[int] | None = None,
) -> JointTable:
    """Enumerate the joint distribution of a scheme for every desired index.

    Coins, messages and shared symbols are uniform and independent of each
    other and of the desired index. When the state space is larger than the
    budget, sampling is used if samples > 0.

    Args:
        plan (SessionPlan): Plan under test
        variant (VariantManager | None): Scheme variant, honest by default
        budget (int): Maximum states per desired index
        chunk_size (int): States evaluated at once
        workers (int): Worker threads
        samples (int): States to sample when over budget, 0 to refuse
        seed (int): Sampling seed
        store (MessageStore | None): Fixed messages instead of enumerated ones
        indices (Sequence[int] | None): Desired indices to condition on, all by default

    Raises:
        BudgetExceededError: Over budget and sampling disabled

    Returns:
        JointTable: Reduced joint distribution
    """

    variant = variant or honest()
    params = plan.params
    if store is not None and not store.matches(params):
        raise core.ParameterError("Store does not match the plan parameters")
    indices = tuple(indices or range(1, params.k + 1))
    for k in indices:
        schemes.RetrievalRequest(k).validate(params)

    evaluator = StateEvaluator(plan, variant, store)
    layout = evaluator.layout
    mode = AuditMode.EXHAUSTIVE
    if layout.states > budget:
        if samples <= 0:
            raise BudgetExceededError(layout.states, budget)
        mode = AuditMode.STATISTICAL
        logger.warning(
            "%d states exceed budget %d, sampling %d states (%s)",
            layout.states,
            budget,
            samples,
            STATISTICAL_LABEL,
        )

    hidden_symbols = 0 if store is not None else params.message_symbols
    tables: dict[int, ConditionedTable] = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(workers, 1)) as pool:
        for k in indices:
            if mode == AuditMode.EXHAUSTIVE:
                chunks = _exhaustive_chunks(layout, chunk_size)
            else:
                chunks = _sampled_chunks(layout, chunk_size, samples, k, seed)

            parts = list(pool.map(lambda digits: evaluator.evaluate(k, digits), chunks))
            hidden_radix = params.p ** (
                hidden_symbols - (0 if store is not None else params.lengths[k - 1])
            )
            tables[k] = _merge(k, parts, hidden_radix)
            logger.debug(
                "Enumerated %d states for desired index %d in %d chunks",
                tables[k].states,
                k,
                len(parts),
            )

    return JointTable(plan, variant.name, mode, layout, tables)


@dataclass(frozen=True)
class UserPrivacyFinding:
    tv: Fraction
    # (database, k, k') of the largest distance
    worst: tuple[int, int, int] | None = None


def user_privacy_finding(table: JointTable) -> UserPrivacyFinding:
    """Largest total variation distance between what one database sees for
    two desired indices.
    """

    finding = UserPrivacyFinding(Fraction(0))
    for k, other in itertools.combinations(sorted(table.tables), 2):
        first, second = table.tables[k], table.tables[other]
        for n in sorted(first.user_views):
            tv = Fraction(
                absolute_difference(first.user_views[n], second.user_views[n]),
                2 * first.states,
            )
            if tv > finding.tv:
                finding = UserPrivacyFinding(tv, (n, k, other))
    return finding


def check_user_privacy(table: JointTable) -> Fraction:
    """Largest total variation distance over databases and index pairs.
    Zero means every database sees the same distribution whatever is asked.

    Args:
        table (JointTable): Joint table

    Returns:
        Fraction: Distance in [0, 1]
    """

    finding = user_privacy_finding(table)
    if finding.worst is not None:
        logger.debug(
            "Database %d tells index %d from %d with distance %s",
            *finding.worst,
            utils.rational_str(finding.tv),
        )
    return finding.tv


@dataclass(frozen=True)
class Leakage:
    """Information about undesired messages in the user's view."""

    bits: float
    independent: bool
    worst_index: int | None = None


def _leakage(table: ConditionedTable) -> Leakage:
    joint = table.db_view
    total = table.states
    hidden_counts, _ = joint.marginal(table.hidden_radix, low=True)
    view_counts, _ = joint.marginal(table.hidden_radix, low=False)

    independent = bool(np.all(joint.counts * total == hidden_counts * view_counts))
    if independent:
        return Leakage(0.0, True, None)

    probabilities = joint.counts / total
    ratios = (joint.counts * total) / (hidden_counts * view_counts)
    bits = float(np.sum(probabilities * np.log2(ratios)))
    return Leakage(max(bits, 0.0), False, table.k)


def check_db_privacy(table: JointTable) -> Leakage:
    """Mutual information between the undesired messages and everything the
    user holds after the session (coins, queries and answers), maximised over
    desired indices. Zero is decided by exact independence testing; bits are
    for display.

    Args:
        table (JointTable): Joint table

    Returns:
        Leakage: Leakage in bits
    """

    worst = Leakage(0.0, True, None)
    for k in sorted(table.tables):
        leakage = _leakage(table.tables[k])
        if not leakage.independent and (worst.independent or leakage.bits > worst.bits):
            worst = leakage
    return worst


def check_correctness(table: JointTable) -> Fraction:
    """Probability that the decoded message differs from the desired one.

    Args:
        table (JointTable): Joint table

    Returns:
        Fraction: Error probability
    """

    errors = sum(conditioned.errors for conditioned in table.tables.values())
    return Fraction(errors, table.size)


@dataclass(frozen=True)
class RateMeasurement:
    rates: dict[int, Fraction]
    rho: Fraction
    download: int
    randomness: int

    def to_dict(self) -> dict:
        return {
            "download": self.download,
            "randomness": self.randomness,
            "rates": {
                str(k): utils.rational_str(rate) for k, rate in sorted(self.rates.items())
            },
            "rho": utils.rational_str(self.rho),
        }


def measure_rates(
    transcripts: Sequence[Transcript], params: ProtocolParams
) -> RateMeasurement:
    """Measure rates from ledgers: R_k = l_k / D, and the common randomness
    consumed per symbol of the largest message.

    Args:
        transcripts (Sequence[Transcript]): Completed sessions
        params (ProtocolParams): Parameters

    Raises:
        core.ParameterError: No transcripts

    Returns:
        RateMeasurement: Worst rate seen per desired index, and rho
    """

    if not transcripts:
        raise core.ParameterError("Cannot measure rates without transcripts")

    rates: dict[int, Fraction] = {}
    download = 0
    randomness = 0
    for transcript in transcripts:
        k = transcript.request.desired_index
        rate = Fraction(params.lengths[k - 1], transcript.download)
        rates[k] = min(rate, rates.get(k, rate))
        download = max(download, transcript.download)
        randomness = max(randomness, transcript.randomness_used)

    return RateMeasurement(
        rates, Fraction(randomness, params.max_length), download, randomness
    )


@dataclass(frozen=True, eq=False)
class AuditReport:
    plan: SessionPlan
    variant: str
    mode: AuditMode
    layout: StateLayout
    user_privacy: UserPrivacyFinding
    leakage: Leakage
    error_probability: Fraction
    measurement: RateMeasurement
    converse_ok: bool
    budget: int
    failures: tuple[str, ...] = field(default=())

    @property
    def params(self) -> ProtocolParams:
        return self.plan.params

    @property
    def certifying(self) -> bool:
        return self.mode == AuditMode.EXHAUSTIVE

    @property
    def user_privacy_tv(self) -> Fraction:
        return self.user_privacy.tv

    @property
    def db_leakage_bits(self) -> float:
        return self.leakage.bits

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        worst = self.user_privacy.worst
        return {
            "budget": self.budget,
            "certifying": self.certifying,
            "converse_ok": self.converse_ok,
            "db_independent": self.leakage.independent,
            "db_leakage_bits": self.leakage.bits,
            "db_leakage_index": self.leakage.worst_index,
            "error_probability": utils.rational_str(self.error_probability),
            "failures": list(self.failures),
            "layout": self.layout.to_dict(),
            "measurement": self.measurement.to_dict(),
            "mode": str(self.mode),
            "mode_label": STATISTICAL_LABEL if not self.certifying else "certifying",
            "passed": self.passed,
            "plan": self.plan.to_dict(),
            "user_privacy_tv": utils.rational_str(self.user_privacy.tv),
            "user_privacy_worst": None
            if worst is None
            else {"database": worst[0], "indices": [worst[1], worst[2]]},
            "variant": self.variant,
        }


def sample_transcripts(
    plan: SessionPlan, variant: VariantManager, seed: Seed
) -> list[Transcript]:
    """Run one session per desired index on random messages."""

    params = plan.params
    rng = core.make_rng(seed)
    transcripts = []
    for k in range(1, params.k + 1):
        store = MessageStore.random(params, rng)
        common = core.CommonRandomness.random(plan.randomness, params.field, rng)
        transcripts.append(
            schemes.run_session(
                plan, schemes.RetrievalRequest(k), store, common, rng, variant
            )
        )
    return transcripts


def converse_holds(
    params: ProtocolParams, measurement: RateMeasurement, checks_passed: bool
) -> bool:
    """A scheme passing every check cannot beat the minimum download or the
    minimum common randomness for its longest message.
    """

    if not checks_passed:
        return True
    length = params.max_length
    return measurement.download >= analysis.min_download(
        params.n, length
    ) and measurement.randomness >= analysis.min_randomness(params.n, length)


def run_audit(
    plan: SessionPlan,
    variant: VariantManager | None = None,
    budget: int = info.DEFAULT_BUDGET,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    workers: int = 1,
    samples: int = 0,
    seed: int = 0,
) -> AuditReport:
    """Enumerate a plan, run every check and measure its rates.

    Args:
        plan (SessionPlan): Plan under test
        variant (VariantManager | None): Scheme variant, honest by default
        budget (int): Maximum states per desired index
        chunk_size (int): States evaluated at once
        workers (int): Worker threads
        samples (int): States to sample when over budget
        seed (int): Seed for sampling and rate sessions

    Returns:
        AuditReport: Verdict
    """

    variant = variant or honest()
    table = enumerate_joint(
        plan, variant, budget, chunk_size, workers, samples, seed
    )

    user_privacy = user_privacy_finding(table)
    leakage = check_db_privacy(table)
    error_probability = check_correctness(table)
    measurement = measure_rates(sample_transcripts(plan, variant, seed), plan.params)

    failures = []
    if error_probability:
        failures.append("correctness")
    # Sampled distances are noisy, only exhaustive ones are judged
    if table.mode == AuditMode.EXHAUSTIVE:
        if user_privacy.tv:
            failures.append("user_privacy")
        if not leakage.independent:
            failures.append("db_privacy")

    converse_ok = converse_holds(plan.params, measurement, not failures)
    if not converse_ok:
        failures.append("converse")

    report = AuditReport(
        plan,
        variant.name,
        table.mode,
        table.layout,
        user_privacy,
        leakage,
        error_probability,
        measurement,
        converse_ok,
        budget,
        tuple(failures),
    )

    if report.passed:
        logger.info(
            "Audit of %s %s scheme passed (%s)",
            variant.name,
            plan.kind,
            table.mode,
        )
    else:
        logger.error(
            "Audit of %s %s scheme failed: %s",
            variant.name,
            plan.kind,
            ", ".join(failures),
        )
    return report

