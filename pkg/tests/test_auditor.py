import collections
import itertools
import logging
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from spirkit import auditor, core, schemes, variant_api
from spirkit.auditor import AuditMode
from spirkit.core import MessageStore
from spirkit.schemes import PlanKind

TEST_VARIANT_DIR_PATH = Path(__file__).parent / "resources"


@pytest.fixture
def plan_factory(params_factory):
    def factory(n, k, lengths, p=2, kind=None):
        params = params_factory(n, k, lengths, p)
        return schemes.make_plan(kind or schemes.default_plan_kind(params), params)

    return factory


def leakage_by_counting(k: int, masked: bool) -> float:
    """Mutual information in bits between the undesired message and the
    user's coins and answers, for N=2, K=2, L=1 over F_2, by counting every
    coin, message and shared symbol assignment.
    """

    joint = collections.Counter()
    for h1, h2, w1, w2, s in itertools.product((0, 1), repeat=5):
        mask = s if masked else 0
        first = (h1 * w1 + h2 * w2 + mask) % 2
        second = ((h1 + (k == 1)) * w1 + (h2 + (k == 2)) * w2 + mask) % 2
        other = w2 if k == 1 else w1
        joint[other, (h1, h2, first, second)] += 1

    total = sum(joint.values())
    hidden = collections.Counter()
    view = collections.Counter()
    for (other, seen), count in joint.items():
        hidden[other] += count
        view[seen] += count
    return sum(
        count / total * math.log2(count * total / (hidden[other] * view[seen]))
        for (other, seen), count in joint.items()
    )


class TestHelpers:
    def test_to_digits_is_least_significant_first(self):
        digits = auditor.to_digits(np.array([5, 7]), 3, 3)

        assert digits.tolist() == [[2, 1, 0], [1, 2, 0]]

    def test_pack_keys_too_wide_raises_audit_error(self):
        with pytest.raises(auditor.AuditError):
            auditor.pack_keys([np.zeros((1, 62), dtype=np.int64)], 2, 1)

    def test_merge_adds_counts_of_equal_keys(self):
        first = auditor.Distribution.of(np.array([3, 1, 3]))
        second = auditor.Distribution.of(np.array([1, 2]))

        merged = auditor.Distribution.merge([first, second])

        assert merged.keys.tolist() == [1, 2, 3]
        assert merged.counts.tolist() == [2, 1, 2]

    def test_absolute_difference_counts_keys_on_one_side(self):
        first = auditor.Distribution.of(np.array([1, 1, 2]))
        second = auditor.Distribution.of(np.array([1, 3, 3]))

        assert auditor.absolute_difference(first, second) == 4


class TestEnumerateJoint:
    @pytest.mark.parametrize(
        "n,k,length,states", [[2, 2, 1, 32], [3, 2, 2, 512]]
    )
    def test_state_count_per_index(self, plan_factory, honest, n, k, length, states):
        table = auditor.enumerate_joint(plan_factory(n, k, length), honest)

        assert all(table.tables[i].states == states for i in range(1, k + 1))
        assert table.size == k * states

    def test_probabilities_sum_to_one(self, plan_factory, honest):
        table = auditor.enumerate_joint(plan_factory(2, 3, 1, 3), honest)

        assert table.total_probability() == 1

    def test_over_budget_refuses_naming_required_size(self, plan_factory, honest):
        with pytest.raises(auditor.BudgetExceededError) as excinfo:
            auditor.enumerate_joint(plan_factory(2, 2, 1), honest, budget=1)

        assert excinfo.value.required == 32
        assert "32" in str(excinfo.value)

    def test_rerun_gives_identical_table(self, plan_factory, honest):
        plan = plan_factory(3, 2, 2)

        first = auditor.enumerate_joint(plan, honest)
        second = auditor.enumerate_joint(plan, honest)

        assert first.digest() == second.digest()

    def test_chunks_and_workers_do_not_change_table(self, plan_factory, honest):
        plan = plan_factory(3, 2, 2)

        whole = auditor.enumerate_joint(plan, honest)
        split = auditor.enumerate_joint(plan, honest, chunk_size=37, workers=3)

        assert whole.digest() == split.digest()

    def test_over_budget_with_samples_is_statistical(self, plan_factory, honest, caplog):
        caplog.set_level(logging.WARNING)

        table = auditor.enumerate_joint(
            plan_factory(2, 2, 1), honest, budget=16, samples=100, seed=3
        )

        assert table.mode == AuditMode.STATISTICAL
        assert table.tables[1].states == 100
        assert auditor.STATISTICAL_LABEL in caplog.text

    def test_variant_reading_missing_shared_symbol_raises(self, plan_factory, sabotage):
        variant = sabotage("shifted_mask", TEST_VARIANT_DIR_PATH)

        with pytest.raises(variant_api.VariantError):
            auditor.enumerate_joint(plan_factory(2, 2, 1), variant)


class TestHonestSchemes:
    @pytest.mark.parametrize(
        "n,k,length,p",
        [
            [2, 2, 1, 2],
            [2, 2, 2, 2],
            [2, 3, 1, 2],
            [2, 2, 1, 3],
            [2, 3, 1, 3],
            [3, 2, 2, 2],
            [3, 3, 2, 2],
            [2, 2, 2, 3],
            [3, 2, 4, 2],
            [3, 2, 2, 3],
            [3, 3, 2, 3],
        ],
    )
    def test_base_scheme_passes_every_check(self, plan_factory, honest, n, k, length, p):
        plan = plan_factory(n, k, length, p, PlanKind.BASE)

        report = auditor.run_audit(plan, honest)

        assert report.passed and report.certifying
        assert report.user_privacy_tv == 0
        assert report.leakage.independent and report.db_leakage_bits == 0
        assert report.error_probability == 0
        assert set(report.measurement.rates.values()) == {1 - Fraction(1, n)}
        assert report.measurement.rho == Fraction(1, n - 1)

    @pytest.mark.parametrize(
        "n,lengths,p", [[2, (1, 2), 2], [3, (2, 4), 2], [2, (2, 1), 3]]
    )
    def test_region_scheme_passes_every_check(self, plan_factory, honest, n, lengths, p):
        report = auditor.run_audit(
            plan_factory(n, len(lengths), lengths, p, PlanKind.REGION), honest
        )

        assert report.passed

    @pytest.mark.parametrize("n,length,p", [[3, 1, 2], [3, 3, 2], [4, 2, 2]])
    def test_finite_scheme_passes_every_check(self, plan_factory, honest, n, length, p):
        report = auditor.run_audit(
            plan_factory(n, 2, length, p, PlanKind.FINITE), honest
        )

        assert report.passed

    def test_fixed_store_leaks_nothing(self, plan_factory, honest, store_factory):
        plan = plan_factory(2, 2, 1)
        store = store_factory(2, [[1], [1]])

        table = auditor.enumerate_joint(plan, honest, store=store)

        assert auditor.check_db_privacy(table).independent
        assert auditor.check_correctness(table) == 0


class TestSabotage:
    def test_no_mask_leaks_half_a_bit(self, plan_factory, sabotage):
        table = auditor.enumerate_joint(plan_factory(2, 2, 1), sabotage("no_mask"))

        leakage = auditor.check_db_privacy(table)

        assert not leakage.independent
        assert leakage.bits == pytest.approx(0.5)

    @pytest.mark.parametrize(
        "variant,masked,expected", [["honest", True, 0.0], ["no_mask", False, 0.5]]
    )
    def test_leakage_agrees_with_direct_count(
        self, plan_factory, sabotage, variant, masked, expected
    ):
        table = auditor.enumerate_joint(plan_factory(2, 2, 1), sabotage(variant))

        counted = max(leakage_by_counting(k, masked) for k in (1, 2))

        assert counted == pytest.approx(expected)
        assert auditor.check_db_privacy(table).bits == pytest.approx(counted)

    def test_no_mask_fails_audit_on_db_privacy(self, plan_factory, sabotage):
        report = auditor.run_audit(plan_factory(2, 2, 1), sabotage("no_mask"))

        assert not report.passed and "db_privacy" in report.failures

    def test_deterministic_coins_reveal_index(self, plan_factory, sabotage):
        table = auditor.enumerate_joint(
            plan_factory(2, 2, 1), sabotage("deterministic_coins")
        )

        assert auditor.check_user_privacy(table) == 1

    def test_reused_randomness_leaks(self, plan_factory, sabotage):
        plan = plan_factory(2, 2, 2, kind=PlanKind.BASE)

        report = auditor.run_audit(plan, sabotage("reused_randomness"))

        assert report.db_leakage_bits > 0
        assert "db_privacy" in report.failures

    def test_wrong_subtraction_errs_over_f3(self, plan_factory, sabotage):
        table = auditor.enumerate_joint(
            plan_factory(2, 2, 1, 3), sabotage("wrong_subtraction")
        )

        assert auditor.check_correctness(table) > 0

    def test_wrong_subtraction_is_invisible_over_f2(self, plan_factory, sabotage):
        table = auditor.enumerate_joint(
            plan_factory(2, 2, 1, 2), sabotage("wrong_subtraction")
        )

        assert auditor.check_correctness(table) == 0


class TestMeasureRates:
    @pytest.mark.parametrize(
        "n,lengths,kind,rates,rho,randomness",
        [
            [3, (2, 2), PlanKind.BASE, {1: Fraction(2, 3), 2: Fraction(2, 3)}, Fraction(1, 2), 1],
            [2, (1, 2), PlanKind.REGION, {1: Fraction(1, 4), 2: Fraction(1, 2)}, 1, 2],
            [3, (3, 3), PlanKind.FINITE, {1: Fraction(3, 5), 2: Fraction(3, 5)}, Fraction(2, 3), 2],
        ],
    )
    def test_rates_from_ledgers(
        self, plan_factory, honest, n, lengths, kind, rates, rho, randomness
    ):
        plan = plan_factory(n, len(lengths), lengths, kind=kind)

        measurement = auditor.measure_rates(
            auditor.sample_transcripts(plan, honest, 0), plan.params
        )

        assert measurement.rates == rates
        assert measurement.rho == rho
        assert measurement.randomness == randomness

    def test_region_rates_match_region_bound(self, plan_factory, honest):
        plan = plan_factory(3, 3, (2, 4, 8), kind=PlanKind.REGION)

        measurement = auditor.measure_rates(
            auditor.sample_transcripts(plan, honest, 0), plan.params
        )

        assert measurement.download == 12
        assert [measurement.rates[k] for k in (1, 2, 3)] == [
            Fraction(1, 6),
            Fraction(1, 3),
            Fraction(2, 3),
        ]

    def test_without_transcripts_raises_parameter_error(self, params_factory):
        with pytest.raises(core.ParameterError):
            auditor.measure_rates([], params_factory(2, 2, 1))


class TestConverse:
    def test_download_below_minimum_violates_converse(self, params_factory):
        params = params_factory(3, 2, 3)
        measurement = auditor.RateMeasurement({1: Fraction(3, 4)}, Fraction(2, 3), 4, 2)

        assert not auditor.converse_holds(params, measurement, True)

    def test_failed_checks_make_converse_vacuous(self, params_factory):
        params = params_factory(3, 2, 3)
        measurement = auditor.RateMeasurement({1: Fraction(1)}, Fraction(0), 3, 0)

        assert auditor.converse_holds(params, measurement, False)


class TestAuditReport:
    def test_dict_form_uses_exact_rationals(self, plan_factory, honest):
        report = auditor.run_audit(plan_factory(2, 2, 1), honest)

        data = report.to_dict()

        assert data["user_privacy_tv"] == "0/1"
        assert data["error_probability"] == "0/1"
        assert data["measurement"]["rates"] == {"1": "1/2", "2": "1/2"}
        assert data["mode_label"] == "certifying"

    def test_statistical_report_is_not_certifying(self, plan_factory, honest):
        report = auditor.run_audit(
            plan_factory(2, 2, 1), honest, budget=8, samples=64, seed=1
        )

        assert not report.certifying
        assert report.to_dict()["mode_label"] == auditor.STATISTICAL_LABEL
        assert report.passed

    def test_store_not_matching_plan_raises_parameter_error(
        self, plan_factory, honest
    ):
        store = MessageStore.random(core.ProtocolParams.uniform(2, 2, 2), 0)

        with pytest.raises(core.ParameterError):
            auditor.enumerate_joint(plan_factory(2, 2, 1), honest, store=store)
