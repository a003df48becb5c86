from fractions import Fraction

import pytest

from spirkit import analysis, core
from spirkit.analysis import Regime


class TestCapacitySpir:
    @pytest.mark.parametrize(
        "n,k,rho,capacity,regime",
        [
            [2, 5, 1, Fraction(1, 2), Regime.AT_CAPACITY],
            [5, 2, Fraction(1, 5), 0, Regime.BELOW_THRESHOLD],
            [1, 2, 10, 0, Regime.INFEASIBLE_N1],
            [4, 1, 0, 1, Regime.TRIVIAL_K1],
            [1, 1, 0, 1, Regime.TRIVIAL_K1],
            [3, 3, None, Fraction(2, 3), Regime.AT_CAPACITY],
        ],
    )
    def test_capacity_and_regime(self, n, k, rho, capacity, regime):
        verdict = analysis.capacity_spir(n, k, rho)

        assert verdict.capacity == capacity and verdict.regime == regime

    @pytest.mark.parametrize("n", [2, 3, 4, 7])
    def test_threshold_is_sharp(self, n):
        threshold = Fraction(1, n - 1)

        at = analysis.capacity_spir(n, 2, threshold)
        below = analysis.capacity_spir(n, 2, threshold - Fraction(1, 10**9))

        assert at.capacity == 1 - Fraction(1, n) and at.feasible
        assert below.capacity == 0 and not below.feasible

    def test_capacity_is_zero_iff_infeasible(self):
        for n in range(1, 6):
            for rho in (Fraction(0), Fraction(1, 5), Fraction(1, 2), None):
                verdict = analysis.capacity_spir(n, 3, rho)
                assert (verdict.capacity == 0) == (not verdict.feasible)

    def test_capacity_increases_with_databases_towards_one(self):
        capacities = [analysis.capacity_spir(n, 2).capacity for n in range(2, 12)]

        assert capacities == sorted(set(capacities))
        assert analysis.capacity_spir(1001, 2).capacity > Fraction(999, 1000)

    def test_rho_as_text_is_exact(self):
        assert analysis.capacity_spir(3, 2, "1/2").feasible

    @pytest.mark.parametrize("n,k,rho", [[0, 2, 1], [2, 0, 1], [2, 2, -1]])
    def test_invalid_arguments_raise_parameter_error(self, n, k, rho):
        with pytest.raises(core.ParameterError):
            analysis.capacity_spir(n, k, rho)

    def test_n1_has_no_threshold(self):
        assert analysis.capacity_spir(1, 3).rho_threshold is None


class TestCapacityPir:
    @pytest.mark.parametrize(
        "n,k,expected",
        [[2, 2, Fraction(2, 3)], [3, 1, 1], [2, 10, Fraction(512, 1023)]],
    )
    def test_closed_form(self, n, k, expected):
        assert analysis.capacity_pir(n, k) == expected

    def test_gap_to_spir_is_below_two_to_minus_nine_at_k10(self):
        gap = analysis.capacity_pir(2, 10) - analysis.capacity_spir(2, 10).capacity

        assert 0 < gap < Fraction(1, 2**9)

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_pir_dominates_spir_with_shrinking_gap(self, n):
        gaps = [
            analysis.capacity_pir(n, k) - analysis.capacity_spir(n, k).capacity
            for k in range(2, 13)
        ]

        assert all(gap > 0 for gap in gaps)
        assert gaps == sorted(gaps, reverse=True) and len(set(gaps)) == len(gaps)


class TestRegionBound:
    @pytest.mark.parametrize(
        "n,lengths,caps",
        [
            [2, (1, 2), (Fraction(1, 4), Fraction(1, 2))],
            [3, (1, 2, 4), (Fraction(1, 6), Fraction(1, 3), Fraction(2, 3))],
            [4, (3, 3), (Fraction(3, 4), Fraction(3, 4))],
        ],
    )
    def test_caps(self, n, lengths, caps):
        assert analysis.region_bound(n, len(lengths), lengths).caps == caps

    def test_normalized_download_uses_largest_message(self):
        bound = analysis.region_bound(3, 3, (1, 2, 4))

        assert bound.normalized_download == 6
        assert bound.rho_threshold == Fraction(1, 2)

    @pytest.mark.parametrize(
        "n,k,lengths", [[1, 2, (1, 1)], [2, 1, (1,)], [2, 2, (1,)], [2, 2, (0, 1)]]
    )
    def test_invalid_arguments_raise_parameter_error(self, n, k, lengths):
        with pytest.raises(core.ParameterError):
            analysis.region_bound(n, k, lengths)


class TestCapacityFinite:
    @pytest.mark.parametrize(
        "n,length,rho,expected",
        [
            [3, 3, Fraction(2, 3), Fraction(3, 5)],
            [2, 7, 1, Fraction(1, 2)],
            [3, 3, Fraction(1, 2), 0],
        ],
    )
    def test_closed_form(self, n, length, rho, expected):
        assert analysis.capacity_finite(n, 2, length, rho).capacity == expected

    def test_reports_minimum_download_and_randomness(self):
        verdict = analysis.capacity_finite(3, 2, 3)

        assert verdict.min_download == 5 and verdict.min_randomness == 2

    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_equals_asymptotic_capacity_iff_length_is_multiple(self, n):
        asymptotic = analysis.capacity_spir(n, 2).capacity
        for length in range(1, 4 * (n - 1) + 1):
            finite = analysis.capacity_finite(n, 2, length).capacity
            assert finite <= asymptotic
            assert (finite == asymptotic) == (length % (n - 1) == 0)

    def test_zero_length_raises_parameter_error(self):
        with pytest.raises(core.ParameterError):
            analysis.capacity_finite(2, 2, 0)


class TestConverseHelpers:
    @pytest.mark.parametrize(
        "n,length,download,randomness", [[3, 2, 3, 1], [3, 3, 5, 2], [2, 7, 14, 7]]
    )
    def test_minimums(self, n, length, download, randomness):
        assert analysis.min_download(n, length) == download
        assert analysis.min_randomness(n, length) == randomness
