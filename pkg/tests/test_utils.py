from fractions import Fraction

import pytest

from spirkit import utils


class TestCanonicalVariantName:
    @pytest.mark.parametrize(
        "name,expected",
        [
            ["no-mask", "no_mask"],
            ["No_Mask", "no_mask"],
            [" wrong-subtraction ", "wrong_subtraction"],
        ],
    )
    def test_dashes_and_case_convert_to_module_name(self, name, expected):
        assert utils.canonical_variant_name(name) == expected


class TestCeilDiv:
    @pytest.mark.parametrize("a,b,expected", [[6, 2, 3], [7, 2, 4], [0, 5, 0], [1, 5, 1]])
    def test_rounds_up(self, a, b, expected):
        assert utils.ceil_div(a, b) == expected


class TestRationals:
    def test_rational_str_is_always_a_over_b(self):
        assert utils.rational_str(Fraction(4, 2)) == "2/1"

    def test_format_rational_shows_decimal(self):
        assert utils.format_rational(Fraction(2, 3)) == "2/3 (≈0.666667)"

    @pytest.mark.parametrize(
        "text,expected",
        [["1/2", Fraction(1, 2)], ["3", Fraction(3)], ["0.25", Fraction(1, 4)]],
    )
    def test_parse_rational_accepts_common_forms(self, text, expected):
        assert utils.parse_rational(text) == expected

    @pytest.mark.parametrize("text", ["inf", "half"])
    def test_parse_rational_rejects_non_rationals(self, text):
        with pytest.raises(ValueError):
            utils.parse_rational(text)


class TestLoadModule:
    def test_non_existing_file_raises_module_not_found(self, tmp_path):
        with pytest.raises(ModuleNotFoundError):
            utils.load_module(tmp_path / "missing.py")

    def test_loads_module_attributes(self, tmp_path):
        module_path = tmp_path / "plugin.py"
        module_path.write_text("VALUE = 7\n")

        assert utils.load_module(module_path).VALUE == 7
