"""Capacity reports."""

from __future__ import annotations

import logging
from fractions import Fraction
from typing import Sequence

from spirkit import analysis, feature, info, reports
from spirkit.analysis import CapacityVerdict, RegionBound
from spirkit.feature import RunConfig
from spirkit.renderer import ReportRenderer

logger = logging.getLogger(__name__)


class CapacityFeature(feature.Feature):
    """Answers capacity questions with exact rationals."""

    def report(
        self,
        n: int,
        k: int,
        rho: Fraction | None,
        length: int | None = None,
        lengths: Sequence[int] | None = None,
    ) -> dict:
        """Collect every capacity that applies to the parameters.

        Args:
            n (int): Databases
            k (int): Messages
            rho (Fraction | None): Common randomness ratio, None for unlimited
            length (int | None): Equal message length for the finite-length capacity
            lengths (Sequence[int] | None): Unequal sizes for the capacity region

        Returns:
            dict: Report context
        """

        spir: CapacityVerdict = analysis.capacity_spir(n, k, rho)
        finite = None
        if length is not None:
            finite = analysis.capacity_finite(n, k, length, rho)

        region: RegionBound | None = None
        if lengths is not None and n >= 2 and k >= 2:
            region = analysis.region_bound(n, k, lengths)

        return {
            "n": n,
            "k": k,
            "rho": rho,
            "spir": spir,
            "pir": analysis.capacity_pir(n, k),
            "length": length,
            "finite": finite,
            "lengths": None if lengths is None else list(lengths),
            "region": region,
        }

    def cleanup(self) -> None:
        pass


def report_to_dict(context: dict) -> dict:
    return {
        "c_pir": context["pir"],
        "finite": None if context["finite"] is None else context["finite"].to_dict(),
        "k": context["k"],
        "length": context["length"],
        "lengths": context["lengths"],
        "n": context["n"],
        "region": None if context["region"] is None else context["region"].to_dict(),
        "rho": context["rho"],
        "spir": context["spir"].to_dict(),
    }


class CapacityCliParser(feature.FeatureCliParser):
    """Parse CLI arguments for CapacityFeature."""

    def __init__(self, feature: CapacityFeature, renderer: ReportRenderer) -> None:
        self.feature = feature
        self.renderer = renderer

    def parse(self, run_config: RunConfig) -> int:
        params = run_config.require_params()
        rho = feature.parse_rho(run_config.option("rho"))
        source = run_config.option("length_source")
        length = params.lengths[0] if source == "length" else None
        lengths = params.lengths if source == "lengths" else None

        context = self.feature.report(params.n, params.k, rho, length, lengths)
        result = report_to_dict(context)
        if run_config.output is not None:
            reports.write_report(
                run_config.output, reports.envelope(run_config, "capacity", result)
            )
        if run_config.option("json"):
            print(reports.dumps(reports.envelope(run_config, "capacity", result)), end="")
        else:
            print(self.renderer.render("capacity.txt.j2", context), end="")
        return info.EXIT_OK
