"""Run audits from the command line."""

from __future__ import annotations

import logging
from fractions import Fraction

from spirkit import (
    analysis,
    auditor,
    feature,
    info,
    reports,
    schemes,
    variant_managers,
)
from spirkit.auditor import AuditReport
from spirkit.core import ProtocolParams
from spirkit.feature import RunConfig
from spirkit.renderer import ReportRenderer
from spirkit.variant_managers import VariantManager

logger = logging.getLogger(__name__)


def expected_capacity(params: ProtocolParams) -> Fraction:
    """Best rate any scheme can reach for the desired message of largest size."""

    if params.equal_lengths:
        return analysis.capacity_finite(params.n, params.k, params.lengths[0]).capacity
    return max(analysis.region_bound(params.n, params.k, params.lengths).caps)


class AuditFeature(feature.Feature):
    """Handles the audit feature."""

    def __init__(
        self,
        variant: VariantManager,
        budget: int,
        chunk_size: int,
        workers: int,
        samples: int,
        seed: int,
    ) -> None:
        """Handles the audit feature.

        Args:
            variant (VariantManager): Scheme variant under test
            budget (int): Maximum states per desired index
            chunk_size (int): States evaluated at once
            workers (int): Worker threads
            samples (int): States sampled when over budget
            seed (int): Seed
        """

        self.variant = variant
        self.budget = budget
        self.chunk_size = chunk_size
        self.workers = workers
        self.samples = samples
        self.seed = seed

    @classmethod
    def from_run_config(cls, run_config: RunConfig) -> AuditFeature:
        variant = variant_managers.build_variant(
            run_config.option("variant"), run_config.option("custom_variant_dir_path")
        )
        return cls(
            variant,
            run_config.budget,
            run_config.option("chunk_size"),
            run_config.option("workers"),
            run_config.option("samples"),
            run_config.seed,
        )

    def audit(self, params: ProtocolParams, plan_kind: str | None = None) -> AuditReport:
        """Audit a plan of the given kind.

        Args:
            params (ProtocolParams): Parameters
            plan_kind (str | None): Plan kind, chosen from the lengths by default

        Returns:
            AuditReport: Verdict
        """

        plan = schemes.make_plan(plan_kind or schemes.default_plan_kind(params), params)
        return auditor.run_audit(
            plan,
            self.variant,
            self.budget,
            self.chunk_size,
            self.workers,
            self.samples,
            self.seed,
        )

    def cleanup(self) -> None:
        pass


class AuditCliParser(feature.FeatureCliParser):
    """Parse CLI arguments for AuditFeature."""

    def __init__(self, feature: AuditFeature, renderer: ReportRenderer) -> None:
        self.feature = feature
        self.renderer = renderer

    def parse(self, run_config: RunConfig) -> int:
        params = run_config.require_params()
        report = self.feature.audit(params, run_config.option("plan"))

        result = report.to_dict()
        result["capacity"] = expected_capacity(params)
        data = reports.envelope(run_config, "audit", result)
        if run_config.output is not None:
            reports.write_report(run_config.output, data)
        if run_config.option("json"):
            print(reports.dumps(data), end="")
        else:
            context = {
                "report": report,
                "params": params,
                "label": auditor.STATISTICAL_LABEL,
                "capacity": result["capacity"],
            }
            print(self.renderer.render("audit.txt.j2", context), end="")

        return info.EXIT_OK if report.passed else info.EXIT_AUDIT_FAILED
