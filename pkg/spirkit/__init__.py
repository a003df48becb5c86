"""Symmetric private information retrieval schemes, capacity calculators
and exhaustive privacy audits.
"""

from spirkit.analysis import (
    capacity_finite,
    capacity_pir,
    capacity_spir,
    region_bound,
)
from spirkit.auditor import enumerate_joint, run_audit
from spirkit.core import (
    CommonRandomness,
    FieldPrime,
    MessageStore,
    ProtocolParams,
    UserRandomness,
)
from spirkit.schemes import RetrievalRequest, make_plan, run_session
from spirkit.variant_managers import build_variant

__all__ = [
    "CommonRandomness",
    "FieldPrime",
    "MessageStore",
    "ProtocolParams",
    "RetrievalRequest",
    "UserRandomness",
    "build_variant",
    "capacity_finite",
    "capacity_pir",
    "capacity_spir",
    "enumerate_joint",
    "make_plan",
    "region_bound",
    "run_audit",
    "run_session",
]
