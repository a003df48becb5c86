"""Machine-readable reports: canonical JSON with exact rationals as "a/b"."""

from __future__ import annotations

import enum
import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np

from spirkit import info, utils
from spirkit.feature import RunConfig

logger = logging.getLogger(__name__)


def canonical(value: Any) -> Any:
    """Convert a report tree into plain JSON types."""

    if isinstance(value, dict):
        return {str(key): canonical(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonical(item) for item in value]
    if isinstance(value, Fraction):
        return utils.rational_str(value)
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return canonical(value.tolist())
    return value


def dumps(data: Any) -> str:
    return json.dumps(canonical(data), sort_keys=True, indent=2) + "\n"


def envelope(run_config: RunConfig, kind: str, result: Any) -> dict:
    """Wrap a result with the settings that reproduce it."""

    return {
        "config": run_config.to_dict(),
        "kind": kind,
        "result": result,
        "version": info.APP_VERSION,
    }


def write_report(path: Path | str, data: Any) -> None:
    path = utils.expanded_path(path)
    path.write_text(dumps(data))
    logger.info("Wrote report to %s", path)
