"""Utility functions.
"""

import logging
import sys
from fractions import Fraction
from importlib import util as import_util
from pathlib import Path
from types import ModuleType

logger = logging.getLogger(__name__)


def expanded_path(path: Path | str) -> Path:
    """Get user-expanded path.

    Args:
        path (Path | str): Path

    Returns:
        Path: User-expanded path
    """

    return Path(path).expanduser()


def load_module(path: Path | str) -> ModuleType:
    """Load Python module at the provided path.

    Args:
        path (Path | str): Path to the module file

    Raises:
        ModuleNotFoundError: Could not find the module file

    Returns:
        ModuleType: Loaded module
    """

    path = expanded_path(path)
    module_name = path.name

    spec = import_util.spec_from_file_location(module_name, path)
    if spec is None or spec.loader is None:
        raise ModuleNotFoundError

    module = import_util.module_from_spec(spec)
    sys.modules[module_name] = module

    try:
        spec.loader.exec_module(module)
    except FileNotFoundError as err:
        raise ModuleNotFoundError from err

    return module


def canonical_variant_name(name: str) -> str:
    """Convert variant name into canonical form (lower case, underscores).

    Args:
        name (str): Name

    Returns:
        str: Canonical variant name
    """

    return name.strip().lower().replace("-", "_")


def ceil_div(a: int, b: int) -> int:
    """Integer ceiling of a / b for positive b."""

    return -(-a // b)


def format_rational(value: Fraction) -> str:
    """Format a rational as "a/b (≈decimal)".

    Args:
        value (Fraction): Value

    Returns:
        str: Human readable form
    """

    return f"{rational_str(value)} (≈{float(value):.6g})"


def rational_str(value: Fraction) -> str:
    """Format a rational as "a/b", the canonical machine-readable form."""

    return f"{value.numerator}/{value.denominator}"


def parse_rational(text: str) -> Fraction:
    """Parse "a/b", an integer or a decimal string into an exact rational.

    Args:
        text (str): Text

    Raises:
        ValueError: Not a rational

    Returns:
        Fraction: Value
    """

    if text.strip().lower() in ("inf", "infinity"):
        raise ValueError("Infinite values have no exact rational form")
    return Fraction(text.strip())
