from __future__ import annotations

from abc import ABC, abstractmethod
from argparse import Namespace
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from spirkit import config, core, exceptions, info, utils
from spirkit.config import Config
from spirkit.core import FieldPrime, ProtocolParams


class UsageError(exceptions.UserError):
    """Contradictory or missing command line arguments."""


@dataclass(frozen=True)
class RunConfig:
    """Validated settings of one command, echoed into its report."""

    subcommand: str
    params: ProtocolParams | None
    seed: int
    output: Path | None
    budget: int
    options: dict[str, Any] = field(default_factory=dict)

    def option(self, name: str, default: Any = None) -> Any:
        return self.options.get(name, default)

    def require_params(self) -> ProtocolParams:
        if self.params is None:
            raise UsageError(f"{self.subcommand} needs --n, --k and a message length")
        return self.params

    def to_dict(self) -> dict:
        return {
            "budget": self.budget,
            "options": {
                key: str(value) if isinstance(value, Path) else value
                for key, value in sorted(self.options.items())
            },
            "output": None if self.output is None else str(self.output),
            "params": None if self.params is None else self.params.to_dict(),
            "seed": self.seed,
            "subcommand": self.subcommand,
        }


def params_from_cli(cli_args: Namespace, spirkit_config: Config) -> ProtocolParams | None:
    """Build parameters from --n, --k (or --k-count), --length/--lengths and --p.

    Raises:
        UsageError: Both --length and --lengths, or lengths without counts

    Returns:
        ProtocolParams | None: None when the command got no parameters
    """

    n = getattr(cli_args, "n", None)
    k = getattr(cli_args, "k_count", None) or getattr(cli_args, "k", None)
    length = getattr(cli_args, "length", None)
    lengths = getattr(cli_args, "lengths", None)
    p = getattr(cli_args, "p", None) or spirkit_config.get("field", {}).get(
        "prime", info.DEFAULT_PRIME
    )

    if length is not None and lengths is not None:
        raise UsageError("Give either --length or --lengths, not both")
    if n is None or k is None:
        if length is not None or lengths is not None:
            raise UsageError("Message lengths need --n and --k")
        return None

    if lengths is None:
        lengths = [length if length is not None else n - 1 if n > 1 else 1] * k
    elif len(lengths) != k:
        raise UsageError(f"--lengths has {len(lengths)} values for K={k}")

    return ProtocolParams(n, k, tuple(lengths), FieldPrime(int(p)))


def run_config_from_cli(cli_args: Namespace, spirkit_config: Config) -> RunConfig:
    """Merge command line arguments over the configuration file.

    Args:
        cli_args (Namespace): Parsed arguments
        spirkit_config (Config): Configuration

    Raises:
        UsageError: Invalid combination of arguments

    Returns:
        RunConfig: Validated settings
    """

    audit_config = spirkit_config.get("audit", {})
    net_config = spirkit_config.get("net", {})
    plugin_config = spirkit_config.get("plugins", {})

    budget = getattr(cli_args, "budget", None)
    if budget is None:
        budget = config.get_budget(spirkit_config)
    if budget < 1:
        raise UsageError(f"Budget must be positive, got {budget}")

    options: dict[str, Any] = {}
    for name, value in sorted(vars(cli_args).items()):
        if name in ("subparser_name", "n", "k", "k_count", "length", "lengths", "p"):
            continue
        if name in ("seed", "budget", "output") or value is None:
            continue
        options[name] = value

    options.setdefault("chunk_size", audit_config.get("chunk_size", 2**18))
    options.setdefault("workers", audit_config.get("workers", 1))
    options.setdefault("samples", audit_config.get("samples", 0))
    options.setdefault("timeout", net_config.get("timeout", 5.0))
    options.setdefault("host", net_config.get("host", "127.0.0.1"))
    options.setdefault("variant", plugin_config.get("variant", info.HONEST_VARIANT))
    options["variant"] = utils.canonical_variant_name(options["variant"])
    custom_dir = plugin_config.get("custom_variant_dir_path")
    if custom_dir is not None:
        options.setdefault("custom_variant_dir_path", custom_dir)

    for name in ("chunk_size", "workers", "trials", "samples", "sessions"):
        if name in options and options[name] < 0:
            raise UsageError(f"--{name.replace('_', '-')} cannot be negative")
    if options["chunk_size"] < 1:
        raise UsageError("--chunk-size must be positive")

    if getattr(cli_args, "length", None) is not None:
        options["length_source"] = "length"
    elif getattr(cli_args, "lengths", None) is not None:
        options["length_source"] = "lengths"

    output = getattr(cli_args, "output", None)
    return RunConfig(
        cli_args.subparser_name,
        params_from_cli(cli_args, spirkit_config),
        0 if getattr(cli_args, "seed", None) is None else cli_args.seed,
        None if output is None else utils.expanded_path(output),
        budget,
        options,
    )


def parse_rho(text: str | None):
    """Parse --rho, where "inf" or no value means unlimited randomness."""

    if text is None or text.strip().lower() in ("inf", "infinity", "unlimited"):
        return None
    try:
        value = utils.parse_rational(text)
    except (ValueError, ZeroDivisionError) as err:
        raise UsageError(f'--rho "{text}" is not a rational number') from err
    if value < 0:
        raise core.ParameterError(f"--rho must be non-negative, got {text}")
    return value


class Feature(ABC):
    """Base class for a facade class which handles a feature."""

    @abstractmethod
    def cleanup(self) -> None:
        """Release resources before exiting."""


class FeatureCliParser(ABC):
    """Base class for a facade class which runs a feature from the command line."""

    @abstractmethod
    def parse(self, run_config: RunConfig) -> int:
        """Run the feature and return the exit status."""
