import logging
import os
import shutil
from pathlib import Path
from typing import Any

import toml

from spirkit import exceptions, info, utils

logger = logging.getLogger(__name__)

Config = dict[str, Any]


class ConfigError(exceptions.UserError):
    """spirkit config error."""


def get_config_from_toml(config_path: str | Path) -> Config:
    """Get configuration from a TOML file.

    Args:
        config_path (str | Path): Path to a TOML file.

    Returns:
        Config: Configuration
    """

    return toml.load(utils.expanded_path(config_path))


def get_config_from_env(config_path: Path) -> Config:
    """Get configuration from a TOML file provided via an environment variable.

    Args:
        config_path (Path): Path to a TOML file

    Raises:
        ConfigError: Could not find the TOML file

    Returns:
        Config: Configuration
    """

    try:
        return get_config_from_toml(config_path)
    except FileNotFoundError as err:
        raise ConfigError(f"Could not find config file {config_path}") from err
    except toml.TomlDecodeError as err:
        raise ConfigError(f"Config file {config_path} is not valid TOML: {err}") from err


def get_config_from_default(
    config_dir: Path | str, default_config_path: Path | str, config_name: Path | str
) -> Config:
    """Get configuration from file at default location.
    Install the packaged default config file there if there is none.

    Args:
        config_dir (Path | str): Path to the default config directory
        default_config_path (Path | str): Path to the packaged config file
        config_name (Path | str): Name of config file

    Returns:
        Config: Configuration
    """

    config_path = Path(config_dir) / Path(config_name)
    try:
        return get_config_from_toml(config_path)
    except FileNotFoundError:
        try:
            Path(config_dir).mkdir(parents=True, exist_ok=True)
            shutil.copyfile(default_config_path, config_path)
            logger.info("Created default config file at %s", config_path)
        except OSError as err:
            logger.debug("Could not install default config: %s", err)
        return get_config_from_toml(default_config_path)


def get_general_config() -> Config:
    """Get general configuration from default path
    or path defined via environment variable.

    Returns:
        Config: Config
    """

    env_var = os.getenv(info.CONFIG_ENVVAR)
    if env_var is not None:
        return get_config_from_env(Path(env_var))

    return get_config_from_default(
        info.CONFIG_DIR, info.DEFAULT_CONFIG_PATH, info.CONFIG_NAME
    )


def get_budget(spirkit_config: Config) -> int:
    """Get the enumeration budget. The environment variable wins over the file.

    Args:
        spirkit_config (Config): Configuration

    Raises:
        ConfigError: Budget is not a positive integer

    Returns:
        int: Maximum number of joint states to enumerate
    """

    raw = os.getenv(info.BUDGET_ENVVAR)
    if raw is None:
        raw = spirkit_config.get("audit", {}).get("budget", info.DEFAULT_BUDGET)

    try:
        budget = int(raw)
    except (TypeError, ValueError) as err:
        raise ConfigError(f'Budget "{raw}" is not an integer') from err

    if budget < 1:
        raise ConfigError(f"Budget must be positive, got {budget}")
    return budget
