"""Load scheme variant plugins and expose an interface to use them.
"""

from __future__ import annotations

import functools
import importlib.metadata as import_metadata
import logging
from importlib.metadata import EntryPoint
from pathlib import Path
from types import ModuleType
from typing import Sequence, Type

import galois
import numpy as np
import pluggy

from spirkit import exceptions, info, utils, variant_api

logger = logging.getLogger(__name__)


class VariantLoadError(exceptions.UserError):
    """Variant source file not found."""


# pylint: disable=maybe-no-member
class VariantManager:
    """Expose interface to manage and interact with variant plugin(s)."""

    def __init__(self, name: str = info.HONEST_VARIANT) -> None:
        """Expose interface to manage and interact with variant plugin(s).

        Args:
            name (str): Name of the variant this manager stands for
        """

        self.name = name
        self.manager = pluggy.PluginManager(info.VARIANT_PROJ)
        self.manager.add_hookspecs(variant_api)

    def load_variant(self, module: ModuleType) -> None:
        """Register a variant by its Python module.
        Modules registered later take precedence.

        Args:
            module (ModuleType): Python module
        """

        self.manager.register(module)

    def get_variants(self) -> list[ModuleType]:
        """Get the Python modules of all registered variants.

        Returns:
            list[ModuleType]: Loaded variants
        """

        return list(self.manager.get_plugins())

    def draw_coins(
        self,
        count: int | tuple[int, ...],
        gf: Type[galois.FieldArray],
        rng: np.random.Generator,
    ) -> galois.FieldArray:
        return self.manager.hook.draw_coins(count=count, gf=gf, rng=rng)

    def mask_index(self, round_index: int) -> int:
        return self.manager.hook.mask_index(round_index=round_index)

    def apply_mask(
        self, value: galois.FieldArray, mask: galois.FieldArray
    ) -> galois.FieldArray:
        return self.manager.hook.apply_mask(value=value, mask=mask)

    def recover_block(self, answers: galois.FieldArray) -> galois.FieldArray:
        return self.manager.hook.recover_block(answers=answers)


def get_metadata_entry_points() -> Sequence[EntryPoint]:
    """Get all variant entry points.

    Returns:
        Sequence[EntryPoint]: Entry points
    """

    try:
        return import_metadata.entry_points().select(group=info.VARIANT_ENTRY_POINT_NAME)
    except KeyError:
        return []


def load_modules_from_entry_points(
    entry_points: Sequence[EntryPoint], names: Sequence[str]
) -> dict[str, ModuleType]:
    """Load many modules from package entry points.

    Args:
        entry_points (Sequence[EntryPoint]): Package entry points
        names (Sequence[str]): Entry point names

    Returns:
        dict[str, ModuleType]: Modules keyed by entry point name
    """

    modules: dict[str, ModuleType] = {}
    for entry_point in entry_points:
        if entry_point.name in names:
            modules[entry_point.name] = entry_point.load()
    return modules


def load_modules_from_dir(
    dir_path: Path, names: Sequence[str]
) -> dict[str, ModuleType]:
    """Load modules with provided names from a directory.
    Missing/failed to load modules are ignored.

    Args:
        dir_path (Path): Directory to find modules
        names (Sequence[str]): Module names

    Returns:
        dict[str, ModuleType]: Modules keyed by name
    """

    modules: dict[str, ModuleType] = {}
    for name in names:
        try:
            module_file_path = (dir_path / name).with_suffix(".py")
            modules[name] = utils.load_module(module_file_path)
        except ModuleNotFoundError:
            pass
    return modules


def load_variant_modules(
    names: Sequence[str],
    entry_points: Sequence[EntryPoint],
    custom_dir_path: Path | None,
) -> list[ModuleType]:
    """Load variant plugin modules from default directory,
    package entry points, and custom directory.

    Args:
        names (Sequence[str]): Variant names
        entry_points (Sequence[EntryPoint]): Package entry points
        custom_dir_path (Path | None): Custom variant directory

    Raises:
        VariantLoadError: Failed to load a variant

    Returns:
        list[ModuleType]: Modules of variants, in the order of names
    """

    modules = load_modules_from_dir(info.VARIANT_DIR_PATH, names)
    modules.update(load_modules_from_entry_points(entry_points, names))
    if custom_dir_path is not None:
        modules.update(load_modules_from_dir(custom_dir_path, names))

    failed_to_load = [name for name in names if name not in modules]
    if failed_to_load:
        raise VariantLoadError(f"Variants {failed_to_load} not found")

    return [modules[name] for name in names]


class VariantManagerBuilder:
    def __init__(
        self,
        entry_points: Sequence[EntryPoint],
        custom_dir_path: Path | None,
    ) -> None:
        """Build a variant manager with variant modules from default directory,
        package entry points, and custom directory.

        Args:
            entry_points (Sequence[EntryPoint]): Package entry points
            custom_dir_path (Path | None): Custom variant directory
        """

        self.entry_points = entry_points
        self.custom_dir_path = custom_dir_path

    def build(self, name: str) -> VariantManager:
        """Build a variant manager. The honest scheme is always registered
        first so a sabotage variant only needs to override what it breaks.

        Args:
            name (str): Variant name

        Returns:
            VariantManager: Manager with loaded variants
        """

        name = utils.canonical_variant_name(name)
        names = [info.HONEST_VARIANT]
        if name != info.HONEST_VARIANT:
            names.append(name)

        manager = VariantManager(name)
        for module in load_variant_modules(
            names, self.entry_points, self.custom_dir_path
        ):
            manager.load_variant(module)
        logger.debug('Loaded scheme variant "%s"', name)
        return manager


def build_variant(
    name: str = info.HONEST_VARIANT, custom_dir_path: Path | str | None = None
) -> VariantManager:
    """Build a variant manager from all known plugin sources.

    Args:
        name (str): Variant name
        custom_dir_path (Path | str | None): Custom variant directory

    Returns:
        VariantManager: Manager with loaded variants
    """

    if custom_dir_path is not None:
        custom_dir_path = utils.expanded_path(custom_dir_path)
    builder = VariantManagerBuilder(get_metadata_entry_points(), custom_dir_path)
    return builder.build(name)


@functools.lru_cache(maxsize=None)
def honest() -> VariantManager:
    """The shared manager of the honest scheme."""

    return build_variant(info.HONEST_VARIANT)
