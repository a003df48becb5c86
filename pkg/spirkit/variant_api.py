"""API for scheme variant plugins.

A variant decides the four places where a scheme touches randomness or
combines answers. The honest variant implements the capacity-achieving
scheme. Other variants are registered after it and override single hooks.
"""

from typing import Type

import galois
import numpy as np
import pluggy

from spirkit import exceptions, info


class VariantError(exceptions.AppError):
    """Error from variant plugins."""


variant_specs = pluggy.HookspecMarker(info.VARIANT_PROJ)
variant = pluggy.HookimplMarker(info.VARIANT_PROJ)


@variant_specs(firstresult=True)
def draw_coins(
    count: int | tuple[int, ...],
    gf: Type[galois.FieldArray],
    rng: np.random.Generator,
) -> galois.FieldArray:
    """Return the user's private coins for one round.

    Args:
        count (int | tuple[int, ...]): Number of coins, or a shape whose last
            axis is the coins and leading axes are batch axes
        gf (Type[galois.FieldArray]): Field array class
        rng (np.random.Generator): Session generator

    Return:
        galois.FieldArray: Coins
    """

    raise NotImplementedError


@variant_specs(firstresult=True)
def mask_index(round_index: int) -> int:
    """Return the index of the common randomness symbol a round uses.

    Args:
        round_index (int): Round index in the session

    Return:
        int: Symbol index
    """

    raise NotImplementedError


@variant_specs(firstresult=True)
def apply_mask(
    value: galois.FieldArray, mask: galois.FieldArray
) -> galois.FieldArray:
    """Fold the common randomness symbol into a database answer.
    Both arguments may carry leading batch axes.

    Args:
        value (galois.FieldArray): Combined message symbols
        mask (galois.FieldArray): Common randomness symbol

    Return:
        galois.FieldArray: Answer symbol
    """

    raise NotImplementedError


@variant_specs(firstresult=True)
def recover_block(answers: galois.FieldArray) -> galois.FieldArray:
    """Recover the desired symbols of a round from its answers.

    Args:
        answers (galois.FieldArray): Answers ordered by participant,
        last axis has one entry per participating database

    Return:
        galois.FieldArray: One symbol per participant but the first
    """

    raise NotImplementedError
