"""Sabotage: the user's coins are always zero, so queries are unit vectors."""

from typing import Type

import galois
import numpy as np

from spirkit import variant_api


@variant_api.variant
def draw_coins(
    count: int | tuple[int, ...],
    gf: Type[galois.FieldArray],
    rng: np.random.Generator,
) -> galois.FieldArray:
    return gf.Zeros(count)
