"""The capacity-achieving scheme: uniform coins, a fresh shared symbol
per round, masked answers and decoding by subtracting the first answer.
"""

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
    return gf(rng.integers(0, gf.order, size=count, dtype=np.int64))


@variant_api.variant
def mask_index(round_index: int) -> int:
    return round_index


@variant_api.variant
def apply_mask(
    value: galois.FieldArray, mask: galois.FieldArray
) -> galois.FieldArray:
    return value + mask


@variant_api.variant
def recover_block(answers: galois.FieldArray) -> galois.FieldArray:
    return answers[..., 1:] - answers[..., :1]
