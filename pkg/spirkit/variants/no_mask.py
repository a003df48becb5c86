"""Sabotage: databases answer without the common randomness."""

import galois

from spirkit import variant_api


@variant_api.variant
def apply_mask(
    value: galois.FieldArray, mask: galois.FieldArray
) -> galois.FieldArray:
    return value
