"""Sabotage: the user subtracts in the wrong order (A_1 - A_{i+1}).
Invisible over F_2, where subtraction is its own inverse.
"""

import galois

from spirkit import variant_api


@variant_api.variant
def recover_block(answers: galois.FieldArray) -> galois.FieldArray:
    return answers[..., :1] - answers[..., 1:]
