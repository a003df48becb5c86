"""Sabotage: every round of a session is masked with the same shared symbol."""

from spirkit import variant_api


@variant_api.variant
def mask_index(round_index: int) -> int:
    return 0
