from spirkit import variant_api


@variant_api.variant
def mask_index(round_index: int) -> int:
    return round_index + 1
