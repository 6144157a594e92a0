"""Shared low-level helpers."""


def mask64(seed: int) -> int:
    """Map any 64-bit (possibly negative) integer seed onto numpy's accepted range."""
    return int(seed) & 0xFFFFFFFFFFFFFFFF
