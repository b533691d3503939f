"""Stable seed derivation so one root seed drives every component."""

from __future__ import annotations

import hashlib

__all__ = ["derive_seed"]


def derive_seed(root: int, *names: int | str) -> int:
    """Deterministic 63-bit sub-seed from a root seed and component names."""
    h = hashlib.sha256(str(int(root)).encode())
    for name in names:
        h.update(b"/")
        h.update(str(name).encode())
    return int.from_bytes(h.digest()[:8], "little") >> 1
