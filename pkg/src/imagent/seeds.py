"""Deterministic seed derivation.

Every source of randomness in a run is derived from the single RunConfig
seed through stable64, so the same config replays to the same artifacts
on any platform. Python's builtin hash() is salted per process and must
never be used here.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def stable64(*parts: object) -> int:
    """Collapse the given parts into a stable 64-bit integer."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "big")


def derive_seed(run_seed: int, step: int, candidate: int = 0) -> int:
    """Seed for the call made at `step` for candidate `candidate`.

    Candidates at one step get consecutive seeds, so the candidate set for
    N+1 extends the set for N instead of reshuffling it.
    """
    return (stable64(run_seed, step) + candidate) & _MASK64
