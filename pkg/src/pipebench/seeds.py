"""Deterministic seed derivation: one root seed fans out into named sub-streams.

Every source of randomness in a run (world generation, start sampling,
predictor ensembles, evaluation-time predictions, ...) draws from its own
named stream so that partial reruns reproduce exactly.
"""
from __future__ import annotations

import numpy as np

# Stream names are mapped to fixed codes; never reuse or renumber.
_STREAM_CODES = {
    "world": 1,
    "starts": 2,
    "predictor": 3,
    "eval": 4,
    "trial": 5,
    "bench": 6,
}


def child_seed(root: int, stream: str, *indices: int) -> int:
    """Derive a 63-bit child seed for a named stream (plus optional indices)."""
    code = _STREAM_CODES.get(stream)
    if code is None:
        raise KeyError(f"unknown seed stream {stream!r}")
    ss = np.random.SeedSequence([int(root), code, *[int(i) for i in indices]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


def rng_for(root: int, stream: str, *indices: int) -> np.random.Generator:
    """Generator seeded from the named sub-stream."""
    return np.random.default_rng(child_seed(root, stream, *indices))
