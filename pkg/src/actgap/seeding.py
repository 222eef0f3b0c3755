"""Derivation of independent sub-seeds from a run seed."""

from __future__ import annotations

from typing import Dict

import numpy as np

STREAMS = ("env", "explore", "init", "sampling", "replay")


def derive_seed(seed: int, stream: str) -> int:
    """64-bit sub-seed for ``stream``, hashed from ``(seed, stream)``.

    SeedSequence mixes its entropy words with a strong hash, so distinct
    ``(seed, stream)`` pairs give unrelated outputs.
    """
    if stream not in STREAMS:
        raise ValueError(f"unknown stream {stream!r}; choose from {STREAMS}")
    if seed < 0:
        raise ValueError(f"seeds are unsigned, got {seed}")
    words = [int(b) for b in stream.encode("utf-8")]
    ss = np.random.SeedSequence([int(seed)] + words)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_all(seed: int) -> Dict[str, int]:
    return {name: derive_seed(seed, name) for name in STREAMS}


def make_rng(seed: int, stream: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stream))
