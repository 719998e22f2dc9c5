"""Seeded random streams with a fixed per-replica derivation rule."""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def rep_seed(base_seed: int, rep: int) -> int:
    """Seed for replica `rep`: base seed XOR rep index (documented derivation)."""
    return (int(base_seed) ^ int(rep)) & _MASK64


class RngStream:
    """Counter-based uniform stream; identical seeds give identical draws."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self.draws = 0

    def uniform(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def for_rep(self, rep: int) -> "RngStream":
        return RngStream(rep_seed(self.seed, rep))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngStream(seed={self.seed}, draws={self.draws})"
