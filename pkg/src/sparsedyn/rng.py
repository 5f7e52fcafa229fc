"""Deterministic, portable random number generation.

All randomness in this package flows through :class:`CounterRng`, a
counter-mode splitmix64 generator: output ``i`` is a bijective 64-bit mix
of ``seed + (i+1) * GOLDEN``.  Because each output depends only on the seed
and its index, blocks of any size can be produced with vectorized integer
arithmetic, and the stream is reproducible across platforms and processes
(no dependence on numpy's generator internals).

Normal variates use the Box-Muller transform on explicit 53-bit uniforms;
bounded integers use ``floor(u * k)``.  Both conventions are part of the
reproducibility contract: identical seeds yield bit-identical streams.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_MIX1 = _U64(0xBF58476D1CE4E5B9)
_MIX2 = _U64(0x94D049BB133111EB)
_MASK = 0xFFFFFFFFFFFFFFFF
_INV_2_53 = float(2.0**-53)


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer: bijective avalanche mix of 64-bit words."""
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


def derive_seed(master: int, *parts: int) -> int:
    """Derive a child seed from a master seed and a tuple of indices.

    Used to assign independent streams to grid points and trials by index,
    so results do not depend on scheduling order.
    """
    state = np.array(master & _MASK, dtype=_U64)
    for part in parts:
        token = np.array(part & _MASK, dtype=_U64)
        with np.errstate(over="ignore"):
            state = _mix(state ^ _mix(token + _GOLDEN))
    return int(state)


class CounterRng:
    """Counter-mode splitmix64 stream with a fixed 64-bit seed."""

    def __init__(self, seed: int):
        self._key = np.array(seed & _MASK, dtype=_U64)
        self._pos = 0

    @property
    def position(self) -> int:
        """Number of raw 64-bit words consumed so far."""
        return self._pos

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit words as a uint64 array."""
        if n < 0:
            raise ValueError("n must be non-negative")
        idx = np.arange(self._pos + 1, self._pos + n + 1, dtype=_U64)
        self._pos += n
        with np.errstate(over="ignore"):
            return _mix(self._key + idx * _GOLDEN)

    def uniforms(self, n: int) -> np.ndarray:
        """``n`` uniforms in [0, 1) with 53-bit resolution."""
        return (self.raw(n) >> _U64(11)).astype(np.float64) * _INV_2_53

    def normals(self, n: int) -> np.ndarray:
        """``n`` standard normal variates via Box-Muller.

        Consumes ``2 * ceil(n / 2)`` raw words: the first half of the block
        supplies radii (uniforms shifted into (0, 1] so log never sees 0),
        the second half angles.
        """
        m = (n + 1) // 2
        block = self.raw(2 * m)
        u1 = ((block[:m] >> _U64(11)).astype(np.float64) + 1.0) * _INV_2_53
        u2 = (block[m:] >> _U64(11)).astype(np.float64) * _INV_2_53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        out = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return out[:n]

    def normal_matrix(self, rows: int, cols: int) -> np.ndarray:
        """Standard normal matrix filled row-major from one ``normals`` call."""
        return self.normals(rows * cols).reshape(rows, cols)

    def below(self, k: int) -> int:
        """One integer uniform on {0, ..., k-1}."""
        if k <= 0:
            raise ValueError("k must be positive")
        value = int(self.uniforms(1)[0] * k)
        return min(value, k - 1)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle (consumes ``len(items) - 1`` words)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
