"""Deterministic 64-bit PRNG with labelled substreams.

One master seed is drawn per run; independent substreams (disturbance
sampling, multistart perturbations, ...) are derived from it by folding a
string label into the state.  This keeps common-random-number comparisons
honest: adding consumers of one substream never perturbs another.
"""

import math

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & _MASK
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & _MASK
    return z ^ (z >> 31)


def _fnv1a(label: str) -> int:
    h = 0xCBF29CE484222325
    for b in label.encode("utf-8"):
        h = (h ^ b) * 0x100000001B3 & _MASK
    return h


class SplitMix64:
    """splitmix64 generator: state advances by a fixed odd gamma, outputs are
    a finalizing mix of the state."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK
        return _mix(self._state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform_in(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def gauss_pair(self) -> tuple:
        # Box-Muller; used only for fixed-seed direction sampling.
        u1 = self.uniform()
        while u1 <= 1e-300:
            u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        return r * math.cos(2.0 * math.pi * u2), r * math.sin(2.0 * math.pi * u2)


def substream(master_seed: int, label: str) -> SplitMix64:
    """Derive an independent generator from (master seed, label)."""
    return SplitMix64(_mix((master_seed & _MASK) ^ _fnv1a(label)))
