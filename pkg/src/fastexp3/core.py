"""Shared scalar contracts: learning-rate schedules, the IPW estimator, and
the seeded uniform stream every engine draws from.

Arms are plain ints in [0, K), losses plain floats in [0, 1]; invariants are
enforced at operation boundaries rather than wrapped in value types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ShortHorizonWarning(UserWarning):
    """Horizon too short for the rejection sampler's clean attempt bound.

    Below T = 2 K ln K the regret bound exceeds T anyway; engines proceed,
    but the expected attempts per sample may degrade.
    """


def short_horizon_threshold(K: int) -> float:
    """Smallest horizon at which eta * K <= 1 holds for the fixed schedule."""
    return 2.0 * K * math.log(K)


def fixed_eta(K: int, T: int) -> float:
    """Learning rate sqrt(2 ln K / (K T)) for a horizon known in advance."""
    if not isinstance(K, int) or K < 2:
        raise ValueError(f"K must be an integer >= 2, got {K!r}")
    if not isinstance(T, int) or T < 1:
        raise ValueError(f"T must be an integer >= 1, got {T!r}")
    return math.sqrt(2.0 * math.log(K) / (K * T))


def anytime_eta(K: int, t: int) -> float:
    """Round-t learning rate sqrt(ln K / (K t)); strictly decreasing in t."""
    if not isinstance(K, int) or K < 2:
        raise ValueError(f"K must be an integer >= 2, got {K!r}")
    if not isinstance(t, int) or t < 1:
        raise ValueError(f"t must be an integer >= 1, got {t!r}")
    return math.sqrt(math.log(K) / (K * t))


def block_end(t: int, K: int) -> int:
    """Last round of the length-K block containing round t: ceil(t/K) * K."""
    if not isinstance(t, int) or t < 1:
        raise ValueError(f"t must be an integer >= 1, got {t!r}")
    if not isinstance(K, int) or K < 2:
        raise ValueError(f"K must be an integer >= 2, got {K!r}")
    return -(-t // K) * K


def ipw_estimate(loss: float, p: float) -> float:
    """Inverse-probability-weighted loss estimate loss / p.

    p must be the probability with which the observed arm was selected;
    p <= 0 signals a corrupted weight state upstream.
    """
    if not (p > 0.0) or p > 1.0 or not math.isfinite(p):
        raise ValueError(f"selection probability must be in (0, 1], got {p!r}")
    return loss / p


def validate_loss(loss) -> float:
    """Boundary check for user-supplied losses; out-of-range is an error, not a clamp."""
    loss = float(loss)
    if not (0.0 <= loss <= 1.0):
        raise ValueError(f"loss must lie in [0, 1], got {loss!r}")
    return loss


class UniformSource:
    """Seeded stream of uniforms on the half-open interval [0, 1).

    Backed by numpy's PCG64. Equal seeds yield equal streams, and every value
    handed out advances the stream by exactly one draw. Values are prefetched
    in blocks purely for speed: PCG64 block draws are bitwise identical to
    repeated single draws.

    The half-open range matters: r = u * W is then strictly below W, so
    inverse-CDF descents always terminate inside a real interval.
    """

    __slots__ = ("seed", "_gen", "_buf", "_pos")

    _BLOCK = 1024

    def __init__(self, seed):
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))
        self._buf = []
        self._pos = 0

    def uniform(self) -> float:
        """Next uniform in [0, 1)."""
        if self._pos >= len(self._buf):
            self._buf = self._gen.random(self._BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def uniforms(self, n: int) -> np.ndarray:
        """Next n uniforms as an array; same stream as n single draws."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        out = np.empty(n)
        have = len(self._buf) - self._pos
        take = min(have, n)
        if take:
            out[:take] = self._buf[self._pos:self._pos + take]
            self._pos += take
        if take < n:
            out[take:] = self._gen.random(n - take)
        return out


@dataclass(frozen=True)
class HorizonParams:
    """Problem-size bundle: arm count, optional known horizon, learning rate."""

    K: int
    eta: float
    T: int | None = None

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if not (self.eta > 0.0 and math.isfinite(self.eta)):
            raise ValueError("eta must be positive and finite")
        if self.T is not None and self.T < 1:
            raise ValueError("T must be >= 1 when given")


@dataclass
class RoundRecord:
    """One interaction round as persisted by the experiment harness."""

    t: int
    arm: int
    loss: float
    p: float
    attempts: int
    elapsed_ns: int
