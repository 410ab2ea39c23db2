import numpy as np
import pytest


class FormulaLossEnv:
    """Deterministic oblivious adversary: loss is a fixed function of (t, arm).

    Lets two engines with the same seed be driven through identical loss
    tables without any shared random stream.
    """

    def __init__(self, K, fn):
        self.K = K
        self.fn = fn
        self.observe_count = 0

    def observe(self, t, arm):
        self.observe_count += 1
        return self.fn(t, arm)

    def full_loss_vector(self, t):
        return np.array([self.fn(t, a) for a in range(self.K)])


@pytest.fixture
def mixed_loss_env():
    """Losses cycling over a ragged grid; every arm sees varied values."""
    def make(K):
        return FormulaLossEnv(K, lambda t, a: ((t * 7 + a * 3) % 11) / 10.0)
    return make


def forced_rounds(rng, K, n, max_loss=1.0):
    """Random forced (arm, loss) pairs for driving update() directly."""
    arms = rng.integers(0, K, size=n)
    losses = rng.random(n) * max_loss
    return list(zip(arms.tolist(), losses.tolist()))
