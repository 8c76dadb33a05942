"""Independent reference implementations used as test oracles."""
import math

import numpy as np
import pytest


def dense_reference(params, x):
    """Scalar loop evaluation of ``W_{L+1} s_L(... s_1(W_1 x))`` with ``s(y) = max(y - b, 0)``."""
    h = [float(v) for v in x]
    for W, b in params[:-1]:
        h = [max(sum(W[i][j] * h[j] for j in range(len(h))) - b[i], 0.0) for i in range(len(W))]
    W_out = params[-1][0]
    return sum(W_out[0][j] * h[j] for j in range(len(h)))


def brute_slots(widths):
    """Enumerate every parameter slot as (layer, kind, row, col)."""
    slots = []
    L = len(widths) - 2
    for l in range(1, L + 2):
        for r in range(widths[l]):
            for c in range(widths[l - 1]):
                slots.append((l, "weight", r, c))
        if l <= L:
            for r in range(widths[l]):
                slots.append((l, "shift", r, 0))
    return slots


def random_widths(rng, max_depth=4, max_width=5, max_in=3):
    L = int(rng.integers(0, max_depth + 1))
    return (int(rng.integers(1, max_in + 1)),) + tuple(int(rng.integers(1, max_width + 1)) for _ in range(L)) + (1,)


def naive_gauss_loglik(residuals):
    total = 0.0
    for r in residuals:
        total += -0.5 * r * r - 0.5 * math.log(2 * math.pi)
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
