import math

import numpy as np
import pytest

from app.exceptions import ConfigurationError, NonterminationError
from optim.linesearch import decrease_gap, linesearch
from optim.problems import logdet_loss, quadratic_ridge_loss


def half_square(L=1.0, dim=1):
    """f(x) = (L/2) ||x||^2."""
    return quadratic_ridge_loss(np.zeros((1, dim)), np.zeros(1), gamma=L)


class PointDomain:
    """Finite only at the origin, so every candidate off the origin is rejected."""

    dim = 1

    def value(self, x):
        return 0.0 if not np.any(x) else math.inf

    def gradient(self, x):
        return np.zeros_like(x)

    def domain_test(self, x):
        return not np.any(x)


def test_hand_derived_quadratic():
    f = half_square()
    x = np.ones(1)
    res = linesearch(10.0, f, x, x, -f.gradient(x), 0.9)
    assert res.alpha == 0.625
    assert res.trials == 5
    np.testing.assert_allclose(res.candidate, [0.375])


def test_zero_direction_accepts_immediately():
    f = half_square()
    x = np.array([0.3])
    res = linesearch(10.0, f, x, x, np.zeros(1), 0.9)
    assert res.alpha == 10.0 and res.trials == 1


@pytest.mark.parametrize("L", [0.1, 1.0, 10.0])
def test_stepsize_bound_and_trial_count(L):
    f = half_square(L, dim=3)
    x = np.array([1.0, -2.0, 0.5])
    alpha_in, delta = 10.0, 0.9
    res = linesearch(alpha_in, f, x, x, -f.gradient(x), delta)
    assert min(alpha_in, delta / (2 * L)) <= res.alpha <= alpha_in
    assert res.alpha == alpha_in / 2 ** (res.trials - 1)
    assert res.trials <= max(1, math.ceil(math.log2(2 * L * alpha_in / delta))) + 1
    assert decrease_gap(f, x, f.value(x), f.gradient(x), res.candidate, res.alpha, delta) >= -1e-12


def test_downward_closure():
    f = half_square(3.0, dim=2)
    x = np.array([0.7, -1.1])
    g = f.gradient(x)
    res = linesearch(5.0, f, x, x, -g, 0.9)
    half = res.alpha / 2
    assert decrease_gap(f, x, f.value(x), g, x - half * g, half, 0.9) >= 0.0


def test_logdet_candidate_reenters_domain():
    loss = logdet_loss(np.zeros((2, 2)), 1)
    X = np.diag([0.05, 1.0]).ravel()
    d = -np.eye(2).ravel()
    assert not loss.domain_test(X + 1.0 * d)
    res = linesearch(1.0, loss, X, X, d, 0.9)
    assert res.trials > 1
    assert loss.domain_test(res.candidate)
    assert np.linalg.eigvalsh(res.candidate.reshape(2, 2))[0] > 0


def test_nontermination_when_no_candidate_is_feasible():
    with pytest.raises(NonterminationError):
        linesearch(1.0, PointDomain(), np.zeros(1), np.ones(1), np.ones(1), 0.9)


def test_bad_arguments():
    f = half_square()
    with pytest.raises(ConfigurationError):
        linesearch(0.0, f, np.ones(1), np.ones(1), np.ones(1), 0.9)
    with pytest.raises(ConfigurationError):
        linesearch(1.0, f, np.ones(1), np.ones(1), np.ones(1), 1.5)
