# optim/problems.py
"""
Composite problems u(x) = (1/m) sum_i f_i(x) + r(x).

Every variable is a flat vector. Matrix-valued problems (covariance estimation)
flatten a d x d matrix row-major and symmetrize inside value, gradient and prox.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Protocol

import numpy as np
from scipy import linalg as sla
from scipy import sparse
from scipy.special import expit

from app.exceptions import ConfigurationError, DataError

logger = logging.getLogger(__name__)


class SmoothLocalLoss(Protocol):
    dim: int

    def value(self, x: np.ndarray) -> float: ...

    def gradient(self, x: np.ndarray) -> np.ndarray: ...

    def domain_test(self, x: np.ndarray) -> bool: ...


class Regularizer(Protocol):
    def value(self, x: np.ndarray) -> float: ...

    def prox(self, x: np.ndarray, alpha: float) -> np.ndarray: ...

    def prox_rows(self, X: np.ndarray, alphas: np.ndarray) -> np.ndarray: ...


class LossBase:
    """Shared helpers; subclasses provide value/gradient/domain_test."""

    dim: int

    def domain_test(self, x: np.ndarray) -> bool:
        return True

    def values(self, X: np.ndarray) -> np.ndarray:
        """value() applied to every row of X."""
        return np.array([self.value(x) for x in X])

    def hessian(self) -> np.ndarray | None:
        """Constant Hessian for quadratic losses, None otherwise."""
        return None

    def lipschitz_hint(self) -> float:
        raise NotImplementedError


# ---------- Smooth losses ----------


def _log1p_exp_neg(t: np.ndarray) -> np.ndarray:
    """log(1 + exp(-t)) without overflow."""
    out = np.empty_like(t, dtype=float)
    pos = t >= 0
    out[pos] = np.log1p(np.exp(-t[pos]))
    out[~pos] = -t[~pos] + np.log1p(np.exp(t[~pos]))
    return out


class LogisticLoss(LossBase):
    def __init__(self, features: sparse.csr_matrix, labels: np.ndarray):
        self.A = sparse.csr_matrix(features, dtype=float)
        self.b = np.asarray(labels, dtype=float)
        self.n, self.dim = self.A.shape
        if self.n == 0:
            raise DataError("logistic loss needs at least one sample")

    def _margins(self, x: np.ndarray) -> np.ndarray:
        return self.b * (self.A @ x)

    def value(self, x: np.ndarray) -> float:
        return float(np.mean(_log1p_exp_neg(self._margins(x))))

    def values(self, X: np.ndarray) -> np.ndarray:
        margins = self.b[:, None] * (self.A @ X.T)
        return np.mean(_log1p_exp_neg(margins), axis=0)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        weights = -self.b * expit(-self._margins(x))
        return np.asarray(self.A.T @ weights).ravel() / self.n

    def lipschitz_hint(self) -> float:
        gram = (self.A.T @ self.A).toarray()
        return float(np.linalg.eigvalsh(gram)[-1]) / (4.0 * self.n)


class QuadraticRidgeLoss(LossBase):
    """(1/n) ||A x - b||^2 + (gamma/2) ||x||^2."""

    def __init__(self, A: np.ndarray, b: np.ndarray, gamma: float = 0.0):
        self.A = np.asarray(A, dtype=float)
        self.b = np.asarray(b, dtype=float)
        if self.A.ndim != 2 or self.b.shape != (self.A.shape[0],):
            raise ConfigurationError(f"shape mismatch: A {self.A.shape}, b {self.b.shape}")
        if gamma < 0:
            raise ConfigurationError(f"ridge weight must be nonnegative, got {gamma}")
        self.gamma = float(gamma)
        self.n, self.dim = self.A.shape

    def value(self, x: np.ndarray) -> float:
        r = self.A @ x - self.b
        return float(r @ r) / self.n + 0.5 * self.gamma * float(x @ x)

    def values(self, X: np.ndarray) -> np.ndarray:
        R = X @ self.A.T - self.b
        return np.sum(R * R, axis=1) / self.n + 0.5 * self.gamma * np.sum(X * X, axis=1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return (2.0 / self.n) * (self.A.T @ (self.A @ x - self.b)) + self.gamma * x

    def hessian(self) -> np.ndarray:
        return (2.0 / self.n) * (self.A.T @ self.A) + self.gamma * np.eye(self.dim)

    def lipschitz_hint(self) -> float:
        return float(np.linalg.eigvalsh(self.hessian())[-1])


class LogDetLoss(LossBase):
    """
    -n log det X + sign * trace(X Y) over symmetric positive definite X.

    sign = -1 reproduces the covariance experiment as printed; +1 is the usual
    maximum-likelihood sign.
    """

    def __init__(self, Y: np.ndarray, n: int, trace_sign: int = -1, eig_floor: float | None = None):
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] != Y.shape[1]:
            raise DataError(f"sample covariance must be square, got shape {Y.shape}")
        if np.max(np.abs(Y - Y.T), initial=0.0) > 1e-12 * (1.0 + np.max(np.abs(Y), initial=0.0)):
            raise DataError("sample covariance is not symmetric")
        if trace_sign not in (-1, 1):
            raise ConfigurationError(f"trace_sign must be -1 or +1, got {trace_sign}")
        self.Y = (Y + Y.T) / 2.0
        self.n = n
        self.side = Y.shape[0]
        self.dim = self.side * self.side
        self.trace_sign = trace_sign
        self.eig_floor = eig_floor

    def _matrix(self, x: np.ndarray) -> np.ndarray | None:
        X = np.asarray(x, dtype=float).reshape(self.side, self.side)
        if np.max(np.abs(X - X.T)) > 1e-10 * (1.0 + np.max(np.abs(X))):
            return None
        return (X + X.T) / 2.0

    def _cholesky(self, x: np.ndarray):
        X = self._matrix(x)
        if X is None or not np.all(np.isfinite(X)):
            return None, None
        try:
            factor = sla.cho_factor(X, lower=True)
        except np.linalg.LinAlgError:
            return X, None
        if np.min(np.diag(factor[0])) <= 0.0:
            return X, None
        return X, factor

    def domain_test(self, x: np.ndarray) -> bool:
        return self._cholesky(x)[1] is not None

    def value(self, x: np.ndarray) -> float:
        X, factor = self._cholesky(x)
        if factor is None:
            return math.inf
        logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
        return -self.n * logdet + self.trace_sign * float(np.sum(X * self.Y))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        X, factor = self._cholesky(x)
        if factor is None:
            raise DataError("gradient requested outside the positive definite cone")
        inv = sla.cho_solve(factor, np.eye(self.side))
        G = -self.n * (inv + inv.T) / 2.0 + self.trace_sign * self.Y
        return G.ravel()

    def lipschitz_hint(self) -> float:
        if self.eig_floor is None:
            raise ConfigurationError("log-det curvature needs an eigenvalue floor")
        return self.n / self.eig_floor**2


def logistic_loss(shard: "Dataset", dim: int) -> LogisticLoss:
    labels = np.array([label for label, _ in shard.rows], dtype=float)
    bad = labels[(labels != 1.0) & (labels != -1.0)]
    if bad.size:
        raise DataError(f"logistic labels must be -1 or +1, found {bad[0]:g}")
    return LogisticLoss(shard.to_csr(dim), labels)


def logdet_loss(Y: np.ndarray, n: int, trace_sign: int = -1, eig_floor: float | None = None) -> LogDetLoss:
    return LogDetLoss(Y, n, trace_sign=trace_sign, eig_floor=eig_floor)


def quadratic_ridge_loss(A: np.ndarray, b: np.ndarray, gamma: float = 0.0) -> QuadraticRidgeLoss:
    return QuadraticRidgeLoss(A, b, gamma)


# ---------- Regularizers ----------


class L1Norm:
    def __init__(self, lam: float):
        if lam < 0:
            raise ConfigurationError(f"l1 weight must be nonnegative, got {lam}")
        self.lam = float(lam)

    def value(self, x: np.ndarray) -> float:
        return self.lam * float(np.sum(np.abs(x)))

    def prox(self, x: np.ndarray, alpha: float) -> np.ndarray:
        return np.sign(x) * np.maximum(np.abs(x) - alpha * self.lam, 0.0)

    def prox_rows(self, X: np.ndarray, alphas: np.ndarray) -> np.ndarray:
        thresh = np.asarray(alphas, dtype=float)[:, None] * self.lam
        return np.sign(X) * np.maximum(np.abs(X) - thresh, 0.0)

    def anchor(self, dim: int) -> np.ndarray:
        return np.zeros(dim)


class SpectralBox:
    """Indicator of {X symmetric : a I <= X <= b I}; the prox is a projection."""

    def __init__(self, a: float, b: float):
        if not (0.0 < a <= b):
            raise ConfigurationError(f"spectral box needs 0 < a <= b, got a={a}, b={b}")
        self.a = float(a)
        self.b = float(b)

    @staticmethod
    def _side(x: np.ndarray) -> int:
        side = math.isqrt(x.size)
        if side * side != x.size:
            raise ValueError(f"vector of length {x.size} is not a flattened square matrix")
        return side

    def value(self, x: np.ndarray) -> float:
        side = self._side(x)
        X = x.reshape(side, side)
        scale = 1.0 + np.max(np.abs(X))
        if np.max(np.abs(X - X.T)) > 1e-10 * scale:
            return math.inf
        eigs = np.linalg.eigvalsh((X + X.T) / 2.0)
        tol = 1e-10 * scale
        return 0.0 if eigs[0] >= self.a - tol and eigs[-1] <= self.b + tol else math.inf

    def prox(self, x: np.ndarray, alpha: float) -> np.ndarray:
        side = self._side(x)
        X = x.reshape(side, side)
        vals, vecs = np.linalg.eigh((X + X.T) / 2.0)
        P = (vecs * np.clip(vals, self.a, self.b)) @ vecs.T
        return ((P + P.T) / 2.0).ravel()

    def prox_rows(self, X: np.ndarray, alphas: np.ndarray) -> np.ndarray:
        return np.stack([self.prox(x, a) for x, a in zip(X, alphas)])

    def anchor(self, dim: int) -> np.ndarray:
        side = math.isqrt(dim)
        return (0.5 * (self.a + self.b) * np.eye(side)).ravel()


def prox_l1(lam: float) -> L1Norm:
    return L1Norm(lam)


def prox_spectral_box(a: float, b: float) -> SpectralBox:
    return SpectralBox(a, b)


# ---------- Composite problem ----------


@dataclass(frozen=True, eq=False)
class CompositeProblem:
    losses: tuple
    regularizer: Regularizer
    dim: int
    name: str = "custom"

    def __post_init__(self):
        if not self.losses:
            raise ConfigurationError("a composite problem needs at least one agent")
        for i, loss in enumerate(self.losses):
            if loss.dim != self.dim:
                raise ConfigurationError(f"loss {i} has dimension {loss.dim}, expected {self.dim}")
        object.__setattr__(self, "losses", tuple(self.losses))

    @property
    def m(self) -> int:
        return len(self.losses)

    def grad_rows(self, X: np.ndarray) -> np.ndarray:
        """Stacked row gradients: row i is grad f_i(x_i)."""
        return np.stack([loss.gradient(x) for loss, x in zip(self.losses, X)])

    def smooth_value(self, x: np.ndarray) -> float:
        """f(x) = (1/m) sum_i f_i(x)."""
        return math.fsum(loss.value(x) for loss in self.losses) / self.m

    def smooth_gradient(self, x: np.ndarray) -> np.ndarray:
        total = np.zeros(self.dim)
        for loss in self.losses:
            total = total + loss.gradient(x)
        return total / self.m

    def objective(self, x: np.ndarray) -> float:
        return self.smooth_value(x) + self.regularizer.value(x)

    def objective_rows(self, X: np.ndarray) -> np.ndarray:
        """u(x_i) for each row; +inf where a row leaves a loss domain."""
        smooth = np.zeros(X.shape[0])
        for loss in self.losses:
            smooth = smooth + loss.values(X)
        smooth = smooth / self.m
        return smooth + np.array([self.regularizer.value(x) for x in X])

    def anchor(self) -> np.ndarray:
        return self.regularizer.anchor(self.dim)

    def lipschitz_hint(self) -> float:
        return max(loss.lipschitz_hint() for loss in self.losses)


def condition_number(problem: CompositeProblem) -> float:
    """max_i L_i / mu_f for problems with constant Hessians."""
    hessians = [loss.hessian() for loss in problem.losses]
    if any(h is None for h in hessians):
        raise ConfigurationError("condition number needs quadratic losses")
    L_max = max(float(np.linalg.eigvalsh(h)[-1]) for h in hessians)
    mu = float(np.linalg.eigvalsh(sum(hessians) / problem.m)[0])
    return L_max / mu


# ---------- Data sets ----------


@dataclass(frozen=True, eq=True)
class Dataset:
    """LIBSVM-style rows: (label, {0-based feature index: value})."""

    rows: tuple[tuple[float, Mapping[int, float]], ...]
    dim: int

    def __len__(self) -> int:
        return len(self.rows)

    def labels(self) -> np.ndarray:
        return np.array([label for label, _ in self.rows], dtype=float)

    def to_csr(self, dim: int | None = None) -> sparse.csr_matrix:
        dim = self.dim if dim is None else dim
        indptr = [0]
        indices: list[int] = []
        data: list[float] = []
        for _, feats in self.rows:
            for j in sorted(feats):
                indices.append(j)
                data.append(feats[j])
            indptr.append(len(indices))
        return sparse.csr_matrix(
            (np.array(data, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
            shape=(len(self.rows), dim),
        )


def binarize_labels(data: Dataset, positive: float) -> Dataset:
    rows = tuple((1.0 if label == positive else -1.0, feats) for label, feats in data.rows)
    return Dataset(rows=rows, dim=data.dim)


def partition_dataset(data: Dataset, m: int) -> list[Dataset]:
    """Contiguous equal shards in input order; a remainder is dropped."""
    if m < 1:
        raise ConfigurationError(f"agent count must be positive, got {m}")
    if m > len(data):
        raise ConfigurationError(f"cannot split {len(data)} rows across {m} agents")
    n = len(data) // m
    if n * m != len(data):
        logger.warning("[data] %d rows not divisible by %d agents; dropping the last %d", len(data), m, len(data) - n * m)
    return [Dataset(rows=data.rows[i * n : (i + 1) * n], dim=data.dim) for i in range(m)]


def gen_logistic_dataset(N: int, d: int, seed: int, density: float = 0.3) -> Dataset:
    """
    Sparse Gaussian features with labels drawn from a logistic model around a
    sparse ground-truth weight vector.
    """
    rng = np.random.default_rng(seed)
    truth = rng.standard_normal(d) * (rng.random(d) < 0.5)
    rows = []
    for _ in range(N):
        mask = rng.random(d) < density
        values = rng.standard_normal(d)
        feats = {int(j): float(values[j]) for j in np.flatnonzero(mask)}
        margin = sum(v * truth[j] for j, v in feats.items())
        label = 1.0 if rng.random() < expit(margin) else -1.0
        rows.append((label, feats))
    return Dataset(rows=tuple(rows), dim=d)


def gen_logistic_instance(m: int, n: int, d: int, lam: float, seed: int, density: float = 0.3) -> CompositeProblem:
    shards = partition_dataset(gen_logistic_dataset(m * n, d, seed, density), m)
    losses = tuple(logistic_loss(shard, d) for shard in shards)
    return CompositeProblem(losses=losses, regularizer=prox_l1(lam), dim=d, name="logistic_l1")


def logistic_instance_from_data(data: Dataset, m: int, lam: float) -> CompositeProblem:
    shards = partition_dataset(data, m)
    losses = tuple(logistic_loss(shard, data.dim) for shard in shards)
    return CompositeProblem(losses=losses, regularizer=prox_l1(lam), dim=data.dim, name="logistic_l1")


def gamma_schedule(m: int, gamma_base: float = 0.1, gamma_step: float = 0.1) -> list[float]:
    return [gamma_base + i * gamma_step for i in range(m)]


def gen_regression_instance(
    m: int,
    n: int,
    d: int,
    gamma_base: float = 0.1,
    gamma_step: float = 0.1,
    lam: float = 1e-5,
    seed: int = 0,
) -> CompositeProblem:
    if min(m, n, d) < 1:
        raise ConfigurationError(f"sizes must be positive, got m={m}, n={n}, d={d}")
    rng = np.random.default_rng(seed)
    losses = []
    for gamma in gamma_schedule(m, gamma_base, gamma_step):
        A = rng.standard_normal((n, d))
        b = rng.standard_normal(n)
        losses.append(quadratic_ridge_loss(A, b, gamma))
    return CompositeProblem(losses=tuple(losses), regularizer=prox_l1(lam), dim=d, name="elastic_net")


def random_spd(d: int, seed: int, low: float = 0.5, high: float = 2.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    S = (Q * rng.uniform(low, high, size=d)) @ Q.T
    return (S + S.T) / 2.0


def gen_covariance_instance(
    Sigma: np.ndarray,
    n: int,
    m: int,
    a: float,
    b: float,
    seed: int,
    trace_sign: int = -1,
) -> CompositeProblem:
    Sigma = np.asarray(Sigma, dtype=float)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1] or np.max(np.abs(Sigma - Sigma.T)) > 1e-12:
        raise DataError("covariance must be a symmetric square matrix")
    try:
        chol = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError:
        raise DataError("covariance is not positive definite")
    d = Sigma.shape[0]
    rng = np.random.default_rng(seed)
    losses = []
    for _ in range(m):
        samples = rng.standard_normal((n, d)) @ chol.T
        Y = samples.T @ samples / n
        losses.append(logdet_loss((Y + Y.T) / 2.0, n, trace_sign=trace_sign, eig_floor=a))
    return CompositeProblem(losses=tuple(losses), regularizer=prox_spectral_box(a, b), dim=d * d, name="covariance")

