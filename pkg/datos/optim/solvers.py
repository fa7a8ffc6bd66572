# optim/solvers.py
"""
Decentralized solvers over a gossip network.

Rows of every m x d iterate belong to agents. global_datos_step and
local_datos_step are the adaptive three-operator splitting iterations with a
network-wide or neighbourhood min-consensus on the stepsize;
davis_yin_reference_step runs the same method in its stacked two-block form
with explicit square roots of W and I - W, and serves as an oracle in tests.
pg_extra_step is the fixed-stepsize baseline and centralized_proxgrad supplies
the optimal value u*.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from app.exceptions import ConfigurationError, NonterminationError
from app.models import (
    CommLedger,
    DUpdate,
    GlobalState,
    LocalState,
    Neighborhood,
    PGExtraState,
    ReferenceLineSearch,
    ReferenceState,
    StepMetrics,
    SUpdate,
)
from optim.linesearch import ALPHA_FLOOR, RELATIVE_SLACK, decrease_gap, linesearch
from optim.metrics import consensus_error
from optim.netgraph import Graph, MixingMatrix, closed_neighborhood
from optim.problems import CompositeProblem

logger = logging.getLogger(__name__)

GLOBAL_COMM = CommLedger(vector_rounds=2, global_broadcasts=1)
LOCAL_COMM = CommLedger(vector_rounds=2, scalar_rounds=2)
PG_EXTRA_COMM = CommLedger(vector_rounds=1)


# ---------- shared pieces ----------


def _agent_linesearch(prob: CompositeProblem, alphas_in: np.ndarray, X, X_half, D_half, delta):
    """Each agent backtracks on its own loss from its row of X_half along -D_half."""
    bar = np.empty(prob.m)
    trials = np.empty(prob.m, dtype=int)
    for i, loss in enumerate(prob.losses):
        res = linesearch(alphas_in[i], loss, X[i], X_half[i], -D_half[i], delta)
        bar[i] = res.alpha
        trials[i] = res.trials
    return bar, trials


def quantize_down(alphas: np.ndarray) -> np.ndarray:
    """Round each stepsize down to a power of two (exponent-only transmission)."""
    _, exponent = np.frexp(alphas)
    return np.ldexp(0.5, exponent)


def _decrease_slack(prob: CompositeProblem, X, grad, T_A, lam, delta) -> np.ndarray:
    """Per-agent sufficient-decrease gap at the consensused stepsize, scaled by 1 + |f_i(x_i)|."""
    slack = np.empty(prob.m)
    for i, loss in enumerate(prob.losses):
        f1 = loss.value(X[i])
        gap = decrease_gap(loss, X[i], f1, grad[i], T_A[i], lam[i], delta)
        slack[i] = gap / (1.0 + abs(f1))
    return slack


def local_min(values: np.ndarray, graph: Graph, neighborhood: Neighborhood = Neighborhood.CLOSED) -> np.ndarray:
    """One round of neighbourhood min-consensus."""
    out = np.empty_like(values)
    for i in range(graph.m):
        if neighborhood == Neighborhood.CLOSED:
            group = sorted(closed_neighborhood(graph, i))
        else:
            group = graph.neighbors(i) or [i]
        out[i] = np.min(values[group])
    return out


# ---------- global_DATOS ----------


def global_datos_step(
    state: GlobalState,
    prob: CompositeProblem,
    mix: MixingMatrix,
    delta: float,
    *,
    quantize: bool = False,
) -> tuple[GlobalState, StepMetrics]:
    X, S, D = state.X, state.S, state.D
    grad = prob.grad_rows(X)

    # two vector gossip rounds
    X_half = mix.gossip(X)
    D_half = mix.gossip(grad + S + D)

    # per-agent backtracking seeded at the common previous stepsize
    bar, trials = _agent_linesearch(prob, np.full(prob.m, state.alpha_prev), X, X_half, D_half, delta)
    if quantize:
        bar = quantize_down(bar)

    # network-wide minimum
    alpha = float(np.min(bar))
    lam = np.full(prob.m, alpha)

    T_A = X_half - alpha * D_half
    X_new = prob.regularizer.prox_rows(X_half - alpha * D_half + alpha * S, lam)
    S_new = S + (X_half - X_new - alpha * D_half) / alpha
    D_new = D_half + (X - X_half) / alpha - grad - S

    metrics = StepMetrics(
        alpha_used=alpha,
        linesearch_trials=trials,
        consensus_error=consensus_error(X_new),
        objective_per_agent=prob.objective_rows(X_new),
        comm=GLOBAL_COMM,
        T_A=T_A,
        decrease_slack=_decrease_slack(prob, X, grad, T_A, lam, delta),
    )
    return GlobalState(X=X_new, S=S_new, D=D_new, alpha_prev=alpha, k=state.k + 1), metrics


# ---------- local_DATOS ----------


def local_datos_step(
    state: LocalState,
    prob: CompositeProblem,
    mix: MixingMatrix,
    graph: Graph,
    delta: float,
    *,
    neighborhood: Neighborhood = Neighborhood.CLOSED,
    s_update: SUpdate = SUpdate.CONSISTENT,
    d_update: DUpdate = DUpdate.APPROX,
    L: np.ndarray | None = None,
    quantize: bool = False,
) -> tuple[LocalState, StepMetrics]:
    X, S, D = state.X, state.S, state.D
    grad = prob.grad_rows(X)

    # two vector gossip rounds
    X_half = mix.gossip(X)
    D_half = mix.gossip(grad + S + D)

    # every agent seeds with its own previous stepsize
    bar, trials = _agent_linesearch(prob, state.Lambda_prev, X, X_half, D_half, delta)
    if quantize:
        bar = quantize_down(bar)

    # one scalar round with neighbours
    lam = local_min(bar, graph, neighborhood)
    lam_c = lam[:, None]

    # second scalar round: neighbours exchange their new stepsizes
    if d_update == DUpdate.EXACT:
        if L is None:
            raise ConfigurationError("the exact D update needs the explicit square root of I - W")
        D_new = D + L @ ((L @ (X - lam_c * (S + D + grad))) / lam_c)
    else:
        if np.all(lam == lam[0]):
            D_lam = (X - X_half) / lam[0]
        else:
            D_lam = mix.laplacian(X / lam_c)
        D_new = D_half + D_lam - grad - S

    T_A = X_half - lam_c * D_half
    X_new = prob.regularizer.prox_rows(X_half - lam_c * D_half + lam_c * S, lam)
    if s_update == SUpdate.CONSISTENT:
        S_new = S + (X_half - X_new - lam_c * D_half) / lam_c
    else:
        S_new = S + (X_half - X_new - D_half) / lam_c

    metrics = StepMetrics(
        alpha_used=lam,
        linesearch_trials=trials,
        consensus_error=consensus_error(X_new),
        objective_per_agent=prob.objective_rows(X_new),
        comm=LOCAL_COMM,
        T_A=T_A,
        decrease_slack=_decrease_slack(prob, X, grad, T_A, lam, delta),
    )
    return LocalState(X=X_new, S=S_new, D=D_new, Lambda_prev=lam, k=state.k + 1), metrics


# ---------- stacked reference ----------


class StackedLoss:
    """F(X) = sum_i f_i(x_i) on the flattened first block."""

    def __init__(self, prob: CompositeProblem):
        self.prob = prob
        self.dim = prob.m * prob.dim

    def _rows(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.prob.m, self.prob.dim)

    def value(self, x: np.ndarray) -> float:
        values = [loss.value(row) for loss, row in zip(self.prob.losses, self._rows(x))]
        return math.inf if not all(map(math.isfinite, values)) else math.fsum(values)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.prob.grad_rows(self._rows(x)).ravel()

    def domain_test(self, x: np.ndarray) -> bool:
        return all(loss.domain_test(row) for loss, row in zip(self.prob.losses, self._rows(x)))


def davis_yin_reference_step(
    state: ReferenceState,
    prob: CompositeProblem,
    delta: float,
    *,
    mode: ReferenceLineSearch = ReferenceLineSearch.AGENT_MIN,
) -> tuple[ReferenceState, StepMetrics]:
    T_B1, S1, S2, Y = state.T_B1, state.S1, state.S2, state.Y
    L, M = state.L, state.M
    grad = prob.grad_rows(T_B1)
    LY = L @ Y
    L2 = L @ L

    # first block of T_A as an affine function of alpha: base + alpha * direction
    inner = S1 + LY + grad
    base = T_B1 - L2 @ T_B1
    direction = -(inner - L2 @ inner)

    if mode == ReferenceLineSearch.POOLED:
        res = linesearch(state.alpha_prev, StackedLoss(prob), T_B1.ravel(), base.ravel(), direction.ravel(), delta)
        alpha = res.alpha
        trials = np.full(prob.m, res.trials)
    else:
        bar = np.empty(prob.m)
        trials = np.empty(prob.m, dtype=int)
        for i, loss in enumerate(prob.losses):
            res = linesearch(state.alpha_prev, loss, T_B1[i], base[i], direction[i], delta)
            bar[i], trials[i] = res.alpha, res.trials
        alpha = float(np.min(bar))

    Y_new = Y + (L @ (T_B1 - alpha * S1 - alpha * LY - alpha * grad)) / alpha
    T_A1 = T_B1 - alpha * S1 - alpha * grad - alpha * (L @ Y_new)
    T_A2 = -alpha * S2 - alpha * (M @ Y_new)
    T_B1_new = prob.regularizer.prox_rows(T_A1 + alpha * S1, np.full(prob.m, alpha))
    T_B2_new = np.zeros_like(T_A2)
    S1_new = S1 + (T_A1 - T_B1_new) / alpha
    S2_new = S2 + (T_A2 - T_B2_new) / alpha

    new_state = ReferenceState(
        T_B1=T_B1_new, T_B2=T_B2_new, S1=S1_new, S2=S2_new, Y=Y_new,
        alpha_prev=alpha, L=L, M=M, k=state.k + 1,
    )
    metrics = StepMetrics(
        alpha_used=alpha,
        linesearch_trials=trials,
        consensus_error=consensus_error(T_B1_new),
        objective_per_agent=prob.objective_rows(T_B1_new),
        comm=GLOBAL_COMM,
        T_A=T_A1,
    )
    return new_state, metrics


# ---------- PG-EXTRA ----------


def pg_extra_step(
    state: PGExtraState,
    prob: CompositeProblem,
    mix: MixingMatrix,
    alpha: float,
) -> tuple[PGExtraState, StepMetrics]:
    """
    z1 = W x0 - alpha grad F(x0); afterwards
    z_{k+1} = z_k + W x_k - (I + W)/2 x_{k-1} - alpha (grad F(x_k) - grad F(x_{k-1})),
    x_{k+1} = prox_{alpha R}(z_{k+1}).
    """
    if not alpha > 0:
        raise ConfigurationError(f"PG-EXTRA needs a positive stepsize, got {alpha}")
    X = state.X
    grad = prob.grad_rows(X)
    WX = mix.gossip(X)
    if state.k == 0:
        Z = WX - alpha * grad
    else:
        Z = state.Z + WX - 0.5 * (state.X_prev + state.WX_prev) - alpha * (grad - state.grad_prev)
    X_new = prob.regularizer.prox_rows(Z, np.full(prob.m, alpha))

    metrics = StepMetrics(
        alpha_used=float(alpha),
        linesearch_trials=np.zeros(prob.m, dtype=int),
        consensus_error=consensus_error(X_new),
        objective_per_agent=prob.objective_rows(X_new),
        comm=PG_EXTRA_COMM,
        T_A=Z,
    )
    return PGExtraState(X=X_new, X_prev=X, WX_prev=WX, Z=Z, grad_prev=grad, k=state.k + 1), metrics


# ---------- centralized oracle ----------


@dataclass(frozen=True, eq=False)
class OracleResult:
    x: np.ndarray
    u: float
    iterations: int
    converged: bool
    residual: float


def kkt_residual(prob: CompositeProblem, x: np.ndarray) -> float:
    """||x - prox_r(x - grad f(x))|| with unit step."""
    return float(np.linalg.norm(x - prob.regularizer.prox(x - prob.smooth_gradient(x), 1.0)))


def centralized_proxgrad(
    prob: CompositeProblem,
    delta: float = 0.9,
    tol: float = 1e-30,
    max_iter: int = 100_000,
    *,
    alpha_init: float = 10.0,
    x0: np.ndarray | None = None,
    patience: int = 100,
) -> OracleResult:
    """
    Proximal gradient on f = (1/m) sum f_i with backtracking at the prox point.

    Tolerances below double precision are clamped to 1e-16 * (1 + ||x||); the
    run also stops once the fixed-point residual has not decreased for
    `patience` iterations while already below 1e-8 * (1 + ||x||).
    """
    reg = prob.regularizer
    x = prob.anchor() if x0 is None else np.array(x0, dtype=float)
    alpha = float(alpha_init)
    best_x, best_u, best_res = x, prob.objective(x), math.inf
    stale = 0
    residual = math.inf

    for it in range(1, max_iter + 1):
        fx = prob.smooth_value(x)
        gx = prob.smooth_gradient(x)
        slack = RELATIVE_SLACK * (1.0 + abs(fx))
        while True:
            x_new = reg.prox(x - alpha * gx, alpha)
            f_new = prob.smooth_value(x_new)
            step = x_new - x
            if math.isfinite(f_new) and f_new <= fx + float(gx @ step) + delta / (2.0 * alpha) * float(step @ step) + slack:
                break
            alpha /= 2.0
            if alpha < ALPHA_FLOOR:
                raise NonterminationError("oracle line-search stepsize underflow")

        residual = float(np.linalg.norm(step)) / alpha
        x = x_new
        u = f_new + reg.value(x)
        if residual < best_res:
            best_x, best_u, best_res, stale = x, u, residual, 0
        else:
            stale += 1

        scale = 1.0 + float(np.linalg.norm(x))
        if residual <= max(tol, 1e-16 * scale):
            return OracleResult(x=x, u=u, iterations=it, converged=True, residual=residual)
        if stale >= patience and best_res <= 1e-8 * scale:
            return OracleResult(x=best_x, u=best_u, iterations=it, converged=True, residual=best_res)

    logger.warning("[oracle] no convergence after %d iterations (residual %.3e); returning best iterate", max_iter, best_res)
    return OracleResult(x=best_x, u=best_u, iterations=max_iter, converged=False, residual=best_res)
