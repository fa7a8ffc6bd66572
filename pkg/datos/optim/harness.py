# optim/harness.py
"""
Experiment orchestration: build the graph and problem an ExperimentConfig
describes, solve the centralized problem once for u*, then run the configured
decentralized solver and emit one MetricsRow per recorded iteration.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from app.exceptions import ConfigurationError, DivergenceError, NumericalError
from app.models import (
    CommLedger,
    DUpdate,
    ErgodicTracker,
    GlobalState,
    LocalState,
    PGExtraState,
    ProblemKind,
    ReferenceState,
    SolverKind,
)
from app.schemas import METRICS_HEADER, ExperimentConfig, GraphSection, MetricsRow, ProblemSection, RunSummary
from optim.metrics import consensus_error, update_ergodic
from optim.netgraph import Graph, MixingMatrix, erdos_renyi, metropolis_weights, mixing_matrix, read_graph_file, sqrt_operators
from optim.problems import (
    CompositeProblem,
    SpectralBox,
    binarize_labels,
    gen_covariance_instance,
    gen_logistic_instance,
    gen_regression_instance,
    logistic_instance_from_data,
    random_spd,
)
from optim.solvers import (
    OracleResult,
    centralized_proxgrad,
    davis_yin_reference_step,
    global_datos_step,
    local_datos_step,
    pg_extra_step,
)
from storage.libsvm import load_libsvm
from storage.outputs import write_csv, write_json

logger = logging.getLogger(__name__)

DEFAULT_DIVERGENCE = 1e12
PG_EXTRA_GRID = tuple(2.0**-e for e in range(8, -1, -1))
PG_EXTRA_PROBE = 200


# ---------- building blocks ----------


def build_graph(section: GraphSection) -> Graph:
    if section.file:
        g = read_graph_file(section.file)
        if g.m != section.m:
            logger.info("[harness] graph file has %d agents; overriding graph.m=%d", g.m, section.m)
        return g
    if section.m == 1:
        return Graph.from_edges(1, ())
    return erdos_renyi(section.m, section.p, section.seed)


def build_problem(section: ProblemSection, m: int) -> CompositeProblem:
    if section.kind == ProblemKind.ELASTIC_NET:
        return gen_regression_instance(
            m, section.n, section.d,
            gamma_base=section.gamma_base, gamma_step=section.gamma_step, lam=section.lam, seed=section.seed,
        )
    if section.kind == ProblemKind.LOGISTIC_L1:
        if section.data_file:
            data = load_libsvm(section.data_file, max_rows=section.max_rows)
            if section.positive_label is not None:
                data = binarize_labels(data, section.positive_label)
            return logistic_instance_from_data(data, m, section.lam)
        return gen_logistic_instance(m, section.n, section.d, section.lam, section.seed, section.density)
    if section.kind == ProblemKind.COVARIANCE:
        Sigma = random_spd(section.d, section.seed)
        return gen_covariance_instance(
            Sigma, section.n, m, section.a, section.b, section.seed + 1, trace_sign=section.trace_sign,
        )
    raise ConfigurationError(f"problem kind '{section.kind.value}' cannot be built from a config")


def initial_iterates(prob: CompositeProblem, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Standard-normal X0 and S0; X0 rows are projected into the regularizer's domain."""
    rng = np.random.default_rng(seed)
    X0 = rng.standard_normal((prob.m, prob.dim))
    S0 = rng.standard_normal((prob.m, prob.dim))
    if isinstance(prob.regularizer, SpectralBox):
        # matrix variables: the log-det domain only admits symmetric points
        side = math.isqrt(prob.dim)
        X0 = _symmetrize_rows(X0, side)
        S0 = _symmetrize_rows(S0, side)
    if not all(math.isfinite(prob.regularizer.value(x)) for x in X0):
        X0 = prob.regularizer.prox_rows(X0, np.ones(prob.m))
    return X0, S0


def _symmetrize_rows(X: np.ndarray, side: int) -> np.ndarray:
    M = X.reshape(-1, side, side)
    return ((M + M.transpose(0, 2, 1)) / 2.0).reshape(X.shape)


Stepper = Callable[[object], tuple]


def make_solver(
    cfg: ExperimentConfig,
    prob: CompositeProblem,
    graph: Graph,
    mix: MixingMatrix,
    X0: np.ndarray,
    S0: np.ndarray,
    *,
    pg_extra_alpha: Optional[float] = None,
) -> tuple[object, Stepper]:
    s = cfg.solver
    if s.name == SolverKind.GLOBAL_DATOS:
        state = GlobalState.initial(X0, S0, s.alpha_init)
        return state, lambda st: global_datos_step(st, prob, mix, s.delta, quantize=s.quantize)
    if s.name == SolverKind.LOCAL_DATOS:
        L = sqrt_operators(mix)[0] if s.d_update == DUpdate.EXACT else None
        state = LocalState.initial(X0, S0, s.alpha_init)
        return state, lambda st: local_datos_step(
            st, prob, mix, graph, s.delta,
            neighborhood=s.neighborhood, s_update=s.s_update, d_update=s.d_update, L=L, quantize=s.quantize,
        )
    if s.name == SolverKind.REFERENCE:
        L, M = sqrt_operators(mix)
        state = ReferenceState.initial(X0, S0, s.alpha_init, L, M)
        return state, lambda st: davis_yin_reference_step(st, prob, s.delta, mode=s.reference_linesearch)
    if s.name == SolverKind.PG_EXTRA:
        if pg_extra_alpha is None:
            raise ConfigurationError("PG-EXTRA needs a stepsize")
        return PGExtraState(X=X0.copy()), lambda st: pg_extra_step(st, prob, mix, pg_extra_alpha)
    raise ConfigurationError(f"unknown solver {s.name}")


def _state_norm(state) -> float:
    norms = [np.max(np.abs(getattr(state, name))) for name in ("X", "S", "D") if getattr(state, name, None) is not None]
    return float(max(norms)) if norms else 0.0


# ---------- one experiment ----------


@dataclass
class RunOutcome:
    rows: list[MetricsRow]
    summary: RunSummary
    X: Optional[np.ndarray] = None
    alphas: list[np.ndarray] = field(default_factory=list)


def _gap_and_excluded(prob: CompositeProblem, X: np.ndarray, u_star: float) -> tuple[float, int]:
    values = prob.objective_rows(X)
    finite = np.isfinite(values)
    excluded = int(np.count_nonzero(~finite))
    if excluded == len(values):
        return math.nan, excluded
    return float(np.mean(values[finite]) - u_star), excluded


def run_experiment(
    cfg: ExperimentConfig,
    *,
    problem: Optional[CompositeProblem] = None,
    graph: Optional[Graph] = None,
    oracle: Optional[OracleResult] = None,
    divergence_threshold: float = DEFAULT_DIVERGENCE,
    keep_alphas: bool = False,
) -> RunOutcome:
    """
    Run cfg.solver.iters iterations and record rows k = stride, 2*stride, ..., K.

    Iterates whose largest entry exceeds divergence_threshold (or turn
    non-finite) abort the run with DivergenceError carrying the rows so far.
    """
    graph = graph if graph is not None else build_graph(cfg.graph)
    prob = problem if problem is not None else build_problem(cfg.problem, graph.m)
    if prob.m != graph.m:
        raise ConfigurationError(f"problem has {prob.m} agents but the graph has {graph.m}")
    mix = mixing_matrix(metropolis_weights(graph), cfg.graph.c)

    if oracle is None:
        oracle = centralized_proxgrad(
            prob, cfg.solver.delta, cfg.solver.oracle_tol, cfg.solver.oracle_max_iter, alpha_init=cfg.solver.alpha_init,
        )
    if not oracle.converged:
        raise NumericalError(
            f"centralized oracle did not converge in {oracle.iterations} iterations (residual {oracle.residual:.3e})"
        )
    u_star, x_star = oracle.u, oracle.x

    X0, S0 = initial_iterates(prob, cfg.solver.seed)
    pg_alpha = None
    if cfg.solver.name == SolverKind.PG_EXTRA:
        pg_alpha = cfg.solver.pg_extra_alpha or tune_pg_extra(cfg, prob, graph, mix, X0, S0, oracle)
    state, step = make_solver(cfg, prob, graph, mix, X0, S0, pg_extra_alpha=pg_alpha)

    K, stride = cfg.solver.iters, cfg.output.stride
    rows: list[MetricsRow] = []
    alphas: list[np.ndarray] = []
    comm = CommLedger()
    trials = 0
    tracker = ErgodicTracker()

    for k in range(1, K + 1):
        state, metrics = step(state)
        comm = comm + metrics.comm
        trials += int(np.sum(metrics.linesearch_trials))
        if metrics.T_A is not None:
            tracker = update_ergodic(tracker, metrics.alpha_min, metrics.T_A, getattr(state, "S", state.X))
        if keep_alphas:
            alphas.append(np.atleast_1d(np.asarray(metrics.alpha_used, dtype=float)).copy())

        norm = _state_norm(state)
        if not math.isfinite(norm) or norm > divergence_threshold:
            logger.warning("[harness] %s diverged at k=%d (max |entry| %.3e)", cfg.solver.name.value, k, norm)
            raise DivergenceError(f"iterates diverged at k={k}", rows=rows, k=k)

        if k % stride == 0 or k == K:
            gap, excluded = _gap_and_excluded(prob, state.X, u_star)
            rows.append(MetricsRow(
                k=k,
                gap=gap,
                consensus_err=metrics.consensus_error,
                dist_sq=float(np.sum((state.X - x_star[None, :]) ** 2)),
                alpha_min=metrics.alpha_min,
                alpha_max=metrics.alpha_max,
                vec_rounds=comm.vector_rounds,
                scal_rounds=comm.scalar_rounds,
                bcasts=comm.global_broadcasts,
                ls_trials=trials,
                excluded=excluded,
            ))

    summary = RunSummary(
        config=cfg.model_dump(mode="json"),
        u_star=u_star,
        oracle_converged=oracle.converged,
        iterations=K,
        final_gap=rows[-1].gap if rows else None,
        final_consensus_err=rows[-1].consensus_err if rows else None,
        pg_extra_alpha=pg_alpha,
    )
    if tracker.Tbar is not None:
        summary.ergodic_gap, _ = _gap_and_excluded(prob, tracker.Tbar, u_star)
        summary.ergodic_consensus_err = consensus_error(tracker.Tbar)
    return RunOutcome(rows=rows, summary=summary, X=state.X, alphas=alphas)


# ---------- PG-EXTRA tuning and the baseline comparison ----------


def tune_pg_extra(
    cfg: ExperimentConfig,
    prob: CompositeProblem,
    graph: Graph,
    mix: MixingMatrix,
    X0: np.ndarray,
    S0: np.ndarray,
    oracle: OracleResult,
    probe: int = PG_EXTRA_PROBE,
) -> float:
    """Pick alpha from {2^-8, ..., 1} / L_hat by the smallest gap after a short probe run."""
    L_hat = prob.lipschitz_hint()
    probe = max(1, min(probe, cfg.solver.iters or probe))
    best_alpha, best_gap = None, math.inf
    for scale in PG_EXTRA_GRID:
        alpha = scale / L_hat
        state, step = make_solver(cfg, prob, graph, mix, X0, S0, pg_extra_alpha=alpha)
        try:
            for _ in range(probe):
                state, _metrics = step(state)
                if not np.all(np.isfinite(state.X)) or np.max(np.abs(state.X)) > DEFAULT_DIVERGENCE:
                    raise DivergenceError("probe diverged")
        except NumericalError:
            continue
        gap, _ = _gap_and_excluded(prob, state.X, oracle.u)
        if math.isfinite(gap) and gap < best_gap:
            best_alpha, best_gap = alpha, gap
    if best_alpha is None:
        raise DivergenceError("every PG-EXTRA stepsize on the grid diverged")
    logger.info("[harness] PG-EXTRA stepsize %.3e (L_hat %.3e, probe gap %.3e)", best_alpha, L_hat, best_gap)
    return best_alpha


def iterations_to_gap(rows: Iterable[MetricsRow], target: float) -> Optional[int]:
    for row in rows:
        if math.isfinite(row.gap) and row.gap <= target:
            return row.k
    return None


def baseline_report(
    cfg: ExperimentConfig,
    ps: Iterable[float] = (0.1, 0.5, 0.9),
    target: float = 1e-6,
) -> list[dict]:
    """Iterations-to-gap for global_DATOS against tuned PG-EXTRA at each edge probability."""
    report = []
    for p in ps:
        cell = cfg.model_copy(deep=True)
        cell.graph.p = p
        graph = build_graph(cell.graph)
        prob = build_problem(cell.problem, graph.m)
        oracle = centralized_proxgrad(
            prob, cell.solver.delta, cell.solver.oracle_tol, cell.solver.oracle_max_iter, alpha_init=cell.solver.alpha_init,
        )
        entry = {"p": p}
        for solver in (SolverKind.GLOBAL_DATOS, SolverKind.PG_EXTRA):
            cell.solver.name = solver
            try:
                outcome = run_experiment(cell, problem=prob, graph=graph, oracle=oracle)
                entry[solver.value] = iterations_to_gap(outcome.rows, target)
            except DivergenceError:
                entry[solver.value] = None
        entry["datos_faster"] = entry[SolverKind.GLOBAL_DATOS.value] is not None and (
            entry[SolverKind.PG_EXTRA.value] is None
            or entry[SolverKind.GLOBAL_DATOS.value] < entry[SolverKind.PG_EXTRA.value]
        )
        logger.info("[harness] p=%g: global_datos %s, pg_extra %s", p, entry["global_datos"], entry["pg_extra"])
        report.append(entry)
    return report


# ---------- output ----------


def write_outcome(outcome: RunOutcome, out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    write_csv(out_dir / "metrics.csv", METRICS_HEADER, (row.as_csv_row() for row in outcome.rows))
    write_json(out_dir / "summary.json", outcome.summary.model_dump(mode="json"))
    return out_dir
