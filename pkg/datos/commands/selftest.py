"""Fast invariant suite: a handful of cheap checks that catch a broken solver."""
import logging

import click
import numpy as np

from app.models import GlobalState, LocalState, ReferenceState
from commands.common import EXIT_NUMERICAL, EXIT_OK
from optim.linesearch import linesearch
from optim.netgraph import complete_graph, erdos_renyi, metropolis_weights, mixing_matrix, sqrt_operators
from optim.problems import gen_regression_instance, quadratic_ridge_loss
from optim.solvers import davis_yin_reference_step, global_datos_step, local_datos_step

logger = logging.getLogger(__name__)

DELTA = 0.9
ALPHA_INIT = 0.1


def lasso(m: int = 5, d: int = 10, seed: int = 0):
    return gen_regression_instance(m, 20, d, lam=0.1, seed=seed)


def _start(prob, seed: int = 1):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((prob.m, prob.dim)), rng.standard_normal((prob.m, prob.dim))


def check_linesearch() -> tuple[bool, str]:
    for L in (0.1, 1.0, 10.0):
        f = quadratic_ridge_loss(np.sqrt(L / 2.0) * np.eye(1), np.zeros(1))
        x = np.ones(1)
        res = linesearch(10.0, f, x, x, -f.gradient(x), DELTA)
        if not (min(10.0, DELTA / (2.0 * L)) <= res.alpha <= 10.0):
            return False, f"L={L}: alpha {res.alpha} outside the bound"
        if L == 1.0 and (res.alpha != 0.625 or res.trials != 5):
            return False, f"L=1: expected alpha 0.625 after 5 trials, got {res.alpha} after {res.trials}"
    return True, "stepsize bound holds for L in {0.1, 1, 10}"


def check_d_range(iters: int = 100) -> tuple[bool, str]:
    prob = lasso()
    mix = mixing_matrix(metropolis_weights(erdos_renyi(prob.m, 0.6, 0)), 1.0 / 3.0)
    X0, S0 = _start(prob)
    state = GlobalState.initial(X0, S0, ALPHA_INIT)
    for k in range(iters):
        state, _ = global_datos_step(state, prob, mix, DELTA)
        drift = float(np.max(np.abs(state.D.sum(axis=0))))
        if drift > 1e-9 * (1.0 + float(np.max(np.abs(state.D)))):
            return False, f"1'D = {drift:.3e} at k={k + 1}"
    return True, f"1'D = 0 over {iters} iterations"


def check_equivalence(iters: int = 100, inject_fault: bool = False) -> tuple[bool, str]:
    prob = lasso()
    mix = mixing_matrix(metropolis_weights(erdos_renyi(prob.m, 0.6, 0)), 1.0 / 3.0)
    L, M = sqrt_operators(mix, skip_sqrt=inject_fault)
    X0, S0 = _start(prob)
    g = GlobalState.initial(X0, S0, ALPHA_INIT)
    r = ReferenceState.initial(X0, S0, ALPHA_INIT, L, M)
    worst = 0.0
    for _ in range(iters):
        g, _ = global_datos_step(g, prob, mix, DELTA)
        r, _ = davis_yin_reference_step(r, prob, DELTA)
        for a, b in ((g.X, r.X), (g.S, r.S)):
            worst = max(worst, float(np.linalg.norm(a - b)) / (1.0 + float(np.linalg.norm(a))))
    return worst <= 1e-8, f"max relative deviation {worst:.3e}"


def check_complete_graph_collapse(iters: int = 200) -> tuple[bool, str]:
    prob = lasso()
    graph = complete_graph(prob.m)
    mix = mixing_matrix(metropolis_weights(graph), 1.0 / 3.0)
    X0, S0 = _start(prob)
    g = GlobalState.initial(X0, S0, ALPHA_INIT)
    loc = LocalState.initial(X0, S0, ALPHA_INIT)
    worst = 0.0
    for _ in range(iters):
        g, _ = global_datos_step(g, prob, mix, DELTA)
        loc, _ = local_datos_step(loc, prob, mix, graph, DELTA)
        worst = max(worst, float(np.max(np.abs(g.X - loc.X))), float(np.max(np.abs(g.D - loc.D))))
    return worst <= 1e-12, f"max deviation {worst:.3e}"


CHECKS = {
    "linesearch-bound": check_linesearch,
    "d-range": check_d_range,
    "reference-equivalence": check_equivalence,
    "complete-graph-collapse": check_complete_graph_collapse,
}


def run_checks(inject_fault: bool = False) -> dict[str, tuple[bool, str]]:
    results = {}
    for name, check in CHECKS.items():
        try:
            if check is check_equivalence:
                results[name] = check(inject_fault=inject_fault)
            else:
                results[name] = check()
        except Exception as e:
            results[name] = (False, f"{type(e).__name__}: {e}")
        logger.debug("[selftest] %s -> %s", name, results[name])
    return results


@click.command("selftest")
@click.option("--inject-fault", is_flag=True, help="Replace sqrt(W) by W in the reference solver.")
def command(inject_fault):
    """Run the fast invariant suite; exit 0 iff every check passes."""
    results = run_checks(inject_fault=inject_fault)
    for name, (ok, detail) in results.items():
        click.echo(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    passed = sum(ok for ok, _ in results.values())
    logger.info("[selftest] %d/%d checks passed", passed, len(results))
    return EXIT_OK if passed == len(results) else EXIT_NUMERICAL
