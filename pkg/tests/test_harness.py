import json
import math

import numpy as np
import pytest

from app.exceptions import DivergenceError, NumericalError
from app.models import ErgodicTracker, SolverKind
from app.schemas import METRICS_HEADER, ExperimentConfig
from optim.harness import (
    PG_EXTRA_GRID,
    baseline_report,
    build_graph,
    build_problem,
    iterations_to_gap,
    run_experiment,
    write_outcome,
)
from optim.metrics import consensus_error, update_ergodic
from optim.netgraph import erdos_renyi, write_graph_file


def lasso_config(**solver):
    return ExperimentConfig.model_validate({
        "graph": {"m": 5, "p": 0.6, "seed": 0},
        "problem": {"kind": "elastic_net", "n": 20, "d": 10, "lam": 0.1, "seed": 0},
        "solver": {"iters": 50, "seed": 1, **solver},
    })


def csv_rows(outcome):
    return [row.as_csv_row() for row in outcome.rows]


# ---------- run_experiment ----------


def test_global_run_records_every_iteration():
    outcome = run_experiment(lasso_config())
    assert [row.k for row in outcome.rows] == list(range(1, 51))
    assert outcome.rows[-1].gap < outcome.rows[0].gap
    assert outcome.summary.iterations == 50
    assert outcome.summary.oracle_converged
    assert math.isfinite(outcome.summary.ergodic_gap)


def test_reference_matches_global_per_row():
    g = run_experiment(lasso_config())
    r = run_experiment(lasso_config(name="reference"))
    np.testing.assert_allclose([row.gap for row in r.rows], [row.gap for row in g.rows], rtol=1e-8, atol=1e-12)


def test_zero_iterations_gives_no_rows():
    outcome = run_experiment(lasso_config(iters=0))
    assert outcome.rows == []
    assert outcome.summary.final_gap is None


def test_stride_keeps_last_row():
    cfg = lasso_config()
    cfg.output.stride = 7
    outcome = run_experiment(cfg)
    assert [row.k for row in outcome.rows] == [7, 14, 21, 28, 35, 42, 49, 50]


def test_communication_ledgers():
    for row in run_experiment(lasso_config()).rows:
        assert (row.vec_rounds, row.scal_rounds, row.bcasts) == (2 * row.k, 0, row.k)
    for row in run_experiment(lasso_config(name="local_datos")).rows:
        assert (row.vec_rounds, row.scal_rounds, row.bcasts) == (2 * row.k, 2 * row.k, 0)
    for row in run_experiment(lasso_config(name="pg_extra", pg_extra_alpha=0.01)).rows:
        assert (row.vec_rounds, row.scal_rounds, row.bcasts) == (row.k, 0, 0)
        assert row.ls_trials == 0


def test_global_alpha_min_is_non_increasing():
    cfg = lasso_config(alpha_inv=0.5)
    alphas = [row.alpha_min for row in run_experiment(cfg).rows]
    assert all(b <= a for a, b in zip(alphas, alphas[1:]))
    assert alphas[-1] < 2.0


def test_gaps_stay_non_negative():
    for row in run_experiment(lasso_config(iters=100)).rows:
        assert row.gap >= -1e-9 * (1.0 + abs(row.gap))


def test_runs_are_deterministic():
    assert csv_rows(run_experiment(lasso_config())) == csv_rows(run_experiment(lasso_config()))


def test_divergence_carries_partial_rows():
    with pytest.raises(DivergenceError) as err:
        run_experiment(lasso_config(), divergence_threshold=1e-3)
    assert err.value.k == 1
    assert err.value.rows == []


def test_pg_extra_tuned_stepsize_comes_from_the_grid():
    cfg = lasso_config(name="pg_extra", iters=20)
    outcome = run_experiment(cfg)
    prob = build_problem(cfg.problem, 5)
    scale = outcome.summary.pg_extra_alpha * prob.lipschitz_hint()
    assert any(math.isclose(scale, s, rel_tol=1e-12) for s in PG_EXTRA_GRID)


def test_keep_alphas_for_local_run():
    outcome = run_experiment(lasso_config(name="local_datos", iters=10), keep_alphas=True)
    assert len(outcome.alphas) == 10
    assert all(a.shape == (5,) and np.all(a > 0) for a in outcome.alphas)


def test_covariance_run_stays_in_the_cone():
    cfg = ExperimentConfig.model_validate({
        "graph": {"m": 3, "p": 1.0, "seed": 0},
        "problem": {"kind": "covariance", "n": 50, "d": 2, "a": 0.1, "b": 10.0, "seed": 0},
        "solver": {"iters": 20, "seed": 2},
    })
    outcome = run_experiment(cfg)
    assert all(row.excluded == 0 and math.isfinite(row.gap) for row in outcome.rows)


def test_graph_file_takes_precedence(tmp_path):
    g = erdos_renyi(4, 0.7, 5)
    path = tmp_path / "g.txt"
    write_graph_file(g, path)
    cfg = ExperimentConfig.model_validate({"graph": {"m": 9, "file": str(path)}})
    assert build_graph(cfg.graph) == g


def test_write_outcome(tmp_path):
    outcome = run_experiment(lasso_config(iters=5))
    out = write_outcome(outcome, tmp_path / "run")
    lines = (out / "metrics.csv").read_text().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    assert len(lines) == 6
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["solver"]["name"] == "global_datos"
    assert summary["diverged"] is False


def test_iterations_to_gap():
    rows = run_experiment(lasso_config()).rows
    assert iterations_to_gap(rows, math.inf) == 1
    assert iterations_to_gap(rows, -1.0) is None


def test_baseline_report_shape():
    report = baseline_report(lasso_config(iters=30), ps=(0.5,), target=1e-2)
    assert len(report) == 1
    entry = report[0]
    assert entry["p"] == 0.5
    assert set(entry) == {"p", SolverKind.GLOBAL_DATOS.value, SolverKind.PG_EXTRA.value, "datos_faster"}
    assert isinstance(entry["datos_faster"], bool)


# ---------- metrics ----------


def test_consensus_error_examples():
    assert consensus_error(np.ones((3, 4))) == 0.0
    assert consensus_error(np.array([[0.0], [2.0]])) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_consensus_error_two_pass():
    X = np.random.default_rng(0).standard_normal((6, 4))
    total = 0.0
    for j in range(X.shape[1]):
        mean = sum(X[:, j]) / X.shape[0]
        total += sum((v - mean) ** 2 for v in X[:, j])
    assert consensus_error(X) == pytest.approx(math.sqrt(total), abs=1e-12)


def test_ergodic_first_call_copies():
    T = np.arange(6.0).reshape(2, 3)
    t = update_ergodic(ErgodicTracker(), 0.5, T, -T)
    np.testing.assert_array_equal(t.Tbar, T)
    np.testing.assert_array_equal(t.Sbar, -T)
    assert t.theta == 0.5


def test_ergodic_equal_weights_is_the_mean():
    rng = np.random.default_rng(1)
    Ts = [rng.standard_normal((2, 2)) for _ in range(7)]
    t = ErgodicTracker()
    for T in Ts:
        t = update_ergodic(t, 0.25, T, T)
    np.testing.assert_allclose(t.Tbar, np.mean(Ts, axis=0), atol=1e-12)


def test_ergodic_random_weights_match_direct_sum():
    rng = np.random.default_rng(2)
    Ts = [rng.standard_normal((3, 2)) for _ in range(10)]
    alphas = rng.uniform(0.01, 1.0, size=10)
    t = ErgodicTracker()
    prev = 0.0
    for a, T in zip(alphas, Ts):
        t = update_ergodic(t, a, T, T)
        assert t.theta > prev
        prev = t.theta
    direct = sum(a * T for a, T in zip(alphas, Ts)) / alphas.sum()
    np.testing.assert_allclose(t.Tbar, direct, atol=1e-12)
    assert float(np.sum(alphas / t.theta)) == pytest.approx(1.0, abs=1e-12)


def test_ergodic_rejects_non_positive_weight():
    with pytest.raises(ValueError):
        update_ergodic(ErgodicTracker(), 0.0, np.zeros((1, 1)), np.zeros((1, 1)))


def test_ergodic_tracker_holds_no_history():
    t = ErgodicTracker()
    T = np.ones((2, 2))
    for _ in range(1000):
        t = update_ergodic(t, 0.1, T, T)
    assert sorted(vars(t)) == ["Sbar", "Tbar", "theta"]
    assert t.theta == pytest.approx(100.0)
    np.testing.assert_allclose(t.Tbar, T)


def test_run_aborts_when_the_oracle_does_not_converge():
    with pytest.raises(NumericalError, match="oracle did not converge"):
        run_experiment(lasso_config(oracle_max_iter=2))
