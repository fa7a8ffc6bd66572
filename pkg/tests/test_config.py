import pytest

from app.config import Settings, load_experiment, load_sweep
from app.exceptions import ConfigurationError
from app.models import ProblemKind, SolverKind

SWEEP = (
    "[graph]\nm = 4\np = 0.1, 0.5 , 0.9\n\n"
    "[problem]\nkind = elastic_net\nn = 5\nd = 3\n\n"
    "[solver]\nname = global_datos, local_datos, pg_extra\niters = 5\n\n"
    "[output]\nout = sweep_out\n"
)


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_load_experiment(lasso_cfg):
    cfg = load_experiment(lasso_cfg)
    assert cfg.graph.m == 5 and cfg.graph.p == 0.6
    assert cfg.problem.kind == ProblemKind.ELASTIC_NET
    assert cfg.solver.name == SolverKind.GLOBAL_DATOS
    assert cfg.solver.alpha_init == pytest.approx(0.1)
    assert cfg.solver.delta == 0.9
    assert cfg.graph.c == pytest.approx(1 / 3)


def test_defaults_and_inline_comments(tmp_path):
    cfg = load_experiment(write(tmp_path, "[solver]\niters = 7  # short run\n"))
    assert cfg.solver.iters == 7
    assert cfg.graph.m == 20
    assert cfg.output.stride == 1


def test_overrides_win_and_none_is_skipped(lasso_cfg):
    cfg = load_experiment(lasso_cfg, {"solver.name": "local_datos", "graph.p": 0.9, "solver.iters": None})
    assert cfg.solver.name == SolverKind.LOCAL_DATOS
    assert cfg.graph.p == 0.9
    assert cfg.solver.iters == 50


def test_unknown_solver_lists_the_valid_ones(lasso_cfg):
    with pytest.raises(ConfigurationError) as err:
        load_experiment(lasso_cfg, {"solver.name": "nosuch"})
    message = str(err.value)
    assert "nosuch" in message
    for solver in SolverKind:
        assert solver.value in message


def test_unknown_key_is_named(tmp_path):
    with pytest.raises(ConfigurationError, match="solver.stepsize"):
        load_experiment(write(tmp_path, "[solver]\nstepsize = 3\n"))


def test_unknown_section(tmp_path):
    with pytest.raises(ConfigurationError, match="unknown section"):
        load_experiment(write(tmp_path, "[plotting]\ncolor = red\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        load_experiment(tmp_path / "absent.cfg")


@pytest.mark.parametrize(
    "section,line",
    [
        ("graph", "c = 0.5"),
        ("graph", "p = 0"),
        ("solver", "delta = 1.5"),
        ("problem", "kind = custom"),
        ("problem", "a = 3\nb = 1"),
        ("output", "stride = 0"),
    ],
)
def test_out_of_range_values(tmp_path, section, line):
    with pytest.raises(ConfigurationError):
        load_experiment(write(tmp_path, f"[{section}]\n{line}\n"))


def test_sweep_grid(tmp_path):
    sweep = load_sweep(write(tmp_path, SWEEP))
    assert sweep.ps == [0.1, 0.5, 0.9]
    assert sweep.solvers == [SolverKind.GLOBAL_DATOS, SolverKind.LOCAL_DATOS, SolverKind.PG_EXTRA]
    cells = sweep.cells()
    assert len(cells) == 9
    assert cells[0].output.out == "sweep_out/global_datos_p0.1"
    assert {(c.solver.name, c.graph.p) for c in cells} == {
        (s, p) for s in sweep.solvers for p in sweep.ps
    }
    assert sweep.base.graph.m == 4


def test_sweep_rejects_empty_lists(tmp_path):
    text = SWEEP.replace("p = 0.1, 0.5 , 0.9", "p =")
    with pytest.raises(ConfigurationError):
        load_sweep(write(tmp_path, text))
    text = SWEEP.replace("name = global_datos, local_datos, pg_extra", "name = ")
    with pytest.raises(ConfigurationError):
        load_sweep(write(tmp_path, text))


def test_sweep_rejects_unknown_solver(tmp_path):
    with pytest.raises(ConfigurationError, match="valid solvers"):
        load_sweep(write(tmp_path, SWEEP.replace("pg_extra", "sonata")))


def test_settings_read_the_environment(monkeypatch):
    monkeypatch.setenv("DATOS_WORKERS", "3")
    monkeypatch.setenv("DATOS_LOG_LEVEL", "DEBUG")
    settings = Settings()
    assert settings.workers == 3
    assert settings.log_level == "DEBUG"
    assert settings.divergence_threshold == 1e12
