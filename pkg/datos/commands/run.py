import logging
from pathlib import Path

import click

from app.config import get_settings, load_experiment
from app.exceptions import DivergenceError
from app.schemas import METRICS_HEADER, RunSummary
from commands.common import EXIT_NUMERICAL, guarded, seed_overrides
from optim.harness import run_experiment, write_outcome
from storage.outputs import write_csv, write_json

logger = logging.getLogger(__name__)


@click.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Experiment file.")
@click.option("--solver", default=None, help="global_datos | local_datos | pg_extra | reference")
@click.option("--graph-p", type=float, default=None, help="Erdos-Renyi edge probability.")
@click.option("--graph-file", default=None, help="Edge-list graph file ('m <count>' header).")
@click.option("--seed", type=int, default=None, help="Seed for the graph, the problem and the initial iterates.")
@click.option("--iters", type=int, default=None)
@click.option("--out", default=None, help="Output directory for metrics.csv and summary.json.")
@click.option("--data-file", default=None, help="LIBSVM file for the logistic problem.")
@click.option("--stride", type=int, default=None, help="Record every stride-th iteration.")
@guarded
def command(config_path, solver, graph_p, graph_file, seed, iters, out, data_file, stride):
    """Run one experiment and write its metric table."""
    overrides = {
        "solver.name": solver,
        "graph.p": graph_p,
        "graph.file": graph_file,
        "solver.iters": iters,
        "output.out": out,
        "problem.data_file": data_file,
        "output.stride": stride,
        **seed_overrides(seed),
    }
    cfg = load_experiment(config_path, overrides)
    settings = get_settings()
    out_dir = Path(cfg.output.out)

    try:
        outcome = run_experiment(cfg, divergence_threshold=settings.divergence_threshold)
    except DivergenceError as e:
        rows = e.rows or []
        write_csv(out_dir / "metrics.csv", METRICS_HEADER, (row.as_csv_row() for row in rows))
        partial = RunSummary(
            config=cfg.model_dump(mode="json"), u_star=float("nan"), oracle_converged=True,
            iterations=e.k or 0, diverged=True,
        )
        write_json(out_dir / "summary.json", partial.model_dump(mode="json"))
        click.echo(f"error: {e}; partial output in {out_dir}", err=True)
        return EXIT_NUMERICAL

    write_outcome(outcome, out_dir)
    click.echo(f"{cfg.solver.name.value}: {len(outcome.rows)} rows, final gap {outcome.summary.final_gap} -> {out_dir}")
