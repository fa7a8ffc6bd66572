import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from app.config import get_settings, load_sweep
from app.exceptions import DivergenceError, NumericalError
from app.schemas import METRICS_HEADER, ExperimentConfig
from commands.common import EXIT_NUMERICAL, EXIT_OK, guarded, seed_overrides
from optim.harness import run_experiment, write_outcome
from storage.outputs import write_csv

logger = logging.getLogger(__name__)

SUMMARY_HEADER = ["solver", "p", "final_gap", "final_consensus_err", "status"]


def run_cell(payload: dict, divergence_threshold: float) -> dict:
    """One (solver, p) cell; module-level so worker processes can import it."""
    cfg = ExperimentConfig.model_validate(payload)
    out_dir = Path(cfg.output.out)
    cell = {"solver": cfg.solver.name.value, "p": cfg.graph.p, "final_gap": "", "final_consensus_err": ""}
    try:
        outcome = run_experiment(cfg, divergence_threshold=divergence_threshold)
    except DivergenceError as e:
        write_csv(out_dir / "metrics.csv", METRICS_HEADER, (row.as_csv_row() for row in e.rows or []))
        return {**cell, "status": "diverged"}
    except NumericalError as e:
        logger.warning("[sweep] %s p=%g failed: %s", cell["solver"], cell["p"], e)
        return {**cell, "status": "failed"}
    write_outcome(outcome, out_dir)
    return {
        **cell,
        "final_gap": outcome.summary.final_gap,
        "final_consensus_err": outcome.summary.final_consensus_err,
        "status": "ok",
    }


@click.command("sweep")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="Sweep file.")
@click.option("--seed", type=int, default=None)
@click.option("--iters", type=int, default=None)
@click.option("--out", default=None)
@click.option("--stride", type=int, default=None)
@click.option("--workers", type=int, default=None, help="Worker processes (default DATOS_WORKERS).")
@guarded
def command(config_path, seed, iters, out, stride, workers):
    """Run the solver x edge-probability grid, one output directory per cell."""
    overrides = {"solver.iters": iters, "output.out": out, "output.stride": stride, **seed_overrides(seed)}
    sweep = load_sweep(config_path, overrides)
    settings = get_settings()
    workers = workers or settings.workers
    cells = sweep.cells()
    payloads = [cfg.model_dump(mode="json") for cfg in cells]
    logger.info("[sweep] %d cells on %d worker(s)", len(cells), workers)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, payloads, [settings.divergence_threshold] * len(payloads)))
    else:
        results = [run_cell(payload, settings.divergence_threshold) for payload in payloads]

    table = [[r[key] for key in SUMMARY_HEADER] for r in results]
    summary_path = write_csv(Path(sweep.base.output.out) / "sweep_summary.csv", SUMMARY_HEADER, table)
    for r in results:
        click.echo(f"{r['solver']:>13} p={r['p']:<4g} {r['status']:>8} gap={r['final_gap']}")
    click.echo(f"summary -> {summary_path}")
    return EXIT_NUMERICAL if any(r["status"] != "ok" for r in results) else EXIT_OK
