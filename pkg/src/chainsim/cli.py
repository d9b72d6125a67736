"""Command-line entry points.

Verbs: run (single experiment), sweep (parallel policy x seed grid),
accept (acceptance suites), trace-gen (write a trace CSV),
predict-eval (forecaster RMSE table).  Flags override config-file values,
which override built-in defaults.  Exit code 2 marks a validation problem.
"""

from __future__ import annotations

import sys

import click

from . import acceptance
from .config import ConfigError, default_config, dump_config, load_config, merge_overrides, resolve
from .predictors import ForecasterConfig, evaluate_rmse, rate_series
from .runner import build_trace, run_experiment
from .workload import TraceError, save_trace_csv


def _load(config_path: str | None, overrides: dict) -> dict:
    cfg = load_config(config_path) if config_path else default_config()
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return merge_overrides(cfg, overrides) if overrides else cfg


@click.group()
def main() -> None:
    """Serverless function-chain cluster simulator."""


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      default=None, help="JSON config file; flags override its values.")(fn)
    fn = click.option("--policy", "policies", multiple=True,
                      help="Policy to run (repeatable): bline sbatch rscale bpred fifer.")(fn)
    fn = click.option("--seed", "seeds", multiple=True, type=int, help="Seed (repeatable).")(fn)
    fn = click.option("--rate", type=float, default=None, help="Poisson arrival rate, req/s.")(fn)
    fn = click.option("--trace", "trace_kind", default=None,
                      type=click.Choice(["poisson", "diurnal", "spike", "csv"]),
                      help="Workload kind.")(fn)
    fn = click.option("--csv-path", default=None, help="Trace CSV for --trace csv.")(fn)
    fn = click.option("--mix", default=None, help="Workload mix: heavy, medium, light.")(fn)
    fn = click.option("--horizon", type=float, default=None, help="Trace horizon in ms.")(fn)
    fn = click.option("--out", "out_dir", default=None, help="Output directory.")(fn)
    return fn


def _build_overrides(policies, seeds, rate, trace_kind, csv_path, mix, horizon, out_dir) -> dict:
    o: dict = {}
    if rate is not None:
        o["workload.rate"] = rate
    if trace_kind is not None:
        o["workload.kind"] = trace_kind
    if csv_path is not None:
        o["workload.csv_path"] = csv_path
    if mix is not None:
        o["workload.mix"] = mix
    if horizon is not None:
        o["workload.horizon_ms"] = horizon
    if out_dir is not None:
        o["output_dir"] = out_dir
    if policies:
        o["policies"] = list(policies)
    if seeds:
        o["seeds"] = list(seeds)
    return o


@main.command()
@_common_options
def run(config_path, policies, seeds, rate, trace_kind, csv_path, mix, horizon, out_dir):
    """Run one experiment: a report per (policy, seed) plus a comparison table."""
    try:
        cfg = _load(config_path, _build_overrides(policies, seeds, rate, trace_kind,
                                                  csv_path, mix, horizon, out_dir))
        rc = resolve(cfg)
        result = run_experiment(rc, parallel=0)
    except (ConfigError, TraceError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    for rep in result.reports:
        click.echo(f"{rep.policy} seed {rep.seed}: slo={rep.slo_violation_pct:.2f}% "
                   f"containers={rep.avg_containers:.1f} p99={rep.latency_p99:.0f}ms")
    click.echo(f"wrote {len(result.files)} files to {result.out_dir}")


@main.command()
@_common_options
@click.option("--workers", type=int, default=4, help="Parallel worker processes.")
def sweep(config_path, policies, seeds, rate, trace_kind, csv_path, mix, horizon, out_dir, workers):
    """Run the policy x seed grid in a parallel worker pool."""
    try:
        cfg = _load(config_path, _build_overrides(policies, seeds, rate, trace_kind,
                                                  csv_path, mix, horizon, out_dir))
        rc = resolve(cfg)
        result = run_experiment(rc, parallel=workers)
    except (ConfigError, TraceError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    click.echo(f"{len(result.reports)} cells -> {result.out_dir}")


@main.command()
@click.option("--suite", default="all", help=f"One of: {', '.join(acceptance.SUITES)}.")
def accept(suite):
    """Evaluate the acceptance criteria; non-zero exit on any failure."""
    try:
        results = acceptance.run_suite(suite)
    except KeyError as e:
        click.echo(f"error: {e.args[0]}", err=True)
        sys.exit(2)
    failed = 0
    for r in results:
        click.echo(r.line())
        failed += 0 if r.passed else 1
    if failed:
        click.echo(f"{failed} criterion(s) failed", err=True)
        sys.exit(1)
    click.echo(f"all {len(results)} criteria passed")


@main.command("trace-gen")
@_common_options
@click.option("--output", "output_path", required=True, help="Destination CSV.")
def trace_gen(config_path, policies, seeds, rate, trace_kind, csv_path, mix, horizon,
              out_dir, output_path):
    """Generate an arrival trace and export it as CSV."""
    try:
        cfg = _load(config_path, _build_overrides(policies, seeds, rate, trace_kind,
                                                  csv_path, mix, horizon, out_dir))
        rc = resolve(cfg)
        trace = build_trace(cfg, rc.mixes, rc.seeds[0])
        save_trace_csv(trace, output_path)
    except (ConfigError, TraceError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    click.echo(f"{len(trace)} arrivals ({trace.average_rate():.1f} req/s) -> {output_path}")


@main.command("predict-eval")
@_common_options
@click.option("--split", type=float, default=0.6, help="Training fraction for learned kinds.")
def predict_eval(config_path, policies, seeds, rate, trace_kind, csv_path, mix, horizon,
                 out_dir, split):
    """Report one-step-ahead RMSE for every forecaster on the configured trace."""
    try:
        cfg = _load(config_path, _build_overrides(policies, seeds, rate, trace_kind,
                                                  csv_path, mix, horizon, out_dir))
        rc = resolve(cfg)
        trace = build_trace(cfg, rc.mixes, rc.seeds[0])
        series = rate_series([t for t, _ in trace.events], trace.horizon,
                             float(cfg["predictor"]["window_ms"]))
        rows = []
        for kind in ("mwa", "ewma", "linreg", "logreg", "lstm"):
            rmse, _ = evaluate_rmse(ForecasterConfig(kind=kind), series, split=split)
            rows.append((kind, rmse))
    except (ConfigError, TraceError, ValueError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    for kind, rmse in sorted(rows, key=lambda r: r[1]):
        click.echo(f"{kind:<8} rmse={rmse:.3f} req/s")


@main.command("show-config")
def show_config():
    """Print the fully-populated default configuration."""
    click.echo(dump_config(default_config()), nl=False)


if __name__ == "__main__":
    main()
