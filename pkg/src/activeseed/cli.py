"""Command-line front door: execute benchmark manifests, evaluate record
trees, and launch the interactive labeling service.

Output directory resolution, in order: the ACTIVESEED_OUT environment
variable, the --out flag, the manifest's own out_dir.
"""

from __future__ import annotations

import os
import sys
from dataclasses import replace
from pathlib import Path

import click

from .benchmark import evaluate_records, load_manifest, run_manifest
from .data import DataError

__all__ = ["main"]


def _resolve_out(flag_value: str | None, manifest_out: str) -> str:
    env = os.environ.get("ACTIVESEED_OUT")
    if env:
        return env
    if flag_value is not None:
        return flag_value
    return manifest_out


@click.group()
@click.version_option(package_name="activeseed")
def main() -> None:
    """Pool-based active learning: benchmark runs, reports, labeling
    sessions."""


@main.command("run")
@click.option(
    "--manifest",
    "manifest_path",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="Run manifest (JSON).",
)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Output directory (default: the manifest's out_dir).")
@click.option("--seed", type=int, default=None, help="Override the manifest seed.")
@click.option("--jobs", type=int, default=None,
              help="Parallel cells (default: the manifest's jobs).")
@click.option("--timing/--no-timing", "timing", default=None,
              help="Record wall-clock times per round (off by default for "
                   "byte-stable reruns).")
def cmd_run(manifest_path, out_dir, seed, jobs, timing) -> None:
    """Run every (dataset, fold, strategy, kernel) cell of a manifest."""
    try:
        manifest = load_manifest(manifest_path)
    except (ValueError, DataError, OSError) as e:
        raise click.ClickException(str(e)) from None
    if seed is not None:
        manifest = replace(manifest, seed=seed)
    if jobs is not None:
        manifest = replace(manifest, jobs=jobs)
    if timing is not None:
        manifest = replace(manifest, record_timing=timing)
    out = _resolve_out(out_dir, manifest.out_dir)

    def progress(outcome):
        if outcome.ok:
            click.echo(f"ok   {outcome.key}")
        else:
            click.echo(f"FAIL {outcome.key}: {outcome.error}")

    report = run_manifest(manifest, out_dir=out, progress=progress)
    n_fail = len(report.failures)
    click.echo(
        f"{len(report.outcomes) - n_fail}/{len(report.outcomes)} cells ok; "
        f"records under {out}"
    )
    if not report.ok:
        sys.exit(1)


@main.command("evaluate")
@click.option("--records", "records_dir", type=click.Path(file_okay=False),
              default=None,
              help="Record tree to evaluate (default: ACTIVESEED_OUT or ./out).")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Report directory (default: <records>/report).")
@click.option("--alpha", type=click.Choice(["0.05", "0.1"]), default="0.1",
              help="Significance level for the rank tests.")
def cmd_evaluate(records_dir, out_dir, alpha) -> None:
    """Build RP/DUR/AULC tables, learning curves, and CD-plot data from a
    record tree."""
    records = _resolve_out(records_dir, "out")
    try:
        report = evaluate_records(records, out_dir=out_dir, alpha=float(alpha))
    except (DataError, ValueError) as e:
        raise click.ClickException(str(e)) from None
    out = Path(out_dir) if out_dir is not None else Path(records) / "report"
    click.echo(f"datasets: {', '.join(report['datasets'])}")
    click.echo(f"cells:    {', '.join(report['labels'])}")
    if report["gaps"]:
        for gap in report["gaps"]:
            click.echo(f"gap: {gap['dataset']} is missing {gap['cell']}")
    stats = report["statistics"]
    if stats is not None:
        ranks = ", ".join(f"{v:.3f}" for v in stats["mean_ranks"])
        click.echo(f"mean ranks: {ranks}")
        if "friedman" in stats:
            f = stats["friedman"]
            verdict = "reject" if f["reject"] else "keep"
            click.echo(
                f"Friedman chi2 = {f['statistic']:.2f} vs {f['critical']} "
                f"-> {verdict} the null; CD = {stats['cd']:.3f}"
            )
        elif "note" in stats:
            click.echo(f"note: {stats['note']}")
    click.echo(f"report under {out}")


@main.command("serve")
@click.option("--port", type=int, default=8000, help="Listen port.")
@click.option("--host", default="127.0.0.1", help="Bind address.")
@click.option("--checkpoints", "checkpoint_dir",
              type=click.Path(file_okay=False), default=None,
              help="Directory for session transcripts (restored on start).")
@click.option("--static", "static_dir", type=click.Path(file_okay=False),
              default=None, help="Serve a browser UI from this directory at /.")
def cmd_serve(port, host, checkpoint_dir, static_dir) -> None:
    """Serve the labeling session API until terminated."""
    import uvicorn

    from .service import create_app

    app = create_app(checkpoint_dir=checkpoint_dir, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
