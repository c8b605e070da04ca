"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, clean, surface,
decompose, synth, render) plus `pipeline` for the orchestrated run and
`validate` for static config checks. Exit codes: 0 success,
1 validation failure, 2 stage failure, 3 I/O failure.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click

from . import __version__
from . import cleaning as cleaning_mod
from . import decomposition as decomp_mod
from . import figures as figures_mod
from . import ingest as ingest_mod
from . import lags as lags_mod
from . import surface as surface_mod
from . import synthetic as synth_mod
from .errors import (
    ArtifactIOError,
    MissingArtifact,
    PushRespError,
    StageFailure,
    ValidationFailed,
)
from .pipeline import (
    apply_override,
    config_from_dict,
    run_pipeline,
    validate_config_dict,
)
from .series import (
    canonical_json,
    read_manifest,
    read_prms,
    series_summary,
    write_manifest,
    write_prms,
)

logger = logging.getLogger(__name__)


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PUSHRESP_THREADS", "1")))
    except ValueError:
        return 1


@click.group()
@click.version_option(__version__, prog_name="pushresp")
def cli():
    """Lag-resolved push-response analysis of event-time quote data."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@cli.command()
@click.option("--venues", "venues_dir", type=click.Path(), default=None,
              help="Directory of per-venue quote CSV files.")
@click.option("--consolidated", type=click.Path(), default=None,
              help="Pre-consolidated quote CSV (skips the venue merge).")
@click.option("--tz", default=ingest_mod.DEFAULT_TZ, show_default=True)
@click.option("--strict/--lenient", default=True,
              help="Fail on malformed records vs. skip and count them.")
@click.option("--out", required=True, type=click.Path())
def ingest(venues_dir, consolidated, tz, strict, out):
    """Parse quote feeds, consolidate the best bid/offer, emit mid series."""
    if bool(venues_dir) == bool(consolidated):
        raise ValidationFailed(["pass exactly one of --venues or --consolidated"])
    if consolidated:
        if not Path(consolidated).exists():
            raise StageFailure("ingest", f"input {consolidated} does not exist")
        series, report = ingest_mod.ingest_consolidated(consolidated, tz=tz, strict=strict)
        source = {"consolidated": str(consolidated)}
    else:
        files = {p.stem.upper(): p for p in sorted(Path(venues_dir).glob("*.csv"))}
        if not files:
            raise StageFailure("ingest", f"no quote files in {venues_dir}")
        series, report = ingest_mod.ingest_files(files, tz=tz, strict=strict)
        source = {"venues_dir": str(venues_dir)}
    write_prms(series, out)
    payload = dict(series_summary(series))
    payload.update({"stage": "ingest", "config": {"tz": tz, "strict": strict, **source},
                    "quality": report.to_dict()})
    write_manifest(out, payload)
    click.echo(f"wrote {out}: {len(series)} events in {len(series.sessions)} sessions")


@cli.command()
@click.option("--in", "input_path", required=True, type=click.Path())
@click.option("--lower-q", default=0.00001, show_default=True)
@click.option("--upper-q", default=0.99999, show_default=True)
@click.option("--jump", default=1.50, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--report", "report_path", type=click.Path(), default=None)
def clean(input_path, lower_q, upper_q, jump, out, report_path):
    """Winsorize increments, then drop intraday jumps."""
    try:
        cfg = cleaning_mod.CleaningConfig(lower_q=lower_q, upper_q=upper_q,
                                          jump_threshold=jump)
    except ValueError as exc:
        raise ValidationFailed([str(exc)]) from exc
    series = read_prms(input_path)
    cleaned, rep = cleaning_mod.clean(series, cfg)
    write_prms(cleaned, out)
    payload = dict(series_summary(cleaned))
    payload.update({
        "stage": "clean",
        "config": {"lower_q": lower_q, "upper_q": upper_q, "jump_threshold": jump},
        "report": rep.to_dict(),
    })
    write_manifest(out, payload)
    if report_path:
        Path(report_path).write_text(
            canonical_json(rep.to_dict()) + "\n", encoding="utf-8"
        )
    click.echo(
        f"wrote {out}: kept {rep.n_output}/{rep.n_input} events "
        f"(retention {rep.retention_ratio:.6f})"
    )


@cli.command()
@click.option("--in", "input_path", required=True, type=click.Path())
@click.option("--grid", default="default", show_default=True,
              help="'default' or 'z_min:z_max:step'.")
@click.option("--lags", default="short", show_default=True,
              help="'short', 'long', 'file:<path>', or comma-separated values.")
@click.option("--nmin", default=200, show_default=True)
@click.option("--threads", default=None, type=int,
              help="Worker threads (default: PUSHRESP_THREADS or 1).")
@click.option("--out", required=True, type=click.Path())
@click.option("--out-moments", type=click.Path(), default=None,
              help="Moments CSV path (default: <out> with .moments.csv).")
def surface(input_path, grid, lags, nmin, threads, out, out_moments):
    """Bin standardized pushes and aggregate conditional response means."""
    bin_grid = _parse_grid(grid, nmin)
    lag_list = lags_mod.parse_lag_selector(lags)
    threads = threads if threads is not None else _default_threads()
    series = read_prms(input_path)
    rows = lags_mod.compute_moments_table(series, lag_list)
    moments_path = out_moments or str(Path(out).with_suffix("")) + ".moments.csv"
    lags_mod.write_moments_csv(rows, moments_path)
    surf = surface_mod.accumulate_surface(series, rows, bin_grid, threads=threads)
    surface_mod.write_surface_csv(surf, out)
    payload = surface_mod.surface_manifest(surf)
    payload.update({"stage": "surface",
                    "config": {"grid": bin_grid.to_dict(), "lags": list(lag_list)}})
    write_manifest(out, payload)
    click.echo(
        f"wrote {out}: {len(surf.lags)} lags, "
        f"{int(surf.valid.sum())} valid cells"
    )


def _parse_grid(grid: str, nmin: int) -> surface_mod.BinGrid:
    if grid == "default":
        return surface_mod.BinGrid(n_min_support=nmin)
    parts = grid.split(":")
    if len(parts) != 3:
        raise ValidationFailed([f"cannot parse grid '{grid}'; want z_min:z_max:step"])
    try:
        z_min, z_max, step = (float(x) for x in parts)
    except ValueError as exc:
        raise ValidationFailed([f"cannot parse grid '{grid}': {exc}"]) from exc
    return surface_mod.BinGrid(z_min=z_min, z_max=z_max, step=step, n_min_support=nmin)


@cli.command()
@click.option("--surface", "surface_path", required=True, type=click.Path())
@click.option("--bootstrap", "n_replicates", default=1000, show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--local-index", default="eq319", show_default=True,
              type=click.Choice(decomp_mod.LOCAL_INDEX_CHOICES))
@click.option("--boot-weights", default="equal", show_default=True,
              type=click.Choice(["equal", "selection"]),
              help="Recompute weighting for drawn pairs in each replicate.")
@click.option("--out-heatmap", required=True, type=click.Path())
@click.option("--out-summary", required=True, type=click.Path())
def decompose(surface_path, n_replicates, seed, local_index, boot_weights,
              out_heatmap, out_summary):
    """Split the surface into even/odd parts and attach bootstrap bands."""
    surf = surface_mod.read_surface_csv(surface_path, read_manifest(surface_path))
    pairs = decomp_mod.decompose(surf, local_index)
    boot = decomp_mod.BootstrapConfig(
        n_replicates=n_replicates, seed=seed, recompute_weights=boot_weights
    )
    summaries = decomp_mod.summarize(pairs, boot)
    decomp_mod.write_heatmap_csv(pairs, out_heatmap)
    decomp_mod.write_summary_csv(summaries, out_summary)
    meta = {
        "stage": "decompose",
        "config": {
            "local_index": local_index,
            "bootstrap": {"n_replicates": n_replicates, "seed": seed,
                          "recompute_weights": boot_weights},
        },
    }
    write_manifest(out_heatmap, meta)
    write_manifest(out_summary, meta)
    click.echo(
        f"wrote {out_heatmap} ({len(pairs)} pairs) and "
        f"{out_summary} ({len(summaries)} lags)"
    )


@cli.command()
@click.option("--kind", required=True, type=click.Choice(synth_mod.KINDS))
@click.option("--n", "n_events", required=True, type=int)
@click.option("--sessions", "n_sessions", default=1, show_default=True)
@click.option("--lag", "inject_lag", default=50, show_default=True)
@click.option("--phi", default=0.0, show_default=True)
@click.option("--asym-gain", default=0.0, show_default=True)
@click.option("--tick", default=0.01, show_default=True)
@click.option("--increments", default="gauss", show_default=True,
              type=click.Choice(["gauss", "coin"]))
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def synth(kind, n_events, n_sessions, inject_lag, phi, asym_gain, tick,
          increments, seed, out):
    """Generate a controlled synthetic event-time series."""
    spec = synth_mod.SyntheticSpec(
        kind=kind, n_events=n_events, n_sessions=n_sessions, tick=tick,
        inject_lag=inject_lag, phi=phi, asym_gain=asym_gain, seed=seed,
        increments=increments,
    )
    series = synth_mod.generate(spec)
    write_prms(series, out)
    payload = dict(series_summary(series))
    payload.update({"stage": "synth", "config": {"synth": spec.to_dict()}})
    write_manifest(out, payload)
    click.echo(f"wrote {out}: {len(series)} events in {len(series.sessions)} sessions")


@cli.command()
@click.option("--kind", required=True, type=click.Choice(figures_mod.FIGURE_KINDS))
@click.option("--surface", "surface_path", type=click.Path(), default=None)
@click.option("--heatmap", "heatmap_path", type=click.Path(), default=None)
@click.option("--summary", "summary_path", type=click.Path(), default=None)
@click.option("--vmax", default=0.5, show_default=True,
              help="Color scale bound for surface views.")
@click.option("--out", required=True, type=click.Path())
def render(kind, surface_path, heatmap_path, summary_path, vmax, out):
    """Draw one figure as a self-contained SVG from CSV artifacts."""
    spec = figures_mod.FigureSpec(
        kind=kind, out=out, surface=surface_path, heatmap=heatmap_path,
        summary=summary_path, vmax=vmax,
    )
    figures_mod.render_figure(spec)
    click.echo(f"wrote {out}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--set", "overrides", multiple=True,
              help="Override a config entry, e.g. --set synth.seed=9 "
                   "(values parsed as JSON when possible).")
@click.option("--threads", default=None, type=int)
@click.option("--deterministic/--no-deterministic", default=None)
@click.option("--force", is_flag=True, help="Re-run every stage even if fresh.")
def pipeline(config_path, overrides, threads, deterministic, force):
    """Run source -> clean -> surface -> decompose -> render, resumably."""
    raw = _load_raw_config(config_path)
    for item in overrides:
        apply_override(raw, item)
    if threads is not None:
        raw["threads"] = threads
    elif "threads" not in raw:
        raw["threads"] = _default_threads()
    if deterministic is not None:
        raw["deterministic"] = deterministic
    cfg = config_from_dict(raw)
    statuses = run_pipeline(cfg, force=force)
    for s in statuses:
        click.echo(f"{s.stage:<22} {s.status:<8} {', '.join(s.outputs)}")


@cli.command()
@click.option("--config", "config_path", required=True, type=click.Path())
def validate(config_path):
    """Statically check a pipeline config without touching data."""
    raw = _load_raw_config(config_path)
    problems = validate_config_dict(raw)
    if problems:
        for p in problems:
            click.echo(f"problem: {p}")
        raise ValidationFailed(problems)
    click.echo("config ok")


def _load_raw_config(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ArtifactIOError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationFailed([f"config {path} is not valid JSON: {exc}"]) from exc


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"error: {exc.format_message()}", err=True)
        return 1
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        return 1
    except (ValidationFailed, ArtifactIOError, MissingArtifact, StageFailure) as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except PushRespError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
