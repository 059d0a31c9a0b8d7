"""Command-line entry point: ingest, cv, fit, predict-grid, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every command is deterministic under a fixed seed and fixed inputs; the cv
command writes wall-clock timings to a sidecar CSV so the metrics report
stays byte-reproducible. ``GEOBLEND_THREADS`` caps kernel parallelism and
``GEOBLEND_NUMBA=0`` selects the pure-numpy kernels.
"""

from __future__ import annotations

import sys

import click
import numpy as np

from .dataset import DEFAULT_TREND, ObservationTable
from .errors import DataError, GeoblendError, NumericalError, UsageError
from .evaluate import BenchmarkConfig, EvalReport, ReportRow, make_folds, parse_selection, run_benchmark
from .grid import CA_BOUNDS, GridSpec, load_mask, predict_grid
from .ingest import IngestConfig, read_raw, run_pipeline
from .ml import EnnConfig, RandomForestConfig, SvrConfig


def _parse_column_map(pairs) -> dict:
    mapping = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--col expects canonical=input, got {pair!r}")
        canon, src = pair.split("=", 1)
        mapping[canon.strip()] = src.strip()
    return mapping


def _load_toml_config(path) -> dict:
    try:
        import tomllib  # py311+
    except ImportError:
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc


def _parse_int_list(text) -> list[int]:
    try:
        return [int(tok) for tok in str(text).split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}") from exc


def _parse_hours(text) -> tuple:
    """Hours as a comma list ('14,15') or an inclusive range ('0:23')."""
    if text is None:
        return ()
    text = str(text)
    if ":" in text:
        lo, hi = text.split(":", 1)
        try:
            return tuple(range(int(lo), int(hi) + 1))
        except ValueError as exc:
            raise UsageError(f"bad hour range {text!r}") from exc
    return tuple(_parse_int_list(text))


def _benchmark_config(seed, k_nno, m_neighbors, with_hour, tune_svr, n_trees, trend, features_dump=None) -> BenchmarkConfig:
    trend_cols = tuple(t.strip() for t in trend.split("+")) if trend else DEFAULT_TREND
    return BenchmarkConfig(
        seed=seed,
        k_nno=k_nno,
        m_neighbors=m_neighbors,
        with_hour=with_hour,
        trend=trend_cols,
        tune_svr=tune_svr,
        rf=RandomForestConfig(n_trees=n_trees, seed=seed),
        svr=SvrConfig(),
        enn=EnnConfig(seed=seed),
        features_dump=features_dump,
    )


@click.group()
def cli():
    """Spatiotemporal PM2.5 toolkit: clean sensor data, benchmark predictors,
    draw hourly maps."""


@cli.command("ingest")
@click.option("--input", "inputs", multiple=True, required=True, help="raw NDJSON/CSV file (repeatable)")
@click.option("--format", "fmt", type=click.Choice(["auto", "csv", "ndjson"]), default="auto")
@click.option("--col", "cols", multiple=True, help="column mapping canonical=input (repeatable)")
@click.option("--config", "config_path", default=None, help="TOML config with [ingest] table")
@click.option("--min-hourly-rows", type=int, default=None, help="minimum sub-hourly rows per hour (default 10)")
@click.option("--out", required=True, help="output observations CSV")
def cmd_ingest(inputs, fmt, cols, config_path, min_hourly_rows, out):
    """Clean raw sensor exports into the canonical hourly observations CSV."""
    config = IngestConfig()
    if config_path:
        doc = _load_toml_config(config_path).get("ingest", {})
        config = IngestConfig(
            min_hourly_rows=doc.get("min_hourly_rows", config.min_hourly_rows),
            channel_abs=doc.get("channel_abs", config.channel_abs),
            channel_rel=doc.get("channel_rel", config.channel_rel),
            log_floor=doc.get("log_floor", config.log_floor),
            column_map=doc.get("column_map", {}),
        )
    flag_map = _parse_column_map(cols)
    if flag_map:
        config.column_map = {**config.column_map, **flag_map}
    if min_hourly_rows is not None:
        config.min_hourly_rows = min_hourly_rows

    frames = [read_raw(p, config.column_map, None if fmt == "auto" else fmt) for p in inputs]
    table, report = run_pipeline(frames, config)
    table.to_csv(out)
    report_path = f"{out}.report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_json())
    click.echo(f"wrote {len(table)} observations to {out} (report: {report_path})")
    if len(table) == 0:
        click.echo("warning: no observations survived the pipeline", err=True)


@cli.command("cv")
@click.option("--observations", required=True, help="observations CSV from `ingest`")
@click.option("--models", default="reg,rf,svr,enn", help="comma list from uk,nngp,frk,reg,rf,svr,enn")
@click.option("--groups", default="2,3,4", help="comma list of feature groups 1-4")
@click.option("--seed", type=int, default=0)
@click.option("--k-nno", type=int, default=10, help="nearest neighbor observations per target")
@click.option("--m-neighbors", type=int, default=15, help="NNGP conditioning-set size")
@click.option("--with-hour", is_flag=True, help="add the hour index as an ML feature")
@click.option("--tune-svr", is_flag=True, help="nested 3-fold SVR grid search (slow)")
@click.option("--n-trees", type=int, default=500, help="random-forest size")
@click.option("--trend", default=None, help="geostat trend columns, e.g. intercept+lon+lat")
@click.option("--features-dump", default=None, help="directory for per-fold feature CSV dumps")
@click.option("--out", default="report.csv", help="metrics CSV (deterministic)")
@click.option("--timing", default=None, help="timing CSV (defaults to <out> with .timing.csv)")
def cmd_cv(observations, models, groups, seed, k_nno, m_neighbors, with_hour, tune_svr, n_trees,
           trend, features_dump, out, timing):
    """Sensor-level five-fold cross-validation benchmark."""
    table = ObservationTable.from_csv(observations)
    cells = parse_selection([m.strip() for m in models.split(",") if m.strip()], _parse_int_list(groups))
    plan = make_folds(table.sensors(), seed)
    config = _benchmark_config(seed, k_nno, m_neighbors, with_hour, tune_svr, n_trees, trend, features_dump)
    report = run_benchmark(table, cells, plan, config)
    report.to_csv(out)
    timing_path = timing or f"{out}.timing.csv"
    report.timing_to_csv(timing_path)
    click.echo(report.render_table())
    click.echo(f"metrics: {out}  timing: {timing_path}")
    if not report.ok():
        raise NumericalError("one or more benchmark cells failed; see the timing CSV error column")


@cli.command("fit")
@click.option("--observations", required=True)
@click.option("--model", "model_key", required=True, help="one of uk,nngp,frk,reg,rf,svr,enn")
@click.option("--group", type=int, default=1)
@click.option("--seed", type=int, default=0)
@click.option("--k-nno", type=int, default=10)
@click.option("--m-neighbors", type=int, default=15)
@click.option("--with-hour", is_flag=True)
@click.option("--n-trees", type=int, default=500)
@click.option("--trend", default=None)
@click.option("--out", required=True, help="model JSON path")
def cmd_fit(observations, model_key, group, seed, k_nno, m_neighbors, with_hour, n_trees, trend, out):
    """Fit one model on the full observation table and serialize it."""
    from .grid import _fit_full
    from .serialize import save_model

    table = ObservationTable.from_csv(observations)
    parse_selection([model_key], [group])
    config = _benchmark_config(seed, k_nno, m_neighbors, with_hour, False, n_trees, trend)
    model, _ = _fit_full(table, model_key, group, config)
    save_model(model, out, extra={"model": model_key, "group": group, "observations": str(observations), "seed": seed})
    click.echo(f"wrote {model_key} (group {group}) model to {out}")


@cli.command("predict-grid")
@click.option("--observations", required=True)
@click.option("--model", "model_key", required=True)
@click.option("--group", type=int, default=1)
@click.option("--grid", default=f"{50},{50}", help="nx,ny (default 50,50)")
@click.option("--bounds", default=None, help="lon_min,lon_max,lat_min,lat_max (default California)")
@click.option("--hours", default=None, help="hour list '14,15' or range '0:23' (default: last 24 in data)")
@click.option("--mask", default=None, help="polygon mask JSON (ring list); outside cells emit empty predictions")
@click.option("--seed", type=int, default=0)
@click.option("--k-nno", type=int, default=10)
@click.option("--m-neighbors", type=int, default=15)
@click.option("--with-hour", is_flag=True)
@click.option("--n-trees", type=int, default=500)
@click.option("--trend", default=None)
@click.option("--out", required=True, help="raster CSV path")
def cmd_predict_grid(observations, model_key, group, grid, bounds, hours, mask, seed, k_nno,
                     m_neighbors, with_hour, n_trees, trend, out):
    """Fit on all observations and rasterize hourly prediction maps."""
    table = ObservationTable.from_csv(observations)
    parse_selection([model_key], [group])
    nx_ny = _parse_int_list(grid)
    if len(nx_ny) != 2:
        raise UsageError(f"--grid expects nx,ny, got {grid!r}")
    bbox = CA_BOUNDS
    if bounds is not None:
        parts = [float(tok) for tok in str(bounds).split(",")]
        if len(parts) != 4:
            raise UsageError(f"--bounds expects four numbers, got {bounds!r}")
        bbox = tuple(parts)
    spec = GridSpec(bounds=bbox, nx=nx_ny[0], ny=nx_ny[1], hours=_parse_hours(hours),
                    mask=load_mask(mask) if mask else None)
    config = _benchmark_config(seed, k_nno, m_neighbors, with_hour, False, n_trees, trend)
    raster = predict_grid(table, model_key, group, spec, config)
    raster.to_csv(out, index=False, float_format="%.10g")
    click.echo(f"wrote {len(raster)} raster rows to {out}")


@cli.command("report")
@click.option("--report", "report_path", required=True, help="metrics CSV from `cv`")
@click.option("--timing", default=None, help="timing CSV (optional)")
def cmd_report(report_path, timing):
    """Render a metrics CSV as the benchmark comparison table."""
    import pandas as pd

    try:
        df = pd.read_csv(report_path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read report {report_path}: {exc}") from exc
    times = {}
    if timing:
        tdf = pd.read_csv(timing)
        for _, r in tdf.iterrows():
            times[(r["model"], int(r["group"]), int(r["fold"]))] = float(r["wall_time_seconds"])
    report = EvalReport()
    for _, r in df.iterrows():
        report.rows.append(ReportRow(
            model=str(r["model"]), group=int(r["group"]), fold=int(r["fold"]), n_test=int(r["n_test"]),
            rmse=None if pd.isna(r["rmse"]) else float(r["rmse"]),
            smape_percent=None if pd.isna(r["smape_percent"]) else float(r["smape_percent"]),
            mad=None if pd.isna(r["mad"]) else float(r["mad"]),
            cor=None if pd.isna(r["cor"]) else float(r["cor"]),
            coverage_percent=None if pd.isna(r["coverage_percent"]) else float(r["coverage_percent"]),
            wall_time_seconds=times.get((str(r["model"]), int(r["group"]), int(r["fold"]))),
        ))
    click.echo(report.render_table())


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except UsageError as exc:
        click.echo(f"usage error: {exc}", err=True)
        sys.exit(1)
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        sys.exit(2)
    except (NumericalError, np.linalg.LinAlgError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(3)
    except GeoblendError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
