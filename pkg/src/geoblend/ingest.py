"""Raw-sensor cleaning pipeline: QC filters, channel checks, hourly
averaging, bias correction, and the hourly observation table.

Three steps, applied in order:

1. drop rows with sentinel temperatures (2147483447, -224, or any reading
   beyond +-200 F: the listed sentinels are examples of a wider failure
   mode) or relative humidity outside [0, 100];
2. drop rows whose A/B channels disagree (more than 5 ug/m3 apart AND more
   than 61% apart relative to their mean, the EPA-style dual threshold),
   average the surviving channels, then average sub-hourly rows per
   (sensor, UTC hour), requiring a minimum number of sub-hourly rows;
3. correct the hourly average for humidity bias:
   pm25 = 0.524 * PA_avg - 0.0852 * RH + 5.72.

The corrected value can go negative; the log transform floors it at
1.0 ug/m3 so log_pm25 stays nonnegative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from .dataset import ObservationTable
from .errors import DataError

TEMP_SENTINELS = (2147483447.0, -224.0)
TEMP_ABS_LIMIT_F = 200.0
CHANNEL_ABS_UGM3 = 5.0
CHANNEL_REL = 0.61
LOG_FLOOR_UGM3 = 1.0
DEFAULT_MIN_HOURLY_ROWS = 10

RAW_COLUMNS = ("sensor_id", "timestamp", "pm25_a", "pm25_b", "temperature", "rh", "lon", "lat")


@dataclass
class IngestConfig:
    min_hourly_rows: int = DEFAULT_MIN_HOURLY_ROWS
    channel_abs: float = CHANNEL_ABS_UGM3
    channel_rel: float = CHANNEL_REL
    log_floor: float = LOG_FLOOR_UGM3
    column_map: dict = field(default_factory=dict)  # canonical name -> input column


@dataclass
class IngestReport:
    """Row counts per pipeline rule, for the drop-audit artifact."""

    parsed: int = 0
    dropped_temperature: int = 0
    dropped_rh: int = 0
    dropped_channel: int = 0
    hours_dropped_min_rows: int = 0
    rows_missing_metadata: int = 0
    observations: int = 0

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"


def _parse_timestamp(value) -> float:
    """Unix seconds from a numeric or ISO-8601 value."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    text = str(value).strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError as exc:
        raise DataError(f"unparseable timestamp {value!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def read_raw(path, column_map: dict | None = None, fmt: str | None = None) -> pd.DataFrame:
    """Load raw records from NDJSON or CSV into the canonical columns.

    ``column_map`` renames input columns to canonical names
    (e.g. {"rh": "humidity"} reads humidity as rh). Format is inferred from
    the extension unless given explicitly.
    """
    path = str(path)
    if fmt is None:
        fmt = "csv" if path.endswith(".csv") else "ndjson"
    try:
        if fmt == "csv":
            df = pd.read_csv(path)
        elif fmt == "ndjson":
            df = pd.read_json(path, lines=True)
        else:
            raise DataError(f"unknown raw format {fmt!r} (csv or ndjson)")
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if df.empty:
        return pd.DataFrame(columns=RAW_COLUMNS)

    rename = {src: canon for canon, src in (column_map or {}).items()}
    df = df.rename(columns=rename)
    missing = [c for c in RAW_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path} is missing required columns {missing} (declare a column mapping?)")
    df = df[list(RAW_COLUMNS)].copy()
    df["timestamp"] = df["timestamp"].map(_parse_timestamp)
    for col in ("pm25_a", "pm25_b", "temperature", "rh", "lon", "lat"):
        df[col] = pd.to_numeric(df[col], errors="coerce")
    df["sensor_id"] = df["sensor_id"].astype(str)
    return df


def qc_filter(records: pd.DataFrame, report: IngestReport | None = None) -> pd.DataFrame:
    """Step 1: drop sentinel temperatures and out-of-range humidity."""
    t = records["temperature"]
    bad_temp = t.isin(TEMP_SENTINELS) | (t.abs() > TEMP_ABS_LIMIT_F) | t.isna()
    rh = records["rh"]
    bad_rh = (rh < 0.0) | (rh > 100.0) | rh.isna()
    if report is not None:
        report.dropped_temperature += int(bad_temp.sum())
        report.dropped_rh += int((bad_rh & ~bad_temp).sum())
    return records[~(bad_temp | bad_rh)].copy()


def channel_consistency(records: pd.DataFrame, config: IngestConfig | None = None,
                        report: IngestReport | None = None) -> pd.DataFrame:
    """Step 2a: drop rows where channels A and B disagree; average survivors.

    A row is inconsistent when the channels differ by more than the absolute
    threshold AND by more than the relative threshold against their mean
    (floored at 1 ug/m3 so near-zero readings are not flagged as divergent).
    """
    config = config or IngestConfig()
    a, b = records["pm25_a"], records["pm25_b"]
    diff = (a - b).abs()
    mean = (a + b) / 2.0
    inconsistent = (diff > config.channel_abs) & (diff / mean.clip(lower=1.0) > config.channel_rel)
    inconsistent |= a.isna() | b.isna()
    if report is not None:
        report.dropped_channel += int(inconsistent.sum())
    out = records[~inconsistent].copy()
    out["pa_avg"] = (out["pm25_a"] + out["pm25_b"]) / 2.0
    return out


def hourly_average(records: pd.DataFrame, config: IngestConfig | None = None,
                   report: IngestReport | None = None) -> pd.DataFrame:
    """Step 2b: average PA_avg and RH per (sensor, UTC hour).

    Hours backed by fewer than ``min_hourly_rows`` sub-hourly rows are
    dropped: a near-empty hour is not a trustworthy average. Hour indices
    count from the earliest record in the input.
    """
    config = config or IngestConfig()
    if records.empty:
        return pd.DataFrame(columns=["sensor_id", "hour", "pa_avg", "rh", "lon", "lat", "n_rows"])
    df = records.copy()
    ts = df["timestamp"]
    if not pd.api.types.is_numeric_dtype(ts):
        ts = ts.map(_parse_timestamp)
    df["hour_abs"] = np.floor(ts.to_numpy(dtype=np.float64) / 3600.0).astype(np.int64)
    grouped = df.groupby(["sensor_id", "hour_abs"], sort=True).agg(
        pa_avg=("pa_avg", "mean"),
        rh=("rh", "mean"),
        lon=("lon", "mean"),
        lat=("lat", "mean"),
        n_rows=("pa_avg", "size"),
    ).reset_index()
    thin = grouped["n_rows"] < config.min_hourly_rows
    if report is not None:
        report.hours_dropped_min_rows += int(thin.sum())
    grouped = grouped[~thin].copy()
    grouped["hour"] = grouped["hour_abs"] - int(df["hour_abs"].min())
    return grouped.drop(columns=["hour_abs"])


def apply_correction(pa_avg, rh):
    """Humidity bias correction: 0.524 * PA_avg - 0.0852 * RH + 5.72.

    RH must already be within [0, 100]; anything else means the QC step was
    skipped, which is a pipeline-order bug worth failing loudly on.
    """
    pa_avg = np.asarray(pa_avg, dtype=np.float64)
    rh = np.asarray(rh, dtype=np.float64)
    if np.any(rh < 0.0) or np.any(rh > 100.0):
        raise DataError("apply_correction received RH outside [0, 100]; run qc_filter first")
    out = 0.524 * pa_avg - 0.0852 * rh + 5.72
    return float(out) if out.ndim == 0 else out


def to_observations(hourly: pd.DataFrame, config: IngestConfig | None = None,
                    report: IngestReport | None = None) -> ObservationTable:
    """Step 3: correct, log-transform (floored), attach sensor coordinates."""
    config = config or IngestConfig()
    if hourly.empty:
        return ObservationTable(np.array([], dtype=object), np.array([], dtype=np.int64),
                                np.array([]), np.array([]), np.array([]), np.array([]))
    df = hourly.copy()
    missing = df["lon"].isna() | df["lat"].isna()
    if report is not None:
        report.rows_missing_metadata += int(missing.sum())
    df = df[~missing]
    corrected = apply_correction(df["pa_avg"].to_numpy(), df["rh"].to_numpy())
    log_pm = np.log(np.maximum(corrected, config.log_floor))
    table = ObservationTable(
        sensor_id=df["sensor_id"].to_numpy(dtype=object),
        hour=df["hour"].to_numpy(dtype=np.int64),
        lon=df["lon"].to_numpy(dtype=np.float64),
        lat=df["lat"].to_numpy(dtype=np.float64),
        pm25_corrected=corrected,
        log_pm25=log_pm,
    )
    if report is not None:
        report.observations = len(table)
    return table


def run_pipeline(frames, config: IngestConfig | None = None) -> tuple[ObservationTable, IngestReport]:
    """All three steps over one or more raw frames."""
    config = config or IngestConfig()
    report = IngestReport()
    frames = [frames] if isinstance(frames, pd.DataFrame) else list(frames)
    raw = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=RAW_COLUMNS)
    report.parsed = len(raw)
    clean = qc_filter(raw, report)
    consistent = channel_consistency(clean, config, report)
    hourly = hourly_average(consistent, config, report)
    table = to_observations(hourly, config, report)
    return table, report
