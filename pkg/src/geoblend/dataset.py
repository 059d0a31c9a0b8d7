"""Canonical cleaned-observation table and its CSV round-trip.

One row per (sensor_id, hour): coordinates, corrected PM2.5 and its floored
natural log. The CSV format is the stable interchange surface between the
``ingest`` step and everything downstream (header
``sensor_id,hour,lon,lat,pm25_corrected,log_pm25``, floats at 10 significant
digits).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import DataError, UsageError

CSV_COLUMNS = ["sensor_id", "hour", "lon", "lat", "pm25_corrected", "log_pm25"]
FLOAT_FORMAT = "%.10g"

TREND_COLUMNS = ("intercept", "lon", "lat", "hour")
DEFAULT_TREND = ("intercept", "lon", "lat")


@dataclass
class ObservationTable:
    """Column-array view of cleaned hourly observations."""

    sensor_id: np.ndarray
    hour: np.ndarray
    lon: np.ndarray
    lat: np.ndarray
    pm25_corrected: np.ndarray
    log_pm25: np.ndarray

    def __post_init__(self):
        self.sensor_id = np.asarray(self.sensor_id, dtype=object)
        self.hour = np.asarray(self.hour, dtype=np.int64)
        for name in ("lon", "lat", "pm25_corrected", "log_pm25"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.float64))
        lengths = {len(getattr(self, c)) for c in CSV_COLUMNS}
        if len(lengths) != 1:
            raise DataError("observation columns have unequal lengths")

    def __len__(self) -> int:
        return self.hour.shape[0]

    def sensors(self) -> np.ndarray:
        return np.unique(self.sensor_id.astype(str))

    def subset(self, mask) -> "ObservationTable":
        return ObservationTable(*(getattr(self, c)[mask] for c in CSV_COLUMNS))

    def restrict_sensors(self, sensor_set) -> "ObservationTable":
        wanted = set(sensor_set)
        mask = np.fromiter((s in wanted for s in self.sensor_id), dtype=bool, count=len(self))
        return self.subset(mask)

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.lon, self.lat, self.hour.astype(np.float64)

    def trend_matrix(self, trend=DEFAULT_TREND) -> np.ndarray:
        return trend_matrix(self.lon, self.lat, self.hour.astype(np.float64), trend)

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame({c: getattr(self, c) for c in CSV_COLUMNS})

    def to_csv(self, path) -> None:
        self.to_dataframe().to_csv(path, index=False, float_format=FLOAT_FORMAT)

    @classmethod
    def from_dataframe(cls, df: pd.DataFrame) -> "ObservationTable":
        missing = [c for c in CSV_COLUMNS if c not in df.columns]
        if missing:
            raise DataError(f"observations table is missing columns: {missing}")
        return cls(*(df[c].to_numpy() for c in CSV_COLUMNS))

    @classmethod
    def from_csv(cls, path) -> "ObservationTable":
        try:
            df = pd.read_csv(path, dtype={"sensor_id": str})
        except (OSError, ValueError, pd.errors.ParserError) as exc:
            raise DataError(f"cannot read observations from {path}: {exc}") from exc
        return cls.from_dataframe(df)


def trend_matrix(lon, lat, hour, trend=DEFAULT_TREND) -> np.ndarray:
    """Assemble the kriging trend design from named columns."""
    cols = []
    for name in trend:
        if name == "intercept":
            cols.append(np.ones_like(lon))
        elif name == "lon":
            cols.append(lon)
        elif name == "lat":
            cols.append(lat)
        elif name == "hour":
            cols.append(np.asarray(hour, dtype=np.float64))
        else:
            raise UsageError(f"unknown trend column {name!r}; choose from {TREND_COLUMNS}")
    return np.column_stack(cols)
