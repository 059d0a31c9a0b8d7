"""Feature-group assembly for the non-geostatistical predictors.

Groups: 1 and 2 use (lon, lat); group 3 appends, for each of the k nearest
training sensors with an observation at hour t - lag, the triple
(log_pm25, lon, lat); group 4 appends the NNGP predicted mean at the target.
Neighbors are drawn from the training fold only, and only at the lagged
hour, so no contemporaneous or test-fold value can leak into a feature.
Rows with fewer than k neighbors are padded by repeating the farthest
available neighbor and flagged; rows with none are excluded and counted.

When the targets are themselves training rows (training-design assembly),
pass their sensor ids as ``exclude_sensor_ids``: a target's own sensor is
then dropped from its candidate pool. A held-out location can never see its
own lagged value, so this keeps the training and test feature distributions
aligned; it also avoids the exact lon/lat collinearity a self-neighbor
would inject into linear designs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from . import accel
from .covariance import metric_code
from .dataset import DEFAULT_TREND, ObservationTable, trend_matrix
from .errors import UsageError

VALID_GROUPS = (1, 2, 3, 4)


@dataclass
class FeatureGroupSpec:
    group: int
    k_nno: int = 10
    nno_lag: int = 1
    kriging_source: object | None = None  # fitted NNGP model (group 4)
    nngp_trend: tuple = DEFAULT_TREND
    with_hour: bool = False
    nno_use_distance: bool = False  # replace neighbor coordinates with distance
    metric: str = "haversine"

    def __post_init__(self):
        if self.group not in VALID_GROUPS:
            raise UsageError(f"feature group must be one of {VALID_GROUPS}, got {self.group}")
        if self.group >= 3 and self.k_nno < 1:
            raise ValueError("k_nno must be >= 1 for groups 3 and 4")
        if self.group == 4 and self.kriging_source is None:
            raise UsageError("group 4 needs a fitted NNGP model as kriging_source")

    def column_names(self) -> list[str]:
        cols = ["lon", "lat"]
        if self.with_hour:
            cols.append("hour")
        if self.group >= 3:
            for j in range(1, self.k_nno + 1):
                if self.nno_use_distance:
                    cols += [f"nno{j}_value", f"nno{j}_dist_km"]
                else:
                    cols += [f"nno{j}_value", f"nno{j}_lon", f"nno{j}_lat"]
        if self.group == 4:
            cols.append("nngp_pred")
        return cols


@dataclass
class FeatureMatrix:
    """Assembled design with provenance and exclusion bookkeeping."""

    X: np.ndarray
    columns: list[str]
    kept_idx: np.ndarray  # indices into the requested targets
    padded: np.ndarray  # flagged rows (fewer than k real neighbors)
    n_excluded: int
    report: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        df = pd.DataFrame(self.X, columns=self.columns)
        df.insert(0, "target_index", self.kept_idx)
        df["padded"] = self.padded.astype(int)
        df.to_csv(path, index=False, float_format="%.10g")


class TrainingIndex:
    """Per-hour buckets of training observations, sensors sorted by id."""

    def __init__(self, table: ObservationTable):
        self.buckets: dict[int, tuple] = {}
        ids = table.sensor_id.astype(str)
        for h in np.unique(table.hour):
            mask = table.hour == h
            order = np.argsort(ids[mask], kind="stable")
            self.buckets[int(h)] = (
                ids[mask][order],
                np.ascontiguousarray(table.lon[mask][order]),
                np.ascontiguousarray(table.lat[mask][order]),
                np.ascontiguousarray(table.log_pm25[mask][order]),
            )

    def candidates(self, hour: int):
        return self.buckets.get(int(hour))


def neighbor_lookup(target, hour, train_observations: ObservationTable, k: int, metric: str = "haversine"):
    """The k nearest training sensors with an observation at ``hour``.

    ``target`` is (lon, lat). Returns a list of (sensor_id, log_pm25, lon,
    lat, distance) sorted by distance ascending, ties broken by sensor_id;
    shorter when fewer than k candidates exist.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    index = TrainingIndex(train_observations)
    bucket = index.candidates(hour)
    if bucket is None:
        return []
    ids, lon, lat, value = bucket
    t_lon = np.array([float(target[0])])
    t_lat = np.array([float(target[1])])
    d = accel.cross_distance(t_lon, t_lat, lon, lat, metric_code(metric))[0]
    order = np.argsort(d, kind="stable")[:k]
    return [(ids[i], float(value[i]), float(lon[i]), float(lat[i]), float(d[i])) for i in order]


def build_feature_matrix(
    spec: FeatureGroupSpec,
    targets,
    train_observations: ObservationTable,
    exclude_sensor_ids=None,
) -> FeatureMatrix:
    """Assemble features for a batch of targets (lon, lat, hour arrays).

    Group 3/4 rows whose lagged hour has no usable training observations are
    excluded (their indices are missing from ``kept_idx``). See the module
    docstring for ``exclude_sensor_ids``.
    """
    t_lon, t_lat, t_hour = (np.asarray(a, dtype=np.float64) for a in targets)
    n = t_lon.shape[0]
    base_cols = [t_lon, t_lat] + ([t_hour] if spec.with_hour else [])

    if spec.group <= 2:
        X = np.column_stack(base_cols) if n else np.empty((0, len(base_cols)))
        return FeatureMatrix(X, spec.column_names(), np.arange(n), np.zeros(n, dtype=bool), 0,
                             report={"excluded_no_neighbors": 0, "padded": 0})

    index = TrainingIndex(train_observations)
    k = spec.k_nno
    width = 2 * k if spec.nno_use_distance else 3 * k
    nno = np.full((n, width), np.nan)
    padded = np.zeros(n, dtype=bool)
    kept = np.zeros(n, dtype=bool)
    excl = None if exclude_sensor_ids is None else np.asarray(exclude_sensor_ids).astype(str)

    def nno_block(picks, dists):
        if spec.nno_use_distance:
            return np.stack([value[picks], dists], axis=-1)
        return np.stack([value[picks], lon[picks], lat[picks]], axis=-1)

    lookup_hours = (t_hour - spec.nno_lag).astype(np.int64)
    code = metric_code(spec.metric)
    for h in np.unique(lookup_hours):
        rows = np.nonzero(lookup_hours == h)[0]
        bucket = index.candidates(int(h))
        if bucket is None:
            continue
        ids, lon, lat, value = bucket
        d = accel.cross_distance(t_lon[rows], t_lat[rows], lon, lat, code)
        if excl is not None:
            d = np.where(excl[rows][:, None] == ids[None, :].astype(str), np.inf, d)
        usable = np.isfinite(d).sum(axis=1)
        order = np.argsort(d, axis=1, kind="stable")

        full = usable >= k
        if full.any():
            picks = order[full, :k]
            nno[rows[full]] = nno_block(picks, np.take_along_axis(d[full], picks, axis=1)).reshape(-1, width)
            kept[rows[full]] = True
        for pos in np.nonzero(~full)[0]:  # short rows: pad with the farthest available
            c = int(usable[pos])
            if c == 0:
                continue
            picks = np.concatenate([order[pos, :c], np.repeat(order[pos, c - 1], k - c)])
            nno[rows[pos]] = nno_block(picks, d[pos, picks]).reshape(width)
            padded[rows[pos]] = True
            kept[rows[pos]] = True

    kept_idx = np.nonzero(kept)[0]
    cols = [c[kept_idx] for c in base_cols] + [nno[kept_idx]]
    X = np.column_stack(cols) if kept_idx.size else np.empty((0, len(base_cols) + width))

    if spec.group == 4:
        X0 = trend_matrix(t_lon[kept_idx], t_lat[kept_idx], t_hour[kept_idx], spec.nngp_trend)
        pred_mean, _ = spec.kriging_source.predict((t_lon[kept_idx], t_lat[kept_idx], t_hour[kept_idx]), X0)
        X = np.column_stack([X, pred_mean]) if kept_idx.size else np.empty((0, X.shape[1] + 1))

    report = {"excluded_no_neighbors": int(n - kept_idx.size), "padded": int(padded[kept_idx].sum())}
    return FeatureMatrix(X, spec.column_names(), kept_idx, padded[kept_idx], n - kept_idx.size, report)


def build_features(spec: FeatureGroupSpec, target, train_observations: ObservationTable) -> np.ndarray | None:
    """Feature vector for a single space-time target; None when the row is
    excluded (no lagged neighbors)."""
    lon, lat, hour = (np.array([float(v)]) for v in (target[0], target[1], target[2]))
    fm = build_feature_matrix(spec, (lon, lat, hour), train_observations)
    if fm.kept_idx.size == 0:
        return None
    return fm.X[0]
