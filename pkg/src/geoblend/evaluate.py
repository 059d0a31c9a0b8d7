"""Sensor-level five-fold cross-validation and the Table-1-style report.

Folds partition sensors (never rows), so test locations are unseen during
training. Metrics are computed on the log scale and labeled as such. Wall
times are recorded per (model, group, fold) cell but serialized to a
separate timing CSV so the metrics report is bit-reproducible under a fixed
seed.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import frk as frk_mod
from . import kriging as uk_mod
from . import nngp as nngp_mod
from .covariance import CovarianceParams
from .dataset import DEFAULT_TREND, ObservationTable, trend_matrix
from .errors import GeoblendError, UsageError
from .features import FeatureGroupSpec, build_feature_matrix
from .kriging import prediction_interval
from .ml import EnnConfig, RandomForestConfig, SvrConfig, fit_enn, fit_forest, fit_regression, fit_svr, tune_svr

GEO_MODELS = ("uk", "nngp", "frk")
ML_MODELS = ("reg", "rf", "svr", "enn")
ALL_MODELS = GEO_MODELS + ML_MODELS
INTERVAL_MODELS = ("uk", "nngp", "frk", "reg", "rf")  # svr/enn report no coverage

N_FOLDS = 5
TARGET_SCALE = "log_pm25"


@dataclass
class FoldPlan:
    seed: int
    assignment: dict  # sensor_id -> fold

    @property
    def n_folds(self) -> int:
        return N_FOLDS

    def sensors_in_fold(self, fold: int) -> set:
        return {s for s, f in self.assignment.items() if f == fold}

    def fold_sizes(self) -> list[int]:
        sizes = [0] * N_FOLDS
        for f in self.assignment.values():
            sizes[f] += 1
        return sizes


def make_folds(sensor_ids, seed: int) -> FoldPlan:
    """Uniform random sensor permutation chunked into five near-equal folds."""
    ids = sorted(str(s) for s in set(sensor_ids))
    if len(ids) < N_FOLDS:
        raise UsageError(f"need at least {N_FOLDS} sensors for {N_FOLDS}-fold CV, got {len(ids)}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    assignment = {}
    for fold, chunk in enumerate(np.array_split(perm, N_FOLDS)):
        for idx in chunk:
            assignment[ids[idx]] = fold
    return FoldPlan(seed=seed, assignment=assignment)


def _check_lengths(Y, Yhat):
    Y = np.asarray(Y, dtype=np.float64)
    Yhat = np.asarray(Yhat, dtype=np.float64)
    if Y.shape != Yhat.shape or Y.ndim != 1:
        raise ValueError("Y and Yhat must be 1-d arrays of equal length")
    if Y.size == 0:
        raise ValueError("empty metric input")
    return Y, Yhat


def rmse(Y, Yhat) -> float:
    Y, Yhat = _check_lengths(Y, Yhat)
    return float(np.sqrt(np.mean((Y - Yhat) ** 2)))


def smape(Y, Yhat) -> float:
    """Symmetric MAPE in percent: 100/n * sum |y - yhat| / (|y| + |yhat|).

    Pairs with |y| + |yhat| = 0 contribute 0 by convention; this variant
    maxes out at 100%.
    """
    Y, Yhat = _check_lengths(Y, Yhat)
    denom = np.abs(Y) + np.abs(Yhat)
    terms = np.where(denom > 0, np.abs(Y - Yhat) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(100.0 * np.mean(terms))


def mad(Y, Yhat) -> float:
    Y, Yhat = _check_lengths(Y, Yhat)
    return float(np.mean(np.abs(Y - Yhat)))


def correlation(Y, Yhat) -> float | None:
    """Pearson correlation; None (reported missing) when either side is constant."""
    Y, Yhat = _check_lengths(Y, Yhat)
    if np.ptp(Y) == 0 or np.ptp(Yhat) == 0:
        return None
    return float(np.corrcoef(Y, Yhat)[0, 1])


def coverage(Y, intervals) -> float:
    """Percent of observations inside their [lo, hi] interval."""
    lo, hi = (np.asarray(a, dtype=np.float64) for a in intervals)
    Y = np.asarray(Y, dtype=np.float64)
    if lo.shape != Y.shape or hi.shape != Y.shape:
        raise ValueError("interval arrays must match Y in length")
    if np.any(lo > hi):
        raise ValueError("malformed interval: lo > hi")
    return float(100.0 * np.mean((Y >= lo) & (Y <= hi)))


@dataclass
class ReportRow:
    model: str
    group: int
    fold: int
    n_test: int
    rmse: float | None = None
    smape_percent: float | None = None
    mad: float | None = None
    cor: float | None = None
    coverage_percent: float | None = None
    wall_time_seconds: float | None = None
    error: str | None = None


METRIC_COLUMNS = ["model", "group", "fold", "n_test", "rmse", "smape_percent", "mad", "cor", "coverage_percent", "scale"]


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def ok(self) -> bool:
        return all(r.error is None for r in self.rows)

    def to_dataframe(self) -> pd.DataFrame:
        recs = []
        for r in self.rows:
            recs.append(
                {
                    "model": r.model,
                    "group": r.group,
                    "fold": r.fold,
                    "n_test": r.n_test,
                    "rmse": r.rmse,
                    "smape_percent": r.smape_percent,
                    "mad": r.mad,
                    "cor": r.cor,
                    "coverage_percent": r.coverage_percent,
                    "scale": TARGET_SCALE,
                }
            )
        return pd.DataFrame(recs, columns=METRIC_COLUMNS)

    def to_csv(self, path) -> None:
        self.to_dataframe().to_csv(path, index=False, float_format="%.10g")

    def timing_to_csv(self, path) -> None:
        recs = [
            {"model": r.model, "group": r.group, "fold": r.fold,
             "wall_time_seconds": r.wall_time_seconds, "error": r.error or ""}
            for r in self.rows
        ]
        pd.DataFrame(recs, columns=["model", "group", "fold", "wall_time_seconds", "error"]).to_csv(
            path, index=False, float_format="%.6f"
        )

    def mean_over_folds(self) -> pd.DataFrame:
        df = self.to_dataframe()
        grouped = df.groupby(["model", "group"], as_index=False).agg(
            rmse=("rmse", "mean"),
            smape_percent=("smape_percent", "mean"),
            mad=("mad", "mean"),
            cor=("cor", "mean"),
            coverage_percent=("coverage_percent", "mean"),
            n_test=("n_test", "sum"),
            folds=("fold", "count"),
        )
        times = {}
        for r in self.rows:
            if r.wall_time_seconds is not None:
                times.setdefault((r.model, r.group), []).append(r.wall_time_seconds)
        grouped["time_seconds"] = [
            float(np.mean(times.get((m, g), [np.nan]))) for m, g in zip(grouped["model"], grouped["group"])
        ]
        return grouped

    def render_table(self) -> str:
        """Plain-text table in the benchmark's column order:
        RMSE, SMAPE, MAD, Cor, 95% Cov, Time."""
        df = self.mean_over_folds()
        header = f"{'Model':<8}{'Group':>6}{'RMSE':>10}{'SMAPE':>10}{'MAD':>10}{'Cor':>9}{'95% Cov':>9}{'Time':>11}"
        lines = [f"(metrics on the {TARGET_SCALE} scale; Time = mean fit+predict seconds per fold)", header, "-" * len(header)]
        for _, r in df.sort_values(["group", "model"]).iterrows():
            cov_txt = f"{r['coverage_percent']:.1f}%" if pd.notna(r["coverage_percent"]) else "-"
            cor_txt = f"{r['cor']:.4f}" if pd.notna(r["cor"]) else "-"
            time_txt = f"{r['time_seconds']:.2f}s" if pd.notna(r["time_seconds"]) else "-"
            lines.append(
                f"{r['model']:<8}{int(r['group']):>6}{r['rmse']:>10.4f}{r['smape_percent']:>9.3f}%"
                f"{r['mad']:>10.4f}{cor_txt:>9}{cov_txt:>9}{time_txt:>11}"
            )
        return "\n".join(lines)


@dataclass
class BenchmarkConfig:
    seed: int = 0
    k_nno: int = 10
    nno_lag: int = 1
    m_neighbors: int = 15
    with_hour: bool = False
    trend: tuple = DEFAULT_TREND
    metric: str = "haversine"
    uk_n_max: int = uk_mod.DEFAULT_N_MAX
    frk_spatial_split: tuple = (4, 16)  # desk-scale default; CLI can raise it
    frk_n_temporal: int = 8
    svr: SvrConfig = field(default_factory=SvrConfig)
    rf: RandomForestConfig = field(default_factory=RandomForestConfig)
    enn: EnnConfig = field(default_factory=EnnConfig)
    tune_svr: bool = False  # nested 3-fold grid search inside each training fold
    geo_init: CovarianceParams | None = None
    n_starts: int = 1
    features_dump: str | None = None


def parse_selection(models, groups) -> list[tuple[str, int]]:
    """Cross the requested models and groups, keeping valid combinations.

    Geostatistical models run in group 1 only; ML models run in any group
    (groups 1 and 2 carry the same lon/lat features for them). Unknown keys
    raise; an empty valid intersection raises.
    """
    for m in models:
        if m not in ALL_MODELS:
            raise UsageError(f"unknown model key {m!r}; choose from {ALL_MODELS}")
    for g in groups:
        if g not in (1, 2, 3, 4):
            raise UsageError(f"unknown group {g}; choose from 1-4")
    cells = []
    for m in models:
        for g in groups:
            if m in ML_MODELS or g == 1:
                cells.append((m, g))
    if not cells:
        raise UsageError("no valid (model, group) combinations in the selection "
                         "(geostatistical models pair with group 1 only)")
    return cells


def _cell_seed(base: int, model: str, group: int, fold: int) -> int:
    return base + 1009 * ALL_MODELS.index(model) + 101 * group + fold


def _fit_predict_geo(model_key, train: ObservationTable, test: ObservationTable, config: BenchmarkConfig):
    X = train.trend_matrix(config.trend)
    X0 = test.trend_matrix(config.trend)
    init = config.geo_init or CovarianceParams(
        sigma_s=float(np.std(train.log_pm25)) or 1.0, rho_s=50.0, rho_t=5.0,
        nugget=0.1 * (float(np.var(train.log_pm25)) or 1.0),
    )
    if model_key == "uk":
        model = uk_mod.fit_mle(train.points(), X, train.log_pm25, init, metric=config.metric,
                               n_starts=config.n_starts, seed=config.seed, n_max=config.uk_n_max)
    elif model_key == "nngp":
        model = nngp_mod.fit(train.points(), X, train.log_pm25, m=config.m_neighbors, init=init,
                             metric=config.metric, n_starts=config.n_starts, seed=config.seed)
    else:
        all_pts = (np.concatenate([train.lon, test.lon]), np.concatenate([train.lat, test.lat]),
                   np.concatenate([train.hour, test.hour]).astype(float))
        basis = frk_mod.build_basis(frk_mod.bounds_of(all_pts), spatial_split=config.frk_spatial_split,
                                    n_temporal=config.frk_n_temporal)
        model = frk_mod.fit(train.points(), X, train.log_pm25, basis, metric=config.metric,
                            n_starts=config.n_starts, seed=config.seed)
    mean, var = model.predict(test.points(), X0)
    lo, hi = prediction_interval(mean, var)
    return mean, (lo, hi), np.arange(len(test))


def _fit_predict_ml(model_key, group, fold, train, test, config: BenchmarkConfig, nngp_source, dump_prefix=None):
    spec = FeatureGroupSpec(
        group=group, k_nno=config.k_nno, nno_lag=config.nno_lag,
        kriging_source=nngp_source, nngp_trend=config.trend,
        with_hour=config.with_hour, metric=config.metric,
    )
    # both matrices look up neighbors in the training table only; training
    # targets exclude their own sensor so features match the test-time view
    fm_train = build_feature_matrix(spec, train.points(), train, exclude_sensor_ids=train.sensor_id)
    fm_test = build_feature_matrix(spec, test.points(), train)
    if dump_prefix is not None:
        fm_train.to_csv(f"{dump_prefix}_train.csv")
        fm_test.to_csv(f"{dump_prefix}_test.csv")
    y_train = train.log_pm25[fm_train.kept_idx]
    seed = _cell_seed(config.seed, model_key, group, fold)
    if fm_train.X.shape[0] == 0 or fm_test.X.shape[0] == 0:
        raise GeoblendError("no usable rows after neighbor exclusion")

    intervals = None
    if model_key == "reg":
        model = fit_regression(fm_train.X, y_train)
        mean = model.predict(fm_test.X)
        intervals = model.predict_interval(fm_test.X)
    elif model_key == "rf":
        cfg = replace(config.rf, seed=seed)
        model = fit_forest(fm_train.X, y_train, cfg)
        mean = model.predict(fm_test.X)
        intervals = model.predict_interval(fm_test.X)
    elif model_key == "svr":
        cfg = tune_svr(fm_train.X, y_train, config.svr, seed=seed) if config.tune_svr else config.svr
        model = fit_svr(fm_train.X, y_train, cfg)
        mean = model.predict(fm_test.X)
    else:
        cfg = replace(config.enn, seed=seed, member_seeds=None)
        model = fit_enn(fm_train.X, y_train, cfg)
        mean = model.predict(fm_test.X)
    return mean, intervals, fm_test.kept_idx


def run_benchmark(table: ObservationTable, cells, plan: FoldPlan, config: BenchmarkConfig | None = None) -> EvalReport:
    """Fit and score every requested (model, group) cell in every fold."""
    config = config or BenchmarkConfig()
    report = EvalReport()
    needs_nngp_feature = any(g == 4 and m in ML_MODELS for m, g in cells)

    for fold in range(plan.n_folds):
        test_sensors = plan.sensors_in_fold(fold)
        train_sensors = set(plan.assignment) - test_sensors
        if test_sensors & train_sensors:
            raise GeoblendError("leakage audit failed: train/test sensor sets overlap")
        train = table.restrict_sensors(train_sensors)
        test = table.restrict_sensors(test_sensors)
        assert not set(train.sensor_id.astype(str)) & set(test.sensor_id.astype(str))

        # the group-4 feature model is shared across that fold's ML cells;
        # its fit time is charged to each of them (it is part of their pipeline)
        nngp_source = None
        nngp_fit_seconds = 0.0
        if needs_nngp_feature:
            t_nngp = time.perf_counter()
            init = config.geo_init or CovarianceParams(
                sigma_s=float(np.std(train.log_pm25)) or 1.0, rho_s=50.0, rho_t=5.0,
                nugget=0.1 * (float(np.var(train.log_pm25)) or 1.0),
            )
            nngp_source = nngp_mod.fit(
                train.points(), train.trend_matrix(config.trend), train.log_pm25,
                m=config.m_neighbors, init=init, metric=config.metric,
                n_starts=config.n_starts, seed=config.seed,
            )
            nngp_fit_seconds = time.perf_counter() - t_nngp

        for model_key, group in sorted(cells, key=lambda c: (c[1], ALL_MODELS.index(c[0]))):
            t0 = time.perf_counter()
            try:
                if model_key in GEO_MODELS:
                    mean, intervals, kept = _fit_predict_geo(model_key, train, test, config)
                else:
                    dump_prefix = None
                    if config.features_dump:
                        dump_prefix = f"{config.features_dump}/features_g{group}_fold{fold}_{model_key}"
                    mean, intervals, kept = _fit_predict_ml(
                        model_key, group, fold, train, test, config, nngp_source, dump_prefix
                    )
                y_true = test.log_pm25[kept]
                extra = nngp_fit_seconds if (group == 4 and model_key in ML_MODELS) else 0.0
                row = ReportRow(
                    model=model_key, group=group, fold=fold, n_test=int(y_true.size),
                    rmse=rmse(y_true, mean), smape_percent=smape(y_true, mean), mad=mad(y_true, mean),
                    cor=correlation(y_true, mean),
                    coverage_percent=coverage(y_true, intervals) if intervals is not None else None,
                    wall_time_seconds=time.perf_counter() - t0 + extra,
                )
            except (GeoblendError, ValueError, np.linalg.LinAlgError) as exc:
                warnings.warn(f"cell ({model_key}, group {group}, fold {fold}) failed: {exc}", RuntimeWarning)
                row = ReportRow(model=model_key, group=group, fold=fold, n_test=0,
                                wall_time_seconds=time.perf_counter() - t0, error=str(exc))
            report.rows.append(row)
    return report
