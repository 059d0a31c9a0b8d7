import io

import numpy as np
import pytest

from geoblend.covariance import CovarianceParams
from geoblend.errors import UsageError
from geoblend.evaluate import (
    BenchmarkConfig,
    correlation,
    coverage,
    mad,
    make_folds,
    parse_selection,
    rmse,
    run_benchmark,
    smape,
)
from geoblend.ml import EnnConfig, RandomForestConfig, SvrConfig
from geoblend.synthdata import gp_dataset


class TestMakeFolds:
    def test_ten_sensors_fold_sizes_two(self):
        plan = make_folds([f"s{i}" for i in range(10)], seed=0)
        assert plan.fold_sizes() == [2, 2, 2, 2, 2]

    def test_deterministic_given_seed(self):
        ids = [f"s{i}" for i in range(23)]
        assert make_folds(ids, seed=3).assignment == make_folds(ids, seed=3).assignment
        assert make_folds(ids, seed=3).assignment != make_folds(ids, seed=4).assignment

    def test_1015_sensors_exact_split(self):
        plan = make_folds([f"pa{i:04d}" for i in range(1015)], seed=1)
        assert plan.fold_sizes() == [203, 203, 203, 203, 203]

    def test_partition_property(self):
        ids = [f"s{i}" for i in range(17)]
        plan = make_folds(ids, seed=9)
        assert sorted(plan.assignment) == sorted(ids)
        assert max(plan.fold_sizes()) - min(plan.fold_sizes()) <= 1

    def test_too_few_sensors_rejected(self):
        with pytest.raises(UsageError):
            make_folds(["a", "b", "c"], seed=0)


class TestMetrics:
    def test_rmse_examples(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([0.0, 3.0], [4.0, 0.0]) == pytest.approx(np.sqrt(12.5), abs=1e-12)

    def test_rmse_scale_equivariance_exact(self):
        y = np.array([1.0, 2.5, -3.0])
        yh = np.array([0.5, 2.0, -1.0])
        assert rmse(2.0 * y, 2.0 * yh) == 2.0 * rmse(y, yh)

    def test_rmse_length_mismatch(self):
        with pytest.raises(ValueError):
            rmse([1.0], [1.0, 2.0])

    def test_smape_examples(self):
        assert smape([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert smape([1.0], [3.0]) == pytest.approx(50.0, abs=1e-12)
        assert smape([0.0], [0.0]) == 0.0

    def test_smape_bounded_by_100(self):
        rng = np.random.default_rng(0)
        y, yh = rng.normal(0, 1, 50), rng.normal(0, 1, 50)
        assert 0.0 <= smape(y, yh) <= 100.0

    def test_mad_examples(self):
        assert mad([1.0], [1.0]) == 0.0
        assert mad([0.0, 3.0], [4.0, 0.0]) == pytest.approx(3.5, abs=1e-15)

    def test_mad_never_exceeds_rmse(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            y, yh = rng.normal(0, 2, 30), rng.normal(0, 2, 30)
            assert mad(y, yh) <= rmse(y, yh) + 1e-12

    def test_rmse_squared_identity(self):
        rng = np.random.default_rng(2)
        y, yh = rng.normal(0, 1, 40), rng.normal(0, 1, 40)
        assert rmse(y, yh) ** 2 * 40 == pytest.approx(np.sum((y - yh) ** 2), rel=1e-12)

    def test_correlation_affine_invariance(self):
        y = np.array([0.0, 1.0, 2.0, 5.0])
        assert correlation(y, 2 * y + 3) == pytest.approx(1.0, abs=1e-12)
        assert correlation(y, -y) == pytest.approx(-1.0, abs=1e-12)

    def test_correlation_three_point_oracle(self):
        y = np.array([0.0, 1.0, 2.0])
        yh = np.array([0.0, 2.0, 3.0])
        num = np.sum((y - y.mean()) * (yh - yh.mean()))
        den = np.sqrt(np.sum((y - y.mean()) ** 2) * np.sum((yh - yh.mean()) ** 2))
        assert correlation(y, yh) == pytest.approx(num / den, abs=1e-12)

    def test_correlation_constant_is_missing(self):
        assert correlation([1.0, 1.0, 1.0], [0.0, 1.0, 2.0]) is None

    def test_coverage_examples(self):
        y = np.array([0.0, 1.0, 2.0, 3.0])
        assert coverage(y, (y - 1, y + 1)) == 100.0
        lo = np.array([-1.0, 2.0, 1.0, 9.0])
        hi = np.array([1.0, 3.0, 3.0, 10.0])
        assert coverage(y, (lo, hi)) == 50.0

    def test_coverage_malformed_interval(self):
        with pytest.raises(ValueError):
            coverage([1.0], ([2.0], [1.0]))


class TestSelection:
    def test_unknown_model_rejected(self):
        with pytest.raises(UsageError):
            parse_selection(["boost"], [2])

    def test_unknown_group_rejected(self):
        with pytest.raises(UsageError):
            parse_selection(["reg"], [7])

    def test_geo_models_only_group1(self):
        cells = parse_selection(["uk", "svr"], [1, 3])
        assert ("uk", 1) in cells and ("svr", 3) in cells and ("svr", 1) in cells
        assert ("uk", 3) not in cells

    def test_empty_intersection_rejected(self):
        with pytest.raises(UsageError):
            parse_selection(["uk"], [3])


@pytest.fixture(scope="module")
def fixture_table():
    params = CovarianceParams(sigma_s=0.8, rho_s=30.0, rho_t=4.0, nugget=0.05)
    return gp_dataset(20, 6, params, beta=(2.0, 0.0, 0.0), bbox=(0.0, 1.0, 0.0, 1.0), seed=3)


def fast_config(seed=0):
    return BenchmarkConfig(
        seed=seed,
        k_nno=3,
        m_neighbors=5,
        n_starts=1,
        rf=RandomForestConfig(n_trees=25, seed=seed),
        svr=SvrConfig(epsilon=0.05, lam=10.0, tol=1e-4),
        enn=EnnConfig(hidden_members=((8,), (12,)), epochs=10, seed=seed),
        frk_spatial_split=(4,),
        frk_n_temporal=2,
    )


class TestRunBenchmark:
    def test_single_cell_smoke(self, fixture_table):
        plan = make_folds(fixture_table.sensors(), seed=0)
        report = run_benchmark(fixture_table, [("reg", 1)], plan, fast_config())
        assert report.ok()
        assert len(report.rows) == 5  # one per fold
        agg = report.mean_over_folds()
        assert len(agg) == 1
        for col in ("rmse", "smape_percent", "mad", "cor", "coverage_percent"):
            assert np.isfinite(agg[col].iloc[0])
        assert report.render_table()

    def test_interval_models_report_coverage_others_dont(self, fixture_table):
        plan = make_folds(fixture_table.sensors(), seed=0)
        report = run_benchmark(fixture_table, [("rf", 3), ("svr", 3)], plan, fast_config())
        assert report.ok()
        df = report.to_dataframe()
        assert df[df.model == "rf"]["coverage_percent"].notna().all()
        assert df[df.model == "svr"]["coverage_percent"].isna().all()

    def test_seed_reproducibility_bytes(self, fixture_table):
        plan = make_folds(fixture_table.sensors(), seed=7)
        outs = []
        for _ in range(2):
            report = run_benchmark(fixture_table, [("reg", 2), ("rf", 3)], plan, fast_config(seed=7))
            buf = io.StringIO()
            report.to_csv(buf)
            outs.append(buf.getvalue())
        assert outs[0] == outs[1]

    def test_geostat_cell_runs(self, fixture_table):
        plan = make_folds(fixture_table.sensors(), seed=0)
        report = run_benchmark(fixture_table, [("nngp", 1)], plan, fast_config())
        assert report.ok()
        df = report.to_dataframe()
        assert df["coverage_percent"].notna().all()

    def test_group4_runs_with_nngp_feature(self, fixture_table):
        plan = make_folds(fixture_table.sensors(), seed=0)
        report = run_benchmark(fixture_table, [("reg", 4)], plan, fast_config())
        assert report.ok()
        assert (report.to_dataframe()["n_test"] > 0).all()

    def test_failed_cell_recorded_not_fatal(self, fixture_table):
        plan = make_folds(fixture_table.sensors(), seed=0)
        config = fast_config()
        config.k_nno = 0  # invalid for group 3: the cell fails, the run survives
        with pytest.warns(RuntimeWarning):
            report = run_benchmark(fixture_table, [("reg", 3), ("reg", 2)], plan, config)
        assert not report.ok()
        df = report.to_dataframe()
        assert (df[df.group == 2]["n_test"] > 0).all()
