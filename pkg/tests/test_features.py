import numpy as np
import pytest

from geoblend.covariance import CovarianceParams, haversine_km
from geoblend.dataset import ObservationTable
from geoblend.errors import UsageError
from geoblend.features import FeatureGroupSpec, build_feature_matrix, build_features, neighbor_lookup
from geoblend.nngp import NngpModel


def small_table():
    """5 sensors on a line, hours 0-2, values encode (sensor, hour)."""
    lons = np.array([0.0, 0.1, 0.25, 0.5, 1.0])
    sensors, hours = 5, 3
    sid = np.repeat([f"s{i}" for i in range(sensors)], hours)
    hour = np.tile(np.arange(hours), sensors)
    lon = np.repeat(lons, hours)
    lat = np.zeros(sensors * hours)
    value = np.array([10.0 * i + h for i in range(sensors) for h in range(hours)])
    return ObservationTable(sid, hour, lon, lat, np.exp(value / 10), value)


@pytest.fixture()
def table():
    return small_table()


@pytest.fixture()
def nngp_source(table):
    params = CovarianceParams(sigma_s=1.0, rho_s=30.0, rho_t=2.0, nugget=0.05)
    X = table.trend_matrix()
    return NngpModel(table.points(), X, table.log_pm25, params, m=5)


class TestNeighborLookup:
    def test_colocated_sensor_first(self, table):
        out = neighbor_lookup((0.25, 0.0), 1, table, k=3)
        assert out[0][0] == "s2"
        assert out[0][4] == 0.0

    def test_order_matches_hand_distances(self, table):
        out = neighbor_lookup((0.0, 0.0), 0, table, k=5)
        assert [o[0] for o in out] == ["s0", "s1", "s2", "s3", "s4"]
        dists = [o[4] for o in out]
        assert dists == sorted(dists)
        assert dists[1] == pytest.approx(haversine_km(0.0, 0.0, 0.1, 0.0), rel=1e-12)

    def test_k_larger_than_available_returns_all(self, table):
        out = neighbor_lookup((0.0, 0.0), 2, table, k=50)
        assert len(out) == 5

    def test_missing_hour_returns_empty(self, table):
        assert neighbor_lookup((0.0, 0.0), 99, table, k=3) == []

    def test_tie_broken_by_sensor_id(self):
        sid = np.array(["b", "a"], dtype=object)
        t = ObservationTable(sid, np.zeros(2, dtype=int), np.array([0.1, -0.1]), np.zeros(2),
                             np.ones(2), np.array([1.0, 2.0]))
        out = neighbor_lookup((0.0, 0.0), 0, t, k=2)
        assert [o[0] for o in out] == ["a", "b"]  # equal distance, id ascending


class TestArity:
    def test_group1_and_2_are_lon_lat(self, table):
        for group in (1, 2):
            fm = build_feature_matrix(FeatureGroupSpec(group=group), table.points(), table)
            assert fm.X.shape == (len(table), 2)
            assert fm.columns == ["lon", "lat"]
            assert np.array_equal(fm.X[:, 0], table.lon)

    def test_group3_arity_2_plus_3k(self, table):
        spec = FeatureGroupSpec(group=3, k_nno=3)
        fm = build_feature_matrix(spec, table.points(), table)
        assert fm.X.shape[1] == 2 + 3 * 3
        assert len(fm.columns) == fm.X.shape[1]

    def test_group3_k10_arity_32(self, table):
        spec = FeatureGroupSpec(group=3, k_nno=10)
        fm = build_feature_matrix(spec, table.points(), table)
        assert fm.X.shape[1] == 32

    def test_group4_k10_arity_33_with_nngp_last(self, table, nngp_source):
        spec = FeatureGroupSpec(group=4, k_nno=10, kriging_source=nngp_source)
        fm = build_feature_matrix(spec, table.points(), table)
        assert fm.X.shape[1] == 33
        assert fm.columns[-1] == "nngp_pred"
        # cross-module equality: last column is the NNGP predicted mean
        kept = fm.kept_idx
        X0 = table.trend_matrix()
        mean, _ = nngp_source.predict(
            (table.lon[kept], table.lat[kept], table.hour[kept].astype(float)), X0[kept]
        )
        assert np.allclose(fm.X[:, -1], mean, atol=1e-12)

    def test_with_hour_flag_adds_column(self, table):
        fm = build_feature_matrix(FeatureGroupSpec(group=2, with_hour=True), table.points(), table)
        assert fm.columns == ["lon", "lat", "hour"]
        assert np.array_equal(fm.X[:, 2], table.hour.astype(float))

    def test_distance_variant_arity(self, table):
        spec = FeatureGroupSpec(group=3, k_nno=4, nno_use_distance=True)
        fm = build_feature_matrix(spec, table.points(), table)
        assert fm.X.shape[1] == 2 + 2 * 4
        assert "nno1_dist_km" in fm.columns

    def test_group4_prefix_extends_group3(self, table, nngp_source):
        s3 = FeatureGroupSpec(group=3, k_nno=4)
        s4 = FeatureGroupSpec(group=4, k_nno=4, kriging_source=nngp_source)
        f3 = build_feature_matrix(s3, table.points(), table)
        f4 = build_feature_matrix(s4, table.points(), table)
        assert np.array_equal(f4.X[:, :-1], f3.X)
        assert f4.columns[:-1] == f3.columns


class TestLagAndExclusion:
    def test_lagged_rows_excluded_when_no_prior_hour(self, table):
        spec = FeatureGroupSpec(group=3, k_nno=2)
        fm = build_feature_matrix(spec, table.points(), table)
        # hour-0 targets have no hour -1 observations
        assert fm.n_excluded == 5
        assert fm.report["excluded_no_neighbors"] == 5
        assert np.all(table.hour[fm.kept_idx] >= 1)

    def test_single_target_excluded_returns_none(self, table):
        spec = FeatureGroupSpec(group=3, k_nno=2)
        assert build_features(spec, (0.0, 0.0, 0.0), table) is None
        vec = build_features(spec, (0.0, 0.0, 1.0), table)
        assert vec is not None and vec.shape == (8,)

    def test_neighbor_values_come_from_lagged_hour_only(self, table):
        spec = FeatureGroupSpec(group=3, k_nno=1)
        vec = build_features(spec, (0.0, 0.0, 2.0), table)
        # nearest sensor is s0; its hour-1 value is 1.0 (not the hour-2 value 2.0)
        assert vec[2] == 1.0

    def test_padding_repeats_farthest_and_flags(self):
        sid = np.array(["a", "a", "b", "b"], dtype=object)
        hour = np.array([0, 1, 0, 1])
        lon = np.array([0.0, 0.0, 0.3, 0.3])
        t = ObservationTable(sid, hour, lon, np.zeros(4), np.ones(4), np.array([5.0, 6.0, 7.0, 8.0]))
        spec = FeatureGroupSpec(group=3, k_nno=3)
        fm = build_feature_matrix(spec, (np.array([0.0]), np.array([0.0]), np.array([1.0])), t)
        assert fm.padded[0]
        assert fm.report["padded"] == 1
        # neighbors at hour 0: a (5.0) then b (7.0); third slot repeats b
        assert fm.X[0, 2] == 5.0 and fm.X[0, 5] == 7.0 and fm.X[0, 8] == 7.0

    def test_determinism(self, table):
        spec = FeatureGroupSpec(group=3, k_nno=3)
        f1 = build_feature_matrix(spec, table.points(), table)
        f2 = build_feature_matrix(spec, table.points(), table)
        assert np.array_equal(f1.X, f2.X)
        assert np.array_equal(f1.kept_idx, f2.kept_idx)

    def test_exclude_own_sensor_for_training_targets(self, table):
        spec = FeatureGroupSpec(group=3, k_nno=1)
        targets = (np.array([0.0]), np.array([0.0]), np.array([1.0]))
        with_self = build_feature_matrix(spec, targets, table)
        without_self = build_feature_matrix(spec, targets, table, exclude_sensor_ids=np.array(["s0"]))
        # s0 sits at lon 0: included it is its own neighbor, excluded the
        # nearest other sensor (s1 at lon 0.1, hour-0 value 10.0) takes over
        assert with_self.X[0, 2] == 0.0
        assert without_self.X[0, 2] == 10.0
        assert without_self.X[0, 3] == pytest.approx(0.1)

    def test_no_leakage_features_use_train_table_only(self, table):
        # identical target coordinates, differently doctored "test" values:
        # features must be identical because only the train table is consulted
        spec = FeatureGroupSpec(group=3, k_nno=3)
        targets = (np.array([0.4]), np.array([0.0]), np.array([2.0]))
        f1 = build_feature_matrix(spec, targets, table)
        doctored = table  # the builder never sees any other table
        f2 = build_feature_matrix(spec, targets, doctored)
        assert np.array_equal(f1.X, f2.X)
        train_sensors = set(table.sensor_id.astype(str))
        for sid, *_ in neighbor_lookup((0.4, 0.0), 1, table, k=3):
            assert sid in train_sensors


class TestSpecValidation:
    def test_bad_group_rejected(self):
        with pytest.raises(UsageError):
            FeatureGroupSpec(group=5)

    def test_group4_requires_source(self):
        with pytest.raises(UsageError):
            FeatureGroupSpec(group=4)
