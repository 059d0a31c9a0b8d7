import numpy as np
import pytest

from geoblend.covariance import (
    CovarianceParams,
    SpaceTimePoint,
    cov,
    cov_matrix,
    cross_cov_matrix,
    spatial_distance,
)

ONE_DEGREE_KM = 6371.0 * np.pi / 180.0


def unit_params(nugget=0.0):
    return CovarianceParams(sigma_s=1.0, rho_s=ONE_DEGREE_KM, rho_t=1.0, nugget=nugget)


class TestSpatialDistance:
    def test_identity(self):
        p = SpaceTimePoint(-120.0, 36.5, 4.0)
        assert spatial_distance(p, p) == 0.0

    def test_one_degree_of_latitude(self):
        a = SpaceTimePoint(0.0, 0.0, 0.0)
        b = SpaceTimePoint(0.0, 1.0, 0.0)
        d = spatial_distance(a, b)
        assert d == pytest.approx(ONE_DEGREE_KM, abs=1e-9)
        assert round(d, 3) == 111.195

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            a = SpaceTimePoint(*rng.uniform(-120, -110, 2), 0.0)
            b = SpaceTimePoint(*rng.uniform(30, 40, 2), 0.0)
            assert spatial_distance(a, b) == pytest.approx(spatial_distance(b, a), rel=1e-14)

    def test_euclidean_option(self):
        a = SpaceTimePoint(0.0, 0.0, 0.0)
        b = SpaceTimePoint(3.0, 4.0, 0.0)
        assert spatial_distance(a, b, metric="euclidean") == pytest.approx(5.0)


class TestCov:
    def test_same_indexed_observation_gets_nugget(self):
        p = SpaceTimePoint(0.0, 0.0, 0.0)
        value = cov(p, p, unit_params(nugget=0.1), same_index=True)
        assert value == pytest.approx(1.1, abs=1e-15)

    def test_shared_coordinates_without_identity_no_nugget(self):
        p = SpaceTimePoint(0.0, 0.0, 0.0)
        assert cov(p, p, unit_params(nugget=0.1)) == pytest.approx(1.0, abs=1e-15)

    def test_one_spatial_range_unit(self):
        a = SpaceTimePoint(0.0, 0.0, 0.0)
        b = SpaceTimePoint(0.0, 1.0, 0.0)  # exactly rho_s away
        assert cov(a, b, unit_params()) == pytest.approx(np.exp(-1.0), abs=1e-12)

    def test_temporal_decay_to_zero(self):
        a = SpaceTimePoint(0.0, 0.0, 0.0)
        b = SpaceTimePoint(0.0, 0.0, 1e6)
        assert cov(a, b, unit_params()) == pytest.approx(0.0, abs=1e-300)

    def test_separability_factorizes(self):
        params = CovarianceParams(sigma_s=1.4, rho_s=80.0, rho_t=3.0, sigma_t=0.9)
        o = SpaceTimePoint(0.0, 0.0, 0.0)
        s = SpaceTimePoint(0.4, 0.1, 0.0)
        t = SpaceTimePoint(0.0, 0.0, 5.0)
        st = SpaceTimePoint(0.4, 0.1, 5.0)
        lhs = cov(st, o, params) * cov(o, o, params)
        rhs = cov(s, o, params) * cov(t, o, params)
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_monotone_decay(self):
        params = unit_params()
        o = SpaceTimePoint(0.0, 0.0, 0.0)
        spatial = [cov(SpaceTimePoint(0.0, x, 0.0), o, params) for x in (0.0, 0.5, 1.0, 2.0)]
        temporal = [cov(SpaceTimePoint(0.0, 0.0, t), o, params) for t in (0.0, 0.5, 1.0, 2.0)]
        assert all(a > b for a, b in zip(spatial, spatial[1:]))
        assert all(a > b for a, b in zip(temporal, temporal[1:]))


class TestCovMatrix:
    def test_single_point(self):
        params = unit_params(nugget=0.2)
        m = cov_matrix([SpaceTimePoint(0.0, 0.0, 0.0)], params)
        assert m.shape == (1, 1)
        assert m[0, 0] == pytest.approx(params.sill + params.nugget, abs=1e-15)

    def test_matches_elementwise_cov(self):
        params = CovarianceParams(sigma_s=1.2, rho_s=60.0, rho_t=2.5, nugget=0.05)
        pts = [SpaceTimePoint(0.0, 0.0, 0.0), SpaceTimePoint(0.3, 0.0, 1.0), SpaceTimePoint(0.6, 0.0, 2.0)]
        m = cov_matrix(pts, params)
        for i, a in enumerate(pts):
            for j, b in enumerate(pts):
                expected = cov(a, b, params, same_index=(i == j))
                assert m[i, j] == pytest.approx(expected, rel=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(11)
        pts = [SpaceTimePoint(lo, la, h) for lo, la, h in zip(rng.uniform(0, 1, 6), rng.uniform(0, 1, 6), rng.integers(0, 3, 6))]
        params = unit_params(nugget=0.1)
        m = cov_matrix(pts, params)
        perm = rng.permutation(6)
        mp = cov_matrix([pts[i] for i in perm], params)
        assert np.allclose(mp, m[np.ix_(perm, perm)], rtol=0, atol=1e-14)

    def test_symmetric_positive_definite_random_instances(self):
        rng = np.random.default_rng(7)
        for trial in range(5):
            n = int(rng.integers(3, 12))
            pts = (rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.integers(0, 4, n).astype(float))
            params = CovarianceParams(
                sigma_s=float(rng.uniform(0.5, 2.0)),
                rho_s=float(rng.uniform(20, 200)),
                rho_t=float(rng.uniform(0.5, 6)),
                nugget=float(rng.uniform(0.01, 0.5)),
            )
            m = cov_matrix(pts, params)
            assert np.allclose(m, m.T, atol=0)
            assert np.linalg.eigvalsh(m).min() > 0

    def test_cross_cov_consistent_with_cov(self):
        params = unit_params()
        a = [SpaceTimePoint(0.0, 0.0, 0.0), SpaceTimePoint(0.2, 0.1, 1.0)]
        b = [SpaceTimePoint(0.5, 0.5, 2.0)]
        c = cross_cov_matrix(a, b, params)
        assert c.shape == (2, 1)
        assert c[0, 0] == pytest.approx(cov(a[0], b[0], params), rel=1e-12)
        assert c[1, 0] == pytest.approx(cov(a[1], b[0], params), rel=1e-12)


class TestParams:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            CovarianceParams(sigma_s=0.0, rho_s=1.0, rho_t=1.0)
        with pytest.raises(ValueError):
            CovarianceParams(sigma_s=1.0, rho_s=1.0, rho_t=1.0, nugget=-0.1)

    def test_sill_combines_both_sigmas(self):
        p = CovarianceParams(sigma_s=2.0, rho_s=1.0, rho_t=1.0, sigma_t=0.5)
        assert p.sill == pytest.approx(1.0)
