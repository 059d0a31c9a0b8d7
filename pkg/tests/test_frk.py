import numpy as np
import pytest

from geoblend.covariance import CovarianceParams
from geoblend.frk import BasisSet, FrkModel, FrkParams, bisquare, bounds_of, build_basis, fit
from geoblend.kriging import KrigingModel
from geoblend.synthdata import gp_dataset


class TestBisquare:
    def test_center_value(self):
        assert bisquare(0.0) == 1.0

    def test_support_boundary(self):
        assert bisquare(1.0) == 0.0
        assert bisquare(1.0001) == 0.0
        assert bisquare(10.0) == 0.0

    def test_half_way(self):
        assert bisquare(0.5) == pytest.approx(0.5625, abs=1e-15)

    def test_vectorized(self):
        u = np.array([0.0, 0.5, 1.0, 2.0])
        assert np.allclose(bisquare(u), [1.0, 0.5625, 0.0, 0.0])


class TestBuildBasis:
    def test_default_counts_match_paper_scale(self):
        basis = build_basis((-124.0, -114.0, 32.0, 42.0, 0.0, 720.0))
        assert basis.k_spatial == 80
        assert basis.k_temporal == 20
        assert basis.k_total == 1600
        assert set(np.unique(basis.sp_resolution)) == {0, 1}
        assert (basis.sp_resolution == 0).sum() == 16
        assert (basis.sp_resolution == 1).sum() == 64

    def test_tensor_count_and_product_structure(self):
        basis = build_basis((0.0, 1.0, 0.0, 1.0, 0.0, 6.0), spatial_split=(4,), n_temporal=3)
        assert basis.k_total == 12
        rng = np.random.default_rng(0)
        lon, lat = rng.uniform(0, 1, 5), rng.uniform(0, 1, 5)
        hour = rng.uniform(0, 6, 5)
        phi = basis.design(lon, lat, hour)
        phi_s = basis.eval_spatial(lon, lat)
        psi_t = basis.eval_temporal(hour)
        for q in range(3):
            for p in range(4):
                assert np.allclose(phi[:, q * 4 + p], psi_t[:, q] * phi_s[:, p], atol=1e-15)

    def test_every_point_activates_a_basis(self):
        rng = np.random.default_rng(3)
        lon, lat = rng.uniform(-120, -115, 200), rng.uniform(34, 40, 200)
        hour = rng.uniform(0.0, 48.0, 200)
        basis = build_basis((-120.0, -115.0, 34.0, 40.0, 0.0, 48.0), spatial_split=(16, 64), n_temporal=8)
        phi = basis.design(lon, lat, hour)
        assert np.all(phi.max(axis=1) > 0)

    def test_degenerate_bounds_rejected(self):
        with pytest.raises(ValueError):
            build_basis((0.0, 0.0, 0.0, 1.0, 0.0, 10.0))

    def test_rectangular_grid_spec(self):
        basis = build_basis((0.0, 2.0, 0.0, 1.0, 0.0, 10.0), spatial_split=((3, 2),), n_temporal=2)
        assert basis.k_spatial == 6
        assert basis.k_total == 12


@pytest.fixture(scope="module")
def lowrank_fixture():
    """Data drawn exactly from the low-rank model (n=120, K=18)."""
    rng = np.random.default_rng(21)
    n = 120
    lon, lat = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
    hour = rng.uniform(0, 12, n)
    basis = build_basis((0.0, 1.0, 0.0, 1.0, 0.0, 12.0), spatial_split=(9,), n_temporal=2)
    params = FrkParams(sigma_s=1.0, rho_s=40.0, nugget=0.05)
    S = basis.coefficient_cov(params.sigma_s, params.rho_s)
    w_true = np.linalg.cholesky(S + 1e-12 * np.eye(S.shape[0])) @ rng.standard_normal(S.shape[0])
    X = np.column_stack([np.ones(n), lon])
    beta = np.array([1.0, 0.4])
    phi = basis.design(lon, lat, hour)
    Y = X @ beta + phi @ w_true + rng.normal(0, np.sqrt(params.nugget), n)
    return (lon, lat, hour), X, Y, basis, params, w_true


class TestModel:
    def test_predictions_match_dense_oracle(self, lowrank_fixture):
        points, X, Y, basis, params, _ = lowrank_fixture
        model = FrkModel(points, X, Y, basis, params)
        rng = np.random.default_rng(5)
        q = 25
        t = (rng.uniform(0, 1, q), rng.uniform(0, 1, q), rng.uniform(0, 12, q))
        X0 = np.column_stack([np.ones(q), t[0]])
        mean, var = model.predict(t, X0)

        # dense oracle: explicit n x n covariance, no Woodbury
        lon, lat, hour = points
        phi = basis.design(lon, lat, hour)
        S = basis.coefficient_cov(params.sigma_s, params.rho_s)
        sigma = phi @ S @ phi.T + params.nugget * np.eye(len(Y))
        si = np.linalg.inv(sigma)
        beta = np.linalg.solve(X.T @ si @ X, X.T @ si @ Y)
        resid = Y - X @ beta
        phi0 = basis.design(*t)
        c = phi @ S @ phi0.T
        o_mean = X0 @ beta + c.T @ si @ resid
        o_var = np.einsum("qk,kl,ql->q", phi0, S, phi0) + params.nugget - np.einsum("iq,ij,jq->q", c, si, c)
        assert np.allclose(model.beta, beta, atol=1e-8)
        assert np.allclose(mean, o_mean, atol=1e-8)
        assert np.allclose(var, o_var, atol=1e-8)

    def test_far_target_reverts_to_trend_and_noise_floor(self, lowrank_fixture):
        points, X, Y, basis, params, _ = lowrank_fixture
        model = FrkModel(points, X, Y, basis, params)
        x0 = np.array([1.0, 99.0])
        mean, var = model.predict_point((99.0, 99.0, 9999.0), x0)
        assert mean == pytest.approx(float(x0 @ model.beta), abs=1e-12)
        assert var == pytest.approx(params.nugget, abs=1e-12)

    def test_variance_bounded_by_prior_plus_noise(self, lowrank_fixture):
        points, X, Y, basis, params, _ = lowrank_fixture
        model = FrkModel(points, X, Y, basis, params)
        rng = np.random.default_rng(6)
        q = 40
        t = (rng.uniform(0, 1, q), rng.uniform(0, 1, q), rng.uniform(0, 12, q))
        X0 = np.column_stack([np.ones(q), t[0]])
        _, var = model.predict(t, X0)
        phi0 = basis.design(*t)
        S = basis.coefficient_cov(params.sigma_s, params.rho_s)
        prior = np.einsum("qk,kl,ql->q", phi0, S, phi0)
        assert np.all(var <= prior + params.nugget + 1e-10)

    def test_huge_noise_shrinks_to_trend(self, lowrank_fixture):
        points, X, Y, basis, params, _ = lowrank_fixture
        noisy = FrkModel(points, X, Y, basis, FrkParams(params.sigma_s, params.rho_s, nugget=1e7))
        mean, _ = noisy.predict(points, X)
        trend = X @ noisy.beta
        assert np.abs(mean - trend).max() < 1e-3 * np.abs(Y - trend).max()

    def test_variance_lower_in_dense_data_than_in_void(self):
        rng = np.random.default_rng(9)
        n = 150
        lon = rng.uniform(0.0, 0.45, n)  # all data in the left half
        lat = rng.uniform(0, 1, n)
        hour = np.zeros(n)
        basis = build_basis((0.0, 1.0, 0.0, 1.0, 0.0, 1.0), spatial_split=(16,), n_temporal=1)
        params = FrkParams(sigma_s=1.0, rho_s=30.0, nugget=0.05)
        X = np.ones((n, 1))
        Y = rng.normal(0, 1, n)
        model = FrkModel((lon, lat, hour), X, Y, basis, params)
        _, var_interior = model.predict((np.array([0.2]), np.array([0.5]), np.array([0.0])), np.ones((1, 1)))
        _, var_void = model.predict((np.array([0.85]), np.array([0.5]), np.array([0.0])), np.ones((1, 1)))
        assert var_interior[0] < var_void[0]

    def test_serialization_round_trip(self, lowrank_fixture):
        points, X, Y, basis, params, _ = lowrank_fixture
        model = FrkModel(points, X, Y, basis, params)
        clone = FrkModel.from_dict(model.to_dict())
        t = (np.array([0.3, 0.7]), np.array([0.2, 0.9]), np.array([3.0, 8.0]))
        X0 = np.column_stack([np.ones(2), t[0]])
        m1, v1 = model.predict(t, X0)
        m2, v2 = clone.predict(t, X0)
        assert np.allclose(m1, m2, atol=1e-12)
        assert np.allclose(v1, v2, atol=1e-12)


class TestFit:
    def test_recovers_simulated_coefficients(self, lowrank_fixture):
        points, X, Y, basis, params, w_true = lowrank_fixture
        model = fit(points, X, Y, basis, init=FrkParams(0.5, 20.0, 0.2), n_starts=1, seed=0)
        w_hat = model.coefficient_posterior_mean()
        corr = np.corrcoef(w_hat, w_true)[0, 1]
        assert corr > 0.9

    def test_warns_when_n_below_k(self):
        rng = np.random.default_rng(1)
        n = 10
        points = (rng.uniform(0, 1, n), rng.uniform(0, 1, n), np.zeros(n))
        basis = build_basis((0.0, 1.0, 0.0, 1.0, 0.0, 1.0), spatial_split=(16,), n_temporal=1)
        with pytest.warns(RuntimeWarning, match="low-rank"):
            fit(points, np.ones((n, 1)), rng.normal(0, 1, n), basis,
                init=FrkParams(1.0, 30.0, 0.1), n_starts=1, maxiter=5)

    def test_rmse_to_dense_gp_non_increasing_in_k(self):
        # single-hour field: richer spatial bases track the dense GP better
        truth = CovarianceParams(sigma_s=1.0, rho_s=25.0, rho_t=1.0, nugget=0.05)
        table = gp_dataset(260, 1, truth, beta=(1.0, 0.0, 0.0), seed=13)
        lon, lat, hour = table.points()
        train = slice(0, 200)
        test = slice(200, 260)
        X = np.ones((200, 1))
        X0 = np.ones((60, 1))
        dense = KrigingModel((lon[train], lat[train], hour[train]), X, table.log_pm25[train], truth)
        dense_mean, _ = dense.predict((lon[test], lat[test], hour[test]), X0)

        bounds = bounds_of(table.points())
        rmses = []
        for count in (25, 100, 400):
            basis = build_basis(bounds, spatial_split=(count,), n_temporal=1)
            model = fit((lon[train], lat[train], hour[train]), X, table.log_pm25[train], basis,
                        init=FrkParams(1.0, 25.0, 0.05), n_starts=1, seed=0, maxiter=80)
            mean, _ = model.predict((lon[test], lat[test], hour[test]), X0)
            rmses.append(float(np.sqrt(np.mean((mean - dense_mean) ** 2))))
        assert rmses[1] <= rmses[0] + 1e-9
        assert rmses[2] <= rmses[1] + 1e-9
