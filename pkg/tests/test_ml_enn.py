import numpy as np
import pytest

from geoblend.errors import NumericalError
from geoblend.ml import EnnConfig, EnnModel, Mlp, fit_enn


def central_difference_gradient(net, X, y, step=1e-5):
    theta = net.parameter_vector()
    grad = np.empty_like(theta)
    for k in range(theta.size):
        plus = theta.copy()
        plus[k] += step
        net.set_parameter_vector(plus)
        loss_plus = net.loss_and_grad(X, y)[0]
        minus = theta.copy()
        minus[k] -= step
        net.set_parameter_vector(minus)
        loss_minus = net.loss_and_grad(X, y)[0]
        grad[k] = (loss_plus - loss_minus) / (2 * step)
    net.set_parameter_vector(theta)
    return grad


class TestGradients:
    def test_backprop_matches_central_differences_five_param_net(self):
        # 2 inputs -> 1 ReLU unit -> 1 output: W1(2) + b1(1) + W2(1) + b2(1) = 5 params
        net = Mlp(2, [1], seed=0, l2=1e-3)
        assert net.parameter_vector().size == 5
        # keep all preactivations well away from the ReLU kink
        net.set_parameter_vector(np.array([0.8, -0.6, 0.9, 1.2, -0.4]))
        X = np.array([[1.0, 0.5], [0.5, -1.0], [2.0, 1.0], [1.5, -0.5]])
        y = np.array([1.0, -0.5, 2.0, 0.3])
        analytic = net.gradient_vector(X, y)
        numeric = central_difference_gradient(net, X, y, step=1e-5)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), 1e-8)
        assert rel.max() < 1e-4

    def test_backprop_matches_on_deeper_net(self):
        rng = np.random.default_rng(6)
        net = Mlp(3, [4, 3], seed=1, l2=1e-4)
        X = rng.normal(0, 1, (8, 3))
        y = rng.normal(0, 1, 8)
        analytic = net.gradient_vector(X, y)
        numeric = central_difference_gradient(net, X, y, step=1e-5)
        denom = np.maximum(np.abs(numeric), 1e-6)
        assert (np.abs(analytic - numeric) / denom).max() < 1e-4


class TestMlpTraining:
    def test_loss_decreases_on_learnable_signal(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(-1, 1, (200, 2))
        y = 1.5 * X[:, 0] - 0.5 * X[:, 1]
        net = Mlp(2, [8], seed=0, lr=0.05, epochs=60, batch_size=32, l2=0.0)
        net.fit(X, y)
        assert net.loss_history[-1] < net.loss_history[0]

    def test_divergence_raises(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, (64, 2)) * 10
        y = rng.normal(0, 1, 64) * 10
        net = Mlp(2, [8], seed=0, lr=50.0, epochs=30, batch_size=16)
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(NumericalError):
            net.fit(X, y)


@pytest.fixture(scope="module")
def linear_data():
    rng = np.random.default_rng(8)
    X = rng.uniform(-1, 1, (400, 2))
    y = 1.0 + 2.0 * X[:, 0] - 1.0 * X[:, 1] + rng.normal(0, 0.02, 400)
    return X, y


class TestEnsemble:
    def test_linear_capacity(self, linear_data):
        X, y = linear_data
        config = EnnConfig(hidden_members=((16,), (24,)), seed=0, epochs=150, lr=0.05, l2=0.0)
        model = fit_enn(X[:300], y[:300], config)
        rmse = float(np.sqrt(np.mean((model.predict(X[300:]) - y[300:]) ** 2)))
        assert rmse < 0.1 * y.std()

    def test_average_combiner_is_exact_mean(self, linear_data):
        X, y = linear_data
        config = EnnConfig(seed=1, epochs=5, combiner="average")
        model = fit_enn(X[:100], y[:100], config)
        preds = model.predict(X[100:140])
        members = model.member_predictions(X[100:140])
        assert np.array_equal(preds, (members[0] + members[1]) / 2.0)

    def test_identical_seeds_and_architecture_collapse_to_single_member(self, linear_data):
        X, y = linear_data
        config = EnnConfig(hidden_members=((8,), (8,)), member_seeds=(7, 7), epochs=10, combiner="average")
        with pytest.warns(RuntimeWarning, match="identical member seeds"):
            model = fit_enn(X[:100], y[:100], config)
        members = model.member_predictions(X[100:120])
        assert np.array_equal(members[0], members[1])
        assert np.array_equal(model.predict(X[100:120]), members[0])

    def test_stacked_combiner_learns_weights(self, linear_data):
        X, y = linear_data
        config = EnnConfig(seed=3, epochs=40, combiner="stacked", holdout_fraction=0.25)
        model = fit_enn(X[:200], y[:200], config)
        assert model.stack_weights is not None and len(model.stack_weights) == 3
        preds = model.predict(X[200:260])
        assert np.all(np.isfinite(preds))

    def test_deterministic_given_seed(self, linear_data):
        X, y = linear_data
        config = EnnConfig(seed=5, epochs=8)
        m1 = fit_enn(X[:120], y[:120], config)
        m2 = fit_enn(X[:120], y[:120], config)
        assert np.array_equal(m1.predict(X[120:140]), m2.predict(X[120:140]))

    def test_serialization_round_trip(self, linear_data):
        X, y = linear_data
        model = fit_enn(X[:100], y[:100], EnnConfig(seed=2, epochs=5))
        clone = EnnModel.from_dict(model.to_dict())
        assert np.allclose(clone.predict(X[100:120]), model.predict(X[100:120]), atol=1e-12)
