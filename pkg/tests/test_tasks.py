import math

import numpy as np
import pytest

from fedsim.errors import ConfigError, DimensionError
from fedsim.tasks import (
    Dataset,
    Task,
    export_federation,
    generate_federation_data,
    gradient,
    import_federation,
    loss,
    predict,
)

TASKS = [Task("linear_regression", 3), Task("logistic_regression", 4), Task("mlp", 3, 5)]


def finite_difference(task, theta, data, h=1e-5):
    g = np.zeros_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (loss(task, theta + e, data) - loss(task, theta - e, data)) / (2 * h)
    return g


def random_batch(task, rng, n=None):
    n = int(rng.integers(1, 20)) if n is None else n
    X = rng.normal(size=(n, task.input_dim))
    if task.is_classification:
        y = (rng.random(n) < 0.5).astype(float)
    else:
        y = rng.normal(size=n)
    return Dataset(X, y)


class TestTask:
    @pytest.mark.parametrize(
        "task,count",
        [(Task("linear_regression", 4), 5), (Task("logistic_regression", 2), 3), (Task("mlp", 3, 4), 21)],
    )
    def test_param_count(self, task, count):
        assert task.param_count == count

    def test_invalid(self):
        with pytest.raises(ConfigError):
            Task("cnn", 3)
        with pytest.raises(ConfigError):
            Task("mlp", 3, 0)
        with pytest.raises(ConfigError):
            Task("linear_regression", 0)


class TestDataset:
    def test_shape_checks(self):
        with pytest.raises(DimensionError):
            Dataset(np.zeros((3, 2)), np.zeros(2))
        with pytest.raises(DimensionError):
            Dataset(np.zeros((0, 2)), np.zeros(0))
        assert Dataset(np.zeros((3, 2)), np.zeros(3)).size == 3


class TestLoss:
    def test_zero_model_zero_targets(self):
        task = Task("linear_regression", 2)
        data = Dataset(np.random.default_rng(0).normal(size=(5, 2)), np.zeros(5))
        assert loss(task, np.zeros(3), data) == 0.0

    def test_single_sample_mse(self):
        task = Task("linear_regression", 1)
        assert loss(task, np.array([1.0, 0.0]), Dataset([[2.0]], [0.0])) == 4.0

    def test_logistic_matches_per_sample_loop(self):
        task = Task("logistic_regression", 3)
        rng = np.random.default_rng(11)
        data = random_batch(task, rng, n=10)
        theta = rng.normal(size=4)
        total = 0.0
        for x, y in zip(data.features, data.targets):
            z = sum(theta[k] * x[k] for k in range(3)) + theta[3]
            p = 1.0 / (1.0 + math.exp(-z))
            total += -(y * math.log(p) + (1 - y) * math.log(1 - p))
        assert loss(task, theta, data) == pytest.approx(total / 10, abs=1e-12)

    def test_dimension_errors(self):
        task = Task("linear_regression", 2)
        with pytest.raises(DimensionError):
            loss(task, np.zeros(2), Dataset(np.zeros((1, 2)), [0.0]))
        with pytest.raises(DimensionError):
            loss(task, np.zeros(3), Dataset(np.zeros((1, 3)), [0.0]))

    @pytest.mark.parametrize("task", TASKS, ids=lambda t: t.kind)
    def test_non_negative(self, task):
        rng = np.random.default_rng(5)
        for _ in range(50):
            theta = rng.normal(scale=3.0, size=task.param_count)
            assert loss(task, theta, random_batch(task, rng)) >= 0.0


class TestGradient:
    def test_hand_derived_linear(self):
        task = Task("linear_regression", 1)
        g = gradient(task, np.zeros(2), Dataset([[1.0]], [2.0]))
        np.testing.assert_allclose(g, [-4.0, -4.0], atol=1e-15)

    @pytest.mark.parametrize("task", TASKS, ids=lambda t: t.kind)
    def test_zero_at_exact_minimum(self, task):
        rng = np.random.default_rng(2)
        theta = rng.normal(size=task.param_count)
        X = rng.normal(size=(6, task.input_dim))
        if task.is_classification:
            # each input seen once with each label: p=0.5 is the minimiser
            theta[:] = 0.0
            X = np.repeat(X[:3], 2, axis=0)
            y = np.array([0.0, 1.0] * 3)
        else:
            y = predict(task, theta, X)
        assert np.linalg.norm(gradient(task, theta, Dataset(X, y))) <= 1e-9

    @pytest.mark.parametrize("task", TASKS, ids=lambda t: t.kind)
    def test_matches_finite_differences(self, task):
        rng = np.random.default_rng(17)
        for _ in range(20):
            theta = rng.normal(size=task.param_count)
            data = random_batch(task, rng)
            g = gradient(task, theta, data)
            fd = finite_difference(task, theta, data)
            scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-6)
            assert np.linalg.norm(g - fd) / scale <= 1e-4


class TestGenerateFederation:
    def test_deterministic(self):
        task = Task("linear_regression", 3)
        a, ta = generate_federation_data(task, 4, 20.0, 0.0, seed=9)
        b, tb = generate_federation_data(task, 4, 20.0, 0.0, seed=9)
        for x, y in zip(a + [ta], b + [tb]):
            np.testing.assert_array_equal(x.features, y.features)
            np.testing.assert_array_equal(x.targets, y.targets)

    def test_seed_changes_data(self):
        task = Task("linear_regression", 3)
        a, _ = generate_federation_data(task, 2, 20.0, 0.0, seed=1)
        b, _ = generate_federation_data(task, 2, 20.0, 0.0, seed=2)
        assert not np.array_equal(a[0].features[:1], b[0].features[:1])

    def test_size_mean_matches_lambda(self):
        clients, _ = generate_federation_data(Task("linear_regression", 1), 1000, 50.0, 0.0, seed=4, test_size=1)
        mean = np.mean([c.size for c in clients])
        # 3 sigma / sqrt(n) = 3 * sqrt(50) / sqrt(1000) ~= 0.67, well inside [47, 53]
        assert 47.0 <= mean <= 53.0

    def test_zero_draws_clamped(self):
        clients, _ = generate_federation_data(Task("linear_regression", 1), 200, 0.5, 0.0, seed=0, test_size=1)
        sizes = [c.size for c in clients]
        assert min(sizes) == 1

    def test_explicit_sizes(self):
        clients, _ = generate_federation_data(Task("mlp", 2, 3), 3, 10.0, 0.2, seed=0, sizes=[4, 5, 60])
        assert [c.size for c in clients] == [4, 5, 60]

    def test_heterogeneity_shifts_client_truth(self):
        task = Task("linear_regression", 2)
        fits = {}
        for h in (0.0, 1.0):
            clients, _ = generate_federation_data(task, 2, 400.0, h, seed=3, noise=0.0)
            fits[h] = [np.linalg.lstsq(np.column_stack([c.features, np.ones(c.size)]), c.targets, rcond=None)[0] for c in clients]
        assert np.allclose(fits[0.0][0], fits[0.0][1], atol=1e-9)
        assert not np.allclose(fits[1.0][0], fits[1.0][1], atol=1e-3)

    def test_logistic_targets_binary(self):
        clients, test = generate_federation_data(Task("logistic_regression", 3), 3, 30.0, 0.1, seed=0)
        for d in clients + [test]:
            assert set(np.unique(d.targets)) <= {0.0, 1.0}

    @pytest.mark.parametrize("kwargs", [dict(n_clients=0), dict(lam=0.0), dict(heterogeneity=1.5)])
    def test_invalid_config(self, kwargs):
        args = dict(task=Task("linear_regression", 1), n_clients=2, lam=3.0, heterogeneity=0.0, seed=0)
        args.update(kwargs)
        with pytest.raises(ConfigError):
            generate_federation_data(**args)

    def test_csv_roundtrip(self, tmp_path):
        clients, test = generate_federation_data(Task("linear_regression", 2), 3, 5.0, 0.3, seed=8)
        paths = export_federation(clients, test, tmp_path)
        assert [p.name for p in paths] == ["client_000.csv", "client_001.csv", "client_002.csv", "test.csv"]
        assert paths[0].read_text().splitlines()[0] == "x0,x1,y"
        back, back_test = import_federation(tmp_path)
        for a, b in zip(clients + [test], back + [back_test]):
            np.testing.assert_array_equal(a.features, b.features)
            np.testing.assert_array_equal(a.targets, b.targets)
