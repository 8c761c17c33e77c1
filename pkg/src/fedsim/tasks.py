"""Synthetic learning tasks: loss, gradient and federated data generation.

Three model families are supported, all operating on flat parameter vectors:

* ``linear_regression``: ``y_hat = X w + b`` with mean squared error.
* ``logistic_regression``: ``p = sigmoid(X w + b)`` with binary cross-entropy.
* ``mlp``: one tanh hidden layer and a scalar linear output, mean squared error.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

TASK_KINDS = ("linear_regression", "logistic_regression", "mlp")


@dataclass(frozen=True)
class Task:
    kind: str
    input_dim: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")
        if int(self.input_dim) < 1:
            raise ConfigError("input_dim must be positive")
        if self.hidden_dim < 0:
            raise ConfigError("hidden_dim must be non-negative")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ConfigError("mlp needs hidden_dim >= 1")

    @property
    def param_count(self) -> int:
        if self.kind == "mlp":
            return (self.input_dim + 1) * self.hidden_dim + self.hidden_dim + 1
        return self.input_dim + 1

    @property
    def is_classification(self) -> bool:
        return self.kind == "logistic_regression"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    targets: np.ndarray = field(repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.targets, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError(f"features must be 2-d, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise DimensionError(f"{X.shape[0]} feature rows but targets of shape {y.shape}")
        if X.shape[0] < 1:
            raise DimensionError("a dataset needs at least one sample")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def size(self) -> int:
        return int(self.features.shape[0])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.targets[idx])


def _check(task: Task, params, data: Dataset) -> np.ndarray:
    theta = np.asarray(params, dtype=np.float64)
    if theta.ndim != 1 or theta.size != task.param_count:
        raise DimensionError(f"{task.kind} expects {task.param_count} parameters, got shape {theta.shape}")
    if data.features.shape[1] != task.input_dim:
        raise DimensionError(f"{task.kind} expects {task.input_dim} features, data has {data.features.shape[1]}")
    if not np.all(np.isfinite(theta)):
        raise NumericError("parameters contain non-finite entries")
    return theta


def _unpack_mlp(task: Task, theta: np.ndarray):
    d, h = task.input_dim, task.hidden_dim
    W1 = theta[: h * d].reshape(h, d)
    b1 = theta[h * d : h * d + h]
    w2 = theta[h * d + h : h * d + 2 * h]
    b2 = theta[-1]
    return W1, b1, w2, b2


def predict(task: Task, params, X: np.ndarray) -> np.ndarray:
    """Raw model output: regression value, or probability for logistic regression."""
    X = np.asarray(X, dtype=np.float64)
    theta = np.asarray(params, dtype=np.float64)
    if task.kind == "mlp":
        W1, b1, w2, b2 = _unpack_mlp(task, theta)
        return np.tanh(X @ W1.T + b1) @ w2 + b2
    z = X @ theta[:-1] + theta[-1]
    if task.kind == "logistic_regression":
        return 0.5 * (1.0 + np.tanh(0.5 * z))
    return z


def loss(task: Task, params, data: Dataset) -> float:
    """Mean per-sample loss of ``params`` on ``data``."""
    theta = _check(task, params, data)
    X, y = data.features, data.targets
    with np.errstate(over="ignore", invalid="ignore"):
        if task.kind == "logistic_regression":
            z = X @ theta[:-1] + theta[-1]
            value = float(np.mean(np.logaddexp(0.0, z) - y * z))
        else:
            resid = predict(task, theta, X) - y
            value = float(np.mean(resid * resid))
    if not np.isfinite(value):
        raise NumericError(f"{task.kind} loss is not finite")
    return value


def gradient(task: Task, params, batch: Dataset) -> np.ndarray:
    """Gradient of the mean batch loss with respect to the flat parameters."""
    theta = _check(task, params, batch)
    X, y = batch.features, batch.targets
    n = X.shape[0]
    with np.errstate(over="ignore", invalid="ignore"):
        if task.kind == "mlp":
            W1, b1, w2, b2 = _unpack_mlp(task, theta)
            a = np.tanh(X @ W1.T + b1)
            dout = 2.0 * (a @ w2 + b2 - y) / n
            dz = np.outer(dout, w2) * (1.0 - a * a)
            grad = np.concatenate([(dz.T @ X).ravel(), dz.sum(axis=0), a.T @ dout, [dout.sum()]])
        else:
            z = X @ theta[:-1] + theta[-1]
            if task.kind == "logistic_regression":
                r = (0.5 * (1.0 + np.tanh(0.5 * z)) - y) / n
            else:
                r = 2.0 * (z - y) / n
            grad = np.append(X.T @ r, r.sum())
    if not np.all(np.isfinite(grad)):
        raise NumericError(f"{task.kind} gradient is not finite")
    return grad


def _truth(task: Task, rng: np.random.Generator) -> np.ndarray:
    if task.kind == "mlp":
        d, h = task.input_dim, task.hidden_dim
        return np.concatenate([
            rng.normal(0.0, 1.0 / np.sqrt(d), size=h * d),
            rng.normal(0.0, 0.5, size=h),
            rng.normal(0.0, 1.0 / np.sqrt(h), size=h),
            rng.normal(0.0, 0.5, size=1),
        ])
    return rng.normal(0.0, 1.0, size=task.param_count)


def _sample(task: Task, theta: np.ndarray, n: int, noise: float, rng: np.random.Generator) -> Dataset:
    X = rng.normal(0.0, 1.0, size=(n, task.input_dim))
    out = predict(task, theta, X)
    if task.kind == "logistic_regression":
        y = (rng.random(n) < out).astype(np.float64)
    else:
        y = out + noise * rng.normal(0.0, 1.0, size=n)
    return Dataset(X, y)


def generate_federation_data(
    task: Task,
    n_clients: int,
    lam: float,
    heterogeneity: float,
    seed: int,
    *,
    noise: float = 0.1,
    test_size: int = 1000,
    sizes=None,
) -> tuple[list[Dataset], Dataset]:
    """Draw a synthetic federation.

    Client dataset sizes are Poisson(``lam``) draws clamped to at least 1,
    unless ``sizes`` is given explicitly. Each client's ground truth is the
    global ground truth shifted by Gaussian noise of scale ``heterogeneity``.
    The test set is drawn from the unshifted global truth.
    """
    if int(n_clients) < 1:
        raise ConfigError("n_clients must be at least 1")
    if not lam > 0:
        raise ConfigError("lambda must be positive")
    if not 0.0 <= heterogeneity <= 1.0:
        raise ConfigError("heterogeneity must lie in [0, 1]")
    if noise < 0 or int(test_size) < 1:
        raise ConfigError("noise must be non-negative and test_size positive")

    rng = np.random.default_rng(seed)
    drawn = np.maximum(rng.poisson(lam, size=n_clients), 1)
    if sizes is not None:
        drawn = np.asarray(sizes, dtype=np.int64)
        if drawn.shape != (n_clients,) or np.any(drawn < 1):
            raise ConfigError(f"sizes must be {n_clients} positive integers")
    truth = _truth(task, rng)
    clients = []
    for s in drawn:
        theta_j = truth + heterogeneity * rng.normal(0.0, 1.0, size=truth.size)
        clients.append(_sample(task, theta_j, int(s), noise, rng))
    test = _sample(task, truth, int(test_size), noise, rng)
    return clients, test


def _write_csv(path: Path, data: Dataset) -> None:
    header = ",".join([f"x{i}" for i in range(data.features.shape[1])] + ["y"])
    table = np.column_stack([data.features, data.targets])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")


def _read_csv(path: Path) -> Dataset:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Dataset(table[:, :-1], table[:, -1])


def export_federation(clients: list[Dataset], test: Dataset, out_dir: str | os.PathLike) -> list[Path]:
    """Write one ``client_NNN.csv`` per client plus ``test.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for j, data in enumerate(clients):
        paths.append(out / f"client_{j:03d}.csv")
        _write_csv(paths[-1], data)
    paths.append(out / "test.csv")
    _write_csv(paths[-1], test)
    return paths


def import_federation(in_dir: str | os.PathLike) -> tuple[list[Dataset], Dataset]:
    src = Path(in_dir)
    clients = [_read_csv(p) for p in sorted(src.glob("client_*.csv"))]
    if not clients:
        raise ConfigError(f"no client_*.csv files in {src}")
    return clients, _read_csv(src / "test.csv")
