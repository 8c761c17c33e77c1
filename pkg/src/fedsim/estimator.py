"""scikit-learn compatible wrappers around the federated training loop.

The rows of ``X`` are partitioned into clients by ``groups`` (one client per
distinct group label), trained federatedly with the chosen aggregation
strategy, and the final global model is used for prediction. This lets the
aggregation strategies drop into pipelines, grid searches and
cross-validation like any other estimator.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import tasks
from .aggregation import StrategyParams
from .engine import run_federation
from .federation import LocalTrainingConfig
from .rng import int_seed
from .tasks import Dataset, Task


class _FederatedBase(BaseEstimator):
    def __init__(
        self,
        strategy="fed_pid",
        alpha=None,
        beta=None,
        gamma=None,
        rounds=50,
        epochs=1,
        batch_size=10,
        learning_rate=0.02,
        selection="all",
        include_outliers_every=0,
        n_clients=5,
        random_state=0,
        n_workers=1,
    ):
        self.strategy = strategy
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.rounds = rounds
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.selection = selection
        self.include_outliers_every = include_outliers_every
        self.n_clients = n_clients
        self.random_state = random_state
        self.n_workers = n_workers

    def _partition(self, n_samples, groups):
        if groups is not None:
            groups = np.asarray(groups)
            if groups.shape != (n_samples,):
                raise ValueError(f"groups must have shape ({n_samples},), got {groups.shape}")
            return [np.flatnonzero(groups == g) for g in np.unique(groups)]
        n = int(self.n_clients)
        if not 1 <= n <= n_samples:
            raise ValueError(f"n_clients must lie in [1, {n_samples}], got {n}")
        order = np.random.default_rng(int_seed(self.random_state, "partition")).permutation(n_samples)
        return np.array_split(order, n)

    def _fit_federation(self, X, y, groups, task: Task):
        parts = self._partition(X.shape[0], groups)
        clients = [Dataset(X[idx], y[idx]) for idx in parts]
        result = run_federation(
            task,
            clients,
            Dataset(X, y),
            strategy=StrategyParams(self.strategy, self.alpha, self.beta, self.gamma),
            training=LocalTrainingConfig(self.epochs, self.batch_size, self.learning_rate),
            rounds=self.rounds,
            master_seed=self.random_state,
            selection_rule=self.selection,
            include_outliers_every=self.include_outliers_every,
            workers=self.n_workers,
        )
        self.task_ = task
        self.params_ = result.final_model
        self.history_ = result.records
        self.loss_curve_ = [r.global_model_loss for r in result.records]
        self.n_features_in_ = X.shape[1]
        return self

    def _validate_X(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, estimator was fitted with {self.n_features_in_}")
        return X


class FederatedRegressor(RegressorMixin, _FederatedBase):
    """Least-squares regressor trained by federated averaging.

    ``hidden_dim=0`` gives a linear model; a positive value adds one tanh
    hidden layer.
    """

    def __init__(
        self,
        hidden_dim=0,
        strategy="fed_pid",
        alpha=None,
        beta=None,
        gamma=None,
        rounds=50,
        epochs=1,
        batch_size=10,
        learning_rate=0.02,
        selection="all",
        include_outliers_every=0,
        n_clients=5,
        random_state=0,
        n_workers=1,
    ):
        super().__init__(
            strategy=strategy,
            alpha=alpha,
            beta=beta,
            gamma=gamma,
            rounds=rounds,
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
            selection=selection,
            include_outliers_every=include_outliers_every,
            n_clients=n_clients,
            random_state=random_state,
            n_workers=n_workers,
        )
        self.hidden_dim = hidden_dim

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        kind = "mlp" if self.hidden_dim else "linear_regression"
        return self._fit_federation(X, y, groups, Task(kind, X.shape[1], int(self.hidden_dim)))

    def predict(self, X):
        X = self._validate_X(X)
        return tasks.predict(self.task_, self.params_, X)


class FederatedClassifier(ClassifierMixin, _FederatedBase):
    """Binary logistic-regression classifier trained by federated averaging."""

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if self.classes_.size != 2:
            raise ValueError(f"FederatedClassifier is binary; got {self.classes_.size} classes")
        task = Task("logistic_regression", X.shape[1])
        return self._fit_federation(X, encoded.astype(np.float64), groups, task)

    def decision_function(self, X):
        X = self._validate_X(X)
        return X @ self.params_[:-1] + self.params_[-1]

    def predict_proba(self, X):
        X = self._validate_X(X)
        p = tasks.predict(self.task_, self.params_, X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] >= 0.5).astype(int)]
