"""Client bookkeeping: local SGD, cost evaluation and per-client cost histories."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tasks
from .errors import ConfigError, DimensionError, NumericError, ProtocolError
from .tasks import Dataset, Task


@dataclass(frozen=True)
class LocalTrainingConfig:
    epochs: int = 1
    batch_size: int = 10
    # zero is accepted so that "no learning" runs are expressible
    learning_rate: float = 0.05

    def __post_init__(self):
        if int(self.epochs) < 1 or int(self.batch_size) < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ConfigError("learning_rate must be a finite non-negative number")

    def steps_for(self, n_samples: int) -> int:
        """Number of SGD steps ``local_train`` takes on ``n_samples`` samples."""
        return int(self.epochs) * -(-int(n_samples) // int(self.batch_size))


@dataclass
class ClientState:
    id: int
    data: Dataset
    cost_history: list[tuple[int, float]] = field(default_factory=list)
    local_model: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.data.size

    def record_cost(self, round_index: int, cost: float) -> None:
        if self.cost_history and round_index <= self.cost_history[-1][0]:
            raise ProtocolError(
                f"client {self.id}: cost for round {round_index} after round {self.cost_history[-1][0]}"
            )
        self.cost_history.append((int(round_index), float(cost)))

    def baseline_cost(self, baseline_round: int = 1) -> float | None:
        """First cost recorded at or after ``baseline_round``; fixed once recorded."""
        for r, c in self.cost_history:
            if r >= baseline_round:
                return c
        return None


def local_train(
    client: ClientState,
    global_model: np.ndarray,
    task: Task,
    cfg: LocalTrainingConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run ``cfg.epochs`` passes of shuffled mini-batch SGD from ``global_model``.

    The input vector is never modified; a new array is returned.
    """
    theta = np.array(global_model, dtype=np.float64, copy=True)
    if theta.ndim != 1 or theta.size != task.param_count:
        raise DimensionError(f"global model has shape {theta.shape}, task needs {task.param_count}")
    n = client.data.size
    bs = int(cfg.batch_size)
    for _ in range(int(cfg.epochs)):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            batch = client.data.subset(order[start : start + bs])
            with np.errstate(over="ignore", invalid="ignore"):
                theta = theta - cfg.learning_rate * tasks.gradient(task, theta, batch)
            if not np.all(np.isfinite(theta)):
                raise NumericError(f"client {client.id}: parameters became non-finite")
    return theta


def evaluate_cost(client: ClientState, model: np.ndarray, task: Task) -> float:
    return tasks.loss(task, model, client.data)
