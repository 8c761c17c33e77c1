"""The federated round loop: select, broadcast, train locally, aggregate, record."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import rng as rngmod
from . import tasks
from .aggregation import AggregationInput, ClientInput, StrategyParams, compute_weights
from .errors import ConfigError, DivergenceError, NumericError
from .federation import ClientState, LocalTrainingConfig, evaluate_cost, local_train
from .params import weighted_sum
from .selection import RULES, SelectionPolicy, select
from .tasks import Dataset, Task

logger = logging.getLogger(__name__)

AGGREGATE_SCOPES = ("participants", "carry_forward")
BASELINE_ROUND = 1
INIT_RANGE = 0.1


@dataclass(frozen=True)
class SimulationConfig:
    task: Task
    n_clients: int = 10
    lam: float = 50.0
    heterogeneity: float = 0.0
    rounds: int = 50
    strategy: StrategyParams = field(default_factory=StrategyParams)
    selection_rule: str = "all"
    include_outliers_every: int = 0
    training: LocalTrainingConfig = field(default_factory=LocalTrainingConfig)
    master_seed: int = 0
    # members of one experiment share data_seed so they see the same federation
    data_seed: int | None = None
    noise: float = 0.1
    test_size: int = 1000
    client_sizes: tuple[int, ...] | None = None
    aggregate_scope: str = "participants"

    def __post_init__(self):
        if int(self.rounds) < 1:
            raise ConfigError("rounds must be at least 1")
        if int(self.n_clients) < 1:
            raise ConfigError("n_clients must be at least 1")
        if self.selection_rule not in RULES:
            raise ConfigError(f"unknown selection rule {self.selection_rule!r}")
        if self.aggregate_scope not in AGGREGATE_SCOPES:
            raise ConfigError(f"aggregate_scope must be one of {AGGREGATE_SCOPES}")
        if not self.lam > 0:
            raise ConfigError("lambda must be positive")
        if not 0.0 <= self.heterogeneity <= 1.0:
            raise ConfigError("heterogeneity must lie in [0, 1]")

    @property
    def effective_data_seed(self) -> int:
        return self.master_seed if self.data_seed is None else self.data_seed


@dataclass
class ClientRoundStats:
    id: int
    size: int
    cost: float
    weight: float
    p: float
    d: float
    i: float
    stale: bool = False


@dataclass
class RoundRecord:
    round: int
    selected_ids: list[int]
    clients: list[ClientRoundStats]
    global_model_loss: float
    wall_time_ms: int = 0

    @property
    def weights(self) -> dict[int, float]:
        return {c.id: c.weight for c in self.clients}

    def to_dict(self, include_timing: bool = False) -> dict:
        out = {
            "round": self.round,
            "selected_ids": list(self.selected_ids),
            "clients": [asdict(c) for c in self.clients],
            "global_model_loss": self.global_model_loss,
        }
        if include_timing:
            out["wall_time_ms"] = self.wall_time_ms
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        return cls(
            round=int(d["round"]),
            selected_ids=[int(i) for i in d["selected_ids"]],
            clients=[ClientRoundStats(**c) for c in d["clients"]],
            global_model_loss=float(d["global_model_loss"]),
            wall_time_ms=int(d.get("wall_time_ms", 0)),
        )


@dataclass
class SimulationResult:
    final_model: np.ndarray
    records: list[RoundRecord]
    initial_model: np.ndarray
    clients: list[ClientState]
    test_data: Dataset


def init_global_model(task: Task, seed: int) -> np.ndarray:
    """Parameters drawn i.i.d. uniform in [-0.1, 0.1]."""
    return np.random.default_rng(seed).uniform(-INIT_RANGE, INIT_RANGE, size=task.param_count)


def build_federation(config: SimulationConfig) -> tuple[list[Dataset], Dataset]:
    return tasks.generate_federation_data(
        config.task,
        config.n_clients,
        config.lam,
        config.heterogeneity,
        rngmod.int_seed(config.effective_data_seed, "data"),
        noise=config.noise,
        test_size=config.test_size,
        sizes=config.client_sizes,
    )


def run_federation(
    task: Task,
    client_data: Sequence[Dataset],
    test_data: Dataset,
    *,
    strategy: StrategyParams,
    training: LocalTrainingConfig,
    rounds: int,
    master_seed: int = 0,
    selection_rule: str = "all",
    include_outliers_every: int = 0,
    aggregate_scope: str = "participants",
    initial_model: np.ndarray | None = None,
    workers: int = 1,
    on_round: Callable[[RoundRecord], None] | None = None,
) -> SimulationResult:
    """Run ``rounds`` federated rounds over pre-built client datasets.

    Local training of the selected clients may run on a thread pool; results
    are gathered in client-id order, so the output does not depend on
    ``workers``.
    """
    if aggregate_scope not in AGGREGATE_SCOPES:
        raise ConfigError(f"aggregate_scope must be one of {AGGREGATE_SCOPES}")
    clients = [ClientState(j, d) for j, d in enumerate(client_data)]
    if not clients:
        raise ConfigError("a federation needs at least one client")
    policy = SelectionPolicy.fitted(selection_rule, [c.size for c in clients], include_outliers_every)
    if initial_model is None:
        initial_model = init_global_model(task, rngmod.int_seed(master_seed, "init"))
    global_model = np.array(initial_model, dtype=np.float64)
    initial_model = global_model.copy()
    records: list[RoundRecord] = []

    def train_one(args):
        client, r, start = args
        stream = rngmod.stream(master_seed, "train", client.id, r)
        try:
            model = local_train(client, start, task, training, stream)
            return model, evaluate_cost(client, model, task)
        except NumericError as exc:
            raise DivergenceError(r, client.id, str(exc)) from exc

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for r in range(int(rounds)):
            t0 = time.perf_counter()
            selected = select(policy, [(c.id, c.size) for c in clients], r)
            jobs = [(clients[cid], r, global_model) for cid in selected]
            results = list(pool.map(train_one, jobs) if pool else map(train_one, jobs))

            # barrier: all local work for the round is done
            for cid, (model, cost) in zip(selected, results):
                clients[cid].local_model = model
                clients[cid].record_cost(r, cost)

            members = list(selected)
            if aggregate_scope == "carry_forward":
                members = [c.id for c in clients if c.local_model is not None]
            inputs = [
                ClientInput(
                    id=c.id,
                    size=c.size,
                    model=c.local_model,
                    cost_history=c.cost_history,
                    baseline_cost=c.baseline_cost(BASELINE_ROUND),
                )
                for c in (clients[cid] for cid in members)
            ]
            agg_in = AggregationInput(inputs, r)
            weights = compute_weights(agg_in, strategy)
            try:
                global_model = weighted_sum([ci.model for ci in inputs], weights.weights)
                test_loss = tasks.loss(task, global_model, test_data)
            except NumericError as exc:
                raise DivergenceError(r, None, str(exc)) from exc

            chosen = set(selected)
            stats = [
                ClientRoundStats(
                    id=ci.id,
                    size=ci.size,
                    cost=clients[ci.id].cost_history[-1][1],
                    weight=float(w),
                    p=float(p),
                    d=float(d),
                    i=float(i),
                    stale=ci.id not in chosen,
                )
                for ci, w, p, d, i in zip(inputs, weights.weights, weights.p_terms, weights.d_terms, weights.i_terms)
            ]
            record = RoundRecord(r, list(selected), stats, test_loss, int(round((time.perf_counter() - t0) * 1000)))
            records.append(record)
            logger.debug("round %d: %d clients, test loss %.6g", r, len(selected), test_loss)
            if on_round is not None:
                on_round(record)
    finally:
        if pool is not None:
            pool.shutdown()
    return SimulationResult(global_model, records, initial_model, clients, test_data)


def simulate(config: SimulationConfig, workers: int = 1, on_round=None) -> SimulationResult:
    client_data, test_data = build_federation(config)
    return run_federation(
        config.task,
        client_data,
        test_data,
        strategy=config.strategy,
        training=config.training,
        rounds=config.rounds,
        master_seed=config.master_seed,
        selection_rule=config.selection_rule,
        include_outliers_every=config.include_outliers_every,
        aggregate_scope=config.aggregate_scope,
        workers=workers,
        on_round=on_round,
    )


def run(config: SimulationConfig, workers: int = 1) -> tuple[np.ndarray, list[RoundRecord]]:
    result = simulate(config, workers=workers)
    return result.final_model, result.records


def federated_step_budget(sizes: Iterable[int], training: LocalTrainingConfig, rounds: int) -> int:
    """Total SGD steps taken across all clients when every client trains every round."""
    return int(rounds) * sum(training.steps_for(s) for s in sizes)


def centralized_sgd(
    task: Task,
    client_data: Sequence[Dataset],
    initial_model: np.ndarray,
    training: LocalTrainingConfig,
    total_steps: int,
    seed: int = 0,
) -> np.ndarray:
    """Plain mini-batch SGD on the pooled client data for exactly ``total_steps`` steps."""
    pooled = Dataset(
        np.vstack([d.features for d in client_data]),
        np.concatenate([d.targets for d in client_data]),
    )
    gen = np.random.default_rng(seed)
    theta = np.array(initial_model, dtype=np.float64)
    bs = int(training.batch_size)
    steps = 0
    while steps < total_steps:
        order = gen.permutation(pooled.size)
        for start in range(0, pooled.size, bs):
            if steps >= total_steps:
                break
            theta = theta - training.learning_rate * tasks.gradient(task, theta, pooled.subset(order[start : start + bs]))
            steps += 1
    return theta


def write_records(path: str | os.PathLike, records: Iterable[RoundRecord], include_timing: bool = False) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(include_timing), sort_keys=True) + "\n")


def read_records(path: str | os.PathLike) -> list[RoundRecord]:
    with open(path, encoding="utf-8") as fh:
        return [RoundRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
