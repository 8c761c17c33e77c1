"""Acceptance gate: one test per exit criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py`` (the criterion lines
are written straight to the terminal, bypassing output capture).
"""

import math
import random
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import oracle
from conftest import STRATEGY_NAMES, random_instance
from fedsim import engine
from fedsim.aggregation import StrategyParams, compute_weights, fed_avg_weights
from fedsim.cli import main as cli_main
from fedsim.engine import SimulationConfig, simulate
from fedsim.federation import LocalTrainingConfig
from fedsim.selection import SelectionPolicy, select
from fedsim.tasks import Dataset, Task, gradient, loss

ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def report(capsys):
    def emit(criterion: str, ok: bool, detail: str):
        with capsys.disabled():
            sys.stdout.write(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}\n")
        return ok

    return emit


def random_params(strategy, rnd):
    if strategy == "fed_avg":
        return StrategyParams("fed_avg")
    if strategy == "fed_cost_w_avg":
        return StrategyParams("fed_cost_w_avg", alpha=rnd.random())
    cuts = sorted([rnd.random(), rnd.random()])
    a, b = cuts[0], cuts[1] - cuts[0]
    return StrategyParams(strategy, alpha=a, beta=b, gamma=1.0 - a - b)


def test_c1_weight_oracle_equivalence(report):
    rnd = random.Random(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        inp, raw = random_instance(rnd)
        for strategy in STRATEGY_NAMES:
            params = random_params(strategy, rnd)
            got = compute_weights(inp, params).weights
            want = oracle.weights(strategy, raw, inp.round_index, *params.coefficients)
            worst = max(worst, float(np.max(np.abs(got - np.array(want)))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 5.0
    report("C1 weight-oracle equivalence", ok, f"max |dev|={worst:.3e} (tol 1e-12), {elapsed:.2f}s (limit 5s)")
    assert ok


def test_c2_degeneration_to_fed_avg(report):
    rnd = random.Random(2)
    degenerate = [
        StrategyParams("fed_cost_w_avg", alpha=1.0),
        StrategyParams("fed_pid_avg", alpha=1.0, beta=0.0, gamma=0.0),
        StrategyParams("fed_pid", alpha=1.0, beta=0.0, gamma=0.0),
    ]
    worst = 0.0
    for _ in range(100):
        inp, _ = random_instance(rnd, adversarial=rnd.random() < 0.3)
        base = fed_avg_weights(inp).weights
        for params in degenerate:
            worst = max(worst, float(np.max(np.abs(compute_weights(inp, params).weights - base))))
    ok = worst <= 1e-12
    report("C2 degeneration to FedAvg", ok, f"max |dev|={worst:.3e} (tol 1e-12) over 100 instances x 3 strategies")
    assert ok


def test_c3_normalisation(report):
    rnd = random.Random(3)
    worst, count = 0.0, 0
    for k in range(400):
        inp, _ = random_instance(rnd, adversarial=k % 2 == 1)
        for strategy in STRATEGY_NAMES:
            for params in (StrategyParams(strategy), random_params(strategy, rnd)):
                w = compute_weights(inp, params).weights
                assert np.all(np.isfinite(w))
                worst = max(worst, abs(float(w.sum()) - 1.0))
                count += 1
    ok = worst <= 1e-9
    report("C3 weight normalisation", ok, f"max |sum-1|={worst:.3e} (tol 1e-9) over {count} weightings, half adversarial")
    assert ok


def _central_difference(task, theta, data, h=1e-5):
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (loss(task, theta + e, data) - loss(task, theta - e, data)) / (2.0 * h)
    return g


def test_c4_gradient_checks(report):
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    worst = {}
    for task in (Task("linear_regression", 5), Task("logistic_regression", 5), Task("mlp", 4, 6)):
        worst[task.kind] = 0.0
        for _ in range(100):
            theta = rng.normal(size=task.param_count)
            n = int(rng.integers(1, 30))
            X = rng.normal(size=(n, task.input_dim))
            y = (rng.random(n) < 0.5).astype(float) if task.is_classification else rng.normal(size=n)
            data = Dataset(X, y)
            g, fd = gradient(task, theta, data), _central_difference(task, theta, data)
            rel = np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd), 1e-6)
            worst[task.kind] = max(worst[task.kind], float(rel))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-4 and elapsed < 10.0
    detail = ", ".join(f"{k} {v:.2e}" for k, v in worst.items())
    report("C4 gradient checks", ok, f"max rel err {detail} (tol 1e-4), {elapsed:.2f}s (limit 10s)")
    assert ok


def test_c5_convergence_parity(report):
    t0 = time.perf_counter()
    training = LocalTrainingConfig(epochs=1, batch_size=10, learning_rate=0.02)
    task = Task("linear_regression", 5)
    results, central_loss = {}, None
    for strategy in STRATEGY_NAMES:
        cfg = SimulationConfig(
            task, n_clients=10, lam=50.0, heterogeneity=0.0, rounds=50,
            strategy=StrategyParams(strategy), training=training, master_seed=1,
        )
        res = simulate(cfg)
        if central_loss is None:
            budget = engine.federated_step_budget([c.size for c in res.clients], training, cfg.rounds)
            theta = engine.centralized_sgd(task, [c.data for c in res.clients], res.initial_model, training, budget, seed=5)
            central_loss = loss(task, theta, res.test_data)
        results[strategy] = res.records[-1].global_model_loss
    elapsed = time.perf_counter() - t0
    rel = {s: abs(v - central_loss) / central_loss for s, v in results.items()}
    ok = max(rel.values()) <= 0.05 and elapsed < 60.0
    detail = ", ".join(f"{s} {results[s]:.5f} ({results[s] / central_loss - 1:+.2%})" for s in STRATEGY_NAMES)
    report(
        "C5 convergence parity",
        ok,
        f"central SGD MSE {central_loss:.5f}; {detail} (tol 5%), {elapsed:.2f}s (limit 60s)",
    )
    assert ok


def test_c6_heterogeneity_smoke(report):
    lam = 50.0
    sizes = [int(s) for s in np.maximum(np.random.default_rng(6).poisson(lam, size=10), 1)]
    sizes[0] = int(5 * lam)
    ratios = {}
    for strategy in STRATEGY_NAMES:
        cfg = SimulationConfig(
            Task("linear_regression", 5), n_clients=10, lam=lam, heterogeneity=0.5, rounds=50,
            strategy=StrategyParams(strategy), training=LocalTrainingConfig(1, 10, 0.02),
            master_seed=6, client_sizes=tuple(sizes),
        )
        losses = [r.global_model_loss for r in simulate(cfg).records]
        ratios[strategy] = (losses[0], losses[-1])
    ok = all(last < 0.5 * first for first, last in ratios.values())
    detail = ", ".join(f"{s} {a:.3f}->{b:.3f}" for s, (a, b) in ratios.items())
    report("C6 heterogeneity smoke test", ok, f"round-1 -> final loss: {detail} (need final < 0.5 x round-1)")
    assert ok


def test_c7_selection_guarantees(report):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    violations = 0
    for r in range(1000):
        n = int(rng.integers(1, 40))
        sizes = np.maximum(rng.poisson(20.0, size=n), 1)
        clients = list(enumerate(int(s) for s in sizes))
        floor = SelectionPolicy.fitted("poisson_lambda_floor50", sizes)
        chosen = set(select(floor, clients, r))
        if len(chosen) < math.ceil(n / 2):
            violations += 1
        if any(j not in chosen for j, s in clients if s <= floor.lambda_estimate):
            violations += 1
        two = SelectionPolicy.fitted("poisson_2lambda", sizes)
        excluded = {j for j, _ in clients} - set(select(two, clients, r))
        if excluded != {j for j, s in clients if s > 2 * two.lambda_estimate}:
            violations += 1
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and elapsed < 5.0
    report("C7 selection guarantees", ok, f"{violations} violations over 1000 rounds, {elapsed:.2f}s (limit 5s)")
    assert ok


def test_c8_cli_determinism(report, tmp_path):
    spec = ROOT / "configs" / "compare_strategies.yaml"
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli_main(["run", "--config", str(spec), "--out", str(a), "--workers", "1"]) == 0
    assert cli_main(["run", "--config", str(spec), "--out", str(b), "--workers", "4"]) == 0
    streams = sorted(p.name for p in a.glob("*.rounds.jsonl"))
    same = [n for n in streams if (a / n).read_bytes() == (b / n).read_bytes()]
    ok = len(streams) >= 2 and same == streams
    report("C8 CLI determinism", ok, f"{len(same)}/{len(streams)} result streams byte-identical (workers 1 vs 4)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
