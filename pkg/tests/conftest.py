import random

import numpy as np
import pytest

from fedsim.aggregation import AggregationInput, ClientInput

STRATEGY_NAMES = ("fed_avg", "fed_cost_w_avg", "fed_pid_avg", "fed_pid")


def random_instance(rnd: random.Random, adversarial: bool = False, dim: int = 3):
    """Random aggregation problem as (AggregationInput, oracle client dicts)."""
    n = rnd.randint(1, 6)
    length = rnd.randint(1, 10)
    round_index = length - 1 + rnd.randint(0, 5)
    clients, raw = [], []
    for j in range(n):
        rounds = sorted(rnd.sample(range(round_index), length - 1)) + [round_index]
        if adversarial and rnd.random() < 0.5:
            costs = [rnd.choice([0.0, 1e-15, 1e-13, 1e-12]) for _ in rounds]
        elif adversarial:
            # rising costs make every improvement negative
            start = rnd.uniform(0.1, 2.0)
            costs = [start * (1.0 + 0.3 * t) for t in range(length)]
        else:
            costs = [rnd.lognormvariate(0.0, 1.0) for _ in rounds]
        history = list(zip(rounds, costs))
        baseline = next((c for r, c in history if r >= 1), None)
        size = rnd.randint(1, 200)
        model = np.array([rnd.gauss(0.0, 1.0) for _ in range(dim)])
        clients.append(ClientInput(j, size, model, history, baseline))
        raw.append({"size": size, "costs": costs, "baseline": baseline, "model": model})
    return AggregationInput(clients, round_index), raw


@pytest.fixture
def rnd():
    return random.Random(20240917)
