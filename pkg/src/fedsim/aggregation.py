"""Aggregation weights for FedAvg, FedCostWAvg, FedPIDAvg and FedPID.

Every strategy produces per-client weights of the form::

    w_j = alpha * p_j + beta * d_j + gamma * i_j

where ``p_j = s_j / S`` is the dataset-size share, ``d_j = k_j / K`` is the
normalised recent cost improvement and ``i_j = m_j / I`` is the normalised
integral-style term. The strategies differ only in how ``k_j`` and ``m_j``
are computed:

=================  ===========================  ================================
strategy           k_j                          m_j
=================  ===========================  ================================
fed_avg            (unused)                     (unused)
fed_cost_w_avg     c_prev / c_cur               (unused)
fed_pid_avg        c_prev - c_cur               sum of the last ``window`` costs
fed_pid            c_prev - c_cur               c_baseline / c_cur
=================  ===========================  ================================

All sums (S, K, I) run over the clients passed in, i.e. over the
participants of the round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError, NumericError, ProtocolError
from .params import weighted_sum

STRATEGIES = ("fed_avg", "fed_cost_w_avg", "fed_pid_avg", "fed_pid")
I_SCOPES = ("per_client", "global_mean")

COST_FLOOR = 1e-12
MIN_K = 1e-12
SUM_TOL = 1e-9

DEFAULT_COST_W_ALPHA = 0.5
DEFAULT_PID = (0.45, 0.45, 0.10)


@dataclass(frozen=True)
class StrategyParams:
    """Strategy choice plus its (alpha, beta, gamma) mixing coefficients.

    Coefficients left as ``None`` are filled with the published defaults:
    alpha=0.5 for FedCostWAvg and (0.45, 0.45, 0.1) for FedPIDAvg. FedPID
    reuses the FedPIDAvg triple.
    """

    strategy: str = "fed_pid"
    alpha: float | None = None
    beta: float | None = None
    gamma: float | None = None
    integral_window: int = 6
    fedpid_i_scope: str = "per_client"

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.fedpid_i_scope not in I_SCOPES:
            raise ConfigError(f"fedpid_i_scope must be one of {I_SCOPES}")
        if int(self.integral_window) < 1:
            raise ConfigError("integral_window must be positive")

        given = (self.alpha, self.beta, self.gamma)
        if self.strategy == "fed_avg":
            a, b, g = 1.0, 0.0, 0.0
            if any(v is not None and v != d for v, d in zip(given, (a, b, g))):
                raise ConfigError("fed_avg takes no alpha/beta/gamma other than (1, 0, 0)")
        elif self.strategy == "fed_cost_w_avg":
            a = DEFAULT_COST_W_ALPHA if self.alpha is None else float(self.alpha)
            b, g = 1.0 - a, 0.0
            if self.beta is not None and abs(float(self.beta) - b) > SUM_TOL:
                raise ConfigError("fed_cost_w_avg requires beta == 1 - alpha")
            if self.gamma not in (None, 0, 0.0):
                raise ConfigError("fed_cost_w_avg requires gamma == 0")
        else:
            if all(v is None for v in given):
                a, b, g = DEFAULT_PID
            elif any(v is None for v in given):
                raise ConfigError(f"{self.strategy} needs all of alpha, beta, gamma (or none for defaults)")
            else:
                a, b, g = (float(v) for v in given)
            if abs(a + b + g - 1.0) > SUM_TOL:
                raise ConfigError(f"alpha + beta + gamma must equal 1, got {a + b + g!r}")
        for name, v in (("alpha", a), ("beta", b), ("gamma", g)):
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise ConfigError(f"{name}={v!r} is outside [0, 1]")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)
        object.__setattr__(self, "gamma", g)

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return self.alpha, self.beta, self.gamma


@dataclass
class ClientInput:
    """What the server knows about one participant when aggregating."""

    id: int
    size: int
    model: np.ndarray
    cost_history: Sequence[tuple[int, float]] = ()
    baseline_cost: float | None = None


@dataclass
class AggregationInput:
    clients: list[ClientInput]
    round_index: int

    def __post_init__(self):
        if not self.clients:
            raise DimensionError("aggregation needs at least one client")
        lengths = {np.asarray(c.model).size for c in self.clients}
        if len(lengths) != 1:
            raise DimensionError(f"client models have differing lengths {sorted(lengths)}")
        for c in self.clients:
            if int(c.size) < 1:
                raise ConfigError(f"client {c.id}: size must be positive")
            if any(r > self.round_index for r, _ in c.cost_history):
                raise ProtocolError(f"client {c.id}: cost recorded after round {self.round_index}")


@dataclass
class AggregationWeights:
    ids: list[int]
    weights: np.ndarray
    p_terms: np.ndarray
    d_terms: np.ndarray
    i_terms: np.ndarray
    coefficients: tuple[float, float, float] = field(default=(1.0, 0.0, 0.0))

    def as_dict(self) -> dict[int, dict[str, float]]:
        return {
            cid: {"weight": float(w), "p": float(p), "d": float(d), "i": float(i)}
            for cid, w, p, d, i in zip(self.ids, self.weights, self.p_terms, self.d_terms, self.i_terms)
        }


def _costs(client: ClientInput) -> list[float]:
    if not client.cost_history:
        raise ProtocolError(f"client {client.id} has no recorded cost")
    return [max(float(c), COST_FLOOR) for _, c in client.cost_history]


def _uniform(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def _normalise_nonnegative(values: np.ndarray) -> np.ndarray:
    clipped = np.maximum(values, 0.0)
    total = clipped.sum()
    if total < MIN_K:
        return _uniform(values.size)
    return clipped / total


def _p_terms(inp: AggregationInput) -> np.ndarray:
    sizes = np.array([c.size for c in inp.clients], dtype=np.float64)
    return sizes / sizes.sum()


def _d_terms(inp: AggregationInput, ratio: bool) -> np.ndarray:
    histories = [_costs(c) for c in inp.clients]
    n = len(histories)
    # bootstrap: without two costs per participant there is no improvement to compare
    if inp.round_index == 0 or any(len(h) < 2 for h in histories):
        return _uniform(n)
    if ratio:
        k = np.array([h[-2] / h[-1] for h in histories])
    else:
        k = np.array([h[-2] - h[-1] for h in histories])
    return _normalise_nonnegative(k)


def _window_i_terms(inp: AggregationInput, window: int) -> np.ndarray:
    m = np.array([sum(_costs(c)[-window:]) for c in inp.clients])
    return m / m.sum()


def _baseline_i_terms(inp: AggregationInput, scope: str) -> np.ndarray:
    n = len(inp.clients)
    current = [_costs(c)[-1] for c in inp.clients]
    baselines = [c.baseline_cost for c in inp.clients]
    if inp.round_index <= 1 or any(b is None for b in baselines):
        return _uniform(n)
    base = np.array([max(float(b), COST_FLOOR) for b in baselines])
    cur = np.array(current)
    if scope == "global_mean":
        m = np.full(n, base.mean() / cur.mean())
    else:
        m = base / cur
    return m / m.sum()


def _combine(inp: AggregationInput, params: StrategyParams, p, d, i) -> AggregationWeights:
    a, b, g = params.coefficients
    w = a * p + b * d + g * i
    if not np.all(np.isfinite(w)):
        raise NumericError("aggregation weights are not finite")
    if abs(w.sum() - 1.0) > SUM_TOL:
        raise NumericError(f"aggregation weights sum to {w.sum()!r}")
    return AggregationWeights([c.id for c in inp.clients], w, p, d, i, (a, b, g))


def fed_avg_weights(inp: AggregationInput) -> AggregationWeights:
    p = _p_terms(inp)
    zeros = np.zeros_like(p)
    return _combine(inp, StrategyParams("fed_avg"), p, zeros, zeros)


def fed_cost_w_avg_weights(inp: AggregationInput, params: StrategyParams) -> AggregationWeights:
    p = _p_terms(inp)
    return _combine(inp, params, p, _d_terms(inp, ratio=True), np.zeros_like(p))


def fed_pid_avg_weights(inp: AggregationInput, params: StrategyParams) -> AggregationWeights:
    return _combine(
        inp, params, _p_terms(inp), _d_terms(inp, ratio=False), _window_i_terms(inp, int(params.integral_window))
    )


def fed_pid_weights(inp: AggregationInput, params: StrategyParams) -> AggregationWeights:
    return _combine(
        inp, params, _p_terms(inp), _d_terms(inp, ratio=False), _baseline_i_terms(inp, params.fedpid_i_scope)
    )


def compute_weights(inp: AggregationInput, params: StrategyParams) -> AggregationWeights:
    if params.strategy == "fed_avg":
        return fed_avg_weights(inp)
    if params.strategy == "fed_cost_w_avg":
        return fed_cost_w_avg_weights(inp, params)
    if params.strategy == "fed_pid_avg":
        return fed_pid_avg_weights(inp, params)
    return fed_pid_weights(inp, params)


def aggregate(inp: AggregationInput, params: StrategyParams) -> np.ndarray:
    """New global model as the weighted sum of the participants' local models."""
    weights = compute_weights(inp, params)
    return weighted_sum([c.model for c in inp.clients], weights.weights)
