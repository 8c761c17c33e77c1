"""Federated learning simulator for size-, cost- and PID-weighted model averaging."""

from .aggregation import (
    AggregationInput,
    AggregationWeights,
    ClientInput,
    StrategyParams,
    aggregate,
    compute_weights,
    fed_avg_weights,
    fed_cost_w_avg_weights,
    fed_pid_avg_weights,
    fed_pid_weights,
)
from .engine import RoundRecord, SimulationConfig, init_global_model, run, simulate
from .errors import ConfigError, DimensionError, DivergenceError, FedSimError, NumericError, ProtocolError
from .estimator import FederatedClassifier, FederatedRegressor
from .federation import ClientState, LocalTrainingConfig, evaluate_cost, local_train
from .params import l2_distance, load_checkpoint, save_checkpoint, weighted_sum
from .selection import SelectionPolicy, fit_lambda, select
from .tasks import Dataset, Task, generate_federation_data, gradient, loss

__version__ = "0.1.0"
