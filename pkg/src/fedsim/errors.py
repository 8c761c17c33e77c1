"""Exception hierarchy shared by all fedsim modules."""

from __future__ import annotations


class FedSimError(Exception):
    """Base class for every error raised by fedsim."""


class DimensionError(FedSimError, ValueError):
    """Parameter vectors or datasets have incompatible shapes."""


class NumericError(FedSimError, ArithmeticError):
    """A NaN or infinity appeared where a finite value is required."""


class ConfigError(FedSimError, ValueError):
    """Invalid configuration or hyperparameters."""


class ProtocolError(FedSimError, RuntimeError):
    """Aggregation was asked to run without the cost history it needs."""


class DivergenceError(NumericError):
    """Local training diverged for a specific client in a specific round."""

    def __init__(self, round_index: int, client_id: int | None, detail: str = ""):
        self.round_index = round_index
        self.client_id = client_id
        where = f" on client {client_id}" if client_id is not None else ""
        msg = f"training diverged in round {round_index}{where}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
