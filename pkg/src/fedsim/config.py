"""Experiment spec files.

A spec is a YAML document whose keys mirror :class:`SimulationConfig`.
Shared federation settings live at the top level; the optional ``configs``
list names the members of the experiment, each overriding only the
strategy, selection policy or aggregation scope::

    master_seed: 7
    rounds: 50
    n_clients: 10
    lambda: 50
    heterogeneity: 0.0
    task: {kind: linear_regression, input_dim: 5}
    training: {epochs: 1, batch_size: 10, learning_rate: 0.02}
    selection: {rule: all}
    configs:
      - name: fedavg
        strategy: {strategy: fed_avg}
      - name: fedpid
        strategy: {strategy: fed_pid}

Unknown keys are rejected with the offending line number.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, replace

import yaml

from .aggregation import StrategyParams
from .engine import SimulationConfig
from .errors import ConfigError, FedSimError
from .federation import LocalTrainingConfig
from .tasks import Task

TOP_KEYS = {
    "master_seed", "data_seed", "rounds", "n_clients", "lambda", "heterogeneity", "noise",
    "test_size", "client_sizes", "aggregate_scope", "loss_threshold",
    "task", "training", "selection", "strategy", "configs",
}
MEMBER_KEYS = {"name", "strategy", "selection", "aggregate_scope"}
TASK_KEYS = {"kind", "input_dim", "hidden_dim"}
TRAINING_KEYS = {"epochs", "batch_size", "learning_rate"}
SELECTION_KEYS = {"rule", "include_outliers_every"}
STRATEGY_KEYS = {"strategy", "alpha", "beta", "gamma", "integral_window", "fedpid_i_scope"}
NAME_RE = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass
class ExperimentSpec:
    configs: list[tuple[str, SimulationConfig]]
    loss_threshold: float | None = None

    def with_seed(self, seed: int) -> "ExperimentSpec":
        return ExperimentSpec([(n, replace(c, master_seed=seed)) for n, c in self.configs], self.loss_threshold)


class _Node(dict):
    """Mapping that remembers the source line of itself and each key."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.line = 0
        self.key_lines: dict = {}


def _convert(node: yaml.Node, source: str):
    if isinstance(node, yaml.MappingNode):
        out = _Node()
        out.line = node.start_mark.line + 1
        for k, v in node.value:
            key = _convert(k, source)
            if key in out:
                raise ConfigError(f"{source}:{k.start_mark.line + 1}: duplicate key {key!r}")
            out[key] = _convert(v, source)
            out.key_lines[key] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_convert(v, source) for v in node.value]
    return yaml.safe_load(yaml.serialize(node))


def _section(parent: _Node, key: str, allowed: set, source: str) -> dict:
    value = parent.get(key)
    if value is None:
        return {}
    line = parent.key_lines.get(key, parent.line)
    if not isinstance(value, dict):
        raise ConfigError(f"{source}:{line}: section {key!r} must be a mapping")
    _reject_unknown(value, allowed, source, f"{key}.")
    return dict(value)


def _reject_unknown(mapping: _Node, allowed: set, source: str, prefix: str = "") -> None:
    for key in mapping:
        if key not in allowed:
            line = mapping.key_lines.get(key, mapping.line)
            raise ConfigError(f"{source}:{line}: unknown key {prefix}{key!r} (allowed: {', '.join(sorted(allowed))})")


def _line(mapping, key) -> int:
    return getattr(mapping, "key_lines", {}).get(key, getattr(mapping, "line", 0))


def parse_spec(text: str, source: str = "<config>") -> ExperimentSpec:
    try:
        root_node = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}" if mark is not None else source
        raise ConfigError(f"{where}: malformed YAML: {getattr(exc, 'problem', exc)}") from exc
    if root_node is None:
        raise ConfigError(f"{source}: empty config")
    root = _convert(root_node, source)
    if not isinstance(root, dict):
        raise ConfigError(f"{source}:1: top level must be a mapping")
    _reject_unknown(root, TOP_KEYS, source)

    task_sec = _section(root, "task", TASK_KEYS, source)
    training_sec = _section(root, "training", TRAINING_KEYS, source)
    base_selection = _section(root, "selection", SELECTION_KEYS, source)
    base_strategy = _section(root, "strategy", STRATEGY_KEYS, source)

    members = root.get("configs")
    if members is None:
        members = [_Node()]
    if not isinstance(members, list) or not members:
        raise ConfigError(f"{source}:{_line(root, 'configs')}: 'configs' must be a non-empty list")

    seed = root.get("master_seed", 0)
    configs = []
    try:
        task = Task(
            kind=task_sec.get("kind", "linear_regression"),
            input_dim=int(task_sec.get("input_dim", 5)),
            hidden_dim=int(task_sec.get("hidden_dim", 0)),
        )
        training = LocalTrainingConfig(**training_sec)
    except (FedSimError, TypeError, ValueError) as exc:
        raise ConfigError(f"{source}:{_line(root, 'task')}: {exc}") from exc

    for member in members:
        if not isinstance(member, dict):
            raise ConfigError(f"{source}:{_line(root, 'configs')}: each entry of 'configs' must be a mapping")
        _reject_unknown(member, MEMBER_KEYS, source, "configs[].")
        strategy_sec = {**base_strategy, **_section(member, "strategy", STRATEGY_KEYS, source)}
        selection_sec = {**base_selection, **_section(member, "selection", SELECTION_KEYS, source)}
        try:
            strategy = StrategyParams(**strategy_sec)
            name = str(member.get("name", strategy.strategy))
            if not NAME_RE.match(name):
                raise ConfigError(f"config name {name!r} may only use letters, digits, '_', '.', '-'")
            sizes = root.get("client_sizes")
            cfg = SimulationConfig(
                task=task,
                n_clients=int(root.get("n_clients", 10)),
                lam=float(root.get("lambda", 50.0)),
                heterogeneity=float(root.get("heterogeneity", 0.0)),
                rounds=int(root.get("rounds", 50)),
                strategy=strategy,
                selection_rule=selection_sec.get("rule", "all"),
                include_outliers_every=int(selection_sec.get("include_outliers_every", 0)),
                training=training,
                master_seed=int(seed),
                data_seed=None if root.get("data_seed") is None else int(root["data_seed"]),
                noise=float(root.get("noise", 0.1)),
                test_size=int(root.get("test_size", 1000)),
                client_sizes=None if sizes is None else tuple(int(s) for s in sizes),
                aggregate_scope=member.get("aggregate_scope", root.get("aggregate_scope", "participants")),
            )
        except (FedSimError, TypeError, ValueError) as exc:
            raise ConfigError(f"{source}:{member.line or 1}: {exc}") from exc
        configs.append((name, cfg))

    names = [n for n, _ in configs]
    if len(set(names)) != len(names):
        raise ConfigError(f"{source}:{_line(root, 'configs')}: config names must be unique, got {names}")
    threshold = root.get("loss_threshold")
    return ExperimentSpec(configs, None if threshold is None else float(threshold))


def load_spec(path: str | os.PathLike) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_spec(text, str(path))
