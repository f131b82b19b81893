"""Run configuration: a YAML file of nested sections, addressable by flat
dotted key paths (``environment.cache``) for command-line overrides.

Example::

    input: [offers.csv]
    schema: {id: id, blocking: type, delimiter: ","}
    mode: blockingBased
    sizing: {max_mem: 3000000000, threads: 4}     # or {m: 700}
    min_size_fraction: 0.3
    strategy: wam                                  # preset, or a mapping
    environment: {workers: 2, threads: 4, cache: 16}
"""

from __future__ import annotations

import copy
import math
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .dataservice import Schema
from .errors import ConfigurationError
from .partitioning import BLOCKING_BASED, MODES, SIZE_BASED, SizingInput, max_partition_size
from .strategies import MatchStrategy, default_lrm, default_wam, strategy_from_dict, strategy_to_dict

DEFAULT_MAX_MEM = 3_000_000_000

PRESETS = {"wam": default_wam, "lrm": default_lrm}

DEFAULTS: dict[str, Any] = {
    "input": [],
    "schema": {"id": "id", "blocking": None, "attributes": None, "delimiter": ","},
    "mode": SIZE_BASED,
    "sizing": {"max_mem": DEFAULT_MAX_MEM, "threads": None, "c_ms": None, "m": None},
    "min_size_fraction": 0.3,
    "strategy": "wam",
    "environment": {
        "workers": 1,
        "threads": 4,
        "cache": 0,
        "transport": "inprocess",
        "compute": "thread",
        "affinity": True,
        "heartbeat_interval": 1.0,
        "heartbeat_timeout": 5.0,
        "membership_timeout": 30.0,
    },
    "two_source": {"duplicate_free": False},
    "synthetic": {"n": 1000, "miss_rate": 0.2, "num_keys": 20, "zipf_exponent": 1.1, "duplicate_rate": 0.35},
    "seed": 0,
    "out_dir": "out",
}


def _merge(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def set_path(tree: dict, dotted: str, value: Any) -> None:
    node = tree
    parts = dotted.split(".")
    for p in parts[:-1]:
        nxt = node.get(p)
        if not isinstance(nxt, dict):
            nxt = node[p] = {}
        node = nxt
    node[parts[-1]] = value


def _int(tree: Mapping, path: str, minimum: int) -> int:
    value = _get(tree, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise ConfigurationError(f"expected an integer, got {value!r}", path)
    if value < minimum:
        raise ConfigurationError(f"must be >= {minimum}", path)
    return int(value)


def _num(tree: Mapping, path: str) -> float:
    value = _get(tree, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"expected a number, got {value!r}", path)
    return value


def _get(tree: Mapping, path: str) -> Any:
    node: Any = tree
    for p in path.split("."):
        node = node[p]
    return node


@dataclass
class EnvironmentConfig:
    workers: int = 1
    threads: int = 4
    cache: int = 0
    transport: str = "inprocess"
    compute: str = "thread"
    affinity: bool = True
    heartbeat_interval: float = 1.0
    heartbeat_timeout: float = 5.0
    membership_timeout: float = 30.0


@dataclass
class RunConfig:
    inputs: list[str]
    schema: Schema
    mode: str
    strategy: MatchStrategy
    environment: EnvironmentConfig
    max_mem: float = DEFAULT_MAX_MEM
    sizing_threads: int | None = None
    pair_cost: float | None = None
    explicit_m: int | None = None
    min_size_fraction: float = 0.3
    duplicate_free: bool = False
    synthetic: dict = field(default_factory=dict)
    seed: int = 0
    out_dir: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def max_partition_size(self) -> int:
        if self.explicit_m is not None:
            return self.explicit_m
        return max_partition_size(
            SizingInput(
                self.max_mem,
                self.sizing_threads or self.environment.threads,
                self.pair_cost or self.strategy.pair_memory_cost,
            )
        )

    @property
    def min_partition_size(self) -> int:
        return math.floor(self.min_size_fraction * self.max_partition_size)

    def to_dict(self) -> dict:
        d = copy.deepcopy(self.raw)
        d["strategy"] = strategy_to_dict(self.strategy)
        return d


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigurationError(str(exc), "config") from None
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"not valid YAML: {exc}", "config") from None
    if not isinstance(data, dict):
        raise ConfigurationError("top level must be a mapping", "config")
    return data


def _strategy(spec: Any) -> MatchStrategy:
    if isinstance(spec, str):
        if spec in PRESETS:
            return PRESETS[spec]()
        path = Path(spec)
        if path.is_file():
            spec = load_config_file(path)
        else:
            raise ConfigurationError(f"unknown preset or file {spec!r} (presets: {sorted(PRESETS)})", "strategy")
    if not isinstance(spec, Mapping):
        raise ConfigurationError("expected a preset name or a mapping", "strategy")
    return strategy_from_dict(dict(spec))


def build_config(data: Mapping, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Validate a config tree (plus dotted-path overrides) into a RunConfig."""
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigurationError("unknown top-level key", sorted(unknown)[0])
    tree = _merge(DEFAULTS, data)
    for k, v in (overrides or {}).items():
        if v is not None:
            set_path(tree, k, v)

    inputs = tree["input"]
    if isinstance(inputs, str):
        inputs = [inputs]
    if not isinstance(inputs, list) or len(inputs) > 2:
        raise ConfigurationError("expected one or two input paths", "input")

    mode = tree["mode"]
    if mode not in MODES:
        raise ConfigurationError(f"must be one of {MODES}", "mode")
    sch = tree["schema"]
    if not sch.get("id"):
        raise ConfigurationError("an id column is required", "schema.id")
    attrs = sch.get("attributes")
    schema = Schema(sch["id"], sch.get("blocking") or None, tuple(attrs) if attrs else None, sch.get("delimiter") or ",")
    if len(schema.delimiter) != 1:
        raise ConfigurationError("must be a single character", "schema.delimiter")
    if mode == BLOCKING_BASED and not schema.blocking_column:
        raise ConfigurationError("blocking mode requires a blocking column", "schema.blocking")

    strategy = _strategy(tree["strategy"])

    env_t = tree["environment"]
    env = EnvironmentConfig(
        workers=_int(tree, "environment.workers", 1),
        threads=_int(tree, "environment.threads", 1),
        cache=_int(tree, "environment.cache", 0),
        transport=env_t.get("transport", "inprocess"),
        compute=env_t.get("compute", "thread"),
        affinity=bool(env_t.get("affinity", True)),
        heartbeat_interval=_num(tree, "environment.heartbeat_interval"),
        heartbeat_timeout=_num(tree, "environment.heartbeat_timeout"),
        membership_timeout=_num(tree, "environment.membership_timeout"),
    )
    if env.transport not in ("inprocess", "socket"):
        raise ConfigurationError("must be 'inprocess' or 'socket'", "environment.transport")
    if env.compute not in ("thread", "process"):
        raise ConfigurationError("must be 'thread' or 'process'", "environment.compute")

    sizing = tree["sizing"]
    m = _int(tree, "sizing.m", 1) if sizing.get("m") is not None else None
    max_mem = _num(tree, "sizing.max_mem")
    if max_mem <= 0:
        raise ConfigurationError("must be > 0", "sizing.max_mem")
    s_threads = _int(tree, "sizing.threads", 1) if sizing.get("threads") is not None else None
    c_ms = _num(tree, "sizing.c_ms") if sizing.get("c_ms") is not None else None
    if c_ms is not None and c_ms <= 0:
        raise ConfigurationError("must be > 0", "sizing.c_ms")
    frac = _num(tree, "min_size_fraction")
    if not 0.0 <= frac <= 1.0:
        raise ConfigurationError("must lie in [0, 1]", "min_size_fraction")

    cfg = RunConfig(
        inputs=list(inputs),
        schema=schema,
        mode=mode,
        strategy=strategy,
        environment=env,
        max_mem=max_mem,
        sizing_threads=s_threads,
        pair_cost=c_ms,
        explicit_m=m,
        min_size_fraction=frac,
        duplicate_free=bool(tree["two_source"].get("duplicate_free", False)),
        synthetic=dict(tree["synthetic"]),
        seed=_int(tree, "seed", 0),
        out_dir=str(tree["out_dir"]),
        raw=tree,
    )
    cfg.max_partition_size  # surfaces sizing errors now
    return cfg
