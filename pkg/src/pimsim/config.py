"""Simulator configuration with the evaluated system as defaults, and JSON loading."""

from __future__ import annotations

import copy
import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .memtypes import DEFAULT_LATENCY, MiB, Opcode


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path
        self.msg = msg


class Model(enum.Enum):
    ATOMIC = "atomic"
    STORE = "store"
    SCOPE = "scope"
    SCOPE_RELAXED = "scope_relaxed"
    NAIVE = "naive"
    SW_FLUSH = "sw_flush"
    UNCACHEABLE = "uncacheable"

    @property
    def is_baseline(self) -> bool:
        return self in (Model.NAIVE, Model.SW_FLUSH, Model.UNCACHEABLE)

    @property
    def acks(self) -> bool:
        return self in (Model.ATOMIC, Model.STORE, Model.SCOPE)

    @classmethod
    def parse(cls, s: str) -> "Model":
        key = s.strip().lower().replace("-", "_")
        aliases = {"scoperelaxed": "scope_relaxed", "relaxed": "scope_relaxed",
                   "swflush": "sw_flush", "flush": "sw_flush", "uc": "uncacheable"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown model {s!r} (choose from {', '.join(m.value for m in cls)})") from None


MODELS = (Model.ATOMIC, Model.STORE, Model.SCOPE, Model.SCOPE_RELAXED)
BASELINES = (Model.NAIVE, Model.SW_FLUSH, Model.UNCACHEABLE)


@dataclass
class CacheGeometry:
    size: int
    ways: int
    line: int = 64
    latency: int = 2

    @property
    def sets(self) -> int:
        return self.size // (self.ways * self.line)


@dataclass
class ScopeBufferGeometry:
    sets: int
    ways: int


@dataclass
class ScanCost:
    per_set: int = 1
    per_line: int = 4
    fixed: int = 4


@dataclass
class PimConfig:
    buffer: int | None = 16                 # None = unbounded
    latency: dict[str, int] = field(default_factory=lambda: {o.value: c for o, c in DEFAULT_LATENCY.items()})
    zero_latency: bool = False
    access_latency: int = 60

    def op_latency(self, op: Opcode) -> int:
        return 0 if self.zero_latency else self.latency[op.value]


@dataclass
class NetworkConfig:
    base: int = 8
    jitter: int = 8
    # exhaustive exploration enumerates these jitter values instead of drawing
    levels: tuple[int, ...] | None = None


@dataclass
class ControllerConfig:
    queue: int = 32
    dram_latency: int = 60
    reorder_choices: bool = False


@dataclass
class SimConfig:
    cores: int = 6
    l1: CacheGeometry = field(default_factory=lambda: CacheGeometry(16 * 1024, 4, 64, 2))
    llc: CacheGeometry = field(default_factory=lambda: CacheGeometry(2 * MiB, 16, 64, 10))
    l1_scope_buffer: ScopeBufferGeometry = field(default_factory=lambda: ScopeBufferGeometry(16, 1))
    llc_scope_buffer: ScopeBufferGeometry = field(default_factory=lambda: ScopeBufferGeometry(64, 4))
    scan: ScanCost = field(default_factory=ScanCost)
    model: Model = Model.SCOPE
    write_buffer: int = 8
    l1_mshrs: int = 8
    pim: PimConfig = field(default_factory=PimConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    scope_size: int = 2 * MiB
    pimfence_orders_all: bool = True
    check_every: int = 10_000
    max_events: int | None = 50_000_000
    seed: int = 1

    def validate(self) -> "SimConfig":
        if self.cores < 1:
            raise ConfigError("cores", "must be >= 1")
        for name in ("l1", "llc"):
            g: CacheGeometry = getattr(self, name)
            if g.line & (g.line - 1) or g.line < 8:
                raise ConfigError(f"{name}.line", "must be a power of two >= 8")
            if g.ways < 1 or g.size % (g.ways * g.line):
                raise ConfigError(f"{name}.size", f"{g.size} is not ways*sets*line for ways={g.ways}, line={g.line}")
            if g.sets & (g.sets - 1):
                raise ConfigError(f"{name}.size", "set count must be a power of two")
        if self.l1.line != self.llc.line:
            raise ConfigError("l1.line", "must equal llc.line")
        for name in ("l1_scope_buffer", "llc_scope_buffer"):
            g = getattr(self, name)
            if g.sets < 1 or g.ways < 1:
                raise ConfigError(name, "sets and ways must be >= 1")
        if self.write_buffer < 1:
            raise ConfigError("write_buffer", "must be >= 1")
        if self.l1_mshrs < 1:
            raise ConfigError("l1_mshrs", "must be >= 1")
        if self.pim.buffer is not None and self.pim.buffer < 1:
            raise ConfigError("pim.buffer", "must be >= 1 or 'unbounded'")
        for op in Opcode:
            if op.value not in self.pim.latency:
                raise ConfigError(f"pim.latency.{op.value}", "missing")
            if self.pim.latency[op.value] < 0:
                raise ConfigError(f"pim.latency.{op.value}", "must be >= 0")
        if self.network.base < 1:
            raise ConfigError("network.base", "must be >= 1")
        if self.network.jitter < 0:
            raise ConfigError("network.jitter", "must be >= 0")
        if self.controller.queue < 1:
            raise ConfigError("controller.queue", "must be >= 1")
        if self.scope_size & (self.scope_size - 1) or self.scope_size < 2 * MiB:
            raise ConfigError("scope_size", "must be a power of two >= 2 MiB")
        return self

    def to_dict(self) -> dict:
        return _to_plain(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes) -> "SimConfig":
        c = copy.deepcopy(self)
        for k, v in changes.items():
            setattr(c, k, v)
        return c


def _to_plain(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (list, tuple)):
        return [_to_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


_SIZE_SUFFIX = {"KiB": 1024, "KB": 1024, "K": 1024, "MiB": MiB, "MB": MiB, "M": MiB,
                "GiB": 1024 * MiB, "GB": 1024 * MiB, "G": 1024 * MiB}


def parse_size(v: Any, path: str) -> int:
    if isinstance(v, bool):
        raise ConfigError(path, f"expected a size, got {v!r}")
    if isinstance(v, int):
        return v
    if isinstance(v, str):
        s = v.strip()
        for suf in sorted(_SIZE_SUFFIX, key=len, reverse=True):
            if s.endswith(suf):
                try:
                    return int(float(s[: -len(suf)]) * _SIZE_SUFFIX[suf])
                except ValueError:
                    break
        try:
            return int(s, 0)
        except ValueError:
            pass
    raise ConfigError(path, f"expected a size like 2MiB, got {v!r}")


def _int(v: Any, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return v


def _apply(obj: Any, data: dict, path: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", f"expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(obj)}
    for key, val in data.items():
        p = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(p, "unknown key")
        cur = getattr(obj, key)
        if dataclasses.is_dataclass(cur):
            _apply(cur, val, p)
        elif key == "model":
            try:
                setattr(obj, key, Model.parse(val))
            except (ValueError, AttributeError):
                raise ConfigError(p, f"unknown model {val!r}") from None
        elif key == "buffer" and isinstance(obj, PimConfig):
            setattr(obj, key, None if val in ("unbounded", None) else _int(val, p))
        elif key == "latency" and isinstance(obj, PimConfig):
            if val == "zero":
                obj.zero_latency = True
            elif isinstance(val, dict):
                for op, c in val.items():
                    if op not in obj.latency:
                        raise ConfigError(f"{p}.{op}", "unknown opcode")
                    obj.latency[op] = _int(c, f"{p}.{op}")
            else:
                raise ConfigError(p, "expected an opcode table or 'zero'")
        elif key in ("size", "scope_size"):
            setattr(obj, key, parse_size(val, p))
        elif key == "levels":
            setattr(obj, key, None if val is None else tuple(_int(x, p) for x in val))
        elif isinstance(cur, bool):
            if not isinstance(val, bool):
                raise ConfigError(p, f"expected a boolean, got {val!r}")
            setattr(obj, key, val)
        elif isinstance(cur, int) or (cur is None and key == "max_events"):
            setattr(obj, key, None if val is None else _int(val, p))
        else:
            setattr(obj, key, val)


LLC_PRESETS = {"2MiB": 2 * MiB, "8MiB": 8 * MiB}


def config_from_dict(data: dict, base: SimConfig | None = None) -> SimConfig:
    cfg = copy.deepcopy(base) if base is not None else SimConfig()
    data = dict(data)
    preset = data.pop("llc_preset", None)
    if preset is not None:
        if preset not in LLC_PRESETS:
            raise ConfigError("llc_preset", f"unknown preset {preset!r}")
        cfg.llc.size = LLC_PRESETS[preset]
    _apply(cfg, data, "")
    return cfg.validate()


def load_config(path: str | Path | None) -> SimConfig:
    if path is None:
        return SimConfig().validate()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"invalid JSON: {e}") from None
    return config_from_dict(data)
