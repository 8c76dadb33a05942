"""Run configurations: one dataclass per subcommand plus JSON round-tripping.

A resolved config is the dataclass with every default filled in.  It is
written next to the outputs as ``resolved_config.json`` and can be passed
back with ``--config`` to replay the run.  The output directory is not part
of it, so a replay into another directory writes identical files.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .harness import DeepShallowConfig, OracleCheckConfig, RateStudyConfig

__all__ = [
    "ConfigError",
    "TheoryConfig",
    "FitConfig",
    "ApproxDemoConfig",
    "SamplePriorConfig",
    "CONFIG_TYPES",
    "RunConfig",
    "load_run_config",
    "write_resolved",
]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class TheoryConfig:
    n: int
    p: int
    alpha: float
    holder_norm: float = 1.0
    delta: float = 1.5
    C_N: float = 1.0
    C_tilde_N: float = 1.0
    lambda_N: float = 1.0
    lambda_s: float = 1.0


@dataclass(frozen=True)
class FitConfig:
    data: Optional[str] = None  # CSV with columns x1..xp,y; None: synthetic from ``target``
    target: str = "cusp_1"
    n: int = 128
    design: str = "grid"
    noise: bool = True
    depth: Optional[int] = None  # None: theory depth for n
    N_init: int = 1
    adaptive: bool = True
    lambda_N: float = 1.0
    lambda_s: float = 1.0
    clip_bound: float = 10.0
    iterations: int = 20_000
    burn_in: int = 5_000
    thinning: int = 10
    beta_std: float = 0.1
    N_max: int = 64
    seed: int = 0


@dataclass(frozen=True)
class ApproxDemoConfig:
    sawtooth_levels: int = 4
    square_levels: int = 8
    product_levels: tuple = (1, 3, 5, 8)
    interpolant_knots: tuple = (4, 16, 64, 256)
    interpolant_target: str = "cusp_1"
    audit_grid: int = 201


@dataclass(frozen=True)
class SamplePriorConfig:
    draws: int = 10
    p: int = 1
    N: int = 1
    depth: int = 2
    adaptive: bool = False
    N_max: int = 64
    lambda_N: float = 1.0
    lambda_s: float = 1.0
    s_max: Optional[int] = None
    seed: int = 0


CONFIG_TYPES = {
    "theory": TheoryConfig,
    "fit": FitConfig,
    "rate-study": RateStudyConfig,
    "approx-demo": ApproxDemoConfig,
    "deep-vs-shallow": DeepShallowConfig,
    "oracle-check": OracleCheckConfig,
    "sample-prior": SamplePriorConfig,
}


def _to_jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    return v


def _coerce(cls, params: dict):
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(params) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys for {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for k, v in params.items():
        default = names[k].default
        kwargs[k] = tuple(v) if isinstance(v, list) or isinstance(default, tuple) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    params: object
    out: str

    def as_dict(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "params": {k: _to_jsonable(v) for k, v in dataclasses.asdict(self.params).items()},
        }

    @classmethod
    def build(cls, subcommand: str, params: dict, out: str) -> "RunConfig":
        if subcommand not in CONFIG_TYPES:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        return cls(subcommand, _coerce(CONFIG_TYPES[subcommand], params), str(out))


def load_run_config(path, expect: Optional[str] = None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict) or "subcommand" not in doc or "params" not in doc:
        raise ConfigError("config must be an object with 'subcommand' and 'params'")
    if expect is not None and doc["subcommand"] != expect:
        raise ConfigError(f"config is for {doc['subcommand']!r}, not {expect!r}")
    return RunConfig.build(doc["subcommand"], doc["params"], ".")


def write_resolved(cfg: RunConfig, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "resolved_config.json"
    path.write_text(json.dumps(cfg.as_dict(), indent=1, sort_keys=True) + "\n")
    return path
