"""Run configuration: TOML loading and strict block validation."""
from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib


class ConfigError(ValueError):
    pass


SOLVER_DEFAULTS = {
    "n_samples": 256,
    "half_width": 64,
    "theta_count": 33,
    "n_max": 8,
    "n_s": 16,
    "tol": 1e-8,
    "split_tol": 1e-9,
    "refinements": 0,
}
REDUCTION_DEFAULTS = {
    "epsilons": None,
    "thetas": None,
    "n_max": 3,
    "include_ablation": True,
    "decay_bracket": [1.5, 3.0],
    "exact_tol": 1e-8,
}
GAP_ASYMPTOTICS_DEFAULTS = {
    "mu": None,
    "gaps": [1],
    "gammas": [],
    "w": None,
}
SPECTRUM_UNION_DEFAULTS = {
    "theta_count": 9,
    "n_max": 4,
    "merge_tol": 1e-7,
}
BLOCK_DEFAULTS = {
    "solver": SOLVER_DEFAULTS,
    "reduction": REDUCTION_DEFAULTS,
    "gap_asymptotics": GAP_ASYMPTOTICS_DEFAULTS,
    "spectrum_union": SPECTRUM_UNION_DEFAULTS,
}
TOP_LEVEL = {"geometry", "section", *BLOCK_DEFAULTS}

# blocks each command needs; "section" may hold just a twist_constant override
REQUIRED = {
    "section": {"section"},
    "bands": {"geometry", "section"},
    "gaps": {"geometry", "section"},
    "gap-asymptotics": {"gap_asymptotics"},
    "validate-reduction": {"geometry", "section", "reduction"},
    "spectrum-union": {"geometry", "section"},
}


def _fill(name, block):
    defaults = BLOCK_DEFAULTS[name]
    if not isinstance(block, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = set(block) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return {**defaults, **block}


@dataclass(frozen=True)
class RunConfig:
    """Parsed blocks; optional blocks are filled with defaults."""

    raw: dict
    geometry: dict | None = None
    section: dict | None = None
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    reduction: dict = field(default_factory=lambda: dict(REDUCTION_DEFAULTS))
    gap_asymptotics: dict = field(default_factory=lambda: dict(GAP_ASYMPTOTICS_DEFAULTS))
    spectrum_union: dict = field(default_factory=lambda: dict(SPECTRUM_UNION_DEFAULTS))

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        unknown = set(data) - TOP_LEVEL
        if unknown:
            raise ConfigError(f"unknown top-level blocks: {sorted(unknown)}")
        kw = {name: _fill(name, data[name]) for name in BLOCK_DEFAULTS if name in data}
        for name in ("geometry", "section"):
            if name in data:
                if not isinstance(data[name], dict):
                    raise ConfigError(f"[{name}] must be a table")
                kw[name] = data[name]
        return cls(raw=data, **kw)

    def require(self, command: str):
        missing = sorted(b for b in REQUIRED[command] if b not in self.raw)
        if missing:
            raise ConfigError(f"command {command!r} needs config blocks {missing}")

    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return RunConfig.from_dict(data)
