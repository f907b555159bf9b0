"""TOML configuration with environment-variable overrides.

Every key can be overridden with ``QACCEL_<SECTION>_<KEY>`` (upper-case,
e.g. ``QACCEL_PLANNER_BUDGET=5%``).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

try:
    import tomllib  # python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError

ENV_PREFIX = "QACCEL"


@dataclass
class Config:
    catalog_path: str = "catalog.json"
    data_dir: str = "data"
    workload_path: str = "workload.jsonl"
    out_dir: str = "out"
    budget: str = "10%"
    adapter: str = "oracle"
    strategy: str = "model"
    cost_mode: str = "learned"
    option_cap: int = 64
    node_limit: int = 10_000
    iter_limit: int = 20
    seed: int = 0
    hidden: int = 32
    bootstrap_instances: int = 1000
    label_repeats: int = 3
    max_epochs: int = 40
    error_q: float = 1.0
    error_seed: int = 0
    mock_rate_bytes_per_s: float = 1e6
    mock_floor_s: float = 0.0
    nulls_first: bool = True

    def budget_bytes(self, dataset_bytes: int) -> float:
        text = str(self.budget).strip()
        if text.endswith("%"):
            try:
                return float(text[:-1]) / 100.0 * dataset_bytes
            except ValueError:
                raise ConfigError(f"bad budget percentage {text!r}") from None
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"bad budget {text!r}") from None


_SECTIONS = {
    "data": {"catalog": "catalog_path", "data_dir": "data_dir",
             "workload": "workload_path"},
    "run": {"out_dir": "out_dir", "seed": "seed"},
    "planner": {"budget": "budget", "adapter": "adapter",
                "strategy": "strategy", "cost_mode": "cost_mode",
                "option_cap": "option_cap",
                "mock_rate_bytes_per_s": "mock_rate_bytes_per_s",
                "mock_floor_s": "mock_floor_s", "nulls_first": "nulls_first"},
    "saturation": {"node_limit": "node_limit", "iter_limit": "iter_limit"},
    "models": {"hidden": "hidden",
               "bootstrap_instances": "bootstrap_instances",
               "label_repeats": "label_repeats", "max_epochs": "max_epochs"},
    "robustness": {"error_q": "error_q", "error_seed": "error_seed"},
}


def _coerce(current, raw: str):
    if isinstance(current, bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def load_config(path: str | None) -> Config:
    cfg = Config()
    if path:
        try:
            with open(path, "rb") as f:
                doc = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"bad TOML in {path}: {exc}") from None
        for section, keys in _SECTIONS.items():
            body = doc.get(section, {})
            if not isinstance(body, dict):
                raise ConfigError(f"[{section}] must be a table")
            for key, attr in keys.items():
                if key in body:
                    setattr(cfg, attr, body[key])
    for section, keys in _SECTIONS.items():
        for key, attr in keys.items():
            env = os.environ.get(f"{ENV_PREFIX}_{section.upper()}_{key.upper()}")
            if env is not None:
                setattr(cfg, attr, _coerce(getattr(cfg, attr), env))
    if cfg.strategy not in ("model", "naive"):
        raise ConfigError(f"unknown strategy {cfg.strategy!r}")
    if cfg.adapter not in ("oracle", "mock", "sqlite"):
        raise ConfigError(f"unknown adapter {cfg.adapter!r}")
    if cfg.cost_mode not in ("learned", "truth"):
        raise ConfigError(f"unknown cost_mode {cfg.cost_mode!r}")
    return cfg
