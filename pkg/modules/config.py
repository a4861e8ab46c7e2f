"""
Module: Configuration
Environment fallbacks and the YAML run-configuration loader.

Environment variables:
    QIPM_SEED       default seed when no --seed is given
    QIPM_COND_CAP   largest system order for dense SVD condition numbers (2048)
    QIPM_WORKERS    parallel bench workers (1)
    QIPM_LOG_LEVEL  / QIPM_TELEMETRY, see modules.telemetry
"""

import os
from dataclasses import fields, replace
from typing import Any, Dict, Optional

import yaml

from .errors import UsageError


def env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"environment variable {name} must be an integer, got {raw!r}")


def resolve_seed(seed: Optional[int]) -> int:
    """Explicit seed wins, then QIPM_SEED, then 0."""
    if seed is not None:
        return int(seed)
    return env_int('QIPM_SEED', 0)


def cond_cap() -> int:
    return env_int('QIPM_COND_CAP', 2048)


def bench_workers() -> int:
    return max(1, env_int('QIPM_WORKERS', 1))


_SECTIONS = ('ipm', 'noise', 'refine', 'bench', 'cost')


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> Dict[str, Any]:
    """
    Read a YAML run configuration and build the config dataclasses.

    Returns:
        {
            'ipm': IpmConfig,
            'noise': NoiseModel,
            'refine': RefineConfig,
            'bench': BenchConfig,
            'cost': CostModel
        }
    """
    from .bench import BenchConfig
    from .ipm import IpmConfig
    from .qsim import CostModel, NoiseModel
    from .refine import RefineConfig

    raw: Dict[str, Any] = {}
    if path:
        try:
            with open(path, 'r', encoding='utf-8') as fh:
                raw = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as e:
            raise UsageError(f"cannot read config {path}: {e}")
        if not isinstance(raw, dict):
            raise UsageError(f"config {path} must be a mapping of sections")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")

    defaults = {
        'ipm': IpmConfig(),
        'noise': NoiseModel(),
        'refine': RefineConfig(),
        'bench': BenchConfig(),
        'cost': CostModel(),
    }
    merged: Dict[str, Any] = {}
    for section, base in defaults.items():
        values = dict(raw.get(section) or {})
        values.update((overrides or {}).get(section) or {})
        merged[section] = _apply(section, base, values)
    return merged


def _apply(section: str, base: Any, values: Dict[str, Any]) -> Any:
    allowed = {f.name for f in fields(base)}
    bad = set(values) - allowed
    if bad:
        raise UsageError(f"unknown keys in config section '{section}': {sorted(bad)}")
    if 'n_list' in values and values['n_list'] is not None:
        values['n_list'] = tuple(values['n_list'])
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid config section '{section}': {e}")
