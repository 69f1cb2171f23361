"""Input coercion shared by the estimator and the command line."""
from __future__ import annotations

import math
from pathlib import Path

from . import ir
from .costmodel import CostModel, default_cost_model, load_cost_model, load_cost_model_file
from .explore import Limits
from .intermittent import EnergyConfig, load_energy_config


def _looks_like_path(s: str) -> bool:
    return "\n" not in s and not s.lstrip().startswith("{") and len(s) < 4096


def check_program(X) -> ir.Program:
    """A Program, ETIR source text, or a path to an ETIR file."""
    if isinstance(X, ir.Program):
        return X
    if isinstance(X, Path) or (isinstance(X, str) and _looks_like_path(X) and Path(X).is_file()):
        return ir.parse_program(Path(X).read_text(encoding="utf-8"))
    if isinstance(X, str):
        return ir.parse_program(X)
    raise TypeError(f"expected a Program, ETIR text or a file path, got {type(X).__name__}")


def check_cost_model(m) -> CostModel:
    """None (bundled profile), a CostModel, a dict, JSON text or a file path."""
    if m is None:
        return default_cost_model()
    if isinstance(m, CostModel):
        return m
    if isinstance(m, dict):
        return load_cost_model(m)
    if isinstance(m, Path) or (isinstance(m, str) and _looks_like_path(m)):
        return load_cost_model_file(m)
    if isinstance(m, str):
        return load_cost_model(m)
    raise TypeError(f"cannot build a cost model from {type(m).__name__}")


def check_energy_config(e, m: CostModel) -> EnergyConfig | None:
    """None (continuous power), an EnergyConfig, a dict, JSON text or a path."""
    if e is None or isinstance(e, EnergyConfig):
        return e
    if isinstance(e, (dict, str, Path)):
        return load_energy_config(e, m)
    raise TypeError(f"cannot build an energy config from {type(e).__name__}")


def check_limits(max_loop, prob_floor) -> Limits:
    if isinstance(max_loop, bool) or int(max_loop) != max_loop:
        raise ValueError(f"max_loop must be an integer, got {max_loop!r}")
    prob_floor = float(prob_floor)
    if not math.isfinite(prob_floor):
        raise ValueError("prob_floor must be finite")
    return Limits(int(max_loop), prob_floor)


def check_grid_len(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 16:
        raise ValueError(f"grid_len must be an integer >= 16, got {n!r}")
    return int(n)
