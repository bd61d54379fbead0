"""Budget-aware log-barrier objective."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

MIN_TIME = "min_time_given_acc"
MAX_ACC = "max_acc_given_time"
MODES = (MIN_TIME, MAX_ACC)
_ALIASES = {"min-time": MIN_TIME, "min_time": MIN_TIME, "max-acc": MAX_ACC, "max_acc": MAX_ACC}

# Worst plausible value of the minimized quantity per mode; infeasible
# points score one unit above it.
G_WORST = {MIN_TIME: 1e3, MAX_ACC: 0.0}


def normalize_mode(mode: str) -> str:
    mode = _ALIASES.get(mode, mode)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES} or min-time/max-acc")
    return mode


def infeasible_penalty(mode: str) -> float:
    return G_WORST[normalize_mode(mode)] + 1.0


@dataclass(frozen=True)
class BudgetConstraint:
    """Either a minimum accuracy (minimize time) or a maximum time (maximize accuracy)."""

    mode: str
    bound: float
    lam: float = 1e-19
    barrier_floor: float = 1e-12

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        if math.isnan(self.bound):
            raise ValueError("bound must not be NaN")
        # acc_min > 1 is accepted: it simply makes every point infeasible
        if self.mode == MIN_TIME and self.bound < 0:
            raise ValueError("acc_min must be >= 0")
        if self.mode == MAX_ACC and not self.bound > 0:
            raise ValueError("time_max must be positive")
        if not self.lam > 0 or not self.barrier_floor > 0:
            raise ValueError("lam and barrier_floor must be positive")

    @property
    def cli_mode(self) -> str:
        return "min-time" if self.mode == MIN_TIME else "max-acc"


class ObjectiveValue(NamedTuple):
    f_gm: float
    feasible: bool
    g: float
    slack: float


def evaluate_objective(result, constraint: BudgetConstraint) -> ObjectiveValue:
    """Score ``result`` (accuracy, inference_seconds) under ``constraint``; lower is better.

    Feasible points get ``g - lam * log(max(slack, barrier_floor))``.
    Points with ``slack <= 0`` get the finite penalty ``G_WORST[mode] + 1``.
    """
    acc = float(result.accuracy)
    secs = float(result.inference_seconds)
    if math.isnan(acc) or math.isnan(secs):
        raise ValueError("accuracy and inference time must not be NaN")
    if constraint.mode == MIN_TIME:
        g, slack = secs, acc - constraint.bound
    else:
        g, slack = -acc, constraint.bound - secs
    if slack > 0:
        return ObjectiveValue(g - constraint.lam * math.log(max(slack, constraint.barrier_floor)),
                              True, g, slack)
    return ObjectiveValue(G_WORST[constraint.mode] + 1.0, False, g, slack)
