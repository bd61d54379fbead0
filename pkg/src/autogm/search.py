"""AutoGM search loop, the random-search baseline and preset evaluation."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .bayesopt import SEARCH_SPACE, SearchSpace, decode, encode, gp_fit, propose_next
from .engine import ParamSet, preset
from .graph import Dataset
from .objective import MIN_TIME, BudgetConstraint, evaluate_objective, infeasible_penalty
from .trainer import (EvalResult, TrainConfig, TrainedModel, TrainingDiverged, evaluate,
                      evaluate_accuracy, train)

logger = logging.getLogger(__name__)

N_INIT = 5


@dataclass
class SearchRecord:
    iteration: int
    params: ParamSet
    accuracy: float
    inference_seconds: float
    f_gm: float
    feasible: bool
    train_seconds: float
    error: str | None = None

    def to_dict(self) -> dict:
        p = self.params
        return {"iter": self.iteration, "d": p.d, "k": p.k, "w": p.w, "l": p.l, "a": p.a.name,
                "acc": self.accuracy, "time_s": self.inference_seconds, "f_gm": self.f_gm,
                "feasible": self.feasible, "train_s": self.train_seconds}

    @classmethod
    def from_dict(cls, r: dict) -> "SearchRecord":
        return cls(r["iter"], ParamSet(r["d"], r["k"], r["w"], r["l"], r["a"]), r["acc"],
                   r["time_s"], r["f_gm"], r["feasible"], r["train_s"])


@dataclass
class SearchTrace:
    constraint: BudgetConstraint
    budget: int
    seed: int
    records: list = field(default_factory=list)
    total_search_seconds: float = 0.0
    best_model: TrainedModel | None = field(default=None, repr=False)

    @property
    def best_index(self) -> int:
        if not self.records:
            raise ValueError("empty trace")
        return int(np.argmin([r.f_gm for r in self.records]))

    @property
    def best(self) -> SearchRecord:
        return self.records[self.best_index]

    def best_so_far(self) -> list:
        return list(np.minimum.accumulate([r.f_gm for r in self.records]))

    def to_dict(self) -> dict:
        return {"mode": self.constraint.cli_mode, "bound": self.constraint.bound,
                "lambda": self.constraint.lam, "budget": self.budget, "seed": self.seed,
                "records": [r.to_dict() for r in self.records], "best_index": self.best_index,
                "search_s": self.total_search_seconds}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "SearchTrace":
        constraint = BudgetConstraint(data["mode"], data["bound"], data["lambda"])
        return cls(constraint, data["budget"], data["seed"],
                   [SearchRecord.from_dict(r) for r in data["records"]], data["search_s"])


TRACE_SCHEMA = {
    "type": "object",
    "required": ["mode", "bound", "lambda", "budget", "seed", "records", "best_index", "search_s"],
    "additionalProperties": False,
    "properties": {
        "mode": {"enum": ["min-time", "max-acc"]},
        "bound": {"type": "number"},
        "lambda": {"type": "number", "exclusiveMinimum": 0},
        "budget": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "best_index": {"type": "integer", "minimum": 0},
        "search_s": {"type": "number", "minimum": 0},
        "records": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["iter", "d", "k", "w", "l", "a", "acc", "time_s", "f_gm", "feasible", "train_s"],
                "additionalProperties": False,
                "properties": {
                    "iter": {"type": "integer", "minimum": 0},
                    "d": {"type": "integer", "minimum": 1},
                    "k": {"type": "integer", "minimum": 1},
                    "w": {"type": "integer", "minimum": -1, "not": {"const": 0}},
                    "l": {"type": "boolean"},
                    "a": {"enum": ["NN", "NS", "NA", "SN", "SS", "SA"]},
                    "acc": {"type": "number", "minimum": 0, "maximum": 1},
                    "time_s": {"type": "number", "minimum": 0},
                    "f_gm": {"type": "number"},
                    "feasible": {"type": "boolean"},
                    "train_s": {"type": "number", "minimum": 0},
                },
            },
        },
    },
}


def iteration_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def evaluate_params(dataset: Dataset, params: ParamSet, constraint: BudgetConstraint,
                    train_config: TrainConfig, seed: int, iteration: int = 0, *,
                    timing: str = "wall"):
    """Train on the train split, score on the validation split; never raises on divergence.

    Returns ``(record, model)``; ``model`` is ``None`` when training failed.
    """
    config = replace(train_config, seed=seed)
    try:
        model = train(dataset, params, config)
        if not model.weights.is_finite():
            raise TrainingDiverged(f"non-finite weights for {params}")
        result = evaluate(model, dataset, split="val", seed=seed, timing=timing)
        if not math.isfinite(result.accuracy):
            raise TrainingDiverged(f"non-finite accuracy for {params}")
    except (TrainingDiverged, FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.info("iteration %d: %s", iteration, exc)
        return SearchRecord(iteration, params, 0.0, 0.0, infeasible_penalty(constraint.mode),
                            False, 0.0, error=str(exc)), None
    score = evaluate_objective(result, constraint)
    train_s = model.train_seconds
    if timing == "ops":
        # forward + backward + validation pass per epoch, in the same cost units
        train_s = 3.0 * model.epochs_run * result.inference_seconds
    rec = SearchRecord(iteration, params, result.accuracy, result.inference_seconds,
                       score.f_gm, score.feasible, train_s)
    return rec, model


def _run(dataset, constraint, budget, train_config, seed, propose, wall_budget_s, timing):
    if budget < 1:
        raise ValueError("budget must be >= 1")
    trace = SearchTrace(constraint, budget, seed)
    start = time.perf_counter()
    best_f = math.inf
    for it in range(budget):
        if wall_budget_s is not None and it > 0 and time.perf_counter() - start >= wall_budget_s:
            break
        params = propose(it, trace)
        rec, model = evaluate_params(dataset, params, constraint, train_config,
                                     iteration_seed(seed, it), it, timing=timing)
        trace.records.append(rec)
        if rec.f_gm < best_f:
            best_f = rec.f_gm
            trace.best_model = model
        logger.info("iter %2d %s acc=%.4f time=%.3gs f=%.4g%s", it, params, rec.accuracy,
                    rec.inference_seconds, rec.f_gm, "" if rec.feasible else " (infeasible)")
    trace.total_search_seconds = time.perf_counter() - start
    if timing == "ops":
        trace.total_search_seconds = math.fsum(r.train_seconds + r.inference_seconds
                                               for r in trace.records)
    return trace


def autogm_search(dataset: Dataset, constraint: BudgetConstraint, budget: int = 20,
                  train_config: TrainConfig = TrainConfig(), seed: int = 0, *,
                  space: SearchSpace = SEARCH_SPACE, n_init: int = N_INIT,
                  wall_budget_s: float | None = None, timing: str = "wall",
                  n_candidates: int = 10_000) -> SearchTrace:
    """Bayesian-optimization search for the ParamSet minimizing the budget-aware objective.

    The first ``n_init`` points come from a seeded Latin hypercube; after
    that each proposal maximizes expected improvement under a GP fitted to
    every evaluation so far.
    """
    rng = np.random.default_rng(seed)
    init = qmc.LatinHypercube(d=5, seed=rng).random(min(n_init, budget))
    init = space.lo + init * (space.hi - space.lo)

    def propose(it, trace):
        if it < len(init):
            return decode(init[it], space)
        X = np.array([encode(r.params, space) for r in trace.records])
        gp = gp_fit(X, surrogate_targets(trace.records, constraint), rng=rng)
        return propose_next(gp, space, rng, n_candidates=n_candidates)

    return _run(dataset, constraint, budget, train_config, seed, propose, wall_budget_s, timing)


def surrogate_targets(records, constraint: BudgetConstraint) -> np.ndarray:
    """Targets the GP regresses on, lower is better.

    The flat infeasible penalty carries no gradient toward feasibility, and
    its magnitude swamps the spread of feasible scores after
    standardization.  Feasible points are therefore min-max scaled into
    [0, 1] (log time when minimizing time) and infeasible points are placed
    in [1.5, 2.5] by how badly they miss the bound.
    """
    feasible = np.array([r.feasible for r in records])
    y = np.empty(len(records))
    if feasible.any():
        if constraint.mode == MIN_TIME:
            g = np.log([max(r.inference_seconds, 1e-12) for r in records])
        else:
            g = -np.array([r.accuracy for r in records])
        gf = g[feasible]
        span = gf.max() - gf.min()
        y[feasible] = (gf - gf.min()) / span if span > 0 else 0.0
    if (~feasible).any():
        viol = np.array([_violation(r, constraint) for r in records])
        viol[np.isnan(viol)] = np.nanmax(np.append(viol, 1.0))
        vi = viol[~feasible]
        y[~feasible] = 1.5 + (vi / vi.max() if vi.max() > 0 else 0.0)
    return y


def _violation(rec: SearchRecord, constraint: BudgetConstraint) -> float:
    if rec.error is not None:
        return math.nan
    if constraint.mode == MIN_TIME:
        return max(constraint.bound - rec.accuracy, 0.0)
    return max(rec.inference_seconds - constraint.bound, 0.0) / constraint.bound


def random_search(dataset: Dataset, constraint: BudgetConstraint, budget: int = 20,
                  train_config: TrainConfig = TrainConfig(), seed: int = 0, *,
                  space: SearchSpace = SEARCH_SPACE, wall_budget_s: float | None = None,
                  timing: str = "wall") -> SearchTrace:
    """Baseline: each ParamSet is a uniform draw from the search space."""
    rng = np.random.default_rng(seed)

    def propose(it, trace):
        return decode(space.sample(rng, 1)[0], space)

    return _run(dataset, constraint, budget, train_config, seed, propose, wall_budget_s, timing)


def evaluate_preset(dataset: Dataset, name: str, train_config: TrainConfig = TrainConfig(),
                    seed: int = 0, *, constraint: BudgetConstraint | None = None,
                    pixie_k: int | None = None, timing: str = "wall"):
    """Train and score a named preset exactly like one search iteration.

    Returns ``(record, model)``.  Without a constraint the record is scored
    as min-time with an accuracy floor of 0.
    """
    params = preset(name, pixie_k)
    constraint = constraint or BudgetConstraint("min-time", 0.0)
    return evaluate_params(dataset, params, constraint, train_config,
                           iteration_seed(seed, 0), 0, timing=timing)


SWEEP_BASES = {
    "standard": ParamSet(64, 2, -1, True, "SS"),
    "alt": ParamSet(16, 2, 10, False, "SS"),
}


def parameter_sweep(dataset: Dataset, param: str, values, base: ParamSet = SWEEP_BASES["standard"],
                    train_config: TrainConfig = TrainConfig(), seed: int = 0, *,
                    constraint: BudgetConstraint | None = None, timing: str = "wall") -> SearchTrace:
    """Vary one of d/k/w/l/a over ``values`` with the rest fixed at ``base``.

    Every value is trained with the same seed so differences come from the
    parameter alone.  Returns a trace with one record per value.
    """
    if param not in ("d", "k", "w", "l", "a"):
        raise ValueError(f"param must be one of d, k, w, l, a; got {param!r}")
    values = list(values)
    if not values:
        raise ValueError("values must not be empty")
    constraint = constraint or BudgetConstraint("min-time", 0.0)
    trace = SearchTrace(constraint, len(values), seed)
    start = time.perf_counter()
    best_f = math.inf
    for i, value in enumerate(values):
        params = replace(base, **{param: value})
        rec, model = evaluate_params(dataset, params, constraint, train_config,
                                     iteration_seed(seed, 0), i, timing=timing)
        trace.records.append(rec)
        if rec.f_gm < best_f:
            best_f, trace.best_model = rec.f_gm, model
    trace.total_search_seconds = time.perf_counter() - start
    if timing == "ops":
        trace.total_search_seconds = math.fsum(r.train_seconds + r.inference_seconds
                                               for r in trace.records)
    return trace


def best_test_accuracy(trace: SearchTrace, dataset: Dataset) -> float | None:
    """Test-split accuracy of the best model; computed once, after the search."""
    if trace.best_model is None:
        return None
    return evaluate_accuracy(trace.best_model, dataset, "test", np.random.default_rng(trace.seed))


__all__ = ["SearchRecord", "SearchTrace", "TRACE_SCHEMA", "autogm_search", "random_search",
           "evaluate_preset", "evaluate_params", "parameter_sweep", "SWEEP_BASES", "best_test_accuracy", "EvalResult"]
