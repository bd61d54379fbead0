"""scikit-learn style wrappers around the trainer and the search loop.

Node classification here is transductive: ``fit`` receives a whole
:class:`~autogm.graph.Dataset` and learns from its train split, while
``predict`` scores every node of a dataset sharing the same graph layout.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .engine import preset, propagate
from .objective import BudgetConstraint
from .search import autogm_search, random_search
from .trainer import TrainConfig, _softmax, evaluate_accuracy, predict_logits, train
from .validation import check_dataset, check_param_set, check_seed, check_split


class UnifiedGMClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """One UnifiedGM model trained with Adam and early stopping.

    ``transform`` returns the final node embeddings, ``predict`` the argmax
    of the softmax head.  Calls on models with ``w != -1`` resample
    neighbors from a generator seeded by ``random_state``.
    """

    def __init__(self, d=64, k=2, w=-1, l=True, a="SS", learning_rate=0.01, weight_decay=5e-4,
                 dropout=0.5, max_epochs=200, patience=10, random_state=None):
        self.d = d
        self.k = k
        self.w = w
        self.l = l
        self.a = a
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.dropout = dropout
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state

    @classmethod
    def from_preset(cls, name, pixie_k=None, **kwargs):
        p = preset(name, pixie_k)
        return cls(d=p.d, k=p.k, w=p.w, l=p.l, a=p.a.name, **kwargs)

    @classmethod
    def from_params(cls, params, **kwargs):
        return cls(d=params.d, k=params.k, w=params.w, l=params.l, a=params.a.name, **kwargs)

    @property
    def param_set(self):
        return check_param_set(self.d, self.k, self.w, self.l, self.a)

    def fit(self, X, y=None):
        dataset = check_dataset(X)
        if y is not None:
            raise ValueError("labels come from the dataset; pass y=None")
        config = TrainConfig(self.learning_rate, self.weight_decay, self.dropout,
                             self.max_epochs, self.patience, check_seed(self.random_state))
        self.model_ = train(dataset, self.param_set, config)
        self.classes_ = np.arange(dataset.class_count)
        self.n_features_in_ = dataset.feature_dim
        return self

    def _check_fitted(self, X):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before using this estimator")
        dataset = check_dataset(X)
        if dataset.feature_dim != self.n_features_in_:
            raise ValueError(f"dataset has {dataset.feature_dim} features, "
                             f"model was fitted on {self.n_features_in_}")
        return dataset

    def _rng(self):
        return np.random.default_rng([check_seed(self.random_state), 2])

    def transform(self, X):
        dataset = self._check_fitted(X)
        return propagate(dataset.graph, dataset.features, self.model_.params,
                         self.model_.weights, self._rng())

    def decision_function(self, X):
        dataset = self._check_fitted(X)
        return predict_logits(self.model_, dataset, self._rng())

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def predict(self, X):
        return self.decision_function(X).argmax(axis=1)

    def score(self, X, y=None, split="test"):
        dataset = self._check_fitted(X)
        return evaluate_accuracy(self.model_, dataset, check_split(split), self._rng())


class AutoGMSearch(BaseEstimator):
    """Budget-aware search for the UnifiedGM parameters.

    After ``fit`` the estimator exposes ``trace_`` (every evaluation),
    ``best_params_`` and ``best_estimator_``, a classifier holding the
    best model's weights.  ``strategy="random"`` runs the uniform baseline
    with the same budget.
    """

    def __init__(self, mode="min-time", bound=0.0, lam=1e-19, budget=20, strategy="bayes",
                 wall_budget_s=None, timing="wall", random_state=None):
        self.mode = mode
        self.bound = bound
        self.lam = lam
        self.budget = budget
        self.strategy = strategy
        self.wall_budget_s = wall_budget_s
        self.timing = timing
        self.random_state = random_state

    def fit(self, X, y=None):
        dataset = check_dataset(X)
        constraint = BudgetConstraint(self.mode, self.bound, self.lam)
        runners = {"bayes": autogm_search, "random": random_search}
        if self.strategy not in runners:
            raise ValueError(f"strategy must be 'bayes' or 'random', got {self.strategy!r}")
        seed = check_seed(self.random_state)
        self.trace_ = runners[self.strategy](dataset, constraint, self.budget, TrainConfig(), seed,
                                             wall_budget_s=self.wall_budget_s, timing=self.timing)
        best = self.trace_.best
        self.best_params_ = best.params
        self.best_score_ = best.f_gm
        self.best_estimator_ = None
        if self.trace_.best_model is not None:
            est = UnifiedGMClassifier.from_params(best.params, random_state=seed)
            est.model_ = self.trace_.best_model
            est.classes_ = np.arange(dataset.class_count)
            est.n_features_in_ = dataset.feature_dim
            self.best_estimator_ = est
        return self

    def _best(self):
        if not hasattr(self, "trace_"):
            raise NotFittedError("call fit before using this estimator")
        if self.best_estimator_ is None:
            raise RuntimeError("the best evaluation failed to train; no model is available")
        return self.best_estimator_

    def predict(self, X):
        return self._best().predict(X)

    def score(self, X, y=None, split="test"):
        return self._best().score(X, split=split)
