"""Gaussian-process surrogate and acquisition over the 5-D (d, k, w, l, a) space.

Points are handled in three forms:

* raw reals inside :class:`SearchSpace` bounds (what the optimizer samples),
* integer lattice vectors ``(d, k, w, l, code(a))`` (what gets evaluated),
* lattice vectors min-max scaled to ``[0, 1]`` (what the kernel sees).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.optimize import minimize
from scipy.stats import norm

from .engine import AggregationStrategy, ParamSet


@dataclass(frozen=True)
class SearchSpace:
    lower: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    upper: tuple = (300.0, 30.0, 50.0, 1.0, 6.0)
    # valid integer range of each lattice coordinate
    lattice_min: tuple = (1, 1, 1, 0, 0)
    lattice_max: tuple = (300, 30, 50, 1, 5)

    @property
    def lo(self):
        return np.asarray(self.lower, dtype=float)

    @property
    def hi(self):
        return np.asarray(self.upper, dtype=float)

    def scale(self, lattice):
        return (np.asarray(lattice, dtype=float) - self.lo) / (self.hi - self.lo)

    def unscale(self, scaled):
        return np.rint(np.asarray(scaled, dtype=float) * (self.hi - self.lo) + self.lo).astype(np.int64)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(size, 5))

    def contains(self, params: ParamSet) -> bool:
        v = _lattice(params)
        return bool(np.all(v >= self.lattice_min) and np.all(v <= self.lattice_max))


SEARCH_SPACE = SearchSpace()


def _lattice(params: ParamSet) -> np.ndarray:
    return np.array([params.d, params.k, params.w, int(params.l), int(params.a)], dtype=np.int64)


def encode(params: ParamSet, space: SearchSpace = SEARCH_SPACE, *, scaled: bool = True) -> np.ndarray:
    """Map a ParamSet to its lattice vector, min-max scaled unless ``scaled=False``."""
    if not space.contains(params):
        raise ValueError(f"{params} lies outside the search space")
    v = _lattice(params)
    return space.scale(v) if scaled else v


def decode_lattice(x, space: SearchSpace = SEARCH_SPACE) -> np.ndarray:
    """Round raw reals (shape ``(..., 5)``) to lattice vectors."""
    x = np.asarray(x, dtype=float)
    out = np.floor(x + 0.5)
    out[..., 4] = np.floor(np.clip(x[..., 4], 0.0, 5.0) + 0.5)
    return np.clip(out, space.lattice_min, space.lattice_max).astype(np.int64)


def from_lattice(v) -> ParamSet:
    d, k, w, l, a = (int(t) for t in v)
    return ParamSet(d, k, w, l == 1, AggregationStrategy(a))


def decode(x, space: SearchSpace = SEARCH_SPACE) -> ParamSet:
    """Round a raw in-bounds point to the nearest valid ParamSet."""
    return from_lattice(decode_lattice(x, space))


# ---------------------------------------------------------------------------
# Gaussian process
# ---------------------------------------------------------------------------

_SQRT5 = np.sqrt(5.0)


def matern52(X1, X2, signal_var, length_scales):
    diff = (X1[:, None, :] - X2[None, :, :]) / length_scales
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    return signal_var * (1.0 + _SQRT5 * r + 5.0 / 3.0 * r * r) * np.exp(-_SQRT5 * r)


@dataclass(frozen=True)
class GpState:
    X: np.ndarray
    y: np.ndarray
    y_mean: float
    y_std: float
    signal_var: float
    length_scales: np.ndarray
    noise_var: float
    jitter: float
    chol: np.ndarray
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return self.X.shape[0]


class GpFitError(RuntimeError):
    pass


# log-space bounds for (signal_var, length_scale_1..D, noise_var)
SIGNAL_BOUNDS = (5e-2, 20.0)
LENGTH_BOUNDS = (1e-2, 20.0)
NOISE_BOUNDS = (1e-10, 1.0)


def _factor(K, jitter=1e-10, max_jitter=1e-6):
    n = K.shape[0]
    while True:
        try:
            return cholesky(K + jitter * np.eye(n), lower=True), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > max_jitter * (1 + 1e-9):
                raise GpFitError("Gram matrix is not positive definite even with maximum jitter") from None


def _neg_log_marginal(theta, X, y):
    dim = X.shape[1]
    s2 = np.exp(theta[0])
    ls = np.exp(theta[1:1 + dim])
    nv = np.exp(theta[-1])
    n = X.shape[0]
    diff2 = ((X[:, None, :] - X[None, :, :]) / ls) ** 2
    r = np.sqrt(diff2.sum(-1))
    e = np.exp(-_SQRT5 * r)
    K = s2 * (1.0 + _SQRT5 * r + 5.0 / 3.0 * r * r) * e
    try:
        L, jit = _factor(K + nv * np.eye(n))
    except GpFitError:
        return 1e25, np.zeros_like(theta)
    alpha = cho_solve((L, True), y)
    nll = 0.5 * y @ alpha + np.log(np.diag(L)).sum() + 0.5 * n * np.log(2 * np.pi)
    inner = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(n))
    grad = np.empty_like(theta)
    grad[0] = -0.5 * np.sum(inner * K)
    common = s2 * 5.0 / 3.0 * (1.0 + _SQRT5 * r) * e
    for j in range(dim):
        grad[1 + j] = -0.5 * np.sum(inner * (common * diff2[:, :, j]))
    grad[-1] = -0.5 * nv * np.trace(inner)
    return nll, grad


def gp_fit(X, y, *, hyperparams: dict | None = None, noise_var: float | None = None,
           normalize_y: bool = True, n_restarts: int = 5, rng=None) -> GpState:
    """Fit a Matérn-5/2 ARD GP to ``(X, y)`` with ``X`` in scaled ``[0, 1]`` coordinates.

    Hyperparameters maximize the log marginal likelihood (L-BFGS-B from
    several starts) unless ``hyperparams`` fixes them as a dict with keys
    ``signal_var``, ``length_scales``, ``noise_var``.  ``noise_var`` alone
    pins the noise level while the rest is optimized.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] < 1 or X.shape[0] != y.size:
        raise ValueError("need at least one observation and matching X/y lengths")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    dim = X.shape[1]
    if normalize_y:
        y_mean = float(y.mean())
        y_std = float(y.std())
        if not y_std > 1e-300:
            y_std = 1.0
    else:
        y_mean, y_std = 0.0, 1.0
    ys = (y - y_mean) / y_std

    if hyperparams is not None:
        s2 = float(hyperparams["signal_var"])
        ls = np.broadcast_to(np.asarray(hyperparams["length_scales"], dtype=float), (dim,)).copy()
        nv = float(hyperparams["noise_var"])
    else:
        rng = np.random.default_rng(0) if rng is None else rng
        bounds = [np.log(SIGNAL_BOUNDS)] + [np.log(LENGTH_BOUNDS)] * dim
        if noise_var is None:
            bounds.append(np.log(NOISE_BOUNDS))
        bounds = np.array(bounds)
        x0s = [np.concatenate([[0.0], np.full(dim, np.log(0.5)), [np.log(1e-4)] if noise_var is None else []])]
        for _ in range(max(n_restarts - 1, 0)):
            x0s.append(rng.uniform(bounds[:, 0], bounds[:, 1]))

        if noise_var is None:
            fun = lambda th: _neg_log_marginal(th, X, ys)  # noqa: E731
        else:
            log_nv = np.log(max(noise_var, 1e-300))

            def fun(th):
                val, g = _neg_log_marginal(np.append(th, log_nv), X, ys)
                return val, g[:-1]

        best = None
        for x0 in x0s:
            res = minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=bounds)
            if best is None or res.fun < best.fun:
                best = res
        theta = best.x
        s2 = float(np.exp(theta[0]))
        ls = np.exp(theta[1:1 + dim])
        nv = float(np.exp(theta[-1])) if noise_var is None else float(noise_var)

    K = matern52(X, X, s2, ls) + nv * np.eye(X.shape[0])
    L, jitter = _factor(K)
    alpha = cho_solve((L, True), ys)
    return GpState(X, y, y_mean, y_std, s2, ls, nv, jitter, L, alpha)


def gp_predict(gp: GpState, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent variance (original target units) at rows of ``Xq``."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    Ks = matern52(Xq, gp.X, gp.signal_var, gp.length_scales)
    mean = Ks @ gp.alpha
    v = cho_solve((gp.chol, True), Ks.T)
    var = gp.signal_var - np.sum(Ks * v.T, axis=1)
    var = np.maximum(var, 0.0)
    return gp.y_mean + gp.y_std * mean, (gp.y_std ** 2) * var


def gp_posterior(gp: GpState, x) -> tuple[float, float]:
    mean, var = gp_predict(gp, np.asarray(x, dtype=float)[None, :])
    return float(mean[0]), float(var[0])


# ---------------------------------------------------------------------------
# Acquisition
# ---------------------------------------------------------------------------

def expected_improvement(mean, std, best_y, xi=0.01):
    """EI for minimization; ``std == 0`` falls back to ``max(0, best_y - mean - xi)``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    imp = best_y - mean - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, imp / np.where(std > 0, std, 1.0), 0.0)
        ei = np.where(std > 0, imp * norm.cdf(z) + std * norm.pdf(z), np.maximum(imp, 0.0))
    return np.maximum(ei, 0.0)


def acquisition(gp: GpState, x, best_y: float, xi: float = 0.01):
    """Expected improvement at ``x`` (scaled coordinates, one point or a batch).

    ``xi`` is measured in standard deviations of the observed targets, so
    the exploration margin is independent of the objective's units.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    mean, var = gp_predict(gp, x[None, :] if single else x)
    ei = expected_improvement(mean, np.sqrt(var), best_y, xi * gp.y_std)
    return float(ei[0]) if single else ei


def _neighbors(v, space: SearchSpace):
    steps = {0: (1, 5, 25), 1: (1, 3), 2: (1, 5), 3: (1,), 4: (1, 2, 3, 4, 5)}
    out = []
    for dim, deltas in steps.items():
        for s in deltas:
            for sign in (1, -1):
                u = v.copy()
                if dim == 4:
                    u[4] = (v[4] + sign * s) % 6
                elif dim == 3:
                    u[3] = 1 - v[3]
                else:
                    u[dim] = v[dim] + sign * s
                if space.lattice_min[dim] <= u[dim] <= space.lattice_max[dim]:
                    out.append(u)
    return np.unique(np.array(out), axis=0)


def propose_next(gp: GpState, space: SearchSpace = SEARCH_SPACE, rng=None, *, exclude=None,
                 n_candidates: int = 10_000, n_refine: int = 10, xi: float = 0.01,
                 best_y: float | None = None) -> ParamSet:
    """Maximize EI over random candidates, then hill-climb on the integer lattice.

    Lattice points in ``exclude`` (default: the GP's own observations) are
    never returned.
    """
    rng = np.random.default_rng() if rng is None else rng
    if best_y is None:
        best_y = float(gp.y.min())
    if exclude is None:
        exclude = space.unscale(gp.X)
    seen = {tuple(int(t) for t in row) for row in np.atleast_2d(exclude)}

    cand = np.unique(decode_lattice(space.sample(rng, n_candidates), space), axis=0)
    keep = np.array([tuple(row) not in seen for row in cand.tolist()], dtype=bool)
    cand = cand[keep]
    if cand.size == 0:
        # pathological: everything sampled was already evaluated
        cand = decode_lattice(space.sample(rng, 1), space)
    scores = acquisition(gp, space.scale(cand), best_y, xi)
    order = np.argsort(-scores, kind="stable")[:n_refine]

    best_v, best_s = cand[order[0]], scores[order[0]]
    for start in order:
        v, s = cand[start], scores[start]
        for _ in range(50):
            nb = _neighbors(v, space)
            nb = nb[[tuple(row) not in seen for row in nb.tolist()]]
            if nb.size == 0:
                break
            ns = acquisition(gp, space.scale(nb), best_y, xi)
            j = int(np.argmax(ns))
            if ns[j] <= s:
                break
            v, s = nb[j], ns[j]
        if s > best_s:
            best_v, best_s = v, s
    return from_lattice(best_v)
