"""Inner proximal solvers: weighted Lasso and weighted nuclear-norm problems.

The weighted Lasso

    min_a  sum_ij W_ij (Z_ij - apply(a)_ij)^2 + nu * ||a - anchor||_2^2
           + lam2 * ||a||_1

is solved by cyclic coordinate descent with exact per-coordinate
soft-threshold updates; the ridge term makes every coordinate update strictly
convex regardless of the atom supports.

The weighted nuclear problem

    min_L  sum_ij W_ij (Z_ij - L_ij)^2 + lam1 * ||L||_*       (W_ij > 0)

is solved by EM-style iterations that treat the weights, rescaled into (0,1],
as observation frequencies: blend the target into the current iterate and
soft-threshold the singular values.  Under uniform weights a single blend
step is the exact closed-form solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dictionary import Dictionary
from .exceptions import (
    ConvergenceError,
    InternalConsistencyError,
    InvalidInputError,
    ShapeMismatchError,
)


@dataclass(frozen=True)
class SvtConfig:
    """SVD backend choice for singular value thresholding.

    Full LAPACK SVD below ``full_max_dim``; above it, a seeded randomized
    range finder with ``oversample`` extra directions and ``n_power_iter``
    power iterations, truncated at ``rank_cap`` (defaults to the full minimum
    dimension, i.e. exact up to numerics).
    """

    full_max_dim: int = 200
    rank_cap: int | None = None
    oversample: int = 10
    n_power_iter: int = 2
    seed: int = 0


_DEFAULT_SVT = SvtConfig()


def _full_svd(a):
    try:
        return np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")


def _randomized_svd(a, rank, oversample, n_power_iter, seed):
    m, n = a.shape
    p = min(min(m, n), rank + oversample)
    rng = np.random.default_rng(seed)
    q = np.linalg.qr(a @ rng.standard_normal((n, p)))[0]
    for _ in range(n_power_iter):
        q = np.linalg.qr(a.T @ q)[0]
        q = np.linalg.qr(a @ q)[0]
    u_small, s, vt = _full_svd(q.T @ a)
    u = q @ u_small
    return u[:, :rank], s[:rank], vt[:rank]


def _svd(a, svt: SvtConfig):
    m, n = a.shape
    cap = min(m, n) if svt.rank_cap is None else min(svt.rank_cap, m, n)
    if min(m, n) <= svt.full_max_dim or cap + svt.oversample >= min(m, n):
        return _full_svd(a)
    return _randomized_svd(a, cap, svt.oversample, svt.n_power_iter, svt.seed)


def nuclear_norm(a) -> float:
    """Sum of singular values."""
    a = np.asarray(a, dtype=float)
    if not np.isfinite(a).all():
        raise InvalidInputError("matrix has non-finite entries")
    return float(np.linalg.svd(a, compute_uv=False).sum())


def _svt_with_diagnostics(a, lam, svt):
    u, s, vt = _svd(a, svt)
    shrunk = np.maximum(s - lam, 0.0)
    keep = shrunk > 0
    out = (u[:, keep] * shrunk[keep]) @ vt[keep]
    return out, float(shrunk.sum()), int(keep.sum())


def soft_threshold_singular_values(a, lam: float, svt: SvtConfig | None = None):
    """Proximal map of the nuclear norm: shrink singular values by ``lam``."""
    a = np.asarray(a, dtype=float)
    if not np.isfinite(a).all():
        raise InvalidInputError("cannot take an SVD of non-finite input")
    if lam < 0:
        raise InvalidInputError("threshold must be >= 0")
    out, _, _ = _svt_with_diagnostics(a, lam, svt or _DEFAULT_SVT)
    return out


@dataclass
class WeightedLassoProblem:
    dictionary: Dictionary
    weights: np.ndarray
    targets: np.ndarray
    ridge: float
    anchor: np.ndarray
    penalty: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        self.anchor = np.asarray(self.anchor, dtype=float)
        shape = self.dictionary.shape
        if self.weights.shape != shape or self.targets.shape != shape:
            raise ShapeMismatchError("weights/targets must match the dictionary shape")
        if self.anchor.shape != (self.dictionary.n_atoms,):
            raise ShapeMismatchError("anchor length must equal the number of atoms")
        if np.any(self.weights < 0):
            raise InvalidInputError("weights must be nonnegative")
        if not self.ridge > 0:
            raise InvalidInputError("ridge must be strictly positive")
        if self.penalty < 0:
            raise InvalidInputError("penalty must be >= 0")


def weighted_lasso_objective(prob: WeightedLassoProblem, alpha) -> float:
    alpha = np.asarray(alpha, dtype=float)
    resid = prob.targets - prob.dictionary.apply(alpha)
    return float(
        np.sum(prob.weights * resid * resid)
        + prob.ridge * np.sum((alpha - prob.anchor) ** 2)
        + prob.penalty * np.abs(alpha).sum()
    )


def _segment_dots(values, indptr):
    return np.add.reduceat(values, indptr[:-1])


def weighted_lasso_kkt_residual(prob: WeightedLassoProblem, alpha) -> float:
    """Largest minimum-norm subgradient entry of the objective at ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    indptr, rows, cols, vals = prob.dictionary.atom_supports
    resid = prob.targets - prob.dictionary.apply(alpha)
    wv = prob.weights[rows, cols] * vals
    dots = _segment_dots(wv * resid[rows, cols], indptr)
    grad = -2.0 * dots + 2.0 * prob.ridge * (alpha - prob.anchor)
    lam = prob.penalty
    kkt = np.where(
        alpha != 0.0,
        np.abs(grad + lam * np.sign(alpha)),
        np.maximum(np.abs(grad) - lam, 0.0),
    )
    return float(kkt.max()) if kkt.size else 0.0


def _soft(z, gamma):
    return np.sign(z) * max(abs(z) - gamma, 0.0)


def solve_weighted_lasso(
    prob: WeightedLassoProblem, tol: float = 1e-8, max_iter: int = 1000
) -> np.ndarray:
    """Cyclic coordinate descent with active-set passes after the first sweep.

    Returns the minimizer to KKT residual <= tol; raises ConvergenceError
    (carrying the final residual) if ``max_iter`` sweeps are exhausted.
    """
    if not tol > 0:
        raise InvalidInputError("tol must be > 0")
    indptr, rows, cols, vals = prob.dictionary.atom_supports
    n = prob.dictionary.n_atoms
    w_gather = prob.weights[rows, cols]
    wv = w_gather * vals
    quad = _segment_dots(wv * vals, indptr) + prob.ridge  # strictly positive
    nu, lam, anchor = prob.ridge, prob.penalty, prob.anchor

    alpha = prob.anchor.astype(float).copy()
    resid = prob.targets - prob.dictionary.apply(alpha)
    obj = weighted_lasso_objective(prob, alpha)

    def cd_pass(indices):
        for k in indices:
            lo, hi = indptr[k], indptr[k + 1]
            r, c, wv_k = rows[lo:hi], cols[lo:hi], wv[lo:hi]
            dot = float(wv_k @ resid[r, c])
            b = dot + alpha[k] * (quad[k] - nu) + nu * anchor[k]
            new = _soft(b, lam / 2.0) / quad[k]
            delta = new - alpha[k]
            if delta != 0.0:
                resid[r, c] -= delta * vals[lo:hi]
                alpha[k] = new

    all_indices = np.arange(n)
    sweeps = 0
    kkt = np.inf
    while sweeps < max_iter:
        cd_pass(all_indices)
        sweeps += 1
        new_obj = weighted_lasso_objective(prob, alpha)
        if new_obj > obj + 1e-9 * max(1.0, abs(obj)):
            raise InternalConsistencyError(
                f"coordinate descent increased the objective: {obj} -> {new_obj}"
            )
        obj = new_obj
        kkt = weighted_lasso_kkt_residual(prob, alpha)
        if kkt <= tol:
            return alpha
        active = np.flatnonzero(alpha)
        while active.size and sweeps < max_iter:
            before = alpha[active].copy()
            cd_pass(active)
            sweeps += 1
            if np.max(np.abs(alpha[active] - before)) <= 0.1 * tol:
                break
    raise ConvergenceError(
        f"weighted lasso did not reach KKT residual {tol:g} in {max_iter} sweeps "
        f"(final residual {kkt:.3e})",
        residual=kkt,
    )


@dataclass
class WeightedNuclearProblem:
    weights: np.ndarray
    targets: np.ndarray
    penalty: float
    svt: SvtConfig = field(default_factory=SvtConfig)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.weights.shape != self.targets.shape or self.weights.ndim != 2:
            raise ShapeMismatchError("weights and targets must be equal 2-d shapes")
        if np.any(self.weights <= 0):
            raise InvalidInputError("nuclear-problem weights must be strictly positive")
        if self.penalty < 0:
            raise InvalidInputError("penalty must be >= 0")


def weighted_nuclear_objective(prob: WeightedNuclearProblem, mat) -> float:
    diff = prob.targets - mat
    return float(np.sum(prob.weights * diff * diff) + prob.penalty * nuclear_norm(mat))


def solve_weighted_nuclear(
    prob: WeightedNuclearProblem,
    tol: float = 1e-6,
    max_iter: int = 100,
    init: np.ndarray | None = None,
    on_max_iter: str = "raise",
) -> np.ndarray:
    """EM soft-impute iterations for the weighted nuclear-norm problem.

    Weights are rescaled internally into (0,1] (the penalty threshold is
    rescaled by the same factor, so the solved problem is unchanged).  Stops
    when the relative Frobenius change of the iterate drops to ``tol``.  With
    ``on_max_iter="return"`` the current iterate is returned at the cap
    instead of raising; descent up to that point is still guaranteed.
    """
    if not tol > 0:
        raise InvalidInputError("tol must be > 0")
    if on_max_iter not in ("raise", "return"):
        raise InvalidInputError("on_max_iter must be 'raise' or 'return'")
    w_max = float(prob.weights.max())
    omega = prob.weights / w_max
    threshold = prob.penalty / (2.0 * w_max)
    current = (
        np.zeros_like(prob.targets) if init is None else np.array(init, dtype=float)
    )
    if current.shape != prob.targets.shape:
        raise ShapeMismatchError("init must match the target shape")

    obj = weighted_nuclear_objective(prob, current)
    rel_change = np.inf
    for _ in range(max_iter):
        blended = omega * prob.targets + (1.0 - omega) * current
        new, nuc, _ = _svt_with_diagnostics(blended, threshold, prob.svt)
        diff = prob.targets - new
        new_obj = float(np.sum(prob.weights * diff * diff) + prob.penalty * nuc)
        if new_obj > obj + 1e-9 * max(1.0, abs(obj)):
            raise InternalConsistencyError(
                f"EM step increased the objective: {obj} -> {new_obj}"
            )
        rel_change = float(
            np.linalg.norm(new - current) / max(1.0, np.linalg.norm(new))
        )
        current = new
        obj = new_obj
        if rel_change <= tol:
            return current
    if on_max_iter == "return":
        return current
    raise ConvergenceError(
        f"weighted nuclear solver did not converge in {max_iter} iterations "
        f"(last relative change {rel_change:.3e})",
        residual=rel_change,
    )
