"""Exponential-family links and the masked quasi-likelihood.

Each column of a mixed data frame carries a convex link function ``g`` whose
derivative maps natural parameters to means.  The data-fitting term used by
the solver is the negative quasi-log-likelihood

    sum over observed (i, j) of  -Y_ij * X_ij + g_j(X_ij),

together with its entrywise gradient and curvature.  Unobserved entries
contribute exactly zero to every quantity here; the implementation only ever
evaluates links at observed positions, so masked cells can hold arbitrary
parameter values without affecting results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import InvalidInputError, NumericDegeneracyError, ShapeMismatchError

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"
POISSON = "poisson"

# exp() overflows float64 just above this; fail loudly instead of clipping
_EXP_ARG_MAX = 700.0


@dataclass(frozen=True)
class LinkSpec:
    """One column's link: convex ``g`` with derivatives ``gprime``/``gsecond``.

    kind:
        "gaussian"  g(x) = sigma2 * x^2 / 2      (mean sigma2*x, variance sigma2)
        "bernoulli" g(x) = log(1 + exp(x))       (success prob 1/(1+exp(-x)))
        "poisson"   g(x) = exp(a*x)              (mean a*exp(a*x))
    """

    kind: str
    sigma2: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in (GAUSSIAN, BERNOULLI, POISSON):
            raise InvalidInputError(f"unknown link kind {self.kind!r}")
        if self.kind == GAUSSIAN and not self.sigma2 > 0:
            raise InvalidInputError("gaussian scale sigma2 must be > 0")
        if self.kind == POISSON and self.a == 0:
            raise InvalidInputError("poisson rate-scale a must be nonzero")

    @classmethod
    def gaussian(cls, sigma2: float = 1.0) -> "LinkSpec":
        return cls(GAUSSIAN, sigma2=sigma2)

    @classmethod
    def bernoulli(cls) -> "LinkSpec":
        return cls(BERNOULLI)

    @classmethod
    def poisson(cls, a: float = 1.0) -> "LinkSpec":
        return cls(POISSON, a=a)

    def _exp_ax(self, x):
        ax = self.a * np.asarray(x, dtype=float)
        if np.any(ax > _EXP_ARG_MAX):
            raise InvalidInputError(
                f"poisson link overflow: a*x exceeds {_EXP_ARG_MAX:g}"
            )
        return np.exp(ax)

    def g(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == GAUSSIAN:
            return 0.5 * self.sigma2 * x * x
        if self.kind == BERNOULLI:
            # stable log(1 + exp(x)) for any sign and magnitude of x
            return np.logaddexp(0.0, x)
        return self._exp_ax(x)

    def gprime(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == GAUSSIAN:
            return self.sigma2 * x
        if self.kind == BERNOULLI:
            return expit(x)
        return self.a * self._exp_ax(x)

    def gsecond(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == GAUSSIAN:
            return np.full_like(x, self.sigma2)
        if self.kind == BERNOULLI:
            p = expit(x)
            return p * (1.0 - p)
        return self.a * self.a * self._exp_ax(x)


@dataclass(frozen=True)
class CurvatureBounds:
    """Bounds on g'' over the symmetric interval [-box_radius, box_radius]."""

    sigma_min_sq: float
    sigma_max_sq: float
    box_radius: float

    def __post_init__(self):
        if not (0 < self.sigma_min_sq <= self.sigma_max_sq < np.inf):
            raise InvalidInputError(
                "curvature bounds require 0 < sigma_min_sq <= sigma_max_sq < inf"
            )


def curvature_bounds(link: LinkSpec, box_radius: float) -> CurvatureBounds:
    """Exact min/max of g'' over [-box_radius, box_radius]."""
    if box_radius < 0:
        raise InvalidInputError("box_radius must be >= 0")
    r = float(box_radius)
    if link.kind == GAUSSIAN:
        lo = hi = link.sigma2
    elif link.kind == BERNOULLI:
        # p(1-p) peaks at x = 0 and decays monotonically in |x|
        hi = 0.25
        p = expit(r)
        lo = p * (1.0 - p)
    else:
        # a^2 * exp(a*x) is monotone in x
        vals = link.gsecond(np.array([-r, r]))
        lo, hi = float(vals.min()), float(vals.max())
    return CurvatureBounds(float(lo), float(hi), r)


def _check_inputs(x, frame, links):
    x = np.asarray(x, dtype=float)
    if x.shape != (frame.n_rows, frame.n_cols):
        raise ShapeMismatchError(
            f"parameter matrix shape {x.shape} != frame shape "
            f"{(frame.n_rows, frame.n_cols)}"
        )
    if len(links) != frame.n_cols:
        raise ShapeMismatchError(
            f"{len(links)} links given for {frame.n_cols} columns"
        )
    if not np.isfinite(x).all():
        raise InvalidInputError("parameter matrix contains non-finite entries")
    return x


def _link_blocks(links):
    """Column indices grouped by identical link, so frame-level loops run one
    vectorized pass per distinct link instead of one per column."""
    blocks = {}
    for j, link in enumerate(links):
        blocks.setdefault(link, []).append(j)
    return [(link, np.asarray(cols)) for link, cols in blocks.items()]


def quasi_loglik_neg(x, frame, links) -> float:
    """Negative quasi-log-likelihood summed over observed entries."""
    x = _check_inputs(x, frame, links)
    total = 0.0
    for link, cols in _link_blocks(links):
        obs = frame.mask[:, cols]
        if not obs.any():
            continue
        xo = x[:, cols][obs]
        yo = frame.values[:, cols][obs]
        total += float(np.sum(-yo * xo + link.g(xo)))
    return total


def gradient(x, frame, links) -> np.ndarray:
    """Entrywise gradient of the quasi-log-likelihood; zero where unobserved."""
    x = _check_inputs(x, frame, links)
    out = np.zeros_like(x)
    for link, cols in _link_blocks(links):
        obs = frame.mask[:, cols]
        if not obs.any():
            continue
        block = np.zeros(obs.shape)
        block[obs] = -frame.values[:, cols][obs] + link.gprime(x[:, cols][obs])
        out[:, cols] = block
    return out


def curvature_weights(x, frame, links) -> np.ndarray:
    """Per-entry quadratic-model weights g''(x)/2; zero where unobserved."""
    x = _check_inputs(x, frame, links)
    out = np.zeros_like(x)
    for link, cols in _link_blocks(links):
        obs = frame.mask[:, cols]
        if not obs.any():
            continue
        block = np.zeros(obs.shape)
        block[obs] = 0.5 * link.gsecond(x[:, cols][obs])
        out[:, cols] = block
    return out


def working_responses(x, frame, links, curvature_floor: float = 1e-10) -> np.ndarray:
    """Newton-style targets (Y - g'(x)) / g''(x); zero where unobserved.

    Unobserved entries always carry zero weight downstream, so the value
    chosen there is inert.
    """
    x = _check_inputs(x, frame, links)
    out = np.zeros_like(x)
    for link, cols in _link_blocks(links):
        obs = frame.mask[:, cols]
        if not obs.any():
            continue
        xo = x[:, cols][obs]
        curv = link.gsecond(xo)
        if np.any(curv < curvature_floor):
            flat = int(np.argmin(curv))
            rows_idx, cols_idx = np.nonzero(obs)
            bad = (int(rows_idx[flat]), int(cols[cols_idx[flat]]))
            raise NumericDegeneracyError(
                f"curvature underflow below {curvature_floor:g} at entry "
                f"({bad[0]}, {bad[1]})",
                entry=bad,
            )
        block = np.zeros(obs.shape)
        block[obs] = (frame.values[:, cols][obs] - link.gprime(xo)) / curv
        out[:, cols] = block
    return out


def predicted_means(x, links) -> np.ndarray:
    """Map a natural-parameter matrix to per-entry means, column by column."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != len(links):
        raise ShapeMismatchError(
            f"matrix with {x.shape} columns does not match {len(links)} links"
        )
    out = np.empty_like(x)
    for j, link in enumerate(links):
        out[:, j] = link.gprime(x[:, j])
    return out
