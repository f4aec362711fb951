"""Shared builders for randomized test instances."""

import numpy as np
import pytest
from scipy.special import expit

from splr.dictionary import (
    CorruptionsDictionary,
    CustomDictionary,
    GroupEffectsDictionary,
    RowColumnDictionary,
    equal_group_assignment,
)
from splr.expfam import LinkSpec
from splr.frame import ColumnType, MixedDataFrame

KIND_TO_TYPE = {
    "gaussian": ColumnType.NUMERIC,
    "bernoulli": ColumnType.BINARY,
    "poisson": ColumnType.COUNT,
}


def make_links(kinds):
    out = []
    for kind in kinds:
        if kind == "gaussian":
            out.append(LinkSpec.gaussian())
        elif kind == "bernoulli":
            out.append(LinkSpec.bernoulli())
        else:
            out.append(LinkSpec.poisson())
    return out


def sample_observations(rng, x_true, kinds):
    """Draw one matrix of observations at natural parameters ``x_true``."""
    m1, m2 = x_true.shape
    values = np.empty((m1, m2))
    for j, kind in enumerate(kinds):
        if kind == "gaussian":
            values[:, j] = rng.normal(x_true[:, j], 1.0)
        elif kind == "bernoulli":
            values[:, j] = rng.binomial(1, expit(x_true[:, j]))
        else:
            values[:, j] = rng.poisson(np.exp(x_true[:, j]))
    return values


def make_mixed_instance(seed, m1=6, m2=5, p_obs=0.7, kinds=None, x_scale=0.8):
    """Random frame + links + a random parameter matrix for gradient checks."""
    rng = np.random.default_rng(seed)
    if kinds is None:
        base = ["gaussian", "bernoulli", "poisson"]
        kinds = [base[j % 3] for j in range(m2)]
    x_true = x_scale * rng.standard_normal((m1, m2))
    values = sample_observations(rng, x_true, kinds)
    mask = rng.random((m1, m2)) < p_obs
    if not mask.any():
        mask[0, 0] = True
    names = tuple(f"c{j}" for j in range(m2))
    types = tuple(KIND_TO_TYPE[k] for k in kinds)
    frame = MixedDataFrame(names, types, values, mask)
    links = make_links(kinds)
    x_eval = x_scale * rng.standard_normal((m1, m2))
    return frame, links, x_eval


def make_dictionary(kind, shape, rng=None):
    m1, m2 = shape
    if kind == "groups":
        h = min(3, m1)
        return GroupEffectsDictionary(equal_group_assignment(m1, h), shape)
    if kind == "rowcol":
        return RowColumnDictionary(shape)
    if kind == "corruptions":
        rng = rng or np.random.default_rng(0)
        n = max(2, (m1 * m2) // 4)
        flat = rng.choice(m1 * m2, size=n, replace=False)
        return CorruptionsDictionary([(int(f) // m2, int(f) % m2) for f in flat], shape)
    if kind == "custom":
        rng = rng or np.random.default_rng(0)
        atoms = []
        for _ in range(4):
            n_cells = rng.integers(1, 4)
            cells = rng.choice(m1 * m2, size=n_cells, replace=False)
            atoms.append(
                [
                    (int(f) // m2, int(f) % m2, float(rng.uniform(-1, 1)))
                    for f in cells
                ]
            )
        return CustomDictionary(atoms, shape)
    raise ValueError(kind)


def _soft(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _svt(a, t):
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    s = np.maximum(s - t, 0.0)
    return (u * s) @ vt


def gaussian_prox_gradient_reference(frame, links, dictionary, lam1, lam2,
                                     n_iter=4000):
    """Accelerated proximal gradient on the penalized Gaussian objective.

    Self-contained reference minimizer (gradient, prox maps, and Lipschitz
    bound all written out here).  Returns the best objective value seen.
    """
    sig = np.array([link.sigma2 for link in links])
    mask = frame.mask.astype(float)
    y = frame.y_filled
    m1, m2 = frame.shape
    n = dictionary.n_atoms

    design = np.zeros((m1 * m2, n))
    for k in range(n):
        unit = np.zeros(n)
        unit[k] = 1.0
        design[:, k] = dictionary.apply(unit).ravel()
    stacked = np.hstack([design, np.eye(m1 * m2)])
    lip = sig.max() * np.linalg.norm(stacked, 2) ** 2
    step = 1.0 / lip

    def objective(alpha, low):
        x = dictionary.apply(alpha) + low
        fit = np.sum(mask * (-y * x + 0.5 * sig[None, :] * x * x))
        nuc = np.linalg.svd(low, compute_uv=False).sum()
        return float(fit + lam1 * nuc + lam2 * np.abs(alpha).sum())

    alpha = np.zeros(n)
    low = np.zeros((m1, m2))
    ext_a, ext_l = alpha.copy(), low.copy()
    t_mom = 1.0
    best = objective(alpha, low)
    prev = best
    for _ in range(n_iter):
        x = dictionary.apply(ext_a) + ext_l
        grad_x = mask * (sig[None, :] * x - y)
        new_a = _soft(ext_a - step * dictionary.adjoint(grad_x), step * lam2)
        new_l = _svt(ext_l - step * grad_x, step * lam1)
        val = objective(new_a, new_l)
        if val > prev:  # adaptive restart keeps the sequence monotone enough
            ext_a, ext_l, t_mom = new_a.copy(), new_l.copy(), 1.0
        else:
            t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
            ext_a = new_a + ((t_mom - 1.0) / t_next) * (new_a - alpha)
            ext_l = new_l + ((t_mom - 1.0) / t_next) * (new_l - low)
            t_mom = t_next
        alpha, low, prev = new_a, new_l, val
        if val < best:
            best = val
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
