"""Synthetic ground truth, observation sampling, metrics, and baselines.

Ground truth draws an s-sparse coefficient vector and a rank-r factor
product, rescales the two pieces so their Frobenius-norm ratio matches the
requested value exactly, then rescales the sum so its largest absolute entry
hits the target box edge (keeping binary columns away from saturated
probabilities).  Observations are sampled per column family at the resulting
natural parameters and masked independently.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit

from .dictionary import (
    Dictionary,
    GroupEffectsDictionary,
    RowColumnDictionary,
    equal_group_assignment,
)
from .exceptions import InvalidInputError
from .expfam import LinkSpec
from .frame import ColumnType, MixedDataFrame
from .subsolvers import soft_threshold_singular_values

_REDRAW_LIMIT = 20


@dataclass(frozen=True)
class SimDesign:
    """One synthetic-instance recipe; same design + seed reproduces bits."""

    m1: int
    m2: int
    s: int
    r: int
    p_obs: float
    ratio: float = 1.0
    structure: str = "groups"
    n_groups: int = 5
    col_layout: str = "numeric"  # "numeric" | "mixed"
    box: float = 2.5
    sigma2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise InvalidInputError("need positive dimensions")
        if not 1 <= self.r <= min(self.m1, self.m2):
            raise InvalidInputError("rank must lie in [1, min(m1, m2)]")
        if not 0 < self.p_obs <= 1:
            raise InvalidInputError("p_obs must lie in (0, 1]")
        if not self.ratio > 0:
            raise InvalidInputError("ratio must be > 0")
        if not self.box > 0:
            raise InvalidInputError("box must be > 0")
        if self.structure not in ("groups", "rowcol"):
            raise InvalidInputError("structure must be groups|rowcol")
        if self.col_layout not in ("numeric", "mixed"):
            raise InvalidInputError("col_layout must be numeric|mixed")
        n_atoms = (
            self.n_groups * self.m2
            if self.structure == "groups"
            else self.m1 + self.m2
        )
        if not 1 <= self.s <= n_atoms:
            raise InvalidInputError(f"sparsity must lie in [1, {n_atoms}]")

    def to_json_dict(self) -> dict:
        return asdict(self)


def design_dictionary(design: SimDesign) -> Dictionary:
    if design.structure == "groups":
        return GroupEffectsDictionary(
            equal_group_assignment(design.m1, design.n_groups),
            (design.m1, design.m2),
        )
    return RowColumnDictionary((design.m1, design.m2))


def design_links(design: SimDesign) -> list:
    if design.col_layout == "numeric":
        return [LinkSpec.gaussian(design.sigma2) for _ in range(design.m2)]
    half = (design.m2 + 1) // 2
    return [
        LinkSpec.gaussian(design.sigma2) if j < half else LinkSpec.bernoulli()
        for j in range(design.m2)
    ]


def design_column_types(design: SimDesign) -> tuple:
    return tuple(
        ColumnType.NUMERIC if link.kind == "gaussian" else ColumnType.BINARY
        for link in design_links(design)
    )


@dataclass(frozen=True)
class GroundTruth:
    alpha: np.ndarray
    low_rank: np.ndarray
    x: np.ndarray
    main_field: np.ndarray


def gen_ground_truth(design: SimDesign, dictionary: Dictionary, rng) -> GroundTruth:
    """Sparse coefficients plus a rank-r product, exactly rescaled."""
    n = dictionary.n_atoms
    for _ in range(_REDRAW_LIMIT):
        support = rng.choice(n, size=design.s, replace=False)
        alpha = np.zeros(n)
        alpha[support] = rng.standard_normal(design.s)
        left = rng.standard_normal((design.m1, design.r))
        right = rng.standard_normal((design.m2, design.r))
        low = left @ right.T
        main = dictionary.apply(alpha)
        main_norm = np.linalg.norm(main)
        low_norm = np.linalg.norm(low)
        if main_norm == 0.0 or low_norm == 0.0:
            continue
        scale_alpha = design.ratio / main_norm
        scale_low = 1.0 / low_norm
        x_raw = scale_alpha * main + scale_low * low
        peak = np.abs(x_raw).max()
        if peak == 0.0:
            continue
        t = design.box / peak
        return GroundTruth(
            alpha=t * scale_alpha * alpha,
            low_rank=t * scale_low * low,
            x=t * x_raw,
            main_field=t * scale_alpha * main,
        )
    raise InvalidInputError("could not draw a nondegenerate ground truth")


def gen_observations(x, design: SimDesign, links, rng):
    """Sample one observation per cell at its natural parameter, then mask."""
    x = np.asarray(x, dtype=float)
    m1, m2 = x.shape
    values = np.empty((m1, m2))
    for j, link in enumerate(links):
        if link.kind == "gaussian":
            values[:, j] = rng.normal(
                link.sigma2 * x[:, j], np.sqrt(link.sigma2)
            )
        elif link.kind == "bernoulli":
            values[:, j] = rng.binomial(1, expit(x[:, j]))
        else:
            if link.a <= 0:
                raise InvalidInputError("poisson sampling needs a > 0")
            values[:, j] = rng.poisson(link.a * np.exp(link.a * x[:, j]))
    for _ in range(_REDRAW_LIMIT):
        mask = rng.random((m1, m2)) < design.p_obs
        if mask.any():
            return values, mask
    raise InvalidInputError("mask draw produced no observed entries")


@dataclass(frozen=True)
class SimInstance:
    design: SimDesign
    dictionary: Dictionary
    links: list
    truth: GroundTruth
    y_full: np.ndarray
    frame: MixedDataFrame


def simulate_instance(design: SimDesign) -> SimInstance:
    """Full pipeline with two independent substreams split off the seed."""
    truth_rng, obs_rng = (
        np.random.default_rng(child)
        for child in np.random.SeedSequence(design.seed).spawn(2)
    )
    dictionary = design_dictionary(design)
    links = design_links(design)
    truth = gen_ground_truth(design, dictionary, truth_rng)
    y_full, mask = gen_observations(truth.x, design, links, obs_rng)
    frame = MixedDataFrame(
        tuple(f"c{j}" for j in range(design.m2)),
        design_column_types(design),
        y_full,
        mask,
    )
    return SimInstance(design, dictionary, links, truth, y_full, frame)


@dataclass(frozen=True)
class SimMetrics:
    err_alpha: float
    err_main: float
    err_low_rank: float
    mse_missing: float

    def as_dict(self) -> dict:
        return asdict(self)


def error_metrics(
    instance: SimInstance, alpha_hat, l_hat, predictions
) -> SimMetrics:
    """Squared estimation errors plus imputation MSE on the masked cells.

    ``predictions`` must already be on the data's natural scale (per-entry
    means for the model fits, raw group means for the numeric baselines).
    """
    truth = instance.truth
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    l_hat = np.asarray(l_hat, dtype=float)
    main_hat = instance.dictionary.apply(alpha_hat)
    missing = ~instance.frame.mask
    if missing.any():
        mse = float(
            np.mean((np.asarray(predictions)[missing] - instance.y_full[missing]) ** 2)
        )
    else:
        mse = float("nan")
    return SimMetrics(
        err_alpha=float(np.sum((alpha_hat - truth.alpha) ** 2)),
        err_main=float(np.sum((main_hat - truth.main_field) ** 2)),
        err_low_rank=float(np.sum((l_hat - truth.low_rank) ** 2)),
        mse_missing=mse,
    )


@dataclass(frozen=True)
class BaselineFit:
    """Two-step comparator output, shaped like a model fit for the metrics."""

    alpha_hat: np.ndarray
    l_hat: np.ndarray
    x_hat: np.ndarray
    n_iter: int


def column_mean_predictions(frame: MixedDataFrame) -> np.ndarray:
    """Every cell predicted by its column's observed mean (0 when empty)."""
    counts = frame.mask.sum(axis=0)
    sums = frame.y_filled.sum(axis=0)
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return np.tile(means, (frame.n_rows, 1))


def group_mean_svt_baseline(
    frame: MixedDataFrame,
    dictionary: GroupEffectsDictionary,
    lam: float,
    tol: float = 1e-5,
    max_iter: int = 300,
) -> BaselineFit:
    """Group means per column, then soft-impute completion of the residuals.

    The data are treated numerically regardless of declared column types; all
    predictions live on the data scale.
    """
    if not isinstance(dictionary, GroupEffectsDictionary):
        raise InvalidInputError("the two-step baseline needs a group dictionary")
    mask = frame.mask
    y = frame.y_filled
    h, m2 = dictionary.n_groups, frame.n_cols
    sums = np.zeros((h, m2))
    counts = np.zeros((h, m2))
    np.add.at(sums, dictionary.assignment, y)
    np.add.at(counts, dictionary.assignment, mask.astype(float))
    table = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    alpha = table.ravel()
    main = dictionary.apply(alpha)
    resid = np.where(mask, y - main, 0.0)

    low = np.zeros(frame.shape)
    iters = 0
    for iters in range(1, max_iter + 1):
        blended = np.where(mask, resid, low)
        new = soft_threshold_singular_values(blended, lam / 2.0)
        change = np.linalg.norm(new - low) / max(1.0, np.linalg.norm(new))
        low = new
        if change <= tol:
            break
    return BaselineFit(alpha_hat=alpha, l_hat=low, x_hat=main + low, n_iter=iters)


def baseline_svt_anchor(frame: MixedDataFrame, dictionary) -> float:
    """Smallest soft-impute penalty that keeps the completed residuals at 0."""
    baseline = group_mean_svt_baseline(frame, dictionary, lam=np.inf, max_iter=1)
    resid = np.where(
        frame.mask, frame.y_filled - dictionary.apply(baseline.alpha_hat), 0.0
    )
    return 2.0 * float(np.linalg.svd(resid, compute_uv=False)[0])
