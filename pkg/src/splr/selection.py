"""Penalty selection: gradient-at-zero anchors and held-out-entry validation.

The anchors are exact zero thresholds: at the zero model, the smallest
nuclear penalty that keeps the interactions block at zero is the operator
norm of the data-fit gradient, and the smallest l1 penalty that keeps the
main effects at zero is the largest atom inner product with that gradient.
Grids descend geometrically from the anchors.

Cross-validation partitions the observed entries uniformly at random,
refits along the grid from the largest penalties down with warm starts, and
scores held-out entries by squared error of the predicted mean on the data's
natural scale (one combined number across column types, with a per-type
breakdown alongside).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import bcgd, expfam
from .dictionary import Dictionary
from .exceptions import InvalidInputError
from .frame import MixedDataFrame

_REDRAW_LIMIT = 20


@dataclass(frozen=True)
class LambdaGrid:
    lambda1: np.ndarray
    lambda2: np.ndarray
    lambda1_max: float
    lambda2_max: float
    degenerate1: bool = False
    degenerate2: bool = False

    def __post_init__(self):
        for name, arr, degen in (
            ("lambda1", self.lambda1, self.degenerate1),
            ("lambda2", self.lambda2, self.degenerate2),
        ):
            arr = np.asarray(arr, dtype=float)
            if degen:
                if not np.array_equal(arr, [0.0]):
                    raise InvalidInputError(f"degenerate {name} grid must be [0]")
            else:
                if np.any(arr <= 0) or np.any(np.diff(arr) >= 0):
                    raise InvalidInputError(
                        f"{name} grid must be strictly decreasing and positive"
                    )
            object.__setattr__(self, name, arr)


def _geometric(anchor: float, length: int, decades: float) -> np.ndarray:
    return np.geomspace(anchor, anchor * 10.0 ** (-decades), length)


def default_grid(
    frame: MixedDataFrame,
    links,
    dictionary: Dictionary,
    n1: int = 8,
    n2: int = 8,
    decades: float = 3.0,
) -> LambdaGrid:
    """Geometric grids anchored at the exact zero-model thresholds."""
    grad0 = expfam.gradient(np.zeros(frame.shape), frame, links)
    lam1_max = float(np.linalg.svd(grad0, compute_uv=False)[0])
    lam2_max = float(np.abs(dictionary.adjoint(grad0)).max())
    degen1 = lam1_max == 0.0
    degen2 = lam2_max == 0.0
    return LambdaGrid(
        lambda1=np.array([0.0]) if degen1 else _geometric(lam1_max, n1, decades),
        lambda2=np.array([0.0]) if degen2 else _geometric(lam2_max, n2, decades),
        lambda1_max=lam1_max,
        lambda2_max=lam2_max,
        degenerate1=degen1,
        degenerate2=degen2,
    )


@dataclass(frozen=True)
class CVCell:
    lambda1: float
    lambda2: float
    fold: int
    error: float
    n_held_out: int
    per_type: dict = field(default_factory=dict)


@dataclass
class CVReport:
    """Fold-level errors, their per-pair mean/deviation, and the chosen pair."""

    grid: LambdaGrid
    cells: list
    mean_error: np.ndarray  # (len(lambda1), len(lambda2))
    std_error: np.ndarray
    best_lambda1: float
    best_lambda2: float
    per_type_at_best: dict
    n_folds: int
    seed: int

    def to_json(self) -> str:
        payload = {
            "lambda1_grid": self.grid.lambda1.tolist(),
            "lambda2_grid": self.grid.lambda2.tolist(),
            "lambda1_max": self.grid.lambda1_max,
            "lambda2_max": self.grid.lambda2_max,
            "mean_error": self.mean_error.tolist(),
            "std_error": self.std_error.tolist(),
            "best_lambda1": self.best_lambda1,
            "best_lambda2": self.best_lambda2,
            "per_type_at_best": self.per_type_at_best,
            "n_folds": self.n_folds,
            "seed": self.seed,
            "cells": [
                {
                    "lambda1": c.lambda1,
                    "lambda2": c.lambda2,
                    "fold": c.fold,
                    "error": c.error,
                    "n_held_out": c.n_held_out,
                    "per_type": c.per_type,
                }
                for c in self.cells
            ],
        }
        return json.dumps(payload, indent=2)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["lambda1", "lambda2", "fold", "error"])
            for c in self.cells:
                writer.writerow([c.lambda1, c.lambda2, c.fold, c.error])


def _draw_folds(frame: MixedDataFrame, n_folds: int, rng) -> list:
    """Partition observed entries; every fold's complement must keep every
    column observed.  Redraws a limited number of times, then fails."""
    coords = np.argwhere(frame.mask)
    if len(coords) < n_folds:
        raise InvalidInputError("fewer observed entries than folds")
    for _ in range(_REDRAW_LIMIT):
        order = rng.permutation(len(coords))
        folds = [coords[order[f::n_folds]] for f in range(n_folds)]
        ok = True
        for fold in folds:
            train_mask = frame.mask.copy()
            train_mask[fold[:, 0], fold[:, 1]] = False
            if np.any(train_mask.sum(axis=0) == 0):
                ok = False
                break
        if ok:
            return folds
    raise InvalidInputError(
        f"could not draw {n_folds} folds leaving every column observed "
        f"after {_REDRAW_LIMIT} attempts"
    )


def _mask_out(frame: MixedDataFrame, coords) -> MixedDataFrame:
    train_mask = frame.mask.copy()
    train_mask[coords[:, 0], coords[:, 1]] = False
    return MixedDataFrame(
        frame.column_names, frame.column_types, frame.values, train_mask
    )


def path_errors(
    train_frame: MixedDataFrame,
    links,
    dictionary: Dictionary,
    grid: LambdaGrid,
    config: bcgd.SolverConfig,
    holdout_coords,
    y_true,
    column_types,
):
    """Warm-started fits over the whole grid; squared error on held-out cells.

    Returns (error matrix, per-type error matrices, fits-by-pair) indexed by
    (i1, i2) positions in the grid arrays.
    """
    rows, cols = holdout_coords[:, 0], holdout_coords[:, 1]
    assert not train_frame.mask[rows, cols].any(), "held-out cells leaked into training"
    types = [column_types[j].value for j in cols]
    type_names = sorted(set(types))
    type_sel = {t: np.array([tt == t for tt in types]) for t in type_names}

    n1, n2 = len(grid.lambda1), len(grid.lambda2)
    errors = np.full((n1, n2), np.nan)
    per_type = {t: np.full((n1, n2), np.nan) for t in type_names}
    fits = {}
    warm = None
    for i1, lam1 in enumerate(grid.lambda1):
        for i2, lam2 in enumerate(grid.lambda2):
            cfg = replace(config, lam1=float(lam1), lam2=float(lam2))
            result = bcgd.fit(train_frame, links, dictionary, cfg, init=warm)
            warm = (result.alpha_hat, result.l_hat)
            fits[(i1, i2)] = result
            mu = expfam.predicted_means(result.x_hat, links)[rows, cols]
            sq = (mu - y_true) ** 2
            errors[i1, i2] = float(sq.mean())
            for t in type_names:
                sel = type_sel[t]
                if sel.any():
                    per_type[t][i1, i2] = float(sq[sel].mean())
    return errors, per_type, fits


def choose_best(grid: LambdaGrid, mean_error: np.ndarray):
    """Smallest mean error; ties go to the larger penalties (scan order)."""
    best = (0, 0)
    best_val = np.inf
    for i1 in range(len(grid.lambda1)):
        for i2 in range(len(grid.lambda2)):
            if mean_error[i1, i2] < best_val:
                best_val = mean_error[i1, i2]
                best = (i1, i2)
    return best


def cross_validate(
    frame: MixedDataFrame,
    links,
    dictionary: Dictionary,
    grid: LambdaGrid,
    n_folds: int = 5,
    seed: int = 0,
    config: bcgd.SolverConfig | None = None,
) -> CVReport:
    """Entry-masking cross-validation over the penalty grid."""
    if n_folds < 2:
        raise InvalidInputError("need at least 2 folds")
    if config is None:
        config = bcgd.SolverConfig(lam1=0.0, lam2=0.0)
    rng = np.random.default_rng(seed)
    folds = _draw_folds(frame, n_folds, rng)

    n1, n2 = len(grid.lambda1), len(grid.lambda2)
    fold_errors = np.empty((n_folds, n1, n2))
    cells = []
    per_type_all = {}
    for f, fold_coords in enumerate(folds):
        train = _mask_out(frame, fold_coords)
        y_true = frame.values[fold_coords[:, 0], fold_coords[:, 1]]
        errors, per_type, _ = path_errors(
            train, links, dictionary, grid, config,
            fold_coords, y_true, frame.column_types,
        )
        fold_errors[f] = errors
        for i1 in range(n1):
            for i2 in range(n2):
                cells.append(
                    CVCell(
                        lambda1=float(grid.lambda1[i1]),
                        lambda2=float(grid.lambda2[i2]),
                        fold=f,
                        error=float(errors[i1, i2]),
                        n_held_out=len(fold_coords),
                        per_type={
                            t: float(m[i1, i2]) for t, m in per_type.items()
                        },
                    )
                )
        for t, m in per_type.items():
            per_type_all.setdefault(t, []).append(m)

    mean_error = fold_errors.mean(axis=0)
    std_error = fold_errors.std(axis=0)
    i1, i2 = choose_best(grid, mean_error)
    per_type_at_best = {
        t: float(np.nanmean([m[i1, i2] for m in mats]))
        for t, mats in per_type_all.items()
    }
    return CVReport(
        grid=grid,
        cells=cells,
        mean_error=mean_error,
        std_error=std_error,
        best_lambda1=float(grid.lambda1[i1]),
        best_lambda2=float(grid.lambda2[i2]),
        per_type_at_best=per_type_at_best,
        n_folds=n_folds,
        seed=seed,
    )


def holdout_select(
    frame: MixedDataFrame,
    links,
    dictionary: Dictionary,
    grid: LambdaGrid,
    holdout_frac: float = 0.2,
    seed: int = 0,
    config: bcgd.SolverConfig | None = None,
    refit: bool = True,
):
    """Single random holdout of observed entries; returns (lam1, lam2, fit).

    Cheaper than full cross-validation; used by the study harnesses.  The
    returned fit is refit on all observed entries at the chosen pair (warm
    started from the path solution) unless ``refit`` is disabled.
    """
    if not 0 < holdout_frac < 1:
        raise InvalidInputError("holdout_frac must be in (0, 1)")
    if config is None:
        config = bcgd.SolverConfig(lam1=0.0, lam2=0.0)
    rng = np.random.default_rng(seed)
    coords = np.argwhere(frame.mask)
    n_hold = max(1, int(round(holdout_frac * len(coords))))
    for attempt in range(_REDRAW_LIMIT):
        held = coords[rng.choice(len(coords), size=n_hold, replace=False)]
        train_mask = frame.mask.copy()
        train_mask[held[:, 0], held[:, 1]] = False
        if not np.any(train_mask.sum(axis=0) == 0):
            break
    else:
        raise InvalidInputError("holdout draw kept emptying a column")
    train = _mask_out(frame, held)
    y_true = frame.values[held[:, 0], held[:, 1]]
    errors, _, fits = path_errors(
        train, links, dictionary, grid, config, held, y_true, frame.column_types
    )
    i1, i2 = choose_best(grid, errors)
    lam1, lam2 = float(grid.lambda1[i1]), float(grid.lambda2[i2])
    best_fit = fits[(i1, i2)]
    if refit:
        cfg = replace(config, lam1=lam1, lam2=lam2)
        best_fit = bcgd.fit(
            frame, links, dictionary, cfg,
            init=(best_fit.alpha_hat, best_fit.l_hat),
        )
    return lam1, lam2, best_fit
