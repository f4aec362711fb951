"""Main-effects designs: indexed families of structured coefficient matrices.

A dictionary is a family {U^1, ..., U^N} of m1 x m2 matrices; the main-effects
component of the model is the combination sum_k alpha_k U^k.  Built-in
structures (group indicators, row/column indicators, single-cell corruptions)
never materialize their atoms: apply/adjoint are closed-form index arithmetic,
O(m1*m2) regardless of N.  Custom dictionaries store atoms as sparse triplets.

Every atom entry must lie in [-1, 1]; the per-cell overlap bound
max_(i,j) sum_k |U^k_ij| is part of the reported metadata and keeps the
l1-penalty scale meaningful across structures.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import InvalidInputError, ShapeMismatchError


@dataclass(frozen=True)
class DictionaryMetadata:
    """Structural constants used by penalty calibration and tests."""

    atom_l1_max: float        # largest entrywise l1 norm over atoms
    overlap_max: float        # largest per-cell sum of |atom| values
    gram_lower_bound: float   # lower bound on the Gram quadratic form
    coherence_sum_max: float  # max_k sum_{l != k} |<U_k, U_l>|


class Dictionary(abc.ABC):
    """Linear map alpha -> sum_k alpha_k U^k with structure-aware kernels."""

    def __init__(self, shape):
        m1, m2 = shape
        if m1 < 1 or m2 < 1:
            raise InvalidInputError("dictionary shape must be positive")
        self.shape = (int(m1), int(m2))

    @property
    @abc.abstractmethod
    def n_atoms(self) -> int: ...

    @abc.abstractmethod
    def apply(self, alpha) -> np.ndarray:
        """Evaluate sum_k alpha_k U^k as a dense m1 x m2 matrix."""

    @abc.abstractmethod
    def adjoint(self, grad) -> np.ndarray:
        """Coordinate k of the output is the trace inner product <U^k, grad>."""

    @abc.abstractmethod
    def metadata(self) -> DictionaryMetadata: ...

    @abc.abstractmethod
    def to_descriptor(self) -> dict: ...

    def gram_quadratic(self, alpha, weights) -> float:
        """Weighted energy sum_ij W_ij * (apply(alpha)_ij)^2."""
        weights = np.asarray(weights, dtype=float)
        if weights.shape != self.shape:
            raise ShapeMismatchError(
                f"weights shape {weights.shape} != dictionary shape {self.shape}"
            )
        field = self.apply(alpha)
        return float(np.sum(weights * field * field))

    @abc.abstractmethod
    def _support_triplets(self):
        """Yield (rows, cols, vals) index arrays for each atom, in order."""

    @cached_property
    def atom_supports(self):
        """CSC-style flattened per-atom supports: (indptr, rows, cols, vals)."""
        indptr = [0]
        rows, cols, vals = [], [], []
        for r, c, v in self._support_triplets():
            rows.append(np.asarray(r, dtype=np.intp))
            cols.append(np.asarray(c, dtype=np.intp))
            vals.append(np.asarray(v, dtype=float))
            indptr.append(indptr[-1] + rows[-1].size)
        return (
            np.asarray(indptr, dtype=np.intp),
            np.concatenate(rows) if rows else np.empty(0, dtype=np.intp),
            np.concatenate(cols) if cols else np.empty(0, dtype=np.intp),
            np.concatenate(vals) if vals else np.empty(0),
        )

    def _check_alpha(self, alpha) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.n_atoms,):
            raise ShapeMismatchError(
                f"coefficient vector length {alpha.shape} != {self.n_atoms} atoms"
            )
        return alpha

    def _check_grad(self, grad) -> np.ndarray:
        grad = np.asarray(grad, dtype=float)
        if grad.shape != self.shape:
            raise ShapeMismatchError(
                f"matrix shape {grad.shape} != dictionary shape {self.shape}"
            )
        return grad


class GroupEffectsDictionary(Dictionary):
    """Atom (h, q) marks the rows of group h in column q.

    ``assignment`` maps each row to exactly one of ``n_groups`` labels; every
    label must be used.  Atom index is k = h * m2 + q.
    """

    def __init__(self, assignment, shape, n_groups=None):
        super().__init__(shape)
        assignment = np.asarray(assignment)
        if assignment.shape != (self.shape[0],):
            raise InvalidInputError("assignment must give one group per row")
        if not np.issubdtype(assignment.dtype, np.integer):
            if np.any(assignment != np.floor(assignment)):
                raise InvalidInputError("group labels must be integers")
            assignment = assignment.astype(int)
        if assignment.min(initial=0) < 0:
            raise InvalidInputError("every row needs a nonnegative group label")
        h = int(assignment.max()) + 1 if n_groups is None else int(n_groups)
        counts = np.bincount(assignment, minlength=h)
        if assignment.max() >= h or np.any(counts == 0):
            raise InvalidInputError(
                "group labels must cover 0..n_groups-1 with no empty group"
            )
        self.assignment = assignment.copy()
        self.assignment.setflags(write=False)
        self.n_groups = h
        self.group_sizes = counts
        self._group_rows = [np.flatnonzero(assignment == g) for g in range(h)]

    @property
    def n_atoms(self) -> int:
        return self.n_groups * self.shape[1]

    def apply(self, alpha):
        alpha = self._check_alpha(alpha)
        table = alpha.reshape(self.n_groups, self.shape[1])
        return table[self.assignment].copy()

    def adjoint(self, grad):
        grad = self._check_grad(grad)
        out = np.zeros((self.n_groups, self.shape[1]))
        np.add.at(out, self.assignment, grad)
        return out.ravel()

    def metadata(self):
        sizes = self.group_sizes
        return DictionaryMetadata(
            atom_l1_max=float(sizes.max()),
            overlap_max=1.0,
            gram_lower_bound=float(sizes.min()),
            coherence_sum_max=0.0,
        )

    def _support_triplets(self):
        m2 = self.shape[1]
        for h in range(self.n_groups):
            rows = self._group_rows[h]
            ones = np.ones(rows.size)
            for q in range(m2):
                yield rows, np.full(rows.size, q, dtype=np.intp), ones

    def to_descriptor(self):
        return {"type": "groups", "assignment": self.assignment.tolist()}


class RowColumnDictionary(Dictionary):
    """Row indicators followed by column indicators: N = m1 + m2 atoms."""

    @property
    def n_atoms(self) -> int:
        return self.shape[0] + self.shape[1]

    def apply(self, alpha):
        alpha = self._check_alpha(alpha)
        m1 = self.shape[0]
        return alpha[:m1, None] + alpha[None, m1:]

    def adjoint(self, grad):
        grad = self._check_grad(grad)
        return np.concatenate([grad.sum(axis=1), grad.sum(axis=0)])

    def metadata(self):
        m1, m2 = self.shape
        return DictionaryMetadata(
            atom_l1_max=float(max(m1, m2)),
            overlap_max=2.0,
            gram_lower_bound=float(min(m1, m2)),
            coherence_sum_max=float(max(m1, m2)),
        )

    def _support_triplets(self):
        m1, m2 = self.shape
        col_range = np.arange(m2, dtype=np.intp)
        row_range = np.arange(m1, dtype=np.intp)
        for i in range(m1):
            yield np.full(m2, i, dtype=np.intp), col_range, np.ones(m2)
        for j in range(m2):
            yield row_range, np.full(m1, j, dtype=np.intp), np.ones(m1)

    def to_descriptor(self):
        return {"type": "rowcol"}


class CorruptionsDictionary(Dictionary):
    """One canonical-basis atom per listed cell."""

    def __init__(self, cells, shape):
        super().__init__(shape)
        cells = [(int(i), int(j)) for i, j in cells]
        if not cells:
            raise InvalidInputError("corruptions dictionary needs at least one cell")
        if len(set(cells)) != len(cells):
            raise InvalidInputError("corruption cells must be unique")
        m1, m2 = self.shape
        for i, j in cells:
            if not (0 <= i < m1 and 0 <= j < m2):
                raise InvalidInputError(f"cell ({i}, {j}) outside {m1} x {m2} frame")
        self.cells = tuple(cells)
        self._rows = np.array([c[0] for c in cells], dtype=np.intp)
        self._cols = np.array([c[1] for c in cells], dtype=np.intp)

    @property
    def n_atoms(self) -> int:
        return len(self.cells)

    def apply(self, alpha):
        alpha = self._check_alpha(alpha)
        out = np.zeros(self.shape)
        out[self._rows, self._cols] = alpha
        return out

    def adjoint(self, grad):
        grad = self._check_grad(grad)
        return grad[self._rows, self._cols].copy()

    def metadata(self):
        return DictionaryMetadata(1.0, 1.0, 1.0, 0.0)

    def _support_triplets(self):
        one = np.ones(1)
        for i, j in self.cells:
            yield (
                np.array([i], dtype=np.intp),
                np.array([j], dtype=np.intp),
                one,
            )

    def to_descriptor(self):
        return {"type": "corruptions", "cells": [list(c) for c in self.cells]}


class CustomDictionary(Dictionary):
    """Explicit atoms given as sparse (row, col, value) triplets."""

    def __init__(self, atoms, shape):
        super().__init__(shape)
        if not atoms:
            raise InvalidInputError("custom dictionary needs at least one atom")
        m1, m2 = self.shape
        parsed = []
        for k, triplets in enumerate(atoms):
            triplets = list(triplets)
            if not triplets:
                raise InvalidInputError(f"atom {k} is empty")
            rows = np.array([t[0] for t in triplets], dtype=np.intp)
            cols = np.array([t[1] for t in triplets], dtype=np.intp)
            vals = np.array([t[2] for t in triplets], dtype=float)
            if rows.min() < 0 or rows.max() >= m1 or cols.min() < 0 or cols.max() >= m2:
                raise InvalidInputError(f"atom {k} has entries outside the frame")
            if np.any(np.abs(vals) > 1.0):
                raise InvalidInputError(
                    f"atom {k} has entries outside [-1, 1]; rescale the atom"
                )
            if len({(int(r), int(c)) for r, c in zip(rows, cols)}) != rows.size:
                raise InvalidInputError(f"atom {k} repeats a cell")
            parsed.append((rows, cols, vals))
        self._atoms = parsed

    @property
    def n_atoms(self) -> int:
        return len(self._atoms)

    def apply(self, alpha):
        alpha = self._check_alpha(alpha)
        out = np.zeros(self.shape)
        for ak, (rows, cols, vals) in zip(alpha, self._atoms):
            if ak != 0.0:
                np.add.at(out, (rows, cols), ak * vals)
        return out

    def adjoint(self, grad):
        grad = self._check_grad(grad)
        return np.array(
            [np.dot(vals, grad[rows, cols]) for rows, cols, vals in self._atoms]
        )

    def metadata(self, gram_cap: int = 100_000):
        if self.n_atoms > gram_cap:
            raise InvalidInputError(
                f"refusing brute-force Gram analysis for {self.n_atoms} atoms "
                f"(cap {gram_cap})"
            )
        overlap = np.zeros(self.shape)
        for rows, cols, vals in self._atoms:
            np.add.at(overlap, (rows, cols), np.abs(vals))
        gram = self._dense_gram()
        off_diag = np.abs(gram) - np.diag(np.abs(np.diag(gram)))
        return DictionaryMetadata(
            atom_l1_max=float(max(np.abs(v).sum() for _, _, v in self._atoms)),
            overlap_max=float(overlap.max()),
            gram_lower_bound=float(np.linalg.eigvalsh(gram).min()),
            coherence_sum_max=float(off_diag.sum(axis=1).max()),
        )

    def _dense_gram(self):
        n = self.n_atoms
        gram = np.zeros((n, n))
        flat = []
        for rows, cols, vals in self._atoms:
            flat.append((rows * self.shape[1] + cols, vals))
        for k in range(n):
            idx_k, val_k = flat[k]
            lookup = dict(zip(idx_k.tolist(), val_k.tolist()))
            for l in range(k, n):
                idx_l, val_l = flat[l]
                dot = sum(
                    lookup.get(int(i), 0.0) * v for i, v in zip(idx_l, val_l)
                )
                gram[k, l] = gram[l, k] = dot
        return gram

    def _support_triplets(self):
        yield from self._atoms

    def to_descriptor(self):
        atoms = []
        for rows, cols, vals in self._atoms:
            atoms.append(
                [[int(r), int(c), float(v)] for r, c, v in zip(rows, cols, vals)]
            )
        return {"type": "custom", "atoms": atoms}


def build_dictionary(descriptor: dict, shape) -> Dictionary:
    """Construct a dictionary from its JSON descriptor."""
    kind = descriptor.get("type")
    if kind == "groups":
        return GroupEffectsDictionary(descriptor["assignment"], shape)
    if kind == "rowcol":
        return RowColumnDictionary(shape)
    if kind == "corruptions":
        return CorruptionsDictionary(descriptor["cells"], shape)
    if kind == "custom":
        return CustomDictionary(descriptor["atoms"], shape)
    raise InvalidInputError(f"unknown dictionary type {kind!r}")


def equal_group_assignment(n_rows: int, n_groups: int) -> np.ndarray:
    """Contiguous blocks of as-equal-as-possible sizes."""
    if not 1 <= n_groups <= n_rows:
        raise InvalidInputError("need 1 <= n_groups <= n_rows")
    return (np.arange(n_rows) * n_groups) // n_rows
