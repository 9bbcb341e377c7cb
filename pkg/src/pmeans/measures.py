"""Discrete probability measures on a manifold and their heat-smoothed variants."""

from __future__ import annotations

import csv

import numpy as np

from .errors import ConfigError, DomainError


class DiscreteMeasure:
    """Weighted atoms sum(w_i delta_{x_i}); immutable after construction."""

    def __init__(self, atoms, weights=None):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        if atoms.shape[0] < 1:
            raise ConfigError("measure: needs at least one atom")
        if weights is None:
            weights = np.full(atoms.shape[0], 1.0 / atoms.shape[0])
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (atoms.shape[0],):
            raise ConfigError("measure: weights length must match atom count")
        if np.any(weights < 0.0):
            raise ConfigError("measure: weights must be nonnegative")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ConfigError(f"measure: weights sum to {weights.sum()!r}, expected 1")
        self.atoms = atoms
        self.weights = weights
        self._cumulative = np.cumsum(weights)
        self._cumulative[-1] = 1.0

    def __len__(self):
        return self.atoms.shape[0]

    def sample(self, rng):
        """One atom drawn by inverse CDF over cumulative weights (one uniform)."""
        i = int(np.searchsorted(self._cumulative, rng.random(), side="right"))
        return self.atoms[min(i, len(self) - 1)].copy()

    def __repr__(self):
        return f"DiscreteMeasure(n_atoms={len(self)})"


def uniform_empirical(points) -> DiscreteMeasure:
    """The empirical measure (1/N) sum delta_{x_k}."""
    pts = list(points)
    if not pts:
        raise ConfigError("measure: empty point list")
    return DiscreteMeasure(np.stack([np.atleast_1d(p) for p in pts]))


def load_measure_csv(path, manifold) -> DiscreteMeasure:
    """Load atoms from CSV: one row per atom, coordinates then optional weight.

    Rows with coord_dim columns get uniform weights; rows with coord_dim + 1
    columns carry an explicit weight in the last column.
    """
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            row = [c.strip() for c in row if c.strip() != ""]
            if not row or row[0].startswith("#"):
                continue
            if not _is_number(row[0]):
                continue  # header line
            rows.append([float(c) for c in row])
    if not rows:
        raise ConfigError(f"measure: no atom rows in {path}")
    c = manifold.coord_dim
    widths = {len(r) for r in rows}
    if widths == {c}:
        atoms = np.array(rows)
        weights = None
    elif widths == {c + 1}:
        arr = np.array(rows)
        atoms, weights = arr[:, :c], arr[:, c]
        weights = weights / weights.sum()
    else:
        raise ConfigError(
            f"measure: rows must have {c} or {c + 1} columns, found widths {sorted(widths)}"
        )
    atoms = np.stack([manifold.canonical(a) for a in atoms])
    return DiscreteMeasure(atoms, weights)


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


class SmoothedMeasure:
    """Heat smoothing of a discrete measure: density nu_s(y) = sum_i w_i p(s, y, x_i)."""

    def __init__(self, manifold, base: DiscreteMeasure, s: float):
        if not s > 0.0:
            raise DomainError(f"smoothed measure: s must be positive, got {s}")
        self.manifold = manifold
        self.base = base
        self.s = s

    def sample(self, rng):
        """Atom choice followed by an exact heat-kernel displacement."""
        atom = self.base.sample(rng)
        return self.manifold.sample_heat(self.s, atom, rng)

    def density(self, y) -> float:
        m = self.manifold
        return float(
            sum(w * m.heat_kernel(self.s, y, a) for w, a in zip(self.base.weights, self.base.atoms))
        )

    def density_many(self, ys):
        m = self.manifold
        out = np.zeros(ys.shape[0])
        for w, a in zip(self.base.weights, self.base.atoms):
            out += w * m.heat_many(self.s, a, ys)
        return out

    def __repr__(self):
        return f"SmoothedMeasure(n_atoms={len(self.base)}, s={self.s})"
