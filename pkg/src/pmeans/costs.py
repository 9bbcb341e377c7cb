"""Power-of-distance cost kernels, heat-smoothed kernels and their gradients.

The objective H_{p,nu}(y) = sum_i w_i rho^p(y, x_i) and the smoothed kernel
kappa_s(theta, y) = integral p(s, theta, z) rho^p(z, y) dz are the two cost
surfaces everything else optimizes over.  On the circle and flat torus the
smoothed kernel and its theta-gradient are computed by fixed-grid trapezoid
quadrature on the periodic lattice (spectrally accurate); on the sphere both
are Monte Carlo estimates and the cost object is flagged stochastic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NondifferentiableError
from .manifolds import Circle, FlatTorus, Sphere, signed_delta
from .measures import DiscreteMeasure

_RHO_EPS = 1e-12


def _check_p(p: float) -> None:
    if not p >= 1.0:
        raise ConfigError(f"p: power exponent must be >= 1, got {p}")


def power_cost(m, p: float, x, y) -> float:
    """rho^p(x, y)."""
    _check_p(p)
    return m.distance(x, y) ** p


def h_cost(m, measure: DiscreteMeasure, p: float, y) -> float:
    """H_{p,nu}(y) = sum_i w_i rho^p(y, x_i); bounded by diameter^p."""
    _check_p(p)
    d = m.dist_many(measure.atoms, np.asarray(y, dtype=float))
    return float(np.dot(measure.weights, d**p))


def h_field_values(m, measure: DiscreteMeasure, p: float, ys):
    """Vectorized H over a batch of points, one value per row of ys."""
    _check_p(p)
    out = np.zeros(ys.shape[0])
    for w, a in zip(measure.weights, measure.atoms):
        out += w * m.dist_many(ys, a) ** p
    return out


def _zero_tangent(m):
    return np.zeros(3 if m.kind == "sphere" else m.dim)


def grad_power(m, p: float, theta, y):
    """grad_theta rho^p(theta, y) = -p rho^(p-2) log_theta(y).

    For 1 <= p < 2 the exponent is singular at rho = 0; the gradient is
    defined as 0 there (only the raw cost path can hit it, never the
    smoothed kernel).
    """
    _check_p(p)
    rho = m.distance(theta, y)
    if rho < _RHO_EPS:
        return _zero_tangent(m)
    return -p * rho ** (p - 2.0) * m.log(theta, y)


def grad_h(m, measure: DiscreteMeasure, p: float, y):
    """Riemannian gradient of H_{p,nu} at y.

    Raises NondifferentiableError for p = 1 when y coincides with an atom.
    """
    _check_p(p)
    y = np.asarray(y, dtype=float)
    out = None
    for w, a in zip(measure.weights, measure.atoms):
        rho = m.distance(y, a)
        if rho < _RHO_EPS:
            if p == 1.0:
                raise NondifferentiableError(
                    "grad of H with p=1 is undefined at an atom of the measure"
                )
            if p < 2.0:
                continue
        g = grad_power(m, p, y, a)
        out = w * g if out is None else out + w * g
    if out is None:
        out = _zero_tangent(m)
    return out


@dataclass(frozen=True)
class GradientBound:
    """Uniform bound ||grad_theta kappa_s(., y)|| <= p D^(p-1) K'' with K'' = 1.

    Distance gradients are unit vectors away from cut loci on these spaces,
    so K'' = 1; the drift bound used for step-size control is k = p D^(p-1).
    """

    k: float
    k_dd: float = 1.0

    @classmethod
    def for_power(cls, m, p: float) -> "GradientBound":
        _check_p(p)
        return cls(k=p * m.diameter ** (p - 1.0))


def kappa_grid_value(m, grid, p: float, s: float, theta, y) -> float:
    """Trapezoid quadrature of kappa_s(theta, y) over a periodic grid."""
    kz = m.heat_many(s, np.asarray(theta, dtype=float), grid)
    rp = m.dist_many(grid, np.asarray(y, dtype=float)) ** p
    return float(np.dot(kz, rp) / grid.shape[0])


def grad_kappa_grid(m, grid, p: float, s: float, theta, y):
    """Trapezoid quadrature of grad_theta kappa_s(theta, y) over a periodic grid."""
    dk = m.dheat_many(s, np.asarray(theta, dtype=float), grid)
    rp = m.dist_many(grid, np.asarray(y, dtype=float)) ** p
    return (rp @ dk) / grid.shape[0]


class SmoothedCost:
    """Heat-smoothed power cost kappa_s and its theta-gradient.

    Circle/torus: deterministic trapezoid quadrature over a periodic grid
    (`nodes` per dimension, default 2048, minimum 256 on the circle).
    Sphere: unbiased Monte Carlo estimators (`mc_samples` draws per call,
    score-function form for the gradient); `is_stochastic` is True and the
    caller must supply an rng.
    """

    def __init__(self, m, p: float, s: float, nodes: int = 2048, mc_samples: int = 4096):
        _check_p(p)
        if not s > 0.0:
            raise DomainError(f"smoothed cost: s must be positive, got {s}")
        if isinstance(m, Circle) and nodes < 256:
            raise ConfigError(f"smoothed cost: need >= 256 quadrature nodes on the circle, got {nodes}")
        self.manifold = m
        self.p = p
        self.s = s
        self.nodes = nodes
        self.mc_samples = mc_samples
        self.is_stochastic = isinstance(m, Sphere)
        if isinstance(m, Circle):
            self._grid = (np.arange(nodes) / nodes)[:, None]
        elif isinstance(m, FlatTorus):
            axes = [np.arange(nodes) / nodes] * m.dim
            mesh = np.meshgrid(*axes, indexing="ij")
            self._grid = np.stack([ax.ravel() for ax in mesh], axis=1)
        else:
            self._grid = None

    def value(self, theta, y, rng=None) -> float:
        """kappa_s(theta, y); converges to rho^p as s -> 0, bounded by D^p."""
        if self.is_stochastic:
            if rng is None:
                raise ConfigError("smoothed cost on the sphere is Monte Carlo; pass an rng")
            m = self.manifold
            zs = np.stack([m.sample_heat(self.s, theta, rng) for _ in range(self.mc_samples)])
            return float(np.mean(m.dist_many(zs, np.asarray(y)) ** self.p))
        return kappa_grid_value(self.manifold, self._grid, self.p, self.s, theta, y)

    def grad(self, theta, y, rng=None):
        """grad_theta kappa_s(theta, y); norm bounded by p D^(p-1)."""
        if self.is_stochastic:
            if rng is None:
                raise ConfigError("smoothed cost on the sphere is Monte Carlo; pass an rng")
            m = self.manifold
            acc = np.zeros(3)
            for _ in range(self.mc_samples):
                z = m.sample_heat(self.s, theta, rng)
                acc += m.grad_log_heat_kernel(self.s, theta, z) * (m.distance(z, y) ** self.p)
            return acc / self.mc_samples
        return grad_kappa_grid(self.manifold, self._grid, self.p, self.s, theta, y)


def _require_grid(m) -> None:
    if isinstance(m, Sphere):
        raise ConfigError(
            "the doubly smoothed functional uses grid quadrature and is only "
            "available on the circle and flat torus"
        )


def _grid_nodes(m, nodes: int):
    if isinstance(m, Circle):
        return (np.arange(nodes) / nodes)[:, None]
    axes = [np.arange(nodes) / nodes] * m.dim
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([ax.ravel() for ax in mesh], axis=1)


def u_plain_smoothed(m, measure: DiscreteMeasure, p: float, s: float, thetas, nodes: int = 2048):
    """U_{0,s}: integral of rho^p(theta, y) against the smoothed density nu_s.

    `thetas` is an (n, c) batch; returns one value per row.
    """
    _check_p(p)
    _require_grid(m)
    grid = _grid_nodes(m, nodes)
    cell = 1.0 / grid.shape[0]
    nu = np.zeros(grid.shape[0])
    for w, a in zip(measure.weights, measure.atoms):
        nu += w * m.heat_many(s, a, grid)
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    out = np.empty(thetas.shape[0])
    for i, th in enumerate(thetas):
        out[i] = np.dot(m.dist_many(grid, th) ** p, nu) * cell
    return out


def u_smoothed(m, measure: DiscreteMeasure, p: float, s1: float, s2: float, thetas, nodes: int = 2048):
    """U_{s1,s2}: double heat smoothing, integral kappa_{s1}(theta, y) nu_{s2}(y) dy.

    Computed by honest double quadrature (never via the single-smoothing
    identity, which is what the structural test compares it against):
    g(z) = integral rho^p(z, y) nu_{s2}(y) dy is tabulated on the grid once,
    then each theta costs one kernel quadrature.
    """
    _check_p(p)
    _require_grid(m)
    if not (s1 > 0.0 and s2 > 0.0):
        raise DomainError(f"u_smoothed: smoothing times must be positive, got ({s1}, {s2})")
    grid = _grid_nodes(m, nodes)
    n = grid.shape[0]
    cell = 1.0 / n
    nu2 = np.zeros(n)
    for w, a in zip(measure.weights, measure.atoms):
        nu2 += w * m.heat_many(s2, a, grid)
    if isinstance(m, Circle):
        # rho^p(z_i, y_j) is a circulant matrix; build it once
        diff = np.abs(signed_delta(grid[:, 0][:, None] - grid[:, 0][None, :]))
        g = (diff**p) @ nu2 * cell
    else:
        g = np.empty(n)
        for j in range(n):
            g[j] = np.dot(m.dist_many(grid, grid[j]) ** p, nu2) * cell
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    out = np.empty(thetas.shape[0])
    for i, th in enumerate(thetas):
        out[i] = np.dot(m.heat_many(s1, th, grid), g) * cell
    return out


class CircleCosineTable:
    """Cosine-series view of the smoothed circle kernel for fast drift evals.

    On the circle kappa_s(theta, y) depends only on delta = theta - y; its
    cosine coefficients are the FFT of rho^p on the quadrature grid damped by
    exp(-2 pi^2 k^2 s).  Evaluating the truncated series reproduces the
    trapezoid quadrature of `SmoothedCost` up to aliasing (cross-checked in
    tests), at O(terms) per call instead of O(nodes).
    """

    def __init__(self, p: float, grid_n: int = 4096, kmax: int = 64):
        _check_p(p)
        self.p = p
        delta = np.arange(grid_n) / grid_n
        rho = np.minimum(delta, 1.0 - delta)
        spec = np.fft.rfft(rho**p) / grid_n
        coef = np.empty(kmax)
        coef[0] = spec[0].real
        coef[1:] = 2.0 * spec[1 : kmax].real
        self.coef = coef
        self.kmax = kmax

    def _damped(self, s: float):
        k = np.arange(self.kmax)
        return self.coef * np.exp(-2.0 * math.pi**2 * k * k * s)

    def value(self, delta, s: float):
        d = np.asarray(delta, dtype=float)
        a = self._damped(s)
        k = np.arange(self.kmax)
        return np.cos(2.0 * math.pi * np.multiply.outer(d, k)) @ a

    def dvalue(self, delta, s: float):
        """d kappa_s / d delta, the drift kernel used by the annealing engine."""
        d = np.asarray(delta, dtype=float)
        a = self._damped(s)
        k = np.arange(self.kmax)
        return -np.sin(2.0 * math.pi * np.multiply.outer(d, k)) @ (2.0 * math.pi * k * a)
