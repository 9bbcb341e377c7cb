"""Geometry backend for compact symmetric spaces normalized to unit volume.

Three spaces are supported: the circle R/Z, flat tori (R/Z)^d and the round
2-sphere of radius R with 4*pi*R^2 = 1.  All heat kernels use the Brownian
convention dp/ds = (1/2) Laplacian p, so the wrapped Gaussian at time s has
variance s per coordinate.  (Under the d/ds = Laplacian convention every s
in this package would halve.)

Points are plain float64 arrays in chart coordinates: shape (1,) for the
circle (fractional coordinate in [0,1)), (d,) for the torus, (3,) ambient
for the sphere with |x| = R.  Tangent vectors are arrays in the same frame.
All operations are pure; RNG state is caller-owned.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError, DomainError, NumericalError

# Representation switch for the circle heat kernel: spectral series above,
# image (wrapped Gaussian) sum below.  Each converges fast in its regime.
_SPECTRAL_MIN_S = 0.01
_SERIES_EPS = 1e-16


def wrap_unit(x):
    """Reduce coordinates to the canonical chart range [0, 1)."""
    return x - np.floor(x)


def signed_delta(d):
    """Wrap a coordinate difference to (-1/2, 1/2].

    The antipodal difference maps to +1/2: this is the deterministic
    positive-direction tie-break used by the logarithm at the cut locus.
    """
    return d - np.ceil(d - 0.5)


def _heat1d(s: float, delta):
    """Unit-circle heat kernel p(s, delta) for a coordinate difference."""
    d = signed_delta(np.asarray(delta, dtype=float))
    if s >= _SPECTRAL_MIN_S:
        out = np.ones_like(d)
        k = 1
        while True:
            f = math.exp(-2.0 * math.pi**2 * k * k * s)
            if 2.0 * f < _SERIES_EPS:
                break
            out += 2.0 * f * np.cos(2.0 * math.pi * k * d)
            k += 1
        return out
    n_img = int(math.ceil(6.0 * math.sqrt(s))) + 2
    c = 1.0 / math.sqrt(2.0 * math.pi * s)
    out = np.zeros_like(d)
    for n in range(-n_img, n_img + 1):
        u = d + n
        out += c * np.exp(-u * u / (2.0 * s))
    return out


def _dheat1d(s: float, delta):
    """Derivative of the unit-circle heat kernel with respect to delta."""
    d = signed_delta(np.asarray(delta, dtype=float))
    if s >= _SPECTRAL_MIN_S:
        out = np.zeros_like(d)
        k = 1
        while True:
            f = math.exp(-2.0 * math.pi**2 * k * k * s)
            if 2.0 * f < _SERIES_EPS:
                break
            out -= 4.0 * math.pi * k * f * np.sin(2.0 * math.pi * k * d)
            k += 1
        return out
    n_img = int(math.ceil(6.0 * math.sqrt(s))) + 2
    c = 1.0 / math.sqrt(2.0 * math.pi * s)
    out = np.zeros_like(d)
    for n in range(-n_img, n_img + 1):
        u = d + n
        out -= (u / s) * c * np.exp(-u * u / (2.0 * s))
    return out


def _check_time(s: float) -> None:
    if not s > 0.0:
        raise DomainError(f"heat-kernel time must be positive, got s={s}")


class Circle:
    """The circle R/Z: unit volume, diameter 1/2."""

    kind = "circle"
    dim = 1
    coord_dim = 1
    noise_dim = 1
    diameter = 0.5
    injectivity_radius = 0.5

    def canonical(self, x):
        return wrap_unit(np.asarray(x, dtype=float))

    def distance(self, x, y) -> float:
        return float(abs(signed_delta(y[0] - x[0])))

    def exp(self, x, v):
        return wrap_unit(x + v)

    def log(self, x, y):
        return np.array([signed_delta(y[0] - x[0])])

    def random_point(self, rng):
        return np.array([rng.random()])

    def heat_kernel(self, s: float, x, y) -> float:
        _check_time(s)
        return float(_heat1d(s, y[0] - x[0]))

    def grad_log_heat_kernel(self, s: float, theta, z):
        _check_time(s)
        d = theta[0] - z[0]
        return np.array([float(_dheat1d(s, d) / _heat1d(s, d))])

    def sample_heat(self, s: float, x, rng):
        _check_time(s)
        return wrap_unit(x + math.sqrt(s) * rng.standard_normal(1))

    def noise_step(self, theta, gauss):
        return np.asarray(gauss, dtype=float).copy()

    # vectorized helpers used by quadrature and field evaluation
    def dist_many(self, xs, y):
        return np.abs(signed_delta(xs[:, 0] - y[0]))

    def heat_many(self, s: float, x, ys):
        _check_time(s)
        return _heat1d(s, x[0] - ys[:, 0])

    def dheat_many(self, s: float, x, ys):
        """d/dx of p(s, x, y_i) as an (n, 1) array of tangent components."""
        _check_time(s)
        return _dheat1d(s, x[0] - ys[:, 0])[:, None]

    def __repr__(self):
        return "Circle()"


class FlatTorus:
    """The flat torus (R/Z)^d: unit volume, diameter sqrt(d)/2."""

    kind = "torus"

    def __init__(self, dim: int):
        if dim < 1:
            raise ConfigError(f"manifold: torus dimension must be >= 1, got {dim}")
        self.dim = dim
        self.coord_dim = dim
        self.noise_dim = dim
        self.diameter = math.sqrt(dim) / 2.0
        self.injectivity_radius = 0.5

    def canonical(self, x):
        return wrap_unit(np.asarray(x, dtype=float))

    def distance(self, x, y) -> float:
        return float(np.linalg.norm(signed_delta(y - x)))

    def exp(self, x, v):
        return wrap_unit(x + v)

    def log(self, x, y):
        return signed_delta(y - x)

    def random_point(self, rng):
        return rng.random(self.dim)

    def heat_kernel(self, s: float, x, y) -> float:
        _check_time(s)
        return float(np.prod([_heat1d(s, y[i] - x[i]) for i in range(self.dim)]))

    def grad_log_heat_kernel(self, s: float, theta, z):
        _check_time(s)
        d = theta - z
        return np.array([float(_dheat1d(s, d[i]) / _heat1d(s, d[i])) for i in range(self.dim)])

    def sample_heat(self, s: float, x, rng):
        _check_time(s)
        return wrap_unit(x + math.sqrt(s) * rng.standard_normal(self.dim))

    def noise_step(self, theta, gauss):
        return np.asarray(gauss, dtype=float).copy()

    def dist_many(self, xs, y):
        return np.linalg.norm(signed_delta(xs - y[None, :]), axis=1)

    def heat_many(self, s: float, x, ys):
        _check_time(s)
        out = _heat1d(s, x[0] - ys[:, 0])
        for i in range(1, self.dim):
            out *= _heat1d(s, x[i] - ys[:, i])
        return out

    def dheat_many(self, s: float, x, ys):
        _check_time(s)
        facs = [_heat1d(s, x[i] - ys[:, i]) for i in range(self.dim)]
        out = np.empty((ys.shape[0], self.dim))
        for i in range(self.dim):
            col = _dheat1d(s, x[i] - ys[:, i])
            for j in range(self.dim):
                if j != i:
                    col = col * facs[j]
            out[:, i] = col
        return out

    def __repr__(self):
        return f"FlatTorus(dim={self.dim})"


class Sphere:
    """Round 2-sphere of radius R with total area 1 (4*pi*R^2 = 1)."""

    kind = "sphere"
    dim = 2
    coord_dim = 3
    noise_dim = 3

    def __init__(self):
        self.radius = 1.0 / math.sqrt(4.0 * math.pi)
        self.diameter = math.pi * self.radius
        self.injectivity_radius = math.pi * self.radius
        self._cdf_cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def canonical(self, x):
        x = np.asarray(x, dtype=float)
        return x * (self.radius / np.linalg.norm(x))

    def _cos_angle(self, x, y) -> float:
        return float(np.clip(np.dot(x, y) / self.radius**2, -1.0, 1.0))

    def distance(self, x, y) -> float:
        cross = np.linalg.norm(np.cross(x, y))
        return self.radius * math.atan2(cross / self.radius**2, self._cos_angle(x, y))

    def exp(self, x, v):
        nv = np.linalg.norm(v)
        if nv < 1e-300:
            return x.copy()
        alpha = nv / self.radius
        return math.cos(alpha) * x + (math.sin(alpha) * self.radius / nv) * v

    def _antipodal_direction(self, x):
        # first canonical tangent direction: project e1 (or e2 if degenerate)
        xhat = x / self.radius
        e = np.array([1.0, 0.0, 0.0])
        if abs(xhat[0]) > 0.9:
            e = np.array([0.0, 1.0, 0.0])
        u = e - np.dot(e, xhat) * xhat
        return u / np.linalg.norm(u)

    def log(self, x, y):
        rho = self.distance(x, y)
        if rho < 1e-15:
            return np.zeros(3)
        if rho > self.injectivity_radius - 1e-12:
            return self.injectivity_radius * self._antipodal_direction(x)
        xhat = x / self.radius
        perp = y - np.dot(y, xhat) * xhat
        return rho * perp / np.linalg.norm(perp)

    def random_point(self, rng):
        g = rng.standard_normal(3)
        return self.canonical(g)

    def _series(self, s: float, cos_gamma, want_deriv: bool = False):
        """Legendre heat-kernel series; optionally also d/dgamma.

        With unit area the kernel is sum_l (2l+1) exp(-l(l+1)s/(2R^2)) P_l(cos g).
        The truncation leaves a tail below 1e-10 in the kernel value.
        """
        a = s / (2.0 * self.radius**2)
        x = np.asarray(cos_gamma, dtype=float)
        p_prev = np.ones_like(x)
        p_cur = x.copy()
        d_prev = np.zeros_like(x)
        d_cur = np.ones_like(x)
        val = p_prev + 3.0 * math.exp(-2.0 * a) * p_cur
        dval = 3.0 * math.exp(-2.0 * a) * d_cur
        l = 1
        while True:
            p_next = ((2 * l + 1) * x * p_cur - l * p_prev) / (l + 1)
            d_next = d_prev + (2 * l + 1) * p_cur
            l += 1
            f = (2 * l + 1) * math.exp(-l * (l + 1) * a)
            val += f * p_next
            if want_deriv:
                dval += f * d_next
            p_prev, p_cur = p_cur, p_next
            d_prev, d_cur = d_cur, d_next
            if f < 1e-14 and l >= 8:
                break
            if l > 6000:
                raise NumericalError(f"sphere heat-kernel series did not converge at s={s}")
        if want_deriv:
            sin_g = np.sqrt(np.maximum(0.0, 1.0 - x * x))
            return val, -sin_g * dval
        return val, None

    def heat_kernel(self, s: float, x, y) -> float:
        _check_time(s)
        val, _ = self._series(s, self._cos_angle(x, y))
        return float(val)

    def grad_log_heat_kernel(self, s: float, theta, z):
        _check_time(s)
        rho = self.distance(theta, z)
        if rho < 1e-14:
            return np.zeros(3)
        cg = self._cos_angle(theta, z)
        val, dval = self._series(s, cg, want_deriv=True)
        u = self.log(theta, z) / rho  # unit tangent toward z
        # gamma = rho / R and grad_theta gamma = -u / R
        return (-float(dval) / float(val) / self.radius) * u

    def _polar_cdf(self, s: float):
        cached = self._cdf_cache.get(s)
        if cached is not None:
            return cached
        n = 4096
        gam = np.linspace(0.0, math.pi, n + 1)
        dens, _ = self._series(s, np.cos(gam))
        f = 2.0 * math.pi * self.radius**2 * np.sin(gam) * dens
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(gam))])
        cdf /= cdf[-1]
        if len(self._cdf_cache) > 64:
            self._cdf_cache.clear()
        self._cdf_cache[s] = (gam, cdf)
        return gam, cdf

    def sample_heat(self, s: float, x, rng):
        """Exact polar-angle inverse-CDF sampling, uniform azimuth."""
        _check_time(s)
        gam, cdf = self._polar_cdf(s)
        gamma = float(np.interp(rng.random(), cdf, gam))
        phi = 2.0 * math.pi * rng.random()
        xhat = x / self.radius
        e1 = self._antipodal_direction(x)
        e2 = np.cross(xhat, e1)
        direction = math.cos(phi) * e1 + math.sin(phi) * e2
        return self.radius * (math.cos(gamma) * xhat + math.sin(gamma) * direction)

    def noise_step(self, theta, gauss):
        xhat = theta / self.radius
        g = np.asarray(gauss, dtype=float)
        return g - np.dot(g, xhat) * xhat

    def dist_many(self, xs, y):
        cross = np.linalg.norm(np.cross(xs, y[None, :]), axis=1)
        dots = xs @ y
        return self.radius * np.arctan2(cross / self.radius**2, dots / self.radius**2)

    def heat_many(self, s: float, x, ys):
        _check_time(s)
        cg = np.clip(ys @ x / self.radius**2, -1.0, 1.0)
        val, _ = self._series(s, cg)
        return val

    def __repr__(self):
        return "Sphere()"


def make_manifold(spec: str):
    """Build a manifold from its config name: "circle", "torus:d" or "sphere"."""
    spec = spec.strip().lower()
    if spec == "circle":
        return Circle()
    if spec == "sphere":
        return Sphere()
    if spec.startswith("torus"):
        parts = spec.split(":")
        if len(parts) != 2:
            raise ConfigError(f'manifold: expected "torus:d", got "{spec}"')
        try:
            d = int(parts[1])
        except ValueError:
            raise ConfigError(f'manifold: bad torus dimension in "{spec}"') from None
        if d > 3:
            raise ConfigError(f"manifold: torus dimension {d} > 3 is unsupported")
        return FlatTorus(d)
    raise ConfigError(f'manifold: unknown kind "{spec}"')


def format_point(x) -> str:
    return ",".join(f"{c:.17g}" for c in np.atleast_1d(x))


def parse_point(text: str, manifold):
    try:
        coords = np.array([float(c) for c in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f'point: cannot parse "{text}"') from None
    if coords.shape != (manifold.coord_dim,):
        raise ConfigError(
            f"point: expected {manifold.coord_dim} coordinates, got {coords.shape[0]}"
        )
    return manifold.canonical(coords)


def icosphere(subdivisions: int, radius: float):
    """Geodesic icosahedral mesh: vertices, faces and unit-sum vertex weights.

    Each subdivision pass splits every triangle in four; the node count is
    10 * 4**subdivisions + 2.  Vertex weights are one third of the planar
    area of incident faces, normalized to sum to one.
    """
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v for v in verts]

    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            idx = midpoint_cache.get(key)
            if idx is None:
                m = verts[i] + verts[j]
                m /= np.linalg.norm(m)
                verts.append(m)
                idx = len(verts) - 1
                midpoint_cache[key] = idx
            return idx

        new_faces = []
        for (a, b, c) in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces

    v = np.array(verts) * radius
    f = np.array(faces, dtype=np.int64)
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    tri_area = 0.5 * np.linalg.norm(cross, axis=1)
    weights = np.zeros(len(v))
    for corner in range(3):
        np.add.at(weights, f[:, corner], tri_area / 3.0)
    weights /= weights.sum()
    return v, f, weights
