import math

import numpy as np
import pytest

from pmeans import (
    ConfigError,
    DiscreteMeasure,
    GradientBound,
    NondifferentiableError,
    SmoothedCost,
    grad_h,
    grad_power,
    h_cost,
    u_plain_smoothed,
    u_smoothed,
)
from pmeans.costs import CircleCosineTable, h_field_values


def P(*coords):
    return np.array(coords, dtype=float)


class TestH:
    def test_dirac_at_itself(self, circle):
        nu = DiscreteMeasure(np.array([[0.3]]))
        assert h_cost(circle, nu, 2.0, P(0.3)) == 0.0

    def test_two_atom_values(self, circle, two_atoms):
        assert h_cost(circle, two_atoms, 2.0, P(0.2)) == pytest.approx(0.04, abs=1e-15)
        # wrap distances are 0.3 and 0.3 at y = 0.7
        assert h_cost(circle, two_atoms, 2.0, P(0.7)) == pytest.approx(0.09, abs=1e-15)

    def test_bounds(self, circle, two_atoms, rng):
        for p in (1.0, 1.5, 2.0, 3.0):
            for _ in range(100):
                y = circle.random_point(rng)
                v = h_cost(circle, two_atoms, p, y)
                assert 0.0 <= v <= circle.diameter**p + 1e-15

    def test_p_below_one_rejected(self, circle, two_atoms):
        with pytest.raises(ConfigError):
            h_cost(circle, two_atoms, 0.5, P(0.1))

    def test_batch_matches_scalar(self, circle, two_atoms, rng):
        ys = np.stack([circle.random_point(rng) for _ in range(50)])
        batch = h_field_values(circle, two_atoms, 1.5, ys)
        for i in range(50):
            assert batch[i] == pytest.approx(h_cost(circle, two_atoms, 1.5, ys[i]), rel=1e-14)


class TestGradH:
    def test_zero_between_symmetric_atoms(self, circle, two_atoms):
        g = grad_h(circle, two_atoms, 2.0, P(0.2))
        assert abs(g[0]) <= 1e-14

    def test_single_atom_value(self, circle):
        # grad of rho^2(., 0.3) at 0 is -2 log_0(0.3) = -0.6
        nu = DiscreteMeasure(np.array([[0.3]]))
        g = grad_h(circle, nu, 2.0, P(0.0))
        assert g[0] == pytest.approx(-0.6, abs=1e-15)

    def test_nondifferentiable_p1_at_atom(self, circle):
        nu = DiscreteMeasure(np.array([[0.3], [0.8]]))
        with pytest.raises(NondifferentiableError):
            grad_h(circle, nu, 1.0, P(0.3))

    def test_p_between_one_and_two_at_atom_is_finite(self, circle):
        nu = DiscreteMeasure(np.array([[0.3], [0.8]]))
        g = grad_h(circle, nu, 1.5, P(0.3))
        assert np.all(np.isfinite(g))

    def test_matches_finite_differences(self, circle, rng):
        # spec oracle: 5 random atoms, p = 1.5, central differences h = 1e-6
        atoms = np.stack([circle.random_point(rng) for _ in range(5)])
        nu = DiscreteMeasure(atoms)
        p, h = 1.5, 1e-6
        checks = 0
        while checks < 50:
            y = circle.random_point(rng)
            if min(circle.distance(y, a) for a in atoms) < 0.01:
                continue
            if max(circle.distance(y, a) for a in atoms) > 0.49:
                continue  # stay away from cut loci
            g = grad_h(circle, nu, p, y)[0]
            fd = (
                h_cost(circle, nu, p, P(y[0] + h)) - h_cost(circle, nu, p, P(y[0] - h))
            ) / (2.0 * h)
            assert abs(g - fd) <= 1e-5 * max(abs(fd), 1e-3)
            checks += 1

    def test_sphere_gradient_fd(self, sphere, rng):
        atoms = np.stack([sphere.random_point(rng) for _ in range(4)])
        nu = DiscreteMeasure(atoms)
        h = 1e-6
        checks = 0
        while checks < 20:
            y = sphere.random_point(rng)
            if max(sphere.distance(y, a) for a in atoms) > 0.9 * sphere.injectivity_radius:
                continue
            g = grad_h(sphere, nu, 2.0, y)
            e1 = sphere._antipodal_direction(y)
            e2 = np.cross(y / sphere.radius, e1)
            for e in (e1, e2):
                fd = (
                    h_cost(sphere, nu, 2.0, sphere.exp(y, h * e))
                    - h_cost(sphere, nu, 2.0, sphere.exp(y, -h * e))
                ) / (2.0 * h)
                assert np.dot(g, e) == pytest.approx(fd, rel=1e-5, abs=1e-7)
            checks += 1


class TestGradientBound:
    def test_values(self, circle, sphere):
        assert GradientBound.for_power(circle, 2.0).k == pytest.approx(1.0)
        assert GradientBound.for_power(circle, 1.0).k == pytest.approx(1.0)
        assert GradientBound.for_power(circle, 1.5).k == pytest.approx(1.5 * math.sqrt(0.5))
        assert GradientBound.for_power(sphere, 2.0).k == pytest.approx(2.0 * sphere.diameter)
        assert GradientBound.for_power(circle, 2.0).k_dd == 1.0


class TestKappaS:
    def test_large_s_constant_equals_average_cost(self, circle):
        # kernel flattens: kappa -> integral of rho^2 = 1/12 independent of theta
        sc = SmoothedCost(circle, 2.0, 5.0, nodes=2048)
        vals = [sc.value(P(t), P(0.6)) for t in (0.0, 0.25, 0.7)]
        for v in vals:
            assert v == pytest.approx(1.0 / 12.0, abs=1e-7)

    def test_small_s_local_variance(self, circle):
        # at theta = y, kappa_s ~ s for small s (8192-node quadrature)
        sc = SmoothedCost(circle, 2.0, 0.01, nodes=8192)
        v = sc.value(P(0.2), P(0.2))
        assert 0.01 * 0.95 <= v <= 0.01 * 1.05

    def test_converges_to_power_cost(self, circle, rng):
        # away from the cut locus the small-s bias is just the local variance s;
        # within ~sqrt(s) of the antipode the kink adds a boundary layer
        checks = 0
        while checks < 10:
            th, y = circle.random_point(rng), circle.random_point(rng)
            rho = circle.distance(th, y)
            if rho > 0.4:
                continue
            raw = rho**2
            sm = SmoothedCost(circle, 2.0, 1e-3, nodes=4096).value(th, y)
            assert abs(sm - raw) <= 2e-3
            checks += 1

    def test_symmetry(self, circle, rng):
        sc = SmoothedCost(circle, 1.5, 0.02, nodes=2048)
        for _ in range(20):
            th, y = circle.random_point(rng), circle.random_point(rng)
            assert sc.value(th, y) == pytest.approx(sc.value(y, th), abs=1e-7)

    def test_bounded_by_diameter_power(self, circle, rng):
        sc = SmoothedCost(circle, 2.0, 0.03, nodes=2048)
        for _ in range(20):
            th, y = circle.random_point(rng), circle.random_point(rng)
            assert sc.value(th, y) <= circle.diameter**2 + 1e-12

    def test_node_minimum_on_circle(self, circle):
        with pytest.raises(ConfigError):
            SmoothedCost(circle, 2.0, 0.05, nodes=128)

    def test_torus_quadrature(self, torus2):
        sc = SmoothedCost(torus2, 2.0, 0.02, nodes=64)
        v = sc.value(P(0.2, 0.3), P(0.2, 0.3))
        # local variance in 2-D is 2s
        assert v == pytest.approx(0.04, rel=0.1)

    def test_sphere_is_stochastic_and_unbiased(self, sphere, rng):
        sc = SmoothedCost(sphere, 2.0, 0.02, mc_samples=2000)
        assert sc.is_stochastic
        with pytest.raises(ConfigError):
            sc.value(P(0.0, 0.0, 1.0), P(1.0, 0.0, 0.0))
        x = sphere.canonical(P(0.0, 0.0, 1.0))
        v = sc.value(x, x, rng=rng)
        # E rho^2 under the heat kernel at small s is about dim * s = 2s
        assert v == pytest.approx(0.04, rel=0.15)


class TestGradKappaS:
    def test_zero_at_symmetric_point(self, circle):
        sc = SmoothedCost(circle, 2.0, 0.02, nodes=2048)
        assert abs(sc.grad(P(0.3), P(0.3))[0]) <= 1e-10

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_gradient_bound(self, circle, p, rng):
        bound = GradientBound.for_power(circle, p).k
        for _ in range(60):
            th, y = circle.random_point(rng), circle.random_point(rng)
            s = 10 ** rng.uniform(math.log10(0.005), math.log10(0.5))
            g = SmoothedCost(circle, p, s, nodes=2048).grad(th, y)[0]
            assert abs(g) <= bound * (1.0 + 1e-6)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0])
    def test_matches_finite_differences(self, circle, p, rng):
        h = 1e-6
        for _ in range(20):
            th, y = circle.random_point(rng), circle.random_point(rng)
            s = 10 ** rng.uniform(math.log10(0.005), math.log10(0.2))
            sc = SmoothedCost(circle, p, s, nodes=2048)
            g = sc.grad(th, y)[0]
            fd = (sc.value(P(th[0] + h), y) - sc.value(P(th[0] - h), y)) / (2.0 * h)
            assert abs(g - fd) <= 1e-5 * max(abs(fd), 1e-2)

    def test_plain_kernel_drift(self, circle):
        # grad rho^p drift used by the plain engine
        g = grad_power(circle, 2.0, P(0.0), P(0.3))
        assert g[0] == pytest.approx(-0.6, abs=1e-15)
        assert grad_power(circle, 1.5, P(0.2), P(0.2))[0] == 0.0

    def test_cosine_table_matches_quadrature(self, circle, rng):
        # the fast drift table is the same quadrature in series form
        for p in (1.0, 1.5, 2.0):
            tab = CircleCosineTable(p, 4096, kmax=96)
            for _ in range(20):
                th, y = rng.random(), rng.random()
                s = 10 ** rng.uniform(math.log10(0.005), 0.0)
                sc = SmoothedCost(circle, p, s, nodes=4096)
                g_tab = float(tab.dvalue(th - y, s))
                g_quad = sc.grad(P(th), P(y))[0]
                assert abs(g_tab - g_quad) <= 1e-5


class TestUSmoothed:
    def test_double_smoothing_identity(self, circle, two_atoms, rng):
        # the headline structural identity: U_{s1,s2} = U_{0,s1+s2}
        thetas = np.stack([circle.random_point(rng) for _ in range(50)])
        lhs = u_smoothed(circle, two_atoms, 2.0, 0.02, 0.03, thetas, nodes=2048)
        rhs = u_plain_smoothed(circle, two_atoms, 2.0, 0.05, thetas, nodes=2048)
        assert float(np.max(np.abs(lhs - rhs))) <= 1e-6

    def test_identity_on_torus(self, torus2, rng):
        # coarse grid, so only a sanity-level tolerance; the circle at 2048
        # nodes carries the tight structural check
        nu = DiscreteMeasure(np.array([[0.1, 0.2], [0.6, 0.8]]))
        thetas = np.stack([torus2.random_point(rng) for _ in range(5)])
        lhs = u_smoothed(torus2, nu, 2.0, 0.02, 0.03, thetas, nodes=128)
        rhs = u_plain_smoothed(torus2, nu, 2.0, 0.05, thetas, nodes=128)
        assert float(np.max(np.abs(lhs - rhs))) <= 1e-4

    def test_small_s_approaches_h(self, circle, two_atoms, rng):
        # heat-kernel concentration: absolute gap <= 0.02 everywhere at s=1e-3,
        # and 2% relative away from the kinks of H (cut loci of the atoms at
        # 0.5 and 0.9, where smoothing rounds the corner at the sqrt(s) scale)
        thetas = np.stack([circle.random_point(rng) for _ in range(20)])
        u = u_smoothed(circle, two_atoms, 2.0, 1e-3, 1e-3, thetas, nodes=4096)
        for i, th in enumerate(thetas):
            hv = h_cost(circle, two_atoms, 2.0, th)
            assert abs(u[i] - hv) <= 0.02
            if min(circle.distance(th, np.array([c])) for c in (0.5, 0.9)) > 0.08:
                assert abs(u[i] - hv) <= 0.02 * max(hv, 0.2)

    def test_single_atom_large_s_constant(self, circle):
        nu = DiscreteMeasure(np.array([[0.3]]))
        thetas = np.array([[0.0], [0.2], [0.8]])
        u = u_smoothed(circle, nu, 2.0, 3.0, 3.0, thetas, nodes=2048)
        assert float(np.ptp(u)) <= 1e-6

    def test_uniform_convergence_decreasing_in_s(self, circle, two_atoms):
        grid = (np.arange(1024) / 1024)[:, None]
        h_vals = h_field_values(circle, two_atoms, 2.0, grid)
        errs = []
        for s in (0.1, 0.05, 0.02, 0.01):
            u = u_smoothed(circle, two_atoms, 2.0, s, s, grid, nodes=1024)
            errs.append(float(np.max(np.abs(u - h_vals))))
        assert errs == sorted(errs, reverse=True)
