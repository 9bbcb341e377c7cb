import math

import numpy as np
import pytest
from scipy import stats

from pmeans import ConfigError, DiscreteMeasure, SmoothedMeasure, uniform_empirical
from pmeans.manifolds import _heat1d, signed_delta
from pmeans.measures import load_measure_csv


class TestDiscreteMeasure:
    def test_single_atom(self):
        nu = uniform_empirical([np.array([0.3])])
        assert len(nu) == 1
        assert nu.weights[0] == 1.0

    def test_two_atoms_half_half(self):
        nu = uniform_empirical([np.array([0.0]), np.array([0.4])])
        assert np.allclose(nu.weights, [0.5, 0.5])

    def test_five_distinct(self):
        nu = uniform_empirical([np.array([i / 7]) for i in range(5)])
        assert np.allclose(nu.weights, 0.2)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            uniform_empirical([])

    def test_weight_validation(self):
        with pytest.raises(ConfigError):
            DiscreteMeasure(np.array([[0.1], [0.2]]), np.array([0.7, 0.7]))
        with pytest.raises(ConfigError):
            DiscreteMeasure(np.array([[0.1], [0.2]]), np.array([1.5, -0.5]))

    def test_single_atom_sampling(self, rng):
        nu = DiscreteMeasure(np.array([[0.3]]))
        for _ in range(50):
            assert nu.sample(rng)[0] == 0.3

    @pytest.mark.parametrize("w0", [0.5, 0.9])
    def test_sampling_frequencies(self, w0, rng):
        n = 100_000
        nu = DiscreteMeasure(np.array([[0.1], [0.8]]), np.array([w0, 1.0 - w0]))
        hits = sum(nu.sample(rng)[0] == 0.1 for _ in range(n))
        sigma = math.sqrt(w0 * (1.0 - w0) / n)
        assert abs(hits / n - w0) <= 3.0 * sigma

    def test_samples_are_atoms(self, rng):
        nu = DiscreteMeasure(np.array([[0.1], [0.5], [0.9]]))
        atoms = set(nu.atoms[:, 0])
        for _ in range(200):
            assert nu.sample(rng)[0] in atoms


class TestSmoothedMeasure:
    def test_requires_positive_s(self, circle, two_atoms):
        from pmeans import DomainError

        with pytest.raises(DomainError):
            SmoothedMeasure(circle, two_atoms, 0.0)

    def test_small_s_concentrates(self, circle, two_atoms, rng):
        nu = SmoothedMeasure(circle, two_atoms, 1e-4)
        n = 10_000
        near = 0
        for _ in range(n):
            y = nu.sample(rng)
            near += any(circle.distance(y, a) <= 0.05 for a in two_atoms.atoms)
        assert near / n >= 0.999

    def test_large_s_uniform(self, circle, two_atoms, rng):
        nu = SmoothedMeasure(circle, two_atoms, 6.0)
        n, bins = 20_000, 16
        samples = np.array([nu.sample(rng)[0] for _ in range(n)])
        counts, _ = np.histogram(samples, bins=bins, range=(0.0, 1.0))
        chi2 = float(((counts - n / bins) ** 2 / (n / bins)).sum())
        assert chi2 < stats.chi2.ppf(0.999, bins - 1)

    def test_single_atom_ks_against_kernel_cdf(self, circle, rng):
        s, n = 0.01, 100_000
        nu = SmoothedMeasure(circle, DiscreteMeasure(np.array([[0.3]])), s)
        disp = np.array([signed_delta(nu.sample(rng)[0] - 0.3) for _ in range(n)])
        fine = np.linspace(-0.5, 0.5, 20001)
        dens = _heat1d(s, fine)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))])
        cdf /= cdf[-1]
        ks = stats.kstest(disp, lambda q: np.interp(q, fine, cdf))
        assert ks.statistic < 1.628 / math.sqrt(n)

    def test_density_single_atom_equals_kernel(self, circle):
        nu = SmoothedMeasure(circle, DiscreteMeasure(np.array([[0.3]])), 0.05)
        y = np.array([0.11])
        assert nu.density(y) == pytest.approx(circle.heat_kernel(0.05, y, np.array([0.3])), rel=1e-14)

    def test_density_integrates_to_one(self, circle, two_atoms):
        nu = SmoothedMeasure(circle, two_atoms, 0.02)
        grid = (np.arange(4096) / 4096)[:, None]
        integral = float(nu.density_many(grid).mean())
        assert abs(integral - 1.0) <= 1e-8

    def test_density_symmetric_pair(self, circle):
        # two equal atoms symmetric about y: same value as midpoint symmetry demands
        nu = SmoothedMeasure(circle, DiscreteMeasure(np.array([[0.2], [0.6]])), 0.03)
        y = np.array([0.4])
        one = SmoothedMeasure(circle, DiscreteMeasure(np.array([[0.2]])), 0.03)
        assert nu.density(y) == pytest.approx(one.density(y), rel=1e-12)

    def test_density_relabel_invariant(self, circle, rng):
        a = DiscreteMeasure(np.array([[0.1], [0.5], [0.8]]), np.array([0.2, 0.3, 0.5]))
        b = DiscreteMeasure(np.array([[0.8], [0.1], [0.5]]), np.array([0.5, 0.2, 0.3]))
        for _ in range(20):
            y = circle.random_point(rng)
            assert SmoothedMeasure(circle, a, 0.04).density(y) == pytest.approx(
                SmoothedMeasure(circle, b, 0.04).density(y), rel=1e-12
            )

    def test_double_smoothing_semigroup(self, circle, two_atoms, rng):
        # smoothing s1 then s2 equals smoothing s1+s2 (semigroup), checked by
        # quadrature of the intermediate density at 100 random points
        s1, s2 = 0.03, 0.04
        nu1 = SmoothedMeasure(circle, two_atoms, s1)
        nu12 = SmoothedMeasure(circle, two_atoms, s1 + s2)
        n = 4096
        grid = (np.arange(n) / n)[:, None]
        dens1 = nu1.density_many(grid)
        worst = 0.0
        for _ in range(100):
            y = circle.random_point(rng)
            twice = float(circle.heat_many(s2, y, grid) @ dens1 / n)
            worst = max(worst, abs(twice - nu12.density(y)))
        assert worst <= 1e-8


class TestCsvLoading:
    def test_uniform_weights(self, tmp_path, circle):
        path = tmp_path / "atoms.csv"
        path.write_text("x\n0.0\n0.4\n")
        nu = load_measure_csv(path, circle)
        assert np.allclose(nu.atoms[:, 0], [0.0, 0.4])
        assert np.allclose(nu.weights, 0.5)

    def test_explicit_weights(self, tmp_path, circle):
        path = tmp_path / "atoms.csv"
        path.write_text("0.0,0.25\n0.4,0.75\n")
        nu = load_measure_csv(path, circle)
        assert np.allclose(nu.weights, [0.25, 0.75])

    def test_torus_rows(self, tmp_path, torus2):
        path = tmp_path / "atoms.csv"
        path.write_text("0.1,0.2\n0.6,0.9\n")
        nu = load_measure_csv(path, torus2)
        assert nu.atoms.shape == (2, 2)

    def test_ragged_rejected(self, tmp_path, circle):
        path = tmp_path / "atoms.csv"
        path.write_text("0.0\n0.4,0.5,0.6\n")
        with pytest.raises(ConfigError):
            load_measure_csv(path, circle)

    def test_empty_rejected(self, tmp_path, circle):
        path = tmp_path / "atoms.csv"
        path.write_text("# nothing\n")
        with pytest.raises(ConfigError):
            load_measure_csv(path, circle)
