"""Partial simulated annealing engine.

Simulates the time-inhomogeneous SDE whose drift pulls toward a single
Poisson-resampled target from the measure (refreshed at rate 1 + t), its
homogenized reference diffusion driven by the full gradient, and ensemble
hit-probability statistics.  Schedules: beta(t) = ln(1+t)/k with k above the
critical elevation of the objective, gamma(t) = 1/(1+t), and smoothing time
s(t) = 1/ln(1+t) clamped below; beta and s are evaluated at t + t_offset so
both are positive and finite from the start, while the jump clock keeps the
exact cumulative intensity Lambda(t) = t + t^2/2.

Time stepping is Euler-Maruyama with exponential-map retraction and step
h = min(h_max, c_step / beta_t); integration intervals are split exactly at
jump times so the drift target is piecewise constant.  Every run owns an RNG
stream derived from the master seed and the run index, so ensembles are
reproducible regardless of scheduling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _circle_kernel
from .costs import CircleCosineTable, GradientBound, grad_kappa_grid, grad_power
from .errors import ConfigError
from .manifolds import Circle, FlatTorus, Sphere
from .measures import DiscreteMeasure

_WILSON_Z = 1.959963984540054  # 95%


def run_rng(seed: int, stream: int | None = None) -> np.random.Generator:
    """Generator for a master seed, or for one derived stream of an ensemble."""
    if stream is None:
        ss = np.random.SeedSequence(seed)
    else:
        ss = np.random.SeedSequence(seed, spawn_key=(stream,))
    return np.random.default_rng(ss)


def next_jump_time(t: float, rng) -> float:
    """First jump after t for the Poisson clock with intensity 1 + t.

    Closed-form inversion of Lambda(t) = t + t^2/2:
    t' = -1 + sqrt((1+t)^2 + 2E) with E ~ Exp(1).
    """
    e = rng.standard_exponential()
    return -1.0 + math.sqrt((1.0 + t) * (1.0 + t) + 2.0 * e)


@dataclass
class Schedules:
    """The (beta, gamma, s) schedule triple with exploration constant k.

    `frozen_beta` / `frozen_s` pin the corresponding schedule to a constant
    (test hooks and Gibbs-fidelity checks); `mode` selects the plain kernel
    rho^p or its heat smoothing for the drift.
    """

    k: float
    s_min: float = 5e-3
    t_offset: float = math.e - 1.0
    mode: str = "smoothed"
    frozen_beta: float | None = None
    frozen_s: float | None = None

    def __post_init__(self):
        if not self.k > 0.0:
            raise ConfigError(f"schedules.k: must be positive, got {self.k}")
        if self.mode not in ("plain", "smoothed"):
            raise ConfigError(f'schedules.mode: expected "plain" or "smoothed", got "{self.mode}"')
        if not self.s_min > 0.0:
            raise ConfigError(f"schedules.s_min: must be positive, got {self.s_min}")
        if self.frozen_s is not None and self.frozen_s < 1e-3:
            raise ConfigError("schedules.frozen_s: below the 1e-3 accuracy floor of the kernel tables")

    def beta(self, t: float) -> float:
        if self.frozen_beta is not None:
            return self.frozen_beta
        return math.log(1.0 + t + self.t_offset) / self.k

    def gamma(self, t: float) -> float:
        return 1.0 / (1.0 + t)

    def s(self, t: float) -> float:
        if self.frozen_s is not None:
            return self.frozen_s
        return max(self.s_min, 1.0 / math.log(1.0 + t + self.t_offset))


@dataclass
class AnnealState:
    """Instantaneous process state: position, drift target and jump count."""

    t: float
    theta: np.ndarray
    y: np.ndarray | None
    jumps: int


def sde_step(m, state: AnnealState, h: float, sched: Schedules, drift, rng, noise_scale=1.0) -> AnnealState:
    """One Euler-Maruyama step of length h with frozen drift target.

    theta' = exp_theta( noise_step(theta, sqrt(h) g) - h beta_t drift(theta, y) );
    the caller is responsible for splitting h at jump times.
    """
    if not h > 0.0:
        raise ConfigError(f"sde_step: h must be positive, got {h}")
    beta = sched.beta(state.t)
    g = drift(state.theta, state.y)
    xi = rng.standard_normal(m.noise_dim)
    v = m.noise_step(state.theta, math.sqrt(h) * noise_scale * xi) - h * beta * g
    return AnnealState(t=state.t + h, theta=m.exp(state.theta, v), y=state.y, jumps=state.jumps)


@dataclass
class Trajectory:
    """Process samples at the configured output times."""

    times: np.ndarray
    thetas: np.ndarray
    ys: np.ndarray
    betas: np.ndarray
    ss: np.ndarray
    jumps: np.ndarray
    cap_binds: int = 0
    max_drift: float = 0.0
    occupancy: np.ndarray | None = None

    def final_theta(self) -> np.ndarray:
        return self.thetas[-1]

    def to_csv(self, path) -> None:
        cdim = self.thetas.shape[1]
        with open(path, "w", newline="") as fh:
            cols = (
                ["t"]
                + [f"theta_{i}" for i in range(cdim)]
                + [f"y_{i}" for i in range(cdim)]
                + ["beta", "s", "jumps"]
            )
            fh.write(",".join(cols) + "\n")
            for i in range(len(self.times)):
                row = (
                    [f"{self.times[i]:.17g}"]
                    + [f"{c:.17g}" for c in self.thetas[i]]
                    + [f"{c:.17g}" for c in self.ys[i]]
                    + [f"{self.betas[i]:.17g}", f"{self.ss[i]:.17g}", str(int(self.jumps[i]))]
                )
                fh.write(",".join(row) + "\n")


@dataclass
class RunConfig:
    """Engine-level configuration of a single annealing run."""

    manifold: object
    measure: DiscreteMeasure
    p: float
    schedules: Schedules
    t_end: float
    h_max: float = 0.01
    c_step: float | None = None
    seed: int = 0
    output_times: np.ndarray | None = None
    theta0: np.ndarray | None = None
    noise_scale: float = 1.0
    quad_nodes: int = 2048
    table_grid: int = 4096
    mc_samples: int = 1
    occupancy_bins: int = 0
    occupancy_burnin: float = 0.0

    def __post_init__(self):
        if not self.p >= 1.0:
            raise ConfigError(f"p: must be >= 1, got {self.p}")
        if self.t_end < 0.0:
            raise ConfigError(f"t_end: must be >= 0, got {self.t_end}")
        if not self.h_max > 0.0:
            raise ConfigError(f"h_max: must be positive, got {self.h_max}")
        if self.noise_scale < 0.0:
            raise ConfigError(f"noise_scale: must be >= 0, got {self.noise_scale}")
        if self.c_step is None:
            bound = GradientBound.for_power(self.manifold, self.p)
            self.c_step = 0.1 / max(bound.k, 1e-12)
        if self.occupancy_bins and not isinstance(self.manifold, Circle):
            raise ConfigError("occupancy_bins: occupancy histograms are circle-only")

    def resolved_output_times(self) -> np.ndarray:
        if self.output_times is not None:
            times = np.asarray(self.output_times, dtype=float)
        elif self.t_end > 0.0:
            times = np.geomspace(max(1e-3, self.t_end * 1e-3), self.t_end, 25)
        else:
            times = np.array([])
        times = np.unique(np.concatenate([[0.0], times]))
        times = times[times <= self.t_end]
        return times


def _circle_resample(atoms, cumw, smoothed: bool):
    flat = atoms[:, 0].copy()

    def resample(s2: float, rng) -> np.ndarray:
        u = rng.random()
        idx = int(np.searchsorted(cumw, u))
        idx = min(idx, len(flat) - 1)
        y = flat[idx]
        if smoothed:
            y = y + math.sqrt(s2) * rng.standard_normal()
            y -= math.floor(y)
        return np.array([y])

    return resample


def _generic_resample(m, measure: DiscreteMeasure, smoothed: bool):
    def resample(s2: float, rng) -> np.ndarray:
        base = measure.sample(rng)
        if smoothed:
            return m.sample_heat(s2, base, rng)
        return base

    return resample


def _make_drift(cfg: RunConfig, homogenized: bool):
    """Drift callable (theta, y, s, rng) -> tangent for the configured mode.

    Circle uses the cosine-table kernels shared with the JIT path; the torus
    integrates the smoothed gradient by grid quadrature; the sphere uses the
    unbiased score-function estimator grad ln p(s,theta,z) * rho^p(z,y) with
    z ~ p(s,theta,.) (mc_samples draws; noisier than quadrature, which is why
    it is the opt-in sphere variant rather than the default elsewhere).
    """
    m, p = cfg.manifold, cfg.p
    smoothed = cfg.schedules.mode == "smoothed"
    measure = cfg.measure

    if isinstance(m, Circle):
        table = CircleCosineTable(p, cfg.table_grid, kmax=96)
        coef = table.coef
        cmax = float(np.max(np.abs(coef)))
        atoms = measure.atoms[:, 0].copy()
        weights = measure.weights

        if homogenized:
            if smoothed:
                def drift(th, y, s, rng):
                    g = 0.0
                    for i in range(len(atoms)):
                        g += weights[i] * _circle_kernel._dkappa(th[0] - atoms[i], 2.0 * s, coef, cmax)
                    return np.array([g])
            else:
                def drift(th, y, s, rng):
                    g = 0.0
                    for i in range(len(atoms)):
                        g += weights[i] * _circle_kernel._dplain(th[0] - atoms[i], p)
                    return np.array([g])
        else:
            if smoothed:
                def drift(th, y, s, rng):
                    return np.array([_circle_kernel._dkappa(th[0] - y[0], s, coef, cmax)])
            else:
                def drift(th, y, s, rng):
                    return np.array([_circle_kernel._dplain(th[0] - y[0], p)])
        return drift

    if isinstance(m, FlatTorus):
        if smoothed:
            axes = [np.arange(cfg.quad_nodes) / cfg.quad_nodes] * m.dim
            mesh = np.meshgrid(*axes, indexing="ij")
            grid = np.stack([ax.ravel() for ax in mesh], axis=1)
            if homogenized:
                def drift(th, y, s, rng):
                    g = np.zeros(m.dim)
                    for w, a in zip(cfg.measure.weights, cfg.measure.atoms):
                        g += w * grad_kappa_grid(m, grid, p, 2.0 * s, th, a)
                    return g
            else:
                def drift(th, y, s, rng):
                    return grad_kappa_grid(m, grid, p, s, th, y)
            return drift
        if homogenized:
            return lambda th, y, s, rng: _grad_h_drift(m, measure, p, th)
        return lambda th, y, s, rng: grad_power(m, p, th, y)

    if isinstance(m, Sphere):
        if smoothed:
            if homogenized:
                def drift(th, y, s, rng):
                    g = np.zeros(3)
                    for w, a in zip(measure.weights, measure.atoms):
                        g += w * _score_grad(m, p, 2.0 * s, th, a, rng, cfg.mc_samples)
                    return g
            else:
                def drift(th, y, s, rng):
                    return _score_grad(m, p, s, th, y, rng, cfg.mc_samples)
            return drift
        if homogenized:
            return lambda th, y, s, rng: _grad_h_drift(m, measure, p, th)
        return lambda th, y, s, rng: grad_power(m, p, th, y)

    raise ConfigError(f"manifold: unsupported manifold {m!r}")


def _grad_h_drift(m, measure, p, theta):
    g = None
    for w, a in zip(measure.weights, measure.atoms):
        gi = grad_power(m, p, theta, a)
        g = w * gi if g is None else g + w * gi
    return g


def _score_grad(m, p, s, theta, y, rng, n_samples):
    acc = np.zeros(3)
    for _ in range(n_samples):
        z = m.sample_heat(s, theta, rng)
        acc += m.grad_log_heat_kernel(s, theta, z) * (m.distance(z, y) ** p)
    return acc / n_samples


def _python_loop(cfg, rng, theta, y, t_jump, has_jumps, drift, resample, out_times):
    """Generic event loop; structured identically to the circle JIT kernel."""
    m = cfg.manifold
    sched = cfg.schedules
    t_end = float(cfg.t_end)
    h_max = float(cfg.h_max)
    c_step = float(cfg.c_step)
    noise_scale = float(cfg.noise_scale)
    cdim = m.coord_dim

    nout = len(out_times)
    out_theta = np.full((nout, cdim), np.nan)
    out_y = np.full((nout, cdim), np.nan)
    out_jumps = np.zeros(nout, dtype=np.int64)
    nbins = cfg.occupancy_bins
    occ = np.zeros(nbins) if nbins else None

    t = 0.0
    jumps = 0
    oi = 0
    cap_binds = 0
    max_drift = 0.0

    while oi < nout and out_times[oi] <= t:
        out_theta[oi] = theta
        if y is not None:
            out_y[oi] = y
        out_jumps[oi] = jumps
        oi += 1

    while t < t_end:
        t_next = t_end
        if has_jumps and t_jump < t_next:
            t_next = t_jump
        if oi < nout and out_times[oi] < t_next:
            t_next = out_times[oi]

        while t_next - t > 0.0:
            beta = sched.beta(t)
            s = sched.s(t)
            h = h_max
            if beta > 0.0:
                hc = c_step / beta
                if hc < h:
                    h = hc
                    if t >= 1.0:
                        cap_binds += 1
            rem = t_next - t
            if rem <= h:
                h = rem
                t_new = t_next
            else:
                t_new = t + h

            g = drift(theta, y, s, rng)
            ng = float(np.linalg.norm(g))
            if ng > max_drift:
                max_drift = ng

            xi = rng.standard_normal(m.noise_dim)
            v = m.noise_step(theta, math.sqrt(h) * noise_scale * xi) - h * beta * g
            theta = m.exp(theta, v)
            t = t_new
            if nbins and t >= cfg.occupancy_burnin:
                b = min(int(theta[0] * nbins), nbins - 1)
                occ[b] += h

        if has_jumps:
            while t_jump <= t:
                s2 = sched.s(t)
                y = resample(s2, rng)
                jumps += 1
                t_jump = next_jump_time(t, rng)

        while oi < nout and out_times[oi] <= t:
            out_theta[oi] = theta
            if y is not None:
                out_y[oi] = y
            out_jumps[oi] = jumps
            oi += 1

    return out_theta, out_y, out_jumps, cap_binds, max_drift, occ


def _finish_trajectory(cfg, out_times, out_theta, out_y, out_jumps, cap_binds, max_drift, occ):
    sched = cfg.schedules
    betas = np.array([sched.beta(t) for t in out_times])
    ss = np.array([sched.s(t) for t in out_times])
    if occ is not None and occ.sum() > 0:
        occ = occ / occ.sum()
    return Trajectory(
        times=out_times,
        thetas=out_theta,
        ys=out_y,
        betas=betas,
        ss=ss,
        jumps=out_jumps,
        cap_binds=cap_binds,
        max_drift=max_drift,
        occupancy=occ,
    )


def _dispatch(cfg: RunConfig, has_jumps: bool, force_python: bool, rng=None) -> Trajectory:
    m = cfg.manifold
    if rng is None:
        rng = run_rng(cfg.seed)
    smoothed = cfg.schedules.mode == "smoothed"
    out_times = cfg.resolved_output_times()

    theta = cfg.theta0.copy() if cfg.theta0 is not None else m.random_point(rng)
    theta = m.canonical(theta)

    use_kernel = isinstance(m, Circle) and not force_python
    if isinstance(m, Circle):
        resample = _circle_resample(cfg.measure.atoms, cfg.measure._cumulative, smoothed)
    else:
        resample = _generic_resample(m, cfg.measure, smoothed)

    if has_jumps:
        y = resample(cfg.schedules.s(0.0), rng)
        t_jump = next_jump_time(0.0, rng)
    else:
        y = None
        t_jump = math.inf

    if use_kernel:
        table = CircleCosineTable(cfg.p, cfg.table_grid, kmax=96)
        coef = table.coef
        cmax = float(np.max(np.abs(coef)))
        sched = cfg.schedules
        nout = len(out_times)
        out_theta = np.full(nout, np.nan)
        out_y_flat = np.full(nout, np.nan)
        out_jumps = np.zeros(nout, dtype=np.int64)
        occ = np.zeros(cfg.occupancy_bins if cfg.occupancy_bins else 0)
        _, _, _, jumps, cap_binds, max_drift = _circle_kernel.run_circle(
            rng,
            float(theta[0]),
            float(y[0]) if y is not None else float("nan"),
            float(t_jump),
            float(cfg.t_end),
            float(cfg.h_max),
            float(cfg.c_step),
            float(sched.k),
            float(sched.s_min),
            float(sched.t_offset),
            float("nan") if sched.frozen_beta is None else float(sched.frozen_beta),
            float("nan") if sched.frozen_s is None else float(sched.frozen_s),
            float(cfg.noise_scale),
            smoothed,
            has_jumps,
            float(cfg.p),
            coef,
            cmax,
            cfg.measure.atoms[:, 0].copy(),
            cfg.measure.weights.copy(),
            cfg.measure._cumulative.copy(),
            out_times,
            out_theta,
            out_y_flat,
            out_jumps,
            occ,
            float(cfg.occupancy_burnin),
        )
        occ_out = occ if cfg.occupancy_bins else None
        return _finish_trajectory(
            cfg, out_times, out_theta[:, None], out_y_flat[:, None], out_jumps,
            cap_binds, max_drift, occ_out,
        )

    drift = _make_drift(cfg, homogenized=not has_jumps)
    out_theta, out_y, out_jumps, cap_binds, max_drift, occ = _python_loop(
        cfg, rng, theta, y, t_jump, has_jumps, drift, resample, out_times
    )
    return _finish_trajectory(cfg, out_times, out_theta, out_y, out_jumps, cap_binds, max_drift, occ)


def run(cfg: RunConfig, force_python: bool = False, rng=None) -> Trajectory:
    """Simulate the partial-annealing SDE with Poisson drift-target refresh.

    Event-driven: exact jump times by closed-form clock inversion, Euler
    integration split at jumps, drift target resampled at each jump (from the
    measure in plain mode, from its heat smoothing at s(t) in smoothed mode).
    Deterministic given (config, seed).
    """
    return _dispatch(cfg, has_jumps=True, force_python=force_python, rng=rng)


def run_homogenized(cfg: RunConfig, force_python: bool = False, rng=None) -> Trajectory:
    """Simulate the homogenized reference diffusion (full-gradient drift, no jumps)."""
    return _dispatch(cfg, has_jumps=False, force_python=force_python, rng=rng)


def wilson_interval(successes: int, n: int, z: float = _WILSON_Z) -> tuple[float, float]:
    """95% Wilson score interval for a binomial fraction."""
    if n == 0:
        return 0.0, 1.0
    phat = successes / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2.0 * n)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / n + z * z / (4.0 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass
class EnsembleStats:
    """Across-run hit fractions at checkpoint times with Wilson 95% bands."""

    checkpoints: np.ndarray
    fractions: np.ndarray
    wilson_lo: np.ndarray
    wilson_hi: np.ndarray
    n_runs: int
    seed: int
    hits: np.ndarray = field(repr=False, default=None)

    def to_json(self, config_echo: dict | None = None) -> dict:
        out = {
            "checkpoints": [float(t) for t in self.checkpoints],
            "fractions": [float(f) for f in self.fractions],
            "wilson_lo": [float(f) for f in self.wilson_lo],
            "wilson_hi": [float(f) for f in self.wilson_hi],
            "n_runs": self.n_runs,
            "seed": self.seed,
        }
        if config_echo is not None:
            out["config"] = config_echo
        return out


def _one_ensemble_run(args):
    cfg, idx, out_times, homogenized = args
    rng = run_rng(cfg.seed, stream=idx)
    cfg_i = replace(cfg, output_times=out_times)
    if homogenized:
        traj = run_homogenized(cfg_i, rng=rng)
    else:
        traj = run(cfg_i, rng=rng)
    return idx, traj


def ensemble(
    cfg: RunConfig,
    n_runs: int,
    center,
    radius: float,
    checkpoints,
    jobs: int = 1,
    homogenized: bool = False,
    keep_trajectories: bool = False,
):
    """Hit fraction of the neighborhood ball at each checkpoint over n_runs.

    Runs use independent streams spawned from the master seed by run index;
    results are order-preserving and independent of worker scheduling.
    """
    if n_runs < 30:
        raise ConfigError(f"n_runs: ensembles need >= 30 runs, got {n_runs}")
    checkpoints = np.asarray(sorted(set(float(t) for t in checkpoints)))
    if checkpoints.size == 0 or checkpoints[-1] > cfg.t_end:
        raise ConfigError("checkpoints: must be nonempty and within [0, t_end]")
    m = cfg.manifold
    center = m.canonical(np.asarray(center, dtype=float))
    out_times = np.unique(np.concatenate([cfg.resolved_output_times(), checkpoints]))

    tasks = [(cfg, i, out_times, homogenized) for i in range(n_runs)]
    if jobs > 1:
        import multiprocessing as mp

        with mp.get_context("fork").Pool(jobs) as pool:
            results = pool.map(_one_ensemble_run, tasks)
    else:
        results = [_one_ensemble_run(task) for task in tasks]
    results.sort(key=lambda r: r[0])
    trajectories = [traj for _, traj in results]

    idx = np.searchsorted(trajectories[0].times, checkpoints)
    hits = np.zeros((n_runs, len(checkpoints)), dtype=bool)
    for i, traj in enumerate(trajectories):
        for j, ti in enumerate(idx):
            hits[i, j] = m.distance(traj.thetas[ti], center) <= radius
    fractions = hits.mean(axis=0)
    lo = np.empty(len(checkpoints))
    hi = np.empty(len(checkpoints))
    for j in range(len(checkpoints)):
        lo[j], hi[j] = wilson_interval(int(hits[:, j].sum()), n_runs)
    stats = EnsembleStats(
        checkpoints=checkpoints,
        fractions=fractions,
        wilson_lo=lo,
        wilson_hi=hi,
        n_runs=n_runs,
        seed=cfg.seed,
        hits=hits,
    )
    if keep_trajectories:
        return stats, trajectories
    return stats
