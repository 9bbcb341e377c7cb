"""Command-line entry point: configuration loading, experiment orchestration
and report/plot emission.

Configs are TOML; every flag overrides its config key.  Exit codes: 0 on
success, 2 for configuration errors (the message names the field), 3 for I/O
errors, 4 for numerical failures.
"""

from __future__ import annotations

import argparse
import datetime
import json
import math
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .anneal import RunConfig, Schedules, ensemble, run_rng
from .costs import h_field_values, u_plain_smoothed, u_smoothed
from .empirics import (
    empirical_p_mean,
    mean_process,
    mean_process_to_csv,
    tie_threshold,
    uniqueness_probe,
)
from .errors import ConfigError, DomainError, NumericalError, PMeansError
from .landscape import elevation_constant, evaluate_field, minimizers
from .manifolds import Circle, FlatTorus, Sphere, format_point, make_manifold, parse_point
from .measures import DiscreteMeasure, SmoothedMeasure, load_measure_csv
from .svgplot import line_plot


def _load_toml(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"file not found: {path}")
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"cannot parse {path}: {e}") from None


def _get(cfg: dict, dotted: str, default=None, required: bool = False):
    cur = cfg
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ConfigError(f"{dotted}: missing required key")
            return default
        cur = cur[part]
    return cur


def _default_resolution(m) -> int:
    if isinstance(m, Circle):
        return 4096
    if isinstance(m, FlatTorus):
        return 128
    return 2562


def _build_measure(cfg: dict, m) -> DiscreteMeasure:
    csv_path = _get(cfg, "measure.csv")
    if csv_path is not None:
        return load_measure_csv(csv_path, m)
    atoms = _get(cfg, "measure.atoms")
    if atoms is None:
        raise ConfigError("measure.atoms: missing (give inline atoms or measure.csv)")
    rows = []
    for entry in atoms:
        if isinstance(entry, (int, float)):
            entry = [entry]
        rows.append(m.canonical(np.asarray(entry, dtype=float)))
    weights = _get(cfg, "measure.weights")
    if weights is not None and len(weights) > 0:
        w = np.asarray(weights, dtype=float)
        return DiscreteMeasure(np.stack(rows), w / w.sum())
    return DiscreteMeasure(np.stack(rows))


def _oracle_field(cfg: dict, m, measure, p, resolution=None):
    res = resolution or _get(cfg, "oracle.resolution", _default_resolution(m))
    return evaluate_field(lambda nodes: h_field_values(m, measure, p, nodes), m, int(res), batch=True)


def _meta() -> dict:
    return {
        "version": __version__,
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_outdir(args, cfg) -> str:
    out = args.out or _get(cfg, "output.dir", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(_get(cfg, "seed", 0))


def _resolve_anneal(args, cfg):
    m = make_manifold(_get(cfg, "manifold", required=True))
    measure = _build_measure(cfg, m)
    p = float(args.p if args.p is not None else _get(cfg, "p", 2.0))
    seed = _seed(args, cfg)
    t_end = float(args.t_end if args.t_end is not None else _get(cfg, "run.t_end", 1000.0))
    n_runs = int(args.n_runs if args.n_runs is not None else _get(cfg, "run.n_runs", 100))
    mode = _get(cfg, "schedules.mode", "smoothed")

    k_cfg = args.k if args.k is not None else _get(cfg, "schedules.k", "auto")
    auto_c_u = None
    if isinstance(k_cfg, str):
        if k_cfg != "auto":
            raise ConfigError(f'schedules.k: expected a number or "auto", got "{k_cfg}"')
        field = _oracle_field(cfg, m, measure, p)
        report = elevation_constant(field)
        k = report.recommended_k
        auto_c_u = report.c_u
    else:
        k = float(k_cfg)

    sched = Schedules(
        k=k,
        s_min=float(_get(cfg, "schedules.s_min", 5e-3)),
        mode=mode,
        frozen_beta=_get(cfg, "schedules.frozen_beta"),
        frozen_s=_get(cfg, "schedules.frozen_s"),
    )

    center_cfg = _get(cfg, "neighborhood.center", "auto")
    if center_cfg == "auto":
        emp = empirical_p_mean(m, list(measure.atoms), p, resolution=_default_resolution(m))
        center = emp.point
    else:
        center = parse_point(str(center_cfg), m)
    radius = float(args.radius if args.radius is not None else _get(cfg, "neighborhood.radius", 0.05))

    checkpoints = _get(cfg, "run.checkpoints")
    if checkpoints is None:
        checkpoints = [t for t in (1e2, 1e3, 1e4) if t <= t_end] or [t_end]
    checkpoints = sorted(float(t) for t in checkpoints)

    out_times = _get(cfg, "run.output_times")
    run_cfg = RunConfig(
        manifold=m,
        measure=measure,
        p=p,
        schedules=sched,
        t_end=t_end,
        h_max=float(_get(cfg, "run.h_max", 0.01)),
        seed=seed,
        output_times=np.asarray(out_times, dtype=float) if out_times else None,
        noise_scale=float(_get(cfg, "run.noise_scale", 1.0)),
    )
    resolved = {
        "manifold": _get(cfg, "manifold"),
        "p": p,
        "seed": seed,
        "mode": mode,
        "k": k,
        "auto_c_u": auto_c_u,
        "t_end": t_end,
        "h_max": run_cfg.h_max,
        "n_runs": n_runs,
        "neighborhood_center": format_point(center),
        "neighborhood_radius": radius,
        "checkpoints": checkpoints,
        "atoms": [format_point(a) for a in measure.atoms],
        "weights": [float(w) for w in measure.weights],
    }
    return run_cfg, n_runs, center, radius, checkpoints, resolved


def cmd_anneal(args) -> int:
    cfg = _load_toml(args.config)
    run_cfg, n_runs, center, radius, checkpoints, resolved = _resolve_anneal(args, cfg)
    if args.dry_run:
        print(json.dumps(resolved, indent=2, sort_keys=True))
        return 0
    out = _ensure_outdir(args, cfg)
    stats, trajectories = ensemble(
        run_cfg,
        n_runs,
        center,
        radius,
        checkpoints,
        jobs=args.jobs,
        keep_trajectories=True,
    )
    for i, traj in enumerate(trajectories):
        traj.to_csv(os.path.join(out, f"runs_{i:03d}.csv"))
    payload = {"meta": _meta()}
    payload.update(stats.to_json(config_echo=resolved))
    _write_json(os.path.join(out, "ensemble.json"), payload)
    line_plot(
        os.path.join(out, "hitrate.svg"),
        stats.checkpoints,
        [
            ("hit fraction", list(stats.fractions), False),
            ("wilson lo", list(stats.wilson_lo), True),
            ("wilson hi", list(stats.wilson_hi), True),
        ],
        title="neighborhood hit fraction",
        xlabel="log10 t",
        ylabel="fraction",
        log_x=True,
        y_range=(0.0, 1.0),
    )
    print(
        f"anneal: {n_runs} runs to t={run_cfg.t_end:g}; final hit fraction "
        f"{stats.fractions[-1]:.3f} [{stats.wilson_lo[-1]:.3f}, {stats.wilson_hi[-1]:.3f}]"
    )
    return 0


def cmd_oracle(args) -> int:
    cfg = _load_toml(args.config)
    m = make_manifold(_get(cfg, "manifold", required=True))
    measure = _build_measure(cfg, m)
    p = float(args.p if args.p is not None else _get(cfg, "p", 2.0))
    res = int(args.resolution or _get(cfg, "oracle.resolution", _default_resolution(m)))
    out = _ensure_outdir(args, cfg)

    field = _oracle_field(cfg, m, measure, p, resolution=res)
    gap_tol = _get(cfg, "oracle.gap_tol")
    report = minimizers(field, float(gap_tol) if gap_tol is not None else tie_threshold(m, res))
    emp = empirical_p_mean(
        m, list(measure.atoms), p, resolution=res,
        refine_tol=float(_get(cfg, "oracle.refine_tol", 1e-8)),
    )
    field.to_csv(os.path.join(out, "landscape.csv"))
    payload = {
        "meta": _meta(),
        "config": {"manifold": _get(cfg, "manifold"), "p": p, "resolution": res},
        "argmin": format_point(emp.point),
        "h_value": emp.h_value,
        "uniqueness_gap": None if math.isinf(emp.gap) else emp.gap,
        "ambiguous": emp.ambiguous,
        "n_basins": len(report.basins),
    }
    _write_json(os.path.join(out, "oracle.json"), payload)
    flag = " (AMBIGUOUS: tie at grid resolution)" if emp.ambiguous else ""
    print(f"oracle: argmin {format_point(emp.point)} H={emp.h_value:.6g} gap={emp.gap:.6g}{flag}")
    return 0


def cmd_landscape(args) -> int:
    cfg = _load_toml(args.config)
    m = make_manifold(_get(cfg, "manifold", required=True))
    measure = _build_measure(cfg, m)
    p = float(args.p if args.p is not None else _get(cfg, "p", 2.0))
    res = int(args.resolution or _get(cfg, "landscape.resolution", _default_resolution(m)))
    out = _ensure_outdir(args, cfg)

    field = _oracle_field(cfg, m, measure, p, resolution=res)
    report = elevation_constant(field)
    payload = {"meta": _meta()}
    payload.update(
        report.to_json(
            extra={
                "config": {"manifold": _get(cfg, "manifold"), "p": p, "resolution": res},
                "argpair_coords": [
                    format_point(field.nodes[report.argpair[0]]),
                    format_point(field.nodes[report.argpair[1]]),
                ],
                "barrier_value": float(np.max(field.values[report.barrier_path])),
            }
        )
    )
    _write_json(os.path.join(out, "elevation.json"), payload)
    print(f"landscape: c(U)={report.c_u:.6g} recommended k={report.recommended_k:.6g}")
    return 0


def cmd_lemma2(args) -> int:
    cfg = _load_toml(args.config)
    m = make_manifold(_get(cfg, "manifold", "circle"))
    if isinstance(m, Sphere):
        raise ConfigError("manifold: the smoothing-identity check needs grid quadrature (circle/torus)")
    measure = _build_measure(cfg, m)
    p = float(args.p if args.p is not None else _get(cfg, "p", 2.0))
    s1 = float(_get(cfg, "lemma2.s1", 0.02))
    s2 = float(_get(cfg, "lemma2.s2", 0.03))
    nodes = int(_get(cfg, "lemma2.nodes", 2048))
    n_thetas = int(_get(cfg, "lemma2.n_thetas", 50))
    tol = float(_get(cfg, "lemma2.tolerance", 1e-6))
    seed = _seed(args, cfg)
    out = _ensure_outdir(args, cfg)

    rng = run_rng(seed)
    thetas = np.stack([m.random_point(rng) for _ in range(n_thetas)])
    lhs = u_smoothed(m, measure, p, s1, s2, thetas, nodes=nodes)
    rhs = u_plain_smoothed(m, measure, p, s1 + s2, thetas, nodes=nodes)
    max_err = float(np.max(np.abs(lhs - rhs)))
    payload = {
        "meta": _meta(),
        "config": {
            "manifold": _get(cfg, "manifold", "circle"),
            "p": p, "s1": s1, "s2": s2, "nodes": nodes,
            "n_thetas": n_thetas, "seed": seed, "tolerance": tol,
        },
        "max_discrepancy": max_err,
        "passed": max_err <= tol,
    }
    _write_json(os.path.join(out, "lemma2.json"), payload)
    print(f"lemma2: max |U_(s1,s2) - U_(0,s1+s2)| = {max_err:.3e} over {n_thetas} points")
    if max_err > tol:
        raise NumericalError(f"smoothing identity discrepancy {max_err:.3e} exceeds tolerance {tol:g}")
    return 0


def cmd_empirical(args) -> int:
    cfg = _load_toml(args.config)
    m = make_manifold(_get(cfg, "manifold", required=True))
    p = float(args.p if args.p is not None else _get(cfg, "p", 2.0))
    seed = _seed(args, cfg)
    res = int(args.resolution or _get(cfg, "empirical.resolution", _default_resolution(m)))
    n_max = int(_get(cfg, "empirical.n_max", 100))
    trials = int(_get(cfg, "empirical.trials", 200))
    n_points = int(_get(cfg, "empirical.n_points", 3))
    law_cfg = _get(cfg, "empirical.law", "uniform")
    out = _ensure_outdir(args, cfg)

    rng = run_rng(seed)
    if isinstance(law_cfg, str) and law_cfg.startswith("smoothed:"):
        s = float(law_cfg.split(":", 1)[1])
        measure = _build_measure(cfg, m)
        law = SmoothedMeasure(m, measure, s)
        sampler = lambda: law.sample(rng)  # noqa: E731
    elif law_cfg == "uniform":
        law = "uniform"
        sampler = lambda: m.random_point(rng)  # noqa: E731
    else:
        raise ConfigError(f'empirical.law: expected "uniform" or "smoothed:<s>", got "{law_cfg}"')

    records = mean_process(m, (sampler() for _ in range(n_max)), p, n_max, resolution=res)
    mean_process_to_csv(records, os.path.join(out, "meanprocess.csv"))

    probe = uniqueness_probe(m, n_points, p, law, trials, res, rng)
    payload = {
        "meta": _meta(),
        "config": {
            "manifold": _get(cfg, "manifold"), "p": p, "seed": seed,
            "resolution": res, "n_max": n_max, "trials": trials,
            "n_points": n_points, "law": str(law_cfg),
        },
    }
    payload.update(probe.to_json())
    _write_json(os.path.join(out, "probe.json"), payload)
    print(
        f"empirical: {len(records)} mean-process records; "
        f"{len(probe.tie_trials)} ties in {trials} trials"
    )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pmeans", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pmeans {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", required=True, help="TOML config file")
        sp.add_argument("-o", "--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seed", type=int, help="master seed (overrides config)")
        sp.add_argument("--p", type=float, help="power exponent (overrides config)")
        sp.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker pool size")

    sp = sub.add_parser("anneal", help="run the annealing ensemble and report hit rates")
    common(sp)
    sp.add_argument("--t-end", type=float, dest="t_end")
    sp.add_argument("--n-runs", type=int, dest="n_runs")
    sp.add_argument("--k", type=float, help="schedule constant (overrides auto)")
    sp.add_argument("--radius", type=float, help="neighborhood radius")
    sp.add_argument("--dry-run", action="store_true", help="print resolved config and exit")

    sp = sub.add_parser("oracle", help="grid sweep: minimizer and uniqueness gap")
    common(sp)
    sp.add_argument("--resolution", type=int)

    sp = sub.add_parser("landscape", help="elevation constant and recommended k")
    common(sp)
    sp.add_argument("--resolution", type=int)

    sp = sub.add_parser("lemma2", help="check the double-smoothing identity")
    common(sp)

    sp = sub.add_parser("empirical", help="mean process and uniqueness probe")
    common(sp)
    sp.add_argument("--resolution", type=int)

    return parser


_COMMANDS = {
    "anneal": cmd_anneal,
    "oracle": cmd_oracle,
    "landscape": cmd_landscape,
    "lemma2": cmd_lemma2,
    "empirical": cmd_empirical,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, DomainError) as e:
        print(f"config: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io: {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical: {e}", file=sys.stderr)
        return 4
    except PMeansError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
