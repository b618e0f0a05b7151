"""``pcesocp`` command line: drivetrain experiments written as CSV files.

Every CSV starts with one ``# config: {...}`` line holding the fully resolved
configuration, followed by an RFC-4180 table whose floats use the shortest
round-trip representation. An optional JSON file (``--config``) overrides
the built-in defaults and explicit flags override the file.

Exit status is 0 on success and 2 for usage errors; numerical failures such
as a diverging simulation exit with 3.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import drivetrain as drive
from .basis import basis_size
from .errors import DivergenceError, IllPosedDesignError, InvalidStartError, PceError
from .experiments import (
    RobustSetup,
    Z99,
    baseline_control,
    gpc_bands,
    gpc_field,
    reference_surface,
    replay,
    robust_ocp,
    table1,
)
from .mc import ensemble_moments
from .propagation import TimeGrid
from .socp import cost_terms, evaluate_ocp, solve_ocp

log = logging.getLogger("pcesocp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS = {
    "table1": dict(degree=None, nodes=None, estimator=None, coupling=None, scenario=None),
    "surfaces": dict(degree=20, nodes=21, estimator="pm", coupling="coupled", scenario=1, every=10),
    "bands": dict(degree=20, nodes=21, estimator="pm", coupling="coupled", scenario=1, mc_mode="mc"),
    "propagate": dict(degree=4, nodes=5, estimator="pm", coupling="decoupled", scenario=2),
    "robust": dict(degree=7, nodes=15, estimator="pm", coupling="decoupled", max_iter=200),
}
COMMON = dict(dt=1e-3, store_every=10, mc_n=500, seed=0, out=".", spring_law="restoring")


class UsageError(Exception):
    pass


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path, config, header, rows):
    """Write ``rows`` under a config comment line; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("# config: " + json.dumps(config, sort_keys=True) + "\r\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values; flags override it")
    p.add_argument("--degree", type=int, help="chaos degree d")
    p.add_argument("--nodes", type=int, help="collocation nodes q")
    p.add_argument("--estimator", choices=("pm", "ls", "gls"))
    p.add_argument("--coupling", choices=("decoupled", "coupled"))
    p.add_argument("--scenario", type=int, choices=(1, 2))
    p.add_argument("--dt", type=float, help="integrator step [s]")
    p.add_argument("--store-every", type=int, help="keep every k-th integrator step")
    p.add_argument("--mc-n", type=int, help="reference / Monte Carlo sample count")
    p.add_argument("--seed", type=int)
    p.add_argument("--spring-law", choices=drive.SPRING_LAWS)
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="pcesocp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "table1": "RMSE of the gPC surfaces against the dense grid reference",
        "surfaces": "reference and gPC response surfaces theta(t, omega)",
        "bands": "gPC and sampled mean with 99% bands",
        "propagate": "gPC mean and standard deviation of one scenario",
        "robust": "robust start-up: computed torque versus optimized control",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        _add_common(p)
        if name == "surfaces":
            p.add_argument("--every", type=int, help="time stride of the written surface")
        if name == "bands":
            p.add_argument("--mc-mode", choices=("mc", "grid"))
        if name == "robust":
            p.add_argument("--max-iter", type=int)
    return parser


def resolve_config(args):
    cfg = {"experiment": args.command, **COMMON, **DEFAULTS[args.command]}
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in cfg and key != "experiment" and value is not None:
            cfg[key] = value
    _validate(cfg)
    return cfg


def _validate(cfg):
    for key in ("degree", "nodes", "dt", "store_every", "mc_n", "every", "max_iter"):
        v = cfg.get(key)
        if v is not None and not v > 0:
            raise UsageError(f"{key} must be positive")
    if cfg.get("seed") is not None and cfg["seed"] < 0:
        raise UsageError("seed must be non-negative")
    if cfg["mc_n"] < 2:
        raise UsageError("mc_n must be at least 2")
    d, q = cfg.get("degree"), cfg.get("nodes")
    if d is not None and q is not None and q < basis_size(1, d):
        raise UsageError(f"nodes={q} is fewer than the {basis_size(1, d)} basis terms of degree {d}")
    try:
        TimeGrid(10.0, cfg["dt"], cfg["store_every"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _grid(cfg):
    return TimeGrid(10.0, cfg["dt"], cfg["store_every"])


def _params(cfg):
    return drive.DrivetrainParams(spring_law=cfg["spring_law"])


def run_table1(cfg):
    pick = lambda key, full: (cfg[key],) if cfg[key] is not None else full
    qs = pick("nodes", (3, 5, 11, 21))
    ds = pick("degree", (2, 4, 10, 20))
    cells = table1(
        scenarios=pick("scenario", (1, 2)),
        methods=pick("estimator", ("ls", "pm")),
        couplings=pick("coupling", ("decoupled", "coupled")),
        qs=qs,
        ds=ds,
        grid=_grid(cfg),
        n_ref=cfg["mc_n"],
        params=_params(cfg),
    )
    rows = [(c.scenario, c.method, c.coupling, c.q, c.d, c.rmse) for c in cells]
    path = write_csv(Path(cfg["out"]) / "table1.csv", cfg, ["scenario", "method", "coupling", "q", "d", "rmse"], rows)
    return [path]


def run_surfaces(cfg):
    grid, params = _grid(cfg), _params(cfg)
    ref = reference_surface(cfg["scenario"], cfg["mc_n"], grid, params)
    fld = gpc_field(cfg["scenario"], cfg["degree"], cfg["nodes"], cfg["estimator"], cfg["coupling"], grid, params)
    approx = fld.evaluate(ref.points)
    idx = range(0, len(fld.times), cfg["every"])
    omegas = ref.points[:, 0]

    def rows():
        for source, states in (("reference", ref.states), ("gpc", approx)):
            for k in idx:
                for j, w in enumerate(omegas):
                    yield (source, fld.times[k], w, states[k, j, 0], states[k, j, 1])

    path = write_csv(Path(cfg["out"]) / "surfaces.csv", cfg, ["source", "t", "omega", "x1", "x2"], rows())
    return [path]


def run_bands(cfg):
    grid, params = _grid(cfg), _params(cfg)
    fld = gpc_field(cfg["scenario"], cfg["degree"], cfg["nodes"], cfg["estimator"], cfg["coupling"], grid, params)
    mean, lo, hi = gpc_bands(fld)
    ens = reference_surface(cfg["scenario"], cfg["mc_n"], grid, params, cfg["mc_mode"], cfg["seed"])
    mom = ensemble_moments(ens)

    def rows():
        for source, (m, a, b) in (("gpc", (mean, lo, hi)), ("sampled", (mom.mean, mom.lower, mom.upper))):
            for k, t in enumerate(fld.times):
                for i in range(2):
                    yield (source, t, f"x{i + 1}", m[k, i], a[k, i], b[k, i])

    path = write_csv(Path(cfg["out"]) / "bands.csv", cfg, ["source", "t", "state", "mean", "lower", "upper"], rows())
    return [path]


def run_propagate(cfg):
    fld = gpc_field(cfg["scenario"], cfg["degree"], cfg["nodes"], cfg["estimator"], cfg["coupling"], _grid(cfg), _params(cfg))
    mean, std = fld.mean(), fld.std()
    rows = ((t, mean[k, 0], mean[k, 1], std[k, 0], std[k, 1]) for k, t in enumerate(fld.times))
    header = ["t", "mean_x1", "mean_x2", "std_x1", "std_x2"]
    return [write_csv(Path(cfg["out"]) / "propagate.csv", cfg, header, rows)]


def run_robust(cfg):
    setup = RobustSetup(
        degree=cfg["degree"],
        nodes=cfg["nodes"],
        estimator=cfg["estimator"],
        coupling=cfg["coupling"],
        dt=cfg["dt"],
        store_every=cfg["store_every"],
        params=_params(cfg),
    )
    ocp = robust_ocp(setup)
    U0 = baseline_control(ocp, setup.params)
    K0, f0 = evaluate_ocp(ocp, U0)
    if f0 is None:
        raise InvalidStartError("baseline control diverges; cost is not finite")
    sol = solve_ocp(ocp, U0, max_iter=cfg["max_iter"])
    K1, f1 = evaluate_ocp(ocp, sol.U)
    if f1 is None:
        raise DivergenceError("optimized control diverges on re-evaluation")
    r_end = drive.reference_trajectory(setup.T)[0]
    replays = {}
    for name, U in (("baseline", U0), ("optimized", sol.U)):
        ens = replay(ocp, U, cfg["mc_n"], setup.params)
        dev = np.abs(ens.states[-1, :, 0] - r_end)
        replays[name] = {
            "max_deviation": float(np.nanmax(dev)) if np.isfinite(dev).any() else None,
            "diverged": int(ens.diverged.sum()),
        }
    out = Path(cfg["out"])
    t = ocp.grid.node_times
    p1 = write_csv(out / "controls.csv", cfg, ["t", "u_baseline", "u_optimized"],
                   zip(t, U0[:, 0], sol.U[:, 0]))

    def traj_rows():
        for name, fld in (("baseline", f0), ("optimized", f1)):
            mean, lo, hi = gpc_bands(fld)
            for k, tk in enumerate(fld.times):
                for i in range(2):
                    yield (name, tk, f"x{i + 1}", mean[k, i], lo[k, i], hi[k, i])

    p2 = write_csv(out / "trajectories.csv", cfg, ["policy", "t", "state", "mean", "lower", "upper"], traj_rows())
    bifurcation_free = replays["optimized"]["diverged"] == 0 and (replays["optimized"]["max_deviation"] or 0.0) < 2 * np.pi
    summary = {
        "config": cfg,
        "K_baseline": K0,
        "K_optimized": K1,
        "ratio": K1 / K0,
        "terms_baseline": cost_terms(f0, ocp.grid, U0, ocp.weights),
        "terms_optimized": cost_terms(f1, ocp.grid, sol.U, ocp.weights),
        "status": sol.status,
        "message": sol.message,
        "iterations": len(sol.log) - 1,
        "evaluations": sol.n_evaluations,
        "band_z": Z99,
        "replay": replays,
        "bifurcation_free": bool(bifurcation_free),
    }
    p3 = out / "summary.json"
    p3.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return [p1, p2, p3]


RUNNERS = {
    "table1": run_table1,
    "surfaces": run_surfaces,
    "bands": run_bands,
    "propagate": run_propagate,
    "robust": run_robust,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        paths = RUNNERS[args.command](cfg)
    except (UsageError, IllPosedDesignError) as exc:
        print(f"pcesocp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PceError, FloatingPointError) as exc:
        print(f"pcesocp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for p in paths:
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
