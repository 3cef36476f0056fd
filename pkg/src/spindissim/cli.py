"""``spindissim`` command line: thermal | evolve | oracle | fit | steady.

Exit codes: 0 success, 2 configuration/input error, 3 numerical failure,
4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, engine, oracle, thermal
from .analysis import (FitError, TimeSeries, finite_size_model, fit_exponential,
                       fit_finite_size, fit_order_parameter_decay, fit_powerlaw, fourier_modes,
                       jackknife, staggered_moments, steady_state_prediction)
from .config import RunConfig
from .lattice import ConfigurationError, build_lattice, build_momentum_grid, build_rect_lattice, \
    build_schedule
from .runner import CheckpointMismatch, run_ensemble, write_manifest

log = logging.getLogger("spindissim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    return cfg.validate()


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n",
                    encoding="utf-8")


# --- thermal ----------------------------------------------------------------

def cmd_thermal(args) -> int:
    cfg = _load_config(args)
    if cfg.beta <= 0:
        raise ConfigurationError("thermal sampling needs beta > 0")
    out = _outdir(cfg)
    lat = build_lattice(cfg.L)
    rng = engine.replica_rng(cfg.seed, engine.STREAM_THERMAL, 0)
    state = thermal.thermalize(lat, cfg.beta, rng, cfg.warmup, stream_id=(cfg.seed, 1, 0))
    configs = np.empty((cfg.samples, lat.n_sites), np.int8)
    sweeps = np.empty(cfg.samples, np.int64)
    for i in range(cfg.samples):
        configs[i] = thermal.sample_configuration(state, cfg.sample_sweeps)
        sweeps[i] = state.sweeps
    with open(out / "samples.csv", "w", encoding="utf-8", newline="\n") as fh:
        thermal.write_config_dump(fh, cfg.seed, sweeps, configs)
    _, ms2, ms4 = staggered_moments(configs, lat.signs, cfg.ms_convention)
    n_bins = min(cfg.n_bins, cfg.samples)
    report = {
        "L": cfg.L, "beta": cfg.beta, "samples": cfg.samples, "convention": cfg.ms_convention,
        "expansion_order": state.order, "cutoff": state.cutoff,
        "periodic_check": state.check_periodic(),
    }
    for name, vals in (("Ms2", ms2), ("Ms4", ms4), ("mag", configs.sum(axis=1))):
        m, e = jackknife(vals, n_bins)
        report[name] = {"mean": float(m), "err": float(e)}
    if lat.n_sites <= 10:
        rho = oracle.thermal_density_matrix(oracle.build_hamiltonian(lat), cfg.beta)
        exact = float(np.real(np.diag(rho)) @ oracle.staggered_observables(lat)["Ms2"])
        if cfg.ms_convention == "sigma":
            exact *= 4
        report["oracle_Ms2"] = exact
        report["oracle_z"] = abs(report["Ms2"]["mean"] - exact) / max(report["Ms2"]["err"], 1e-300)
    _write_json(out / "thermal_report.json", report)
    print(json.dumps(report, sort_keys=True, default=float))
    return EXIT_OK


# --- evolve -----------------------------------------------------------------

def cmd_evolve(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    started = _now()
    ckpt = out / "checkpoint.npz"
    result = run_ensemble(cfg, workers=cfg.workers, checkpoint=ckpt, resume=args.resume,
                          max_chains=args.max_chains)
    if len(result.completed_chains) < cfg.n_chains:
        log.warning("stopped after %d of %d chains; rerun with --resume",
                    len(result.completed_chains), cfg.n_chains)
        return EXIT_OK
    for name, ts in result.series().items():
        ts.write_csv(out / f"{name}.csv")
    if cfg.stream_replicas:
        with open(out / "replicas.csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write("replica,time,observable,value\n")
            for r in range(len(result.values)):
                for i, t in enumerate(result.times):
                    for k, name in enumerate(result.names):
                        fh.write(f"{r},{t:.17g},{name},{result.values[r, i, k]:.17g}\n")
    write_manifest(out / "manifest.json", cfg, result, started, _now(), __version__)
    print(f"wrote {len(result.names)} series for {len(result.values)} replicas to {out}")
    return EXIT_OK


# --- oracle -----------------------------------------------------------------

def cmd_oracle(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    Lx, Ly = (int(v) for v in cfg.oracle_lattice)
    lat = build_rect_lattice(Lx, Ly)
    schedule = build_schedule(lat)
    H = oracle.build_hamiltonian(lat)
    rho0 = oracle.thermal_density_matrix(H, cfg.beta)
    obs = oracle.staggered_observables(lat)
    for k1, k2 in cfg.momenta:
        obs[f"Sq_{k1}_{k2}"] = oracle.fourier_observable(lat, k1, k2)
    report = {"lattice": [Lx, Ly], "beta": cfg.beta}
    if cfg.mode == "discrete":
        chk = oracle.classical_reduction_check(rho0, obs, schedule, M=cfg.rounds)
        times, unit = chk.quantum["time"], "rounds"
        rng = engine.replica_rng(cfg.seed, 4, 0)
        vals, _, _ = oracle.trajectory_ensemble(oracle.thermal_ensemble(H, cfg.beta), schedule,
                                                cfg.rounds, cfg.n_traj, rng, {"Ms2": obs["Ms2"]})
        m = vals["Ms2"].mean(axis=0)
        e = vals["Ms2"].std(axis=0, ddof=1) / np.sqrt(cfg.n_traj)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(e > 0, np.abs(m - chk.quantum["Ms2"]) / e, 0.0)
        report["trajectory_max_z"] = float(z.max())
        report["trajectory_n"] = cfg.n_traj
    else:
        t = np.linspace(0.0, cfg.t_max / cfg.gamma if cfg.gamma > 0 else cfg.t_max, cfg.n_times)
        chk = oracle.classical_reduction_check(rho0, obs, schedule, gamma=cfg.gamma, times=t)
        times = cfg.gamma * t if cfg.gamma > 0 else t
        unit = "gamma_t" if cfg.gamma > 0 else "t"
    report["max_deviation"] = chk.max_deviation
    report["time_unit"] = unit
    for name in obs:
        conv = "sigma" if name.startswith("Sq_") or name == "mag" else "S3"
        TimeSeries(name, times, chk.quantum[name], np.zeros(len(times)), 1, conv, unit) \
            .write_csv(out / f"oracle_{name}.csv")
    _write_json(out / "reduction_check.json", report)
    print(json.dumps(report, sort_keys=True, default=float))
    return EXIT_OK


# --- fit ----------------------------------------------------------------------

def cmd_fit(args) -> int:
    if not args.inputs:
        raise ConfigurationError("no input files given")
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    series = [TimeSeries.read_csv(p) for p in args.inputs]
    window = tuple(args.window) if args.window else None
    if args.model == "exp_approach":
        ts = series[0]
        res = fit_exponential(ts.times, ts.mean, ts.err, window)
        x = ts.times
        model = res.params["A"] + res.params["B"] * np.exp(-x / res.params["tau"])
    elif args.model == "powerlaw":
        ts = series[0]
        res = fit_powerlaw(ts.times, ts.mean, ts.err)
        x = ts.times
        model = res.params["C"] * x ** res.params["r"]
    elif args.model == "finite_size":
        ts = series[0]
        res = fit_finite_size(ts.times, ts.mean, ts.err)
        x = ts.times
        model = finite_size_model(x, res.params["Ms"], res.params["xi"])
    elif args.model == "order_decay":
        ts = series[0]
        res = fit_order_parameter_decay(ts.times, ts.mean, ts.err, window)
        x = ts.times
        model = res.params["Ms0"] * np.exp(-(x - x[0]) / res.params["tau"])
    else:
        raise ConfigurationError(f"unknown model {args.model!r}")
    (out / f"fit_{args.model}.json").write_text(res.to_json() + "\n", encoding="utf-8")
    if args.residuals:
        with open(out / f"fit_{args.model}_residuals.csv", "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("x,data,err,model,residual\n")
            for xi, d, e, m in zip(x, ts.mean, ts.err, model):
                fh.write(f"{xi:.17g},{d:.17g},{e:.17g},{m:.17g},{(d - m) / e:.17g}\n")
    print(res.to_json())
    return EXIT_OK


# --- steady -----------------------------------------------------------------

def cmd_steady(args) -> int:
    cfg = _load_config(args)
    out = _outdir(cfg)
    sector = 0 if cfg.sector is None else cfg.sector
    lat = build_lattice(cfg.L)
    grid = build_momentum_grid(lat)
    rng = engine.replica_rng(cfg.seed, engine.STREAM_STEADY, 0)
    configs = engine.steady_state_sample(lat.n_sites, sector, rng, cfg.samples)
    nonzero = [i for i in range(len(grid)) if grid.norm[i] > 0]
    sq = fourier_modes(configs, grid, nonzero, cfg.sq_convention)
    n_bins = min(cfg.n_bins, cfg.samples)
    m, e = jackknife(sq, n_bins)
    pred = steady_state_prediction(cfg.L, (np.pi, np.pi), {sector: 1.0})
    if cfg.sq_convention == "S3":
        pred /= 4
    report = {
        "L": cfg.L, "sector": sector, "samples": cfg.samples, "prediction": pred,
        "momenta": [[int(v) for v in grid.k[i]] for i in nonzero],
        "mean": m.tolist(), "err": e.tolist(),
        "max_z": float(np.max(np.abs(m - pred) / np.where(e > 0, e, np.inf))),
    }
    _write_json(out / "steady_report.json", report)
    print(json.dumps({k: report[k] for k in ("L", "sector", "prediction", "max_z")}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spindissim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--workers", type=int, help="worker processes")
        p.add_argument("--out", help="output directory")
        p.add_argument("--resume", action="store_true", help="resume from checkpoint")

    for name, fn, helptext in (
            ("thermal", cmd_thermal, "sample thermal configurations"),
            ("evolve", cmd_evolve, "real-time evolution of a replica ensemble"),
            ("oracle", cmd_oracle, "exact evolution and reduction check on small lattices"),
            ("steady", cmd_steady, "sample the stationary state of a sector")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        if name == "evolve":
            p.add_argument("--max-chains", type=int, default=None,
                           help="stop after this many chains (checkpoint kept)")
        p.set_defaults(func=fn)

    p = sub.add_parser("fit", help="fit a model to time,mean,err,n series")
    p.add_argument("model", choices=["exp_approach", "powerlaw", "finite_size", "order_decay"])
    p.add_argument("inputs", nargs="*")
    p.add_argument("--out")
    p.add_argument("--window", type=float, nargs=2)
    p.add_argument("--residuals", action="store_true")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigurationError, CheckpointMismatch, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, oracle.OracleError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except engine.EngineInvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
