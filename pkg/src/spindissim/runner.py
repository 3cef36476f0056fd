"""Replica ensembles: initial states, dynamics, worker pool and checkpoints.

Replicas are grouped into chains of ``samples_per_chain``.  A chain owns one
SSE sampler (stream ``(seed, 1, chain)``) that provides the initial states of
its replicas; replica ``r`` evolves with stream ``(seed, 2, r)``.  Results are
assembled in replica order, so they do not depend on the number of workers or
on the order in which chains finish.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine, thermal
from .analysis import TimeSeries, binder_ratio
from .config import RunConfig
from .lattice import ConfigurationError, build_lattice, build_schedule

log = logging.getLogger(__name__)

__all__ = ["EnsembleResult", "time_grid", "build_observables", "run_chain", "run_ensemble",
           "read_config_dump", "CheckpointMismatch"]


class CheckpointMismatch(ConfigurationError):
    """The checkpoint belongs to a different configuration."""


def time_grid(cfg: RunConfig) -> np.ndarray:
    """Rounds (discrete) or physical times (continuous) at which to record."""
    if cfg.mode == "discrete":
        r = list(range(0, cfg.rounds, max(1, cfg.record_every))) + [cfg.rounds]
        return np.array(sorted(set(r)), dtype=float)
    if cfg.gamma <= 0:
        raise ConfigurationError("continuous mode needs gamma > 0")
    t_max = cfg.t_max / cfg.gamma
    if cfg.n_times < 2 or t_max == 0:
        return np.array([0.0])
    if cfg.grid == "linear":
        return np.linspace(0.0, t_max, cfg.n_times)
    t_first = None if cfg.t_first is None else cfg.t_first / cfg.gamma
    return engine.geometric_grid(t_max, cfg.n_times, t_first)


def build_observables(cfg: RunConfig, lat) -> engine.Observables:
    return engine.Observables(lat, cfg.momenta, cfg.staggered, cfg.ms_convention,
                              cfg.sq_convention)


def read_config_dump(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``seed,sweep_index,s0,...`` dump; returns (sweep_index, configs)."""
    rows = Path(path).read_text(encoding="utf-8").splitlines()
    if not rows or not rows[0].startswith("seed,sweep_index"):
        raise ConfigurationError(f"{path}: not a configuration dump")
    data = np.array([[int(v) for v in r.split(",")] for r in rows[1:] if r], dtype=np.int64)
    return data[:, 1], data[:, 2:].astype(np.int8)


def _initial_states(cfg: RunConfig, lat, chain: int, replica_ids) -> np.ndarray:
    n = len(replica_ids)
    if cfg.initial == "neel":
        return np.tile(lat.signs.astype(np.int8), (n, 1))
    if cfg.initial == "random":
        out = np.empty((n, lat.n_sites), np.int8)
        for i, r in enumerate(replica_ids):
            rng = engine.replica_rng(cfg.seed, engine.STREAM_STEADY, r)
            out[i] = rng.choice(np.array([-1, 1], np.int8), size=lat.n_sites)
        return out
    if cfg.initial == "steady":
        rng = engine.replica_rng(cfg.seed, engine.STREAM_STEADY, chain)
        return engine.steady_state_sample(lat.n_sites, cfg.sector, rng, n)
    if cfg.initial == "file":
        _, configs = read_config_dump(cfg.initial_file)
        if configs.shape[1] != lat.n_sites or len(configs) < cfg.replicas:
            raise ConfigurationError("initial_file does not provide enough matching samples")
        return configs[np.asarray(replica_ids)]
    rng = engine.replica_rng(cfg.seed, engine.STREAM_THERMAL, chain)
    state = thermal.thermalize(lat, cfg.beta, rng, cfg.warmup, stream_id=(cfg.seed, 1, chain))
    out = np.empty((n, lat.n_sites), np.int8)
    i = 0
    while i < n:
        c = thermal.sample_configuration(state, cfg.sample_sweeps)
        if cfg.sector is not None and int(c.sum(dtype=np.int64)) != cfg.sector:
            continue
        out[i] = c
        i += 1
    return out


def run_chain(cfg: RunConfig, chain: int) -> dict:
    """Evolve the replicas of one chain; returns arrays indexed by local replica."""
    lat = build_lattice(cfg.L)
    obs = build_observables(cfg, lat)
    first = chain * cfg.samples_per_chain
    ids = list(range(first, min(first + cfg.samples_per_chain, cfg.replicas)))
    init = _initial_states(cfg, lat, chain, ids)
    grid = time_grid(cfg)
    values = np.empty((len(ids), len(grid), len(obs)))
    events = np.zeros(len(ids), np.int64)
    if cfg.mode == "discrete":
        schedule = build_schedule(lat)
    for i, r in enumerate(ids):
        rng = engine.replica_rng(cfg.seed, engine.STREAM_DYNAMICS, r)
        if cfg.mode == "discrete":
            traj = engine.evolve_discrete(init[i], schedule, cfg.rounds, rng, obs, cfg.record_every)
        else:
            traj = engine.evolve_continuous(init[i], lat, cfg.gamma, grid, rng, obs)
        values[i] = traj.values
        events[i] = traj.n_events
    return {"chain": chain, "replicas": np.array(ids), "values": values, "events": events}


@dataclass
class EnsembleResult:
    config: RunConfig
    times: np.ndarray
    time_unit: str
    names: list
    values: np.ndarray  # (R, T, n_obs) in replica order
    events: np.ndarray
    completed_chains: list

    def per_replica(self, name: str) -> np.ndarray:
        return self.values[:, :, self.names.index(name)]

    def series(self) -> dict[str, TimeSeries]:
        cfg = self.config
        lat = build_lattice(cfg.L)
        obs = build_observables(cfg, lat)
        out = {}
        for k, name in enumerate(self.names):
            out[name] = TimeSeries.from_replicas(
                name, self.times, self.values[:, :, k], min(cfg.n_bins, len(self.values)),
                convention=obs.convention(name), time_unit=self.time_unit)
        if "Ms2" in self.names and "Ms4" in self.names and len(self.values) >= 2:
            out["binder"] = binder_ratio(self.per_replica("Ms2"), self.per_replica("Ms4"),
                                         self.times, min(cfg.n_bins, len(self.values)),
                                         self.time_unit)
        return out


def _save_checkpoint(path: Path, cfg_hash: str, done: dict) -> None:
    arrays = {"config_hash": np.array(cfg_hash)}
    for cid, res in done.items():
        arrays[f"values_{cid}"] = res["values"]
        arrays[f"replicas_{cid}"] = res["replicas"]
        arrays[f"events_{cid}"] = res["events"]
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def _load_checkpoint(path: Path, cfg_hash: str) -> dict:
    with np.load(path) as data:
        if str(data["config_hash"]) != cfg_hash:
            raise CheckpointMismatch("checkpoint was written for a different configuration")
        done = {}
        for key in data.files:
            if key.startswith("values_"):
                cid = int(key.split("_")[1])
                done[cid] = {"chain": cid, "values": data[key],
                             "replicas": data[f"replicas_{cid}"], "events": data[f"events_{cid}"]}
    return done


def run_ensemble(cfg: RunConfig, workers: int = 1, checkpoint: str | Path | None = None,
                 resume: bool = False, max_chains: int | None = None) -> EnsembleResult:
    """Run all chains of ``cfg``.

    ``max_chains`` stops after that many newly completed chains (used to
    simulate an interrupted run); the checkpoint then holds partial results.
    """
    cfg.validate()
    cfg_hash = cfg.hash()
    ckpt = Path(checkpoint) if checkpoint else None
    done: dict = {}
    if resume:
        if ckpt is None or not ckpt.exists():
            raise ConfigurationError("--resume given but no checkpoint found")
        done = _load_checkpoint(ckpt, cfg_hash)
    todo = [c for c in range(cfg.n_chains) if c not in done]
    if max_chains is not None:
        todo = todo[:max_chains]
    since_save = 0

    def finish(res):
        nonlocal since_save
        done[res["chain"]] = res
        since_save += 1
        if ckpt is not None and since_save >= max(1, cfg.checkpoint_every):
            _save_checkpoint(ckpt, cfg_hash, done)
            since_save = 0

    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_chain, cfg, c) for c in todo]
            for fut in as_completed(futures):
                finish(fut.result())
    else:
        for c in todo:
            finish(run_chain(cfg, c))
    if ckpt is not None and since_save:
        _save_checkpoint(ckpt, cfg_hash, done)
    order = sorted(done)
    lat = build_lattice(cfg.L)
    names = build_observables(cfg, lat).names
    grid = time_grid(cfg)
    values = np.concatenate([done[c]["values"] for c in order]) if order else \
        np.empty((0, len(grid), len(names)))
    events = np.concatenate([done[c]["events"] for c in order]) if order else np.empty(0, np.int64)
    times = grid if cfg.mode == "discrete" else cfg.gamma * grid
    unit = "rounds" if cfg.mode == "discrete" else "gamma_t"
    return EnsembleResult(cfg, times, unit, names, values, events, order)


def write_manifest(path: Path, cfg: RunConfig, result: EnsembleResult, started: str,
                   finished: str, version: str) -> None:
    manifest = {
        "config_hash": cfg.hash(),
        "code_version": version,
        "start": started,
        "end": finished,
        "chains": {str(c): c in result.completed_chains for c in range(cfg.n_chains)},
        "replicas_completed": int(len(result.values)),
        "rng_streams": {
            "generator": "Philox",
            "thermal": [cfg.seed, engine.STREAM_THERMAL, "chain"],
            "dynamics": [cfg.seed, engine.STREAM_DYNAMICS, "replica"],
        },
        "time_unit": result.time_unit,
        "observables": {n: build_observables(cfg, build_lattice(cfg.L)).convention(n)
                        for n in result.names},
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
