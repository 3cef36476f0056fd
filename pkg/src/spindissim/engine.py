"""Classical real-time dynamics of spin configurations under pair measurements.

Every measurement of a bond swaps an antiparallel pair with probability 1/2
and leaves parallel pairs alone.  For observables diagonal in the S3 basis this
reproduces the outcome-averaged quantum dynamics exactly (see
:mod:`spindissim.channel`).

Two modes:

* discrete: rounds of the four checkerboard steps, time unit = rounds
  (one round is ``4`` measurement steps, ``2 L**2`` bond measurements);
* continuous: every bond carries a Poisson clock of rate ``gamma``; events
  are generated globally with rate ``n_bonds * gamma`` and a uniformly chosen
  bond.  Times are reported as ``gamma t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analysis import fourier_modes, staggered_moments
from .lattice import ConfigurationError, Lattice, SweepSchedule, build_momentum_grid

__all__ = [
    "Observables",
    "Trajectory",
    "EngineInvariantError",
    "replica_rng",
    "geometric_grid",
    "evolve_discrete",
    "evolve_continuous",
    "steady_state_sample",
    "schedule_arrays",
]

STREAM_THERMAL = 1
STREAM_DYNAMICS = 2
STREAM_STEADY = 3


class EngineInvariantError(AssertionError):
    """Total magnetisation changed along a trajectory."""


def replica_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by ``(seed, stream, index)``."""
    ss = np.random.SeedSequence([int(seed), int(stream), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def geometric_grid(t_max: float, n_points: int, t_first: float | None = None) -> np.ndarray:
    """``0`` followed by ``n_points - 1`` geometrically spaced times up to ``t_max``."""
    if t_max <= 0 or n_points < 2:
        return np.array([0.0])
    t_first = t_first if t_first is not None else min(t_max, max(t_max * 1e-3, 1e-2))
    return np.concatenate([[0.0], np.geomspace(t_first, t_max, n_points - 1)])


class Observables:
    """Diagonal observables evaluated on batches of configurations.

    Names: ``mag`` (sum of sigma), ``Ms``, ``Ms2``, ``Ms4`` in the staggered
    convention, and ``Sq_k1_k2`` for ``|S(p)|**2`` at
    ``p = 2 pi (k1 / Lx, k2 / Ly)`` in the Fourier convention.
    """

    def __init__(self, lat: Lattice, momenta=(), staggered=("Ms2", "Ms4"),
                 ms_convention: str = "S3", sq_convention: str = "sigma"):
        self.lattice = lat
        self.grid = build_momentum_grid(lat)
        self.momenta = [tuple(int(v) for v in k) for k in momenta]
        self.staggered = tuple(staggered)
        self.ms_convention = ms_convention
        self.sq_convention = sq_convention
        self._idx = [self.grid.index(*k) for k in self.momenta]
        self.names = ["mag", *self.staggered] + [f"Sq_{k1}_{k2}" for k1, k2 in self.momenta]

    def __len__(self):
        return len(self.names)

    def convention(self, name: str) -> str:
        if name.startswith("Sq_"):
            return self.sq_convention
        if name == "mag":
            return "sigma"
        return self.ms_convention

    def evaluate(self, configs) -> np.ndarray:
        """Values of shape (..., n_observables)."""
        c = np.asarray(configs)
        ms, ms2, ms4 = staggered_moments(c, self.lattice.signs, self.ms_convention)
        cols = [c.sum(axis=-1).astype(float)]
        table = {"Ms": ms, "Ms2": ms2, "Ms4": ms4}
        cols += [table[k] for k in self.staggered]
        out = np.stack(cols, axis=-1)
        if self._idx:
            sq = fourier_modes(c, self.grid, self._idx, self.sq_convention)
            out = np.concatenate([out, sq], axis=-1)
        return out


@dataclass
class Trajectory:
    """One replica's observable record."""

    initial: np.ndarray = field(repr=False)
    mode: str
    times: np.ndarray
    values: np.ndarray = field(repr=False)  # (T, n_observables)
    names: list
    magnetization: int
    n_events: int = 0
    final: np.ndarray | None = field(default=None, repr=False)

    def series(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def schedule_arrays(schedule: SweepSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated step pairs and step offsets for the kernels."""
    pairs = np.ascontiguousarray(np.concatenate(schedule.pairs), dtype=np.intp)
    offsets = np.cumsum([0] + [len(p) for p in schedule.pairs]).astype(np.intp)
    return pairs, offsets


def _check_mag(spins: np.ndarray, mag0: int) -> None:
    if int(spins.sum(dtype=np.int64)) != mag0:
        raise EngineInvariantError("total magnetisation not conserved")


def evolve_discrete(config, schedule: SweepSchedule, M: int, rng: np.random.Generator,
                    observables: Observables, record_every: int = 1) -> Trajectory:
    """Run ``M`` measurement rounds, recording every ``record_every`` rounds and at ``M``."""
    spins = np.array(config, dtype=np.int8)
    if spins.shape != (schedule.lattice.n_sites,):
        raise ConfigurationError("configuration does not match the lattice")
    pairs, offsets = schedule_arrays(schedule)
    record_every = max(1, int(record_every))
    rounds = list(range(0, M, record_every)) + [M]
    rounds = sorted(set(rounds))
    mag0 = int(spins.sum(dtype=np.int64))
    snaps = np.empty((len(rounds), spins.size), dtype=np.int8)
    done = 0
    for i, r in enumerate(rounds):
        kernels.discrete_rounds(spins, pairs, offsets, r - done, rng)
        done = r
        _check_mag(spins, mag0)
        snaps[i] = spins
    return Trajectory(np.array(config, dtype=np.int8), "discrete", np.array(rounds, float),
                      observables.evaluate(snaps), observables.names, mag0,
                      n_events=M * len(pairs), final=spins)


def evolve_continuous(config, lat: Lattice, gamma: float, times, rng: np.random.Generator,
                      observables: Observables) -> Trajectory:
    """Poisson measurement process observed at physical ``times``.

    Returned times are ``gamma * t``.
    """
    if gamma <= 0:
        raise ConfigurationError("gamma must be positive")
    times = np.asarray(times, dtype=float)
    if len(times) and (times[0] < 0 or np.any(np.diff(times) <= 0)):
        raise ConfigurationError("time grid must be non-negative and strictly increasing")
    spins = np.array(config, dtype=np.int8)
    bonds = np.ascontiguousarray(lat.bonds, dtype=np.intp)
    rate = gamma * len(bonds)
    mag0 = int(spins.sum(dtype=np.int64))
    snaps = np.empty((len(times), spins.size), dtype=np.int8)
    t_next = -math.log1p(-rng.random()) / rate
    n_events = 0
    for i, t in enumerate(times):
        t_next, k = kernels.continuous_events(spins, bonds, t_next, float(t), rate, rng)
        n_events += k
        _check_mag(spins, mag0)
        snaps[i] = spins
    return Trajectory(np.array(config, dtype=np.int8), "continuous", gamma * times,
                      observables.evaluate(snaps), observables.names, mag0,
                      n_events=n_events, final=spins)


def steady_state_sample(n_sites: int, sector: int, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` uniformly random configurations with ``sum sigma == sector``."""
    if abs(sector) > n_sites or (n_sites - sector) % 2:
        raise ConfigurationError(f"sector {sector} is infeasible on {n_sites} sites")
    n_up = (n_sites + sector) // 2
    base = np.array([1] * n_up + [-1] * (n_sites - n_up), dtype=np.int8)
    return np.stack([rng.permutation(base) for _ in range(n)]) if n else \
        np.empty((0, n_sites), np.int8)
