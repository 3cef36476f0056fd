"""Stochastic series expansion sampling of ``diag(exp(-beta H)) / Z``.

The Heisenberg antiferromagnet ``H = J sum_b S_s . S_t`` is written per bond as
``J/4 - J (H_diag - H_off)`` with ``H_diag = 1/4 - S^z S^z`` (weight 1/2 on
antiparallel pairs, zero otherwise) and ``H_off = (S^+S^- + S^-S^+) / 2``.  On
a bipartite lattice the off-diagonal operators appear an even number of
times, which is the same as rotating one sublattice by pi about the z axis;
every operator string then has a non-negative weight.  The rotation does not
touch ``S^z`` so the sampled configurations need no back-transformation.

At the Heisenberg point the operator-loop update has deterministic loop
construction; every loop is flipped with probability 1/2.

Energies are in units of ``J``; ``beta`` is the dimensionless ``beta J``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .analysis import jackknife
from .lattice import ConfigurationError, Lattice

__all__ = [
    "ThermalSamplerState",
    "default_warmup",
    "thermalize",
    "sample_configuration",
    "sample_configurations",
    "estimate_thermal_observable",
    "write_config_dump",
]

log = logging.getLogger(__name__)

GROWTH = 1.25
FILL = 0.8


def default_warmup(lat: Lattice, beta: float) -> int:
    return int(max(1000, 10 * beta * lat.n_sites))


@dataclass
class ThermalSamplerState:
    """Mutable SSE state of one replica chain."""

    lattice: Lattice = field(repr=False)
    beta: float
    rng: np.random.Generator = field(repr=False)
    spins: np.ndarray = field(repr=False)
    opstring: np.ndarray = field(repr=False)
    sweeps: int = 0
    max_order: int = 0
    orders: list = field(default_factory=list, repr=False)
    stream_id: tuple = ()

    @property
    def order(self) -> int:
        return int(np.count_nonzero(self.opstring != -1))

    @property
    def cutoff(self) -> int:
        return len(self.opstring)

    def sweep(self) -> int:
        """One diagonal update followed by one loop update; returns the order."""
        bonds = self.lattice.bonds
        n = kernels.sse_diagonal_update(self.spins, self.opstring, bonds, self.beta, self.rng)
        kernels.sse_loop_update(self.spins, self.opstring, bonds, self.rng)
        self.sweeps += 1
        self.max_order = max(self.max_order, n)
        self._grow(n)
        return n

    def _grow(self, n: int) -> None:
        M = len(self.opstring)
        if n <= FILL * M:
            return
        new = M
        while n > FILL * new:
            new = int(np.ceil(GROWTH * new))
        self.opstring = np.concatenate(
            [self.opstring, np.full(new - M, -1, dtype=np.intp)])

    def check_periodic(self) -> bool:
        """Propagating through the operator string must return the start state."""
        s = self.spins.copy()
        for op in self.opstring:
            if op >= 0 and op % 2 == 1:
                a, b = self.lattice.bonds[op // 2]
                if s[a] == s[b]:
                    return False
                s[a], s[b] = -s[a], -s[b]
            elif op >= 0:
                a, b = self.lattice.bonds[op // 2]
                if s[a] == s[b]:
                    return False
        return bool(np.array_equal(s, self.spins))


def _initial_spins(lat: Lattice) -> np.ndarray:
    # Neel state: zero magnetisation and a valid start for any beta.
    return lat.signs.astype(np.int8)


def thermalize(lat: Lattice, beta: float, rng: np.random.Generator,
               n_warm: int | None = None, stream_id: tuple = ()) -> ThermalSamplerState:
    """Create a sampler and run ``n_warm`` warm-up sweeps.

    The default warm-up is ``max(1000, 10 beta L**2)`` sweeps.  The expansion
    order trace of the second half of the warm-up is kept in ``state.orders``
    as an equilibration diagnostic.
    """
    if beta <= 0:
        raise ConfigurationError("beta must be positive for the SSE sampler")
    if lat.n_bonds == 0:
        raise ConfigurationError("lattice has no bonds")
    cutoff = max(20, int(beta * lat.n_bonds * 0.5) + 10)
    state = ThermalSamplerState(
        lattice=lat, beta=float(beta), rng=rng, spins=_initial_spins(lat),
        opstring=np.full(cutoff, -1, dtype=np.intp), stream_id=stream_id)
    n_warm = default_warmup(lat, beta) if n_warm is None else int(n_warm)
    for i in range(n_warm):
        n = state.sweep()
        if i >= n_warm // 2:
            state.orders.append(n)
    if len(state.orders) > 20:
        tau = _integrated_autocorr(np.asarray(state.orders, dtype=float))
        if tau > 0.05 * len(state.orders):
            log.warning("expansion order autocorrelation time %.1f is large "
                        "compared to the warm-up; consider more sweeps", tau)
    return state


def _integrated_autocorr(x: np.ndarray) -> float:
    x = x - x.mean()
    var = x.var()
    if var == 0:
        return 0.5
    tau = 0.5
    for lag in range(1, len(x) // 2):
        c = np.dot(x[:-lag], x[lag:]) / (len(x) - lag) / var
        if c <= 0:
            break
        tau += c
    return tau


def sample_configuration(state: ThermalSamplerState, n_sweeps: int = 2) -> np.ndarray:
    """Advance ``n_sweeps`` sweeps and return the imaginary-time-zero spins."""
    for _ in range(n_sweeps):
        state.sweep()
    return state.spins.copy()


def sample_configurations(state: ThermalSamplerState, n: int, n_sweeps: int = 2) -> np.ndarray:
    """``n`` successive samples, shape (n, n_sites), int8."""
    out = np.empty((n, state.lattice.n_sites), dtype=np.int8)
    for i in range(n):
        out[i] = sample_configuration(state, n_sweeps)
    return out


def estimate_thermal_observable(state: ThermalSamplerState, observable, n_samples: int,
                                n_sweeps: int = 2, n_bins: int = 20):
    """Jackknife estimate ``(mean, error)`` of a diagonal observable.

    ``observable`` maps an (n, n_sites) sigma array to n values.
    """
    if n_samples < n_bins:
        raise ConfigurationError(f"need at least {n_bins} samples for {n_bins} bins")
    configs = sample_configurations(state, n_samples, n_sweeps)
    values = np.asarray(observable(configs), dtype=float)
    return jackknife(values, n_bins)


def write_config_dump(fh, seed: int, sweep_indices, configs) -> None:
    """Write ``seed,sweep_index,s0,...`` rows; spins as ``1``/``-1``."""
    n = configs.shape[1]
    fh.write("seed,sweep_index," + ",".join(f"s{i}" for i in range(n)) + "\n")
    for idx, c in zip(sweep_indices, configs):
        fh.write(f"{seed},{int(idx)}," + ",".join(str(int(v)) for v in c) + "\n")
