"""Brute-force quantum evolution for lattices of at most ten spins.

Everything here works on dense ``2**n`` vectors and matrices.  It is the
reference against which the classical real-time engine and the thermal
sampler are checked.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np
import scipy.linalg
from scipy.integrate import solve_ivp

from .channel import ORACLE_MAX_SITES, LindbladGenerator, apply_pair_channel, kernel_matrix
from .lattice import ConfigurationError, Lattice, SweepSchedule, build_momentum_grid

__all__ = [
    "OracleError",
    "basis_spins",
    "diagonal_observable",
    "staggered_observables",
    "fourier_observable",
    "build_hamiltonian",
    "thermal_density_matrix",
    "thermal_ensemble",
    "check_density_matrix",
    "apply_sweep_step",
    "evolve_discrete",
    "evolve_lindblad",
    "classical_discrete",
    "classical_lindblad",
    "trajectory_sample",
    "trajectory_ensemble",
    "classical_reduction_check",
    "ReductionReport",
]


class OracleError(RuntimeError):
    """Numerical failure or violated invariant inside the oracle."""


def _check_cap(lat: Lattice, cap: int = ORACLE_MAX_SITES) -> None:
    if lat.n_sites > cap:
        raise ConfigurationError(f"{lat.n_sites} sites exceed the oracle cap of {cap}")


def basis_spins(n: int) -> np.ndarray:
    """``sigma`` values (+1 up, -1 down) for every basis state, shape (2**n, n)."""
    idx = np.arange(2 ** n)[:, None]
    bits = (idx >> (n - 1 - np.arange(n))[None, :]) & 1
    return (1 - 2 * bits).astype(np.int64)


def diagonal_observable(lat: Lattice, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluate ``fn`` on the (2**n, n) array of sigma configurations."""
    return np.asarray(fn(basis_spins(lat.n_sites)), dtype=float)


def staggered_observables(lat: Lattice) -> dict[str, np.ndarray]:
    """Diagonals of ``M_s**2`` and ``M_s**4`` in S3 = +-1/2 units, plus ``sum sigma``."""
    sig = basis_spins(lat.n_sites)
    ms = 0.5 * (sig @ lat.signs)
    return {"Ms2": ms ** 2, "Ms4": ms ** 4, "mag": sig.sum(axis=1).astype(float)}


def fourier_observable(lat: Lattice, k1: int, k2: int) -> np.ndarray:
    """Diagonal of ``|S(p)|**2`` in sigma units for ``p = 2 pi (k1/Lx, k2/Ly)``."""
    grid = build_momentum_grid(lat)
    ph = grid.phases([grid.index(k1, k2)])[:, 0]
    amp = basis_spins(lat.n_sites) @ ph
    return np.abs(amp) ** 2


# --- Hamiltonian and thermal state ----------------------------------------

def build_hamiltonian(lat: Lattice, J: float = 1.0, cap: int = ORACLE_MAX_SITES) -> np.ndarray:
    """Dense ``J sum_b S_s . S_t`` with spin-1/2 operators ``S = sigma / 2``.

    On a bond, ``S.S`` is ``+1/4`` on parallel pairs and on antiparallel pairs
    has ``-1/4`` on the diagonal and ``1/2`` between ``ud`` and ``du``.
    """
    _check_cap(lat, cap)
    n = lat.n_sites
    dim = 2 ** n
    H = np.zeros((dim, dim))
    states = np.arange(dim)
    for s, t in lat.bonds:
        bs = 1 << (n - 1 - int(s))
        bt = 1 << (n - 1 - int(t))
        par = ((states & bs) > 0) == ((states & bt) > 0)
        H[states, states] += np.where(par, 0.25, -0.25) * J
        anti = states[~par]
        H[anti, anti ^ (bs | bt)] += 0.5 * J
    return H


def thermal_density_matrix(H: np.ndarray, beta: float) -> np.ndarray:
    """``exp(-beta H) / Z`` from the eigendecomposition of ``H``."""
    if beta < 0:
        raise ConfigurationError("beta must be non-negative")
    w, v = np.linalg.eigh(H)
    x = -beta * (w - w.min())
    p = np.exp(x)
    p /= p.sum()
    rho = (v * p) @ v.T
    return 0.5 * (rho + rho.T)


def thermal_ensemble(H: np.ndarray, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-ensemble ``(p_i, |i>)`` of the thermal state; vectors are columns."""
    w, v = np.linalg.eigh(H)
    p = np.exp(-beta * (w - w.min()))
    return p / p.sum(), v


def check_density_matrix(rho: np.ndarray, tol: float = 1e-12, pos_tol: float = 1e-10) -> None:
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise OracleError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise OracleError(f"density matrix trace {np.trace(rho).real} != 1")
    if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -pos_tol:
        raise OracleError("density matrix has a negative eigenvalue")


# --- outcome-summed measurement dynamics ------------------------------------

def _is_matching(pairs: np.ndarray) -> bool:
    flat = np.asarray(pairs).ravel()
    return len(np.unique(flat)) == len(flat)


def apply_sweep_step(rho: np.ndarray, pairs: np.ndarray, n: int) -> np.ndarray:
    """Apply the outcome-summed measurement on every bond of one step.

    ``pairs`` must be a matching so that the bond channels commute.
    """
    pairs = np.asarray(pairs).reshape(-1, 2)
    if not _is_matching(pairs):
        raise ConfigurationError("step bonds do not form a matching")
    for s, t in pairs:
        rho = apply_pair_channel(rho, int(s), int(t), n)
    return rho


def _expect(rho: np.ndarray, diag_obs: Mapping[str, np.ndarray]) -> dict[str, float]:
    d = np.real(np.diagonal(rho))
    return {name: float(d @ obs) for name, obs in diag_obs.items()}


def _collect(records: list[dict[str, float]], names) -> dict[str, np.ndarray]:
    return {k: np.array([r[k] for r in records]) for k in names}


def evolve_discrete(rho0: np.ndarray, schedule: SweepSchedule, M: int,
                    observables: Mapping[str, np.ndarray], check: bool = False) -> dict[str, np.ndarray]:
    """Apply ``M`` rounds of the four-step schedule.

    Returns ``Tr[O rho]`` for every diagonal observable at rounds ``0..M``.
    """
    lat = schedule.lattice
    _check_cap(lat)
    n = lat.n_sites
    rho = np.array(rho0, dtype=complex)
    rec = [_expect(rho, observables)]
    for _ in range(M):
        for pairs in schedule.pairs:
            rho = apply_sweep_step(rho, pairs, n)
        if check:
            check_density_matrix(rho)
        rec.append(_expect(rho, observables))
    out = _collect(rec, observables)
    out["time"] = np.arange(M + 1, dtype=float)
    return out


def evolve_lindblad(rho0: np.ndarray, lat: Lattice, gamma: float, times,
                    observables: Mapping[str, np.ndarray], tol: float = 1e-9) -> dict[str, np.ndarray]:
    """Solve the continuous measurement master equation on a time grid.

    The dense generator is exponentiated when the superoperator dimension is
    at most 4096; otherwise an adaptive DOP853 integration is used.
    """

    _check_cap(lat)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ConfigurationError("time grid must be non-negative and increasing")
    gen = LindbladGenerator(lat, gamma)
    dim = gen.dim
    rho0 = np.array(rho0, dtype=complex)
    rec = []
    if dim * dim <= gen.max_dense:
        G = gen.matrix()
        vec = rho0.ravel()
        t_prev = 0.0
        for t in times:
            vec = scipy.linalg.expm(G * (t - t_prev)) @ vec
            t_prev = t
            rec.append(_expect(vec.reshape(dim, dim), observables))
    else:
        def rhs(_t, y):
            return gen(y.reshape(dim, dim)).ravel()

        sol = solve_ivp(rhs, (0.0, float(times[-1]) if len(times) else 0.0), rho0.ravel(),
                        method="DOP853", t_eval=times, rtol=tol, atol=tol * 1e-3)
        if not sol.success:
            raise OracleError(f"Lindblad integration failed: {sol.message}")
        for y in sol.y.T:
            rec.append(_expect(y.reshape(dim, dim), observables))
    out = _collect(rec, observables)
    out["time"] = times.copy()
    return out


# --- classical transfer matrices ---------------------------------------------

def _bond_kernel(n: int, s: int, t: int) -> np.ndarray:
    """Column-stochastic ``2**n`` matrix applying the swap kernel on ``(s, t)``."""
    dim = 2 ** n
    states = np.arange(dim)
    bs = 1 << (n - 1 - s)
    bt = 1 << (n - 1 - t)
    anti = ((states & bs) > 0) != ((states & bt) > 0)
    K = np.diag(np.where(anti, 0.5, 1.0))
    K[states[anti] ^ (bs | bt), states[anti]] += 0.5
    # Consistency with the pair kernel derived from the projectors.
    assert np.allclose(kernel_matrix()[1:3, 1:3], 0.5)
    return K


def classical_discrete(p0: np.ndarray, schedule: SweepSchedule, M: int,
                       observables: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Exact distribution evolution of the classical swap process in rounds."""
    lat = schedule.lattice
    n = lat.n_sites
    T = np.eye(2 ** n)
    for pairs in schedule.pairs:
        for s, t in pairs:
            T = _bond_kernel(n, int(s), int(t)) @ T
    p = np.array(p0, dtype=float)
    rec = [{k: float(p @ o) for k, o in observables.items()}]
    for _ in range(M):
        p = T @ p
        rec.append({k: float(p @ o) for k, o in observables.items()})
    out = _collect(rec, observables)
    out["time"] = np.arange(M + 1, dtype=float)
    return out


def classical_lindblad(p0: np.ndarray, lat: Lattice, gamma: float, times,
                       observables: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Continuous-time Markov chain with every bond applying the kernel at rate gamma."""
    n = lat.n_sites
    Q = np.zeros((2 ** n, 2 ** n))
    for s, t in lat.bonds:
        Q += _bond_kernel(n, int(s), int(t))
    Q -= lat.n_bonds * np.eye(2 ** n)
    Q *= gamma
    times = np.asarray(times, dtype=float)
    p = np.array(p0, dtype=float)
    rec = []
    t_prev = 0.0
    for t in times:
        p = scipy.linalg.expm(Q * (t - t_prev)) @ p
        t_prev = t
        rec.append({k: float(p @ o) for k, o in observables.items()})
    out = _collect(rec, observables)
    out["time"] = times.copy()
    return out


# --- Born-rule trajectories ------------------------------------------------

def _pair_index(n: int, s: int, t: int):
    """Flat indices of ``ud``, ``du`` and parallel basis states of bond (s, t)."""
    states = np.arange(2 ** n)
    bs = 1 << (n - 1 - s)
    bt = 1 << (n - 1 - t)
    ud = states[((states & bs) == 0) & ((states & bt) != 0)]
    du = ud ^ (bs | bt)
    par = states[((states & bs) == 0) == ((states & bt) == 0)]
    return ud, du, par


def _measure_batch(psi: np.ndarray, s: int, t: int, n: int, u: np.ndarray) -> np.ndarray:
    """Projectively measure the pair total spin on a batch of pure states.

    The singlet outcome is chosen when ``u < ||P0 psi||**2``.  States are
    projected and renormalised in place; outcomes (1 triplet, 0 singlet) are
    returned.
    """
    ud, du, par = _pair_index(n, s, t)
    anti = 0.5 * (psi[:, ud] - psi[:, du])
    sym = 0.5 * (psi[:, ud] + psi[:, du])
    p_singlet = np.minimum(2.0 * np.sum(np.abs(anti) ** 2, axis=1), 1.0)
    singlet = u < p_singlet
    m = singlet[:, None]
    psi[:, ud] = np.where(m, anti, sym)
    psi[:, du] = np.where(m, -anti, sym)
    psi[np.ix_(singlet, par)] = 0.0
    norm_sq = np.where(singlet, p_singlet, 1.0 - p_singlet)
    psi /= np.sqrt(norm_sq)[:, None]
    return (~singlet).astype(np.int8)


def trajectory_ensemble(ensemble: tuple[np.ndarray, np.ndarray], schedule: SweepSchedule, M: int,
                        n_traj: int, rng: np.random.Generator,
                        observables: Mapping[str, np.ndarray]):
    """Sample ``n_traj`` Born-rule trajectories with outcome records.

    Parameters
    ----------
    ensemble : (p, V)
        Initial eigen-ensemble; column ``V[:, i]`` is drawn with probability ``p[i]``.

    Returns
    -------
    values : dict of ndarray, shape (n_traj, M + 1)
        ``<psi|O|psi>`` per trajectory after every round.
    outcomes : ndarray, shape (n_traj, M * measurements_per_round)
        1 for triplet, 0 for singlet, in measurement order.
    final : ndarray, shape (n_traj,)
        Basis state sampled from ``|<f|psi>|**2`` at the end.
    """
    p, V = ensemble
    lat = schedule.lattice
    _check_cap(lat)
    n = lat.n_sites
    start = rng.choice(len(p), size=n_traj, p=p)
    psi = np.array(V[:, start].T, dtype=complex)
    values = {k: np.empty((n_traj, M + 1)) for k in observables}

    def record(r):
        prob = np.abs(psi) ** 2
        for k, o in observables.items():
            values[k][:, r] = prob @ o

    record(0)
    outcomes = []
    for r in range(M):
        for pairs in schedule.pairs:
            for s, t in pairs:
                outcomes.append(_measure_batch(psi, int(s), int(t), n, rng.random(n_traj)))
        record(r + 1)
    prob = np.abs(psi) ** 2
    cdf = np.cumsum(prob, axis=1)
    u = rng.random(n_traj)[:, None] * cdf[:, -1:]
    final = np.minimum((cdf < u).sum(axis=1), psi.shape[1] - 1)
    rec = np.stack(outcomes, axis=1) if outcomes else np.empty((n_traj, 0), np.int8)
    return values, rec, final


def trajectory_sample(ensemble, schedule: SweepSchedule, M: int, rng: np.random.Generator,
                      observables: Mapping[str, np.ndarray] | None = None):
    """One Born-rule trajectory: ``(outcomes, final_state, values)``."""
    values, rec, final = trajectory_ensemble(ensemble, schedule, M, 1, rng, observables or {})
    return rec[0], int(final[0]), {k: v[0] for k, v in values.items()}


# --- reduction check -------------------------------------------------------

@dataclass
class ReductionReport:
    max_deviation: float
    quantum: dict
    classical: dict

    def as_dict(self) -> dict:
        return {"max_deviation": self.max_deviation}


def classical_reduction_check(rho0: np.ndarray, observables: Mapping[str, np.ndarray],
                              schedule: SweepSchedule, M: int = 0, gamma: float | None = None,
                              times=None, bound: float = 1e-10) -> ReductionReport:
    """Compare quantum and classical evolution of diagonal observables.

    Runs the discrete schedule for ``M`` rounds, or the Lindblad equation on
    ``times`` when ``gamma`` is given, both quantum mechanically from ``rho0``
    and classically from ``diag(rho0)``.

    Raises
    ------
    OracleError
        If the largest absolute difference exceeds ``bound``.
    """
    p0 = np.real(np.diagonal(rho0)).copy()
    if gamma is None:
        q = evolve_discrete(rho0, schedule, M, observables)
        c = classical_discrete(p0, schedule, M, observables)
    else:
        q = evolve_lindblad(rho0, schedule.lattice, gamma, times, observables)
        c = classical_lindblad(p0, schedule.lattice, gamma, times, observables)
    dev = max((float(np.max(np.abs(q[k] - c[k]))) for k in observables), default=0.0)
    if dev > bound:
        raise OracleError(f"classical reduction deviates by {dev:.3e} > {bound:.1e}")
    return ReductionReport(dev, q, c)
