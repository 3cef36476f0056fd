"""Exact algebra of the two-spin total-spin measurement.

Basis order for a pair is ``(uu, ud, du, dd)``.  ``P1`` projects onto the
triplet, ``P0`` onto the singlet.  Discarding the outcome gives the channel
``rho -> P1 rho P1 + P0 rho P0`` whose doubled-space matrix has only
non-negative entries, even though ``P0`` itself does not.

On diagonal density matrices the channel acts as a classical Markov kernel:
parallel pairs are fixed, antiparallel pairs are swapped with probability 1/2.
Because the channel is self-adjoint and maps diagonal operators to diagonal
operators, any diagonal observable evolves exactly as under this kernel, for
any (also non-diagonal) initial state.  :func:`classical_kernel` re-derives
the kernel from the projectors every time it is built.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np

from .lattice import ConfigurationError, Lattice

__all__ = [
    "PAIR_STATES",
    "ORACLE_MAX_SITES",
    "projectors",
    "doubled_superoperator",
    "classical_kernel",
    "kernel_matrix",
    "apply_pair_channel",
    "LindbladGenerator",
    "lindblad_generator",
]

PAIR_STATES = ("uu", "ud", "du", "dd")
ORACLE_MAX_SITES = 10

Matrix = tuple[tuple[Fraction, ...], ...]

_H = Fraction(1, 2)


def _matmul(a: Matrix, b: Matrix) -> Matrix:
    n = len(a)
    return tuple(
        tuple(sum((a[i][k] * b[k][j] for k in range(n)), Fraction(0)) for j in range(n))
        for i in range(n))


def _add(a: Matrix, b: Matrix) -> Matrix:
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def _identity(n: int) -> Matrix:
    return tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))


@lru_cache(maxsize=None)
def projectors() -> tuple[Matrix, Matrix]:
    """Return ``(P0, P1)`` as 4x4 tuples of :class:`~fractions.Fraction`."""
    z, o = Fraction(0), Fraction(1)
    p1 = ((o, z, z, z),
          (z, _H, _H, z),
          (z, _H, _H, z),
          (z, z, z, o))
    p0 = ((z, z, z, z),
          (z, _H, -_H, z),
          (z, -_H, _H, z),
          (z, z, z, z))
    return p0, p1


def projector_arrays() -> tuple[np.ndarray, np.ndarray]:
    """Float copies of ``(P0, P1)``."""
    p0, p1 = projectors()
    return np.array(p0, dtype=float), np.array(p1, dtype=float)


@lru_cache(maxsize=None)
def doubled_superoperator() -> Matrix:
    """16x16 matrix of ``P1 (x) P1* + P0 (x) P0*``.

    Row index ``4 * n + n'``, column index ``4 * m + m'``.  The projectors are
    real, so complex conjugation is the identity here.
    """
    p0, p1 = projectors()
    rows = []
    for n, n2 in product(range(4), repeat=2):
        rows.append(tuple(
            p1[n][m] * p1[n2][m2] + p0[n][m] * p0[n2][m2]
            for m, m2 in product(range(4), repeat=2)))
    return tuple(rows)


def _outer(i: int, j: int) -> Matrix:
    return tuple(tuple(Fraction(int(a == i and b == j)) for b in range(4)) for a in range(4))


def _channel(rho: Matrix) -> Matrix:
    p0, p1 = projectors()
    return _add(_matmul(_matmul(p1, rho), p1), _matmul(_matmul(p0, rho), p0))


@lru_cache(maxsize=None)
def classical_kernel() -> dict[str, dict[str, Fraction]]:
    """Transition probabilities of the measurement on diagonal pair states.

    The kernel is read off the quantum channel applied to every diagonal
    basis state; the output must itself be diagonal.

    Raises
    ------
    AssertionError
        If the channel produces off-diagonal terms or the result is not the
        expected swap-with-probability-1/2 kernel.
    """
    kernel = {}
    for i, name in enumerate(PAIR_STATES):
        out = _channel(_outer(i, i))
        for a in range(4):
            for b in range(4):
                if a != b and out[a][b] != 0:
                    raise AssertionError(
                        f"channel maps |{name}><{name}| to a non-diagonal operator")
        kernel[name] = {PAIR_STATES[a]: out[a][a] for a in range(4) if out[a][a] != 0}
    expected = {
        "uu": {"uu": Fraction(1)},
        "ud": {"ud": _H, "du": _H},
        "du": {"ud": _H, "du": _H},
        "dd": {"dd": Fraction(1)},
    }
    if kernel != expected:
        raise AssertionError(f"derived kernel {kernel} differs from the swap kernel")
    return kernel


def kernel_matrix() -> np.ndarray:
    """Column-stochastic 4x4 float matrix ``K[to, from]`` of the kernel."""
    kern = classical_kernel()
    K = np.zeros((4, 4))
    for j, src in enumerate(PAIR_STATES):
        for dst, prob in kern[src].items():
            K[PAIR_STATES.index(dst), j] = float(prob)
    return K


# --- full Hilbert space (oracle scale) -----------------------------------
#
# A state of n spins is a vector of length 2**n; bit (n - 1 - s) of the index
# is spin s with 0 meaning up, so site 0 is the most significant tensor
# factor.  Density matrices are reshaped to rank-2n tensors for bond updates.


def _singlet_op(rho: np.ndarray, s: int, t: int, n: int, side: str) -> np.ndarray:
    """Apply ``P0`` on sites ``(s, t)`` from the left (``side='l'``) or right."""
    shape = (2,) * (2 * n)
    T = rho.reshape(shape)
    off = 0 if side == "l" else n
    a, b = s + off, t + off
    # P0 = |S><S| with |S> = (|ud> - |du>)/sqrt 2 acts only on the ud/du block.
    idx_ud = [slice(None)] * (2 * n)
    idx_du = [slice(None)] * (2 * n)
    idx_ud[a], idx_ud[b] = 0, 1
    idx_du[a], idx_du[b] = 1, 0
    ud = T[tuple(idx_ud)]
    du = T[tuple(idx_du)]
    anti = 0.5 * (ud - du)
    out = np.zeros_like(T)
    out[tuple(idx_ud)] = anti
    out[tuple(idx_du)] = -anti
    return out.reshape(rho.shape)


def apply_pair_channel(rho: np.ndarray, s: int, t: int, n: int) -> np.ndarray:
    """``P1 rho P1 + P0 rho P0`` on the bond ``(s, t)`` of an ``n``-spin state.

    Uses ``P1 = 1 - P0`` so that the result is
    ``rho - P0 rho - rho P0 + 2 P0 rho P0``.
    """
    p0r = _singlet_op(rho, s, t, n, "l")
    rp0 = _singlet_op(rho, s, t, n, "r")
    p0rp0 = _singlet_op(p0r, s, t, n, "r")
    return rho - p0r - rp0 + 2.0 * p0rp0


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise ConfigurationError(f"{n} sites exceed the oracle cap of {cap}")


class LindbladGenerator:
    """``L(rho) = gamma * sum_b (sum_o P_o rho P_o - rho)`` on a small lattice.

    The generator is applied matrix-free; :meth:`matrix` assembles the dense
    superoperator (row-major vectorisation of ``rho``) when its dimension is
    at most ``max_dense``.
    """

    def __init__(self, lat: Lattice, gamma: float, cap: int = ORACLE_MAX_SITES,
                 max_dense: int = 4096):
        _check_cap(lat.n_sites, cap)
        self.lattice = lat
        self.gamma = float(gamma)
        self.n = lat.n_sites
        self.dim = 2 ** self.n
        self.max_dense = max_dense

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = np.zeros_like(rho)
        if self.gamma == 0.0:
            return out
        for s, t in self.lattice.bonds:
            out += apply_pair_channel(rho, int(s), int(t), self.n) - rho
        return self.gamma * out

    def matrix(self) -> np.ndarray:
        D = self.dim * self.dim
        if D > self.max_dense:
            raise ConfigurationError(
                f"dense generator of dimension {D} exceeds {self.max_dense}")
        G = np.zeros((D, D))
        for col in range(D):
            e = np.zeros(D)
            e[col] = 1.0
            G[:, col] = self(e.reshape(self.dim, self.dim)).ravel()
        return G


def lindblad_generator(lat: Lattice, gamma: float, cap: int = ORACLE_MAX_SITES) -> LindbladGenerator:
    return LindbladGenerator(lat, gamma, cap=cap)
