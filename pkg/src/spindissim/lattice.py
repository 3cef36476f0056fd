"""Periodic square lattices, the four-step measurement schedule and momenta.

Sites are indexed row-major with the 1-coordinate running fastest::

    site = x2 * Lx + x1

Every site ``(x1, x2)`` owns the bond to ``(x1 + 1, x2)`` (orientation 1) and
the bond to ``(x1, x2 + 1)`` (orientation 2).  For ``L = 2`` the periodic wrap
connects the same pair of sites twice; both bonds are kept so that the number
of bonds per site (and hence every per-bond rate) is the same for all ``L``.

Rectangular and open lattices are only meant for the exact oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "ConfigurationError",
    "Lattice",
    "SweepSchedule",
    "MomentumGrid",
    "build_lattice",
    "build_rect_lattice",
    "build_schedule",
    "build_momentum_grid",
    "staggered_sign",
]


class ConfigurationError(ValueError):
    """Raised for invalid geometry or run parameters."""


@dataclass(frozen=True)
class Lattice:
    """Immutable lattice geometry.

    Attributes
    ----------
    Lx, Ly : int
        Extent in the 1- and 2-direction.
    periodic : bool
        Periodic wrap in both directions.
    bonds : ndarray, shape (n_bonds, 2)
        Site pairs ``(s, t)`` with ``t`` the +1 neighbour of ``s``.
    orientation : ndarray, shape (n_bonds,)
        1 for bonds along the 1-direction, 2 for the 2-direction.
    """

    Lx: int
    Ly: int
    periodic: bool
    bonds: np.ndarray = field(repr=False)
    orientation: np.ndarray = field(repr=False)

    @property
    def n_sites(self) -> int:
        return self.Lx * self.Ly

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    @property
    def L(self) -> int:
        if self.Lx != self.Ly:
            raise ConfigurationError(f"lattice {self.Lx}x{self.Ly} is not square")
        return self.Lx

    @cached_property
    def coords(self) -> np.ndarray:
        """Array of shape (n_sites, 2) holding ``(x1, x2)`` per site."""
        idx = np.arange(self.n_sites)
        return np.stack([idx % self.Lx, idx // self.Lx], axis=1)

    @cached_property
    def signs(self) -> np.ndarray:
        """Staggered sign ``(-1)**(x1 + x2)`` per site, as int64."""
        c = self.coords
        return 1 - 2 * ((c[:, 0] + c[:, 1]) % 2)

    def site(self, x1: int, x2: int) -> int:
        return (x2 % self.Ly) * self.Lx + (x1 % self.Lx)

    def describe(self) -> str:
        kind = "periodic" if self.periodic else "open"
        return f"{self.Lx}x{self.Ly} {kind}"


def build_rect_lattice(Lx: int, Ly: int, periodic: bool = True) -> Lattice:
    """Build an ``Lx`` x ``Ly`` lattice.

    A direction of extent 1 carries no bonds.  With periodic boundaries every
    other extent must be even so that the lattice stays bipartite and the
    checkerboard steps are matchings.
    """
    Lx, Ly = int(Lx), int(Ly)
    if Lx < 1 or Ly < 1:
        raise ConfigurationError(f"lattice extents must be positive, got {Lx}x{Ly}")
    if periodic:
        for ext in (Lx, Ly):
            if ext > 1 and ext % 2:
                raise ConfigurationError(
                    f"periodic extent {ext} is odd; the lattice would not be bipartite")
    bonds = []
    orient = []
    for x2 in range(Ly):
        for x1 in range(Lx):
            s = x2 * Lx + x1
            if Lx > 1 and (periodic or x1 + 1 < Lx):
                bonds.append((s, x2 * Lx + (x1 + 1) % Lx))
                orient.append(1)
            if Ly > 1 and (periodic or x2 + 1 < Ly):
                bonds.append((s, ((x2 + 1) % Ly) * Lx + x1))
                orient.append(2)
    return Lattice(
        Lx=Lx,
        Ly=Ly,
        periodic=periodic,
        bonds=np.array(bonds, dtype=np.intp).reshape(-1, 2),
        orientation=np.array(orient, dtype=np.int8),
    )


def build_lattice(L: int) -> Lattice:
    """Periodic ``L`` x ``L`` square lattice; ``L`` must be even and >= 2."""
    if not isinstance(L, (int, np.integer)) or L < 2 or L % 2:
        raise ConfigurationError(f"L must be an even integer >= 2, got {L!r}")
    return build_rect_lattice(int(L), int(L), periodic=True)


def staggered_sign(lat: Lattice, site: int | tuple[int, int]) -> int:
    """Return ``(-1)**(x1 + x2)`` for a site index or a coordinate pair."""
    if isinstance(site, tuple):
        x1, x2 = site
    else:
        if not 0 <= site < lat.n_sites:
            raise ConfigurationError(f"site {site} outside lattice {lat.describe()}")
        x1, x2 = site % lat.Lx, site // lat.Lx
    return 1 if (x1 + x2) % 2 == 0 else -1


@dataclass(frozen=True)
class SweepSchedule:
    """Four ordered bond groups; one measurement round applies them in order.

    ``steps[k]`` is an array of bond indices into ``lattice.bonds``, sorted by
    the pair of site indices.
    """

    lattice: Lattice = field(repr=False)
    steps: tuple[np.ndarray, ...]

    def step_pairs(self, k: int) -> np.ndarray:
        return self.lattice.bonds[self.steps[k]]

    @cached_property
    def pairs(self) -> tuple[np.ndarray, ...]:
        """Site pairs per step, each of shape (n_step_bonds, 2), intp."""
        return tuple(np.ascontiguousarray(self.lattice.bonds[s]) for s in self.steps)

    @property
    def measurements_per_round(self) -> int:
        return sum(len(s) for s in self.steps)


def build_schedule(lat: Lattice) -> SweepSchedule:
    """Split the bonds into the four checkerboard steps.

    Step 1: 1-direction bonds with even ``x1``; step 2: 2-direction bonds with
    even ``x2``; steps 3 and 4 the same with odd coordinates.
    """
    start = lat.coords[lat.bonds[:, 0]]
    steps = []
    for orient, axis, parity in ((1, 0, 0), (2, 1, 0), (1, 0, 1), (2, 1, 1)):
        sel = np.flatnonzero((lat.orientation == orient) & (start[:, axis] % 2 == parity))
        order = np.lexsort((lat.bonds[sel, 1], lat.bonds[sel, 0]))
        steps.append(sel[order].astype(np.intp))
    for k, sel in enumerate(steps):
        sites = lat.bonds[sel].ravel()
        if len(np.unique(sites)) != len(sites):
            raise ConfigurationError(f"schedule step {k + 1} is not a matching")
    return SweepSchedule(lattice=lat, steps=tuple(steps))


@dataclass(frozen=True)
class MomentumGrid:
    """All lattice momenta ``p_i = 2 pi k_i / L_i``.

    ``norm`` uses the torus-minimal image of each component in ``(-pi, pi]``.
    """

    lattice: Lattice = field(repr=False)
    k: np.ndarray  # (n_p, 2) integer wave numbers
    p: np.ndarray  # (n_p, 2) momenta in [0, 2 pi)

    @cached_property
    def minimal(self) -> np.ndarray:
        q = np.where(self.p > np.pi + 1e-12, self.p - 2 * np.pi, self.p)
        return q

    @cached_property
    def norm(self) -> np.ndarray:
        return np.hypot(self.minimal[:, 0], self.minimal[:, 1])

    def __len__(self) -> int:
        return len(self.k)

    def index(self, k1: int, k2: int) -> int:
        L1, L2 = self.lattice.Lx, self.lattice.Ly
        return (k2 % L2) * L1 + (k1 % L1)

    def phases(self, indices=None) -> np.ndarray:
        """``exp(i p . x)`` as an array of shape (n_sites, n_selected)."""
        p = self.p if indices is None else self.p[np.asarray(indices)]
        return np.exp(1j * (self.lattice.coords @ p.T))

    def smallest_shells(self, n_shells: int) -> list[np.ndarray]:
        """Groups of momentum indices sharing the same nonzero ``|p|``."""
        r = np.round(self.norm, 10)
        shells = [np.flatnonzero(r == v) for v in np.unique(r[r > 0])]
        return shells[:n_shells]


def build_momentum_grid(lat: Lattice) -> MomentumGrid:
    k1, k2 = np.meshgrid(np.arange(lat.Lx), np.arange(lat.Ly), indexing="xy")
    k = np.stack([k1.ravel(), k2.ravel()], axis=1)
    p = 2 * np.pi * k / np.array([lat.Lx, lat.Ly])
    return MomentumGrid(lattice=lat, k=k, p=p)
