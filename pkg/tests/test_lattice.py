import numpy as np
import pytest
from hypothesis import given, strategies as st

from spindissim.lattice import (ConfigurationError, build_lattice, build_momentum_grid,
                                build_rect_lattice, build_schedule, staggered_sign)


@pytest.mark.parametrize("L,sites,bonds", [(2, 4, 8), (4, 16, 32), (16, 256, 512)])
def test_counts(L, sites, bonds):
    lat = build_lattice(L)
    assert lat.n_sites == sites
    assert lat.n_bonds == bonds


def test_l2_has_doubled_bonds():
    lat = build_lattice(2)
    pairs = [tuple(sorted(b)) for b in lat.bonds.tolist()]
    assert len(set(pairs)) == 4
    assert all(pairs.count(p) == 2 for p in set(pairs))


@pytest.mark.parametrize("L", [1, 3, 0, -2])
def test_rejects_bad_sizes(L):
    with pytest.raises(ConfigurationError):
        build_lattice(L)


def test_odd_periodic_extent_rejected():
    with pytest.raises(ConfigurationError):
        build_rect_lattice(3, 2)


def test_chain_lattice():
    lat = build_rect_lattice(4, 1)
    assert lat.n_sites == 4 and lat.n_bonds == 4
    assert sorted(map(tuple, np.sort(lat.bonds, axis=1).tolist())) == [(0, 1), (0, 3), (1, 2), (2, 3)]


@pytest.mark.parametrize("L", [2, 4, 6, 8])
def test_schedule_partitions_bonds_into_matchings(L):
    lat = build_lattice(L)
    sch = build_schedule(lat)
    assert len(sch.pairs) == 4
    all_pairs = np.concatenate(sch.pairs)
    assert len(all_pairs) == lat.n_bonds == sch.measurements_per_round
    key = lambda a: sorted(map(tuple, np.sort(a, axis=1).tolist()))
    assert key(all_pairs) == key(lat.bonds)
    for pairs in sch.pairs:
        flat = pairs.ravel()
        assert len(np.unique(flat)) == len(flat)


def test_staggered_signs():
    lat = build_lattice(4)
    assert staggered_sign(lat, (0, 0)) == 1
    assert staggered_sign(lat, (1, 0)) == -1
    assert staggered_sign(lat, (1, 1)) == 1
    assert lat.signs.sum() == 0
    for a, b in lat.bonds:
        assert lat.signs[a] == -lat.signs[b]


def test_site_order_row_major():
    lat = build_lattice(4)
    assert lat.site(1, 0) == 1
    assert lat.site(0, 1) == 4
    assert tuple(lat.coords[5]) == (1, 1)


@given(st.sampled_from([2, 4, 6, 8]), st.integers(0, 63), st.integers(0, 63))
def test_momentum_inversion_symmetry(L, k1, k2):
    grid = build_momentum_grid(build_lattice(L))
    i = grid.index(k1, k2)
    j = grid.index(-k1, -k2)
    assert np.isclose(grid.norm[i], grid.norm[j])
    ph = grid.phases([i, j])
    assert np.allclose(ph[:, 0], np.conj(ph[:, 1]))


def test_smallest_shells_l16():
    grid = build_momentum_grid(build_lattice(16))
    shells = grid.smallest_shells(4)
    norms = [grid.norm[s[0]] for s in shells]
    assert np.allclose(norms, [np.pi / 8, np.sqrt(2) * np.pi / 8, np.pi / 4, np.sqrt(5) * np.pi / 8])
    assert [len(s) for s in shells] == [4, 4, 4, 8]
