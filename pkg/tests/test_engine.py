from itertools import combinations

import numpy as np
import pytest
from scipy.stats import chisquare

from spindissim import engine, kernels
from spindissim.lattice import ConfigurationError, build_lattice, build_schedule


def random_config(n, seed):
    return np.random.default_rng(seed).choice(np.array([-1, 1], np.int8), n)


@pytest.fixture
def lat4():
    return build_lattice(4)


def test_discrete_conserves_magnetisation_and_zero_mode(lat4):
    obs = engine.Observables(lat4, [[0, 0], [2, 2]])
    cfg = random_config(16, 0)
    traj = engine.evolve_discrete(cfg, build_schedule(lat4), 30, engine.replica_rng(0, 2, 0), obs)
    assert np.all(traj.series("mag") == cfg.sum())
    assert np.all(traj.series("Sq_0_0") == float(cfg.sum()) ** 2)
    assert traj.n_events == 30 * lat4.n_bonds
    assert np.array_equal(traj.times, np.arange(31.0))


def test_continuous_conserves_and_reports_gamma_t(lat4):
    obs = engine.Observables(lat4, [[0, 0]])
    cfg = random_config(16, 1)
    times = np.linspace(0, 4, 9)
    traj = engine.evolve_continuous(cfg, lat4, 2.0, times, engine.replica_rng(0, 2, 1), obs)
    assert np.allclose(traj.times, 2.0 * times)
    assert np.all(traj.series("mag") == cfg.sum())
    assert np.all(traj.series("Sq_0_0") == float(cfg.sum()) ** 2)


def test_event_count_is_poisson(lat4):
    obs = engine.Observables(lat4)
    gamma, t = 1.5, 3.0
    n = [engine.evolve_continuous(lat4.signs, lat4, gamma, [0.0, t],
                                  engine.replica_rng(5, 2, r), obs).n_events for r in range(400)]
    mean = 2 * 16 * gamma * t
    assert abs(np.mean(n) - mean) < 4 * np.sqrt(mean / 400)
    assert abs(np.var(n) / mean - 1) < 0.3


def test_record_every(lat4):
    obs = engine.Observables(lat4)
    traj = engine.evolve_discrete(lat4.signs, build_schedule(lat4), 10, engine.replica_rng(0, 2, 0),
                                  obs, record_every=4)
    assert traj.times.tolist() == [0, 4, 8, 10]


def test_invariant_violation_detected(lat4, monkeypatch):
    def broken(spins, pairs, offsets, n_rounds, rng):
        spins[0] = -spins[0]

    monkeypatch.setattr(kernels, "discrete_rounds", broken)
    with pytest.raises(engine.EngineInvariantError):
        engine.evolve_discrete(lat4.signs, build_schedule(lat4), 2, engine.replica_rng(0, 2, 0),
                               engine.Observables(lat4))


def test_continuous_rejects_bad_input(lat4):
    obs = engine.Observables(lat4)
    with pytest.raises(ConfigurationError):
        engine.evolve_continuous(lat4.signs, lat4, 0.0, [0.0, 1.0], engine.replica_rng(0, 2, 0), obs)
    with pytest.raises(ConfigurationError):
        engine.evolve_continuous(lat4.signs, lat4, 1.0, [1.0, 0.5], engine.replica_rng(0, 2, 0), obs)
    with pytest.raises(ConfigurationError):
        engine.evolve_discrete(np.ones(5), build_schedule(lat4), 1, engine.replica_rng(0, 2, 0), obs)


def test_steady_state_sample_uniform_on_sector():
    n = 4
    states = [tuple(1 if i in up else -1 for i in range(n)) for up in combinations(range(n), 2)]
    s = engine.steady_state_sample(n, 0, engine.replica_rng(0, 3, 0), 6000)
    assert np.all(s.sum(axis=1) == 0)
    counts = [int(np.sum(np.all(s == np.array(st), axis=1))) for st in states]
    assert sum(counts) == 6000
    assert chisquare(counts).pvalue > 1e-3


def test_steady_state_sample_rejects_infeasible():
    with pytest.raises(ConfigurationError):
        engine.steady_state_sample(4, 1, engine.replica_rng(0, 3, 0), 1)
    with pytest.raises(ConfigurationError):
        engine.steady_state_sample(4, 6, engine.replica_rng(0, 3, 0), 1)


def test_l2_long_time_matches_enumeration():
    lat = build_lattice(2)
    obs = engine.Observables(lat)
    start = np.array([1, -1, -1, 1], np.int8)  # Neel, sector 0
    vals = [engine.evolve_discrete(start, build_schedule(lat), 20, engine.replica_rng(1, 2, r),
                                   obs).series("Ms2")[-1] for r in range(3000)]
    # sector 0 on 2x2: 2 of 6 states have |M_s| = 2 (S3 units)
    exact = 4.0 / 3.0
    err = np.std(vals) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - exact) < 4 * err


def test_replica_rng_streams():
    a = engine.replica_rng(1, 2, 3).random(4)
    assert np.array_equal(a, engine.replica_rng(1, 2, 3).random(4))
    assert not np.array_equal(a, engine.replica_rng(1, 2, 4).random(4))
    assert not np.array_equal(a, engine.replica_rng(1, 1, 3).random(4))


def test_geometric_grid():
    g = engine.geometric_grid(10.0, 5, 0.1)
    assert g[0] == 0 and np.isclose(g[1], 0.1) and np.isclose(g[-1], 10.0)
    assert np.allclose(np.diff(np.log(g[1:])), np.log(100) / 3)
    assert engine.geometric_grid(0.0, 5).tolist() == [0.0]


def test_observables_staggered_identity(lat4):
    obs = engine.Observables(lat4, [[2, 2]], staggered=("Ms2",), ms_convention="sigma")
    c = np.stack([random_config(16, s) for s in range(20)])
    v = obs.evaluate(c)
    assert obs.names == ["mag", "Ms2", "Sq_2_2"]
    assert np.allclose(v[:, 1], v[:, 2])
    assert obs.convention("Sq_2_2") == "sigma"
    assert obs.convention("mag") == "sigma"
