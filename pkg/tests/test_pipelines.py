import numpy as np
import pytest

from spindissim.analysis import FitError, TimeSeries, finite_size_model
from spindissim.lattice import build_lattice, build_momentum_grid
from spindissim.pipelines import (order_parameter_decay, order_parameter_series,
                                  relaxation_rates, shell_columns)


def test_shell_columns():
    grid = build_momentum_grid(build_lattice(8))
    momenta, groups = shell_columns(grid, 3)
    assert [len(g) for g in groups] == [4, 4, 4]
    assert groups[1] == [4, 5, 6, 7]
    assert [1, 0] in momenta and [0, 1] in momenta


def test_relaxation_rates_recover_power_law():
    t = np.linspace(0, 30, 61)
    norms = np.array([0.4, 0.55, 0.8, 0.9])
    rng = np.random.default_rng(0)
    cols = []
    for p in norms:
        tau = 1 / (1.26 * p ** 1.9)
        cols.append(250 - 230 * np.exp(-t / tau))
    base = np.stack(cols, axis=-1)  # (T, n)
    reps = base[None] + rng.normal(scale=1.0, size=(400, len(t), len(norms)))
    res = relaxation_rates(t, reps, [[i] for i in range(len(norms))], norms)
    assert abs(res.powerlaw.params["r"] - 1.9) < 0.1
    assert abs(res.powerlaw.params["C"] - 1.26) < 0.1


def synthetic_series(Ls, t, ms, xi, rel=1e-3):
    return {L: TimeSeries("Ms2", t, finite_size_model(L, ms, xi), rel * finite_size_model(L, ms, xi), 1)
            for L in Ls}


def test_order_parameter_pipeline_exact():
    t = np.linspace(0, 1, 11)
    ms = 0.3 * np.exp(-t / 0.4)
    series = synthetic_series([8, 12, 16], t, ms, 1.0)
    ops = order_parameter_series(series)
    assert np.allclose(ops.Ms, ms, rtol=1e-6)
    assert np.allclose(ops.xi, 1.0, atol=1e-5)
    assert ops.ok.all()
    f = order_parameter_decay(ops)
    assert abs(f.params["tau"] - 0.4) < 1e-5


def test_order_parameter_window_stops_below_threshold():
    t = np.linspace(0, 2, 21)
    ms = 0.3 * np.exp(-t / 0.3)
    ops = order_parameter_series(synthetic_series([8, 12, 16], t, ms, 1.0))
    f = order_parameter_decay(ops, fraction=0.1)
    assert f.window[1] < 0.3 * np.log(10)


def test_order_parameter_needs_common_grid():
    a = TimeSeries("a", [0, 1], [1, 1], [0.1, 0.1], 1)
    b = TimeSeries("b", [0, 2], [1, 1], [0.1, 0.1], 1)
    with pytest.raises(ValueError):
        order_parameter_series({8: a, 12: b})


def test_order_parameter_decay_requires_points():
    t = np.array([0.0, 1.0])
    ops = order_parameter_series(synthetic_series([8, 12, 16], t, 0.3 * np.exp(-t), 1.0))
    with pytest.raises(FitError):
        order_parameter_decay(ops)
