"""Multi-step analyses built from the fitters in :mod:`spindissim.analysis`.

* relaxation rates of momentum shells and the diffusive power law;
* the staggered magnetisation density from finite-size fits, per time;
* the exponential decay of that density.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .analysis import (FitError, FitResult, TimeSeries, fit_exponential, fit_finite_size,
                       fit_order_parameter_decay, fit_powerlaw)
from .lattice import MomentumGrid

__all__ = ["ShellRates", "shell_columns", "relaxation_rates", "OrderParameterSeries",
           "order_parameter_series", "order_parameter_decay"]


@dataclass
class ShellRates:
    """Relaxation fits per momentum shell and the power law through them."""

    norms: np.ndarray
    rates: np.ndarray
    errors: np.ndarray
    fits: list
    powerlaw: FitResult


def shell_columns(grid: MomentumGrid, n_shells: int) -> tuple[list, list]:
    """Momenta of the ``n_shells`` smallest nonzero shells and their column groups.

    Returns ``(momenta, groups)`` where ``momenta`` is the flat list of
    ``[k1, k2]`` pairs and ``groups[i]`` the positions of shell ``i`` in it.
    """
    momenta, groups = [], []
    for shell in grid.smallest_shells(n_shells):
        start = len(momenta)
        momenta += [grid.k[i].tolist() for i in shell]
        groups.append(list(range(start, len(momenta))))
    return momenta, groups


def relaxation_rates(times, sq_replicas, groups, norms, n_bins: int = 20,
                     window: tuple | None = None) -> ShellRates:
    """Fit ``A + B exp(-t/tau)`` per shell and ``1/tau = C |p|**r``.

    ``sq_replicas`` has shape (R, T, n_momenta); equivalent momenta of a shell
    are averaged replica by replica before the jackknife.
    """
    sq = np.asarray(sq_replicas, float)
    rates, errs, fits = [], [], []
    for g in groups:
        y = sq[:, :, g].mean(axis=2)
        ts = TimeSeries.from_replicas("shell", times, y, min(n_bins, len(y)))
        f = fit_exponential(ts.times, ts.mean, ts.err, window)
        tau, dtau = f.params["tau"], f.errors["tau"]
        fits.append(f)
        rates.append(1.0 / tau)
        errs.append(dtau / tau ** 2)
    norms = np.asarray(norms, float)
    rates, errs = np.array(rates), np.array(errs)
    return ShellRates(norms, rates, errs, fits, fit_powerlaw(norms, rates, errs))


@dataclass
class OrderParameterSeries:
    """``Ms(t)`` and ``xi(t)`` from per-time finite-size fits (S3 units)."""

    times: np.ndarray
    Ms: np.ndarray
    err: np.ndarray
    xi: np.ndarray
    chi2_dof: np.ndarray
    ok: np.ndarray  # fit converged inside the validity window
    fits: list


def order_parameter_series(series_by_L: dict, scale_errors: bool = False) -> OrderParameterSeries:
    """Finite-size fit of ``<M_s**2>`` over volumes at every common time.

    With ``scale_errors`` the error of ``Ms`` is multiplied by
    ``sqrt(chi2/dof)`` whenever that exceeds one.
    """
    Ls = sorted(series_by_L)
    times = np.asarray(series_by_L[Ls[0]].times, float)
    for L in Ls[1:]:
        if not np.allclose(series_by_L[L].times, times):
            raise ValueError("series must share a time grid")
    out = {k: [] for k in ("Ms", "err", "xi", "chi2", "ok")}
    fits = []
    for i in range(len(times)):
        y = [series_by_L[L].mean[i] for L in Ls]
        e = [series_by_L[L].err[i] for L in Ls]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            f = fit_finite_size(Ls, y, e)
        err = f.errors["Ms"]
        if scale_errors and f.chi2_dof > 1:
            err *= math.sqrt(f.chi2_dof)
        fits.append(f)
        out["Ms"].append(f.params["Ms"])
        out["err"].append(err)
        out["xi"].append(f.params["xi"])
        out["chi2"].append(f.chi2_dof)
        out["ok"].append(f.converged and not any("extrapolation" in fl for fl in f.flags)
                         and np.isfinite(err) and err > 0)
    return OrderParameterSeries(times, np.array(out["Ms"]), np.array(out["err"]),
                                np.array(out["xi"]), np.array(out["chi2"]),
                                np.array(out["ok"], bool), fits)


def order_parameter_decay(ops: OrderParameterSeries, fraction: float = 0.1,
                          through_start: bool = True) -> FitResult:
    """Exponential fit of ``Ms(t)`` over the window where ``Ms > fraction * Ms(0)``.

    Times whose finite-size fit failed are left out.  The window ends at the
    first time ``Ms`` drops below the threshold.
    """
    if not ops.ok[0]:
        raise FitError("finite-size fit at the first time failed")
    above = (ops.Ms > fraction * ops.Ms[0]) | ~ops.ok
    end = len(above) if above.all() else int(np.argmin(above))
    sel = np.zeros(len(above), bool)
    sel[:end] = True
    sel &= ops.ok
    if sel.sum() < 3:
        raise FitError("fewer than three usable times in the decay window")
    return fit_order_parameter_decay(ops.times[sel], ops.Ms[sel], ops.err[sel],
                                     through_start=through_start)
