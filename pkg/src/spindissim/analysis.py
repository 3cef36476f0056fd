"""Observables, error analysis and fits.

Conventions
-----------
``"sigma"``: spins are +-1.  ``"S3"``: spins are +-1/2.  Fourier modes default
to ``sigma`` (the steady state of a zero-magnetisation sector is then
``L**4 / (L**2 - 1)``), staggered moments and the finite-size formula default
to ``S3``.  Converting ``M_s**2`` from S3 to sigma multiplies by 4, ``M_s**4``
by 16.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import least_squares

__all__ = [
    "CONVENTIONS",
    "FINITE_SIZE_COEFFS",
    "MS0_REFERENCE",
    "FitError",
    "TimeSeries",
    "FitResult",
    "jackknife",
    "staggered_moments",
    "fourier_modes",
    "binder_ratio",
    "fit_exponential",
    "fit_powerlaw",
    "finite_size_model",
    "fit_finite_size",
    "fit_order_parameter_decay",
    "steady_state_prediction",
]

CONVENTIONS = {"sigma": 1.0, "S3": 0.5}

# c_0..c_3 of the finite-size expansion, held fixed in every fit.
FINITE_SIZE_COEFFS = (1.0, 5.7503, 16.31, -84.8)
# Infinite-volume staggered magnetisation density at T = 0 (S3 units, a = 1).
MS0_REFERENCE = 0.30743


class FitError(RuntimeError):
    """A fit could not be carried out or did not converge."""


# --- error analysis ---------------------------------------------------------

def jackknife(values, n_bins: int = 20, estimator: Callable | None = None):
    """Binned jackknife ``(estimate, error)``.

    Parameters
    ----------
    values : array_like, shape (n,) or (n, k, ...)
        Samples along axis 0 (replicas or Monte Carlo measurements).
    n_bins : int
        Number of jackknife bins; trailing samples that do not fill a bin
        are dropped.
    estimator : callable, optional
        Function of the sample means (over axis 0).  Defaults to the mean
        itself.
    """
    x = np.asarray(values, dtype=float)
    n = x.shape[0]
    if n < n_bins:
        raise ValueError(f"{n} samples are fewer than {n_bins} bins")
    size = n // n_bins
    x = x[: size * n_bins]
    bins = x.reshape((n_bins, size) + x.shape[1:]).mean(axis=1)
    total = bins.sum(axis=0)
    est = estimator if estimator is not None else (lambda m: m)
    full = np.asarray(est(total / n_bins))
    loo = np.stack([np.asarray(est((total - bins[i]) / (n_bins - 1))) for i in range(n_bins)])
    mean_loo = loo.mean(axis=0)
    err = np.sqrt((n_bins - 1) / n_bins * np.sum((loo - mean_loo) ** 2, axis=0))
    bias_corrected = n_bins * full - (n_bins - 1) * mean_loo
    if estimator is None:
        return full, err
    return bias_corrected, err


# --- observables -----------------------------------------------------------

def _scale(convention: str) -> float:
    try:
        return CONVENTIONS[convention]
    except KeyError:
        raise ValueError(f"unknown convention {convention!r}") from None


def staggered_moments(config, signs, convention: str = "S3"):
    """``(M_s, M_s**2, M_s**4)`` of sigma configurations.

    ``config`` has shape (..., n_sites) with entries +-1; ``signs`` are the
    staggered signs of the lattice.
    """
    ms = _scale(convention) * (np.asarray(config, dtype=np.int64) @ np.asarray(signs))
    ms = ms.astype(float)
    return ms, ms ** 2, ms ** 4


def fourier_modes(config, grid, indices=None, convention: str = "sigma") -> np.ndarray:
    """``|S(p)|**2`` for the selected momenta, shape (..., n_selected)."""
    amp = _scale(convention) * (np.asarray(config, dtype=float) @ grid.phases(indices))
    return amp.real ** 2 + amp.imag ** 2


# --- time series --------------------------------------------------------------

@dataclass
class TimeSeries:
    """Mean and standard error of one observable against time."""

    name: str
    times: np.ndarray
    mean: np.ndarray
    err: np.ndarray
    n: np.ndarray
    convention: str = "sigma"
    time_unit: str = "rounds"

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        self.err = np.asarray(self.err, dtype=float)
        self.n = np.broadcast_to(np.asarray(self.n, dtype=np.int64), self.times.shape).copy()
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.err < 0):
            raise ValueError("errors must be non-negative")

    def __len__(self):
        return len(self.times)

    @classmethod
    def from_replicas(cls, name, times, values, n_bins: int = 20, **kw) -> "TimeSeries":
        """Aggregate per-replica values of shape (R, T)."""
        values = np.asarray(values, dtype=float)
        R = values.shape[0]
        if R >= n_bins:
            _, err = jackknife(values, n_bins)
            mean = values.mean(axis=0)
        elif R > 1:
            mean = values.mean(axis=0)
            err = values.std(axis=0, ddof=1) / math.sqrt(R)
        else:
            mean, err = values[0], np.zeros(values.shape[1])
        return cls(name, times, mean, err, np.full(len(times), R), **kw)

    def window(self, t_min=None, t_max=None) -> "TimeSeries":
        sel = np.ones(len(self), bool)
        if t_min is not None:
            sel &= self.times >= t_min
        if t_max is not None:
            sel &= self.times <= t_max
        return TimeSeries(self.name, self.times[sel], self.mean[sel], self.err[sel],
                          self.n[sel], self.convention, self.time_unit)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("time,mean,err,n\n")
        for t, m, e, k in zip(self.times, self.mean, self.err, self.n):
            buf.write(f"{t:.17g},{m:.17g},{e:.17g},{int(k)}\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path, name: str | None = None, **kw) -> "TimeSeries":
        """Parse a ``time,mean,err,n`` file.

        Raises
        ------
        ValueError
            With the offending line number on any schema violation.
        """
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: line 1: empty file")
        if [c.strip() for c in rows[0]] != ["time", "mean", "err", "n"]:
            raise ValueError(f"{path}: line 1: header must be time,mean,err,n")
        t, m, e, n = [], [], [], []
        for lineno, row in enumerate(rows[1:], start=2):
            if len(row) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                t.append(float(row[0]))
                m.append(float(row[1]))
                e.append(float(row[2]))
                n.append(int(row[3]))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: unparsable value") from None
            if e[-1] < 0:
                raise ValueError(f"{path}: line {lineno}: negative error")
        if not t:
            raise ValueError(f"{path}: no data rows")
        return cls(name or str(path), t, m, e, n, **kw)


def binder_ratio(ms2, ms4, times=None, n_bins: int = 20, time_unit: str = "rounds") -> TimeSeries:
    """``<M_s**4> / <M_s**2>**2`` with jackknife errors over replicas.

    ``ms2`` and ``ms4`` are per-replica arrays of shape (R, T).  Time points
    with a vanishing denominator are reported as NaN, never filled in.
    """
    ms2 = np.atleast_2d(np.asarray(ms2, dtype=float))
    ms4 = np.atleast_2d(np.asarray(ms4, dtype=float))
    if ms2.shape != ms4.shape:
        raise ValueError("M_s**2 and M_s**4 series are not aligned")
    T = ms2.shape[1]
    stacked = np.stack([ms2, ms4], axis=-1)

    def ratio(m):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(m[..., 0] > 0, m[..., 1] / m[..., 0] ** 2, np.nan)

    R = ms2.shape[0]
    bins = min(n_bins, R)
    if bins >= 2:
        _, err = jackknife(stacked, bins, ratio)
    else:
        err = np.zeros(T)
    val = ratio(stacked.mean(axis=0))
    err = np.where(np.isfinite(val), err, np.nan)
    times = np.arange(T, dtype=float) if times is None else times
    return TimeSeries("binder", times, val, err, R, convention="ratio", time_unit=time_unit)


# --- fits --------------------------------------------------------------------

@dataclass
class FitResult:
    model: str
    params: dict
    errors: dict
    chi2_dof: float
    window: list
    convention: str = ""
    dof: int = 0
    converged: bool = True
    flags: list = field(default_factory=list)
    covariance: list = field(default_factory=list, repr=False)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True, default=float)


def _covariance(jac: np.ndarray) -> np.ndarray:
    JTJ = jac.T @ jac
    try:
        return np.linalg.inv(JTJ)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(JTJ)


def _errors_from_cov(cov: np.ndarray) -> np.ndarray:
    d = np.diag(cov)
    return np.sqrt(np.where(d >= 0, d, np.inf))


def _check_errors(err) -> np.ndarray:
    err = np.asarray(err, dtype=float)
    if np.any(~(err > 0)):
        raise FitError("all error bars must be positive")
    return err


def _exp_model(t, A, B, tau):
    return A + B * np.exp(-t / tau)


def fit_exponential(t, y, err, window: tuple | None = None, max_nfev: int = 2000) -> FitResult:
    """Weighted fit of ``A + B exp(-t / tau)``.

    Initial values: ``A`` from the mean of the last three points, ``B`` from
    the first residual and ``tau`` from a log-linear regression of the
    residuals that keep the sign of ``B``.
    """
    t, y = np.asarray(t, float), np.asarray(y, float)
    err = _check_errors(err)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y, err = t[sel], y[sel], err[sel]
    win = [float(t.min()), float(t.max())] if len(t) else []
    if len(t) < 6:
        raise FitError(f"exponential fit needs at least 6 points, got {len(t)}")
    A0 = float(np.mean(y[-3:]))
    B0 = float(y[0] - A0)
    flags = []
    tau0 = (t[-1] - t[0]) / 3 or 1.0
    if B0 != 0:
        r = (y - A0) / B0
        ok = r > 0.05
        if ok.sum() >= 2:
            slope = np.polyfit(t[ok], np.log(r[ok]), 1)[0]
            if slope < 0:
                tau0 = -1.0 / slope
    x0 = np.array([A0, B0, tau0])
    scale = max(np.max(np.abs(y)), 1e-300)

    def resid(q):
        return (_exp_model(t, q[0], q[1], q[2]) - y) / err

    tmin = 1e-6 * max(t[-1] - t[0], 1e-12)
    res = least_squares(resid, x0, bounds=([-np.inf, -np.inf, tmin], [np.inf, np.inf, np.inf]),
                        method="trf", x_scale=[scale, scale, tau0], xtol=1e-15, ftol=1e-15,
                        gtol=1e-15, max_nfev=max_nfev)
    dof = len(t) - 3
    cov = _covariance(res.jac)
    perr = _errors_from_cov(cov)
    chi2 = float(2 * res.cost)
    converged = bool(res.status > 0)
    if not converged:
        flags.append(f"not_converged: {res.message}")
    A, B, tau = (float(v) for v in res.x)
    if not np.isfinite(perr[1]) or abs(B) < 2 * perr[1] or not np.isfinite(perr[2]) \
            or perr[2] > abs(tau):
        flags.append("tau_unidentified")
    return FitResult("exp_approach", {"A": A, "B": B, "tau": tau},
                     {"A": float(perr[0]), "B": float(perr[1]), "tau": float(perr[2])},
                     chi2 / dof if dof > 0 else 0.0, win, dof=dof, converged=converged,
                     flags=flags, covariance=cov.tolist())


def _weighted_line(x, y, sig, through_origin=False):
    w = 1.0 / sig ** 2
    if through_origin:
        S = np.sum(w * x * x)
        b = np.sum(w * x * y) / S
        cov = np.array([[1.0 / S]])
        chi2 = float(np.sum(w * (y - b * x) ** 2))
        return np.array([b]), cov, chi2
    X = np.stack([np.ones_like(x), x], axis=1)
    A = X.T @ (w[:, None] * X)
    cov = np.linalg.inv(A)
    beta = cov @ (X.T @ (w * y))
    chi2 = float(np.sum(w * (y - X @ beta) ** 2))
    return beta, cov, chi2


def fit_powerlaw(p, rate, err) -> FitResult:
    """Weighted fit of ``log rate = log C + r log |p|``."""
    p, rate, err = (np.asarray(v, float) for v in (p, rate, err))
    flags = []
    keep = (rate > 0) & (p > 0)
    if not np.all(keep):
        flags.append(f"excluded_nonpositive: {np.flatnonzero(~keep).tolist()}")
    p, rate, err = p[keep], rate[keep], _check_errors(err[keep])
    if len(p) < 2 or len(np.unique(p)) < 2:
        raise FitError("power-law fit needs at least two distinct momenta")
    x, y, sig = np.log(p), np.log(rate), err / rate
    beta, cov, chi2 = _weighted_line(x, y, sig)
    dof = len(p) - 2
    if dof == 0:
        flags.append("zero_dof")
    C = float(np.exp(beta[0]))
    cerr = C * math.sqrt(cov[0, 0])
    return FitResult("powerlaw", {"C": C, "r": float(beta[1])},
                     {"C": cerr, "r": float(math.sqrt(cov[1, 1]))},
                     chi2 / dof if dof > 0 else 0.0, [float(p.min()), float(p.max())],
                     dof=dof, flags=flags, covariance=cov.tolist())


def finite_size_model(L, Ms, xi, coeffs=FINITE_SIZE_COEFFS):
    """``<M_s**2> = Ms**2 L**4 / 3 * sum_n c_n (xi / L)**n`` (S3 units)."""
    L = np.asarray(L, float)
    x = xi / L
    series = sum(c * x ** k for k, c in enumerate(coeffs))
    return Ms ** 2 * L ** 4 / 3.0 * series


def fit_finite_size(L, y, err, coeffs=FINITE_SIZE_COEFFS, xi_max: float | None = None) -> FitResult:
    """Fit ``(Ms, xi)`` of :func:`finite_size_model` with fixed coefficients.

    For fixed ``xi`` the model is linear in ``Ms**2``; a scan over ``xi``
    provides the start value of a joint weighted least-squares refinement.
    ``xi`` is flagged as an extrapolation when ``|c_3| (xi/L)**3 >= c_0``
    for some volume.
    """
    L, y = np.asarray(L, float), np.asarray(y, float)
    err = _check_errors(err)
    if len(np.unique(L)) < 2:
        raise FitError("finite-size fit needs at least two distinct volumes")
    c = np.asarray(coeffs, float)
    Lmin = L.min()
    xi_hi = xi_max if xi_max is not None else 2.0 * Lmin
    w = 1.0 / err ** 2

    def profile(xi):
        f = finite_size_model(L, 1.0, xi, c)
        a = np.sum(w * f * y) / np.sum(w * f * f)
        return np.sum(w * (a * f - y) ** 2), a

    grid = np.linspace(0.0, xi_hi, 4001)
    chis = np.array([profile(g)[0] for g in grid])
    xi0 = float(grid[np.argmin(chis)])
    a0 = profile(xi0)[1]
    Ms0 = math.sqrt(max(a0, 1e-300))

    def resid(q):
        return (finite_size_model(L, q[0], q[1], c) - y) / err

    res = least_squares(resid, [Ms0, xi0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=5000)
    Ms, xi = abs(float(res.x[0])), float(res.x[1])
    cov = _covariance(res.jac)
    perr = _errors_from_cov(cov)
    dof = len(L) - 2
    flags = []
    if dof == 0:
        flags.append("zero_dof")
    if np.any(abs(c[3]) * (xi / L) ** 3 >= c[0]) or xi < -1e-9 * Lmin:
        flags.append("extrapolation: xi/L outside validity window")
        warnings.warn(f"finite-size fit xi={xi:.4g} outside the validity window", stacklevel=2)
    return FitResult("finite_size", {"Ms": Ms, "xi": xi},
                     {"Ms": float(perr[0]), "xi": float(perr[1])},
                     float(2 * res.cost) / dof if dof > 0 else 0.0,
                     [float(L.min()), float(L.max())], convention="S3", dof=dof,
                     converged=bool(res.status > 0), flags=flags, covariance=cov.tolist())


def fit_order_parameter_decay(t, Ms, err, window: tuple | None = None,
                              through_start: bool = True) -> FitResult:
    """Log-linear weighted fit of ``Ms(t) = Ms(t0) exp(-(t - t0) / tau)``.

    With ``through_start`` the line is pinned to the first point of the
    window; otherwise the amplitude is a free parameter.
    """
    t, Ms = np.asarray(t, float), np.asarray(Ms, float)
    err = _check_errors(err)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, Ms, err = t[sel], Ms[sel], err[sel]
    if np.any(Ms <= 0):
        raise FitError("order parameter must be positive on the fit window")
    flags = []
    if np.any(np.diff(Ms) > 0):
        flags.append("non_monotone")
    y = np.log(Ms)
    sig = err / Ms
    if through_start:
        x = t[1:] - t[0]
        yy = y[1:] - y[0]
        s = np.sqrt(sig[1:] ** 2 + sig[0] ** 2)
        beta, cov, chi2 = _weighted_line(x, yy, s, through_origin=True)
        slope, sl_err = float(beta[0]), float(math.sqrt(cov[0, 0]))
        amp, amp_err = float(Ms[0]), float(err[0])
        dof = len(x) - 1
    else:
        beta, cov, chi2 = _weighted_line(t, y, sig)
        slope, sl_err = float(beta[1]), float(math.sqrt(cov[1, 1]))
        amp = float(np.exp(beta[0]))
        amp_err = amp * float(math.sqrt(cov[0, 0]))
        dof = len(t) - 2
    if slope >= 0 or abs(slope) < 2 * sl_err:
        flags.append("tau_infinite")
    tau = -1.0 / slope if slope < 0 else math.inf
    tau_err = sl_err / slope ** 2 if slope != 0 else math.inf
    return FitResult("order_decay", {"tau": tau, "Ms0": amp}, {"tau": tau_err, "Ms0": amp_err},
                     chi2 / dof if dof > 0 else 0.0, [float(t.min()), float(t.max())],
                     convention="S3", dof=dof, flags=flags)


def steady_state_prediction(L: int, p=(math.pi, math.pi), sectors=None) -> float:
    """Stationary ``<|S(p)|**2>`` (sigma units) for ``p != 0``.

    Within a sector of total magnetisation ``m`` on ``N = L**2`` sites the
    stationary state is uniform, so ``<s_x s_y> = (m**2 - N) / (N (N - 1))``
    for ``x != y``; summing over the Fourier phases gives
    ``(N**2 - m**2) / (N - 1)`` for every nonzero momentum.

    Parameters
    ----------
    sectors : dict, optional
        ``{m: weight}``; defaults to the zero sector.
    """
    wrapped = [abs(math.remainder(float(v), 2 * math.pi)) for v in p]
    if max(wrapped) < 1e-12:
        raise ValueError("p = (0, 0) is conserved and has no stationary prediction")
    N = L * L
    sectors = {0: 1.0} if sectors is None else sectors
    wsum = sum(sectors.values())
    m2 = sum(w * m * m for m, w in sectors.items()) / wsum
    return (N * N - m2) / (N - 1)
