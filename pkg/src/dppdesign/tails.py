"""Parametric models for the right tail of jittered objective values.

Two tail-focused fits: a generalized Pareto on the exceedances over a high
quantile threshold (the composite model keeps the empirical distribution
below the threshold), and a Weibull whose likelihood treats everything
below the threshold as left-censored at it.  Plain Weibull and Log-Normal
fits over the whole sample serve as comparators.  Objective values can be
negative; when a sample reaches zero or below, positive-support families
are fitted on data shifted by min(x) - 1e-6 and the shift is stored and
inverted on evaluation.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import (
    DegenerateSampleError,
    InsufficientTailDataError,
    NonConvergenceError,
)

_MIN_EXCEEDANCES = 30
_XI_EXP_BRANCH = 1e-6  # |xi| below this uses the exponential-limit formulas
_SHIFT_MARGIN = 1e-6
_NM_OPTIONS = {"xatol": 1e-9, "fatol": 1e-12, "maxfev": 10_000}
_PENALTY = 1e18


@dataclass(frozen=True)
class GpdFit:
    """Generalized Pareto over threshold mu: scale sigma, shape xi."""

    mu: float
    sigma: float
    xi: float
    n_exceed: int
    loglik: float
    threshold_quantile: float


@dataclass(frozen=True)
class CensWeibullFit:
    """Weibull fitted with everything below `threshold` left-censored.

    Parameters live on the shifted axis x - shift; threshold is stored in
    original units.
    """

    shape: float
    scale: float
    threshold: float
    n_noncensored: int
    n_censored: int
    loglik: float
    shift: float
    threshold_quantile: float


# ---------------------------------------------------------------------------
# Distribution primitives (vectorized over numpy arrays)


def _gpd_sf(z, xi):
    """Survival of the standardized GPD at z = (y - mu)/sigma >= 0."""
    z = np.asarray(z, dtype=np.float64)
    if abs(xi) < _XI_EXP_BRANCH:
        return np.exp(-z)
    w = 1.0 + xi * z
    out = np.where(w > 0.0, np.power(np.maximum(w, 1e-300), -1.0 / xi), 0.0)
    if xi < 0:
        out = np.where(w <= 0.0, 0.0, out)
    return out


def _gpd_pdf(z, xi):
    z = np.asarray(z, dtype=np.float64)
    if abs(xi) < _XI_EXP_BRANCH:
        return np.exp(-z)
    w = 1.0 + xi * z
    return np.where(w > 0.0, np.power(np.maximum(w, 1e-300), -1.0 / xi - 1.0), 0.0)


def _weibull_sf(x, shape, scale):
    x = np.asarray(x, dtype=np.float64)
    z = np.maximum(x, 0.0) / scale
    return np.exp(-np.power(z, shape))


def _weibull_pdf(x, shape, scale):
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    z = x[pos] / scale
    out[pos] = (shape / scale) * np.power(z, shape - 1.0) * np.exp(-np.power(z, shape))
    return out


class FittedCdf:
    """Evaluable fitted distribution: cdf, survival, pdf and quantile.

    family is one of gpd, cens_weibull, weibull, lognormal, exponential,
    empirical.  The gpd family is the composite peaks-over-threshold
    model: empirical below the threshold, 1 - p_tail + p_tail * H(r)
    above it, with p_tail the exceedance fraction.  Survival is computed
    directly (not as 1 - cdf) so tiny tail probabilities keep precision.
    """

    def __init__(self, family, params, shift=0.0, threshold=None,
                 loglik=None, n_used=0, sample=None):
        self.family = family
        self.params = dict(params)
        self.shift = float(shift)
        self.threshold = threshold
        self.loglik = loglik
        self.n_used = int(n_used)
        self._sorted = None
        self._hist = None
        if family in ("gpd", "empirical"):
            if sample is None:
                raise ValueError(f"{family} model needs the sample")
            self._sorted = np.sort(np.asarray(sample, dtype=np.float64))
            below = self._sorted
            if family == "gpd":
                below = self._sorted[self._sorted <= self.threshold]
            if below.size:
                dens, edges = np.histogram(below, bins="auto", density=True)
                self._hist = (dens, edges)

    # -- internal per-family pieces -----------------------------------

    def _ecdf(self, x):
        return np.searchsorted(self._sorted, x, side="right") / self._sorted.size

    def _hist_pdf(self, x):
        if self._hist is None:
            return np.zeros_like(np.asarray(x, dtype=np.float64))
        dens, edges = self._hist
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, dens.size - 1)
        inside = (x >= edges[0]) & (x <= edges[-1])
        return np.where(inside, dens[idx], 0.0)

    def survival(self, x):
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        p = self.params
        if self.family == "gpd":
            z = (x - p["mu"]) / p["sigma"]
            tail = p["p_tail"] * _gpd_sf(np.maximum(z, 0.0), p["xi"])
            out = np.where(x >= p["mu"], tail, 1.0 - self._ecdf(x))
        elif self.family in ("cens_weibull", "weibull"):
            out = _weibull_sf(x - self.shift, p["shape"], p["scale"])
        elif self.family == "lognormal":
            y = x - self.shift
            out = np.ones_like(y)
            pos = y > 0
            out[pos] = special.ndtr(-(np.log(y[pos]) - p["mu"]) / p["sigma"])
        elif self.family == "exponential":
            out = np.exp(-p["rate"] * np.maximum(x - p["loc"], 0.0))
        elif self.family == "empirical":
            out = 1.0 - self._ecdf(x)
        else:
            raise ValueError(f"unknown family {self.family!r}")
        return float(out[0]) if scalar else out

    def cdf(self, x):
        s = self.survival(x)
        return 1.0 - s

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        p = self.params
        if self.family == "gpd":
            z = (x - p["mu"]) / p["sigma"]
            tail = p["p_tail"] * _gpd_pdf(np.maximum(z, 0.0), p["xi"]) / p["sigma"]
            below = (1.0 - p["p_tail"]) * self._hist_pdf(x)
            out = np.where(x >= p["mu"], tail, below)
        elif self.family in ("cens_weibull", "weibull"):
            out = _weibull_pdf(x - self.shift, p["shape"], p["scale"])
        elif self.family == "lognormal":
            y = x - self.shift
            out = np.zeros_like(y)
            pos = y > 0
            z = (np.log(y[pos]) - p["mu"]) / p["sigma"]
            out[pos] = np.exp(-0.5 * z * z) / (
                y[pos] * p["sigma"] * math.sqrt(2.0 * math.pi)
            )
        elif self.family == "exponential":
            out = np.where(
                x >= p["loc"], p["rate"] * np.exp(-p["rate"] * (x - p["loc"])), 0.0
            )
        elif self.family == "empirical":
            out = self._hist_pdf(x)
        else:
            raise ValueError(f"unknown family {self.family!r}")
        return float(out[0]) if scalar else out

    def quantile(self, q):
        q = np.asarray(q, dtype=np.float64)
        scalar = q.ndim == 0
        q = np.atleast_1d(q)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("quantile levels must lie in [0, 1]")
        p = self.params
        if self.family == "gpd":
            split = 1.0 - p["p_tail"]
            out = np.empty_like(q)
            lo = q <= split
            if lo.any():
                out[lo] = np.quantile(self._sorted, q[lo], method="inverted_cdf")
            hi = ~lo
            if hi.any():
                u = (1.0 - q[hi]) / p["p_tail"]
                if abs(p["xi"]) < _XI_EXP_BRANCH:
                    out[hi] = p["mu"] - p["sigma"] * np.log(u)
                else:
                    out[hi] = p["mu"] + p["sigma"] * (
                        np.power(u, -p["xi"]) - 1.0
                    ) / p["xi"]
        elif self.family in ("cens_weibull", "weibull"):
            out = self.shift + p["scale"] * np.power(
                -np.log1p(-q), 1.0 / p["shape"]
            )
        elif self.family == "lognormal":
            out = self.shift + np.exp(p["mu"] + p["sigma"] * special.ndtri(q))
        elif self.family == "exponential":
            out = p["loc"] - np.log1p(-q) / p["rate"]
        elif self.family == "empirical":
            out = np.quantile(self._sorted, q, method="inverted_cdf")
        else:
            raise ValueError(f"unknown family {self.family!r}")
        return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Fitting


def _check_values(values) -> np.ndarray:
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0 or not np.all(np.isfinite(x)):
        raise ValueError("values must be a nonempty finite array")
    return x


def _support_shift(x: np.ndarray) -> float:
    """Shift making the sample strictly positive; zero when it already is.

    Shifting already-positive data would distort the fitted shape (the
    log-scale left tail stretches), so it only applies when needed.
    """
    m = float(x.min())
    return 0.0 if m > 0 else m - _SHIFT_MARGIN


def _nelder_mead(nll, x0):
    res = optimize.minimize(nll, x0, method="Nelder-Mead", options=_NM_OPTIONS)
    x = res.x
    val = nll(x)
    if not np.all(np.isfinite(x)) or not np.isfinite(val) or val >= _PENALTY:
        raise NonConvergenceError("optimizer failed to find usable estimates")
    return x, -val


def _gpd_pwm_start(exc: np.ndarray):
    """Probability-weighted-moment initial values for (sigma, xi)."""
    srt = np.sort(exc)
    n = srt.size
    a0 = srt.mean()
    a1 = float((srt * (1.0 - (np.arange(1, n + 1) - 0.35) / n)).mean())
    denom = a0 - 2.0 * a1
    if denom <= 0 or a1 <= 0:
        return max(a0, 1e-12), 0.0
    rho = a0 / a1
    xi = (4.0 - rho) / (2.0 - rho) if rho != 2.0 else 0.0
    xi = float(np.clip(xi, -0.9, 0.9))
    sigma = max(a0 * (1.0 - xi), 1e-12)
    return sigma, xi


def gpd_exceedance_loglik(sigma: float, xi: float, exc: np.ndarray) -> float:
    """Log-likelihood of exceedances y - mu >= 0 under GPD(sigma, xi)."""
    if sigma <= 0 or xi <= -0.99:
        return -np.inf
    z = exc / sigma
    if abs(xi) < _XI_EXP_BRANCH:
        return float(-exc.size * math.log(sigma) - z.sum())
    w = 1.0 + xi * z
    if w.min() <= 0:
        return -np.inf
    return float(-exc.size * math.log(sigma) - (1.0 + 1.0 / xi) * np.log(w).sum())


def fit_gpd_pot(values, threshold_quantile: float = 0.9) -> GpdFit:
    """Peaks-over-threshold GPD fit at the given quantile threshold.

    Needs at least 30 exceedances.  Maximum likelihood over (log sigma,
    xi) by Nelder-Mead from probability-weighted-moment starts; shapes
    are constrained to xi > -0.99 where the likelihood is regular.
    """
    x = _check_values(values)
    if not 0.0 <= threshold_quantile < 1.0:
        raise ValueError("threshold_quantile must lie in [0, 1)")
    mu = float(np.quantile(x, threshold_quantile))
    exc = x[x > mu] - mu
    if exc.size < _MIN_EXCEEDANCES:
        raise InsufficientTailDataError(
            f"{exc.size} exceedances above threshold, need >= {_MIN_EXCEEDANCES}"
        )
    zmax = float(exc.max())

    def nll(params):
        sigma, xi = math.exp(params[0]), params[1]
        if xi <= -0.99:
            return _PENALTY * (1.0 + (0.99 + xi) ** 2)
        # Grade the support violation so the simplex can walk back in.
        w_min = 1.0 + xi * zmax / sigma
        if w_min <= 0.0:
            return _PENALTY * (1.0 - w_min)
        ll = gpd_exceedance_loglik(sigma, xi, exc)
        return _PENALTY if not np.isfinite(ll) else -ll

    s0, xi0 = _gpd_pwm_start(exc)
    if xi0 < 0:
        # Moment starts can put the endpoint below the largest exceedance.
        s0 = max(s0, 1.05 * -xi0 * zmax)
    starts = [np.array([math.log(s0), xi0]),
              np.array([math.log(max(exc.mean(), 1e-12)), 0.0])]
    best, loglik = None, -np.inf
    for x0 in starts:
        try:
            cand, ll = _nelder_mead(nll, x0)
        except NonConvergenceError:
            continue
        if ll > loglik:
            best, loglik = cand, ll
    if best is None:
        raise NonConvergenceError("GPD likelihood optimization failed")
    return GpdFit(
        mu=mu,
        sigma=float(math.exp(best[0])),
        xi=float(best[1]),
        n_exceed=int(exc.size),
        loglik=float(loglik),
        threshold_quantile=threshold_quantile,
    )


def _weibull_regression_start(x: np.ndarray):
    """Slope of log(-log(1-F)) on log(x) gives a starting shape."""
    srt = np.sort(x)
    n = srt.size
    pp = (np.arange(1, n + 1) - 0.5) / n
    ly = np.log(-np.log1p(-pp))
    lx = np.log(srt)
    var = lx.var()
    shape = 1.0 if var <= 0 else float(np.cov(lx, ly)[0, 1] / var)
    shape = float(np.clip(shape, 0.05, 50.0))
    scale = float(np.exp(lx.mean() - ly.mean() / shape))
    return shape, max(scale, 1e-12)


def censored_weibull_loglik(shape: float, scale: float, noncensored: np.ndarray,
                            censor_point: float, n_censored: int) -> float:
    """Likelihood with n_censored observations left-censored at censor_point."""
    if shape <= 0 or scale <= 0:
        return -np.inf
    z = noncensored / scale
    ll = float(
        noncensored.size * (math.log(shape) - math.log(scale))
        + (shape - 1.0) * np.log(z).sum()
        - np.power(z, shape).sum()
    )
    if n_censored:
        t = (censor_point / scale) ** shape
        # log F(censor_point) = log(1 - exp(-t)), kept stable for tiny t
        ll += n_censored * math.log(-math.expm1(-t))
    return ll


def fit_censored_weibull(values, threshold_quantile: float = 0.9) -> CensWeibullFit:
    """Weibull MLE with the sample below the threshold left-censored at it.

    Samples reaching zero or below are first shifted to strictly positive
    support; threshold_quantile = 0 censors nothing and reduces to the
    plain Weibull MLE.
    """
    x = _check_values(values)
    if not 0.0 <= threshold_quantile < 1.0:
        raise ValueError("threshold_quantile must lie in [0, 1)")
    shift = _support_shift(x)
    xs = x - shift
    thr = float(np.quantile(xs, threshold_quantile))
    nonc = xs[xs >= thr]
    n_cens = int(xs.size - nonc.size)
    if nonc.size < _MIN_EXCEEDANCES:
        raise InsufficientTailDataError(
            f"{nonc.size} non-censored points, need >= {_MIN_EXCEEDANCES}"
        )

    def nll(params):
        ll = censored_weibull_loglik(
            math.exp(params[0]), math.exp(params[1]), nonc, thr, n_cens
        )
        return _PENALTY if not np.isfinite(ll) else -ll

    k0, s0 = _weibull_regression_start(xs)
    best, loglik = _nelder_mead(nll, np.array([math.log(k0), math.log(s0)]))
    return CensWeibullFit(
        shape=float(math.exp(best[0])),
        scale=float(math.exp(best[1])),
        threshold=thr + shift,
        n_noncensored=int(nonc.size),
        n_censored=n_cens,
        loglik=float(loglik),
        shift=shift,
        threshold_quantile=threshold_quantile,
    )


def fit_comparators(values) -> list:
    """Uncensored Weibull and Log-Normal MLE fits over the whole sample."""
    x = _check_values(values)
    if x.var() < 1e-12:
        raise DegenerateSampleError("degenerate sample: variance below 1e-12")
    shift = _support_shift(x)
    xs = x - shift

    def nll(params):
        ll = censored_weibull_loglik(
            math.exp(params[0]), math.exp(params[1]), xs, 0.0, 0
        )
        return _PENALTY if not np.isfinite(ll) else -ll

    k0, s0 = _weibull_regression_start(xs)
    best, loglik = _nelder_mead(nll, np.array([math.log(k0), math.log(s0)]))
    weib = FittedCdf(
        "weibull",
        {"shape": float(math.exp(best[0])), "scale": float(math.exp(best[1]))},
        shift=shift,
        loglik=float(loglik),
        n_used=xs.size,
    )

    logs = np.log(xs)
    mu = float(logs.mean())
    sd = float(logs.std())
    if sd < 1e-12:
        raise DegenerateSampleError("degenerate sample on the log scale")
    ll = float(
        -0.5 * xs.size * math.log(2.0 * math.pi)
        - xs.size * math.log(sd)
        - logs.sum()
        - ((logs - mu) ** 2).sum() / (2.0 * sd * sd)
    )
    lognorm = FittedCdf(
        "lognormal",
        {"mu": mu, "sigma": sd},
        shift=shift,
        loglik=ll,
        n_used=xs.size,
    )
    return [weib, lognorm]


# ---------------------------------------------------------------------------
# FittedCdf builders


def fitted_cdf_from_gpd(fit: GpdFit, values) -> FittedCdf:
    x = _check_values(values)
    p_tail = fit.n_exceed / x.size
    return FittedCdf(
        "gpd",
        {"mu": fit.mu, "sigma": fit.sigma, "xi": fit.xi, "p_tail": p_tail},
        threshold=fit.mu,
        loglik=fit.loglik,
        n_used=fit.n_exceed,
        sample=x,
    )


def fitted_cdf_from_cens_weibull(fit: CensWeibullFit) -> FittedCdf:
    return FittedCdf(
        "cens_weibull",
        {"shape": fit.shape, "scale": fit.scale},
        shift=fit.shift,
        threshold=fit.threshold,
        loglik=fit.loglik,
        n_used=fit.n_noncensored + fit.n_censored,
    )


def empirical_cdf(values) -> FittedCdf:
    x = _check_values(values)
    return FittedCdf("empirical", {}, n_used=x.size, sample=x)


def exponential_cdf(rate: float = 1.0, loc: float = 0.0) -> FittedCdf:
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return FittedCdf("exponential", {"rate": rate, "loc": loc})


def fitted_cdf_from_params(family, params, values=None, shift=0.0,
                           threshold=None, loglik=None, n_used=0) -> FittedCdf:
    """Rebuild an evaluable model from serialized parameters.

    The composite gpd and empirical families need the sample back.
    """
    sample = None
    if family in ("gpd", "empirical"):
        if values is None:
            raise ValueError(f"{family} model needs the sample to rebuild")
        sample = _check_values(values)
    return FittedCdf(family, params, shift=shift, threshold=threshold,
                     loglik=loglik, n_used=n_used, sample=sample)


# ---------------------------------------------------------------------------
# Diagnostics and exports


def qq_points(fit: FittedCdf, values, upper_tail_only: bool = False) -> np.ndarray:
    """(theoretical, empirical) quantile pairs at positions (i - 0.5)/m.

    With upper_tail_only the sample is restricted to values above the
    fit's threshold and positions map into the conditional distribution
    above it.
    """
    x = _check_values(values)
    if upper_tail_only:
        if fit.threshold is None:
            raise ValueError("fit has no threshold to restrict to")
        x = x[x > fit.threshold]
        if x.size == 0:
            raise InsufficientTailDataError("no values above the fit threshold")
    srt = np.sort(x)
    m = srt.size
    pp = (np.arange(1, m + 1) - 0.5) / m
    if upper_tail_only:
        base = float(fit.cdf(fit.threshold))
        pp = base + pp * (1.0 - base)
    theo = fit.quantile(pp)
    return np.column_stack([theo, srt])


def tail_cdf(fit: FittedCdf, r):
    """Cumulative probability of the fitted model at r."""
    return fit.cdf(r)


def write_fit_report(fit: FittedCdf, path, meta: dict | None = None) -> None:
    payload = {
        "family": fit.family,
        "parameters": fit.params,
        "threshold": fit.threshold,
        "shift": fit.shift,
        "loglik": fit.loglik,
        "n_used": fit.n_used,
    }
    if meta:
        payload.update(meta)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_qq_csv(points: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("theoretical,empirical\n")
        for theo, emp in points:
            fh.write(f"{theo:.17g},{emp:.17g}\n")


def write_density_overlay(fit: FittedCdf, values, path, grid_size: int = 512) -> None:
    """CSV of empirical histogram density and fitted density on a grid."""
    x = _check_values(values)
    dens, edges = np.histogram(x, bins="auto", density=True)
    grid = np.linspace(x.min(), x.max(), grid_size)
    idx = np.clip(np.searchsorted(edges, grid, side="right") - 1, 0, dens.size - 1)
    emp = dens[idx]
    fitted = fit.pdf(grid)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,empirical_density,fitted_density\n")
        for g, e, f in zip(grid, emp, fitted):
            fh.write(f"{g:.17g},{e:.17g},{f:.17g}\n")
