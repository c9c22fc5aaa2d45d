"""Extreme value core: GEV/GPD distribution functions, sample reduction, PWM fits.

Shape convention: ``xi > 0`` is the heavy (Frechet/Pareto) tail throughout,
i.e. ``G(z) = exp(-(1 + xi (z - mu) / sigma) ** (-1 / xi))``. This is the
opposite sign of ``scipy.stats.genextreme``'s ``c``.

Threshold selection is the caller's job; nothing here picks ``d``.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import special

from .errors import (
    DegenerateSampleError,
    InconsistentThresholdError,
    MomentUndefinedError,
    ParameterError,
    SampleError,
)

SHAPE_EPS = 1e-6
MIN_FIT_SAMPLES = 30
PLOTTING_OFFSET = 0.35
_DEGENERATE_FLOOR = 1e-12


@dataclass(frozen=True)
class GevParams:
    mu: float
    sigma: float
    xi: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ParameterError(f"GEV scale must be positive, got {self.sigma}")


@dataclass(frozen=True)
class GpdParams:
    sigma_t: float
    xi: float
    threshold: float = 0.0

    def __post_init__(self):
        if not self.sigma_t > 0:
            raise ParameterError(f"GPD scale must be positive, got {self.sigma_t}")


@dataclass(frozen=True)
class SampleSet:
    """Ordered real observations plus provenance tags."""

    values: np.ndarray
    units: str | None = None
    source: str | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(arr)):
            raise SampleError("sample set contains non-finite values")
        object.__setattr__(self, "values", arr)

    def __len__(self):
        return self.values.size

    def __iter__(self):
        return iter(self.values.tolist())

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def derive(self, values, **meta):
        return SampleSet(values, units=self.units, source=self.source, meta={**self.meta, **meta})


def as_array(xs) -> np.ndarray:
    """Float view of a :class:`SampleSet` or any array-like."""
    if isinstance(xs, SampleSet):
        return xs.values
    arr = np.asarray(xs, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise SampleError("sample contains non-finite values")
    return arr


def _wrap(template, values, **meta):
    if isinstance(template, SampleSet):
        return template.derive(values, **meta)
    return SampleSet(values, meta=meta)


# --------------------------------------------------------------------------
# distribution functions


def gev_cdf(z, p: GevParams):
    """GEV distribution function; accepts scalars or arrays.

    Points outside the support map to 0 (below a finite lower endpoint) or
    1 (above a finite upper endpoint).
    """
    z = np.asarray(z, dtype=float)
    s = (z - p.mu) / p.sigma
    if abs(p.xi) < SHAPE_EPS:
        out = np.exp(-np.exp(-s))
    else:
        base = 1.0 + p.xi * s
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            t = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), -1.0 / p.xi), np.nan)
            out = np.exp(-t)
        outside = 0.0 if p.xi > 0 else 1.0
        out = np.where(base > 0, out, outside)
    return float(out) if out.ndim == 0 else out


def gev_quantile(u, p: GevParams):
    u = np.asarray(u, dtype=float)
    if abs(p.xi) < SHAPE_EPS:
        out = p.mu - p.sigma * np.log(-np.log(u))
    else:
        out = p.mu + p.sigma / p.xi * (np.power(-np.log(u), -p.xi) - 1.0)
    return float(out) if out.ndim == 0 else out


def gpd_survival(y, p: GpdParams):
    """P(Y > y) for excess ``y >= 0``; zero past the upper endpoint when ``xi < 0``."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ParameterError("GPD excess must be non-negative")
    if abs(p.xi) < SHAPE_EPS:
        out = np.exp(-y / p.sigma_t)
    else:
        base = 1.0 + p.xi * y / p.sigma_t
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), -1.0 / p.xi), 0.0)
    return float(out) if out.ndim == 0 else out


def gpd_cdf(y, p: GpdParams):
    out = 1.0 - np.asarray(gpd_survival(y, p))
    return float(out) if out.ndim == 0 else out


def gpd_quantile(u, p: GpdParams):
    u = np.asarray(u, dtype=float)
    if abs(p.xi) < SHAPE_EPS:
        out = -p.sigma_t * np.log1p(-u)
    else:
        out = p.sigma_t / p.xi * (np.power(1.0 - u, -p.xi) - 1.0)
    return float(out) if out.ndim == 0 else out


def gpd_mean(p: GpdParams) -> float:
    if p.xi >= 1:
        raise MomentUndefinedError(f"GPD mean undefined for xi={p.xi} >= 1")
    return p.sigma_t / (1.0 - p.xi)


def gpd_second_moment(p: GpdParams) -> float:
    if p.xi >= 0.5:
        raise MomentUndefinedError(f"GPD second moment undefined for xi={p.xi} >= 0.5")
    return 2.0 * p.sigma_t**2 / ((1.0 - p.xi) * (1.0 - 2.0 * p.xi))


# --------------------------------------------------------------------------
# sample reduction


def block_maxima(xs, m: int) -> SampleSet:
    """Maxima of consecutive complete blocks of size ``m``; a partial tail block is dropped."""
    if int(m) != m or m < 1:
        raise ParameterError(f"block size must be an integer >= 1, got {m}")
    m = int(m)
    arr = as_array(xs)
    nblocks = arr.size // m
    maxima = arr[: nblocks * m].reshape(nblocks, m).max(axis=1) if nblocks else arr[:0]
    return _wrap(xs, maxima, block_size=m)


def pot_excesses(xs, d: float) -> SampleSet:
    arr = as_array(xs)
    return _wrap(xs, arr[arr > d] - d, threshold=float(d))


# --------------------------------------------------------------------------
# probability-weighted-moment estimators


def _check_fit_sample(arr, min_samples):
    if arr.size < min_samples:
        raise SampleError(f"need at least {min_samples} samples to fit, got {arr.size}")
    if np.ptp(arr) == 0:
        raise DegenerateSampleError("sample has zero spread")


def _pwm(sorted_arr, r):
    n = sorted_arr.size
    p = (np.arange(1, n + 1) - PLOTTING_OFFSET) / n
    return float(np.mean(sorted_arr * p**r)), p


def fit_gpd(excesses, threshold: float = 0.0, min_samples: int = MIN_FIT_SAMPLES) -> GpdParams:
    """PWM estimate of the GPD fitted to threshold excesses.

    With ``a0`` the sample mean and ``a1 = mean(x_(i) * (1 - p_i))`` over
    ascending order statistics, ``p_i = (i - 0.35) / n``::

        xi    = 2 - a0 / (a0 - 2 a1)
        sigma = 2 a0 a1 / (a0 - 2 a1)

    The estimator needs ``xi < 0.5`` to be consistent. ``threshold`` is only
    carried into the returned parameters.
    """
    arr = np.sort(as_array(excesses))
    _check_fit_sample(arr, min_samples)
    n = arr.size
    p = (np.arange(1, n + 1) - PLOTTING_OFFSET) / n
    a0 = float(arr.mean())
    a1 = float(np.mean(arr * (1.0 - p)))
    denom = a0 - 2.0 * a1
    if abs(denom) <= _DEGENERATE_FLOOR * max(abs(a0), 1e-300):
        raise DegenerateSampleError("a0 - 2*a1 vanishes; PWM estimate undefined")
    xi = 2.0 - a0 / denom
    sigma = 2.0 * a0 * a1 / denom
    if not sigma > 0:
        raise DegenerateSampleError(f"PWM scale estimate non-positive ({sigma})")
    return GpdParams(sigma_t=sigma, xi=xi, threshold=float(threshold))


def fit_gev(maxima, min_samples: int = MIN_FIT_SAMPLES) -> GevParams:
    """PWM estimate of GEV parameters (Hosking-Wallis-Wood rational shape approximation)."""
    arr = np.sort(as_array(maxima))
    _check_fit_sample(arr, min_samples)
    n = arr.size
    p = (np.arange(1, n + 1) - PLOTTING_OFFSET) / n
    b0 = float(arr.mean())
    b1 = float(np.mean(arr * p))
    b2 = float(np.mean(arr * p * p))
    l2 = 2.0 * b1 - b0
    l3 = 3.0 * b2 - b0
    scale = max(abs(b0), abs(b1), abs(b2), 1e-300)
    if abs(l2) <= _DEGENERATE_FLOOR * scale or abs(l3) <= _DEGENERATE_FLOOR * scale:
        raise DegenerateSampleError("degenerate probability-weighted moments")
    c = l2 / l3 - math.log(2.0) / math.log(3.0)
    k = 7.8590 * c + 2.9554 * c * c
    if abs(k) < SHAPE_EPS:
        sigma = l2 / math.log(2.0)
        mu = b0 - np.euler_gamma * sigma
    else:
        g = special.gamma(1.0 + k)
        sigma = l2 * k / (g * (1.0 - 2.0 ** (-k)))
        mu = b0 + sigma * (g - 1.0) / k
    if not sigma > 0:
        raise DegenerateSampleError(f"PWM scale estimate non-positive ({sigma})")
    return GevParams(mu=float(mu), sigma=float(sigma), xi=float(-k))


def gpd_scale_from_gev(g: GevParams, d: float) -> float:
    """GPD scale implied at threshold ``d`` by a GEV fit: ``sigma + xi (d - mu)``."""
    out = g.sigma + g.xi * (d - g.mu)
    if not out > 0:
        raise InconsistentThresholdError(
            f"threshold {d} gives non-positive GPD scale {out} for {g}")
    return out


def ks_distance_gpd(excesses, p: GpdParams) -> float:
    """Sup distance between the empirical CDF of ``excesses`` and the GPD CDF."""
    arr = np.sort(as_array(excesses))
    n = arr.size
    if n == 0:
        raise SampleError("no excesses to compare")
    F = np.asarray(gpd_cdf(arr, p))
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
