"""Meta distribution of the conditional link success probability.

The reference geometry is a receiver at the origin with its transmitter at
distance ``d0``; interferers form a Poisson process in a disc around the
receiver. Under Rayleigh fading the success probability conditioned on
the interferer positions has the product form used below.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .errors import DegenerateSampleError, DomainError, ParameterError
from .rng import stream


@dataclass(frozen=True)
class MetaMoments:
    m1: float
    m2: float

    def __post_init__(self):
        if not (0 <= self.m1 <= 1 and 0 <= self.m2 <= 1):
            raise DomainError("moments of a [0, 1] variable must lie in [0, 1]")
        # rounding slack for moments computed from samples
        tol = 1e-12
        if self.m2 < self.m1 ** 2 - tol or self.m2 > self.m1 + tol:
            raise DomainError(f"infeasible moments: need m1^2 <= m2 <= m1, got ({self.m1}, {self.m2})")

    @property
    def variance(self) -> float:
        return self.m2 - self.m1 ** 2


@dataclass(frozen=True)
class BetaParams:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ParameterError("Beta parameters must be positive")

    @property
    def mean(self) -> float:
        return self.a / (self.a + self.b)

    @property
    def second_moment(self) -> float:
        return self.mean * (self.a + 1) / (self.a + self.b + 1)

    def moments(self) -> MetaMoments:
        return MetaMoments(self.mean, self.second_moment)


def moments_from_samples(ps) -> MetaMoments:
    ps = np.asarray(ps, dtype=float).ravel()
    if ps.size == 0:
        raise DomainError("no samples")
    if np.any(~np.isfinite(ps)) or np.any(ps < 0) or np.any(ps > 1):
        raise DomainError("success-probability samples must lie in [0, 1]")
    m1 = float(ps.mean())
    # via the centred variance so a constant sample gives m2 == m1^2 exactly
    m2 = m1 * m1 + float(np.var(ps))
    # keep m2 inside the feasible band despite summation rounding
    return MetaMoments(m1, min(max(m2, m1 * m1), m1))


def beta_from_moments(m: MetaMoments) -> BetaParams:
    """Moment-matched Beta: ``a = m1 (m1 - m2) / (m2 - m1^2)``, ``b = a (1 - m1) / m1``."""
    var = m.m2 - m.m1 ** 2
    if var <= 0:
        raise DegenerateSampleError("zero variance: the Beta approximation is undefined")
    if m.m2 >= m.m1:
        raise DomainError("m2 >= m1 is only possible for a {0, 1}-valued variable")
    a = m.m1 * (m.m1 - m.m2) / var
    return BetaParams(a, a * (1.0 - m.m1) / m.m1)


def meta_ccdf(x, bp: BetaParams):
    """Beta survival ``1 - I_x(a, b)``; accepts scalars or arrays."""
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DomainError("x must lie in [0, 1]")
    out = special.betaincc(bp.a, bp.b, x)
    return float(out) if out.ndim == 0 else out


def empirical_ccdf(samples, x):
    """``P(S > x)`` under the empirical distribution of ``samples``."""
    s = np.sort(np.asarray(samples, dtype=float))
    x = np.asarray(x, dtype=float)
    out = 1.0 - np.searchsorted(s, x, side="right") / s.size
    return float(out) if out.ndim == 0 else out


def ccdf_sup_distance(samples, bp: BetaParams) -> float:
    """Sup over ``x`` of the gap between the empirical and Beta CCDFs.

    Both are monotone, so it suffices to check either side of every jump.
    """
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    F = 1.0 - np.asarray(meta_ccdf(s, bp), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(np.abs(i / n - F)), np.max(np.abs(F - (i - 1) / n))))


@dataclass(frozen=True)
class PoissonFieldConfig:
    """Interferer intensity ``lam`` per m^2, link distance ``d0`` in m, SIR threshold ``theta``.

    ``radius`` defaults to ``20 * d0``. Interferers beyond it are ignored;
    with ``alpha_pl > 2`` their aggregate effect on the product form is of
    order ``lam * d0^alpha * radius^(2 - alpha)``.
    """

    lam: float = 1e-4
    d0: float = 50.0
    alpha_pl: float = 4.0
    theta: float = 1.0
    radius: float | None = None
    realizations: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterError("intensity must be non-negative")
        if not self.d0 > 0 or not self.theta > 0:
            raise ParameterError("d0 and theta must be positive")
        if not self.alpha_pl > 2:
            raise ParameterError("path-loss exponent must exceed 2")
        if self.radius is not None and not self.radius > 0:
            raise ParameterError("radius must be positive")
        if self.realizations < 1:
            raise ParameterError("need at least one realization")

    @property
    def window_radius(self) -> float:
        return 20.0 * self.d0 if self.radius is None else float(self.radius)


def success_probability(distances, d0: float, alpha_pl: float, theta: float) -> float:
    """``prod_i 1 / (1 + theta (d0 / d_i)^alpha)`` for one interferer configuration."""
    d = np.asarray(distances, dtype=float)
    return float(np.exp(-np.sum(np.log1p(theta * (d0 / d) ** alpha_pl))))


def poisson_field_success_samples(cfg: PoissonFieldConfig) -> np.ndarray:
    """One conditional success probability per Poisson-field realization.

    All realizations are drawn from one named stream: counts first, then
    the radii of every interferer in one batch, so the output depends only
    on ``cfg``.
    """
    rng = stream(cfg.seed, "metadist", "field")
    R = cfg.window_radius
    counts = rng.poisson(cfg.lam * math.pi * R * R, size=cfg.realizations)
    total = int(counts.sum())
    # uniform in the disc: radius = R sqrt(U); angle is irrelevant to the product
    r = R * np.sqrt(rng.random(total))
    r = np.maximum(r, 1e-12)
    logs = np.log1p(cfg.theta * (cfg.d0 / r) ** cfg.alpha_pl)
    owner = np.repeat(np.arange(cfg.realizations), counts)
    acc = np.bincount(owner, weights=logs, minlength=cfg.realizations)
    return np.exp(-acc)
