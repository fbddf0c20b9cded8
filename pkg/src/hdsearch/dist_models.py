"""Parametric observation families and constrained maximum likelihood.

Three families are supported:

* ``ExpRate`` -- exponential inter-arrival times with a rate parameter.
* ``ShiftMix`` -- an exponential whose draws are, when ``z == 1``, shifted
  by ``shift_neg`` or ``a`` with equal probability (Bernoulli interference).
* ``Gauss`` -- a normal distribution with mean and standard deviation.

Parameter *sets* describe where an anomalous parameter may live.  Each set
kind has a matching likelihood accumulator that keeps sufficient statistics,
so sequential statistics cost O(1) per observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy import integrate

LOG_2PI = math.log(2.0 * math.pi)
DEFAULT_RATE_CAP = 1e12
SIGMA_FLOOR = 1e-9


@dataclass(frozen=True)
class ExpRate:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")


@dataclass(frozen=True)
class ShiftMix:
    z: int
    a: float
    base_rate: float
    shift_neg: float = -6.0

    def __post_init__(self):
        if self.z not in (0, 1):
            raise ValueError(f"z must be 0 or 1, got {self.z}")
        if not self.base_rate > 0:
            raise ValueError(f"base_rate must be positive, got {self.base_rate}")
        if self.z == 0:
            object.__setattr__(self, "a", 0.0)

    @property
    def support_min(self) -> float:
        if self.z == 0:
            return 0.0
        return min(self.shift_neg, self.a)


@dataclass(frozen=True)
class Gauss:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"std must be positive, got {self.std}")


ParamPoint = Union[ExpRate, ShiftMix, Gauss]


@dataclass(frozen=True)
class Singleton:
    point: ParamPoint

    def contains(self, p: ParamPoint) -> bool:
        return p == self.point


@dataclass(frozen=True)
class FiniteSet:
    elements: tuple

    def __post_init__(self):
        elements = tuple(self.elements)
        if not elements:
            raise ValueError("FiniteSet must be nonempty")
        kinds = {type(e) for e in elements}
        if len(kinds) != 1:
            raise ValueError("FiniteSet elements must share one parameter kind")
        object.__setattr__(self, "elements", elements)

    def contains(self, p: ParamPoint) -> bool:
        return p in self.elements


@dataclass(frozen=True)
class RateHalfLine:
    """Exponential rates in ``[min_rate, inf)``."""

    min_rate: float
    rate_cap: float = field(default=DEFAULT_RATE_CAP, compare=False)

    def __post_init__(self):
        if not self.min_rate > 0:
            raise ValueError(f"min_rate must be positive, got {self.min_rate}")

    def contains(self, p: ParamPoint) -> bool:
        return isinstance(p, ExpRate) and p.rate >= self.min_rate


@dataclass(frozen=True)
class GaussBox:
    """Gaussian parameters with ``mean <= mean_max`` and ``0 < std <= std_max``."""

    mean_max: float
    std_max: float

    def __post_init__(self):
        if not self.std_max > 0:
            raise ValueError(f"std_max must be positive, got {self.std_max}")

    def contains(self, p: ParamPoint) -> bool:
        return isinstance(p, Gauss) and p.mean <= self.mean_max and p.std <= self.std_max


ParamSet = Union[Singleton, FiniteSet, RateHalfLine, GaussBox]


# ---------------------------------------------------------------------------
# densities and sampling


def log_density(p: ParamPoint, y: float) -> float:
    """Natural-log density of ``y`` under ``p``; ``-inf`` outside the support."""
    if isinstance(p, ExpRate):
        if y < 0:
            return -math.inf
        return math.log(p.rate) - p.rate * y
    if isinstance(p, Gauss):
        d = (y - p.mean) / p.std
        return -0.5 * d * d - math.log(p.std) - 0.5 * LOG_2PI
    if isinstance(p, ShiftMix):
        lam = p.base_rate
        if p.z == 0:
            if y < 0:
                return -math.inf
            return math.log(lam) - lam * y
        terms = [math.log(0.5 * lam) - lam * (y - s) for s in (p.shift_neg, p.a) if y >= s]
        if not terms:
            return -math.inf
        if len(terms) == 1:
            return terms[0]
        hi = max(terms)
        return hi + math.log(sum(math.exp(t - hi) for t in terms))
    raise TypeError(f"unknown parameter kind {type(p).__name__}")


def log_density_array(p: ParamPoint, y: np.ndarray) -> np.ndarray:
    """Vectorized :func:`log_density`."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore"):
        if isinstance(p, ExpRate):
            return np.where(y >= 0, math.log(p.rate) - p.rate * y, -np.inf)
        if isinstance(p, Gauss):
            d = (y - p.mean) / p.std
            return -0.5 * d * d - math.log(p.std) - 0.5 * LOG_2PI
        if isinstance(p, ShiftMix):
            lam = p.base_rate
            if p.z == 0:
                return np.where(y >= 0, math.log(lam) - lam * y, -np.inf)
            t1 = np.where(y >= p.shift_neg, math.log(0.5 * lam) - lam * (y - p.shift_neg), -np.inf)
            t2 = np.where(y >= p.a, math.log(0.5 * lam) - lam * (y - p.a), -np.inf)
            return np.logaddexp(t1, t2)
    raise TypeError(f"unknown parameter kind {type(p).__name__}")


def sample(p: ParamPoint, rng: np.random.Generator) -> float:
    if isinstance(p, ExpRate):
        return rng.exponential(1.0 / p.rate)
    if isinstance(p, Gauss):
        return rng.normal(p.mean, p.std)
    if isinstance(p, ShiftMix):
        e = rng.exponential(1.0 / p.base_rate)
        if p.z == 0:
            return e
        return e + (p.shift_neg if rng.random() < 0.5 else p.a)
    raise TypeError(f"unknown parameter kind {type(p).__name__}")


def sample_array(p: ParamPoint, rng: np.random.Generator, size) -> np.ndarray:
    """Draw an array of i.i.d. observations (used by batch calibration)."""
    if isinstance(p, ExpRate):
        return rng.exponential(1.0 / p.rate, size)
    if isinstance(p, Gauss):
        return rng.normal(p.mean, p.std, size)
    if isinstance(p, ShiftMix):
        e = rng.exponential(1.0 / p.base_rate, size)
        if p.z == 0:
            return e
        return e + np.where(rng.random(size) < 0.5, p.shift_neg, p.a)
    raise TypeError(f"unknown parameter kind {type(p).__name__}")


# ---------------------------------------------------------------------------
# KL divergence


def kl_div(p: ParamPoint, q: ParamPoint) -> float:
    """KL(p || q) in nats; ``inf`` when p puts mass where q has none."""
    if type(p) is not type(q):
        raise ValueError(f"cannot compare {type(p).__name__} with {type(q).__name__}")
    if p == q:
        return 0.0
    if isinstance(p, ExpRate):
        r = p.rate / q.rate
        return math.log(r) + 1.0 / r - 1.0
    if isinstance(p, Gauss):
        dm = p.mean - q.mean
        return math.log(q.std / p.std) + (p.std**2 + dm * dm) / (2.0 * q.std**2) - 0.5
    return _kl_shiftmix(p, q)


def _kl_shiftmix(p: ShiftMix, q: ShiftMix) -> float:
    if p.support_min < q.support_min:
        return math.inf
    lo = p.support_min
    cuts = {lo}
    for s in (p, q):
        cuts.add(0.0)
        if s.z == 1:
            cuts.update((s.shift_neg, s.a))
    edges = sorted(c for c in cuts if c >= lo) + [math.inf]

    def integrand(y):
        lp = log_density(p, y)
        if lp == -math.inf:
            return 0.0
        return math.exp(lp) * (lp - log_density(q, y))

    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-8, epsrel=1e-10, limit=200)
        total += val
    return total


def kl_div_numeric(p: ParamPoint, q: ParamPoint) -> float:
    """Quadrature KL for any family; an independent check on the closed forms."""
    if isinstance(p, ShiftMix):
        return _kl_shiftmix(p, q)
    if isinstance(p, ExpRate):
        lo, hi = 0.0, math.inf
        cuts = [lo, 1.0 / p.rate, 10.0 / p.rate, 50.0 / p.rate, hi]
    else:
        cuts = [-math.inf] + [p.mean + k * p.std for k in (-10, -1, 0, 1, 10)] + [math.inf]

    def integrand(y):
        lp = log_density(p, y)
        return math.exp(lp) * (lp - log_density(q, y)) if lp > -math.inf else 0.0

    return sum(
        integrate.quad(integrand, a, b, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
        for a, b in zip(cuts[:-1], cuts[1:])
    )


# ---------------------------------------------------------------------------
# constrained maximum likelihood


class SingletonAccumulator:
    def __init__(self, pset: Singleton):
        self.point = pset.point
        self.n = 0
        self.loglik = 0.0

    def add(self, y: float) -> None:
        self.n += 1
        self.loglik += log_density(self.point, y)

    def estimate(self) -> ParamPoint:
        return self.point

    def max_loglik(self) -> float:
        return self.loglik


class FiniteAccumulator:
    """Per-element log-likelihood sums; argmax ties go to the first element."""

    def __init__(self, pset: FiniteSet):
        self.elements = pset.elements
        self.n = 0
        self.sums = [0.0] * len(self.elements)

    def add(self, y: float) -> None:
        self.n += 1
        sums = self.sums
        for i, e in enumerate(self.elements):
            sums[i] += log_density(e, y)

    def _best(self) -> int:
        best = 0
        for i in range(1, len(self.sums)):
            if self.sums[i] > self.sums[best]:
                best = i
        return best

    def estimate(self) -> ParamPoint:
        return self.elements[self._best()]

    def max_loglik(self) -> float:
        return self.sums[self._best()]


class RateAccumulator:
    def __init__(self, pset: RateHalfLine):
        self.min_rate = pset.min_rate
        self.cap = pset.rate_cap
        self.n = 0
        self.total = 0.0

    def add(self, y: float) -> None:
        self.n += 1
        self.total += y

    def rate(self) -> float:
        if self.total <= 0.0:
            return self.cap
        return min(max(self.n / self.total, self.min_rate), self.cap)

    def estimate(self) -> ParamPoint:
        return ExpRate(self.rate())

    def max_loglik(self) -> float:
        lam = self.rate()
        return self.n * math.log(lam) - lam * self.total


class GaussAccumulator:
    """Running mean / sum of squared deviations (Welford)."""

    def __init__(self, pset: GaussBox):
        self.mean_max = pset.mean_max
        self.std_max = pset.std_max
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, y: float) -> None:
        self.n += 1
        d = y - self.mean
        self.mean += d / self.n
        self.m2 += d * (y - self.mean)

    def _fit(self):
        mu = min(self.mean, self.mean_max)
        msd = self.m2 / self.n + (self.mean - mu) ** 2
        sigma = min(max(math.sqrt(msd), SIGMA_FLOOR), self.std_max)
        return mu, sigma, msd

    def estimate(self) -> ParamPoint:
        mu, sigma, _ = self._fit()
        return Gauss(mu, sigma)

    def max_loglik(self) -> float:
        _, sigma, msd = self._fit()
        return -self.n * (math.log(sigma) + 0.5 * LOG_2PI) - self.n * msd / (2.0 * sigma * sigma)


def make_accumulator(pset: ParamSet):
    if isinstance(pset, Singleton):
        return SingletonAccumulator(pset)
    if isinstance(pset, FiniteSet):
        return FiniteAccumulator(pset)
    if isinstance(pset, RateHalfLine):
        return RateAccumulator(pset)
    if isinstance(pset, GaussBox):
        return GaussAccumulator(pset)
    raise TypeError(f"unknown parameter set {type(pset).__name__}")


def mle(pset: ParamSet, samples: Sequence[float]) -> ParamPoint:
    """Maximum-likelihood parameter constrained to ``pset``."""
    if len(samples) == 0:
        raise ValueError("mle needs at least one sample")
    acc = make_accumulator(pset)
    for y in samples:
        acc.add(float(y))
    return acc.estimate()


def representatives(pset: ParamSet) -> list:
    """Worst-case (least separated) members used by validation and calibration."""
    if isinstance(pset, Singleton):
        return [pset.point]
    if isinstance(pset, FiniteSet):
        return list(pset.elements)
    if isinstance(pset, RateHalfLine):
        return [ExpRate(pset.min_rate)]
    if isinstance(pset, GaussBox):
        return [Gauss(pset.mean_max, pset.std_max)]
    raise TypeError(f"unknown parameter set {type(pset).__name__}")


def default_estimate(pset: ParamSet, null: ParamPoint) -> ParamPoint:
    """Estimate used before any observation is available.

    Finite sets pick the element farthest from the null in KL (first on
    ties); the half-line and box use their boundary point.
    """
    if isinstance(pset, FiniteSet):
        best, best_kl = pset.elements[0], kl_div(pset.elements[0], null)
        for e in pset.elements[1:]:
            d = kl_div(e, null)
            if d > best_kl:
                best, best_kl = e, d
        return best
    return representatives(pset)[0]
