"""Scenario models: per-level null parameters, anomaly sets and aggregation.

A scenario model answers three questions for every tree level ``l``:

* ``null(l)`` -- the known parameter of a node with no anomaly beneath it,
* ``anomaly_set(l)`` -- the composite set a one-anomaly node may live in,
* ``node_param(l, anomalies)`` -- the true parameter of a node whose active
  anomalous leaves carry the given leaf parameters.

``known_anomaly(l)`` is the exact one-anomaly parameter, used by the IRW
baseline which is given the true anomaly parameter.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .dist_models import (
    ExpRate,
    FiniteSet,
    Gauss,
    GaussBox,
    ParamPoint,
    ParamSet,
    RateHalfLine,
    ShiftMix,
    Singleton,
)


class _ModelBase:
    kind = "base"

    def scenario_hash(self) -> str:
        payload = json.dumps({"kind": self.kind, **asdict(self)}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def leaf_anomaly(self) -> ParamPoint:
        return self.known_anomaly(0)

    def check_levels(self, levels: int) -> None:
        pass


@dataclass(frozen=True)
class ExpHeavyHitter(_ModelBase):
    """Poisson flows observed through exponential inter-arrival times.

    Internal node rates are the sum of their leaves' rates.
    """

    lam0: float = 1.0
    lam1: float = 1000.0
    lam1_min: float | None = None
    delta: float = 0.1

    kind = "exp"

    def __post_init__(self):
        if self.lam1_min is None:
            object.__setattr__(self, "lam1_min", (self.lam0 + self.lam1) / 2.0)

    def null(self, level: int) -> ParamPoint:
        return ExpRate(2**level * self.lam0)

    def anomaly_set(self, level: int) -> ParamSet:
        return RateHalfLine((2**level - 1) * self.lam0 + self.lam1_min)

    def node_param(self, level: int, anomalies: Sequence[ParamPoint]) -> ParamPoint:
        rate = (2**level - len(anomalies)) * self.lam0 + sum(p.rate for p in anomalies)
        return ExpRate(rate)

    def known_anomaly(self, level: int) -> ParamPoint:
        return ExpRate((2**level - 1) * self.lam0 + self.lam1)


@dataclass(frozen=True)
class BernoulliInterference(_ModelBase):
    """Poisson flows whose anomalous aggregates carry a random shift of
    ``shift_neg`` or ``a`` (equiprobable); ``a`` is only known to lie in ``a_set``."""

    lam0: float = 0.1
    shift_neg: float = -6.0
    a_set: tuple = (1.0, 5.0, 10.0)
    a_true: float = 10.0
    delta: float = 0.1

    kind = "bernoulli"

    def __post_init__(self):
        object.__setattr__(self, "a_set", tuple(float(a) for a in self.a_set))

    def _mix(self, level: int, z: int, a: float) -> ShiftMix:
        return ShiftMix(z, a, 2**level * self.lam0, self.shift_neg)

    def null(self, level: int) -> ParamPoint:
        return self._mix(level, 0, 0.0)

    def anomaly_set(self, level: int) -> ParamSet:
        return FiniteSet(tuple(self._mix(level, 1, a) for a in self.a_set))

    def node_param(self, level: int, anomalies: Sequence[ParamPoint]) -> ParamPoint:
        if not anomalies:
            return self.null(level)
        # several anomalies beneath one node keep the first leaf's shift
        return self._mix(level, 1, anomalies[0].a)

    def known_anomaly(self, level: int) -> ParamPoint:
        return self._mix(level, 1, self.a_true)


@dataclass(frozen=True)
class GaussModel(_ModelBase):
    """Gaussian node statistic with per-level null and anomaly tables.

    The anomaly set at level ``l`` is the box ``mean <= (mu0 + mu1) / 2``,
    ``std <= (sigma0 + sigma1) / 2``.
    """

    null_means: tuple
    null_stds: tuple
    anom_means: tuple
    anom_stds: tuple
    delta: float = 0.1

    kind = "gauss"

    def __post_init__(self):
        tables = [tuple(map(float, t)) for t in (self.null_means, self.null_stds, self.anom_means, self.anom_stds)]
        if len({len(t) for t in tables}) != 1 or not tables[0]:
            raise ValueError("Gaussian level tables must be nonempty and of equal length")
        for name, t in zip(("null_means", "null_stds", "anom_means", "anom_stds"), tables):
            object.__setattr__(self, name, t)

    @property
    def max_level(self) -> int:
        return len(self.null_means) - 1

    def check_levels(self, levels: int) -> None:
        if levels > self.max_level:
            raise ValueError(f"Gaussian tables cover levels 0..{self.max_level}, tree needs {levels}")

    def null(self, level: int) -> ParamPoint:
        return Gauss(self.null_means[level], self.null_stds[level])

    def anomaly_set(self, level: int) -> ParamSet:
        return GaussBox(
            (self.null_means[level] + self.anom_means[level]) / 2.0,
            (self.null_stds[level] + self.anom_stds[level]) / 2.0,
        )

    def node_param(self, level: int, anomalies: Sequence[ParamPoint]) -> ParamPoint:
        return self.known_anomaly(level) if anomalies else self.null(level)

    def known_anomaly(self, level: int) -> ParamPoint:
        return Gauss(self.anom_means[level], self.anom_stds[level])


def default_gauss_model(max_level: int = 10, delta: float = 0.1) -> GaussModel:
    """Synthetic sample-entropy tables; the anomaly dilutes slowly with level."""
    levels = range(max_level + 1)
    return GaussModel(
        null_means=tuple(4.0 for _ in levels),
        null_stds=tuple(0.5 for _ in levels),
        anom_means=tuple(4.0 - 1.5 / (1.0 + 0.1 * l) for l in levels),
        anom_stds=tuple(0.3 + 0.01 * l for l in levels),
        delta=delta,
    )


@dataclass(frozen=True)
class KnownHypotheses:
    """Wraps a model so every anomaly set collapses to the true one-anomaly point."""

    model: object
    kind: str = field(default="known", init=False)

    def null(self, level: int) -> ParamPoint:
        return self.model.null(level)

    def anomaly_set(self, level: int) -> ParamSet:
        return Singleton(self.model.known_anomaly(level))

    def node_param(self, level, anomalies):
        return self.model.node_param(level, anomalies)

    def known_anomaly(self, level: int) -> ParamPoint:
        return self.model.known_anomaly(level)

    def leaf_anomaly(self) -> ParamPoint:
        return self.model.leaf_anomaly()

    def check_levels(self, levels: int) -> None:
        self.model.check_levels(levels)

    def scenario_hash(self) -> str:
        return "known-" + self.model.scenario_hash()

    @property
    def delta(self) -> float:
        return self.model.delta


def model_from_dict(d: dict):
    """Build a scenario model from a plain mapping with a ``kind`` key."""
    d = dict(d)
    kind = d.pop("kind")
    d.pop("id", None)
    if kind == "exp":
        return ExpHeavyHitter(**d)
    if kind == "bernoulli":
        return BernoulliInterference(**d)
    if kind == "gauss":
        if not any(k in d for k in ("null_means", "null_stds", "anom_means", "anom_stds")):
            return default_gauss_model(**d)
        return GaussModel(**d)
    raise ValueError(f"unknown scenario kind {kind!r}")


def model_to_dict(model) -> dict:
    out = {"kind": model.kind}
    for k, v in asdict(model).items():
        out[k] = list(v) if isinstance(v, tuple) else v
    return out
