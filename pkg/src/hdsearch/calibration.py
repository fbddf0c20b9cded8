"""Offline choice of fixed internal-test sample sizes.

For every child level ``l`` the calibration looks for the smallest ``K_l``
such that a node at level ``l + 1`` steps toward the (closest) anomaly with
probability at least ``1/2 + margin``, with a 4-SE Monte-Carlo cushion,
under every occupancy event:

* ``E0`` -- no anomaly beneath the tested node (toward = back to the parent),
* ``Ej`` -- ``j >= 1`` anomalies beneath it (toward = into an occupied child).

Anomalous children use worst-case parameters: the boundary of a half-line
or box, and every element of a finite set.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dist_models as dm
from .process_tree import validate_scenario
from .test_statistics import gllr_batch

Z_CUSHION = 4.0


class CalibrationError(Exception):
    pass


@dataclass
class DriftEstimate:
    level: int
    k: int
    runs: int
    # event name -> (worst-case toward-anomaly probability, its standard error)
    events: dict = field(default_factory=dict)

    def lower_bound(self, z: float = Z_CUSHION) -> float:
        return min(p - z * se for p, se in self.events.values())


def _event_anomalies(name) -> int:
    if isinstance(name, int):
        return name
    if isinstance(name, str) and name.upper().startswith("E"):
        return int(name[1:])
    raise ValueError(f"bad event name {name!r}")


def _splits(j: int, child_level: int):
    cap = 2**child_level
    if j == 0:
        return [(0, 0)]
    return [(a, j - a) for a in range(0, j + 1) if a <= cap and j - a <= cap]


def _child_params(model, hyp, child_level: int, count: int) -> list:
    """Candidate true parameters of a child holding ``count`` anomalies."""
    if count == 0:
        return [model.null(child_level)]
    if count == 1:
        return dm.representatives(hyp.anomaly_set(child_level))
    return [model.node_param(child_level, [p] * count) for p in dm.representatives(hyp.anomaly_set(0))]


def _toward_probability(model, hyp, child_level, k, split, rng, runs) -> list:
    theta0 = hyp.null(child_level)
    set1 = hyp.anomaly_set(child_level)
    out = []
    for p_left in _child_params(model, hyp, child_level, split[0]):
        for p_right in _child_params(model, hyp, child_level, split[1]):
            s_left = gllr_batch(dm.sample_array(p_left, rng, (runs, k)), theta0, set1)
            s_right = gllr_batch(dm.sample_array(p_right, rng, (runs, k)), theta0, set1)
            up = (s_left <= 0) & (s_right <= 0)
            right = ~up & (s_right > s_left)
            left = ~up & ~right
            if split == (0, 0):
                good = up
            else:
                good = np.zeros(runs, dtype=bool)
                if split[0]:
                    good |= left
                if split[1]:
                    good |= right
            prob = float(good.mean())
            out.append((prob, math.sqrt(prob * (1.0 - prob) / runs)))
    return out


def estimate_drift(
    model,
    level: int,
    k: int,
    events=("E0", "E1"),
    runs: int = 10**4,
    rng: np.random.Generator | None = None,
    hyp=None,
    check: bool = True,
) -> DriftEstimate:
    """Empirical toward-anomaly step probabilities of the fixed internal test.

    ``level`` is the children's level; ``hyp`` supplies the tested
    hypotheses (defaults to the model itself, i.e. composite sets).
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    if runs < 1000:
        raise ValueError("drift estimation needs at least 1000 runs")
    hyp = model if hyp is None else hyp
    if check:
        report = validate_scenario(model, level + 1)
        if not report.ok:
            raise CalibrationError("scenario fails validation: " + "; ".join(report.violations))
    rng = np.random.default_rng() if rng is None else rng
    est = DriftEstimate(level, k, runs)
    for ev in events:
        j = _event_anomalies(ev)
        results = []
        for split in _splits(j, level):
            results.extend(_toward_probability(model, hyp, level, k, split, rng, runs))
        if results:
            est.events[f"E{j}"] = min(results, key=lambda t: t[0] - Z_CUSHION * t[1])
    return est


def calibrate_k(
    model,
    levels: int,
    margin: float = 0.05,
    max_k: int = 64,
    runs: int = 10**4,
    seed: int = 0,
    hyp=None,
    n_anomalies: int = 1,
    check: bool = True,
) -> tuple:
    """Smallest per-level sample sizes ``(K_0, ..., K_{L-1})`` with the required drift."""
    if not 0.0 < margin < 0.5:
        raise ValueError("margin must lie in (0, 1/2)")
    if max_k < 1:
        raise ValueError("max_k must be >= 1")
    if check:
        report = validate_scenario(model, levels, max_anomalies=n_anomalies)
        if not report.ok:
            raise CalibrationError("scenario fails validation: " + "; ".join(report.violations))
    sizes = []
    for level in range(levels):
        events = ["E0"] + [f"E{j}" for j in range(1, min(n_anomalies, 2 ** (level + 1)) + 1)]
        for k in range(1, max_k + 1):
            rng = np.random.default_rng([seed, level, k])
            est = estimate_drift(model, level, k, events, runs, rng, hyp=hyp, check=False)
            if est.lower_bound() >= 0.5 + margin:
                sizes.append(k)
                break
        else:
            raise CalibrationError(f"no K <= {max_k} gives the required drift at level {level}")
    return tuple(sizes)


def calibration_document(hyp, sizes, *, margin: float, runs: int, seed: int) -> dict:
    h = hyp.scenario_hash()
    return {
        "margin": margin,
        "runs": runs,
        "seed": seed,
        "entries": [{"scenario": h, "level": l, "K": int(k)} for l, k in enumerate(sizes)],
    }


def save_calibration(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_calibration(path) -> dict:
    """Read a calibration document into ``{(scenario_hash, level): K}``."""
    doc = json.loads(Path(path).read_text())
    return {(e["scenario"], int(e["level"])): int(e["K"]) for e in doc["entries"]}


def sizes_for(table: dict, hyp, levels: int) -> tuple:
    h = hyp.scenario_hash()
    try:
        return tuple(table[(h, l)] for l in range(levels))
    except KeyError as exc:
        raise CalibrationError(f"no calibration for scenario {h} level {exc.args[0][1]}") from None
