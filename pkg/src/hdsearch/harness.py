"""Monte-Carlo estimation of Bayesian risk, error rate and sample complexity.

Every trial owns a random stream derived from ``(base_seed, M, trial)``, so
the ground truth and sample path of a trial do not depend on the policy,
the worker count or the order in which trials run.  Policies evaluated on
the same configuration therefore see common random numbers.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np
import yaml

from .calibration import CalibrationError, calibrate_k, sizes_for
from .local_tests import ALLR, Active, FixedSize, KnownLLR, SeqGLLR, TestConfig
from .process_tree import ProcessTree, validate_scenario
from .scenarios import (
    BernoulliInterference,
    ExpHeavyHitter,
    KnownHypotheses,
    default_gauss_model,
    model_from_dict,
    model_to_dict,
)
from .search_policies import DEFAULT_STEP_CAP, WalkConfig, run_hds

log = logging.getLogger(__name__)

NEAR_HALF = 0.5 + 1e-16

CSV_FIELDS = (
    "scenario",
    "policy",
    "M",
    "K",
    "c",
    "runs",
    "error_rate",
    "error_rate_se",
    "mean_samples",
    "mean_samples_se",
    "risk",
    "risk_se",
    "cap_hits",
)
_INT_FIELDS = {"M", "K", "runs", "cap_hits"}
_STR_FIELDS = {"scenario", "policy"}


@dataclass(frozen=True)
class PolicySpec:
    name: str
    policy: str = "hds"
    internal: str = "fixed"
    leaf: str = "allr"
    n0: int = 0
    p: float = NEAR_HALF

    def __post_init__(self):
        if self.internal not in ("fixed", "active"):
            raise ValueError(f"unknown internal test {self.internal!r}")
        if self.leaf not in ("allr", "seqgllr", "known"):
            raise ValueError(f"unknown leaf test {self.leaf!r}")
        if self.policy == "irw" and self.leaf != "known":
            object.__setattr__(self, "leaf", "known")

    def hypotheses(self, model):
        return KnownHypotheses(model) if self.policy == "irw" else model

    def leaf_kind(self):
        return {"allr": ALLR(self.n0), "seqgllr": SeqGLLR(), "known": KnownLLR()}[self.leaf]


PRESETS = {
    "hds": PolicySpec("hds"),
    "hds-gllr": PolicySpec("hds-gllr", leaf="seqgllr"),
    "hds-active": PolicySpec("hds-active", internal="active", leaf="seqgllr"),
    "irw": PolicySpec("irw", policy="irw", leaf="known"),
    "irw-active": PolicySpec("irw-active", policy="irw", internal="active", leaf="known"),
}

# name -> (model, default K, default policies)
CATALOG = {
    "s1": (ExpHeavyHitter(lam0=1.0, lam1=1000.0, lam1_min=500.5), 1, ("hds", "irw")),
    "s2": (BernoulliInterference(lam0=0.1, shift_neg=-6.0, a_set=(1, 5, 10), a_true=10.0), 1, ("hds", "irw")),
    "s3": (ExpHeavyHitter(lam0=1.0, lam1=1000.0, lam1_min=500.5), 5, ("hds-active", "irw-active")),
    "s4": (default_gauss_model(), 1, ("hds-active", "irw-active")),
}


def policy_from(value) -> PolicySpec:
    if isinstance(value, PolicySpec):
        return value
    if isinstance(value, str):
        try:
            return PRESETS[value]
        except KeyError:
            raise ValueError(f"unknown policy preset {value!r}; choose from {sorted(PRESETS)}") from None
    return PolicySpec(**value)


def levels_of(m: int) -> int:
    if m < 2 or m & (m - 1):
        raise ValueError(f"M must be a power of two >= 2, got {m}")
    return m.bit_length() - 1


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: object
    M_values: tuple
    K: int = 1
    cost: float = 0.01
    policies: tuple = (PRESETS["hds"],)
    runs: int = 1000
    base_seed: int = 0
    workers: int = 1
    scenario_id: str = "custom"
    # {(scenario_hash, level): K_l}; filled by auto-calibration when enabled
    calibration: dict | None = None
    auto_calibrate: bool = False
    calib_margin: float = 0.05
    calib_runs: int = 10**4
    step_cap: int = DEFAULT_STEP_CAP

    def __post_init__(self):
        object.__setattr__(self, "M_values", tuple(int(m) for m in self.M_values))
        object.__setattr__(self, "policies", tuple(policy_from(p) for p in self.policies))
        for m in self.M_values:
            levels_of(m)
            if not 1 <= self.K < m:
                raise ValueError(f"need 1 <= K < M, got K={self.K}, M={m}")
        if not 0.0 < self.cost < 1.0:
            raise ValueError("c must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class RiskRow:
    scenario: str
    policy: str
    M: int
    K: int
    c: float
    runs: int
    error_rate: float
    error_rate_se: float
    mean_samples: float
    mean_samples_se: float
    risk: float
    risk_se: float
    cap_hits: int

    def check_identity(self) -> None:
        if self.risk != self.error_rate + self.c * self.mean_samples:
            raise ValueError(f"risk column inconsistent for {self.policy} M={self.M}")


@dataclass
class RiskReport:
    rows: list = field(default_factory=list)

    def row(self, policy: str, m: int) -> RiskRow:
        for r in self.rows:
            if r.policy == policy and r.M == m:
                return r
        raise KeyError((policy, m))


# ---------------------------------------------------------------------------
# trials


def trial_rng(base_seed: int, m: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(m, trial_index)))


def build_trial(config: ExperimentConfig, m: int, trial_index: int) -> tuple[ProcessTree, np.random.Generator]:
    """Ground truth drawn uniformly over K-subsets of leaves, plus the trial's stream."""
    levels = levels_of(m)
    if not 1 <= config.K < m:
        raise ValueError(f"need 1 <= K < M, got K={config.K}, M={m}")
    rng = trial_rng(config.base_seed, m, trial_index)
    leaves = rng.choice(m, size=config.K, replace=False) + 1
    return ProcessTree.with_anomalies(levels, config.scenario, leaves.tolist()), rng


def walk_config(config: ExperimentConfig, spec: PolicySpec, levels: int) -> WalkConfig:
    if spec.internal == "fixed":
        if config.calibration is None:
            raise CalibrationError("fixed-size internal tests need a calibration")
        internal = FixedSize(sizes_for(config.calibration, spec.hypotheses(config.scenario), levels))
    else:
        internal = Active(spec.p)
    test = TestConfig(internal, spec.leaf_kind(), config.cost)
    return WalkConfig(test, policy=spec.policy, step_cap=config.step_cap)


def run_trial(config: ExperimentConfig, spec: PolicySpec, m: int, trial_index: int, trace: list | None = None):
    tree, rng = build_trial(config, m, trial_index)
    res = run_hds(tree, config.K, walk_config(config, spec, tree.levels), rng, trace=trace)
    return res.error, res.total_samples, res.cap_hit


def _trial_chunk(config, spec, m, indices):
    return [run_trial(config, spec, m, i) for i in indices]


def ensure_calibration(config: ExperimentConfig) -> ExperimentConfig:
    """Fill missing calibration entries when auto-calibration is enabled."""
    levels = levels_of(max(config.M_values))
    table = dict(config.calibration or {})
    for spec in config.policies:
        if spec.internal != "fixed":
            continue
        hyp = spec.hypotheses(config.scenario)
        try:
            sizes_for(table, hyp, levels)
            continue
        except CalibrationError:
            if not config.auto_calibrate:
                raise
        log.info("calibrating %s for %d levels", spec.name, levels)
        sizes = calibrate_k(
            config.scenario,
            levels,
            margin=config.calib_margin,
            runs=config.calib_runs,
            seed=config.base_seed,
            hyp=hyp,
            n_anomalies=config.K,
        )
        table.update({(hyp.scenario_hash(), l): k for l, k in enumerate(sizes)})
    return replace(config, calibration=table)


def _se(x: np.ndarray) -> float:
    return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0


def summarize(config: ExperimentConfig, spec: PolicySpec, m: int, outcomes) -> RiskRow:
    err = np.array([o[0] for o in outcomes], dtype=float)
    n = np.array([o[1] for o in outcomes], dtype=float)
    error_rate = float(err.mean())
    mean_samples = float(n.mean())
    return RiskRow(
        scenario=config.scenario_id,
        policy=spec.name,
        M=m,
        K=config.K,
        c=config.cost,
        runs=len(outcomes),
        error_rate=error_rate,
        error_rate_se=_se(err),
        mean_samples=mean_samples,
        mean_samples_se=_se(n),
        risk=error_rate + config.cost * mean_samples,
        risk_se=_se(err + config.cost * n),
        cap_hits=int(sum(1 for o in outcomes if o[2])),
    )


def run_monte_carlo(config: ExperimentConfig, trace_out=None) -> RiskReport:
    """Estimate risk for every (policy, M); independent of ``config.workers``.

    ``trace_out``, when given, receives JSON lines for trial 0 of every
    (policy, M) pair.
    """
    if config.runs < 1:
        raise ValueError("runs must be >= 1")
    report = validate_scenario(config.scenario, levels_of(max(config.M_values)), max_anomalies=config.K)
    if not report.ok:
        raise ValueError("scenario fails validation: " + "; ".join(report.violations))
    config = ensure_calibration(config)
    out = RiskReport()
    chunk = max(1, config.runs // (8 * config.workers))
    blocks = [range(i, min(i + chunk, config.runs)) for i in range(0, config.runs, chunk)]
    pool = ProcessPoolExecutor(config.workers) if config.workers > 1 else None
    try:
        for spec in config.policies:
            for m in config.M_values:
                work = partial(_trial_chunk, config, spec, m)
                mapped = pool.map(work, blocks) if pool else map(work, blocks)
                outcomes = [o for block in mapped for o in block]
                out.rows.append(summarize(config, spec, m, outcomes))
                if trace_out is not None:
                    trace: list = []
                    run_trial(config, spec, m, 0, trace=trace)
                    for ev in trace:
                        trace_out.write(json.dumps({"policy": spec.name, "M": m, "trial": 0, **ev}) + "\n")
                log.info("%s M=%d risk=%.4g", spec.name, m, out.rows[-1].risk)
    finally:
        if pool:
            pool.shutdown()
    return out


# ---------------------------------------------------------------------------
# reports


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def emit_report(report: RiskReport, fmt: str, path) -> None:
    if not report.rows:
        raise ValueError("empty report")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in report.rows:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in CSV_FIELDS])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps({"rows": [asdict(r) for r in report.rows]}, indent=2) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    Path(path).write_text(text)


def _coerce(k, v):
    if k in _STR_FIELDS:
        return str(v)
    if k in _INT_FIELDS:
        return int(v)
    return float(v)


def read_report(path) -> RiskReport:
    """Parse a CSV or JSON report and re-verify the risk identity per row."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        raw = json.loads(text)["rows"]
    else:
        raw = list(csv.DictReader(io.StringIO(text)))
    rows = [RiskRow(**{k: _coerce(k, d[k]) for k in CSV_FIELDS}) for d in raw]
    for r in rows:
        r.check_identity()
    return RiskReport(rows)


# ---------------------------------------------------------------------------
# config files


def scenario_from(value):
    """A catalog name (``s1``..``s4``) or a mapping with a ``kind`` key."""
    if isinstance(value, str):
        return CATALOG[value][0], value
    return model_from_dict(value), value.get("id", value["kind"])


def load_config(path) -> ExperimentConfig:
    """Read a YAML experiment configuration.

    ``calibration`` may be ``auto``, a path to a calibration document, or a
    mapping with ``margin`` / ``runs`` for auto-calibration.
    """
    from .calibration import load_calibration

    raw = yaml.safe_load(Path(path).read_text())
    model, sid = scenario_from(raw["scenario"])
    kw = dict(
        scenario=model,
        scenario_id=str(raw.get("id", sid)),
        M_values=tuple(raw["M"]),
        K=int(raw.get("K", CATALOG[sid][1] if sid in CATALOG else 1)),
        cost=float(raw.get("c", 0.01)),
        policies=tuple(raw.get("policies", CATALOG[sid][2] if sid in CATALOG else ("hds",))),
        runs=int(raw.get("runs", 1000)),
        base_seed=int(raw.get("seed", 0)),
        workers=int(raw.get("workers", 1)),
        step_cap=int(raw.get("step_cap", DEFAULT_STEP_CAP)),
    )
    cal = raw.get("calibration", "auto")
    if cal == "auto":
        kw["auto_calibrate"] = True
    elif isinstance(cal, dict):
        kw.update(auto_calibrate=True, calib_margin=float(cal.get("margin", 0.05)), calib_runs=int(cal.get("runs", 10**4)))
    elif cal is not None:
        cal_path = Path(cal)
        if not cal_path.is_absolute():
            cal_path = Path(path).parent / cal_path
        kw["calibration"] = load_calibration(cal_path)
    return ExperimentConfig(**kw)


def config_to_dict(config: ExperimentConfig) -> dict:
    return {
        "scenario": model_to_dict(config.scenario),
        "id": config.scenario_id,
        "M": list(config.M_values),
        "K": config.K,
        "c": config.cost,
        "policies": [asdict(p) for p in config.policies],
        "runs": config.runs,
        "seed": config.base_seed,
        "workers": config.workers,
    }
