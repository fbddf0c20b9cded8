import csv
import json
import math

import numpy as np
import pytest

from hdsearch.calibration import CalibrationError, load_calibration
from hdsearch.cli import main
from hdsearch.harness import (
    CATALOG,
    CSV_FIELDS,
    PRESETS,
    ExperimentConfig,
    RiskReport,
    RiskRow,
    build_trial,
    emit_report,
    load_config,
    read_report,
    run_monte_carlo,
    summarize,
)
from hdsearch.process_tree import NodeId
from hdsearch.scenarios import KnownHypotheses

S1 = CATALOG["s1"][0]
S1_CAL = {(h, l): 1 for h in (S1.scenario_hash(), KnownHypotheses(S1).scenario_hash()) for l in range(7)}


def cfg(**kw):
    base = dict(scenario=S1, scenario_id="s1", M_values=(8,), runs=200, calibration=S1_CAL, policies=("hds",))
    base.update(kw)
    return ExperimentConfig(**base)


def test_catalog_parameters():
    s1, k1, _ = CATALOG["s1"]
    assert (s1.lam0, s1.lam1, s1.lam1_min, k1) == (1.0, 1000.0, 500.5, 1)
    s2 = CATALOG["s2"][0]
    assert (s2.lam0, s2.shift_neg, tuple(s2.a_set), s2.a_true) == (0.1, -6.0, (1, 5, 10), 10.0)
    s3, k3, pol3 = CATALOG["s3"]
    assert s3 == s1 and k3 == 5
    assert all(PRESETS[p].internal == "active" and PRESETS[p].leaf in ("seqgllr", "known") for p in pol3)


def test_build_trial_deterministic():
    c = cfg(K=2, M_values=(16,))
    t1, r1 = build_trial(c, 16, 7)
    t2, r2 = build_trial(c, 16, 7)
    assert t1.true_leaves == t2.true_leaves
    assert [t1.sample_node(NodeId(4, 1), r1) for _ in range(5)] == [t2.sample_node(NodeId(4, 1), r2) for _ in range(5)]
    t3, _ = build_trial(c, 16, 8)
    t4, _ = build_trial(cfg(K=2, M_values=(16,), base_seed=1), 16, 7)
    assert (t3.true_leaves, t4.true_leaves) != (t1.true_leaves, t1.true_leaves)


def test_build_trial_uniform_prior():
    c = cfg(M_values=(8,))
    n = 10**5
    counts = np.zeros(8)
    for i in range(n):
        tree, _ = build_trial(c, 8, i)
        counts[next(iter(tree.true_leaves)) - 1] += 1
    freq = counts / n
    se = math.sqrt((1 / 8) * (7 / 8) / n)
    assert np.all(np.abs(freq - 1 / 8) <= 4 * se)


def test_build_trial_k_equals_m_minus_one():
    c = cfg(K=3, M_values=(4,))
    for i in range(200):
        tree, _ = build_trial(c, 4, i)
        assert len(tree.true_leaves) == 3 and len(set(range(1, 5)) - tree.true_leaves) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        cfg(M_values=(6,))
    with pytest.raises(ValueError):
        cfg(K=8)
    with pytest.raises(ValueError):
        cfg(cost=1.0)
    with pytest.raises(ValueError):
        run_monte_carlo(cfg(runs=0))
    with pytest.raises(CalibrationError):
        run_monte_carlo(cfg(calibration=None))


def test_risk_arithmetic():
    row = summarize(cfg(), PRESETS["hds"], 8, [(True, 120, False)] + [(False, 120, False)] * 49)
    assert row.error_rate == 0.02 and row.mean_samples == 120.0
    assert row.risk == pytest.approx(1.22)
    row.check_identity()
    bad = RiskRow(**{**row.__dict__, "risk": 1.3})
    with pytest.raises(ValueError):
        bad.check_identity()


def test_report_fields_and_ses():
    rep = run_monte_carlo(cfg(policies=("hds", "irw", "hds-active"), M_values=(4, 8)))
    assert len(rep.rows) == 6
    for r in rep.rows:
        r.check_identity()
        assert r.runs == 200 and r.cap_hits == 0 and r.mean_samples_se > 0
    assert rep.row("irw", 4).M == 4


def test_worker_count_does_not_change_report(tmp_path):
    c = cfg(policies=("hds", "hds-active"), M_values=(4, 16), runs=400)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_report(run_monte_carlo(c), "csv", a)
    emit_report(run_monte_carlo(ExperimentConfig(**{**c.__dict__, "workers": 8})), "csv", b)
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_report_round_trip(tmp_path, fmt):
    rep = run_monte_carlo(cfg(policies=("hds", "irw")))
    path = tmp_path / f"r.{fmt}"
    emit_report(rep, fmt, path)
    back = read_report(path)
    assert back.rows == rep.rows


def test_one_row_csv_layout(tmp_path):
    rep = run_monte_carlo(cfg())
    path = tmp_path / "one.csv"
    emit_report(rep, "csv", path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0] == ",".join(CSV_FIELDS)
    row = next(csv.DictReader(path.open()))
    assert float(row["risk"]) == float(row["error_rate"]) + float(row["c"]) * float(row["mean_samples"])


def test_read_report_rejects_tampered_risk(tmp_path):
    rep = run_monte_carlo(cfg())
    path = tmp_path / "t.json"
    emit_report(rep, "json", path)
    doc = json.loads(path.read_text())
    doc["rows"][0]["risk"] += 1e-3
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        read_report(path)


def test_emit_rejects_empty_and_unknown(tmp_path):
    with pytest.raises(ValueError):
        emit_report(RiskReport(), "csv", tmp_path / "x.csv")
    with pytest.raises(ValueError):
        emit_report(run_monte_carlo(cfg()), "xml", tmp_path / "x.xml")


# -- configuration files and CLI ------------------------------------------------


def test_yaml_config(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text(
        "scenario: s1\nM: [4, 8]\nK: 1\nc: 0.01\nruns: 50\nseed: 3\n"
        "policies: [hds, {name: slow-leaf, leaf: allr, n0: 2}]\n"
        "calibration: {margin: 0.05, runs: 2000}\n"
    )
    c = load_config(path)
    assert c.M_values == (4, 8) and c.base_seed == 3 and c.auto_calibrate and c.calib_runs == 2000
    assert c.policies[1].n0 == 2
    rep = run_monte_carlo(c)
    assert [r.policy for r in rep.rows] == ["hds", "hds", "slow-leaf", "slow-leaf"]


def test_cli_calibrate_run_sweep(tmp_path):
    cal = tmp_path / "cal.json"
    assert main(["calibrate", "--scenario", "s1", "--runs", "2000", "--levels", "3", "--out", str(cal)]) == 0
    table = load_calibration(cal)
    assert set(table.values()) == {1} and len(table) == 6

    conf = tmp_path / "exp.yaml"
    conf.write_text(f"scenario: s1\nM: [4, 8]\nruns: 100\npolicies: [hds, irw]\ncalibration: {cal}\n")
    out = tmp_path / "run.csv"
    trace = tmp_path / "trace.jsonl"
    assert main(["run", "--config", str(conf), "--out", str(out), "--trace", str(trace)]) == 0
    assert len(read_report(out).rows) == 4
    events = [json.loads(l) for l in trace.read_text().splitlines()]
    assert {(e["policy"], e["M"]) for e in events} == {("hds", 4), ("hds", 8), ("irw", 4), ("irw", 8)}

    sweep = tmp_path / "sweep.json"
    argv = ["sweep", "--scenario", "s1", "--policies", "hds,irw", "--M", "4,8", "--K", "1", "--c", "0.01",
            "--runs", "100", "--seed", "0", "--calibration", str(cal), "--out", str(sweep)]
    assert main(argv) == 0
    rows = json.loads(sweep.read_text())["rows"]
    assert [(r["policy"], r["M"]) for r in rows] == [("hds", 4), ("hds", 8), ("irw", 4), ("irw", 8)]
    # same seed, same numbers as the config-driven run
    assert read_report(sweep).rows == read_report(out).rows


def test_inline_scenario_config(tmp_path):
    path = tmp_path / "g.yaml"
    path.write_text(
        "scenario: {kind: gauss, id: gauss-default, max_level: 4}\n"
        "M: [8]\nruns: 30\npolicies: [hds-active]\ncalibration: null\n"
    )
    c = load_config(path)
    assert c.scenario_id == "gauss-default" and c.scenario.max_level == 4
    assert run_monte_carlo(c).rows[0].cap_hits == 0
