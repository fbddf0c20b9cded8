import io
import json

import numpy as np
import pytest

from hdsearch.local_tests import ALLR, Active, FixedSize, KnownLLR, Probe, SeqGLLR, TestConfig
from hdsearch.process_tree import NodeId, ProcessTree, children, parent
from hdsearch.scenarios import ExpHeavyHitter
from hdsearch.search_policies import WalkConfig, run_hds, run_irw, run_single_walk, write_trace

S1 = ExpHeavyHitter(lam0=1.0, lam1=1000.0, lam1_min=500.5)


def fixed_cfg(levels, leaf=ALLR(0), policy="hds", cost=0.01, cap=10**7):
    return WalkConfig(TestConfig(FixedSize((1,) * levels), leaf, cost), policy=policy, step_cap=cap)


def active_cfg(policy="hds"):
    return WalkConfig(TestConfig(Active(0.5 + 1e-16), SeqGLLR()), policy=policy)


def check_trajectory(trace, levels):
    """Consecutive nodes are (node, child), (node, parent) or (root, root)."""
    nodes = [NodeId(*ev["node"]) for ev in trace]
    for a, b in zip(nodes, nodes[1:]):
        assert b == parent(a, levels) or (a.level > 0 and b in children(a)), (a, b)


def test_m2_alternates_root_and_leaves():
    rng = np.random.default_rng(0)
    for _ in range(50):
        tree = ProcessTree.with_anomalies(1, S1, [int(rng.integers(1, 3))])
        trace = []
        leaf, _ = run_single_walk(tree, fixed_cfg(1), rng, trace)
        kinds = [ev["node"][0] for ev in trace]
        assert kinds[-1] == 0 and trace[-1]["outcome"] == "declare"
        # root tests either repeat (back to the root) or hand over to a leaf,
        # and every leaf test that does not declare returns to the root
        for a, b in zip(kinds, kinds[1:]):
            assert (a, b) in {(1, 1), (1, 0), (0, 1)}
        assert leaf.index in tree.true_leaves


def test_single_walk_accuracy_m8():
    rng = np.random.default_rng(1)
    hits = 0
    for t in range(10**4):
        tree = ProcessTree.with_anomalies(3, S1, [t % 8 + 1])
        leaf, _ = run_single_walk(tree, fixed_cfg(3), rng)
        hits += leaf is not None and leaf.index == t % 8 + 1
    assert hits / 10**4 >= 0.99


@pytest.mark.parametrize("cfg", [fixed_cfg(4, ALLR(3)), fixed_cfg(4, SeqGLLR()), active_cfg(), active_cfg("irw")])
def test_sample_accounting_on_replay(cfg):
    rng = np.random.default_rng(2)
    for _ in range(200):
        tree = ProcessTree.with_anomalies(4, S1, sorted(rng.choice(16, 2, replace=False) + 1))
        probe = Probe(tree, rng, cap=cfg.step_cap, record=True)
        trace = []
        res = run_hds(tree, 2, cfg, rng, trace=trace, probe=probe)
        assert res.total_samples == len(probe.log) == res.accounted_samples == sum(res.walk_samples)
        assert sum(ev["samples"] for ev in trace) == res.total_samples
        check_trajectory([ev for ev in trace if ev["walk"] == 0], 4)
        assert len(set(res.declared)) == len(res.declared)


def test_k1_reduces_to_single_walk():
    cfg = fixed_cfg(3)
    for seed in range(30):
        leaf, n = run_single_walk(ProcessTree.with_anomalies(3, S1, [5]), cfg, np.random.default_rng(seed))
        res = run_hds(ProcessTree.with_anomalies(3, S1, [5]), 1, cfg, np.random.default_rng(seed))
        assert res.declared == [leaf.index] and res.total_samples == n


def test_removed_leaf_is_never_sampled_again():
    rng = np.random.default_rng(3)
    cfg = fixed_cfg(2)
    for _ in range(300):
        tree = ProcessTree.with_anomalies(2, S1, [1, 2])
        probe = Probe(tree, rng, record=True)
        trace = []
        res = run_hds(tree, 2, cfg, rng, trace=trace, probe=probe)
        first_walk = sum(1 for ev in trace if ev["walk"] == 0)
        first = NodeId(0, res.declared[0])
        consumed = sum(ev["samples"] for ev in trace[:first_walk])
        assert first not in probe.log[consumed:]
        assert sorted(res.declared) == [1, 2]


def test_error_flag():
    rng = np.random.default_rng(4)
    # weak separation and a high cost make mistakes common
    weak = ExpHeavyHitter(lam0=1.0, lam1=3.0, lam1_min=2.0)
    cfg = fixed_cfg(3, cost=0.5)
    flags = []
    for _ in range(500):
        tree = ProcessTree.with_anomalies(3, weak, [5])
        res = run_hds(tree, 1, cfg, rng)
        assert res.error == (res.declared != [5])
        flags.append(res.error)
    assert any(flags) and not all(flags)


def test_step_cap_surfaces():
    rng = np.random.default_rng(5)
    tree = ProcessTree.with_anomalies(3, S1, [2])
    res = run_hds(tree, 1, fixed_cfg(3, cap=3), rng)
    assert res.cap_hit and res.error and res.declared == [] and res.total_samples == 3
    leaf, n = run_single_walk(ProcessTree.with_anomalies(3, S1, [2]), fixed_cfg(3, cap=3), rng)
    assert leaf is None and n == 3


def test_irw_equals_hds_with_singleton_sets():
    # a model whose composite sets are already the true singletons
    from hdsearch.scenarios import KnownHypotheses

    class SingletonModel:
        def __init__(self, base):
            self.base = base
            self.known = KnownHypotheses(base)

        def __getattr__(self, name):
            return getattr(self.base, name)

        def anomaly_set(self, level):
            return self.known.anomaly_set(level)

    model = SingletonModel(S1)
    for seed in range(50):
        t_irw, t_hds = [], []
        a = run_irw(ProcessTree(3, S1, {6: S1.leaf_anomaly()}), 1, fixed_cfg(3, KnownLLR(), "irw"), np.random.default_rng(seed), trace=t_irw)
        tree = ProcessTree(3, S1, {6: S1.leaf_anomaly()})
        tree.model = model
        b = run_hds(tree, 1, fixed_cfg(3, KnownLLR()), np.random.default_rng(seed), trace=t_hds)
        assert a.declared == b.declared and a.total_samples == b.total_samples
        assert [ev["stats"] for ev in t_irw] == [ev["stats"] for ev in t_hds]


def test_irw_forces_known_leaf():
    assert isinstance(WalkConfig(TestConfig(FixedSize((1,)), ALLR(0)), policy="irw").test.leaf, KnownLLR)
    with pytest.raises(ValueError):
        WalkConfig(TestConfig(FixedSize((1,)), ALLR(0)), policy="ds")


def test_irw_accuracy_m4():
    rng = np.random.default_rng(6)
    n = 10**4
    hits = 0
    for t in range(n):
        tree = ProcessTree.with_anomalies(2, S1, [t % 4 + 1])
        hits += run_irw(tree, 1, fixed_cfg(2, policy="irw"), rng).declared == [t % 4 + 1]
    assert hits / n >= 0.99


def test_multi_target_distinct_and_active():
    rng = np.random.default_rng(7)
    for _ in range(300):
        truth = sorted(rng.choice(16, 3, replace=False) + 1)
        tree = ProcessTree.with_anomalies(4, S1, truth)
        res = run_hds(tree, 3, active_cfg(), rng)
        assert len(res.declared) == 3 and len(set(res.declared)) == 3
        assert tree.removed == set(res.declared)


def test_sublinear_search_cost():
    rng = np.random.default_rng(8)
    means = {}
    for levels in (3, 6):
        m = 2**levels
        tot = 0
        for t in range(10**4):
            tree = ProcessTree.with_anomalies(levels, S1, [t % m + 1])
            tot += run_hds(tree, 1, fixed_cfg(levels), rng).total_samples
        means[m] = tot / 10**4
    assert means[64] / means[8] <= 3


def test_k_out_of_range():
    tree = ProcessTree.with_anomalies(2, S1, [1])
    with pytest.raises(ValueError):
        run_hds(tree, 4, fixed_cfg(2), np.random.default_rng(0))


def test_write_trace_lines():
    rng = np.random.default_rng(9)
    trace = []
    run_hds(ProcessTree.with_anomalies(3, S1, [3]), 1, fixed_cfg(3), rng, trace=trace)
    buf = io.StringIO()
    write_trace(trace, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == len(trace)
    first = json.loads(lines[0])
    assert first["node"] == [3, 1] and set(first) >= {"walk", "node", "outcome", "samples", "stats"}
