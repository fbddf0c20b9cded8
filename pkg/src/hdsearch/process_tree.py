"""Binary tree of ``M = 2**L`` processes with ground truth and leaf pruning.

Nodes are addressed as ``(level, index)``: leaves are ``(0, 1..M)`` and the
root is ``(L, 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import dist_models as dm


class NodeId(NamedTuple):
    level: int
    index: int


def children(node: NodeId) -> tuple[NodeId, NodeId]:
    if node.level < 1:
        raise ValueError(f"leaf {node} has no children")
    l, j = node.level - 1, 2 * node.index
    return NodeId(l, j - 1), NodeId(l, j)


def parent(node: NodeId, levels: int) -> NodeId:
    """Parent of ``node``; the root is its own parent."""
    if node.level >= levels:
        return NodeId(levels, 1)
    return NodeId(node.level + 1, (node.index + 1) // 2)


def leaf_range(node: NodeId) -> range:
    width = 2**node.level
    return range((node.index - 1) * width + 1, node.index * width + 1)


class TreeError(Exception):
    pass


class ProcessTree:
    """One trial's tree: topology, true anomalies and removed leaves.

    ``anomalies`` maps anomalous leaf index to its true leaf parameter.
    """

    def __init__(self, levels: int, model, anomalies: dict[int, dm.ParamPoint]):
        if levels < 1:
            raise ValueError("a tree needs at least one level (M >= 2)")
        model.check_levels(levels)
        m = 2**levels
        if not 1 <= len(anomalies) < m:
            raise ValueError(f"need 1 <= K < M, got K={len(anomalies)}, M={m}")
        if any(not 1 <= i <= m for i in anomalies):
            raise ValueError("anomalous leaf index out of range")
        leaf_set = model.anomaly_set(0)
        for p in anomalies.values():
            if not leaf_set.contains(p):
                raise ValueError(f"leaf anomaly {p} is outside the leaf anomaly set")
        self.levels = levels
        self.model = model
        self.anomalies = dict(anomalies)
        self.removed: set[int] = set()
        self._param_cache: dict[NodeId, dm.ParamPoint] = {}

    @classmethod
    def with_anomalies(cls, levels: int, model, leaves: Iterable[int]) -> "ProcessTree":
        p = model.leaf_anomaly()
        return cls(levels, model, {int(i): p for i in leaves})

    @property
    def M(self) -> int:
        return 2**self.levels

    @property
    def root(self) -> NodeId:
        return NodeId(self.levels, 1)

    @property
    def true_leaves(self) -> frozenset:
        return frozenset(self.anomalies)

    def parent(self, node: NodeId) -> NodeId:
        return parent(node, self.levels)

    def _active_anomalies(self, node: NodeId) -> list:
        r = leaf_range(node)
        return [p for i, p in sorted(self.anomalies.items()) if i in r and i not in self.removed]

    def anomaly_count_beneath(self, node: NodeId) -> int:
        return len(self._active_anomalies(node))

    def active_count(self, node: NodeId) -> int:
        r = leaf_range(node)
        return len(r) - sum(1 for i in self.removed if i in r)

    def is_active(self, node: NodeId) -> bool:
        return self.active_count(node) > 0

    def active_children(self, node: NodeId) -> list[NodeId]:
        return [c for c in children(node) if self.is_active(c)]

    def true_param(self, node: NodeId) -> dm.ParamPoint:
        p = self._param_cache.get(node)
        if p is None:
            if not self.is_active(node):
                raise TreeError(f"node {tuple(node)} is fully removed")
            p = self.model.node_param(node.level, self._active_anomalies(node))
            self._param_cache[node] = p
        return p

    def sample_node(self, node: NodeId, rng: np.random.Generator) -> float:
        return dm.sample(self.true_param(node), rng)

    def remove_leaf(self, leaf: NodeId) -> None:
        """Exclude a declared leaf from all later sampling and traversal."""
        if leaf.level != 0 or not 1 <= leaf.index <= self.M:
            raise TreeError(f"{tuple(leaf)} is not a leaf of this tree")
        if leaf.index in self.removed:
            raise TreeError(f"leaf {leaf.index} already removed")
        self.removed.add(leaf.index)
        self._param_cache.clear()


# ---------------------------------------------------------------------------
# distinguishability checks


@dataclass
class ValidationReport:
    delta: float
    violations: list = field(default_factory=list)
    # (level, min D(null||theta), min D(theta||null)) over representatives
    level_kl: list = field(default_factory=list)
    # (level, anomalies beneath, best margin D(theta_j||null) - D(theta_j||theta_1))
    multi_margin: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _margin_candidates(pset: dm.ParamSet, target: dm.ParamPoint) -> list:
    cands = dm.representatives(pset)
    if isinstance(pset, dm.RateHalfLine):
        cands.append(dm.ExpRate(max(target.rate, pset.min_rate)))
    elif isinstance(pset, dm.GaussBox):
        cands.append(dm.Gauss(min(target.mean, pset.mean_max), min(target.std, pset.std_max)))
    return cands


def validate_scenario(model, levels: int, delta: float | None = None, max_anomalies: int = 1) -> ValidationReport:
    """Check the KL separation margins of ``model`` on a tree of ``levels`` levels.

    Only the tested levels ``0..levels-1`` are checked (the root itself is
    never sampled by a test).  Every level must keep both KL directions between the null and the
    anomaly set's representatives at least ``delta``.  With several anomalies,
    nodes holding ``j`` of them must be closer (by ``delta`` in KL) to some
    one-anomaly parameter than to the null.
    """
    delta = model.delta if delta is None else delta
    rep = ValidationReport(delta)
    for l in range(levels):
        null = model.null(l)
        reps = dm.representatives(model.anomaly_set(l))
        fwd = min(dm.kl_div(null, th) for th in reps)
        bwd = min(dm.kl_div(th, null) for th in reps)
        rep.level_kl.append((l, fwd, bwd))
        if fwd < delta:
            rep.violations.append(f"level {l}: D(null||theta) = {fwd:.6g} < {delta}")
        if bwd < delta:
            rep.violations.append(f"level {l}: D(theta||null) = {bwd:.6g} < {delta}")
    leaf = model.leaf_anomaly()
    for l in range(1, levels):
        null, pset = model.null(l), model.anomaly_set(l)
        for j in range(2, min(max_anomalies, 2**l) + 1):
            theta_j = model.node_param(l, [leaf] * j)
            d0 = dm.kl_div(theta_j, null)
            margin = max(d0 - dm.kl_div(theta_j, th) for th in _margin_candidates(pset, theta_j))
            rep.multi_margin.append((l, j, margin))
            if not margin >= delta:
                rep.violations.append(f"level {l}, {j} anomalies: margin {margin:.6g} < {delta}")
    return rep
