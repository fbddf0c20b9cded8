"""Random-walk search engines: single-target walk, K-target HDS and IRW."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import IO, Iterable

import numpy as np

from .local_tests import (
    KnownLLR,
    LeafOutcome,
    Move,
    Probe,
    StepCapExceeded,
    TestConfig,
    internal_test,
    leaf_test,
)
from .process_tree import NodeId, ProcessTree, children
from .scenarios import KnownHypotheses

DEFAULT_STEP_CAP = 10**7


@dataclass(frozen=True)
class WalkConfig:
    test: TestConfig
    policy: str = "hds"
    step_cap: int = DEFAULT_STEP_CAP

    def __post_init__(self):
        if self.policy not in ("hds", "irw"):
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.policy == "irw" and not isinstance(self.test.leaf, KnownLLR):
            object.__setattr__(self, "test", dataclasses.replace(self.test, leaf=KnownLLR()))

    def hypotheses(self, model):
        return KnownHypotheses(model) if self.policy == "irw" else model


@dataclass
class DetectionResult:
    declared: list
    total_samples: int
    walk_samples: list
    error: bool
    cap_hit: bool
    truth: frozenset = field(default_factory=frozenset)
    # sum of per-test sample counts; equals total_samples by construction
    accounted_samples: int = 0


def _walk(probe: Probe, config: WalkConfig, hyp, trace: list | None, walk_id: int) -> tuple[NodeId, int]:
    tree = probe.tree
    node = tree.root
    used = 0
    while True:
        if node.level == 0:
            res = leaf_test(probe, node, config.test, hyp)
            nxt = node if res.outcome is LeafOutcome.DECLARE else tree.parent(node)
        else:
            res = internal_test(probe, node, config.test.internal, hyp)
            if res.outcome is Move.PARENT:
                nxt = tree.parent(node)
            else:
                nxt = children(node)[0 if res.outcome is Move.LEFT else 1]
        used += res.samples
        if trace is not None:
            trace.append(
                {
                    "walk": walk_id,
                    "node": [node.level, node.index],
                    "outcome": res.outcome.value,
                    "samples": res.samples,
                    "stats": [float(s) for s in res.stats],
                }
            )
        if res.outcome is LeafOutcome.DECLARE:
            return node, used
        node = nxt


def run_single_walk(
    tree: ProcessTree,
    config: WalkConfig,
    rng: np.random.Generator,
    trace: list | None = None,
) -> tuple[NodeId | None, int]:
    """One random walk from the root until a leaf is declared.

    Returns ``(None, samples)`` when the step cap stops the walk.
    """
    probe = Probe(tree, rng, cap=config.step_cap)
    try:
        leaf, _ = _walk(probe, config, config.hypotheses(tree.model), trace, 0)
    except StepCapExceeded:
        return None, probe.samples
    return leaf, probe.samples


def run_hds(
    tree: ProcessTree,
    k: int,
    config: WalkConfig,
    rng: np.random.Generator,
    trace: list | None = None,
    probe: Probe | None = None,
) -> DetectionResult:
    """Locate ``k`` anomalies one by one, removing each declared leaf."""
    if not 1 <= k < tree.M:
        raise ValueError(f"need 1 <= K < M, got K={k}, M={tree.M}")
    probe = probe or Probe(tree, rng, cap=config.step_cap)
    hyp = config.hypotheses(tree.model)
    declared, walk_samples = [], []
    accounted, cap_hit = 0, False
    for walk_id in range(k):
        before = probe.samples
        try:
            leaf, used = _walk(probe, config, hyp, trace, walk_id)
        except StepCapExceeded:
            cap_hit = True
            walk_samples.append(probe.samples - before)
            accounted += probe.samples - before
            break
        declared.append(leaf.index)
        walk_samples.append(used)
        accounted += used
        tree.remove_leaf(leaf)
    return DetectionResult(
        declared=declared,
        total_samples=probe.samples,
        walk_samples=walk_samples,
        error=set(declared) != set(tree.true_leaves),
        cap_hit=cap_hit,
        truth=tree.true_leaves,
        accounted_samples=accounted,
    )


def run_irw(tree: ProcessTree, k: int, config: WalkConfig, rng: np.random.Generator, **kw) -> DetectionResult:
    """The same engine with every anomaly set replaced by the true parameter."""
    return run_hds(tree, k, dataclasses.replace(config, policy="irw"), rng, **kw)


def write_trace(trace: Iterable[dict], out: IO[str]) -> None:
    """Write trace events as JSON lines."""
    for event in trace:
        out.write(json.dumps(event) + "\n")
