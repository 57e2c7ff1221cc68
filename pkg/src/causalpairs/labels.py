"""Discrete attribute labels with known causal structure.

Small hand-designed Bayesian networks over attribute pairs (plus an optional
confounder) realize each of the six pairwise causal graphs. Labels are drawn
by Gibbs sampling, validated against exact ancestral enumeration, and the
causal relation between two discrete attributes is assessed by an entropic
score: the direction needing the smaller exogenous entropy to explain the
conditionals as deterministic functions is taken as causal.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass

import numpy as np

from .datagen import GraphKind

__all__ = [
    "DiscreteBayesNet",
    "JointTable",
    "StrengthReport",
    "default_cpts",
    "gibbs_sample",
    "exact_joint",
    "empirical_joint",
    "entropic_direction_score",
    "brute_force_min_entropy",
    "causal_strength",
    "save_net",
    "load_net",
    "save_labels_csv",
    "load_labels_csv",
]

_GRAPH_EDGES = {
    GraphKind.G1: [("X", "Y")],
    GraphKind.G2: [("Y", "X")],
    GraphKind.G3: [],
    GraphKind.G4: [("Z", "X"), ("Z", "Y"), ("X", "Y")],
    GraphKind.G5: [("Z", "X"), ("Z", "Y"), ("Y", "X")],
    GraphKind.G6: [("Z", "X"), ("Z", "Y")],
}


class DiscreteBayesNet:
    """Nodes 'X', 'Y' and optionally 'Z' with categorical CPTs.

    ``cpts[node]`` has one axis per parent (in ``parents[node]`` order)
    followed by the node's own state axis; every row sums to 1.
    """

    def __init__(self, graph: GraphKind, arities: dict, edges: list, cpts: dict):
        self.graph = graph
        self.arities = dict(arities)
        self.edges = [tuple(e) for e in edges]
        self.cpts = {k: np.asarray(v, dtype=np.float64) for k, v in cpts.items()}
        if sorted(self.edges) != sorted(_GRAPH_EDGES[graph]):
            raise ValueError(f"edge set does not match {graph.value}")
        self.parents = {n: [p for p, c in self.edges if c == n] for n in self.arities}
        for node, arity in self.arities.items():
            table = self.cpts[node]
            expect = tuple(self.arities[p] for p in self.parents[node]) + (arity,)
            if table.shape != expect:
                raise ValueError(f"CPT shape for {node}: {table.shape} != {expect}")
            if np.any(table < 0):
                raise ValueError(f"negative CPT entry in {node}")
            if not np.allclose(table.sum(axis=-1), 1.0, atol=1e-12):
                raise ValueError(f"CPT rows of {node} must sum to 1")

    @property
    def nodes(self):
        return sorted(self.arities)

    def topo_order(self):
        order, placed = [], set()
        pending = set(self.arities)
        while pending:
            ready = [n for n in sorted(pending) if set(self.parents[n]) <= placed]
            if not ready:
                raise ValueError("cyclic structure")
            order.extend(ready)
            placed.update(ready)
            pending.difference_update(ready)
        return order


@dataclass
class JointTable:
    """Nonnegative |X| x |Y| probability table summing to 1."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or np.any(self.probs < 0):
            raise ValueError("joint table must be a nonnegative matrix")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("joint table must sum to 1")

    def transposed(self) -> "JointTable":
        return JointTable(self.probs.T.copy())


@dataclass
class StrengthReport:
    h_xy: float  # exogenous bits needed in direction X -> Y
    h_yx: float  # exogenous bits needed in direction Y -> X
    direction: int
    strength: float


def _entropy(p: np.ndarray) -> float:
    p = p[p > 1e-15]
    return float(-np.sum(p * np.log2(p)))


def default_cpts(graph: GraphKind, strength: str = "high", arity: int = 4) -> DiscreteBayesNet:
    """Preset nets: high-strength conditionals put >= 0.85 on one state,
    low-strength ones at most 0.4. Root marginals are non-uniform."""
    if strength not in ("high", "low"):
        raise ValueError("strength must be 'high' or 'low'")
    peak = 0.88 if strength == "high" else 0.37
    rest = (1.0 - peak) / (arity - 1)
    root = np.arange(arity, 0, -1, dtype=np.float64)
    root /= root.sum()  # e.g. [0.4, 0.3, 0.2, 0.1] at arity 4

    def cond(shift_sources: int, many_to_one: bool = False):
        """CPT with one axis per parent. The direct X-Y edge maps two-to-one
        onto the effect (a bijective map would leave the direction
        unidentifiable: the reverse conditional is equally concentrated);
        other conditionals concentrate on the shifted sum of their parents'
        states (mod arity)."""
        shape = (arity,) * shift_sources + (arity,)
        table = np.full(shape, rest)
        for idx in itertools.product(range(arity), repeat=shift_sources):
            target = (idx[0] // 2 + 1) % arity if many_to_one else (sum(idx) + 1) % arity
            table[idx + (target,)] = peak
        return table

    edges = _GRAPH_EDGES[graph]
    arities = {"X": arity, "Y": arity}
    if any("Z" in e for e in edges):
        arities["Z"] = arity
    cpts = {}
    parents = {n: [p for p, c in edges if c == n] for n in arities}
    for node in arities:
        pars = parents[node]
        direct_xy = pars in (["X"], ["Y"]) and node in ("X", "Y")
        cpts[node] = root.copy() if not pars else cond(len(pars), many_to_one=direct_xy)
    return DiscreteBayesNet(graph, arities, edges, cpts)


def _full_joint(net: DiscreteBayesNet) -> tuple[list, np.ndarray]:
    """Exhaustive joint over all nodes (tiny nets only)."""
    nodes = net.topo_order()
    shape = tuple(net.arities[n] for n in nodes)
    joint = np.zeros(shape)
    for states in itertools.product(*(range(s) for s in shape)):
        at = dict(zip(nodes, states))
        p = 1.0
        for node in nodes:
            idx = tuple(at[par] for par in net.parents[node]) + (at[node],)
            p *= net.cpts[node][idx]
        joint[states] = p
    return nodes, joint


def exact_joint(net: DiscreteBayesNet) -> JointTable:
    """Exact P(X, Y) by ancestral enumeration; the Gibbs correctness oracle."""
    nodes, joint = _full_joint(net)
    ix, iy = nodes.index("X"), nodes.index("Y")
    other = [i for i in range(len(nodes)) if i not in (ix, iy)]
    marg = joint.sum(axis=tuple(other)) if other else joint
    if ix > iy:
        marg = marg.T
    return JointTable(marg)


def gibbs_sample(net: DiscreteBayesNet, count: int, rng: np.random.Generator, burnin: int = 1000, thin: int = 5) -> np.ndarray:
    """``count`` (a_x, a_y) label pairs from a single Gibbs chain.

    Full conditionals are read off the exhaustive joint (the nets have at
    most three 4-state nodes). Single-node nets reduce to i.i.d. draws.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    nodes, joint = _full_joint(net)
    if len(nodes) == 1:
        draws = rng.choice(net.arities[nodes[0]], size=count, p=joint)
        return draws[:, None]
    n = len(nodes)
    # cumulative full conditionals per node, indexed by the others' states
    cum = []
    for i in range(n):
        sums = joint.sum(axis=i, keepdims=True)
        cond = np.where(sums > 0, joint / np.where(sums > 0, sums, 1.0), 1.0 / joint.shape[i])
        cum.append(np.cumsum(np.moveaxis(cond, i, -1), axis=-1))
    state = [int(rng.integers(0, net.arities[nd])) for nd in nodes]
    ix, iy = nodes.index("X"), nodes.index("Y")
    kept = np.empty((count, 2), dtype=np.int64)
    total = burnin + count * thin
    uniforms = rng.random((total, n))
    k = 0
    for t in range(total):
        for i in range(n):
            sel = tuple(state[j] for j in range(n) if j != i)
            row = cum[i][sel]
            state[i] = min(int(np.searchsorted(row, uniforms[t, i], side="right")), len(row) - 1)
        if t >= burnin and (t - burnin) % thin == 0 and k < count:
            kept[k] = (state[ix], state[iy])
            k += 1
    return kept


def empirical_joint(pairs, shape=None) -> JointTable:
    """Normalized count table over observed (a_x, a_y) pairs."""
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.size == 0:
        raise ValueError("empirical_joint needs at least one pair")
    if shape is None:
        shape = (int(pairs[:, 0].max()) + 1, int(pairs[:, 1].max()) + 1)
    table = np.zeros(shape)
    np.add.at(table, (pairs[:, 0], pairs[:, 1]), 1.0)
    return JointTable(table / len(pairs))


def _conditionals(joint: JointTable, direction: int) -> tuple[np.ndarray, np.ndarray]:
    """Cause marginal and P(effect | cause) rows for direction 1 (X->Y) or
    2 (Y->X). Zero-probability cause states are dropped."""
    p = joint.probs if direction == 1 else joint.probs.T
    cause = p.sum(axis=1)
    keep = cause > 1e-15
    rows = p[keep] / cause[keep, None]
    return cause[keep], rows


def entropic_direction_score(joint: JointTable, direction: int) -> float:
    """Greedy minimum-entropy estimate (bits) of the exogenous variable that
    renders every P(effect | cause = c) a deterministic function of the
    exogenous state: repeatedly take the smallest of the per-row maxima as
    the next exogenous atom and deduct it from each row's largest entry."""
    if direction not in (1, 2):
        raise ValueError("direction must be 1 (X->Y) or 2 (Y->X)")
    _, rows = _conditionals(joint, direction)
    rows = rows.copy()
    atoms = []
    remaining = 1.0
    while remaining > 1e-12:
        maxima = rows.max(axis=1)
        e = float(maxima.min())
        if e <= 1e-15:
            break
        for r in rows:
            r[int(np.argmax(r))] -= e
        atoms.append(e)
        remaining -= e
    return _entropy(np.asarray(atoms))


def brute_force_min_entropy(joint: JointTable, direction: int, max_support: int = 4) -> float:
    """Exhaustive minimum over exogenous variables of support <= max_support.

    An exogenous atom is an assignment of one effect state per cause state;
    a support is feasible when some nonnegative weighting of its atoms
    reproduces every conditional row exactly. Intended as a test oracle for
    small (2x2, 3x3) joints only.
    """
    _, rows = _conditionals(joint, direction)
    n_cause, n_eff = rows.shape
    vectors = list(itertools.product(range(n_eff), repeat=n_cause))
    # constraint matrix: one equation per (cause, effect) cell
    a_full = np.zeros((n_cause * n_eff, len(vectors)))
    for v, assign in enumerate(vectors):
        for c, eff in enumerate(assign):
            a_full[c * n_eff + eff, v] = 1.0
    b = rows.reshape(-1)
    best = np.inf
    for k in range(1, max_support + 1):
        for cols in itertools.combinations(range(len(vectors)), k):
            a = a_full[:, cols]
            u, res, *_ = np.linalg.lstsq(a, b, rcond=None)
            if np.any(u < -1e-9):
                continue
            if np.max(np.abs(a @ u - b)) > 1e-9:
                continue
            best = min(best, _entropy(np.clip(u, 0.0, None)))
    return float(best)


def causal_strength(joint: JointTable) -> StrengthReport:
    """Both direction scores; direction = argmin when the normalized gap is
    at least 0.05, else 0 (no causal conclusion)."""
    h_xy = entropic_direction_score(joint, 1)
    h_yx = entropic_direction_score(joint, 2)
    h_joint = _entropy(joint.probs.reshape(-1))
    strength = float(np.clip(abs(h_yx - h_xy) / max(h_joint, 1e-12), 0.0, 1.0))
    if strength >= 0.05:
        direction = 1 if h_xy < h_yx else 2
    else:
        direction = 0
    return StrengthReport(h_xy=h_xy, h_yx=h_yx, direction=direction, strength=strength)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_net(path, net: DiscreteBayesNet) -> None:
    doc = {
        "graph": net.graph.value,
        "arities": net.arities,
        "edges": [list(e) for e in net.edges],
        "cpts": {k: v.tolist() for k, v in net.cpts.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_net(path) -> DiscreteBayesNet:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return DiscreteBayesNet(GraphKind(doc["graph"]), doc["arities"], doc["edges"], doc["cpts"])


def save_labels_csv(path, pairs) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["a_x", "a_y"])
        for ax, ay in np.asarray(pairs, dtype=np.int64):
            writer.writerow([int(ax), int(ay)])


def load_labels_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["a_x", "a_y"]:
            raise ValueError("unexpected label CSV header")
        return np.array([[int(a), int(b)] for a, b in reader], dtype=np.int64)
