"""Heterogeneous graph data model, JSON file format, and synthetic data.

A graph holds typed nodes, typed directed edges grouped into relations, one
shared feature matrix, and optional per-node class labels. Everything is
immutable after construction; dense adjacency matrices are materialized on
demand.

File format (UTF-8 JSON, unknown keys rejected)::

    {
      "node_types": ["paper", "author"],
      "nodes": [{"type": 0}, {"type": 1}, ...],
      "relations": [
        {"name": "writes", "src_type": 1, "dst_type": 0, "edges": [[1, 0], ...]}
      ],
      "features": [[...], ...],
      "labels": [0, 1, ...]          # optional
    }
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, InvalidInput


@dataclass(frozen=True)
class Relation:
    name: str
    src_type: int
    dst_type: int
    edges: np.ndarray  # (E, 2) int array of (src, dst)


@dataclass(frozen=True)
class HeteroGraph:
    type_names: tuple[str, ...]
    node_types: np.ndarray          # (N,) type id per node
    relations: tuple[Relation, ...]
    features: np.ndarray            # (N, F)
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.node_types.setflags(write=False)
        self.features.setflags(write=False)
        for r in self.relations:
            r.edges.setflags(write=False)
        if self.labels is not None:
            self.labels.setflags(write=False)

    @property
    def num_nodes(self):
        return int(self.node_types.shape[0])

    @property
    def num_relations(self):
        return len(self.relations)

    @property
    def feature_width(self):
        return int(self.features.shape[1])

    @property
    def label_count(self):
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def validate(self):
        n = self.num_nodes
        if self.features.shape[0] != n:
            raise FormatError("features row count must equal node count")
        if self.node_types.size and (self.node_types.min() < 0 or self.node_types.max() >= len(self.type_names)):
            raise FormatError("node type id out of range")
        if self.labels is not None and self.labels.shape[0] != n:
            raise FormatError("labels length must equal node count")
        for r in self.relations:
            if not (0 <= r.src_type < len(self.type_names)) or not (0 <= r.dst_type < len(self.type_names)):
                raise FormatError(f"relation {r.name!r}: type id out of range")
            if r.edges.size:
                if r.edges.min() < 0 or r.edges.max() >= n:
                    raise FormatError(f"relation {r.name!r}: edge endpoint out of range")
                if np.any(self.node_types[r.edges[:, 0]] != r.src_type) or np.any(
                    self.node_types[r.edges[:, 1]] != r.dst_type
                ):
                    raise FormatError(f"relation {r.name!r}: edge endpoint type mismatch")
                pairs = {(int(s), int(d)) for s, d in r.edges}
                if len(pairs) != r.edges.shape[0]:
                    raise FormatError(f"relation {r.name!r}: duplicate edge")
        return self


def _require_keys(obj, allowed, required, where):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise FormatError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise FormatError(f"{where}: missing key(s) {sorted(missing)}")


def graph_from_dict(doc):
    if not isinstance(doc, dict):
        raise FormatError("top level must be a JSON object")
    _require_keys(doc, ("node_types", "nodes", "relations", "features", "labels"),
                  ("node_types", "nodes", "relations", "features"), "top level")
    type_names = tuple(str(t) for t in doc["node_types"])
    node_types = []
    for i, nd in enumerate(doc["nodes"]):
        if not isinstance(nd, dict):
            raise FormatError(f"nodes[{i}]: expected an object")
        _require_keys(nd, ("type",), ("type",), f"nodes[{i}]")
        node_types.append(int(nd["type"]))
    relations = []
    for i, rd in enumerate(doc["relations"]):
        _require_keys(rd, ("name", "src_type", "dst_type", "edges"),
                      ("name", "src_type", "dst_type", "edges"), f"relations[{i}]")
        edges = np.array(rd["edges"], dtype=np.int64).reshape(-1, 2)
        relations.append(Relation(str(rd["name"]), int(rd["src_type"]), int(rd["dst_type"]), edges))
    features = np.array(doc["features"], dtype=np.float64)
    if features.ndim != 2:
        raise FormatError("features must be a list of equal-length rows")
    labels = None
    if doc.get("labels") is not None:
        labels = np.array(doc["labels"], dtype=np.int64)
    g = HeteroGraph(type_names, np.array(node_types, dtype=np.int64), tuple(relations), features, labels)
    return g.validate()


def graph_to_dict(g):
    doc = {
        "node_types": list(g.type_names),
        "nodes": [{"type": int(t)} for t in g.node_types],
        "relations": [
            {
                "name": r.name,
                "src_type": r.src_type,
                "dst_type": r.dst_type,
                "edges": [[int(s), int(d)] for s, d in r.edges],
            }
            for r in g.relations
        ],
        "features": [[float(x) for x in row] for row in g.features],
    }
    if g.labels is not None:
        doc["labels"] = [int(y) for y in g.labels]
    return doc


def load_graph(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return graph_from_dict(doc)


def save_graph(g, path):
    # Canonical dump: rerunning a deterministic generator must reproduce the
    # file byte for byte.
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(graph_to_dict(g), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


# ---------------------------------------------------------------------------
# dense views


def relation_adjacency(g, r):
    """Dense adjacency of one relation, destination on the row: A[d, s] = 1
    for every edge (s -> d). Row i then lists exactly the in-neighbors of i,
    so A @ H aggregates messages toward destinations."""
    if not (0 <= r < g.num_relations):
        raise InvalidInput(f"unknown relation id {r}")
    n = g.num_nodes
    a = np.zeros((n, n))
    e = g.relations[r].edges
    if e.size:
        a[e[:, 1], e[:, 0]] = 1.0
    return a


def homogenize(g):
    """Binary symmetric union of all relations with a zero diagonal."""
    n = g.num_nodes
    a = np.zeros((n, n))
    for r in g.relations:
        if r.edges.size:
            a[r.edges[:, 1], r.edges[:, 0]] = 1.0
            a[r.edges[:, 0], r.edges[:, 1]] = 1.0
    np.fill_diagonal(a, 0.0)
    return a


def normalized_adjacency_with_self_loops(a):
    """D^{-1/2} (A + I) D^{-1/2} with degrees taken after adding self loops."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidInput("expected a square matrix")
    if np.any(a < 0):
        raise InvalidInput("adjacency entries must be nonnegative")
    at = a + np.eye(a.shape[0])
    d = at.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return inv_sqrt[:, None] * at * inv_sqrt[None, :]


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitAssignment:
    task: str
    seed: int
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    # Link task only: realized (src, dst) pairs per split, negatives sampled
    # 1:1 at split time.
    train_pos: np.ndarray | None = None
    train_neg: np.ndarray | None = None
    val_pos: np.ndarray | None = None
    val_neg: np.ndarray | None = None
    test_pos: np.ndarray | None = None
    test_neg: np.ndarray | None = None


def _partition(m, ratio, rng):
    n_test = int(np.floor(ratio[2] * m))
    n_val = int(np.floor(ratio[1] * m))
    n_train = m - n_val - n_test
    perm = rng.permutation(m)
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def _sample_negatives(g, rel, count, rng):
    existing = {(int(s), int(d)) for s, d in rel.edges}
    src_pool = np.flatnonzero(g.node_types == rel.src_type)
    dst_pool = np.flatnonzero(g.node_types == rel.dst_type)
    capacity = src_pool.size * dst_pool.size - len(existing)
    if capacity < count:
        raise InvalidInput(f"relation {rel.name!r} too dense to sample {count} negatives")
    out = []
    seen = set()
    while len(out) < count:
        s = int(src_pool[rng.integers(src_pool.size)])
        d = int(dst_pool[rng.integers(dst_pool.size)])
        if s == d or (s, d) in existing or (s, d) in seen:
            continue
        seen.add((s, d))
        out.append((s, d))
    return np.array(out, dtype=np.int64)


def make_splits(g, ratio=(0.70, 0.15, 0.15), seed=0, task="node"):
    """Deterministic shuffled partition of labeled nodes or positive edges.

    Test and validation get floor(ratio * M) entities each, train the
    remainder. For the link task the entities are positive edges pooled over
    all relations, and each split carries an equal-size negative sample drawn
    from pairs of the matching relation signature that are absent from it.
    """
    if abs(sum(ratio) - 1.0) > 1e-9:
        raise InvalidInput("split ratios must sum to 1")
    rng = np.random.default_rng(seed)
    if task == "node":
        if g.labels is None:
            raise InvalidInput("node task needs labels")
        entities = np.flatnonzero(g.labels >= 0)
        if entities.size < 3:
            raise InvalidInput("need at least 3 labeled nodes")
        tr, va, te = _partition(entities.size, ratio, rng)
        return SplitAssignment("node", seed, entities[tr], entities[va], entities[te])
    if task != "link":
        raise InvalidInput(f"unknown task {task!r}")

    all_edges = []  # (relation id, src, dst)
    for ri, rel in enumerate(g.relations):
        for s, d in rel.edges:
            all_edges.append((ri, int(s), int(d)))
    if len(all_edges) < 3:
        raise InvalidInput("need at least 3 positive edges")
    all_edges = np.array(all_edges, dtype=np.int64)
    tr, va, te = _partition(all_edges.shape[0], ratio, rng)

    pos, neg = {}, {}
    for name, idx in (("train", tr), ("val", va), ("test", te)):
        chunk = all_edges[idx]
        pos[name] = chunk[:, 1:3].copy()
        parts = []
        for ri in range(g.num_relations):
            k = int((chunk[:, 0] == ri).sum())
            if k:
                parts.append(_sample_negatives(g, g.relations[ri], k, rng))
        neg[name] = np.concatenate(parts, axis=0) if parts else np.zeros((0, 2), dtype=np.int64)
    return SplitAssignment(
        "link", seed, tr, va, te,
        train_pos=pos["train"], train_neg=neg["train"],
        val_pos=pos["val"], val_neg=neg["val"],
        test_pos=pos["test"], test_neg=neg["test"],
    )


# ---------------------------------------------------------------------------
# synthetic generator


@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-partition heterogeneous graph description.

    Communities are assigned round-robin inside each node type, so community
    sizes are balanced exactly. For every relation, each ordered cross-type
    pair (u, v), u != v, carries an edge with the intra probability when u
    and v share a community and the inter probability otherwise.
    """

    type_sizes: tuple[int, ...]
    relations: tuple[tuple[str, int, int], ...]   # (name, src_type, dst_type)
    communities: int = 2
    intra_p: float = 0.3
    inter_p: float = 0.02
    feature_mode: str = "informative"             # or "constant"
    feature_dim: int = 8
    feature_noise: float = 0.8
    seed: int = 0

    def validate(self):
        if not (0.0 <= self.intra_p <= 1.0):
            raise InvalidInput(f"intra_p must be in [0,1], got {self.intra_p}")
        if not (0.0 <= self.inter_p <= 1.0):
            raise InvalidInput(f"inter_p must be in [0,1], got {self.inter_p}")
        if self.communities < 2:
            raise InvalidInput("communities must be >= 2")
        if self.feature_noise < 0:
            raise InvalidInput("feature_noise must be nonnegative")
        if self.feature_mode not in ("informative", "constant"):
            raise InvalidInput(f"unknown feature_mode {self.feature_mode!r}")
        if any(s <= 0 for s in self.type_sizes):
            raise InvalidInput("type sizes must be positive")
        for name, st, dt in self.relations:
            if not (0 <= st < len(self.type_sizes)) or not (0 <= dt < len(self.type_sizes)):
                raise InvalidInput(f"relation {name!r}: type id out of range")
        return self


def gen_synthetic(spec: SyntheticSpec) -> HeteroGraph:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    type_names = tuple(f"t{i}" for i in range(len(spec.type_sizes)))
    node_types = np.concatenate([
        np.full(sz, ti, dtype=np.int64) for ti, sz in enumerate(spec.type_sizes)
    ])
    n = node_types.size
    offsets = np.cumsum([0] + list(spec.type_sizes))
    communities = np.empty(n, dtype=np.int64)
    for ti, sz in enumerate(spec.type_sizes):
        communities[offsets[ti]:offsets[ti] + sz] = np.arange(sz) % spec.communities

    relations = []
    for name, st, dt in spec.relations:
        src = np.arange(offsets[st], offsets[st] + spec.type_sizes[st])
        dst = np.arange(offsets[dt], offsets[dt] + spec.type_sizes[dt])
        same = communities[src][:, None] == communities[dst][None, :]
        p = np.where(same, spec.intra_p, spec.inter_p)
        draw = rng.random(p.shape) < p
        if st == dt:
            np.fill_diagonal(draw, False)
        si, di = np.nonzero(draw)
        edges = np.stack([src[si], dst[di]], axis=1).astype(np.int64)
        relations.append(Relation(name, st, dt, edges))

    if spec.feature_mode == "constant":
        features = np.ones((n, spec.feature_dim))
    else:
        prototypes = rng.normal(0.0, 1.0, size=(spec.communities, spec.feature_dim))
        features = prototypes[communities] + rng.normal(0.0, spec.feature_noise, size=(n, spec.feature_dim))

    g = HeteroGraph(type_names, node_types, tuple(relations), features, communities.copy())
    return g.validate()


def synthetic_spec_from_dict(doc):
    allowed = ("type_sizes", "relations", "communities", "intra_p", "inter_p",
               "feature_mode", "feature_dim", "feature_noise", "seed")
    _require_keys(doc, allowed, ("type_sizes", "relations"), "synthetic spec")
    rels = tuple((str(r[0]), int(r[1]), int(r[2])) for r in doc["relations"])
    return SyntheticSpec(
        type_sizes=tuple(int(s) for s in doc["type_sizes"]),
        relations=rels,
        communities=int(doc.get("communities", 2)),
        intra_p=float(doc.get("intra_p", 0.3)),
        inter_p=float(doc.get("inter_p", 0.02)),
        feature_mode=str(doc.get("feature_mode", "informative")),
        feature_dim=int(doc.get("feature_dim", 8)),
        feature_noise=float(doc.get("feature_noise", 0.8)),
        seed=int(doc.get("seed", 0)),
    ).validate()
