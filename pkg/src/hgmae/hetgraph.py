"""Heterogeneous graphs, metapath adjacency views, and dataset I/O.

A dataset lives in a directory:

    meta.json            node types, relations, metapaths, target type
    edges/<relation>.tsv one "src<TAB>dst" integer pair per line
    features/<type>.csv  one comma-separated float row per node
    labels.tsv           optional "node<TAB>label" pairs for target nodes
    splits.json          optional {"train": [...], "val": [...], "test": [...]}

Node ids are 0-based and local to their type. A metapath is a sequence
of (relation, reverse) steps whose type chain starts and ends at the
target type; its adjacency view marks target pairs connected by at
least one path instance, with self-loops always present.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class Relation:
    """A directed edge set between two node types."""

    name: str
    src_type: str
    dst_type: str
    edges: np.ndarray  # (m, 2) int64, may be empty


@dataclass(frozen=True)
class Metapath:
    """A named sequence of (relation name, reverse flag) steps."""

    name: str
    steps: tuple[tuple[str, bool], ...]

    def __post_init__(self):
        if not self.steps:
            raise DataError(f"metapath {self.name!r} has no steps")


@dataclass
class MetapathView:
    """Binary target-by-target adjacency induced by one metapath."""

    metapath_name: str
    adjacency: np.ndarray  # (N, N) float64 of {0., 1.}, unit diagonal

    @property
    def num_nodes(self) -> int:
        return self.adjacency.shape[0]

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.adjacency, self.adjacency.T))


@dataclass
class HeteroGraph:
    """Typed nodes, typed relations, target attributes, and metapaths."""

    node_counts: dict[str, int]
    relations: dict[str, Relation]
    attributes: dict[str, np.ndarray]
    metapaths: list[Metapath]
    target_type: str
    labels: np.ndarray | None = None
    splits: dict[str, list[int]] | None = None

    @property
    def num_targets(self) -> int:
        return self.node_counts[self.target_type]

    @property
    def target_attributes(self) -> np.ndarray:
        return self.attributes[self.target_type]

    def metapath(self, name: str) -> Metapath:
        for mp in self.metapaths:
            if mp.name == name:
                return mp
        raise DataError(f"unknown metapath {name!r}")

    def validate(self) -> None:
        for t, n in self.node_counts.items():
            if n < 0:
                raise DataError(f"node type {t!r} has negative count {n}")
        if self.target_type not in self.node_counts:
            raise DataError(f"target type {self.target_type!r} is not a node type")
        for rel in self.relations.values():
            for t in (rel.src_type, rel.dst_type):
                if t not in self.node_counts:
                    raise DataError(f"relation {rel.name!r} references unknown node type {t!r}")
            e = rel.edges
            if e.size:
                if e[:, 0].min() < 0 or e[:, 0].max() >= self.node_counts[rel.src_type]:
                    raise DataError(f"relation {rel.name!r} has a source id out of range")
                if e[:, 1].min() < 0 or e[:, 1].max() >= self.node_counts[rel.dst_type]:
                    raise DataError(f"relation {rel.name!r} has a destination id out of range")
        if self.target_type not in self.attributes:
            raise DataError(f"target type {self.target_type!r} has no attribute matrix")
        for t, x in self.attributes.items():
            if t not in self.node_counts:
                raise DataError(f"attributes given for unknown node type {t!r}")
            if x.ndim != 2 or x.shape[0] != self.node_counts[t]:
                raise DataError(
                    f"attribute matrix for {t!r} has shape {x.shape}, "
                    f"expected ({self.node_counts[t]}, d)"
                )
        if not self.metapaths:
            raise DataError("graph declares no metapaths")
        names = [mp.name for mp in self.metapaths]
        if len(set(names)) != len(names):
            raise DataError("duplicate metapath names")
        for mp in self.metapaths:
            chain = metapath_type_chain(self, mp)
            if chain[0] != self.target_type or chain[-1] != self.target_type:
                raise DataError(
                    f"metapath {mp.name!r} must start and end at target type "
                    f"{self.target_type!r} (chain: {' -> '.join(chain)})"
                )
        if self.labels is not None:
            if self.labels.shape != (self.num_targets,):
                raise DataError(
                    f"labels have shape {self.labels.shape}, expected ({self.num_targets},)"
                )
        if self.splits is not None:
            for part, ids in self.splits.items():
                for i in ids:
                    if not 0 <= int(i) < self.num_targets:
                        raise DataError(f"split {part!r} contains out-of-range node {i}")


def metapath_type_chain(g: HeteroGraph, mp: Metapath) -> list[str]:
    """Node-type sequence a metapath traverses, validating each step."""
    chain: list[str] = []
    current: str | None = None
    for rel_name, reverse in mp.steps:
        rel = g.relations.get(rel_name)
        if rel is None:
            raise DataError(f"metapath {mp.name!r} uses unknown relation {rel_name!r}")
        src, dst = (rel.dst_type, rel.src_type) if reverse else (rel.src_type, rel.dst_type)
        if current is None:
            chain.append(src)
        elif current != src:
            raise DataError(
                f"metapath {mp.name!r}: step {rel_name!r} expects source type "
                f"{src!r} but the walk is at {current!r}"
            )
        chain.append(dst)
        current = dst
    return chain


def _step_matrix(g: HeteroGraph, rel_name: str, reverse: bool) -> np.ndarray:
    rel = g.relations[rel_name]
    rows = g.node_counts[rel.src_type]
    cols = g.node_counts[rel.dst_type]
    b = np.zeros((rows, cols))
    if rel.edges.size:
        b[rel.edges[:, 0], rel.edges[:, 1]] = 1.0
    return b.T if reverse else b


def build_metapath_adjacency(g: HeteroGraph, mp: Metapath) -> MetapathView:
    """Boolean chain product over the metapath's steps, plus self-loops."""
    chain = metapath_type_chain(g, mp)
    if chain[0] != g.target_type or chain[-1] != g.target_type:
        raise DataError(
            f"metapath {mp.name!r} must start and end at target type {g.target_type!r}"
        )
    product: np.ndarray | None = None
    for rel_name, reverse in mp.steps:
        step = _step_matrix(g, rel_name, reverse)
        product = step if product is None else (product @ step > 0.0).astype(np.float64)
    adjacency = (product > 0.0).astype(np.float64)
    np.fill_diagonal(adjacency, 1.0)
    return MetapathView(metapath_name=mp.name, adjacency=adjacency)


def build_all_views(g: HeteroGraph) -> list[MetapathView]:
    return [build_metapath_adjacency(g, mp) for mp in g.metapaths]


def neighbor_lists(view: MetapathView) -> list[np.ndarray]:
    """Per-row indices of nonzero columns; every list contains the row itself."""
    return [np.flatnonzero(view.adjacency[i]) for i in range(view.num_nodes)]


# ---------------------------------------------------------------------------
# dataset I/O


def _read_meta(path: Path) -> dict:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    try:
        meta = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: line {e.lineno}: invalid JSON ({e.msg})") from None
    if not isinstance(meta, dict):
        raise DataError(f"{path}: top level must be an object")
    return meta


def _require(meta: dict, key: str, path: Path):
    if key not in meta:
        raise DataError(f"{path}: missing required key {key!r}")
    return meta[key]


def _read_edge_file(path: Path) -> np.ndarray:
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    pairs = []
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}: line {ln}: expected two tab-separated ids")
        try:
            pairs.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise DataError(f"{path}: line {ln}: ids must be integers") from None
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.asarray(pairs, dtype=np.int64)


def _read_feature_file(path: Path, expected_rows: int) -> np.ndarray:
    try:
        lines = path.read_text().splitlines()
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    rows = []
    width = None
    for ln, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            row = [float(v) for v in line.split(",")]
        except ValueError:
            raise DataError(f"{path}: line {ln}: values must be numeric") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DataError(f"{path}: line {ln}: expected {width} values, got {len(row)}")
        rows.append(row)
    if len(rows) != expected_rows:
        raise DataError(f"{path}: has {len(rows)} rows, expected {expected_rows}")
    return np.asarray(rows, dtype=np.float64)


def load_dataset(path: str | Path) -> HeteroGraph:
    """Load and validate a dataset directory."""
    root = Path(path)
    if not root.is_dir():
        raise DataError(f"{root}: not a directory")
    meta_path = root / "meta.json"
    meta = _read_meta(meta_path)

    node_counts_raw = _require(meta, "node_types", meta_path)
    if not isinstance(node_counts_raw, dict) or not node_counts_raw:
        raise DataError(f"{meta_path}: 'node_types' must be a non-empty object")
    node_counts = {}
    for t, n in node_counts_raw.items():
        if not isinstance(n, int) or isinstance(n, bool) or n < 0:
            raise DataError(f"{meta_path}: node type {t!r} count must be a non-negative integer")
        node_counts[str(t)] = n

    target_type = _require(meta, "target_type", meta_path)
    if target_type not in node_counts:
        raise DataError(f"{meta_path}: target_type {target_type!r} is not in node_types")

    relations: dict[str, Relation] = {}
    for spec_entry in _require(meta, "relations", meta_path):
        for key in ("name", "src_type", "dst_type", "file"):
            if key not in spec_entry:
                raise DataError(f"{meta_path}: relation entry missing {key!r}")
        name = spec_entry["name"]
        if name in relations:
            raise DataError(f"{meta_path}: duplicate relation {name!r}")
        edges = _read_edge_file(root / spec_entry["file"])
        relations[name] = Relation(
            name=name,
            src_type=spec_entry["src_type"],
            dst_type=spec_entry["dst_type"],
            edges=edges,
        )

    metapaths: list[Metapath] = []
    for entry in _require(meta, "metapaths", meta_path):
        if "name" not in entry or "steps" not in entry:
            raise DataError(f"{meta_path}: metapath entry missing 'name' or 'steps'")
        steps = []
        for step in entry["steps"]:
            if not isinstance(step, dict) or "relation" not in step:
                raise DataError(
                    f"{meta_path}: metapath {entry['name']!r} steps must be "
                    "objects with a 'relation' key"
                )
            steps.append((step["relation"], bool(step.get("reverse", False))))
        metapaths.append(Metapath(name=entry["name"], steps=tuple(steps)))

    attributes: dict[str, np.ndarray] = {}
    features_raw = meta.get("features", {})
    if not isinstance(features_raw, dict):
        raise DataError(f"{meta_path}: 'features' must be an object")
    for t, fname in features_raw.items():
        if t not in node_counts:
            raise DataError(f"{meta_path}: features given for unknown node type {t!r}")
        attributes[t] = _read_feature_file(root / fname, node_counts[t])

    labels = None
    labels_file = meta.get("labels")
    if labels_file is not None:
        lpath = root / labels_file
        pairs = _read_edge_file(lpath)
        labels = np.full(node_counts[target_type], -1, dtype=np.int64)
        for node, lab in pairs:
            if not 0 <= node < node_counts[target_type]:
                raise DataError(f"{lpath}: node id {node} out of range")
            labels[node] = lab
        if (labels < 0).any():
            raise DataError(f"{lpath}: some target nodes have no label")

    splits = None
    splits_file = meta.get("splits")
    if splits_file is not None:
        spath = root / splits_file
        try:
            splits = json.loads(spath.read_text())
        except FileNotFoundError:
            raise DataError(f"{spath}: file not found") from None
        except json.JSONDecodeError as e:
            raise DataError(f"{spath}: line {e.lineno}: invalid JSON ({e.msg})") from None

    g = HeteroGraph(
        node_counts=node_counts,
        relations=relations,
        attributes=attributes,
        metapaths=metapaths,
        target_type=target_type,
        labels=labels,
        splits=splits,
    )
    g.validate()
    return g


def save_dataset(g: HeteroGraph, path: str | Path) -> None:
    """Write a graph as a dataset directory that load_dataset round-trips."""
    g.validate()
    root = Path(path)
    (root / "edges").mkdir(parents=True, exist_ok=True)
    (root / "features").mkdir(parents=True, exist_ok=True)

    meta = {
        "node_types": dict(g.node_counts),
        "target_type": g.target_type,
        "relations": [],
        "metapaths": [],
        "features": {},
    }
    for rel in g.relations.values():
        fname = f"edges/{rel.name}.tsv"
        with open(root / fname, "w") as fh:
            for s, d in rel.edges:
                fh.write(f"{int(s)}\t{int(d)}\n")
        meta["relations"].append(
            {"name": rel.name, "src_type": rel.src_type, "dst_type": rel.dst_type, "file": fname}
        )
    for mp in g.metapaths:
        meta["metapaths"].append(
            {
                "name": mp.name,
                "steps": [{"relation": r, "reverse": rev} for r, rev in mp.steps],
            }
        )
    for t, x in g.attributes.items():
        fname = f"features/{t}.csv"
        with open(root / fname, "w") as fh:
            for row in x:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        meta["features"][t] = fname
    if g.labels is not None:
        meta["labels"] = "labels.tsv"
        with open(root / "labels.tsv", "w") as fh:
            for node, lab in enumerate(g.labels):
                fh.write(f"{node}\t{int(lab)}\n")
    if g.splits is not None:
        meta["splits"] = "splits.json"
        (root / "splits.json").write_text(json.dumps(g.splits, sort_keys=True, indent=1))
    (root / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SyntheticSpec:
    """Planted-community generator settings.

    Target nodes ("item") split into equal communities; auxiliary nodes
    ("tag") are assigned one community each. An item-tag edge appears
    with probability intra_rate inside a community and inter_rate
    across. Attributes are community means (scaled by attr_signal) plus
    unit-scaled noise, so attr_signal=0 makes them pure noise.

    The defaults are sized so the planted structure is recoverable but
    not given away: the metapath views stay sparse enough that randomly
    initialized encoders show no community signal, walk features recover
    the partition, and the near-orthogonal high-dimensional attributes
    let reconstruction losses resolve individual nodes.
    """

    communities: int = 3
    community_size: int = 100
    aux_per_community: int = 300
    intra_rate: float = 0.0115
    inter_rate: float = 0.0005
    attr_dim: int = 300
    attr_signal: float = 0.02
    attr_noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.communities < 1 or self.community_size < 1 or self.aux_per_community < 1:
            raise ValueError("synthetic sizes must be positive")
        for name in ("intra_rate", "inter_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.attr_dim < 1:
            raise ValueError("attr_dim must be positive")
        if self.attr_noise < 0 or self.attr_signal < 0:
            raise ValueError("attribute scales must be non-negative")


def generate_synthetic(spec: SyntheticSpec) -> HeteroGraph:
    """Build a labeled planted-community graph with two metapaths.

    Items connect to tags through two independent relations (has_tag
    and uses_tag) drawn from the same community-biased rate matrix, so
    each relation induces its own item-tag-item metapath view. Two
    sparse informative views keep the masked-reconstruction task
    balanced, which a dense two-hop composite view would not.
    """
    from .rng import derive_rng

    rng = derive_rng(spec.seed, "synthetic")
    k = spec.communities
    n_items = k * spec.community_size
    n_tags = k * spec.aux_per_community
    item_comm = np.repeat(np.arange(k), spec.community_size)
    tag_comm = np.repeat(np.arange(k), spec.aux_per_community)

    rate = np.where(item_comm[:, None] == tag_comm[None, :], spec.intra_rate, spec.inter_rate)
    relations = {}
    for rel_name in ("has_tag", "uses_tag"):
        pairs = np.argwhere(rng.random((n_items, n_tags)) < rate)
        relations[rel_name] = Relation(
            name=rel_name, src_type="item", dst_type="tag", edges=pairs.astype(np.int64)
        )

    means = spec.attr_signal * rng.normal(size=(k, spec.attr_dim))
    x = means[item_comm] + spec.attr_noise * rng.normal(size=(n_items, spec.attr_dim))

    metapaths = [
        Metapath(name="item-tag-item", steps=(("has_tag", False), ("has_tag", True))),
        Metapath(name="item-use-item", steps=(("uses_tag", False), ("uses_tag", True))),
    ]
    g = HeteroGraph(
        node_counts={"item": n_items, "tag": n_tags},
        relations=relations,
        attributes={"item": x},
        metapaths=metapaths,
        target_type="item",
        labels=item_comm.astype(np.int64),
    )
    g.validate()
    logger.info(
        "synthetic graph: %d items, %d tags, %d + %d edges",
        n_items,
        n_tags,
        relations["has_tag"].edges.shape[0],
        relations["uses_tag"].edges.shape[0],
    )
    return g
