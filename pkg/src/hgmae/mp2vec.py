"""Metapath-guided random walks and skip-gram positional features.

Walks start at every target node and follow the metapath's relation
sequence cyclically, choosing each next node uniformly among neighbors
under the prescribed relation; a dead end truncates the walk. The
pooled walks train a skip-gram model with negative sampling, where
negatives are drawn per context from nodes of the same type under a
unigram^0.75 corpus distribution. The positional feature matrix is the
row-normalized center embedding of each target node; nodes that never
appear in a training pair keep a zero row.

Training runs in shuffled minibatches with a linearly decaying step
size; one pair's loss and gradients also exist as pure functions so the
update math can be checked against finite differences.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import DataError
from .hetgraph import HeteroGraph, Metapath, metapath_type_chain
from .rng import derive_rng

logger = logging.getLogger(__name__)

# one walk is a list of (node type, node id) pairs
Walk = list[tuple[str, int]]


@dataclass(frozen=True)
class WalkConfig:
    """Walk corpus and skip-gram training settings."""

    walks_per_node: int = 10
    walk_length: int = 20
    window: int = 5
    negatives: int = 5
    dim: int = 64
    epochs: int = 5
    batch_size: int = 1024
    learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        for name in ("walks_per_node", "walk_length", "window", "negatives", "dim", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if self.window >= self.walk_length:
            raise ValueError(
                f"window ({self.window}) must be smaller than walk_length ({self.walk_length})"
            )
        if self.learning_rate <= 0.0 or self.min_learning_rate < 0.0:
            raise ValueError("learning rates must be positive")


class Vocab:
    """Global integer ids for typed nodes: id = offset[type] + node."""

    def __init__(self, node_counts: dict[str, int]):
        self.types = list(node_counts)
        self.counts = dict(node_counts)
        self.offsets: dict[str, int] = {}
        total = 0
        for t in self.types:
            self.offsets[t] = total
            total += node_counts[t]
        self.size = total

    def id(self, node_type: str, node: int) -> int:
        return self.offsets[node_type] + node

    def type_range(self, node_type: str) -> tuple[int, int]:
        lo = self.offsets[node_type]
        return lo, lo + self.counts[node_type]


def _neighbor_lists(g: HeteroGraph, rel_name: str, reverse: bool) -> list[np.ndarray]:
    rel = g.relations[rel_name]
    if reverse:
        n_src = g.node_counts[rel.dst_type]
        src, dst = rel.edges[:, 1], rel.edges[:, 0]
    else:
        n_src = g.node_counts[rel.src_type]
        src, dst = rel.edges[:, 0], rel.edges[:, 1]
    out: list[list[int]] = [[] for _ in range(n_src)]
    for s, d in zip(src, dst):
        out[s].append(d)
    return [np.asarray(sorted(lst), dtype=np.int64) for lst in out]


def generate_walks(
    g: HeteroGraph, mp: Metapath, cfg: WalkConfig, rng: np.random.Generator
) -> list[Walk]:
    """Walks from every target node, guided by one metapath.

    Each start node gets its own generator derived from ``rng`` so the
    corpus does not depend on iteration order.
    """
    chain = metapath_type_chain(g, mp)
    if chain[0] != g.target_type:
        raise DataError(f"metapath {mp.name!r} does not start at the target type")
    steps = mp.steps
    step_types = chain[1:]
    neighbors = [_neighbor_lists(g, rel, rev) for rel, rev in steps]
    n = g.num_targets
    node_seeds = rng.integers(np.iinfo(np.int64).max, size=n)
    walks: list[Walk] = []
    for start in range(n):
        node_rng = np.random.default_rng(int(node_seeds[start]))
        for _ in range(cfg.walks_per_node):
            walk: Walk = [(g.target_type, start)]
            current = start
            while len(walk) < cfg.walk_length:
                k = (len(walk) - 1) % len(steps)
                nbrs = neighbors[k][current]
                if len(nbrs) == 0:
                    break
                current = int(nbrs[node_rng.integers(len(nbrs))])
                walk.append((step_types[k], current))
            walks.append(walk)
    return walks


def walk_pairs(walks: list[Walk], vocab: Vocab, window: int) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) global-id pairs within the window."""
    centers: list[np.ndarray] = []
    contexts: list[np.ndarray] = []
    for walk in walks:
        ids = np.asarray([vocab.id(t, v) for t, v in walk], dtype=np.int64)
        for delta in range(1, min(window, len(ids) - 1) + 1):
            a, b = ids[:-delta], ids[delta:]
            centers.append(a)
            contexts.append(b)
            centers.append(b)
            contexts.append(a)
    if not centers:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(centers), np.concatenate(contexts)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _scatter_add(target: np.ndarray, idx: np.ndarray, updates: np.ndarray) -> None:
    """target[idx] += updates with duplicate indices accumulated.

    bincount over flattened (row, column) bins runs well ahead of
    np.add.at for the table sizes used here.
    """
    d = target.shape[1]
    flat = (idx[:, None] * d + np.arange(d)).ravel()
    target += np.bincount(flat, weights=updates.ravel(), minlength=target.size).reshape(
        target.shape
    )


def pair_loss(center: np.ndarray, context: np.ndarray, negatives: np.ndarray) -> float:
    """Negative-sampling loss for one (center, context, negatives) triple."""
    pos = np.logaddexp(0.0, -float(center @ context))
    neg = np.logaddexp(0.0, negatives @ center).sum()
    return float(pos + neg)


def pair_gradients(
    center: np.ndarray, context: np.ndarray, negatives: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of pair_loss wrt (center, context, negative) vectors."""
    s_pos = _sigmoid(np.array([center @ context]))[0]
    s_neg = _sigmoid(negatives @ center)
    g_center = -(1.0 - s_pos) * context + s_neg @ negatives
    g_context = -(1.0 - s_pos) * center
    g_negatives = s_neg[:, None] * center
    return g_center, g_context, g_negatives


@dataclass
class SkipgramResult:
    """Trained embedding tables and the per-epoch mean pair loss."""

    center: np.ndarray
    context: np.ndarray
    epoch_losses: list[float] = field(default_factory=list)
    participated: np.ndarray | None = None  # bool per vocab id


def train_skipgram(
    walks: list[Walk], vocab: Vocab, cfg: WalkConfig, rng: np.random.Generator
) -> SkipgramResult:
    """Minibatch SGD over all window pairs of the walk corpus."""
    centers, contexts = walk_pairs(walks, vocab, cfg.window)
    center_emb = (rng.random((vocab.size, cfg.dim)) - 0.5) / cfg.dim
    context_emb = np.zeros((vocab.size, cfg.dim))

    participated = np.zeros(vocab.size, dtype=bool)
    participated[centers] = True
    participated[contexts] = True

    if centers.size == 0 or cfg.epochs == 0:
        if centers.size == 0:
            logger.warning("skip-gram corpus has no pairs; embeddings stay at initialization")
        return SkipgramResult(center_emb, context_emb, [], participated)

    # unigram^0.75 noise distribution, cumulative per node type
    occ = np.bincount(centers, minlength=vocab.size) + np.bincount(
        contexts, minlength=vocab.size
    )
    noise_cum: dict[str, np.ndarray] = {}
    for t in vocab.types:
        lo, hi = vocab.type_range(t)
        w = occ[lo:hi].astype(np.float64) ** 0.75
        total = w.sum()
        if total > 0.0:
            noise_cum[t] = np.cumsum(w / total)

    context_types = np.zeros(vocab.size, dtype=np.int64)
    for ti, t in enumerate(vocab.types):
        lo, hi = vocab.type_range(t)
        context_types[lo:hi] = ti

    n_pairs = centers.size
    batches_per_epoch = int(np.ceil(n_pairs / cfg.batch_size))
    total_batches = batches_per_epoch * cfg.epochs
    batch_idx = 0
    epoch_losses: list[float] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n_pairs)
        epoch_loss = 0.0
        for b in range(batches_per_epoch):
            sel = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            c, o = centers[sel], contexts[sel]
            neg = np.empty((len(sel), cfg.negatives), dtype=np.int64)
            types_here = context_types[o]
            for ti in np.unique(types_here):
                t = vocab.types[ti]
                rows = np.flatnonzero(types_here == ti)
                lo, _ = vocab.type_range(t)
                draws = rng.random((len(rows), cfg.negatives))
                neg[rows] = lo + np.searchsorted(noise_cum[t], draws)

            lr = cfg.learning_rate + (cfg.min_learning_rate - cfg.learning_rate) * (
                batch_idx / max(total_batches - 1, 1)
            )
            batch_idx += 1

            vc = center_emb[c]
            uo = context_emb[o]
            un = context_emb[neg]
            pos_dot = np.einsum("bd,bd->b", vc, uo)
            neg_dot = np.einsum("bnd,bd->bn", un, vc)
            epoch_loss += float(
                np.logaddexp(0.0, -pos_dot).sum() + np.logaddexp(0.0, neg_dot).sum()
            )
            s_pos = _sigmoid(pos_dot)
            s_neg = _sigmoid(neg_dot)
            g_vc = -(1.0 - s_pos)[:, None] * uo + np.einsum("bn,bnd->bd", s_neg, un)
            g_uo = -(1.0 - s_pos)[:, None] * vc
            g_un = s_neg[:, :, None] * vc[:, None, :]
            _scatter_add(center_emb, c, -lr * g_vc)
            _scatter_add(
                context_emb,
                np.concatenate([o, neg.ravel()]),
                np.concatenate([-lr * g_uo, (-lr * g_un).reshape(-1, cfg.dim)]),
            )
        epoch_losses.append(epoch_loss / n_pairs)
    return SkipgramResult(center_emb, context_emb, epoch_losses, participated)


def positional_features(g: HeteroGraph, cfg: WalkConfig) -> np.ndarray:
    """Unit-norm center embeddings for target nodes, pooled over metapaths.

    Rows for target nodes that never entered a training pair are zero;
    downstream losses skip zero-norm rows.
    """
    walks: list[Walk] = []
    for mp in g.metapaths:
        walks.extend(generate_walks(g, mp, cfg, derive_rng(cfg.seed, "walks", mp.name)))
    vocab = Vocab(g.node_counts)
    result = train_skipgram(walks, vocab, cfg, derive_rng(cfg.seed, "skipgram"))
    lo, hi = vocab.type_range(g.target_type)
    p = result.center[lo:hi].copy()
    seen = result.participated[lo:hi]
    p[~seen] = 0.0
    if (~seen).any():
        logger.warning("%d target nodes never appeared in a walk pair", int((~seen).sum()))
    norms = np.linalg.norm(p, axis=1, keepdims=True)
    nonzero = norms[:, 0] > 0.0
    p[nonzero] = p[nonzero] / norms[nonzero]
    return p


class Metapath2Vec(BaseEstimator, TransformerMixin):
    """Positional-feature extractor with a fit/transform surface.

    transform is stateless given the constructor settings: the same
    graph and seed always produce the same feature matrix.
    """

    def __init__(
        self,
        walks_per_node: int = 10,
        walk_length: int = 20,
        window: int = 5,
        negatives: int = 5,
        dim: int = 64,
        epochs: int = 5,
        batch_size: int = 1024,
        learning_rate: float = 0.025,
        min_learning_rate: float = 1e-4,
        seed: int = 0,
    ):
        self.walks_per_node = walks_per_node
        self.walk_length = walk_length
        self.window = window
        self.negatives = negatives
        self.dim = dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.min_learning_rate = min_learning_rate
        self.seed = seed

    def _config(self) -> WalkConfig:
        return WalkConfig(
            walks_per_node=self.walks_per_node,
            walk_length=self.walk_length,
            window=self.window,
            negatives=self.negatives,
            dim=self.dim,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            min_learning_rate=self.min_learning_rate,
            seed=self.seed,
        )

    def fit(self, graph: HeteroGraph, y=None) -> "Metapath2Vec":
        self.embeddings_ = positional_features(graph, self._config())
        return self

    def transform(self, graph: HeteroGraph) -> np.ndarray:
        return positional_features(graph, self._config())
