"""Downstream quality checks for frozen embeddings.

Classification trains a multinomial logistic probe on a small stratified
label budget, selects its L2 strength on a validation split, and reports
micro/macro F1 plus macro one-vs-rest AUC on the test split. Clustering
runs restarted Lloyd iterations with greedy D^2 seeding and scores NMI
and ARI against the reference labels. Edge scoring ranks held-out edges
against an equal count of sampled non-edges by reconstruction
probability.

Lloyd's loop is implemented here rather than borrowed so its inertia
trace is inspectable and its tie-breaking deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import (
    adjusted_rand_score,
    f1_score,
    normalized_mutual_info_score,
    roc_auc_score,
)

from .errors import DataError
from .rng import derive_rng

logger = logging.getLogger(__name__)

PROBE_REG_GRID = (1e-3, 1e-2, 1e-1, 1.0)


@dataclass
class Split:
    """Index sets for one probe round."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    labels_per_class: int

    def __post_init__(self):
        parts = np.concatenate([self.train, self.val, self.test])
        if len(np.unique(parts)) != len(parts):
            raise ValueError("split parts overlap")


def make_splits(
    labels: np.ndarray,
    labels_per_class: int,
    val_size: int,
    test_size: int,
    rng: np.random.Generator,
) -> Split:
    """Stratified train set, then disjoint random val and test sets."""
    labels = np.asarray(labels)
    if labels_per_class < 1:
        raise ValueError(f"labels_per_class must be positive, got {labels_per_class}")
    classes = np.unique(labels)
    if classes.size < 2:
        raise DataError("need at least two classes to make a split")
    train_parts = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        if members.size < labels_per_class:
            raise DataError(
                f"class {c} has {members.size} nodes, fewer than "
                f"labels_per_class={labels_per_class}"
            )
        train_parts.append(rng.choice(members, size=labels_per_class, replace=False))
    train = np.sort(np.concatenate(train_parts))
    pool = np.setdiff1d(np.arange(labels.size), train)
    if val_size + test_size > pool.size:
        raise DataError(
            f"val_size + test_size = {val_size + test_size} exceeds the "
            f"{pool.size} nodes left outside the train set"
        )
    chosen = rng.choice(pool, size=val_size + test_size, replace=False)
    val = np.sort(chosen[:val_size])
    test = np.sort(chosen[val_size:])
    return Split(train=train, val=val, test=test, labels_per_class=labels_per_class)


def _macro_ovr_auc(y_true: np.ndarray, proba: np.ndarray, classes: np.ndarray) -> float:
    """Mean one-vs-rest AUC over the classes present in y_true."""
    aucs = []
    for j, c in enumerate(classes):
        mask = y_true == c
        if mask.all() or not mask.any():
            continue
        aucs.append(roc_auc_score(mask, proba[:, j]))
    if not aucs:
        raise DataError("AUC undefined: test labels contain a single class")
    return float(np.mean(aucs))


def linear_probe(
    embeddings: np.ndarray,
    labels: np.ndarray,
    split: Split,
    reg_grid: tuple[float, ...] = PROBE_REG_GRID,
) -> dict[str, float]:
    """L2 logistic probe; regularization picked by validation micro-F1."""
    labels = np.asarray(labels)
    y_train = labels[split.train]
    if np.unique(y_train).size < 2:
        raise DataError("probe train split contains a single class")
    best = None
    for reg in reg_grid:
        clf = LogisticRegression(C=1.0 / reg, max_iter=2000, tol=1e-6)
        clf.fit(embeddings[split.train], y_train)
        val_f1 = f1_score(labels[split.val], clf.predict(embeddings[split.val]), average="micro")
        if best is None or val_f1 > best[0]:
            best = (val_f1, reg, clf)
    _, reg, clf = best
    pred = clf.predict(embeddings[split.test])
    proba = clf.predict_proba(embeddings[split.test])
    y_test = labels[split.test]
    return {
        "micro_f1": float(f1_score(y_test, pred, average="micro")),
        "macro_f1": float(f1_score(y_test, pred, average="macro")),
        "auc": _macro_ovr_auc(y_test, proba, clf.classes_),
        "reg": float(reg),
    }


# ---------------------------------------------------------------------------
# clustering


def _dsq_seed_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy D^2 seeding: each next center drawn proportional to squared
    distance from the chosen set."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centers[j] = x[rng.integers(n)]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(d2), r))
        idx = min(idx, n - 1)
        centers[j] = x[idx]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def lloyd_iterations(
    x: np.ndarray, centers: np.ndarray, max_iter: int = 300
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Alternate assign/update until assignments stop changing.

    Returns (assignment, centers, inertia trace). An emptied cluster is
    reseeded with the point farthest from its current center, so k
    clusters always survive.
    """
    k = centers.shape[0]
    centers = centers.copy()
    assignment = None
    inertia_trace: list[float] = []
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assignment = d2.argmin(axis=1)
        inertia_trace.append(float(d2[np.arange(x.shape[0]), new_assignment].sum()))
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(k):
            members = x[assignment == j]
            if len(members):
                centers[j] = members.mean(axis=0)
            else:
                worst = int(d2[np.arange(x.shape[0]), assignment].argmax())
                centers[j] = x[worst]
    return assignment, centers, inertia_trace


def kmeans_cluster(
    x: np.ndarray, k: int, restarts: int = 10, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Best-of-restarts Lloyd clustering; returns the assignment."""
    x = np.asarray(x, dtype=np.float64)
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if k > x.shape[0]:
        raise ValueError(f"k={k} exceeds the {x.shape[0]} points")
    if restarts < 1:
        raise ValueError("restarts must be positive")
    if rng is None:
        rng = np.random.default_rng(0)
    best_assignment = None
    best_inertia = np.inf
    for _ in range(restarts):
        centers = _dsq_seed_centers(x, k, rng)
        assignment, _, trace = lloyd_iterations(x, centers)
        if trace[-1] < best_inertia:
            best_inertia = trace[-1]
            best_assignment = assignment
    return best_assignment


def nmi_ari(pred: np.ndarray, truth: np.ndarray) -> tuple[float, float]:
    """Normalized mutual information (arithmetic) and adjusted Rand index."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.size == 0 or truth.size == 0:
        raise ValueError("cannot score an empty clustering")
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    nmi = float(normalized_mutual_info_score(truth, pred, average_method="arithmetic"))
    ari = float(adjusted_rand_score(truth, pred))
    return nmi, ari


# ---------------------------------------------------------------------------
# edge scoring


def _non_edge_candidates(adjacency: np.ndarray) -> np.ndarray:
    n = adjacency.shape[0]
    symmetric = bool(np.array_equal(adjacency, adjacency.T))
    zero = adjacency == 0.0
    np.fill_diagonal(zero, False)
    if symmetric:
        zero &= np.arange(n)[:, None] < np.arange(n)[None, :]
    return np.argwhere(zero)


def count_non_edges(adjacency: np.ndarray) -> int:
    """Off-diagonal zero entries, counted per unordered pair when symmetric."""
    return int(_non_edge_candidates(adjacency).shape[0])


def sample_non_edges(
    adjacency: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform off-diagonal zero entries; (i, j) with i < j when symmetric."""
    cand = _non_edge_candidates(adjacency)
    if cand.shape[0] < count:
        raise DataError(
            f"only {cand.shape[0]} non-edges available, need {count}"
        )
    pick = rng.choice(cand.shape[0], size=count, replace=False)
    return cand[pick].astype(np.int64)


def edge_auc(
    held_out: np.ndarray, non_edges: np.ndarray, scores: np.ndarray
) -> float | None:
    """AUC of held-out edges vs non-edges under a score matrix.

    Returns None (with a log notice) when there is nothing held out.
    """
    if held_out.shape[0] == 0:
        logger.warning("edge scoring skipped: no held-out edges")
        return None
    if non_edges.shape[0] != held_out.shape[0]:
        raise ValueError(
            f"need equally many non-edges as held-out edges, got "
            f"{non_edges.shape[0]} vs {held_out.shape[0]}"
        )
    pos = scores[held_out[:, 0], held_out[:, 1]]
    neg = scores[non_edges[:, 0], non_edges[:, 1]]
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return float(roc_auc_score(y, np.concatenate([pos, neg])))


# ---------------------------------------------------------------------------
# multi-seed reports


@dataclass
class EvalReport:
    """Aggregated downstream metrics with per-seed breakdowns."""

    micro_f1: float | None = None
    macro_f1: float | None = None
    auc: float | None = None
    nmi: float | None = None
    ari: float | None = None
    breakdown: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "auc": self.auc,
            "nmi": self.nmi,
            "ari": self.ari,
            "breakdown": self.breakdown,
            "seeds": self.seeds,
        }


def classification_eval(
    embeddings: np.ndarray,
    labels: np.ndarray,
    labels_per_class: int,
    val_size: int,
    test_size: int,
    num_seeds: int,
    base_seed: int,
) -> EvalReport:
    """Repeat the probe over derived split seeds and average the metrics."""
    rows = []
    seeds = list(range(num_seeds))
    for s in seeds:
        split = make_splits(
            labels, labels_per_class, val_size, test_size, derive_rng(base_seed, "eval-split", s)
        )
        rows.append(linear_probe(embeddings, labels, split))
    report = EvalReport(
        micro_f1=float(np.mean([r["micro_f1"] for r in rows])),
        macro_f1=float(np.mean([r["macro_f1"] for r in rows])),
        auc=float(np.mean([r["auc"] for r in rows])),
        seeds=seeds,
    )
    report.breakdown = {
        "micro_f1": [r["micro_f1"] for r in rows],
        "macro_f1": [r["macro_f1"] for r in rows],
        "auc": [r["auc"] for r in rows],
        "reg": [r["reg"] for r in rows],
        "micro_f1_std": float(np.std([r["micro_f1"] for r in rows])),
        "macro_f1_std": float(np.std([r["macro_f1"] for r in rows])),
    }
    return report


def clustering_eval(
    embeddings: np.ndarray,
    labels: np.ndarray,
    num_seeds: int,
    base_seed: int,
    restarts: int = 10,
) -> EvalReport:
    """Repeat restarted k-means over derived seeds; k = number of classes."""
    labels = np.asarray(labels)
    k = int(np.unique(labels).size)
    seeds = list(range(num_seeds))
    nmis, aris = [], []
    for s in seeds:
        assignment = kmeans_cluster(
            embeddings, k, restarts=restarts, rng=derive_rng(base_seed, "eval-kmeans", s)
        )
        nmi, ari = nmi_ari(assignment, labels)
        nmis.append(nmi)
        aris.append(ari)
    report = EvalReport(
        nmi=float(np.mean(nmis)),
        ari=float(np.mean(aris)),
        seeds=seeds,
    )
    report.breakdown = {
        "nmi": nmis,
        "ari": aris,
        "nmi_std": float(np.std(nmis)),
        "ari_std": float(np.std(aris)),
    }
    return report
