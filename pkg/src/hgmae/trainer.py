"""Deterministic training loop with Adam, patience, and replayable epochs.

Each epoch draws fresh edge masks and a fresh attribute mask plan from
named streams keyed by (seed, strategy, epoch), evaluates the combined
loss at the current parameters, checkpoints them when the loss improves
by more than the tolerance, then applies one Adam update. Because the
loss is logged before the update and every mask is a pure function of
(seed, epoch), any logged epoch can be replayed exactly from its
parameter snapshot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from .autodiff import Tensor
from .encdec import ModelDims, ModelParams, encode
from .errors import ConfigError, DivergenceError
from .hetgraph import HeteroGraph, MetapathView, build_all_views
from .masking import MaskSchedule, mask_edges, plan_attribute_mask, schedule_rate
from .mp2vec import WalkConfig, positional_features
from .objectives import LossReport, LossWeights, combined_loss
from .rng import derive_rng

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """Everything the training loop needs besides the graph itself."""

    hidden_dim: int = 256
    num_heads: int = 4
    semantic_dim: int = 128
    position_dim: int = 64
    learning_rate: float = 5e-4
    weight_decay: float = 0.0
    max_epochs: int = 200
    patience: int = 10
    improvement_tol: float = 1e-5
    edge_mask_rate: float = 0.5
    schedule: MaskSchedule = field(default_factory=MaskSchedule)
    unchanged_rate: float = 0.0
    replace_rate: float = 0.0
    weights: LossWeights = field(default_factory=LossWeights)
    restore_target: str = "original"
    walks: WalkConfig | None = None
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0.0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be positive, got {self.max_epochs}")
        if self.patience < 1:
            raise ConfigError(f"patience must be positive, got {self.patience}")
        if self.improvement_tol < 0.0:
            raise ConfigError("improvement_tol must be non-negative")
        if not 0.0 <= self.edge_mask_rate < 1.0:
            raise ConfigError(f"edge_mask_rate must be in [0, 1), got {self.edge_mask_rate}")
        if self.unchanged_rate < 0.0 or self.replace_rate < 0.0:
            raise ConfigError("unchanged_rate and replace_rate must be non-negative")
        if self.unchanged_rate + self.replace_rate > 1.0:
            raise ConfigError("unchanged_rate + replace_rate must not exceed 1")
        if self.restore_target not in ("original", "literal"):
            raise ConfigError(
                f"restore_target must be 'original' or 'literal', got {self.restore_target!r}"
            )

    def walk_config(self) -> WalkConfig:
        """Walk settings, defaulting dim and seed from this config."""
        if self.walks is not None:
            return self.walks
        return WalkConfig(dim=self.position_dim, seed=self.seed)


@dataclass
class AdamState:
    """First and second moment slots per parameter name."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        return cls(
            m={name: np.zeros_like(t.values) for name, t in params.named_tensors().items()},
            v={name: np.zeros_like(t.values) for name, t in params.named_tensors().items()},
        )


@dataclass
class TrainState:
    """Mutable loop state; ``best_params`` is the checkpointed snapshot."""

    params: ModelParams
    opt: AdamState
    epoch: int = 0
    best_loss: float = np.inf
    best_epoch: int = -1
    best_params: dict[str, np.ndarray] | None = None
    epochs_since_improvement: int = 0
    history: list[LossReport] = field(default_factory=list)

    def best_model(self) -> ModelParams:
        if self.best_params is None:
            raise RuntimeError("no checkpoint yet: training has not observed a finite loss")
        model = self.params.copy()
        model.load_values(self.best_params)
        return model


def init_params(config: TrainConfig, attr_dim: int, rng: np.random.Generator) -> ModelParams:
    """Xavier-uniform weights, zero biases and tokens, shapes from config."""
    dims = ModelDims(
        attr_dim=attr_dim,
        hidden_dim=config.hidden_dim,
        num_heads=config.num_heads,
        semantic_dim=config.semantic_dim,
        position_dim=config.position_dim,
    )
    return ModelParams.init(dims, rng)


def epoch_forward(
    params: ModelParams,
    views: list[MetapathView],
    x: Tensor,
    positions: np.ndarray | None,
    config: TrainConfig,
    epoch: int,
) -> tuple[ad.Tensor, LossReport]:
    """Draw this epoch's masks and evaluate the combined loss.

    Pure given (params, epoch, config, data): used by both train_step
    and replay checks.
    """
    weights = config.weights
    masks = None
    if weights.edge > 0.0:
        rng_edges = derive_rng(config.seed, "mask-edges", epoch)
        masks = [mask_edges(v, config.edge_mask_rate, rng_edges) for v in views]
    plan = None
    rate = schedule_rate(config.schedule, epoch)
    if weights.attr > 0.0 or weights.position > 0.0:
        rng_attrs = derive_rng(config.seed, "mask-attrs", epoch)
        plan = plan_attribute_mask(
            x.shape[0], rate, config.unchanged_rate, config.replace_rate, rng_attrs
        )
    total, report = combined_loss(
        params, views, masks, x, plan, positions, weights, config.restore_target
    )
    report.mask_rate = rate
    report.epoch = epoch
    return total, report


def train_step(
    state: TrainState,
    views: list[MetapathView],
    x: Tensor,
    positions: np.ndarray | None,
    config: TrainConfig,
) -> LossReport:
    """One epoch: evaluate, checkpoint on improvement, update in place."""
    total, report = epoch_forward(state.params, views, x, positions, config, state.epoch)
    if not np.isfinite(report.total):
        raise DivergenceError(f"non-finite loss {report.total} at epoch {state.epoch}")
    if state.best_loss - report.total > config.improvement_tol:
        state.best_loss = report.total
        state.best_epoch = state.epoch
        state.best_params = state.params.snapshot()
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1

    state.params.zero_grad()
    ad.backward(total)
    _adam_update(state.params, state.opt, config.learning_rate, config.weight_decay)
    state.epoch += 1
    state.history.append(report)
    return report


def _adam_update(params: ModelParams, opt: AdamState, lr: float, weight_decay: float) -> None:
    opt.t += 1
    bc1 = 1.0 - ADAM_BETA1**opt.t
    bc2 = 1.0 - ADAM_BETA2**opt.t
    for name, p in params.named_tensors().items():
        g = p.grad if p.grad is not None else np.zeros_like(p.values)
        if weight_decay > 0.0:
            g = g + weight_decay * p.values
        opt.m[name] = ADAM_BETA1 * opt.m[name] + (1.0 - ADAM_BETA1) * g
        opt.v[name] = ADAM_BETA2 * opt.v[name] + (1.0 - ADAM_BETA2) * g * g
        step = (opt.m[name] / bc1) / (np.sqrt(opt.v[name] / bc2) + ADAM_EPS)
        p.values = p.values - lr * step


def fit(
    graph: HeteroGraph,
    config: TrainConfig,
    positions: np.ndarray | None = None,
) -> TrainState:
    """Train until patience runs out or max_epochs is reached.

    ``positions`` may be precomputed; otherwise they are derived from
    the graph when the position branch is active.
    """
    graph.validate()
    views = build_all_views(graph)
    x = Tensor(graph.target_attributes)
    if config.weights.position > 0.0:
        if positions is None:
            logger.info("computing positional features (dim=%d)", config.position_dim)
            positions = positional_features(graph, config.walk_config())
        if positions.shape != (graph.num_targets, config.position_dim):
            raise ConfigError(
                f"positions have shape {positions.shape}, expected "
                f"({graph.num_targets}, {config.position_dim})"
            )
    params = init_params(config, graph.target_attributes.shape[1], derive_rng(config.seed, "init"))
    state = TrainState(params=params, opt=AdamState.for_params(params))
    for _ in range(config.max_epochs):
        report = train_step(state, views, x, positions, config)
        logger.info(
            "epoch %d: total=%.6f edge=%.6f attr=%.6f position=%.6f rate=%.3f",
            report.epoch,
            report.total,
            report.edge,
            report.attr,
            report.position,
            report.mask_rate,
        )
        if state.epochs_since_improvement >= config.patience:
            logger.info("stopping: no improvement for %d epochs", state.epochs_since_improvement)
            break
    return state


def embed(params: ModelParams, graph: HeteroGraph) -> np.ndarray:
    """Encode the graph with no masking and return the fused embedding."""
    graph.validate()
    views = build_all_views(graph)
    enc = encode(params, [v.adjacency for v in views], Tensor(graph.target_attributes))
    return enc.fused.values.copy()


def write_loss_log(history: list[LossReport], path: str | Path) -> None:
    """CSV with one row per epoch; repr floats so reruns are byte-equal."""
    lines = ["epoch,mask_rate,edge_loss,attr_loss,position_loss,total_loss"]
    for r in history:
        lines.append(
            f"{r.epoch},{repr(r.mask_rate)},{repr(r.edge)},{repr(r.attr)},"
            f"{repr(r.position)},{repr(r.total)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_embeddings(embeddings: np.ndarray, path: str | Path) -> None:
    """One comma-separated row per node, repr floats."""
    with open(path, "w") as fh:
        for row in embeddings:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_embeddings(path: str | Path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows, dtype=np.float64)


class HGMAE(BaseEstimator):
    """Masked-autoencoder embedder with a scikit-learn style surface.

    fit() runs self-supervised training on a HeteroGraph; transform()
    returns the fused node embeddings for the target type. Constructor
    arguments mirror TrainConfig plus the walk settings, all scalars so
    get_params/set_params round-trip cleanly.
    """

    def __init__(
        self,
        hidden_dim: int = 256,
        num_heads: int = 4,
        semantic_dim: int = 128,
        position_dim: int = 64,
        learning_rate: float = 5e-4,
        weight_decay: float = 0.0,
        max_epochs: int = 200,
        patience: int = 10,
        improvement_tol: float = 1e-5,
        edge_mask_rate: float = 0.5,
        min_mask_rate: float = 0.5,
        max_mask_rate: float = 0.8,
        mask_rate_step: float = 0.005,
        unchanged_rate: float = 0.0,
        replace_rate: float = 0.0,
        edge_weight: float = 1.0,
        attr_weight: float = 1.0,
        position_weight: float = 1.0,
        edge_power: float = 2.0,
        attr_power: float = 2.0,
        position_power: float = 2.0,
        restore_target: str = "original",
        walks_per_node: int = 10,
        walk_length: int = 20,
        window: int = 5,
        negatives: int = 5,
        walk_epochs: int = 5,
        seed: int = 0,
    ):
        self.hidden_dim = hidden_dim
        self.num_heads = num_heads
        self.semantic_dim = semantic_dim
        self.position_dim = position_dim
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.max_epochs = max_epochs
        self.patience = patience
        self.improvement_tol = improvement_tol
        self.edge_mask_rate = edge_mask_rate
        self.min_mask_rate = min_mask_rate
        self.max_mask_rate = max_mask_rate
        self.mask_rate_step = mask_rate_step
        self.unchanged_rate = unchanged_rate
        self.replace_rate = replace_rate
        self.edge_weight = edge_weight
        self.attr_weight = attr_weight
        self.position_weight = position_weight
        self.edge_power = edge_power
        self.attr_power = attr_power
        self.position_power = position_power
        self.restore_target = restore_target
        self.walks_per_node = walks_per_node
        self.walk_length = walk_length
        self.window = window
        self.negatives = negatives
        self.walk_epochs = walk_epochs
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            hidden_dim=self.hidden_dim,
            num_heads=self.num_heads,
            semantic_dim=self.semantic_dim,
            position_dim=self.position_dim,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            max_epochs=self.max_epochs,
            patience=self.patience,
            improvement_tol=self.improvement_tol,
            edge_mask_rate=self.edge_mask_rate,
            schedule=MaskSchedule(
                min_rate=self.min_mask_rate,
                max_rate=self.max_mask_rate,
                step=self.mask_rate_step,
            ),
            unchanged_rate=self.unchanged_rate,
            replace_rate=self.replace_rate,
            weights=LossWeights(
                edge=self.edge_weight,
                attr=self.attr_weight,
                position=self.position_weight,
                edge_power=self.edge_power,
                attr_power=self.attr_power,
                position_power=self.position_power,
            ),
            restore_target=self.restore_target,
            walks=WalkConfig(
                walks_per_node=self.walks_per_node,
                walk_length=self.walk_length,
                window=self.window,
                negatives=self.negatives,
                dim=self.position_dim,
                epochs=self.walk_epochs,
                seed=self.seed,
            ),
            seed=self.seed,
        )

    def fit(self, graph: HeteroGraph, y=None, positions: np.ndarray | None = None) -> "HGMAE":
        config = self._config()
        if positions is None and config.weights.position > 0.0:
            positions = positional_features(graph, config.walk_config())
        self.positions_ = positions
        state = fit(graph, config, positions=positions)
        self.state_ = state
        self.params_ = state.best_model()
        self.loss_log_ = state.history
        self.best_loss_ = state.best_loss
        return self

    def transform(self, graph: HeteroGraph) -> np.ndarray:
        if not hasattr(self, "params_"):
            raise RuntimeError("this estimator is not fitted yet; call fit first")
        return embed(self.params_, graph)

    def fit_transform(self, graph: HeteroGraph, y=None, **fit_kwargs) -> np.ndarray:
        return self.fit(graph, y, **fit_kwargs).transform(graph)
