"""The three masked-reconstruction losses and their weighted combination.

Edge loss: encode each masked view on its own, decode adjacency
probabilities, score them against the unmasked view with a scaled
cosine error over all rows, then combine per-view losses with a
dedicated semantic-attention weighting.

Attribute loss: corrupt attributes by the mask plan, encode through all
unmasked views, re-mask every selected latent row with a second token,
decode back to attribute space, and score only the masked rows. The
default target is the original attribute matrix; "literal" scores
against the corrupted input instead (token rows then collapse onto the
token, which is only useful for diagnostics).

Position loss: an MLP from the same latents to the positional features,
scored over all rows (rows with a zero positional vector are skipped by
the error itself).

A weight of exactly zero skips the branch entirely, so no gradient
flows anywhere near its parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import encdec
from .autodiff import Tensor
from .encdec import ModelParams
from .errors import ConfigError
from .hetgraph import MetapathView
from .masking import AttributeMaskPlan, EdgeMask, apply_attribute_mask, remask_latent

logger = logging.getLogger(__name__)

_warned: set = set()


def _warn_once(msg: str) -> None:
    # the position loss runs every epoch; nagging about the same dead rows
    # each time buries the loss log
    if msg not in _warned:
        _warned.add(msg)
        logger.warning(msg)


@dataclass(frozen=True)
class LossWeights:
    """Branch weights and the per-branch scaled-cosine-error powers."""

    edge: float = 1.0
    attr: float = 1.0
    position: float = 1.0
    edge_power: float = 2.0
    attr_power: float = 2.0
    position_power: float = 2.0

    def __post_init__(self):
        for name in ("edge", "attr", "position"):
            if getattr(self, name) < 0.0:
                raise ConfigError(f"loss weight {name!r} must be non-negative")
        if self.edge == 0.0 and self.attr == 0.0 and self.position == 0.0:
            raise ConfigError("at least one loss weight must be positive")
        for name in ("edge_power", "attr_power", "position_power"):
            if getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class LossReport:
    """Scalar summary of one loss evaluation."""

    total: float
    edge: float
    attr: float
    position: float
    per_metapath: dict[str, float] = field(default_factory=dict)
    fusion_weights: dict[str, float] = field(default_factory=dict)
    mask_rate: float = 0.0
    epoch: int = 0


def edge_reconstruction_loss(
    params: ModelParams,
    views: list[MetapathView],
    masks: list[EdgeMask],
    x: Tensor,
    power: float,
) -> tuple[Tensor, dict[str, float], dict[str, float]]:
    """Per-view masked reconstruction, fused by learned loss weights.

    Returns (loss, per-view loss values, per-view fusion weights).
    """
    if not views:
        raise ConfigError("edge reconstruction requires at least one metapath view")
    if len(views) != len(masks):
        raise ValueError(f"{len(views)} views but {len(masks)} edge masks")
    per_view_losses: list[Tensor] = []
    latents: list[Tensor] = []
    for view, mask in zip(views, masks):
        if mask.metapath_name != view.metapath_name:
            raise ValueError(
                f"edge mask for {mask.metapath_name!r} paired with view "
                f"{view.metapath_name!r}"
            )
        enc = encdec.encode(params, [mask.masked_adjacency], x)
        h1 = enc.per_view[0]
        recon = encdec.decode_edges(params, mask.masked_adjacency, h1)
        target = Tensor(view.adjacency)
        per_view_losses.append(ad.sce_rows(target, recon, power))
        latents.append(h1)
    weights, _ = encdec.semantic_attention(params.fuse_loss, latents)
    loss = None
    for j, lv in enumerate(per_view_losses):
        term = ad.mul(ad.slice_cols(weights, j, j + 1), lv)
        loss = term if loss is None else ad.add(loss, term)
    names = [v.metapath_name for v in views]
    per_mp = {name: lv.item() for name, lv in zip(names, per_view_losses)}
    fusion = {name: float(w) for name, w in zip(names, weights.values[0])}
    return loss, per_mp, fusion


def masked_attribute_forward(
    params: ModelParams,
    views: list[MetapathView],
    x: Tensor,
    plan: AttributeMaskPlan,
) -> tuple[Tensor, Tensor]:
    """Corrupt attributes per the plan and encode through unmasked views.

    Returns (corrupted attributes, fused latent); shared by the
    attribute and position branches.
    """
    x_masked = apply_attribute_mask(x, plan, params.attr_mask_token)
    enc = encdec.encode(params, [v.adjacency for v in views], x_masked)
    return x_masked, enc.fused


def attribute_restoration_loss(
    params: ModelParams,
    views: list[MetapathView],
    x: Tensor,
    x_masked: Tensor,
    h3: Tensor,
    plan: AttributeMaskPlan,
    power: float,
    restore_target: str = "original",
) -> Tensor:
    """Re-mask latents, decode, and score the masked rows."""
    if restore_target not in ("original", "literal"):
        raise ConfigError(f"restore_target must be 'original' or 'literal', got {restore_target!r}")
    if not len(plan.masked):
        raise ValueError("attribute restoration needs a non-empty masked set")
    h_re = remask_latent(h3, plan, params.latent_mask_token)
    z = encdec.decode_attributes(params, [v.adjacency for v in views], h_re)
    target = x if restore_target == "original" else x_masked
    return ad.sce_rows(target, z, power, rows=plan.masked)


def position_prediction_loss(
    params: ModelParams, h3: Tensor, positions: np.ndarray, power: float
) -> Tensor:
    """Score predicted positional features over all usable rows."""
    if positions.shape[0] != h3.shape[0]:
        raise ValueError(
            f"positions cover {positions.shape[0]} nodes, latents {h3.shape[0]}"
        )
    pred = encdec.predict_positions(params, h3)
    target = Tensor(positions)
    dead = ad.zero_norm_rows(target, pred)
    if dead.size:
        _warn_once(f"position loss: skipping {dead.size} zero-norm position rows")
    return ad.sce_rows(target, pred, power)


def combined_loss(
    params: ModelParams,
    views: list[MetapathView],
    masks: list[EdgeMask] | None,
    x: Tensor,
    plan: AttributeMaskPlan | None,
    positions: np.ndarray | None,
    weights: LossWeights,
    restore_target: str = "original",
) -> tuple[Tensor, LossReport]:
    """Weighted sum over the active branches.

    Branch inputs may be None only when the matching weight is zero.
    The report's total is exactly the weighted sum of its components.
    """
    terms: list[Tensor] = []
    edge_value = attr_value = pos_value = 0.0
    per_mp: dict[str, float] = {}
    fusion: dict[str, float] = {}

    if weights.edge > 0.0:
        if masks is None:
            raise ValueError("edge weight is positive but no edge masks were given")
        edge_loss, per_mp, fusion = edge_reconstruction_loss(
            params, views, masks, x, weights.edge_power
        )
        edge_value = edge_loss.item()
        terms.append(ad.scale(edge_loss, weights.edge))

    need_latent = weights.attr > 0.0 or weights.position > 0.0
    if need_latent:
        if plan is None:
            raise ValueError("attribute or position branch is active but no mask plan was given")
        x_masked, h3 = masked_attribute_forward(params, views, x, plan)
        if weights.attr > 0.0:
            attr_loss = attribute_restoration_loss(
                params, views, x, x_masked, h3, plan, weights.attr_power, restore_target
            )
            attr_value = attr_loss.item()
            terms.append(ad.scale(attr_loss, weights.attr))
        if weights.position > 0.0:
            if positions is None:
                raise ValueError("position weight is positive but no positional features were given")
            pos_loss = position_prediction_loss(params, h3, positions, weights.position_power)
            pos_value = pos_loss.item()
            terms.append(ad.scale(pos_loss, weights.position))

    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    report = LossReport(
        total=total.item(),
        edge=edge_value,
        attr=attr_value,
        position=pos_value,
        per_metapath=per_mp,
        fusion_weights=fusion,
    )
    return total, report
