"""Edge masking, attribute masking plans, and latent re-masking.

Edge masking removes a Bernoulli fraction of the off-diagonal ones in a
metapath view (the rate is the expected fraction removed). Attribute
masking selects a node subset sized by the training-step schedule and
partitions it into token rows, leave-unchanged rows, and rows replaced
by another node's attributes. Latent re-masking overwrites the encoder
output at every masked node with a dedicated learned token.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .hetgraph import MetapathView


@dataclass(frozen=True)
class MaskSchedule:
    """Linear ramp for the attribute mask rate over training steps."""

    min_rate: float = 0.5
    max_rate: float = 0.8
    step: float = 0.005

    def __post_init__(self):
        if not 0.0 < self.min_rate <= 1.0:
            raise ValueError(f"min_rate must be in (0, 1], got {self.min_rate}")
        if not self.min_rate <= self.max_rate <= 1.0:
            raise ValueError(
                f"max_rate must be in [min_rate, 1], got {self.max_rate} with "
                f"min_rate {self.min_rate}"
            )
        if self.step <= 0.0:
            raise ValueError(f"step must be positive, got {self.step}")


def schedule_rate(schedule: MaskSchedule, epoch: int) -> float:
    """Mask rate at a given epoch: min(min_rate + epoch * step, max_rate)."""
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return min(schedule.min_rate + epoch * schedule.step, schedule.max_rate)


@dataclass
class EdgeMask:
    """One masked copy of a metapath view."""

    metapath_name: str
    keep_mask: np.ndarray  # (N, N) binary; 0 marks a removed entry
    masked_adjacency: np.ndarray  # keep_mask * adjacency
    held_out: np.ndarray  # (m, 2) removed positions; for symmetric views, i < j


def mask_edges(view: MetapathView, rate: float, rng: np.random.Generator) -> EdgeMask:
    """Remove each off-diagonal edge independently with probability ``rate``.

    Symmetric views are masked per unordered pair so the masked copy
    stays symmetric. The diagonal is never touched.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"edge mask rate must be in [0, 1), got {rate}")
    a = view.adjacency
    n = a.shape[0]
    keep = np.ones_like(a)
    off_diag = ~np.eye(n, dtype=bool)
    if view.is_symmetric():
        cand = np.argwhere((a > 0.0) & off_diag & (np.arange(n)[:, None] < np.arange(n)[None, :]))
        removed = cand[rng.random(len(cand)) < rate]
        if removed.size:
            keep[removed[:, 0], removed[:, 1]] = 0.0
            keep[removed[:, 1], removed[:, 0]] = 0.0
    else:
        cand = np.argwhere((a > 0.0) & off_diag)
        removed = cand[rng.random(len(cand)) < rate]
        if removed.size:
            keep[removed[:, 0], removed[:, 1]] = 0.0
    held_out = removed.astype(np.int64) if removed.size else np.zeros((0, 2), dtype=np.int64)
    return EdgeMask(
        metapath_name=view.metapath_name,
        keep_mask=keep,
        masked_adjacency=keep * a,
        held_out=held_out,
    )


@dataclass
class AttributeMaskPlan:
    """A node partition for one attribute-masking round.

    ``masked`` is the full selected set; token_rows, unchanged_rows and
    the first column of ``replacements`` partition it. ``replacements``
    rows are (masked node, donor node) with donor != node.
    """

    num_nodes: int
    masked: np.ndarray
    token_rows: np.ndarray
    unchanged_rows: np.ndarray
    replacements: np.ndarray  # (m, 2) int64
    mask_rate: float
    unchanged_rate: float
    replace_rate: float


def plan_attribute_mask(
    num_nodes: int,
    mask_rate: float,
    unchanged_rate: float,
    replace_rate: float,
    rng: np.random.Generator,
) -> AttributeMaskPlan:
    """Draw the masked set and split it into token/unchanged/replaced rows.

    Counts use round-half-even on rate * size; unchanged_rate and
    replace_rate are fractions of the masked set, so their sum may not
    exceed 1.
    """
    if num_nodes < 1:
        raise ValueError(f"num_nodes must be positive, got {num_nodes}")
    if not 0.0 < mask_rate <= 1.0:
        raise ValueError(f"mask_rate must be in (0, 1], got {mask_rate}")
    if unchanged_rate < 0.0 or replace_rate < 0.0:
        raise ValueError("unchanged_rate and replace_rate must be non-negative")
    if unchanged_rate + replace_rate > 1.0:
        raise ValueError(
            f"unchanged_rate + replace_rate must be <= 1, got "
            f"{unchanged_rate} + {replace_rate}"
        )
    n_masked = int(np.round(mask_rate * num_nodes))
    masked = rng.choice(num_nodes, size=n_masked, replace=False) if n_masked else np.zeros(
        0, dtype=np.int64
    )
    masked = masked.astype(np.int64)
    n_unchanged = int(np.round(unchanged_rate * n_masked))
    n_replaced = int(np.round(replace_rate * n_masked))
    if n_unchanged + n_replaced > n_masked:
        # rounding can push the two counts one past the set size
        n_replaced = n_masked - n_unchanged
    unchanged = np.sort(masked[:n_unchanged])
    replaced = np.sort(masked[n_unchanged : n_unchanged + n_replaced])
    token = np.sort(masked[n_unchanged + n_replaced :])
    donors = np.zeros(len(replaced), dtype=np.int64)
    for i, node in enumerate(replaced):
        d = int(rng.integers(num_nodes - 1))
        donors[i] = d + 1 if d >= node else d
    replacements = np.stack([replaced, donors], axis=1) if len(replaced) else np.zeros(
        (0, 2), dtype=np.int64
    )
    return AttributeMaskPlan(
        num_nodes=num_nodes,
        masked=np.sort(masked),
        token_rows=token,
        unchanged_rows=unchanged,
        replacements=replacements,
        mask_rate=mask_rate,
        unchanged_rate=unchanged_rate,
        replace_rate=replace_rate,
    )


def apply_attribute_mask(
    x: ad.Tensor, plan: AttributeMaskPlan, mask_token: ad.Tensor
) -> ad.Tensor:
    """Produce the corrupted attribute matrix for one plan.

    Token rows become the learned mask token, replaced rows take their
    donor's original attributes, unchanged rows keep their own. Donor
    rows always come from the original matrix, so chained replacements
    cannot occur.
    """
    n = x.shape[0]
    if plan.num_nodes != n:
        raise ValueError(f"plan covers {plan.num_nodes} nodes but matrix has {n} rows")
    if plan.masked.size and (plan.masked.min() < 0 or plan.masked.max() >= n):
        raise ValueError("mask plan contains out-of-range node ids")
    out = x
    if len(plan.replacements):
        index = np.arange(n, dtype=np.int64)
        index[plan.replacements[:, 0]] = plan.replacements[:, 1]
        out = ad.gather_rows(x, index)
    if len(plan.token_rows):
        out = ad.overwrite_rows(out, plan.token_rows, mask_token)
    return out


def remask_latent(h: ad.Tensor, plan: AttributeMaskPlan, dm_token: ad.Tensor) -> ad.Tensor:
    """Overwrite every masked node's latent row with the re-mask token."""
    if plan.num_nodes != h.shape[0]:
        raise ValueError(
            f"plan covers {plan.num_nodes} nodes but latent matrix has {h.shape[0]} rows"
        )
    if not len(plan.masked):
        return h
    return ad.overwrite_rows(h, plan.masked, dm_token)
