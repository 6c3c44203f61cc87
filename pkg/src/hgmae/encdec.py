"""Attention encoder/decoder over metapath views.

One shared node-level attention layer per role (encoder, edge decoder,
attribute decoder) plus three independent semantic-attention parameter
sets that fuse per-view embeddings: one inside the encoder, one inside
the attribute decoder, and one that weights per-view edge losses.

The node-level layer is multi-head attention restricted to a view's
adjacency: per head, project, score pairs with a split attention vector
through LeakyReLU(0.2), softmax over each row's neighbors, aggregate,
apply ELU. Heads are concatenated and mixed down by a learned output
projection, so the head count never constrains the hidden width.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_VERSION = 1


def xavier_bound(shape: tuple[int, int]) -> float:
    """Uniform init bound sqrt(6 / (fan_in + fan_out)) for a weight matrix."""
    return float(np.sqrt(6.0 / (shape[0] + shape[1])))


@dataclass
class ModelDims:
    """Widths that fix every parameter shape."""

    attr_dim: int
    hidden_dim: int = 256
    num_heads: int = 4
    semantic_dim: int = 128
    position_dim: int = 64

    def __post_init__(self):
        for name in ("attr_dim", "hidden_dim", "num_heads", "semantic_dim", "position_dim"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")


class AttentionParams:
    """Per-head projections and score vectors for one attention layer."""

    def __init__(self, heads: list[dict[str, Tensor]], out_w: Tensor, out_b: Tensor):
        self.heads = heads  # each: {"w": (d_in, d_out), "a_src": (d_out, 1), "a_dst": (d_out, 1)}
        self.out_w = out_w  # (num_heads * d_out, d_out)
        self.out_b = out_b  # (1, d_out)

    def named(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for k, head in enumerate(self.heads):
            for key, t in head.items():
                out[f"{prefix}.head{k}.{key}"] = t
        out[f"{prefix}.out_w"] = self.out_w
        out[f"{prefix}.out_b"] = self.out_b
        return out


class SemanticParams:
    """Projection, bias, and query vector for view-level attention."""

    def __init__(self, proj: Tensor, bias: Tensor, query: Tensor):
        self.proj = proj  # (d, semantic_dim)
        self.bias = bias  # (1, semantic_dim)
        self.query = query  # (semantic_dim, 1)

    def named(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.proj": self.proj, f"{prefix}.bias": self.bias, f"{prefix}.query": self.query}


class ModelParams:
    """Every learnable tensor in the model, with stable names.

    Tensor names from ``named_tensors`` are the checkpoint keys and the
    optimizer's slot keys, so their derivation must stay stable.
    """

    def __init__(self, dims: ModelDims, tensors: dict[str, Tensor]):
        self.dims = dims
        self._tensors = tensors
        self.type_proj_w = tensors["type_proj_w"]
        self.type_proj_b = tensors["type_proj_b"]
        self.attr_out_w = tensors["attr_out_w"]
        self.attr_out_b = tensors["attr_out_b"]
        self.mlp_w1 = tensors["mlp_w1"]
        self.mlp_b1 = tensors["mlp_b1"]
        self.mlp_w2 = tensors["mlp_w2"]
        self.mlp_b2 = tensors["mlp_b2"]
        self.attr_mask_token = tensors["attr_mask_token"]
        self.latent_mask_token = tensors["latent_mask_token"]
        self.encoder = self._attention("encoder")
        self.edge_decoder = self._attention("edge_decoder")
        self.attr_decoder = self._attention("attr_decoder")
        self.fuse_encoder = self._semantic("fuse_encoder")
        self.fuse_decoder = self._semantic("fuse_decoder")
        self.fuse_loss = self._semantic("fuse_loss")

    def _attention(self, prefix: str) -> AttentionParams:
        heads = []
        for k in range(self.dims.num_heads):
            heads.append(
                {
                    "w": self._tensors[f"{prefix}.head{k}.w"],
                    "a_src": self._tensors[f"{prefix}.head{k}.a_src"],
                    "a_dst": self._tensors[f"{prefix}.head{k}.a_dst"],
                }
            )
        return AttentionParams(
            heads, self._tensors[f"{prefix}.out_w"], self._tensors[f"{prefix}.out_b"]
        )

    def _semantic(self, prefix: str) -> SemanticParams:
        return SemanticParams(
            self._tensors[f"{prefix}.proj"],
            self._tensors[f"{prefix}.bias"],
            self._tensors[f"{prefix}.query"],
        )

    @staticmethod
    def shape_table(dims: ModelDims) -> dict[str, tuple[tuple[int, int], bool]]:
        """Name -> (shape, is_weight); non-weights start at zero."""
        d, k, ds, dp, da = (
            dims.hidden_dim,
            dims.num_heads,
            dims.semantic_dim,
            dims.position_dim,
            dims.attr_dim,
        )
        table: dict[str, tuple[tuple[int, int], bool]] = {
            "type_proj_w": ((da, d), True),
            "type_proj_b": ((1, d), False),
        }
        for prefix in ("encoder", "edge_decoder", "attr_decoder"):
            for h in range(k):
                table[f"{prefix}.head{h}.w"] = ((d, d), True)
                table[f"{prefix}.head{h}.a_src"] = ((d, 1), True)
                table[f"{prefix}.head{h}.a_dst"] = ((d, 1), True)
            table[f"{prefix}.out_w"] = ((k * d, d), True)
            table[f"{prefix}.out_b"] = ((1, d), False)
        for prefix in ("fuse_encoder", "fuse_decoder", "fuse_loss"):
            table[f"{prefix}.proj"] = ((d, ds), True)
            table[f"{prefix}.bias"] = ((1, ds), False)
            table[f"{prefix}.query"] = ((ds, 1), True)
        table["attr_out_w"] = ((d, da), True)
        table["attr_out_b"] = ((1, da), False)
        table["mlp_w1"] = ((d, d), True)
        table["mlp_b1"] = ((1, d), False)
        table["mlp_w2"] = ((d, dp), True)
        table["mlp_b2"] = ((1, dp), False)
        table["attr_mask_token"] = ((1, da), False)
        table["latent_mask_token"] = ((1, d), False)
        return table

    @classmethod
    def init(cls, dims: ModelDims, rng: np.random.Generator) -> "ModelParams":
        """Xavier-uniform weights, zero biases and mask tokens."""
        tensors: dict[str, Tensor] = {}
        for name, (shape, is_weight) in cls.shape_table(dims).items():
            if is_weight:
                bound = xavier_bound(shape)
                values = rng.uniform(-bound, bound, size=shape)
            else:
                values = np.zeros(shape)
            tensors[name] = Tensor(values, requires_grad=True)
        return cls(dims, tensors)

    def named_tensors(self) -> dict[str, Tensor]:
        return dict(self._tensors)

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: t.values.copy() for name, t in self._tensors.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self._tensors.items():
            if name not in values:
                raise ValueError(f"missing parameter {name!r}")
            if values[name].shape != t.values.shape:
                raise ValueError(
                    f"parameter {name!r} has shape {values[name].shape}, "
                    f"expected {t.values.shape}"
                )
            t.values = values[name].astype(np.float64).copy()

    def copy(self) -> "ModelParams":
        tensors = {
            name: Tensor(t.values.copy(), requires_grad=True)
            for name, t in self._tensors.items()
        }
        return ModelParams(self.dims, tensors)


def save_params(params: ModelParams, path: str | Path) -> None:
    """Write a checkpoint: all matrices plus a json header, bit-exact."""
    header = {
        "version": CHECKPOINT_VERSION,
        "dims": {
            "attr_dim": params.dims.attr_dim,
            "hidden_dim": params.dims.hidden_dim,
            "num_heads": params.dims.num_heads,
            "semantic_dim": params.dims.semantic_dim,
            "position_dim": params.dims.position_dim,
        },
    }
    arrays = {f"param/{name}": t.values for name, t in params.named_tensors().items()}
    np.savez(path, __header__=json.dumps(header, sort_keys=True), **arrays)


def load_params(path: str | Path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{path}: checkpoint not found")
    with np.load(path, allow_pickle=False) as data:
        if "__header__" not in data:
            raise ValueError(f"{path}: not a model checkpoint (missing header)")
        header = json.loads(str(data["__header__"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"{path}: checkpoint version {header.get('version')} not supported"
            )
        dims = ModelDims(**header["dims"])
        expected = ModelParams.shape_table(dims)
        tensors: dict[str, Tensor] = {}
        for name, (shape, _) in expected.items():
            key = f"param/{name}"
            if key not in data:
                raise ValueError(f"{path}: missing parameter {name!r}")
            arr = np.asarray(data[key], dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(
                    f"{path}: parameter {name!r} has shape {arr.shape}, expected {shape}"
                )
            tensors[name] = Tensor(arr, requires_grad=True)
    return ModelParams(dims, tensors)


# ---------------------------------------------------------------------------
# forward ops


@dataclass
class EncodedViews:
    """Encoder output: per-view embeddings plus their fusion."""

    per_view: list[Tensor]
    fused: Tensor
    weights: Tensor  # (1, num_views) semantic attention weights


def node_attention_layer(layer: AttentionParams, x: Tensor, adjacency: np.ndarray) -> Tensor:
    """Multi-head neighborhood attention under one adjacency."""
    n = x.shape[0]
    if adjacency.shape != (n, n):
        raise ValueError(f"adjacency shape {adjacency.shape} does not match {n} nodes")
    mask = adjacency > 0.0
    head_outputs = []
    for head in layer.heads:
        p = ad.matmul(x, head["w"])
        left = ad.matmul(p, head["a_src"])  # (n, 1)
        right = ad.matmul(p, head["a_dst"])  # (n, 1)
        scores = ad.leaky_relu(ad.add(left, ad.transpose(right)), 0.2)
        alpha = ad.rowwise_softmax(scores, mask)
        head_outputs.append(ad.elu(ad.matmul(alpha, p)))
    stacked = ad.concat_cols(head_outputs) if len(head_outputs) > 1 else head_outputs[0]
    return ad.add(ad.matmul(stacked, layer.out_w), layer.out_b)


def semantic_attention(
    sem: SemanticParams, embeddings: list[Tensor]
) -> tuple[Tensor, Tensor]:
    """Fuse per-view embeddings; returns (weights (1, v), fused (n, d)).

    Each view's score is the mean over nodes of a one-layer tanh scorer;
    weights are the softmax of the scores across views.
    """
    if not embeddings:
        raise ValueError("semantic_attention: need at least one view")
    n = embeddings[0].shape[0]
    scores = []
    for h in embeddings:
        if h.shape != embeddings[0].shape:
            raise ValueError("semantic_attention: view embeddings must share a shape")
        u = ad.tanh(ad.add(ad.matmul(h, sem.proj), sem.bias))
        scores.append(ad.scale(ad.sum_all(ad.matmul(u, sem.query)), 1.0 / n))
    weights = ad.rowwise_softmax(ad.concat_cols(scores))
    fused = None
    for j, h in enumerate(embeddings):
        term = ad.mul(ad.slice_cols(weights, j, j + 1), h)
        fused = term if fused is None else ad.add(fused, term)
    return weights, fused


def encode(params: ModelParams, views: list[np.ndarray], x: Tensor) -> EncodedViews:
    """Project attributes, attend per view, fuse across views."""
    if not views:
        raise ValueError("encode: need at least one view")
    h0 = ad.add(ad.matmul(x, params.type_proj_w), params.type_proj_b)
    per_view = [node_attention_layer(params.encoder, h0, a) for a in views]
    weights, fused = semantic_attention(params.fuse_encoder, per_view)
    return EncodedViews(per_view=per_view, fused=fused, weights=weights)


def decode_edges(params: ModelParams, masked_adjacency: np.ndarray, h: Tensor) -> Tensor:
    """Reconstruct adjacency probabilities from a view's latent rows."""
    h2 = node_attention_layer(params.edge_decoder, h, masked_adjacency)
    return ad.sigmoid(ad.matmul(h2, ad.transpose(h2)))


def decode_attributes(params: ModelParams, views: list[np.ndarray], h: Tensor) -> Tensor:
    """Map re-masked latents back to attribute space through every view."""
    if not views:
        raise ValueError("decode_attributes: need at least one view")
    per_view = [node_attention_layer(params.attr_decoder, h, a) for a in views]
    _, fused = semantic_attention(params.fuse_decoder, per_view)
    return ad.add(ad.matmul(fused, params.attr_out_w), params.attr_out_b)


def predict_positions(params: ModelParams, h: Tensor) -> Tensor:
    """One-hidden-layer ELU MLP from latents to positional feature space."""
    hidden = ad.elu(ad.add(ad.matmul(h, params.mlp_w1), params.mlp_b1))
    return ad.add(ad.matmul(hidden, params.mlp_w2), params.mlp_b2)
