"""Attention encoder/decoder stack: init, fusion, and checkpointing."""

import numpy as np
import pytest

from hgmae import autodiff as ad
from hgmae.autodiff import Tensor
from hgmae.encdec import (
    EncodedViews,
    ModelDims,
    ModelParams,
    SemanticParams,
    decode_attributes,
    decode_edges,
    encode,
    load_params,
    node_attention_layer,
    predict_positions,
    save_params,
    semantic_attention,
    xavier_bound,
)

DIMS = ModelDims(attr_dim=5, hidden_dim=8, num_heads=2, semantic_dim=6, position_dim=4)


def fresh_params(seed=0, dims=DIMS):
    return ModelParams.init(dims, np.random.default_rng(seed))


def ring_adjacency(n):
    a = np.eye(n)
    for i in range(n):
        a[i, (i + 1) % n] = 1.0
        a[(i + 1) % n, i] = 1.0
    return a


# ---------------------------------------------------------------- init

class TestInit:
    def test_weights_within_xavier_bound(self):
        params = fresh_params(3)
        for name, (shape, is_weight) in ModelParams.shape_table(DIMS).items():
            t = params.named_tensors()[name]
            assert t.values.shape == shape, name
            if is_weight:
                bound = xavier_bound(shape)
                assert np.all(np.abs(t.values) <= bound), name
                # a genuinely random draw fills a decent part of the range
                assert np.abs(t.values).max() > 0.5 * bound, name

    def test_biases_and_tokens_start_at_zero(self):
        params = fresh_params(4)
        for name, (_, is_weight) in ModelParams.shape_table(DIMS).items():
            if not is_weight:
                assert np.all(params.named_tensors()[name].values == 0.0), name

    def test_xavier_bound_formula(self):
        assert xavier_bound((30, 10)) == pytest.approx(np.sqrt(6.0 / 40.0))

    def test_init_deterministic_per_seed(self):
        a, b = fresh_params(9), fresh_params(9)
        for name, t in a.named_tensors().items():
            assert np.array_equal(t.values, b.named_tensors()[name].values)

    def test_snapshot_load_copy(self):
        a = fresh_params(1)
        snap = a.snapshot()
        b = fresh_params(2)
        b.load_values(snap)
        for name, t in a.named_tensors().items():
            assert np.array_equal(t.values, b.named_tensors()[name].values)
        c = a.copy()
        c.type_proj_w.values[:] = 0.0
        assert not np.array_equal(a.type_proj_w.values, c.type_proj_w.values)

    def test_load_values_shape_checked(self):
        a = fresh_params(1)
        snap = a.snapshot()
        snap["mlp_w1"] = np.zeros((2, 2))
        with pytest.raises(ValueError, match="mlp_w1"):
            a.load_values(snap)


# ---------------------------------------------------------------- attention

class TestNodeAttention:
    def test_output_shape(self):
        params = fresh_params(0)
        x = Tensor(np.random.default_rng(0).normal(size=(7, DIMS.hidden_dim)))
        out = node_attention_layer(params.encoder, x, ring_adjacency(7))
        assert out.shape == (7, DIMS.hidden_dim)

    def test_isolated_node_with_self_loop_attends_to_itself(self):
        params = fresh_params(0)
        n = 5
        a = np.eye(n)
        x_vals = np.random.default_rng(1).normal(size=(n, DIMS.hidden_dim))
        out = node_attention_layer(params.encoder, Tensor(x_vals), a)
        # with only self-loops every row depends on its own input alone:
        # changing another row must not change it
        x2 = x_vals.copy()
        x2[3] += 10.0
        out2 = node_attention_layer(params.encoder, Tensor(x2), a)
        assert np.allclose(out.values[0], out2.values[0])
        assert not np.allclose(out.values[3], out2.values[3])

    def test_adjacency_shape_mismatch(self):
        params = fresh_params(0)
        with pytest.raises(ValueError):
            node_attention_layer(
                params.encoder, Tensor(np.zeros((4, DIMS.hidden_dim))), np.eye(5)
            )


class TestSemanticAttention:
    def test_weights_sum_to_one(self):
        params = fresh_params(2)
        rng = np.random.default_rng(0)
        views = [Tensor(rng.normal(size=(9, DIMS.hidden_dim))) for _ in range(4)]
        weights, fused = semantic_attention(params.fuse_encoder, views)
        assert weights.shape == (1, 4)
        assert abs(weights.values.sum() - 1.0) < 1e-12
        assert fused.shape == (9, DIMS.hidden_dim)

    def test_equal_views_get_uniform_weights(self):
        params = fresh_params(2)
        h = Tensor(np.random.default_rng(1).normal(size=(6, DIMS.hidden_dim)))
        weights, fused = semantic_attention(params.fuse_encoder, [h, h, h])
        assert np.allclose(weights.values, 1.0 / 3.0, atol=1e-12)
        assert np.allclose(fused.values, h.values, atol=1e-12)

    def test_single_view_passes_through(self):
        params = fresh_params(2)
        h = Tensor(np.random.default_rng(1).normal(size=(6, DIMS.hidden_dim)))
        weights, fused = semantic_attention(params.fuse_encoder, [h])
        assert weights.values.tolist() == [[1.0]]
        assert np.allclose(fused.values, h.values)

    def test_fused_is_weighted_sum(self):
        params = fresh_params(5)
        rng = np.random.default_rng(3)
        views = [Tensor(rng.normal(size=(4, DIMS.hidden_dim))) for _ in range(3)]
        weights, fused = semantic_attention(params.fuse_encoder, views)
        manual = sum(w * v.values for w, v in zip(weights.values[0], views))
        assert np.allclose(fused.values, manual, atol=1e-12)

    def test_rejects_empty_and_mismatched(self):
        params = fresh_params(0)
        with pytest.raises(ValueError):
            semantic_attention(params.fuse_encoder, [])
        with pytest.raises(ValueError):
            semantic_attention(
                params.fuse_encoder,
                [Tensor(np.zeros((3, DIMS.hidden_dim))), Tensor(np.zeros((4, DIMS.hidden_dim)))],
            )

    def test_three_independent_fusion_parameter_sets(self):
        # encoder, decoder, and loss fusion must not share tensors
        params = fresh_params(0)
        names = params.named_tensors()
        assert names["fuse_encoder.query"] is not names["fuse_decoder.query"]
        assert names["fuse_decoder.query"] is not names["fuse_loss.query"]


# ---------------------------------------------------------------- full stack

class TestEncodeDecode:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.params = fresh_params(7)
        self.n = 10
        self.views = [ring_adjacency(self.n), np.eye(self.n)]
        self.x = Tensor(rng.normal(size=(self.n, DIMS.attr_dim)))

    def test_encode_shapes(self):
        enc = encode(self.params, self.views, self.x)
        assert isinstance(enc, EncodedViews)
        assert len(enc.per_view) == 2
        assert enc.fused.shape == (self.n, DIMS.hidden_dim)
        assert enc.weights.shape == (1, 2)

    def test_decode_edges_symmetric_probabilities(self):
        enc = encode(self.params, self.views, self.x)
        recon = decode_edges(self.params, self.views[0], enc.per_view[0])
        assert recon.shape == (self.n, self.n)
        assert np.all((recon.values > 0) & (recon.values < 1))
        assert np.allclose(recon.values, recon.values.T)

    def test_decode_attributes_shape(self):
        enc = encode(self.params, self.views, self.x)
        out = decode_attributes(self.params, self.views, enc.fused)
        assert out.shape == (self.n, DIMS.attr_dim)

    def test_predict_positions_shape(self):
        enc = encode(self.params, self.views, self.x)
        out = predict_positions(self.params, enc.fused)
        assert out.shape == (self.n, DIMS.position_dim)

    def test_encode_requires_views(self):
        with pytest.raises(ValueError):
            encode(self.params, [], self.x)

    def test_gradient_reaches_every_encoder_parameter(self):
        enc = encode(self.params, self.views, self.x)
        loss = ad.sum_all(ad.mul(enc.fused, enc.fused))
        loss.backward()
        for name in ("type_proj_w", "encoder.head0.w", "encoder.out_w",
                     "fuse_encoder.proj", "fuse_encoder.query"):
            g = self.params.named_tensors()[name].grad
            assert g is not None and np.any(g != 0.0), name


# ---------------------------------------------------------------- checkpoints

class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        params = fresh_params(11)
        path = tmp_path / "model.npz"
        save_params(params, path)
        back = load_params(path)
        assert back.dims == params.dims
        for name, t in params.named_tensors().items():
            restored = back.named_tensors()[name].values
            assert restored.dtype == np.float64
            assert np.array_equal(restored, t.values), name

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_params(tmp_path / "nope.npz")

    def test_rejects_foreign_npz(self, tmp_path):
        path = tmp_path / "alien.npz"
        np.savez(path, stuff=np.zeros(3))
        with pytest.raises(ValueError, match="header"):
            load_params(path)

    def test_rejects_unknown_version(self, tmp_path):
        params = fresh_params(0)
        path = tmp_path / "model.npz"
        save_params(params, path)
        import json

        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files if k != "__header__"}
            header = json.loads(str(data["__header__"]))
        header["version"] = 999
        np.savez(path, __header__=json.dumps(header), **arrays)
        with pytest.raises(ValueError, match="version"):
            load_params(path)
