"""Training loop: determinism, checkpointing, patience, and artifacts."""

import numpy as np
import pytest

from hgmae.autodiff import Tensor
from hgmae.errors import ConfigError, DivergenceError
from hgmae.hetgraph import HeteroGraph, Metapath, Relation, build_all_views
from hgmae.rng import derive_rng
from hgmae.trainer import (
    HGMAE,
    AdamState,
    TrainConfig,
    TrainState,
    embed,
    epoch_forward,
    fit,
    init_params,
    read_embeddings,
    train_step,
    write_embeddings,
    write_loss_log,
)

ATTR_DIM = 6
N_ITEMS = 20


def small_graph(seed=0):
    rng = np.random.default_rng(seed)
    item_comm = np.repeat([0, 1], N_ITEMS // 2)
    tag_comm = np.repeat([0, 1], 4)
    rate = np.where(item_comm[:, None] == tag_comm[None, :], 0.5, 0.05)
    rels = {}
    for name in ("has_tag", "uses_tag"):
        edges = np.argwhere(rng.random((N_ITEMS, 8)) < rate).astype(np.int64)
        rels[name] = Relation(name, "item", "tag", edges)
    return HeteroGraph(
        node_counts={"item": N_ITEMS, "tag": 8},
        relations=rels,
        attributes={"item": rng.normal(size=(N_ITEMS, ATTR_DIM))},
        metapaths=[
            Metapath("item-tag-item", (("has_tag", False), ("has_tag", True))),
            Metapath("item-use-item", (("uses_tag", False), ("uses_tag", True))),
        ],
        target_type="item",
        labels=item_comm.astype(np.int64),
    )


def small_config(**over):
    base = dict(
        hidden_dim=16,
        num_heads=2,
        semantic_dim=8,
        position_dim=8,
        max_epochs=12,
        patience=12,
        seed=3,
    )
    base.update(over)
    return TrainConfig(**base)


def unit_positions(seed=0, dim=8):
    rng = np.random.default_rng(seed)
    p = rng.normal(size=(N_ITEMS, dim))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


# ---------------------------------------------------------------- config

class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(learning_rate=-1.0)
        with pytest.raises(ConfigError):
            TrainConfig(max_epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig(patience=0)
        with pytest.raises(ConfigError):
            TrainConfig(edge_mask_rate=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(restore_target="nope")

    def test_walk_config_inherits_seed_and_dim(self):
        cfg = small_config(seed=11, position_dim=32)
        wc = cfg.walk_config()
        assert wc.seed == 11 and wc.dim == 32


# ---------------------------------------------------------------- stepping

class TestTrainStep:
    def test_zero_learning_rate_freezes_params(self):
        g = small_graph()
        cfg = small_config(learning_rate=0.0)
        views = build_all_views(g)
        x = Tensor(g.target_attributes)
        params = init_params(cfg, ATTR_DIM, derive_rng(cfg.seed, "init"))
        before = params.snapshot()
        state = TrainState(params=params, opt=AdamState.for_params(params))
        train_step(state, views, x, unit_positions(), cfg)
        after = state.params.snapshot()
        for name in before:
            assert np.array_equal(before[name], after[name]), name

    def test_checkpoint_replays_best_loss(self):
        g = small_graph()
        cfg = small_config()
        positions = unit_positions()
        state = fit(g, cfg, positions=positions)
        assert state.best_params is not None
        model = state.best_model()
        views = build_all_views(g)
        x = Tensor(g.target_attributes)
        _, report = epoch_forward(model, views, x, positions, cfg, state.best_epoch)
        assert report.total == pytest.approx(state.best_loss, abs=1e-10)

    def test_divergence_raises(self):
        # a non-finite parameter turns the fusion weights, and so the
        # total loss, non-finite; the step must halt rather than continue
        g = small_graph()
        cfg = small_config()
        views = build_all_views(g)
        x = Tensor(g.target_attributes)
        params = init_params(cfg, ATTR_DIM, derive_rng(cfg.seed, "init"))
        params.fuse_loss.query.values[:] = np.nan
        state = TrainState(params=params, opt=AdamState.for_params(params))
        with pytest.raises(DivergenceError):
            train_step(state, views, x, unit_positions(), cfg)

    def test_adam_slots_track_parameters(self):
        cfg = small_config()
        params = init_params(cfg, ATTR_DIM, derive_rng(0, "init"))
        opt = AdamState.for_params(params)
        names = set(params.named_tensors())
        assert set(opt.m) == names and set(opt.v) == names


# ---------------------------------------------------------------- fit loop

class TestFit:
    def test_deterministic(self):
        g = small_graph()
        positions = unit_positions()
        a = fit(g, small_config(), positions=positions)
        b = fit(g, small_config(), positions=positions)
        assert [r.total for r in a.history] == [r.total for r in b.history]
        for name in a.best_params:
            assert np.array_equal(a.best_params[name], b.best_params[name])

    def test_flat_loss_stops_after_patience(self):
        # a huge tolerance means nothing after epoch 0 ever counts as an
        # improvement, so the loop must stop after exactly patience extra epochs
        g = small_graph()
        cfg = small_config(improvement_tol=1e9, patience=5, max_epochs=50)
        state = fit(g, cfg, positions=unit_positions())
        assert len(state.history) == 6
        assert state.best_epoch == 0

    def test_loss_decreases_over_training(self):
        g = small_graph()
        cfg = small_config(max_epochs=50, patience=50)
        state = fit(g, cfg, positions=unit_positions())
        first = state.history[0].total
        best = min(r.total for r in state.history)
        assert best < first
        assert state.best_loss == pytest.approx(best)

    def test_best_loss_is_minimum_of_history(self):
        g = small_graph()
        state = fit(g, small_config(), positions=unit_positions())
        assert state.best_loss == min(r.total for r in state.history)

    def test_position_shape_mismatch_rejected(self):
        g = small_graph()
        with pytest.raises(ConfigError):
            fit(g, small_config(), positions=np.ones((N_ITEMS, 3)))

    def test_embed_shape_and_determinism(self):
        g = small_graph()
        cfg = small_config()
        params = init_params(cfg, ATTR_DIM, derive_rng(5, "init"))
        e1 = embed(params, g)
        e2 = embed(params, g)
        assert e1.shape == (N_ITEMS, cfg.hidden_dim)
        assert np.array_equal(e1, e2)
        assert np.all(np.isfinite(e1))


# ---------------------------------------------------------------- artifacts

class TestArtifacts:
    def test_embeddings_round_trip_exact(self, tmp_path):
        e = np.random.default_rng(0).normal(size=(7, 5))
        path = tmp_path / "emb.csv"
        write_embeddings(e, path)
        back = read_embeddings(path)
        assert np.array_equal(e, back)

    def test_embeddings_rewrite_byte_identical(self, tmp_path):
        e = np.random.default_rng(1).normal(size=(4, 3))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_embeddings(e, p1)
        write_embeddings(e, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_loss_log_round_trip(self, tmp_path):
        g = small_graph()
        state = fit(g, small_config(max_epochs=4, patience=4), positions=unit_positions())
        path = tmp_path / "loss.csv"
        write_loss_log(state.history, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,mask_rate,edge_loss,attr_loss,position_loss,total_loss"
        assert len(lines) == 1 + len(state.history)
        total = float(lines[1].split(",")[-1])
        assert total == state.history[0].total


# ---------------------------------------------------------------- estimator

class TestEstimator:
    def fitted(self):
        g = small_graph()
        est = HGMAE(
            hidden_dim=16, num_heads=2, semantic_dim=8, position_dim=8,
            max_epochs=6, patience=6, walks_per_node=2, walk_length=8,
            window=3, walk_epochs=1, seed=2,
        )
        return g, est.fit(g)

    def test_fit_sets_state(self):
        g, est = self.fitted()
        assert est.params_ is not None
        assert len(est.loss_log_) <= 6
        assert est.best_loss_ == min(r.total for r in est.loss_log_)

    def test_transform_shape(self):
        g, est = self.fitted()
        e = est.transform(g)
        assert e.shape == (N_ITEMS, 16)

    def test_unfitted_transform_rejected(self):
        with pytest.raises(RuntimeError):
            HGMAE().transform(small_graph())

    def test_get_params_round_trip(self):
        est = HGMAE(hidden_dim=32, seed=9)
        p = est.get_params()
        assert p["hidden_dim"] == 32 and p["seed"] == 9
        est.set_params(hidden_dim=64)
        assert est.hidden_dim == 64

    def test_fit_transform_matches_fit_then_transform(self):
        g = small_graph()
        kw = dict(hidden_dim=16, num_heads=2, semantic_dim=8, position_dim=8,
                  max_epochs=4, patience=4, walks_per_node=2, walk_length=8,
                  window=3, walk_epochs=1, seed=2)
        a = HGMAE(**kw).fit_transform(g)
        b = HGMAE(**kw).fit(g).transform(g)
        assert np.array_equal(a, b)
