"""Mask schedule, edge masking, and attribute mask plans."""

import numpy as np
import pytest

from hgmae.autodiff import Tensor
from hgmae.hetgraph import MetapathView
from hgmae.masking import (
    AttributeMaskPlan,
    MaskSchedule,
    apply_attribute_mask,
    mask_edges,
    plan_attribute_mask,
    remask_latent,
    schedule_rate,
)
from hgmae.rng import derive_rng


# ---------------------------------------------------------------- schedule

class TestSchedule:
    def test_reference_points(self):
        s = MaskSchedule(0.5, 0.8, 0.005)
        assert schedule_rate(s, 0) == 0.5
        assert schedule_rate(s, 10) == pytest.approx(0.55)
        for m in (60, 61, 100, 500):
            assert schedule_rate(s, m) == 0.8

    def test_monotone_nondecreasing(self):
        s = MaskSchedule(0.5, 0.8, 0.005)
        rates = [schedule_rate(s, m) for m in range(501)]
        assert all(b >= a for a, b in zip(rates, rates[1:]))
        assert rates[0] == 0.5 and rates[-1] == 0.8

    def test_negative_epoch_rejected(self):
        with pytest.raises(ValueError):
            schedule_rate(MaskSchedule(), -1)

    def test_invalid_schedule_rejected(self):
        with pytest.raises(ValueError):
            MaskSchedule(min_rate=0.0)
        with pytest.raises(ValueError):
            MaskSchedule(min_rate=0.6, max_rate=0.5)
        with pytest.raises(ValueError):
            MaskSchedule(step=0.0)


# ---------------------------------------------------------------- edge masks

def dense_view(n=40, density=0.3, seed=0, symmetric=True):
    rng = np.random.default_rng(seed)
    a = (rng.random((n, n)) < density).astype(np.float64)
    if symmetric:
        a = np.maximum(a, a.T)
    np.fill_diagonal(a, 1.0)
    return MetapathView("v", a)


class TestEdgeMask:
    def test_removal_fraction_over_many_seeds(self):
        # the full-scale statistical run lives in the acceptance suite;
        # this is a faster version of the same property
        view = dense_view(n=300, density=0.1, seed=7)
        total_edges = int(view.adjacency.sum() - 300) // 2

        removed = 0
        for seed in range(300):
            m = mask_edges(view, 0.5, derive_rng(seed, "em"))
            removed += m.held_out.shape[0]
        frac = removed / (300 * total_edges)
        assert abs(frac - 0.5) < 0.02

    def test_masked_adjacency_consistent(self):
        view = dense_view()
        m = mask_edges(view, 0.4, np.random.default_rng(3))
        assert np.array_equal(m.masked_adjacency, m.keep_mask * view.adjacency)
        # removed entries were present and are now zero
        for i, j in m.held_out:
            assert view.adjacency[i, j] == 1.0
            assert m.masked_adjacency[i, j] == 0.0

    def test_diagonal_never_removed(self):
        view = dense_view()
        m = mask_edges(view, 0.9, np.random.default_rng(1))
        assert np.all(np.diag(m.masked_adjacency) == 1.0)

    def test_symmetric_view_masked_in_pairs(self):
        view = dense_view(symmetric=True)
        m = mask_edges(view, 0.5, np.random.default_rng(2))
        assert np.array_equal(m.masked_adjacency, m.masked_adjacency.T)
        assert np.all(m.held_out[:, 0] < m.held_out[:, 1])

    def test_asymmetric_view_masked_per_entry(self):
        rng = np.random.default_rng(5)
        a = (rng.random((30, 30)) < 0.4).astype(np.float64)
        np.fill_diagonal(a, 1.0)
        view = MetapathView("dir", a)
        assert not view.is_symmetric()
        m = mask_edges(view, 0.5, np.random.default_rng(6))
        assert np.all(np.diag(m.masked_adjacency) == 1.0)
        for i, j in m.held_out:
            assert a[i, j] == 1.0

    def test_rate_zero_removes_nothing(self):
        view = dense_view()
        m = mask_edges(view, 0.0, np.random.default_rng(0))
        assert m.held_out.shape == (0, 2)
        assert np.array_equal(m.masked_adjacency, view.adjacency)

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            mask_edges(dense_view(), 1.0, np.random.default_rng(0))


# ---------------------------------------------------------------- attribute plans

class TestAttributePlan:
    def test_partition_counts_match_rounding(self):
        # counting identities: n_masked = round(rate * n), splits rounded
        # from the masked count, token rows absorb the remainder
        for n, rate, pu, pr in [(100, 0.5, 0.1, 0.2), (333, 0.61, 0.25, 0.3),
                                (57, 0.8, 0.0, 0.0), (64, 1.0, 0.5, 0.5)]:
            plan = plan_attribute_mask(n, rate, pu, pr, np.random.default_rng(0))
            n_masked = int(np.round(rate * n))
            n_unchanged = int(np.round(pu * n_masked))
            n_replaced = min(int(np.round(pr * n_masked)), n_masked - n_unchanged)
            assert len(plan.masked) == n_masked
            assert len(plan.unchanged_rows) == n_unchanged
            assert len(plan.replacements) == n_replaced
            assert len(plan.token_rows) == n_masked - n_unchanged - n_replaced

    def test_partition_is_disjoint_and_covers(self):
        plan = plan_attribute_mask(200, 0.7, 0.15, 0.25, np.random.default_rng(4))
        parts = [plan.token_rows, plan.unchanged_rows, plan.replacements[:, 0]]
        union = np.concatenate(parts)
        assert len(union) == len(set(union.tolist()))
        assert set(union.tolist()) == set(plan.masked.tolist())

    def test_donors_never_self(self):
        for seed in range(50):
            plan = plan_attribute_mask(30, 1.0, 0.0, 1.0, np.random.default_rng(seed))
            assert np.all(plan.replacements[:, 0] != plan.replacements[:, 1])
            assert plan.replacements[:, 1].min() >= 0
            assert plan.replacements[:, 1].max() < 30

    def test_statistics_over_seeds(self):
        sizes = []
        for seed in range(1000):
            plan = plan_attribute_mask(100, 0.5, 0.0, 0.0, derive_rng(seed, "am"))
            sizes.append(len(plan.masked))
        # exact by construction: round(0.5 * 100) = 50 every time
        assert set(sizes) == {50}

    def test_invalid_arguments(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            plan_attribute_mask(0, 0.5, 0.0, 0.0, rng)
        with pytest.raises(ValueError):
            plan_attribute_mask(10, 0.0, 0.0, 0.0, rng)
        with pytest.raises(ValueError):
            plan_attribute_mask(10, 0.5, 0.6, 0.5, rng)
        with pytest.raises(ValueError):
            plan_attribute_mask(10, 0.5, -0.1, 0.0, rng)


class TestApplyMask:
    def test_token_rows_become_token(self):
        x = Tensor(np.arange(24, dtype=np.float64).reshape(6, 4))
        token = Tensor(np.full((1, 4), -1.0))
        plan = plan_attribute_mask(6, 1.0, 0.0, 0.0, np.random.default_rng(0))
        out = apply_attribute_mask(x, plan, token).values
        assert np.all(out == -1.0)

    def test_replaced_rows_copy_donor_originals(self):
        x_vals = np.arange(24, dtype=np.float64).reshape(6, 4)
        token = Tensor(np.zeros((1, 4)))
        plan = AttributeMaskPlan(
            num_nodes=6,
            masked=np.array([1, 3]),
            token_rows=np.array([3]),
            unchanged_rows=np.zeros(0, dtype=np.int64),
            replacements=np.array([[1, 3]]),
            mask_rate=0.33, unchanged_rate=0.0, replace_rate=0.5,
        )
        out = apply_attribute_mask(Tensor(x_vals), plan, token).values
        # node 1 takes node 3's ORIGINAL row even though 3 is tokenized
        assert np.array_equal(out[1], x_vals[3])
        assert np.all(out[3] == 0.0)
        for i in (0, 2, 4, 5):
            assert np.array_equal(out[i], x_vals[i])

    def test_unchanged_rows_keep_values(self):
        x_vals = np.random.default_rng(1).normal(size=(10, 3))
        plan = plan_attribute_mask(10, 0.6, 1.0, 0.0, np.random.default_rng(2))
        out = apply_attribute_mask(Tensor(x_vals), plan, Tensor(np.zeros((1, 3)))).values
        assert np.array_equal(out, x_vals)

    def test_empty_masked_set_is_identity(self):
        x_vals = np.random.default_rng(1).normal(size=(8, 3))
        plan = AttributeMaskPlan(
            num_nodes=8,
            masked=np.zeros(0, dtype=np.int64),
            token_rows=np.zeros(0, dtype=np.int64),
            unchanged_rows=np.zeros(0, dtype=np.int64),
            replacements=np.zeros((0, 2), dtype=np.int64),
            mask_rate=0.5, unchanged_rate=0.0, replace_rate=0.0,
        )
        out = apply_attribute_mask(Tensor(x_vals), plan, Tensor(np.zeros((1, 3))))
        assert np.array_equal(out.values, x_vals)

    def test_shape_mismatch_rejected(self):
        plan = plan_attribute_mask(5, 0.5, 0.0, 0.0, np.random.default_rng(0))
        with pytest.raises(ValueError):
            apply_attribute_mask(Tensor(np.zeros((7, 3))), plan, Tensor(np.zeros((1, 3))))


class TestRemaskLatent:
    def test_all_masked_rows_overwritten(self):
        h = Tensor(np.random.default_rng(0).normal(size=(10, 4)))
        token = Tensor(np.full((1, 4), 9.0))
        plan = plan_attribute_mask(10, 0.5, 0.2, 0.4, np.random.default_rng(1))
        out = remask_latent(h, plan, token).values
        assert np.all(out[plan.masked] == 9.0)
        untouched = np.setdiff1d(np.arange(10), plan.masked)
        assert np.array_equal(out[untouched], h.values[untouched])

    def test_remask_covers_every_corruption_flavor(self):
        # unchanged and replaced rows are re-masked too, not just token rows
        plan = plan_attribute_mask(20, 0.8, 0.3, 0.3, np.random.default_rng(5))
        assert len(plan.unchanged_rows) and len(plan.replacements)
        h = Tensor(np.ones((20, 2)))
        out = remask_latent(h, plan, Tensor(np.full((1, 2), -5.0))).values
        assert np.all(out[plan.unchanged_rows] == -5.0)
        assert np.all(out[plan.replacements[:, 0]] == -5.0)
