import math

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from attributegan.contrastive import (
    ContrastiveHead,
    LabelBatch,
    conditional_contrastive_loss,
    loss_reference,
)
from attributegan.errors import NumericError, ValidationError
from attributegan.schema import AttributeCombination


def random_batch(n, d, groups, seed, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    emb = F.normalize(torch.randn(n, d, generator=g, dtype=dtype), dim=1)
    label_emb = F.normalize(torch.randn(n, d, generator=g, dtype=dtype), dim=1)
    ids = torch.randint(0, groups, (n,), generator=g)
    return emb, ids, label_emb


class TestClosedForms:
    def test_single_sample_is_zero(self):
        emb, ids, label_emb = random_batch(1, 8, 1, seed=0)
        assert conditional_contrastive_loss(emb, ids, label_emb, 1.0).item() == 0.0

    def test_two_orthogonal_samples_log2(self):
        emb = torch.tensor([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], dtype=torch.float64)
        label_emb = torch.tensor([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]], dtype=torch.float64)
        ids = torch.tensor([0, 1])
        loss = conditional_contrastive_loss(emb, ids, label_emb, 1.0).item()
        assert abs(loss - math.log(2)) < 1e-9

    def test_reference_same_closed_forms(self):
        emb = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        lab = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]])
        assert abs(loss_reference(emb, [0, 1], lab, 1.0) - math.log(2)) < 1e-12
        assert loss_reference(emb[:1], [0], lab[:1], 1.0) == 0.0


class TestOracleAgreement:
    def test_matches_reference_over_100_batches(self):
        worst = 0.0
        for seed in range(100):
            g = torch.Generator().manual_seed(seed)
            n = int(torch.randint(2, 33, (1,), generator=g))
            d = int(torch.randint(2, 17, (1,), generator=g))
            groups = int(torch.randint(1, 5, (1,), generator=g))
            t = float(torch.rand(1, generator=g)) * 1.4 + 0.1
            emb, ids, label_emb = random_batch(n, d, groups, seed=seed + 1000)
            fast = conditional_contrastive_loss(emb, ids, label_emb, t).item()
            slow = loss_reference(emb.numpy(), ids.tolist(), label_emb.numpy(), t)
            worst = max(worst, abs(fast - slow))
            assert fast >= 0.0
        assert worst < 1e-6

    def test_small_temperature_stability(self):
        emb, ids, label_emb = random_batch(16, 8, 3, seed=42)
        loss = conditional_contrastive_loss(emb, ids, label_emb, 0.01)
        assert torch.isfinite(loss)
        slow = loss_reference(emb.numpy(), ids.tolist(), label_emb.numpy(), 0.01)
        assert abs(loss.item() - slow) < 1e-6

    def test_reference_rejects_large_batches(self):
        emb, ids, label_emb = random_batch(65, 4, 2, seed=0)
        with pytest.raises(ValidationError):
            loss_reference(emb.numpy(), ids.tolist(), label_emb.numpy(), 1.0)


class TestProperties:
    def test_nonnegative(self):
        for seed in range(30):
            emb, ids, label_emb = random_batch(12, 6, 3, seed=seed)
            t = 0.1 + (seed % 5) * 0.3
            assert conditional_contrastive_loss(emb, ids, label_emb, t).item() >= 0.0

    def test_permutation_invariance(self):
        emb, ids, label_emb = random_batch(20, 8, 4, seed=7)
        base = conditional_contrastive_loss(emb, ids, label_emb, 0.5).item()
        perm = torch.randperm(20, generator=torch.Generator().manual_seed(8))
        permuted = conditional_contrastive_loss(
            emb[perm], ids[perm], label_emb[perm], 0.5
        ).item()
        assert abs(base - permuted) < 1e-9

    def test_pull_push_monotonicity(self):
        def circle(angles):
            a = torch.tensor(angles, dtype=torch.float64)
            return torch.stack([torch.cos(a), torch.sin(a)], dim=1)

        ids = torch.tensor([0, 0, 1, 1])
        label_emb = circle([0.0, 0.0, math.pi, math.pi])
        # two groups at opposite poles; widening the intra-group angle loosens
        # the positives while inter-group geometry stays symmetric
        tight = circle([-0.1, 0.1, math.pi - 0.1, math.pi + 0.1])
        loose = circle([-0.5, 0.5, math.pi - 0.5, math.pi + 0.5])
        loss_tight = conditional_contrastive_loss(tight, ids, label_emb, 0.5).item()
        loss_loose = conditional_contrastive_loss(loose, ids, label_emb, 0.5).item()
        assert loss_tight < loss_loose

        # moving the groups toward each other (inter-group dots rise, intra
        # fixed) must increase the loss
        far = circle([-0.1, 0.1, math.pi - 0.1, math.pi + 0.1])
        near = circle([-0.1, 0.1, math.pi / 2 - 0.1, math.pi / 2 + 0.1])
        loss_far = conditional_contrastive_loss(far, ids, label_emb, 0.5).item()
        near_labels = circle([0.0, 0.0, math.pi / 2, math.pi / 2])
        loss_near = conditional_contrastive_loss(near, ids, near_labels, 0.5).item()
        assert loss_far < loss_near

    def test_temperature_limit(self):
        emb, ids, label_emb = random_batch(10, 5, 3, seed=3)
        n = 10
        loss = conditional_contrastive_loss(emb, ids, label_emb, 1e6).item()
        expected = 0.0
        for i in range(n):
            m = int(((ids == ids[i]).sum() - 1).item())
            expected += -math.log((1 + m) / n)
        expected /= n
        assert abs(loss - expected) < 1e-5

    def test_gradient_matches_finite_differences(self):
        g = torch.Generator().manual_seed(11)
        emb = F.normalize(torch.randn(4, 3, generator=g, dtype=torch.float64), dim=1)
        label_emb = F.normalize(
            torch.randn(4, 3, generator=g, dtype=torch.float64), dim=1
        )
        ids = torch.tensor([0, 0, 1, 1])
        x = emb.clone().requires_grad_(True)
        conditional_contrastive_loss(x, ids, label_emb, 0.5).backward()
        analytic = x.grad.clone()

        eps = 1e-6
        numeric = torch.zeros_like(emb)
        for i in range(4):
            for j in range(3):
                for sign in (1.0, -1.0):
                    bumped = emb.clone()
                    bumped[i, j] += sign * eps
                    val = conditional_contrastive_loss(bumped, ids, label_emb, 0.5)
                    numeric[i, j] += sign * val.item() / (2 * eps)
        rel = (analytic - numeric).abs().max() / numeric.abs().max()
        assert rel < 1e-4


class TestValidation:
    def test_bad_temperature(self):
        emb, ids, label_emb = random_batch(4, 4, 2, seed=0)
        with pytest.raises(ValidationError):
            conditional_contrastive_loss(emb, ids, label_emb, 0.0)
        with pytest.raises(ValidationError):
            loss_reference(emb.numpy(), ids.tolist(), label_emb.numpy(), -1.0)

    def test_nonfinite_embeddings(self):
        emb, ids, label_emb = random_batch(4, 4, 2, seed=0)
        emb[0, 0] = float("inf")
        with pytest.raises(NumericError):
            conditional_contrastive_loss(emb, ids, label_emb, 1.0)


class TestHead:
    def test_projection_shapes_and_norms(self):
        head = ContrastiveHead(in_channels=8, label_dim=16, embedding_dim=32)
        feats = torch.randn(4, 8, 16, 16)
        emb = head.project_features(feats)
        assert emb.shape == (4, 32)
        assert torch.allclose(emb.norm(dim=1), torch.ones(4), atol=1e-6)

    def test_zero_features_stay_finite(self):
        head = ContrastiveHead(in_channels=4, label_dim=16, embedding_dim=8)
        for p in head.feature_projector.parameters():
            torch.nn.init.zeros_(p)
        emb = head.project_features(torch.zeros(2, 4, 8, 8))
        assert torch.isfinite(emb).all()

    def test_determinism(self):
        head = ContrastiveHead(in_channels=4, label_dim=16, embedding_dim=8)
        feats = torch.randn(3, 4, 8, 8)
        assert torch.equal(head.project_features(feats), head.project_features(feats))

    def test_label_projection_unit_norm(self, schema):
        head = ContrastiveHead(in_channels=4, label_dim=16, embedding_dim=8)
        combos = [AttributeCombination((i % 4, 0, 0, 0, 0)) for i in range(6)]
        labels = LabelBatch.from_combinations(combos, schema)
        out = head.project_labels(labels.label_vectors.float())
        assert torch.allclose(out.norm(dim=1), torch.ones(6), atol=1e-6)

    def test_label_ids_match_combination_equality(self, schema):
        combos = [
            AttributeCombination((0, 0, 0, 0, 0)),
            AttributeCombination((1, 0, 0, 0, 0)),
            AttributeCombination((0, 0, 0, 0, 0)),
        ]
        labels = LabelBatch.from_combinations(combos, schema)
        assert labels.label_ids[0] == labels.label_ids[2]
        assert labels.label_ids[0] != labels.label_ids[1]

    def test_bad_temperature_rejected(self):
        with pytest.raises(ValidationError):
            ContrastiveHead(4, 16, 8, temperature=0.0)
