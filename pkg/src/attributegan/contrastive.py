"""Conditional contrastive loss over a projected hypersphere.

For each anchor i the positives are its own attribute embedding l(y_i) plus
every other sample sharing the same attribute combination; every other sample
in the batch appears in the denominator. Per-sample term:

    -log[ (exp(f_i.l_i/t) + sum_{k!=i, y_k=y_i} exp(f_i.f_k/t))
        / (exp(f_i.l_i/t) + sum_{k!=i}          exp(f_i.f_k/t)) ]

The k = i self-similarity is excluded from both sums so the ratio is <= 1 and
the loss is nonnegative. Exponents are stabilized by per-row max subtraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import NumericError, ValidationError
from .schema import AttributeCombination, AttributeSchema, encode_one_hot

NORM_EPS = 1e-8


@dataclass
class LabelBatch:
    """Conditioning labels for a batch: one-hot rows plus combination identities."""

    label_vectors: torch.Tensor  # (n, total_onehot_dim) float
    label_ids: torch.Tensor  # (n,) long; equal ids iff equal combinations

    @classmethod
    def from_combinations(
        cls, combos: Sequence[AttributeCombination], schema: AttributeSchema
    ) -> "LabelBatch":
        vectors = np.stack([encode_one_hot(c, schema) for c in combos])
        ids = [schema.combination_id(c) for c in combos]
        return cls(torch.from_numpy(vectors), torch.tensor(ids, dtype=torch.long))

    def __len__(self):
        return self.label_ids.shape[0]


def conditional_contrastive_loss(
    embeddings: torch.Tensor,
    label_ids: torch.Tensor,
    label_embeddings: torch.Tensor,
    temperature: float,
) -> torch.Tensor:
    """Batch-mean contrastive loss.

    Args:
        embeddings: (n, d) feature embeddings f(x), rows unit-normalized.
        label_ids: (n,) integer combination identities.
        label_embeddings: (n, d) attribute embeddings l(y), rows unit-normalized.
        temperature: positive scalar dividing all similarities.
    """
    if temperature <= 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    if not torch.isfinite(embeddings).all() or not torch.isfinite(label_embeddings).all():
        raise NumericError("contrastive embeddings must be finite")
    n = embeddings.shape[0]
    s_label = (embeddings * label_embeddings).sum(dim=1) / temperature  # (n,)
    sim = embeddings @ embeddings.T / temperature  # (n, n)

    off_diag = ~torch.eye(n, dtype=torch.bool, device=embeddings.device)
    same_label = label_ids.unsqueeze(0) == label_ids.unsqueeze(1)
    neg_inf = torch.finfo(sim.dtype).min
    sim_others = sim.masked_fill(~off_diag, neg_inf)
    sim_positives = sim.masked_fill(~(off_diag & same_label), neg_inf)

    # Stabilize: shift each row by its largest exponent before exponentiation.
    shift = torch.maximum(s_label, sim_others.max(dim=1).values).detach()
    exp_label = torch.exp(s_label - shift)
    exp_others = torch.exp(sim_others - shift.unsqueeze(1))
    exp_positives = torch.exp(sim_positives - shift.unsqueeze(1))

    numerator = exp_label + exp_positives.sum(dim=1)
    denominator = exp_label + exp_others.sum(dim=1)
    return (torch.log(denominator) - torch.log(numerator)).mean()


def loss_reference(
    embeddings,
    label_ids,
    label_embeddings,
    temperature: float,
) -> float:
    """Scalar double-loop oracle: same value, float64, no vectorization tricks."""
    if temperature <= 0:
        raise ValidationError(f"temperature must be > 0, got {temperature}")
    emb = np.asarray(embeddings, dtype=np.float64)
    lab = np.asarray(label_embeddings, dtype=np.float64)
    ids = [int(v) for v in label_ids]
    n = emb.shape[0]
    if n > 64:
        raise ValidationError("reference oracle is O(n^2) scalar loops; use n <= 64")
    total = 0.0
    for i in range(n):
        num = math.exp(float(np.dot(emb[i], lab[i])) / temperature)
        den = num
        for k in range(n):
            if k == i:
                continue
            term = math.exp(float(np.dot(emb[i], emb[k])) / temperature)
            den += term
            if ids[k] == ids[i]:
                num += term
        total += -math.log(num / den)
    return total / n


class ContrastiveHead(nn.Module):
    """Feature and attribute projectors onto the unit hypersphere.

    The feature projector consumes the discriminator tap at one quarter of the
    input resolution; the label projector is a bias-free linear map from the
    concatenated one-hot vector, so combinations unseen in training still get
    an embedding.
    """

    def __init__(
        self,
        in_channels: int,
        label_dim: int,
        embedding_dim: int = 128,
        temperature: float = 0.5,
    ):
        super().__init__()
        if temperature <= 0:
            raise ValidationError(f"temperature must be > 0, got {temperature}")
        self.embedding_dim = embedding_dim
        self.temperature = temperature
        self.feature_projector = nn.Sequential(
            nn.Conv2d(in_channels, embedding_dim, 3, padding=1, bias=False),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
            nn.Linear(embedding_dim, embedding_dim),
        )
        self.label_projector = nn.Linear(label_dim, embedding_dim, bias=False)

    def project_features(self, features: torch.Tensor) -> torch.Tensor:
        """(B, C, h, w) backbone tap -> (B, d) unit-norm embeddings."""
        if features.ndim != 4:
            raise ValidationError(
                f"expected a (B, C, H, W) feature map, got shape {tuple(features.shape)}"
            )
        return F.normalize(self.feature_projector(features), dim=1, eps=NORM_EPS)

    def project_labels(self, onehot: torch.Tensor) -> torch.Tensor:
        """(B, label_dim) one-hot rows -> (B, d) unit-norm attribute embeddings."""
        return F.normalize(self.label_projector(onehot), dim=1, eps=NORM_EPS)
