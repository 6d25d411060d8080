"""Linear-complexity attention over spatial feature maps.

The attention weights reduce to ``(Q K^T / n) V`` with ``n = H*W`` positions.
By associativity this equals ``(Q/sqrt(n)) ((K^T/sqrt(n)) V)``, which only ever
builds a (d_k, d_v) global-context matrix per batch item instead of the n-by-n
position-similarity matrix. Both orders are implemented: the quadratic one
serves as the correctness oracle, the linear one is what the networks use.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from typing import NamedTuple

import torch
import torch.nn.functional as F
from torch import nn
from torch.overrides import TorchFunctionMode

from .errors import NumericError, ValidationError

NORMALIZATIONS = ("scaling", "softmax_per_axis")


@dataclass(frozen=True)
class AttentionConfig:
    """Projection widths and normalization variant for one attention module.

    d_k/d_v default to channels//8 (floored at 1) and channels respectively
    when the module is built. `scaling` is the plain (QK^T/n)V form;
    `softmax_per_axis` softmaxes Q rows over features and K columns over
    positions.
    """

    d_k: int | None = None
    d_v: int | None = None
    normalization: str = "scaling"
    residual_gain_init: float = 0.0

    def __post_init__(self):
        if self.normalization not in NORMALIZATIONS:
            raise ValidationError(
                f"normalization must be one of {NORMALIZATIONS}, "
                f"got {self.normalization!r}"
            )


class AttentionProjections(NamedTuple):
    """Per-position query/key/value projections; q, k: (B, n, d_k), v: (B, n, d_v)."""

    q: torch.Tensor
    k: torch.Tensor
    v: torch.Tensor
    n: int


def _check_finite(*tensors: torch.Tensor) -> None:
    for t in tensors:
        if not torch.isfinite(t).all():
            raise NumericError("attention inputs must be finite")


def _normalize_qk(p: AttentionProjections, normalization: str):
    """Apply the chosen normalization, returning q', k' such that the attention
    output is q' @ (k'^T @ v) in either association order."""
    if normalization == "scaling":
        scale = 1.0 / (p.n**0.5)
        return p.q * scale, p.k * scale
    if normalization == "softmax_per_axis":
        return F.softmax(p.q, dim=-1), F.softmax(p.k, dim=1)
    raise ValidationError(f"unknown normalization {normalization!r}")


def attention_quadratic(
    p: AttentionProjections, normalization: str = "scaling"
) -> torch.Tensor:
    """Oracle path: materializes the (n, n) similarity matrix explicitly."""
    _check_finite(p.q, p.k, p.v)
    q, k = _normalize_qk(p, normalization)
    sim = torch.bmm(q, k.transpose(1, 2))  # (B, n, n)
    return torch.bmm(sim, p.v)


def attention_linear(
    p: AttentionProjections, normalization: str = "scaling"
) -> torch.Tensor:
    """Associativity-reordered path: builds only the (d_k, d_v) context matrix."""
    _check_finite(p.q, p.k, p.v)
    q, k = _normalize_qk(p, normalization)
    context = torch.bmm(k.transpose(1, 2), p.v)  # (B, d_k, d_v)
    return torch.bmm(q, context)


class EfficientAttention(nn.Module):
    """Residual attention block: x + gamma * attend(x).

    Q/K/V come from bias-free 1x1 convolutions. gamma starts at
    `residual_gain_init` (0 by default), so a freshly built block is the
    identity map. When d_v != channels a bias-free 1x1 output projection
    maps the attended values back to the input width.
    """

    def __init__(self, channels: int, config: AttentionConfig | None = None):
        super().__init__()
        config = config or AttentionConfig()
        d_k = config.d_k if config.d_k is not None else max(1, channels // 8)
        d_v = config.d_v if config.d_v is not None else channels
        if d_k > channels or d_v > channels:
            raise ValidationError(
                f"projection widths d_k={d_k}, d_v={d_v} exceed channels={channels}"
            )
        self.channels = channels
        self.d_k = d_k
        self.d_v = d_v
        self.normalization = config.normalization
        self.to_q = nn.Conv2d(channels, d_k, 1, bias=False)
        self.to_k = nn.Conv2d(channels, d_k, 1, bias=False)
        self.to_v = nn.Conv2d(channels, d_v, 1, bias=False)
        self.out_proj = (
            nn.Conv2d(d_v, channels, 1, bias=False) if d_v != channels else None
        )
        self.gamma = nn.Parameter(torch.tensor(float(config.residual_gain_init)))

    def project(self, features: torch.Tensor) -> AttentionProjections:
        """Project a (B, C, H, W) map to per-position q/k/v token matrices."""
        if features.ndim != 4 or features.shape[1] != self.channels:
            raise ValidationError(
                f"expected (B, {self.channels}, H, W) features, "
                f"got shape {tuple(features.shape)}"
            )
        b, _, h, w = features.shape
        q = self.to_q(features).flatten(2).transpose(1, 2)  # (B, n, d_k)
        k = self.to_k(features).flatten(2).transpose(1, 2)
        v = self.to_v(features).flatten(2).transpose(1, 2)  # (B, n, d_v)
        return AttentionProjections(q, k, v, h * w)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        b, _, h, w = features.shape
        p = self.project(features)
        out = attention_linear(p, self.normalization)  # (B, n, d_v)
        out = out.transpose(1, 2).reshape(b, self.d_v, h, w)
        if self.out_proj is not None:
            out = self.out_proj(out)
        return features + self.gamma * out


class _ShapeRecorder(TorchFunctionMode):
    def __init__(self):
        super().__init__()
        self.shapes: list[tuple[int, ...]] = []

    def __torch_function__(self, func, types, args=(), kwargs=None):
        out = func(*args, **(kwargs or {}))
        stack = [out]
        while stack:
            item = stack.pop()
            if isinstance(item, torch.Tensor):
                self.shapes.append(tuple(item.shape))
            elif isinstance(item, (list, tuple)):
                stack.extend(item)
        return out


@contextmanager
def record_op_shapes():
    """Record the shape of every tensor produced by torch ops in the block.

    Used to assert structurally that the linear attention path never
    materializes an intermediate with two dimensions of size n.
    """
    recorder = _ShapeRecorder()
    with recorder:
        yield recorder.shapes


def max_square_dim(shapes: list[tuple[int, ...]]) -> int:
    """Largest s such that some recorded tensor has >= 2 dimensions equal to s."""
    best = 0
    for shape in shapes:
        counts: dict[int, int] = {}
        for dim in shape:
            counts[dim] = counts.get(dim, 0) + 1
            if counts[dim] >= 2:
                best = max(best, dim)
    return best
