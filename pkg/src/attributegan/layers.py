"""Shared building blocks for generator and discriminator networks."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigurationError, ValidationError

SLE_FACTOR = 8  # low-to-high resolution ratio for skip-layer excitation pairs


class GLU(nn.Module):
    """Gated linear unit over channels: first half * sigmoid(second half)."""

    def forward(self, x):
        channels = x.shape[1]
        if channels % 2 != 0:
            raise ValidationError(f"GLU needs an even channel count, got {channels}")
        half = channels // 2
        return x[:, :half] * torch.sigmoid(x[:, half:])


class GaussianBlur(nn.Module):
    """Depthwise 3x3 binomial blur with replicate padding.

    Kernel rows sum to 1, so constant inputs pass through unchanged
    (the antialiasing step after nearest-neighbor upsampling).
    """

    def __init__(self, channels: int):
        super().__init__()
        k = torch.tensor([1.0, 2.0, 1.0])
        kernel = torch.outer(k, k)
        kernel = kernel / kernel.sum()
        self.register_buffer("kernel", kernel.expand(channels, 1, 3, 3).clone())
        self.channels = channels

    def forward(self, x):
        x = F.pad(x, (1, 1, 1, 1), mode="replicate")
        return F.conv2d(x, self.kernel, groups=self.channels)


class GlobalContextBlock(nn.Module):
    """Attention-pooled context added back per channel (output shape == input).

    A 1x1 convolution scores every spatial position; the softmax-weighted sum
    of features gives a (B, C, 1, 1) context vector that passes through a
    bottleneck transform before being broadcast-added to the input.
    """

    def __init__(self, channels: int, bottleneck_ratio: float = 0.25):
        super().__init__()
        hidden = max(1, int(channels * bottleneck_ratio))
        self.score = nn.Conv2d(channels, 1, 1)
        self.transform = nn.Sequential(
            nn.Conv2d(channels, hidden, 1),
            nn.LayerNorm([hidden, 1, 1]),
            nn.ReLU(),
            nn.Conv2d(hidden, channels, 1),
        )

    def forward(self, x):
        b, c, h, w = x.shape
        weights = F.softmax(self.score(x).flatten(2), dim=2)  # (B, 1, H*W)
        context = torch.bmm(x.flatten(2), weights.transpose(1, 2))  # (B, C, 1)
        context = context.unsqueeze(-1)  # (B, C, 1, 1)
        return x + self.transform(context)


class SleBlock(nn.Module):
    """Skip-layer excitation: a low-resolution map gates a map 8x its size.

    The gating path runs global context pooling on the low-resolution input,
    squeezes it to 4x4, and produces per-channel sigmoid gates for the
    high-resolution map. `gate_mode` supports diagnostic overrides: "ones"
    makes the block an identity on `high`, "zeros" annihilates it.
    """

    def __init__(self, low_channels: int, high_channels: int):
        super().__init__()
        hidden = max(4, high_channels // 2)
        self.context = GlobalContextBlock(low_channels)
        self.gate = nn.Sequential(
            nn.AdaptiveAvgPool2d(4),
            nn.Conv2d(low_channels, hidden, 4, bias=False),
            nn.SiLU(),
            nn.Conv2d(hidden, high_channels, 1, bias=False),
            nn.Sigmoid(),
        )
        self.gate_mode = "learned"

    def forward(self, low: torch.Tensor, high: torch.Tensor) -> torch.Tensor:
        if high.shape[-1] != SLE_FACTOR * low.shape[-1]:
            raise ConfigurationError(
                f"skip-layer excitation expects a factor-{SLE_FACTOR} resolution pair, "
                f"got {tuple(low.shape[-2:])} -> {tuple(high.shape[-2:])}"
            )
        if self.gate_mode == "ones":
            return high
        if self.gate_mode == "zeros":
            return torch.zeros_like(high)
        return high * self.gate(self.context(low))


class UpsampleBlock(nn.Module):
    """2x nearest upsampling, blur antialiasing, then conv + BN + GLU.

    The convolution emits twice the target channel count; the GLU gate
    consumes half of it.
    """

    def __init__(self, in_channels: int, out_channels: int):
        super().__init__()
        self.blur = GaussianBlur(in_channels)
        self.conv = nn.Conv2d(in_channels, out_channels * 2, 3, padding=1, bias=False)
        self.norm = nn.BatchNorm2d(out_channels * 2)
        self.act = GLU()

    def forward(self, x):
        b, c, h, w = x.shape
        if h != w or h < 1 or (h & (h - 1)) != 0:
            raise ValidationError(
                f"upsample blocks need square power-of-two inputs, got {h}x{w}"
            )
        x = F.interpolate(x, scale_factor=2, mode="nearest")
        x = self.blur(x)
        return self.act(self.norm(self.conv(x)))


class DownsampleBlock(nn.Module):
    """Stride-2 conv + optional BN + LeakyReLU; halves the spatial extent."""

    def __init__(self, in_channels: int, out_channels: int, use_norm: bool = True):
        super().__init__()
        layers: list[nn.Module] = [
            nn.Conv2d(in_channels, out_channels, 4, stride=2, padding=1, bias=False)
        ]
        if use_norm:
            layers.append(nn.BatchNorm2d(out_channels))
        layers.append(nn.LeakyReLU(0.2))
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        return self.block(x)


def init_weights(module: nn.Module) -> None:
    """DCGAN-style initialization: N(0, 0.02) convs, N(1, 0.02) norm gains."""
    if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
        nn.init.normal_(module.weight, 0.0, 0.02)
        if module.bias is not None:
            nn.init.zeros_(module.bias)
    elif isinstance(module, nn.BatchNorm2d):
        nn.init.normal_(module.weight, 1.0, 0.02)
        nn.init.zeros_(module.bias)
