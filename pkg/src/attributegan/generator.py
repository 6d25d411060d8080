"""Attribute-conditioned generator.

A noise vector and a concatenated one-hot attribute vector are each expanded
to 4x4 by transposed convolutions, fused, and pushed through a doubling chain
of upsample blocks to the output resolution. Efficient attention is applied at
two intermediate resolutions and skip-layer excitation gates connect each
low-resolution map to the map eight times its size. All placements follow the
resolution-scaling rules captured in GeneratorSpec.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .attention import AttentionConfig, EfficientAttention
from .errors import ConfigurationError, ValidationError
from .layers import GLU, SleBlock, UpsampleBlock, init_weights
from .schema import AttributeCombination, AttributeSchema, encode_one_hot

MIN_RESOLUTION = 64  # smallest output with both attention stages >= 4x4


def _is_power_of_two(x: int) -> bool:
    return x >= 1 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class GeneratorSpec:
    """Resolution-parameterized architecture description.

    Attention runs at output_resolution/16 and /8; skip-layer excitation pairs
    are (r, 8r) for r in {R/32, R/16, R/8}, dropping pairs whose low side falls
    below the 4x4 chain start. Channel width at resolution r is
    base_channels * 4 / r, floored at min_channels.
    """

    output_resolution: int
    noise_dim: int = 256
    base_channels: int | None = None
    attribute_dim: int = 16
    min_channels: int = 8
    attention_normalization: str = "scaling"

    def __post_init__(self):
        if not _is_power_of_two(self.output_resolution) or (
            self.output_resolution < MIN_RESOLUTION
        ):
            raise ConfigurationError(
                f"output resolution must be a power of two >= {MIN_RESOLUTION}, "
                f"got {self.output_resolution}"
            )
        if self.noise_dim < 1 or self.attribute_dim < 1:
            raise ConfigurationError("noise_dim and attribute_dim must be positive")
        if self.base_channels is None:
            # 1024 at the 512 full scale, shrinking proportionally at desk scale
            object.__setattr__(self, "base_channels", 2 * self.output_resolution)

    @property
    def attention_resolutions(self) -> tuple[int, ...]:
        return (self.output_resolution // 16, self.output_resolution // 8)

    @property
    def sle_pairs(self) -> tuple[tuple[int, int], ...]:
        lows = (
            self.output_resolution // 32,
            self.output_resolution // 16,
            self.output_resolution // 8,
        )
        return tuple((low, low * 8) for low in lows if low >= 4)

    @property
    def resolution_ladder(self) -> tuple[int, ...]:
        ladder = []
        res = 4
        while res <= self.output_resolution:
            ladder.append(res)
            res *= 2
        return tuple(ladder)

    def channels(self, resolution: int) -> int:
        return max(self.min_channels, self.base_channels * 4 // resolution)

    def to_dict(self) -> dict:
        return {
            "output_resolution": self.output_resolution,
            "noise_dim": self.noise_dim,
            "base_channels": self.base_channels,
            "attribute_dim": self.attribute_dim,
            "min_channels": self.min_channels,
            "attention_normalization": self.attention_normalization,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        return cls(**data)


class Generator(nn.Module):
    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        c4 = spec.channels(4)
        attr_channels = max(8, c4 // 4)

        self.noise_stem = nn.Sequential(
            nn.ConvTranspose2d(spec.noise_dim, c4 * 2, 4, bias=False),
            nn.BatchNorm2d(c4 * 2),
            GLU(),
        )
        self.attr_stem = nn.Sequential(
            nn.ConvTranspose2d(spec.attribute_dim, attr_channels * 2, 4, bias=False),
            nn.BatchNorm2d(attr_channels * 2),
            GLU(),
        )
        self.fuse = nn.Sequential(
            nn.Conv2d(c4 + attr_channels, c4 * 2, 3, padding=1, bias=False),
            nn.BatchNorm2d(c4 * 2),
            GLU(),
        )

        self.up_blocks = nn.ModuleDict()
        for res in self.spec.resolution_ladder[1:]:
            self.up_blocks[str(res)] = UpsampleBlock(
                spec.channels(res // 2), spec.channels(res)
            )
        self.attention = nn.ModuleDict(
            {
                str(res): EfficientAttention(
                    spec.channels(res),
                    AttentionConfig(normalization=spec.attention_normalization),
                )
                for res in spec.attention_resolutions
            }
        )
        self.sle = nn.ModuleDict(
            {
                f"{low}->{high}": SleBlock(spec.channels(low), spec.channels(high))
                for low, high in spec.sle_pairs
            }
        )
        self.to_rgb = nn.Conv2d(spec.channels(spec.output_resolution), 3, 3, padding=1)
        self.apply(init_weights)

    def initial_stage(self, z: torch.Tensor, onehot: torch.Tensor) -> torch.Tensor:
        """Expand noise and attribute vectors to 4x4 maps and fuse them."""
        if z.ndim != 2 or z.shape[1] != self.spec.noise_dim:
            raise ValidationError(
                f"expected noise of shape (B, {self.spec.noise_dim}), "
                f"got {tuple(z.shape)}"
            )
        if onehot.ndim != 2 or onehot.shape[1] != self.spec.attribute_dim:
            raise ValidationError(
                f"expected attributes of shape (B, {self.spec.attribute_dim}), "
                f"got {tuple(onehot.shape)}"
            )
        zf = self.noise_stem(z.unsqueeze(-1).unsqueeze(-1))
        af = self.attr_stem(onehot.unsqueeze(-1).unsqueeze(-1))
        return self.fuse(torch.cat([zf, af], dim=1))

    def forward(self, z: torch.Tensor, onehot: torch.Tensor) -> torch.Tensor:
        feats: dict[int, torch.Tensor] = {}
        x = self.initial_stage(z, onehot)
        x = self._finish_resolution(4, x, feats)
        for res in self.spec.resolution_ladder[1:]:
            x = self.up_blocks[str(res)](x)
            x = self._finish_resolution(res, x, feats)
        return torch.tanh(self.to_rgb(x))

    def _finish_resolution(self, res, x, feats):
        key = str(res)
        if key in self.attention:
            x = self.attention[key](x)
        for low, high in self.spec.sle_pairs:
            if high == res:
                x = self.sle[f"{low}->{high}"](feats[low], x)
        feats[res] = x
        return x

    def wiring(self) -> dict:
        """Actual module placements, for structural assertions."""
        return {
            "ladder": self.spec.resolution_ladder,
            "attention": tuple(sorted(int(k) for k in self.attention)),
            "sle_pairs": tuple(
                tuple(int(v) for v in k.split("->")) for k in sorted(self.sle)
            ),
        }

    def synthesize(self, z: torch.Tensor, onehot: torch.Tensor) -> torch.Tensor:
        """Inference-mode forward: eval mode, no grad, mode restored afterwards."""
        was_training = self.training
        self.eval()
        try:
            with torch.no_grad():
                return self.forward(z, onehot)
        finally:
            self.train(was_training)

    def attribute_sweep(
        self,
        z: torch.Tensor,
        base_combo: AttributeCombination,
        attr_index: int,
        schema: AttributeSchema,
    ) -> torch.Tensor:
        """Hold z and all other attributes fixed; step one attribute through
        its levels. Returns (cardinality, 3, R, R) images in level order."""
        if not 0 <= attr_index < schema.num_attributes:
            raise ValidationError(
                f"attribute index {attr_index} out of range for "
                f"{schema.num_attributes} attributes"
            )
        schema.validate_combination(base_combo)
        if z.ndim == 1:
            z = z.unsqueeze(0)
        if z.shape[0] != 1:
            raise ValidationError("attribute_sweep takes a single noise vector")
        cardinality = schema.attributes[attr_index].cardinality
        onehots = [
            encode_one_hot(base_combo.with_level(attr_index, level), schema)
            for level in range(cardinality)
        ]
        onehot = torch.from_numpy(np.stack(onehots)).to(z.dtype)
        return self.synthesize(z.expand(cardinality, -1), onehot)
