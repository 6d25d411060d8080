"""Attribute-aware discriminator.

The downsampling backbone mirrors the generator's attention placement. Three
heads ride on it: a projection-conditioned adversarial score, a contrastive
embedding tap at one quarter of the input resolution, and two reconstruction
decoders that decode the 16x16 feature map back to images (the full frame, and
a per-sample half-size crop taken as an 8x8 feature window). Reconstruction is
a regularizer for real samples only.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .attention import AttentionConfig, EfficientAttention
from .contrastive import ContrastiveHead
from .errors import ConfigurationError, UsageError, ValidationError
from .generator import MIN_RESOLUTION, _is_power_of_two
from .layers import GLU, DownsampleBlock, init_weights

CROP_GRID = 9  # feature-window offsets 0..8 on the 16x16 map


@dataclass(frozen=True)
class DiscriminatorSpec:
    """Architecture description for one input resolution.

    The contrastive tap sits at input_resolution/4; reconstruction decoders
    read the 16x16 map; attention mirrors the generator at R/16 and R/8.
    """

    input_resolution: int
    base_channels: int | None = None
    attribute_dim: int = 16
    embedding_dim: int = 128
    min_channels: int = 8
    attention_normalization: str = "scaling"

    def __post_init__(self):
        if not _is_power_of_two(self.input_resolution) or (
            self.input_resolution < MIN_RESOLUTION
        ):
            raise ConfigurationError(
                f"input resolution must be a power of two >= {MIN_RESOLUTION}, "
                f"got {self.input_resolution}"
            )
        if self.base_channels is None:
            object.__setattr__(self, "base_channels", 2 * self.input_resolution)

    @property
    def attention_resolutions(self) -> tuple[int, ...]:
        return (self.input_resolution // 16, self.input_resolution // 8)

    @property
    def contrastive_tap_resolution(self) -> int:
        return self.input_resolution // 4

    @property
    def decoder_tap_resolutions(self) -> tuple[int, ...]:
        return (8, 16)

    def channels(self, resolution: int) -> int:
        return max(self.min_channels, self.base_channels * 4 // resolution)

    def to_dict(self) -> dict:
        return {
            "input_resolution": self.input_resolution,
            "base_channels": self.base_channels,
            "attribute_dim": self.attribute_dim,
            "embedding_dim": self.embedding_dim,
            "min_channels": self.min_channels,
            "attention_normalization": self.attention_normalization,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscriminatorSpec":
        return cls(**data)


@dataclass
class DiscriminatorOutput:
    """Per-sample adversarial scores, unit embeddings, and optional decodes."""

    scores: torch.Tensor  # (B,)
    embeddings: torch.Tensor  # (B, d), unit rows
    recon_8: torch.Tensor | None = None  # (B, 3, R/8, R/8)
    recon_16: torch.Tensor | None = None  # (B, 3, R/4, R/4)
    crop_offsets: torch.Tensor | None = None  # (B, 2) ints in [0, 8]


class SimpleDecoder(nn.Module):
    """Feature map -> image decoder: doubling up-blocks then conv + tanh."""

    def __init__(self, in_channels: int, in_size: int, out_size: int):
        super().__init__()
        if out_size % in_size != 0 or not _is_power_of_two(out_size // in_size):
            raise ConfigurationError(
                f"decoder cannot map {in_size} -> {out_size} by doublings"
            )
        layers: list[nn.Module] = []
        channels = in_channels
        size = in_size
        while size < out_size:
            nxt = max(8, channels // 2)
            layers += [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(channels, nxt * 2, 3, padding=1, bias=False),
                nn.BatchNorm2d(nxt * 2),
                GLU(),
            ]
            channels = nxt
            size *= 2
        layers += [nn.Conv2d(channels, 3, 3, padding=1), nn.Tanh()]
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        return self.net(x)


class Discriminator(nn.Module):
    def __init__(self, spec: DiscriminatorSpec, temperature: float = 0.5):
        super().__init__()
        self.spec = spec
        r = spec.input_resolution

        self.from_rgb = nn.Sequential(
            nn.Conv2d(3, spec.channels(r), 3, padding=1, bias=False),
            nn.LeakyReLU(0.2),
        )
        self.down_blocks = nn.ModuleDict()
        res = r
        first = True
        while res > 4:
            self.down_blocks[str(res // 2)] = DownsampleBlock(
                spec.channels(res), spec.channels(res // 2), use_norm=not first
            )
            first = False
            res //= 2
        self.attention = nn.ModuleDict(
            {
                str(ares): EfficientAttention(
                    spec.channels(ares),
                    AttentionConfig(normalization=spec.attention_normalization),
                )
                for ares in spec.attention_resolutions
            }
        )

        feature_dim = spec.channels(4)
        self.score_pool = nn.Conv2d(spec.channels(4), feature_dim, 4, bias=False)
        self.score_head = nn.Linear(feature_dim, 1)
        self.attr_embed = nn.Linear(spec.attribute_dim, feature_dim, bias=False)

        self.contrastive_head = ContrastiveHead(
            spec.channels(spec.contrastive_tap_resolution),
            spec.attribute_dim,
            spec.embedding_dim,
            temperature,
        )
        c16 = spec.channels(16)
        self.decoder_16 = SimpleDecoder(c16, 16, r // 4)
        self.decoder_8 = SimpleDecoder(c16, 8, r // 8)
        self.apply(init_weights)

    def forward(
        self,
        images: torch.Tensor,
        onehot: torch.Tensor,
        crop_offsets: torch.Tensor | None = None,
        with_reconstruction: bool = True,
    ) -> DiscriminatorOutput:
        r = self.spec.input_resolution
        if images.ndim != 4 or images.shape[1:] != (3, r, r):
            raise ValidationError(
                f"expected images of shape (B, 3, {r}, {r}), got {tuple(images.shape)}"
            )
        if onehot.ndim != 2 or onehot.shape != (images.shape[0], self.spec.attribute_dim):
            raise ValidationError(
                f"expected attributes of shape ({images.shape[0]}, "
                f"{self.spec.attribute_dim}), got {tuple(onehot.shape)}"
            )

        feats: dict[int, torch.Tensor] = {}
        x = self.from_rgb(images)
        feats[r] = x
        res = r
        while res > 4:
            x = self.down_blocks[str(res // 2)](x)
            res //= 2
            key = str(res)
            if key in self.attention:
                x = self.attention[key](x)
            feats[res] = x

        pooled = self.score_pool(feats[4]).flatten(1)  # (B, feature_dim)
        scores = self.score_head(pooled).squeeze(1) + (
            self.attr_embed(onehot) * pooled
        ).sum(dim=1)
        embeddings = self.contrastive_head.project_features(
            feats[self.spec.contrastive_tap_resolution]
        )

        recon_8 = recon_16 = None
        if with_reconstruction:
            if crop_offsets is None:
                center = (16 - 8) // 2
                crop_offsets = torch.full(
                    (images.shape[0], 2), center, dtype=torch.long, device=images.device
                )
            recon_16 = self.decoder_16(feats[16])
            windows = torch.stack(
                [
                    feats[16][i, :, oy : oy + 8, ox : ox + 8]
                    for i, (oy, ox) in enumerate(crop_offsets.tolist())
                ]
            )
            recon_8 = self.decoder_8(windows)
        return DiscriminatorOutput(scores, embeddings, recon_8, recon_16, crop_offsets)

    def wiring(self) -> dict:
        return {
            "attention": tuple(sorted(int(k) for k in self.attention)),
            "contrastive_tap": self.spec.contrastive_tap_resolution,
            "decoder_taps": self.spec.decoder_tap_resolutions,
        }


def sample_crop_offsets(
    batch_size: int, generator: torch.Generator | None = None
) -> torch.Tensor:
    """Uniform per-sample half-size crop offsets on the 16x16 feature grid."""
    return torch.randint(0, CROP_GRID, (batch_size, 2), generator=generator)


def reconstruction_loss(
    real_images: torch.Tensor, output: DiscriminatorOutput
) -> torch.Tensor:
    """MSE of both decoders against pooled targets from the real batch.

    The 16-tap decode is compared to the full image pooled to R/4; the 8-tap
    decode to the per-sample half-size crop (chosen by output.crop_offsets)
    pooled to R/8. Only meaningful for outputs computed on real samples.
    """
    if output.recon_8 is None or output.recon_16 is None:
        raise UsageError(
            "reconstruction_loss needs decoder outputs; run the discriminator on "
            "the real batch with with_reconstruction=True"
        )
    r = real_images.shape[-1]
    target_full = F.avg_pool2d(real_images, r // (r // 4))
    half = r // 2
    scale = r // 16  # image pixels per feature-grid cell
    crops = torch.stack(
        [
            real_images[i, :, oy * scale : oy * scale + half, ox * scale : ox * scale + half]
            for i, (oy, ox) in enumerate(output.crop_offsets.tolist())
        ]
    )
    target_part = F.avg_pool2d(crops, half // (r // 8))
    return F.mse_loss(output.recon_16, target_full) + F.mse_loss(
        output.recon_8, target_part
    )


def hinge_d_loss(real_scores: torch.Tensor, fake_scores: torch.Tensor) -> torch.Tensor:
    """mean(relu(1 - s_real)) + mean(relu(1 + s_fake))."""
    return F.relu(1.0 - real_scores).mean() + F.relu(1.0 + fake_scores).mean()


def hinge_g_loss(fake_scores: torch.Tensor) -> torch.Tensor:
    """-mean(s_fake)."""
    return -fake_scores.mean()
