"""Evaluation metrics: Fréchet distance between feature Gaussians and
per-attribute prediction error of generated images.

The default feature extractor is a frozen, seed-initialized convolutional
embedder ("proxy-conv-v1", 192-dim). Its FID values exercise the same
mathematics as an Inception-based FID but are NOT comparable across
extractors; reports therefore always carry the extractor name. A pretrained
Inception v3 can be plugged in through the same handle where torchvision
weights are available.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import NumericError, ValidationError
from .schema import (
    AttributeCombination,
    AttributeSchema,
    ManifestEntry,
    normalize_levels,
)

EIGENVALUE_CLAMP = -1e-6
PROXY_EXTRACTOR_NAME = "proxy-conv-v1"
PROXY_EXTRACTOR_SEED = 711


@dataclass(frozen=True)
class GaussianStats:
    """Mean and covariance summary of one feature set."""

    mean: np.ndarray  # (d,)
    covariance: np.ndarray  # (d, d), symmetric
    sample_count: int

    def __post_init__(self):
        if self.covariance.shape != (self.mean.shape[0], self.mean.shape[0]):
            raise ValidationError("covariance shape does not match mean dimension")
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-8):
            raise ValidationError("covariance must be symmetric")


def fit_gaussian(features: np.ndarray) -> GaussianStats:
    """Column means and unbiased sample covariance of an (n, d) feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValidationError(
            f"need an (n >= 2, d) feature matrix, got shape {features.shape}"
        )
    mean = features.mean(axis=0)
    cov = np.atleast_2d(np.cov(features, rowvar=False))
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean, cov, features.shape[0])


def _sqrt_psd(matrix: np.ndarray) -> np.ndarray:
    """Square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues in (-1e-6, 0) are clamped to zero; anything more negative
    signals an invalid covariance and raises.
    """
    eigvals, eigvecs = np.linalg.eigh(matrix)
    if eigvals.min() < EIGENVALUE_CLAMP * max(1.0, abs(eigvals).max()):
        raise NumericError(
            f"matrix is far from PSD (min eigenvalue {eigvals.min():.3e})"
        )
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}).

    The cross term uses Tr((S_a S_b)^{1/2}) = Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}),
    keeping every square root on a symmetrized matrix.
    """
    if a.mean.shape != b.mean.shape:
        raise ValidationError(
            f"dimension mismatch: {a.mean.shape[0]} vs {b.mean.shape[0]}"
        )
    root_a = _sqrt_psd(a.covariance)
    inner = root_a @ b.covariance @ root_a
    inner = (inner + inner.T) / 2.0
    eigvals = np.linalg.eigvalsh(inner)
    if eigvals.min() < EIGENVALUE_CLAMP * max(1.0, abs(eigvals).max()):
        raise NumericError(
            f"cross-covariance product is far from PSD (min eigenvalue "
            f"{eigvals.min():.3e})"
        )
    trace_sqrt = np.sum(np.sqrt(np.clip(eigvals, 0.0, None)))
    diff = a.mean - b.mean
    value = float(
        diff @ diff
        + np.trace(a.covariance)
        + np.trace(b.covariance)
        - 2.0 * trace_sqrt
    )
    return max(value, 0.0)


class _ProxyConvNet(nn.Module):
    def __init__(self):
        super().__init__()
        self.net = nn.Sequential(
            nn.Conv2d(3, 32, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(32, 64, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(64, 128, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(128, 192, 3, padding=1),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
        )

    def forward(self, x):
        return self.net(x)


class FeatureExtractor:
    """Named, versioned image -> feature-vector embedding, frozen parameters."""

    def __init__(self, name: str, module: nn.Module, output_dim: int):
        self.name = name
        self.output_dim = output_dim
        self._module = module.eval()
        for p in self._module.parameters():
            p.requires_grad_(False)

    def extract(self, images: torch.Tensor, batch_size: int = 64) -> np.ndarray:
        """(n, 3, H, W) images in [-1, 1] -> (n, output_dim) float64 features."""
        if images.ndim != 4 or images.shape[0] < 1:
            raise ValidationError(
                f"expected a (n, 3, H, W) image batch, got shape {tuple(images.shape)}"
            )
        chunks = []
        with torch.no_grad():
            for start in range(0, images.shape[0], batch_size):
                chunk = self._module(images[start : start + batch_size].float())
                chunks.append(chunk.cpu().double().numpy())
        return np.concatenate(chunks, axis=0)


def _build_proxy_extractor() -> FeatureExtractor:
    gen = torch.Generator().manual_seed(PROXY_EXTRACTOR_SEED)
    module = _ProxyConvNet()
    with torch.no_grad():
        for p in module.parameters():
            p.copy_(torch.empty_like(p).normal_(0.0, 0.05, generator=gen))
    return FeatureExtractor(PROXY_EXTRACTOR_NAME, module, 192)


def _build_inception_extractor() -> FeatureExtractor:
    try:
        from torchvision.models import Inception_V3_Weights, inception_v3
    except ImportError as exc:
        raise ValidationError(f"inception-v3 extractor needs torchvision: {exc}")
    try:
        model = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
    except Exception as exc:
        raise ValidationError(f"could not load pretrained Inception v3 weights: {exc}")
    model.fc = nn.Identity()

    class _Wrapper(nn.Module):
        def __init__(self, inner):
            super().__init__()
            self.inner = inner

        def forward(self, x):
            x = F.interpolate(x, size=(299, 299), mode="bilinear", align_corners=False)
            return self.inner(x)

    return FeatureExtractor("inception-v3", _Wrapper(model), 2048)


def get_extractor(name: str) -> FeatureExtractor:
    if name == PROXY_EXTRACTOR_NAME:
        return _build_proxy_extractor()
    if name == "inception-v3":
        return _build_inception_extractor()
    raise ValidationError(
        f"unknown extractor {name!r}; available: {PROXY_EXTRACTOR_NAME}, inception-v3"
    )


def compute_fid(
    real_images: torch.Tensor,
    fake_images: torch.Tensor,
    extractor: FeatureExtractor,
) -> float:
    """Fréchet distance between feature Gaussians of two image sets."""
    real_stats = fit_gaussian(extractor.extract(real_images))
    fake_stats = fit_gaussian(extractor.extract(fake_images))
    return frechet_distance(real_stats, fake_stats)


class AttributePredictor(nn.Module):
    """Small convolutional regressor: image -> [0, 1]^num_attributes."""

    def __init__(self, num_attributes: int, input_resolution: int = 64):
        super().__init__()
        self.num_attributes = num_attributes
        self.input_resolution = input_resolution
        self.features = nn.Sequential(
            nn.Conv2d(3, 16, 4, stride=2, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(16, 32, 4, stride=2, padding=1),
            nn.BatchNorm2d(32),
            nn.LeakyReLU(0.2),
            nn.Conv2d(32, 64, 4, stride=2, padding=1),
            nn.BatchNorm2d(64),
            nn.LeakyReLU(0.2),
            nn.AdaptiveAvgPool2d(1),
            nn.Flatten(),
        )
        self.head = nn.Linear(64, num_attributes)
        self.split_hash: str | None = None  # holdout fingerprint, set by training

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.shape[-1] != self.input_resolution:
            images = F.interpolate(
                images,
                size=(self.input_resolution, self.input_resolution),
                mode="bilinear",
                align_corners=False,
            )
        return torch.sigmoid(self.head(self.features(images)))

    def predict(self, images: torch.Tensor, batch_size: int = 128) -> np.ndarray:
        """Inference in eval mode; returns (n, num_attributes) float64 in [0, 1]."""
        was_training = self.training
        self.eval()
        try:
            chunks = []
            with torch.no_grad():
                for start in range(0, images.shape[0], batch_size):
                    chunks.append(
                        self(images[start : start + batch_size].float())
                        .double()
                        .numpy()
                    )
            return np.clip(np.concatenate(chunks, axis=0), 0.0, 1.0)
        finally:
            self.train(was_training)


def normalized_targets(
    combos: list[AttributeCombination], schema: AttributeSchema
) -> np.ndarray:
    return np.stack([normalize_levels(c, schema) for c in combos])


def train_attribute_predictor(
    images: torch.Tensor,
    combos: list[AttributeCombination],
    schema: AttributeSchema,
    split_seed: int = 0,
    holdout_fraction: float = 0.1,
    epochs: int = 12,
    batch_size: int = 64,
    learning_rate: float = 2e-3,
    input_resolution: int = 64,
) -> tuple[AttributePredictor, np.ndarray]:
    """Fit the regressor against normalized level targets.

    Returns the predictor plus per-attribute MSE on the holdout split. A level
    with fewer than 10 training images triggers a data-sufficiency warning.
    """
    n = images.shape[0]
    if n != len(combos):
        raise ValidationError("images and combinations must align")
    if not 0.0 < holdout_fraction < 1.0:
        raise ValidationError("holdout_fraction must be in (0, 1)")

    for i, attr in enumerate(schema.attributes):
        counts = np.bincount([c.levels[i] for c in combos], minlength=attr.cardinality)
        if counts.min() < 10:
            warnings.warn(
                f"attribute {attr.name!r} has a level with only {counts.min()} "
                "images; predictor quality may suffer"
            )

    targets = torch.from_numpy(normalized_targets(combos, schema)).float()
    rng = np.random.default_rng(split_seed)
    order = rng.permutation(n)
    n_holdout = max(1, int(round(holdout_fraction * n)))
    holdout_idx, train_idx = order[:n_holdout], order[n_holdout:]

    torch.manual_seed(split_seed)
    predictor = AttributePredictor(schema.num_attributes, input_resolution)
    predictor.split_hash = hashlib.sha256(
        np.sort(holdout_idx).astype(np.int64).tobytes()
    ).hexdigest()[:16]
    optimizer = torch.optim.Adam(predictor.parameters(), lr=learning_rate)
    sampler = torch.Generator().manual_seed(split_seed + 1)

    predictor.train()
    steps_per_epoch = max(1, len(train_idx) // batch_size)
    train_idx_t = torch.from_numpy(train_idx)
    for _ in range(epochs):
        for _ in range(steps_per_epoch):
            sel = train_idx_t[
                torch.randint(0, len(train_idx), (batch_size,), generator=sampler)
            ]
            pred = predictor(images[sel].float())
            loss = F.mse_loss(pred, targets[sel])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    holdout_pred = predictor.predict(images[torch.from_numpy(holdout_idx)])
    holdout_err = np.mean(
        (holdout_pred - targets[torch.from_numpy(holdout_idx)].numpy()) ** 2, axis=0
    )
    return predictor, holdout_err


def attribute_error(
    images: torch.Tensor,
    true_combos: list[AttributeCombination],
    predictor: AttributePredictor,
    schema: AttributeSchema,
) -> np.ndarray:
    """Per-attribute MSE between predicted and true normalized levels."""
    if images.shape[0] != len(true_combos):
        raise ValidationError("images and combinations must align")
    for combo in true_combos:
        schema.validate_combination(combo)
    preds = predictor.predict(images)
    targets = normalized_targets(true_combos, schema)
    return np.mean((preds - targets) ** 2, axis=0)


def marginal_mean_levels(
    entries: list[ManifestEntry], schema: AttributeSchema
) -> np.ndarray:
    """Per-attribute mean of normalized levels over a manifest (baseline predictor)."""
    if not entries:
        raise ValidationError("cannot compute marginals of an empty manifest")
    targets = normalized_targets([e.combination for e in entries], schema)
    return targets.mean(axis=0)


def baseline_attribute_error(
    true_combos: list[AttributeCombination],
    marginal_means: np.ndarray,
    schema: AttributeSchema,
) -> np.ndarray:
    """Error of the constant marginal-mean predictor on the given combinations."""
    targets = normalized_targets(true_combos, schema)
    return np.mean((marginal_means[None, :] - targets) ** 2, axis=0)
