"""Procedural generator of attribute-controlled synthetic tissue-like images.

Each image is a light-stained background scattered with dark elliptical
"nuclei". Every schema attribute drives one measurable control, monotone in
the level index:

    cell_crowding  -> number of nuclei (exact connected-component count)
    cell_polarity  -> orientation concentration of the ellipse axes
    mitosis        -> number of division figures (paired dark-green lobes)
    nucleoli       -> brightness contrast of the dot inside each nucleus
    pleomorphism   -> relative spread of nucleus sizes

Nuclei are placed on a jittered grid, which guarantees non-overlap (so the
component count is exact), makes capacity a closed-form pigeonhole check, and
keeps rendering fully deterministic: (combination, seed, config) fixes every
pixel. Companion measurement helpers extract each statistic back from the
image; they are the ground truth the attribute-control experiments rely on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml
from scipy import ndimage

from .errors import CapacityError, DataError, ValidationError
from .imaging import load_png, save_png, uint8_to_float
from .schema import (
    AttributeCombination,
    AttributeSchema,
    ManifestEntry,
    read_manifest,
    save_schema,
    write_manifest,
)

# Attribute names the renderer understands, with neutral values used when an
# attribute is absent from the active schema.
NEUTRAL_PARAMS = {
    "cell_crowding": 12.0,
    "cell_polarity": 2.0,
    "mitosis": 0.0,
    "nucleoli": 0.5,
    "pleomorphism": 0.2,
}

BACKGROUND_RGB = (214.0, 186.0, 202.0)
NUCLEUS_RGB = (72.0, 48.0, 110.0)
NUCLEOLUS_BRIGHT_RGB = (230.0, 222.0, 240.0)
DIVISION_RGB = (38.0, 92.0, 52.0)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
NUCLEUS_LUMA_THRESHOLD = 170.0


@dataclass(frozen=True)
class SyntheticConfig:
    """Rendering controls: one strictly increasing parameter tuple per attribute."""

    resolution: int
    level_params: dict[str, tuple[float, ...]]
    blob_radius: float | None = None
    min_spacing: float = 2.0
    aspect: float = 1.8
    nucleolus_fraction: float = 0.55  # dot radius relative to the nucleus
    background_seed: int = 0

    def __post_init__(self):
        if self.resolution < 32:
            raise ValidationError(f"resolution too small: {self.resolution}")
        if not 0.0 < self.nucleolus_fraction <= 0.85:
            raise ValidationError(
                f"nucleolus_fraction must be in (0, 0.85], got {self.nucleolus_fraction}"
            )
        if self.blob_radius is None:
            object.__setattr__(self, "blob_radius", max(2.5, self.resolution / 72))
        object.__setattr__(
            self,
            "level_params",
            {k: tuple(float(x) for x in v) for k, v in self.level_params.items()},
        )

    def validate(self, schema: AttributeSchema) -> None:
        names = {a.name for a in schema.attributes}
        unknown = set(self.level_params) - set(NEUTRAL_PARAMS)
        if unknown:
            raise ValidationError(f"no renderer control for attributes: {sorted(unknown)}")
        missing = names - set(self.level_params)
        if missing:
            raise ValidationError(f"config lacks parameter tables for: {sorted(missing)}")
        for attr in schema.attributes:
            table = self.level_params[attr.name]
            if len(table) != attr.cardinality:
                raise ValidationError(
                    f"{attr.name}: table has {len(table)} entries, "
                    f"schema has {attr.cardinality} levels"
                )
            if any(b <= a for a, b in zip(table, table[1:])):
                raise ValidationError(f"{attr.name}: parameters must strictly increase")
            # Keep nucleolus dots darker than the nucleus threshold so every
            # nucleus stays one connected component (exact crowding counts).
            if attr.name == "nucleoli" and max(table) > 0.62:
                raise ValidationError("nucleoli contrast must stay <= 0.62")

    @classmethod
    def default(cls, resolution: int, schema: AttributeSchema) -> "SyntheticConfig":
        """Reference tables, scaled from counts 20..200 at 256x256."""
        area_scale = (resolution / 256.0) ** 2
        tables: dict[str, tuple[float, ...]] = {}
        for attr in schema.attributes:
            card = attr.cardinality
            if attr.name == "cell_crowding":
                base = (
                    (20.0, 60.0, 120.0, 200.0)
                    if card == 4
                    else tuple(np.linspace(20.0, 200.0, card))
                )
                table = tuple(max(1.0, round(c * area_scale)) for c in base)
                # area scaling can collapse small-count levels; force strict growth
                grown = []
                for value in table:
                    if grown and value <= grown[-1]:
                        value = grown[-1] + 1
                    grown.append(value)
                tables[attr.name] = tuple(grown)
            elif attr.name == "cell_polarity":
                tables[attr.name] = tuple(np.geomspace(0.25, 16.0, card))
            elif attr.name == "mitosis":
                tables[attr.name] = tuple(round(v) for v in np.linspace(0, 8, card))
            elif attr.name == "nucleoli":
                tables[attr.name] = tuple(np.linspace(0.0, 0.6, card))
            elif attr.name == "pleomorphism":
                tables[attr.name] = tuple(np.linspace(0.0, 0.55, card))
            else:
                raise ValidationError(f"no renderer control for attribute {attr.name!r}")
        return cls(resolution=resolution, level_params=tables)

    def resolved(self, combo: AttributeCombination, schema: AttributeSchema) -> dict:
        """Parameter values for one combination, neutral for absent attributes."""
        values = dict(NEUTRAL_PARAMS)
        for attr, level in zip(schema.attributes, combo.levels):
            values[attr.name] = self.level_params[attr.name][level]
        return values

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "level_params": {k: list(v) for k, v in self.level_params.items()},
            "blob_radius": self.blob_radius,
            "min_spacing": self.min_spacing,
            "aspect": self.aspect,
            "nucleolus_fraction": self.nucleolus_fraction,
            "background_seed": self.background_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SyntheticConfig":
        return cls(**data)


def _background(resolution: int, rng: np.random.Generator) -> np.ndarray:
    """Low-frequency stained-texture background, (3, R, R) float32."""
    cells = max(4, resolution // 16)
    coarse = rng.normal(0.0, 1.0, (cells, cells))
    zoomed = ndimage.zoom(coarse, resolution / cells, order=1)[:resolution, :resolution]
    zoomed = ndimage.gaussian_filter(zoomed, sigma=resolution / 64)
    img = np.empty((3, resolution, resolution), dtype=np.float32)
    for c, (base, gain) in enumerate(zip(BACKGROUND_RGB, (9.0, 7.0, 8.0))):
        img[c] = base + gain * zoomed
    return img


def _paint_ellipse(img, cy, cx, a, b, theta, color):
    """Fill an oriented ellipse; bounding box keeps the work local."""
    resolution = img.shape[1]
    extent = int(np.ceil(a)) + 1
    y0, y1 = max(0, int(cy) - extent), min(resolution, int(cy) + extent + 1)
    x0, x1 = max(0, int(cx) - extent), min(resolution, int(cx) + extent + 1)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    dy, dx = ys - cy, xs - cx
    u = np.cos(theta) * dx + np.sin(theta) * dy
    w = -np.sin(theta) * dx + np.cos(theta) * dy
    mask = (u / a) ** 2 + (w / b) ** 2 <= 1.0
    for c in range(3):
        img[c, y0:y1, x0:x1][mask] = color[c]


def render_sample(
    combo: AttributeCombination,
    config: SyntheticConfig,
    schema: AttributeSchema,
    seed,
) -> np.ndarray:
    """Render one combination to a (3, R, R) uint8 image, deterministically."""
    schema.validate_combination(combo)
    config.validate(schema)
    params = config.resolved(combo, schema)
    resolution = config.resolution
    rng = np.random.default_rng(seed)

    count = int(round(params["cell_crowding"]))
    kappa = params["cell_polarity"]
    figures = int(round(params["mitosis"]))
    contrast = params["nucleoli"]
    size_spread = params["pleomorphism"]

    # Fixed draw order keeps per-blob randomness shared across level sweeps.
    mean_theta = rng.uniform(0.0, np.pi)
    size_factors = rng.uniform(-1.0, 1.0, count)
    theta_noise = rng.normal(0.0, 1.0, count)
    shade_jitter = rng.uniform(-10.0, 10.0, count)

    radii = config.blob_radius * (1.0 + size_spread * size_factors)
    half_aspect = np.sqrt(config.aspect)
    majors = radii * half_aspect
    minors = radii / half_aspect
    spread = (np.pi / 2.0) / (1.0 + kappa)
    thetas = mean_theta + spread * theta_noise

    # Jittered-grid placement: cells sized for the largest possible nucleus, so
    # any jitter inside the remaining freedom keeps edge gaps >= min_spacing.
    a_max = config.blob_radius * (1.0 + size_spread) * half_aspect
    cell = 2.0 * (a_max + config.min_spacing / 2.0 + 0.5)
    margin = config.min_spacing + 1.0
    grid = int((resolution - 2.0 * margin) // cell)
    if count > grid * grid:
        raise CapacityError(
            f"cannot place {count} nuclei of radius ~{config.blob_radius:.1f} at "
            f"resolution {resolution} with spacing {config.min_spacing} "
            f"(capacity {grid * grid})"
        )
    chosen = rng.choice(grid * grid, size=count, replace=False)
    jitter_unit = rng.uniform(-1.0, 1.0, (count, 2))
    freedom = cell / 2.0 - (majors + config.min_spacing / 2.0 + 0.5)
    centers_y = margin + (chosen // grid + 0.5) * cell + jitter_unit[:, 0] * freedom
    centers_x = margin + (chosen % grid + 0.5) * cell + jitter_unit[:, 1] * freedom

    bg_rng = np.random.default_rng(
        [config.background_seed, *np.atleast_1d(np.asarray(seed, dtype=np.int64)).tolist()]
    )
    img = _background(resolution, bg_rng)

    figures = min(figures, count)
    nucleus = np.array(NUCLEUS_RGB)
    bright = np.array(NUCLEOLUS_BRIGHT_RGB)
    for j in range(count):
        color = np.clip(nucleus + shade_jitter[j], 0, 255)
        _paint_ellipse(
            img, centers_y[j], centers_x[j], majors[j], minors[j], thetas[j], color
        )
        if j < figures:
            # Division figure: two condensed lobes inside the nucleus footprint.
            for sign in (-1.0, 1.0):
                off = 0.33 * majors[j] * sign
                _paint_ellipse(
                    img,
                    centers_y[j] + off * np.sin(thetas[j]),
                    centers_x[j] + off * np.cos(thetas[j]),
                    0.42 * majors[j],
                    0.42 * minors[j] * 1.4,
                    thetas[j],
                    DIVISION_RGB,
                )
        elif contrast > 0.0:
            dot = color + contrast * (bright - color)
            _paint_ellipse(
                img,
                centers_y[j],
                centers_x[j],
                config.nucleolus_fraction * majors[j],
                config.nucleolus_fraction * minors[j],
                thetas[j],
                dot,
            )
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


# --- measurement oracles -----------------------------------------------------


def luminance(img: np.ndarray) -> np.ndarray:
    """(3, H, W) uint8 -> (H, W) float luminance."""
    r, g, b = LUMA_WEIGHTS
    return r * img[0].astype(np.float64) + g * img[1] + b * img[2]


def nucleus_mask(img: np.ndarray) -> np.ndarray:
    return luminance(img) < NUCLEUS_LUMA_THRESHOLD


def filled_nucleus_mask(img: np.ndarray) -> np.ndarray:
    return ndimage.binary_fill_holes(nucleus_mask(img))


def count_components(img: np.ndarray) -> int:
    """Number of connected dark nuclei (the cell-crowding statistic)."""
    _, n = ndimage.label(nucleus_mask(img))
    return int(n)


def core_brightness(img: np.ndarray) -> float:
    """Mean luminance inside nucleus interiors (the nucleoli statistic)."""
    mask = filled_nucleus_mask(img)
    return float(luminance(img)[mask].mean())


def blob_area_variance(img: np.ndarray) -> float:
    """Variance of per-nucleus pixel areas (the pleomorphism statistic)."""
    labels, n = ndimage.label(filled_nucleus_mask(img))
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, n + 1))
    return float(np.var(areas))


def orientation_concentration(img: np.ndarray) -> float:
    """Resultant length of doubled nucleus orientations (the polarity statistic).

    Orientations come from per-component second moments; doubling removes the
    pi ambiguity. 0 = isotropic, 1 = perfectly aligned.
    """
    labels, n = ndimage.label(filled_nucleus_mask(img))
    doubled = []
    for idx in range(1, n + 1):
        ys, xs = np.nonzero(labels == idx)
        if ys.size < 20:
            continue
        dy, dx = ys - ys.mean(), xs - xs.mean()
        mu11 = np.mean(dx * dy)
        mu20 = np.mean(dx * dx)
        mu02 = np.mean(dy * dy)
        phi = 0.5 * np.arctan2(2.0 * mu11, mu20 - mu02)
        doubled.append(np.exp(2j * phi))
    if not doubled:
        return 0.0
    return float(np.abs(np.mean(doubled)))


def division_figure_count(img: np.ndarray) -> int:
    """Count dark-green division figures (the mitosis statistic).

    The two lobes of one figure overlap, so each figure is exactly one
    green connected component.
    """
    r = img[0].astype(np.int16)
    g = img[1].astype(np.int16)
    b = img[2].astype(np.int16)
    green = (g > r + 15) & (g > b + 15)
    _, n = ndimage.label(green)
    return int(n)


# --- dataset IO ----------------------------------------------------------------


def generate_dataset(
    config: SyntheticConfig,
    schema: AttributeSchema,
    n_per_combination: int,
    seed: int,
    out_dir: str | Path,
    combinations: Sequence[AttributeCombination] | None = None,
) -> tuple[Path, list[ManifestEntry]]:
    """Render images for every combination and write the manifest alongside.

    Per-sample RNG streams derive from (seed, sample index), so parallel and
    serial generation would agree byte-for-byte.
    """
    if n_per_combination < 1:
        raise ValidationError(
            f"n_per_combination must be >= 1, got {n_per_combination}"
        )
    config.validate(schema)
    combos = list(combinations) if combinations is not None else list(
        schema.all_combinations()
    )
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)

    entries = []
    index = 0
    for combo in combos:
        for _ in range(n_per_combination):
            img = render_sample(combo, config, schema, seed=[seed, index])
            rel = f"images/img_{index:06d}.png"
            save_png(out_dir / rel, img)
            entries.append(ManifestEntry(rel, combo))
            index += 1

    manifest_path = out_dir / "manifest.txt"
    write_manifest(manifest_path, entries, header="synthetic attribute dataset")
    save_schema(out_dir / "schema.yaml", schema)
    (out_dir / "synth_config.yaml").write_text(yaml.safe_dump(config.to_dict()))
    return manifest_path, entries


def load_entries(
    entries: Iterable[ManifestEntry], root: str | Path
) -> list[tuple[np.ndarray, AttributeCombination]]:
    """Decode manifest entries to (float32 (3, R, R) in [-1, 1], combination)."""
    root = Path(root)
    return [
        (uint8_to_float(load_png(root / e.image_path)), e.combination) for e in entries
    ]


def load_dataset(
    manifest_path: str | Path,
    schema: AttributeSchema,
    root: str | Path | None = None,
) -> list[tuple[np.ndarray, AttributeCombination]]:
    """Load (image, combination) pairs in manifest order."""
    manifest_path = Path(manifest_path)
    root = Path(root) if root is not None else manifest_path.parent
    return load_entries(read_manifest(manifest_path, schema), root)
