"""Multi-attribute vocabulary: one-hot encoding, level normalization, manifests,
and rare-combination filtering.

All operations here are pure and stateless. The default schema covers the five
cellular attributes (cell crowding, cell polarity, mitosis, nucleoli,
pleomorphism) with 4/3/3/2/4 levels; everything is parameterized so smaller
schemas work identically.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
import yaml

from .errors import DataError, ValidationError

MANIFEST_COMMENT = "#"


@dataclass(frozen=True)
class AttributeDefinition:
    """One named attribute with an ordered set of level names."""

    name: str
    level_names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "level_names", tuple(self.level_names))
        if self.cardinality < 2:
            raise ValidationError(f"attribute {self.name!r} needs >= 2 levels")
        if len(set(self.level_names)) != self.cardinality:
            raise ValidationError(f"attribute {self.name!r} has duplicate level names")

    @property
    def cardinality(self) -> int:
        return len(self.level_names)


@dataclass(frozen=True)
class AttributeSchema:
    """Ordered collection of attributes defining the conditioning vocabulary."""

    attributes: tuple[AttributeDefinition, ...]

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise ValidationError("attribute names must be unique")
        if not self.attributes:
            raise ValidationError("schema needs at least one attribute")

    @property
    def num_attributes(self) -> int:
        return len(self.attributes)

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(a.cardinality for a in self.attributes)

    @property
    def total_onehot_dim(self) -> int:
        return sum(self.cardinalities)

    @property
    def block_offsets(self) -> tuple[int, ...]:
        """Start index of each attribute's one-hot block."""
        offsets = np.concatenate([[0], np.cumsum(self.cardinalities)[:-1]])
        return tuple(int(o) for o in offsets)

    def attribute_index(self, name: str) -> int:
        for i, a in enumerate(self.attributes):
            if a.name == name:
                return i
        known = ", ".join(a.name for a in self.attributes)
        raise ValidationError(f"unknown attribute {name!r}; known attributes: {known}")

    def validate_combination(self, combo: "AttributeCombination") -> None:
        if len(combo.levels) != self.num_attributes:
            raise ValidationError(
                f"combination has {len(combo.levels)} levels, schema has "
                f"{self.num_attributes} attributes"
            )
        for attr, level in zip(self.attributes, combo.levels):
            if not 0 <= level < attr.cardinality:
                raise ValidationError(
                    f"level {level} out of range for attribute {attr.name!r} "
                    f"(cardinality {attr.cardinality})"
                )

    def combination_id(self, combo: "AttributeCombination") -> int:
        """Mixed-radix index of a combination; equal ids iff equal combinations."""
        self.validate_combination(combo)
        ident = 0
        for level, card in zip(combo.levels, self.cardinalities):
            ident = ident * card + level
        return ident

    def all_combinations(self) -> Iterator["AttributeCombination"]:
        """Every valid combination in mixed-radix order."""
        for flat in np.ndindex(*self.cardinalities):
            yield AttributeCombination(tuple(int(v) for v in flat))

    def to_dict(self) -> dict:
        return {
            "attributes": [
                {"name": a.name, "levels": list(a.level_names)} for a in self.attributes
            ]
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AttributeSchema":
        try:
            attrs = tuple(
                AttributeDefinition(entry["name"], tuple(entry["levels"]))
                for entry in data["attributes"]
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed schema mapping: {exc}") from exc
        return cls(attrs)


@dataclass(frozen=True)
class AttributeCombination:
    """A joint level assignment, one 0-based index per schema attribute."""

    levels: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(int(v) for v in self.levels))

    def __iter__(self):
        return iter(self.levels)

    def __len__(self):
        return len(self.levels)

    def with_level(self, attr_index: int, level: int) -> "AttributeCombination":
        levels = list(self.levels)
        levels[attr_index] = level
        return AttributeCombination(tuple(levels))


@dataclass(frozen=True)
class ManifestEntry:
    """One dataset record: relative image path plus its attribute combination."""

    image_path: str
    combination: AttributeCombination


def default_schema() -> AttributeSchema:
    """The five-attribute urothelial cellular-feature vocabulary (4/3/3/2/4 levels)."""
    return AttributeSchema(
        (
            AttributeDefinition(
                "cell_crowding", ("normal", "mild", "moderate", "severe")
            ),
            AttributeDefinition(
                "cell_polarity", ("completely_lacking", "partially_lost", "present")
            ),
            AttributeDefinition("mitosis", ("absent", "occasional", "frequent")),
            AttributeDefinition("nucleoli", ("inconspicuous", "prominent")),
            AttributeDefinition(
                "pleomorphism", ("normal", "mild", "moderate", "severe")
            ),
        )
    )


def encode_one_hot(combo: AttributeCombination, schema: AttributeSchema) -> np.ndarray:
    """Concatenated per-attribute one-hot blocks in schema order (float32)."""
    schema.validate_combination(combo)
    vec = np.zeros(schema.total_onehot_dim, dtype=np.float32)
    for offset, level in zip(schema.block_offsets, combo.levels):
        vec[offset + level] = 1.0
    return vec


def decode_one_hot(vec: np.ndarray, schema: AttributeSchema) -> AttributeCombination:
    """Inverse of encode_one_hot; requires exactly one entry > 0.5 per block."""
    vec = np.asarray(vec)
    if vec.shape != (schema.total_onehot_dim,):
        raise ValidationError(
            f"expected vector of length {schema.total_onehot_dim}, got shape {vec.shape}"
        )
    levels = []
    for attr, offset in zip(schema.attributes, schema.block_offsets):
        block = vec[offset : offset + attr.cardinality]
        hot = np.nonzero(block > 0.5)[0]
        if hot.size != 1:
            raise ValidationError(
                f"block for attribute {attr.name!r} has {hot.size} hot entries, "
                "expected exactly 1"
            )
        levels.append(int(hot[0]))
    return AttributeCombination(tuple(levels))


def normalize_levels(combo: AttributeCombination, schema: AttributeSchema) -> np.ndarray:
    """Map each level index to [0, 1] by dividing by (cardinality - 1)."""
    schema.validate_combination(combo)
    return np.array(
        [
            level / (card - 1)
            for level, card in zip(combo.levels, schema.cardinalities)
        ],
        dtype=np.float64,
    )


def combination_frequencies(
    entries: Sequence[ManifestEntry],
) -> dict[AttributeCombination, int]:
    """Count manifest entries per distinct combination."""
    if not entries:
        raise ValidationError("cannot compute frequencies of an empty entry list")
    return dict(Counter(e.combination for e in entries))


def filter_rare_combinations(
    entries: Sequence[ManifestEntry], percentile: float = 20.0
) -> list[ManifestEntry]:
    """Drop entries whose combination frequency falls strictly below the given
    percentile of the distinct-combination frequency distribution.

    The percentile is taken with linear interpolation over the sorted
    frequencies of distinct combinations; input order is preserved.
    """
    if not 0.0 <= percentile <= 100.0:
        raise ValidationError(f"percentile must be in [0, 100], got {percentile}")
    freqs = combination_frequencies(entries)
    threshold = float(np.percentile(sorted(freqs.values()), percentile))
    return [e for e in entries if freqs[e.combination] >= threshold]


def parse_levels(text: str, schema: AttributeSchema) -> AttributeCombination:
    """Parse 'l0,l1,...' into a validated combination."""
    parts = [p.strip() for p in text.split(",")]
    try:
        levels = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ValidationError(f"levels must be integers, got {text!r}") from exc
    combo = AttributeCombination(levels)
    schema.validate_combination(combo)
    return combo


def read_manifest(path: str | Path, schema: AttributeSchema) -> list[ManifestEntry]:
    """Read a manifest file: one `<path>\\t<l0,l1,...>` entry per line."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    entries = []
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith(MANIFEST_COMMENT):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 tab-separated fields")
        try:
            combo = parse_levels(fields[1], schema)
        except ValidationError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
        entries.append(ManifestEntry(fields[0], combo))
    return entries


def write_manifest(
    path: str | Path, entries: Iterable[ManifestEntry], header: str | None = None
) -> None:
    path = Path(path)
    lines = []
    if header:
        lines.extend(f"{MANIFEST_COMMENT} {h}" for h in header.splitlines())
    for e in entries:
        levels = ",".join(str(v) for v in e.combination.levels)
        lines.append(f"{e.image_path}\t{levels}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_schema(path: str | Path) -> AttributeSchema:
    """Load a schema from a YAML/JSON mapping with an `attributes` list."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"schema file not found: {path}")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise DataError(f"{path}: schema file must contain a mapping")
    return AttributeSchema.from_dict(data)


def save_schema(path: str | Path, schema: AttributeSchema) -> None:
    Path(path).write_text(yaml.safe_dump(schema.to_dict(), sort_keys=False))
