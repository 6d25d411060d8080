import numpy as np
import pytest
import torch

from attributegan.data_synth import SyntheticConfig, render_sample
from attributegan.discriminator import DiscriminatorSpec
from attributegan.generator import GeneratorSpec
from attributegan.imaging import uint8_to_float
from attributegan.schema import (
    AttributeCombination,
    AttributeDefinition,
    AttributeSchema,
    default_schema,
)
from attributegan.training import ImageDataset


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def desk_schema():
    """Two-attribute schema used by the scaled-down experiments."""
    return AttributeSchema(
        (
            AttributeDefinition("cell_crowding", ("low", "medium", "high", "severe")),
            AttributeDefinition("nucleoli", ("none", "faint", "bright")),
        )
    )


@pytest.fixture(scope="session")
def desk_synth_config():
    return SyntheticConfig(
        resolution=64,
        level_params={
            "cell_crowding": (4, 8, 14, 20),
            "nucleoli": (0.0, 0.3, 0.6),
        },
        blob_radius=2.6,
    )


def tiny_g_spec(schema, base_channels=32):
    return GeneratorSpec(
        output_resolution=64,
        noise_dim=64,
        attribute_dim=schema.total_onehot_dim,
        base_channels=base_channels,
    )


def tiny_d_spec(schema, base_channels=32):
    return DiscriminatorSpec(
        input_resolution=64,
        attribute_dim=schema.total_onehot_dim,
        base_channels=base_channels,
        embedding_dim=32,
    )


@pytest.fixture(scope="session")
def desk_dataset(desk_schema, desk_synth_config):
    """Small in-memory dataset: 3 renders per combination at 64x64."""
    pairs = []
    index = 0
    for combo in desk_schema.all_combinations():
        for _ in range(3):
            img = render_sample(combo, desk_synth_config, desk_schema, seed=[0, index])
            pairs.append((uint8_to_float(img), combo))
            index += 1
    return ImageDataset.from_pairs(pairs, desk_schema)


def make_onehot_batch(combos, schema):
    from attributegan.schema import encode_one_hot

    return torch.from_numpy(
        np.stack([encode_one_hot(c, schema) for c in combos])
    ).float()


@pytest.fixture
def any_combo():
    return AttributeCombination((1, 1, 1, 0, 2))
