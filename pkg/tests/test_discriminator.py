import numpy as np
import pytest
import torch

from attributegan.discriminator import (
    Discriminator,
    DiscriminatorSpec,
    hinge_d_loss,
    hinge_g_loss,
    reconstruction_loss,
    sample_crop_offsets,
)
from attributegan.errors import ConfigurationError, UsageError, ValidationError
from attributegan.schema import AttributeCombination
from conftest import make_onehot_batch, tiny_d_spec


@pytest.fixture(scope="module")
def disc(desk_schema):
    torch.manual_seed(0)
    return Discriminator(tiny_d_spec(desk_schema)).eval()


def batch(desk_schema, b=4, seed=0):
    g = torch.Generator().manual_seed(seed)
    images = torch.rand(b, 3, 64, 64, generator=g) * 2 - 1
    combos = [AttributeCombination((i % 4, i % 3)) for i in range(b)]
    return images, make_onehot_batch(combos, desk_schema)


class TestSpec:
    def test_full_scale_taps(self):
        spec = DiscriminatorSpec(input_resolution=512, attribute_dim=16)
        assert spec.contrastive_tap_resolution == 128
        assert spec.attention_resolutions == (32, 64)
        assert spec.decoder_tap_resolutions == (8, 16)

    def test_desk_taps(self, desk_schema):
        spec = tiny_d_spec(desk_schema)
        assert spec.contrastive_tap_resolution == 16
        assert spec.attention_resolutions == (4, 8)

    def test_rejects_tiny_resolution(self):
        with pytest.raises(ConfigurationError):
            DiscriminatorSpec(input_resolution=16, attribute_dim=16)

    def test_dict_roundtrip(self, desk_schema):
        spec = tiny_d_spec(desk_schema)
        assert DiscriminatorSpec.from_dict(spec.to_dict()) == spec


class TestForward:
    def test_output_shapes(self, disc, desk_schema):
        images, onehot = batch(desk_schema)
        out = disc(images, onehot)
        assert out.scores.shape == (4,)
        assert out.embeddings.shape == (4, 32)
        assert out.recon_8.shape == (4, 3, 8, 8)
        assert out.recon_16.shape == (4, 3, 16, 16)
        assert out.recon_8.abs().max() <= 1.0
        assert out.recon_16.abs().max() <= 1.0

    def test_embeddings_unit_norm(self, disc, desk_schema):
        images, onehot = batch(desk_schema, b=6, seed=3)
        out = disc(images, onehot, with_reconstruction=False)
        assert torch.allclose(out.embeddings.norm(dim=1), torch.ones(6), atol=1e-6)

    def test_zero_attributes_reduce_to_unconditional(self, disc, desk_schema):
        images, onehot = batch(desk_schema)
        scored = disc(images, onehot, with_reconstruction=False).scores
        unconditional = disc(
            images, torch.zeros_like(onehot), with_reconstruction=False
        ).scores
        # bias-free projection path: embed(0) = 0
        feats = disc.score_pool(_backbone_feats(disc, images)[4]).flatten(1)
        proj = (disc.attr_embed(onehot) * feats).sum(dim=1)
        assert torch.allclose(scored - unconditional, proj, atol=1e-5)

    def test_projection_linearity(self, disc, desk_schema):
        images, onehot1 = batch(desk_schema, seed=4)
        _, onehot2 = batch(desk_schema, seed=5)
        onehot2 = onehot2.flip(0)  # different combinations, same images
        s1 = disc(images, onehot1, with_reconstruction=False).scores
        s2 = disc(images, onehot2, with_reconstruction=False).scores
        feats = disc.score_pool(_backbone_feats(disc, images)[4]).flatten(1)
        expected = (disc.attr_embed(onehot1 - onehot2) * feats).sum(dim=1)
        assert torch.allclose(s1 - s2, expected, atol=1e-5)

    def test_deterministic_given_crop_offsets(self, disc, desk_schema):
        images, onehot = batch(desk_schema)
        offsets = sample_crop_offsets(4, torch.Generator().manual_seed(9))
        out1 = disc(images, onehot, crop_offsets=offsets)
        out2 = disc(images, onehot, crop_offsets=offsets)
        assert torch.equal(out1.scores, out2.scores)
        assert torch.equal(out1.recon_8, out2.recon_8)

    def test_shape_validation(self, disc, desk_schema):
        images, onehot = batch(desk_schema)
        with pytest.raises(ValidationError):
            disc(torch.randn(4, 3, 32, 32), onehot)
        with pytest.raises(ValidationError):
            disc(images, onehot[:, :3])

    def test_attention_mirrors_generator_resolutions(self, disc):
        assert disc.wiring()["attention"] == (4, 8)


def _backbone_feats(disc, images):
    feats = {}
    x = disc.from_rgb(images)
    res = disc.spec.input_resolution
    feats[res] = x
    while res > 4:
        x = disc.down_blocks[str(res // 2)](x)
        res //= 2
        if str(res) in disc.attention:
            x = disc.attention[str(res)](x)
        feats[res] = x
    return feats


class TestReconstructionLoss:
    def test_zero_when_decoders_match_targets(self, disc, desk_schema):
        images, onehot = batch(desk_schema)
        out = disc(images, onehot)
        perfect = type(out)(
            scores=out.scores,
            embeddings=out.embeddings,
            recon_8=_part_target(images, out.crop_offsets),
            recon_16=torch.nn.functional.avg_pool2d(images, 4),
            crop_offsets=out.crop_offsets,
        )
        assert reconstruction_loss(images, perfect).item() < 1e-12

    def test_constant_offset_gives_squared_constant(self, disc, desk_schema):
        images, onehot = batch(desk_schema)
        out = disc(images, onehot)
        shifted = type(out)(
            scores=out.scores,
            embeddings=out.embeddings,
            recon_8=_part_target(images, out.crop_offsets) + 0.25,
            recon_16=torch.nn.functional.avg_pool2d(images, 4) + 0.25,
            crop_offsets=out.crop_offsets,
        )
        assert abs(reconstruction_loss(images, shifted).item() - 2 * 0.25**2) < 1e-6

    def test_matches_loop_oracle(self, disc, desk_schema):
        images, onehot = batch(desk_schema, seed=11)
        out = disc(images, onehot)
        loss = reconstruction_loss(images, out).item()

        def mse_loops(a, b):
            total = 0.0
            fa, fb = a.flatten().tolist(), b.flatten().tolist()
            for x, y in zip(fa, fb):
                total += (x - y) ** 2
            return total / len(fa)

        expected = mse_loops(
            out.recon_16, torch.nn.functional.avg_pool2d(images, 4)
        ) + mse_loops(out.recon_8, _part_target(images, out.crop_offsets))
        assert abs(loss - expected) < 1e-7

    def test_usage_error_without_decodes(self, disc, desk_schema):
        images, onehot = batch(desk_schema)
        out = disc(images, onehot, with_reconstruction=False)
        with pytest.raises(UsageError):
            reconstruction_loss(images, out)

    def test_nonnegative(self, disc, desk_schema):
        for seed in range(5):
            images, onehot = batch(desk_schema, seed=seed)
            out = disc(images, onehot)
            assert reconstruction_loss(images, out).item() >= 0.0


def _part_target(images, offsets):
    r = images.shape[-1]
    half, scale = r // 2, r // 16
    crops = torch.stack(
        [
            images[i, :, oy * scale : oy * scale + half, ox * scale : ox * scale + half]
            for i, (oy, ox) in enumerate(offsets.tolist())
        ]
    )
    return torch.nn.functional.avg_pool2d(crops, half // (r // 8))


class TestHingeLosses:
    def test_satisfied_margins_zero_d_loss(self):
        assert hinge_d_loss(torch.tensor([1.0, 2.0]), torch.tensor([-1.0, -3.0])) == 0.0

    def test_zero_scores(self):
        assert hinge_d_loss(torch.zeros(4), torch.zeros(4)).item() == 2.0
        assert hinge_g_loss(torch.zeros(4)).item() == 0.0

    def test_matches_loop_oracle(self):
        g = torch.Generator().manual_seed(13)
        real = torch.randn(16, generator=g, dtype=torch.float64)
        fake = torch.randn(16, generator=g, dtype=torch.float64)
        d = hinge_d_loss(real, fake).item()
        expect_d = sum(max(0.0, 1 - s) for s in real.tolist()) / 16 + sum(
            max(0.0, 1 + s) for s in fake.tolist()
        ) / 16
        assert abs(d - expect_d) < 1e-9
        assert abs(hinge_g_loss(fake).item() + fake.mean().item()) < 1e-9


class TestCropSampling:
    def test_offsets_in_range_and_deterministic(self):
        g1 = torch.Generator().manual_seed(3)
        g2 = torch.Generator().manual_seed(3)
        o1 = sample_crop_offsets(64, g1)
        o2 = sample_crop_offsets(64, g2)
        assert torch.equal(o1, o2)
        assert o1.min() >= 0 and o1.max() <= 8
