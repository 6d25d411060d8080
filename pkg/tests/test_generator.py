import numpy as np
import pytest
import torch

from attributegan.errors import ConfigurationError, ValidationError
from attributegan.generator import Generator, GeneratorSpec
from attributegan.layers import (
    GLU,
    GaussianBlur,
    GlobalContextBlock,
    SleBlock,
    UpsampleBlock,
)
from attributegan.schema import AttributeCombination, encode_one_hot
from conftest import make_onehot_batch, tiny_g_spec


class TestLayers:
    def test_glu_halves_channels(self):
        out = GLU()(torch.randn(2, 8, 4, 4))
        assert out.shape == (2, 4, 4, 4)

    def test_glu_rejects_odd_channels(self):
        with pytest.raises(ValidationError):
            GLU()(torch.randn(2, 7, 4, 4))

    def test_blur_preserves_constants(self):
        blur = GaussianBlur(3)
        x = torch.full((2, 3, 8, 8), 0.37)
        assert torch.allclose(blur(x), x, atol=1e-6)

    def test_blur_kernel_normalized(self):
        blur = GaussianBlur(1)
        assert abs(blur.kernel.sum().item() - 1.0) < 1e-6

    def test_global_context_preserves_shape(self):
        block = GlobalContextBlock(8)
        x = torch.randn(2, 8, 4, 4)
        assert block(x).shape == x.shape

    def test_sle_identity_and_zero_gates(self):
        sle = SleBlock(4, 8)
        low = torch.randn(2, 4, 4, 4)
        high = torch.randn(2, 8, 32, 32)
        sle.gate_mode = "ones"
        assert torch.equal(sle(low, high), high)
        sle.gate_mode = "zeros"
        assert sle(low, high).abs().max() == 0

    def test_sle_learned_gate_shape_and_range(self):
        sle = SleBlock(4, 8)
        low = torch.randn(2, 4, 16, 16)
        high = torch.randn(2, 8, 128, 128)
        out = sle(low, high)
        assert out.shape == high.shape
        gates = sle.gate(sle.context(low))
        assert gates.shape == (2, 8, 1, 1)
        assert (gates > 0).all() and (gates < 1).all()

    def test_sle_rejects_non_factor8_pairs(self):
        sle = SleBlock(4, 8)
        with pytest.raises(ConfigurationError):
            sle(torch.randn(2, 4, 8, 8), torch.randn(2, 8, 32, 32))

    def test_upsample_block_doubles(self):
        block = UpsampleBlock(8, 16)
        out = block(torch.randn(2, 8, 8, 8))
        assert out.shape == (2, 16, 16, 16)

    def test_upsample_block_rejects_non_square(self):
        block = UpsampleBlock(8, 16)
        with pytest.raises(ValidationError):
            block(torch.randn(2, 8, 8, 4))

    def test_upsample_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        block = UpsampleBlock(4, 4).double().eval()
        x = torch.randn(1, 4, 4, 4, dtype=torch.float64, requires_grad=True)
        block(x).sum().backward()
        analytic = x.grad.clone()
        eps = 1e-6
        numeric = torch.zeros_like(x)
        with torch.no_grad():
            flat = x.detach().reshape(-1)
            for i in range(flat.numel()):
                for sign in (1.0, -1.0):
                    bumped = flat.clone()
                    bumped[i] += sign * eps
                    numeric.reshape(-1)[i] += sign * block(
                        bumped.reshape(x.shape)
                    ).sum() / (2 * eps)
        rel = (analytic - numeric).abs().max() / numeric.abs().max()
        assert rel < 1e-3


class TestGeneratorSpec:
    def test_full_scale_placements(self):
        spec = GeneratorSpec(output_resolution=512)
        assert spec.attention_resolutions == (32, 64)
        assert spec.sle_pairs == ((16, 128), (32, 256), (64, 512))
        assert spec.base_channels == 1024

    def test_desk_scale_placements(self):
        spec = GeneratorSpec(output_resolution=64)
        assert spec.attention_resolutions == (4, 8)
        # the 2 -> 16 pair falls below the 4x4 ladder start and is dropped
        assert spec.sle_pairs == ((4, 32), (8, 64))
        assert spec.resolution_ladder == (4, 8, 16, 32, 64)

    def test_channels_halve_per_doubling(self):
        spec = GeneratorSpec(output_resolution=128, base_channels=256, min_channels=4)
        assert [spec.channels(r) for r in spec.resolution_ladder] == [
            256, 128, 64, 32, 16, 8,
        ]

    def test_rejects_small_or_non_power_of_two(self):
        with pytest.raises(ConfigurationError):
            GeneratorSpec(output_resolution=32)
        with pytest.raises(ConfigurationError):
            GeneratorSpec(output_resolution=96)

    def test_dict_roundtrip(self):
        spec = GeneratorSpec(output_resolution=64, noise_dim=32, attribute_dim=7)
        assert GeneratorSpec.from_dict(spec.to_dict()) == spec


class TestGeneratorForward:
    @pytest.fixture(scope="class")
    def generator(self, desk_schema):
        torch.manual_seed(0)
        return Generator(tiny_g_spec(desk_schema))

    def test_initial_stage_shape(self, generator, desk_schema):
        z = torch.randn(2, generator.spec.noise_dim)
        a = make_onehot_batch(
            [AttributeCombination((0, 0)), AttributeCombination((3, 2))], desk_schema
        )
        out = generator.initial_stage(z, a)
        assert out.shape == (2, generator.spec.channels(4), 4, 4)

    def test_initial_stage_deterministic(self, generator, desk_schema):
        z = torch.randn(2, generator.spec.noise_dim)
        a = make_onehot_batch(
            [AttributeCombination((1, 1)), AttributeCombination((2, 0))], desk_schema
        )
        generator.eval()
        assert torch.equal(generator.initial_stage(z, a), generator.initial_stage(z, a))

    def test_initial_stage_attribute_sensitivity(self, generator, desk_schema):
        z = torch.randn(1, generator.spec.noise_dim)
        a1 = make_onehot_batch([AttributeCombination((0, 0))], desk_schema)
        a2 = make_onehot_batch([AttributeCombination((1, 0))], desk_schema)
        generator.eval()
        diff = (generator.initial_stage(z, a1) - generator.initial_stage(z, a2)).abs()
        assert diff.max() > 1e-6

    def test_output_shape_and_bounds(self, generator, desk_schema):
        z = torch.randn(4, generator.spec.noise_dim)
        a = make_onehot_batch([AttributeCombination((1, 2))] * 4, desk_schema)
        img = generator.synthesize(z, a)
        assert img.shape == (4, 3, 64, 64)
        assert img.abs().max() <= 1.0

    def test_conditioning_sensitivity(self, generator, desk_schema):
        # one train-mode batch: identical noise, different attributes; batch
        # statistics are shared, so any output difference comes from a
        z = torch.randn(1, generator.spec.noise_dim).expand(2, -1)
        a = make_onehot_batch(
            [AttributeCombination((0, 0)), AttributeCombination((1, 0))], desk_schema
        )
        generator.train()
        with torch.no_grad():
            imgs = generator(z, a)
        assert (imgs[0] - imgs[1]).abs().max() > 1e-6

    def test_shape_errors(self, generator, desk_schema):
        a = make_onehot_batch([AttributeCombination((0, 0))], desk_schema)
        with pytest.raises(ValidationError):
            generator(torch.randn(1, 3), a)
        with pytest.raises(ValidationError):
            generator(torch.randn(1, generator.spec.noise_dim), torch.randn(1, 3))


class TestStructuralWiring:
    def test_declared_wiring_matches_spec(self, desk_schema):
        spec = tiny_g_spec(desk_schema)
        g = Generator(spec)
        wiring = g.wiring()
        assert wiring["attention"] == spec.attention_resolutions
        assert wiring["sle_pairs"] == spec.sle_pairs
        assert wiring["ladder"] == spec.resolution_ladder

    def test_runtime_attention_resolutions(self, desk_schema):
        spec = tiny_g_spec(desk_schema)
        g = Generator(spec).eval()
        seen = []
        hooks = [
            m.register_forward_hook(
                lambda mod, args, out: seen.append(args[0].shape[-1])
            )
            for m in g.attention.values()
        ]
        z = torch.randn(1, spec.noise_dim)
        a = make_onehot_batch([AttributeCombination((0, 0))], desk_schema)
        with torch.no_grad():
            g(z, a)
        for h in hooks:
            h.remove()
        assert sorted(seen) == sorted(spec.attention_resolutions)

    def test_doubling_chain_resolutions(self, desk_schema):
        spec = tiny_g_spec(desk_schema)
        g = Generator(spec).eval()
        seen = {}
        hooks = [
            m.register_forward_hook(
                lambda mod, args, out, key=res: seen.__setitem__(key, out.shape[-1])
            )
            for res, m in ((int(k), v) for k, v in g.up_blocks.items())
        ]
        z = torch.randn(1, spec.noise_dim)
        a = make_onehot_batch([AttributeCombination((0, 0))], desk_schema)
        with torch.no_grad():
            g(z, a)
        for h in hooks:
            h.remove()
        assert seen == {res: res for res in spec.resolution_ladder[1:]}

    def test_backbone_ablation_identity(self, desk_schema):
        """gamma = 0 everywhere + saturated SLE gates reduces the network to
        the plain initial stage -> upsample chain -> RGB head."""
        spec = tiny_g_spec(desk_schema)
        torch.manual_seed(1)
        g = Generator(spec).eval()
        with torch.no_grad():
            for attn in g.attention.values():
                attn.gamma.zero_()
        for sle in g.sle.values():
            sle.gate_mode = "ones"

        z = torch.randn(1, spec.noise_dim)
        a = make_onehot_batch([AttributeCombination((2, 1))], desk_schema)
        with torch.no_grad():
            full = g(z, a)
            x = g.initial_stage(z, a)
            for res in spec.resolution_ladder[1:]:
                x = g.up_blocks[str(res)](x)
            backbone = torch.tanh(g.to_rgb(x))
        assert torch.equal(full, backbone)


class TestAttributeSweep:
    def test_sweep_counts_per_cardinality(self, desk_schema):
        g = Generator(tiny_g_spec(desk_schema))
        z = torch.randn(1, g.spec.noise_dim)
        base = AttributeCombination((0, 0))
        assert g.attribute_sweep(z, base, 0, desk_schema).shape[0] == 4
        assert g.attribute_sweep(z, base, 1, desk_schema).shape[0] == 3

    def test_sweep_full_schema_counts(self, schema):
        g = Generator(tiny_g_spec(schema))
        z = torch.randn(1, g.spec.noise_dim)
        base = AttributeCombination((0, 0, 0, 0, 0))
        assert g.attribute_sweep(z, base, 0, schema).shape[0] == 4  # crowding
        assert g.attribute_sweep(z, base, 3, schema).shape[0] == 2  # nucleoli

    def test_sweep_deterministic(self, desk_schema):
        g = Generator(tiny_g_spec(desk_schema))
        z = torch.randn(1, g.spec.noise_dim)
        base = AttributeCombination((1, 1))
        first = g.attribute_sweep(z, base, 0, desk_schema)
        second = g.attribute_sweep(z, base, 0, desk_schema)
        assert torch.equal(first, second)

    def test_sweep_invalid_index(self, desk_schema):
        g = Generator(tiny_g_spec(desk_schema))
        z = torch.randn(1, g.spec.noise_dim)
        with pytest.raises(ValidationError):
            g.attribute_sweep(z, AttributeCombination((0, 0)), 5, desk_schema)
