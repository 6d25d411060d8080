"""Calibration run v2 for the end-to-end attribute-control experiment."""
import time
from pathlib import Path

import numpy as np
import torch

from attributegan.contrastive import LabelBatch
from attributegan.data_synth import SyntheticConfig, generate_dataset, load_dataset
from attributegan.discriminator import DiscriminatorSpec
from attributegan.evaluation import (
    attribute_error,
    baseline_attribute_error,
    compute_fid,
    get_extractor,
    marginal_mean_levels,
    train_attribute_predictor,
)
from attributegan.generator import GeneratorSpec
from attributegan.checkpoint import load_generator
from attributegan.schema import AttributeCombination, AttributeDefinition, AttributeSchema, read_manifest
from attributegan.training import ImageDataset, TrainingConfig, train

t_start = time.time()
out = Path("/root/e2e_calibration_v2")
out.mkdir(exist_ok=True)

desk = AttributeSchema((
    AttributeDefinition("cell_crowding", ("low", "medium", "high")),
    AttributeDefinition("nucleoli", ("none", "faint", "bright")),
))
synth = SyntheticConfig(
    resolution=64,
    level_params={"cell_crowding": (3, 9, 20), "nucleoli": (0.0, 0.3, 0.6)},
    blob_radius=2.6,
    nucleolus_fraction=0.65,
)
manifest, entries = generate_dataset(synth, desk, n_per_combination=225, seed=0, out_dir=out / "data")
pairs = load_dataset(manifest, desk)
dataset = ImageDataset.from_pairs(pairs, desk)
print(f"dataset ready: {len(dataset)} images, {time.time()-t_start:.0f}s", flush=True)

g_spec = GeneratorSpec(output_resolution=64, noise_dim=128, attribute_dim=desk.total_onehot_dim, base_channels=128)
d_spec = DiscriminatorSpec(input_resolution=64, attribute_dim=desk.total_onehot_dim, base_channels=128, embedding_dim=64)
config = TrainingConfig(
    batch_size=24, learning_rate=2e-4, total_steps=3000,
    lambda_contrastive_d=1.0, lambda_contrastive_g=2.0, lambda_recon=1.0,
    temperature=0.5, ema_decay=0.99, seed=0, log_every=100, checkpoint_every=1500,
    combos_per_batch=6,
)
result = train(dataset, desk, g_spec, d_spec, config, out / "run")
print(f"trained: {time.time()-t_start:.0f}s", flush=True)
for r in result.reports[::300]:
    print(f"  step {r.step}: d_adv={r.d_adv:.3f} d_con={r.d_contrastive:.3f} d_rec={r.d_recon:.3f} g_adv={r.g_adv:.3f} g_con={r.g_contrastive:.3f}", flush=True)

predictor, holdout = train_attribute_predictor(
    dataset.images, dataset.combos, desk, split_seed=0, epochs=12, batch_size=64,
)
print(f"predictor holdout MSE: {holdout}", flush=True)

rng = np.random.default_rng(123)
n_eval = 512
picks = rng.choice(len(entries), size=n_eval, replace=True)
combos = [entries[i].combination for i in picks]
labels = LabelBatch.from_combinations(combos, desk)
base = baseline_attribute_error(combos, marginal_mean_levels(entries, desk), desk)
extractor = get_extractor("proxy-conv-v1")
real_picks = rng.choice(len(pairs), size=n_eval, replace=False)
real = dataset.images[torch.from_numpy(real_picks)]
noise_images = torch.rand(n_eval, 3, 64, 64, generator=torch.Generator().manual_seed(9)) * 2 - 1
fid_noise = compute_fid(real, noise_images, extractor)

for tag, ck in [("1500", out / "run/checkpoint_0001500.pt"), ("3000", out / "run/checkpoint_latest.pt")]:
    for use_ema in (True, False):
        gen, _ = load_generator(ck, use_ema=use_ema)
        z = torch.randn(n_eval, g_spec.noise_dim, generator=torch.Generator().manual_seed(7))
        fakes = torch.cat([
            gen.synthesize(z[s:s+64], labels.label_vectors[s:s+64].float())
            for s in range(0, n_eval, 64)
        ])
        fid_fake = compute_fid(real, fakes, extractor)
        err_fake = attribute_error(fakes, combos, predictor, desk)
        print(f"[step {tag} ema={use_ema}] FID {fid_fake:.3f} vs noise {fid_noise:.3f} ({fid_noise/max(fid_fake,1e-9):.1f}x) | "
              f"attr err {err_fake} mean {err_fake.mean():.4f} vs baseline {base.mean():.4f} (ratio {err_fake.mean()/base.mean():.3f})", flush=True)

print(f"total {time.time()-t_start:.0f}s", flush=True)
