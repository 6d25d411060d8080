"""Alternating discriminator/generator optimization.

One training step is one discriminator update followed by one generator
update on the same conditioning batch. The discriminator objective is hinge
adversarial loss plus the contrastive loss on real embeddings plus the
decoder reconstruction loss; the generator objective is hinge plus the
contrastive loss on fake embeddings computed through the discriminator's
(not-updated-in-this-step) head. All sampling runs off one checkpointed
torch.Generator, so fixed seeds reproduce runs bit-exactly and resumes
continue them bit-exactly.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .contrastive import LabelBatch, conditional_contrastive_loss
from .discriminator import (
    Discriminator,
    DiscriminatorSpec,
    hinge_d_loss,
    hinge_g_loss,
    reconstruction_loss,
    sample_crop_offsets,
)
from .errors import ConfigurationError, NumericError, ValidationError
from .generator import Generator, GeneratorSpec
from .schema import AttributeCombination, AttributeSchema

LOG_NAMES = ("d_adv", "d_contrastive", "d_recon", "g_adv", "g_contrastive")


@dataclass
class TrainingConfig:
    batch_size: int = 64
    learning_rate: float = 2e-4
    total_steps: int = 50000
    lambda_contrastive_d: float = 1.0
    lambda_contrastive_g: float = 1.0
    lambda_recon: float = 1.0
    temperature: float = 0.5
    ema_decay: float = 0.999
    use_ema: bool = True
    seed: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    log_every: int = 50
    checkpoint_every: int = 1000
    device: str = "cpu"
    # Pin torch to one intra-op thread inside the loop: at desk-model sizes it
    # is faster on few-core boxes and removes parallel-reduction jitter, which
    # the bit-exact determinism contract cannot tolerate.
    single_thread: bool = True
    # When set, each batch draws this many distinct attribute combinations and
    # fills the batch evenly from their samples. The contrastive data-to-data
    # term needs same-label pairs inside the batch; uniform sampling over many
    # combinations rarely produces any.
    combos_per_batch: int | None = None

    def __post_init__(self):
        if self.total_steps < 0 or self.batch_size < 1:
            raise ValidationError("total_steps and batch_size must be nonnegative")
        for name in ("lambda_contrastive_d", "lambda_contrastive_g", "lambda_recon"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.temperature <= 0 or self.learning_rate <= 0:
            raise ValidationError("temperature and learning_rate must be > 0")
        contrastive = self.lambda_contrastive_d > 0 or self.lambda_contrastive_g > 0
        if contrastive and self.batch_size < 2:
            raise ValidationError(
                "contrastive losses need batch_size >= 2 (pairs within the batch)"
            )
        if self.combos_per_batch is not None and not (
            1 <= self.combos_per_batch <= self.batch_size
        ):
            raise ValidationError(
                "combos_per_batch must lie in [1, batch_size] when set"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainingConfig":
        return cls(**data)


@dataclass
class LossReport:
    step: int
    d_adv: float
    d_contrastive: float
    d_recon: float
    g_adv: float
    g_contrastive: float

    def values(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in LOG_NAMES}


class TrainingDivergedError(NumericError):
    def __init__(self, step: int, metrics: dict[str, float]):
        super().__init__(f"non-finite loss at step {step}: {metrics}")
        self.step = step
        self.metrics = metrics


class ImageDataset:
    """In-memory image set with precomputed conditioning tensors."""

    def __init__(
        self,
        images: torch.Tensor,
        combos: list[AttributeCombination],
        schema: AttributeSchema,
    ):
        if images.ndim != 4 or images.shape[0] != len(combos):
            raise ValidationError("images and combinations must align")
        self.images = images.float()
        self.combos = combos
        labels = LabelBatch.from_combinations(combos, schema)
        self.onehot = labels.label_vectors.float()
        self.label_ids = labels.label_ids
        self.resolution = images.shape[-1]
        self.groups = [
            torch.nonzero(self.label_ids == uid, as_tuple=True)[0]
            for uid in torch.unique(self.label_ids)
        ]

    @classmethod
    def from_pairs(cls, pairs, schema: AttributeSchema) -> "ImageDataset":
        """Build from data_synth.load_dataset output."""
        if not pairs:
            raise ConfigurationError("dataset is empty")
        images = torch.from_numpy(np.stack([img for img, _ in pairs]))
        return cls(images, [combo for _, combo in pairs], schema)

    def __len__(self):
        return self.images.shape[0]

    def batch(self, idx: torch.Tensor):
        return self.images[idx], self.onehot[idx], self.label_ids[idx]


class GeneratorEma:
    """Exponential moving average of generator parameters (buffers copied live)."""

    def __init__(self, generator: Generator, decay: float):
        self.decay = decay
        self.module = copy.deepcopy(generator)
        self.module.eval()
        for p in self.module.parameters():
            p.requires_grad_(False)

    def update(self, generator: Generator) -> None:
        with torch.no_grad():
            for p_ema, p in zip(self.module.parameters(), generator.parameters()):
                p_ema.mul_(self.decay).add_(p, alpha=1.0 - self.decay)
            for b_ema, b in zip(self.module.buffers(), generator.buffers()):
                b_ema.copy_(b)


def sample_batch_indices(
    dataset: "ImageDataset", config: TrainingConfig, rng: torch.Generator
) -> torch.Tensor:
    """Draw one batch of dataset indices from the loop RNG.

    Uniform over samples by default; with combos_per_batch set, draws that
    many combination groups and splits the batch evenly across them.
    """
    if not config.combos_per_batch:
        return torch.randint(0, len(dataset), (config.batch_size,), generator=rng)
    k = min(config.combos_per_batch, len(dataset.groups))
    group_sel = torch.randint(0, len(dataset.groups), (k,), generator=rng)
    per, extra = divmod(config.batch_size, k)
    picked = []
    for j, gid in enumerate(group_sel.tolist()):
        members = dataset.groups[gid]
        take = per + (1 if j < extra else 0)
        pos = torch.randint(0, len(members), (take,), generator=rng)
        picked.append(members[pos])
    return torch.cat(picked)


def build_models(
    g_spec: GeneratorSpec, d_spec: DiscriminatorSpec, config: TrainingConfig
) -> tuple[Generator, Discriminator]:
    """Seeded construction so fixed-seed runs start from identical weights."""
    torch.manual_seed(config.seed)
    generator = Generator(g_spec)
    discriminator = Discriminator(d_spec, temperature=config.temperature)
    return generator, discriminator


def d_step(
    generator: Generator,
    discriminator: Discriminator,
    opt_d: torch.optim.Optimizer,
    images: torch.Tensor,
    onehot: torch.Tensor,
    label_ids: torch.Tensor,
    config: TrainingConfig,
    rng: torch.Generator,
) -> dict[str, float]:
    """One discriminator update; generator parameters are not touched."""
    b = images.shape[0]
    z = torch.randn(b, generator.spec.noise_dim, generator=rng)
    with torch.no_grad():
        fake = generator(z, onehot)

    with_recon = config.lambda_recon > 0
    offsets = sample_crop_offsets(b, rng) if with_recon else None
    out_real = discriminator(
        images, onehot, crop_offsets=offsets, with_reconstruction=with_recon
    )
    out_fake = discriminator(fake, onehot, with_reconstruction=False)

    d_adv = hinge_d_loss(out_real.scores, out_fake.scores)
    loss = d_adv
    d_con = d_rec = torch.tensor(0.0)
    if config.lambda_contrastive_d > 0:
        label_emb = discriminator.contrastive_head.project_labels(onehot)
        d_con = conditional_contrastive_loss(
            out_real.embeddings, label_ids, label_emb, config.temperature
        )
        loss = loss + config.lambda_contrastive_d * d_con
    if with_recon:
        d_rec = reconstruction_loss(images, out_real)
        loss = loss + config.lambda_recon * d_rec

    opt_d.zero_grad(set_to_none=True)
    loss.backward()
    opt_d.step()
    return {
        "d_adv": float(d_adv.detach()),
        "d_contrastive": float(d_con.detach()),
        "d_recon": float(d_rec.detach()),
    }


def g_step(
    generator: Generator,
    discriminator: Discriminator,
    opt_g: torch.optim.Optimizer,
    ema: GeneratorEma | None,
    onehot: torch.Tensor,
    label_ids: torch.Tensor,
    config: TrainingConfig,
    rng: torch.Generator,
) -> dict[str, float]:
    """One generator update through the frozen-in-step discriminator."""
    z = torch.randn(onehot.shape[0], generator.spec.noise_dim, generator=rng)
    fake = generator(z, onehot)
    out = discriminator(fake, onehot, with_reconstruction=False)

    g_adv = hinge_g_loss(out.scores)
    loss = g_adv
    g_con = torch.tensor(0.0)
    if config.lambda_contrastive_g > 0:
        label_emb = discriminator.contrastive_head.project_labels(onehot)
        g_con = conditional_contrastive_loss(
            out.embeddings, label_ids, label_emb, config.temperature
        )
        loss = loss + config.lambda_contrastive_g * g_con

    opt_g.zero_grad(set_to_none=True)
    loss.backward()
    opt_g.step()
    if ema is not None:
        ema.update(generator)
    return {"g_adv": float(g_adv.detach()), "g_contrastive": float(g_con.detach())}


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    reports: list[LossReport] = field(default_factory=list)


def train(
    dataset: ImageDataset,
    schema: AttributeSchema,
    g_spec: GeneratorSpec,
    d_spec: DiscriminatorSpec,
    config: TrainingConfig,
    run_dir: str | Path,
    resume_from: str | Path | None = None,
) -> TrainResult:
    """Run (or resume) alternating optimization for config.total_steps steps.

    Writes `metrics.log` (tab-separated step/name/value lines) and checkpoint
    archives under run_dir; returns the final checkpoint path and in-memory
    loss reports. Any non-finite loss aborts with the offending step.
    """
    if len(dataset) < 1:
        raise ConfigurationError("training dataset is empty (after filtering?)")
    if dataset.resolution != g_spec.output_resolution:
        raise ConfigurationError(
            f"dataset resolution {dataset.resolution} != generator output "
            f"{g_spec.output_resolution}"
        )
    if g_spec.attribute_dim != dataset.onehot.shape[1]:
        raise ConfigurationError(
            f"generator attribute_dim {g_spec.attribute_dim} != schema one-hot "
            f"width {dataset.onehot.shape[1]}"
        )

    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    log_path = run_dir / "metrics.log"

    generator, discriminator = build_models(g_spec, d_spec, config)
    opt_g = torch.optim.Adam(
        generator.parameters(), lr=config.learning_rate, betas=(config.beta1, config.beta2)
    )
    opt_d = torch.optim.Adam(
        discriminator.parameters(),
        lr=config.learning_rate,
        betas=(config.beta1, config.beta2),
    )
    ema = GeneratorEma(generator, config.ema_decay) if config.use_ema else None
    rng = torch.Generator().manual_seed(config.seed + 1)
    start_step = 0

    if resume_from is not None:
        payload = load_checkpoint(resume_from)
        generator.load_state_dict(payload["generator"])
        discriminator.load_state_dict(payload["discriminator"])
        if ema is not None and payload["ema_generator"] is not None:
            ema.module.load_state_dict(payload["ema_generator"])
        opt_g.load_state_dict(payload["opt_g"])
        opt_d.load_state_dict(payload["opt_d"])
        rng.set_state(payload["rng_state"])
        start_step = payload["step"]

    def _save(path: Path, step: int) -> Path:
        return save_checkpoint(
            path,
            step=step,
            generator=generator,
            discriminator=discriminator,
            ema_generator=ema.module if ema else None,
            opt_g=opt_g,
            opt_d=opt_d,
            rng_state=rng.get_state(),
            schema=schema,
            config=config.to_dict(),
        )

    reports: list[LossReport] = []
    mode = "a" if resume_from is not None else "w"
    previous_threads = torch.get_num_threads()
    if config.single_thread:
        torch.set_num_threads(1)
    try:
        _run_loop(
            dataset, config, generator, discriminator, opt_g, opt_d, ema, rng,
            start_step, log_path, mode, run_dir, _save, reports,
        )
    finally:
        torch.set_num_threads(previous_threads)

    final_path = _save(run_dir / "checkpoint_latest.pt", max(config.total_steps, start_step))
    return TrainResult(final_path, log_path, reports)


def _run_loop(
    dataset, config, generator, discriminator, opt_g, opt_d, ema, rng,
    start_step, log_path, mode, run_dir, _save, reports,
):
    with open(log_path, mode, encoding="utf-8") as log_file:
        for step in range(start_step + 1, config.total_steps + 1):
            idx = sample_batch_indices(dataset, config, rng)
            images, onehot, label_ids = dataset.batch(idx)
            try:
                metrics = d_step(
                    generator, discriminator, opt_d, images, onehot, label_ids, config, rng
                )
                metrics.update(
                    g_step(
                        generator, discriminator, opt_g, ema, onehot, label_ids, config, rng
                    )
                )
            except NumericError as exc:
                _save(run_dir / "checkpoint_diverged.pt", step)
                raise TrainingDivergedError(step, {"cause": str(exc)}) from exc
            if not all(np.isfinite(v) for v in metrics.values()):
                _save(run_dir / "checkpoint_diverged.pt", step)
                raise TrainingDivergedError(step, metrics)
            report = LossReport(step=step, **metrics)
            reports.append(report)
            if step % config.log_every == 0 or step == config.total_steps:
                for name, value in report.values().items():
                    log_file.write(f"{step}\t{name}\t{value:.8f}\n")
                log_file.flush()
            if config.checkpoint_every and step % config.checkpoint_every == 0:
                _save(run_dir / f"checkpoint_{step:07d}.pt", step)
