"""Checkpoint archives: parameters, optimizer and RNG state, plus the
architecture specs and schema needed to rebuild the networks standalone."""

from __future__ import annotations

from pathlib import Path

import torch

from .discriminator import Discriminator, DiscriminatorSpec
from .errors import DataError
from .generator import Generator, GeneratorSpec
from .schema import AttributeSchema

FORMAT_TAG = "attributegan-checkpoint-v1"


def save_checkpoint(
    path: str | Path,
    *,
    step: int,
    generator: Generator,
    discriminator: Discriminator,
    ema_generator: torch.nn.Module | None,
    opt_g: torch.optim.Optimizer,
    opt_d: torch.optim.Optimizer,
    rng_state: torch.Tensor,
    schema: AttributeSchema,
    config: dict,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format": FORMAT_TAG,
        "step": step,
        "generator_spec": generator.spec.to_dict(),
        "discriminator_spec": discriminator.spec.to_dict(),
        "schema": schema.to_dict(),
        "config": config,
        "generator": generator.state_dict(),
        "discriminator": discriminator.state_dict(),
        "ema_generator": ema_generator.state_dict() if ema_generator else None,
        "opt_g": opt_g.state_dict(),
        "opt_d": opt_d.state_dict(),
        "rng_state": rng_state,
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != FORMAT_TAG:
        raise DataError(f"{path}: not an {FORMAT_TAG} archive")
    return payload


def load_generator(path: str | Path, use_ema: bool = True):
    """Rebuild the generator from an archive; returns (module, schema).

    Prefers the EMA parameters when present unless use_ema is False. The
    module comes back in eval mode.
    """
    payload = load_checkpoint(path)
    spec = GeneratorSpec.from_dict(payload["generator_spec"])
    schema = AttributeSchema.from_dict(payload["schema"])
    generator = Generator(spec)
    state = payload["ema_generator"] if (use_ema and payload["ema_generator"]) else (
        payload["generator"]
    )
    generator.load_state_dict(state)
    generator.eval()
    return generator, schema
