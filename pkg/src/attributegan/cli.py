"""Command-line entry points: train, generate, sweep, evaluate, synth-data.

Exit codes: 0 success, 1 validation/configuration error, 2 runtime or numeric
error. Every command is deterministic given its seed and config, so repeated
invocations overwrite artifacts with identical bytes. Flags override config
file values; the ATTRIBUTEGAN_RUN_DIR environment variable supplies the
default run directory when neither a flag nor the config names one.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import yaml

from . import data_synth, evaluation
from .checkpoint import load_generator
from .contrastive import LabelBatch
from .discriminator import DiscriminatorSpec
from .errors import ConfigurationError, NumericError, ValidationError
from .generator import GeneratorSpec
from .imaging import float_to_uint8, image_grid, save_png
from .schema import (
    AttributeSchema,
    default_schema,
    encode_one_hot,
    filter_rare_combinations,
    load_schema,
    parse_levels,
    read_manifest,
)
from .training import ImageDataset, TrainingConfig, train

RUN_DIR_ENV = "ATTRIBUTEGAN_RUN_DIR"


@dataclass
class CommandResult:
    exit_code: int
    artifacts_written: list[Path] = field(default_factory=list)


def _load_yaml(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"config file not found: {path}")
    data = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: config must be a mapping")
    return data


def _resolve_schema(config: dict, base_dir: Path) -> AttributeSchema:
    ref = config.get("schema")
    if ref is None:
        return default_schema()
    if isinstance(ref, dict):
        return AttributeSchema.from_dict(ref)
    path = Path(ref)
    if not path.is_absolute():
        path = base_dir / path
    return load_schema(path)


def _resolve_run_dir(flag: str | None, config: dict) -> Path:
    if flag:
        return Path(flag)
    if config.get("run_dir"):
        return Path(config["run_dir"])
    env = os.environ.get(RUN_DIR_ENV)
    if env:
        return Path(env)
    return Path("runs") / "default"


def _wrap(fn, *args, **kwargs) -> CommandResult:
    """Map exceptions onto the 0/1/2 exit-code contract."""
    try:
        artifacts = fn(*args, **kwargs)
        return CommandResult(0, [Path(a) for a in artifacts])
    except ValidationError as exc:  # includes config/capacity/data errors
        print(f"error: {exc}", file=sys.stderr)
        return CommandResult(1)
    except (NumericError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return CommandResult(2)


# --- train ----------------------------------------------------------------------


def _train_impl(config_path: str, seed: int | None, out: str | None) -> list[Path]:
    config = _load_yaml(config_path)
    base_dir = Path(config_path).parent
    for key in ("manifest", "resolution"):
        if key not in config:
            raise ValidationError(f"train config is missing required field {key!r}")

    schema = _resolve_schema(config, base_dir)
    manifest_path = Path(config["manifest"])
    if not manifest_path.is_absolute():
        manifest_path = base_dir / manifest_path
    entries = read_manifest(manifest_path, schema)
    percentile = float(config.get("percentile_filter", 20.0))
    entries = filter_rare_combinations(entries, percentile)
    if not entries:
        raise ConfigurationError("no manifest entries survive percentile filtering")

    pairs = data_synth.load_entries(entries, manifest_path.parent)
    dataset = ImageDataset.from_pairs(pairs, schema)

    resolution = int(config["resolution"])
    g_spec = GeneratorSpec(
        output_resolution=resolution,
        attribute_dim=schema.total_onehot_dim,
        **config.get("generator", {}),
    )
    d_spec = DiscriminatorSpec(
        input_resolution=resolution,
        attribute_dim=schema.total_onehot_dim,
        **config.get("discriminator", {}),
    )
    training_config = TrainingConfig(**config.get("training", {}))
    if seed is not None:
        training_config.seed = seed
    run_dir = _resolve_run_dir(out, config)

    result = train(
        dataset,
        schema,
        g_spec,
        d_spec,
        training_config,
        run_dir,
        resume_from=config.get("resume_from"),
    )
    return [result.checkpoint_path, result.log_path]


def cmd_train(config_path: str, seed: int | None = None, out: str | None = None):
    return _wrap(_train_impl, config_path, seed, out)


# --- generate -------------------------------------------------------------------


def _generate_impl(
    checkpoint: str,
    attributes: str,
    count: int,
    seed: int,
    out_dir: str,
    use_ema: bool,
) -> list[Path]:
    if count < 1:
        raise ValidationError(f"count must be >= 1, got {count}")
    generator, schema = load_generator(checkpoint, use_ema=use_ema)
    combo = parse_levels(attributes, schema)
    onehot = torch.from_numpy(
        np.stack([encode_one_hot(combo, schema)] * count)
    ).float()
    z = torch.randn(
        count, generator.spec.noise_dim, generator=torch.Generator().manual_seed(seed)
    )
    images = generator.synthesize(z, onehot)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    levels_tag = "-".join(str(v) for v in combo.levels)
    for i in range(count):
        path = out / f"gen_{levels_tag}_{i:03d}.png"
        save_png(path, float_to_uint8(images[i].numpy()))
        written.append(path)
    return written


def cmd_generate(
    checkpoint: str,
    attributes: str,
    count: int = 1,
    seed: int = 0,
    out_dir: str = "generated",
    use_ema: bool = True,
):
    return _wrap(_generate_impl, checkpoint, attributes, count, seed, out_dir, use_ema)


# --- sweep ----------------------------------------------------------------------


def _sweep_impl(
    checkpoint: str,
    attribute_name: str,
    base_attributes: str,
    seed: int,
    out_path: str,
    rows: int,
    use_ema: bool,
) -> list[Path]:
    if rows < 1:
        raise ValidationError(f"rows must be >= 1, got {rows}")
    generator, schema = load_generator(checkpoint, use_ema=use_ema)
    attr_index = schema.attribute_index(attribute_name)
    base_combo = parse_levels(base_attributes, schema)
    cardinality = schema.attributes[attr_index].cardinality

    rng = torch.Generator().manual_seed(seed)
    tiles = []
    for _ in range(rows):
        z = torch.randn(1, generator.spec.noise_dim, generator=rng)
        sweep = generator.attribute_sweep(z, base_combo, attr_index, schema)
        tiles.extend(float_to_uint8(img.numpy()) for img in sweep)

    grid = image_grid(np.stack(tiles), rows=rows, cols=cardinality, border=2)
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_png(out, grid)
    return [out]


def cmd_sweep(
    checkpoint: str,
    attribute_name: str,
    base_attributes: str,
    seed: int = 0,
    out_path: str = "sweep.png",
    rows: int = 3,
    use_ema: bool = True,
):
    return _wrap(
        _sweep_impl, checkpoint, attribute_name, base_attributes, seed, out_path, rows, use_ema
    )


# --- evaluate -------------------------------------------------------------------


def _evaluate_impl(
    target: str,
    manifest: str,
    extractor_name: str,
    out_report: str,
    num_samples: int,
    seed: int,
    predictor_epochs: int,
) -> list[Path]:
    extractor = evaluation.get_extractor(extractor_name)
    target_path = Path(target)

    if target_path.is_dir():
        # A directory with its own manifest is evaluated as a fixed image set.
        eval_manifest = target_path / "manifest.txt"
        schema_file = target_path / "schema.yaml"
        schema = load_schema(schema_file) if schema_file.exists() else default_schema()
        eval_pairs = data_synth.load_dataset(eval_manifest, schema)
        generator = None
    else:
        generator, schema = load_generator(target_path)
        eval_pairs = None

    real_pairs = data_synth.load_dataset(manifest, schema)
    if len(real_pairs) < 2:
        raise ValidationError("need at least 2 real images for evaluation")
    real_images = torch.from_numpy(np.stack([img for img, _ in real_pairs]))
    real_combos = [combo for _, combo in real_pairs]

    rng = np.random.default_rng(seed)
    if generator is not None:
        n = min(num_samples, len(real_pairs))
        picks = rng.choice(len(real_pairs), size=n, replace=True)
        eval_combos = [real_combos[i] for i in picks]
        labels = LabelBatch.from_combinations(eval_combos, schema)
        z = torch.randn(
            n, generator.spec.noise_dim, generator=torch.Generator().manual_seed(seed)
        )
        chunks = [
            generator.synthesize(
                z[s : s + 32], labels.label_vectors[s : s + 32].float()
            )
            for s in range(0, n, 32)
        ]
        eval_images = torch.cat(chunks)
    else:
        eval_images = torch.from_numpy(np.stack([img for img, _ in eval_pairs]))
        eval_combos = [combo for _, combo in eval_pairs]
        if num_samples < len(eval_combos):
            picks = rng.choice(len(eval_combos), size=num_samples, replace=False)
            eval_images = eval_images[torch.from_numpy(picks)]
            eval_combos = [eval_combos[i] for i in picks]

    n_fid = min(len(real_pairs), eval_images.shape[0], num_samples)
    real_picks = rng.choice(len(real_pairs), size=n_fid, replace=False)
    fid = evaluation.compute_fid(
        real_images[torch.from_numpy(real_picks)], eval_images[:n_fid], extractor
    )

    predictor, _holdout = evaluation.train_attribute_predictor(
        real_images,
        real_combos,
        schema,
        split_seed=seed,
        epochs=predictor_epochs,
        input_resolution=min(64, real_images.shape[-1]),
    )
    errors = evaluation.attribute_error(eval_images, eval_combos, predictor, schema)

    report = Path(out_report)
    report.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# extractor: {extractor.name}",
        f"# real_samples: {n_fid}",
        f"# eval_samples: {eval_images.shape[0]}",
        f"fid\t{fid:.6f}",
    ]
    lines += [
        f"attribute_error.{attr.name}\t{err:.6f}"
        for attr, err in zip(schema.attributes, errors)
    ]
    report.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [report]


def cmd_evaluate(
    target: str,
    manifest: str,
    extractor_name: str = evaluation.PROXY_EXTRACTOR_NAME,
    out_report: str = "metrics_report.txt",
    num_samples: int = 256,
    seed: int = 0,
    predictor_epochs: int = 8,
):
    return _wrap(
        _evaluate_impl,
        target,
        manifest,
        extractor_name,
        out_report,
        num_samples,
        seed,
        predictor_epochs,
    )


# --- synth-data -----------------------------------------------------------------


def _synth_data_impl(
    config_path: str, out_dir: str | None, n_per_combination: int | None, seed: int | None
) -> list[Path]:
    config = _load_yaml(config_path)
    base_dir = Path(config_path).parent
    schema = _resolve_schema(config, base_dir)

    if "resolution" not in config:
        raise ValidationError("synth config is missing required field 'resolution'")
    resolution = int(config["resolution"])
    if "level_params" in config:
        synth_config = data_synth.SyntheticConfig(
            resolution=resolution,
            level_params=config["level_params"],
            **{
                k: config[k]
                for k in (
                    "blob_radius",
                    "min_spacing",
                    "aspect",
                    "nucleolus_fraction",
                    "background_seed",
                )
                if k in config
            },
        )
    else:
        synth_config = data_synth.SyntheticConfig.default(resolution, schema)

    n = n_per_combination if n_per_combination is not None else int(
        config.get("n_per_combination", 4)
    )
    used_seed = seed if seed is not None else int(config.get("seed", 0))
    out = Path(out_dir) if out_dir else Path(config.get("out_dir", "synth_data"))

    combos = None
    if "combinations" in config:
        combos = [
            parse_levels(",".join(str(v) for v in c), schema)
            for c in config["combinations"]
        ]
    manifest_path, _entries = data_synth.generate_dataset(
        synth_config, schema, n, used_seed, out, combinations=combos
    )
    return [manifest_path]


def cmd_synth_data(
    config_path: str,
    out_dir: str | None = None,
    n_per_combination: int | None = None,
    seed: int | None = None,
):
    return _wrap(_synth_data_impl, config_path, out_dir, n_per_combination, seed)


# --- argparse wiring --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="attributegan",
        description="Multi-attribute conditional GAN: training, generation, metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a YAML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.add_argument("--out", default=None, help="override run directory")

    p = sub.add_parser("generate", help="generate images for one combination")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--attributes", required=True, help="comma-separated levels")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="generated")
    p.add_argument("--no-ema", action="store_true", help="use raw (non-EMA) weights")

    p = sub.add_parser("sweep", help="one-attribute sweep grid image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--attribute", required=True, help="attribute name to sweep")
    p.add_argument("--base-attributes", required=True, help="comma-separated levels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, default=3, help="noise samples per grid")
    p.add_argument("--out", default="sweep.png")
    p.add_argument("--no-ema", action="store_true")

    p = sub.add_parser("evaluate", help="FID + per-attribute error report")
    p.add_argument("--checkpoint", required=True, help="checkpoint file or image dir")
    p.add_argument("--manifest", required=True, help="real-image manifest")
    p.add_argument("--extractor", default=evaluation.PROXY_EXTRACTOR_NAME)
    p.add_argument("--num-samples", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predictor-epochs", type=int, default=8)
    p.add_argument("--out", default="metrics_report.txt")

    p = sub.add_parser("synth-data", help="render a synthetic attribute dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--n-per-combination", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "train":
        result = cmd_train(args.config, args.seed, args.out)
    elif args.command == "generate":
        result = cmd_generate(
            args.checkpoint, args.attributes, args.count, args.seed, args.out,
            use_ema=not args.no_ema,
        )
    elif args.command == "sweep":
        result = cmd_sweep(
            args.checkpoint, args.attribute, args.base_attributes, args.seed,
            args.out, args.rows, use_ema=not args.no_ema,
        )
    elif args.command == "evaluate":
        result = cmd_evaluate(
            args.checkpoint, args.manifest, args.extractor, args.out,
            args.num_samples, args.seed, args.predictor_epochs,
        )
    else:
        result = cmd_synth_data(args.config, args.out, args.n_per_combination, args.seed)
    for artifact in result.artifacts_written:
        print(artifact)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
