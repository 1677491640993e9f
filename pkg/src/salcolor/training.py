"""Two-phase training: warm-up on pixel and attention terms, then adversarial.

Stage 1 optimizes the generator alone with L1 + weighted attention at a
fixed learning rate. Stage 2 alternates critic and generator updates with
the full objective; its learning rate halves on a fixed epoch period.
Checkpoints are directories holding the weight archives, a manifest
(stage, epoch, step, config hash, RNG state), and the loss log, written
manifest-last so a complete manifest marks a complete checkpoint. Given
identical config and seed, loss logs are bit-identical across runs, and
resuming from a checkpoint continues the uninterrupted sequence exactly.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .config import RunConfig, TrainConfig, config_hash, config_to_dict, run_config_from_dict
from .critic import PatchCritic
from .data import TrainingSample, stack_samples
from .features import FeatureExtractor
from .generator import Generator
from .imageops import apply_saliency_weight
from .losses import (
    WGAN,
    attention_loss,
    critic_loss,
    generator_adv_loss,
    gradient_penalty,
    perceptual_loss,
    pixel_loss,
    scalar,
    total_generator_loss,
)
from .weights import init_parameters, load_global_encoder_weights

log = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = [
    "step", "l1", "attention", "adv_g", "perceptual", "total", "adv_d", "gp_c", "gp_a", "lr",
]

MANIFEST_NAME = "manifest.json"
LOSSES_NAME = "losses.csv"


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss is observed; carries the diagnostic path."""

    def __init__(self, message: str, checkpoint_path: Path | None = None):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


@dataclass
class Checkpoint:
    path: Path
    stage: int
    epoch: int
    step: int
    config_hash: str


def lr_schedule(stage: int, epoch: int, tc: TrainConfig | None = None) -> float:
    """Learning rate for (stage, epoch-in-stage): fixed in stage 1, halved on a
    fixed period in stage 2."""
    tc = tc or TrainConfig()
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    if stage == 1:
        return tc.lr_stage1
    if stage == 2:
        return tc.lr_stage2_initial * 0.5 ** (epoch // tc.lr_halving_period)
    raise ValueError(f"stage must be 1 or 2, got {stage}")


def add_input_noise(
    x: torch.Tensor, std: float, rng: torch.Generator | int | None = None
) -> torch.Tensor:
    """Add zero-mean Gaussian noise; the result is intentionally not re-clamped."""
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0:
        return x
    if isinstance(rng, int):
        rng = torch.Generator(device=x.device).manual_seed(rng)
    noise = torch.randn(x.shape, generator=rng, dtype=x.dtype, device=x.device)
    return x + std * noise


def epoch_permutation(seed: int, stage: int, epoch: int, n: int) -> np.ndarray:
    """Sample order for one epoch, a pure function of (seed, stage, epoch)."""
    return np.random.default_rng([seed, stage, epoch]).permutation(n)


def _derive_seed(seed: int, tag: int) -> int:
    return (int(seed) * 1_000_003 + tag) % (2 ** 63 - 1)


def _batches(n: int, batch_size: int, seed: int, stage: int, epoch: int):
    order = epoch_permutation(seed, stage, epoch, n)
    for start in range(0, n, batch_size):
        yield [int(i) for i in order[start:start + batch_size]]


# ---------------------------------------------------------------------------
# checkpoint plumbing


def save_checkpoint(
    directory: str | Path,
    *,
    stage: int,
    epoch: int,
    step: int,
    config: RunConfig,
    modules: dict[str, nn.Module],
    optimizers: dict[str, torch.optim.Optimizer],
    rng: torch.Generator,
    loss_rows: list[dict],
) -> Checkpoint:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, module in modules.items():
        torch.save(module.state_dict(), directory / f"{name}.pt")
    for name, opt in optimizers.items():
        torch.save(opt.state_dict(), directory / f"optim_{name}.pt")
    _write_loss_rows(directory / LOSSES_NAME, loss_rows)
    manifest = {
        "stage": stage,
        "epoch": epoch,
        "step": step,
        "config_hash": config_hash(config),
        "config": config_to_dict(config),
        "rng_state": rng.get_state().numpy().tobytes().hex(),
        "modules": sorted(modules),
        "optimizers": sorted(optimizers),
    }
    # manifest is written last: its presence marks a complete checkpoint
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return Checkpoint(
        path=directory, stage=stage, epoch=epoch, step=step, config_hash=manifest["config_hash"]
    )


def _write_loss_rows(path: Path, rows: list[dict]) -> None:
    lines = [",".join(TRAIN_LOG_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                str(int(row["step"])) if col == "step" else repr(float(row[col]))
                for col in TRAIN_LOG_COLUMNS
            )
        )
    path.write_text("\n".join(lines) + "\n")


def read_loss_rows(path: str | Path) -> list[dict]:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    if header != TRAIN_LOG_COLUMNS:
        raise ValueError(f"unexpected loss log columns in {path}: {header}")
    rows = []
    for line in lines[1:]:
        parts = line.split(",")
        row = {col: (int(v) if col == "step" else float(v)) for col, v in zip(header, parts)}
        rows.append(row)
    return rows


def read_manifest(directory: str | Path) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {path}")
    return json.loads(path.read_text())


def _check_hash(manifest: dict, config: RunConfig, where: str) -> None:
    current = config_hash(config)
    if manifest["config_hash"] != current:
        raise ValueError(
            f"config hash mismatch against checkpoint {where}: "
            f"checkpoint {manifest['config_hash'][:12]}.. vs current {current[:12]}.. "
            "(refusing to continue with a different configuration)"
        )


def _rng_from_hex(state_hex: str) -> torch.Generator:
    rng = torch.Generator()
    raw = np.frombuffer(bytes.fromhex(state_hex), dtype=np.uint8).copy()
    rng.set_state(torch.from_numpy(raw))
    return rng


def _load_module(directory: Path, name: str, module: nn.Module) -> None:
    path = directory / f"{name}.pt"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint is missing weights archive {path.name}")
    module.load_state_dict(torch.load(path, weights_only=True))


def _load_optimizer(directory: Path, name: str, opt: torch.optim.Optimizer) -> None:
    path = directory / f"optim_{name}.pt"
    if not path.exists():
        raise FileNotFoundError(f"checkpoint is missing optimizer archive {path.name}")
    opt.load_state_dict(torch.load(path, weights_only=True))


def load_generator_from_checkpoint(directory: str | Path) -> tuple[Generator, RunConfig]:
    """Rebuild the generator recorded in a checkpoint, in eval mode."""
    directory = Path(directory)
    manifest = read_manifest(directory)
    config = run_config_from_dict(manifest["config"])
    gen = Generator(config.effective_generator())
    _load_module(directory, "generator", gen)
    gen.eval()
    return gen, config


# ---------------------------------------------------------------------------
# stages


def _build_generator(config: RunConfig) -> Generator:
    tc = config.training
    gen = Generator(config.effective_generator())
    init_parameters(gen, tc.seed)
    if (
        tc.pretrained_global
        and tc.global_weights_manifest
        and gen.global_encoder is not None
    ):
        load_global_encoder_weights(gen, tc.global_weights_manifest)
    return gen


def _adam(params, lr: float, tc: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(params, lr=lr, betas=(tc.adam_beta1, tc.adam_beta2))


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for group in opt.param_groups:
        group["lr"] = lr


def _finite(values: dict) -> bool:
    return all(math.isfinite(v) for k, v in values.items() if k != "step")


def _abort_diverged(
    out_dir: Path, step: int, row: dict, config, modules, optimizers, rng, rows, stage, epoch
) -> None:
    diag = out_dir / "diagnostic_nan"
    save_checkpoint(
        diag, stage=stage, epoch=epoch, step=step, config=config,
        modules=modules, optimizers=optimizers, rng=rng, loss_rows=rows,
    )
    bad = {k: v for k, v in row.items() if k != "step" and not math.isfinite(v)}
    raise TrainingDiverged(
        f"non-finite loss at step {step}: {bad}; diagnostic checkpoint at {diag}",
        checkpoint_path=diag,
    )


def train_stage1(
    config: RunConfig,
    samples: list[TrainingSample],
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    stop_after_epoch: int | None = None,
) -> Checkpoint:
    """Warm-up phase: generator only, pixel + attention objective."""
    config.validate()
    if not samples:
        raise ValueError("no training samples")
    tc = config.training
    weights = config.loss_weights
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir) / "stage1"
    ckpt_dir = out / "checkpoint"

    gen = _build_generator(config)
    opt = _adam(gen.parameters(), tc.lr_stage1, tc)
    rng = torch.Generator().manual_seed(_derive_seed(tc.seed, 1))
    rows: list[dict] = []
    start_epoch = 0
    step = 0

    if resume_from is not None:
        manifest = read_manifest(resume_from)
        _check_hash(manifest, config, str(resume_from))
        if manifest["stage"] != 1:
            raise ValueError(f"checkpoint at {resume_from} is stage {manifest['stage']}, not 1")
        resume_dir = Path(resume_from)
        _load_module(resume_dir, "generator", gen)
        _load_optimizer(resume_dir, "generator", opt)
        rng = _rng_from_hex(manifest["rng_state"])
        rows = read_loss_rows(resume_dir / LOSSES_NAME)
        start_epoch = manifest["epoch"]
        step = manifest["step"]

    end_epoch = tc.stage1_epochs
    if stop_after_epoch is not None:
        end_epoch = min(end_epoch, stop_after_epoch)

    modules = {"generator": gen}
    optimizers = {"generator": opt}
    gen.train()
    epoch = start_epoch
    for epoch in range(start_epoch, end_epoch):
        lr = lr_schedule(1, epoch, tc)
        _set_lr(opt, lr)
        for batch in _batches(len(samples), tc.batch_size, tc.seed, 1, epoch):
            gray, color_gt, sal_gt = stack_samples([samples[i] for i in batch])
            x = add_input_noise(gray, tc.input_noise_std, rng)
            color, sal = gen(x)
            l1 = pixel_loss(color, color_gt, tc.pixel_mode)
            att = attention_loss(color, sal, color_gt, sal_gt) if tc.use_attention else 0.0
            bd = total_generator_loss(l1, 0.0, att, 0.0, weights, stage=1)
            step += 1
            row = {
                "step": step,
                "l1": scalar(bd.l1), "attention": scalar(bd.attention),
                "adv_g": 0.0, "perceptual": 0.0, "total": scalar(bd.total),
                "adv_d": 0.0, "gp_c": 0.0, "gp_a": 0.0, "lr": lr,
            }
            rows.append(row)
            if not _finite(row):
                _abort_diverged(out, step, row, config, modules, optimizers, rng, rows, 1, epoch)
            opt.zero_grad()
            bd.total.backward()
            opt.step()
        save_checkpoint(
            ckpt_dir, stage=1, epoch=epoch + 1, step=step, config=config,
            modules=modules, optimizers=optimizers, rng=rng, loss_rows=rows,
        )
        log.info("stage 1 epoch %d/%d done (step %d)", epoch + 1, end_epoch, step)

    final_epoch = max(start_epoch, end_epoch)
    return save_checkpoint(
        ckpt_dir, stage=1, epoch=final_epoch, step=step, config=config,
        modules=modules, optimizers=optimizers, rng=rng, loss_rows=rows,
    )


def train_stage2(
    config: RunConfig,
    samples: list[TrainingSample],
    init_from: str | Path | None = None,
    from_scratch: bool = False,
    out_dir: str | Path | None = None,
    resume_from: str | Path | None = None,
    stop_after_epoch: int | None = None,
) -> Checkpoint:
    """Adversarial phase: alternating critic and generator updates."""
    config.validate()
    if not samples:
        raise ValueError("no training samples")
    if resume_from is None and init_from is None and not from_scratch:
        raise ValueError(
            "stage 2 needs a stage-1 checkpoint (init_from) or from_scratch=True"
        )
    tc = config.training
    weights = config.loss_weights
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir) / "stage2"
    ckpt_dir = out / "checkpoint"

    gen = _build_generator(config)
    use_da = tc.use_gan and tc.use_attention
    critic_color = PatchCritic(config.critic) if tc.use_gan else None
    critic_weighted = PatchCritic(config.critic) if use_da else None
    if critic_color is not None:
        init_parameters(critic_color, _derive_seed(tc.seed, 21))
    if critic_weighted is not None:
        init_parameters(critic_weighted, _derive_seed(tc.seed, 22))
    extractor = FeatureExtractor(config.perceptual) if tc.use_perceptual else None

    opt_g = _adam(gen.parameters(), tc.lr_stage2_initial, tc)
    modules = {"generator": gen}
    optimizers = {"generator": opt_g}
    if critic_color is not None:
        opt_dc = _adam(critic_color.parameters(), tc.lr_stage2_initial, tc)
        modules["critic_color"] = critic_color
        optimizers["critic_color"] = opt_dc
    if critic_weighted is not None:
        opt_da = _adam(critic_weighted.parameters(), tc.lr_stage2_initial, tc)
        modules["critic_weighted"] = critic_weighted
        optimizers["critic_weighted"] = opt_da

    rng = torch.Generator().manual_seed(_derive_seed(tc.seed, 2))
    rows: list[dict] = []
    start_epoch = 0
    step = 0

    if resume_from is not None:
        manifest = read_manifest(resume_from)
        _check_hash(manifest, config, str(resume_from))
        if manifest["stage"] != 2:
            raise ValueError(f"checkpoint at {resume_from} is stage {manifest['stage']}, not 2")
        resume_dir = Path(resume_from)
        for name, module in modules.items():
            _load_module(resume_dir, name, module)
        for name, opt in optimizers.items():
            _load_optimizer(resume_dir, name, opt)
        rng = _rng_from_hex(manifest["rng_state"])
        rows = read_loss_rows(resume_dir / LOSSES_NAME)
        start_epoch = manifest["epoch"]
        step = manifest["step"]
    elif init_from is not None:
        manifest = read_manifest(init_from)
        _check_hash(manifest, config, str(init_from))
        if manifest["stage"] != 1:
            raise ValueError(
                f"stage-2 init expects a stage-1 checkpoint, got stage {manifest['stage']}"
            )
        _load_module(Path(init_from), "generator", gen)

    end_epoch = tc.stage2_epochs
    if stop_after_epoch is not None:
        end_epoch = min(end_epoch, stop_after_epoch)

    gen.train()
    if critic_color is not None:
        critic_color.train()
    if critic_weighted is not None:
        critic_weighted.train()

    for epoch in range(start_epoch, end_epoch):
        lr = lr_schedule(2, epoch, tc)
        for opt in optimizers.values():
            _set_lr(opt, lr)
        for batch in _batches(len(samples), tc.batch_size, tc.seed, 2, epoch):
            gray, color_gt, sal_gt = stack_samples([samples[i] for i in batch])
            x = add_input_noise(gray, tc.input_noise_std, rng)

            adv_d_val = gp_c_val = gp_a_val = 0.0
            if critic_color is not None:
                for _ in range(tc.critic_steps_per_gen_step):
                    with torch.no_grad():
                        fake_color, fake_sal = gen(x)
                    dc_real = critic_color(color_gt)
                    dc_fake = critic_color(fake_color)
                    da_real = da_fake = None
                    if critic_weighted is not None:
                        real_w = apply_saliency_weight(color_gt, sal_gt)
                        fake_w = apply_saliency_weight(fake_color, fake_sal)
                        da_real = critic_weighted(real_w)
                        da_fake = critic_weighted(fake_w)
                    if tc.adv_mode == WGAN:
                        gp_c = gradient_penalty(
                            critic_color, color_gt, fake_color, weights.gp_lambda, rng
                        )
                        gp_a = (
                            gradient_penalty(
                                critic_weighted, real_w, fake_w, weights.gp_lambda, rng
                            )
                            if critic_weighted is not None
                            else torch.zeros(())
                        )
                    else:
                        gp_c = torch.zeros(())
                        gp_a = torch.zeros(())
                    d_total = critic_loss(
                        dc_real, dc_fake, da_real, da_fake, gp_c, gp_a, tc.adv_mode
                    )
                    for name in ("critic_color", "critic_weighted"):
                        if name in optimizers:
                            optimizers[name].zero_grad()
                    d_total.backward()
                    for name in ("critic_color", "critic_weighted"):
                        if name in optimizers:
                            optimizers[name].step()
                    gp_c_val = scalar(gp_c)
                    gp_a_val = scalar(gp_a)
                    adv_d_val = scalar(d_total) - gp_c_val - gp_a_val

            color, sal = gen(x)
            l1 = pixel_loss(color, color_gt, tc.pixel_mode)
            att = attention_loss(color, sal, color_gt, sal_gt) if tc.use_attention else 0.0
            perc = perceptual_loss(extractor, color, color_gt) if extractor is not None else 0.0
            if critic_color is not None:
                color_scores = critic_color(color)
                weighted_scores = (
                    critic_weighted(apply_saliency_weight(color, sal))
                    if critic_weighted is not None
                    else None
                )
                adv_g = generator_adv_loss(color_scores, weighted_scores, tc.adv_mode)
            else:
                adv_g = 0.0
            bd = total_generator_loss(l1, adv_g, att, perc, weights, stage=2)
            step += 1
            row = {
                "step": step,
                "l1": scalar(bd.l1), "attention": scalar(bd.attention),
                "adv_g": scalar(bd.adv_g), "perceptual": scalar(bd.perceptual),
                "total": scalar(bd.total),
                "adv_d": adv_d_val, "gp_c": gp_c_val, "gp_a": gp_a_val, "lr": lr,
            }
            rows.append(row)
            if not _finite(row):
                _abort_diverged(out, step, row, config, modules, optimizers, rng, rows, 2, epoch)
            opt_g.zero_grad()
            bd.total.backward()
            opt_g.step()
        save_checkpoint(
            ckpt_dir, stage=2, epoch=epoch + 1, step=step, config=config,
            modules=modules, optimizers=optimizers, rng=rng, loss_rows=rows,
        )
        log.info("stage 2 epoch %d/%d done (step %d)", epoch + 1, end_epoch, step)

    final_epoch = max(start_epoch, end_epoch)
    return save_checkpoint(
        ckpt_dir, stage=2, epoch=final_epoch, step=step, config=config,
        modules=modules, optimizers=optimizers, rng=rng, loss_rows=rows,
    )
