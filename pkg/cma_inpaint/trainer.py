# -*- coding: utf-8 -*-

"""
Alternating adversarial training, inference, ablations and the λ sweep.

Each step runs, on one batch:

1. the teacher pass (original image + caption) through the encoder,
2. the student pass (corrupted image + caption) through encoder and generator,
3. the D-step: hinge loss of both discriminators on real images vs. the
   detached restoration, backward, AdamW update of the discriminators,
4. the G-step: the weighted generator objective, backward, global-norm
   clipping, AdamW update of encoder and generator.

Teacher outputs are detached wherever they serve as distillation targets;
the word-patch alignment term is evaluated on the teacher pass and trains
the encoder through it. The sample order is a function of the step index,
so a run resumed from a checkpoint continues bit for bit.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import ValidationError
from tqdm import tqdm

from cma_inpaint import config, objectives, ops
from cma_inpaint.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from cma_inpaint.debug_logger import debug_logger
from cma_inpaint.discriminators import Discriminator, empirical_lipschitz, local_crops
from cma_inpaint.encoder import EncoderOutput, VLEncoder
from cma_inpaint.exceptions import (
    CheckpointError,
    CMAError,
    ConfigError,
    DimensionError,
    NumericError,
    format_validation_errors,
)
from cma_inpaint.generator import Generator, compose_output
from cma_inpaint.gradcheck import grad_check
from cma_inpaint.imageio import read_image, write_image
from cma_inpaint.loader import Batch, BatchLoader, BatchSchedule, make_batch
from cma_inpaint.masks import Mask, apply_mask, patch_mask
from cma_inpaint.metrics import evaluate_pairs, masked_l1, write_report_csv
from cma_inpaint.models import LossRecord, LossWeights, MetricReport, TrainConfig
from cma_inpaint.nn import Module, Parameter
from cma_inpaint.optim import AdamW, clip_grad_norm, lr_at
from cma_inpaint.patches import patchify
from cma_inpaint.settings import build_config, dump_config
from cma_inpaint.synth import SynthDataset
from cma_inpaint.tensor import Tensor, default_dtype, no_grad
from cma_inpaint.tokenizer import build_vocab, tokenize
from cma_inpaint.utils import derive_seed, generate_run_id, make_rng, parameter_fingerprint

# Sub-streams of the run seed
_STREAM_ENCODER = 0
_STREAM_GENERATOR = 1
_STREAM_D_GLOBAL = 2
_STREAM_D_LOCAL = 3
_STREAM_SCHEDULE = 4
_STREAM_VALIDATION = 5

LOSS_CSV = "loss.csv"
DIAGNOSTICS_CSV = "diagnostics.csv"
CHECKPOINT_DIR = "checkpoints"
FINAL_CHECKPOINT = "final.ckpt"
BEST_CHECKPOINT = "best.ckpt"


# ==================================================================================================
# State
# ==================================================================================================

@dataclass
class Networks:
    encoder: VLEncoder
    generator: Generator
    d_global: Discriminator
    d_local: Discriminator

    def named(self) -> Dict[str, Module]:
        return {
            "encoder": self.encoder,
            "generator": self.generator,
            "d_global": self.d_global,
            "d_local": self.d_local,
        }

    @property
    def generator_side(self) -> List[Module]:
        return [self.encoder, self.generator]

    @property
    def discriminator_side(self) -> List[Module]:
        return [self.d_global, self.d_local]


def build_networks(cfg: TrainConfig) -> Networks:
    """Builds all four networks; each draws its initialization from its own seed stream."""
    synth, enc = cfg.synth, cfg.encoder
    return Networks(
        encoder=VLEncoder(enc, make_rng(cfg.seed, _STREAM_ENCODER)),
        generator=Generator(
            cfg.generator, enc.hidden, enc.grid, synth.image_size, synth.channels,
            make_rng(cfg.seed, _STREAM_GENERATOR),
        ),
        d_global=Discriminator(
            cfg.discriminator, synth.image_size, synth.channels, make_rng(cfg.seed, _STREAM_D_GLOBAL)
        ),
        d_local=Discriminator(
            cfg.discriminator, cfg.discriminator.local_crop, synth.channels, make_rng(cfg.seed, _STREAM_D_LOCAL)
        ),
    )


def _prefixed(nets: Networks, names: Sequence[str]) -> Iterator[Tuple[str, Parameter]]:
    modules = nets.named()
    for prefix in names:
        for name, param in modules[prefix].named_parameters():
            yield f"{prefix}.{name}", param


@dataclass
class TrainState:
    """
    Everything a step mutates.

    Attributes:
        cfg: Run configuration
        nets: The four networks
        opt_g: AdamW over encoder + generator
        opt_d: AdamW over both discriminators
        step: Completed steps
        weights: Loss weights with the ablation applied
        check_isolation: Assert via parameter fingerprints that each update touches only its side
        best_masked_l1: Best validation masked-region L1 so far
        diagnostics: lr, grad_norm_g and masked_l1 of the last step
    """

    cfg: TrainConfig
    nets: Networks
    opt_g: AdamW
    opt_d: AdamW
    step: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    check_isolation: bool = True
    best_masked_l1: Optional[float] = None
    diagnostics: Dict[str, float] = field(default_factory=dict)


def init_state(cfg: TrainConfig) -> TrainState:
    nets = build_networks(cfg)
    kwargs = dict(betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps, weight_decay=cfg.weight_decay)
    state = TrainState(
        cfg=cfg,
        nets=nets,
        opt_g=AdamW(_prefixed(nets, ("encoder", "generator")), **kwargs),
        opt_d=AdamW(_prefixed(nets, ("d_global", "d_local")), **kwargs),
        weights=cfg.effective_weights(),
    )
    logger.info(
        f"[Trainer] Built networks: encoder {nets.encoder.num_parameters():,}, "
        f"generator {nets.generator.num_parameters():,}, D_global {nets.d_global.num_parameters():,}, "
        f"D_local {nets.d_local.num_parameters():,} parameters"
    )
    return state


# ==================================================================================================
# Checkpoints
# ==================================================================================================

def state_to_checkpoint(state: TrainState) -> Checkpoint:
    tensors: Dict[str, np.ndarray] = {}
    for prefix, module in state.nets.named().items():
        tensors.update({f"{prefix}.{name}": value for name, value in module.state_dict().items()})
    for prefix, optimizer in (("opt_g", state.opt_g), ("opt_d", state.opt_d)):
        tensors.update({f"{prefix}.{name}": value for name, value in optimizer.state_dict().items()})
    meta = {
        "app_version": config.APP_VERSION,
        "opt_g_t": state.opt_g.t,
        "opt_d_t": state.opt_d.t,
        "best_masked_l1": state.best_masked_l1,
    }
    return Checkpoint(
        step=state.step,
        config=state.cfg.model_dump(mode="json", by_alias=True),
        meta=meta,
        tensors=tensors,
    )


def config_from_checkpoint(ckpt: Checkpoint) -> TrainConfig:
    try:
        return TrainConfig.model_validate(ckpt.config)
    except ValidationError as exc:
        raise CheckpointError(f"checkpoint config is invalid:\n{format_validation_errors(exc.errors())}") from None


def state_from_checkpoint(ckpt: Checkpoint, cfg: Optional[TrainConfig] = None) -> TrainState:
    """
    Rebuilds a TrainState from a checkpoint.

    Args:
        ckpt: Loaded checkpoint
        cfg: Configuration to continue with (default: the checkpoint's own);
            network shapes must match the stored tensors

    Raises:
        CheckpointError: If tensors are missing or shapes disagree
    """
    state = init_state(cfg or config_from_checkpoint(ckpt))
    for prefix, module in state.nets.named().items():
        module.load_state_dict(ckpt.subset(prefix))
    state.opt_g.load_state_dict(ckpt.subset("opt_g"), ckpt.meta.get("opt_g_t", 0))
    state.opt_d.load_state_dict(ckpt.subset("opt_d"), ckpt.meta.get("opt_d_t", 0))
    state.step = ckpt.step
    state.best_masked_l1 = ckpt.meta.get("best_masked_l1")
    return state


# ==================================================================================================
# Forward passes and loss components
# ==================================================================================================

def _pad_mask(tokens: np.ndarray) -> np.ndarray:
    return np.asarray(tokens) == build_vocab().pad_id


def teacher_pass(nets: Networks, batch: Batch) -> EncoderOutput:
    """Encoder on the original image and caption (no patch is masked)."""
    no_mask = np.zeros(batch.patch_masks.shape, dtype=bool)
    return nets.encoder(batch.tokens, batch.patches_original, no_mask, pad_id=build_vocab().pad_id)


def student_pass(nets: Networks, batch: Batch, patches: Optional[Tensor] = None) -> Tuple[EncoderOutput, Tensor]:
    """Encoder on the corrupted image and caption, then the generator; returns (T̂, V̂) and I_r."""
    patches = batch.patches_corrupted if patches is None else patches
    encoded = nets.encoder(batch.tokens, patches, batch.patch_masks, pad_id=build_vocab().pad_id)
    return encoded, nets.generator(encoded.visual)


def discriminator_components(nets: Networks, cfg: TrainConfig, batch: Batch, fake: Tensor) -> Dict[str, Tensor]:
    real = Tensor(batch.images)
    size = cfg.discriminator.local_crop
    return {
        "g_adv_d": objectives.hinge_d(nets.d_global(real), nets.d_global(fake)),
        "l_adv_d": objectives.hinge_d(
            nets.d_local(local_crops(real, batch.masks, size)),
            nets.d_local(local_crops(fake, batch.masks, size)),
        ),
    }


def generator_components(
    nets: Networks,
    cfg: TrainConfig,
    batch: Batch,
    teacher: EncoderOutput,
    student: EncoderOutput,
    restored: Tensor,
) -> Dict[str, Tensor]:
    map_student = objectives.correlation_map(student.text, student.visual)
    map_teacher = objectives.correlation_map(teacher.text, teacher.visual)
    size = cfg.discriminator.local_crop
    return {
        "cmad": objectives.cmad_loss(map_student, map_teacher),
        "isd": objectives.isd_loss(teacher.visual, student.visual),
        "wpa": objectives.wpa_loss(teacher.visual, teacher.text, ~_pad_mask(batch.tokens), cfg.transport),
        "l1": objectives.l1_loss(restored, Tensor(batch.images)),
        "g_adv_g": objectives.hinge_g(nets.d_global(restored)),
        "l_adv_g": objectives.hinge_g(nets.d_local(local_crops(restored, batch.masks, size))),
    }


def _assert_untouched(before: str, modules: List[Module], phase: str) -> None:
    if parameter_fingerprint(modules) != before:
        raise CMAError(f"{phase} modified parameters it does not own")


def train_step(batch: Batch, state: TrainState) -> LossRecord:
    """
    One D-step followed by one G-step on the same batch.

    Raises:
        NumericError: If any loss component is NaN/Inf (carries component and step)
    """
    if len(batch) == 0:
        raise ValueError("train_step: empty batch")
    nets, cfg, w = state.nets, state.cfg, state.weights
    step = state.step + 1
    lr = lr_at(step, cfg.lr, cfg.warmup_steps)
    try:
        if w.alpha > 0:
            teacher = teacher_pass(nets, batch)
        else:
            with no_grad():
                teacher = teacher_pass(nets, batch)
        student, restored = student_pass(nets, batch)

        # D-step
        g_before = parameter_fingerprint(nets.generator_side) if state.check_isolation else ""
        state.opt_d.zero_grad()
        d_parts = discriminator_components(nets, cfg, batch, restored.detach())
        loss_d = objectives.total_d(d_parts, w)
        loss_d.backward()
        state.opt_d.step(lr)
        if state.check_isolation:
            _assert_untouched(g_before, nets.generator_side, "D-step")

        # G-step
        d_before = parameter_fingerprint(nets.discriminator_side) if state.check_isolation else ""
        state.opt_g.zero_grad()
        g_parts = generator_components(nets, cfg, batch, teacher, student, restored)
        loss_g = objectives.total_g(g_parts, w)
        loss_g.backward()
        grad_norm = clip_grad_norm(state.opt_g.params, cfg.grad_clip)
        state.opt_g.step(lr)
        state.opt_d.zero_grad()
        if state.check_isolation:
            _assert_untouched(d_before, nets.discriminator_side, "G-step")

        components = {name: value.item() for name, value in {**g_parts, **d_parts}.items()}
        record = objectives.make_record(components, w)
    except NumericError as exc:
        exc.step = step
        raise

    state.step = step
    state.diagnostics = {
        "lr": lr,
        "grad_norm_g": grad_norm,
        "masked_l1": masked_l1(restored.data, batch.images, batch.masks),
    }
    return record


# ==================================================================================================
# Validation and evaluation
# ==================================================================================================

def validation_dataset(cfg: TrainConfig) -> SynthDataset:
    return SynthDataset(cfg.synth, derive_seed(cfg.seed, _STREAM_VALIDATION), n=cfg.synth.val_samples)


def _chunks(dataset: SynthDataset, cfg: TrainConfig) -> Iterator[Batch]:
    for start in range(0, len(dataset), cfg.batch_size):
        samples = [dataset[i] for i in range(start, min(start + cfg.batch_size, len(dataset)))]
        yield make_batch(samples, cfg.synth.patch_size, cfg.mask_mode, cfg.mask_area)


def restore_batch(nets: Networks, batch: Batch) -> np.ndarray:
    """Composed outputs Î for a batch (no tape)."""
    with no_grad():
        _, restored = student_pass(nets, batch)
    return compose_output(restored.data, batch.corrupted, batch.masks)


def validate(state: TrainState, dataset: SynthDataset) -> float:
    """Mean masked-region L1 of the composed outputs over the validation set."""
    errors: List[float] = []
    lipschitz: Optional[float] = None
    for batch in _chunks(dataset, state.cfg):
        composed = restore_batch(state.nets, batch)
        errors.extend(masked_l1(c, i, m) for c, i, m in zip(composed, batch.images, batch.masks))
        if lipschitz is None:
            lipschitz = empirical_lipschitz(state.nets.d_global, batch.images, composed)
    score = float(np.mean(errors))
    logger.info(
        f"[Trainer] Validation at step {state.step}: masked L1 {score:.5f}"
        + (f", D_global Lipschitz ratio {lipschitz:.4f}" if lipschitz is not None else "")
    )
    return score


def evaluate_state(state: TrainState, dataset: Optional[SynthDataset] = None) -> MetricReport:
    """Metric report of the composed outputs on the validation set (≥ 2 samples)."""
    dataset = dataset or validation_dataset(state.cfg)
    pairs = []
    for batch in _chunks(dataset, state.cfg):
        composed = restore_batch(state.nets, batch)
        for k, seed in enumerate(batch.seeds):
            pairs.append((str(seed), composed[k], batch.images[k], batch.masks[k]))
    return evaluate_pairs(pairs)


# ==================================================================================================
# Training loop
# ==================================================================================================

@dataclass
class TrainResult:
    state: TrainState
    final_checkpoint: Path
    loss_csv: Path
    diagnostics_csv: Path
    best_checkpoint: Optional[Path] = None


def _open_csv(path: Path, header: List[str], resume_step: Optional[int]):
    """Opens a per-step CSV; on resume, rows after resume_step (from an older run) are dropped."""
    kept: List[List[str]] = []
    if resume_step is not None and path.exists():
        with open(path, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        kept = [row for row in rows[1:] if row and int(row[0]) <= resume_step]
    handle = open(path, "w", newline="", encoding="utf-8")
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(kept)
    return handle, writer


def train(
    cfg: TrainConfig,
    out_dir: Union[str, Path],
    resume: Optional[Union[str, Path]] = None,
    workers: int = config.NUM_WORKERS,
    depth: int = config.PREFETCH_DEPTH,
) -> TrainResult:
    """
    Trains for cfg.total_steps steps, writing loss/diagnostic CSVs and checkpoints to out_dir.

    Args:
        cfg: Run configuration
        out_dir: Output directory
        resume: Checkpoint to continue from (its step count is kept; cfg sets the step budget)
        workers: Data-synthesis threads (0 = inline)
        depth: Prefetch queue depth

    Raises:
        NumericError: On a non-finite loss (debug capture is flushed first)
        CheckpointError: If the resume checkpoint does not match cfg
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    run_id = generate_run_id()
    (out_dir / "config.txt").write_text(dump_config(cfg), encoding="utf-8")

    state = state_from_checkpoint(load_checkpoint(resume), cfg) if resume else init_state(cfg)
    total = cfg.total_steps
    logger.info(f"[Trainer] Run {run_id}: steps {state.step + 1}..{total}, drop={cfg.drop or 'none'} -> {out_dir}")

    dataset = SynthDataset(cfg.synth, cfg.seed)
    schedule = BatchSchedule(len(dataset), cfg.batch_size, derive_seed(cfg.seed, _STREAM_SCHEDULE))
    loader = BatchLoader(
        dataset, schedule, cfg.synth.patch_size, cfg.mask_mode, cfg.mask_area, workers=workers, depth=depth
    )
    val_set = validation_dataset(cfg) if cfg.validate_every and cfg.synth.val_samples else None
    checkpoints = out_dir / CHECKPOINT_DIR
    best_path: Optional[Path] = out_dir / BEST_CHECKPOINT if val_set is not None else None

    resume_step = state.step if resume else None
    loss_file, loss_writer = _open_csv(out_dir / LOSS_CSV, config.LOSS_CSV_HEADER, resume_step)
    diag_file, diag_writer = _open_csv(out_dir / DIAGNOSTICS_CSV, config.DIAGNOSTICS_CSV_HEADER, resume_step)
    progress = tqdm(total=total, initial=state.step, desc="train", unit="step", disable=None)
    try:
        for index, batch in loader.iterate(state.step, total):
            debug_logger.prepare_new_step(index + 1)
            debug_logger.log_batch(batch.seeds, batch.captions)
            try:
                record = train_step(batch, state)
            except NumericError as exc:
                logger.error(f"[Trainer] Step {exc.step}: {exc} (component {exc.component})")
                debug_logger.flush_on_error(exc.component, str(exc))
                raise
            debug_logger.log_record(record.model_dump())
            debug_logger.discard_buffers()

            loss_writer.writerow(record.as_row(state.step))
            diag = state.diagnostics
            diag_writer.writerow(
                [state.step, repr(diag["lr"]), repr(float(diag["grad_norm_g"])), repr(float(diag["masked_l1"]))]
            )
            loss_file.flush()
            diag_file.flush()
            progress.update(1)
            progress.set_postfix(g=f"{record.total_g:.4f}", d=f"{record.total_d:.4f}", l1=f"{record.l1:.4f}")

            if val_set is not None and state.step % cfg.validate_every == 0:
                score = validate(state, val_set)
                if state.best_masked_l1 is None or score < state.best_masked_l1:
                    state.best_masked_l1 = score
                    save_checkpoint(best_path, state_to_checkpoint(state))
            if cfg.checkpoint_every and state.step % cfg.checkpoint_every == 0 and state.step < total:
                save_checkpoint(checkpoints / f"step-{state.step:06d}.ckpt", state_to_checkpoint(state))
    except OSError as exc:
        logger.error(f"[Trainer] I/O failure at step {state.step}: {exc}; last checkpoint in {checkpoints} is intact")
        raise
    finally:
        progress.close()
        loss_file.close()
        diag_file.close()

    final = save_checkpoint(out_dir / FINAL_CHECKPOINT, state_to_checkpoint(state))
    logger.info(f"[Trainer] Run {run_id} finished at step {state.step}")
    return TrainResult(
        state=state,
        final_checkpoint=final,
        loss_csv=out_dir / LOSS_CSV,
        diagnostics_csv=out_dir / DIAGNOSTICS_CSV,
        best_checkpoint=best_path if best_path is not None and best_path.exists() else None,
    )


def read_loss_csv(path: Union[str, Path]) -> List[Dict[str, float]]:
    """Loss CSV rows as dicts of floats (step included)."""
    with open(path, newline="", encoding="utf-8") as handle:
        return [{key: float(value) for key, value in row.items()} for row in csv.DictReader(handle)]


# ==================================================================================================
# Inference
# ==================================================================================================

def inpaint(ckpt: Checkpoint, image: np.ndarray, mask: Mask, text: str) -> np.ndarray:
    """
    Restores the masked region of one image from a checkpoint.

    Returns:
        Î = mask ⊙ I_r + (1 − mask) ⊙ I_corrupted, 3×H×W

    Raises:
        DimensionError: If the image or mask does not match the checkpoint's configuration
    """
    cfg = config_from_checkpoint(ckpt)
    synth = cfg.synth
    expected = (synth.channels, synth.image_size, synth.image_size)
    if image.shape != expected or mask.shape != expected[1:]:
        raise DimensionError(f"inpaint: checkpoint expects image {expected}, got {image.shape} with mask {mask.shape}")
    encoder = VLEncoder(cfg.encoder, make_rng(cfg.seed, _STREAM_ENCODER))
    generator = Generator(
        cfg.generator, cfg.encoder.hidden, cfg.encoder.grid, synth.image_size, synth.channels,
        make_rng(cfg.seed, _STREAM_GENERATOR),
    )
    encoder.load_state_dict(ckpt.subset("encoder"))
    generator.load_state_dict(ckpt.subset("generator"))
    vocab = build_vocab()
    tokens = np.asarray(tokenize(text, vocab, cfg.encoder.max_text_len), dtype=np.int64)
    corrupted = apply_mask(np.asarray(image, dtype=np.float32), mask)
    with no_grad():
        patches = patchify(corrupted, synth.patch_size)
        encoded = encoder(tokens, patches, patch_mask(mask, synth.patch_size), vocab.pad_id)
        restored = generator(encoded.visual)
    return compose_output(restored.data, corrupted, mask.grid)


def infer(
    checkpoint: Union[str, Path],
    image_path: Union[str, Path],
    mask: Mask,
    text: str,
    out_path: Union[str, Path],
) -> Path:
    """Reads an image, inpaints it with the checkpoint and writes Î to out_path."""
    restored = inpaint(load_checkpoint(checkpoint), read_image(image_path), mask, text)
    write_image(out_path, restored)
    logger.info(f"[Inpaint] Wrote {out_path} ({int(mask.grid.sum())} pixels restored)")
    return Path(out_path)


# ==================================================================================================
# Ablation and λ sweep
# ==================================================================================================

def ablation_name(drop: Sequence[str]) -> str:
    return "full" if not drop else "w/o " + "+".join(drop)


def ablate(cfg: TrainConfig, drop: Sequence[str], out_dir: Union[str, Path]) -> MetricReport:
    """
    Trains with the weights of the dropped components zeroed and evaluates on the validation set.

    Raises:
        ConfigError: On an unknown component name
    """
    try:
        cfg = cfg.model_copy(update={"drop": list(dict.fromkeys([*cfg.drop, *drop]))})
        cfg.effective_weights()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    logger.info(f"[Ablation] Training {ablation_name(cfg.drop)}")
    result = train(cfg, out_dir)
    return evaluate_state(result.state)


def sweep(cfg: TrainConfig, lambdas: Sequence[float], out_dir: Union[str, Path]) -> Dict[str, MetricReport]:
    """Trains and evaluates once per λ (applied to both distillation terms); writes sweep.csv."""
    out_dir = Path(out_dir)
    reports: Dict[str, MetricReport] = {}
    for lam in lambdas:
        values = cfg.model_dump(by_alias=True)
        values["loss"]["lambda"] = float(lam)
        run_cfg = build_config(values)
        name = f"lambda={lam:g}"
        logger.info(f"[Sweep] Training {name}")
        reports[name] = evaluate_state(train(run_cfg, out_dir / name.replace("=", "-")).state)
    write_report_csv(out_dir / "sweep.csv", reports)
    return reports


# ==================================================================================================
# Whole-graph gradient check
# ==================================================================================================

def graph_gradcheck(cfg: Optional[TrainConfig] = None, directions: int = 6, h: float = 1e-6, seed: int = 0) -> float:
    """
    Gradient check of the whole generator objective w.r.t. the corrupted patches.

    The objective (encoder -> generator -> every generator-side loss, with both
    discriminators in eval mode) is differentiated along `directions` random
    directions in 64-bit precision; residual gates are set to 0.5 so every
    branch carries gradient. The WPA term depends only on the teacher pass and
    is a constant here.

    Returns:
        Maximum relative error
    """
    cfg = cfg or build_config({"preset": "tiny"})
    rng = make_rng(seed)
    with default_dtype(np.float64):
        nets = build_networks(cfg)
        for module in nets.named().values():
            for name, param in module.named_parameters():
                if name.endswith("gate"):
                    param.data = np.full_like(param.data, 0.5)
        nets.d_global.eval()
        nets.d_local.eval()
        dataset = SynthDataset(cfg.synth, cfg.seed, n=cfg.batch_size)
        samples = [dataset[i] for i in range(len(dataset))]
        batch = make_batch(samples, cfg.synth.patch_size, cfg.mask_mode, cfg.mask_area)
        with no_grad():
            teacher = teacher_pass(nets, batch)
        base = batch.patches_corrupted.astype(np.float64)
        basis = rng.normal(size=(directions, base.size))
        weights = cfg.effective_weights()

        def objective(coefficients: Tensor) -> Tensor:
            offset = ops.matmul(ops.reshape(coefficients, (1, directions)), Tensor(basis))
            patches = ops.add(Tensor(base), ops.reshape(offset, base.shape))
            student, restored = student_pass(nets, batch, patches)
            parts = generator_components(nets, cfg, batch, teacher, student, restored)
            return objectives.total_g(parts, weights)

        error = grad_check(objective, Tensor(np.zeros(directions)), h=h)
    logger.info(f"[GradCheck] Full graph ({directions} directions, λ={weights.lam}): max relative error {error:.3e}")
    return error
