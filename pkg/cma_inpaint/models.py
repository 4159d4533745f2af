# -*- coding: utf-8 -*-

"""
Pydantic models for run configuration and run records.

Configuration models are strict about unknown keys (a typo in a config
file is an error, not a silently ignored setting). Defaults are the
desk-scale settings; the `full` preset in `cma_inpaint.settings`
overrides the optimizer and width values with the full-scale ones.
"""

import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Loss components that an ablation may drop; "adv" is shorthand for both adversarial terms
ABLATION_COMPONENTS: Tuple[str, ...] = ("cmad", "isd", "wpa", "recon", "g_adv", "l_adv")


def _split_csv(value):
    """Accepts "a,b,c" or a single scalar where a list is expected."""
    if isinstance(value, str):
        return [part.strip() for part in value.split(",") if part.strip()]
    if isinstance(value, (int, float)):
        return [value]
    return value


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# ==================================================================================================
# Configuration
# ==================================================================================================

class SynthConfig(_StrictModel):
    """
    Synthetic captioned-shapes dataset.

    Attributes:
        image_size: Height and width of the square images (32 or 64)
        channels: Image channels (RGB)
        patch_size: Transformer patch side; must divide image_size
        min_shapes: Fewest shapes per image
        max_shapes: Most shapes per image
        max_seq_len: Caption length after tokenization (CLS + words + PAD)
        n_samples: Training samples
        val_samples: Held-out samples for validation-based model selection
    """
    image_size: int = 64
    channels: int = 3
    patch_size: int = Field(default=8, ge=1)
    min_shapes: int = Field(default=1, ge=1, le=3)
    max_shapes: int = Field(default=3, ge=1, le=3)
    max_seq_len: int = Field(default=16, ge=1)
    n_samples: int = Field(default=500, ge=1)
    val_samples: int = Field(default=32, ge=0)

    @field_validator("image_size")
    @classmethod
    def _supported_size(cls, value: int) -> int:
        if value not in (32, 64):
            raise ValueError("image_size must be 32 or 64")
        return value

    @field_validator("channels")
    @classmethod
    def _rgb_only(cls, value: int) -> int:
        if value != 3:
            raise ValueError("the shapes dataset is RGB, channels must be 3")
        return value

    @model_validator(mode="after")
    def _check_geometry(self) -> "SynthConfig":
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.min_shapes > self.max_shapes:
            raise ValueError(f"min_shapes {self.min_shapes} exceeds max_shapes {self.max_shapes}")
        return self

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2


class EncoderConfig(_StrictModel):
    """Joint vision-and-language transformer sizes."""
    hidden: int = Field(default=128, ge=1)
    layers: int = Field(default=4, ge=0)
    heads: int = Field(default=4, ge=1)
    ffn: int = Field(default=512, ge=1)
    patch_size: int = Field(default=8, ge=1)
    max_text_len: int = Field(default=16, ge=1)
    num_patches: int = Field(default=64, ge=1)
    vocab_size: int = Field(default=64, ge=3)
    channels: int = Field(default=3, ge=1)

    @model_validator(mode="after")
    def _check_shapes(self) -> "EncoderConfig":
        if self.hidden % self.heads:
            raise ValueError(f"hidden {self.hidden} is not divisible by heads {self.heads}")
        side = math.isqrt(self.num_patches)
        if side * side != self.num_patches:
            raise ValueError(f"num_patches {self.num_patches} is not a perfect square")
        return self

    @property
    def grid(self) -> int:
        return math.isqrt(self.num_patches)

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels


class GeneratorConfig(_StrictModel):
    """
    Residual generator widths.

    skip_stage is the upsampling stage (0-based) that receives the projected
    prior grid; None selects the stage whose resolution equals the grid.
    """
    down_channels: Tuple[int, int, int, int, int] = (64, 96, 128, 128, 128)
    down_strides: Tuple[int, int, int, int, int] = (1, 2, 1, 2, 1)
    up_channels: Tuple[int, int, int, int, int] = (128, 128, 128, 96, 64)
    skip_channels: int = Field(default=32, ge=1)
    skip_stage: Optional[int] = Field(default=None, ge=0, le=4)

    @field_validator("down_channels", "down_strides", "up_channels", mode="before")
    @classmethod
    def _split_lists(cls, value):
        return _split_csv(value)

    @field_validator("down_strides")
    @classmethod
    def _strides(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(s not in (1, 2) for s in value):
            raise ValueError("down_strides entries must be 1 or 2")
        return value

    @property
    def downscale(self) -> int:
        return math.prod(self.down_strides)


class DiscriminatorConfig(_StrictModel):
    """Global/local discriminator widths and the local crop resolution."""
    channels: Tuple[int, int, int, int, int] = (32, 64, 128, 128, 128)
    local_crop: int = Field(default=32, ge=1)
    power_iterations: int = Field(default=1, ge=1)

    @field_validator("channels", mode="before")
    @classmethod
    def _split_lists(cls, value):
        return _split_csv(value)

    @field_validator("local_crop")
    @classmethod
    def _crop_survives_downsampling(cls, value: int) -> int:
        if value % 32:
            raise ValueError("local_crop must be a multiple of 32 (five stride-2 blocks)")
        return value


class LossWeights(_StrictModel):
    """
    Objective weights.

    ℓ_G = λ·cmad + λ·isd + α·wpa + β·l1 + γ·g_adv_g + γ·l_adv_g
    ℓ_D = γ·g_adv_d + γ·l_adv_d

    The optional overrides split λ and γ per component (used by ablations).
    """
    model_config = ConfigDict(extra="forbid", populate_by_name=True, validate_assignment=True)

    lam: float = Field(default=2.0, ge=0.0, alias="lambda")
    alpha: float = Field(default=1.0, ge=0.0)
    beta: float = Field(default=1.0, ge=0.0)
    gamma: float = Field(default=0.1, ge=0.0)
    lambda_cmad: Optional[float] = Field(default=None, ge=0.0)
    lambda_isd: Optional[float] = Field(default=None, ge=0.0)
    gamma_global: Optional[float] = Field(default=None, ge=0.0)
    gamma_local: Optional[float] = Field(default=None, ge=0.0)

    @property
    def w_cmad(self) -> float:
        return self.lam if self.lambda_cmad is None else self.lambda_cmad

    @property
    def w_isd(self) -> float:
        return self.lam if self.lambda_isd is None else self.lambda_isd

    @property
    def w_global(self) -> float:
        return self.gamma if self.gamma_global is None else self.gamma_global

    @property
    def w_local(self) -> float:
        return self.gamma if self.gamma_local is None else self.gamma_local

    def without(self, drop: List[str]) -> "LossWeights":
        """
        Returns a copy with the weights of the dropped components set to 0.

        Raises:
            ValueError: On an unknown component name
        """
        names = set()
        for name in drop:
            if name == "adv":
                names.update(("g_adv", "l_adv"))
            elif name in ABLATION_COMPONENTS:
                names.add(name)
            else:
                raise ValueError(
                    f"unknown ablation component '{name}' (expected one of {', '.join(ABLATION_COMPONENTS)}, adv)"
                )
        updates = {}
        if "cmad" in names:
            updates["lambda_cmad"] = 0.0
        if "isd" in names:
            updates["lambda_isd"] = 0.0
        if "wpa" in names:
            updates["alpha"] = 0.0
        if "recon" in names:
            updates["beta"] = 0.0
        if "g_adv" in names:
            updates["gamma_global"] = 0.0
        if "l_adv" in names:
            updates["gamma_local"] = 0.0
        return self.model_copy(update=updates)


class TransportConfig(_StrictModel):
    """Entropic OT settings of the word-patch alignment loss."""
    epsilon: float = Field(default=0.05, gt=0.0)
    max_iter: int = Field(default=200, ge=1)
    tol: float = Field(default=1e-6, gt=0.0)
    epsilon_scaling: bool = False


class TrainConfig(_StrictModel):
    """
    Everything a training run depends on.

    Steps are the training budget; when max_epochs is set it is converted
    to steps as ceil(max_epochs · n_samples / batch_size).
    """
    preset: Literal["desk", "full", "tiny"] = "desk"
    lr: float = Field(default=1e-4, gt=0.0)
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_eps: float = Field(default=1e-8, gt=0.0)
    weight_decay: float = Field(default=0.01, ge=0.0)
    grad_clip: float = Field(default=1.0, gt=0.0)
    warmup_steps: int = Field(default=200, ge=1)
    batch_size: int = Field(default=8, ge=1)
    steps: int = Field(default=2000, ge=1)
    max_epochs: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=17, ge=0)
    mask_mode: Literal["center", "object"] = "center"
    mask_area: float = Field(default=0.5, gt=0.0, le=1.0)
    checkpoint_every: int = Field(default=500, ge=0)
    validate_every: int = Field(default=0, ge=0)
    drop: List[str] = Field(default_factory=list)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = Field(default_factory=DiscriminatorConfig)
    loss: LossWeights = Field(default_factory=LossWeights)
    transport: TransportConfig = Field(default_factory=TransportConfig)

    @field_validator("drop", mode="before")
    @classmethod
    def _split_drop(cls, value):
        return _split_csv(value)

    @field_validator("drop")
    @classmethod
    def _known_components(cls, value: List[str]) -> List[str]:
        LossWeights().without(value)
        return value

    @model_validator(mode="after")
    def _check_consistency(self) -> "TrainConfig":
        synth, enc = self.synth, self.encoder
        if enc.patch_size != synth.patch_size:
            raise ValueError(f"encoder.patch_size {enc.patch_size} != synth.patch_size {synth.patch_size}")
        if enc.num_patches != synth.num_patches:
            raise ValueError(
                f"encoder.num_patches {enc.num_patches} != (synth.image_size / patch_size)² = {synth.num_patches}"
            )
        if enc.max_text_len != synth.max_seq_len:
            raise ValueError(f"encoder.max_text_len {enc.max_text_len} != synth.max_seq_len {synth.max_seq_len}")
        if enc.channels != synth.channels:
            raise ValueError(f"encoder.channels {enc.channels} != synth.channels {synth.channels}")
        if enc.grid % self.generator.downscale:
            raise ValueError(
                f"prior grid {enc.grid} is not divisible by the generator downscale {self.generator.downscale}"
            )
        if self.discriminator.local_crop > synth.image_size:
            raise ValueError("discriminator.local_crop exceeds synth.image_size")
        return self

    @property
    def total_steps(self) -> int:
        if self.max_epochs is None:
            return self.steps
        return math.ceil(self.max_epochs * self.synth.n_samples / self.batch_size)

    def effective_weights(self) -> LossWeights:
        """Loss weights with the `drop` ablation applied."""
        return self.loss.without(self.drop)


# ==================================================================================================
# Records
# ==================================================================================================

class LossRecord(BaseModel):
    """The eight loss components of one step and their weighted totals."""
    cmad: float
    isd: float
    wpa: float
    l1: float
    g_adv_g: float
    l_adv_g: float
    g_adv_d: float
    l_adv_d: float
    total_g: float
    total_d: float

    def as_row(self, step: int) -> List[str]:
        """CSV row in LOSS_CSV_HEADER order (floats in repr form, exact round-trip)."""
        values = [getattr(self, name) for name in LossRecord.model_fields]
        return [str(step)] + [repr(float(v)) for v in values]


class PairMetrics(BaseModel):
    """Per-pair metrics of one restored/ground-truth image pair."""
    name: str
    l1: float
    tv: float
    psnr: float
    ssim: float
    masked_l1: Optional[float] = None


class MetricReport(BaseModel):
    """
    Averaged metrics of a set of restored images.

    l1 and tv are per-pixel means (reported ×100 in CSV form), ssim ∈ [−1, 1]
    (reported ×100), psnr in dB. fid/kid are computed over the full feature sets.
    """
    l1: float
    fid: float
    kid: float
    tv: float
    psnr: float
    ssim: float
    count: int
    masked_l1: Optional[float] = None
    rows: List[PairMetrics] = Field(default_factory=list)

    def as_row(self, method: str) -> List[str]:
        return [
            method,
            f"{100.0 * self.l1:.4f}",
            f"{self.fid:.6f}",
            f"{self.kid:.6f}",
            f"{100.0 * self.tv:.4f}",
            f"{self.psnr:.4f}",
            f"{100.0 * self.ssim:.4f}",
        ]
