"""Model and training presets.

Two model presets: "faithful" reproduces the reference 32x32 architecture
exactly (asserted by the acceptance suite), "desk" is a quarter-width 16x16
configuration sized so the full two-stage pipeline runs on a laptop CPU.
"""

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class ConvSpec:
    kernel: int
    channels: int
    stride: int
    padding: str


@dataclass(frozen=True)
class ModelConfig:
    name: str
    image_size: int
    channels: int
    latent_dim: int
    encoder_convs: tuple
    decoder_fc: int
    decoder_deconvs: tuple  # last entry's channels = feature_channels
    nr_filters: int
    nr_blocks: int
    first_kernel: tuple
    block_kernel: tuple
    n_mix: int
    reverse_channels: int
    dtype: str = "float32"

    @property
    def feature_channels(self):
        return self.decoder_deconvs[-1].channels

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def with_dtype(self, dtype):
        return replace(self, dtype=dtype)


FAITHFUL = ModelConfig(
    name="faithful",
    image_size=32,
    channels=3,
    latent_dim=32,
    encoder_convs=(
        ConvSpec(1, 32, 1, "SAME"),
        ConvSpec(4, 64, 2, "SAME"),
        ConvSpec(4, 128, 2, "SAME"),
        ConvSpec(4, 256, 2, "SAME"),
        ConvSpec(4, 512, 1, "VALID"),
    ),
    decoder_fc=512,
    decoder_deconvs=(
        ConvSpec(4, 256, 1, "VALID"),
        ConvSpec(4, 128, 2, "SAME"),
        ConvSpec(4, 64, 2, "SAME"),
        ConvSpec(4, 32, 2, "SAME"),
    ),
    nr_filters=100,
    nr_blocks=5,
    first_kernel=(3, 5),
    block_kernel=(3, 3),
    n_mix=10,
    reverse_channels=100,
)

DESK = ModelConfig(
    name="desk",
    image_size=16,
    channels=3,
    latent_dim=8,
    encoder_convs=(
        ConvSpec(1, 8, 1, "SAME"),
        ConvSpec(4, 16, 2, "SAME"),
        ConvSpec(4, 32, 2, "SAME"),
        ConvSpec(4, 64, 1, "VALID"),
    ),
    decoder_fc=128,
    decoder_deconvs=(
        ConvSpec(4, 64, 1, "VALID"),
        ConvSpec(4, 32, 2, "SAME"),
        ConvSpec(4, 8, 2, "SAME"),
    ),
    nr_filters=24,
    nr_blocks=2,
    first_kernel=(3, 3),
    block_kernel=(3, 3),
    n_mix=5,
    reverse_channels=24,
)

PRESETS = {"faithful": FAITHFUL, "desk": DESK}


def model_config(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


VAE_KL = "vae-kl"
INFOVAE_MMD = "infovae-mmd"
INFO_BETA_TCVAE = "info-beta-tcvae"  # diagnostic-only; never a training objective


@dataclass(frozen=True)
class RegularizerConfig:
    kind: str = INFOVAE_MMD
    coefficient: float = 2e6
    beta: float = 1.0

    def __post_init__(self):
        if self.coefficient < 0:
            raise ValueError("regularizer coefficient must be >= 0")


@dataclass
class TrainConfig:
    preset: str = "desk"
    stage: str = "1"  # "1", "2", or "onestage"
    seed: int = 0
    epochs: int = 12
    batch_size: int = 32
    learning_rate: float = 3e-3
    regularizer: RegularizerConfig = field(default_factory=RegularizerConfig)
    dropout: float = 0.2
    grad_clip: float = 5.0
    mask_min: int = 4
    mask_max: int = 12
    use_reverse: bool = True  # False = forward-only ablation in stage 2

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size <= 0:
            raise ValueError("batch size must be positive")

    def model(self):
        return model_config(self.preset)

    def to_dict(self):
        d = dict(self.__dict__)
        d["regularizer"] = dict(self.regularizer.__dict__)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["regularizer"] = RegularizerConfig(**d["regularizer"])
        return cls(**d)


def default_train_config(preset, stage, seed=0):
    """Calibrated defaults: paper-scale settings for faithful, fast for desk."""
    if preset == "faithful":
        return TrainConfig(
            preset=preset, stage=stage, seed=seed, epochs=40, batch_size=64,
            learning_rate=1e-4, dropout=0.5,
            regularizer=RegularizerConfig(INFOVAE_MMD, 2e6),
            mask_min=8, mask_max=24)
    return TrainConfig(
        preset=preset, stage=stage, seed=seed, epochs=12, batch_size=32,
        learning_rate=3e-3, dropout=0.2,
        regularizer=RegularizerConfig(INFOVAE_MMD, 1e5),
        mask_min=4, mask_max=12)
