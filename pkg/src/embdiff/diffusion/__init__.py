from .sampling import sample, sample_latents, sample_latents_per_seed, strided_timesteps
from .schedule import NoiseSchedule, build_schedule, q_sample
from .training import (
    TrainConfig,
    TrainResult,
    load_checkpoint,
    noise_mse,
    save_checkpoint,
    train_diffusion,
    training_step,
)
from .unet import (
    AttentionMap,
    AttentionStack,
    CondUNet,
    DenoiserConfig,
    capture_attention,
    predict_noise,
    timestep_embedding,
)

__all__ = [
    "AttentionMap",
    "AttentionStack",
    "CondUNet",
    "DenoiserConfig",
    "NoiseSchedule",
    "TrainConfig",
    "TrainResult",
    "build_schedule",
    "capture_attention",
    "load_checkpoint",
    "noise_mse",
    "predict_noise",
    "q_sample",
    "sample",
    "sample_latents",
    "sample_latents_per_seed",
    "save_checkpoint",
    "strided_timesteps",
    "timestep_embedding",
    "train_diffusion",
    "training_step",
]
