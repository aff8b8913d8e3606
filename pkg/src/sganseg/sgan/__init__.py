"""Stacked denoising/enhancement GANs."""

from .finetune import FinetuneResult, finetune
from .inference import Enhanced, edge_contrast, enhance, finetune_select, improvement_score, noise_estimate
from .losses import (
    GeneratorLoss,
    LossWeights,
    adversarial_loss,
    feature_loss,
    loss_discriminator,
    loss_generator,
    perceptual_loss,
)
from .models import (
    DiscriminatorConfig,
    FeatureExtractor,
    GeneratorConfig,
    build_discriminator,
    build_generator,
    discriminator_preset,
    generator_preset,
)
from .training import TrainConfig, TrainResult, pairs_to_arrays, train_stage, write_history_csv
