"""Embedding-aware generative models: objectives, training and synthesis."""

from gasl.generators.checkpoint import load_checkpoint, save_checkpoint
from gasl.generators.objectives import (
    BASES,
    OBJECTIVES,
    LossBreakdown,
    cadavae_objective,
    critic_loss,
    cvae_objective,
    fclswgan_objective,
    free_objective,
    fvaegand2_objective,
    gcmcf_objective,
    lisgan_objective,
    lsrgan_objective,
    objective_for,
    soul_samples,
    tfvaegan_objective,
    vaecflow_objective,
    vaegan_objective,
    wgan_objective,
)
from gasl.generators.primitives import cosine_similarity, gradient_penalty, kl_diag_gaussian, wasserstein2_diag
from gasl.generators.state import LatentBatch, ModelKind, ModelState
from gasl.generators.synthesis import (
    calibrate_gate,
    classifier_view,
    counterfactual_seen_unseen_gate,
    real_latents,
    synthesize_features,
)
from gasl.generators.training import build_state, pretrain_classifier, train_generator

__all__ = [
    "BASES",
    "OBJECTIVES",
    "LatentBatch",
    "LossBreakdown",
    "ModelKind",
    "ModelState",
    "build_state",
    "cadavae_objective",
    "calibrate_gate",
    "classifier_view",
    "cosine_similarity",
    "counterfactual_seen_unseen_gate",
    "critic_loss",
    "cvae_objective",
    "fclswgan_objective",
    "free_objective",
    "fvaegand2_objective",
    "gcmcf_objective",
    "gradient_penalty",
    "kl_diag_gaussian",
    "lisgan_objective",
    "load_checkpoint",
    "lsrgan_objective",
    "objective_for",
    "pretrain_classifier",
    "real_latents",
    "save_checkpoint",
    "soul_samples",
    "synthesize_features",
    "tfvaegan_objective",
    "train_generator",
    "vaecflow_objective",
    "vaegan_objective",
    "wasserstein2_diag",
]
