"""Deep low-density separation: neural embeddings + transductive SVMs."""

from ._deepsep import (
    DeepSepConfig,
    DeepSepError,
    TsvmModel,
    TsvmParams,
    accuracy_percent,
    cccp_fit,
    decisions_to_probs,
    gen_gaussian_mixture,
    gen_two_moons,
    hinge,
    kl_loss,
    mse_loss,
    ovr_decisions,
    ovr_fit,
    propagate,
    run,
    smooth_labels,
    solve_svm_dual,
    split_and_mask,
    tsvm_objective,
)

__all__ = [
    "DeepSepConfig",
    "DeepSepError",
    "TsvmModel",
    "TsvmParams",
    "accuracy_percent",
    "cccp_fit",
    "decisions_to_probs",
    "gen_gaussian_mixture",
    "gen_two_moons",
    "hinge",
    "kl_loss",
    "mse_loss",
    "ovr_decisions",
    "ovr_fit",
    "propagate",
    "run",
    "smooth_labels",
    "solve_svm_dual",
    "split_and_mask",
    "tsvm_objective",
]
