"""Unfolded Retinex decomposition with customized priors for low-light enhancement."""

from .enhance import EnhanceConfig, adjust_illumination, compose, compute_ratio, enhance_pipeline, restore_reflectance
from .hog import HogConfig, HogFeature, compute_hog, hog_distance
from .imgcore import (
    DELTA_L,
    Decomposition,
    extract_illumination,
    gamma_transform,
    init_decomposition,
    load_image,
    save_image,
)
from .metrics import LossWeights, psnr, ssim
from .ops import BilateralParams, bilateral_filter, forward_gradients, shrink
from .priors import PriorConfig, PriorModel, TrainConfig, gradient_rep_loss, learned_prox_L, train_prior
from .unfold import SolverState, UnfoldConfig, decompose, eval_objective

__version__ = "0.1.0"
