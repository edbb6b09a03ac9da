"""Unsupervised variable selection and linear-component recovery autoencoders."""

from .matrix import center_columns, least_squares_reconstruct, mse, reconstruction_metrics, variance_explained
from .neuralnet import MlpNetwork, TrainConfig, TrainingDivergedError, forward, init_network, train
from .pca import components_for_threshold, fit_pca, pca_reconstruct, pca_scores
from .rlc import (
    RlcModel,
    SdeModel,
    fit_fsca_rlc,
    fit_fsca_sde,
    fit_pca_rlc,
    linear_reconstruct,
    rlc_reconstruct,
    sde_reconstruct,
)
from .selection import SelectionModel, fsca_select, mpbr_refine, select, spbr_refine
from .synth import SynthConfig, generate_xsynthetic

__version__ = "0.1.0"
