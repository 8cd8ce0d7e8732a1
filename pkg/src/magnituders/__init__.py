"""Magnituder random-feature layers with a small numpy MLP engine.

A magnituder (MAG) layer computes ``W f(G x)`` with a frozen random ``G`` and
a trainable ``W``. The package provides seeded random ensembles, the layer
and network engine, kernel estimators, layer bundling, closed-form
distillation and an experiment CLI (``magnituders``).
"""

from .architectures import nerf_baseline, nerf_mag, sdf_network
from .distill import CaptureDataset, DistillReport, capture, distill_closed_form, replace_layer, subsample
from .errors import InvalidArgument, TrainingDiverged
from .fusion import bundle, bundle_with_concat, fuse_network
from .kernels import KernelEstimator, ScalarFunction, estimator_variance, kernel_mag_estimate, kernel_mag_exact
from .layers import (
    Activation,
    DenseLayer,
    FusedLayer,
    Head,
    MagLayer,
    Network,
    TrainConfig,
    mac_count,
    param_count,
    train,
)
from .numerics import EnsembleKind, RngStream, sample_ensemble, solve_least_squares
from .serialization import load_capture, load_network, save_capture, save_network

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "CaptureDataset",
    "DenseLayer",
    "DistillReport",
    "EnsembleKind",
    "FusedLayer",
    "Head",
    "InvalidArgument",
    "KernelEstimator",
    "MagLayer",
    "Network",
    "RngStream",
    "ScalarFunction",
    "TrainConfig",
    "TrainingDiverged",
    "bundle",
    "bundle_with_concat",
    "capture",
    "distill_closed_form",
    "estimator_variance",
    "fuse_network",
    "kernel_mag_estimate",
    "kernel_mag_exact",
    "load_capture",
    "load_network",
    "mac_count",
    "nerf_baseline",
    "nerf_mag",
    "param_count",
    "replace_layer",
    "sample_ensemble",
    "save_capture",
    "save_network",
    "sdf_network",
    "solve_least_squares",
    "subsample",
    "train",
]
