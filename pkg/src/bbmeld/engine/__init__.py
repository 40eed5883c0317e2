"""Inference engine: fix-level posterior, hyperparameter fit and grid, segment mixture."""
from .dense import dense_joint_posterior, dense_system, dense_track_moments
from .fit import EbFit, GridPoint, HyperGrid, OptConfig, build_grid, eb_fit, neg_hessian
from .gps_block import (
    DetailStats,
    GpsBlockModel,
    GpsBlockPosterior,
    detail_stats,
    gps_block_posterior,
    phi_log_posterior,
)
from .meld import MeldConfig, MeldFit, fit_hyper, meld, posterior_at, reanchor
from .segments import segment_conditional

__all__ = [
    "DetailStats",
    "EbFit",
    "GpsBlockModel",
    "GpsBlockPosterior",
    "GridPoint",
    "HyperGrid",
    "MeldConfig",
    "MeldFit",
    "OptConfig",
    "build_grid",
    "dense_joint_posterior",
    "dense_system",
    "dense_track_moments",
    "detail_stats",
    "eb_fit",
    "fit_hyper",
    "gps_block_posterior",
    "meld",
    "neg_hessian",
    "phi_log_posterior",
    "posterior_at",
    "reanchor",
    "segment_conditional",
]
