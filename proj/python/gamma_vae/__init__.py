"""Curvature-regularized VAE: exact decoder curvature, training and evaluation."""

import json

import numpy as np

from . import _core
from ._core import (
    DEFAULT_JITTER_SCALE,
    DivergedTrainingError,
    DomainError,
    GammaVaeError,
    Model,
    ParseError,
    ShapeError,
    SingularGeometryError,
    analytic_jet,
    gen_synthetic,
    lda_fit_predict,
    pairwise_distances,
    pca,
    spearman,
)

__all__ = [
    "DEFAULT_JITTER_SCALE",
    "DivergedTrainingError",
    "DomainError",
    "GammaVaeError",
    "Model",
    "ParseError",
    "ShapeError",
    "SingularGeometryError",
    "analytic_jet",
    "christoffel_tensor",
    "config",
    "gen_synthetic",
    "geometry",
    "lda_fit_predict",
    "ood_consistency",
    "pairwise_distances",
    "pca",
    "spearman",
    "train",
]


def config(**overrides):
    """Resolved training config as a dict; unknown keys raise ParseError."""
    return json.loads(_core.resolved_config(json.dumps(overrides)))


def train(data, on_epoch=None, **overrides):
    """Train on an (n, N) array. Returns (Model, list of per-epoch metric dicts)."""
    x = np.asarray(data, dtype=np.float64)
    return _core.train(x, json.dumps(overrides), on_epoch)


def geometry(value, jacobian, hessian, jitter_scale=DEFAULT_JITTER_SCALE):
    return _core.geometry(
        np.asarray(value, dtype=np.float64),
        np.asarray(jacobian, dtype=np.float64),
        np.asarray(hessian, dtype=np.float64),
        jitter_scale,
    )


def christoffel_tensor(christoffel):
    """Reshape the (m, m*m) Christoffel block into gamma[kappa, mu, nu]."""
    c = np.asarray(christoffel)
    m = c.shape[0]
    return c.reshape(m, m, m)


def ood_consistency(full, holdout, held_out):
    return _core.ood_consistency(
        np.asarray(full, dtype=np.float64),
        np.asarray(holdout, dtype=np.float64),
        [bool(v) for v in held_out],
    )
