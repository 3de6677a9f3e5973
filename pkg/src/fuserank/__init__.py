"""Patch classification by fused CNN features, t-ranking and a linear SVM."""

from . import (  # noqa: F401
    errors,
    feature_store,
    fusion,
    inference,
    manifest,
    metrics,
    model_graph,
    nn_ops,
    patches,
    rng,
    svm,
)

__version__ = "0.1.0"
