"""Linear binary SVM trained by minimizing the squared hinge objective

    f(w) = 1/2 w.w + C * sum_n max(1 - y_n (w.x_n), 0)^2

with labels mapped covid -> +1, nofinding -> -1.  The bias is an augmented
constant-1 feature (and therefore regularized with the rest of w).  The
solver is deterministic full-batch gradient descent with Armijo
backtracking, started from w = 0, so identical inputs always give identical
models.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericError
from .fusion import FeatureMatrix
from .labels import COVID, NOFINDING
from .nn_ops import STDEV_EPSILON, Standardizer, standardize_apply, standardize_fit


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 5000
    gradient_tolerance: float = 1e-6
    initial_step: float = 1.0
    # Backtracking: step shrink factor and Armijo sufficient-decrease slope.
    shrink: float = 0.5
    sufficient_decrease: float = 1e-4

    def __post_init__(self):
        if (self.max_iterations < 1 or self.gradient_tolerance <= 0
                or self.initial_step <= 0 or not 0 < self.shrink < 1
                or not 0 < self.sufficient_decrease < 1):
            raise InvalidArgumentError("solver parameters must be positive")


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    final_objective: float
    final_gradient_norm: float
    converged: bool

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_objective": self.final_objective,
            "final_gradient_norm": self.final_gradient_norm,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class LinearSvmModel:
    """Weights over standardized features plus trailing bias coordinate."""

    weights: np.ndarray
    C: float
    standardizers: list[Standardizer]
    solver_report: SolverReport
    label_map: dict = field(default_factory=lambda: {COVID: 1, NOFINDING: -1})

    @property
    def dim(self) -> int:
        return len(self.standardizers)


def _as_signed_labels(labels: np.ndarray) -> np.ndarray:
    # store labels are 0/1; the margin algebra wants -1/+1
    return np.where(np.asarray(labels) == 1, 1.0, -1.0)


def objective(w, m: FeatureMatrix, C: float) -> float:
    """Squared hinge objective on an already standardized, bias-augmented matrix."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size != m.dim:
        raise InvalidArgumentError(f"w has dim {w.size}, matrix has {m.dim}")
    if C <= 0:
        raise InvalidArgumentError("C must be positive")
    y = _as_signed_labels(m.labels)
    margins = y * (m.values @ w)
    hinge = np.maximum(1.0 - margins, 0.0)
    return float(0.5 * w @ w + C * np.sum(hinge * hinge))


def gradient(w, m: FeatureMatrix, C: float) -> np.ndarray:
    """Analytic gradient ``w - 2C sum_n y_n x_n max(1 - y_n w.x_n, 0)``."""
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 1 or w.size != m.dim:
        raise InvalidArgumentError(f"w has dim {w.size}, matrix has {m.dim}")
    if C <= 0:
        raise InvalidArgumentError("C must be positive")
    y = _as_signed_labels(m.labels)
    margins = y * (m.values @ w)
    hinge = np.maximum(1.0 - margins, 0.0)
    return w - 2.0 * C * (m.values.T @ (y * hinge))


def _standardize_columns(values: np.ndarray) -> tuple[np.ndarray, list[Standardizer]]:
    standardizers = [standardize_fit(values[:, j]) for j in range(values.shape[1])]
    cols = [standardize_apply(s, values[:, j]) for j, s in enumerate(standardizers)]
    return np.column_stack(cols), standardizers


def _augment(values: np.ndarray) -> np.ndarray:
    return np.hstack([values, np.ones((values.shape[0], 1))])


def train(m: FeatureMatrix, C: float = 1.0, cfg: SolverConfig | None = None,
          on_iteration=None) -> LinearSvmModel:
    """Standardize per feature, augment the bias, and descend from w = 0.

    Accepted steps satisfy the Armijo condition, so the objective sequence is
    non-increasing by construction.  Training is deterministic.
    ``on_iteration(iteration, objective, gradient_norm)``, when given, fires
    after every accepted step.
    """
    if cfg is None:
        cfg = SolverConfig()
    if C <= 0:
        raise InvalidArgumentError("C must be positive")
    if m.rows < 2:
        raise InvalidArgumentError("training needs at least 2 rows")
    if len(set(m.labels.tolist())) < 2:
        raise InvalidArgumentError("training needs both classes present")

    z, standardizers = _standardize_columns(m.values)
    data = FeatureMatrix(values=_augment(z), labels=m.labels)

    w = np.zeros(data.dim)
    f = objective(w, data, C)
    g = gradient(w, data, C)
    gnorm = float(np.linalg.norm(g))
    iterations = 0
    while gnorm > cfg.gradient_tolerance and iterations < cfg.max_iterations:
        step = cfg.initial_step
        slope = cfg.sufficient_decrease * gnorm * gnorm
        while True:
            candidate = w - step * g
            f_new = objective(candidate, data, C)
            if f_new <= f - step * slope:
                break
            step *= cfg.shrink
            if step < 1e-300:
                raise NumericError("line search failed to find a descent step")
        w = candidate
        f = f_new
        if not np.isfinite(f):
            raise NumericError("objective became non-finite during training")
        g = gradient(w, data, C)
        gnorm = float(np.linalg.norm(g))
        iterations += 1
        if on_iteration is not None:
            on_iteration(iterations, f, gnorm)

    report = SolverReport(
        iterations=iterations,
        final_objective=f,
        final_gradient_norm=gnorm,
        converged=gnorm <= cfg.gradient_tolerance,
    )
    return LinearSvmModel(weights=w, C=C, standardizers=standardizers,
                          solver_report=report)


def decision_scores(model: LinearSvmModel, rows) -> np.ndarray:
    """Vectorized scores ``w . [standardize(x); 1]`` for a batch of rows."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim == 1:
        rows = rows[None, :]
    if rows.shape[1] != model.dim:
        raise InvalidArgumentError(
            f"rows have dim {rows.shape[1]}, model expects {model.dim}")
    means = np.array([s.mean for s in model.standardizers])
    stdevs = np.array([1.0 if s.degenerate else s.stdev for s in model.standardizers])
    live = np.array([0.0 if s.degenerate else 1.0 for s in model.standardizers])
    z = (rows - means) / stdevs * live
    return z @ model.weights[:-1] + model.weights[-1]


def decision_score(model: LinearSvmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError("decision_score expects a single row")
    return float(decision_scores(model, x)[0])


def predict(model: LinearSvmModel, x) -> tuple[str, float]:
    """Label plus raw score; score >= 0 (ties included) classifies as covid."""
    score = decision_score(model, x)
    return (COVID if score >= 0 else NOFINDING), score


def model_to_dict(model: LinearSvmModel, config_hash: str | None = None) -> dict:
    return {
        "dim": model.dim,
        "C": model.C,
        "weights": model.weights.tolist(),
        "standardizers": [
            {"mean": s.mean, "stdev": s.stdev} for s in model.standardizers
        ],
        "label_map": model.label_map,
        "solver_report": model.solver_report.as_dict(),
        "config_hash": config_hash,
    }


def model_from_dict(payload: dict) -> LinearSvmModel:
    standardizers = [
        Standardizer(mean=s["mean"], stdev=s["stdev"],
                     degenerate=s["stdev"] < STDEV_EPSILON)
        for s in payload["standardizers"]
    ]
    report = SolverReport(**payload["solver_report"])
    model = LinearSvmModel(
        weights=np.asarray(payload["weights"], dtype=np.float64),
        C=payload["C"],
        standardizers=standardizers,
        solver_report=report,
        label_map=payload["label_map"],
    )
    if model.dim != payload["dim"] or model.weights.size != model.dim + 1:
        raise InvalidArgumentError("model file is internally inconsistent")
    return model


def save_model(model: LinearSvmModel, path, config_hash: str | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, config_hash), fh, indent=1)
        fh.write("\n")


def load_model(path) -> LinearSvmModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
