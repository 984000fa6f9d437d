"""Classifiers: CART, random forest, softmax gradient boosting and RBF SVM."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatchError
from .ensemble import (
    EnsembleKind,
    TreeEnsemble,
    balanced_class_weights,
    fit_boosted,
    fit_forest,
    fit_tree,
    log_loss,
    softmax,
)
from .svm import BinarySvm, NoConvergenceWarning, SvmModel, fit_svm, scale_gamma, smo_solve
from .tree import LEAF, Tree, TreeParams

FORMAT = "loadlens-model/1"

Model = TreeEnsemble | SvmModel


@dataclass
class Prediction:
    labels: np.ndarray
    scores: np.ndarray


def predict(model: Model, X) -> Prediction:
    """Labels and per-class scores; argmax ties go to the lowest class id.

    Scores are mean tree class probabilities for forests, softmax of margins
    for boosting and one-vs-rest decision values for SVMs.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatchError(
            f"model expects {model.n_features} features, got {X.shape[-1] if X.ndim else 0}"
        )
    if isinstance(model, SvmModel):
        scores = model.decision_function(X)
    else:
        scores = model.proba(X)
    return Prediction(np.argmax(scores, axis=1).astype(np.int64), scores)


def fit_model(kind: str, X, y, n_classes: int, params: dict | None = None, seed: int = 0, threads: int = 1) -> Model:
    params = dict(params or {})
    if kind == "rf":
        return fit_forest(X, y, n_classes=n_classes, seed=seed, threads=threads, **params)
    if kind == "gbt":
        return fit_boosted(X, y, n_classes=n_classes, seed=seed, **params)
    if kind == "svm":
        return fit_svm(X, y, n_classes=n_classes, seed=seed, **params)
    raise ValueError(f"unknown model kind {kind!r}")


def model_to_dict(model: Model) -> dict:
    if isinstance(model, SvmModel):
        return {
            "format": FORMAT,
            "kind": "svm",
            "params": model.params,
            "gamma": model.gamma,
            "C": model.C,
            "n_classes": model.n_classes,
            "n_features": model.n_features,
            "machines": [
                {
                    "support_vectors": m.support_vectors.tolist(),
                    "dual_coef": m.dual_coef.tolist(),
                    "rho": m.rho,
                    "pos_weight": m.pos_weight,
                    "neg_weight": m.neg_weight,
                    "converged": m.converged,
                }
                for m in model.machines
            ],
        }
    return {
        "format": FORMAT,
        "kind": model.kind.value,
        "params": model.params,
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "base_score": model.base_score.tolist(),
        "learning_rate": model.learning_rate,
        "tree_class": None if model.tree_class is None else model.tree_class.tolist(),
        "trees": [t.to_dict() for t in model.trees],
    }


def model_from_dict(d: dict) -> Model:
    if d.get("format") != FORMAT:
        raise ValueError(f"unsupported model format {d.get('format')!r}")
    if d["kind"] == "svm":
        machines = [
            BinarySvm(
                np.asarray(m["support_vectors"], dtype=float).reshape(-1, d["n_features"]),
                np.asarray(m["dual_coef"], dtype=float),
                m["rho"],
                m["pos_weight"],
                m["neg_weight"],
                m["converged"],
            )
            for m in d["machines"]
        ]
        return SvmModel(d["gamma"], d["C"], d["n_classes"], d["n_features"], machines, d["params"])
    return TreeEnsemble(
        EnsembleKind(d["kind"]),
        [Tree.from_dict(t) for t in d["trees"]],
        d["n_classes"],
        d["n_features"],
        np.asarray(d["base_score"], dtype=float),
        d["learning_rate"],
        None if d["tree_class"] is None else np.asarray(d["tree_class"], dtype=np.int64),
        d["params"],
    )


def dumps_model(model: Model) -> str:
    # json writes floats with repr(), which round-trips exactly
    return json.dumps(model_to_dict(model), separators=(",", ":"), allow_nan=False) + "\n"


def loads_model(text: str) -> Model:
    return model_from_dict(json.loads(text))


def save_model(model: Model, path) -> None:
    from ..io import atomic_write_text

    atomic_write_text(path, dumps_model(model))


def load_model(path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())


__all__ = [
    "LEAF",
    "BinarySvm",
    "EnsembleKind",
    "Model",
    "NoConvergenceWarning",
    "Prediction",
    "SvmModel",
    "Tree",
    "TreeEnsemble",
    "TreeParams",
    "balanced_class_weights",
    "dumps_model",
    "fit_boosted",
    "fit_forest",
    "fit_model",
    "fit_svm",
    "fit_tree",
    "load_model",
    "loads_model",
    "log_loss",
    "model_from_dict",
    "model_to_dict",
    "predict",
    "save_model",
    "scale_gamma",
    "smo_solve",
    "softmax",
]
