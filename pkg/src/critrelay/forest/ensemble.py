"""Random forest: fitting, majority voting and the model file."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .tree import DecisionTree, Hyperparams, grow_tree

MODEL_FORMAT = "critrelay-forest"
MODEL_VERSION = 1


class SchemaError(ValueError):
    """Feature layout of scoring data does not match the model."""


class ModelFileError(ValueError):
    pass


@dataclass
class RandomForestModel:
    trees: list
    hyperparams: Hyperparams
    schema_hash: str = ""
    feature_names: list = field(default_factory=list)
    n_features: int = 0

    def _check(self, X, schema_hash):
        if schema_hash is not None and self.schema_hash and schema_hash != self.schema_hash:
            raise SchemaError(f"feature schema {schema_hash} does not match model schema "
                              f"{self.schema_hash}")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise SchemaError(f"expected {self.n_features} features, got {X.shape[1]}")
        return X

    def votes(self, X, schema_hash=None) -> np.ndarray:
        X = self._check(X, schema_hash)
        return np.array([t.predict(X) for t in self.trees]).reshape(len(self.trees), len(X))

    def predict(self, X, schema_hash=None):
        """(classes, class-1 vote fractions).  An exact tie goes to class 1."""
        v = self.votes(X, schema_hash)
        ones = v.sum(axis=0)
        n = len(self.trees)
        cls = (2 * ones >= n).astype(int)
        return cls, ones / n

    def split_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_features, dtype=int)
        for t in self.trees:
            f = t.feature[t.feature >= 0]
            counts += np.bincount(f, minlength=self.n_features)
        return counts


def fit_forest(X, y, params: Hyperparams, schema_hash: str = "",
               feature_names=None) -> RandomForestModel:
    """Each tree sees the full data (bootstrap off) or its own seeded resample."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("fit_forest needs a non-empty 2-D feature matrix")
    if len(y) != len(X):
        raise SchemaError("feature rows and labels differ in length")
    cw = params.weights_for(y)
    trees = []
    for t in range(params.n_trees):
        if params.bootstrap:
            rng = np.random.default_rng(np.random.SeedSequence(params.seed, spawn_key=(t, 2**31)))
            idx = rng.integers(0, len(y), size=len(y))
            trees.append(grow_tree(X[idx], y[idx], params, t, cw))
        else:
            trees.append(grow_tree(X, y, params, t, cw))
    return RandomForestModel(trees, params, schema_hash,
                             list(feature_names) if feature_names is not None else [],
                             X.shape[1])


def predict(model: RandomForestModel, X, schema_hash=None):
    return model.predict(X, schema_hash)


def save_model(model: RandomForestModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "schema_hash": model.schema_hash,
        "feature_names": model.feature_names,
        "n_features": model.n_features,
        "hyperparams": model.hyperparams.to_dict(),
        "trees": [t.to_nested() for t in model.trees],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def load_model(text: str) -> RandomForestModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"malformed model file: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFileError("not a critrelay forest model")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFileError(f"unsupported model version {doc.get('version')!r}")
    try:
        params = Hyperparams.from_dict(doc["hyperparams"])
        trees = [DecisionTree.from_nested(t) for t in doc["trees"]]
        n_features = int(doc["n_features"])
        schema = str(doc["schema_hash"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from None
    if len(trees) != params.n_trees:
        raise ModelFileError("tree count does not match hyperparameters")
    return RandomForestModel(trees, params, schema, list(doc.get("feature_names", [])), n_features)
