"""Boosted regression tree surrogate for configuration performance models.

The model is an AdaBoost.R2 ensemble of CART regression trees fitted on
weighted bootstrap resamples. Split search minimizes the weighted sum of
squared errors over (feature, midpoint-threshold) candidates; stage weights
are log(1/beta) with beta derived from the max-normalized linear loss, and
prediction is the weighted median of the stage predictions.

Tree fitting is deterministic and invariant to row order: candidate splits
are evaluated in a canonical per-node ordering and ties are broken by the
lowest feature index, then the lowest threshold.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from typing import Any, Callable, Sequence

import numpy as np


class UndefinedScoreError(ValueError):
    """R-squared is undefined for the given targets."""


class ModelFormatError(ValueError):
    """A persisted model document is malformed."""


MODEL_FORMAT = "boosted-regression-tree"
MODEL_VERSION = 1
LINEAR_LOSS = "linear"


@dataclass(frozen=True)
class Hyperparameters:
    """Ensemble and tree fitting knobs."""

    n_estimators: int = 50
    max_depth: int | None = 8
    min_samples_leaf: int = 2
    learning_rate: float = 1.0

    def __post_init__(self) -> None:
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be None or non-negative")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class Dataset:
    """Feature matrix with targets and optional sample weights."""

    feature_names: tuple[str, ...]
    features: np.ndarray
    targets: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.feature_names = tuple(self.feature_names)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.features.shape[1] != len(self.feature_names):
            raise ValueError(
                f"feature arity {self.features.shape[1]} does not match "
                f"{len(self.feature_names)} feature names"
            )
        if self.targets.shape != (self.features.shape[0],):
            raise ValueError("targets must be one value per row")
        if self.features.shape[0] == 0:
            raise ValueError("dataset is empty")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if not np.all(np.isfinite(self.targets)):
            raise ValueError("targets must be finite")
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=np.float64)
            if self.weights.shape != self.targets.shape:
                raise ValueError("weights must be one value per row")
            if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
                raise ValueError("weights must be finite and non-negative")
            if not np.any(self.weights > 0):
                raise ValueError("weights must not all be zero")

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(
            self.feature_names,
            self.features[indices],
            self.targets[indices],
            None if self.weights is None else self.weights[indices],
        )

    @classmethod
    def from_rows(
        cls,
        feature_names: Sequence[str],
        rows: Sequence[tuple[Sequence[float], float]],
        weights: Sequence[float] | None = None,
    ) -> "Dataset":
        features = np.array([list(vec) for vec, _ in rows], dtype=np.float64)
        targets = np.array([target for _, target in rows], dtype=np.float64)
        return cls(tuple(feature_names), features, targets,
                   None if weights is None else np.asarray(weights, dtype=np.float64))


# ----- regression trees ---------------------------------------------------


@dataclass(frozen=True)
class TreeNode:
    """Internal split or leaf. Rows with x[feature] < threshold go left."""

    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


@dataclass(frozen=True)
class RegressionTree:
    root: TreeNode
    n_features: int
    max_depth: int | None
    min_samples_leaf: int

    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def leaf_count(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 1
            return walk(node.left) + walk(node.right)

        return walk(self.root)


def _weighted_mean(y: np.ndarray, w: np.ndarray) -> float:
    # fsum is order independent, which keeps leaf values identical under
    # row permutations.
    total = math.fsum(w)
    if total > 0:
        return math.fsum(w * y) / total
    return math.fsum(y) / len(y)


def _best_split(
    X: np.ndarray, y: np.ndarray, w: np.ndarray, min_samples_leaf: int
) -> tuple[int, float] | None:
    """Find the (feature, threshold) minimizing child SSE, or None.

    Thresholds are midpoints between consecutive distinct feature values.
    Ties are broken by the lowest feature index, then the lowest threshold.
    """
    n = len(y)
    best_sse = math.inf
    best: tuple[int, float] | None = None
    center = _weighted_mean(y, w)
    yc = y - center  # SSE is shift invariant; centering improves conditioning
    for j in range(X.shape[1]):
        xj = X[:, j]
        # Canonical ordering makes the cumulative sums, and therefore the
        # chosen split, independent of the input row order.
        order = np.lexsort((w, yc, xj))
        xs = xj[order]
        ys = yc[order]
        ws = w[order]
        wy = ws * ys
        cum_w = np.cumsum(ws)
        cum_wy = np.cumsum(wy)
        cum_wyy = np.cumsum(wy * ys)
        i = np.arange(n - 1)
        left_n = i + 1
        valid = (
            (xs[i] < xs[i + 1])
            & (left_n >= min_samples_leaf)
            & (n - left_n >= min_samples_leaf)
        )
        w_left = cum_w[i]
        w_right = cum_w[-1] - w_left
        valid &= (w_left > 0) & (w_right > 0)
        if not np.any(valid):
            continue
        s_left = cum_wy[i]
        q_left = cum_wyy[i]
        s_right = cum_wy[-1] - s_left
        q_right = cum_wyy[-1] - q_left
        with np.errstate(divide="ignore", invalid="ignore"):
            sse = (q_left - s_left * s_left / w_left) + (
                q_right - s_right * s_right / w_right
            )
        sse = np.where(valid, sse, math.inf)
        k = int(np.argmin(sse))  # first minimum: lowest threshold wins
        if sse[k] < best_sse:
            threshold = (xs[k] + xs[k + 1]) / 2.0
            if threshold <= xs[k]:  # guard against midpoint rounding down
                threshold = float(xs[k + 1])
            best_sse = float(sse[k])
            best = (j, float(threshold))
    return best


def _build_tree(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    depth: int,
    max_depth: int | None,
    min_samples_leaf: int,
) -> TreeNode:
    value = _weighted_mean(y, w)
    if (
        (max_depth is not None and depth >= max_depth)
        or len(y) < 2 * min_samples_leaf
        or np.all(y == y[0])
    ):
        return TreeNode(value=value)
    split = _best_split(X, y, w, min_samples_leaf)
    if split is None:
        return TreeNode(value=value)
    feature, threshold = split
    go_left = X[:, feature] < threshold
    return TreeNode(
        feature=feature,
        threshold=threshold,
        left=_build_tree(
            X[go_left], y[go_left], w[go_left], depth + 1, max_depth, min_samples_leaf
        ),
        right=_build_tree(
            X[~go_left], y[~go_left], w[~go_left], depth + 1, max_depth, min_samples_leaf
        ),
    )


def fit_tree(
    data: Dataset, max_depth: int | None = 8, min_samples_leaf: int = 2
) -> RegressionTree:
    """Fit a CART regression tree by greedy variance reduction."""
    if max_depth is not None and max_depth < 0:
        raise ValueError("max_depth must be None or non-negative")
    if min_samples_leaf < 1:
        raise ValueError("min_samples_leaf must be at least 1")
    w = data.weights if data.weights is not None else np.ones(len(data))
    root = _build_tree(data.features, data.targets, w, 0, max_depth, min_samples_leaf)
    return RegressionTree(root, len(data.feature_names), max_depth, min_samples_leaf)


def predict_tree(tree: RegressionTree, x: Sequence[float]) -> float:
    """Predict one feature vector."""
    if len(x) != tree.n_features:
        raise ValueError(f"expected {tree.n_features} features, got {len(x)}")
    node = tree.root
    while not node.is_leaf:
        node = node.left if x[node.feature] < node.threshold else node.right
    return node.value


def predict_tree_batch(tree: RegressionTree, X: np.ndarray) -> np.ndarray:
    """Predict a feature matrix, one value per row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != tree.n_features:
        raise ValueError(f"expected an (n, {tree.n_features}) feature matrix")
    out = np.empty(X.shape[0], dtype=np.float64)

    def route(node: TreeNode, idx: np.ndarray) -> None:
        if node.is_leaf:
            out[idx] = node.value
            return
        go_left = X[idx, node.feature] < node.threshold
        route(node.left, idx[go_left])
        route(node.right, idx[~go_left])

    route(tree.root, np.arange(X.shape[0]))
    return out


# ----- boosted ensemble -----------------------------------------------------


@dataclass(frozen=True)
class BoostStage:
    tree: RegressionTree
    weight: float


@dataclass(frozen=True)
class BoostedModel:
    feature_names: tuple[str, ...]
    stages: tuple[BoostStage, ...]
    hyperparameters: Hyperparameters
    loss: str = LINEAR_LOSS


def fit_boosted(
    data: Dataset,
    rng: np.random.Generator,
    *,
    n_estimators: int = 50,
    max_depth: int | None = 8,
    min_samples_leaf: int = 2,
    learning_rate: float = 1.0,
) -> BoostedModel:
    """Fit an AdaBoost.R2 ensemble of regression trees.

    Each stage fits a tree on a weighted bootstrap resample, computes the
    max-normalized absolute losses on the full data and reweights samples by
    beta = avg_loss / (1 - avg_loss). Boosting stops early when a stage fits
    the data exactly or when the average loss reaches 0.5.
    """
    hyper = Hyperparameters(n_estimators, max_depth, min_samples_leaf, learning_rate)
    n = len(data)
    if n < 2:
        raise ValueError("boosting needs at least 2 rows")
    X = data.features
    y = data.targets
    if data.weights is not None:
        sample_weight = data.weights / data.weights.sum()
    else:
        sample_weight = np.full(n, 1.0 / n)
    unit = np.ones(n)
    stages: list[BoostStage] = []
    for _ in range(n_estimators):
        sample_weight = sample_weight / sample_weight.sum()
        bootstrap = rng.choice(n, size=n, replace=True, p=sample_weight)
        root = _build_tree(X[bootstrap], y[bootstrap], unit, 0, max_depth, min_samples_leaf)
        tree = RegressionTree(root, len(data.feature_names), max_depth, min_samples_leaf)
        error_vect = np.abs(predict_tree_batch(tree, X) - y)
        error_max = error_vect.max()
        if error_max > 0:
            error_vect = error_vect / error_max
        avg_loss = float(np.sum(sample_weight * error_vect))
        if avg_loss <= 0:
            # A stage that fits every row exactly ends the ensemble.
            stages.append(BoostStage(tree, 1.0))
            break
        if avg_loss >= 0.5:
            # Keep a lone degenerate stage so prediction stays defined.
            if not stages:
                stages.append(BoostStage(tree, 0.0))
            break
        beta = avg_loss / (1.0 - avg_loss)
        stages.append(BoostStage(tree, learning_rate * math.log(1.0 / beta)))
        sample_weight = sample_weight * np.power(beta, (1.0 - error_vect) * learning_rate)
        total = sample_weight.sum()
        if not np.isfinite(total) or total <= 0:
            break
        sample_weight = sample_weight / total
    return BoostedModel(tuple(data.feature_names), tuple(stages), hyper)


def _weighted_median_columns(predictions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted median over axis 0 of a (stages, n) prediction matrix."""
    order = np.argsort(predictions, axis=0, kind="stable")
    sorted_preds = np.take_along_axis(predictions, order, axis=0)
    cdf = np.cumsum(weights[order], axis=0)
    above = cdf >= 0.5 * cdf[-1, :]
    median_idx = above.argmax(axis=0)
    return sorted_preds[median_idx, np.arange(predictions.shape[1])]


def predict_boosted(model: BoostedModel, x: Sequence[float]) -> float:
    """Predict one feature vector as the weighted median of stage outputs."""
    return float(predict_boosted_batch(model, np.asarray(x, dtype=np.float64)[None, :])[0])


def predict_boosted_batch(model: BoostedModel, X: np.ndarray) -> np.ndarray:
    """Predict a feature matrix, one value per row."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.feature_names):
        raise ValueError(f"expected an (n, {len(model.feature_names)}) feature matrix")
    predictions = np.vstack([predict_tree_batch(s.tree, X) for s in model.stages])
    weights = np.array([s.weight for s in model.stages])
    return _weighted_median_columns(predictions, weights)


# ----- scoring and validation schemes ---------------------------------------


@dataclass(frozen=True)
class ModelMetrics:
    """Validation outcome: coefficient of determination over held-out rows."""

    r2: float
    n_samples: int
    scheme: str


def r2_score(predictions: Sequence[float], targets: Sequence[float]) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    preds = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if preds.shape != y.shape or y.ndim != 1 or len(y) == 0:
        raise ValueError("predictions and targets must be equal-length non-empty vectors")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise UndefinedScoreError("targets are constant")
    ss_res = float(np.sum((y - preds) ** 2))
    return 1.0 - ss_res / ss_tot


def kfold_indices(n: int, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffle once and partition into k near-equal disjoint folds."""
    if not 2 <= k <= n:
        raise ValueError(f"k must be between 2 and the number of rows, got {k}")
    return np.array_split(rng.permutation(n), k)


def _make_fitter(
    model_kind: str, hyper: Hyperparameters
) -> Callable[[Dataset, np.random.Generator], Callable[[np.ndarray], np.ndarray]]:
    if model_kind == "boosted":
        def fit(train: Dataset, fold_rng: np.random.Generator):
            model = fit_boosted(
                train,
                fold_rng,
                n_estimators=hyper.n_estimators,
                max_depth=hyper.max_depth,
                min_samples_leaf=hyper.min_samples_leaf,
                learning_rate=hyper.learning_rate,
            )
            return lambda X: predict_boosted_batch(model, X)
    elif model_kind == "tree":
        def fit(train: Dataset, fold_rng: np.random.Generator):
            tree = fit_tree(train, hyper.max_depth, hyper.min_samples_leaf)
            return lambda X: predict_tree_batch(tree, X)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    return fit


def kfold_cv(
    data: Dataset,
    k: int,
    rng: np.random.Generator,
    *,
    model_kind: str = "boosted",
    hyper: Hyperparameters | None = None,
) -> ModelMetrics:
    """K-fold cross-validation, scoring R2 over the pooled held-out predictions.

    Folds are fitted with independently derived seeds, so they could run
    concurrently without changing the result.
    """
    hyper = hyper or Hyperparameters()
    folds = kfold_indices(len(data), k, rng)
    fold_seeds = rng.integers(0, 2**63, size=len(folds))
    fit = _make_fitter(model_kind, hyper)
    pooled = np.empty(len(data), dtype=np.float64)
    for fold, seed in zip(folds, fold_seeds):
        mask = np.ones(len(data), dtype=bool)
        mask[fold] = False
        predictor = fit(data.subset(np.flatnonzero(mask)), np.random.default_rng(seed))
        pooled[fold] = predictor(data.features[fold])
    return ModelMetrics(
        r2=r2_score(pooled, data.targets),
        n_samples=len(data),
        scheme=f"{k}-fold cross-validation",
    )


def split_train_test(
    data: Dataset, train_fraction: float, rng: np.random.Generator
) -> tuple[Dataset, Dataset]:
    """Shuffled split with ceil(fraction * n) training rows."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(data)
    n_train = math.ceil(train_fraction * n)
    if n_train <= 0 or n_train >= n:
        raise ValueError(
            f"train fraction {train_fraction} leaves an empty part for {n} rows"
        )
    perm = rng.permutation(n)
    return data.subset(perm[:n_train]), data.subset(perm[n_train:])


# ----- persistence -----------------------------------------------------------


def _node_to_dict(node: TreeNode) -> dict[str, Any]:
    if node.is_leaf:
        return {"value": node.value}
    return {
        "feature": node.feature,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(doc: Any) -> TreeNode:
    if not isinstance(doc, dict):
        raise ModelFormatError("tree node must be a mapping")
    if "value" in doc:
        return TreeNode(value=float(doc["value"]))
    try:
        return TreeNode(
            feature=int(doc["feature"]),
            threshold=float(doc["threshold"]),
            left=_node_from_dict(doc["left"]),
            right=_node_from_dict(doc["right"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed tree node: {exc}") from exc


def model_to_dict(model: BoostedModel) -> dict[str, Any]:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_names": list(model.feature_names),
        "loss": model.loss,
        "hyperparameters": asdict(model.hyperparameters),
        "stages": [
            {"weight": s.weight, "tree": _node_to_dict(s.tree.root)}
            for s in model.stages
        ],
    }


def model_from_dict(doc: Any) -> BoostedModel:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError(f"not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        feature_names = tuple(str(n) for n in doc["feature_names"])
        hyper = Hyperparameters(**doc["hyperparameters"])
        stages = tuple(
            BoostStage(
                RegressionTree(
                    _node_from_dict(entry["tree"]),
                    len(feature_names),
                    hyper.max_depth,
                    hyper.min_samples_leaf,
                ),
                float(entry["weight"]),
            )
            for entry in doc["stages"]
        )
        loss = str(doc.get("loss", LINEAR_LOSS))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    if not stages:
        raise ModelFormatError("model has no stages")
    return BoostedModel(feature_names, stages, hyper, loss)


def model_to_json(model: BoostedModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


def save_model(model: BoostedModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(model_to_json(model))


def load_model(path: str) -> BoostedModel:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise ModelFormatError(f"cannot read model: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    return model_from_dict(doc)
