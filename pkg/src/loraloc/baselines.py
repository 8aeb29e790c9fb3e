"""Supervised localization baselines and the shared evaluation metrics.

All models consume the normalized feature matrix produced by the dataset
pipeline (RSSI columns, optionally + the SF scalar) and predict planar
positions in meters. The DNN regresses normalized coordinates with an
MAE objective; KNN, ridge, and the depth-capped regression tree work on
meters directly.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.tree import DecisionTreeRegressor

from .data import Normalizer
from .nn import (
    AdamState,
    Network,
    TrainingDivergedError,
    adam_step,
    backend,
    backward,
    forward,
    init_network,
    mae_loss,
    stack_specs,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DnnConfig:
    """The baseline regressor stack (hidden ReLU layers, linear 2-unit output)."""

    input_dim: int
    hidden: Tuple[int, ...] = (512, 256, 128, 64, 32)
    dropout: Tuple[float, ...] = (0.3, 0.2, 0.1)
    learning_rate: float = 0.0005
    beta1: float = 0.1
    beta2: float = 0.99
    batch_size: int = 512
    output_dim: int = 2


@dataclass
class LossCurvePoint:
    epoch: int
    train_mae: float
    val_mae: float


@dataclass(frozen=True)
class EvalReport:
    """Mean distance error plus the sorted per-sample errors (CDF support)."""

    mde_m: float
    error_samples_m: np.ndarray
    loss_curve: Optional[List[LossCurvePoint]] = None


@dataclass
class DnnModel:
    net: Network
    normalizer: Normalizer
    with_sf: bool

    def predict(self, features: np.ndarray) -> np.ndarray:
        out, _ = forward(self.net, features, mode="eval")
        return self.normalizer.denormalize_positions(out)


def train_dnn(
    config: DnnConfig,
    normalizer: Normalizer,
    train_features: np.ndarray,
    train_positions_m: np.ndarray,
    val_features: np.ndarray,
    val_positions_m: np.ndarray,
    epochs: int,
    seed: int = 0,
    with_sf: bool = True,
    patience: Optional[int] = None,
) -> Tuple[DnnModel, List[LossCurvePoint]]:
    """Minimize MAE of predicted vs true normalized coordinates with Adam.

    Returns the model and the per-epoch train/validation MAE curve. No
    early stopping unless `patience` is given.
    """
    if train_features.shape[1] != config.input_dim:
        raise ValueError(f"feature dim {train_features.shape[1]} != config input_dim {config.input_dim}")
    net = init_network(stack_specs(config.input_dim, config.hidden, config.output_dim, config.dropout), seed)
    adam = AdamState.for_network(net, config.learning_rate, config.beta1, config.beta2)
    rng = np.random.default_rng(seed)
    y_train = normalizer.normalize_positions(train_positions_m)
    y_val = normalizer.normalize_positions(val_positions_m)
    n = len(train_features)
    curve: List[LossCurvePoint] = []
    best_val, since_best = np.inf, 0
    with backend.single_thread_blas():
        for epoch in range(epochs):
            order = rng.permutation(n)
            abs_sum, count = 0.0, 0
            for start in range(0, n, config.batch_size):
                idx = order[start : start + config.batch_size]
                x = np.ascontiguousarray(train_features[idx])
                out, cache = forward(net, x, mode="train", rng=rng)
                loss, grad = mae_loss(out, y_train[idx])
                if not np.isfinite(loss):
                    raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
                abs_sum += loss * out.size
                count += out.size
                adam_step(adam, net, backward(net, cache, grad))
            val_out, _ = forward(net, val_features, mode="eval")
            val_mae = mae_loss(val_out, y_val)[0] if len(val_features) else float("nan")
            curve.append(LossCurvePoint(epoch=epoch, train_mae=abs_sum / count, val_mae=val_mae))
            if patience is not None and len(val_features):
                if val_mae < best_val - 1e-12:
                    best_val, since_best = val_mae, 0
                else:
                    since_best += 1
                    if since_best >= patience:
                        log.info("early stop at epoch %d (no val improvement for %d epochs)", epoch, patience)
                        break
    return DnnModel(net=net, normalizer=normalizer, with_sf=with_sf), curve


@dataclass
class KnnModel:
    """Mean position of the K nearest training fingerprints (Euclidean features)."""

    features: np.ndarray
    positions_m: np.ndarray
    k: int = 11

    def __post_init__(self):
        if len(self.features) == 0:
            raise ValueError("empty training set")
        if self.k < 1 or self.k > len(self.features):
            raise ValueError(f"k must be in 1..{len(self.features)}")

    def predict(self, queries: np.ndarray, chunk: int = 512) -> np.ndarray:
        q = np.atleast_2d(queries)
        out = np.empty((len(q), 2))
        for start in range(0, len(q), chunk):
            block = q[start : start + chunk]
            d2 = (
                (block * block).sum(axis=1)[:, None]
                - 2.0 * block @ self.features.T
                + (self.features * self.features).sum(axis=1)[None, :]
            )
            # stable sort keeps equal-distance neighbors in index order
            nearest = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
            out[start : start + chunk] = self.positions_m[nearest].mean(axis=1)
        return out


def knn_predict(train_features, train_positions_m, query, k: int = 11) -> np.ndarray:
    return KnnModel(np.asarray(train_features), np.asarray(train_positions_m), k).predict(query)


@dataclass
class RidgeModel:
    """Linear least squares with L2 shrinkage; the bias row is unpenalized."""

    weights: np.ndarray  # (d + 1, 2), last row is the bias

    def predict(self, queries: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(queries)
        return q @ self.weights[:-1] + self.weights[-1]


def ridge_fit(train_features, train_positions_m, lam: float = 1.0) -> RidgeModel:
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    x = np.atleast_2d(np.asarray(train_features, dtype=np.float64))
    y = np.atleast_2d(np.asarray(train_positions_m, dtype=np.float64))
    a = np.column_stack([x, np.ones(len(x))])
    gram = a.T @ a
    penalty = np.eye(a.shape[1]) * lam
    penalty[-1, -1] = 0.0
    try:
        weights = np.linalg.solve(gram + penalty, a.T @ y)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular normal equations (lambda={lam}); increase lambda") from exc
    return RidgeModel(weights=weights)


@dataclass
class TreeModel:
    """CART regression tree (axis-aligned variance-reduction splits, leaf means)."""

    tree: DecisionTreeRegressor

    def predict(self, queries: np.ndarray) -> np.ndarray:
        return self.tree.predict(np.atleast_2d(queries))

    def depth(self) -> int:
        return int(self.tree.get_depth())


def tree_fit(train_features, train_positions_m, max_depth: int = 10, seed: int = 0) -> TreeModel:
    if len(train_features) == 0:
        raise ValueError("empty training set")
    tree = DecisionTreeRegressor(max_depth=max_depth, criterion="squared_error", random_state=seed)
    tree.fit(np.asarray(train_features), np.asarray(train_positions_m))
    return TreeModel(tree=tree)


@dataclass
class CentroidModel:
    """Predicts the training centroid everywhere (the no-information floor)."""

    centroid: np.ndarray

    def predict(self, queries: np.ndarray) -> np.ndarray:
        return np.tile(self.centroid, (len(np.atleast_2d(queries)), 1))


def centroid_fit(train_positions_m) -> CentroidModel:
    return CentroidModel(centroid=np.asarray(train_positions_m).mean(axis=0))


def distance_errors(predicted_m: np.ndarray, true_m: np.ndarray) -> np.ndarray:
    diff = np.atleast_2d(predicted_m) - np.atleast_2d(true_m)
    return np.hypot(diff[:, 0], diff[:, 1])


def evaluate(model, test_features: np.ndarray, test_positions_m: np.ndarray,
             loss_curve: Optional[List[LossCurvePoint]] = None) -> EvalReport:
    """Per-sample Euclidean error in the projected plane, sorted for CDF plotting."""
    errors = distance_errors(model.predict(test_features), test_positions_m)
    return EvalReport(mde_m=float(errors.mean()), error_samples_m=np.sort(errors), loss_curve=loss_curve)


def report_from_errors(errors_m: Sequence[float]) -> EvalReport:
    errors = np.sort(np.asarray(errors_m, dtype=np.float64))
    return EvalReport(mde_m=float(errors.mean()), error_samples_m=errors)
