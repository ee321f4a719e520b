"""Stacking combiner for the three-detector defense: a one-hidden-layer
scorer mapping [detector scores, image statistics] to a fake-probability.

Trained by full-batch gradient descent on cross-entropy; deterministic
given the seed. The analytic gradients are verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

_P_EPS = 1e-12  # keeps predicted probabilities strictly inside (0, 1)


@dataclass(frozen=True)
class CombinerHyper:
    hidden: int = 16
    learning_rate: float = 0.5
    epochs: int = 300
    seed: int = 0
    l2: float = 1e-4

    def __post_init__(self):
        if self.hidden < 1 or self.epochs < 1 or self.learning_rate <= 0 or self.l2 < 0:
            raise ValidationError("bad combiner hyperparameters")


@dataclass(frozen=True)
class CombinerModel:
    """tanh hidden layer, sigmoid output. Parameter count is
    (d*h + h) + (h + 1) for input dimension d and width h."""

    w1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h,)
    b2: float

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden(self) -> int:
        return self.w1.shape[0]

    @property
    def n_parameters(self) -> int:
        d, h = self.input_dim, self.hidden
        return (d * h + h) + (h + 1)

    def logits(self, x: np.ndarray) -> np.ndarray:
        a1 = np.tanh(x @ self.w1.T + self.b1)
        return a1 @ self.w2 + self.b2

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Fake-probability per row, clipped strictly inside (0, 1)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = 1.0 / (1.0 + np.exp(-self.logits(x)))
        return np.clip(p, _P_EPS, 1.0 - _P_EPS)

    def score_one(self, features) -> float:
        return float(self.predict_proba(np.asarray(features, dtype=float))[0])

    # -- parameter vector helpers (finite-difference checks, persistence) --

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    @staticmethod
    def unflatten(theta: np.ndarray, d: int, h: int) -> "CombinerModel":
        w1, rest = theta[: d * h].reshape(h, d), theta[d * h:]
        b1, rest = rest[:h], rest[h:]
        w2, b2 = rest[:h], rest[h]
        return CombinerModel(w1=w1, b1=b1, w2=w2, b2=float(b2))


def loss_value(model: CombinerModel, x: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean cross-entropy + L2 on the weights (biases unpenalized).
    Computed from logits for numerical stability."""
    z = model.logits(x)
    ce = np.mean(np.logaddexp(0.0, z) - y * z)
    reg = 0.5 * l2 * (float(np.sum(model.w1**2)) + float(np.sum(model.w2**2)))
    return float(ce + reg)


def loss_gradients(
    model: CombinerModel, x: np.ndarray, y: np.ndarray, l2: float
) -> CombinerModel:
    """Analytic gradient of loss_value with respect to every parameter,
    returned in the same shapes as the model."""
    n = x.shape[0]
    a1 = np.tanh(x @ model.w1.T + model.b1)  # (n, h)
    z = a1 @ model.w2 + model.b2
    p = 1.0 / (1.0 + np.exp(-z))
    dz = (p - y) / n  # (n,)

    gw2 = a1.T @ dz + l2 * model.w2
    gb2 = float(np.sum(dz))
    da1 = np.outer(dz, model.w2)  # (n, h)
    dz1 = da1 * (1.0 - a1**2)
    gw1 = dz1.T @ x + l2 * model.w1
    gb1 = dz1.sum(axis=0)
    return CombinerModel(w1=gw1, b1=gb1, w2=gw2, b2=gb2)


@dataclass(frozen=True)
class TrainingResult:
    model: CombinerModel
    final_loss: float
    loss_curve: tuple[float, ...] = field(repr=False)


def init_model(d: int, h: int, seed: int) -> CombinerModel:
    rng = np.random.default_rng(seed)
    return CombinerModel(
        w1=rng.normal(scale=0.5, size=(h, d)),
        b1=np.zeros(h),
        w2=rng.normal(scale=0.5, size=h),
        b2=0.0,
    )


def dd3_train(
    features: np.ndarray, labels: np.ndarray, hyper: CombinerHyper | None = None
) -> TrainingResult:
    """Train the stacking combiner on (features, fake=1/real=0) rows."""
    hyper = hyper or CombinerHyper()
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ValidationError("features must be (n, d) with one label per row")
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise ValidationError("training rows must be finite")
    if np.sum(y == 1) < 2 or np.sum(y == 0) < 2:
        raise ValidationError("need at least 2 rows of each class")

    model = init_model(x.shape[1], hyper.hidden, hyper.seed)
    curve = [loss_value(model, x, y, hyper.l2)]
    for _ in range(hyper.epochs):
        g = loss_gradients(model, x, y, hyper.l2)
        model = CombinerModel(
            w1=model.w1 - hyper.learning_rate * g.w1,
            b1=model.b1 - hyper.learning_rate * g.b1,
            w2=model.w2 - hyper.learning_rate * g.w2,
            b2=model.b2 - hyper.learning_rate * g.b2,
        )
        curve.append(loss_value(model, x, y, hyper.l2))
    return TrainingResult(model=model, final_loss=curve[-1], loss_curve=tuple(curve))


def save_model(result_or_model, path: str | Path) -> None:
    model = result_or_model.model if isinstance(result_or_model, TrainingResult) else result_or_model
    doc = {
        "w1": model.w1.tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.tolist(),
        "b2": model.b2,
    }
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> CombinerModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return CombinerModel(
        w1=np.asarray(doc["w1"], dtype=float),
        b1=np.asarray(doc["b1"], dtype=float),
        w2=np.asarray(doc["w2"], dtype=float),
        b2=float(doc["b2"]),
    )
