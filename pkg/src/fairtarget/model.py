"""Logistic regression trained on the target-label marginalized likelihood.

The classifier scores the fair label, ``cbar = P(ybar=1 | x) = sigmoid(<x, theta> + theta0)``.
Training only sees biased labels ``y``, so the score is pushed through the
per-group debiasing map

    P(y=1 | x, s) = d0[s] * (1 - cbar) + d1[s] * cbar

and the Bernoulli likelihood of ``y`` under that probability is maximized.
With identity debiasing parameters this is plain logistic regression.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .core import Dataset, DebiasingParams, SensitiveGroup, validate_dataset
from .data import Normalizer, fit_normalizer_arrays
from .errors import (
    ConfigError,
    DimMismatch,
    EmptyBatch,
    FeatureMismatch,
    MissingSensitive,
    NonFinite,
)

LIKELIHOOD_EPS = 1e-12
FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelParams:
    theta: np.ndarray
    theta0: float = 0.0

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if not (np.isfinite(theta).all() and math.isfinite(self.theta0)):
            raise NonFinite("model parameters must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "theta0", float(self.theta0))

    @classmethod
    def zeros(cls, dim: int) -> "ModelParams":
        return cls(np.zeros(dim), 0.0)

    def flat(self) -> np.ndarray:
        return np.append(self.theta, self.theta0)

    @classmethod
    def from_flat(cls, v: np.ndarray) -> "ModelParams":
        return cls(v[:-1], float(v[-1]))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int | None = None  # None: full batch
    learning_rate: float = 1e-2
    l2: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    use_s: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not self.l2 >= 0:
            raise ConfigError("l2 must be non-negative")
        for b in (self.adam_beta1, self.adam_beta2):
            if not 0.0 < b < 1.0:
                raise ConfigError("Adam betas must lie in (0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Model:
    params: ModelParams
    debias: DebiasingParams
    normalization: Normalizer
    feature_names: tuple[str, ...]
    use_s: bool
    train_config: TrainConfig
    final_train_loss: float
    loss_history: tuple[float, ...] = field(default=())
    encoding_meta: tuple = field(default=())

    def __post_init__(self):
        if len(self.normalization.means) != len(self.params.theta):
            raise DimMismatch("normalization arity differs from weight vector length")
        expected = len(self.feature_names) + (1 if self.use_s else 0)
        if expected != len(self.params.theta):
            raise DimMismatch("feature names do not match weight vector length")

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "weights": self.params.theta.tolist(),
            "bias": self.params.theta0,
            "normalization": self.normalization.to_dict(),
            "feature_names": list(self.feature_names),
            "use_s": self.use_s,
            "debias": self.debias.to_dict(),
            "train_config": self.train_config.to_dict(),
            "final_train_loss": self.final_train_loss,
            "loss_history": list(self.loss_history),
            "encoding_meta": [dict(m) for m in self.encoding_meta],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Model":
        if d.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported model format {d.get('format_version')!r}")
        return cls(
            params=ModelParams(np.array(d["weights"], dtype=np.float64), d["bias"]),
            debias=DebiasingParams.from_dict(d["debias"]),
            normalization=Normalizer.from_dict(d["normalization"]),
            feature_names=tuple(d["feature_names"]),
            use_s=bool(d["use_s"]),
            train_config=TrainConfig.from_dict(d["train_config"]),
            final_train_loss=float(d["final_train_loss"]),
            loss_history=tuple(float(v) for v in d.get("loss_history", ())),
            encoding_meta=tuple(d.get("encoding_meta", ())),
        )


def save_model(model: Model, path: str | Path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1)
        fh.write("\n")


def load_model(path: str | Path) -> Model:
    with open(path, encoding="utf-8") as fh:
        return Model.from_dict(json.load(fh))


# -- likelihood --------------------------------------------------------------


def score(params: ModelParams, x) -> np.ndarray | float:
    """``sigmoid(<x, theta> + theta0)`` for one row or a matrix of rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != len(params.theta):
        raise DimMismatch(f"x has {x.shape[-1]} features, model expects {len(params.theta)}")
    out = expit(x @ params.theta + params.theta0)
    return float(out) if np.ndim(out) == 0 else out


def marginalize(cbar, s, debias: DebiasingParams):
    """Observed-label probability ``P(y=1 | x, s)`` from the fair score."""
    d0, d1 = debias.arrays()
    s_idx = np.asarray(s, dtype=np.intp)
    cbar = np.asarray(cbar, dtype=np.float64)
    out = d0[s_idx] * (1.0 - cbar) + d1[s_idx] * cbar
    return float(out) if np.ndim(out) == 0 else out


def _batch_arrays(batch) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(batch, Dataset):
        x, y, s = batch.x, batch.y, batch.s
    elif isinstance(batch, tuple) and len(batch) == 3:
        x, y, s = (np.asarray(a) for a in batch)
    else:
        examples = list(batch)
        if not examples:
            raise EmptyBatch("batch is empty")
        x = np.array([ex.features for ex in examples], dtype=np.float64)
        y = np.array([ex.y for ex in examples])
        s = np.array([int(ex.s) for ex in examples])
    if len(y) == 0:
        raise EmptyBatch("batch is empty")
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), np.asarray(s, dtype=np.intp)


def _forward(x, y, s, params: ModelParams, debias: DebiasingParams):
    if x.shape[1] != len(params.theta):
        raise DimMismatch(f"batch has {x.shape[1]} features, model expects {len(params.theta)}")
    cbar = expit(x @ params.theta + params.theta0)
    p_y1 = marginalize(cbar, s, debias)
    lik = y * p_y1 + (1.0 - y) * (1.0 - p_y1)
    return cbar, lik


def nll_loss(batch, params: ModelParams, debias: DebiasingParams, l2: float = 0.0) -> float:
    """Mean negative log marginal likelihood plus ``l2 * ||theta||^2``.

    ``batch`` is a :class:`Dataset`, an ``(x, y, s)`` tuple or a sequence of
    :class:`LabeledExample`. The bias ``theta0`` is not penalized.
    """
    x, y, s = _batch_arrays(batch)
    _, lik = _forward(x, y, s, params, debias)
    lik = np.clip(lik, LIKELIHOOD_EPS, 1.0 - LIKELIHOOD_EPS)
    return float(np.mean(-np.log(lik)) + l2 * np.dot(params.theta, params.theta))


def grad_nll(
    batch, params: ModelParams, debias: DebiasingParams, l2: float = 0.0
) -> tuple[np.ndarray, float]:
    """Analytic gradient of :func:`nll_loss` w.r.t. ``(theta, theta0)``."""
    x, y, s = _batch_arrays(batch)
    cbar, lik = _forward(x, y, s, params, debias)
    d0, d1 = debias.arrays()
    slope = (d1 - d0)[s]
    inside = (lik > LIKELIHOOD_EPS) & (lik < 1.0 - LIKELIHOOD_EPS)
    # d(-log lik)/dz, zero where the clamp is active
    dz = np.zeros_like(lik)
    dz[inside] = (
        -(2.0 * y[inside] - 1.0) * slope[inside] * cbar[inside] * (1.0 - cbar[inside]) / lik[inside]
    )
    n = len(y)
    g_theta = x.T @ dz / n + 2.0 * l2 * params.theta
    g_theta0 = float(dz.sum() / n)
    return g_theta, g_theta0


# -- optimizer ---------------------------------------------------------------


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(
    state: AdamState,
    params: np.ndarray,
    grad: np.ndarray,
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update on a flat parameter vector."""
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    new = params - learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), new


# -- training and prediction -------------------------------------------------


def design_matrix(x: np.ndarray, s: np.ndarray | None, use_s: bool) -> np.ndarray:
    if not use_s:
        return np.asarray(x, dtype=np.float64)
    return np.hstack([np.asarray(x, dtype=np.float64), np.asarray(s, dtype=np.float64).reshape(-1, 1)])


def train(dataset: Dataset, debias: DebiasingParams, config: TrainConfig = TrainConfig()) -> Model:
    """Minibatch Adam on the marginalized likelihood, starting from zero weights.

    Continuous columns are z-scored with statistics fitted on ``dataset``;
    with ``use_s`` the group indicator is appended as an extra unscaled
    column. The recorded loss history holds the full-data loss after each
    epoch. Identical inputs give bit-identical models.
    """
    validate_dataset(dataset)
    continuous = dataset.continuous_mask
    norm = fit_normalizer_arrays(dataset.x, continuous)
    if config.use_s:
        norm = norm.extended(1)
    x = norm.transform(design_matrix(dataset.x, dataset.s, config.use_s))
    y, s = dataset.y, dataset.s
    n, dim = x.shape
    batch_size = n if config.batch_size is None else min(config.batch_size, n)
    rng = np.random.default_rng(config.seed)

    flat = ModelParams.zeros(dim).flat()
    state = AdamState.zeros(dim + 1)
    history = []
    for _ in range(config.epochs):
        order = np.arange(n) if batch_size == n else rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            g_theta, g_theta0 = grad_nll(
                (x[idx], y[idx], s[idx]), ModelParams.from_flat(flat), debias, config.l2
            )
            grad = np.append(g_theta, g_theta0)
            state, flat = adam_step(
                state, flat, grad, config.learning_rate,
                config.adam_beta1, config.adam_beta2, config.adam_eps,
            )
            if not np.isfinite(flat).all():
                raise NonFinite("parameters became non-finite during training")
        loss = nll_loss((x, y, s), ModelParams.from_flat(flat), debias, config.l2)
        if not math.isfinite(loss):
            raise NonFinite("training loss became non-finite")
        history.append(loss)

    return Model(
        params=ModelParams.from_flat(flat),
        debias=debias,
        normalization=norm,
        feature_names=dataset.feature_names,
        use_s=config.use_s,
        train_config=config,
        final_train_loss=history[-1],
        loss_history=tuple(history),
        encoding_meta=tuple(dataset.encoding_meta),
    )


def predict_scores(model: Model, x, s=None) -> np.ndarray:
    """Fair scores ``P(ybar=1 | x)`` for raw (unnormalized) feature rows."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if model.use_s:
        if s is None:
            raise MissingSensitive("model was trained with s as an input; pass s")
        s = np.broadcast_to(np.asarray(s, dtype=np.float64).reshape(-1), (len(x),))
    n_features = len(model.feature_names)
    if x.shape[1] != n_features:
        raise FeatureMismatch(f"expected {n_features} features, got {x.shape[1]}")
    z = model.normalization.transform(design_matrix(x, s, model.use_s))
    return expit(z @ model.params.theta + model.params.theta0)


def predict(model: Model, x, s: SensitiveGroup | int | None = None) -> tuple[int, float]:
    """``(label, score)`` for one raw feature vector; ``label = score > 0.5``."""
    sc = float(predict_scores(model, np.asarray(x).reshape(1, -1), None if s is None else [int(s)])[0])
    return int(sc > 0.5), sc


def predict_labels(model: Model, x, s=None) -> np.ndarray:
    return (predict_scores(model, x, s) > 0.5).astype(np.int8)


def check_features(model: Model, feature_names: Sequence[str]) -> None:
    if tuple(feature_names) != model.feature_names:
        raise FeatureMismatch("dataset features differ from the model's training features")
