"""Predictors and the multi-resolution attention ensemble.

The reference predictor mean-pools the featurized events and applies a
one-hidden-layer network (ReLU, then a logistic head for classification or
an identity head for regression).  It is deliberately small: forward,
parameter gradients, and input gradients are all closed-form numpy, which
keeps seeded training bit-reproducible and finite-difference checks cheap.

The ensemble evaluates one shared predictor on K coarsened views of the
input and combines the per-view predictions with attention weights
computed from simple per-view descriptors; the attention map's weights are
the only parameters beyond the shared predictor's.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .augment import AugmentConfig, fast_augment
from .coarsen import CoarseningSpec, GridUnusableError, coarsen
from .codec import FeatureCodec, featurize, featurize_rows
from .core import EventSequence, LabeledSequence

DEFAULT_RESOLUTIONS = (1.0, 0.5, 0.25, 0.125)

CLASSIFICATION = "classification"
REGRESSION = "regression"


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def pooled_matrix(seqs, codec: FeatureCodec) -> np.ndarray:
    """Mean-pooled feature vector per sequence, one encoding pass."""
    sizes = np.array([len(s) for s in seqs], dtype=np.intp)
    starts = np.zeros(sizes.shape[0], dtype=np.intp)
    np.cumsum(sizes[:-1], out=starts[1:])
    rows = featurize_rows(
        np.concatenate([s.t for s in seqs]),
        np.vstack([s.x for s in seqs]),
        np.vstack([s.mask for s in seqs]),
        np.concatenate([s.c for s in seqs]),
        starts,
        codec,
    )
    return np.add.reduceat(rows, starts, axis=0) / sizes[:, None]


class Predictor(ABC):
    """Maps a featurized sequence (T x d) to s outputs.

    Classification outputs are probabilities in [0, 1]; regression outputs
    are unbounded reals.
    """

    task: str

    @abstractmethod
    def forward(self, features: np.ndarray) -> np.ndarray:
        """Predict from one T x d feature matrix; returns shape (s,)."""

    @abstractmethod
    def input_gradient(self, features: np.ndarray, label) -> np.ndarray:
        """Gradient of the per-sequence loss w.r.t. the feature matrix."""

    @abstractmethod
    def n_parameters(self) -> int:
        """Total trainable parameter count."""


class ReferencePredictor(Predictor):
    """Mean-pool over events, one ReLU hidden layer, task-specific head."""

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray, task: str):
        if task not in (CLASSIFICATION, REGRESSION):
            raise ValueError(f"unknown task {task!r}")
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        self.task = task

    @classmethod
    def initialize(
        cls, dim: int, hidden: int, outputs: int, task: str, rng: np.random.Generator
    ) -> "ReferencePredictor":
        w1 = rng.normal(0.0, 1.0, (dim, hidden)) / np.sqrt(dim)
        w2 = rng.normal(0.0, 1.0, (hidden, outputs)) / np.sqrt(hidden)
        return cls(w1, np.zeros(hidden), w2, np.zeros(outputs), task)

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    @property
    def outputs(self) -> int:
        return self.w2.shape[1]

    def n_parameters(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def parameters(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def raw_scores_pooled(self, pooled: np.ndarray) -> np.ndarray:
        """Head pre-activations for a batch of pooled vectors (n x d)."""
        z = pooled @ self.w1 + self.b1
        return np.maximum(z, 0.0) @ self.w2 + self.b2

    def raw_score(self, features: np.ndarray) -> np.ndarray:
        """Head pre-activation for one sequence's feature matrix."""
        return self.raw_scores_pooled(features.mean(axis=0, keepdims=True))[0]

    def forward_pooled(self, pooled: np.ndarray) -> np.ndarray:
        """Batch predictions from pooled vectors (n x d) -> (n x s)."""
        o = self.raw_scores_pooled(pooled)
        return _sigmoid(o) if self.task == CLASSIFICATION else o

    def forward(self, features: np.ndarray) -> np.ndarray:
        return self.forward_pooled(features.mean(axis=0, keepdims=True))[0]

    def predict(self, seq: EventSequence, codec: FeatureCodec) -> np.ndarray:
        return self.forward(featurize(seq, codec))

    def input_gradient(self, features: np.ndarray, label) -> np.ndarray:
        label = np.atleast_1d(np.asarray(label, dtype=np.float64))
        pooled = features.mean(axis=0, keepdims=True)
        z = pooled @ self.w1 + self.b1
        o = np.maximum(z, 0.0) @ self.w2 + self.b2
        if self.task == CLASSIFICATION:
            # sigmoid head + cross entropy: the usual (p - y) form
            d_out = _sigmoid(o) - label
        else:
            d_out = 2.0 * (o - label)
        d_hidden = (d_out @ self.w2.T) * (z > 0)
        d_pooled = d_hidden @ self.w1.T
        n = features.shape[0]
        return np.repeat(d_pooled / n, n, axis=0)

    def _losses(self, o: np.ndarray, labels: np.ndarray) -> np.ndarray:
        if self.task == CLASSIFICATION:
            p = np.clip(_sigmoid(o), 1e-12, 1.0 - 1e-12)
            return -(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p))
        return (o - labels) ** 2

    def loss_pooled(self, pooled: np.ndarray, labels: np.ndarray) -> float:
        """Mean per-sequence loss over a batch of pooled vectors."""
        return float(self._losses(self.raw_scores_pooled(pooled), labels).sum(axis=1).mean())

    def _batch_grads(self, pooled: np.ndarray, labels: np.ndarray):
        """Loss and parameter gradients on one mini-batch."""
        n = pooled.shape[0]
        z = pooled @ self.w1 + self.b1
        a = np.maximum(z, 0.0)
        o = a @ self.w2 + self.b2
        losses = self._losses(o, labels)
        if self.task == CLASSIFICATION:
            d_out = (np.clip(_sigmoid(o), 1e-12, 1.0 - 1e-12) - labels) / n
        else:
            d_out = 2.0 * (o - labels) / n
        loss = float(losses.sum(axis=1).mean())
        return loss, self._backprop_from_head(pooled, z, a, d_out)

    def _backprop_from_head(self, pooled, z, a, d_out) -> list[np.ndarray]:
        g_w2 = a.T @ d_out
        g_b2 = d_out.sum(axis=0)
        d_hidden = (d_out @ self.w2.T) * (z > 0)
        g_w1 = pooled.T @ d_hidden
        g_b1 = d_hidden.sum(axis=0)
        return [g_w1, g_b1, g_w2, g_b2]


def attention_weights(descriptors: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Normalized exponentials of linear scores over per-view descriptors.

    descriptors is K x 3; the result is a strictly positive probability
    vector of length K.
    """
    scores = np.asarray(descriptors, dtype=np.float64) @ np.asarray(beta, dtype=np.float64)
    scores = scores - scores.max()
    e = np.exp(scores)
    return e / e.sum()


def view_descriptor(view: EventSequence, p: float) -> np.ndarray:
    """Simple per-view features driving attention: length, rate, emptiness."""
    empty = float(np.mean(view.c == 0))
    return np.array([np.log(len(view) + 1.0), p, empty])


def coarsen_view(seq: EventSequence, mode: str, p: float) -> EventSequence:
    """One resolution view; grid mode falls back to cluster mode when the
    grid is unusable (fewer than 2 cells or a degenerate window)."""
    if mode == "grid":
        try:
            return coarsen(seq, CoarseningSpec(mode="grid", p=p))
        except GridUnusableError:
            pass
    return coarsen(seq, CoarseningSpec(mode="cluster", p=p))


class MreModel:
    """Attention-weighted ensemble of one shared predictor over K resolutions."""

    def __init__(
        self,
        predictor: ReferencePredictor,
        beta: np.ndarray,
        resolutions: tuple[float, ...] = DEFAULT_RESOLUTIONS,
        mode: str = "cluster",
    ):
        if mode not in ("grid", "cluster"):
            raise ValueError(f"mode must be 'grid' or 'cluster', got {mode!r}")
        if not resolutions or any(not 0 < p <= 1 for p in resolutions):
            raise ValueError("resolutions must be a nonempty tuple of p in (0, 1]")
        self.predictor = predictor
        self.beta = np.asarray(beta, dtype=np.float64)
        self.resolutions = tuple(float(p) for p in resolutions)
        self.mode = mode

    @property
    def task(self) -> str:
        return self.predictor.task

    def n_parameters(self) -> int:
        return self.predictor.n_parameters() + self.beta.size

    def view_features(self, seq: EventSequence, codec: FeatureCodec):
        """Per-resolution feature matrices and descriptors."""
        features, descs = [], []
        for p in self.resolutions:
            view = coarsen_view(seq, self.mode, p)
            features.append(featurize(view, codec))
            descs.append(view_descriptor(view, p))
        return features, np.stack(descs)

    def forward_views(self, features: list[np.ndarray], descs: np.ndarray) -> np.ndarray:
        alpha = attention_weights(descs, self.beta)
        per_view = np.stack([self.predictor.forward(f) for f in features])
        return alpha @ per_view

    def predict(self, seq: EventSequence, codec: FeatureCodec) -> np.ndarray:
        return self.forward_views(*self.view_features(seq, codec))

    def input_gradients(
        self, features: list[np.ndarray], descs: np.ndarray, label
    ) -> list[np.ndarray]:
        """Loss gradient w.r.t. each view's feature matrix.

        The attention weights depend only on view structure (lengths,
        counts), not feature values, so no gradient flows through them.
        """
        label = np.atleast_1d(np.asarray(label, dtype=np.float64))
        alpha = attention_weights(descs, self.beta)
        pred = self.predictor
        outs = [pred.raw_score(f) for f in features]
        if self.task == CLASSIFICATION:
            per_view = [_sigmoid(o) for o in outs]
            g = np.clip(alpha @ np.stack(per_view), 1e-12, 1.0 - 1e-12)
            d_combined = (g - label) / (g * (1.0 - g))
        else:
            per_view = outs
            g = alpha @ np.stack(per_view)
            d_combined = 2.0 * (g - label)
        grads = []
        for k, f in enumerate(features):
            d_out = alpha[k] * d_combined
            if self.task == CLASSIFICATION:
                d_out = d_out * per_view[k] * (1.0 - per_view[k])
            pooled = f.mean(axis=0, keepdims=True)
            z = pooled @ pred.w1 + pred.b1
            d_hidden = (d_out @ pred.w2.T) * (z > 0)
            d_pooled = d_hidden @ pred.w1.T
            n = f.shape[0]
            grads.append(np.repeat(d_pooled / n, n, axis=0))
        return grads


def mre_predict(seq: EventSequence, model: MreModel, codec: FeatureCodec) -> np.ndarray:
    """Ensemble prediction g(X) = sum_k alpha_k f(view_k(X))."""
    return model.predict(seq, codec)


def input_gradient(predictor: Predictor, features: np.ndarray, label) -> np.ndarray:
    """Gradient of the loss at the given label w.r.t. the input features."""
    return predictor.input_gradient(features, label)


@dataclass(frozen=True)
class MreSettings:
    mode: str = "cluster"
    resolutions: tuple[float, ...] = DEFAULT_RESOLUTIONS


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    lr: float = 0.01
    momentum: float = 0.95
    batch_size: int = 100
    hidden: int = 64
    seed: int = 0
    task: str = CLASSIFICATION
    augment: AugmentConfig | None = None
    mre: MreSettings | None = None


@dataclass
class TrainResult:
    model: ReferencePredictor | MreModel
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)


def _label_matrix(data: list[LabeledSequence], task: str) -> np.ndarray:
    labels = []
    for item in data:
        if item.label is None:
            raise ValueError(f"sequence {item.sequence.id!r} has no label")
        labels.append(np.atleast_1d(np.asarray(item.label, dtype=np.float64)))
    y = np.stack(labels)
    if task == CLASSIFICATION and not np.all((y == 0) | (y == 1)):
        raise ValueError("classification labels must be 0/1")
    return y


def _mre_tensors(seqs, codec, settings: MreSettings):
    """Per-resolution pooled features (K,N,d) and descriptors (N,K,3)."""
    k = len(settings.resolutions)
    pooled = np.empty((k, len(seqs), codec.width))
    descs = np.empty((len(seqs), k, 3))
    for ki, p in enumerate(settings.resolutions):
        views = [coarsen_view(s, settings.mode, p) for s in seqs]
        pooled[ki] = pooled_matrix(views, codec)
        for i, view in enumerate(views):
            descs[i, ki] = view_descriptor(view, p)
    return pooled, descs


def _mre_batch_grads(predictor: ReferencePredictor, beta, pooled, descs, labels):
    """Loss and gradients (predictor params + beta) on one ensemble batch.

    pooled is K x B x d, descs is B x K x 3, labels B x s.  The attention
    path has no dependence on feature values (descriptors are structural),
    so its gradient flows only into beta.
    """
    n = labels.shape[0]
    k = pooled.shape[0]
    scores = descs @ beta
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    alpha = e / e.sum(axis=1, keepdims=True)

    zs, acts, outs = [], [], []
    for ki in range(k):
        z = pooled[ki] @ predictor.w1 + predictor.b1
        a = np.maximum(z, 0.0)
        o = a @ predictor.w2 + predictor.b2
        zs.append(z)
        acts.append(a)
        outs.append(_sigmoid(o) if predictor.task == CLASSIFICATION else o)
    per_view = np.stack(outs)
    combined = np.einsum("bk,kbs->bs", alpha, per_view)

    if predictor.task == CLASSIFICATION:
        g = np.clip(combined, 1e-12, 1.0 - 1e-12)
        losses = -(labels * np.log(g) + (1.0 - labels) * np.log(1.0 - g))
        d_combined = (g - labels) / (g * (1.0 - g)) / n
    else:
        losses = (combined - labels) ** 2
        d_combined = 2.0 * (combined - labels) / n
    loss = float(losses.sum(axis=1).mean())

    grads = [np.zeros_like(p) for p in predictor.parameters()]
    for ki in range(k):
        d_view = alpha[:, ki : ki + 1] * d_combined
        if predictor.task == CLASSIFICATION:
            d_out = d_view * per_view[ki] * (1.0 - per_view[ki])
        else:
            d_out = d_view
        for acc, g_part in zip(
            grads, predictor._backprop_from_head(pooled[ki], zs[ki], acts[ki], d_out)
        ):
            acc += g_part

    d_alpha = np.einsum("bs,kbs->bk", d_combined, per_view)
    d_scores = alpha * (d_alpha - (alpha * d_alpha).sum(axis=1, keepdims=True))
    g_beta = np.einsum("bkf,bk->f", descs, d_scores)
    return loss, grads, g_beta


def _mre_loss(predictor: ReferencePredictor, beta, pooled, descs, labels) -> float:
    scores = descs @ beta
    scores = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(scores)
    alpha = e / e.sum(axis=1, keepdims=True)
    per_view = np.stack([predictor.forward_pooled(pooled[ki]) for ki in range(pooled.shape[0])])
    combined = np.einsum("bk,kbs->bs", alpha, per_view)
    if predictor.task == CLASSIFICATION:
        g = np.clip(combined, 1e-12, 1.0 - 1e-12)
        losses = -(labels * np.log(g) + (1.0 - labels) * np.log(1.0 - g))
    else:
        losses = (combined - labels) ** 2
    return float(losses.sum(axis=1).mean())


def train(
    train_data: list[LabeledSequence],
    codec: FeatureCodec,
    config: TrainConfig,
    val_data: list[LabeledSequence] | None = None,
    epoch_callback=None,
) -> TrainResult:
    """Mini-batch SGD with fixed learning rate and momentum.

    With augmentation enabled, every training sequence is replaced by a
    fresh stochastic draw each epoch.  Initialization and batch shuffling
    draw from the config seed; augmentation draws from its own
    ``AugmentConfig.rng_seed`` stream, so toggling augmentation leaves the
    rest of the run paired.  A fixed seed pair reproduces the run bit for
    bit.  ``epoch_callback(epoch, model)`` runs after each update epoch.
    """
    if not train_data:
        raise ValueError("training split is empty")
    rng = np.random.default_rng(config.seed)
    rng_augment = (
        np.random.default_rng(config.augment.rng_seed) if config.augment is not None else None
    )
    y = _label_matrix(train_data, config.task)
    outputs = y.shape[1]
    predictor = ReferencePredictor.initialize(
        codec.width, config.hidden, outputs, config.task, rng
    )
    beta = np.zeros(3)
    model: ReferencePredictor | MreModel
    if config.mre is not None:
        model = MreModel(predictor, beta, config.mre.resolutions, config.mre.mode)
    else:
        model = predictor

    raw_train = [item.sequence for item in train_data]
    if config.augment is None:
        if config.mre is None:
            fixed_pooled = pooled_matrix(raw_train, codec)
        else:
            fixed_pooled, fixed_descs = _mre_tensors(raw_train, codec, config.mre)

    val_pooled = val_descs = y_val = None
    if val_data:
        y_val = _label_matrix(val_data, config.task)
        raw_val = [item.sequence for item in val_data]
        if config.mre is None:
            val_pooled = pooled_matrix(raw_val, codec)
        else:
            val_pooled, val_descs = _mre_tensors(raw_val, codec, config.mre)

    velocity = [np.zeros_like(p) for p in predictor.parameters()]
    velocity_beta = np.zeros_like(beta)
    result = TrainResult(model=model)
    n = len(train_data)

    for epoch in range(config.epochs):
        if config.augment is not None:
            augmented = [fast_augment(s, config.augment, rng_augment) for s in raw_train]
            if config.mre is None:
                pooled = pooled_matrix(augmented, codec)
            else:
                pooled, descs = _mre_tensors(augmented, codec, config.mre)
        else:
            pooled = fixed_pooled
            if config.mre is not None:
                descs = fixed_descs

        order = rng.permutation(n)
        epoch_loss = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            if config.mre is None:
                loss, grads = predictor._batch_grads(pooled[idx], y[idx])
            else:
                loss, grads, g_beta = _mre_batch_grads(
                    predictor, beta, pooled[:, idx], descs[idx], y[idx]
                )
                velocity_beta *= config.momentum
                velocity_beta -= config.lr * g_beta
                beta += velocity_beta
            for p, v, g in zip(predictor.parameters(), velocity, grads):
                v *= config.momentum
                v -= config.lr * g
                p += v
            epoch_loss += loss * idx.shape[0]
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch)
        result.train_loss.append(epoch_loss)

        if val_data:
            if config.mre is None:
                result.val_loss.append(predictor.loss_pooled(val_pooled, y_val))
            else:
                result.val_loss.append(_mre_loss(predictor, beta, val_pooled, val_descs, y_val))
        if epoch_callback is not None:
            epoch_callback(epoch, model)

    return result


def model_to_json(model: ReferencePredictor | MreModel) -> str:
    """Versioned text record of all parameters; round-trips exactly."""
    if isinstance(model, MreModel):
        doc = {
            "format": "timegrain-model",
            "version": 1,
            "kind": "mre",
            "mode": model.mode,
            "resolutions": list(model.resolutions),
            "beta": model.beta.tolist(),
            "predictor": _predictor_doc(model.predictor),
        }
    else:
        doc = {
            "format": "timegrain-model",
            "version": 1,
            "kind": "reference",
            "predictor": _predictor_doc(model),
        }
    return json.dumps(doc, sort_keys=True)


def _predictor_doc(p: ReferencePredictor) -> dict:
    return {
        "task": p.task,
        "w1": p.w1.tolist(),
        "b1": p.b1.tolist(),
        "w2": p.w2.tolist(),
        "b2": p.b2.tolist(),
    }


def model_from_json(text: str) -> ReferencePredictor | MreModel:
    doc = json.loads(text)
    if doc.get("format") != "timegrain-model" or doc.get("version") != 1:
        raise ValueError("not a timegrain model record")
    pd = doc["predictor"]
    predictor = ReferencePredictor(
        np.array(pd["w1"]), np.array(pd["b1"]), np.array(pd["w2"]), np.array(pd["b2"]), pd["task"]
    )
    if doc["kind"] == "reference":
        return predictor
    if doc["kind"] == "mre":
        return MreModel(
            predictor,
            np.array(doc["beta"]),
            tuple(doc["resolutions"]),
            doc["mode"],
        )
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def save_model(model, path) -> None:
    with open(path, "w") as fh:
        fh.write(model_to_json(model) + "\n")


def load_model(path):
    with open(path) as fh:
        return model_from_json(fh.read())
