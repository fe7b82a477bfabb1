"""Training loop: seeded shuffling, augmentation, RMSprop, early stopping.

Model selection follows validation performance: after every epoch the mean
per-class error on the validation set is computed, and training stops once
it has failed to improve for the configured number of epochs. The returned
model carries the parameters of the best epoch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..annotations import ImageRecord
from ..errors import TrainingError
from ..rng import derive_rng
from .augment import AugmentationConfig, augment, eval_transform
from .model import Model, ModelConfig, softmax, softmax_cross_entropy
from .optimizer import RMSPropState, TrainConfig, rmsprop_step

Loader = Callable[[ImageRecord], np.ndarray]


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_metric: list[float] = field(default_factory=list)
    val_errors: list[dict[str, float]] = field(default_factory=list)
    selected_epoch: int = 0

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_metric": self.val_metric,
            "val_errors": self.val_errors,
            "selected_epoch": self.selected_epoch,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainHistory":
        return cls(
            train_loss=list(doc["train_loss"]),
            val_metric=list(doc["val_metric"]),
            val_errors=[dict(e) for e in doc["val_errors"]],
            selected_epoch=int(doc["selected_epoch"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1),
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TrainHistory":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def normalize(images: np.ndarray) -> np.ndarray:
    return (images.astype(np.float32) / 255.0 - 0.5) / 0.25


def predict(model: Model, images: np.ndarray, batch_size: int = 256):
    """Softmax scores and pre-logit embeddings for normalized-size uint8 images."""
    scores = []
    embeddings = []
    for k in range(0, len(images), batch_size):
        logits, emb, _ = model.forward(normalize(np.asarray(images[k : k + batch_size])))
        scores.append(softmax(logits))
        embeddings.append(emb)
    if not scores:
        k = len(model.classes)
        return np.zeros((0, k)), np.zeros((0, model.config.embedding_dim))
    return np.vstack(scores), np.vstack(embeddings)


def predict_records(
    model: Model,
    records: Sequence[ImageRecord],
    loader: Loader,
    batch_size: int = 256,
):
    """Predictions over annotation records through the deterministic eval path."""
    resolution = model.config.input_resolution
    images = np.stack([eval_transform(loader(rec), resolution) for rec in records]) \
        if records else np.zeros((0, resolution, resolution, 3), np.uint8)
    return predict(model, images, batch_size=batch_size)


def _per_class_errors(
    pred_idx: np.ndarray, true_idx: np.ndarray, classes: Sequence[str]
) -> dict[str, float]:
    errors: dict[str, float] = {}
    for ci, cls in enumerate(classes):
        mask = true_idx == ci
        if mask.any():
            errors[cls] = float((pred_idx[mask] != ci).mean())
    return errors


def train(
    model_cfg: ModelConfig,
    train_set: Sequence[ImageRecord],
    val_set: Sequence[ImageRecord],
    train_cfg: TrainConfig,
    data_loader: Loader,
    aug_cfg: AugmentationConfig | None = None,
) -> tuple[Model, TrainHistory]:
    """Train a classifier; returns the best-epoch model and the history."""
    if not train_set:
        raise TrainingError("training set is empty")
    if not val_set:
        raise TrainingError("validation set is empty")
    if aug_cfg is None:
        aug_cfg = AugmentationConfig(output_resolution=model_cfg.input_resolution)
    if aug_cfg.output_resolution != model_cfg.input_resolution:
        raise TrainingError(
            f"augmentation output {aug_cfg.output_resolution} does not match "
            f"model input {model_cfg.input_resolution}"
        )
    class_index = {cls: i for i, cls in enumerate(model_cfg.classes)}
    for rec in val_set:
        if rec.class_label not in class_index:
            raise TrainingError(f"validation class {rec.class_label!r} unknown to the model")
    for rec in train_set:
        if rec.class_label not in class_index:
            raise TrainingError(f"training class {rec.class_label!r} unknown to the model")

    train_labels = np.array([class_index[r.class_label] for r in train_set])
    weight_of = None
    if train_cfg.class_weights is not None:
        weight_of = np.array(
            [train_cfg.class_weights.get(cls, 1.0) for cls in model_cfg.classes],
            np.float32,
        )

    seed = train_cfg.seed
    model = Model(model_cfg, seed=seed)
    state = RMSPropState.zeros_like(model.params)
    history = TrainHistory()

    val_images = np.stack(
        [eval_transform(data_loader(r), model_cfg.input_resolution) for r in val_set]
    )
    val_true = np.array([class_index[r.class_label] for r in val_set])

    best_metric = np.inf
    best_epoch = 0
    best_params = model.copy_params()
    n = len(train_set)

    for epoch in range(train_cfg.max_epochs):
        order = derive_rng(seed, "shuffle", epoch).permutation(n)
        epoch_loss = 0.0
        seen = 0
        for start in range(0, n, train_cfg.batch_size):
            members = order[start : start + train_cfg.batch_size]
            batch = np.stack(
                [
                    augment(data_loader(train_set[p]), aug_cfg,
                            derive_rng(seed, "augment", epoch, int(p)))
                    for p in members
                ]
            )
            labels = train_labels[members]
            logits, _, cache = model.forward(normalize(batch), want_cache=True)
            sample_weights = weight_of[labels] if weight_of is not None else None
            try:
                loss, dlogits = softmax_cross_entropy(logits, labels, sample_weights)
            except TrainingError as exc:
                raise TrainingError(
                    f"aborting at epoch {epoch}, batch {start // train_cfg.batch_size}: {exc}"
                ) from exc
            grads = model.backward(dlogits, cache)
            model.params, state = rmsprop_step(model.params, grads, state, train_cfg)
            epoch_loss += loss * len(members)
            seen += len(members)

        history.train_loss.append(epoch_loss / seen)
        scores, _ = predict(model, val_images)
        pred_idx = scores.argmax(axis=1)
        errors = _per_class_errors(pred_idx, val_true, model_cfg.classes)
        metric = float(np.mean(list(errors.values())))
        history.val_errors.append(errors)
        history.val_metric.append(metric)

        if metric < best_metric:
            best_metric = metric
            best_epoch = epoch
            best_params = model.copy_params()
        if epoch - best_epoch >= train_cfg.early_stop_patience:
            break

    model.set_params(best_params)
    history.selected_epoch = best_epoch
    return model, history
