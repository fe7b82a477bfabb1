"""Small convolutional classifier with explicit forward and backward passes.

Architecture: four 3x3 conv blocks (relu + 2x2 max pool) into a global
average pool, a dense embedding layer (the pre-logit activations used for
projection plots), and a linear logit layer. Convolutions run as im2col
matrix products so nearly all time is spent in BLAS.

Everything is written against a configurable dtype; float32 for training,
float64 for gradient verification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError, ValidationError
from ..rng import derive_rng


@dataclass(frozen=True)
class ModelConfig:
    classes: tuple[str, ...]
    input_resolution: int = 64
    channels: tuple[int, ...] = (16, 32, 64, 64)
    embedding_dim: int = 64
    dtype: str = "float32"

    def __post_init__(self) -> None:
        if len(self.classes) < 2:
            raise ValidationError("need at least two classes")
        if self.input_resolution % (2 ** len(self.channels)) != 0:
            raise ValidationError(
                f"input resolution {self.input_resolution} must be divisible by "
                f"{2 ** len(self.channels)} for {len(self.channels)} pooling stages"
            )


def _im2col(x: np.ndarray, k: int = 3, pad: int = 1) -> np.ndarray:
    """(N, C, H, W) -> (N*H*W, C*k*k) patch matrix for same-size 3x3 convs."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    s = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (n, c, h, w, k, k), (s[0], s[1], s[2], s[3], s[2], s[3])
    )
    return view.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k)


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int, int], k: int = 3,
            pad: int = 1) -> np.ndarray:
    n, c, h, w = shape
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dcols.dtype)
    dc = dcols.reshape(n, h, w, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki : ki + h, kj : kj + w] += dc[:, :, ki, kj]
    return dxp[:, :, pad : pad + h, pad : pad + w]


def _conv_forward(x, weight, bias):
    n, _, h, w = x.shape
    out_ch = weight.shape[0]
    cols = _im2col(x)
    y = cols @ weight.reshape(out_ch, -1).T + bias
    return y.reshape(n, h, w, out_ch).transpose(0, 3, 1, 2), cols


def _conv_backward(dy, cols, weight, x_shape):
    out_ch = weight.shape[0]
    dy_cols = dy.transpose(0, 2, 3, 1).reshape(-1, out_ch)
    dweight = (dy_cols.T @ cols).reshape(weight.shape)
    dbias = dy_cols.sum(axis=0)
    dcols = dy_cols @ weight.reshape(out_ch, -1)
    return _col2im(dcols, x_shape), dweight, dbias


def _pool_forward(x):
    n, c, h, w = x.shape
    xr = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = xr.argmax(axis=-1)
    y = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]
    return y, idx


def _pool_backward(dy, idx, x_shape):
    n, c, h, w = x_shape
    dxr = np.zeros((n, c, h // 2, w // 2, 4), dy.dtype)
    np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=-1)
    return (
        dxr.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


class Model:
    """Parameter container with forward, backward, and prediction."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        self.params: dict[str, np.ndarray] = {}
        in_ch = 3
        for i, out_ch in enumerate(config.channels):
            rng = derive_rng(seed, "init", f"conv{i}")
            fan_in = in_ch * 9
            self.params[f"conv{i}.weight"] = (
                rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_ch, in_ch, 3, 3))
            ).astype(self.dtype)
            self.params[f"conv{i}.bias"] = np.zeros(out_ch, self.dtype)
            in_ch = out_ch
        rng = derive_rng(seed, "init", "embed")
        self.params["embed.weight"] = (
            rng.normal(0.0, np.sqrt(2.0 / in_ch), (in_ch, config.embedding_dim))
        ).astype(self.dtype)
        self.params["embed.bias"] = np.zeros(config.embedding_dim, self.dtype)
        rng = derive_rng(seed, "init", "logits")
        self.params["logits.weight"] = (
            rng.normal(0.0, np.sqrt(1.0 / config.embedding_dim),
                       (config.embedding_dim, len(config.classes)))
        ).astype(self.dtype)
        self.params["logits.bias"] = np.zeros(len(config.classes), self.dtype)

    @property
    def classes(self) -> tuple[str, ...]:
        return self.config.classes

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def set_params(self, params: dict[str, np.ndarray]) -> None:
        for k in self.params:
            self.params[k] = params[k].copy()

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        r = self.config.input_resolution
        if x.ndim != 4 or x.shape[1] != r or x.shape[2] != r or x.shape[3] != 3:
            raise ValidationError(
                f"expected input of shape (N, {r}, {r}, 3), got {x.shape}"
            )
        return np.ascontiguousarray(x.transpose(0, 3, 1, 2).astype(self.dtype))

    def forward(self, x: np.ndarray, want_cache: bool = False):
        """Logits and embeddings for normalized images (N, R, R, 3).

        Returns (logits, embeddings, cache); the cache feeds backward().
        """
        h = self._check_input(x)
        cache: dict = {"inputs": [], "cols": [], "relu": [], "pool_idx": [], "pool_in": []}
        for i in range(len(self.config.channels)):
            cache["inputs"].append(h.shape)
            y, cols = _conv_forward(h, self.params[f"conv{i}.weight"],
                                    self.params[f"conv{i}.bias"])
            cache["cols"].append(cols if want_cache else None)
            relu_mask = y > 0
            y = y * relu_mask
            cache["relu"].append(relu_mask if want_cache else None)
            cache["pool_in"].append(y.shape)
            h, idx = _pool_forward(y)
            cache["pool_idx"].append(idx if want_cache else None)
        cache["gap_in"] = h.shape
        g = h.mean(axis=(2, 3))
        cache["gap"] = g if want_cache else None
        pre = g @ self.params["embed.weight"] + self.params["embed.bias"]
        emb_mask = pre > 0
        emb = pre * emb_mask
        cache["emb_mask"] = emb_mask if want_cache else None
        cache["emb"] = emb if want_cache else None
        logits = emb @ self.params["logits.weight"] + self.params["logits.bias"]
        return logits, emb, cache

    def backward(self, dlogits: np.ndarray, cache: dict) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        grads["logits.weight"] = cache["emb"].T @ dlogits
        grads["logits.bias"] = dlogits.sum(axis=0)
        demb = dlogits @ self.params["logits.weight"].T
        dpre = demb * cache["emb_mask"]
        grads["embed.weight"] = cache["gap"].T @ dpre
        grads["embed.bias"] = dpre.sum(axis=0)
        dg = dpre @ self.params["embed.weight"].T
        n, c, hh, ww = cache["gap_in"]
        dh = np.broadcast_to(dg[:, :, None, None], (n, c, hh, ww)) / (hh * ww)
        dh = dh.astype(self.dtype)
        for i in reversed(range(len(self.config.channels))):
            dy = _pool_backward(dh, cache["pool_idx"][i], cache["pool_in"][i])
            dy = dy * cache["relu"][i]
            dh, dw, db = _conv_backward(dy, cache["cols"][i],
                                        self.params[f"conv{i}.weight"],
                                        cache["inputs"][i])
            grads[f"conv{i}.weight"] = dw
            grads[f"conv{i}.bias"] = db
        return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    sample_weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Mean (optionally weighted) cross-entropy loss and dL/dlogits."""
    n = len(labels)
    probs = softmax(logits)
    eps = np.finfo(probs.dtype).tiny
    picked = np.clip(probs[np.arange(n), labels], eps, None)
    losses = -np.log(picked)
    if sample_weights is None:
        loss = float(losses.mean())
        dlogits = probs.copy()
        dlogits[np.arange(n), labels] -= 1.0
        dlogits /= n
    else:
        loss = float((losses * sample_weights).mean())
        dlogits = probs * sample_weights[:, None]
        dlogits[np.arange(n), labels] -= sample_weights
        dlogits /= n
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    return loss, dlogits.astype(logits.dtype)
