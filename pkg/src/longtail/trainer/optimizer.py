"""RMSprop-with-momentum updates and the training configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError, ValidationError


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.0045
    rmsprop_decay: float = 0.9
    momentum: float = 0.9
    epsilon: float = 1.0
    batch_size: int = 64
    max_epochs: int = 100
    early_stop_patience: int = 5
    seed: int = 0
    class_weights: dict[str, float] | None = None

    def __post_init__(self) -> None:
        for name in ("learning_rate", "rmsprop_decay", "momentum", "epsilon"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.early_stop_patience < 1:
            raise ValidationError("early_stop_patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValidationError("batch_size and max_epochs must be >= 1")


@dataclass
class RMSPropState:
    acc: dict[str, np.ndarray] = field(default_factory=dict)
    mom: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "RMSPropState":
        return cls(
            acc={k: np.zeros_like(v) for k, v in params.items()},
            mom={k: np.zeros_like(v) for k, v in params.items()},
        )


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: RMSPropState,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], RMSPropState]:
    """One optimizer step over every tensor.

        acc <- rho * acc + (1 - rho) * g^2
        mom <- momentum * mom + lr * g / sqrt(acc + eps)
        w   <- w - mom

    Inputs are left untouched; new parameter and state dicts are returned.
    """
    new_params: dict[str, np.ndarray] = {}
    new_state = RMSPropState()
    for name, w in params.items():
        g = grads[name]
        if g.shape != w.shape:
            raise TrainingError(f"gradient shape {g.shape} != param shape {w.shape} for {name}")
        if not np.isfinite(g).all():
            raise TrainingError(f"non-finite gradient in tensor {name!r}")
        acc = cfg.rmsprop_decay * state.acc[name] + (1.0 - cfg.rmsprop_decay) * g * g
        mom = cfg.momentum * state.mom[name] + cfg.learning_rate * g / np.sqrt(acc + cfg.epsilon)
        new_params[name] = w - mom
        new_state.acc[name] = acc
        new_state.mom[name] = mom
    return new_params, new_state


def inverse_frequency_weights(counts: dict[str, int]) -> dict[str, float]:
    """Class weights inversely proportional to representation, mean one."""
    inv = {cls: 1.0 / max(1, n) for cls, n in counts.items()}
    scale = len(inv) / sum(inv.values())
    return {cls: v * scale for cls, v in inv.items()}
