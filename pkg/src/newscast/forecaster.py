"""Return forecasting on top of the representation module.

Low-rank adapters on every attention/feed-forward linear map (base weights
frozen), a pooled sequence representation (bottleneck EOS vector or the mean
of all valid token vectors), and a single affine head trained jointly with
the adapters under mean squared error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .corpus import EOS, MASK, PAD, TokenIds
from .data import Instance
from .errors import ConfigError
from .model import HiddenStates, MiniLlm
from .optim import AdamState, adam_step, lr_at_step

POOLING_MODES = ("bottleneck", "aggregated")


def attach_lora(model: MiniLlm, rank: int, alpha: float, seed: int) -> MiniLlm:
    """Add low-rank adapter pairs to all linear layers and freeze the base.

    Each adapted map computes x @ W + b + (alpha/rank) * (x @ A) @ B with
    A ~ Gaussian(0, 0.02) and B = 0, so the adapted model is exactly the base
    model until training moves B. Embeddings, layer norms, biases, and the
    output projection stay frozen.
    """
    if rank < 1:
        raise ConfigError(f"lora rank must be >= 1, got {rank}")
    if alpha <= 0:
        raise ConfigError(f"lora alpha must be positive, got {alpha}")
    rng = np.random.default_rng(seed)
    for lin in model.adapted_linears():
        in_dim, out_dim = lin.w.shape
        if rank > min(in_dim, out_dim):
            raise ConfigError(f"lora rank {rank} exceeds min dim of "
                              f"{lin.w.name} ({in_dim}x{out_dim})")
    for name, param in model.base_params().items():
        param.requires_grad = False
    for lin in model.adapted_linears():
        in_dim, out_dim = lin.w.shape
        lin.lora_a = Tensor(rng.normal(0.0, 0.02, size=(in_dim, rank)),
                            requires_grad=True, name=f"{lin.w.name}.lora_a")
        lin.lora_b = Tensor(np.zeros((rank, out_dim)),
                            requires_grad=True, name=f"{lin.w.name}.lora_b")
        lin.lora_scale = alpha / rank
    return model


def lora_trainable_count(model: MiniLlm) -> int:
    """Adapter parameter count: sum of rank * (in + out) over adapted maps."""
    total = 0
    for lin in model.adapted_linears():
        if lin.lora_a is not None:
            total += lin.lora_a.data.size + lin.lora_b.data.size
    return total


class ForecastHead:
    """Affine map from a pooled representation to a return forecast."""

    def __init__(self, d_model: int):
        self.w = Tensor(np.zeros((d_model, 1)), requires_grad=True, name="head.w")
        self.b = Tensor(np.zeros((1, 1)), requires_grad=True, name="head.b")

    def __call__(self, pooled: Tensor) -> Tensor:
        return ad.add(ad.matmul(pooled, self.w), self.b)

    def params(self) -> dict[str, Tensor]:
        return {"head.w": self.w, "head.b": self.b}


def eos_position(seq: TokenIds, arch_kind: str) -> int:
    """Index of the appended end-of-sequence token (mask id for encoders)."""
    marker = MASK if arch_kind == "encoder" else EOS
    valid = len(seq)
    while valid > 0 and seq[valid - 1] == PAD:
        valid -= 1
    if valid == 0 or seq[valid - 1] != marker:
        raise ValueError(f"sequence does not end with the appended EOS "
                         f"(id {marker}) for {arch_kind}")
    return valid - 1


def pool_bottleneck(hidden: HiddenStates, eos_pos: int) -> Tensor:
    """The single EOS row: the model's compressed sequence summary."""
    if not 0 <= eos_pos < hidden.valid_length:
        raise ValueError(f"eos position {eos_pos} outside valid length "
                         f"{hidden.valid_length}")
    return ad.slice_rows(hidden.states, eos_pos, eos_pos + 1)


def pool_aggregated(hidden: HiddenStates) -> Tensor:
    """Arithmetic mean of all valid token rows (padding excluded)."""
    if hidden.valid_length < 1:
        raise ValueError("no valid rows to aggregate")
    return ad.mean_over_rows(ad.slice_rows(hidden.states, 0, hidden.valid_length))


def _pool(model: MiniLlm, hidden: HiddenStates, seq: TokenIds, pooling: str) -> Tensor:
    if pooling == "bottleneck":
        return pool_bottleneck(hidden, eos_position(seq, model.config.arch_kind))
    if pooling == "aggregated":
        return pool_aggregated(hidden)
    raise ConfigError(f"pooling must be one of {POOLING_MODES}, got {pooling!r}")


def predict_return(model: MiniLlm, head: ForecastHead, seq: TokenIds,
                   pooling: str) -> float:
    """Forecast for one already-assembled instance sequence."""
    return _predict_tensor(model, head, seq, pooling).item()


def _predict_tensor(model: MiniLlm, head: ForecastHead, seq: TokenIds,
                    pooling: str) -> Tensor:
    hidden = model.encode(seq)
    return head(_pool(model, hidden, seq, pooling))


def predict_many(model: MiniLlm, head: ForecastHead, instances: list[Instance],
                 pooling: str) -> list[float]:
    return [predict_return(model, head, inst.ids, pooling) for inst in instances]


@dataclass(frozen=True)
class FineTuneConfig:
    batch: int = 32
    peak_lr: float = 1e-5
    warmup: int = 100
    epochs: int = 10
    pooling: str = "aggregated"
    lora_rank: int = 4
    lora_alpha: float = 4.0
    seed: int = 0

    def validate(self) -> None:
        for name in ("batch", "warmup", "epochs", "lora_rank"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.peak_lr <= 0 or self.lora_alpha <= 0:
            raise ConfigError("peak_lr and lora_alpha must be positive")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"pooling must be one of {POOLING_MODES}")


@dataclass
class FineTuneResult:
    train_curve: list[float]   # entry 0 is the pre-update evaluation
    val_curve: list[float]
    best_epoch: int


def _mse_eval(model: MiniLlm, head: ForecastHead, instances: list[Instance],
              pooling: str) -> float:
    errs = [predict_return(model, head, inst.ids, pooling) - inst.label
            for inst in instances]
    return float(np.mean(np.square(errs)))


def finetune(model: MiniLlm, head: ForecastHead, train: list[Instance],
             val: list[Instance], config: FineTuneConfig) -> FineTuneResult:
    """Joint MSE minimization of adapter and head parameters.

    The base model must already carry adapters (attach_lora). Per-epoch train
    MSE is the mean of minibatch losses; validation MSE is a full pass after
    each epoch. Parameters from the best validation epoch are restored before
    returning.
    """
    config.validate()
    if not train:
        raise ValueError("training set is empty")
    params_named = {**model.lora_params(), **head.params()}
    if not model.lora_params():
        raise ConfigError("model has no adapters; call attach_lora first")
    params = [t for _, t in sorted(params_named.items())]
    state = AdamState(params)
    rng = np.random.default_rng(config.seed)

    steps_per_epoch = math.ceil(len(train) / config.batch)
    total_steps = config.epochs * steps_per_epoch
    # tiny runs: keep the schedule valid by shrinking warmup below total
    warmup = min(config.warmup, max(1, total_steps - 1))
    if total_steps == 1:
        warmup, total_steps = 1, 2  # single step trains at peak

    train_curve = [_mse_eval(model, head, train, config.pooling)]
    val_curve = [_mse_eval(model, head, val, config.pooling) if val else float("nan")]
    best_epoch = 0
    best_val = val_curve[0]
    best_snapshot = {name: t.data.copy() for name, t in params_named.items()}

    step = 0
    order = np.arange(len(train))
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        epoch_losses = []
        for b in range(steps_per_epoch):
            batch = [train[i] for i in order[b * config.batch:(b + 1) * config.batch]]
            step += 1
            with Tape() as tape:
                preds = [_predict_tensor(model, head, inst.ids, config.pooling)
                         for inst in batch]
                pred_col = ad.concat_rows(preds) if len(preds) > 1 else preds[0]
                labels = Tensor([[inst.label] for inst in batch])
                diff = ad.sub(pred_col, labels)
                loss = ad.mean_all(ad.mul(diff, diff))
            grads = tape.gradients(loss, params)
            lr = lr_at_step(step, warmup, total_steps, config.peak_lr)
            if lr > 0:
                adam_step(state, grads, lr)
            epoch_losses.append(loss.item())
        train_curve.append(float(np.mean(epoch_losses)))
        val_mse = _mse_eval(model, head, val, config.pooling) if val else float("nan")
        val_curve.append(val_mse)
        if val and val_mse < best_val:
            best_val = val_mse
            best_epoch = epoch
            best_snapshot = {name: t.data.copy() for name, t in params_named.items()}

    if val:
        for name, t in params_named.items():
            t.data[...] = best_snapshot[name]
    else:
        best_epoch = config.epochs
    return FineTuneResult(train_curve=train_curve, val_curve=val_curve,
                          best_epoch=best_epoch)
