"""Training loop: Nadam, per-epoch exponential decay, best-validation pick."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import torch

from .data import Dataset
from .model import build_model, to_batch
from .preprocess import fit_norm_constant, normalize


@dataclass(frozen=True)
class TrainConfig:
    horizon: str = "current"
    epochs: int = 200
    initial_lr: float = 1e-4
    lr_decay: float = 0.004  # learning rate drops to 0.996x after each epoch
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.lr_decay < 1.0:
            raise ValueError("lr_decay must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def lr_gamma(self) -> float:
        return 1.0 - self.lr_decay


@dataclass
class TrainedModel:
    model: torch.nn.Module
    norm_constant: float
    n_taps: int
    pre_cursor_count: int
    horizon: str
    train_losses: List[float] = field(default_factory=list)
    val_losses: List[float] = field(default_factory=list)
    best_epoch: int = -1

    def predict(self, grids: np.ndarray) -> np.ndarray:
        """Depth grids -> de-normalized (k, 2*n_taps) real predictions."""
        self.model.eval()
        with torch.no_grad():
            out = self.model(to_batch(grids)).numpy().astype(np.float64)
        return out * self.norm_constant

    def save(self, path: str) -> None:
        torch.save(
            {
                "state_dict": self.model.state_dict(),
                "norm_constant": self.norm_constant,
                "n_taps": self.n_taps,
                "pre_cursor_count": self.pre_cursor_count,
                "horizon": self.horizon,
                "best_epoch": self.best_epoch,
            },
            path,
        )

    @classmethod
    def load(cls, path: str) -> "TrainedModel":
        payload = torch.load(path, map_location="cpu", weights_only=True)
        model = build_model()
        model.load_state_dict(payload["state_dict"])
        return cls(
            model=model,
            norm_constant=float(payload["norm_constant"]),
            n_taps=int(payload["n_taps"]),
            pre_cursor_count=int(payload["pre_cursor_count"]),
            horizon=str(payload["horizon"]),
            best_epoch=int(payload["best_epoch"]),
        )


def train(
    train_set: Dataset,
    val_set: Optional[Dataset],
    cfg: TrainConfig,
) -> TrainedModel:
    """Fit the network; returns the best-validation checkpoint.

    Labels are scaled by the training set's maximum absolute component; the
    constant rides along so predictions can be de-normalized for metric
    evaluation. Deterministic for a fixed seed up to framework kernels.
    """
    if train_set.inputs.shape[0] == 0:
        raise ValueError("empty training dataset")
    torch.manual_seed(cfg.seed)
    model = build_model()
    norm_constant = fit_norm_constant(
        train_set.targets[:, : train_set.n_taps]
        + 1j * train_set.targets[:, train_set.n_taps :]
    )
    x_train = to_batch(train_set.inputs)
    y_train = torch.as_tensor(
        normalize(train_set.targets, norm_constant), dtype=torch.float32
    )
    x_val = y_val = None
    if val_set is not None and val_set.inputs.shape[0] > 0:
        x_val = to_batch(val_set.inputs)
        y_val = torch.as_tensor(
            normalize(val_set.targets, norm_constant), dtype=torch.float32
        )
    optimizer = torch.optim.NAdam(model.parameters(), lr=cfg.initial_lr)
    scheduler = torch.optim.lr_scheduler.ExponentialLR(optimizer, gamma=cfg.lr_gamma)
    loss_fn = torch.nn.MSELoss()
    generator = torch.Generator().manual_seed(cfg.seed)
    result = TrainedModel(
        model=model,
        norm_constant=norm_constant,
        n_taps=train_set.n_taps,
        pre_cursor_count=train_set.pre_cursor_count,
        horizon=cfg.horizon,
    )
    best_val = float("inf")
    best_state: Dict[str, torch.Tensor] = {
        k: v.clone() for k, v in model.state_dict().items()
    }
    n = x_train.shape[0]
    for epoch in range(cfg.epochs):
        model.train()
        perm = torch.randperm(n, generator=generator)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            optimizer.zero_grad()
            loss = loss_fn(model(x_train[idx]), y_train[idx])
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * idx.shape[0]
        scheduler.step()
        result.train_losses.append(epoch_loss / n)
        if x_val is not None:
            model.eval()
            with torch.no_grad():
                val_loss = float(loss_fn(model(x_val), y_val))
            result.val_losses.append(val_loss)
            if val_loss < best_val:
                best_val = val_loss
                best_state = {k: v.clone() for k, v in model.state_dict().items()}
                result.best_epoch = epoch
        else:
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
            result.best_epoch = epoch
    model.load_state_dict(best_state)
    return result


def learning_rate_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """The schedule the optimizer follows: lr = initial * (1-decay)^epoch."""
    return cfg.initial_lr * cfg.lr_gamma**epoch
