"""The regression network: conv stacks with average pooling, dense head.

Frozen architecture: three 3x3 same-padding convolutions (32, 64, 128
filters) with ReLU and 2x2 average pooling after each, a 256-neuron ReLU
dense layer, and a linear 22-output layer (11 real + 11 imaginary taps).
Batch normalization is deliberately absent.
"""

from __future__ import annotations

import torch
from torch import nn

INPUT_ROWS = 50
INPUT_COLS = 90
OUTPUT_SIZE = 22

#: Golden total parameter count of the frozen stack, recorded on first build.
PARAM_COUNT = 2_261_270


def build_model() -> nn.Sequential:
    model = nn.Sequential(
        nn.Conv2d(1, 32, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.AvgPool2d(2),
        nn.Conv2d(32, 64, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.AvgPool2d(2),
        nn.Conv2d(64, 128, kernel_size=3, padding=1),
        nn.ReLU(),
        nn.AvgPool2d(2),
        nn.Flatten(),
        nn.Linear(128 * 6 * 11, 256),
        nn.ReLU(),
        nn.Linear(256, OUTPUT_SIZE),
    )
    assert parameter_count(model) == PARAM_COUNT
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def to_batch(grids) -> torch.Tensor:
    """(k, 50, 90) float grids -> (k, 1, 50, 90) float32 batch."""
    t = torch.as_tensor(grids, dtype=torch.float32)
    if t.ndim == 2:
        t = t.unsqueeze(0)
    if t.shape[-2:] != (INPUT_ROWS, INPUT_COLS):
        raise ValueError(f"expected {INPUT_ROWS}x{INPUT_COLS} grids, got {tuple(t.shape)}")
    return t.unsqueeze(1)
