"""Image and label preprocessing.

Raw camera depth images (720x1080) are downsampled by 10 via block
averaging and center-cropped to the 50x90 network input; natively rendered
50x90 tensors bypass both steps. Complex CIR labels are flattened to 22
reals (all real parts, then all imaginary parts) and scaled by the maximum
absolute component over the training set.
"""

from __future__ import annotations

import numpy as np

RAW_SHAPE = (720, 1080)
DOWNSAMPLED_SHAPE = (72, 108)
INPUT_SHAPE = (50, 90)
# Fixed crop window inside the 72x108 downsampled image (centered; the
# excluded border never contains the mobile blocker in this setup).
CROP_TOP = (DOWNSAMPLED_SHAPE[0] - INPUT_SHAPE[0]) // 2  # 11
CROP_LEFT = (DOWNSAMPLED_SHAPE[1] - INPUT_SHAPE[1]) // 2  # 9


def preprocess_image(raw: np.ndarray) -> np.ndarray:
    """720x1080 depth image -> 50x90 network input."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != RAW_SHAPE:
        raise ValueError(f"expected {RAW_SHAPE} image, got {raw.shape}")
    blocks = raw.reshape(72, 10, 108, 10)
    down = blocks.mean(axis=(1, 3))
    return down[
        CROP_TOP : CROP_TOP + INPUT_SHAPE[0], CROP_LEFT : CROP_LEFT + INPUT_SHAPE[1]
    ]


def cir_to_real(taps: np.ndarray) -> np.ndarray:
    """(n,) complex -> (2n,) real: real parts then imaginary parts."""
    taps = np.asarray(taps, dtype=np.complex128)
    if taps.ndim != 1:
        raise ValueError("taps must be 1-D")
    return np.concatenate([taps.real, taps.imag])


def real_to_cir(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size % 2:
        raise ValueError("need an even-length real vector")
    n = values.size // 2
    return values[:n] + 1j * values[n:]


def fit_norm_constant(labels: np.ndarray) -> float:
    """Max absolute real/imaginary component over the training labels."""
    labels = np.asarray(labels)
    c = float(np.max(np.abs(np.concatenate([labels.real.ravel(), labels.imag.ravel()]))))
    if c <= 0.0:
        raise ValueError("degenerate training labels (all zero)")
    return c


def normalize(values: np.ndarray, norm_constant: float) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / norm_constant


def denormalize(values: np.ndarray, norm_constant: float) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) * norm_constant
