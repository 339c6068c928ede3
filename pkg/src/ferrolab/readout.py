"""
Readout network for the reservoir features.

Features are min/max normalized per column, then pass a stack of dense
sigmoid layers with an optional batch-normalization block. Training uses
mean-squared error on label/3 targets with the Adam optimizer; inference
uses frozen batch-normalization statistics.
"""
import logging
import math
import struct
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ferrolab.reservoir import PRC_LABELS, Sample, feature_matrix
from ferrolab.utils import DivergedTraining, InsufficientData, ModelNotFound, ShapeMismatch

logger = logging.getLogger(__name__)

Variant = Literal["full", "single_layer", "two_layer_4_1"]

N_FEATURES = 64
MIN_SAMPLES = 8

MODEL_MAGIC = b"FFRM"
MODEL_VERSION = 1
_VARIANT_CODES: Dict[str, int] = {"full": 0, "single_layer": 1, "two_layer_4_1": 2}
_HEADER = struct.Struct("<4sHBH")
_METRICS = struct.Struct("<dddI")

# (kind, width) per layer
LAYOUTS: Dict[str, List[Tuple[str, int]]] = {
    "full": [("dense", 64), ("bn", 64), ("dense", 14), ("dense", 1)],
    "single_layer": [("dense", 1)],
    "two_layer_4_1": [("dense", 4), ("dense", 1)],
}


class TrainConfig(BaseModel):
    """Training hyperparameters."""

    epochs: int = Field(default=2000, ge=1, description="Number of passes over the training set")
    learning_rate: float = Field(default=0.01, gt=0, description="Adam step size")
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    batch_size: Optional[int] = Field(default=None, ge=1, description="Mini-batch size; full batch when None")
    seed: int = Field(default=0, ge=0)
    variant: Variant = "full"
    bn_momentum: float = Field(default=0.9, ge=0, lt=1)
    bn_eps: float = Field(default=1e-5, gt=0)


class TrainMetrics(BaseModel):
    final_loss: float
    rmse: float
    accuracy: float
    epochs: int


class ReadoutModel(BaseModel):
    """Normalization bounds, layer parameters and training metrics."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    variant: Variant
    norm_lo: np.ndarray
    norm_hi: np.ndarray
    params: List[np.ndarray]
    bn_stats: List[Tuple[np.ndarray, np.ndarray]] = Field(default_factory=list)
    bn_eps: float = 1e-5
    metrics: Optional[TrainMetrics] = None

    @property
    def layout(self) -> List[Tuple[str, int]]:
        return LAYOUTS[self.variant]

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return normalize(features, self.norm_lo, self.norm_hi)

    def scores(self, features: np.ndarray) -> np.ndarray:
        """Output scores for a (n, 64) feature array."""
        features = np.atleast_2d(np.asarray(features, dtype=float))
        if features.shape[1] != N_FEATURES:
            raise ShapeMismatch(f"Expected {N_FEATURES} features, got {features.shape[1]}")
        out, _ = _forward(self.params, self.layout, self.normalize(features), self.bn_stats,
                          training=False, bn_eps=self.bn_eps)
        return out[:, 0]


def normalize(features: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Map each column from [lo, hi] to [0, 1]; constant columns only shift."""
    span = hi - lo
    return (features - lo) / np.where(span == 0, 1.0, span)


def decode_digit(score: float) -> int:
    """Nearest of the four label levels, clamped to 0..3."""
    return int(min(3, max(0, math.floor(3.0 * score + 0.5))))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _init_params(layout: List[Tuple[str, int]], n_in: int, rng: np.random.Generator) -> List[np.ndarray]:
    params = []
    width = n_in
    for kind, n in layout:
        if kind == "dense":
            limit = math.sqrt(6.0 / (width + n))
            params.append(rng.uniform(-limit, limit, (width, n)))
            params.append(np.zeros(n))
            width = n
        else:
            params.append(np.ones(n))
            params.append(np.zeros(n))
    return params


def _forward(params: List[np.ndarray], layout: List[Tuple[str, int]], x: np.ndarray,
             bn_stats: List[Tuple[np.ndarray, np.ndarray]], training: bool, bn_eps: float):
    caches = []
    h = x
    k = 0
    bn_index = 0
    for kind, _ in layout:
        if kind == "dense":
            a = _sigmoid(h @ params[k] + params[k + 1])
            caches.append((h, a))
            h = a
        else:
            if training:
                mu, var = h.mean(axis=0), h.var(axis=0)
            else:
                mu, var = bn_stats[bn_index]
            inv = 1.0 / np.sqrt(var + bn_eps)
            xhat = (h - mu) * inv
            caches.append((xhat, inv, mu, var))
            h = params[k] * xhat + params[k + 1]
            bn_index += 1
        k += 2
    return h, caches


def _backward(params: List[np.ndarray], layout: List[Tuple[str, int]], caches, dout: np.ndarray) -> List[np.ndarray]:
    grads: List[np.ndarray] = [np.empty(0)] * len(params)
    k = len(params)
    for (kind, _), cache in zip(reversed(layout), reversed(caches)):
        k -= 2
        if kind == "dense":
            h, a = cache
            dz = dout * a * (1.0 - a)
            grads[k] = h.T @ dz
            grads[k + 1] = dz.sum(axis=0)
            dout = dz @ params[k].T
        else:
            xhat, inv, _, _ = cache
            m = dout.shape[0]
            grads[k] = (dout * xhat).sum(axis=0)
            grads[k + 1] = dout.sum(axis=0)
            dxhat = dout * params[k]
            dout = inv / m * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return grads


def _loss_and_grads(params, layout, x, y, bn_eps):
    out, caches = _forward(params, layout, x, [], training=True, bn_eps=bn_eps)
    err = out[:, 0] - y
    loss = float(np.mean(err ** 2))
    dout = (2.0 / len(y)) * err[:, None]
    return loss, _backward(params, layout, caches, dout), caches


def gradient_check(variant: Variant = "full", n: int = 6, n_in: int = N_FEATURES, seed: int = 0,
                   h: float = 1e-6, per_tensor: int = 12) -> float:
    """
    Largest relative difference between analytic and central-difference gradients.

    Random inputs, targets and parameters are drawn from the seed; up to
    per_tensor entries of every parameter tensor are probed.
    """
    rng = np.random.default_rng(seed)
    layout = LAYOUTS[variant]
    x = rng.uniform(0.0, 1.0, (n, n_in))
    y = rng.uniform(0.0, 1.0, n)
    params = _init_params(layout, n_in, rng)
    for p in params:
        p += rng.normal(0.0, 0.1, p.shape)
    _, grads, _ = _loss_and_grads(params, layout, x, y, 1e-5)

    worst = 0.0
    for p, g in zip(params, grads):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for idx in rng.choice(flat.size, size=min(per_tensor, flat.size), replace=False):
            saved = flat[idx]
            flat[idx] = saved + h
            plus, _, _ = _loss_and_grads(params, layout, x, y, 1e-5)
            flat[idx] = saved - h
            minus, _, _ = _loss_and_grads(params, layout, x, y, 1e-5)
            flat[idx] = saved
            numeric = (plus - minus) / (2 * h)
            denom = max(abs(numeric) + abs(gflat[idx]), 1e-7)
            worst = max(worst, abs(numeric - gflat[idx]) / denom)
    return worst


def train(samples: Sequence[Sample], cfg: Optional[TrainConfig] = None) -> ReadoutModel:
    """
    Fit a readout network to reservoir samples.

    Args:
        samples: Training samples spanning labels 0..3
        cfg: Hyperparameters

    Returns:
        Trained ReadoutModel with metrics on the training set

    Raises:
        InsufficientData: With fewer than 8 samples or a missing label
        DivergedTraining: If the loss stops being finite
    """
    cfg = cfg or TrainConfig()
    if len(samples) < MIN_SAMPLES:
        raise InsufficientData(f"Need at least {MIN_SAMPLES} samples, got {len(samples)}")
    x_raw, labels = feature_matrix(samples)
    missing = sorted(set(PRC_LABELS) - set(labels.tolist()))
    if missing:
        raise InsufficientData(f"Training set lacks labels {missing}")

    lo, hi = x_raw.min(axis=0), x_raw.max(axis=0)
    x = normalize(x_raw, lo, hi)
    y = labels / 3.0

    rng = np.random.default_rng(cfg.seed)
    layout = LAYOUTS[cfg.variant]
    params = _init_params(layout, N_FEATURES, rng)
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    n_bn = sum(1 for kind, _ in layout if kind == "bn")
    bn_stats = [(np.zeros(w), np.ones(w)) for kind, w in layout if kind == "bn"]

    n = len(y)
    batch = cfg.batch_size or n
    t = 0
    loss = math.inf
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if batch < n else np.arange(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, grads, caches = _loss_and_grads(params, layout, x[idx], y[idx], cfg.bn_eps)
            if not math.isfinite(loss):
                raise DivergedTraining(f"Loss became non-finite at epoch {epoch}", epoch=epoch)
            t += 1
            for p, g, a, b in zip(params, grads, m1, m2):
                a *= cfg.beta1
                a += (1 - cfg.beta1) * g
                b *= cfg.beta2
                b += (1 - cfg.beta2) * g * g
                a_hat = a / (1 - cfg.beta1 ** t)
                b_hat = b / (1 - cfg.beta2 ** t)
                p -= cfg.learning_rate * a_hat / (np.sqrt(b_hat) + cfg.adam_eps)
            if n_bn:
                batch_stats = [(c[2], c[3]) for (kind, _), c in zip(layout, caches) if kind == "bn"]
                bn_stats = [
                    (cfg.bn_momentum * rm + (1 - cfg.bn_momentum) * mu, cfg.bn_momentum * rv + (1 - cfg.bn_momentum) * var)
                    for (rm, rv), (mu, var) in zip(bn_stats, batch_stats)
                ]
        if epoch % max(1, cfg.epochs // 10) == 0:
            logger.debug("Epoch %d/%d: loss %.6f", epoch, cfg.epochs, loss)

    model = ReadoutModel(variant=cfg.variant, norm_lo=lo, norm_hi=hi, params=params,
                         bn_stats=bn_stats, bn_eps=cfg.bn_eps)
    scores = model.scores(x_raw)
    final_loss = float(np.mean((scores - y) ** 2))
    predicted = np.array([decode_digit(s) for s in scores])
    model.metrics = TrainMetrics(final_loss=final_loss, rmse=math.sqrt(final_loss),
                                 accuracy=float(np.mean(predicted == labels)), epochs=cfg.epochs)
    logger.info("Trained %s readout: loss %.5f, RMSE %.4f, accuracy %.3f",
                cfg.variant, final_loss, model.metrics.rmse, model.metrics.accuracy)
    return model


def infer(model: ReadoutModel, features: Sequence[float]) -> Tuple[float, int]:
    """
    Score one feature vector.

    Returns:
        (score in [0, 1], decoded digit 0..3)

    Raises:
        ShapeMismatch: If features does not hold 64 values
    """
    arr = np.asarray(features, dtype=float)
    if arr.shape != (N_FEATURES,):
        raise ShapeMismatch(f"Expected {N_FEATURES} features, got shape {arr.shape}")
    score = float(model.scores(arr[None, :])[0])
    return score, decode_digit(score)


def _f64(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def save_model(model: ReadoutModel, path: Path) -> Path:
    """
    Write a model file: header, layer widths, normalization bounds, parameters
    in declaration order, batch-norm statistics and metrics, all little-endian.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    layout = model.layout
    parts = [_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, _VARIANT_CODES[model.variant], N_FEATURES),
             struct.pack("<B", len(layout)),
             b"".join(struct.pack("<H", w) for _, w in layout),
             _f64(model.norm_lo), _f64(model.norm_hi)]
    parts.extend(_f64(p) for p in model.params)
    for mean, var in model.bn_stats:
        parts.extend((_f64(mean), _f64(var)))
    metrics = model.metrics or TrainMetrics(final_loss=math.nan, rmse=math.nan, accuracy=math.nan, epochs=0)
    parts.append(struct.pack("<d", model.bn_eps))
    parts.append(_METRICS.pack(metrics.final_loss, metrics.rmse, metrics.accuracy, metrics.epochs))
    path.write_bytes(b"".join(parts))
    logger.info("Saved %s readout to %s", model.variant, path)
    return path


def load_model(path: Path) -> ReadoutModel:
    """
    Read a model file.

    Raises:
        ModelNotFound: If the file is missing, truncated or not a model file
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise ModelNotFound(f"Cannot read model file {path}: {e.strerror or e}") from None

    offset = 0

    def take(size: int) -> bytes:
        nonlocal offset
        if offset + size > len(data):
            raise ModelNotFound(f"Model file {path} is truncated")
        chunk = data[offset:offset + size]
        offset += size
        return chunk

    def floats(count: int) -> np.ndarray:
        return np.frombuffer(take(8 * count), dtype="<f8").astype(float)

    magic, version, code, n_in = _HEADER.unpack(take(_HEADER.size))
    if magic != MODEL_MAGIC or version != MODEL_VERSION:
        raise ModelNotFound(f"{path} is not a readout model file (version {MODEL_VERSION})")
    variants = {v: k for k, v in _VARIANT_CODES.items()}
    if code not in variants or n_in != N_FEATURES:
        raise ModelNotFound(f"{path} holds an unsupported model layout")
    variant = variants[code]
    (n_layers,) = struct.unpack("<B", take(1))
    widths = [struct.unpack("<H", take(2))[0] for _ in range(n_layers)]
    layout = LAYOUTS[variant]
    if widths != [w for _, w in layout]:
        raise ModelNotFound(f"{path} layer widths {widths} do not match variant {variant}")

    lo, hi = floats(n_in), floats(n_in)
    params = []
    width = n_in
    for kind, w in layout:
        if kind == "dense":
            params.append(floats(width * w).reshape(width, w))
            params.append(floats(w))
            width = w
        else:
            params.extend((floats(w), floats(w)))
    bn_stats = [(floats(w), floats(w)) for kind, w in layout if kind == "bn"]
    (bn_eps,) = struct.unpack("<d", take(8))
    loss, rmse, accuracy, epochs = _METRICS.unpack(take(_METRICS.size))
    if offset != len(data):
        raise ModelNotFound(f"{path} has {len(data) - offset} trailing bytes")
    return ReadoutModel(variant=variant, norm_lo=lo, norm_hi=hi, params=params, bn_stats=bn_stats, bn_eps=bn_eps,
                        metrics=TrainMetrics(final_loss=loss, rmse=rmse, accuracy=accuracy, epochs=epochs))
