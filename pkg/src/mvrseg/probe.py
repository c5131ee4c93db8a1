"""Scale-specific two-layer MLP readouts over frozen feature grids.

One probe maps each patch feature vector to a foreground logit through
``in_dim -> hidden -> 1`` with a ReLU hidden layer. Training minimises
mean binary cross-entropy plus a weighted soft-Dice term, evaluated at
mask resolution after bilinear upsampling of the patch logits. All
gradients are analytic; the upsampling gradient uses the exact adjoint
of the interpolation matrix.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .grid import (
    FeatureStack,
    apply_sigmoid,
    resize_bilinear,
    resize_bilinear_adjoint,
    validate_binary_mask,
)

logger = logging.getLogger(__name__)

BCE_CLAMP = 1e-7

DEFAULT_IN_DIM = 2304
DEFAULT_HIDDEN = 256


@dataclass
class ProbeParams:
    """Weights of one readout head.

    Shapes: ``w1`` (in_dim, hidden), ``b1`` (hidden,), ``w2`` (hidden,),
    ``b2`` scalar. Arrays are float64 in memory; serialization stores f32.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def __post_init__(self):
        if self.w1.ndim != 2 or self.b1.ndim != 1 or self.w2.ndim != 1:
            raise ValueError("bad parameter shapes")
        hidden = self.w1.shape[1]
        if self.b1.shape[0] != hidden or self.w2.shape[0] != hidden:
            raise ValueError("hidden dimensions disagree across layers")
        for arr in (self.w1, self.b1, self.w2):
            if not np.isfinite(arr).all():
                raise ValueError("probe parameters must be finite")
        if not np.isfinite(self.b2):
            raise ValueError("probe parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def param_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + 1


@dataclass
class TrainConfig:
    """Probe-training hyperparameters.

    The loss is ``BCE + lambda_dice * (1 - (2*sum(p*y) + epsilon) /
    (sum(p) + sum(y) + epsilon))``, optimised with adaptive moment
    estimation.
    """

    lambda_dice: float = 1.0
    epsilon: float = 1e-6
    learning_rate: float = 1e-3
    epochs: int = 20
    batch_size: int = 8
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    hidden: int = DEFAULT_HIDDEN

    def __post_init__(self):
        if self.lambda_dice < 0:
            raise ValueError("lambda_dice must be >= 0")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


def init_probe_params(in_dim: int, hidden: int, seed: int) -> ProbeParams:
    """Seeded uniform init in +/- sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, in_dim, hidden]))
    lim1 = np.sqrt(6.0 / (in_dim + hidden))
    lim2 = np.sqrt(6.0 / (hidden + 1))
    return ProbeParams(
        w1=rng.uniform(-lim1, lim1, size=(in_dim, hidden)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-lim2, lim2, size=hidden),
        b2=0.0,
    )


def probe_forward(features: FeatureStack, params: ProbeParams) -> np.ndarray:
    """Patch-level foreground logits, shape (features.height, features.width)."""
    if features.channels != params.in_dim:
        raise ValueError(
            f"feature channels ({features.channels}) do not match probe in_dim ({params.in_dim})"
        )
    flat = features.data.reshape(-1, features.channels).astype(np.float64)
    hidden = np.maximum(flat @ params.w1 + params.b1, 0.0)
    logits = hidden @ params.w2 + params.b2
    return logits.reshape(features.height, features.width)


def predict_probability(
    features: FeatureStack, params: ProbeParams, out_h: int, out_w: int
) -> np.ndarray:
    """Upsample patch logits to (out_h, out_w) and apply the sigmoid."""
    return apply_sigmoid(resize_bilinear(probe_forward(features, params), out_h, out_w))


def loss_bce_dice(
    p: np.ndarray, y: np.ndarray, lambda_dice: float, epsilon: float
) -> float:
    """Mean BCE plus weighted soft-Dice complement.

    ``p`` is clamped to [BCE_CLAMP, 1 - BCE_CLAMP] inside the logs only;
    the Dice term uses the raw probabilities.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: p {p.shape} vs y {y.shape}")
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    bce = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    inter = float((p * y).sum())
    denom = float(p.sum() + y.sum()) + epsilon
    dice_term = 1.0 - (2.0 * inter + epsilon) / denom
    return float(bce + lambda_dice * dice_term)


def _case_loss_and_gradient(
    features: FeatureStack,
    mask: np.ndarray,
    params: ProbeParams,
    lambda_dice: float,
    epsilon: float,
) -> tuple[float, ProbeParams]:
    """Loss and analytic parameter gradient for one (features, mask) pair."""
    y = validate_binary_mask(mask).astype(np.float64)
    out_h, out_w = y.shape
    n_pix = y.size

    flat = features.data.reshape(-1, features.channels).astype(np.float64)
    pre = flat @ params.w1 + params.b1
    hid = np.maximum(pre, 0.0)
    logits = (hid @ params.w2 + params.b2).reshape(features.height, features.width)
    up = resize_bilinear(logits, out_h, out_w)
    p = apply_sigmoid(up)

    loss = loss_bce_dice(p, y, lambda_dice, epsilon)

    # BCE composed with the sigmoid collapses to (p - y) / n wherever the
    # probability clamp is inactive; the clamp zeroes the gradient outside.
    active = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    g_up = np.where(active, p - y, 0.0) / n_pix

    if lambda_dice != 0.0:
        inter = float((p * y).sum())
        denom = float(p.sum() + y.sum()) + epsilon
        d_dice_dp = -(2.0 * y * denom - (2.0 * inter + epsilon)) / (denom * denom)
        g_up = g_up + lambda_dice * d_dice_dp * p * (1.0 - p)

    g_logits = resize_bilinear_adjoint(g_up, features.height, features.width).reshape(-1)
    g_b2 = float(g_logits.sum())
    g_w2 = hid.T @ g_logits
    g_hid = np.outer(g_logits, params.w2) * (pre > 0.0)
    g_b1 = g_hid.sum(axis=0)
    g_w1 = flat.T @ g_hid
    return loss, ProbeParams(w1=g_w1, b1=g_b1, w2=g_w2, b2=g_b2)


def loss_gradient(
    features_list: Sequence[FeatureStack],
    masks: Sequence[np.ndarray],
    params: ProbeParams,
    config: TrainConfig,
) -> tuple[ProbeParams, float]:
    """Mean analytic gradient of the training loss over a batch.

    Returns (gradient, mean loss). The gradient is exact for the
    composition sigmoid(upsample(probe_forward)) followed by
    :func:`loss_bce_dice`.
    """
    if len(features_list) == 0 or len(features_list) != len(masks):
        raise ValueError("batch must be non-empty with one mask per feature stack")
    acc_w1 = np.zeros_like(params.w1)
    acc_b1 = np.zeros_like(params.b1)
    acc_w2 = np.zeros_like(params.w2)
    acc_b2 = 0.0
    total = 0.0
    for features, mask in zip(features_list, masks):
        loss, g = _case_loss_and_gradient(
            features, mask, params, config.lambda_dice, config.epsilon
        )
        total += loss
        acc_w1 += g.w1
        acc_b1 += g.b1
        acc_w2 += g.w2
        acc_b2 += g.b2
    n = len(features_list)
    grad = ProbeParams(w1=acc_w1 / n, b1=acc_b1 / n, w2=acc_w2 / n, b2=acc_b2 / n)
    return grad, total / n


class _Adam:
    """Adaptive moment estimation over the ProbeParams struct."""

    def __init__(self, params: ProbeParams, config: TrainConfig):
        self.config = config
        self.t = 0
        self.m = [np.zeros_like(params.w1), np.zeros_like(params.b1),
                  np.zeros_like(params.w2), 0.0]
        self.v = [np.zeros_like(params.w1), np.zeros_like(params.b1),
                  np.zeros_like(params.w2), 0.0]

    def step(self, params: ProbeParams, grad: ProbeParams) -> ProbeParams:
        cfg = self.config
        self.t += 1
        bc1 = 1.0 - cfg.beta1 ** self.t
        bc2 = 1.0 - cfg.beta2 ** self.t
        fields = [params.w1, params.b1, params.w2, params.b2]
        grads = [grad.w1, grad.b1, grad.w2, grad.b2]
        new = []
        for i, (value, g) in enumerate(zip(fields, grads)):
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            new.append(value - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_epsilon))
        return ProbeParams(w1=new[0], b1=new[1], w2=new[2], b2=float(new[3]))


def train_probe(
    samples: Sequence[tuple[FeatureStack, np.ndarray]],
    config: TrainConfig,
    seed: int,
) -> tuple[ProbeParams, list[float]]:
    """Fit one probe on (features, mask) samples.

    Returns the trained parameters and the per-epoch mean loss history.
    Deterministic for a fixed seed: initialisation and epoch shuffling
    both derive from it.
    """
    if not samples:
        raise ValueError("cannot train on an empty sample list")
    in_dim = samples[0][0].channels
    for fs, _ in samples:
        if fs.channels != in_dim:
            raise ValueError("all samples must share the feature channel count")
    params = init_probe_params(in_dim, config.hidden, seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A5A]))
    opt = _Adam(params, config)
    history: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start : start + config.batch_size]]
            grad, loss = loss_gradient(
                [fs for fs, _ in batch], [m for _, m in batch], params, config
            )
            epoch_loss += loss * len(batch)
            params = opt.step(params, grad)
        history.append(epoch_loss / len(samples))
        logger.debug("epoch %d mean loss %.6f", epoch, history[-1])
    return params, history


def train_probes(
    dataset: Sequence[tuple[Mapping[int, FeatureStack], np.ndarray]],
    config: TrainConfig,
) -> dict[int, ProbeParams]:
    """Train one probe per resolution over a multi-resolution dataset.

    Every case must provide a feature stack for every resolution present
    in the first case. Probes are independent; each trains on its own
    resolution column with a seed derived from (config.seed, resolution).
    """
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    resolutions = sorted(dataset[0][0].keys())
    if not resolutions:
        raise ValueError("dataset provides no resolutions")
    for stacks, _ in dataset:
        missing = [r for r in resolutions if r not in stacks]
        if missing:
            raise ValueError(f"case is missing feature stacks for resolutions {missing}")
    probes: dict[int, ProbeParams] = {}
    for res in resolutions:
        samples = [(stacks[res], mask) for stacks, mask in dataset]
        seed = int(np.random.SeedSequence([config.seed, res]).generate_state(1)[0])
        params, history = train_probe(samples, config, seed)
        logger.info(
            "resolution %d: %d samples, first-epoch loss %.4f, final %.4f",
            res, len(samples), history[0], history[-1],
        )
        probes[res] = params
    return probes
