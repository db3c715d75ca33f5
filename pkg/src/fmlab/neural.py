"""Trainable velocity fields with handwritten reverse-mode gradients.

The model is a small dense network (SiLU activations) over flattened
samples. Conditioning enters through a sinusoidal time embedding summed with
a label embedding and passed through a two-layer MLP whose output is added
to the first hidden pre-activation; mask-conditional models additionally
concatenate the flattened two-channel one-hot mask to the input features.
Everything is float64 numpy and bit-deterministic for a fixed seed.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DomainError, ShapeError, TrainingError
from .schedules import (
    PathSchedule,
    RectifiedSchedule,
    interpolate,
    rectified_interpolate,
    target_velocity,
)

__all__ = [
    "time_embedding",
    "VelocityModel",
    "TrainState",
    "TrainConfig",
    "init_train_state",
    "adam_step",
    "ema_update",
    "train_fm",
    "train_rf_injector",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = b"FMCK"
CHECKPOINT_VERSION = 1

CLASS_CONDITIONAL = "class_conditional"
MASK_CONDITIONAL = "mask_conditional"


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal embedding of s = 1e3*t as interleaved (sin, cos) pairs.

    Component 2i is sin(s / 10000^(2i/dim)), component 2i+1 the matching
    cosine. Scaling t by 1e3 spreads [0,1] over resolvable phases.
    """
    if dim <= 0 or dim % 2 != 0:
        raise DomainError(f"embedding dim must be even and positive, got {dim}")
    t = np.asarray(t, dtype=np.float64)
    s = 1e3 * t
    i = np.arange(dim // 2, dtype=np.float64)
    freqs = 10000.0 ** (2.0 * i / dim)
    angles = s[..., None] / freqs if t.ndim else s / freqs
    out = np.empty(t.shape + (dim,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _silu(x):
    return x * _sigmoid(x)


def _dsilu(x):
    sig = _sigmoid(x)
    return sig * (1.0 + x * (1.0 - sig))


class VelocityModel:
    """Dense velocity network v(x, t, y) with exact manual gradients.

    mode 'class_conditional' embeds integer labels (row num_classes is the
    reserved null token); mode 'mask_conditional' concatenates the flattened
    one-hot mask and uses the time embedding alone on the conditioning path.
    The conditioning vector z is added to every hidden pre-activation, so the
    label/time signal reaches each block rather than only the input. None
    always denotes the null condition (null token / all-zeros mask).
    """

    def __init__(
        self,
        data_dim: int,
        mode: str = CLASS_CONDITIONAL,
        num_classes: int = 10,
        mask_shape: tuple[int, int] | None = None,
        width: int = 128,
        hidden_layers: int = 2,
        time_embed_dim: int = 32,
        seed: int = 0,
        zero_init_output: bool = True,
    ):
        if mode not in (CLASS_CONDITIONAL, MASK_CONDITIONAL):
            raise DomainError(f"unknown mode {mode!r}")
        if mode == MASK_CONDITIONAL and mask_shape is None:
            raise DomainError("mask_conditional mode requires mask_shape")
        if time_embed_dim <= 0 or time_embed_dim % 2 != 0:
            raise DomainError(f"time_embed_dim must be even and positive, got {time_embed_dim}")
        if data_dim < 1 or width < 1 or hidden_layers < 1:
            raise DomainError("data_dim, width and hidden_layers must be positive")
        self.data_dim = data_dim
        self.mode = mode
        self.num_classes = num_classes if mode == CLASS_CONDITIONAL else 0
        self.mask_shape = tuple(mask_shape) if mask_shape is not None else None
        self.width = width
        self.hidden_layers = hidden_layers
        self.time_embed_dim = time_embed_dim

        cond_dim = 2 * self.mask_shape[0] * self.mask_shape[1] if mode == MASK_CONDITIONAL else 0
        self.input_dim = data_dim + cond_dim

        rng = np.random.default_rng(seed)
        dt, w = time_embed_dim, width
        shapes: list[tuple[str, tuple[int, ...]]] = []
        if mode == CLASS_CONDITIONAL:
            shapes.append(("emb", (num_classes + 1, dt)))
        shapes += [
            ("wz1", (dt, w)),
            ("bz1", (w,)),
            ("wz2", (w, w)),
            ("bz2", (w,)),
            ("w_in", (self.input_dim, w)),
            ("b_in", (w,)),
        ]
        for layer in range(hidden_layers - 1):
            shapes += [(f"wh{layer}", (w, w)), (f"bh{layer}", (w,))]
        shapes += [("w_out", (w, data_dim)), ("b_out", (data_dim,))]
        self._shapes = shapes

        self._p: dict[str, np.ndarray] = {}
        for name, shape in shapes:
            if name.startswith("b"):
                self._p[name] = np.zeros(shape)
            elif name == "emb":
                self._p[name] = rng.normal(0.0, 1.0 / np.sqrt(dt), shape)
            elif name == "w_out" and zero_init_output:
                self._p[name] = np.zeros(shape)
            else:
                fan_in = shape[0]
                self._p[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape)

    # -- parameter vector plumbing ------------------------------------------

    @property
    def n_params(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self._shapes)

    def get_params(self) -> np.ndarray:
        return np.concatenate([self._p[name].ravel() for name, _ in self._shapes])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ShapeError(f"expected {self.n_params} parameters, got {flat.shape}")
        offset = 0
        for name, shape in self._shapes:
            size = int(np.prod(shape))
            self._p[name] = flat[offset : offset + size].reshape(shape).copy()
            offset += size

    def _grads_to_flat(self, grads: dict[str, np.ndarray]) -> np.ndarray:
        return np.concatenate([grads[name].ravel() for name, _ in self._shapes])

    # -- conditioning preparation -------------------------------------------

    def _prepare_cond(self, y, batch: int):
        """Normalize y into per-sample label indices or one-hot mask rows."""
        if self.mode == CLASS_CONDITIONAL:
            null_idx = self.num_classes
            if y is None:
                labels = np.full(batch, null_idx, dtype=np.intp)
            else:
                labels = np.asarray(y)
                if labels.ndim == 0:
                    labels = np.full(batch, int(labels), dtype=np.intp)
                labels = labels.astype(np.intp)
            if labels.shape != (batch,):
                raise ShapeError(f"labels shape {labels.shape} does not match batch {batch}")
            if np.any(labels < 0) or np.any(labels > null_idx):
                raise DomainError(f"labels must lie in [0, {null_idx}]")
            return labels
        hw = self.mask_shape[0] * self.mask_shape[1]
        if y is None:
            m = np.zeros((batch,) + self.mask_shape, dtype=np.float64)
        else:
            m = np.asarray(y, dtype=np.float64)
            if m.ndim == 2:
                m = np.broadcast_to(m, (batch,) + m.shape)
        if m.shape != (batch,) + self.mask_shape:
            raise ShapeError(f"mask shape {m.shape} does not match {(batch,) + self.mask_shape}")
        flat = m.reshape(batch, hw)
        return np.concatenate([flat, 1.0 - flat], axis=1)

    # -- forward / backward --------------------------------------------------

    def _forward_batch(self, x: np.ndarray, t: np.ndarray, cond):
        p = self._p
        batch = x.shape[0]
        e = time_embedding(t, self.time_embed_dim)
        if self.mode == CLASS_CONDITIONAL:
            labels = cond
            e = e + p["emb"][labels]
            x_in = x
        else:
            labels = None
            x_in = np.concatenate([x, cond], axis=1)

        zh_pre = e @ p["wz1"] + p["bz1"]
        zh = _silu(zh_pre)
        z = zh @ p["wz2"] + p["bz2"]

        h_pres = [x_in @ p["w_in"] + p["b_in"] + z]
        hs = [_silu(h_pres[0])]
        for layer in range(self.hidden_layers - 1):
            h_pres.append(hs[-1] @ p[f"wh{layer}"] + p[f"bh{layer}"] + z)
            hs.append(_silu(h_pres[-1]))
        out = hs[-1] @ p["w_out"] + p["b_out"]
        cache = {
            "x_in": x_in,
            "e": e,
            "labels": labels,
            "zh_pre": zh_pre,
            "zh": zh,
            "h_pres": h_pres,
            "hs": hs,
            "batch": batch,
        }
        return out, cache

    def _backward_batch(self, cache, grad_out: np.ndarray) -> np.ndarray:
        p = self._p
        grads: dict[str, np.ndarray] = {}
        hs, h_pres = cache["hs"], cache["h_pres"]

        grads["w_out"] = hs[-1].T @ grad_out
        grads["b_out"] = grad_out.sum(axis=0)
        gh = grad_out @ p["w_out"].T
        gz = np.zeros_like(gh)
        for layer in range(self.hidden_layers - 2, -1, -1):
            gpre = gh * _dsilu(h_pres[layer + 1])
            grads[f"wh{layer}"] = hs[layer].T @ gpre
            grads[f"bh{layer}"] = gpre.sum(axis=0)
            gz += gpre
            gh = gpre @ p[f"wh{layer}"].T
        gpre0 = gh * _dsilu(h_pres[0])
        grads["w_in"] = cache["x_in"].T @ gpre0
        grads["b_in"] = gpre0.sum(axis=0)
        gz += gpre0

        # z feeds every hidden pre-activation, so its gradient is the sum.
        grads["wz2"] = cache["zh"].T @ gz
        grads["bz2"] = gz.sum(axis=0)
        gzh = gz @ p["wz2"].T
        gzh_pre = gzh * _dsilu(cache["zh_pre"])
        grads["wz1"] = cache["e"].T @ gzh_pre
        grads["bz1"] = gzh_pre.sum(axis=0)
        if self.mode == CLASS_CONDITIONAL:
            ge = gzh_pre @ p["wz1"].T
            gemb = np.zeros_like(p["emb"])
            np.add.at(gemb, cache["labels"], ge)
            grads["emb"] = gemb
        return self._grads_to_flat(grads)

    def forward(self, x, t, y=None) -> np.ndarray:
        """Velocity prediction for a single sample or a batch.

        x is (D,) or (B, D); t a scalar or (B,); y a label, mask, per-sample
        array thereof, or None for the null condition.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.ndim != 2 or xb.shape[1] != self.data_dim:
            raise ShapeError(f"x must have trailing dim {self.data_dim}, got {x.shape}")
        tb = np.asarray(t, dtype=np.float64)
        if tb.ndim == 0:
            tb = np.full(xb.shape[0], float(tb))
        cond = self._prepare_cond(y, xb.shape[0])
        out, _ = self._forward_batch(xb, tb, cond)
        return out[0] if single else out

    def backward(self, x, t, y, grad_out) -> np.ndarray:
        """Exact gradient of sum(forward(x,t,y) * grad_out) w.r.t. parameters."""
        x = np.asarray(x, dtype=np.float64)
        grad_out = np.asarray(grad_out, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        gb = grad_out[None, :] if single else grad_out
        if gb.shape != (xb.shape[0], self.data_dim):
            raise ShapeError(f"grad_out shape {grad_out.shape} does not match output")
        tb = np.asarray(t, dtype=np.float64)
        if tb.ndim == 0:
            tb = np.full(xb.shape[0], float(tb))
        cond = self._prepare_cond(y, xb.shape[0])
        _, cache = self._forward_batch(xb, tb, cond)
        return self._backward_batch(cache, gb)

    def conditioning_vector(self, t: float, y) -> np.ndarray:
        """z = MLP(psi(t) + E(y)); class-conditional models only."""
        if self.mode != CLASS_CONDITIONAL:
            raise DomainError("conditioning_vector requires a class_conditional model")
        labels = self._prepare_cond(y, 1)
        e = time_embedding(np.asarray([t], dtype=np.float64), self.time_embed_dim)
        e = e + self._p["emb"][labels]
        zh = _silu(e @ self._p["wz1"] + self._p["bz1"])
        return (zh @ self._p["wz2"] + self._p["bz2"])[0]


# -- optimizer and EMA --------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    ema_decay: float = 0.9999
    p_drop: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class TrainState:
    params: np.ndarray
    ema_params: np.ndarray
    step: int
    adam_m: np.ndarray
    adam_v: np.ndarray
    lr: float
    beta1: float
    beta2: float
    eps_adam: float
    ema_decay: float

    def __post_init__(self):
        if self.ema_params.shape != self.params.shape:
            raise ShapeError("ema_params must match params length")
        if not 0.0 <= self.ema_decay < 1.0:
            raise DomainError(f"ema_decay must lie in [0,1), got {self.ema_decay}")


def init_train_state(model: VelocityModel, config: TrainConfig) -> TrainState:
    params = model.get_params()
    return TrainState(
        params=params,
        ema_params=params.copy(),
        step=0,
        adam_m=np.zeros_like(params),
        adam_v=np.zeros_like(params),
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        eps_adam=config.eps_adam,
        ema_decay=config.ema_decay,
    )


def adam_step(state: TrainState, grads: np.ndarray) -> TrainState:
    """One bias-corrected Adam update; returns a new state."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != state.params.shape:
        raise ShapeError(f"gradient shape {grads.shape} does not match params")
    step = state.step + 1
    if not np.all(np.isfinite(grads)):
        raise TrainingError(f"non-finite gradients at step {step}", step=step)
    m = state.beta1 * state.adam_m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.adam_v + (1.0 - state.beta2) * grads**2
    m_hat = m / (1.0 - state.beta1**step)
    v_hat = v / (1.0 - state.beta2**step)
    params = state.params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_adam)
    return replace(state, params=params, adam_m=m, adam_v=v, step=step)


def ema_update(state: TrainState) -> TrainState:
    """ema <- d*ema + (1-d)*params."""
    d = state.ema_decay
    return replace(state, ema_params=d * state.ema_params + (1.0 - d) * state.params)


# -- training loops -----------------------------------------------------------


def _train_loop(
    model: VelocityModel,
    config: TrainConfig,
    draw_batch: Callable[[np.random.Generator], tuple[np.ndarray, np.ndarray, np.ndarray, object]],
    callback: Callable[[int, float], None] | None,
) -> TrainState:
    rng = np.random.default_rng(config.seed)
    state = init_train_state(model, config)
    for _ in range(config.steps):
        xt, t, ut, cond = draw_batch(rng)
        pred, cache = model._forward_batch(xt, t, cond)
        diff = pred - ut
        loss = float(np.mean(diff**2))
        if not np.isfinite(loss):
            raise TrainingError(f"loss diverged (non-finite) at step {state.step + 1}", step=state.step + 1)
        grads = model._backward_batch(cache, 2.0 * diff / diff.size)
        state = ema_update(adam_step(state, grads))
        model.set_params(state.params)
        if callback is not None:
            callback(state.step, loss)
    return state


def train_fm(
    model: VelocityModel,
    dataset: tuple[np.ndarray, np.ndarray],
    sched: PathSchedule,
    config: TrainConfig,
    callback: Callable[[int, float], None] | None = None,
) -> TrainState:
    """Flow-matching training against pairwise velocity targets.

    dataset is (x1, y): data rows (N, D) and per-row conditioning, integer
    labels for class models or (N, H, W) masks for mask models. Per step the
    loop draws a base batch x0 ~ N(0, I), times t ~ U(0,1) (one per element),
    path noise, applies condition dropout with probability p_drop, and
    regresses the network onto the interpolant's velocity. Deterministic for
    a fixed config.seed.
    """
    x1_all = np.asarray(dataset[0], dtype=np.float64)
    y_all = np.asarray(dataset[1])
    if x1_all.ndim != 2 or x1_all.shape[1] != model.data_dim:
        raise ShapeError(f"data must be (N, {model.data_dim}), got {x1_all.shape}")
    n = x1_all.shape[0]
    if n == 0:
        raise DomainError("dataset is empty")
    null_idx = model.num_classes

    def draw(rng: np.random.Generator):
        idx = rng.integers(0, n, config.batch_size)
        x1 = x1_all[idx]
        x0 = rng.standard_normal(x1.shape)
        xi = rng.standard_normal(x1.shape)
        t = rng.random(config.batch_size)
        drop = rng.random(config.batch_size) < config.p_drop
        if model.mode == CLASS_CONDITIONAL:
            labels = y_all[idx].astype(np.intp).copy()
            labels[drop] = null_idx
            cond = model._prepare_cond(labels, config.batch_size)
        else:
            m = y_all[idx].astype(np.float64).copy()
            m[drop] = 0.0
            cond = model._prepare_cond(m, config.batch_size)
        xt = interpolate(sched, x0, x1, xi, t)
        ut = target_velocity(sched, x0, x1, xi, t)
        return xt, t, ut, cond

    return _train_loop(model, config, draw, callback)


def train_rf_injector(
    model: VelocityModel,
    crack_pairs: tuple[np.ndarray, np.ndarray],
    backgrounds: np.ndarray,
    sched: RectifiedSchedule,
    config: TrainConfig,
    callback: Callable[[int, float], None] | None = None,
) -> TrainState:
    """Rectified-flow training that transports backgrounds onto crack images.

    crack_pairs is (images (N, D), masks (N, H, W)); backgrounds is (M, D).
    Each step pairs an independent background x0 with a crack image x1 and
    regresses onto u_t = phi'(t)(x1 - x0) along the rectified bridge, with
    the mask as (dropout-subjected) conditioning.
    """
    images = np.asarray(crack_pairs[0], dtype=np.float64)
    mask_arr = np.asarray(crack_pairs[1], dtype=np.float64)
    bgs = np.asarray(backgrounds, dtype=np.float64)
    if images.shape[0] == 0 or mask_arr.shape[0] == 0:
        raise DomainError("no training pairs")
    if images.shape[0] != mask_arr.shape[0]:
        raise ShapeError("images and masks must pair one-to-one")
    if bgs.shape[0] == 0:
        raise DomainError("no backgrounds")
    if model.mode != MASK_CONDITIONAL:
        raise DomainError("train_rf_injector requires a mask_conditional model")

    def draw(rng: np.random.Generator):
        idx = rng.integers(0, images.shape[0], config.batch_size)
        bg_idx = rng.integers(0, bgs.shape[0], config.batch_size)
        x0 = bgs[bg_idx]
        x1 = images[idx]
        eps = rng.standard_normal(x1.shape)
        t = rng.random(config.batch_size)
        drop = rng.random(config.batch_size) < config.p_drop
        m = mask_arr[idx].copy()
        m[drop] = 0.0
        xt, ut = rectified_interpolate(sched, x0, x1, eps, t)
        return xt, t, ut, model._prepare_cond(m, config.batch_size)

    return _train_loop(model, config, draw, callback)


# -- checkpoint I/O -----------------------------------------------------------


def save_checkpoint(path, params: np.ndarray, ema_params: np.ndarray) -> None:
    """Write the flat little-endian checkpoint: magic, version, count, params, ema."""
    params = np.ascontiguousarray(params, dtype="<f8")
    ema_params = np.ascontiguousarray(ema_params, dtype="<f8")
    if params.shape != ema_params.shape or params.ndim != 1:
        raise ShapeError("params and ema_params must be equal-length vectors")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", params.size))
        fh.write(params.tobytes())
        fh.write(ema_params.tobytes())


def load_checkpoint(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a checkpoint back as (params, ema_params)."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise DomainError(f"bad checkpoint magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise DomainError(f"unsupported checkpoint version {version}")
        (count,) = struct.unpack("<Q", fh.read(8))
        raw = fh.read(16 * count)
        if len(raw) != 16 * count:
            raise DomainError("checkpoint truncated")
    params = np.frombuffer(raw[: 8 * count], dtype="<f8").copy()
    ema = np.frombuffer(raw[8 * count :], dtype="<f8").copy()
    return params, ema
