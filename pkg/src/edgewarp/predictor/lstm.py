"""Stacked LSTM binary classifier in plain numpy, trained with BPTT.

All parameters live in one flat float64 vector; the per-layer matrices are
views into it.  That keeps the optimizer, gradient checking and the file
format simple.

Gate order inside each 4H block is input, forget, cell candidate, output.
"""

from __future__ import annotations

import logging
import struct
import zlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

MAGIC = b"EWLM"
FORMAT_VERSION = 1


class ModelError(ValueError):
    code = "MODEL_ERROR"


class ShapeMismatch(ModelError):
    code = "SHAPE_MISMATCH"


class DegenerateDataset(ModelError):
    code = "DEGENERATE_DATASET"


class ModelFormatError(ModelError):
    code = "MODEL_FORMAT"


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class LstmModel:
    def __init__(self, input_size: int, hidden: Sequence[int], window: int,
                 params: Optional[np.ndarray] = None) -> None:
        if input_size < 1 or window < 1 or not hidden or min(hidden) < 1:
            raise ModelError("sizes must be positive")
        self.input_size = int(input_size)
        self.hidden = tuple(int(h) for h in hidden)
        self.window = int(window)
        shapes = []
        prev = self.input_size
        for h in self.hidden:
            shapes += [(prev, 4 * h), (h, 4 * h), (4 * h,)]
            prev = h
        shapes += [(prev, 1), (1,)]
        self._shapes = shapes
        total = sum(int(np.prod(s)) for s in shapes)
        if params is None:
            params = np.zeros(total)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (total,):
            raise ShapeMismatch(f"expected {total} parameters, got {params.shape}")
        self.params = params
        self._bind()

    def _bind(self) -> None:
        self.tensors = []
        off = 0
        for s in self._shapes:
            size = int(np.prod(s))
            self.tensors.append(self.params[off:off + size].reshape(s))
            off += size

    @classmethod
    def initialized(cls, input_size: int, hidden: Sequence[int], window: int, seed: int = 0) -> "LstmModel":
        """Glorot-uniform inputs, orthogonal-ish recurrent weights, forget bias 1."""
        model = cls(input_size, hidden, window)
        rng = np.random.default_rng(seed)
        for i, t in enumerate(model.tensors):
            if t.ndim == 2:
                limit = np.sqrt(6.0 / (t.shape[0] + t.shape[1]))
                t[...] = rng.uniform(-limit, limit, size=t.shape)
        for li, h in enumerate(model.hidden):
            model.tensors[3 * li + 2][h:2 * h] = 1.0
        return model

    @property
    def parameter_count(self) -> int:
        return self.params.size

    def copy(self) -> "LstmModel":
        return LstmModel(self.input_size, self.hidden, self.window, self.params.copy())

    # -- forward / backward -------------------------------------------------

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.window, self.input_size):
            raise ShapeMismatch(f"expected (batch, {self.window}, {self.input_size}), got {x.shape}")
        return x

    def _forward(self, x: np.ndarray, keep: bool, tensors: Optional[list] = None):
        tensors = self.tensors if tensors is None else tensors
        b, n, _ = x.shape
        inp = x
        caches = []
        for li, h in enumerate(self.hidden):
            wx, wh, bias = tensors[3 * li:3 * li + 3]
            hs = np.zeros((b, n + 1, h), dtype=x.dtype)
            cs = np.zeros((b, n + 1, h), dtype=x.dtype)
            gates = np.empty((b, n, 4 * h)) if keep else None
            xw = inp @ wx + bias  # (b, n, 4h), input projection for all steps at once
            for t in range(n):
                z = xw[:, t] + hs[:, t] @ wh
                z[:, :2 * h] = _sigmoid(z[:, :2 * h])
                z[:, 2 * h:3 * h] = np.tanh(z[:, 2 * h:3 * h])
                z[:, 3 * h:] = _sigmoid(z[:, 3 * h:])
                cs[:, t + 1] = z[:, h:2 * h] * cs[:, t] + z[:, :h] * z[:, 2 * h:3 * h]
                hs[:, t + 1] = z[:, 3 * h:] * np.tanh(cs[:, t + 1])
                if keep:
                    gates[:, t] = z
            if keep:
                caches.append((inp, hs, cs, gates))
            inp = hs[:, 1:]
        wd, bd = tensors[-2:]
        last = inp[:, -1]
        logit = (last @ wd + bd)[:, 0]
        return logit, last, caches

    def logits(self, x: np.ndarray) -> np.ndarray:
        return self._forward(self._check(x), keep=False)[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Handover probability for each window in the batch."""
        return _sigmoid(self.logits(x))

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray,
                      weights: Optional[np.ndarray] = None) -> tuple[float, np.ndarray]:
        """Weighted mean binary cross-entropy and its gradient w.r.t. ``params``."""
        x = self._check(x)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        b = x.shape[0]
        w = np.ones(b) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
        logit, last, caches = self._forward(x, keep=True)
        # log(1 + e^-|z|) form avoids overflow for saturated logits
        per = np.maximum(logit, 0) - logit * y + np.log1p(np.exp(-np.abs(logit)))
        loss = float(np.sum(w * per) / b)
        dlogit = w * (_sigmoid(logit) - y) / b

        grads = [np.zeros(s) for s in self._shapes]
        wd = self.tensors[-2]
        grads[-2][...] = last.T @ dlogit[:, None]
        grads[-1][...] = dlogit.sum()
        n = self.window
        dh_seq = np.zeros((b, n, self.hidden[-1]))
        dh_seq[:, -1] = dlogit[:, None] * wd[:, 0][None, :]
        for li in range(len(self.hidden) - 1, -1, -1):
            h = self.hidden[li]
            wx, wh, _ = self.tensors[3 * li:3 * li + 3]
            inp, hs, cs, gates = caches[li]
            dz_all = np.empty((b, n, 4 * h))
            dh_next = np.zeros((b, h))
            dc_next = np.zeros((b, h))
            for t in range(n - 1, -1, -1):
                z = gates[:, t]
                i, f, g, o = z[:, :h], z[:, h:2 * h], z[:, 2 * h:3 * h], z[:, 3 * h:]
                tc = np.tanh(cs[:, t + 1])
                dh = dh_seq[:, t] + dh_next
                dc = dc_next + dh * o * (1.0 - tc * tc)
                dz = dz_all[:, t]
                dz[:, :h] = dc * g * i * (1.0 - i)
                dz[:, h:2 * h] = dc * cs[:, t] * f * (1.0 - f)
                dz[:, 2 * h:3 * h] = dc * i * (1.0 - g * g)
                dz[:, 3 * h:] = dh * tc * o * (1.0 - o)
                dc_next = dc * f
                dh_next = dz @ wh.T
            flat_dz = dz_all.reshape(-1, 4 * h)
            grads[3 * li][...] = inp.reshape(-1, inp.shape[-1]).T @ flat_dz
            grads[3 * li + 1][...] = hs[:, :-1].reshape(-1, h).T @ flat_dz
            grads[3 * li + 2][...] = flat_dz.sum(axis=0)
            dh_seq = dz_all @ wx.T
        return loss, np.concatenate([g.reshape(-1) for g in grads])

    def loss(self, x: np.ndarray, y: np.ndarray, weights: Optional[np.ndarray] = None,
             precise: bool = False):
        """Weighted mean cross-entropy; ``precise`` evaluates and returns extended precision."""
        x = self._check(x)
        dtype = np.longdouble if precise else np.float64
        y = np.asarray(y, dtype=dtype).reshape(-1)
        w = np.ones(len(y), dtype=dtype) if weights is None else np.asarray(weights, dtype=dtype).reshape(-1)
        tensors = [t.astype(dtype) for t in self.tensors] if precise else None
        logit = self._forward(x.astype(dtype), keep=False, tensors=tensors)[0]
        per = np.maximum(logit, 0) - logit * y + np.log1p(np.exp(-np.abs(logit)))
        total = np.sum(w * per) / len(y)
        # keep the extended value: rounding to float64 here would undo ``precise``
        return total if precise else float(total)

    # -- persistence ---------------------------------------------------------

    def to_bytes(self) -> bytes:
        head = MAGIC + struct.pack("<HHHH", FORMAT_VERSION, self.input_size, self.window, len(self.hidden))
        head += struct.pack(f"<{len(self.hidden)}H", *self.hidden)
        body = head + self.params.astype("<f8").tobytes()
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    @classmethod
    def from_bytes(cls, data: bytes) -> "LstmModel":
        if len(data) < 16 or data[:4] != MAGIC:
            raise ModelFormatError("not a model file")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise ModelFormatError("model file checksum mismatch")
        version, input_size, window, layers = struct.unpack_from("<HHHH", body, 4)
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format version {version}")
        off = 12
        hidden = struct.unpack_from(f"<{layers}H", body, off)
        off += 2 * layers
        params = np.frombuffer(body[off:], dtype="<f8").astype(np.float64)
        try:
            return cls(input_size, hidden, window, params)
        except ShapeMismatch as exc:
            raise ModelFormatError(str(exc)) from exc

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "LstmModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.005
    batch_size: int = 128
    seed: int = 0
    class_weighting: bool = True
    optimizer: str = "adam"  # or "sgd" (momentum)
    momentum: float = 0.9
    hidden: tuple[int, ...] = (32, 32)
    clip_norm: float = 5.0


def class_weights(y: np.ndarray) -> np.ndarray:
    """Per-sample weights inversely proportional to class frequency (mean 1)."""
    y = np.asarray(y).astype(int)
    n, pos = len(y), int(y.sum())
    neg = n - pos
    return np.where(y == 1, n / (2.0 * pos), n / (2.0 * neg))


def train(x: np.ndarray, y: np.ndarray, config: TrainConfig = TrainConfig(),
          model: Optional[LstmModel] = None) -> tuple[LstmModel, list[float]]:
    """Mini-batch training; returns the model and the training loss per epoch.

    Entry 0 of the loss history is the loss of the initial model, so
    ``epochs=0`` reports exactly one value.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.ndim != 3 or len(x) != len(y):
        raise ShapeMismatch("x must be (samples, window, features) matching y")
    if y.min() == y.max():
        raise DegenerateDataset("training set needs both classes")
    if model is None:
        model = LstmModel.initialized(x.shape[2], config.hidden, x.shape[1], config.seed)
    w = class_weights(y) if config.class_weighting else np.ones(len(y))
    rng = np.random.default_rng(config.seed + 1)
    history = [model.loss(x, y, w)]
    v = np.zeros_like(model.params)
    m = np.zeros_like(model.params)
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(y))
        for s in range(0, len(y), config.batch_size):
            idx = order[s:s + config.batch_size]
            _, g = model.loss_and_grad(x[idx], y[idx], w[idx])
            norm = float(np.linalg.norm(g))
            if config.clip_norm and norm > config.clip_norm:
                g *= config.clip_norm / norm
            step += 1
            if config.optimizer == "sgd":
                v = config.momentum * v - config.learning_rate * g
                model.params += v
            elif config.optimizer == "adam":
                m = 0.9 * m + 0.1 * g
                v = 0.999 * v + 0.001 * g * g
                mhat = m / (1 - 0.9 ** step)
                vhat = v / (1 - 0.999 ** step)
                model.params -= config.learning_rate * mhat / (np.sqrt(vhat) + 1e-8)
            else:
                raise ModelError(f"unknown optimizer {config.optimizer!r}")
        history.append(model.loss(x, y, w))
        log.info("epoch %d loss %.5f", epoch + 1, history[-1])
    return model, history


def gradient_check(model: LstmModel, x: np.ndarray, y, n_weights: int = 100, eps: float = 1e-5,
                   seed: int = 0, analytic: Optional[np.ndarray] = None,
                   indices: Optional[np.ndarray] = None, floor: float = 1e-8) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks ``n_weights`` randomly chosen parameters (or ``indices``).  Where
    both gradients are below ``floor`` in magnitude the absolute difference
    is used instead, so flat points do not produce 0/0.  The perturbed losses
    are evaluated in extended precision: at a 1e-5 step, float64 cancellation
    alone would swamp gradients of order 1e-8.
    """
    x = model._check(x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if analytic is None:
        _, analytic = model.loss_and_grad(x, y)
    if indices is None:
        rng = np.random.default_rng(seed)
        indices = rng.choice(model.parameter_count, size=min(n_weights, model.parameter_count), replace=False)
    probe = model.copy()
    worst = 0.0
    for i in np.asarray(indices).tolist():
        orig = probe.params[i]
        probe.params[i] = orig + eps
        up = probe.loss(x, y, precise=True)
        probe.params[i] = orig - eps
        down = probe.loss(x, y, precise=True)
        probe.params[i] = orig
        numeric = float((up - down) / (2 * eps))
        a = analytic[i]
        scale = max(abs(a), abs(numeric))
        err = abs(a - numeric) if scale < floor else abs(a - numeric) / scale
        worst = max(worst, err)
    return worst
