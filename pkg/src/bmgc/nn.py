"""A small dense differentiable core: MLPs with hand-written backprop, Adam.

Weights are stored ``(fan_in, fan_out)`` so a layer computes ``X @ W + b``.
Every function is dtype-preserving; training runs in float32, gradient
checks in float64.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, NonFiniteGradient, ShapeMismatch

CHECKPOINT_MAGIC = b"BMGCCKPT"
CHECKPOINT_VERSION = 1


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0))).astype(x.dtype, copy=False)


_ACT = {"elu": (elu, elu_grad), None: (None, None)}


@dataclass
class MlpParams:
    weights: list
    biases: list
    activation: str = "elu"
    final_activation: str = None

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeMismatch("need one bias per weight and at least one layer")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (W.shape[1],):
                raise ShapeMismatch(f"layer {k}: bias {b.shape} vs weight {W.shape}")
            if k and self.weights[k - 1].shape[1] != W.shape[0]:
                raise ShapeMismatch(f"layer {k} input {W.shape[0]} != previous output "
                                    f"{self.weights[k - 1].shape[1]}")
        for a in (self.activation, self.final_activation):
            if a not in _ACT:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def in_dim(self):
        return self.weights[0].shape[0]

    @property
    def out_dim(self):
        return self.weights[-1].shape[1]

    def arrays(self):
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def _act(self, k):
        return self.final_activation if k == len(self.weights) - 1 else self.activation


def init_mlp(sizes, rng, activation="elu", final_activation=None, dtype=np.float64):
    """Glorot-uniform weights, zero biases."""
    Ws, bs = [], []
    for fi, fo in zip(sizes[:-1], sizes[1:]):
        a = np.sqrt(6.0 / (fi + fo))
        Ws.append(rng.uniform(-a, a, size=(fi, fo)).astype(dtype))
        bs.append(np.zeros(fo, dtype=dtype))
    return MlpParams(Ws, bs, activation, final_activation)


def mlp_forward(p, X, return_cache=False):
    if X.ndim != 2 or X.shape[1] != p.in_dim:
        raise ShapeMismatch(f"input {X.shape} does not fit first layer {p.weights[0].shape}")
    cache = []
    h = X
    for k, (W, b) in enumerate(zip(p.weights, p.biases)):
        z = h @ W + b
        f = _ACT[p._act(k)][0]
        cache.append((h, z))
        h = z if f is None else f(z)
    return (h, cache) if return_cache else h


def mlp_backward(p, cache, grad_out, need_input_grad=False):
    """Gradients of a scalar loss given ``d loss / d output``.

    Returns ``(grads, grad_input)`` with ``grads`` ordered like ``p.arrays()``.
    """
    grads = [None] * (2 * len(p.weights))
    g = grad_out
    for k in range(len(p.weights) - 1, -1, -1):
        h, z = cache[k]
        df = _ACT[p._act(k)][1]
        if df is not None:
            g = g * df(z)
        grads[2 * k] = h.T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k or need_input_grad:
            g = g @ p.weights[k].T
    return grads, (g if need_input_grad else None)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-2
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(arrays, lr=1e-2, weight_decay=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    return AdamState([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays],
                     0, lr, weight_decay, beta1, beta2, eps)


def adam_step(arrays, grads, s):
    """In-place Adam update; weight decay is an additive L2 term on the gradient."""
    if len(arrays) != len(grads) or len(arrays) != len(s.m):
        raise ShapeMismatch("parameter, gradient and moment lists differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient entering the optimizer")
    s.step += 1
    c1 = 1.0 - s.beta1 ** s.step
    c2 = 1.0 - s.beta2 ** s.step
    for p, g, m, v in zip(arrays, grads, s.m, s.v):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient {g.shape} vs parameter {p.shape}")
        if s.weight_decay:
            g = g + s.weight_decay * p
        m *= s.beta1
        m += (1.0 - s.beta1) * g
        v *= s.beta2
        v += (1.0 - s.beta2) * g * g
        p -= (s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)).astype(p.dtype, copy=False)


def finite_difference(loss_fn, arrays, h=1e-4):
    """Central differences of ``loss_fn()`` w.r.t. every entry of ``arrays`` (perturbed in place)."""
    out = []
    for a in arrays:
        g = np.zeros_like(a, dtype=np.float64)
        flat = a.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            gf[i] = (up - down) / (2 * h)
        out.append(g)
    return out


def max_relative_error(analytic, numeric, floor=1e-12, elementwise=False):
    """Worst relative error over parameter arrays.

    Per array ``||a - n|| / max(||a||, ||n||, floor)``. With ``elementwise``
    every entry is scored on its own as ``|a - n| / max(|a|, |n|, floor)``,
    which magnifies difference-quotient truncation on entries near zero.
    """
    worst = 0.0
    for a, n in zip(analytic, numeric):
        a = np.asarray(a, dtype=np.float64)
        n = np.asarray(n, dtype=np.float64)
        if not a.size:
            continue
        if elementwise:
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
            err = float(np.max(np.abs(a - n) / denom))
        else:
            err = float(np.linalg.norm(a - n)) / max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), floor)
        worst = max(worst, err)
    return worst


def save_checkpoint(path, arrays, meta=None):
    """Binary container of named matrices.

    Layout (little-endian): magic ``BMGCCKPT``, u8 version, u32 JSON-meta
    length + UTF-8 JSON, u32 array count, then per array: u16 name length,
    name, u32 rows, u32 cols, rows*cols float64. Vectors are stored 1 x n.
    """
    blob = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<B", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, a in arrays.items():
            a = np.asarray(a, dtype="<f8")
            m = a.reshape(1, -1) if a.ndim == 1 else a
            nb = name.encode("utf-8")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<II", *m.shape))
            fh.write(np.ascontiguousarray(m).tobytes())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`: ``(arrays, meta)``; vectors come back 1 x n."""
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint")
    if raw[8] != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {raw[8]}")
    pos = 9
    (ml,) = struct.unpack_from("<I", raw, pos)
    meta = json.loads(raw[pos + 4: pos + 4 + ml].decode("utf-8"))
    pos += 4 + ml
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nl,) = struct.unpack_from("<H", raw, pos)
        name = raw[pos + 2: pos + 2 + nl].decode("utf-8")
        pos += 2 + nl
        r, c = struct.unpack_from("<II", raw, pos)
        pos += 8
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=r * c, offset=pos).reshape(r, c).copy()
        pos += 8 * r * c
    return arrays, meta
