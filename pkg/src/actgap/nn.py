"""Dense ReLU network with hand-written backprop and an Adam optimizer.

All parameters of a network live in one flat buffer; ``weights[i]`` and
``biases[i]`` are reshaped views into it. Weight matrices are stored as
``(fan_in, fan_out)`` so a ``(B, fan_in)`` batch maps through ``x @ W + b``.
Gradients use the same flat layout, which keeps the optimizer a single
fused loop.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numba
import numpy as np

_MAGIC = b"AGNN"
_VERSION = 1


def _block_slices(layer_dims: Sequence[int]) -> List[Tuple[int, int, tuple]]:
    """(start, stop, shape) for every parameter block in flat order."""
    out = []
    offset = 0
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        n = fan_in * fan_out
        out.append((offset, offset + n, (fan_in, fan_out)))
        offset += n
        out.append((offset, offset + fan_out, (fan_out,)))
        offset += fan_out
    return out


def parameter_count(layer_dims: Sequence[int]) -> int:
    return sum(a * b + b for a, b in zip(layer_dims[:-1], layer_dims[1:]))


def block_names(layer_dims: Sequence[int]) -> List[str]:
    names = []
    for i in range(len(layer_dims) - 1):
        names += [f"layer{i}.weight", f"layer{i}.bias"]
    return names


def unflatten(layer_dims: Sequence[int], flat: np.ndarray) -> List[np.ndarray]:
    """Views of ``flat`` as ``[W0, b0, W1, b1, ...]``."""
    return [flat[a:b].reshape(shape) for a, b, shape in _block_slices(layer_dims)]


class Mlp:
    """Q-network parameters. Hidden layers use ReLU, the output is linear."""

    def __init__(self, layer_dims: Sequence[int], flat: np.ndarray):
        self.layer_dims = [int(d) for d in layer_dims]
        if flat.ndim != 1 or flat.size != parameter_count(self.layer_dims):
            raise ValueError(f"flat buffer of size {flat.size} does not fit dims {self.layer_dims}")
        self.flat = flat
        blocks = unflatten(self.layer_dims, flat)
        self.weights = blocks[0::2]
        self.biases = blocks[1::2]

    @classmethod
    def from_blocks(cls, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray],
                    dtype=np.float64) -> "Mlp":
        dims = [weights[0].shape[0]] + [w.shape[1] for w in weights]
        parts = []
        for w, b in zip(weights, biases):
            parts += [np.ravel(w), np.ravel(b)]
        return cls(dims, np.concatenate(parts).astype(dtype))

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def dtype(self):
        return self.flat.dtype

    def parameters(self) -> List[np.ndarray]:
        return unflatten(self.layer_dims, self.flat)

    def __repr__(self) -> str:
        return f"Mlp(layer_dims={self.layer_dims}, dtype={self.flat.dtype})"


@dataclass
class ForwardCache:
    inputs: np.ndarray
    # post-activation output of every hidden layer
    hidden: List[np.ndarray]
    squeeze: bool


def mlp_init(layer_dims: Sequence[int], seed: int, dtype=np.float64) -> Mlp:
    """Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ValueError(f"need at least input and output dims, got {dims}")
    if any(d <= 0 for d in dims):
        raise ValueError(f"layer dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    flat = np.zeros(parameter_count(dims), dtype=np.float64)
    for (a, b, shape) in _block_slices(dims)[0::2]:
        fan_in, fan_out = shape
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        flat[a:b] = rng.uniform(-bound, bound, size=fan_in * fan_out)
    return Mlp(dims, flat.astype(dtype))


def forward(mlp: Mlp, inputs) -> Tuple[np.ndarray, ForwardCache]:
    """Evaluate on one input vector or a ``(B, in)`` batch."""
    x = np.asarray(inputs, dtype=mlp.flat.dtype)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != mlp.layer_dims[0]:
        raise ValueError(
            f"input shape {np.shape(inputs)} does not match input dim {mlp.layer_dims[0]}"
        )
    hidden = []
    h = x
    last = mlp.num_layers - 1
    for i in range(mlp.num_layers):
        z = h @ mlp.weights[i]
        z += mlp.biases[i]
        if i < last:
            np.maximum(z, 0.0, out=z)
            hidden.append(z)
        h = z
    return (h[0] if squeeze else h), ForwardCache(x, hidden, squeeze)


def predict(mlp: Mlp, inputs) -> np.ndarray:
    return forward(mlp, inputs)[0]


def backward(mlp: Mlp, cache: ForwardCache, output_gradient) -> np.ndarray:
    """Flat gradient of a scalar loss given dL/d(output).

    The result uses the parameter layout of ``mlp.flat``; pass it to
    :func:`unflatten` for per-block views.
    """
    g = np.asarray(output_gradient, dtype=mlp.flat.dtype)
    if cache.squeeze:
        g = g[None, :]
    grad = np.empty_like(mlp.flat)
    blocks = unflatten(mlp.layer_dims, grad)
    for i in range(mlp.num_layers - 1, -1, -1):
        h_in = cache.hidden[i - 1] if i > 0 else cache.inputs
        np.matmul(h_in.T, g, out=blocks[2 * i])
        np.sum(g, axis=0, out=blocks[2 * i + 1])
        if i > 0:
            g = g @ mlp.weights[i].T
            g *= cache.hidden[i - 1] > 0.0
    return grad


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    names: List[str] = field(default_factory=list)
    layer_dims: List[int] = field(default_factory=list)

    @classmethod
    def for_mlp(cls, mlp: Mlp, learning_rate: float = 1e-3, beta1: float = 0.9,
                beta2: float = 0.999, eps: float = 1e-8) -> "OptimizerState":
        return cls(
            m=np.zeros_like(mlp.flat),
            v=np.zeros_like(mlp.flat),
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            names=block_names(mlp.layer_dims),
            layer_dims=list(mlp.layer_dims),
        )

    def block_of(self, index: int) -> str:
        if self.layer_dims:
            for name, (a, b, _) in zip(self.names, _block_slices(self.layer_dims)):
                if a <= index < b:
                    return name
        return f"param[{index}]"


@numba.njit(cache=True, error_model="numpy")
def _adam_kernel(p, g, m, v, lr, b1, ib1, b2, ib2, ic1, ic2, eps, tiny, p_out, m_out, v_out):
    zero = tiny - tiny
    for i in range(p.size):
        gi = g[i]
        mi = b1 * m[i] + ib1 * gi
        vi = b2 * v[i] + ib2 * (gi * gi)
        # flush decaying moments before they turn subnormal (subnormals are very slow)
        if -tiny < mi < tiny:
            mi = zero
        if vi < tiny:
            vi = zero
        p_out[i] = p[i] - lr * ((mi * ic1) / (np.sqrt(vi * ic2) + eps))
        m_out[i] = mi
        v_out[i] = vi


def _first_non_finite(x: np.ndarray) -> int:
    # a finite dot product proves every entry finite; otherwise search
    with np.errstate(over="ignore", invalid="ignore"):
        if np.isfinite(np.dot(x, x)):
            return -1
    bad = np.flatnonzero(~np.isfinite(x))
    return int(bad[0]) if bad.size else -1


def adam_step(params: np.ndarray, grads: np.ndarray,
              state: OptimizerState) -> Tuple[np.ndarray, OptimizerState]:
    """One bias-corrected Adam update on flat buffers; inputs are left untouched."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grads {grads.shape}, "
                         f"state {state.m.shape}")
    grads = grads.astype(params.dtype, copy=False)
    bad = _first_non_finite(grads)
    if bad >= 0:
        raise FloatingPointError(f"non-finite gradient in {state.block_of(bad)}")
    t = state.step + 1
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    p_out = np.empty_like(params)
    m_out = np.empty_like(state.m)
    v_out = np.empty_like(state.v)
    f = params.dtype.type
    b1, b2 = state.beta1, state.beta2
    _adam_kernel(params, grads, state.m, state.v, f(state.learning_rate), f(b1), f(1.0 - b1),
                 f(b2), f(1.0 - b2), f(1.0 / c1), f(1.0 / c2), f(state.eps),
                 f(np.finfo(params.dtype).tiny * 1e6), p_out, m_out, v_out)
    bad = _first_non_finite(p_out)
    if bad >= 0:
        raise FloatingPointError(f"non-finite parameter in {state.block_of(bad)} after update")
    new_state = OptimizerState(m_out, v_out, t, state.learning_rate, state.beta1,
                               state.beta2, state.eps, state.names, state.layer_dims)
    return p_out, new_state


def clip_grad_norm(grad: np.ndarray, max_norm: float) -> Tuple[np.ndarray, float]:
    """Rescale ``grad`` to global L2 norm ``max_norm`` when it exceeds it."""
    total = float(np.sqrt(np.dot(grad, grad)))
    if total > max_norm:
        return grad * (max_norm / total), total
    return grad, total


def clone_parameters(src: Mlp) -> Mlp:
    return Mlp(src.layer_dims, src.flat.copy())


def to_bytes(mlp: Mlp) -> bytes:
    """``AGNN`` | u16 version | u32 layer count | u32 dims | f64 LE row-major blocks."""
    dims = mlp.layer_dims
    head = _MAGIC + struct.pack("<HI", _VERSION, mlp.num_layers)
    head += struct.pack(f"<{len(dims)}I", *dims)
    return head + np.ascontiguousarray(mlp.flat, dtype="<f8").tobytes()


def from_bytes(blob: bytes, dtype=np.float64) -> Mlp:
    if blob[:4] != _MAGIC:
        raise ValueError("not an AGNN parameter blob")
    version, n_layers = struct.unpack_from("<HI", blob, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported AGNN version {version}")
    offset = 4 + struct.calcsize("<HI")
    dims = list(struct.unpack_from(f"<{n_layers + 1}I", blob, offset))
    offset += 4 * (n_layers + 1)
    n = parameter_count(dims)
    if len(blob) != offset + 8 * n:
        raise ValueError("AGNN blob length does not match its header")
    flat = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).astype(dtype)
    return Mlp(dims, flat)
