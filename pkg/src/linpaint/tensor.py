"""Dense float64 tensors and the differentiable primitives everything else is built on.

Values are numpy arrays wrapped in :class:`Tensor` nodes. Operations are pure:
they never modify their inputs and always allocate fresh outputs. When a
:class:`Tape` is active, each operation also records a backward step, so the
tape can later replay the computation in exact reverse order and accumulate
gradients into the leaves.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "ShapeError",
    "NonFiniteError",
    "Tensor",
    "Tape",
    "make_rng",
    "matmul",
    "transpose",
    "softmax_rows",
    "l2_normalize_rows",
    "conv2d",
    "depthwise_conv2d",
    "nearest_upsample2x",
    "gelu",
    "tanh",
    "sigmoid",
    "leaky_relu",
    "log_clamped",
    "absolute",
    "add",
    "sub",
    "hadamard",
    "scale",
    "concat_channels",
    "concat_cols",
    "slice_cols",
    "sum_all",
    "mean_all",
    "sum_over_rows",
    "div_rows",
    "guard_denominator",
    "chw_to_nc",
    "nc_to_chw",
    "layer_norm_sites",
]

# Finiteness is part of the operation contract (no NaN/Inf escapes). The check
# is cheap at desk scale; it can be switched off for timing experiments.
CHECK_FINITE = True

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class NonFiniteError(ArithmeticError):
    """Raised when an operation would emit NaN or Inf."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded counter-based PRNG (Philox 4x64); identical streams on every platform."""
    return np.random.Generator(np.random.Philox(seed))


class Tensor:
    """A dense n-dimensional float64 array, row-major, with a gradient slot.

    The wrapped array is treated as immutable by every public operation;
    ``grad`` is only written by :meth:`Tape.backward`.
    """

    __slots__ = ("data", "grad")

    def __init__(self, data) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if any(d == 0 for d in arr.shape):
            raise ShapeError(f"tensor dims must be >= 1, got shape {arr.shape}")
        self.data = arr
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A copy that is a fresh leaf: no backward step reaches past it."""
        return Tensor(self.data.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    # Convenience arithmetic; strict same-shape for tensor-tensor forms.
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __truediv__(self, other) -> "Tensor":
        return scale(self, 1.0 / float(other))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


# ---------------------------------------------------------------------------
# Tape


_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of executed primitives for one reverse pass.

    Execution order is a topological order of the graph, so replaying the
    steps reversed guarantees every node has received the gradient from all
    of its consumers before propagating to its inputs. Gradients accumulate
    additively across multiple uses of the same tensor.
    """

    def __init__(self) -> None:
        self._steps: list[Callable[[], None]] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tapes must unwind in LIFO order"
        return False

    def __len__(self) -> int:
        return len(self._steps)

    def backward(self, loss: Tensor) -> None:
        """Seed d(loss)/d(loss)=1 and replay recorded steps in reverse."""
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        loss.grad = np.ones_like(loss.data)
        for step in reversed(self._steps):
            step()


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    t.grad = g if t.grad is None else t.grad + g


def _record(out: Tensor, *vjps: tuple[Tensor, Callable[[np.ndarray], np.ndarray]]) -> None:
    tape = _active_tape()
    if tape is None:
        return

    def step() -> None:
        g = out.grad
        if g is None:
            return
        for src, fn in vjps:
            _accumulate(src, fn(g))

    tape._steps.append(step)


def _finish(data: np.ndarray, op: str) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op} produced non-finite values")
    return Tensor(data)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeError(msg)


# ---------------------------------------------------------------------------
# Linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Standard matrix product of two rank-2 tensors."""
    _require(a.data.ndim == 2 and b.data.ndim == 2,
             f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    _require(a.shape[1] == b.shape[0],
             f"matmul inner dims differ: {a.shape} vs {b.shape}")
    out = _finish(a.data @ b.data, "matmul")
    _record(out, (a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g))
    return out


def transpose(a: Tensor) -> Tensor:
    _require(a.data.ndim == 2, f"transpose needs rank 2, got {a.shape}")
    out = _finish(a.data.T.copy(), "transpose")
    _record(out, (a, lambda g: g.T.copy()))
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max-subtraction; each output row sums to 1."""
    _require(a.data.ndim == 2, f"softmax_rows needs rank 2, got {a.shape}")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = _finish(s, "softmax_rows")
    _record(out, (a, lambda g: s * (g - (g * s).sum(axis=1, keepdims=True))))
    return out


def l2_normalize_rows(a: Tensor, eps: float = 1e-12) -> Tensor:
    """Scale each row to unit L2 norm; rows with norm < eps become all zeros."""
    _require(a.data.ndim == 2, f"l2_normalize_rows needs rank 2, got {a.shape}")
    if eps <= 0:
        raise ValueError("eps must be > 0")
    norms = np.sqrt((a.data * a.data).sum(axis=1, keepdims=True))
    live = norms >= eps
    safe = np.where(live, norms, 1.0)
    normed = np.where(live, a.data / safe, 0.0)
    out = _finish(normed, "l2_normalize_rows")

    def back(g: np.ndarray) -> np.ndarray:
        dot = (a.data * g).sum(axis=1, keepdims=True)
        grad = g / safe - a.data * (dot / safe**3)
        return np.where(live, grad, 0.0)

    _record(out, (a, back))
    return out


# ---------------------------------------------------------------------------
# Convolutions


def _conv_out_size(h: int, w: int, k: int, stride: int, padding: int) -> tuple[int, int]:
    ho = (h + 2 * padding - k) // stride + 1
    wo = (w + 2 * padding - k) // stride + 1
    _require(ho >= 1 and wo >= 1,
             f"convolution output is empty for input {h}x{w}, k={k}, "
             f"stride={stride}, padding={padding}")
    return ho, wo


def _pad_hw(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def _im2col(xp: np.ndarray, k: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # Returns (C, k, k, ho, wo); each (ki,kj) plane is a strided view copy.
    c = xp.shape[0]
    cols = np.empty((c, k, k, ho, wo))
    for ki in range(k):
        for kj in range(k):
            cols[:, ki, kj] = xp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride]
    return cols


def _col2im(dcols: np.ndarray, shape: tuple[int, int, int], k: int, stride: int,
            padding: int, ho: int, wo: int) -> np.ndarray:
    c, h, w = shape
    dxp = np.zeros((c, h + 2 * padding, w + 2 * padding))
    # Each (ki,kj) offset writes to disjoint strided positions, so += is safe.
    for ki in range(k):
        for kj in range(k):
            dxp[:, ki:ki + stride * ho:stride, kj:kj + stride * wo:stride] += dcols[:, ki, kj]
    if padding == 0:
        return dxp
    return dxp[:, padding:-padding, padding:-padding]


def conv2d(x: Tensor, w: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """2D cross-correlation (no kernel flip) with zero padding and per-channel bias.

    x is C_in x H x W, w is C_out x C_in x k x k, bias is C_out.
    """
    _require(x.data.ndim == 3, f"conv2d input must be CxHxW, got {x.shape}")
    _require(w.data.ndim == 4 and w.shape[2] == w.shape[3],
             f"conv2d kernel must be CoxCixkxk, got {w.shape}")
    _require(w.shape[1] == x.shape[0],
             f"conv2d channel mismatch: input {x.shape} vs kernel {w.shape}")
    _require(bias.data.ndim == 1 and bias.shape[0] == w.shape[0],
             f"conv2d bias must have {w.shape[0]} entries, got {bias.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"bad stride/padding: {stride}, {padding}")

    cout, cin, k, _ = w.shape
    _, h, wd = x.shape
    ho, wo = _conv_out_size(h, wd, k, stride, padding)
    cols = _im2col(_pad_hw(x.data, padding), k, stride, ho, wo).reshape(cin * k * k, ho * wo)
    w_mat = w.data.reshape(cout, cin * k * k)
    out_mat = w_mat @ cols + bias.data[:, None]
    out = _finish(out_mat.reshape(cout, ho, wo), "conv2d")

    def back_x(g: np.ndarray) -> np.ndarray:
        g_mat = g.reshape(cout, ho * wo)
        dcols = (w_mat.T @ g_mat).reshape(cin, k, k, ho, wo)
        return _col2im(dcols, x.shape, k, stride, padding, ho, wo)

    def back_w(g: np.ndarray) -> np.ndarray:
        return (g.reshape(cout, ho * wo) @ cols.T).reshape(w.shape)

    _record(out, (x, back_x), (w, back_w),
            (bias, lambda g: g.reshape(cout, ho * wo).sum(axis=1)))
    return out


def depthwise_conv2d(x: Tensor, w: Tensor, bias: Tensor, stride: int = 1,
                     padding: int = 0) -> Tensor:
    """Per-channel convolution: output channel c depends only on input channel c.

    x is C x H x W, w is C x k x k, bias is C.
    """
    _require(x.data.ndim == 3, f"depthwise input must be CxHxW, got {x.shape}")
    _require(w.data.ndim == 3 and w.shape[1] == w.shape[2],
             f"depthwise kernel must be Cxkxk, got {w.shape}")
    _require(w.shape[0] == x.shape[0],
             f"depthwise channel mismatch: input {x.shape} vs kernel {w.shape}")
    _require(bias.data.ndim == 1 and bias.shape[0] == x.shape[0],
             f"depthwise bias must have {x.shape[0]} entries, got {bias.shape}")
    if stride < 1 or padding < 0:
        raise ValueError(f"bad stride/padding: {stride}, {padding}")

    c, h, wd = x.shape
    k = w.shape[1]
    ho, wo = _conv_out_size(h, wd, k, stride, padding)
    cols = _im2col(_pad_hw(x.data, padding), k, stride, ho, wo).reshape(c, k * k, ho * wo)
    w_flat = w.data.reshape(c, k * k)
    out_mat = np.einsum("ckp,ck->cp", cols, w_flat) + bias.data[:, None]
    out = _finish(out_mat.reshape(c, ho, wo), "depthwise_conv2d")

    def back_x(g: np.ndarray) -> np.ndarray:
        g_mat = g.reshape(c, ho * wo)
        dcols = np.einsum("cp,ck->ckp", g_mat, w_flat).reshape(c, k, k, ho, wo)
        return _col2im(dcols, x.shape, k, stride, padding, ho, wo)

    def back_w(g: np.ndarray) -> np.ndarray:
        return np.einsum("ckp,cp->ck", cols, g.reshape(c, ho * wo)).reshape(w.shape)

    _record(out, (x, back_x), (w, back_w),
            (bias, lambda g: g.reshape(c, ho * wo).sum(axis=1)))
    return out


def nearest_upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling: out[c,i,j] = x[c, i//2, j//2]."""
    _require(x.data.ndim == 3, f"nearest_upsample2x needs CxHxW, got {x.shape}")
    c, h, w = x.shape
    out = _finish(np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2), "nearest_upsample2x")
    _record(out, (x, lambda g: g.reshape(c, h, 2, w, 2).sum(axis=(2, 4))))
    return out


# ---------------------------------------------------------------------------
# Pointwise nonlinearities


def _gauss_cdf(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x * _INV_SQRT2))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: x * Phi(x) with the Gaussian CDF in erf form."""
    phi = _gauss_cdf(x.data)
    out = _finish(x.data * phi, "gelu")
    _record(out, (x, lambda g: g * (phi + x.data * np.exp(-0.5 * x.data**2) * _INV_SQRT2PI)))
    return out


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    out = _finish(t, "tanh")
    _record(out, (x, lambda g: g * (1.0 - t * t)))
    return out


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))),
                 np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = _finish(s, "sigmoid")
    _record(out, (x, lambda g: g * s * (1.0 - s)))
    return out


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(x.data >= 0, 1.0, slope)
    out = _finish(x.data * factor, "leaky_relu")
    _record(out, (x, lambda g: g * factor))
    return out


def log_clamped(x: Tensor, floor: float = 1e-12) -> Tensor:
    """log(max(x, floor)); gradient is zero on the clamped region."""
    if floor <= 0:
        raise ValueError("floor must be > 0")
    live = x.data > floor
    out = _finish(np.log(np.maximum(x.data, floor)), "log_clamped")
    _record(out, (x, lambda g: np.where(live, g / np.maximum(x.data, floor), 0.0)))
    return out


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    out = _finish(np.abs(x.data), "absolute")
    _record(out, (x, lambda g: g * sign))
    return out


# ---------------------------------------------------------------------------
# Elementwise / structural


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    _require(a.shape == b.shape, f"{op} shape mismatch: {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    out = _finish(a.data + b.data, "add")
    _record(out, (a, lambda g: g), (b, lambda g: g))
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    out = _finish(a.data - b.data, "sub")
    _record(out, (a, lambda g: g), (b, lambda g: -g))
    return out


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "hadamard")
    out = _finish(a.data * b.data, "hadamard")
    _record(out, (a, lambda g: g * b.data), (b, lambda g: g * a.data))
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    if not math.isfinite(s):
        raise NonFiniteError(f"scale factor is not finite: {s}")
    out = _finish(a.data * s, "scale")
    _record(out, (a, lambda g: g * s))
    return out


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack two CxHxW maps along the channel axis."""
    _require(a.data.ndim == 3 and b.data.ndim == 3,
             f"concat_channels needs CxHxW inputs, got {a.shape} and {b.shape}")
    _require(a.shape[1:] == b.shape[1:],
             f"concat_channels spatial mismatch: {a.shape} vs {b.shape}")
    c1 = a.shape[0]
    out = _finish(np.concatenate([a.data, b.data], axis=0), "concat_channels")
    _record(out, (a, lambda g: g[:c1]), (b, lambda g: g[c1:]))
    return out


def slice_cols(a: Tensor, j0: int, j1: int) -> Tensor:
    """Columns [j0, j1) of a rank-2 tensor."""
    _require(a.data.ndim == 2, f"slice_cols needs rank 2, got {a.shape}")
    _require(0 <= j0 < j1 <= a.shape[1], f"bad column range [{j0},{j1}) for {a.shape}")
    out = _finish(a.data[:, j0:j1].copy(), "slice_cols")

    def back(g: np.ndarray) -> np.ndarray:
        full = np.zeros(a.shape)
        full[:, j0:j1] = g
        return full

    _record(out, (a, back))
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate rank-2 tensors along columns."""
    _require(len(parts) >= 1, "concat_cols needs at least one part")
    n = parts[0].shape[0]
    for p in parts:
        _require(p.data.ndim == 2 and p.shape[0] == n,
                 f"concat_cols row mismatch: {[q.shape for q in parts]}")
    out = _finish(np.concatenate([p.data for p in parts], axis=1), "concat_cols")
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])
    vjps = [(p, (lambda lo, hi: lambda g: g[:, lo:hi].copy())(offsets[i], offsets[i + 1]))
            for i, p in enumerate(parts)]
    _record(out, *vjps)
    return out


def sum_all(a: Tensor) -> Tensor:
    out = _finish(np.asarray(a.data.sum()), "sum_all")
    _record(out, (a, lambda g: np.full(a.shape, float(g))))
    return out


def mean_all(a: Tensor) -> Tensor:
    n = a.size
    out = _finish(np.asarray(a.data.mean()), "mean_all")
    _record(out, (a, lambda g: np.full(a.shape, float(g) / n)))
    return out


def sum_over_rows(a: Tensor) -> Tensor:
    """Column totals of an NxC tensor as a 1xC tensor."""
    _require(a.data.ndim == 2, f"sum_over_rows needs rank 2, got {a.shape}")
    out = _finish(a.data.sum(axis=0, keepdims=True), "sum_over_rows")
    _record(out, (a, lambda g: np.broadcast_to(g, a.shape).copy()))
    return out


def div_rows(a: Tensor, d: Tensor) -> Tensor:
    """Divide row i of NxC tensor a by scalar d[i] (d is Nx1)."""
    _require(a.data.ndim == 2, f"div_rows needs rank-2 numerator, got {a.shape}")
    _require(d.shape == (a.shape[0], 1),
             f"div_rows denominator must be {(a.shape[0], 1)}, got {d.shape}")
    out = _finish(a.data / d.data, "div_rows")
    _record(out, (a, lambda g: g / d.data),
            (d, lambda g: -(g * a.data).sum(axis=1, keepdims=True) / d.data**2))
    return out


def guard_denominator(d: Tensor, eps: float) -> Tensor:
    """Clamp entries with |d| < eps to sign(d)*eps, with sign(0) = +1.

    Gradient passes through unclamped entries and is zero on clamped ones.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    live = np.abs(d.data) >= eps
    signs = np.where(d.data >= 0, 1.0, -1.0)
    out = _finish(np.where(live, d.data, signs * eps), "guard_denominator")
    _record(out, (d, lambda g: np.where(live, g, 0.0)))
    return out


def chw_to_nc(x: Tensor) -> Tensor:
    """Reshape a CxHxW feature map to the (H*W)xC token matrix, row-major over pixels."""
    _require(x.data.ndim == 3, f"chw_to_nc needs CxHxW, got {x.shape}")
    c, h, w = x.shape
    out = _finish(x.data.reshape(c, h * w).T.copy(), "chw_to_nc")
    _record(out, (x, lambda g: g.T.reshape(c, h, w).copy()))
    return out


def nc_to_chw(a: Tensor, h: int, w: int) -> Tensor:
    """Inverse of chw_to_nc for the given spatial dims."""
    _require(a.data.ndim == 2, f"nc_to_chw needs rank 2, got {a.shape}")
    _require(a.shape[0] == h * w, f"nc_to_chw: {a.shape[0]} rows != {h}*{w}")
    c = a.shape[1]
    out = _finish(a.data.T.reshape(c, h, w).copy(), "nc_to_chw")
    _record(out, (a, lambda g: g.reshape(c, h * w).T.copy()))
    return out


def layer_norm_sites(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize across channels at each spatial site, then apply a per-channel affine."""
    _require(x.data.ndim == 3, f"layer_norm_sites needs CxHxW, got {x.shape}")
    c = x.shape[0]
    _require(gamma.shape == (c,) and beta.shape == (c,),
             f"affine params must have shape ({c},), got {gamma.shape}, {beta.shape}")
    mu = x.data.mean(axis=0)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=0) + eps)
    xhat = xc * inv
    out = _finish(xhat * gamma.data[:, None, None] + beta.data[:, None, None],
                  "layer_norm_sites")

    def back_x(g: np.ndarray) -> np.ndarray:
        gx = g * gamma.data[:, None, None]
        return inv * (gx - gx.mean(axis=0) - xhat * (gx * xhat).mean(axis=0))

    _record(out, (x, back_x),
            (gamma, lambda g: (g * xhat).sum(axis=(1, 2))),
            (beta, lambda g: g.sum(axis=(1, 2))))
    return out
