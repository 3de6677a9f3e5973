"""Pure tensor primitives: convolution, pooling, activations, standardization.

Conventions used throughout the package:

* 2-D tensors are ``(height, width)`` numpy arrays, row-major.
* 3-D tensors are channel-last ``(height, width, channels)``, row-major.
* All arithmetic is float64 regardless of on-disk storage precision.
* Padding is symmetric zero padding of ``P`` rows/columns on all four sides.
* Geometries must be exact: ``(H + 2P - K)`` has to be divisible by the
  stride, otherwise :class:`GeometryError` is raised.  Runtimes that need
  the conventional floor semantics (stride-2 layers of real backbones)
  crop via :func:`conv_output_size_floor` before calling these primitives.

All functions are pure and safe to call concurrently.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InvalidArgumentError

# Below this, a feature's spread is treated as zero and its z-scores map to 0.
STDEV_EPSILON = 1e-12


def convolve1d(x, w) -> np.ndarray:
    """Full discrete 1-D convolution ``s[t] = sum_a x[a] * w[t - a]``.

    Output length is ``len(x) + len(w) - 1``.
    """
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 1 or w.ndim != 1:
        raise InvalidArgumentError("convolve1d expects 1-D sequences")
    if x.size == 0 or w.size == 0:
        raise InvalidArgumentError("convolve1d: empty input")
    out = np.zeros(x.size + w.size - 1)
    for a in range(x.size):
        out[a:a + w.size] += x[a] * w
    return out


def flip180(kernel) -> np.ndarray:
    """Rotate a 2-D kernel by 180 degrees (reverse both axes)."""
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise InvalidArgumentError("flip180 expects a 2-D kernel")
    return kernel[::-1, ::-1]


def conv_output_size(size: int, padding: int, kernel: int, stride: int) -> int:
    """Exact output size ``(H + 2P - K) / S + 1``.

    Raises :class:`GeometryError` when the span is negative or not divisible
    by the stride.
    """
    if size < 1 or kernel < 1:
        raise InvalidArgumentError("size and kernel must be >= 1")
    if stride < 1 or padding < 0:
        raise InvalidArgumentError("stride must be >= 1 and padding >= 0")
    span = size + 2 * padding - kernel
    if span < 0:
        raise GeometryError(
            f"kernel {kernel} exceeds padded extent {size + 2 * padding}")
    if span % stride != 0:
        raise GeometryError(
            f"({size} + 2*{padding} - {kernel}) not divisible by stride {stride}")
    return span // stride + 1


def conv_output_size_floor(size: int, padding: int, kernel: int, stride: int) -> int:
    """Floor-division output size used by backbone layer geometry.

    Same formula as :func:`conv_output_size` but trailing rows/columns that
    do not fit a full stride step are dropped instead of rejected.
    """
    if size < 1 or kernel < 1:
        raise InvalidArgumentError("size and kernel must be >= 1")
    if stride < 1 or padding < 0:
        raise InvalidArgumentError("stride must be >= 1 and padding >= 0")
    span = size + 2 * padding - kernel
    if span < 0:
        raise GeometryError(
            f"kernel {kernel} exceeds padded extent {size + 2 * padding}")
    return span // stride + 1


def _pad2d(a: np.ndarray, padding: int, value: float = 0.0) -> np.ndarray:
    if padding == 0:
        return a
    return np.pad(a, padding, mode="constant", constant_values=value)


def _windows2d(a: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Read-only sliding-window view ``(oh, ow, kh, kw)`` over a 2-D array."""
    oh = (a.shape[0] - kh) // stride + 1
    ow = (a.shape[1] - kw) // stride + 1
    sh, sw = a.strides
    return np.lib.stride_tricks.as_strided(
        a,
        shape=(oh, ow, kh, kw),
        strides=(sh * stride, sw * stride, sh, sw),
        writeable=False,
    )


def cross_correlate2d(input2d, kernel, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D cross-correlation ``s[i,j] = sum_{m,n} input[i*S+m, j*S+n] * k[m,n]``.

    The kernel is applied without inversion; this is what convolutional
    network inference actually computes.
    """
    a = np.asarray(input2d, dtype=np.float64)
    k = np.asarray(kernel, dtype=np.float64)
    if a.ndim != 2 or k.ndim != 2:
        raise InvalidArgumentError("cross_correlate2d expects 2-D arrays")
    if a.size == 0 or k.size == 0:
        raise InvalidArgumentError("cross_correlate2d: empty input")
    padded = _pad2d(a, padding)
    if k.shape[0] > padded.shape[0] or k.shape[1] > padded.shape[1]:
        raise InvalidArgumentError(
            f"kernel {k.shape} larger than padded input {padded.shape}")
    conv_output_size(a.shape[0], padding, k.shape[0], stride)
    conv_output_size(a.shape[1], padding, k.shape[1], stride)
    win = _windows2d(padded, k.shape[0], k.shape[1], stride)
    return np.einsum("ijmn,mn->ij", win, k)


def convolve2d(input2d, kernel, stride: int = 1, padding: int = 0) -> np.ndarray:
    """True 2-D convolution: cross-correlation with the kernel rotated 180°."""
    return cross_correlate2d(input2d, flip180(kernel), stride=stride, padding=padding)


def pool2d(input2d, window: int, stride: int, mode: str, padding: int = 0) -> np.ndarray:
    """Window pooling with ``max`` or ``mean`` reduction.

    Output dims follow the exact geometry formula with the window in place of
    the kernel size.  ``max`` treats padding as missing (-inf) so border
    maxima are never fabricated; ``mean`` pads with zeros and divides by the
    full window area.
    """
    a = np.asarray(input2d, dtype=np.float64)
    if a.ndim != 2:
        raise InvalidArgumentError("pool2d expects a 2-D array")
    if mode not in ("max", "mean"):
        raise InvalidArgumentError(f"unknown pooling mode {mode!r}")
    if window < 1:
        raise InvalidArgumentError("pooling window must be >= 1")
    if padding > window // 2:
        # keeps every window anchored to at least one real element
        raise InvalidArgumentError(
            f"pool padding {padding} exceeds half the window {window}")
    conv_output_size(a.shape[0], padding, window, stride)
    conv_output_size(a.shape[1], padding, window, stride)
    fill = -np.inf if mode == "max" else 0.0
    padded = _pad2d(a, padding, value=fill)
    if window > padded.shape[0] or window > padded.shape[1]:
        raise InvalidArgumentError(
            f"window {window} larger than padded input {padded.shape}")
    win = _windows2d(padded, window, window, stride)
    if mode == "max":
        return win.max(axis=(2, 3))
    return win.mean(axis=(2, 3))


def relu(t) -> np.ndarray:
    """Elementwise ``max(0, x)``; shape preserved."""
    return np.maximum(np.asarray(t, dtype=np.float64), 0.0)


@dataclass(frozen=True)
class Standardizer:
    """Per-feature z-score parameters; degenerate when the spread is ~0."""

    mean: float
    stdev: float
    degenerate: bool


def standardize_fit(samples) -> Standardizer:
    """Fit mean and sample standard deviation (n-1 denominator).

    A spread below ``STDEV_EPSILON`` marks the standardizer degenerate; a
    degenerate standardizer maps every input to exactly 0.
    """
    a = np.asarray(samples, dtype=np.float64)
    if a.ndim != 1 or a.size < 2:
        raise InvalidArgumentError("standardize_fit needs at least 2 samples")
    mean = float(a.mean())
    stdev = float(a.std(ddof=1))
    return Standardizer(mean=mean, stdev=stdev, degenerate=stdev < STDEV_EPSILON)


def standardize_apply(s: Standardizer, x):
    """``z = (x - mean) / stdev``; 0 for degenerate standardizers."""
    x = np.asarray(x, dtype=np.float64)
    if s.degenerate:
        z = np.zeros_like(x)
    else:
        z = (x - s.mean) / s.stdev
    return float(z) if z.ndim == 0 else z


def dense(x, weights, bias) -> np.ndarray:
    """Affine map ``y = W x + b``."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if x.ndim != 1 or w.ndim != 2 or b.ndim != 1:
        raise InvalidArgumentError("dense expects vector, matrix, vector")
    if w.shape[1] != x.size or w.shape[0] != b.size:
        raise InvalidArgumentError(
            f"dense shape mismatch: W{w.shape}, x({x.size},), b({b.size},)")
    return w @ x + b


def softmax(logits) -> np.ndarray:
    """``p_j = exp(f_j) / sum_k exp(f_k)`` with max subtraction for stability."""
    f = np.asarray(logits, dtype=np.float64)
    if f.ndim != 1 or f.size == 0:
        raise InvalidArgumentError("softmax expects a non-empty vector")
    shifted = f - f.max()
    e = np.exp(shifted)
    return e / e.sum()


def cross_entropy_loss(logits, true_class: int) -> float:
    """``L = -f_y + log sum_j exp(f_j)`` (stable log-sum-exp form)."""
    f = np.asarray(logits, dtype=np.float64)
    if f.ndim != 1 or f.size == 0:
        raise InvalidArgumentError("cross_entropy_loss expects a non-empty vector")
    if not 0 <= true_class < f.size:
        raise InvalidArgumentError(f"class index {true_class} out of range")
    m = f.max()
    return float(-f[true_class] + m + np.log(np.exp(f - m).sum()))


def conv2d_multichannel(input3d, weights, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Multi-channel convolution: per-input-channel cross-correlations summed,
    plus a scalar bias per output channel.

    ``input3d`` is ``(H, W, C_in)``; ``weights`` is ``(C_out, C_in, K, K)``;
    ``bias`` is ``(C_out,)``.  Returns ``(OH, OW, C_out)``.
    """
    a = np.asarray(input3d, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    if a.ndim != 3 or w.ndim != 4 or b.ndim != 1:
        raise InvalidArgumentError("conv2d_multichannel: bad ranks")
    c_out, c_in, kh, kw = w.shape
    if a.shape[2] != c_in:
        raise InvalidArgumentError(
            f"input has {a.shape[2]} channels, weights expect {c_in}")
    if b.size != c_out:
        raise InvalidArgumentError("bias length must equal output channels")
    oh = conv_output_size(a.shape[0], padding, kh, stride)
    ow = conv_output_size(a.shape[1], padding, kw, stride)
    if padding:
        a = np.pad(a, ((padding, padding), (padding, padding), (0, 0)))
    # im2col: one window view, one matmul; equivalent to summing the
    # per-channel cross_correlate2d results.
    sh, sw, sc = a.strides
    win = np.lib.stride_tricks.as_strided(
        a,
        shape=(oh, ow, kh, kw, c_in),
        strides=(sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    cols = win.reshape(oh * ow, kh * kw * c_in)
    wmat = w.transpose(2, 3, 1, 0).reshape(kh * kw * c_in, c_out)
    return (cols @ wmat).reshape(oh, ow, c_out) + b
