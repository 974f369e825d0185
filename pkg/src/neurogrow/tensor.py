"""Dense float64 array helpers.

Every array in the package is a C-contiguous ``numpy.ndarray`` of dtype
float64 (row-major, so checkpoints and flattened views are portable).
"""

import numpy as np

from .errors import ConfigError, DimensionError

DTYPE = np.float64


def as_tensor(x):
    """Return ``x`` as a contiguous float64 array with all extents >= 1."""
    arr = np.ascontiguousarray(x, dtype=DTYPE)
    if arr.ndim == 0 or any(d < 1 for d in arr.shape):
        raise DimensionError(f"tensor extents must all be >= 1, got shape {arr.shape}")
    return arr


def matmul(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return a @ b


def row_l2_normalize(w):
    """Scale every row of ``w`` to unit L2 norm.

    Returns ``(normalized, zero_rows)`` where ``zero_rows`` is a boolean mask of
    rows whose norm was exactly zero. Those rows come back as zeros instead of NaN.
    """
    w = np.asarray(w, dtype=DTYPE)
    if w.ndim != 2:
        raise DimensionError(f"row_l2_normalize expects a rank-2 array, got {w.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", w, w))
    zero_rows = norms == 0.0
    safe = np.where(zero_rows, 1.0, norms)
    out = w / safe[:, None]
    out[zero_rows] = 0.0
    return out, zero_rows


def conv_output_size(size, k, stride, pad):
    span = size + 2 * pad - k
    if span < 0 or span % stride != 0:
        raise ConfigError(
            f"kernel {k}, stride {stride}, pad {pad} do not tile an input extent of {size}"
        )
    return span // stride + 1


def im2col(x, kh, kw, stride=1, pad=0):
    """Unfold ``x`` of shape (N, C, H, W) into receptive-field rows.

    Output shape is (N*H'*W', C*kh*kw); rows are ordered (n, h', w') and
    columns (c, i, j), so a filter bank reshaped to (C_out, C*kh*kw) multiplies
    it directly.
    """
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 4:
        raise DimensionError(f"im2col expects (N, C, H, W), got {x.shape}")
    n, c, h, w = x.shape
    out_h = conv_output_size(h, kh, stride, pad)
    out_w = conv_output_size(w, kw, stride, pad)
    img = np.pad(x, [(0, 0), (0, 0), (pad, pad), (pad, pad)]) if pad else x
    col = np.empty((n, c, kh, kw, out_h, out_w), dtype=DTYPE)
    for i in range(kh):
        i_max = i + stride * out_h
        for j in range(kw):
            j_max = j + stride * out_w
            col[:, :, i, j, :, :] = img[:, :, i:i_max:stride, j:j_max:stride]
    return np.ascontiguousarray(col.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_h * out_w, -1))


def col2im(cols, x_shape, kh, kw, stride=1, pad=0):
    """Adjoint of :func:`im2col`: scatter-add rows back into an (N, C, H, W) array."""
    n, c, h, w = x_shape
    out_h = conv_output_size(h, kh, stride, pad)
    out_w = conv_output_size(w, kw, stride, pad)
    col = cols.reshape(n, out_h, out_w, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    img = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=DTYPE)
    for i in range(kh):
        i_max = i + stride * out_h
        for j in range(kw):
            j_max = j + stride * out_w
            img[:, :, i:i_max:stride, j:j_max:stride] += col[:, :, i, j, :, :]
    if pad:
        img = img[:, :, pad:pad + h, pad:pad + w]
    return np.ascontiguousarray(img)
