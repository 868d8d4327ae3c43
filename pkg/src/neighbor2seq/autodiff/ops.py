"""Forward/backward pairs for the sequence heads.

Every ``*_fwd`` returns ``(output, cache)``; the matching ``*_bwd`` takes the
upstream gradient and that cache and returns one gradient per
differentiable input, in argument order.  Sequences are laid out as
``(batch, positions, channels)``.
"""
from __future__ import annotations

import numpy as np


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


# --- position-wise linear ------------------------------------------------

def linear_fwd(x, w):
    """Apply a separate (d_out, d_in) matrix ``w[l]`` at every position ``l``."""
    _check(x.ndim == 3 and w.ndim == 3, "linear: expected x (B,T,d) and w (T,d',d)")
    _check(x.shape[1] == w.shape[0] and x.shape[2] == w.shape[2],
           f"linear: x {x.shape} incompatible with w {w.shape}")
    # (T, B, d) @ (T, d, d') -> (T, B, d')
    y = np.matmul(x.transpose(1, 0, 2), w.transpose(0, 2, 1)).transpose(1, 0, 2)
    return np.ascontiguousarray(y), (x, w)


def linear_bwd(dy, cache):
    x, w = cache
    dyt = dy.transpose(1, 0, 2)                                # (T, B, d')
    dx = np.matmul(dyt, w).transpose(1, 0, 2)                  # (B, T, d)
    dw = np.matmul(dyt.transpose(0, 2, 1), x.transpose(1, 0, 2))  # (T, d', d)
    return np.ascontiguousarray(dx), dw


# --- per-vector normalization with per-position affine ---------------------

def seqnorm_fwd(y, gamma, beta, eps=1e-5):
    """Standardize each (sample, position) vector over its channels, then
    scale and shift with the position's own ``gamma``/``beta``.

    The standard deviation uses divisor ``d'``.  ``eps`` is a floor on the
    variance, so vectors with variance at least ``eps`` are standardized
    exactly and only near-constant ones are divided by ``sqrt(eps)``.
    """
    _check(y.ndim == 3 and gamma.shape == y.shape[1:] and beta.shape == y.shape[1:],
           f"seqnorm: y {y.shape}, gamma {gamma.shape}, beta {beta.shape}")
    xhat, inv, active = _standardize(y, eps)
    return xhat * gamma + beta, (xhat, inv, active, gamma)


def seqnorm_bwd(do, cache):
    xhat, inv, active, gamma = cache
    dgamma = (do * xhat).sum(axis=0)
    dbeta = do.sum(axis=0)
    g = do * gamma
    # floored vectors have a constant denominator, so no variance term
    dy = inv * (g - g.mean(axis=2, keepdims=True)
                - active * xhat * (g * xhat).mean(axis=2, keepdims=True))
    return dy, dgamma, dbeta


def _standardize(y, eps):
    mu = y.mean(axis=-1, keepdims=True)
    yc = y - mu
    var = (yc * yc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(np.maximum(var, eps))
    return yc * inv, inv, var >= eps


def standardize(y, eps=1e-5):
    """Pre-affine part of :func:`seqnorm_fwd`."""
    return _standardize(y, eps)[0]


# --- relu ----------------------------------------------------------------

def relu_fwd(x):
    # np.maximum keeps NaN, so bad inputs still surface as a non-finite loss
    return np.maximum(x, 0.0), x > 0


def relu_bwd(dy, mask):
    return (np.where(mask, dy, 0.0),)


# --- 1-D convolution along the position axis -----------------------------

def _windows(xp, k, length):
    # (B, T+k-1, C) -> (B, T, C, k) view; window t covers xp[t:t+k]
    b, _, c = xp.shape
    s = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp, shape=(b, length, c, k), strides=(s[0], s[1], s[2], s[1]), writeable=False)


def conv1d_fwd(x, kernel, bias):
    """Same-padded cross-correlation over positions.

    ``kernel`` is (C_out, C_in, k) with odd ``k``; zero padding of
    ``(k-1)/2`` on both ends keeps the sequence length.
    """
    _check(x.ndim == 3 and kernel.ndim == 3, "conv1d: expected x (B,T,C) and kernel (O,C,k)")
    c_out, c_in, k = kernel.shape
    _check(k % 2 == 1, f"conv1d: kernel size must be odd, got {k}")
    _check(x.shape[2] == c_in and bias.shape == (c_out,),
           f"conv1d: x {x.shape}, kernel {kernel.shape}, bias {bias.shape}")
    pad = (k - 1) // 2
    length = x.shape[1]
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0)))
    cols = _windows(xp, k, length)
    y = np.tensordot(cols, kernel, axes=([2, 3], [1, 2])) + bias
    return y, (cols, kernel, x.shape)


def conv1d_bwd(dy, cache):
    cols, kernel, xshape = cache
    c_out, c_in, k = kernel.shape
    pad = (k - 1) // 2
    b, length, _ = xshape
    dkernel = np.tensordot(dy, cols, axes=([0, 1], [0, 1]))     # (O, C, k)
    dbias = dy.sum(axis=(0, 1))
    dcols = np.tensordot(dy, kernel, axes=([2], [0]))           # (B, T, C, k)
    dxp = np.zeros((b, length + 2 * pad, c_in))
    for j in range(k):
        dxp[:, j:j + length] += dcols[:, :, :, j]
    return dxp[:, pad:pad + length], dkernel, dbias


# --- pooling -------------------------------------------------------------

def mean_pool_fwd(x):
    return x.mean(axis=1), x.shape


def mean_pool_bwd(dy, shape):
    return (np.broadcast_to(dy[:, None, :] / shape[1], shape).copy(),)


# --- positional encoding and attention ------------------------------------

def positional_encoding(L: int, dim: int) -> np.ndarray:
    """Sinusoidal (L+1, dim) table; channel ``m`` uses frequency index
    ``m // 2``, sine on even channels and cosine on odd ones."""
    if dim < 1:
        raise ValueError("positional encoding needs dim >= 1")
    pos = np.arange(L + 1, dtype=np.float64)[:, None]
    m = np.arange(dim)
    angle = pos / np.power(10000.0, 2 * (m // 2) / dim)
    return np.where(m % 2 == 0, np.sin(angle), np.cos(angle))


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def query_attention_fwd(keys, query):
    """Pool positions with weights ``softmax(keys @ query)``.

    Returns ``(pooled, alpha)`` as the output and the cache.
    """
    _check(keys.ndim == 3 and query.shape == (keys.shape[2],),
           f"attention: keys {keys.shape}, query {query.shape}")
    alpha = softmax(keys @ query, axis=1)                  # (B, T)
    r = np.einsum("bt,btd->bd", alpha, keys)
    return (r, alpha), (keys, query, alpha)


def query_attention_bwd(dr, cache):
    keys, query, alpha = cache
    dalpha = np.einsum("bd,btd->bt", dr, keys)
    ds = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
    dkeys = alpha[:, :, None] * dr[:, None, :] + ds[:, :, None] * query
    dquery = np.einsum("bt,btd->d", ds, keys)
    return dkeys, dquery


# --- affine classifier ---------------------------------------------------

def dense_fwd(x, w, b):
    """``x @ w.T + b`` for x (B, d), w (C, d)."""
    _check(x.ndim == 2 and w.shape[1] == x.shape[1] and b.shape == (w.shape[0],),
           f"dense: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w.T + b, (x, w)


def dense_bwd(dy, cache):
    x, w = cache
    return dy @ w, dy.T @ x, dy.sum(axis=0)


# --- losses --------------------------------------------------------------

def softmax_xent_fwd(logits, targets):
    """Mean cross-entropy for integer class targets."""
    targets = np.asarray(targets, dtype=np.int64)
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(logits.shape[0])
    loss = float(np.mean(logsum - z[rows, targets]))
    return loss, (z, logsum, targets)


def softmax_xent_bwd(dloss, cache):
    z, logsum, targets = cache
    p = np.exp(z - logsum[:, None])
    p[np.arange(z.shape[0]), targets] -= 1.0
    return (dloss * p / z.shape[0],)


def bce_fwd(logits, targets):
    """Mean sigmoid binary cross-entropy over every (sample, class) entry."""
    t = np.asarray(targets, dtype=np.float64)
    # log(1 + exp(-|x|)) + max(x, 0) - x t
    loss = np.logaddexp(0.0, logits) - logits * t
    return float(loss.mean()), (logits, t)


def bce_bwd(dloss, cache):
    logits, t = cache
    sig = 0.5 * (1.0 + np.tanh(0.5 * logits))
    return (dloss * (sig - t) / logits.size,)


# --- dropout -------------------------------------------------------------

def dropout_fwd(x, rate, rng, training=True):
    """Inverted dropout: kept units are scaled by ``1 / (1 - rate)``."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_bwd(dy, mask):
    return (dy if mask is None else dy * mask,)
