"""Filter-bank matricization, low-rank projection, and cascade export.

A convolution filter bank is a 4D array ``w`` of shape (n, c, kh, kw):
n output channels, c input channels, kernel height and width.  Two
matricization schemes are supported:

* ``"channel"``: rows are flattened filters, shape (n, c*kh*kw).  The
  exported cascade is a (kh, kw) convolution with k filters followed by a
  1x1 convolution mapping k channels to n.
* ``"spatial"``: shape (c*kh, n*kw) with entry (ci*kh + y, ni*kw + x) =
  w[ni, ci, y, x].  The exported cascade is a vertical (kh, 1) convolution
  followed by a horizontal (1, kw) convolution.

Both reshapes are bijective and norm-preserving, so a rank-k truncation of
the matrix view is exactly a rank-k projection of the layer's linear map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_weight_tensor
from .exceptions import ConfigError
from .linalg import TsvdResult, tsvd

SCHEMES = ("channel", "spatial")


def check_scheme(scheme: str) -> str:
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown scheme {scheme!r}, expected one of {SCHEMES}")
    return scheme


@dataclass(frozen=True)
class DecomposedPair:
    """Two filter banks whose cascade replaces one convolution layer.

    ``channel``: first (k, c, kh, kw), second (n, k, 1, 1).
    ``spatial``: first (k, c, kh, 1), second (n, k, 1, kw).
    The singular-value scale lives entirely in ``second``.
    """

    scheme: str
    first: np.ndarray
    second: np.ndarray
    rank: int


@dataclass(frozen=True)
class FlopsReport:
    """Multiply-accumulate counts for one layer before and after export."""

    original: int
    decomposed: int
    speedup: float


def to_matrix(w, scheme: str) -> np.ndarray:
    """Matrix view of a filter bank under the given scheme."""
    w = check_weight_tensor(w, "w")
    check_scheme(scheme)
    n, c, kh, kw = w.shape
    if scheme == "channel":
        return w.reshape(n, c * kh * kw).copy()
    # spatial: (ci*kh + y, ni*kw + x) <- w[ni, ci, y, x]
    return np.ascontiguousarray(w.transpose(1, 2, 0, 3).reshape(c * kh, n * kw))


def from_matrix(m, scheme: str, dims: tuple[int, int, int, int]) -> np.ndarray:
    """Inverse of :func:`to_matrix`; bit-identical round trip."""
    m = np.asarray(m, dtype=np.float64)
    check_scheme(scheme)
    n, c, kh, kw = dims
    if min(dims) < 1:
        raise ConfigError(f"all dims must be >= 1, got {dims}")
    expected = (n, c * kh * kw) if scheme == "channel" else (c * kh, n * kw)
    if m.shape != expected:
        raise ConfigError(f"matrix shape {m.shape} does not match dims {dims} under {scheme!r}")
    if scheme == "channel":
        return m.reshape(n, c, kh, kw).copy()
    return np.ascontiguousarray(m.reshape(c, kh, n, kw).transpose(2, 0, 1, 3))


def project_tsvd(w, scheme: str, e: float) -> tuple[np.ndarray, TsvdResult]:
    """Rank-prune a filter bank, returning the result and the truncation.

    When the energy threshold keeps every singular value the input is
    returned as an exact copy, so a projection that discards nothing is a
    bit-identical no-op (plain SGD is recovered as the period grows).
    """
    w = check_weight_tensor(w, "w")
    m = to_matrix(w, scheme)
    result = tsvd(m, e)
    if result.k == min(m.shape):
        return w.copy(), result
    return from_matrix(result.reconstruct(), scheme, w.shape), result


def low_rank_project(w, scheme: str, e: float) -> tuple[np.ndarray, int]:
    """Energy-thresholded low-rank projection of a filter bank.

    Returns the projected tensor (same shape, matrix view of numerical
    rank exactly k) and the selected rank k.
    """
    projected, result = project_tsvd(w, scheme, e)
    return projected, result.k

def decompose_export(w, scheme: str, e: float) -> DecomposedPair:
    """Split a filter bank into the two-layer cascade of its rank-k form.

    ``channel``: M (n, c*kh*kw) = U S V^T; first = rows of V^T as (k, c,
    kh, kw) filters, second = U*S as (n, k, 1, 1).  ``spatial``: M (c*kh,
    n*kw) = U S V^T; first = columns of U as (k, c, kh, 1) vertical
    filters, second = V*S rearranged to (n, k, 1, kw) horizontal filters.
    Composing second after first convolves with exactly the rank-k
    projection of ``w``.
    """
    w = check_weight_tensor(w, "w")
    check_scheme(scheme)
    n, c, kh, kw = w.shape
    result = tsvd(to_matrix(w, scheme), e)
    f = result.factors
    k = result.k
    if scheme == "channel":
        first = np.ascontiguousarray(f.v.T.reshape(k, c, kh, kw))
        second = np.ascontiguousarray((f.u * f.sigma).reshape(n, k, 1, 1))
    else:
        first = np.ascontiguousarray(f.u.T.reshape(k, c, kh, 1))
        # (n*kw, k) -> (n, kw, k) -> (n, k, kw) -> (n, k, 1, kw)
        second = np.ascontiguousarray(
            (f.v * f.sigma).reshape(n, kw, k).transpose(0, 2, 1)[:, :, np.newaxis, :]
        )
    return DecomposedPair(scheme=scheme, first=first, second=second, rank=k)


def flops_report(
    dims: tuple[int, int, int, int],
    spatial: tuple[int, int],
    scheme: str,
    k: int,
) -> FlopsReport:
    """Multiply-accumulate counts at output size (H, W), stride 1.

    original = n*c*kh*kw*H*W.  decomposed: channel = k*c*kh*kw*H*W +
    n*k*H*W, spatial = k*c*kh*H*W + n*k*kw*H*W.  Both cascade terms grow
    strictly with k, so speedup = original/decomposed falls strictly in k.
    """
    check_scheme(scheme)
    n, c, kh, kw = dims
    h_out, w_out = spatial
    if min(n, c, kh, kw, h_out, w_out, k) < 1:
        raise ConfigError(f"all counts must be >= 1, got dims={dims} spatial={spatial} k={k}")
    hw = h_out * w_out
    original = n * c * kh * kw * hw
    if scheme == "channel":
        decomposed = k * c * kh * kw * hw + n * k * hw
    else:
        decomposed = k * c * kh * hw + n * k * kw * hw
    return FlopsReport(
        original=original,
        decomposed=decomposed,
        speedup=original / decomposed,
    )
