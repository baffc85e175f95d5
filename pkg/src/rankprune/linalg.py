"""Dense real-matrix routines behind the rank pruning scheme.

Provides a deterministic thin SVD, energy-thresholded truncation, the
nuclear norm ``sum_i sigma_i`` and its sub-gradient ``U_r @ V_r.T``, and
two singular-value perturbation-bound checkers used by property tests and
the training-time rank monitor.

All functions are pure: they validate their inputs, never mutate them, and
are safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_matrix
from .exceptions import ConfigError, NumericalError

# sigma_i counts toward the numerical rank when sigma_i > RANK_RTOL * sigma_1
RANK_RTOL = 1e-10

# slack added to the perturbation-bound comparisons to absorb float round-off
_BOUND_SLACK = 1e-10


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``a = u @ diag(sigma) @ v.T``.

    ``u`` is (rows, r), ``sigma`` is a non-increasing vector of length
    r = min(rows, cols), and ``v`` is (cols, r); the columns of ``u`` and
    ``v`` are orthonormal.  The sign convention is fixed so that the first
    nonzero entry of each ``u`` column is non-negative.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma) @ self.v.T

    def truncate(self, k: int) -> "SvdFactors":
        """First-``k`` factors; ``k`` may not exceed the stored rank."""
        if not 0 <= k <= self.sigma.shape[0]:
            raise ValueError(f"cannot truncate to k={k} of {self.sigma.shape[0]} values")
        return SvdFactors(
            u=self.u[:, :k].copy(),
            sigma=self.sigma[:k].copy(),
            v=self.v[:, :k].copy(),
        )


@dataclass(frozen=True)
class TsvdResult:
    """Energy-thresholded truncation of an SVD.

    ``k`` is the smallest rank whose discarded squared-singular-value energy
    stays within the requested fraction of the total (floored at 1 so a
    pruned weight never collapses to zero).
    """

    k: int
    factors: SvdFactors
    retained_energy: float
    discarded_energy: float

    def reconstruct(self) -> np.ndarray:
        return self.factors.reconstruct()


@dataclass(frozen=True)
class BoundReport:
    """Outcome of a singular-value perturbation-bound check."""

    lhs: float
    rhs: float
    holds: bool


def _raw_svd(a: np.ndarray, compute_uv: bool):
    try:
        return np.linalg.svd(a, full_matrices=False, compute_uv=compute_uv)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD failed to converge for shape {a.shape}: {exc}") from exc


def svd(a) -> SvdFactors:
    """Thin SVD with a deterministic sign convention.

    The first nonzero component of every left singular vector is forced
    non-negative (the matching right vector is flipped with it), so equal
    input bytes always produce equal factor bytes.
    """
    a = check_matrix(a, "a")
    u, sigma, vh = _raw_svd(a, compute_uv=True)
    u = np.ascontiguousarray(u)
    v = np.ascontiguousarray(vh.T)
    for j in range(u.shape[1]):
        nz = np.flatnonzero(u[:, j])
        if nz.size and u[nz[0], j] < 0.0:
            u[:, j] *= -1.0
            v[:, j] *= -1.0
    return SvdFactors(u=u, sigma=sigma, v=v)


def singular_values(a) -> np.ndarray:
    """Singular values of ``a`` in non-increasing order."""
    a = check_matrix(a, "a")
    return _raw_svd(a, compute_uv=False)


def tsvd(a, e: float) -> TsvdResult:
    """Truncate the SVD of ``a`` to the smallest rank ``k`` such that the
    discarded squared singular values sum to at most ``e`` times the total.

    ``e`` must lie strictly inside (0, 1).  ``k`` is floored at 1: even at
    large ``e`` the result keeps one component so a projected weight never
    becomes identically zero.
    """
    if not 0.0 < e < 1.0:
        raise ConfigError(f"energy ratio e must be in (0, 1), got {e}")
    factors = svd(a)
    s2 = factors.sigma ** 2
    r = s2.shape[0]
    # tail[k] = sum of s2[k:], tail[r] = 0
    tail = np.zeros(r + 1)
    tail[:r] = np.cumsum(s2[::-1])[::-1]
    total = tail[0]
    k = 0
    while k <= r and not tail[k] <= e * total:
        k += 1
    k = max(k, 1)
    if total > 0.0:
        retained = float((total - tail[k]) / total)
        discarded = float(tail[k] / total)
    else:
        retained, discarded = 1.0, 0.0
    return TsvdResult(
        k=k,
        factors=factors.truncate(k),
        retained_energy=retained,
        discarded_energy=discarded,
    )


def nuclear_norm(a) -> float:
    """Sum of the singular values of ``a``."""
    return float(np.sum(singular_values(a)))


def nuclear_subgradient(a) -> np.ndarray:
    """Sub-gradient ``U_r @ V_r.T`` of the nuclear norm at ``a``.

    ``U_r`` and ``V_r`` are the singular-vector blocks for the numerical
    rank ``r`` of ``a`` (values above ``RANK_RTOL * sigma_1``).  All
    singular values of the result equal 1 on that retained subspace.
    """
    factors = svd(a)
    r = _numerical_rank_of(factors.sigma)
    return factors.u[:, :r] @ factors.v[:, :r].T


def frobenius_norm(a) -> float:
    """Square root of the sum of squared entries."""
    a = check_matrix(a, "a")
    return float(np.linalg.norm(a))


def numerical_rank(a, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol`` times the largest."""
    return _numerical_rank_of(singular_values(a), rtol)


def _numerical_rank_of(sigma: np.ndarray, rtol: float = RANK_RTOL) -> int:
    if sigma.size == 0 or sigma[0] <= 0.0:
        return 0
    return int(np.count_nonzero(sigma > rtol * sigma[0]))


def check_mirsky(a, e_noise) -> BoundReport:
    """Check that singular values move by at most the Frobenius norm of an
    additive perturbation: ``sqrt(sum_i |sigma'_i - sigma_i|^2) <= ||E||_F``.
    """
    a = check_matrix(a, "a")
    e_noise = check_matrix(e_noise, "e_noise")
    if a.shape != e_noise.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {e_noise.shape}")
    sigma = _raw_svd(a, compute_uv=False)
    sigma_pert = _raw_svd(a + e_noise, compute_uv=False)
    lhs = float(np.linalg.norm(sigma_pert - sigma))
    rhs = float(np.linalg.norm(e_noise))
    return BoundReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs + _BOUND_SLACK)


def check_low_rank_residual(a, b_rank_k, k: int) -> BoundReport:
    """Check the residual floor against any rank-``k`` matrix: the distance
    ``||B - A||_F`` is at least the energy of the trailing singular values
    ``sqrt(sum_{j>k} sigma_j(A)^2)``.

    ``b_rank_k`` must have numerical rank at most ``k``; violating that
    precondition raises ``ValueError``.
    """
    a = check_matrix(a, "a")
    b = check_matrix(b_rank_k, "b_rank_k")
    if a.shape != b.shape:
        raise ConfigError(f"shape mismatch: {a.shape} vs {b.shape}")
    if k < 0:
        raise ConfigError(f"k must be non-negative, got {k}")
    if numerical_rank(b) > k:
        raise ValueError(f"b_rank_k has numerical rank {numerical_rank(b)} > k={k}")
    sigma = _raw_svd(a, compute_uv=False)
    tail = sigma[k:] if k < sigma.shape[0] else sigma[:0]
    lhs = float(np.linalg.norm(b - a))
    rhs = float(np.linalg.norm(tail))
    return BoundReport(lhs=lhs, rhs=rhs, holds=lhs >= rhs - _BOUND_SLACK)
