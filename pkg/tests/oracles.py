"""Independent oracles the test suite checks the library against.

Everything here is deliberately written the slow, obvious way and avoids
the code paths under test: singular values come from a hand-rolled cyclic
Jacobi eigensolver instead of np.linalg.svd, rank selection from a linear
scan, convolution from six nested loops, and FLOPs from walking the output
positions of each loop nest.
"""

from __future__ import annotations

import numpy as np


def jacobi_singular_values(a: np.ndarray, sweeps: int = 60, tol: float = 1e-14) -> np.ndarray:
    """Singular values of ``a`` via cyclic Jacobi diagonalization of A^T A.

    Rotations zero one off-diagonal pair at a time until the off-diagonal
    Frobenius mass falls below ``tol`` times the matrix norm.  Returns
    sqrt of the eigenvalues, sorted descending.
    """
    a = np.asarray(a, dtype=np.float64)
    # normalize so extreme input scales cannot overflow the squared matrix
    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros(a.shape[1])
    s = (a / norm).T @ (a / norm)
    n = s.shape[0]
    scale = max(np.linalg.norm(s), 1e-300)
    for _ in range(sweeps):
        off_mask = ~np.eye(n, dtype=bool)
        off = np.sqrt(np.sum(s[off_mask] ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                # skip pivots already negligible: their rotation would be
                # the identity up to roundoff (and tau could overflow)
                if abs(s[p, q]) <= 1e-300 + 1e-18 * scale:
                    continue
                # classic 2x2 symmetric Schur rotation
                tau = (s[q, q] - s[p, p]) / (2.0 * s[p, q])
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                sn = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = sn
                rot[q, p] = -sn
                s = rot.T @ s @ rot
    eig = np.clip(np.diag(s), 0.0, None)
    return norm * np.sqrt(np.sort(eig)[::-1])


def brute_force_k(sigma: np.ndarray, e: float) -> int:
    """Smallest k whose discarded tail energy is within e of the total,
    floored at 1; plain linear scan with fresh sums at every k.
    """
    total = sum(float(v) ** 2 for v in sigma)
    for k in range(len(sigma) + 1):
        tail = sum(float(v) ** 2 for v in sigma[k:])
        if tail <= e * total:
            return max(k, 1)
    return len(sigma)


def naive_conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Six-loop direct convolution, stride 1, zero "same" padding."""
    bs, c, h, wd = x.shape
    n, _, kh, kw = w.shape
    top, left = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((bs, n, h, wd))
    for bi in range(bs):
        for ni in range(n):
            for y in range(h):
                for xcol in range(wd):
                    acc = b[ni]
                    for ci in range(c):
                        for dy in range(kh):
                            for dx in range(kw):
                                yy = y + dy - top
                                xx = xcol + dx - left
                                if 0 <= yy < h and 0 <= xx < wd:
                                    acc += x[bi, ci, yy, xx] * w[ni, ci, dy, dx]
                    out[bi, ni, y, xcol] = acc
    return out


def walk_conv_macs(n: int, c: int, kh: int, kw: int, h: int, w: int) -> int:
    """Multiply-accumulates of one conv layer, counted by walking every
    output position and adding that position's inner-product length.
    """
    total = 0
    for _ in range(n):
        for _ in range(h):
            for _ in range(w):
                total += c * kh * kw
    return total


def walk_conv_macs_full(n: int, c: int, kh: int, kw: int, h: int, w: int) -> int:
    """Same count with the innermost loops made explicit; tiny shapes only."""
    total = 0
    for _ in range(n):
        for _ in range(h):
            for _ in range(w):
                for _ in range(c):
                    for _ in range(kh):
                        for _ in range(kw):
                            total += 1
    return total


def walk_decomposed_macs(
    dims: tuple[int, int, int, int], spatial: tuple[int, int], scheme: str, k: int
) -> int:
    """Walk both cascade layers' loop nests and sum their counts."""
    n, c, kh, kw = dims
    h, w = spatial
    if scheme == "channel":
        return walk_conv_macs(k, c, kh, kw, h, w) + walk_conv_macs(n, k, 1, 1, h, w)
    return walk_conv_macs(k, c, kh, 1, h, w) + walk_conv_macs(n, k, 1, kw, h, w)


def fd_directional(fn, x: np.ndarray, v: np.ndarray, h: float = 1e-6) -> float:
    """Central finite-difference directional derivative of ``fn`` at ``x``."""
    return (fn(x + h * v) - fn(x - h * v)) / (2.0 * h)


def random_with_sigma(rng: np.random.Generator, rows: int, cols: int, sigma) -> np.ndarray:
    """Matrix with the prescribed singular values and random orthogonal factors."""
    sigma = np.asarray(sigma, dtype=np.float64)
    q1, _ = np.linalg.qr(rng.normal(size=(rows, rows)))
    q2, _ = np.linalg.qr(rng.normal(size=(cols, cols)))
    r = sigma.shape[0]
    return (q1[:, :r] * sigma) @ q2[:, :r].T
