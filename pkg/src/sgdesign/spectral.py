"""Top singular values, SG ratio and bipartite connectivity of sampling masks.

The iterative path is Golub-Kahan-Lanczos bidiagonalization with full
reorthogonalization.  sigma1 and its singular pair are computed first; sigma2
is then the top singular value of the deflated operator
``M - sigma1 * u1 v1^T``, applied implicitly so every product costs
O(nnz).  Deflation also handles repeated top values (identity masks,
equal disconnected blocks), where a single Krylov sequence only sees one
copy.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

from .errors import DomainError, InputError
from .mask import SamplingMask

_START_SEED = 0x5EED5
DENSE_LIMIT = 4_000_000


@dataclass(frozen=True)
class SpectralSummary:
    sigma1: float
    sigma2: float
    sg_ratio: float
    iterations: int
    converged: bool

    def as_dict(self) -> dict:
        return {
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "sg_ratio": self.sg_ratio,
            "iterations": self.iterations,
            "converged": self.converged,
        }


class _Ritz(NamedTuple):
    sigma: float
    u: np.ndarray
    v: np.ndarray
    steps: int
    converged: bool


def _reorth(x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    # two passes of classical Gram-Schmidt ("twice is enough")
    for _ in range(2):
        x = x - basis @ (basis.T @ x)
    return x


def _bidiag(alpha: np.ndarray, beta: np.ndarray, k: int, extended: bool) -> np.ndarray:
    # k x k upper bidiagonal, or k x (k+1) with beta[k-1] closing the last row
    B = np.zeros((k, k + 1 if extended else k))
    i = np.arange(k)
    B[i, i] = alpha[:k]
    if extended:
        B[i, i + 1] = beta[:k]
    else:
        B[i[:-1], i[:-1] + 1] = beta[: k - 1]
    return B


def _gk_top(
    matvec: Callable[[np.ndarray], np.ndarray],
    rmatvec: Callable[[np.ndarray], np.ndarray],
    shape: tuple[int, int],
    v0: np.ndarray,
    tol: float,
    max_steps: int,
    scale: float,
) -> _Ritz:
    n, m = shape
    kmax = max(1, min(n, m, max_steps))
    U = np.zeros((n, kmax))
    V = np.zeros((m, kmax + 1))
    alpha = np.zeros(kmax)
    beta = np.zeros(kmax)
    breakdown = 1e-12 * scale
    floor = 64 * np.finfo(float).eps * scale

    def ritz(k, extended, steps, converged):
        P, theta, Qt = np.linalg.svd(_bidiag(alpha, beta, k, extended))
        nv = k + 1 if extended else k
        r = _Ritz(float(theta[0]), U[:, :k] @ P[:, 0], V[:, :nv] @ Qt[0], steps, converged)
        return r, P

    V[:, 0] = v0 / np.linalg.norm(v0)
    best = None
    for k in range(kmax):
        u = matvec(V[:, k])
        if k:
            u = u - beta[k - 1] * U[:, k - 1]
            u = _reorth(u, U[:, :k])
        a = np.linalg.norm(u)
        if a <= breakdown:
            # A v_k lies in span(U), so A^T U = V [B | beta e]^T exactly
            if k == 0:
                return _Ritz(0.0, np.zeros(n), V[:, 0].copy(), 1, True)
            return ritz(k, True, k + 1, True)[0]
        alpha[k] = a
        U[:, k] = u / a
        w = rmatvec(U[:, k]) - a * V[:, k]
        w = _reorth(w, V[:, : k + 1])
        b = np.linalg.norm(w)
        beta[k] = b
        if b <= breakdown:
            # invariant Krylov pair; the square projection is exact
            return ritz(k + 1, False, k + 1, True)[0]
        V[:, k + 1] = w / b
        if k + 1 == n:
            # U spans R^n: the extended projection carries the whole spectrum
            return ritz(k + 1, True, k + 1, True)[0]
        best, P = ritz(k + 1, False, k + 1, False)
        if b * abs(P[k, 0]) <= max(tol * best.sigma, floor):
            return best._replace(converged=True)
    return best


def _start_vector(rng: np.random.Generator, m: int) -> np.ndarray:
    # all-ones is the top right singular vector of any regular mask; the random
    # part keeps the start generic for everything else
    v = np.ones(m) / np.sqrt(m) + rng.standard_normal(m) / np.sqrt(m)
    return v


def top_two_singular_values(
    mask: SamplingMask,
    tol: float = 1e-10,
    max_iter: int | None = None,
    trim_empty: bool = False,
) -> SpectralSummary:
    """sigma1, sigma2 and their ratio for a 0/1 mask.

    Parameters
    ----------
    mask : SamplingMask
        Non-empty mask.
    tol : float
        Relative residual tolerance on each Ritz triple.
    max_iter : int, optional
        Cap on bidiagonalization steps per phase; defaults to
        ``10 * min(n, m) + 500``.
    trim_empty : bool
        Drop all-zero rows/columns first.  The nonzero spectrum is identical
        either way; the option exists so both conventions can be reported.
    """
    if mask.nnz == 0:
        raise DomainError("sigma1 is zero: mask has no entries")
    if tol <= 0:
        raise InputError("tol must be positive")
    if trim_empty:
        mask = mask.trim_empty()
    n, m = mask.shape
    if max_iter is None:
        max_iter = 10 * min(n, m) + 500
    A = mask.to_csr()
    At = A.T.tocsr()
    scale = np.sqrt(mask.nnz)
    rng = np.random.default_rng(_START_SEED)

    first = _gk_top(A.dot, At.dot, (n, m), _start_vector(rng, m), tol, max_iter, scale)
    s1, u1, v1 = first.sigma, first.u, first.v
    if min(n, m) == 1:
        return SpectralSummary(s1, 0.0, 0.0, first.steps, first.converged)

    def defl(x):
        return A.dot(x) - s1 * u1 * (v1 @ x)

    def rdefl(y):
        return At.dot(y) - s1 * v1 * (u1 @ y)

    v0 = _start_vector(rng, m)
    v0 -= v1 * (v1 @ v0)
    second = _gk_top(defl, rdefl, (n, m), v0, tol, max_iter, scale)
    s2 = min(second.sigma, s1)
    return SpectralSummary(
        sigma1=s1,
        sigma2=s2,
        sg_ratio=s2 / s1,
        iterations=first.steps + second.steps,
        converged=first.converged and second.converged,
    )


def sg_ratio(mask: SamplingMask, **kwargs) -> float:
    """sigma2 / sigma1; small means a large spectral gap."""
    return top_two_singular_values(mask, **kwargs).sg_ratio


def dense_svd_oracle(mask: SamplingMask, max_size: int = DENSE_LIMIT) -> np.ndarray:
    """All singular values of the dense 0/1 matrix, descending (LAPACK SVD)."""
    if mask.n * mask.m > max_size:
        raise DomainError(f"mask {mask.n}x{mask.m} exceeds the dense oracle limit of {max_size} entries")
    return np.linalg.svd(mask.to_dense(), compute_uv=False)


class Components(NamedTuple):
    n_components: int
    isolated_rows: int
    isolated_cols: int


def connected_components(mask: SamplingMask) -> Components:
    """Components of the bipartite row/column graph, ignoring isolated vertices."""
    rc, cc = mask.row_counts(), mask.col_counts()
    iso_r, iso_c = int(np.sum(rc == 0)), int(np.sum(cc == 0))
    if mask.nnz == 0:
        return Components(0, iso_r, iso_c)
    n, m = mask.shape
    adj = sp.coo_matrix(
        (np.ones(mask.nnz), (mask.rows, n + mask.cols)), shape=(n + m, n + m)
    )
    total, _ = _cc(adj, directed=False)
    return Components(int(total) - iso_r - iso_c, iso_r, iso_c)
