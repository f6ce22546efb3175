"""Low-rank test models, nuclear-norm completion and the sample-bound check.

The primary solver is proximal singular-value thresholding with threshold
continuation::

    Z <- SVT_tau(Z + delta * P_Omega(B - Z))

which is proximal gradient descent on the penalized objective
``(tau / delta) * ||Z||_* + 0.5 * ||P_Omega(Z) - B||_F^2``.  Small problems
use a full SVD per step; larger ones a warm-started randomized partial SVD
whose block size follows the rank of the iterate.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .designs import _as_seed
from .errors import DomainError, EntryCountMismatch, InputError, MalformedHeader, SolverDivergence
from .mask import PathOrStream, SamplingMask
from .spectral import top_two_singular_values

SNR_CAP_DB = 300.0
MATRIX_MAGIC = "sg-matrix v1"
FULL_SVD_ENTRIES = 128 * 128


# -- models ---------------------------------------------------------------


@dataclass(frozen=True)
class LowRankModel:
    """``X = U @ V.T`` with ``U`` n x r and ``V`` m x r."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != self.V.shape[1]:
            raise InputError("factors must be n x r and m x r")
        if self.U.shape[1] < 1:
            raise InputError("rank must be at least 1")

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def m(self) -> int:
        return self.V.shape[0]

    @property
    def r(self) -> int:
        return self.U.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, self.m

    def matrix(self) -> np.ndarray:
        return self.U @ self.V.T


def _gaussian(rng: np.random.Generator, shape, complex_valued: bool) -> np.ndarray:
    if complex_valued:
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    return rng.standard_normal(shape)


def generate_incoherent(n: int, m: int, r: int, seed, complex_valued: bool = False) -> LowRankModel:
    """Random rank-``r`` model with Gaussian factors and orthonormal columns."""
    if n < 1 or m < 1:
        raise InputError("dimensions must be positive")
    if not 1 <= r <= min(n, m):
        raise InputError(f"rank r={r} outside [1, {min(n, m)}]")
    rng = _as_seed(seed).generator(0xC0)
    U = np.linalg.qr(_gaussian(rng, (n, r), complex_valued))[0]
    V = np.linalg.qr(_gaussian(rng, (m, r), complex_valued))[0]
    return LowRankModel(U, V)


def _orthonormal(F: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(F)
    d = np.abs(np.diag(R))
    if d.size == 0 or d.min() <= 1e-12 * max(d.max(), 1e-300) * max(F.shape):
        raise DomainError("factor is rank deficient")
    return Q


def incoherence(model: LowRankModel) -> float:
    """Coherence proxy ``max((n/r) max_i |U_i|^2, (m/r) max_j |V_j|^2)``.

    Leverage scores are taken after orthonormalizing each factor.  This is
    the standard coherence of the row and column spaces, used as a
    stand-in for the stronger incoherence notion in the sample bound.
    """
    Qu, Qv = _orthonormal(model.U), _orthonormal(model.V)
    lu = np.sum(np.abs(Qu) ** 2, axis=1)
    lv = np.sum(np.abs(Qv) ** 2, axis=1)
    return float(max(model.n / model.r * lu.max(), model.m / model.r * lv.max()))


class BoundCheck(NamedTuple):
    required: int
    satisfied: bool
    regular: bool
    observed: int
    note: str


BOUND_NOTE = (
    "advisory: mu is a coherence proxy and the bound assumes a row- and "
    "column-regular mask; the constant 36 is not claimed to be tight"
)


def theorem_bound(mask: SamplingMask, mu: float, r: int) -> BoundCheck:
    """Sample-count bound ``ceil(36 * sigma2^2 / sigma1 * mu^2 * max(n, m) * r^2)``."""
    if mask.nnz == 0:
        raise DomainError("empty mask")
    if mu < 1:
        raise InputError("mu must be >= 1")
    if r < 1:
        raise InputError("r must be >= 1")
    s = top_two_singular_values(mask)
    x = 36.0 * s.sigma2**2 / s.sigma1 * mu**2 * max(mask.n, mask.m) * r**2
    # guard against ceil(288.0000000001) from iterative round-off
    required = int(math.ceil(x * (1 - 1e-9) - 1e-9)) if x > 0 else 0
    return BoundCheck(required, mask.nnz >= required, mask.is_regular(), mask.nnz, BOUND_NOTE)


# -- observations ---------------------------------------------------------


@dataclass(frozen=True)
class ObservedData:
    mask: SamplingMask
    values: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.ndim != 1 or vals.size != self.mask.nnz:
            raise InputError(f"{vals.size} values for {self.mask.nnz} mask entries")
        if not self.eta >= 0:
            raise InputError("eta must be non-negative")
        object.__setattr__(self, "values", vals)

    @classmethod
    def observe(cls, X, mask: SamplingMask, eta: float = 0.0) -> "ObservedData":
        X = np.asarray(X)
        if X.shape != mask.shape:
            raise InputError(f"matrix {X.shape} does not match mask {mask.shape}")
        return cls(mask, X[mask.rows, mask.cols].copy(), eta)

    def dense(self) -> np.ndarray:
        B = np.zeros(self.mask.shape, dtype=self.values.dtype)
        B[self.mask.rows, self.mask.cols] = self.values
        return B


# -- solver ---------------------------------------------------------------


@dataclass(frozen=True)
class SolverOptions:
    """Solver knobs.  Thresholds are relative to the starting threshold ``tau0``.

    ``tau0`` defaults to ``2 * (n m / |Omega|) * rms_sv(P_Omega(B))``, where
    ``rms_sv = ||B||_F / sqrt(min(n, m))`` is a cheap mean-singular-value
    estimate.  Each stage ends when the relative change of the iterate drops
    below ``stage_tol``; the threshold then shrinks by ``decay`` down to
    ``tau0 * tau_min_ratio``.  The stopping tests (``tol`` on the change,
    ``max(eta, abs_tol * ||B||_F)`` on the residual) apply in the final stage;
    with ``eta > 0`` a converged stage whose residual is already within
    ``eta`` also ends the solve.
    """

    tol: float = 1e-9
    stage_tol: float = 1e-6
    abs_tol: float = 1e-9
    max_iter: int = 5000
    delta: float = 1.0
    tau0: float | None = None
    decay: float = 0.5
    tau_min_ratio: float = 1e-9
    divergence_window: int = 20
    oversample: int = 8
    seed: int = 0

    def __post_init__(self):
        if not (self.tol > 0 and self.stage_tol > 0 and self.abs_tol >= 0):
            raise InputError("tolerances must be positive")
        if self.max_iter < 1 or self.divergence_window < 1:
            raise InputError("max_iter and divergence_window must be positive")
        if not self.delta > 0:
            raise InputError("delta must be positive")
        if not 0 < self.decay < 1:
            raise InputError("decay must lie in (0, 1)")
        if not 0 < self.tau_min_ratio <= 1:
            raise InputError("tau_min_ratio must lie in (0, 1]")
        if self.tau0 is not None and not self.tau0 > 0:
            raise InputError("tau0 must be positive")


@dataclass
class SolveReport:
    estimate: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool
    criterion: str
    method: str = "svt"
    rank: int = 0
    history: list = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "objective": self.objective,
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "criterion": self.criterion,
            "rank": self.rank,
        }


def _orth(Y):
    return np.linalg.qr(Y)[0]


def _threshold(U, s, Vh, tau):
    keep = s > tau
    return U[:, keep], s[keep] - tau, Vh[keep].conj().T


def _svt(G: np.ndarray, tau, V_prev, over, rng):
    """Singular triples of ``G`` above ``tau``, shrunk by ``tau``.

    Randomized range finder seeded with the previous right factor plus
    ``over`` random columns and one power iteration; the block doubles until
    it holds a value below ``tau``.  Because the seed block tracks the
    dominant subspace across iterations, the warm start acts as subspace
    iteration and the retained triples converge along with ``Z``.
    """
    n, m = G.shape
    kmax = min(n, m)
    k = min(V_prev.shape[1] + over, kmax)
    Gh = G.conj().T
    while True:
        if 3 * k >= kmax:
            return _threshold(*np.linalg.svd(G, full_matrices=False), tau)
        Om = _gaussian(rng, (m, k), np.iscomplexobj(G))
        Om[:, : V_prev.shape[1]] = V_prev
        Q = _orth(G @ Om)
        Q = _orth(G @ (Gh @ Q))
        Ub, s, Vh = np.linalg.svd(Q.conj().T @ G, full_matrices=False)
        if s[-1] <= tau:
            return _threshold(Q @ Ub, s, Vh, tau)
        k = min(2 * k, kmax)


def default_tau0(data: ObservedData) -> float:
    n, m = data.mask.shape
    rms_sv = np.linalg.norm(data.values) / np.sqrt(min(n, m))
    return float(2.0 * (n * m / data.mask.nnz) * rms_sv)


def solve_nuclear_norm(data: ObservedData, opts: SolverOptions | None = None) -> SolveReport:
    """Approximate ``min ||Z||_*  s.t.  ||P_Omega(Z) - B||_F <= eta``.

    Returns a report whose ``criterion`` is one of ``"residual"``,
    ``"change"`` or ``"max_iter"``.  ``history`` holds one
    ``(tau, penalized_objective, residual)`` triple per iteration.

    Raises
    ------
    DomainError
        Empty mask.
    SolverDivergence
        Non-finite iterate, or residual above ``||B||_F`` (the residual of
        ``Z = 0``) for ``divergence_window`` consecutive iterations.
    """
    opts = opts or SolverOptions()
    mask = data.mask
    if mask.nnz == 0:
        raise DomainError("empty mask: nothing observed")
    n, m = mask.shape
    b = data.values
    dtype = np.result_type(b.dtype, np.float64)
    b = b.astype(dtype)
    norm_b = float(np.linalg.norm(b))
    target = max(data.eta, opts.abs_tol * norm_b)
    tau0 = opts.tau0 if opts.tau0 is not None else default_tau0(data)
    tau_min = tau0 * opts.tau_min_ratio
    tau = tau0
    rng = np.random.default_rng(opts.seed)
    flat = mask.flat
    full_svd = n * m <= FULL_SVD_ENTRIES

    U = np.zeros((n, 0), dtype)
    s = np.zeros(0)
    V = np.zeros((m, 0), dtype)
    Z = np.zeros((n, m), dtype)
    z_obs = np.zeros_like(b)
    history = []
    above = 0
    criterion = "max_iter"
    converged = False
    if norm_b == 0:
        # Z = 0 is optimal and feasible
        return SolveReport(np.zeros((n, m), dtype), 0.0, 0.0, 0, True, "residual", history=history)
    if mask.nnz == n * m and data.eta == 0:
        # the constraint set is the single point B
        B = data.dense().astype(dtype)
        sv = np.linalg.svd(B, compute_uv=False)
        rank = int(np.sum(sv > sv[0] * max(n, m) * np.finfo(float).eps))
        return SolveReport(B, float(sv.sum()), 0.0, 0, True, "residual", rank=rank, history=history)

    it = 0
    for it in range(1, opts.max_iter + 1):
        G = Z.copy()
        G.flat[flat] += opts.delta * (b - z_obs)
        if full_svd:
            Un, sn, Vn = _threshold(*np.linalg.svd(G, full_matrices=False), tau)
        else:
            Un, sn, Vn = _svt(G, tau, V, opts.oversample, rng)

        # relative change from the dense difference; the factored identity
        # ||A||^2 + ||B||^2 - 2<A, B> cancels down to ~sqrt(eps)
        Z_new = (Un * sn) @ Vn.conj().T
        nz = float(np.linalg.norm(Z_new))
        dz = float(np.linalg.norm(Z_new - Z))
        change = dz / nz if nz > 0 else (0.0 if dz == 0 else 1.0)

        U, s, V, Z = Un, sn, Vn, Z_new
        z_obs = Z.flat[flat]
        residual = float(np.linalg.norm(z_obs - b))
        if not (np.isfinite(residual) and np.all(np.isfinite(s))):
            raise SolverDivergence(f"non-finite iterate at iteration {it} (tau={tau:.3e})")
        history.append((tau, tau / opts.delta * float(s.sum()) + 0.5 * residual**2, residual))
        above = above + 1 if residual > norm_b * (1 + 1e-12) else 0
        if above >= opts.divergence_window:
            raise SolverDivergence(
                f"residual {residual:.3e} exceeded ||B||={norm_b:.3e} for {above} iterations "
                f"(iteration {it}, tau={tau:.3e}, delta={opts.delta})"
            )
        if tau > tau_min:
            if change < opts.stage_tol:
                if data.eta > 0 and residual <= data.eta:
                    # the continuation path has reached the constraint set
                    criterion, converged = "residual", True
                    break
                tau = max(tau * opts.decay, tau_min)
            continue
        if residual <= target:
            criterion, converged = "residual", True
            break
        if change < opts.tol:
            criterion, converged = "change", True
            break

    return SolveReport(
        estimate=Z,
        objective=float(s.sum()),
        residual=residual,
        iterations=it,
        converged=converged,
        criterion=criterion,
        rank=int(s.size),
        history=history,
    )


def solve_factorized(
    data: ObservedData, rank: int, max_iter: int = 500, tol: float = 1e-10, ridge: float = 1e-10
) -> SolveReport:
    """Alternating least squares on ``Z = L R^H`` with a fixed, user-given rank.

    A fast path for experiments; the result is flagged ``method="als"``.
    Each row of ``L`` (and of ``R``) solves a small ridge-regularized least
    squares problem over its observed entries.
    """
    mask = data.mask
    if mask.nnz == 0:
        raise DomainError("empty mask: nothing observed")
    n, m = mask.shape
    if not 1 <= rank <= min(n, m):
        raise InputError(f"rank {rank} outside [1, {min(n, m)}]")
    B = data.dense()
    dtype = np.result_type(B.dtype, np.float64)
    scale = n * m / mask.nnz
    Uf, sf, Vh = np.linalg.svd(B * scale, full_matrices=False)
    L = Uf[:, :rank] * np.sqrt(sf[:rank])
    R = Vh[:rank].conj().T * np.sqrt(sf[:rank])
    L, R = L.astype(dtype), R.astype(dtype)
    A = mask.to_csr()
    At = A.T.tocsr()
    norm_b = float(np.linalg.norm(data.values)) or 1.0
    eye = ridge * np.eye(rank)

    def sweep(F, other, csr, Bmat):
        for i in range(F.shape[0]):
            idx = csr.indices[csr.indptr[i] : csr.indptr[i + 1]]
            if idx.size == 0:
                F[i] = 0
                continue
            O = other[idx].conj()
            F[i] = np.linalg.solve(O.conj().T @ O + eye, O.conj().T @ Bmat[i, idx])

    prev = np.inf
    residual = np.inf
    criterion, converged, it = "max_iter", False, 0
    for it in range(1, max_iter + 1):
        sweep(L, R, A, B)
        sweep(R, L, At, B.conj().T)
        z_obs = np.einsum("ik,ik->i", L[mask.rows], R[mask.cols].conj())
        residual = float(np.linalg.norm(z_obs - data.values))
        if not np.isfinite(residual):
            raise SolverDivergence(f"non-finite ALS iterate at iteration {it}")
        if residual <= max(data.eta, tol * norm_b):
            criterion, converged = "residual", True
            break
        if abs(prev - residual) <= tol * norm_b:
            criterion, converged = "change", True
            break
        prev = residual
    Z = L @ R.conj().T
    return SolveReport(
        estimate=Z,
        objective=float(np.linalg.svd(Z, compute_uv=False).sum()),
        residual=residual,
        iterations=it,
        converged=converged,
        criterion=criterion,
        method="als",
        rank=rank,
    )


def snr(estimate, truth) -> float:
    """Reconstruction SNR in dB; an exact match returns ``SNR_CAP_DB``."""
    est, tru = np.asarray(estimate), np.asarray(truth)
    if est.shape != tru.shape:
        raise InputError(f"shape mismatch: {est.shape} vs {tru.shape}")
    nt = np.linalg.norm(tru)
    if nt == 0:
        raise DomainError("truth has zero norm")
    ne = np.linalg.norm(est - tru)
    if ne == 0:
        return SNR_CAP_DB
    return float(min(-20.0 * np.log10(ne / nt), SNR_CAP_DB)) + 0.0  # no "-0.0"


# -- matrix files ---------------------------------------------------------


def _fmt(z, is_complex: bool) -> str:
    if not is_complex:
        return repr(float(z))
    im = repr(float(z.imag))
    sign = "" if im.startswith("-") else "+"
    return f"{float(z.real)!r}{sign}{im}i"


def dumps_matrix(X) -> str:
    X = np.asarray(X)
    if X.ndim != 2:
        raise InputError("matrix must be 2-D")
    is_complex = np.iscomplexobj(X)
    lines = [MATRIX_MAGIC, f"{X.shape[0]} {X.shape[1]} {'complex' if is_complex else 'real'}"]
    lines += [" ".join(_fmt(v, is_complex) for v in row) for row in X]
    return "\n".join(lines) + "\n"


def write_matrix(X, destination: PathOrStream) -> None:
    text = dumps_matrix(X)
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def loads_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2 or lines[0].strip() != MATRIX_MAGIC:
        raise MalformedHeader(f"malformed header: expected '{MATRIX_MAGIC}'")
    head = lines[1].split()
    if len(head) != 3 or head[2] not in ("real", "complex"):
        raise MalformedHeader("malformed header: expected '<n> <m> <real|complex>'")
    try:
        n, m = int(head[0]), int(head[1])
    except ValueError:
        raise MalformedHeader("malformed header: dimensions must be integers") from None
    if n < 1 or m < 1:
        raise MalformedHeader("malformed header: dimensions must be positive")
    body = lines[2:]
    if len(body) != n:
        raise EntryCountMismatch(f"entry count mismatch: expected {n} rows, found {len(body)}")
    is_complex = head[2] == "complex"
    out = np.empty((n, m), dtype=complex if is_complex else float)
    for i, ln in enumerate(body):
        toks = ln.split()
        if len(toks) != m:
            raise EntryCountMismatch(f"entry count mismatch: row {i} has {len(toks)} values, expected {m}")
        try:
            out[i] = [complex(t[:-1] + "j") if is_complex and t.endswith("i") else (complex(t) if is_complex else float(t)) for t in toks]
        except ValueError:
            raise InputError(f"malformed value on row {i}") from None
    return out


def read_matrix(source: PathOrStream) -> np.ndarray:
    if hasattr(source, "read"):
        return loads_matrix(source.read())
    with open(os.fspath(source), encoding="utf-8") as fh:
        return loads_matrix(fh.read())
