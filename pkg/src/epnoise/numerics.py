"""Dense complex linear algebra for small matrices.

Eigenvalues and factorizations come from LAPACK through numpy/scipy; this
module adds what LAPACK does not give directly: a deterministic eigenvalue
ordering, honest eigenvector counts for defective matrices, and a numerical
Jordan-structure analysis based on rank sequences of ``(M - lambda I)^k``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    AmbiguousClusteringError,
    NonConvergenceError,
    NonSquareError,
    SingularMatrixError,
)

DEFAULT_TOL = 1e-8


def as_cmatrix(M, name="matrix", square=True) -> np.ndarray:
    """Return ``M`` as a finite complex128 2-d array, raising on bad input."""
    A = np.array(M, dtype=np.complex128)
    if A.ndim != 2 or A.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-d array, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise NonSquareError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    return A


def as_cvector(v, name="vector") -> np.ndarray:
    x = np.array(v, dtype=np.complex128).reshape(-1)
    if x.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def sort_eigenvalues(w) -> np.ndarray:
    """Indices ordering ``w`` by descending real part, then descending imaginary part."""
    w = np.asarray(w)
    return np.lexsort((-w.imag, -w.real))


def _norm(M) -> float:
    s = float(np.linalg.norm(M, 2))
    return s if s > 0.0 else 1.0


@dataclass(frozen=True)
class EigenResult:
    """Eigenvalues with the eigenvectors that numerically exist.

    ``vectors[:, k]`` is a unit right eigenvector for ``vector_eigenvalues[k]``;
    for a defective cluster fewer vectors than eigenvalues are reported.
    ``residuals[k] = ||M v - lambda v|| / ||M||``.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    vector_eigenvalues: np.ndarray
    residuals: np.ndarray
    tol: float

    @property
    def n_vectors(self) -> int:
        return self.vectors.shape[1]

    @property
    def defective(self) -> bool:
        return self.n_vectors < len(self.eigenvalues)


@dataclass(frozen=True)
class JordanCluster:
    eigenvalue: complex
    multiplicity: int
    block_sizes: tuple[int, ...]


@dataclass(frozen=True)
class JordanStructure:
    clusters: tuple[JordanCluster, ...]
    tol: float
    ambiguous: bool = False
    size: int = field(default=0)

    @property
    def block_sizes(self) -> list[tuple[int, ...]]:
        return [c.block_sizes for c in self.clusters]

    def cluster_near(self, value, radius=1e-6) -> JordanCluster:
        """The cluster whose representative lies closest to ``value``."""
        best = min(self.clusters, key=lambda c: abs(c.eigenvalue - value))
        if abs(best.eigenvalue - value) > radius * max(1.0, abs(value)):
            raise KeyError(f"no cluster near {value}")
        return best


def _raw_eig(M):
    try:
        w, V = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise NonConvergenceError(f"eigenvalue iteration failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NonConvergenceError("eigensolver returned non-finite values", partial=w)
    return w, V


def _nullities(M, lam, kmax, tol, scale):
    """d_k = n - rank((M - lam I)^k) for k = 1..kmax."""
    n = M.shape[0]
    B = M - lam * np.eye(n)
    P = np.eye(n, dtype=complex)
    out = []
    for k in range(1, kmax + 1):
        P = P @ B
        s = np.linalg.svd(P, compute_uv=False)
        out.append(int(np.sum(s <= tol * scale**k)))
    return out


def _valid_cluster(d, m):
    """Nullity sequence describes exactly ``m`` generalized eigenvectors."""
    if d[0] < 1 or d[-1] != m:
        return False
    prev, diffs = 0, []
    for dk in d:
        diffs.append(dk - prev)
        prev = dk
    return all(a >= b for a, b in zip(diffs, diffs[1:]))


def _blocks_from_nullities(d):
    ge = []  # ge[k-1] = number of blocks of size >= k
    prev = 0
    for dk in d:
        ge.append(dk - prev)
        prev = dk
    ge.append(0)
    blocks = []
    for s in range(len(ge) - 1, 0, -1):
        blocks += [s] * (ge[s - 1] - ge[s])
    return tuple(sorted(blocks, reverse=True))


def _cluster(M, w, tol, scale):
    """Group eigenvalues into numerically degenerate clusters.

    A group of ``m`` eigenvalues is merged if it fits in a disc of radius
    ``scale * tol**(1/m)`` around its centroid (the size by which rounding
    splits a Jordan block of size ``m``) and the nullities of
    ``(M - centroid)^k`` form a valid Jordan partition of ``m``.
    Returns a list of (index array, centroid, nullity sequence).
    """
    order = sort_eigenvalues(w)
    unassigned = list(order)
    clusters = []
    while unassigned:
        i = unassigned[0]
        rest = np.array(unassigned)
        by_dist = rest[np.argsort(np.abs(w[rest] - w[i]), kind="stable")]
        chosen = None
        for m in range(len(by_dist), 1, -1):
            idx = by_dist[:m]
            c = w[idx].mean()
            if np.max(np.abs(w[idx] - c)) > scale * tol ** (1.0 / m):
                continue
            d = _nullities(M, c, m, tol, scale)
            if _valid_cluster(d, m):
                chosen = (idx, c, d)
                break
        if chosen is None:
            chosen = (by_dist[:1], w[i], [1])
        clusters.append(chosen)
        taken = set(int(j) for j in chosen[0])
        unassigned = [j for j in unassigned if j not in taken]
    return clusters


def eig(M, tol=DEFAULT_TOL) -> EigenResult:
    """Eigenvalues and (existing) right eigenvectors of a square complex matrix.

    Eigenvalues are sorted by descending real part, then descending imaginary
    part. Inside a numerically degenerate cluster the eigenvectors are an
    orthonormal basis of the null space of ``M - centroid``; a defective
    cluster therefore contributes fewer vectors than eigenvalues.
    """
    M = as_cmatrix(M, "M")
    n = M.shape[0]
    scale = _norm(M)
    w, V = _raw_eig(M)
    clusters = _cluster(M, w, tol, scale)

    vecs, vlams = [], []
    for idx, c, d in clusters:
        if len(idx) == 1:
            v = V[:, idx[0]]
            v = v / np.linalg.norm(v)
            if np.linalg.norm(M @ v - w[idx[0]] * v) > 1e-10 * scale:
                # LAPACK vectors can be garbage for badly scaled input; fall back to the SVD null vector
                v = np.linalg.svd(M - w[idx[0]] * np.eye(n))[2][-1].conj()
            vecs.append(v)
            vlams.append(w[idx[0]])
            continue
        _, s, Vh = np.linalg.svd(M - c * np.eye(n))
        g = d[0]
        for row in Vh[n - g:][::-1]:
            vecs.append(row.conj())
            vlams.append(c)

    order = sort_eigenvalues(w)
    vlams = np.array(vlams, dtype=complex)
    vecs = np.array(vecs, dtype=complex).T.reshape(n, -1)
    vorder = sort_eigenvalues(vlams)
    vlams, vecs = vlams[vorder], vecs[:, vorder]
    res = np.array(
        [np.linalg.norm(M @ vecs[:, k] - vlams[k] * vecs[:, k]) / scale for k in range(len(vlams))]
    )
    return EigenResult(
        eigenvalues=w[order],
        vectors=vecs,
        vector_eigenvalues=vlams,
        residuals=res,
        tol=tol,
    )


def eigvals(M) -> np.ndarray:
    """Sorted eigenvalues only (no cluster analysis)."""
    M = as_cmatrix(M, "M")
    w, _ = _raw_eig(M)
    return w[sort_eigenvalues(w)]


def solve(A, b, pivot_tol=1e-13) -> np.ndarray:
    """Solve ``A x = b`` by LU factorization with partial pivoting.

    Raises SingularMatrixError when a pivot falls below ``pivot_tol * ||A||``.
    """
    A = as_cmatrix(A, "A")
    b = np.asarray(b, dtype=np.complex128)
    if b.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: A is {A.shape}, b has {b.shape[0]} rows")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min() <= pivot_tol * _norm(A):
        raise SingularMatrixError(
            f"pivot {pivots.min():.3e} below threshold {pivot_tol * _norm(A):.3e}"
        )
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def kron(A, B) -> np.ndarray:
    """Kronecker product ``A (x) B``."""
    return np.kron(as_cmatrix(A, "A", square=False), as_cmatrix(B, "B", square=False))


def jordan_structure(M, tol=DEFAULT_TOL, strict=False) -> JordanStructure:
    """Numerical Jordan structure of ``M``.

    Block sizes within each eigenvalue cluster follow from the nullities
    ``d_k`` of ``(M - centroid)^k``: the number of blocks of size >= k is
    ``d_k - d_{k-1}``. Singular values below ``tol * ||M||**k`` count as zero.
    Clusters closer than ``10 * tol * ||M||`` are flagged ambiguous (raised
    as AmbiguousClusteringError if ``strict``).
    """
    M = as_cmatrix(M, "M")
    n = M.shape[0]
    scale = _norm(M)
    w, _ = _raw_eig(M)
    raw = _cluster(M, w, tol, scale)
    clusters = []
    for idx, c, d in raw:
        blocks = (1,) if len(idx) == 1 else _blocks_from_nullities(d)
        clusters.append(JordanCluster(complex(c), len(idx), blocks))
    reps = np.array([c.eigenvalue for c in clusters])
    clusters = [clusters[k] for k in sort_eigenvalues(reps)]

    ambiguous = False
    for a in range(len(clusters)):
        for b in range(a + 1, len(clusters)):
            if abs(clusters[a].eigenvalue - clusters[b].eigenvalue) < 10 * tol * scale:
                ambiguous = True
    if ambiguous and strict:
        raise AmbiguousClusteringError(
            f"eigenvalue clusters closer than 10*tol*||M|| = {10 * tol * scale:.3e}"
        )
    assert sum(sum(c.block_sizes) for c in clusters) == n
    return JordanStructure(tuple(clusters), tol=tol, ambiguous=ambiguous, size=n)
