"""Affinity kernels, Markov normalization, and the diffusion embedding.

Pipeline: kernel -> row-stochastic operator P (with its symmetric conjugate
S = D^{-1/2} K D^{-1/2}) -> top eigenpairs of S, back-transformed to the right
eigenvectors of P -> embedding coordinates lambda_k^t * phi_k.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.spatial.distance import cdist

from .data import as_values

logger = logging.getLogger(__name__)

# Dense kernels up to this size; above it rows are truncated to the strongest
# neighbors and stored sparse.
DENSE_LIMIT = 4000
SPARSE_KNN = 64


class EigensolverError(RuntimeError):
    """Eigendecomposition failed; carries solver diagnostics."""


@dataclass(frozen=True)
class AffinityMatrix:
    """Symmetric nonnegative affinity matrix with its bandwidth and truncation."""

    entries: object  # dense ndarray or scipy.sparse matrix
    sigma: float
    tau: float = 0.0

    def __post_init__(self):
        K = self.entries
        if sp.issparse(K):
            asym = abs(K - K.T)
            max_asym = asym.max() if asym.nnz else 0.0
            min_entry = K.data.min() if K.nnz else 0.0
            diag = K.diagonal()
        else:
            K = np.asarray(K, dtype=float)
            object.__setattr__(self, "entries", K)
            max_asym = np.max(np.abs(K - K.T)) if K.size else 0.0
            min_entry = K.min()
            diag = np.diagonal(K)
        if max_asym > 1e-12:
            raise ValueError(f"affinity matrix asymmetric: max |K - K^T| = {max_asym:.3g}")
        if min_entry < 0:
            raise ValueError(f"negative affinity entries (min {min_entry:.3g})")
        if np.any(diag <= 0):
            bad = np.where(diag <= 0)[0]
            raise ValueError(f"non-positive diagonal at points {bad[:10].tolist()}")

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def toarray(self) -> np.ndarray:
        if sp.issparse(self.entries):
            return self.entries.toarray()
        return self.entries


@dataclass(frozen=True)
class MarkovOperator:
    """Row-stochastic transition matrix and its symmetric conjugate."""

    P: object
    S: object
    row_sums: np.ndarray

    @property
    def n(self) -> int:
        return self.row_sums.shape[0]


@dataclass(frozen=True)
class DiffusionEmbedding:
    """Top eigenpairs of the diffusion operator plus the diffusion time.

    eigenvalues[0] is the trivial eigenvalue 1; coordinates use components
    1..d scaled by eigenvalue^t.
    """

    eigenvalues: np.ndarray  # (d+1,) descending
    eigenvectors: np.ndarray  # (n, d+1) right eigenvectors of P
    t: float
    d: int

    def __post_init__(self):
        vals = np.asarray(self.eigenvalues, dtype=float)
        vecs = np.asarray(self.eigenvectors, dtype=float)
        if abs(vals[0] - 1.0) > 1e-8:
            raise ValueError(f"top eigenvalue {vals[0]} is not 1")
        if np.any(np.abs(vals) > 1 + 1e-8):
            raise ValueError(f"spectrum outside [-1, 1]: {vals}")
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "eigenvectors", vecs)

    @property
    def n(self) -> int:
        return self.eigenvectors.shape[0]

    @property
    def coords(self) -> np.ndarray:
        """Embedding coordinates lambda_k^t phi_k, k = 1..d, shape (n, d)."""
        lam = self.eigenvalues[1:]
        scale = np.sign(lam) * np.abs(lam) ** self.t  # real-valued power for any sign
        return self.eigenvectors[:, 1:] * scale[None, :]


def median_bandwidth(X, subsample: int = 2000) -> float:
    """Median of the nonzero pairwise distances, on a subsample for large n."""
    values = as_values(X)
    n = values.shape[0]
    if n > subsample:
        idx = np.unique(np.linspace(0, n - 1, subsample).astype(int))
        values = values[idx]
    d = cdist(values, values)
    nz = d[d > 0]
    if nz.size == 0:
        return 1.0
    return float(np.median(nz))


def _assemble(n, row_block_fn, tau, symmetric_fill=False):
    """Assemble a kernel from a row-block function, dense or kNN-sparse.

    row_block_fn(i0, i1, j0) must return dense rows [i0, i1) against columns
    [j0, n). With symmetric_fill only the upper-triangular blocks are computed
    and mirrored. Thresholding at tau happens on the symmetric entries (never
    per row) and the diagonal is always kept.
    """
    if n <= DENSE_LIMIT:
        K = np.empty((n, n))
        block = max(1, (1 << 21) // max(n, 1))
        for i0 in range(0, n, block):
            i1 = min(n, i0 + block)
            if symmetric_fill:
                B = row_block_fn(i0, i1, i0)
                K[i0:i1, i0:] = B
                K[i0:, i0:i1] = B.T
            else:
                K[i0:i1] = row_block_fn(i0, i1, 0)
        if tau > 0:
            diag = np.diagonal(K).copy()
            K = np.where(K >= tau, K, 0.0)
            np.fill_diagonal(K, diag)
        return K
    # Sparse path: keep the strongest SPARSE_KNN entries per row (plus the
    # diagonal), then symmetrize by max so no edge is dropped one-sidedly.
    k = min(SPARSE_KNN, n - 1)
    rows, cols, vals = [], [], []
    block = max(1, (1 << 22) // n)
    for i0 in range(0, n, block):
        i1 = min(n, i0 + block)
        B = row_block_fn(i0, i1, 0)
        if tau > 0:
            B = np.where(B >= tau, B, 0.0)
        order = np.argpartition(-B, kth=k, axis=1)[:, : k + 1]
        for r in range(i1 - i0):
            i = i0 + r
            c = order[r]
            if i not in c:
                c = np.append(c, i)
            v = B[r, c]
            keep = (v > 0) | (c == i)
            rows.append(np.full(int(keep.sum()), i))
            cols.append(c[keep])
            vals.append(v[keep])
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return K.maximum(K.T).tocsr()


def gaussian_kernel(X, sigma: float | None = None, tau: float = 0.0) -> AffinityMatrix:
    """Gaussian affinities exp(-||x_i - x_j||^2 / (2 sigma^2)).

    sigma defaults to the median nonzero pairwise distance. Entries below tau
    are zeroed (diagonal kept).
    """
    values = as_values(X)
    if sigma is None:
        sigma = median_bandwidth(values)
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    n = values.shape[0]

    def block(i0, i1, j0):
        d2 = cdist(values[i0:i1], values[j0:], "sqeuclidean")
        return np.exp(-d2 / (2.0 * sigma**2))

    K = _assemble(n, block, tau, symmetric_fill=True)
    if not sp.issparse(K):
        np.fill_diagonal(K, 1.0)
    return AffinityMatrix(K, float(sigma), float(tau))


def correlation_kernel(X) -> AffinityMatrix:
    """Clamped cosine affinities max(<x_i, x_j> / (||x_i|| ||x_j||), 0)."""
    values = as_values(X)
    norms = np.linalg.norm(values, axis=1)
    if np.any(norms == 0):
        bad = np.where(norms == 0)[0]
        raise ValueError(f"zero-norm rows at points {bad[:10].tolist()}")
    unit = values / norms[:, None]
    G = unit @ unit.T
    G = 0.5 * (G + G.T)
    K = np.clip(G, 0.0, 1.0)
    np.fill_diagonal(K, 1.0)
    return AffinityMatrix(K, sigma=1.0, tau=0.0)


def markov_normalize(K: AffinityMatrix) -> MarkovOperator:
    """Row-normalize to P = D^{-1} K and build S = D^{-1/2} K D^{-1/2}."""
    A = K.entries
    if sp.issparse(A):
        d = np.asarray(A.sum(axis=1)).ravel()
    else:
        d = A.sum(axis=1)
    if np.any(d <= 0):
        bad = np.where(d <= 0)[0]
        raise ValueError(f"isolated points with zero affinity row sums: {bad[:10].tolist()}")
    inv = 1.0 / d
    inv_sqrt = 1.0 / np.sqrt(d)
    if sp.issparse(A):
        P = sp.diags(inv) @ A
        S = sp.diags(inv_sqrt) @ A @ sp.diags(inv_sqrt)
        S = 0.5 * (S + S.T)
    else:
        P = A * inv[:, None]
        S = A * inv_sqrt[:, None] * inv_sqrt[None, :]
        S = 0.5 * (S + S.T)
    return MarkovOperator(P, S, d)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def spectral_embed(op: MarkovOperator, t: float = 1.0, d: int = 5) -> DiffusionEmbedding:
    """Top d+1 eigenpairs of the symmetric conjugate, back-transformed to P.

    Eigenvectors come from S for stability, then phi = D^{-1/2} psi. Signs are
    fixed so each eigenvector's largest-magnitude entry is positive.
    """
    n = op.n
    if not (0 < d < n):
        raise ValueError(f"need 0 < d < n, got d={d}, n={n}")
    if t <= 0:
        raise ValueError(f"diffusion time must be positive, got {t}")
    k = d + 1
    S = op.S
    use_dense = (not sp.issparse(S) and n <= 1500) or k >= n - 1
    if use_dense:
        Sd = S.toarray() if sp.issparse(S) else S
        vals, vecs = eigh(Sd, subset_by_index=[n - k, n - 1])
        vals, vecs = vals[::-1], vecs[:, ::-1]
    else:
        v0 = 1.0 + 1e-3 * np.cos(np.arange(n))
        v0 /= np.linalg.norm(v0)
        try:
            vals, vecs = eigsh(S, k=k, which="LA", v0=v0)
        except ArpackNoConvergence as exc:
            raise EigensolverError(
                f"ARPACK did not converge: {len(exc.eigenvalues)}/{k} eigenpairs "
                f"after the iteration limit"
            ) from exc
        order = np.argsort(-vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]
    # Stable descending order breaks eigenvalue ties by original index.
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    gaps = np.diff(vals)
    if np.any(np.abs(gaps) < 1e-12):
        logger.warning("degenerate eigenvalue pairs in the top spectrum: %s", vals)
    if np.max(np.abs(vals)) > 1 + 1e-8 or abs(vals[0] - 1.0) > 1e-8:
        raise EigensolverError(f"spectrum violates Markov bounds: top values {vals[:3]}")
    vals = np.clip(vals, -1.0, 1.0)
    phi = _fix_signs(vecs / np.sqrt(op.row_sums)[:, None])
    return DiffusionEmbedding(vals, phi, float(t), int(d))


def diffusion_distance(emb: DiffusionEmbedding, i: int, j: int) -> float:
    """Euclidean distance between embedded points i and j."""
    coords = emb.coords
    return float(np.linalg.norm(coords[i] - coords[j]))
