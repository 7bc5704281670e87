"""Reference-set extension of the weighted embedding to unseen points.

The asymmetric kernel against the training (reference) points is normalized
on both sides, the small Gram matrix A'A is decomposed once, and new points
embed through their normalized kernel rows. Test points never touch the
weights or each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import DataMatrix, as_values
from .metric import CohortFunctional, NeighborhoodRule, RegularizedMetric, WeightField, neighborhood_indices
from .survival import CohortTooSmallError

SINGULAR_CUTOFF = 1e-10


def _as_rows(Z) -> np.ndarray:
    """DataMatrix, 2-d array, or a single 1-d point, as validated (k, m) rows."""
    if isinstance(Z, DataMatrix):
        return Z.values
    arr = np.atleast_2d(np.asarray(Z, dtype=float))
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite coordinates in new points")
    return arr


class OutOfSupportError(ValueError):
    """The point has no affinity to any reference point at the threshold."""


@dataclass(frozen=True)
class ReferenceEmbedding:
    """Frozen decomposition of the normalized asymmetric reference kernel."""

    x_ref: np.ndarray  # reference points (n_ref, m)
    inv_diag: np.ndarray  # W_x diagonals of the references (n_ref, m)
    sigma: float
    tau: float
    psi: np.ndarray  # right singular vectors of A (n_ref, r)
    singular_values: np.ndarray  # descending, cutoff applied (r,)
    d2: np.ndarray  # frozen column normalizer (n_ref,)
    coords: np.ndarray  # reference embedding A psi (n_ref, r)

    def __post_init__(self):
        s = np.asarray(self.singular_values, dtype=float)
        if np.any(s < 0) or np.any(np.diff(s) > 1e-12):
            raise ValueError("singular values must be nonnegative and descending")
        if np.any(self.d2 <= 0):
            raise ValueError("column normalizer must be strictly positive")

    @property
    def n_ref(self) -> int:
        return self.x_ref.shape[0]

    @property
    def rank(self) -> int:
        return self.singular_values.shape[0]


def asymmetric_kernel(Z, x_ref, weights, sigma: float, tau: float = 0.0) -> np.ndarray:
    """One-sided weighted kernel rows:

        k(z, x) = exp(-(z-x)' W_x^{-1} (z-x) / sigma^2) / sqrt(det(W_x)),

    rows indexed by the stacked points Z, columns by the reference points.
    Only the reference point's weights enter; determinants go through logs.
    """
    Zv = _as_rows(Z)
    Xr = as_values(x_ref)
    u = weights.inv_diag() if isinstance(weights, WeightField) else np.asarray(weights, dtype=float)
    if u.shape != Xr.shape:
        raise ValueError(f"weights {u.shape} do not match reference {Xr.shape}")
    if np.any(u <= 0):
        raise ValueError("W_x diagonals must be positive")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    w_inv = 1.0 / u  # W_x^{-1} diagonals
    half_logdet = 0.5 * np.log(u).sum(axis=1)  # log sqrt(det W_x)
    out = np.empty((Zv.shape[0], Xr.shape[0]))
    block = max(1, (1 << 21) // max(Xr.shape[0], 1))
    for i0 in range(0, Zv.shape[0], block):
        i1 = min(Zv.shape[0], i0 + block)
        diff2 = (Zv[i0:i1, None, :] - Xr[None, :, :]) ** 2
        q = (diff2 * w_inv[None, :, :]).sum(axis=2)
        out[i0:i1] = np.exp(-q / sigma**2 - half_logdet[None, :])
    if tau > 0:
        out = np.where(out >= tau, out, 0.0)
    return out


def build_reference(x_ref, weights, sigma: float, tau: float = 0.0,
                    n_components: int | None = None) -> ReferenceEmbedding:
    """Decompose the normalized asymmetric kernel of the reference set.

    A = D1^{-1/2} K D2^{-1/2}; the small matrix A'A = Psi Sigma^2 Psi' gives
    the right singular vectors, and the reference embedding is A Psi.
    Singular values below 1e-10 of the maximum are discarded.
    """
    Xr = as_values(x_ref)
    if Xr.shape[0] < 2:
        raise ValueError("need at least two reference points")
    K = asymmetric_kernel(Xr, Xr, weights, sigma, tau)
    d1 = K.sum(axis=1)
    d2 = K.sum(axis=0)
    if np.any(d1 <= 0):
        bad = np.where(d1 <= 0)[0]
        raise ValueError(f"zero kernel row sums at reference points {bad[:10].tolist()}")
    if np.any(d2 <= 0):
        bad = np.where(d2 <= 0)[0]
        raise ValueError(f"zero kernel column sums at reference points {bad[:10].tolist()}")
    A = K / np.sqrt(d1)[:, None] / np.sqrt(d2)[None, :]
    gram = A.T @ A
    gram = 0.5 * (gram + gram.T)
    vals, vecs = np.linalg.eigh(gram)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    s = np.sqrt(np.clip(vals, 0.0, None))
    keep = s >= SINGULAR_CUTOFF * (s[0] if s.size else 1.0)
    s, vecs = s[keep], vecs[:, keep]
    if n_components is not None:
        s, vecs = s[:n_components], vecs[:, :n_components]
    psi = _fix_column_signs(vecs)
    u = weights.inv_diag() if isinstance(weights, WeightField) else np.asarray(weights, dtype=float)
    return ReferenceEmbedding(
        x_ref=Xr,
        inv_diag=u,
        sigma=float(sigma),
        tau=float(tau),
        psi=psi,
        singular_values=s,
        d2=d2,
        coords=A @ psi,
    )


def _fix_column_signs(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for j in range(out.shape[1]):
        i = int(np.argmax(np.abs(out[:, j])))
        if out[i, j] < 0:
            out[:, j] = -out[:, j]
    return out


def extend(ref: ReferenceEmbedding, z) -> np.ndarray:
    """Embed one new point through its normalized kernel row.

    The new point's own row sum plays the D1 role; the reference D2 is
    frozen. A point that reaches no reference at the threshold is flagged
    out of support.
    """
    coords = extend_batch(ref, np.atleast_2d(np.asarray(z, dtype=float)), strict=True)
    return coords[0]


def extend_batch(ref: ReferenceEmbedding, Z, strict: bool = False):
    """Embed rows of Z; returns (coords, in_support) or coords when strict.

    Out-of-support rows raise when strict, otherwise carry NaN coordinates
    with in_support False.
    """
    Zv = _as_rows(Z)
    rows = asymmetric_kernel(Zv, ref.x_ref, ref.inv_diag, ref.sigma, ref.tau)
    row_sums = rows.sum(axis=1)
    in_support = row_sums > 0
    if strict and not np.all(in_support):
        bad = np.where(~in_support)[0]
        raise OutOfSupportError(
            f"points {bad[:10].tolist()} have no affinity to any reference at tau={ref.tau}"
        )
    coords = np.full((Zv.shape[0], ref.rank), np.nan)
    ok = in_support
    A_rows = rows[ok] / np.sqrt(row_sums[ok])[:, None] / np.sqrt(ref.d2)[None, :]
    coords[ok] = A_rows @ ref.psi
    if strict:
        return coords
    return coords, in_support


def estimate_for_new_point(ref: ReferenceEmbedding, F: CohortFunctional, z,
                           rule: NeighborhoodRule) -> float:
    """F over the training neighborhood of a new point.

    The neighborhood is drawn from reference (training) points only; the
    cohort-too-small signal propagates with the achieved size.
    """
    z_coords = extend(ref, z)
    nbhd = neighborhood_indices(ref.coords, z_coords, rule)
    if nbhd.size < F.min_cohort:
        raise CohortTooSmallError(nbhd.size, F.min_cohort)
    return F(nbhd)


def build_reference_from_metric(X, metric: RegularizedMetric,
                                n_components: int | None = None) -> ReferenceEmbedding:
    """Reference decomposition using the trained metric's weights and scales."""
    comps = n_components if n_components is not None else metric.embedding.d + 1
    return build_reference(X, metric.weights, metric.sigma, metric.tau, comps)
