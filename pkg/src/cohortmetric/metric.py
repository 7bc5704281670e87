"""Function-driven feature weights and the regularized diffusion metric.

Folder-level feature weights score each feature's power to discriminate a
cohort functional F (size-weighted variance of F over value bins), decay-sum
to per-point diagonal metrics, and feed the locally weighted PSD kernel. The
main loop alternates embedding and weights until the weight field stabilizes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .data import as_values
from .diffusion import AffinityMatrix, DiffusionEmbedding, _assemble, gaussian_kernel, markov_normalize, spectral_embed
from .survival import CohortError, CohortTooSmallError
from .tree import PartitionTree, build_bottomup, build_topdown

logger = logging.getLogger(__name__)


class CohortFunctional:
    """A functional F(E) defined only on index sets with at least c points.

    The wrapped callable receives a sorted integer index array and must be
    deterministic for a fixed subset.
    """

    def __init__(self, fn: Callable[[np.ndarray], float], min_cohort: int):
        if min_cohort < 1:
            raise ValueError(f"min_cohort must be >= 1, got {min_cohort}")
        self._fn = fn
        self.min_cohort = int(min_cohort)

    def __call__(self, indices) -> float:
        idx = np.asarray(indices, dtype=int)
        if idx.size < self.min_cohort:
            raise CohortTooSmallError(idx.size, self.min_cohort)
        return float(self._fn(np.sort(idx)))

    @classmethod
    def from_labels(cls, labels, min_cohort: int) -> "CohortFunctional":
        """Cohort mean of a stored per-point label."""
        arr = np.asarray(labels, dtype=float)
        return cls(lambda idx: float(arr[idx].mean()), min_cohort)


class Bin(NamedTuple):
    indices: np.ndarray
    lo: float
    hi: float


@dataclass(frozen=True)
class WeightField:
    """Folder-level and aggregated per-point feature weights.

    point_weights[i, y] = sum_l 2^{-alpha l} w^l_{folder(i,l)}(y); the induced
    diagonal metric entries are (point_weights + lam)^{-1}.
    """

    folder_weights: dict
    point_weights: np.ndarray
    alpha: float
    lam: float

    def __post_init__(self):
        w = np.asarray(self.point_weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("point weights must be finite and nonnegative")
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        object.__setattr__(self, "point_weights", w)

    def inv_diag(self) -> np.ndarray:
        """Diagonal entries of W_x, one row per point: (w + lam)^{-1}."""
        return 1.0 / (self.point_weights + self.lam)


@dataclass(frozen=True)
class NeighborhoodRule:
    kind: str  # "knn" or "radius"
    k: int | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.kind not in ("knn", "radius"):
            raise ValueError(f"unknown neighborhood kind {self.kind!r}")
        if self.kind == "knn" and (self.k is None or self.k < 1):
            raise ValueError("knn rule needs k >= 1")
        if self.kind == "radius" and (self.eps is None or self.eps <= 0):
            raise ValueError("radius rule needs eps > 0")


@dataclass(frozen=True)
class IterationDiagnostics:
    weight_change: float
    sigma: float
    lam: float
    top_eigenvalues: tuple


@dataclass(frozen=True)
class RegularizedMetric:
    """Stable function-weighted embedding with its weight field and tree."""

    embedding: DiffusionEmbedding
    weights: WeightField
    tree: PartitionTree
    neighborhood: NeighborhoodRule
    sigma: float
    tau: float
    converged: bool
    iterations: int
    history: tuple

    def distances_from(self, coords_row: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.embedding.coords - coords_row[None, :], axis=1)


@dataclass(frozen=True)
class MetricConfig:
    """Knobs of the alternating metric fit; None means the documented rule."""

    sigma0: float | None = None  # initial Gaussian bandwidth (median rule)
    sigma_weighted: float | None = None  # weighted-kernel bandwidth (median rule)
    tau: float = 0.0
    dim: int = 5
    time: float = 1.0
    alpha: float = 1.0
    lam: float | None = None  # 1e-3 * median nonzero weight, or 1e-6 if all zero
    k_bins: int = 3
    branching: int = 2
    min_folder: int | None = None  # max(10, ceil(n/256))
    tree_method: str = "topdown"
    bottomup_eps: float | None = None
    neighborhood: NeighborhoodRule | None = None  # knn with max(c, ceil(0.05 n))
    tol: float = 1e-3
    max_iters: int = 10
    seed: int = 0

    def resolve_min_folder(self, n: int) -> int:
        if self.min_folder is not None:
            return self.min_folder
        return max(10, int(np.ceil(n / 256)))

    def resolve_neighborhood(self, n: int, min_cohort: int) -> NeighborhoodRule:
        if self.neighborhood is not None:
            return self.neighborhood
        return NeighborhoodRule("knn", k=max(min_cohort, int(np.ceil(0.05 * n))))


def bin_feature(folder_points, X, feature: int, k_bins: int) -> list[Bin]:
    """Quantile-edge bins of one feature over a folder; empty bins dropped.

    Every folder point lands in exactly one bin; a constant feature gives a
    single bin.
    """
    pts = np.asarray(folder_points, dtype=int)
    if pts.size == 0:
        raise ValueError("folder is empty")
    if k_bins < 1:
        raise ValueError(f"k_bins must be >= 1, got {k_bins}")
    values = as_values(X)[pts, feature]
    edges = np.unique(np.quantile(values, np.arange(1, k_bins) / k_bins))
    assignment = np.searchsorted(edges, values, side="right")
    bins = []
    for b in np.unique(assignment):
        sel = pts[assignment == b]
        vals = values[assignment == b]
        bins.append(Bin(np.sort(sel), float(vals.min()), float(vals.max())))
    return bins


def _merge_small_bins(bins: list[Bin], c: int) -> list[Bin]:
    """Merge bins below the cohort minimum into the adjacent bin whose edge is
    closer, until all bins are valid or one remains."""
    bins = list(bins)
    while len(bins) > 1:
        small = [j for j, b in enumerate(bins) if b.indices.size < c]
        if not small:
            break
        j = small[0]
        if j == 0:
            target = 1
        elif j == len(bins) - 1:
            target = j - 1
        else:
            gap_left = bins[j].lo - bins[j - 1].hi
            gap_right = bins[j + 1].lo - bins[j].hi
            target = j - 1 if gap_left <= gap_right else j + 1
        a, b = sorted((j, target))
        merged = Bin(
            np.sort(np.concatenate([bins[a].indices, bins[b].indices])),
            min(bins[a].lo, bins[b].lo),
            max(bins[a].hi, bins[b].hi),
        )
        bins[a:b + 1] = [merged]
    return bins


def folder_weight(bins: list[Bin], F: CohortFunctional) -> float:
    """Size-weighted variance of F across the folder's bins.

    Bins below F's minimum cohort are merged first; bins where F is undefined
    are dropped. No valid bin left means weight 0.
    """
    merged = _merge_small_bins(bins, F.min_cohort)
    sizes, values = [], []
    for b in merged:
        if b.indices.size < F.min_cohort:
            continue
        try:
            values.append(F(b.indices))
            sizes.append(b.indices.size)
        except CohortError:
            continue
    if not sizes:
        logger.info("no valid bin after merging; folder weight set to 0")
        return 0.0
    sizes = np.asarray(sizes, dtype=float)
    # shifting by the first value keeps the (translation-invariant) weight
    # exactly zero for a constant functional
    values = np.asarray(values, dtype=float) - values[0]
    p = sizes / sizes.sum()
    fbar = float(p @ values)
    return float(p @ (values - fbar) ** 2)


def compute_folder_weights(tree: PartitionTree, X, F: CohortFunctional,
                           k_bins: int) -> dict:
    """Weights for every (level, folder, feature) with folder size >= c."""
    values = as_values(X)
    m = values.shape[1]
    out: dict = {}
    for level in range(1, tree.n_levels + 1):
        folders = tree.folders(level)
        if not any(len(f.points) >= F.min_cohort for f in folders):
            continue
        for fid, f in enumerate(folders):
            if len(f.points) < F.min_cohort:
                continue
            w = np.empty(m)
            for y in range(m):
                w[y] = folder_weight(bin_feature(f.points, values, y, k_bins), F)
            out[(level, fid)] = w
    return out


def resolve_lam(point_weights: np.ndarray, lam: float | None) -> float:
    if lam is not None:
        return lam
    nz = point_weights[point_weights > 0]
    if nz.size == 0:
        return 1e-6
    return 1e-3 * float(np.median(nz))


def aggregate_point_weights(tree: PartitionTree, folder_weights: dict, alpha: float,
                            lam: float | None = None) -> WeightField:
    """Per-point weights as the 2^{-alpha l} decayed sum over ancestor folders."""
    n = tree.n_points
    m = next(iter(folder_weights.values())).shape[0] if folder_weights else 0
    if m == 0:
        raise ValueError("no folder weights to aggregate")
    w = np.zeros((n, m))
    for (level, fid), farr in folder_weights.items():
        pts = tree.folders(level)[fid].points
        w[pts] += 2.0 ** (-alpha * level) * farr[None, :]
    return WeightField(dict(folder_weights), w, alpha, resolve_lam(w, lam))


def _median_quadratic_scale(values: np.ndarray, u: np.ndarray, subsample: int = 512) -> float:
    """Median nonzero weighted quadratic form on a subsample; bandwidth^2."""
    n = values.shape[0]
    idx = np.unique(np.linspace(0, n - 1, min(n, subsample)).astype(int))
    V, U = values[idx], u[idx]
    diff2 = (V[:, None, :] - V[None, :, :]) ** 2
    a = U[:, None, :] + U[None, :, :]
    q = (diff2 / a).sum(axis=2)
    nz = q[q > 0]
    return float(np.median(nz)) if nz.size else 1.0


def weighted_kernel(X, weights, sigma: float | None = None, tau: float = 0.0) -> AffinityMatrix:
    """Locally weighted PSD kernel

        exp(-(x_i-x_j)' (W_i + W_j)^{-1} (x_i-x_j) / sigma^2) / sqrt(det(W_i + W_j)),

    with diagonal W. Determinants go through log space. `weights` is a
    WeightField or a raw (n, m) array of W diagonals.
    """
    values = as_values(X)
    u = weights.inv_diag() if isinstance(weights, WeightField) else np.asarray(weights, dtype=float)
    if u.shape != values.shape:
        raise ValueError(f"weight diagonals {u.shape} do not match data {values.shape}")
    if np.any(u <= 0):
        raise ValueError("W_x diagonals must be positive")
    if sigma is None:
        sigma = float(np.sqrt(_median_quadratic_scale(values, u)))
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    n = values.shape[0]

    def block(i0, i1, j0):
        diff2 = (values[i0:i1, None, :] - values[None, j0:, :]) ** 2
        a = u[i0:i1, None, :] + u[None, j0:, :]
        np.divide(diff2, a, out=diff2)
        q = diff2.sum(axis=2)
        # determinant via products when safe, per-element logs otherwise
        det = np.prod(a, axis=2)
        if np.all(np.isfinite(det)) and det.min() > 0:
            logdet = np.log(det)
        else:
            logdet = np.log(a).sum(axis=2)
        return np.exp(-q / sigma**2 - 0.5 * logdet)

    K = _assemble(n, block, tau, symmetric_fill=True)
    return AffinityMatrix(K, float(sigma), float(tau))


def compute_weight_field(X, F: CohortFunctional, tree: PartitionTree,
                         config: MetricConfig) -> WeightField:
    folder_w = compute_folder_weights(tree, X, F, config.k_bins)
    if not folder_w:
        # no folder reached the cohort minimum; all-zero field
        values = as_values(X)
        w = np.zeros_like(values)
        return WeightField({}, w, config.alpha, resolve_lam(w, config.lam))
    return aggregate_point_weights(tree, folder_w, config.alpha, config.lam)


def _build_tree(emb: DiffusionEmbedding, config: MetricConfig, n: int, seed: int) -> PartitionTree:
    if config.tree_method == "bottomup":
        eps = config.bottomup_eps
        if eps is None:
            coords = emb.coords
            span = float(np.linalg.norm(coords.max(axis=0) - coords.min(axis=0)))
            eps = 0.05 * span if span > 0 else 1.0
        return build_bottomup(emb, eps)
    return build_topdown(emb, config.branching, config.resolve_min_folder(n), seed)


def fit_weighted_metric(X, F: CohortFunctional, config: MetricConfig = MetricConfig()) -> RegularizedMetric:
    """Alternate embedding and weight computation until the weights stabilize.

    Starts from the unweighted Gaussian diffusion embedding, then repeats
    weighted kernel -> embedding -> tree -> weights until the relative
    Frobenius change of the point-weight matrix drops below tol (or max_iters
    is hit, which flags the result non-converged but still returns it).
    """
    values = as_values(X)
    n = values.shape[0]
    if n < 2 * F.min_cohort:
        raise ValueError(
            f"need at least two valid cohorts: n={n} < 2c={2 * F.min_cohort}"
        )
    K0 = gaussian_kernel(values, sigma=config.sigma0, tau=config.tau)
    emb = spectral_embed(markov_normalize(K0), t=config.time, d=config.dim)
    tree = _build_tree(emb, config, n, config.seed)
    W = compute_weight_field(values, F, tree, config)

    history: list[IterationDiagnostics] = []
    converged = False
    iterations = 0
    sigma_used = K0.sigma
    for it in range(1, config.max_iters + 1):
        K = weighted_kernel(values, W, sigma=config.sigma_weighted, tau=config.tau)
        sigma_used = K.sigma
        emb = spectral_embed(markov_normalize(K), t=config.time, d=config.dim)
        tree = _build_tree(emb, config, n, config.seed + it)
        W_new = compute_weight_field(values, F, tree, config)
        prev_norm = float(np.linalg.norm(W.point_weights))
        diff_norm = float(np.linalg.norm(W_new.point_weights - W.point_weights))
        change = diff_norm / prev_norm if prev_norm > 0 else (0.0 if diff_norm == 0 else np.inf)
        history.append(
            IterationDiagnostics(
                weight_change=change,
                sigma=K.sigma,
                lam=W_new.lam,
                top_eigenvalues=tuple(np.round(emb.eigenvalues[:4], 6)),
            )
        )
        W = W_new
        iterations = it
        if change < config.tol:
            converged = True
            break
    if not converged:
        logger.warning(
            "weight iteration did not converge in %d iterations (last change %.3g)",
            config.max_iters, history[-1].weight_change if history else np.nan,
        )
    return RegularizedMetric(
        embedding=emb,
        weights=W,
        tree=tree,
        neighborhood=config.resolve_neighborhood(n, F.min_cohort),
        sigma=sigma_used,
        tau=config.tau,
        converged=converged,
        iterations=iterations,
        history=tuple(history),
    )


def neighborhood_indices(coords: np.ndarray, center: np.ndarray,
                         rule: NeighborhoodRule) -> np.ndarray:
    """Point indices inside the neighborhood of `center` (center's own row
    included when it is one of the coords)."""
    d = np.linalg.norm(coords - center[None, :], axis=1)
    if rule.kind == "radius":
        return np.where(d < rule.eps)[0]
    k = min(rule.k, coords.shape[0])
    idx = np.argpartition(d, k - 1)[:k]
    return idx[np.argsort(d[idx], kind="stable")]


def pointwise_estimate(metric: RegularizedMetric, F: CohortFunctional, i: int,
                       eps: float | None = None) -> float:
    """F over the embedding neighborhood of training point i.

    Radius eps overrides the metric's neighborhood rule; too-small
    neighborhoods raise with the achieved size.
    """
    coords = metric.embedding.coords
    rule = NeighborhoodRule("radius", eps=eps) if eps is not None else metric.neighborhood
    nbhd = neighborhood_indices(coords, coords[i], rule)
    if nbhd.size < F.min_cohort:
        raise CohortTooSmallError(nbhd.size, F.min_cohort)
    return F(nbhd)


@dataclass(frozen=True)
class MultiscaleDecomposition:
    scales: tuple
    coefficients: tuple
    coarse_value: float
    truncated_at: float | None  # first scale whose eps/2 neighborhood was too small


def multiscale_estimate(metric: RegularizedMetric, F: CohortFunctional, i: int,
                        scales) -> MultiscaleDecomposition:
    """Detail coefficients F(N^{eps/2}) - F(N^{eps}) per scale.

    Scales must be strictly decreasing; scales whose half-radius neighborhood
    drops below the cohort minimum truncate the decomposition and are
    reported.
    """
    scales = [float(s) for s in scales]
    if any(b >= a for a, b in zip(scales, scales[1:])) or not scales:
        raise ValueError("scales must be strictly decreasing and nonempty")
    coords = metric.embedding.coords
    center = coords[i]
    n_coarse = neighborhood_indices(coords, center, NeighborhoodRule("radius", eps=scales[0]))
    if n_coarse.size < F.min_cohort:
        raise CohortTooSmallError(n_coarse.size, F.min_cohort)
    coarse_value = F(n_coarse)
    used, coeffs = [], []
    truncated_at = None
    for eps in scales:
        half = neighborhood_indices(coords, center, NeighborhoodRule("radius", eps=eps / 2))
        if half.size < F.min_cohort:
            truncated_at = eps
            break
        full = neighborhood_indices(coords, center, NeighborhoodRule("radius", eps=eps))
        coeffs.append(F(half) - F(full))
        used.append(eps)
    return MultiscaleDecomposition(tuple(used), tuple(coeffs), coarse_value, truncated_at)
