import numpy as np
import scipy.sparse as sp

import cohortmetric.diffusion as dxf
from cohortmetric.diffusion import gaussian_kernel, markov_normalize, spectral_embed
from cohortmetric.metric import weighted_kernel


def test_sparse_knn_kernel_matches_dense_when_k_covers_all(monkeypatch):
    # force the sparse assembly path with a neighbor budget covering every
    # pair: the sparse kernel must equal the dense one entry for entry
    rng = np.random.default_rng(0)
    X = rng.normal(size=(90, 4))
    dense = gaussian_kernel(X, sigma=1.0)
    monkeypatch.setattr(dxf, "DENSE_LIMIT", 50)
    monkeypatch.setattr(dxf, "SPARSE_KNN", 95)
    sparse = gaussian_kernel(X, sigma=1.0)
    assert sp.issparse(sparse.entries)
    np.testing.assert_allclose(sparse.toarray(), dense.toarray(), atol=1e-15)


def test_sparse_pipeline_embeds(monkeypatch):
    monkeypatch.setattr(dxf, "DENSE_LIMIT", 50)
    rng = np.random.default_rng(1)
    X = rng.normal(size=(120, 3))
    K = gaussian_kernel(X, sigma=0.8)
    assert sp.issparse(K.entries)
    # symmetric with positive diagonal after truncation to nearest neighbors
    asym = abs(K.entries - K.entries.T)
    assert asym.max() == 0.0
    assert K.entries.diagonal().min() > 0
    op = markov_normalize(K)
    np.testing.assert_allclose(np.asarray(op.P.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    emb = spectral_embed(op, t=1.0, d=4)
    assert emb.coords.shape == (120, 4)
    assert abs(emb.eigenvalues[0] - 1.0) <= 1e-8


def test_sparse_weighted_kernel(monkeypatch):
    rng = np.random.default_rng(2)
    X = rng.normal(size=(80, 5))
    u = rng.uniform(0.2, 2.0, size=(80, 5))
    dense = weighted_kernel(X, u, sigma=1.2)
    monkeypatch.setattr(dxf, "DENSE_LIMIT", 40)
    monkeypatch.setattr(dxf, "SPARSE_KNN", 85)
    sparse = weighted_kernel(X, u, sigma=1.2)
    assert sp.issparse(sparse.entries)
    np.testing.assert_allclose(sparse.toarray(), dense.toarray(), atol=1e-15)
