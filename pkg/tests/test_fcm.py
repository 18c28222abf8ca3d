import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potassium_anfis.fcm import (
    FcmConfig,
    FcmResult,
    clusters_to_mfs,
    fcm_cluster,
    update_memberships,
)

BLOBS = np.array([0.0, 0.1, 9.9, 10.0])


def hand_fcm(points, centers, m=2.0, tol=1e-12, max_iter=1000):
    """Plain-loop FCM used as an oracle for the vectorised implementation."""
    c = len(centers)
    for _ in range(max_iter):
        U = []
        for x in points:
            d = [abs(x - v) for v in centers]
            if 0.0 in d:
                U.append([1.0 if di == 0 else 0.0 for di in d])
            else:
                U.append([1.0 / sum((d[k] / d[j]) ** (2 / (m - 1)) for j in range(c)) for k in range(c)])
        new = [
            sum(U[i][k] ** m * points[i] for i in range(len(points)))
            / sum(U[i][k] ** m for i in range(len(points)))
            for k in range(c)
        ]
        done = max(abs(a - b) for a, b in zip(new, centers)) < tol
        centers = new
        if done:
            break
    return centers, U


def test_two_blobs_match_hand_iteration():
    res = fcm_cluster(BLOBS, FcmConfig(c=2, tol=1e-12, max_iter=1000))
    centers = np.sort(res.centers.ravel())
    oracle, _ = hand_fcm(list(BLOBS), [0.0, 10.0])
    # Frozen from the hand iteration above.
    np.testing.assert_allclose(oracle, [0.04999998067441665, 9.950000019325584], rtol=1e-12)
    np.testing.assert_allclose(centers, oracle, atol=1e-9)
    assert abs(centers[0] - 0.05) < 0.1 and abs(centers[1] - 9.95) < 0.1
    own = res.U[np.arange(4), [int(np.argmin(np.abs(res.centers.ravel() - x))) for x in BLOBS]]
    assert np.all(own > 0.95)


def test_two_blobs_at_default_tolerance():
    res = fcm_cluster(BLOBS, FcmConfig(c=2))
    np.testing.assert_allclose(np.sort(res.centers.ravel()), [0.05, 9.95], atol=0.1)
    assert res.converged


def test_equidistant_point_splits_evenly():
    U = update_memberships(np.array([[0.0]]), np.array([[-1.0], [1.0]]), 2.0)
    assert U.tolist() == [[0.5, 0.5]]


def test_point_on_centre_gets_full_membership():
    U = update_memberships(np.array([[1.0], [0.3]]), np.array([[-1.0], [1.0]]), 2.0)
    assert U[0].tolist() == [0.0, 1.0]
    assert U[1].sum() == pytest.approx(1.0, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(8, 60), dims=st.integers(1, 3), c=st.integers(2, 4))
def test_partition_and_objective_invariants(seed, n, dims, c):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, dims)) * rng.uniform(0.1, 50)
    res = fcm_cluster(X, FcmConfig(c=c, seed=seed % 1000))
    assert np.all((res.U >= 0) & (res.U <= 1))
    np.testing.assert_allclose(res.U.sum(axis=1), 1.0, atol=1e-12)
    hist = np.array(res.objective_history)
    assert len(hist) == res.iterations
    assert np.all(np.diff(hist) <= 1e-9 * max(1.0, hist[0]))


def test_default_hyperparameters_report_iterations():
    rng = np.random.default_rng(0)
    X = rng.normal(45, 25, size=38)
    res = fcm_cluster(X, FcmConfig(c=3, m=2.0, tol=1e-5, max_iter=100))
    assert 1 <= res.iterations <= 100
    assert np.all(np.diff(res.objective_history) <= 1e-9)


def test_relabelling_permutes_only():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(40, 2))
    init = X[[3, 17, 29]]
    perm = [2, 0, 1]
    cfg = FcmConfig(c=3, tol=1e-8, max_iter=500)
    a = fcm_cluster(X, cfg, init_centers=init)
    b = fcm_cluster(X, cfg, init_centers=init[perm])
    np.testing.assert_allclose(b.centers, a.centers[perm], atol=1e-12)
    np.testing.assert_allclose(b.U, a.U[:, perm], atol=1e-12)
    np.testing.assert_allclose(b.objective_history, a.objective_history, rtol=1e-12)


def test_seeded_runs_are_bit_reproducible():
    X = np.random.default_rng(9).normal(size=(50, 1))
    a = fcm_cluster(X, FcmConfig(seed=4))
    b = fcm_cluster(X, FcmConfig(seed=4))
    assert np.array_equal(a.centers, b.centers)
    assert np.array_equal(a.U, b.U)
    assert a.objective_history == b.objective_history


def test_rejects_degenerate_inputs():
    with pytest.raises(ValueError, match="more points than clusters"):
        fcm_cluster(np.arange(3.0), FcmConfig(c=3))
    with pytest.raises(ValueError, match="distinct"):
        fcm_cluster(np.ones(10), FcmConfig(c=2))
    with pytest.raises(ValueError):
        FcmConfig(m=1.0)


def test_single_cluster_symmetric_pair():
    data = np.array([[-1.0], [1.0]])
    res = FcmResult(centers=np.array([[0.0]]), U=np.ones((2, 1)))
    (mf,), = clusters_to_mfs(res, data)
    assert mf.mean == 0.0
    assert mf.sigma == 1.0


def test_blob_gaussians_match_weighted_spread():
    res = fcm_cluster(BLOBS, FcmConfig(c=2))
    mfs = clusters_to_mfs(res, BLOBS)
    for k, (mf,) in enumerate(mfs):
        w = res.U[:, k] ** 2
        mean = res.centers[k, 0]
        sigma = np.sqrt(np.sum(w * (BLOBS - mean) ** 2) / np.sum(w))
        assert mf.mean == mean
        assert mf.sigma == pytest.approx(sigma, rel=1e-12)
    peaks = sorted(mf.mean for (mf,) in mfs)
    assert abs(peaks[0] - 0.05) < 0.1 and abs(peaks[1] - 9.95) < 0.1


def test_collapsed_cluster_uses_sigma_floor():
    data = np.array([[2.0], [2.0], [2.0], [8.0]])
    U = np.array([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    res = FcmResult(centers=np.array([[2.0], [8.0]]), U=U)
    (collapsed,), (other,) = clusters_to_mfs(res, data)
    assert collapsed.sigma == pytest.approx(1e-6 * 6.0)
    assert collapsed.sigma > 0
