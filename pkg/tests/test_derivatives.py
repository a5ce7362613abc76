import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from planeadjust.derivatives import (
    ENTRIES,
    EigenState,
    abc_derivatives,
    coefficient_derivatives,
    cross_pose_partials,
    lambda_gradient_block,
    lambda_hessian_block,
    m_partials_at_identity,
    mean_point_decomposition,
    own_pose_partials,
    plane_derivatives,
    surrogate_pair,
    surrogate_single,
)
from planeadjust.exceptions import IndexNotObserved, SamePoseIndex
from planeadjust.geometry import Pose, cgr_to_transform, characteristic_coeffs, smallest_eigenpair
from planeadjust.oracle import FdSpec, fd_gradient, fd_hessian, perturbed_cost, relative_error
from planeadjust.problem import PlaneAdjustProblem, TrackStats, accumulate_track, build_M

from conftest import perturbed, random_psd, small_scene


def recentered(problem, X):
    """Same problem with statistics moved to the global frame and identity poses."""
    tracks = []
    for t in problem.tracks:
        T = X[t.pose_id]
        tracks.append(TrackStats(t.plane_id, t.pose_id, t.N, T @ t.U @ T.T, T @ t.p))
    return PlaneAdjustProblem([Pose.identity()] * problem.pose_count, tracks, problem.plane_count)


def plane_lambda(problem, i):
    return lambda X: smallest_eigenpair(build_M(problem, i, X)).value


def shared_planes(problem, min_poses=2):
    return [b for b in problem.blocks if len(b.pose_ids) >= min_poses]


def entry_vector(M):
    return np.array([M[e] for e in ENTRIES])


def sym_m(x, Q, K):
    """M(x) = T Q T^T + T K + K^T T^T with T the 3x4 top of the CGR transform."""
    T = cgr_to_transform(x)[:3]
    M = T @ Q @ T.T + T @ K + K.T @ T.T
    return entry_vector(M)


def pair_m(x, Q_O):
    O = Q_O
    Tj = cgr_to_transform(x[:6])[:3]
    Tk = cgr_to_transform(x[6:])[:3]
    return entry_vector(Tj @ O @ Tk.T + Tk @ O.T @ Tj.T)


def _abc_pieces(rp, i):
    """Delta (P,6,3) and (H_a, H_b, H_c) (P,P,6,6) of plane i in re-centered problem ``rp``."""
    ids = rp.observations(i)
    M = build_M(rp, i).M
    Delta, Hs = {}, {}
    d1 = {}
    for j in ids:
        s = surrogate_single(rp, i, j)
        d1[j], d2 = own_pose_partials(s.Q, s.K)
        abc = abc_derivatives(M, d1[j], d2)
        Delta[j] = abc.Delta
        Hs[j, j] = (abc.H_a, abc.H_b, abc.H_c)
    for j in ids:
        for k in ids:
            if j != k:
                cross = cross_pose_partials(surrogate_pair(rp, i, j, k).O)
                abc = abc_derivatives(M, d1[j], cross, d1[k])
                Hs[j, k] = (abc.H_a, abc.H_b, abc.H_c)
    return M, ids, Delta, Hs


def test_eigen_state_invariants(rng):
    for _ in range(200):
        M = random_psd(rng, scale=rng.uniform(0.1, 1e3))
        s = EigenState.from_matrix(M)
        assert abs(s.cubic_residual) < 1e-9 * max(1.0, abs(np.trace(M)) ** 3)
        assert abs(s.phi * (s.kappa @ s.chi) - 1.0) < 1e-12
        np.testing.assert_array_equal(s.chi, [s.lam**2, s.lam, 1.0])


def test_eigen_state_degenerate_flag():
    assert EigenState.from_matrix(np.eye(3)).degenerate
    assert not EigenState.from_matrix(np.diag([3.0, 2.0, 1.0])).degenerate


def test_mean_point_two_pose_plane_has_empty_remainder():
    problem, gt, _ = small_scene(3, poses=2, planes=4, pts=40, visibility=1.0)
    for b in problem.blocks:
        j, k = b.pose_ids
        np.testing.assert_array_equal(
            mean_point_decomposition(problem, b.plane_id, j, k).c_jk, 0.0
        )


def test_mean_point_identity_poses():
    problem, gt, _ = small_scene(4)
    rp = recentered(problem, problem.pose_matrices())
    b = shared_planes(rp)[0]
    j, k = b.pose_ids[:2]
    d = mean_point_decomposition(rp, b.plane_id, j, k)
    pbar = (b.p.sum(axis=0) / b.n_points)[:3]
    np.testing.assert_allclose(d.q_j[:3] + d.q_k[:3] + d.c_jk, pbar, atol=1e-12)


def test_mean_point_reconstruction_four_poses():
    problem, gt, _ = small_scene(7, poses=4, planes=5, pts=30, visibility=1.0)
    X = perturbed(gt, 3, 1)
    for b in problem.blocks:
        ids = b.pose_ids
        j, k = ids[0], ids[-1]
        d = mean_point_decomposition(problem, b.plane_id, j, k, X)
        centroid = sum(X[n, :3] @ b.p[r] for r, n in enumerate(ids)) / b.n_points
        recon = X[j, :3] @ d.q_j + X[k, :3] @ d.q_k + d.c_jk
        assert np.linalg.norm(recon - centroid) <= 1e-12 * max(1.0, np.linalg.norm(centroid))
        np.testing.assert_allclose(d.c_j, X[k, :3] @ d.q_k + d.c_jk)


def test_surrogate_errors():
    problem, _, _ = small_scene(3, poses=4, planes=6, pts=40)
    b = next(b for b in shared_planes(problem) if len(b.pose_ids) < problem.pose_count)
    j = b.pose_ids[0]
    with pytest.raises(SamePoseIndex):
        surrogate_pair(problem, b.plane_id, j, j)
    unseen = next(n for n in range(problem.pose_count) if n not in b.pose_ids)
    with pytest.raises(IndexNotObserved):
        surrogate_single(problem, b.plane_id, unseen)
    with pytest.raises(IndexNotObserved):
        surrogate_pair(problem, b.plane_id, j, unseen)


def test_surrogate_single_pose_centered(rng):
    pts = rng.normal(size=(30, 3)) * [2, 1, 0.05]
    pts -= pts.mean(axis=0)
    t = accumulate_track(0, 0, pts)
    problem = PlaneAdjustProblem([Pose.identity()], [t])
    s = surrogate_single(problem, 0, 0)
    np.testing.assert_allclose(s.K, 0.0, atol=1e-12)
    np.testing.assert_allclose(s.Q[:3, :3], build_M(problem, 0).M, atol=1e-10)


def test_surrogate_zero_mean_point_gives_plain_moments():
    # p~ = [0, 0, 0, N] makes q = e4 / 1 and c = 0, so K = 0
    U = np.diag([2.0, 1.0, 0.5, 4.0])
    t0 = TrackStats(0, 0, 4, U, [0, 0, 0, 4.0])
    t1 = TrackStats(0, 1, 4, U, [0, 0, 0, 4.0])
    problem = PlaneAdjustProblem([Pose.identity()] * 2, [t0, t1])
    s = surrogate_single(problem, 0, 0)
    q = np.array([0, 0, 0, 0.5])
    np.testing.assert_allclose(s.Q, U - 8 * np.outer(q, q))
    np.testing.assert_allclose(s.K, -8 * np.outer(q, [0, 0, 0]))


def test_surrogate_single_tracks_build_M():
    problem, gt, _ = small_scene(9, poses=3, planes=5, pts=50, visibility=1.0)
    X = perturbed(gt, 2, 4)
    rng = np.random.default_rng(1)
    for b in problem.blocks:
        j = b.pose_ids[0]
        s = surrogate_single(problem, b.plane_id, j, X)
        offsets = []
        for _ in range(10):
            Y = X.copy()
            Y[j] = cgr_to_transform(rng.normal(scale=0.3, size=6)) @ X[j]
            T = Y[j, :3]
            recon = T @ s.Q @ T.T + T @ s.K + s.K.T @ T.T
            offsets.append(build_M(problem, b.plane_id, Y).M - recon)
        scale = np.linalg.norm(build_M(problem, b.plane_id, X).M)
        for off in offsets[1:]:
            assert np.linalg.norm(off - offsets[0]) <= 1e-10 * scale


def test_surrogate_pair_bilinear_part_by_mixed_fd():
    problem, gt, _ = small_scene(9, poses=3, planes=5, pts=50, visibility=1.0)
    X = perturbed(gt, 2, 4)
    rp = recentered(problem, X)
    h = 1e-4
    for b in shared_planes(rp):
        j, k = b.pose_ids[:2]
        expected = cross_pose_partials(surrogate_pair(rp, b.plane_id, j, k).O)

        def m_of(dj, dk):
            Y = np.array([np.eye(4)] * rp.pose_count)
            Y[j] = cgr_to_transform(dj)
            Y[k] = cgr_to_transform(dk)
            return entry_vector(build_M(rp, b.plane_id, Y).M)

        E = np.eye(6) * h
        fd = np.zeros((6, 6, 6))
        for m in range(6):
            for n in range(6):
                fd[m, n] = (m_of(E[m], E[n]) - m_of(E[m], -E[n]) - m_of(-E[m], E[n])
                            + m_of(-E[m], -E[n])) / (4 * h * h)
        assert relative_error(expected, fd) < 1e-6


def test_partials_vanish_for_zero_inputs():
    p = m_partials_at_identity(np.zeros((4, 4)), np.zeros((4, 3)), np.zeros((4, 4)))
    assert not p.first.any() and not p.second.any() and not p.cross.any()


def test_partials_match_fd_of_symbolic_entries(rng):
    for _ in range(20):
        A = rng.normal(size=(4, 4))
        Q = A + A.T
        K = rng.normal(size=(4, 3))
        O = rng.normal(size=(4, 4))
        p = m_partials_at_identity(Q, K, O)
        f = lambda x: sym_m(x, Q, K)  # noqa: E731
        h = 1e-5
        E = np.eye(6) * h
        d1 = np.array([(f(E[m]) - f(-E[m])) / (2 * h) for m in range(6)])
        assert relative_error(p.first, d1) < 1e-6
        h2 = 1e-4
        E2 = np.eye(6) * h2
        d2 = np.array([[
            (f(E2[m] + E2[n]) - f(E2[m] - E2[n]) - f(-E2[m] + E2[n]) + f(-E2[m] - E2[n]))
            / (4 * h2 * h2) for n in range(6)] for m in range(6)])
        assert relative_error(p.second, d2) < 1e-6
        g = lambda x: pair_m(x, O)  # noqa: E731
        E12 = np.eye(12) * h2
        cross = np.array([[
            (g(E12[m] + E12[6 + n]) - g(E12[m] - E12[6 + n]) - g(-E12[m] + E12[6 + n])
             + g(-E12[m] - E12[6 + n])) / (4 * h2 * h2) for n in range(6)] for m in range(6)])
        assert relative_error(p.cross, cross) < 1e-6


def test_abc_derivative_of_b_for_diagonal_matrix():
    M = np.diag([3.0, 2.0, 5.0])
    d1 = np.zeros((6, 6))
    d1[:, 0] = np.arange(1, 7)  # only m11 moves
    abc = abc_derivatives(M, d1, np.zeros((6, 6, 6)))
    np.testing.assert_allclose(abc.beta, -(2.0 + 5.0) * d1[:, 0])
    np.testing.assert_allclose(abc.alpha, d1[:, 0])


def test_coefficient_derivatives_match_fd(rng):
    M = random_psd(rng)
    grads, hessians = coefficient_derivatives(M)
    h = 1e-6
    for e, (r, c) in enumerate(ENTRIES):
        D = np.zeros((3, 3))
        D[r, c] = D[c, r] = h
        fd = (np.array(characteristic_coeffs(M + D)) - np.array(characteristic_coeffs(M - D))) / (2 * h)
        np.testing.assert_allclose(grads[:, e], fd, rtol=1e-6, atol=1e-8)
    assert all(np.allclose(H, H.T) for H in hessians)


def test_abc_derivatives_match_fd():
    problem, gt, _ = small_scene(12, poses=3, planes=5, pts=60, visibility=1.0)
    X = perturbed(gt, 2, 5)
    rp = recentered(problem, X)
    ident = np.array([np.eye(4)] * rp.pose_count)
    for b in shared_planes(rp):
        i = b.plane_id
        M, ids, Delta, Hs = _abc_pieces(rp, i)
        for j in ids:
            f = perturbed_cost(lambda Y: np.array(characteristic_coeffs(build_M(rp, i, Y).M)), ident, [j])
            fd = np.array([fd_gradient(lambda x: f(x)[c], np.zeros(6)) for c in range(3)]).T
            assert relative_error(Delta[j], fd) < 1e-6
            for c, H in enumerate(Hs[j, j]):
                assert np.max(np.abs(H - H.T)) <= 1e-12 * max(1.0, np.abs(H).max())
                fdh = fd_hessian(lambda x: f(x)[c], np.zeros(6), FdSpec(step=1e-4))
                assert relative_error(H, fdh) < 1e-5


def test_gradient_block_zero_delta():
    s = EigenState.from_matrix(np.diag([3.0, 2.0, 1.0]))
    np.testing.assert_array_equal(lambda_gradient_block(s, np.zeros((6, 3))), 0.0)


def test_hessian_block_zero_inputs():
    s = EigenState.from_matrix(np.diag([3.0, 2.0, 1.0]))
    z6, z = np.zeros(6), np.zeros((6, 6))
    H = lambda_hessian_block(s, np.zeros((6, 3)), np.zeros((6, 3)), z, z, z, z6, z6)
    np.testing.assert_array_equal(H, 0.0)


def test_gradient_zero_at_noise_free_optimum():
    problem, gt, _ = small_scene(5, poses=4, planes=6, pts=50, noise=0.0)
    rp = recentered(problem, problem.pose_matrices())
    for b in rp.blocks:
        res = plane_derivatives(b)
        assert np.abs(res.gradient).max() < 1e-9


def _fd_plane_check(problem, X, grad_tol=1e-6, hess_tol=1e-5):
    rp = recentered(problem, X)
    ident = np.array([np.eye(4)] * rp.pose_count)
    for b in rp.blocks:
        res = plane_derivatives(b)
        assert not res.state.degenerate
        f = perturbed_cost(plane_lambda(rp, b.plane_id), ident, b.pose_ids)
        x0 = np.zeros(6 * len(b.pose_ids))
        g = fd_gradient(f, x0, FdSpec(step=1e-5))
        assert relative_error(res.gradient.ravel(), g) < grad_tol
        P = len(b.pose_ids)
        H = res.hessian.transpose(0, 2, 1, 3).reshape(6 * P, 6 * P)
        Hfd = fd_hessian(f, x0, FdSpec(step=1e-4))
        assert relative_error(H, Hfd) < hess_tol
        for r in range(P):
            for c in range(P):
                blk, tr = res.hessian[r, c], res.hessian[c, r].T
                assert np.max(np.abs(blk - tr)) <= 1e-10 * max(1.0, np.abs(H).max())
        assert res.asymmetry < 1e-8 * max(1.0, np.abs(H).max())


def test_lambda_derivatives_two_pose_toy():
    problem, gt, _ = small_scene(21, poses=2, planes=3, pts=40, visibility=1.0)
    _fd_plane_check(problem, perturbed(gt, 2, 3))


@pytest.mark.parametrize("seed", range(6))
def test_lambda_derivatives_random_problems(seed):
    problem, gt, _ = small_scene(100 + seed, poses=2 + seed % 4, planes=3 + seed % 4)
    _fd_plane_check(problem, perturbed(gt, 1 + seed % 4, seed))


def scalar_lemma2(state, Delta_j, Delta_k, H_a, H_b, H_c):
    """Second derivative of the smallest cubic root by implicit differentiation, entrywise."""
    lam, a, b = state.lam, state.a, state.b
    F_lam = -3 * lam**2 + 2 * a * lam + b
    F_lamlam = -6 * lam + 2 * a
    out = np.zeros((6, 6))
    for m in range(6):
        al_m, be_m, ga_m = Delta_j[m]
        g_m = -(lam**2 * al_m + lam * be_m + ga_m) / F_lam
        for n in range(6):
            al_n, be_n, ga_n = Delta_k[n]
            g_n = -(lam**2 * al_n + lam * be_n + ga_n) / F_lam
            F_mn = lam**2 * H_a[m, n] + lam * H_b[m, n] + H_c[m, n]
            F_lm = 2 * lam * al_m + be_m
            F_ln = 2 * lam * al_n + be_n
            out[m, n] = -(F_lamlam * g_m * g_n + F_lm * g_n + F_ln * g_m + F_mn) / F_lam
    return out


def test_theorem_blocks_match_scalar_implicit_path():
    for seed in range(4):
        problem, gt, _ = small_scene(40 + seed, poses=5, planes=6)
        rp = recentered(problem, perturbed(gt, 2, seed))
        for b in shared_planes(rp):
            i = b.plane_id
            M, ids, Delta, Hs = _abc_pieces(rp, i)
            state = EigenState.from_matrix(M)
            g = {j: lambda_gradient_block(state, Delta[j]) for j in ids}
            for (j, k), (Ha, Hb, Hc) in Hs.items():
                H = lambda_hessian_block(state, Delta[j], Delta[k], Ha, Hb, Hc, g[j], g[k])
                ref = scalar_lemma2(state, Delta[j], Delta[k], Ha, Hb, Hc)
                assert np.max(np.abs(H - ref)) <= 1e-12 * max(1.0, np.abs(ref).max())


def test_degenerate_plane_is_skipped():
    # two identical orthogonal-spread tracks give a repeated smallest eigenvalue
    U = np.diag([1.0, 1.0, 1.0, 3.0])
    tracks = [TrackStats(0, j, 3, U, [0, 0, 0, 3.0]) for j in range(2)]
    problem = PlaneAdjustProblem([Pose.identity()] * 2, tracks)
    res = plane_derivatives(problem.blocks[0])
    assert res.state.degenerate
    assert not res.gradient.any() and not res.hessian.any()


def test_rotation_of_frame_rotates_gradient():
    # derivatives are taken in the global frame: rotating every pose by G keeps lam
    problem, gt, _ = small_scene(13, poses=3, planes=4, pts=40, visibility=1.0)
    X = perturbed(gt, 2, 0)
    G = np.eye(4)
    G[:3, :3] = Rotation.random(random_state=3).as_matrix()
    a = plane_derivatives(recentered(problem, X).blocks[0])
    b = plane_derivatives(recentered(problem, G @ X).blocks[0])
    assert b.state.lam == pytest.approx(a.state.lam, rel=1e-9)
    assert np.linalg.norm(b.gradient) == pytest.approx(np.linalg.norm(a.gradient), rel=1e-6)
