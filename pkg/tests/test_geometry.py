"""Local frames, Procrustes, projection, PnP and projection file I/O tests."""

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from stentshape.errors import (
    DegenerateConfiguration,
    DegenerateFrame,
    DegenerateReference,
    ParseError,
    PointOnPrincipalPlane,
    ShapeMismatch,
)
from stentshape.geometry import (
    CameraProjection,
    RigidTransform,
    decompose_projection,
    instantiate_markers,
    load_projection,
    local_frame,
    procrustes_align,
    project,
    save_projection,
    solve_pnp,
)


def random_rotation(rng):
    q = rng.normal(size=4)
    return Rotation.from_quat(q / np.linalg.norm(q)).as_matrix()


def random_markers(rng, scale=10.0):
    return rng.normal(size=(3, 5)) * scale


@pytest.fixture
def camera():
    K = np.array([[1000.0, 0.0, 0.0], [0.0, 1000.0, 0.0], [0.0, 0.0, 1.0]])
    Rt = np.column_stack([np.eye(3), [0.0, 0.0, 100.0]])
    return CameraProjection(P=K @ Rt)


class TestRigidTransform:
    def test_apply_inverse_round_trip(self):
        rng = np.random.default_rng(0)
        T = RigidTransform(R=random_rotation(rng), t=rng.normal(size=3))
        Y = random_markers(rng)
        assert np.allclose(T.inverse().apply(T.apply(Y)), Y, atol=1e-12)

    def test_compose_order(self):
        rng = np.random.default_rng(1)
        A = RigidTransform(R=random_rotation(rng), t=rng.normal(size=3))
        B = RigidTransform(R=random_rotation(rng), t=rng.normal(size=3))
        Y = random_markers(rng)
        assert np.allclose(A.compose(B).apply(Y), A.apply(B.apply(Y)), atol=1e-12)

    def test_identity(self):
        Y = random_markers(np.random.default_rng(2))
        assert np.array_equal(RigidTransform.identity().apply(Y), Y)


class TestLocalFrame:
    def test_round_trip(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            Y = random_markers(rng)
            T, Y_l = local_frame(Y)
            assert np.max(np.abs(T.apply(Y_l) - Y)) <= 1e-10

    def test_output_centered_and_right_handed(self):
        rng = np.random.default_rng(4)
        Y = random_markers(rng)
        T, Y_l = local_frame(Y)
        assert np.linalg.norm(Y_l.mean(axis=1)) <= 1e-10
        assert np.linalg.det(T.R) == pytest.approx(1.0, abs=1e-10)
        assert np.allclose(T.R.T @ T.R, np.eye(3), atol=1e-10)

    def test_canonical_configuration(self):
        # centroid at origin, marker 1 on +x, marker 2 in the xy-plane
        Y = np.array(
            [
                [4.0, 1.0, -2.0, -2.0, -1.0],
                [0.0, 2.0, 1.0, -1.0, -2.0],
                [0.0, 0.0, 1.0, -2.0, 1.0],
            ]
        )
        T, _ = local_frame(Y)
        assert np.allclose(T.R[:, 0], [1.0, 0.0, 0.0], atol=1e-12)

    def test_rotation_invariance_of_local_coordinates(self):
        rng = np.random.default_rng(5)
        Y = random_markers(rng)
        _, Y_l = local_frame(Y)
        motion = RigidTransform(R=random_rotation(rng), t=rng.normal(size=3) * 20)
        _, Y_l2 = local_frame(motion.apply(Y))
        assert np.allclose(Y_l, Y_l2, atol=1e-9)

    def test_degenerate_configuration_rejected(self):
        # markers 1 and 2 collinear with the centroid
        Y = np.array(
            [
                [2.0, -2.0, 1.0, -1.0, 0.0],
                [0.0, 0.0, 1.0, -1.0, 0.0],
                [0.0, 0.0, 1.0, 1.0, -2.0],
            ]
        )
        with pytest.raises(DegenerateFrame):
            local_frame(Y)


class TestProcrustes:
    def test_identity_case(self):
        Y = random_markers(np.random.default_rng(6))
        T, aligned = procrustes_align(Y, Y)
        assert np.allclose(T.R, np.eye(3), atol=1e-10)
        assert np.allclose(T.t, 0.0, atol=1e-10)
        assert np.allclose(aligned, Y, atol=1e-10)

    def test_recovery_over_1000_random_rigids(self):
        """Acceptance criterion 4: MDE <= 1e-9 and det(R) = +1 always."""
        rng = np.random.default_rng(7)
        for trial in range(1000):
            Y_ref = random_markers(rng)
            R0 = random_rotation(rng)
            if trial % 5 == 0:
                # mirror-inducing near-degenerate case: flatten to a thin slab
                Y_ref[2] *= 1e-4
            t0 = rng.normal(size=3) * 50
            Y_src = R0.T @ (Y_ref - t0[:, None])
            T, aligned = procrustes_align(Y_src, Y_ref)
            assert np.linalg.det(T.R) == pytest.approx(1.0, abs=1e-9)
            assert np.linalg.norm(aligned - Y_ref, axis=0).mean() <= 1e-9

    def test_reflection_guard(self):
        rng = np.random.default_rng(8)
        Y_ref = random_markers(rng)
        Y_src = Y_ref.copy()
        Y_src[0] = -Y_src[0]
        T, _ = procrustes_align(Y_src, Y_ref)
        assert np.linalg.det(T.R) > 0

    def test_premotion_invariance(self):
        rng = np.random.default_rng(9)
        Y_src = random_markers(rng)
        Y_ref = random_markers(rng)
        _, aligned = procrustes_align(Y_src, Y_ref)
        motion = RigidTransform(R=random_rotation(rng), t=rng.normal(size=3))
        _, aligned2 = procrustes_align(motion.apply(Y_src), Y_ref)
        assert np.linalg.norm(aligned - aligned2, axis=0).mean() <= 1e-9

    def test_optimality_spot_check(self):
        rng = np.random.default_rng(10)
        Y_src = random_markers(rng)
        Y_ref = random_markers(rng)
        _, aligned = procrustes_align(Y_src, Y_ref)
        best = ((aligned - Y_ref) ** 2).sum()
        for _ in range(100):
            Q = random_rotation(rng)
            c = rng.normal(size=3) * 5
            rival = ((Q @ Y_src + c[:, None] - Y_ref) ** 2).sum()
            assert best <= rival + 1e-9

    def test_degenerate_input_rejected(self):
        line = np.vstack([np.linspace(0, 4, 5), np.zeros(5), np.zeros(5)])
        with pytest.raises(DegenerateConfiguration):
            procrustes_align(line, line)


class TestProject:
    def test_canonical_pinhole(self):
        P = np.column_stack([np.eye(3), np.zeros(3)])
        out = project(P, np.array([[2.0], [4.0], [2.0]]))
        assert np.allclose(out, [[1.0], [2.0]])

    def test_principal_plane_rejected(self):
        P = np.column_stack([np.eye(3), np.zeros(3)])
        with pytest.raises(PointOnPrincipalPlane):
            project(P, np.array([[1.0], [1.0], [0.0]]))

    def test_matches_per_point_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            P = rng.normal(size=(3, 4))
            Y = rng.normal(size=(3, 6)) + 5.0
            out = project(P, Y)
            for j in range(Y.shape[1]):
                v = P @ np.append(Y[:, j], 1.0)
                assert np.allclose(out[:, j], v[:2] / v[2], atol=1e-10)

    def test_translation_gauge_invariance(self, camera):
        rng = np.random.default_rng(12)
        Y = random_markers(rng)
        shift = rng.normal(size=3) * 10
        P2 = camera.P.copy()
        P2[:, 3] -= camera.P[:, :3] @ shift
        assert np.allclose(project(camera, Y), project(P2, Y + shift[:, None]), atol=1e-9)


class TestDecomposeProjection:
    def test_round_trip(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            K = np.triu(rng.uniform(0.5, 2.0, size=(3, 3)))
            K[2, 2] = 1.0
            Rc = random_rotation(rng)
            tc = rng.normal(size=3)
            P = K @ np.column_stack([Rc, tc])
            K2, Rc2, tc2 = decompose_projection(P)
            assert np.allclose(K2, K, atol=1e-9)
            assert np.allclose(Rc2, Rc, atol=1e-9)
            assert np.allclose(tc2, tc, atol=1e-9)


class TestSolvePnp:
    def test_identity_pose(self, camera):
        rng = np.random.default_rng(14)
        Y = random_markers(rng)
        pose = solve_pnp(Y, project(camera, Y), camera)
        assert np.allclose(pose.R, np.eye(3), atol=1e-6)
        assert np.allclose(pose.t, 0.0, atol=1e-6)

    def test_noiseless_round_trip_500_trials(self, camera):
        """Acceptance criterion 5 recipe at reduced trial count (full count
        runs in the acceptance suite)."""
        rng = np.random.default_rng(15)
        for _ in range(50):
            Y = random_markers(rng, scale=8.0)
            pose_true = RigidTransform(
                R=random_rotation(rng), t=rng.normal(size=3) * np.array([5.0, 5.0, 20.0])
            )
            X = project(camera, pose_true.apply(Y))
            pose = solve_pnp(Y, X, camera)
            Y_hat = pose.apply(Y)
            assert np.linalg.norm(Y_hat - pose_true.apply(Y), axis=0).mean() <= 1e-5
            assert np.linalg.norm(project(camera, Y_hat) - X, axis=0).mean() <= 1e-6

    def test_noisy_observations_few_mm(self, camera):
        rng = np.random.default_rng(16)
        errors = []
        for _ in range(20):
            Y = random_markers(rng, scale=8.0)
            pose_true = RigidTransform(R=random_rotation(rng), t=rng.normal(size=3) * 5)
            X = project(camera, pose_true.apply(Y)) + rng.normal(0.0, 0.65, size=(2, 5))
            pose = solve_pnp(Y, X, camera)
            errors.append(np.linalg.norm(pose.apply(Y) - pose_true.apply(Y), axis=0).mean())
        assert np.mean(errors) < 5.0

    def test_coplanar_reference_rejected(self, camera):
        Y = random_markers(np.random.default_rng(17))
        Y[2] = 0.0
        with pytest.raises(DegenerateReference):
            solve_pnp(Y, np.zeros((2, 5)), camera)

    def test_shape_mismatch_rejected(self, camera):
        with pytest.raises(ShapeMismatch):
            solve_pnp(np.zeros((3, 5)), np.zeros((2, 4)), camera)


class TestInstantiateMarkers:
    def test_perfect_prediction_round_trip(self, camera):
        rng = np.random.default_rng(18)
        Y_f_g = random_markers(rng, scale=8.0)
        _, Y_f_l = local_frame(Y_f_g)
        Y_p_g = Y_f_g + rng.normal(size=(3, 5))
        _, Y_p_l = procrustes_align(Y_p_g, Y_f_l)
        X = project(camera, Y_p_g)
        Y_hat, _ = instantiate_markers(Y_p_l, Y_f_l, X, camera)
        assert np.linalg.norm(Y_hat - Y_p_g, axis=0).mean() <= 1e-5


class TestProjectionIO:
    def test_round_trip(self, camera, tmp_path):
        path = tmp_path / "proj.txt"
        save_projection(camera, path)
        loaded = load_projection(path)
        assert np.array_equal(loaded.P, camera.P)

    def test_comments_and_layout_tolerated(self, tmp_path):
        path = tmp_path / "proj.txt"
        path.write_text("# camera\n1 0 0 0\n0 1 0 0  # second row\n0 0 1 5\n")
        loaded = load_projection(path)
        assert loaded.P[2, 3] == 5.0

    def test_bad_token_names_line(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("1 0 0 0\n0 oops 0 0\n0 0 1 0\n")
        with pytest.raises(ParseError, match=":2:"):
            load_projection(path)

    def test_wrong_count_rejected(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("1 2 3\n")
        with pytest.raises(ParseError, match="12"):
            load_projection(path)

    def test_rank_deficient_matrix_rejected(self):
        with pytest.raises(ShapeMismatch):
            CameraProjection(P=np.zeros((3, 4)))
