"""Rigid-frame machinery: local frames, Procrustes alignment, projection, PnP.

Marker sets are 3x5 arrays, one column per marker (mm).  2D observations are
2x5 arrays in detector-plane units of the projection matrix.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.spatial.transform import Rotation

from .errors import (
    CoincidentMarkers,
    DegenerateConfiguration,
    DegenerateFrame,
    DegenerateReference,
    NoConvergence,
    ParseError,
    PointOnPrincipalPlane,
    ShapeMismatch,
)


@dataclass(frozen=True)
class RigidTransform:
    """Rotation R (3x3, det +1) and translation t (3,) in mm."""

    R: np.ndarray
    t: np.ndarray

    @classmethod
    def identity(cls):
        return cls(R=np.eye(3), t=np.zeros(3))

    def apply(self, points):
        """Apply to a 3xN point array."""
        points = np.asarray(points, dtype=float)
        return self.R @ points + self.t[:, None]

    def inverse(self):
        return RigidTransform(R=self.R.T, t=-self.R.T @ self.t)

    def compose(self, other):
        """Return the transform equivalent to applying `other` first, then self."""
        return RigidTransform(R=self.R @ other.R, t=self.R @ other.t + self.t)


@dataclass(frozen=True)
class CameraProjection:
    """A rank-3 3x4 projection matrix mapping homogeneous 3D to 2D."""

    P: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=float)
        if P.shape != (3, 4):
            raise ShapeMismatch(f"projection matrix must be 3x4, got {P.shape}")
        if np.linalg.matrix_rank(P) != 3:
            raise ShapeMismatch("projection matrix must have rank 3")
        object.__setattr__(self, "P", P)


def _as_markers(Y, name="marker set"):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != 3:
        raise ShapeMismatch(f"{name} must be 3xN, got {Y.shape}")
    return Y


def local_frame(Y_g):
    """Standardize a marker set into its local frame.

    The translation is the marker centroid; the rotation columns are built
    from centered marker 1, the cross product of centered markers 1 and 2,
    and their cross product.  Returns (transform, Y_local) such that
    Y_g = R @ Y_local + t.
    """
    Y_g = _as_markers(Y_g)
    t = Y_g.mean(axis=1)
    C = Y_g - t[:, None]
    v1 = C[:, 0]
    c2 = C[:, 1]
    if np.linalg.norm(v1) < 1e-9 or np.linalg.norm(c2) < 1e-9:
        raise CoincidentMarkers("marker 1 or 2 coincides with the centroid")
    v2 = np.cross(v1, c2)
    if np.linalg.norm(v2) < 1e-9:
        raise DegenerateFrame("markers 1 and 2 are collinear with the centroid")
    v3 = np.cross(v1, v2)
    R = np.column_stack([v1 / np.linalg.norm(v1), v2 / np.linalg.norm(v2), v3 / np.linalg.norm(v3)])
    Y_l = R.T @ C
    return RigidTransform(R=R, t=t), Y_l


def procrustes_align(Y_src, Y_ref):
    """Optimal rigid alignment of Y_src onto Y_ref (least-squares, SVD).

    Returns (transform, Y_aligned) with Y_aligned = R @ Y_src + t and
    det(R) = +1 guaranteed.  Raises DegenerateConfiguration when the rotation
    is not uniquely determined (near rank-1 cross-covariance).
    """
    Y_src = _as_markers(Y_src, "source set")
    Y_ref = _as_markers(Y_ref, "reference set")
    if Y_src.shape != Y_ref.shape:
        raise ShapeMismatch(f"point sets differ in shape: {Y_src.shape} vs {Y_ref.shape}")
    c_src = Y_src.mean(axis=1)
    c_ref = Y_ref.mean(axis=1)
    H = (Y_src - c_src[:, None]) @ (Y_ref - c_ref[:, None]).T
    U, s, Vt = np.linalg.svd(H)
    if s[0] < 1e-12 or s[1] < 1e-9 * s[0]:
        raise DegenerateConfiguration("cross-covariance is rank deficient; rotation ambiguous")
    V = Vt.T
    if np.linalg.det(V @ U.T) < 0:
        V = V.copy()
        V[:, -1] = -V[:, -1]
    R = V @ U.T
    t = c_ref - R @ c_src
    return RigidTransform(R=R, t=t), R @ Y_src + t[:, None]


def project(P, Y):
    """Pinhole projection of a 3xN point set with a 3x4 matrix.

    Raises PointOnPrincipalPlane when a homogeneous denominator vanishes.
    """
    if isinstance(P, CameraProjection):
        P = P.P
    P = np.asarray(P, dtype=float)
    Y = _as_markers(Y, "points")
    Yh = np.vstack([Y, np.ones((1, Y.shape[1]))])
    num = P[:2] @ Yh
    den = P[2] @ Yh
    if np.any(np.abs(den) < 1e-12):
        raise PointOnPrincipalPlane("point(s) on the principal plane of the projection")
    return num / den


def decompose_projection(P):
    """Factor P = K [Rc | tc] with K upper triangular, diag(K) > 0, det(Rc) = +1."""
    if isinstance(P, CameraProjection):
        P = P.P
    P = np.asarray(P, dtype=float)
    M = P[:, :3]
    if np.linalg.det(M) < 0:
        P = -P
        M = P[:, :3]
    K, Rc = scipy.linalg.rq(M)
    signs = np.sign(np.diag(K))
    signs[signs == 0] = 1.0
    K = K * signs[None, :]
    Rc = Rc * signs[:, None]
    tc = np.linalg.solve(K, P[:, 3])
    K = K / K[2, 2]
    return K, Rc, tc


def _check_reference(Y_ref):
    centered = Y_ref - Y_ref.mean(axis=1, keepdims=True)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[-1] <= 1e-6:
        raise DegenerateReference("reference markers are coplanar or collinear")


def solve_pnp(Y_ref, X_obs, P, max_iterations=200):
    """Recover the rigid pose mapping Y_ref to the camera so that its
    projection matches X_obs in least squares.

    EPnP-style initialization in the normalized camera followed by
    Levenberg-Marquardt refinement over an angle-axis parametrization.
    """
    import cv2

    Y_ref = _as_markers(Y_ref, "reference set")
    X_obs = np.asarray(X_obs, dtype=float)
    if X_obs.shape != (2, Y_ref.shape[1]):
        raise ShapeMismatch(f"observations must be 2x{Y_ref.shape[1]}, got {X_obs.shape}")
    _check_reference(Y_ref)
    if isinstance(P, CameraProjection):
        P = P.P
    P = np.asarray(P, dtype=float)
    K, Rc, tc = decompose_projection(P)

    ok, rvec, tvec = cv2.solvePnP(
        np.ascontiguousarray(Y_ref.T),
        np.ascontiguousarray(X_obs.T),
        K,
        None,
        flags=cv2.SOLVEPNP_EPNP,
    )
    if not ok:
        raise NoConvergence("PnP initialization failed")
    # camera-frame pose (R', t') back to world-frame pose via P = K [Rc | tc]
    R_cam = Rotation.from_rotvec(rvec.ravel()).as_matrix()
    R0 = Rc.T @ R_cam
    t0 = Rc.T @ (tvec.ravel() - tc)

    def residuals(q):
        R = Rotation.from_rotvec(q[:3]).as_matrix()
        proj = project(P, R @ Y_ref + q[3:, None])
        return (proj - X_obs).ravel()

    q0 = np.concatenate([Rotation.from_matrix(R0).as_rotvec(), t0])
    result = scipy.optimize.least_squares(
        residuals,
        q0,
        method="lm",
        xtol=1e-15,
        ftol=1e-15,
        gtol=1e-15,
        max_nfev=max_iterations * q0.size,
    )
    if result.status == 0:
        raise NoConvergence(
            f"PnP refinement hit the iteration cap (residual {np.linalg.norm(result.fun):.3g}, "
            f"{result.nfev} evaluations)"
        )
    R = Rotation.from_rotvec(result.x[:3]).as_matrix()
    return RigidTransform(R=R, t=result.x[3:])


def instantiate_markers(Y_p_l_pred, Y_f_l, X_obs, P):
    """Instantiate intra-operative 3D markers from a prediction and a 2D view.

    Aligns the predicted references onto the fully-deployed local markers,
    solves PnP against the observation and applies the recovered pose.
    Returns (instantiated 3x5 markers, pose).
    """
    _, Y_ref = procrustes_align(Y_p_l_pred, Y_f_l)
    pose = solve_pnp(Y_ref, X_obs, P)
    return pose.apply(Y_ref), pose


def load_projection(path):
    """Read a 3x4 projection matrix: 12 whitespace-separated numbers,
    row-major, '#' comment lines allowed."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0]
            for token in body.split():
                try:
                    values.append(float(token))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: expected a number, found {token!r}") from None
    if len(values) != 12:
        raise ParseError(f"{path}: expected 12 numbers for a 3x4 matrix, found {len(values)}")
    return CameraProjection(P=np.array(values).reshape(3, 4))


def save_projection(P, path):
    if isinstance(P, CameraProjection):
        P = P.P
    with open(path, "w") as fh:
        fh.write("# 3x4 projection matrix, row-major\n")
        for row in np.asarray(P, dtype=float):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
