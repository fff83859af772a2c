"""Parametric stent-segment meshes and the mesh/angle evaluation metrics.

A segment is a tube of stacked vertex rings: cylinder of radius r_fd when
fully deployed, cone from r_pd down to r_pc when partially deployed.  Every
vertex keeps the (theta deg, h mm) parameters that generated it; fenestrations
are rectangles in that parameter space.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyMesh, ResolutionOverflow, ShapeMismatch

FULLY_DEPLOYED = "fully-deployed"
PARTIALLY_DEPLOYED = "partially-deployed"

VERTEX_CAP = 10_000_000


@dataclass(frozen=True)
class StentSegmentSpec:
    """Segment geometry: radii in mm, gap width, height and cutout regions.

    fenestrations: list of (theta_center deg, h_center mm, theta_halfwidth deg,
    h_halfheight mm) rectangles in parameter space.
    """

    r_fd: float
    r_fc: float
    w_g: float
    height: float
    fenestrations: tuple = ()
    h_resolution: float = 0.1
    theta_resolution: float = 1.0

    def __post_init__(self):
        if not 0 < self.r_fc <= self.r_fd:
            raise ValueError(f"need 0 < r_fc <= r_fd, got r_fc={self.r_fc}, r_fd={self.r_fd}")
        if self.w_g < 0:
            raise ValueError(f"gap width must be >= 0, got {self.w_g}")
        if self.height <= 0:
            raise ValueError(f"height must be > 0, got {self.height}")
        if self.h_resolution <= 0 or self.theta_resolution <= 0:
            raise ValueError("resolutions must be positive")
        object.__setattr__(self, "fenestrations", tuple(tuple(f) for f in self.fenestrations))


@dataclass
class SegmentMesh:
    """Triangle mesh with per-vertex generating parameters.

    vertices: (V, 3) mm; params: (V, 2) = (theta deg, h mm); faces: (F, 3)
    vertex indices; ring_ids: (V,) ring index of each vertex.
    """

    vertices: np.ndarray
    params: np.ndarray
    faces: np.ndarray
    ring_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ring_ids is None:
            self.ring_ids = np.zeros(len(self.vertices), dtype=int)


def partial_diameters(r_fd, r_fc, w_g):
    """Deployed- and compressed-side radii of a partially-deployed segment:
    r_pd = r_fd, r_pc = min(r_fc + 2 w_g, r_fd)."""
    return r_fd, min(r_fc + 2.0 * w_g, r_fd)


def generate_segment_mesh(spec, state):
    """Generate the segment tube at the given deployment state.

    Rings at heights 0, h_resolution, ..., height; one vertex per
    theta_resolution step.  The partially-deployed radius interpolates
    linearly from r_pd at h = 0 to r_pc at h = height.  Fenestrations from
    the spec are cut out before returning.
    """
    if state not in (FULLY_DEPLOYED, PARTIALLY_DEPLOYED):
        raise ValueError(f"unknown deployment state {state!r}")
    n_rings = int(round(spec.height / spec.h_resolution)) + 1
    n_theta = int(round(360.0 / spec.theta_resolution))
    if n_rings * n_theta > VERTEX_CAP:
        raise ResolutionOverflow(f"{n_rings * n_theta} vertices exceed the cap of {VERTEX_CAP}")

    heights = np.linspace(0.0, spec.height, n_rings)
    thetas = np.arange(n_theta) * spec.theta_resolution
    if state == FULLY_DEPLOYED:
        radii = np.full(n_rings, spec.r_fd)
    else:
        r_pd, r_pc = partial_diameters(spec.r_fd, spec.r_fc, spec.w_g)
        radii = r_pd + (r_pc - r_pd) * heights / spec.height

    theta_grid = np.tile(thetas, n_rings)
    h_grid = np.repeat(heights, n_theta)
    r_grid = np.repeat(radii, n_theta)
    rad = np.deg2rad(theta_grid)
    vertices = np.column_stack([r_grid * np.cos(rad), r_grid * np.sin(rad), h_grid])
    params = np.column_stack([theta_grid, h_grid])
    ring_ids = np.repeat(np.arange(n_rings), n_theta)

    # two triangles per quad between neighbouring rings, wrapping in theta
    a = np.arange(n_theta)
    a_next = (a + 1) % n_theta
    base = np.arange(n_rings - 1)[:, None] * n_theta
    v00 = (base + a).ravel()
    v01 = (base + a_next).ravel()
    v10 = (base + n_theta + a).ravel()
    v11 = (base + n_theta + a_next).ravel()
    faces = np.concatenate(
        [np.column_stack([v00, v01, v11]), np.column_stack([v00, v11, v10])]
    )

    mesh = SegmentMesh(vertices=vertices, params=params, faces=faces, ring_ids=ring_ids)
    for region in spec.fenestrations:
        mesh = cut_fenestration(mesh, region)
    return mesh


def _wrapped_angle_diff(a, b):
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 360.0
    return np.minimum(d, 360.0 - d)


def cut_fenestration(mesh, region):
    """Remove vertices inside a (theta, h) rectangle and their incident faces.

    theta wraps mod 360; a zero-area region leaves the mesh unchanged.
    """
    theta_c, h_c, theta_hw, h_hh = region
    if theta_hw <= 0 or h_hh <= 0:
        return mesh
    inside = (_wrapped_angle_diff(mesh.params[:, 0], theta_c) <= theta_hw) & (
        np.abs(mesh.params[:, 1] - h_c) <= h_hh
    )
    if not inside.any():
        return mesh
    keep = ~inside
    remap = np.full(len(mesh.vertices), -1, dtype=int)
    remap[keep] = np.arange(int(keep.sum()))
    face_keep = keep[mesh.faces].all(axis=1)
    return SegmentMesh(
        vertices=mesh.vertices[keep],
        params=mesh.params[keep],
        faces=remap[mesh.faces[face_keep]],
        ring_ids=mesh.ring_ids[keep],
    )


def pose_mesh(mesh, markers_model, pose, markers_instantiated):
    """Apply a rigid pose to the mesh, then translate so the transformed model
    markers' centroid matches the instantiated markers' centroid."""
    markers_model = np.asarray(markers_model, dtype=float)
    markers_instantiated = np.asarray(markers_instantiated, dtype=float)
    moved_markers = pose.apply(markers_model)
    correction = markers_instantiated.mean(axis=1) - moved_markers.mean(axis=1)
    vertices = pose.apply(mesh.vertices.T).T + correction
    return SegmentMesh(
        vertices=vertices,
        params=mesh.params.copy(),
        faces=mesh.faces.copy(),
        ring_ids=mesh.ring_ids.copy(),
    )


def _point_triangle_distances(p, a, b, c):
    """Squared distances from point p (3,) to each triangle (a, b, c): (M, 3) arrays.

    Vectorized closest-point-on-triangle region tests (Ericson).
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = va + vb + vc
        v_in = vb / denom
        w_in = vc / denom

    closest = a + v_in[:, None] * ab + w_in[:, None] * ac  # interior (fallback)
    m = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    closest[m] = b[m] + w_bc[m, None] * (c - b)[m]
    m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    closest[m] = a[m] + w_ac[m, None] * ac[m]
    m = (d6 >= 0) & (d5 <= d6)
    closest[m] = c[m]
    m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    closest[m] = a[m] + v_ab[m, None] * ab[m]
    m = (d3 >= 0) & (d4 <= d3)
    closest[m] = b[m]
    m = (d1 <= 0) & (d2 <= 0)
    closest[m] = a[m]
    diff = closest - p
    return np.einsum("ij,ij->i", diff, diff)


class MeshDistance:
    """Exact accelerated point-to-mesh distance queries.

    A vertex k-d tree gives an upper bound (nearest vertex); any triangle that
    could beat it must have a vertex within that bound plus the longest edge,
    so only those candidates get the exact triangle test.
    """

    def __init__(self, mesh):
        if len(mesh.faces) == 0:
            raise EmptyMesh("mesh has no faces")
        self.mesh = mesh
        self._tree = cKDTree(mesh.vertices)
        edges = np.concatenate(
            [
                mesh.vertices[mesh.faces[:, 1]] - mesh.vertices[mesh.faces[:, 0]],
                mesh.vertices[mesh.faces[:, 2]] - mesh.vertices[mesh.faces[:, 1]],
                mesh.vertices[mesh.faces[:, 0]] - mesh.vertices[mesh.faces[:, 2]],
            ]
        )
        self._max_edge = float(np.sqrt((edges * edges).sum(axis=1).max()))
        # vertex -> incident triangle ids, CSR-style
        flat = mesh.faces.ravel()
        order = np.argsort(flat, kind="stable")
        self._incident = order // 3
        self._offsets = np.searchsorted(flat[order], np.arange(len(mesh.vertices) + 1))
        self._tri = (
            mesh.vertices[mesh.faces[:, 0]],
            mesh.vertices[mesh.faces[:, 1]],
            mesh.vertices[mesh.faces[:, 2]],
        )

    def _candidates(self, neighbor_vertices):
        parts = [
            self._incident[self._offsets[v] : self._offsets[v + 1]] for v in neighbor_vertices
        ]
        return np.unique(np.concatenate(parts))

    def query(self, points):
        """Distances from (Q, 3) points (or a single (3,) point) to the mesh."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        upper, _ = self._tree.query(points)
        radii = upper + self._max_edge + 1e-12
        a, b, c = self._tri
        out = np.empty(len(points))
        neighbor_lists = self._tree.query_ball_point(points, radii)
        for i, (p, neighbors) in enumerate(zip(points, neighbor_lists)):
            tri_ids = self._candidates(neighbors)
            d2 = _point_triangle_distances(p, a[tri_ids], b[tri_ids], c[tri_ids])
            out[i] = np.sqrt(d2.min())
        return out


def point_to_mesh_distance(point, mesh):
    """Unsigned minimum distance from one point to any triangle of the mesh."""
    point = np.asarray(point, dtype=float)
    if point.shape != (3,):
        raise ShapeMismatch(f"point must be a 3-vector, got {point.shape}")
    return float(MeshDistance(mesh).query(point)[0])


def mesh_distance_error(mesh_pred, mesh_gt):
    """Mean distance from predicted-mesh vertices to the ground-truth mesh."""
    if len(mesh_pred.vertices) == 0:
        raise EmptyMesh("predicted mesh has no vertices")
    return float(MeshDistance(mesh_gt).query(mesh_pred.vertices).mean())


def angular_error(markers_pred, markers_gt, mesh_gt):
    """Mean wrapped |delta theta| over markers, via each marker's nearest
    ground-truth mesh vertex."""
    markers_pred = np.asarray(markers_pred, dtype=float)
    markers_gt = np.asarray(markers_gt, dtype=float)
    if markers_pred.shape != markers_gt.shape:
        raise ShapeMismatch(f"marker sets differ: {markers_pred.shape} vs {markers_gt.shape}")
    if len(mesh_gt.vertices) == 0:
        raise EmptyMesh("ground-truth mesh has no vertices")
    tree = cKDTree(mesh_gt.vertices)
    _, idx_pred = tree.query(markers_pred.T)
    _, idx_gt = tree.query(markers_gt.T)
    theta_pred = mesh_gt.params[idx_pred, 0]
    theta_gt = mesh_gt.params[idx_gt, 0]
    return float(_wrapped_angle_diff(theta_pred, theta_gt).mean())


def save_mesh_obj(mesh, obj_path, params_path=None):
    """Write the mesh as Wavefront-style text ('v x y z' / 'f i j k', 1-based)
    plus an optional sidecar of per-vertex (theta, h) parameters."""
    with open(obj_path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
    if params_path is not None:
        with open(params_path, "w") as fh:
            fh.write("# per-vertex parameters: theta_deg h_mm\n")
            for theta, h in mesh.params:
                fh.write(f"{float(theta)!r} {float(h)!r}\n")
