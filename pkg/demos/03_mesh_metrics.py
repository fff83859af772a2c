"""Parametric stent-segment meshes, fenestrations and the shape metrics.

Builds the fully-deployed cylinder and the partially-deployed cone for the
same segment, cuts a fenestration, poses the mesh and evaluates the
point-to-mesh and angular error metrics.
"""

import numpy as np
from scipy.spatial.transform import Rotation

from stentshape.dataset import surface_markers
from stentshape.geometry import RigidTransform
from stentshape.mesh import (
    FULLY_DEPLOYED,
    PARTIALLY_DEPLOYED,
    StentSegmentSpec,
    angular_error,
    generate_segment_mesh,
    mesh_distance_error,
    partial_diameters,
    pose_mesh,
)

spec = StentSegmentSpec(
    r_fd=15.0,
    r_fc=4.0,
    w_g=0.5,
    height=10.0,
    h_resolution=0.5,
    theta_resolution=3.0,
    fenestrations=((90.0, 5.0, 20.0, 2.0),),
)
r_pd, r_pc = partial_diameters(spec.r_fd, spec.r_fc, spec.w_g)
print(f"Segment: deployed radius {spec.r_fd} mm, catheter radius {spec.r_fc} mm, gap {spec.w_g} mm")
print(f"Partially-deployed cone: {r_pd} mm at the deployed end down to {r_pc} mm")

cylinder = generate_segment_mesh(spec, FULLY_DEPLOYED)
cone = generate_segment_mesh(spec, PARTIALLY_DEPLOYED)
print(f"\nCylinder mesh: {len(cylinder.vertices)} vertices, {len(cylinder.faces)} faces")
print(f"Cone mesh:     {len(cone.vertices)} vertices, {len(cone.faces)} faces")
print("(the fenestration at theta=90 deg removed a rectangle of both)")

placements = np.array([[0, 2.0], [72, 8.0], [144, 4.0], [216, 9.0], [288, 3.0]], dtype=float)
markers = surface_markers(spec, placements, PARTIALLY_DEPLOYED)

# pose the cone somewhere else and measure how far it drifted
pose = RigidTransform(
    R=Rotation.from_euler("z", 12.0, degrees=True).as_matrix(), t=np.array([1.0, -0.5, 0.8])
)
moved = pose_mesh(cone, markers, pose, pose.apply(markers))
print(f"\nMesh distance, posed cone vs original: {mesh_distance_error(moved, cone):.3f} mm")
print(f"Mesh distance, cone vs itself:          {mesh_distance_error(cone, cone):.3f} mm")

rotated_markers = Rotation.from_euler("z", 10.0, degrees=True).as_matrix() @ markers
print(f"\nAngular error for markers rotated 10 deg about the axis: "
      f"{angular_error(rotated_markers, markers, cone):.2f} deg")
