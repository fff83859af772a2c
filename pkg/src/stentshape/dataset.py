"""Sample records, the MDE metric, augmentation, the synthetic deployment
simulator and dataset file I/O.

The simulator stands in for CT/fluoroscopy acquisitions: markers are placed
on the fully-deployed cylinder, their partially-deployed counterparts on the
cone at the same (theta, h) plus seeded jitter, and both are pushed through
the same local-frame standardization the training pipeline prescribes.
"""

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import (
    CoplanarPlacement,
    InsufficientFamilies,
    ParseError,
    SchemaVersionMismatch,
    ShapeMismatch,
)
from .geometry import CameraProjection, local_frame, procrustes_align, project
from .mesh import StentSegmentSpec, partial_diameters

DATASET_FORMAT_VERSION = "1"


def mde(Y1, Y2):
    """Mean Euclidean distance over corresponding points (columns)."""
    Y1 = np.asarray(Y1, dtype=float)
    Y2 = np.asarray(Y2, dtype=float)
    if Y1.shape != Y2.shape or Y1.ndim != 2:
        raise ShapeMismatch(f"point sets differ in shape: {Y1.shape} vs {Y2.shape}")
    return float(np.linalg.norm(Y1 - Y2, axis=0).mean())


@dataclass
class SegmentSample:
    """One stent segment: local-frame training pair plus optional global
    ground truth, 2D observation and geometry metadata."""

    graft_id: str
    segment_index: int
    Y_f_l: np.ndarray
    Y_p_l: np.ndarray
    Y_p_g: np.ndarray = None
    X_g: np.ndarray = None
    P: CameraProjection = None
    spec: StentSegmentSpec = None
    marker_params: np.ndarray = None  # (5, 2) of (theta deg, h mm), mesh frame

    def __post_init__(self):
        self.Y_f_l = np.asarray(self.Y_f_l, dtype=float)
        self.Y_p_l = np.asarray(self.Y_p_l, dtype=float)
        if self.Y_f_l.shape != (3, 5) or self.Y_p_l.shape != (3, 5):
            raise ShapeMismatch("Y_f_l and Y_p_l must be 3x5")
        if np.linalg.norm(self.Y_f_l.mean(axis=1)) > 1e-9:
            raise ValueError("Y_f_l is not in the standardized local frame (centroid != 0)")
        if self.X_g is not None and self.P is None:
            raise ValueError("a 2D observation requires its projection matrix")

    def initial_variation(self):
        """MDE a no-op predictor would incur on this segment."""
        return mde(self.Y_f_l, self.Y_p_l)


@dataclass(frozen=True)
class AugmentConfig:
    rot_min: float = -30.0
    rot_max: float = 30.0
    rot_step: float = 3.0
    scale_base: float = 0.2
    scale_ratio: float = 1.5
    scale_max: float = 11.39
    axes_mode: str = "per-axis"  # or "combinatorial"
    rng_seed: int = 0

    def __post_init__(self):
        if self.rot_step <= 0 or self.scale_ratio <= 1:
            raise ValueError("rot_step must be > 0 and scale_ratio > 1")
        if self.axes_mode not in ("per-axis", "combinatorial"):
            raise ValueError(f"unknown axes_mode {self.axes_mode!r}")

    def angles(self):
        count = int(round((self.rot_max - self.rot_min) / self.rot_step)) + 1
        return self.rot_min + self.rot_step * np.arange(count)

    def scales(self):
        """Geometric grid from scale_base, final value clamped to scale_max."""
        values = []
        k = 0
        while True:
            v = self.scale_base * self.scale_ratio**k
            if v >= self.scale_max:
                values.append(self.scale_max)
                break
            values.append(v)
            k += 1
        return values


def _rotations(cfg):
    angles = cfg.angles()
    if cfg.axes_mode == "per-axis":
        for axis in "xyz":
            for angle in angles:
                yield Rotation.from_euler(axis, angle, degrees=True).as_matrix()
    else:
        for ax in angles:
            for ay in angles:
                for az in angles:
                    yield Rotation.from_euler("xyz", [ax, ay, az], degrees=True).as_matrix()


def augment(samples, cfg):
    """Replicate each sample over the rotation/scale grid.

    The same rotation and scale are applied jointly to Y_f_l and Y_p_l, then
    the pair is re-standardized (local frame for Y_f, Procrustes alignment
    for Y_p) so the stored samples satisfy the local-frame invariant.

    Per-axis mode yields len(angles) x 3 axes x len(scales) variants per
    sample (693 with the defaults); the identity rotation appears once per
    axis and is not deduplicated.
    """
    out = []
    scales = cfg.scales()
    for sample in samples:
        for R in _rotations(cfg):
            for s in scales:
                Yf = s * (R @ sample.Y_f_l)
                Yp = s * (R @ sample.Y_p_l)
                _, Yf_l = local_frame(Yf)
                _, Yp_l = procrustes_align(Yp, Yf_l)
                out.append(
                    SegmentSample(
                        graft_id=sample.graft_id,
                        segment_index=sample.segment_index,
                        Y_f_l=Yf_l,
                        Y_p_l=Yp_l,
                    )
                )
    return out


def surface_markers(spec, marker_params, state):
    """3x5 marker centers on the segment surface at (theta deg, h mm) placements."""
    marker_params = np.asarray(marker_params, dtype=float)
    if marker_params.shape != (5, 2):
        raise ShapeMismatch(f"marker placements must be 5x2, got {marker_params.shape}")
    theta = np.deg2rad(marker_params[:, 0])
    h = np.clip(marker_params[:, 1], 0.0, spec.height)
    if state == "fully-deployed":
        r = np.full(5, spec.r_fd)
    else:
        r_pd, r_pc = partial_diameters(spec.r_fd, spec.r_fc, spec.w_g)
        r = r_pd + (r_pc - r_pd) * h / spec.height
    return np.vstack([r * np.cos(theta), r * np.sin(theta), h])


def simulate_deployment(
    spec,
    marker_params,
    jitter,
    pose,
    rng_seed,
    projection=None,
    obs_noise_mm=0.0,
    graft_id="synthetic",
    segment_index=0,
):
    """Simulate one segment's marker data.

    jitter: (theta_std deg, h_std mm) applied to the partially-deployed
    placements before mapping onto the cone.  The global ground truth is the
    posed marker set; local-frame fields follow the training-pipeline
    standardization.  With a projection, a noisy 2D observation is attached.
    """
    rng = np.random.default_rng(rng_seed)
    marker_params = np.asarray(marker_params, dtype=float)
    Y_f_model = surface_markers(spec, marker_params, "fully-deployed")
    centered = Y_f_model - Y_f_model.mean(axis=1, keepdims=True)
    if np.linalg.svd(centered, compute_uv=False)[-1] <= 1e-6:
        raise CoplanarPlacement("fully-deployed marker placements are coplanar")

    theta_std, h_std = jitter
    jittered = marker_params + np.column_stack(
        [rng.normal(0.0, theta_std, 5), rng.normal(0.0, h_std, 5)]
    )
    Y_p_model = surface_markers(spec, jittered, "partially-deployed")

    Y_f_g = pose.apply(Y_f_model)
    Y_p_g = pose.apply(Y_p_model)
    _, Y_f_l = local_frame(Y_f_g)
    _, Y_p_l = procrustes_align(Y_p_g, Y_f_l)

    X_g = None
    if projection is not None:
        X_g = project(projection, Y_p_g)
        if obs_noise_mm > 0:
            X_g = X_g + rng.normal(0.0, obs_noise_mm, size=X_g.shape)

    return SegmentSample(
        graft_id=graft_id,
        segment_index=segment_index,
        Y_f_l=Y_f_l,
        Y_p_l=Y_p_l,
        Y_p_g=Y_p_g,
        X_g=X_g,
        P=projection,
        spec=spec,
        marker_params=marker_params,
    )


@dataclass
class Fold:
    test_family: str
    train: list
    test: list


def crossval_split(samples):
    """One fold per graft family: that family is the test set, the rest train.

    Deterministic (families sorted by name); requires >= 3 families.
    """
    families = sorted({s.graft_id for s in samples})
    if len(families) < 3:
        raise InsufficientFamilies(f"need >= 3 graft families, found {len(families)}: {families}")
    folds = []
    for family in families:
        folds.append(
            Fold(
                test_family=family,
                train=[s for s in samples if s.graft_id != family],
                test=[s for s in samples if s.graft_id == family],
            )
        )
    return folds


def _markers_to_json(Y):
    return None if Y is None else [[repr_float(v) for v in row] for row in np.asarray(Y, dtype=float)]


def repr_float(v):
    # floats round-trip exactly through json; keep them as numbers
    return float(v)


def _sample_to_json(sample):
    return {
        "graft_id": sample.graft_id,
        "segment_index": sample.segment_index,
        "Y_f_l": _markers_to_json(sample.Y_f_l),
        "Y_p_l": _markers_to_json(sample.Y_p_l),
        "Y_p_g": _markers_to_json(sample.Y_p_g),
        "X_g": _markers_to_json(sample.X_g),
        "P": None if sample.P is None else _markers_to_json(sample.P.P),
        "spec": None if sample.spec is None else asdict(sample.spec),
        "marker_params": _markers_to_json(sample.marker_params),
    }


def _parse_array(where, name, value, shape):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{where}: field {name!r} is not a numeric array") from None
    if arr.shape != shape:
        raise ParseError(f"{where}: field {name!r} must have shape {shape}, found {arr.shape}")
    return arr


def _sample_from_json(where, doc):
    if not isinstance(doc, dict):
        raise ParseError(f"{where}: expected an object, found {type(doc).__name__}")
    for key in ("graft_id", "segment_index", "Y_f_l", "Y_p_l"):
        if doc.get(key) is None:
            raise ParseError(f"{where}: missing required field {key!r}")
    spec = None
    if doc.get("spec") is not None:
        try:
            spec = StentSegmentSpec(**doc["spec"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"{where}: invalid segment spec: {exc}") from None
    try:
        return SegmentSample(
            graft_id=str(doc["graft_id"]),
            segment_index=int(doc["segment_index"]),
            Y_f_l=_parse_array(where, "Y_f_l", doc["Y_f_l"], (3, 5)),
            Y_p_l=_parse_array(where, "Y_p_l", doc["Y_p_l"], (3, 5)),
            Y_p_g=None if doc.get("Y_p_g") is None else _parse_array(where, "Y_p_g", doc["Y_p_g"], (3, 5)),
            X_g=None if doc.get("X_g") is None else _parse_array(where, "X_g", doc["X_g"], (2, 5)),
            P=None
            if doc.get("P") is None
            else CameraProjection(P=_parse_array(where, "P", doc["P"], (3, 4))),
            spec=spec,
            marker_params=None
            if doc.get("marker_params") is None
            else _parse_array(where, "marker_params", doc["marker_params"], (5, 2)),
        )
    except (ShapeMismatch, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def save_dataset(samples, path):
    doc = {
        "format_version": DATASET_FORMAT_VERSION,
        "samples": [_sample_to_json(s) for s in samples],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_dataset(path):
    with open(path) as fh:
        text = fh.read()
    if not text.strip():
        raise ParseError(f"{path}: file is empty; an explicit sample list is required")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise ParseError(f"{path}: missing format_version header")
    if doc["format_version"] != DATASET_FORMAT_VERSION:
        raise SchemaVersionMismatch(
            f"{path}: format {doc['format_version']!r}, expected {DATASET_FORMAT_VERSION!r}"
        )
    samples_doc = doc.get("samples")
    if not isinstance(samples_doc, list):
        raise ParseError(f"{path}: 'samples' must be a list")
    return [_sample_from_json(f"{path}: sample {i}", s) for i, s in enumerate(samples_doc)]
