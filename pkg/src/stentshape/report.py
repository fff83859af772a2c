"""Per-segment metric evaluation and the run report assembled by the CLI.

Each segment row carries the full metric suite: initial variation, marker
reference prediction MDE, and (when a 2D observation is available) marker
instantiation and shape instantiation errors, computed twice — against the
ideal 2D references projected from the 3D ground truth and against the
stored (noisy) practical ones.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import gcn
from .dataset import mde
from .geometry import instantiate_markers, procrustes_align, project
from .mesh import (
    PARTIALLY_DEPLOYED,
    MeshDistance,
    angular_error,
    generate_segment_mesh,
    pose_mesh,
)
from .dataset import surface_markers

REPORT_FORMAT_VERSION = "1"


@dataclass
class StageTimings:
    """Accumulated wall time (ms) per pipeline stage."""

    predict_ms: float = 0.0
    instantiate_ms: float = 0.0
    mesh_ms: float = 0.0

    def as_dict(self):
        return {
            "predict_ms": self.predict_ms,
            "instantiate_ms": self.instantiate_ms,
            "mesh_ms": self.mesh_ms,
        }


@dataclass
class RunReport:
    rows: list
    aggregates: dict
    config_echo: dict = field(default_factory=dict)
    seed: int = None
    timings: StageTimings = field(default_factory=StageTimings)

    def to_document(self):
        """Deterministic report payload; wall-clock timings stay out of it."""
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "seed": self.seed,
            "config_echo": self.config_echo,
            "rows": self.rows,
            "aggregates": self.aggregates,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_document(), fh, indent=1)
            fh.write("\n")
        with open(str(path) + ".timing.json", "w") as fh:
            json.dump(self.timings.as_dict(), fh, indent=1)
            fh.write("\n")


def _instantiation_metrics(sample, pred, X_obs, P, timings):
    t0 = time.perf_counter()
    Y_hat_g, pose = instantiate_markers(pred, sample.Y_f_l, X_obs, P)
    timings.instantiate_ms += (time.perf_counter() - t0) * 1e3
    X_ideal = project(P, sample.Y_p_g)
    return {
        "marker_3d_mde": mde(Y_hat_g, sample.Y_p_g),
        "reprojection_2d_mde": mde(project(P, Y_hat_g), X_ideal),
    }, Y_hat_g, pose


def evaluate_sample(sample, model, graph, timings=None, mesh_cache=None):
    """Compute one report row for a segment sample."""
    timings = timings if timings is not None else StageTimings()
    t0 = time.perf_counter()
    pred = gcn.predict_references(model, graph, sample.Y_f_l)
    timings.predict_ms += (time.perf_counter() - t0) * 1e3
    _, Y_ref = procrustes_align(pred, sample.Y_f_l)

    row = {
        "segment_id": f"{sample.graft_id}:{sample.segment_index}",
        "graft_id": sample.graft_id,
        "initial_variation": sample.initial_variation(),
        "prediction_mde": mde(Y_ref, sample.Y_p_l),
    }
    if sample.X_g is None or sample.P is None or sample.Y_p_g is None:
        return row

    mesh_model = None
    gt_query = None
    mesh_gt = None
    if sample.spec is not None and sample.marker_params is not None:
        t0 = time.perf_counter()
        key = (sample.spec, PARTIALLY_DEPLOYED)
        if mesh_cache is not None and key in mesh_cache:
            mesh_model = mesh_cache[key]
        else:
            mesh_model = generate_segment_mesh(sample.spec, PARTIALLY_DEPLOYED)
            if mesh_cache is not None:
                mesh_cache[key] = mesh_model
        Y_p_model = surface_markers(sample.spec, sample.marker_params, PARTIALLY_DEPLOYED)
        T_gt, _ = procrustes_align(Y_p_model, sample.Y_p_g)
        mesh_gt = pose_mesh(mesh_model, Y_p_model, T_gt, sample.Y_p_g)
        gt_query = MeshDistance(mesh_gt)
        timings.mesh_ms += (time.perf_counter() - t0) * 1e3

    X_ideal = project(sample.P, sample.Y_p_g)
    for label, X_obs in (("ideal", X_ideal), ("practical", sample.X_g)):
        metrics, Y_hat_g, pose = _instantiation_metrics(sample, pred, X_obs, sample.P, timings)
        if mesh_model is not None:
            t0 = time.perf_counter()
            Y_p_model = surface_markers(sample.spec, sample.marker_params, PARTIALLY_DEPLOYED)
            T_m2g = pose.compose(procrustes_align(Y_p_model, Y_ref)[0])
            mesh_pred = pose_mesh(mesh_model, Y_p_model, T_m2g, Y_hat_g)
            metrics["mesh_distance"] = float(gt_query.query(mesh_pred.vertices).mean())
            metrics["angular_error_deg"] = angular_error(Y_hat_g, sample.Y_p_g, mesh_gt)
            timings.mesh_ms += (time.perf_counter() - t0) * 1e3
        row[label] = metrics
    return row


def _aggregate(rows):
    """Column-wise mean/std over rows; nested ideal/practical blocks too."""

    def stats(values):
        values = [v for v in values if v is not None]
        if not values:
            return None
        return {"mean": float(np.mean(values)), "std": float(np.std(values))}

    agg = {
        "initial_variation": stats([r["initial_variation"] for r in rows]),
        "prediction_mde": stats([r["prediction_mde"] for r in rows]),
    }
    for label in ("ideal", "practical"):
        blocks = [r[label] for r in rows if label in r]
        if not blocks:
            continue
        keys = sorted({k for b in blocks for k in b})
        agg[label] = {k: stats([b.get(k) for b in blocks]) for k in keys}
    return agg


def evaluate_samples(samples, model, graph, config_echo=None, seed=None):
    """Evaluate every sample and assemble a RunReport."""
    timings = StageTimings()
    mesh_cache = {}
    rows = [evaluate_sample(s, model, graph, timings, mesh_cache) for s in samples]
    return RunReport(
        rows=rows,
        aggregates=_aggregate(rows),
        config_echo=config_echo or {},
        seed=seed,
        timings=timings,
    )


def format_report_table(report):
    """Human-readable metric table, one line per segment plus aggregates."""
    headers = [
        "segment",
        "init_var",
        "pred_mde",
        "3d_ideal",
        "3d_pract",
        "2d_ideal",
        "2d_pract",
        "ang_ideal",
        "ang_pract",
        "mesh_ideal",
        "mesh_pract",
    ]

    def fmt(value):
        return "-" if value is None else f"{value:.4f}"

    def cells(row):
        ideal = row.get("ideal", {})
        practical = row.get("practical", {})
        return [
            row["segment_id"],
            fmt(row["initial_variation"]),
            fmt(row["prediction_mde"]),
            fmt(ideal.get("marker_3d_mde")),
            fmt(practical.get("marker_3d_mde")),
            fmt(ideal.get("reprojection_2d_mde")),
            fmt(practical.get("reprojection_2d_mde")),
            fmt(ideal.get("angular_error_deg")),
            fmt(practical.get("angular_error_deg")),
            fmt(ideal.get("mesh_distance")),
            fmt(practical.get("mesh_distance")),
        ]

    table = [headers] + [cells(r) for r in report.rows]
    agg = report.aggregates
    mean_row = ["MEAN", fmt(agg["initial_variation"]["mean"]), fmt(agg["prediction_mde"]["mean"])]
    for label_key in ("marker_3d_mde", "reprojection_2d_mde", "angular_error_deg", "mesh_distance"):
        for label in ("ideal", "practical"):
            block = agg.get(label, {}).get(label_key)
            mean_row.append(fmt(block["mean"] if block else None))
    table.append(mean_row)
    widths = [max(len(row[i]) for row in table) for i in range(len(headers))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths)) for row in table]
    timing = report.timings
    lines.append(
        f"timing: predict {timing.predict_ms:.1f} ms, instantiate {timing.instantiate_ms:.1f} ms, "
        f"mesh {timing.mesh_ms:.1f} ms"
    )
    return "\n".join(lines)
