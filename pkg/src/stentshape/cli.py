"""Batch command-line front end: simulate | train | predict | instantiate |
evaluate | crossval.

Exit codes: 0 success, 2 usage, 3 validation, 4 I/O or file format,
5 numerical failure.  All randomness flows from --seed; when omitted a seed
is generated and printed.
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import gcn
from .dataset import (
    SegmentSample,
    crossval_split,
    load_dataset,
    save_dataset,
    simulate_deployment,
)
from .errors import (
    CoplanarPlacement,
    DegenerateConfiguration,
    DegenerateFrame,
    DegenerateReference,
    EmptyDataset,
    EmptyMesh,
    InsufficientFamilies,
    NoConvergence,
    NonFiniteLoss,
    ParseError,
    PointOnPrincipalPlane,
    ResolutionOverflow,
    SchemaVersionMismatch,
    ShapeMismatch,
    StentShapeError,
    ZeroDegreeNode,
)
from .geometry import CameraProjection, RigidTransform, instantiate_markers, procrustes_align
from .graph import build_marker_graph
from .mesh import PARTIALLY_DEPLOYED, StentSegmentSpec, generate_segment_mesh, pose_mesh, save_mesh_obj
from .dataset import surface_markers
from .report import evaluate_samples, format_report_table

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_IO = 4
EXIT_NUMERICAL = 5

_VALIDATION_ERRORS = (
    ValueError,
    ShapeMismatch,
    InsufficientFamilies,
    CoplanarPlacement,
    EmptyDataset,
    EmptyMesh,
    ResolutionOverflow,
    ZeroDegreeNode,
)
_NUMERICAL_ERRORS = (
    NonFiniteLoss,
    NoConvergence,
    DegenerateConfiguration,
    DegenerateFrame,
    DegenerateReference,
    PointOnPrincipalPlane,
)
_IO_ERRORS = (ParseError, SchemaVersionMismatch, OSError, json.JSONDecodeError)


def _resolve_seed(args, fallback=None):
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if fallback is not None:
        return int(fallback)
    seed = int(np.random.SeedSequence().entropy % (2**31))
    print(f"seed: {seed} (generated)")
    return seed


def _say(args, message):
    if not getattr(args, "quiet", False):
        print(message)


def _random_rotation(rng):
    q = rng.normal(size=4)
    return Rotation.from_quat(q / np.linalg.norm(q)).as_matrix()


def default_projection(focal=1000.0, source_object_distance=300.0):
    """Canonical synthetic fluoroscope: camera at the origin looking down +z,
    detector-plane mm output, object centered source_object_distance away."""
    K = np.array([[focal, 0.0, 0.0], [0.0, focal, 0.0], [0.0, 0.0, 1.0]])
    Rt = np.column_stack([np.eye(3), [0.0, 0.0, source_object_distance]])
    return CameraProjection(P=K @ Rt)


def _projection_from_config(doc):
    if doc is None:
        return default_projection()
    if "matrix" in doc:
        return CameraProjection(P=np.array(doc["matrix"], dtype=float))
    return default_projection(
        focal=float(doc.get("focal", 1000.0)),
        source_object_distance=float(doc.get("source_object_distance", 300.0)),
    )


def _require(doc, key, where):
    if key not in doc:
        raise ValueError(f"{where}: missing required field {key!r}")
    return doc[key]


def simulate_from_config(config, seed):
    """Build a deterministic synthetic dataset from a simulate config dict."""
    families = _require(config, "families", "config")
    if not isinstance(families, list) or not families:
        raise ValueError("config: 'families' must be a non-empty list")
    projection = _projection_from_config(config.get("projection"))
    obs_noise = float(config.get("obs_noise_mm", 0.0))

    samples = []
    for f_idx, family in enumerate(families):
        where = f"config: family {f_idx}"
        name = str(_require(family, "name", where))
        spec = StentSegmentSpec(**_require(family, "spec", where))
        base = np.array(_require(family, "base_placements", where), dtype=float)
        if base.shape != (5, 2):
            raise ValueError(f"{where}: base_placements must be 5x2 (theta deg, h mm)")
        n_segments = int(_require(family, "n_segments", where))
        pj = family.get("placement_jitter", {})
        pj_theta = float(pj.get("theta_deg", 0.0))
        pj_h = float(pj.get("h_mm", 0.0))
        dj = family.get("deployment_jitter", {})
        jitter = (float(dj.get("theta_deg", 3.0)), float(dj.get("h_mm", 0.3)))
        t_scale = float(family.get("pose_translation_mm", 30.0))
        for i in range(n_segments):
            rng = np.random.default_rng([seed, f_idx, i, 0])
            placements = base + np.column_stack(
                [rng.normal(0.0, pj_theta, 5), rng.normal(0.0, pj_h, 5)]
            )
            pose = RigidTransform(R=_random_rotation(rng), t=rng.normal(0.0, t_scale, 3))
            samples.append(
                simulate_deployment(
                    spec,
                    placements,
                    jitter,
                    pose,
                    rng_seed=[seed, f_idx, i, 1],
                    projection=projection,
                    obs_noise_mm=obs_noise,
                    graft_id=name,
                    segment_index=i,
                )
            )
    return samples


def cmd_simulate(args):
    with open(args.config) as fh:
        config = json.load(fh)
    seed = _resolve_seed(args, config.get("seed"))
    samples = simulate_from_config(config, seed)
    save_dataset(samples, args.out)
    families = sorted({s.graft_id for s in samples})
    _say(args, f"wrote {len(samples)} segments over {len(families)} families to {args.out}")
    return EXIT_OK


def _train_config_from_args(args, seed):
    return gcn.TrainConfig(
        learning_rate=args.lr,
        momentum=args.momentum,
        l2_weight=args.l2_weight,
        batch_size=args.batch_size,
        noise_sigma=args.noise_sigma,
        epochs=args.epochs,
        rng_seed=seed,
    )


def _gcn_config_from_args(args):
    return gcn.GcnConfig(
        hidden_layers=args.hidden_layers,
        channels=args.channels,
        K=args.kernel_size,
        leaky_slope=args.leaky_slope,
    )


def _train_model(samples, gcn_config, train_config):
    graph = build_marker_graph()
    model = gcn.init_model(gcn_config, rng_seed=train_config.rng_seed)
    pairs = [(s.Y_f_l, s.Y_p_l) for s in samples]
    if train_config.epochs == 0:
        return model, []
    _, history = gcn.train(model, graph, pairs, train_config)
    return model, history


def _save_loss_curve(history, path):
    with open(path, "w") as fh:
        fh.write("# epoch mean_loss\n")
        for epoch, value in enumerate(history):
            fh.write(f"{epoch} {value!r}\n")


def cmd_train(args):
    samples = load_dataset(args.dataset)
    seed = _resolve_seed(args)
    train_config = _train_config_from_args(args, seed)
    model, history = _train_model(samples, _gcn_config_from_args(args), train_config)
    final_loss = history[-1] if history else None
    gcn.save_checkpoint(model, args.out, train_config=train_config, final_loss=final_loss, rng_seed=seed)
    loss_path = args.loss_out or str(args.out) + ".loss.txt"
    _save_loss_curve(history, loss_path)
    _say(
        args,
        f"trained on {len(samples)} segments for {train_config.epochs} epochs "
        f"(lr={train_config.learning_rate}, momentum={train_config.momentum}, "
        f"l2={train_config.l2_weight}, batch={train_config.batch_size}); "
        f"final loss {final_loss}; checkpoint {args.out}",
    )
    return EXIT_OK


def cmd_predict(args):
    samples = load_dataset(args.dataset)
    model, _ = gcn.load_checkpoint(args.model)
    graph = build_marker_graph()
    predictions = []
    for s in samples:
        pred = gcn.predict_references(model, graph, s.Y_f_l)
        _, aligned = procrustes_align(pred, s.Y_f_l)
        predictions.append(
            {"segment_id": f"{s.graft_id}:{s.segment_index}", "Y_p_l_pred": aligned.tolist()}
        )
    with open(args.out, "w") as fh:
        json.dump({"format_version": "1", "predictions": predictions}, fh, indent=1)
        fh.write("\n")
    _say(args, f"wrote {len(predictions)} predictions to {args.out}")
    return EXIT_OK


def cmd_instantiate(args):
    samples = load_dataset(args.dataset)
    model, _ = gcn.load_checkpoint(args.model)
    graph = build_marker_graph()
    results = []
    mesh_dir = Path(args.mesh_dir) if args.mesh_dir else None
    if mesh_dir:
        mesh_dir.mkdir(parents=True, exist_ok=True)
    for s in samples:
        if s.X_g is None or s.P is None:
            raise ValueError(
                f"sample {s.graft_id}:{s.segment_index} has no 2D observation; cannot instantiate"
            )
        pred = gcn.predict_references(model, graph, s.Y_f_l)
        Y_hat_g, pose = instantiate_markers(pred, s.Y_f_l, s.X_g, s.P)
        results.append(
            {
                "segment_id": f"{s.graft_id}:{s.segment_index}",
                "Y_p_g_hat": Y_hat_g.tolist(),
                "pose": {"R": pose.R.tolist(), "t": pose.t.tolist()},
            }
        )
        if mesh_dir and s.spec is not None and s.marker_params is not None:
            mesh_model = generate_segment_mesh(s.spec, PARTIALLY_DEPLOYED)
            Y_p_model = surface_markers(s.spec, s.marker_params, PARTIALLY_DEPLOYED)
            _, Y_ref = procrustes_align(pred, s.Y_f_l)
            total = pose.compose(procrustes_align(Y_p_model, Y_ref)[0])
            posed = pose_mesh(mesh_model, Y_p_model, total, Y_hat_g)
            stem = mesh_dir / f"{s.graft_id}_{s.segment_index}"
            save_mesh_obj(posed, f"{stem}.obj", f"{stem}.params.txt")
    with open(args.out, "w") as fh:
        json.dump({"format_version": "1", "instantiations": results}, fh, indent=1)
        fh.write("\n")
    _say(args, f"instantiated {len(results)} segments to {args.out}")
    return EXIT_OK


def cmd_evaluate(args):
    samples = load_dataset(args.dataset)
    model, meta = gcn.load_checkpoint(args.model)
    graph = build_marker_graph()
    report = evaluate_samples(
        samples,
        model,
        graph,
        config_echo={"model_config": asdict(model.config), "train_config": meta.get("train_config")},
        seed=meta.get("rng_seed"),
    )
    report.save(args.out)
    _say(args, format_report_table(report))
    _say(args, f"report written to {args.out}")
    return EXIT_OK


def cmd_crossval(args):
    samples = load_dataset(args.dataset)
    seed = _resolve_seed(args)
    folds = crossval_split(samples)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    graph = build_marker_graph()
    summary = {}
    for fold_idx, fold in enumerate(folds):
        train_config = _train_config_from_args(args, seed + fold_idx)
        model, history = _train_model(fold.train, _gcn_config_from_args(args), train_config)
        report = evaluate_samples(
            fold.test,
            model,
            graph,
            config_echo={
                "test_family": fold.test_family,
                "model_config": asdict(model.config),
                "train_config": asdict(train_config),
            },
            seed=seed,
        )
        report_path = out_dir / f"report_{fold.test_family}.json"
        report.save(report_path)
        summary[fold.test_family] = report.aggregates
        _say(args, f"fold {fold.test_family}: report written to {report_path}")
        _say(args, format_report_table(report))
    with open(out_dir / "aggregate.json", "w") as fh:
        json.dump({"format_version": "1", "seed": seed, "folds": summary}, fh, indent=1)
        fh.write("\n")
    _say(args, f"aggregate written to {out_dir / 'aggregate.json'}")
    return EXIT_OK


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="master RNG seed")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def _add_train_flags(parser):
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--momentum", type=float, default=0.9)
    parser.add_argument("--l2-weight", type=float, default=5e-4)
    parser.add_argument("--batch-size", type=int, default=10)
    parser.add_argument("--noise-sigma", type=float, default=0.1)
    parser.add_argument("--hidden-layers", type=int, default=8)
    parser.add_argument("--channels", type=int, default=32)
    parser.add_argument("--kernel-size", type=int, default=2)
    parser.add_argument("--leaky-slope", type=float, default=0.1)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stentshape",
        description="Shape instantiation of partially-deployed stent segments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("train", help="train the marker-reference regressor")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--loss-out", default=None)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("predict", help="predict partially-deployed marker references")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("instantiate", help="instantiate intra-operative 3D markers (and meshes)")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mesh-dir", default=None)
    _add_common(p)
    p.set_defaults(handler=cmd_instantiate)

    p = sub.add_parser("evaluate", help="full metric report for a dataset and model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("crossval", help="per-family cross-validation: train and evaluate each fold")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(handler=cmd_crossval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except _IO_ERRORS as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except _VALIDATION_ERRORS as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StentShapeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
