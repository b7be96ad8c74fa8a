import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from frame_registration import __version__
from frame_registration.config import build_registration_config, coerce_value, load_config
from frame_registration.core.benchmark import (
    BenchmarkRow,
    run_benchmark,
    run_intensity_sweep,
)
from frame_registration.core.image import load_frame
from frame_registration.core.pipeline import (
    RegistrationResult,
    ScaleRecord,
    extract_pose,
    run_dual,
    run_registration,
    run_speed_curve,
)
from frame_registration.core.synth import synthesize
from frame_registration.exceptions import ContractError
from frame_registration.schemas import BenchmarkCase, Method, RunManifest, SynthKind, SynthSpec
from frame_registration.utils.output import (
    difference_image,
    list_frames,
    plot_curves,
    plot_deformed_grid,
    timestamp,
    write_csv,
    write_image,
    write_manifest,
)

logger = logging.getLogger("frame_registration")

RESULT_COLUMNS = ("method", "ndm", "scale", "rotation_degrees", "tx", "ty", "selected", "flags")
TRACE_COLUMNS = ("step", "stage", "theta", "objective_before", "objective_after", "iterations",
                 "stop_reason", "converged")
TRUTH_COLUMNS = ("kind", "scale", "rotation_degrees", "tx", "ty", "elastic_intensity", "seed", "frame_index")
INTENSITY_COLUMNS = ("intensity", "ndm_meir", "ndm_mpir")

DEFAULT_SWEEPS = {
    "i": [0.0],
    "ii": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
    "iii": [0.4, 0.6, 0.8, 1.2, 1.4],
    "iv": [0.4, 0.6, 0.8, 1.2, 1.4, 1.6],
    "iv-rotation": [5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
    "sweep-intensity": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
}

# argparse destination -> configuration key
FLAG_KEYS = {
    "scales": "SCALES",
    "alpha": "ALPHA",
    "mu": "MU",
    "lam": "LAMBDA",
    "grid": "GRID",
    "two_level": "TWO_LEVEL",
    "iterate": "ITERATE",
    "pose_from": "POSE_FROM",
    "method": "METHOD",
    "seed": "SEED",
    "jobs": "JOBS",
    "intensity": "ELASTIC_INTENSITY",
    "sigma": "SMOOTHING_SIGMA",
    "pad_margin": "PAD_MARGIN",
    "log_level": "LOG_LEVEL",
    "log_file": "LOG_FILE",
}


def resolve_config(args) -> Dict[str, Any]:
    """Configuration files and environment, overridden by the flags that were given."""
    config = load_config(getattr(args, "config", None))
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        config[key] = coerce_value(key, value) if isinstance(value, str) else value
    return config


def _method(config: Dict[str, Any]) -> Method:
    name = str(config["METHOD"]).lower()
    if name not in ("mpir", "meir"):
        raise ContractError(f"METHOD must be mpir or meir, got {config['METHOD']!r}")
    return Method.MPIR if name == "mpir" else Method.MEIR


def parse_sweep(text: Optional[str], key: str) -> List[float]:
    if text is None:
        return list(DEFAULT_SWEEPS[key])
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ContractError(f"Invalid sweep {text!r}: {e}") from e
    if not values:
        raise ContractError("Sweep cannot be empty")
    return values


def _manifest(command: str, inputs: List[str], config: Dict[str, Any], started: str) -> RunManifest:
    return RunManifest(
        command=command,
        inputs=inputs,
        config=config,
        seed=int(config["SEED"]),
        version=__version__,
        started_at=started,
    )


def _finish(manifest: RunManifest, out: Path, outputs: List[Path], wall_time: Optional[float] = None) -> Path:
    manifest = manifest.model_copy(update={
        "outputs": [str(p) for p in outputs],
        "finished_at": timestamp(),
        "wall_time": wall_time,
    })
    return write_manifest(out / "manifest.txt", manifest)


def _result_row(result: RegistrationResult, selected: bool) -> Dict[str, Any]:
    pose = extract_pose(result)
    return {
        "method": result.method.value,
        "ndm": result.ndm,
        "scale": pose.scale,
        "rotation_degrees": pose.rotation_degrees,
        "tx": pose.translation[0],
        "ty": pose.translation[1],
        "selected": selected,
        "flags": "; ".join(result.flags),
    }


def command_register(args):
    """Handle the 'register' command: register a template frame to a reference frame."""
    started = timestamp()
    config = resolve_config(args)
    cfg = build_registration_config(config)
    method = _method(config)
    out = Path(args.out)

    reference = load_frame(args.reference, cfg.grid_n)
    template = load_frame(args.template, cfg.grid_n)
    if args.both:
        dual = run_dual(reference, template, cfg)
        results = [dual.mpir, dual.meir]
        result = dual.mpir if dual.selected == Method.MPIR else dual.meir
    else:
        result = run_registration(reference, template, method, cfg)
        results = [result]
    rows = [_result_row(res, res is result) for res in results]

    outputs = [
        write_csv(out / "result.csv", RESULT_COLUMNS, rows),
        write_csv(out / "trace.csv", TRACE_COLUMNS, [rec.to_dict() for rec in result.per_scale]),
        write_image(out / "warped.png", result.warped_template),
        write_image(out / "difference.png", difference_image(result.reference, result.warped_template)),
        plot_deformed_grid(out / "grid.svg", result.final_displacement),
    ]
    wall_time = sum(res.wall_time for res in results)
    _finish(_manifest("register", [args.reference, args.template], config, started), out, outputs, wall_time)

    for row in rows:
        print(f"Method: {row['method']}")
        print(f"NDM: {row['ndm']:.6f}")
        print(f"Scale: {row['scale']:.6f}")
        print(f"Rotation: {row['rotation_degrees']:.6f} degrees")
        print(f"Translation: ({row['tx']:.6f}, {row['ty']:.6f})")
    if len(rows) > 1:
        print(f"Selected: {result.method.value}")
    print(f"Wall time: {wall_time:.2f} seconds")
    print("Per-scale trace:")
    print_scale_records(result.per_scale)
    for flag in result.flags:
        print(f"Warning: {flag}")


def _load_frames(paths: List[str], grid_n: int):
    return [load_frame(path, grid_n) for path in paths]


def command_speed(args):
    """Handle the 'speed' command: NDM curve over consecutive frames."""
    started = timestamp()
    config = resolve_config(args)
    cfg = build_registration_config(config)
    method = Method.MEIR if args.both else _method(config)
    out = Path(args.out)

    paths = list_frames(args.frames_dir)
    if len(paths) < 2:
        raise ContractError(f"{args.frames_dir} holds {len(paths)} frames, at least 2 are needed")
    frames = _load_frames(paths, cfg.grid_n)
    curve = run_speed_curve(frames, method, cfg, both=args.both)

    primary = f"ndm_{'mpir' if method == Method.MPIR else 'meir'}"
    columns = ["pair_index", "template_frame", "reference_frame", primary]
    if args.both:
        columns.append("ndm_mpir")
    columns.append("flags")
    rows = [{
        "pair_index": point.index,
        "template_frame": Path(paths[point.index]).name,
        "reference_frame": Path(paths[point.index + 1]).name,
        "ndm_mpir": point.ndm_mpir,
        primary: point.ndm,
        "flags": "; ".join(point.flags),
    } for point in curve.points]

    series = {primary.replace("ndm_", "").upper(): curve.values}
    if args.both:
        series["MPIR"] = curve.mpir_values
    outputs = [
        write_csv(out / "speed.csv", columns, rows),
        plot_curves(out / "speed.svg", [p.index for p in curve.points], series,
                    xlabel="template frame", ylabel="NDM", title="NDM of consecutive frames"),
    ]
    _finish(_manifest("speed", paths, config, started), out, outputs)

    print(f"Registered {len(curve.points)} pairs")
    if curve.flagged:
        print(f"Flagged pairs: {', '.join(str(i) for i in curve.flagged)}")


def command_synth(args):
    """Handle the 'synth' command: write a synthetic template with known ground truth."""
    started = timestamp()
    config = resolve_config(args)
    out = Path(args.out)
    spec = SynthSpec(
        kind=SynthKind(args.kind),
        scale=args.scale,
        rotation_degrees=args.rotation,
        elastic_intensity=float(config["ELASTIC_INTENSITY"]),
        seed=int(config["SEED"]),
        smoothing_sigma=float(config["SMOOTHING_SIGMA"]),
        pad_margin=float(config["PAD_MARGIN"]),
    )
    frame = synthesize(load_frame(args.frame, int(config["GRID"])), spec, args.frame_index)
    truth = frame.ground_truth

    outputs = [
        write_image(out / "reference.png", frame.reference),
        write_image(out / "template.png", frame.image),
        write_csv(out / "truth.csv", TRUTH_COLUMNS, [{
            "kind": spec.kind.value,
            "scale": truth.scale,
            "rotation_degrees": truth.rotation_degrees,
            "tx": truth.tx,
            "ty": truth.ty,
            "elastic_intensity": spec.elastic_intensity,
            "seed": spec.seed,
            "frame_index": args.frame_index,
        }]),
    ]
    _finish(_manifest("synth", [args.frame], config, started), out, outputs)

    print(f"Synthetic frame written to {out}")
    for warning in frame.warnings:
        print(f"Warning: {warning}")


def command_bench(args):
    """Handle the 'bench' command: synthetic benchmark tables."""
    started = timestamp()
    config = resolve_config(args)
    cfg = build_registration_config(config)
    out = Path(args.out)

    paths = list_frames(args.frames_dir)
    if not paths:
        raise ContractError(f"No frames found in {args.frames_dir}")
    frames = _load_frames(paths, cfg.grid_n)
    common = {
        "seed": int(config["SEED"]),
        "smoothing_sigma": float(config["SMOOTHING_SIGMA"]),
        "pad_margin": float(config["PAD_MARGIN"]),
    }

    if args.case == "sweep-intensity":
        intensities = parse_sweep(args.sweep, "sweep-intensity")
        points = run_intensity_sweep(frames[0], intensities, cfg, **common)
        outputs = [
            write_csv(out / "intensity.csv", INTENSITY_COLUMNS, [p._asdict() for p in points]),
            plot_curves(out / "intensity.svg", [p.intensity for p in points],
                        {"MEIR": [p.ndm_meir for p in points], "MPIR": [p.ndm_mpir for p in points]},
                        xlabel="elastic intensity", ylabel="NDM"),
        ]
        _finish(_manifest("bench sweep-intensity", paths[:1], config, started), out, outputs)
        print(f"Intensity sweep over {len(points)} values written to {out}")
        return

    case = BenchmarkCase(args.case)
    sweep_key = "iv-rotation" if case == BenchmarkCase.IV and args.sweep_axis == "rotation" else case.value
    intensity = 0.0 if args.rigid_only else float(config["ELASTIC_INTENSITY"])
    rows = run_benchmark(
        frames, case, parse_sweep(args.sweep, sweep_key), cfg,
        elastic_intensity=intensity,
        sweep_axis=args.sweep_axis,
        include_meir=not args.mpir_only,
        **common,
    )
    outputs = [write_csv(out / f"bench_case_{case.value}.csv", BenchmarkRow.COLUMNS, [row.to_dict() for row in rows])]
    _finish(_manifest(f"bench {case.value}", paths, config, started), out, outputs)

    print(f"Case {case.value}: {len(rows)} rows over {len(frames)} frames written to {out}")
    for row in rows:
        if not row.monotone:
            logger.warning(f"{row.setting}: a solver trace was not monotone")
        if row.failures:
            print(f"Warning: {row.setting}: {row.failures} failed pairs")


def print_scale_records(records: List[ScaleRecord]) -> None:
    for rec in records:
        print(f"  step {rec.step} {rec.stage:<12} theta={rec.theta:<6g} "
              f"J {rec.objective_before:.6e} -> {rec.objective_after:.6e} ({rec.stop_reason})")
