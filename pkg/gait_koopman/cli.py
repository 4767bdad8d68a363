"""Command-line entry point: data generation, training, forecasting, evaluation, tracking."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from logging import Logger, getLogger
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import pandas as pd
import torch

from gait_koopman import __version__
from gait_koopman.config import RunConfig, load_config_file
from gait_koopman.data.model_files import FORMAT_VERSION as MODEL_FORMAT_VERSION
from gait_koopman.data.model_files import read_model, write_model
from gait_koopman.data.sequence_files import (
    MANIFEST_FORMAT,
    SEQUENCE_FORMAT,
    load_dataset,
    read_sequence,
    save_dataset,
    write_sequence,
)
from gait_koopman.data.synthetic import population_from_config
from gait_koopman.errors import TrainingDivergenceError
from gait_koopman.lds.koopman import dominant_channel, encode_sequence, estimate_koopman, forecast, prefix_length
from gait_koopman.lds.losses import smooth_l1
from gait_koopman.pose.types import flatten_frame
from gait_koopman.recognition.evaluation import evaluate_split, truncation_sweep
from gait_koopman.reports import (
    plot_cmc,
    plot_extension_bars,
    plot_loss_history,
    write_csv,
    write_run_log,
)
from gait_koopman.tracking.smoothing import read_detections_csv, select_largest, smooth_track, square_crop, write_track_csv
from gait_koopman.training.gradcheck import run_gradient_suite, scaled_gradient
from gait_koopman.training.trainer import train_lds, train_recognition

logger: Logger = getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

LDS_MODEL_NAME = "lds_model.bin"
HEAD_MODEL_NAME = "recognition_model.bin"


def _overrides(args: argparse.Namespace, mapping: dict[str, str]) -> dict[str, Any]:
    """Collect explicitly given flags as dotted config keys."""
    return {key: getattr(args, dest) for dest, key in mapping.items() if getattr(args, dest, None) is not None}


def build_config(args: argparse.Namespace, mapping: dict[str, str]) -> tuple[RunConfig, dict[str, str]]:
    """Defaults, then the --config file, then explicit flags."""
    file_values: dict[str, str] = {}
    config = RunConfig()
    if args.config is not None:
        file_values = load_config_file(args.config)
        config = config.with_overrides(file_values)
    flags = _overrides(args, mapping)
    if args.seed is not None:
        flags["seed"] = args.seed
    if args.out_dir is not None:
        flags["out_dir"] = args.out_dir
    if args.plots:
        flags["plots"] = True
    config = config.with_overrides(flags)
    if "train.seed" not in file_values:
        config = config.with_overrides({"train.seed": config.seed})
    return config, file_values


def _progress(args: argparse.Namespace) -> bool:
    return not args.quiet


def cmd_gen(args: argparse.Namespace, config: RunConfig) -> dict[str, Any]:
    """Generate a synthetic population and write it as a dataset directory."""
    population = population_from_config(config.population, seed=config.seed, progress=_progress(args))
    manifest = save_dataset(
        config.out_dir,
        population.items,
        gallery_per_identity=config.population.gallery_per_identity,
        metadata={"seed": config.seed, "population": config.population.model_dump(mode="json")},
    )
    return {"manifest": str(manifest), "sequences": len(population.items)}


def cmd_train_lds(args: argparse.Namespace, config: RunConfig) -> dict[str, Any]:
    """Train the LDS on a dataset directory and write the model and loss history."""
    gallery, probes = load_dataset(args.data)
    items = gallery + probes if args.all_sequences else gallery
    result = train_lds([item.sequence for item in items], config.train, progress=_progress(args))

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_model(out / LDS_MODEL_NAME, result.model)
    write_csv(result.history, out / "loss_history.csv")
    if config.plots:
        plot_loss_history(result.history, out / "loss_history.png")

    phases = []
    for item in items:
        latents = encode_sequence(result.model, item.sequence)
        K = estimate_koopman(result.model, latents[: prefix_length(len(item.sequence))])
        phases.append(abs(dominant_channel(latents, K)[1]))
    logger.info(f"Median dominant-channel phase: {np.median(phases):.4f} rad/frame")
    return {
        "model": str(out / LDS_MODEL_NAME),
        "epochs": result.epochs_completed,
        "stopped_early": result.stopped_early,
        "final_loss": float(result.history["total"].iloc[-1]),
    }


def cmd_train_head(args: argparse.Namespace, config: RunConfig) -> dict[str, Any]:
    """Train the recognition head on the gallery split and write LDS + head."""
    bundle = read_model(args.model)
    gallery, _ = load_dataset(args.data)
    result = train_recognition(gallery, bundle.lds, config.train, progress=_progress(args))

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_model(out / HEAD_MODEL_NAME, result.model, result.head)
    write_csv(result.history, out / "head_loss_history.csv")
    if config.plots:
        plot_loss_history(result.history, out / "head_loss_history.png")
    return {"model": str(out / HEAD_MODEL_NAME), "epochs": result.epochs_completed}


def cmd_forecast(args: argparse.Namespace, config: RunConfig) -> dict[str, Any]:
    """Append forecast frames to a sequence; score them against ground truth when given."""
    if args.extra < 0:
        raise ValueError(f"--extra must be non-negative, got {args.extra}")
    bundle = read_model(args.model)
    item = read_sequence(args.input)
    predicted = forecast(bundle.lds, item.sequence, args.extra, anchor=args.anchor)
    extended = item.sequence.extended(predicted)

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{Path(args.input).stem}_extended.csv"
    write_sequence(target, extended, item.shape, item.label)
    record: dict[str, Any] = {"output": str(target), "frames": len(extended)}

    if args.truth is not None:
        truth = read_sequence(args.truth).sequence
        n = len(item.sequence)
        truth_frames = truth.frames
        if len(truth) < n + args.extra:
            raise ValueError(f"Ground truth has {len(truth)} frames, need {n + args.extra}")
        rows = [
            {
                "frame": n + i,
                "smooth_l1": float(
                    smooth_l1(
                        torch.from_numpy(flatten_frame(frame)),
                        torch.from_numpy(flatten_frame(truth_frames[n + i])),
                    )
                ),
            }
            for i, frame in enumerate(predicted)
        ]
        errors = pd.DataFrame(rows, columns=["frame", "smooth_l1"])
        write_csv(errors, out / "forecast_error.csv")
        record["mean_error"] = float(errors["smooth_l1"].mean()) if rows else 0.0
    return record


def cmd_eval(args: argparse.Namespace, config: RunConfig) -> dict[str, Any]:
    """CMC evaluation of the probe split, swept over truncation and extension settings."""
    bundle = read_model(args.model)
    head = bundle.head
    if args.head is not None:
        head = read_model(args.head).head
    if head is None:
        raise ValueError("No recognition head found; pass --head or a model written by train-head")
    gallery, probes = load_dataset(args.data)
    truncations = args.truncate or [None]
    extensions = args.extend or [0]

    out = Path(config.out_dir)
    first = evaluate_split(
        bundle.lds, head, gallery, probes, truncate=truncations[0], extend=extensions[0], progress=_progress(args)
    )
    write_csv(first.per_probe, out / "cmc_probes.csv")
    write_csv(first.curve_frame(), out / "cmc_curve.csv")
    sweep = truncation_sweep(
        bundle.lds, head, gallery, probes, truncations, extensions, progress=_progress(args)
    )
    write_csv(sweep, out / "cmc_summary.csv")
    if config.plots:
        plot_cmc(first.curve_frame(), out / "cmc_curve.png")
        plot_extension_bars(sweep, out / "extension.png")
    return {"rank_1": first.rank(1), "rank_5": first.rank(5), "settings": len(sweep)}


def cmd_smooth_track(args: argparse.Namespace, config: RunConfig) -> dict[str, Any]:
    """Select the largest detection per frame and smooth the track."""
    track = smooth_track(select_largest(read_detections_csv(args.input)), config.smoothing)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = out / f"{Path(args.input).stem}_smoothed.csv"
    write_track_csv(track, target)
    record: dict[str, Any] = {"output": str(target), "frames": len(track)}
    if args.frame_width is not None and args.frame_height is not None:
        crops = [
            square_crop(x, y, s, args.frame_width, args.frame_height, config.smoothing.crop_resolution)
            for x, y, s in zip(track.x, track.y, track.size)
        ]
        crop_df = pd.DataFrame(
            {
                "frame": track.frames,
                "left": [c.left for c in crops],
                "top": [c.top for c in crops],
                "side": [c.side for c in crops],
                "scale": [c.scale for c in crops],
                "clamped": [int(c.clamped) for c in crops],
            }
        )
        write_csv(crop_df, out / f"{Path(args.input).stem}_crops.csv")
        record["clamped_crops"] = int(crop_df["clamped"].sum())
    return record


class GradientCheckFailed(RuntimeError):
    """At least one finite-difference comparison exceeded the tolerance."""


def cmd_gradcheck(args: argparse.Namespace, config: RunConfig) -> dict[str, Any]:
    """Finite-difference check of every loss; fails unless all groups pass."""
    kwargs: dict[str, Any] = {}
    if args.corrupt_gradient is not None:
        kwargs["gradient_fn"] = scaled_gradient(args.corrupt_gradient)
    table = run_gradient_suite(seed=config.seed, n_coords=args.coords, **kwargs)
    write_csv(table, Path(config.out_dir) / "gradcheck.csv")
    print(table.to_string(index=False))
    passed = bool(table["passed"].all())
    if not passed:
        raise GradientCheckFailed(f"{int((~table['passed']).sum())} gradient checks failed")
    return {"passed": passed}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Global seed (default 0)")
    parser.add_argument("--out-dir", type=Path, default=None, help="Output directory (default ./out)")
    parser.add_argument("--config", type=Path, default=None, help="key=value config file")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--plots", action="store_true", help="Also write plot images")
    parser.add_argument("--quiet", action="store_true", help="Hide progress bars")


Command = Callable[[argparse.Namespace, RunConfig], dict[str, Any]]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gait-koopman", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="Generate a synthetic dataset")
    _add_common(gen)
    gen.add_argument("--subjects", type=int, default=None, help="Identities G (default 20)")
    gen.add_argument("--seqs-per", type=int, default=None, help="Sequences per identity S (default 6)")
    gen.add_argument("--frames", type=int, default=None, help="Frames per sequence N (default 150)")
    gen.add_argument("--noise", type=float, default=None, help="Angle noise sigma (default 0.01)")
    gen.add_argument("--base-frequency", type=float, default=None)
    gen.add_argument("--frequency-step", type=float, default=None)
    gen.add_argument("--gallery-per", type=int, default=None, help="Gallery sequences per identity (default 4)")
    gen.set_defaults(
        func=cmd_gen,
        mapping={
            "subjects": "population.subjects",
            "seqs_per": "population.sequences_per_subject",
            "frames": "population.frames",
            "noise": "population.noise",
            "base_frequency": "population.base_frequency",
            "frequency_step": "population.frequency_step",
            "gallery_per": "population.gallery_per_identity",
        },
    )

    train_common = {
        "epochs": "train.max_epochs",
        "lr": "train.learning_rate",
        "batch_size": "train.batch_size",
        "sequence_length": "train.sequence_length",
    }

    lds = sub.add_parser("train-lds", help="Train the LDS on a dataset")
    _add_common(lds)
    lds.add_argument("--data", type=Path, required=True, help="Dataset directory")
    lds.add_argument("--epochs", type=int, default=None, help="Maximum epochs (default 100)")
    lds.add_argument("--lr", type=float, default=None, help="Learning rate (default 5e-5)")
    lds.add_argument("--batch-size", type=int, default=None)
    lds.add_argument("--sequence-length", type=int, default=None)
    lds.add_argument("--all-sequences", action="store_true", help="Train on probes as well as the gallery")
    lds.set_defaults(func=cmd_train_lds, mapping=train_common)

    head = sub.add_parser("train-head", help="Train the recognition head")
    _add_common(head)
    head.add_argument("--data", type=Path, required=True, help="Dataset directory")
    head.add_argument("--model", type=Path, required=True, help="LDS model file")
    head.add_argument("--epochs", type=int, default=None)
    head.add_argument("--lr", type=float, default=None)
    head.add_argument("--batch-size", type=int, default=None)
    head.add_argument("--sequence-length", type=int, default=None)
    head.add_argument("--joint", action="store_const", const=True, default=None, help="Fine-tune the LDS too")
    head.add_argument("--embedding-dim", type=int, default=None)
    head.add_argument("--hidden-dim", type=int, default=None)
    head.add_argument("--lambda-id", type=float, default=None)
    head.set_defaults(
        func=cmd_train_head,
        mapping={
            **train_common,
            "joint": "train.train_lds_jointly",
            "embedding_dim": "train.embedding_dim",
            "hidden_dim": "train.hidden_dim",
            "lambda_id": "train.lambda_id",
        },
    )

    fc = sub.add_parser("forecast", help="Extend a sequence with forecast frames")
    _add_common(fc)
    fc.add_argument("--model", type=Path, required=True)
    fc.add_argument("--input", type=Path, required=True, help="Sequence file")
    fc.add_argument("--extra", type=int, default=40, help="Frames to forecast (default 40)")
    fc.add_argument("--anchor", choices=["first", "last"], default="first")
    fc.add_argument("--truth", type=Path, default=None, help="Sequence file with the true continuation")
    fc.set_defaults(func=cmd_forecast, mapping={})

    ev = sub.add_parser("eval", help="CMC evaluation with truncation and extension")
    _add_common(ev)
    ev.add_argument("--model", type=Path, required=True)
    ev.add_argument("--head", type=Path, default=None, help="Model file holding the recognition head")
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--truncate", type=int, nargs="*", default=None, help="Probe lengths to test")
    ev.add_argument("--extend", type=int, nargs="*", default=None, help="Forecast extensions to test")
    ev.set_defaults(func=cmd_eval, mapping={})

    st = sub.add_parser("smooth-track", help="Smooth a detection track")
    _add_common(st)
    st.add_argument("--in", dest="input", type=Path, required=True, help="frame,x,y,w,h,confidence CSV")
    st.add_argument("--window", type=int, default=None, help="Window length (default 150)")
    st.add_argument("--stride", type=int, default=None, help="Window stride (default 50)")
    st.add_argument("--frame-width", type=float, default=None)
    st.add_argument("--frame-height", type=float, default=None)
    st.set_defaults(func=cmd_smooth_track, mapping={"window": "smoothing.window", "stride": "smoothing.stride"})

    gc = sub.add_parser("gradcheck", help="Finite-difference gradient verification")
    _add_common(gc)
    gc.add_argument("--coords", type=int, default=100, help="Coordinates per parameter group")
    gc.add_argument("--corrupt-gradient", type=float, default=None, help=argparse.SUPPRESS)
    gc.set_defaults(func=cmd_gradcheck, mapping={})

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code (0 ok, 1 failure, 2 usage or parse error)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )
    started = time.perf_counter()
    record: dict[str, Any] = {
        "command": args.command,
        "argv": list(argv) if argv is not None else sys.argv[1:],
        "formats": {
            "sequence": SEQUENCE_FORMAT,
            "manifest": MANIFEST_FORMAT,
            "model": MODEL_FORMAT_VERSION,
        },
        "version": __version__,
    }
    out_dir: Path | None = args.out_dir
    code = EXIT_OK
    try:
        config, file_values = build_config(args, args.mapping)
        out_dir = config.out_dir
        record.update({"config": config.model_dump(mode="json"), "config_file": file_values, "seed": config.seed})
        record["result"] = args.func(args, config)
    except TrainingDivergenceError as e:
        logger.error(f"Training diverged in {e.operation}: {e}")
        record["error"] = str(e)
        code = EXIT_FAILURE
    except (ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        record["error"] = str(e)
        code = EXIT_USAGE
    except RuntimeError as e:
        logger.error(f"{type(e).__name__}: {e}")
        record["error"] = str(e)
        code = EXIT_FAILURE
    finally:
        record["wall_time_seconds"] = time.perf_counter() - started
        record["exit_code"] = code
        if out_dir is not None or code == EXIT_OK:
            write_run_log(out_dir or RunConfig().out_dir, record)
    return code


if __name__ == "__main__":
    sys.exit(main())
