"""Command-line entry point: ``python -m crosscbam <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from crosscbam.config import load_run_config, load_settings, parse_size
from crosscbam.errors import ConfigurationError, CrossCbamError, UsageError

logger = logging.getLogger("crosscbam")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def _configure_logging(level: Optional[str]) -> None:
    level = (level or os.getenv("LOG_LEVEL") or load_settings().log_level).upper()
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _network_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides = {
        "variant": args.variant,
        "dilations": args.dilations,
        "channels": args.channels,
        "num_classes": args.classes,
        "base_ch": getattr(args, "base_ch", None),
    }
    return {key: value for key, value in overrides.items() if value is not None}


def _add_network_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--variant", help="m (STDC1) or l (STDC2) [default: m]")
    parser.add_argument("--dilations", help="comma-separated atrous rates [default: 1,3]")
    parser.add_argument("--channels", type=int, help="decoder / SE-ASPP width [default: 256]")
    parser.add_argument("--classes", type=int, help="number of classes [default: 19]")
    parser.add_argument("--base-ch", dest="base_ch", type=int, help="backbone base width [default: 64]")


def _parse_set(values: Sequence[str]) -> Dict[str, str]:
    parsed: Dict[str, str] = {}
    for item in values:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got '{item}'")
        parsed[key.strip()] = value.strip()
    return parsed


def _input_shape(text: str):
    h, w = parse_size(text, "--input")
    return (1, 3, h, w)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_train(args: argparse.Namespace) -> int:
    from crosscbam.services.trainer import Trainer

    overrides: Dict[str, Any] = _network_overrides(args)
    for key in ("max_iter", "seed", "batch_size", "output_dir"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    overrides.update(_parse_set(args.set))
    cfg = load_run_config(args.config, overrides=overrides)
    trainer = Trainer(cfg, dtype=args.dtype or load_settings().dtype, logger=logger)
    run = trainer.train()
    summary = {
        "run_id": run.run_id,
        "status": run.status.value,
        "iterations": run.iteration,
        "final_loss": run.losses[-1]["loss"] if run.losses else None,
        "best_miou": run.best_miou,
        "train_miou": run.train_miou,
        "checkpoints": run.checkpoints,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_infer(args: argparse.Namespace) -> int:
    from crosscbam.services.inference import InferenceService

    overrides = _network_overrides(args)
    # with a checkpoint and no flags the network comes from the checkpoint's config echo
    cfg = load_run_config(overrides=overrides).network if overrides or args.checkpoint is None else None
    service = InferenceService(cfg, args.checkpoint, logger=logger)
    source = Path(args.image)
    images = sorted(p for p in source.iterdir() if p.suffix.lower() in {".png", ".ppm"}) if source.is_dir() else [source]
    if not images:
        raise UsageError(f"no .png or .ppm images found in {source}")
    output = Path(args.output)
    for image in images:
        target = output / f"{image.stem}_mask.png" if source.is_dir() or output.is_dir() else output
        overlay = None
        if args.overlay:
            overlay = target.with_name(f"{image.stem}_overlay.png")
        result = service.infer_file(image, target, overlay)
        print(json.dumps(result))
    return EXIT_OK


def cmd_count(args: argparse.Namespace) -> int:
    from crosscbam.models.reports import ProfileReport
    from crosscbam.nn.network import build_network
    from crosscbam.services import profiler

    base = load_run_config(overrides=_network_overrides(args)).network
    configs = profiler.sweep_configs(base) if args.sweep else [base]
    shape = _input_shape(args.input)
    reports = []
    for cfg in configs:
        if args.no_flops:
            model = build_network(cfg)
            reports.append(ProfileReport(
                name=f"{cfg.variant.name} c={cfg.decoder_ch} d={','.join(map(str, cfg.dilations))}",
                params=profiler.count_params(model),
                param_breakdown=profiler.param_breakdown(model),
                reference_params_m=profiler.reference_for(cfg)[0],
            ))
        else:
            reports.append(profiler.profile_config(cfg, shape))
    print(profiler.format_table(reports))
    if not args.sweep:
        print("\nper-module parameters:")
        for name, count in reports[0].param_breakdown.items():
            print(f"  {name:<10} {count:>12,d}")
        if reports[0].flops:
            print("\nper-module GMACs:")
            for name, macs in reports[0].flops.breakdown.items():
                print(f"  {name:<10} {macs / 1e9:>12.3f}")
    if args.csv:
        path = profiler.write_csv(reports, args.csv)
        logger.info(f"Wrote {len(reports)} rows to {path}")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    from crosscbam.nn.network import build_network
    from crosscbam.services import profiler

    settings = load_settings()
    cfg = load_run_config(overrides=_network_overrides(args)).network
    shape = _input_shape(args.input)
    model = build_network(cfg, dtype=args.dtype or settings.dtype)
    warmup = args.warmup if args.warmup is not None else settings.bench_warmup
    reps = args.reps if args.reps is not None else settings.bench_reps
    report = profiler.bench_latency(model, shape, warmup=warmup, reps=reps, logger=logger)
    report.name = f"{cfg.variant.name} c={cfg.decoder_ch} d={','.join(map(str, cfg.dilations))}"
    report.flops = profiler.flop_report(model, shape, reference_g=profiler.reference_for(cfg)[1])
    report.reference_params_m = profiler.reference_for(cfg)[0]
    print(profiler.format_table([report]))
    print(json.dumps(report.environment, indent=2))
    if args.csv:
        profiler.write_csv([report], args.csv)
    return EXIT_OK


def _finish(report, json_path: Optional[str]) -> int:
    summary = report.summary()
    for failure in report.failures:
        print(f"FAIL {failure.suite}/{failure.name}: {failure.details}")
    print(f"{summary['passed']}/{summary['total']} checks passed")
    if json_path:
        Path(json_path).write_text(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_gradcheck(args: argparse.Namespace) -> int:
    from crosscbam.services import verification

    seeds = args.seeds if args.seeds is not None else load_settings().gradcheck_seeds
    ops = [op.strip() for op in args.ops.split(",")] if args.ops else None
    unknown = sorted(set(ops or []) - set(verification.OP_CASES))
    if unknown:
        raise UsageError(f"unknown ops {unknown}; expected a subset of {sorted(verification.OP_CASES)}")
    checks = verification.gradcheck_suite(seeds, ops)
    if args.network:
        checks += verification.network_gradcheck_suite(args.full_width)
    return _finish(verification.run_checks(checks, logger), args.json)


def cmd_verify(args: argparse.Namespace) -> int:
    from crosscbam.services import verification

    suites = [s.strip() for s in args.suites.split(",")] if args.suites else None
    unknown = sorted(set(suites or []) - set(verification.SUITES))
    if unknown:
        raise UsageError(f"unknown suites {unknown}; expected a subset of {sorted(verification.SUITES)}")
    seeds = args.seeds if args.seeds is not None else load_settings().gradcheck_seeds
    report = verification.run_suites(suites, seeds=seeds, full_width=args.full_width, logger=logger)
    return _finish(report, args.json)


def cmd_gen_data(args: argparse.Namespace) -> int:
    from crosscbam.data.image_io import write_color_mask, write_image, write_mask
    from crosscbam.data.synthetic import class_histogram, gen_synthetic
    from crosscbam.models.data import SyntheticSceneSpec

    spec = SyntheticSceneSpec(
        seed=args.seed,
        n_samples=args.n,
        num_classes=args.classes,
        canvas=parse_size(args.canvas, "--canvas"),
        noise=args.noise,
    )
    samples = gen_synthetic(spec)
    out = Path(args.out)
    for sample in samples:
        write_image(out / "images" / f"{sample.name}.png", sample.image)
        write_mask(out / "masks" / f"{sample.name}.png", sample.mask)
        if args.color:
            write_color_mask(out / "color" / f"{sample.name}.png", sample.mask)
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=2))
    hist = class_histogram(samples, spec.num_classes)
    logger.info(f"Wrote {len(samples)} samples to {out}; class pixels {hist.tolist()}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crosscbam", description="Real-time segmentation with cross-level attention fusion")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING, ERROR [default: LOG_LEVEL or INFO]")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train a model from a run config")
    train.add_argument("--config", help="flat key=value run config file")
    _add_network_options(train)
    train.add_argument("--max-iter", dest="max_iter", type=int)
    train.add_argument("--batch-size", dest="batch_size", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--output-dir", dest="output_dir")
    train.add_argument("--dtype", choices=["float32", "float64"])
    train.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    train.set_defaults(handler=cmd_train)

    infer = sub.add_parser("infer", help="write color-mapped masks for an image or a directory")
    infer.add_argument("--image", required=True)
    infer.add_argument("--output", required=True)
    infer.add_argument("--checkpoint")
    infer.add_argument("--overlay", action="store_true", help="also write an image/mask overlay")
    _add_network_options(infer)
    infer.set_defaults(handler=cmd_infer)

    count = sub.add_parser("count", help="parameter and FLOP counts")
    _add_network_options(count)
    count.add_argument("--input", default="512x1024", help="HxW [default: 512x1024]")
    count.add_argument("--sweep", action="store_true", help="the dilation and width ablation grid")
    count.add_argument("--no-flops", dest="no_flops", action="store_true")
    count.add_argument("--csv")
    count.set_defaults(handler=cmd_count)

    bench = sub.add_parser("bench", help="latency benchmark")
    _add_network_options(bench)
    bench.add_argument("--input", default="512x1024", help="HxW [default: 512x1024]")
    bench.add_argument("--warmup", type=int)
    bench.add_argument("--reps", type=int)
    bench.add_argument("--dtype", choices=["float32", "float64"])
    bench.add_argument("--csv")
    bench.set_defaults(handler=cmd_bench)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference gradient oracle suite")
    gradcheck.add_argument("--seeds", type=int, help="seeds per op [default: CROSSCBAM_GRADCHECK_SEEDS]")
    gradcheck.add_argument("--ops", help="comma-separated subset of ops")
    gradcheck.add_argument("--network", action="store_true", help="include the end-to-end network check")
    gradcheck.add_argument("--full-width", dest="full_width", action="store_true")
    gradcheck.add_argument("--json")
    gradcheck.set_defaults(handler=cmd_gradcheck)

    verify = sub.add_parser("verify", help="run all verification suites")
    verify.add_argument("--suites", help="comma-separated subset of suites")
    verify.add_argument("--seeds", type=int)
    verify.add_argument("--full-width", dest="full_width", action="store_true")
    verify.add_argument("--json")
    verify.set_defaults(handler=cmd_verify)

    gen = sub.add_parser("gen-data", help="write a synthetic dataset to disk")
    gen.add_argument("--out", required=True)
    gen.add_argument("--n", type=int, default=16)
    gen.add_argument("--classes", type=int, default=3)
    gen.add_argument("--canvas", default="64x64")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--color", action="store_true", help="also write palette-colored masks")
    gen.set_defaults(handler=cmd_gen_data)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging(args.log_level)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CrossCbamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


__all__ = ["build_parser", "main"]
