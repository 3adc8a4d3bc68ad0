"""Command-line surface: simulate, estimate, fuse, evaluate, gradcheck, and friends.

Each command reads its inputs, runs one library operation, writes its outputs
into ``--output-dir`` and records a manifest there. Handlers return the exit
code; library errors propagate to ``hsfuse.__main__.main``.
"""

from __future__ import annotations

import argparse
import logging
from collections.abc import Callable
from pathlib import Path

import numpy as np

from hsfuse.blind import estimate_degradation
from hsfuse.config import BlindConfig, Config, MiaeConfig, Precision, SimConfig, UpsampleMethod
from hsfuse.degradation import make_box_srf, make_gaussian_kernel, scale_to_unit, simulate_wald
from hsfuse.errors import ArgumentError, FormatError
from hsfuse.formats import (
    load_cube,
    load_kernel,
    load_srf,
    save_cube,
    save_kernel,
    save_srf,
    write_csv,
    write_loss_csv,
    write_per_band_psnr,
    write_per_pixel_sam,
)
from hsfuse.gradcheck import DEFAULT_EPS, run_suite
from hsfuse.interpolation import upsample
from hsfuse.manifest import MANIFEST_NAME, build_manifest, changed_inputs, load_manifest, write_manifest
from hsfuse.metrics import MetricsReport, evaluate
from hsfuse.trainer import resolve_ratio, train
from hsfuse.types import BlurKernel, SrfMatrix

logger = logging.getLogger(__name__)

Handler = Callable[[argparse.Namespace, list[str]], int]


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _output_dir(args: argparse.Namespace) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dtype(args: argparse.Namespace) -> np.dtype:
    return Precision(args.precision).dtype


def _record(
    args: argparse.Namespace,
    argv: list[str],
    inputs: list[Path],
    outputs: list[Path],
    seeds: dict[str, int] | None = None,
    parameter_count: int | None = None,
) -> Path:
    flags = {key: value for key, value in vars(args).items() if key != "handler"}
    manifest = build_manifest(
        command=args.command,
        argv=argv,
        flags=flags,
        seeds=seeds or {},
        precision=args.precision,
        inputs=inputs,
        outputs=outputs,
        parameter_count=parameter_count,
    )
    path = _output_dir(args) / MANIFEST_NAME
    write_manifest(path, manifest)
    return path


def _print_written(paths: list[Path]) -> None:
    for path in paths:
        print(f"   wrote {path}")


def _print_report(report: MetricsReport, title: str = "") -> None:
    if title:
        print(title)
    for name, value in report.rows():
        print(f"   {name:<6} {value:>12.6f}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace, argv: list[str]) -> int:
    cfg = SimConfig(
        ratio=args.ratio,
        kernel_size=args.kernel_size,
        sigma=args.sigma,
        snr_hsi=args.snr_hsi,
        snr_msi=args.snr_msi,
        offset=args.offset,
        seed=args.seed,
    )
    cfg.validate()
    ref = load_cube(args.input, _dtype(args))
    out = _output_dir(args)
    scaled: list[Path] = []
    if args.scale_to_unit:
        ref = scale_to_unit(ref)
        scaled = [out / "ref_scaled.hsc"]
        save_cube(scaled[0], ref)
    srf = load_srf(args.srf) if args.srf else make_box_srf(ref.shape[0], args.srf_boxes)
    lr_hsi, hr_msi = simulate_wald(ref, cfg, srf)

    outputs = [out / "lr_hsi.hsc", out / "hr_msi.hsc", out / "kernel.krn", out / "srf.csv", *scaled]
    save_cube(outputs[0], lr_hsi)
    save_cube(outputs[1], hr_msi)
    save_kernel(outputs[2], make_gaussian_kernel(cfg.kernel_size, cfg.sigma))
    save_srf(outputs[3], srf)

    inputs = [Path(args.input)] + ([Path(args.srf)] if args.srf else [])
    manifest = _record(args, argv, inputs, outputs, seeds={"noise": cfg.seed})
    print(f"🛰  Simulated LR-HSI {lr_hsi.shape} and HR-MSI {hr_msi.shape}")
    _print_written([*outputs, manifest])
    return 0


def cmd_estimate(args: argparse.Namespace, argv: list[str]) -> int:
    dtype = _dtype(args)
    hsi = load_cube(args.lr_hsi, dtype)
    msi = load_cube(args.msi, dtype)
    cfg = BlindConfig(
        kernel_size=args.kernel_size,
        ratio=args.ratio or resolve_ratio(hsi, msi),
        offset=args.offset,
        iterations=args.iters,
        learning_rate=args.rate,
        seed=args.seed,
    )
    result = estimate_degradation(msi, hsi, cfg, dtype)

    out = _output_dir(args)
    outputs = [out / "kernel.krn", out / "kernel_normalized.krn", out / "srf.csv", out / "blind_loss.csv"]
    save_kernel(outputs[0], result.kernel)
    save_kernel(outputs[1], result.kernel_normalized)
    save_srf(outputs[2], result.R)
    write_loss_csv(outputs[3], result.loss_history, [cfg.learning_rate] * len(result.loss_history))

    manifest = _record(args, argv, [Path(args.lr_hsi), Path(args.msi)], outputs, seeds={"blind": cfg.seed})
    print(f"🔎 Best blind loss {result.best_loss:.6f} at iteration {result.best_iteration}")
    _print_written([*outputs, manifest])
    return 0


def _degradation_for_fusion(
    args: argparse.Namespace,
    hsi: np.ndarray,
    msi: np.ndarray,
    ratio: int,
    out: Path,
) -> tuple[BlurKernel, SrfMatrix, list[Path], list[Path]]:
    """Kernel and SRF from files, or from blind estimation when ``--blind`` is set."""
    if args.blind:
        cfg = BlindConfig(
            kernel_size=args.blind_kernel_size,
            ratio=ratio,
            offset=args.offset,
            iterations=args.blind_iters,
            learning_rate=args.blind_rate,
            seed=args.seed,
        )
        result = estimate_degradation(msi, hsi, cfg, hsi.dtype)
        written = [out / "kernel_normalized.krn", out / "srf.csv"]
        save_kernel(written[0], result.kernel_normalized)
        save_srf(written[1], result.R)
        return result.kernel_normalized, result.R, [], written

    if not (args.kernel and args.srf):
        raise ArgumentError("fuse needs both --kernel and --srf, or --blind to estimate them")
    return load_kernel(args.kernel), load_srf(args.srf), [Path(args.kernel), Path(args.srf)], []


def _miae_config(args: argparse.Namespace, rank: int, stages: int) -> MiaeConfig:
    return MiaeConfig(
        rank=rank,
        stages=stages,
        leaky_slope=args.leaky_slope,
        iterations=args.iters,
        batch=args.batch,
        patch=args.patch,
        stride=args.stride,
        learning_rate=args.rate,
        upsample=UpsampleMethod(args.upsample),
        seed=args.seed,
        log_every=args.log_every,
    )


def cmd_fuse(args: argparse.Namespace, argv: list[str]) -> int:
    dtype = _dtype(args)
    hsi = load_cube(args.lr_hsi, dtype)
    msi = load_cube(args.msi, dtype)
    ratio = resolve_ratio(hsi, msi)
    out = _output_dir(args)
    kernel, R, degradation_inputs, written = _degradation_for_fusion(args, hsi, msi, ratio, out)

    cfg = _miae_config(args, args.rank, args.stages)
    result = train(hsi, msi, kernel, R, cfg, offset=args.offset, dtype=dtype)

    outputs = [out / "fused.hsc", out / "loss.csv", *written]
    save_cube(outputs[0], result.fused)
    write_loss_csv(outputs[1], result.loss_history, result.lr_history)

    parameters = result.params.count()
    manifest = _record(
        args,
        argv,
        [Path(args.lr_hsi), Path(args.msi), *degradation_inputs],
        outputs,
        seeds={"train": cfg.seed},
        parameter_count=parameters,
    )
    print(f"✅ Fused cube {result.fused.shape} with J={cfg.rank}, K={cfg.stages} ({parameters} parameters)")
    _print_written([*outputs, manifest])
    return 0


def cmd_evaluate(args: argparse.Namespace, argv: list[str]) -> int:
    ref = load_cube(args.ref)
    report = evaluate(ref, load_cube(args.test), args.ratio)
    _print_report(report, f"📊 {args.test} against {args.ref}")

    out = _output_dir(args)
    json_path = Path(args.json) if args.json else out / "metrics.json"
    json_path.write_text(report.to_json() + "\n")
    outputs = [json_path]
    if args.per_band_csv:
        write_per_band_psnr(args.per_band_csv, report.per_band_psnr)
        outputs.append(Path(args.per_band_csv))
    if args.per_pixel_sam_csv:
        write_per_pixel_sam(args.per_pixel_sam_csv, report.sorted_per_pixel_sam)
        outputs.append(Path(args.per_pixel_sam_csv))

    inputs = [Path(args.ref), Path(args.test)]
    if args.baseline:
        baseline = evaluate(ref, load_cube(args.baseline), args.ratio)
        _print_report(baseline, f"📊 baseline {args.baseline}")
        print(f"   PSNR gain over baseline: {report.psnr_db - baseline.psnr_db:+.3f} dB")
        inputs.append(Path(args.baseline))

    manifest = _record(args, argv, inputs, outputs)
    _print_written([*outputs, manifest])
    return 0


def cmd_gradcheck(args: argparse.Namespace, argv: list[str]) -> int:
    results = run_suite(seed=args.seed, eps=args.eps, corrupt_op=args.corrupt_op)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(
            f"{status}  {result.name:<22} max rel err {result.max_rel_error:.3e}"
            f"  ({result.checked} checked, {result.skipped} skipped)"
        )
    _record(args, argv, [], [], seeds={"gradcheck": args.seed})
    failed = [result.name for result in results if not result.passed]
    if failed:
        print(f"❌ gradient check failed for: {', '.join(failed)}")
        return 1
    print(f"✅ all {len(results)} gradient checks passed")
    return 0


def cmd_upsample(args: argparse.Namespace, argv: list[str]) -> int:
    hsi = load_cube(args.lr_hsi, _dtype(args))
    up = upsample(hsi, args.ratio, args.method)
    out = _output_dir(args)
    path = out / f"upsampled_{args.method}.hsc"
    save_cube(path, up)
    manifest = _record(args, argv, [Path(args.lr_hsi)], [path])
    _print_written([path, manifest])
    return 0


def cmd_sweep(args: argparse.Namespace, argv: list[str]) -> int:
    """Train and evaluate every (rank, stages) pair on the same observations."""
    dtype = _dtype(args)
    ref = load_cube(args.ref)
    hsi = load_cube(args.lr_hsi, dtype)
    msi = load_cube(args.msi, dtype)
    kernel, R = load_kernel(args.kernel), load_srf(args.srf)
    ratio = resolve_ratio(hsi, msi)

    rows = []
    for rank in args.ranks:
        for stages in args.stages:
            result = train(hsi, msi, kernel, R, _miae_config(args, rank, stages), args.offset, dtype)
            report = evaluate(ref, result.fused, ratio)
            parameters = result.params.count()
            rows.append((rank, stages, report.rmse, report.psnr_db, report.sam_deg, report.ergas, report.uiqi, parameters))
            print(f"   J={rank:<4} K={stages:<2} PSNR {report.psnr_db:8.3f} dB  SAM {report.sam_deg:7.3f}  ({parameters} parameters)")

    out = _output_dir(args)
    csv_path = out / "sweep.csv"
    write_csv(csv_path, ("rank", "stages", "rmse", "psnr", "sam", "ergas", "uiqi", "parameters"), rows)
    inputs = [Path(p) for p in (args.ref, args.lr_hsi, args.msi, args.kernel, args.srf)]
    manifest = _record(args, argv, inputs, [csv_path], seeds={"train": args.seed})
    _print_written([csv_path, manifest])
    return 0


def cmd_replay(args: argparse.Namespace, argv: list[str]) -> int:
    try:
        manifest = load_manifest(args.manifest)
    except ValueError as e:
        raise FormatError(str(e)) from e
    for path in changed_inputs(manifest):
        logger.warning("Input %s changed or went missing since the manifest was written", path)

    recorded = [*manifest["argv"], "--precision", manifest.get("precision", Precision.FLOAT64.value)]
    if args.output_dir is not None:
        recorded += ["--output-dir", args.output_dir]
    print(f"🔁 Replaying: hsfuse {' '.join(manifest['argv'])}")
    replay_args = build_parser().parse_args(recorded)
    return dispatch(replay_args, recorded)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _common_parser(config: Config, output_dir: str | None = ".") -> argparse.ArgumentParser:
    """Flags shared by every command."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--precision",
        choices=[p.value for p in Precision],
        default=config.precision.value,
        help="floating-point width of all computation (default: %(default)s)",
    )
    common.add_argument("-v", "--verbose", action="store_true", default=config.verbose)
    common.add_argument("--output-dir", default=output_dir, help="directory for outputs and manifest.json")
    return common


def _training_parser(config: Config) -> argparse.ArgumentParser:
    miae = config.miae
    training = argparse.ArgumentParser(add_help=False)
    training.add_argument("--iters", type=int, default=miae.iterations)
    training.add_argument("--batch", type=int, default=miae.batch)
    training.add_argument("--patch", type=int, default=miae.patch)
    training.add_argument("--stride", type=int, default=miae.stride)
    training.add_argument("--rate", type=float, default=miae.learning_rate)
    training.add_argument("--leaky-slope", type=float, default=miae.leaky_slope)
    training.add_argument("--upsample", choices=[m.value for m in UpsampleMethod], default=miae.upsample.value)
    training.add_argument("--offset", type=int, default=None, help="decimation phase (default: ratio // 2)")
    training.add_argument("--seed", type=int, default=miae.seed)
    training.add_argument("--log-every", type=int, default=miae.log_every)
    return training


def build_parser(config: Config | None = None) -> argparse.ArgumentParser:
    config = config or Config.from_env()
    common = _common_parser(config)
    training = _training_parser(config)
    sim, miae, blind = config.sim, config.miae, config.blind

    parser = argparse.ArgumentParser(prog="hsfuse", description="Hyperspectral and multispectral image fusion")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("simulate", parents=[common], help="simulate observations from a reference cube")
    p.add_argument("--input", required=True, help="reference HR-HSI cube (.hsc)")
    p.add_argument("--ratio", type=int, default=sim.ratio)
    p.add_argument("--kernel-size", type=int, default=sim.kernel_size)
    p.add_argument("--sigma", type=float, default=sim.sigma)
    p.add_argument("--snr-hsi", type=float, default=sim.snr_hsi, help="dB, or inf for no noise")
    p.add_argument("--snr-msi", type=float, default=sim.snr_msi, help="dB, or inf for no noise")
    p.add_argument("--offset", type=int, default=sim.offset)
    p.add_argument("--seed", type=int, default=sim.seed)
    p.add_argument("--scale-to-unit", action="store_true", help="min-max scale the reference to [0, 1] first")
    srf = p.add_mutually_exclusive_group()
    srf.add_argument("--srf", help="SRF matrix (.csv)")
    srf.add_argument("--srf-boxes", type=int, default=4, help="box SRF with this many MSI bands")
    p.set_defaults(handler=cmd_simulate)

    p = commands.add_parser("estimate", parents=[common], help="blindly estimate the blur kernel and SRF")
    p.add_argument("--lr-hsi", required=True)
    p.add_argument("--msi", required=True)
    p.add_argument("--ratio", type=int, default=None, help="default: inferred from the image sizes")
    p.add_argument("--kernel-size", type=int, default=blind.kernel_size)
    p.add_argument("--iters", type=int, default=blind.iterations)
    p.add_argument("--rate", type=float, default=blind.learning_rate)
    p.add_argument("--offset", type=int, default=blind.offset)
    p.add_argument("--seed", type=int, default=blind.seed)
    p.set_defaults(handler=cmd_estimate)

    p = commands.add_parser("fuse", parents=[common, training], help="train the fusion network and fuse")
    p.add_argument("--lr-hsi", required=True)
    p.add_argument("--msi", required=True)
    p.add_argument("--kernel", help="blur kernel (.krn)")
    p.add_argument("--srf", help="SRF matrix (.csv)")
    p.add_argument("--blind", action="store_true", help="estimate kernel and SRF first")
    p.add_argument("--blind-kernel-size", type=int, default=blind.kernel_size)
    p.add_argument("--blind-iters", type=int, default=blind.iterations)
    p.add_argument("--blind-rate", type=float, default=blind.learning_rate)
    p.add_argument("--rank", type=int, default=miae.rank)
    p.add_argument("--stages", type=int, default=miae.stages)
    p.set_defaults(handler=cmd_fuse)

    p = commands.add_parser("evaluate", parents=[common], help="full-reference quality metrics")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--json", help="metrics JSON path (default: OUTPUT_DIR/metrics.json)")
    p.add_argument("--per-band-csv")
    p.add_argument("--per-pixel-sam-csv")
    p.add_argument("--baseline", help="second test cube; prints the PSNR gain over it")
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser("gradcheck", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--corrupt-op", default=None, help=argparse.SUPPRESS)
    p.set_defaults(handler=cmd_gradcheck)

    p = commands.add_parser("upsample", parents=[common], help="upsample an LR-HSI onto the HR grid")
    p.add_argument("--lr-hsi", required=True)
    p.add_argument("--ratio", type=int, required=True)
    p.add_argument("--method", choices=[m.value for m in UpsampleMethod], default=UpsampleMethod.BILINEAR.value)
    p.set_defaults(handler=cmd_upsample)

    p = commands.add_parser("sweep", parents=[common, training], help="rank and stage study")
    p.add_argument("--ref", required=True)
    p.add_argument("--lr-hsi", required=True)
    p.add_argument("--msi", required=True)
    p.add_argument("--kernel", required=True)
    p.add_argument("--srf", required=True)
    p.add_argument("--ranks", type=_int_list, default=[miae.rank])
    p.add_argument("--stages", type=_int_list, default=[miae.stages])
    p.set_defaults(handler=cmd_sweep)

    # None keeps the recorded --output-dir
    replay_common = _common_parser(config, output_dir=None)
    p = commands.add_parser(
        "replay", parents=[replay_common], help="re-run the command recorded in a manifest"
    )
    p.add_argument("manifest")
    p.set_defaults(handler=cmd_replay)

    return parser


def dispatch(args: argparse.Namespace, argv: list[str]) -> int:
    handler: Handler = args.handler
    return handler(args, argv)
