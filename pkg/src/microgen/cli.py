"""Command-line interface wiring all toolkit modules.

Every run writes a JSON manifest (command, arguments, seed, tool version)
next to its outputs so any result can be reproduced bit-exactly by
re-running the recorded argv. Exit codes: 0 success, 2 usage error,
1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, gan
from .metrics import (AXES, compute_report, tpcf, write_metrics_csv,
                      write_tpcf_csv)
from .transport import export_flux_map, solve_diffusion
from .volio import (DEFAULT_GREY_MAP, FormatError, read_mgv1, read_raw_grey,
                    read_text_volume, write_mgv1)
from .voxel import SubvolumeSpec, decode, iter_subvolumes, subvolume_count
from .nn.weights import (KIND_BATCHNORM, KIND_CONV, PAD_MODE_NAMES,
                         read_mgw1)


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected NX,NY,NZ, got {text!r}")
    return tuple(int(p) for p in parts)


def _parse_grey_map(text: str) -> dict[int, int]:
    table = {}
    for pair in text.split(","):
        grey, _, phase = pair.partition(":")
        table[int(grey)] = int(phase)
    return table


def _write_manifest(out_path: Path, args: argparse.Namespace,
                    extra: dict | None = None) -> None:
    manifest = {
        "tool": "microgen",
        "version": __version__,
        "command": args.command,
        "argv": args._argv,
        "threads": args.threads,
    }
    if hasattr(args, "seed"):
        manifest["seed"] = args.seed
    if extra:
        manifest.update(extra)
    with open(out_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _manifest_for(output: Path) -> Path:
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + ".manifest.json")


def _load_volume(path: str):
    if path.endswith(".txt"):
        return read_text_volume(path)
    return read_mgv1(path)


def _input_volumes(paths: list[str]) -> list[tuple[str, object]]:
    out = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            for child in sorted(path.glob("*.mgv")):
                out.append((child.stem, read_mgv1(child)))
        else:
            out.append((path.stem, _load_volume(p)))
    if not out:
        raise ValueError("no input volumes found")
    return out


def cmd_encode(args) -> int:
    if args.format == "text":
        grid = read_text_volume(args.input)
    else:
        if args.dims is None:
            raise ValueError("--dims is required for raw input")
        grey_map = _parse_grey_map(args.map) if args.map else DEFAULT_GREY_MAP
        grid = read_raw_grey(args.input, args.dims, args.spacing, grey_map)
    out = Path(args.output)
    write_mgv1(out, grid)
    _write_manifest(_manifest_for(out), args,
                    {"input": args.input, "output": str(out),
                     "dims": grid.dims, "phase_count": grid.phase_count})
    return 0


def cmd_sample(args) -> int:
    grid = _load_volume(args.input)
    spec = SubvolumeSpec(size=args.size, stride=args.stride)
    total = subvolume_count(grid.dims, spec)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    width = max(6, len(str(total)))
    count = 0
    for i, sub in enumerate(iter_subvolumes(grid, spec)):
        write_mgv1(out_dir / f"sub_{i:0{width}d}.mgv", sub)
        count += 1
    _write_manifest(_manifest_for(out_dir), args,
                    {"input": args.input, "output": str(out_dir),
                     "size": args.size, "stride": args.stride,
                     "subvolumes": count})
    print(f"wrote {count} sub-volumes to {out_dir}")
    return 0


def cmd_metrics(args) -> int:
    rows = []
    for name, grid in _input_volumes(args.inputs):
        report = compute_report(grid, boundary=args.boundary)
        rows.extend(report.as_rows(name))
    out = Path(args.out)
    write_metrics_csv(out, rows)
    _write_manifest(_manifest_for(out), args,
                    {"inputs": args.inputs, "output": str(out),
                     "boundary": args.boundary})
    print(f"wrote {len(rows)} metric rows to {out}")
    return 0


def cmd_tpcf(args) -> int:
    grid = _load_volume(args.input)
    axes = [args.axis] if args.axis != "all" else list(AXES)
    phases = [args.phase] if args.phase is not None else list(range(grid.phase_count))
    curves = []
    for phase in phases:
        for axis in axes:
            r_max = args.rmax
            if r_max is None:
                r_max = grid.dims[AXES[axis]] - 1
            curves.append(tpcf(grid, phase, axis, r_max, boundary=args.boundary))
    out = Path(args.out)
    write_tpcf_csv(out, curves)
    _write_manifest(_manifest_for(out), args,
                    {"input": args.input, "output": str(out),
                     "boundary": args.boundary})
    print(f"wrote {len(curves)} TPCF curves to {out}")
    return 0


def cmd_diffuse(args) -> int:
    grid = _load_volume(args.input)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    phases = [args.phase] if args.phase is not None else list(range(grid.phase_count))
    directions = [args.dir] if args.dir != "all" else list(AXES)
    rows = []
    name = Path(args.input).stem
    for phase in phases:
        for direction in directions:
            result, flux = solve_diffusion(
                grid, phase, direction, lateral_bc=args.bc, tol=args.tol,
                max_iter=args.max_iter, omega=args.omega)
            rows.append((name, phase, "D_rel", direction, result.d_rel))
            tau = "inf" if math.isinf(result.tortuosity) else result.tortuosity
            rows.append((name, phase, "tau", direction, tau))
            stem = f"flux_p{phase}_{direction}"
            export_flux_map(flux, out_dir / f"{stem}.mgf",
                            csv_path=out_dir / f"{stem}_slices.csv")
            status = "converged" if result.converged else "NOT converged"
            print(f"phase {phase} dir {direction}: D_rel={result.d_rel:.9g} "
                  f"tau={tau} ({result.iterations} sweeps, {status})")
    write_metrics_csv(out_dir / "transport.csv", rows)
    _write_manifest(_manifest_for(out_dir), args,
                    {"input": args.input, "output": str(out_dir),
                     "lateral_bc": args.bc, "tol": args.tol})
    return 0


def _load_z(args, channels: int) -> np.ndarray:
    if args.z_file:
        raw = np.fromfile(args.z_file, dtype="<f4")
        alpha = round((raw.size / channels) ** (1 / 3))
        if channels * alpha ** 3 != raw.size:
            raise ValueError(f"{args.z_file}: {raw.size} floats do not form "
                             f"({channels}, a, a, a)")
        return raw.reshape(channels, alpha, alpha, alpha)
    return gan.sample_latent(args.seed, args.alpha, channels=channels)


def cmd_generate(args) -> int:
    generator = gan.load_generator(args.weights)
    z = _load_z(args, generator.in_channels)
    start = time.perf_counter()
    if args.periodic:
        oh = gan.generate_periodic(generator, z, spacing_nm=args.spacing)
    else:
        oh = gan.generate(generator, z, spacing_nm=args.spacing)
    elapsed = time.perf_counter() - start
    grid = decode(oh)
    out = Path(args.out)
    write_mgv1(out, grid)
    if args.save_onehot:
        oh.values.astype("<f4").tofile(args.save_onehot)
    _write_manifest(_manifest_for(out), args,
                    {"weights": args.weights, "output": str(out),
                     "alpha": args.alpha, "periodic": args.periodic,
                     "edge": grid.dims[0], "seconds": elapsed})
    print(f"generated {grid.dims[0]}^3 volume in {elapsed:.2f} s "
          f"(seed={args.seed})")
    return 0


def cmd_interpolate(args) -> int:
    generator = gan.load_generator(args.weights)
    z_start = gan.sample_latent(args.seed, args.alpha,
                                channels=generator.in_channels)
    z_end = gan.sample_latent(args.seed_end, args.alpha,
                              channels=generator.in_channels)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.steps < 2:
        raise ValueError("need at least 2 interpolation steps")
    for i in range(args.steps):
        beta = i / (args.steps - 1)
        z = gan.interpolate_latent(z_start, z_end, beta)
        grid = decode(gan.generate(generator, z, spacing_nm=args.spacing))
        write_mgv1(out_dir / f"interp_{i:03d}_beta{beta:.3f}.mgv", grid)
    _write_manifest(_manifest_for(out_dir), args,
                    {"weights": args.weights, "output": str(out_dir),
                     "steps": args.steps, "seed_end": args.seed_end})
    print(f"wrote {args.steps} interpolated volumes to {out_dir} "
          f"(seeds {args.seed} -> {args.seed_end})")
    return 0


TRAIN_TOY_KEYS = ("data", "cycles", "batch", "lr", "seed", "latent_dim",
                  "dataset_size", "label_smoothing", "update_ratio")


def cmd_train_toy(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    settings = {k: getattr(args, k) for k in TRAIN_TOY_KEYS}
    if args.config:
        with open(args.config) as f:
            overrides = json.load(f)
        unknown = set(overrides) - set(TRAIN_TOY_KEYS)
        if unknown:
            raise ValueError(f"{args.config}: unknown config keys {sorted(unknown)}")
        # config file fills in whatever was not given explicitly on the CLI
        given = {a.lstrip("-").split("=")[0].replace("-", "_")
                 for a in args._argv if a.startswith("--")}
        for key, value in overrides.items():
            if key not in given:
                settings[key] = value
    if settings["data"]:
        volumes = _input_volumes([settings["data"]])
        from .voxel import one_hot_encode
        dataset = [one_hot_encode(grid) for _, grid in volumes]
    else:
        dataset = gan.make_stripe_dataset(settings["dataset_size"],
                                          seed=settings["seed"])
    config = gan.TrainConfig(lr=settings["lr"],
                             batch_size=settings["batch"],
                             max_cycles=settings["cycles"],
                             seed=settings["seed"],
                             label_smoothing=settings["label_smoothing"],
                             update_ratio=settings["update_ratio"])
    phase_count = dataset[0].phase_count
    generator = gan.build_net(gan.toy_generator_table(settings["latent_dim"],
                                                      phase_count),
                              seed=settings["seed"])
    discriminator = gan.build_net(gan.toy_discriminator_table(phase_count),
                                  seed=settings["seed"] + 1)
    result = gan.train(dataset, config, generator, discriminator)
    gan.save_gan(out_dir / "weights.mgw", discriminator, generator)
    for snap in result.snapshots:
        write_mgv1(out_dir / f"snapshot_epoch{snap['epoch']:08.2f}.mgv",
                   snap["grid"])
    with open(out_dir / "training_log.csv", "w") as f:
        f.write("step,epoch,J_D,J_G,d_real_mean,d_fake_mean\n")
        for row in result.history:
            f.write(f"{row['step']},{row['epoch']:.9g},{row['j_d']:.9g},"
                    f"{row['j_g']:.9g},{row['d_real_mean']:.9g},"
                    f"{row['d_fake_mean']:.9g}\n")
    snaps = [{"epoch": s["epoch"],
              "volume_fractions": list(map(float, s["volume_fractions"]))}
             for s in result.snapshots]
    args.seed = settings["seed"]     # manifest records the effective seed
    _write_manifest(_manifest_for(out_dir), args,
                    {"output": str(out_dir), "cycles": len(result.history),
                     "config": settings,
                     "d_updates": result.d_updates,
                     "g_updates": result.g_updates,
                     "snapshots": snaps})
    last = snaps[-1]["volume_fractions"] if snaps else []
    print(f"trained {len(result.history)} cycles (seed={settings['seed']}, "
          f"D updates {result.d_updates}, G updates {result.g_updates}); "
          f"final sample phase fractions {last}")
    return 0


def cmd_inspect_weights(args) -> int:
    records = read_mgw1(args.weights)
    kernels = [r for r in records if r.kind != KIND_BATCHNORM]
    bn_follow = set()
    for i, rec in enumerate(records):
        if rec.kind == KIND_BATCHNORM and i > 0:
            bn_follow.add(id(records[i - 1]))
    header = (f"{'#':>2}  {'kind':<6} {'in':>4} {'out':>4}  {'kernel':<8}"
              f" {'stride':>6} {'pad':>3}  {'pad_mode':<8} {'bias':<4} {'bn':<3}")
    print(header)
    print("-" * len(header))
    total_params = 0
    for i, rec in enumerate(kernels):
        kind = "conv" if rec.kind == KIND_CONV else "convT"
        kd, kh, kw = rec.kernel
        n_params = rec.weight.size + (rec.bias.size if rec.bias is not None else 0)
        total_params += n_params
        print(f"{i + 1:>2}  {kind:<6} {rec.in_ch:>4} {rec.out_ch:>4}  "
              f"{f'{kd}x{kh}x{kw}':<8} {rec.stride:>6} {rec.pad:>3}  "
              f"{PAD_MODE_NAMES[rec.pad_mode]:<8} "
              f"{'yes' if rec.has_bias else 'no':<4} "
              f"{'yes' if id(rec) in bn_follow else 'no':<3}")
    bn_params = sum(4 * r.out_ch for r in records if r.kind == KIND_BATCHNORM)
    print(f"{len(kernels)} parameterized layers, "
          f"{total_params} kernel/bias parameters, "
          f"{bn_params} batch-norm parameters")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="microgen",
        description="Multi-phase 3D microstructure generation and analysis")
    parser.add_argument("--version", action="version",
                        version=f"microgen {__version__}")
    parser.add_argument("--threads", type=int,
                        default=int(os.environ.get("MICROGEN_THREADS", "0")),
                        help="cap internal parallelism; 1 forces the "
                             "deterministic sequential mode (default: "
                             "MICROGEN_THREADS or unlimited)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="convert text/raw greyscale volumes to MGV1")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--format", choices=("text", "raw"), default="text")
    p.add_argument("--dims", type=_parse_dims, default=None,
                   help="NX,NY,NZ (raw input only)")
    p.add_argument("--spacing", type=float, default=1.0,
                   help="voxel edge in nm (raw input only)")
    p.add_argument("--map", default=None,
                   help="grey:phase pairs, e.g. 0:0,127:1,255:2")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("sample", help="extract cubic training sub-volumes")
    p.add_argument("input")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--stride", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("metrics",
                       help="volume fraction / SSA / TPB of volumes to CSV")
    p.add_argument("inputs", nargs="+", help="MGV1 files or directories")
    p.add_argument("--boundary", choices=("truncated", "periodic"),
                   default="truncated")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("tpcf", help="two-point correlation curves to CSV")
    p.add_argument("input")
    p.add_argument("--phase", type=int, default=None,
                   help="phase id (default: all phases)")
    p.add_argument("--axis", choices=("x", "y", "z", "all"), default="all")
    p.add_argument("--rmax", type=int, default=None)
    p.add_argument("--boundary", choices=("truncated", "periodic"),
                   default="truncated")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tpcf)

    p = sub.add_parser("diffuse", help="steady-state diffusion / tortuosity")
    p.add_argument("input")
    p.add_argument("--phase", type=int, default=None,
                   help="phase id (default: all phases)")
    p.add_argument("--dir", choices=("x", "y", "z", "all"), default="z")
    p.add_argument("--bc", choices=("mirror", "periodic"), default="mirror")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--omega", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("generate", help="sample the trained generator")
    p.add_argument("--weights", required=True)
    p.add_argument("--alpha", type=int, default=1,
                   help="latent spatial extent (output edge 64+(a-1)*16)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--periodic", action="store_true",
                   help="run all layers with circular padding")
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--z-file", default=None,
                   help="raw f32 latent field instead of --seed sampling")
    p.add_argument("--save-onehot", default=None,
                   help="also dump the soft one-hot output as raw f32")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("interpolate", help="latent-space interpolation sweep")
    p.add_argument("--weights", required=True)
    p.add_argument("--steps", type=int, default=11)
    p.add_argument("--seed", type=int, default=0, help="start latent seed")
    p.add_argument("--seed-end", type=int, default=1, help="end latent seed")
    p.add_argument("--alpha", type=int, default=1)
    p.add_argument("--spacing", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("train-toy", help="desk-scale adversarial training")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None,
                   help="JSON file with any of the flags below; explicit "
                        "flags win")
    p.add_argument("--data", default=None,
                   help="directory of MGV1 volumes (default: synthetic stripes)")
    p.add_argument("--cycles", type=int, default=500)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latent-dim", type=int, default=12)
    p.add_argument("--dataset-size", type=int, default=64)
    p.add_argument("--label-smoothing", type=float, default=0.1)
    p.add_argument("--update-ratio", type=int, default=2)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("inspect-weights", help="print the MGW1 layer table")
    p.add_argument("weights")
    p.set_defaults(func=cmd_inspect_weights)

    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args._argv = argv
    try:
        if args.threads and args.threads > 0:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=args.threads):
                return args.func(args)
        return args.func(args)
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
