"""Command-line surface for the reconstruction pipeline.

Three subcommands:

* generate: write a deterministic sample cloud (csv) and its manifest.
* reconstruct: run cloud -> distance -> threshold dynamics -> interface,
  writing fields (TRF1), interface geometry (csv/svg or obj), the energy
  trace csv, metrics, and a run manifest (written last).
* bench: canned experiment suites, each emitting results.csv plus manifest.

Exit codes for reconstruct: 0 converged, 1 bad input, 2 internal
consistency failure (energy increase in the factored scheme), 3
non-convergence; on 3 the outputs are still written.

The environment variable THRESH_RECON_THREADS caps transform parallelism.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .cloud import (
    PRNG_ID,
    PointCloud,
    add_noise,
    five_fold_spec,
    gen_polar_cloud,
    gen_torus_cloud,
    load_cloud,
    m_fold_spec,
    save_cloud,
    three_fold_spec,
    TorusCloudSpec,
)
from .extract import (
    Polyline2D,
    hausdorff_distance,
    polylines_to_csv,
    polylines_to_svg,
    sample_polar_curve,
    trimesh_to_obj,
)
from .grid import dump_field, make_grid
from .heat import fft_workers
from .pipeline import reconstruct_cloud
from .solver import (
    EnergyIncreaseError,
    InitSpec,
    halving_schedule,
    write_energy_trace,
)
from .distance import SweepConvergenceError

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_INTERNAL = 2
EXIT_NOT_CONVERGED = 3

_ALG_NAMES = {"1": "sym", "2": "fac"}

BENCH_SUITES = (
    "mfold-runtime",
    "energy-decay",
    "p-sweep",
    "noise-sweep",
    "resolution-sweep",
    "torus-3d",
)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> Dict[str, str]:
    import numba
    import scipy
    import skimage

    return {
        "threshrecon": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "numba": numba.__version__,
        "scikit-image": skimage.__version__,
    }


def _write_manifest(
    out_dir: Path,
    command: str,
    config: Dict,
    inputs: Dict[str, str],
    seed: Optional[int],
    timings: Dict[str, float],
    outputs: List[str],
) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "seed": seed,
        "prng": PRNG_ID,
        "versions": _versions(),
        "fft_workers": fft_workers(),
        "timings": timings,
        "outputs": sorted(outputs),
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _emit_metrics(metrics: Dict, out_dir: Path) -> None:
    for key, value in metrics.items():
        print(f"{key}={value}")
    with open(out_dir / "metrics.txt", "w") as fh:
        for key, value in metrics.items():
            fh.write(f"{key}={value}\n")
    with open(out_dir / "metrics.jsonl", "w") as fh:
        fh.write(json.dumps(metrics, sort_keys=True) + "\n")


def parse_schedule(text: str) -> tuple:
    """Either "tau1:k" (tau1 halved k-1 times) or an explicit comma list."""
    text = text.strip()
    if ":" in text:
        head, _, count = text.partition(":")
        return halving_schedule(float(head), int(count))
    parts = tuple(float(p) for p in text.split(",") if p.strip())
    if not parts:
        raise ValueError(f"empty schedule {text!r}")
    return parts


def _parse_box(text: Optional[str], dim: int) -> tuple:
    if text is None:
        return (1.6, 1.6, 0.6)[:dim]
    widths = tuple(float(p) for p in text.split(","))
    if len(widths) != dim:
        raise ValueError(f"--box needs {dim} half-widths, got {len(widths)}")
    return widths


def cmd_generate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    if args.kind == "torus":
        spec = TorusCloudSpec(n_points=args.n or 2000, seed=args.seed)
        cloud = gen_torus_cloud(spec)
        spec_desc = (
            f"torus ring_radius={spec.ring_radius} tube_radius={spec.tube_radius} "
            f"n={spec.n_points}"
        )
    else:
        if args.kind == "five-fold":
            spec = five_fold_spec(args.n or 200)
        elif args.kind == "three-fold":
            spec = three_fold_spec(args.n or 100)
        else:
            if args.m is None:
                raise ValueError("--m is required for --kind m-fold")
            spec = m_fold_spec(args.m, args.n or 200)
        cloud = gen_polar_cloud(spec)
        spec_desc = (
            f"polar folds={spec.folds} amplitude={spec.amplitude} "
            f"phase={spec.phase} base={spec.base} n={spec.n_points}"
        )
    comments = [f"kind={args.kind}", spec_desc, f"prng={PRNG_ID}", f"seed={args.seed}"]
    if args.noise > 0:
        cloud = add_noise(cloud, args.noise, seed=args.seed)
        comments.append(f"noise_mu={args.noise}")
    cloud_path = out_dir / "cloud.csv"
    save_cloud(cloud, cloud_path, comment_lines=comments)
    timings = {"total": time.perf_counter() - t0}
    _write_manifest(
        out_dir,
        "generate",
        config={
            "kind": args.kind,
            "n": cloud.n_points,
            "m": args.m,
            "noise": args.noise,
        },
        inputs={},
        seed=args.seed,
        timings=timings,
        outputs=["cloud.csv"],
    )
    print(f"wrote {cloud_path} ({cloud.n_points} points, dim {cloud.dim})")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cloud_path = Path(args.cloud)
    cloud = load_cloud(cloud_path, format=args.format)
    grid = make_grid(cloud.dim, args.grid, extent=args.extent)

    if args.tau is not None and args.schedule is not None:
        raise ValueError("pass either --tau or --schedule, not both")
    if args.no_adaptive and args.tau is None:
        raise ValueError("--no-adaptive requires --tau")
    schedule = parse_schedule(args.schedule) if args.schedule else None
    tau = None
    if args.tau is not None:
        if args.no_adaptive:
            tau = args.tau
        else:
            # A bare --tau still runs the staged solver, starting there.
            schedule = halving_schedule(args.tau, 5)

    if args.init == "ball":
        init = InitSpec.ball(radius=args.radius)
    elif args.init == "box":
        init = InitSpec.box(_parse_box(args.box, grid.dim))
    elif args.init == "levelset":
        init = InitSpec.level_set(args.sigma if args.sigma else 4.0 * grid.h)
    else:
        init = None  # dimension-dependent default

    result = reconstruct_cloud(
        cloud,
        grid,
        algorithm=_ALG_NAMES[args.alg],
        p=args.p,
        tau=tau,
        schedule=schedule,
        dist_backend=args.dist or "auto",
        init=init,
        iso_source=args.iso_source,
        iso=args.iso,
        log_energy=not args.no_energy_log,
    )

    outputs = []

    def _write(name, writer, *a):
        writer(*a, out_dir / name)
        outputs.append(name)

    t0 = time.perf_counter()
    _write("u_final.trf", dump_field, result.solve.u_final)
    _write("mollified.trf", dump_field, result.mollified)
    _write("distance.trf", dump_field, result.distance)
    _write("energy_trace.csv", write_energy_trace, result.solve)
    if result.interface is not None:
        if isinstance(result.interface, Polyline2D):
            _write("interface.csv", polylines_to_csv, result.interface)
            _write("interface.svg", polylines_to_svg, result.interface)
        else:
            _write("interface.obj", trimesh_to_obj, result.interface)
    result.timings["write"] = time.perf_counter() - t0

    metrics = {
        "converged": result.solve.converged,
        "cycle_detected": result.solve.cycle_detected,
        "stages": len(result.solve.taus),
        "iterations": sum(result.solve.iterations_per_stage),
        "convolutions": result.solve.convolutions,
        "algorithm": result.config.algorithm,
        "p": result.config.p,
        "dist_backend": result.dist_backend,
        "iso_source": result.iso_source,
        "grid": grid.cells_per_axis,
        "dim": grid.dim,
        "n_points": cloud.n_points,
    }
    energies = [e.energy for e in result.solve.energy_trace if e.energy is not None]
    if energies:
        metrics["energy_first"] = energies[0]
        metrics["energy_last"] = energies[-1]
    if result.interface is not None:
        if isinstance(result.interface, Polyline2D):
            metrics["loops"] = len(result.interface.loops)
            metrics["interface_vertices"] = result.interface.n_vertices
        else:
            metrics["interface_vertices"] = len(result.interface.vertices)
            metrics["interface_faces"] = len(result.interface.faces)
        metrics["hausdorff_to_cloud"] = hausdorff_distance(result.interface, cloud)
        metrics["hausdorff_samples_per_side"] = 10_000
    else:
        metrics["extract_error"] = result.extract_error
    for phase, seconds in result.timings.items():
        metrics[f"time_{phase}"] = round(seconds, 6)
    _emit_metrics(metrics, out_dir)
    outputs += ["metrics.txt", "metrics.jsonl"]

    _write_manifest(
        out_dir,
        "reconstruct",
        config={
            "cloud": str(cloud_path),
            "grid": args.grid,
            "extent": args.extent,
            "alg": args.alg,
            "algorithm": _ALG_NAMES[args.alg],
            "p": args.p,
            "p_outside_recommended": args.p < 2.0,
            "tau": args.tau,
            "adaptive": not args.no_adaptive,
            "schedule": list(schedule) if schedule else None,
            "taus_run": list(result.solve.taus),
            "dist": result.dist_backend,
            "init": args.init,
            "radius": args.radius,
            "box": args.box,
            "sigma": args.sigma,
            "iso": args.iso,
            "iso_source": args.iso_source,
            "energy_log": not args.no_energy_log,
        },
        inputs={str(cloud_path): _sha256(cloud_path)},
        seed=args.seed,
        timings=result.timings,
        outputs=outputs,
    )
    if not result.solve.converged or result.interface is None:
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _bench_rows(suite: str, args) -> List[Dict]:
    rows: List[Dict] = []
    if suite == "mfold-runtime":
        grid = make_grid(2, 128)
        for m in range(3, 9):
            cloud = gen_polar_cloud(m_fold_spec(m, 200))
            res = reconstruct_cloud(cloud, grid, log_energy=False)
            rows.append(
                {
                    "m": m,
                    "n_points": cloud.n_points,
                    "grid": grid.cells_per_axis,
                    "converged": res.solve.converged,
                    "iterations": sum(res.solve.iterations_per_stage),
                    "convolutions": res.solve.convolutions,
                    "time_distance": res.timings["distance"],
                    "time_solve": res.timings["solve"],
                    "time_extract": res.timings["extract"],
                    "time_total": res.timings["total"],
                }
            )
    elif suite == "energy-decay":
        from .solver import SolveConfig, init_guess, make_weights, run_fixed_tau
        from .distance import distance_brute
        from .heat import SpectralPlan

        grid = make_grid(2, 128)
        cloud = gen_polar_cloud(three_fold_spec(100))
        dist = distance_brute(cloud, grid)
        weights = make_weights(dist, 2.0)
        u0 = init_guess(InitSpec.ball(radius=2.0), grid)
        plan = SpectralPlan(grid)
        for algorithm in ("sym", "fac"):
            for tau in (0.02, 0.01, 0.005):
                cfg = SolveConfig(algorithm=algorithm, tau=tau)
                res = run_fixed_tau(cfg, u0, weights, plan)
                for entry in res.energy_trace:
                    rows.append(
                        {
                            "algorithm": algorithm,
                            "tau": tau,
                            "iteration": entry.iteration,
                            "energy": entry.energy,
                            "nodes_flipped": entry.nodes_flipped,
                            "converged": res.converged,
                        }
                    )
    elif suite == "p-sweep":
        grid = make_grid(2, 128)
        cloud = gen_polar_cloud(five_fold_spec(200))
        spec = five_fold_spec(200)
        reference = sample_polar_curve(spec.radius)
        for p in (1.0, 2.0, 3.0, 4.0, 5.0):
            res = reconstruct_cloud(cloud, grid, p=p, log_energy=False)
            hd = (
                hausdorff_distance(res.interface, reference)
                if res.interface is not None
                else math.nan
            )
            rows.append(
                {
                    "p": p,
                    "hausdorff": hd,
                    "converged": res.solve.converged,
                    "iterations": sum(res.solve.iterations_per_stage),
                    "time_total": res.timings["total"],
                }
            )
    elif suite == "noise-sweep":
        # Jittered clouds need a narrower first kernel than the clean
        # default, or the early sweep walks through the blurred trench.
        grid = make_grid(2, 128)
        spec = five_fold_spec(200)
        clean = gen_polar_cloud(spec)
        reference = sample_polar_curve(spec.radius)
        sched = halving_schedule(0.01, 4)
        for idx, mu in enumerate((0.01, 0.02, 0.04, 0.08)):
            cloud = add_noise(clean, mu, seed=args.seed + idx)
            res = reconstruct_cloud(cloud, grid, schedule=sched, log_energy=False)
            hd = (
                hausdorff_distance(res.interface, reference)
                if res.interface is not None
                else math.nan
            )
            rows.append(
                {
                    "mu": mu,
                    "seed": args.seed + idx,
                    "hausdorff": hd,
                    "converged": res.solve.converged,
                    "time_total": res.timings["total"],
                }
            )
    elif suite == "resolution-sweep":
        # Same narrowed first kernel: at 256 cells and up the default
        # schedule's opening stage overruns the data band entirely.
        spec = five_fold_spec(200)
        cloud = gen_polar_cloud(spec)
        reference = sample_polar_curve(spec.radius)
        sched = halving_schedule(0.01, 4)
        for n in (64, 128, 256, 512):
            grid = make_grid(2, n)
            res = reconstruct_cloud(cloud, grid, schedule=sched, log_energy=False)
            hd = (
                hausdorff_distance(res.interface, reference)
                if res.interface is not None
                else math.nan
            )
            rows.append(
                {
                    "grid": n,
                    "h": grid.h,
                    "hausdorff": hd,
                    "converged": res.solve.converged,
                    "iterations": sum(res.solve.iterations_per_stage),
                    "time_total": res.timings["total"],
                }
            )
    elif suite == "torus-3d":
        grid = make_grid(3, 64)
        spec = TorusCloudSpec(n_points=2000, seed=args.seed)
        cloud = gen_torus_cloud(spec)
        res = reconstruct_cloud(
            cloud,
            grid,
            schedule=halving_schedule(0.02, 4),
            init=InitSpec.box((1.6, 1.6, 0.6)),
            log_energy=False,
        )
        if res.interface is not None:
            v = res.interface.vertices
            ring = np.sqrt(v[:, 0] ** 2 + v[:, 1] ** 2) - spec.ring_radius
            residual = ring**2 + v[:, 2] ** 2 - spec.tube_radius**2
            rms = float(np.sqrt(np.mean(residual**2)))
            nverts, nfaces = len(v), len(res.interface.faces)
        else:
            rms, nverts, nfaces = math.nan, 0, 0
        rows.append(
            {
                "grid": grid.cells_per_axis,
                "rms_residual": rms,
                "vertices": nverts,
                "faces": nfaces,
                "converged": res.solve.converged,
                "time_distance": res.timings["distance"],
                "time_solve": res.timings["solve"],
                "time_total": res.timings["total"],
            }
        )
    else:
        raise ValueError(f"unknown suite {suite!r}; choose from {BENCH_SUITES}")
    return rows


def cmd_bench(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = _bench_rows(args.suite, args)
    results = out_dir / "results.csv"
    with open(results, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    with open(out_dir / "results.jsonl", "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    for row in rows:
        print(" ".join(f"{k}={v}" for k, v in row.items()))
    _write_manifest(
        out_dir,
        f"bench:{args.suite}",
        config={"suite": args.suite},
        inputs={},
        seed=args.seed,
        timings={"total": time.perf_counter() - t0},
        outputs=["results.csv", "results.jsonl"],
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threshrecon",
        description="Reconstruct closed interfaces from point clouds by "
        "thresholded heat-kernel convolution.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a sample point cloud")
    gen.add_argument(
        "kind",
        choices=["five-fold", "three-fold", "m-fold", "torus"],
    )
    gen.add_argument("--n", type=int, default=None, help="number of points")
    gen.add_argument("--m", type=int, default=None, help="fold count for m-fold")
    gen.add_argument("--noise", type=float, default=0.0, help="noise amplitude mu")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_generate)

    rec = sub.add_parser("reconstruct", help="reconstruct an interface from a cloud")
    rec.add_argument("--cloud", required=True, help="cloud file (csv or xyz)")
    rec.add_argument("--format", choices=["csv", "xyz"], default="csv")
    rec.add_argument("--grid", type=int, default=128, help="nodes per axis")
    rec.add_argument("--extent", type=float, default=math.pi)
    rec.add_argument("--alg", choices=["1", "2"], default="2",
                     help="1: symmetric two-convolution scheme; 2: factored scheme")
    rec.add_argument("--p", type=float, default=2.0, help="distance weight power")
    rec.add_argument("--tau", type=float, default=None,
                     help="starting tau (with --no-adaptive: the only tau)")
    rec.add_argument("--schedule", default=None,
                     help='"tau1:k" (halved k-1 times) or "t1,t2,..."')
    rec.add_argument("--no-adaptive", action="store_true",
                     help="run a single fixed-tau stage (requires --tau)")
    rec.add_argument("--dist", choices=["brute", "sweep"], default=None,
                     help="distance backend (default: pick by problem size)")
    rec.add_argument("--init", choices=["ball", "box", "levelset"], default=None)
    rec.add_argument("--radius", type=float, default=2.0, help="ball init radius")
    rec.add_argument("--box", default=None, help="box init half-widths, comma list")
    rec.add_argument("--sigma", type=float, default=None,
                     help="levelset init threshold (default 4h)")
    rec.add_argument("--iso", type=float, default=0.5)
    rec.add_argument("--iso-source", choices=["raw", "mollified"], default="mollified")
    rec.add_argument("--no-energy-log", action="store_true")
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--out", required=True, help="output directory")
    rec.set_defaults(func=cmd_reconstruct)

    ben = sub.add_parser("bench", help="run a canned experiment suite")
    ben.add_argument("--suite", required=True, choices=list(BENCH_SUITES))
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--out", required=True, help="output directory")
    ben.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EnergyIncreaseError as exc:
        print(f"internal consistency failure: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except SweepConvergenceError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
