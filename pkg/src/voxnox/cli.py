"""Command-line surface: run/resume experiments, compute metrics, generate
datasets, encode/reconstruct/export lattices, compare lattice sets."""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .autoencoder import encode, load_model, reconstruct
from .errors import ConfigError, LatticeFormatError, VoxnoxError
from .metrics import kl_divergence, pattern_distribution
from .orchestrator import STRATEGIES, load_config, rebuild_outputs, resume, run
from .voxel_core import (
    BooleanLattice,
    load_lattice,
    repair_pipeline,
    save_lattice,
)


def _model_paths(model_dir):
    return os.path.join(model_dir, "model.bin"), os.path.join(model_dir, "model.json")


def cmd_run(args) -> int:
    config = load_config(args.config)
    if args.strategy:
        config.strategy = args.strategy
    if args.seed is not None:
        config.master_seed = args.seed
    config.validate()
    run(config, args.out)
    print(f"run complete: {args.out}")
    return 0


def cmd_resume(args) -> int:
    resume(args.run_dir)
    print(f"resume complete: {args.run_dir}")
    return 0


def cmd_metrics(args) -> int:
    if not os.path.isdir(args.run_dir):
        raise VoxnoxError(f"{args.run_dir} is not a directory")
    rebuild_outputs(args.run_dir)
    print(f"metrics rebuilt under {os.path.join(args.run_dir, 'metrics')}")
    return 0


def cmd_encode(args) -> int:
    model = load_model(*_model_paths(args.model))
    lattice = load_lattice(args.lattice)
    latent = encode(model, lattice)
    payload = {"length": len(latent), "latent": [float(v) for v in latent]}
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")
    else:
        print(json.dumps(payload, sort_keys=True))
    return 0


def cmd_reconstruct(args) -> int:
    model = load_model(*_model_paths(args.model))
    lattice = load_lattice(args.lattice)
    save_lattice(reconstruct(model, lattice), args.out)
    print(f"reconstruction written to {args.out}")
    return 0


def cmd_export(args) -> int:
    lattice = load_lattice(args.lattice)
    if args.format == "json":
        save_lattice(lattice, args.out)
    else:  # csv-voxels
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "y", "z", "material"])
            x, y, z = lattice.dims
            for iy in range(y):
                for iz in range(z):
                    for ix in range(x):
                        writer.writerow([ix, iy, iz, int(lattice.cells[ix, iy, iz])])
    print(f"exported {args.format} to {args.out}")
    return 0


def generate_cube_lattice(rng, dims=(20, 20, 20)):
    """One feasible hollow cuboid: 1-voxel shell grounded at y=0, sizes
    uniform in {4..18}, random horizontal placement. Infeasible draws
    (e.g. too low for an entrance) are rejected and redrawn."""
    while True:
        w = int(rng.integers(4, 19))
        h = int(rng.integers(4, 19))
        d = int(rng.integers(4, 19))
        x0 = int(rng.integers(0, dims[0] - w + 1))
        z0 = int(rng.integers(0, dims[2] - d + 1))
        hull = np.zeros(dims, dtype=bool)
        hull[x0 : x0 + w, 0:h, z0 : z0 + d] = True
        hull[x0 + 1 : x0 + w - 1, 1 : h - 1, z0 + 1 : z0 + d - 1] = False
        lattice, feasible = repair_pipeline(BooleanLattice(hull))
        if feasible:
            return lattice


def cmd_gen_cubes(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for i in range(args.count):
        save_lattice(generate_cube_lattice(rng), os.path.join(args.out, f"cube_{i:03d}.json"))
    print(f"wrote {args.count} feasible cuboid lattices to {args.out}")
    return 0


def _load_lattice_dir(path):
    if not os.path.isdir(path):
        raise VoxnoxError(f"{path} is not a directory")
    names = sorted(n for n in os.listdir(path) if n.endswith(".json"))
    if not names:
        raise VoxnoxError(f"{path} contains no lattice .json files")
    return names, [load_lattice(os.path.join(path, n)) for n in names]


def cmd_compare(args) -> int:
    names_a, set_a = _load_lattice_dir(args.a)
    names_b, set_b = _load_lattice_dir(args.b)
    dist_a = [pattern_distribution(l) for l in set_a]
    dist_b = [pattern_distribution(l) for l in set_b]
    rows = []
    if len(set_a) == len(set_b):
        # Equal sizes: align by sorted name, one KL per pair.
        values = []
        for na, nb, pa, pb in zip(names_a, names_b, dist_a, dist_b):
            v = kl_divergence(pa, pb)
            rows.append([na, nb, v])
            values.append(v)
        aggregate = float(np.mean(values))
        mode = "aligned"
    else:
        values = []
        for na, pa in zip(names_a, dist_a):
            for nb, pb in zip(names_b, dist_b):
                v = kl_divergence(pa, pb)
                rows.append([na, nb, v])
                values.append(v)
        aggregate = float(np.mean(values))
        mode = "cross"
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["name_a", "name_b", "kl"])
            writer.writerows(rows)
    print(f"pairs={len(rows)} mode={mode} aggregate_mean_kl={aggregate!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxnox",
        description="Open-ended evolution of 3D voxel buildings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("resume", help="resume an interrupted run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser("metrics", help="regenerate metrics CSVs from checkpoints")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("encode", help="encode a lattice to its latent vector")
    p.add_argument("--model", required=True, help="directory holding model.bin/model.json")
    p.add_argument("--lattice", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("reconstruct", help="autoencode a lattice back to materials")
    p.add_argument("--model", required=True)
    p.add_argument("--lattice", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("export", help="export a lattice file")
    p.add_argument("--lattice", required=True)
    p.add_argument("--format", choices=("json", "csv-voxels"), default="json")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("gen-cubes", help="generate the random hollow-cuboid dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_cubes)

    p = sub.add_parser("compare", help="pairwise/aggregate KL report between lattice sets")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, LatticeFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except VoxnoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
