"""Experiment runner: prepare datasets, train, sweep ablations, dump toys.

Every command is deterministic given its seeds; table files are byte-stable
across reruns (wall-clock timings live in their own file). Output tables are
tab-separated with a versioned schema comment on the first line.
"""

import argparse
import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .data import (
    binarize_and_index,
    k_core_filter,
    load_interactions,
    load_snapshot,
    resolve_delimiter,
    save_snapshot,
    split,
)
from .diversity import GroundSet, augmented_kernel, diversity, greedy_map_kdpp
from .metrics import diversity_report, evaluate
from .model import save_checkpoint
from .seeding import SAMPLING, stream
from .synth import cluster_embeddings, synthetic_log, write_log
from .training import SAMPLERS, VARIANTS, DivnsConfig, train

ABLATION_AXES = {
    "r": ("r", (1, 2, 4, 6)),
    "lambda": ("lam", (0.1, 0.3, 0.5, 0.7, 0.9)),
    "omega": ("omega", (1, 4, 8, 16)),
    "variant": ("variant", ("full", "no_synthesis")),
    "sampling": ("variant", ("full", "plain_kdpp", "uniform_cache")),
}

_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

_CONFIG_FIELDS = {
    "sampler": str,
    "variant": str,
    "m": int,
    "r": int,
    "lam": float,
    "omega": int,
    "epochs": int,
    "d": int,
    "learning_rate": float,
    "l2": float,
    "batch_size": int,
    "patience": int,
    "pns_beta": float,
    "clamp_penalty": bool,
    "strict_eval": bool,
    "dump_diagnostics": bool,
    "eval_ks": "intlist",
}

_CONFIG_ALIASES = {"lambda": "lam", "lr": "learning_rate", "batch": "batch_size"}


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _write_table(path: str, schema: str, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {schema}\n")
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


def _write_manifest(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _coerce(raw: str, typ):
    raw = raw.strip()
    if typ is bool:
        try:
            return _BOOL_WORDS[raw.lower()]
        except KeyError:
            raise ValueError(f"expected a boolean, got {raw!r}") from None
    if typ == "intlist":
        return tuple(int(part) for part in raw.split(",") if part.strip())
    return typ(raw)


def load_config_file(path: str) -> dict:
    """key = value lines; blank lines and # comments ignored."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ValueError(f"{path}:{lineno}: expected key = value, got {line.rstrip()!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            values[_CONFIG_ALIASES.get(key, key)] = raw
    return values


def build_config(args) -> DivnsConfig:
    """Merge defaults < config file < explicit CLI flags."""
    file_vals = load_config_file(args.config) if getattr(args, "config", None) else {}
    unknown = set(file_vals) - set(_CONFIG_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs = {}
    for key, typ in _CONFIG_FIELDS.items():
        value = getattr(args, key, None)
        if value is None and key in file_vals:
            value = _coerce(file_vals[key], typ)
        if value is not None:
            if key == "eval_ks" and isinstance(value, str):
                value = _coerce(value, "intlist")
            kwargs[key] = value
    return DivnsConfig(**kwargs)


def _parse_seeds(raw: str) -> list:
    seeds = [int(part) for part in raw.split(",") if part.strip()]
    if not seeds:
        raise ValueError("need at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"seeds must be distinct, got {raw!r}")
    return seeds


def _resolve_out(args, command: str) -> str:
    if getattr(args, "out", None):
        return args.out
    return os.path.join(os.environ.get("DIVNS_OUTPUT_ROOT", "runs"), command)


def run_experiment(snapshot_path: str, out_dir: str, config: DivnsConfig, seeds) -> dict:
    """Train one configuration across seeds and write the result files.

    Writes metrics.tsv (per-epoch validation + final test rows), losses.tsv,
    timings.tsv, final.tsv (per-seed test metrics with mean/std rows), one
    checkpoint per seed, optional diagnostics.tsv, and a run manifest tied to
    the snapshot's content hash. Returns the seed-aggregated test metrics.
    """
    dataset, data_split = load_snapshot(snapshot_path)
    os.makedirs(out_dir, exist_ok=True)
    ks = config.eval_ks
    metric_rows, loss_rows, timing_rows, diag_rows = [], [], [], []
    per_seed, best_epochs = {}, {}

    for seed in seeds:
        cfg = dataclasses.replace(config, seed=seed)
        result = train(dataset, data_split, cfg)
        test = evaluate(
            result.table, data_split, "test", ks=ks,
            exclude_validation=cfg.strict_eval, epoch=result.best_epoch,
        )
        for report in result.reports:
            metric_rows.extend((seed,) + row for row in report.rows())
            timing_rows.append((
                seed, report.epoch,
                report.timings.get("sampling", 0.0),
                report.timings.get("dpp", 0.0),
                report.timings.get("optimization", 0.0),
            ))
        metric_rows.extend((seed,) + row for row in test.rows())
        loss_rows.extend((seed, epoch, loss) for epoch, loss in enumerate(result.train_losses))
        for summary in diversity_report(result.diagnostics):
            diag_rows.append((
                seed, summary["epoch"], summary["users"],
                summary.get("selected_diversity"),
                summary.get("baseline_diversity"),
                summary.get("diversity_gap"),
            ))
        save_checkpoint(
            os.path.join(out_dir, f"checkpoint_seed{seed}.npz"), result.table, result.opt_state
        )
        per_seed[seed] = {key: test.values[key] for key in sorted(test.values)}
        best_epochs[seed] = result.best_epoch

    keys = sorted(next(iter(per_seed.values())))
    mean = {key: float(np.mean([per_seed[s][key] for s in seeds])) for key in keys}
    std = {key: float(np.std([per_seed[s][key] for s in seeds])) for key in keys}

    final_rows = [(seed, k, name, per_seed[seed][(k, name)]) for seed in seeds for (k, name) in keys]
    final_rows += [("mean", k, name, mean[(k, name)]) for (k, name) in keys]
    final_rows += [("std", k, name, std[(k, name)]) for (k, name) in keys]

    _write_table(
        os.path.join(out_dir, "metrics.tsv"), "metrics v1",
        ("seed", "epoch", "split", "k", "metric", "value"), metric_rows,
    )
    _write_table(
        os.path.join(out_dir, "losses.tsv"), "losses v1",
        ("seed", "epoch", "loss"), loss_rows,
    )
    _write_table(
        os.path.join(out_dir, "timings.tsv"), "timings v1",
        ("seed", "epoch", "sampling", "dpp", "optimization"), timing_rows,
    )
    _write_table(
        os.path.join(out_dir, "final.tsv"), "final v1",
        ("seed", "k", "metric", "value"), final_rows,
    )
    if config.dump_diagnostics:
        _write_table(
            os.path.join(out_dir, "diagnostics.tsv"), "diversity v1",
            ("seed", "epoch", "users", "selected_diversity", "baseline_diversity", "diversity_gap"),
            diag_rows,
        )
    manifest = {
        "command": "train",
        "config": dataclasses.asdict(config),
        "seeds": list(seeds),
        "snapshot_sha256": _sha256(snapshot_path),
        "schemas": ["metrics v1", "losses v1", "timings v1", "final v1"],
    }
    _write_manifest(os.path.join(out_dir, "manifest.json"), manifest)
    return {"per_seed": per_seed, "mean": mean, "std": std, "best_epochs": best_epochs}


def cmd_prepare(args) -> int:
    out_dir = _resolve_out(args, "prepare")
    ratios = tuple(float(part) for part in args.ratios.split(","))
    log = load_interactions(args.data, resolve_delimiter(args.format))
    log = k_core_filter(log, args.k_core)
    dataset = binarize_and_index(log)
    data_split = split(dataset, seed=args.seed, ratios=ratios)
    os.makedirs(out_dir, exist_ok=True)
    snapshot_path = os.path.join(out_dir, "snapshot.tsv")
    save_snapshot(snapshot_path, dataset, data_split)
    _write_manifest(os.path.join(out_dir, "manifest.json"), {
        "command": "prepare",
        "format": args.format,
        "k_core": args.k_core,
        "num_interactions": dataset.num_interactions,
        "num_items": dataset.num_items,
        "num_users": dataset.num_users,
        "ratios": list(ratios),
        "seed": args.seed,
        "snapshot_sha256": _sha256(snapshot_path),
    })
    print(
        f"prepared {dataset.num_users} users, {dataset.num_items} items, "
        f"{dataset.num_interactions} interactions -> {snapshot_path}"
    )
    return 0


def cmd_train(args) -> int:
    out_dir = _resolve_out(args, "train")
    config = build_config(args)
    seeds = _parse_seeds(args.seeds)
    summary = run_experiment(args.data, out_dir, config, seeds)
    ks = config.eval_ks
    for seed in seeds:
        cells = ", ".join(
            f"{name}@{k}={summary['per_seed'][seed][(k, name)]:.4f}"
            for k in ks for name in ("ndcg", "recall")
        )
        print(f"seed {seed}: best epoch {summary['best_epochs'][seed]}, test {cells}")
    cells = ", ".join(
        f"{name}@{k}={summary['mean'][(k, name)]:.4f}+-{summary['std'][(k, name)]:.4f}"
        for k in ks for name in ("ndcg", "recall")
    )
    print(f"mean over {len(seeds)} seeds: {cells}")
    return 0


def cmd_ablate(args) -> int:
    out_dir = _resolve_out(args, "ablate")
    field, grid = ABLATION_AXES[args.axis]
    config = build_config(args)
    seeds = _parse_seeds(args.seeds)
    os.makedirs(out_dir, exist_ok=True)

    jobs = []
    for value in grid:
        cfg = dataclasses.replace(config, **{field: value})
        subdir = os.path.join(out_dir, f"{args.axis}_{_fmt(value)}")
        jobs.append((value, args.data, subdir, cfg))

    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as pool:
            futures = [pool.submit(run_experiment, data, subdir, cfg, seeds) for _, data, subdir, cfg in jobs]
            summaries = [future.result() for future in futures]
    else:
        summaries = [run_experiment(data, subdir, cfg, seeds) for _, data, subdir, cfg in jobs]

    ks = config.eval_ks
    columns = ["axis", "value"]
    for k in ks:
        for name in ("ndcg", "recall"):
            columns += [f"{name}{k}_mean", f"{name}{k}_std"]
    rows = []
    for (value, _, _, _), summary in zip(jobs, summaries):
        row = [args.axis, value]
        for k in ks:
            for name in ("ndcg", "recall"):
                row += [summary["mean"][(k, name)], summary["std"][(k, name)]]
        rows.append(tuple(row))
        print(f"{args.axis}={_fmt(value)}: ndcg@{ks[-1]}={summary['mean'][(ks[-1], 'ndcg')]:.4f}")
    _write_table(os.path.join(out_dir, "sweep.tsv"), "sweep v1", columns, rows)
    return 0


def _pca2(vectors: np.ndarray) -> np.ndarray:
    centered = vectors - vectors.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


def cmd_toy(args) -> int:
    """Plot-ready comparison of uniform vs greedy-DPP selection on clusters."""
    out_dir = _resolve_out(args, "toy")
    n = args.clusters * args.per_cluster
    if args.k > n:
        raise ValueError(f"cannot select {args.k} items from {n}")
    vectors, labels = cluster_embeddings(args.clusters, args.per_cluster, args.dim, args.seed)
    rng = stream(args.seed, SAMPLING, 0)
    uniform = np.asarray(rng.choice(n, size=args.k, replace=False), dtype=np.int64)
    kernel = augmented_kernel(GroundSet(np.arange(n, dtype=np.int64), vectors), np.ones(n))
    chosen = greedy_map_kdpp(kernel, args.k)
    if chosen.size < args.k:
        rest = np.setdiff1d(np.arange(n, dtype=np.int64), chosen)
        extra = rng.choice(rest, size=args.k - chosen.size, replace=False)
        chosen = np.concatenate([chosen, np.asarray(extra, dtype=np.int64)])

    coords = _pca2(vectors)
    os.makedirs(out_dir, exist_ok=True)
    point_cols = ("item", "cluster", "x", "y")

    def point_rows(items):
        return [
            (int(i), int(labels[i]), float(coords[i, 0]), float(coords[i, 1]))
            for i in items
        ]

    _write_table(os.path.join(out_dir, "points.tsv"), "toy-points v1",
                 point_cols, point_rows(range(n)))
    _write_table(os.path.join(out_dir, "selection_uniform.tsv"), "toy-selection v1",
                 point_cols, point_rows(uniform))
    _write_table(os.path.join(out_dir, "selection_dpp.tsv"), "toy-selection v1",
                 point_cols, point_rows(chosen))

    def modal_fraction(items):
        counts = np.bincount(labels[items], minlength=args.clusters)
        return counts.max() / len(items)

    summary_rows = [
        ("uniform", args.k, n, diversity(vectors[uniform]), modal_fraction(uniform)),
        ("dpp", args.k, n, diversity(vectors[chosen]), modal_fraction(chosen)),
    ]
    _write_table(os.path.join(out_dir, "summary.tsv"), "toy-summary v1",
                 ("method", "k", "items", "diversity", "modal_fraction"), summary_rows)
    for method, _, _, div, frac in summary_rows:
        print(f"{method}: diversity={div:.4f}, modal cluster fraction={frac:.4f}")
    return 0


def cmd_synth(args) -> int:
    if args.out:
        path = args.out
    else:
        root = os.path.join(os.environ.get("DIVNS_OUTPUT_ROOT", "runs"), "synth")
        os.makedirs(root, exist_ok=True)
        path = os.path.join(root, "interactions.tsv")
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    log = synthetic_log(
        args.users, args.items, args.seed,
        latent_dim=args.latent_dim, num_clusters=args.clusters,
        mean_degree=args.mean_degree,
    )
    write_log(path, log)
    print(f"wrote {len(log)} interactions for {args.users} users -> {path}")
    return 0


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="prepared snapshot.tsv path")
    p.add_argument("--sampler", choices=SAMPLERS)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--m", type=int, help="candidate pool per positive")
    p.add_argument("--r", type=int, help="cache ratio")
    p.add_argument("--lambda", dest="lam", type=float, help="mixing coefficient")
    p.add_argument("--omega", type=int, help="negative sampling ratio")
    p.add_argument("--d", type=int, help="embedding dimension")
    p.add_argument("--batch", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--pns-beta", dest="pns_beta", type=float)
    p.add_argument("--eval-ks", dest="eval_ks", help="comma-separated cutoffs")
    p.add_argument("--dump-diagnostics", dest="dump_diagnostics",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--strict-eval", dest="strict_eval",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--clamp-penalty", dest="clamp_penalty",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seed list")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", help="key = value hyperparameter file")
    p.add_argument("--out")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="divns",
        description="Diverse negative sampling experiments for implicit-feedback recommenders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="filter, index, and split a raw interaction log")
    p.add_argument("--data", required=True)
    p.add_argument("--format", default="tsv", help="tsv, csv, space, or a literal delimiter")
    p.add_argument("--k-core", dest="k_core", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ratios", default="0.7,0.1,0.2")
    p.add_argument("--out")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train one configuration across seeds")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="sweep one hyperparameter axis")
    p.add_argument("--axis", required=True, choices=sorted(ABLATION_AXES))
    _add_run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("toy", help="uniform vs DPP selection dump on clustered points")
    p.add_argument("--clusters", type=int, default=3)
    p.add_argument("--per-cluster", dest="per_cluster", type=int, default=20)
    p.add_argument("--k", type=int, default=15)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_toy)

    p = sub.add_parser("synth", help="generate a synthetic interaction log")
    p.add_argument("--users", type=int, default=600)
    p.add_argument("--items", type=int, default=1200)
    p.add_argument("--clusters", type=int, default=6)
    p.add_argument("--latent-dim", dest="latent_dim", type=int, default=16)
    p.add_argument("--mean-degree", dest="mean_degree", type=float, default=80.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
