"""Command-line entry point.

Subcommands: gen-synthetic, positions, train, embed, eval, run, sweep.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
divergence, 1 anything else. Pipeline stage failures are prefixed with
the stage name. The HGMAE_SEED environment variable overrides the
config seed; an explicit --seed flag overrides both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .config import RunManifest, parse_config, train_config, walk_config
from .encdec import load_params, save_params
from .errors import ConfigError, DataError, DivergenceError
from .hetgraph import (
    HeteroGraph,
    SyntheticSpec,
    build_all_views,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .masking import mask_edges
from .mp2vec import positional_features
from .rng import derive_rng
from .trainer import (
    embed,
    fit,
    read_embeddings,
    write_embeddings,
    write_loss_log,
)
from . import encdec
from .autodiff import Tensor

logger = logging.getLogger("hgmae")

SWEEP_RATES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)


def _resolve_seed(config: dict, args: argparse.Namespace) -> dict:
    env = os.environ.get("HGMAE_SEED")
    if env is not None:
        try:
            config["seed"] = int(env)
        except ValueError:
            raise ConfigError(f"HGMAE_SEED must be an integer, got {env!r}") from None
    if getattr(args, "seed", None) is not None:
        config["seed"] = args.seed
    return config


def _load_config(args: argparse.Namespace) -> dict:
    config = parse_config(getattr(args, "config", None), getattr(args, "set", None) or [])
    return _resolve_seed(config, args)


def _stage(name: str, fn, *fargs, **fkwargs):
    """Run one pipeline stage, prefixing failures with the stage name."""
    try:
        return fn(*fargs, **fkwargs)
    except (ConfigError, DataError, DivergenceError) as e:
        raise type(e)(f"{name}: {e}") from None


def edge_ranking_eval(
    params, graph: HeteroGraph, config: dict
) -> dict:
    """Held-out edge ranking per view with a derived, fixed seed."""
    x = Tensor(graph.target_attributes)
    rng = derive_rng(config["seed"], "eval-edges")
    per_view = {}
    aucs = []
    for view in build_all_views(graph):
        mask = mask_edges(view, float(config["edge_mask_rate"]), rng)
        held_out = mask.held_out
        available = evaluation.count_non_edges(view.adjacency)
        if min(held_out.shape[0], available) == 0:
            logger.warning(
                "edge scoring skipped for %s: nothing held out or no non-edges",
                view.metapath_name,
            )
            per_view[view.metapath_name] = None
            continue
        if available < held_out.shape[0]:
            # keep the positive and negative pools the same size
            pick = rng.choice(held_out.shape[0], size=available, replace=False)
            held_out = held_out[np.sort(pick)]
        enc = encdec.encode(params, [mask.masked_adjacency], x)
        recon = encdec.decode_edges(params, mask.masked_adjacency, enc.per_view[0]).values
        non_edges = evaluation.sample_non_edges(view.adjacency, held_out.shape[0], rng)
        auc = evaluation.edge_auc(held_out, non_edges, recon)
        per_view[view.metapath_name] = auc
        if auc is not None:
            aucs.append(auc)
    return {
        "auc": float(np.mean(aucs)) if aucs else None,
        "per_metapath": per_view,
    }


def _require_labels(graph: HeteroGraph) -> np.ndarray:
    if graph.labels is None:
        raise DataError("dataset has no labels; cannot run labeled evaluation")
    return graph.labels


def run_pipeline(data_dir: str, out_dir: str, config: dict) -> RunManifest:
    """positions -> train -> embed -> eval, with per-stage error prefixes."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(data_dir=str(data_dir), out_dir=str(out_dir), config=dict(config))

    graph = _stage("hetgraph", load_dataset, data_dir)

    tcfg = _stage("train", train_config, config)
    positions = None
    if tcfg.weights.position > 0.0:
        positions = _stage("positions", positional_features, graph, walk_config(config))
        write_embeddings(positions, out / "positions.csv")
        manifest.artifacts["positions"] = "positions.csv"

    state = _stage("train", fit, graph, tcfg, positions)
    best = state.best_model()
    save_params(best, out / "checkpoint.npz")
    write_loss_log(state.history, out / "losses.csv")
    manifest.artifacts["checkpoint"] = "checkpoint.npz"
    manifest.artifacts["losses"] = "losses.csv"

    embeddings = _stage("embed", embed, best, graph)
    write_embeddings(embeddings, out / "embeddings.csv")
    manifest.artifacts["embeddings"] = "embeddings.csv"

    report: dict = {
        "config": dict(config),
        "data_dir": str(data_dir),
        "best_loss": state.best_loss,
        "best_epoch": state.best_epoch,
        "epochs_trained": state.epoch,
    }
    if graph.labels is not None:
        n = graph.num_targets
        val_size = min(int(config["eval.val_size"]), n)
        test_size = min(int(config["eval.test_size"]), n)
        cls = _stage(
            "eval",
            evaluation.classification_eval,
            embeddings,
            graph.labels,
            int(config["eval.labels_per_class"]),
            val_size,
            test_size,
            int(config["eval.seeds"]),
            int(config["seed"]),
        )
        clu = _stage(
            "eval",
            evaluation.clustering_eval,
            embeddings,
            graph.labels,
            int(config["eval.seeds"]),
            int(config["seed"]),
            int(config["eval.restarts"]),
        )
        report["classification"] = cls.to_dict()
        report["clustering"] = clu.to_dict()
    report["edges"] = _stage("eval", edge_ranking_eval, best, graph, config)
    (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=1))
    manifest.artifacts["report"] = "report.json"

    (out / "manifest.json").write_text(manifest.to_json())
    return manifest


def sweep_corruption_rates(
    data_dir: str, out_dir: str, config: dict, rates=SWEEP_RATES
) -> dict:
    """Grid over (unchanged_rate, replace_rate); one probe metric per cell."""
    graph = _stage("hetgraph", load_dataset, data_dir)
    labels = _require_labels(graph)
    positions = None
    base = dict(config)
    if float(base["loss_weights.position"]) > 0.0:
        positions = _stage("positions", positional_features, graph, walk_config(base))
    n = graph.num_targets
    val_size = min(int(base["eval.val_size"]), n)
    test_size = min(int(base["eval.test_size"]), n)
    grid: list[list[float]] = []
    for u in rates:
        row = []
        for r in rates:
            cell = dict(base)
            cell["unchanged_rate"] = float(u)
            cell["replace_rate"] = float(r)
            tcfg = _stage("train", train_config, cell)
            state = _stage("train", fit, graph, tcfg, positions)
            embeddings = embed(state.best_model(), graph)
            split = evaluation.make_splits(
                labels,
                int(base["eval.labels_per_class"]),
                val_size,
                test_size,
                derive_rng(int(base["seed"]), "sweep-split"),
            )
            metrics = evaluation.linear_probe(embeddings, labels, split)
            row.append(metrics["micro_f1"])
            logger.info("sweep unchanged=%.1f replace=%.1f micro_f1=%.4f", u, r, row[-1])
        grid.append(row)
    result = {
        "metric": "micro_f1",
        "unchanged_rates": list(rates),
        "replace_rates": list(rates),
        "grid": grid,
        "config": base,
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.json").write_text(json.dumps(result, sort_keys=True, indent=1))
    return result


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    seed = args.seed if args.seed is not None else 0
    env = os.environ.get("HGMAE_SEED")
    if args.seed is None and env is not None:
        try:
            seed = int(env)
        except ValueError:
            raise ConfigError(f"HGMAE_SEED must be an integer, got {env!r}") from None
    spec = SyntheticSpec(
        communities=args.communities,
        community_size=args.community_size,
        aux_per_community=args.aux_per_community,
        intra_rate=args.intra_rate,
        inter_rate=args.inter_rate,
        attr_dim=args.attr_dim,
        attr_signal=args.attr_signal,
        attr_noise=args.attr_noise,
        seed=seed,
    )
    try:
        graph = generate_synthetic(spec)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    save_dataset(graph, args.out)
    total_edges = sum(rel.edges.shape[0] for rel in graph.relations.values())
    print(
        f"wrote {graph.num_targets} target nodes, "
        f"{total_edges} edges to {args.out}"
    )
    return 0


def cmd_positions(args: argparse.Namespace) -> int:
    config = _load_config(args)
    graph = _stage("hetgraph", load_dataset, args.data)
    p = positional_features(graph, walk_config(config))
    write_embeddings(p, args.out)
    print(f"wrote positional features {p.shape} to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = _stage("hetgraph", load_dataset, args.data)
    tcfg = train_config(config)
    positions = None
    if args.positions is not None:
        positions = read_embeddings(args.positions)
    elif tcfg.weights.position > 0.0:
        positions = _stage("positions", positional_features, graph, walk_config(config))
        write_embeddings(positions, out / "positions.csv")
    state = _stage("train", fit, graph, tcfg, positions)
    save_params(state.best_model(), out / "checkpoint.npz")
    write_loss_log(state.history, out / "losses.csv")
    manifest = RunManifest(
        data_dir=str(args.data),
        out_dir=str(out),
        config=dict(config),
        artifacts={"checkpoint": "checkpoint.npz", "losses": "losses.csv"},
    )
    (out / "manifest.json").write_text(manifest.to_json())
    print(
        f"trained {state.epoch} epochs, best loss {state.best_loss:.6f} "
        f"at epoch {state.best_epoch}"
    )
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    graph = _stage("hetgraph", load_dataset, args.data)
    try:
        params = load_params(args.checkpoint)
    except (FileNotFoundError, ValueError) as e:
        raise DataError(str(e)) from None
    embeddings = _stage("embed", embed, params, graph)
    write_embeddings(embeddings, args.out)
    print(f"wrote embeddings {embeddings.shape} to {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args)
    graph = _stage("hetgraph", load_dataset, args.data)
    report: dict = {"task": args.task}
    if args.task in ("classification", "clustering"):
        if args.embeddings is None:
            raise ConfigError(f"--embeddings is required for the {args.task} task")
        embeddings = read_embeddings(args.embeddings)
        if embeddings.shape[0] != graph.num_targets:
            raise DataError(
                f"embeddings cover {embeddings.shape[0]} nodes but the dataset "
                f"has {graph.num_targets} targets"
            )
        labels = _require_labels(graph)
        n = graph.num_targets
        if args.task == "classification":
            result = evaluation.classification_eval(
                embeddings,
                labels,
                int(config["eval.labels_per_class"]),
                min(int(config["eval.val_size"]), n),
                min(int(config["eval.test_size"]), n),
                int(config["eval.seeds"]),
                int(config["seed"]),
            )
        else:
            result = evaluation.clustering_eval(
                embeddings,
                labels,
                int(config["eval.seeds"]),
                int(config["seed"]),
                int(config["eval.restarts"]),
            )
        report.update(result.to_dict())
    else:  # edges
        if args.checkpoint is None:
            raise ConfigError("--checkpoint is required for the edges task")
        try:
            params = load_params(args.checkpoint)
        except (FileNotFoundError, ValueError) as e:
            raise DataError(str(e)) from None
        report.update(edge_ranking_eval(params, graph, config))
    text = json.dumps(report, sort_keys=True, indent=1)
    if args.out is not None:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    config = _load_config(args)
    manifest = run_pipeline(args.data, args.out, config)
    print(f"run complete; artifacts in {manifest.out_dir}: "
          f"{', '.join(sorted(manifest.artifacts))}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _load_config(args)
    result = sweep_corruption_rates(args.data, args.out, config)
    print(
        f"swept {len(result['unchanged_rates'])}x{len(result['replace_rates'])} "
        f"corruption grid; wrote {Path(args.out) / 'sweep.json'}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--quiet", action="store_true", help="only warnings and errors")
    if config:
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hgmae",
        description="Masked autoencoding on heterogeneous graphs via metapath views.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    spec_defaults = SyntheticSpec()
    p = sub.add_parser("gen-synthetic", help="write a planted-community dataset")
    p.add_argument("--out", required=True, help="dataset directory to create")
    p.add_argument("--communities", type=int, default=spec_defaults.communities)
    p.add_argument("--community-size", type=int, default=spec_defaults.community_size)
    p.add_argument(
        "--aux-per-community", type=int, default=spec_defaults.aux_per_community
    )
    p.add_argument("--intra-rate", type=float, default=spec_defaults.intra_rate)
    p.add_argument("--inter-rate", type=float, default=spec_defaults.inter_rate)
    p.add_argument("--attr-dim", type=int, default=spec_defaults.attr_dim)
    p.add_argument("--attr-signal", type=float, default=spec_defaults.attr_signal)
    p.add_argument("--attr-noise", type=float, default=spec_defaults.attr_noise)
    _add_common(p, config=False)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("positions", help="compute positional features")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="CSV file to write")
    _add_common(p)
    p.set_defaults(func=cmd_positions)

    p = sub.add_parser("train", help="train and checkpoint the best parameters")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--positions", default=None, help="precomputed positional features CSV")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="embed a dataset with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="CSV file to write")
    _add_common(p, config=False)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="score embeddings or held-out edges")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", default=None, help="embeddings CSV")
    p.add_argument(
        "--task",
        choices=("classification", "clustering", "edges"),
        default="classification",
    )
    p.add_argument("--checkpoint", default=None, help="needed for the edges task")
    p.add_argument("--out", default=None, help="write the JSON report here")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="full pipeline: positions, train, embed, eval")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="run directory")
    _add_common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over unchanged/replace corruption rates")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="directory for sweep.json")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if getattr(args, "quiet", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return 4
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
