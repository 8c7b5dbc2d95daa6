"""Command-line interface.

Subcommands: generate, pretrain, infer, eval, bench. Every run resolves
its settings from (defaults < config file < explicit flags), uses only
explicit seeds, and writes the resolved configuration next to its outputs
for provenance.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from .bench import run_benchmark, pairwise_agreement
from .graph import load_edge_list, modularity, read_partition, write_partition
from .model import ModelConfig, ModelParams, load_model, save_model
from .train import TrainConfig, pretrain
from .inference import RefinerChoice, end_to_end, infer_partition
from .synthgen import GenConfig, corpus_stats, load_corpus, save_corpus


def _read_config_file(path):
    if path is None:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config file must hold a JSON object")
    return data


def _resolve(defaults, config_file_values, flag_values):
    """defaults < config file < explicit flags (None means 'not given')."""
    out = dict(defaults)
    for key, value in config_file_values.items():
        if key not in out:
            raise ValueError(f"unknown config key {key!r}")
        out[key] = value
    for key, value in flag_values.items():
        if value is not None:
            out[key] = value
    return out


def _write_resolved(path, resolved):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=2, default=str)


def _require_exists(path, what):
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def cmd_generate(args):
    file_cfg = _read_config_file(args.config)
    defaults = asdict(GenConfig())
    defaults["seed"] = 0
    flags = {
        "n_range": (args.n_min, args.n_max) if args.n_min is not None else None,
        "k_range": (args.k_min, args.k_max) if args.k_min is not None else None,
        "gamma_range": (args.gamma_min, args.gamma_max) if args.gamma_min is not None else None,
        "mu_range": (args.mu_min, args.mu_max) if args.mu_min is not None else None,
        "rho_range": (args.rho_min, args.rho_max) if args.rho_min is not None else None,
        "graph_count": args.graphs,
        "seed": args.seed,
    }
    resolved = _resolve(defaults, file_cfg, flags)
    seed = int(resolved.pop("seed"))
    cfg = GenConfig(**{k: tuple(v) if isinstance(v, list) else v
                       for k, v in resolved.items()}).validate()
    manifest = save_corpus(args.out, cfg, seed)
    _write_resolved(os.path.join(args.out, "resolved_config.json"),
                    {"command": "generate", "seed": seed, **asdict(cfg)})
    stats = corpus_stats(manifest)
    print(f"wrote {stats['graphs']} graphs to {args.out}")
    print(f"  nodes: avg {stats['avg_nodes']:.1f} range [{stats['min_nodes']}, {stats['max_nodes']}]")
    print(f"  edges: avg {stats['avg_edges']:.1f} range [{stats['min_edges']}, {stats['max_edges']}]")
    print(f"  communities: avg {stats['avg_communities']:.1f} "
          f"range [{stats['min_communities']}, {stats['max_communities']}]")
    print(f"  density: avg {stats['avg_density']:.2e} "
          f"range [{stats['min_density']:.2e}, {stats['max_density']:.2e}]")
    return 0


_TRAIN_KEYS = ("alpha", "resolution", "epochs", "learning_rate", "seed",
               "dense_limit", "shuffle", "checkpoint_every", "use_bce", "use_mod")
_MODEL_KEYS = ("dim", "feat_layers", "gnn_layers", "classifier_layers",
               "feature_mode", "encoder_mode", "classifier_mode", "fixed_tau")


def cmd_pretrain(args):
    _require_exists(args.corpus, "corpus directory")
    file_cfg = _read_config_file(args.config)
    defaults = {**asdict(TrainConfig()), **asdict(ModelConfig())}
    flags = {
        "alpha": args.alpha, "resolution": args.resolution, "epochs": args.epochs,
        "learning_rate": args.learning_rate, "seed": args.seed,
        "dense_limit": args.dense_limit, "shuffle": args.shuffle,
        "checkpoint_every": args.checkpoint_every,
        "use_bce": False if args.no_bce else None,
        "use_mod": False if args.no_mod else None,
        "dim": args.dim, "feat_layers": args.feat_layers,
        "gnn_layers": args.gnn_layers, "classifier_layers": args.classifier_layers,
        "feature_mode": args.feature_mode, "encoder_mode": args.encoder_mode,
        "classifier_mode": args.classifier_mode, "fixed_tau": args.fixed_tau,
    }
    resolved = _resolve(defaults, file_cfg, flags)
    train_cfg = TrainConfig(**{k: resolved[k] for k in _TRAIN_KEYS},
                            beta1=resolved["beta1"], beta2=resolved["beta2"],
                            adam_eps=resolved["adam_eps"]).validate()
    model_cfg = ModelConfig(**{k: resolved[k] for k in _MODEL_KEYS}).validate()
    _, corpus = load_corpus(args.corpus)
    result = pretrain(corpus, train_cfg, model_cfg, resume_from=args.resume,
                      checkpoint_dir=args.checkpoint_dir)
    save_model(args.out, result.params)
    _write_resolved(args.out + ".run.json",
                    {"command": "pretrain", "corpus": args.corpus, **resolved})
    if args.log:
        result.write_log(args.log)
    if result.log:
        first = result.log[0]["loss_total"]
        last = result.log[-1]["loss_total"]
        print(f"trained {train_cfg.epochs} epochs on {len(corpus)} graphs; "
              f"loss {first:.4g} -> {last:.4g}")
    print(f"model written to {args.out}")
    return 0


def _load_or_init_model(args):
    if args.untrained_dim is not None:
        config = ModelConfig(dim=args.untrained_dim).validate()
        rng = np.random.default_rng(np.random.SeedSequence((args.seed or 0, 0)))
        return config, ModelParams.init(config, rng)
    _require_exists(args.model, "model file")
    return load_model(args.model)


def _refiner_from_args(args, seed):
    return RefinerChoice(kind=args.refiner, seed=seed,
                         max_iter=args.lpa_max_iter,
                         resolution=args.refine_resolution,
                         max_levels=args.louvain_max_levels).validate()


def _timing_csv_row(path, graph_id, timings, mod, k):
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(["graph_id", "feat_s", "ffp_s", "init_s", "rfn_s",
                             "modularity", "communities"])
        writer.writerow([graph_id, timings.feat_s, timings.ffp_s,
                         timings.init_s, timings.rfn_s, mod, k])


def cmd_infer(args):
    _require_exists(args.graph, "edge list")
    _, params = _load_or_init_model(args)
    loaded = load_edge_list(args.graph)
    g = loaded.graph
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    started = time.perf_counter()
    if args.refiner == "none":
        part, timings = infer_partition(g, params, args.n_samples, rng,
                                        proj_seed=args.projection_seed)
    else:
        choice = _refiner_from_args(args, seed)
        part, timings = end_to_end(g, params, args.n_samples, choice, rng,
                                   proj_seed=args.projection_seed)
    elapsed = time.perf_counter() - started
    mod = modularity(g, part)
    write_partition(args.out, part, original_ids=loaded.original_ids)
    _write_resolved(args.out + ".run.json", {
        "command": "infer", "graph": args.graph, "model": args.model,
        "refiner": args.refiner, "n_samples": args.n_samples, "seed": seed,
        "projection_seed": args.projection_seed,
        "untrained_dim": args.untrained_dim,
    })
    if args.timing_csv:
        _timing_csv_row(args.timing_csv, os.path.basename(args.graph),
                        timings, mod, part.community_count)
    if args.time_budget and elapsed > args.time_budget:
        print(f"warning: run exceeded the {args.time_budget:.0f}s budget "
              f"({elapsed:.1f}s)", file=sys.stderr)
    print(f"K={part.community_count} modularity={mod:.4f} "
          f"phases feat={timings.feat_s:.3f}s ffp={timings.ffp_s:.3f}s "
          f"init={timings.init_s:.3f}s rfn={timings.rfn_s:.3f}s")
    return 0


def cmd_eval(args):
    _require_exists(args.graph, "edge list")
    _require_exists(args.partition, "partition file")
    loaded = load_edge_list(args.graph)
    part = read_partition(args.partition, original_ids=loaded.original_ids)
    if len(part) != loaded.graph.node_count:
        raise ValueError("partition does not cover the graph's node set")
    mod = modularity(loaded.graph, part)
    print(f"K={part.community_count} modularity={mod:.6f}")
    if args.ground_truth:
        # ground truth may cover isolated nodes the edge-list file cannot
        # carry; restrict it to the graph's node set
        truth = read_partition(args.ground_truth,
                               original_ids=loaded.original_ids,
                               allow_extra=True)
        if len(truth) != loaded.graph.node_count:
            raise ValueError("ground truth does not cover the graph's node set")
        print(f"pairwise_agreement={pairwise_agreement(part, truth):.6f}")
    return 0


def cmd_bench(args):
    _, params = _load_or_init_model(args)
    graphs = []
    for path in args.graphs:
        _require_exists(path, "edge list")
        graphs.append((os.path.basename(path), load_edge_list(path).graph))
    seed = args.seed if args.seed is not None else 0
    choice = _refiner_from_args(args, seed)
    report = run_benchmark(graphs, params, args.n_samples, choice, seed,
                           include_unrefined=args.include_unrefined,
                           time_budget_s=args.time_budget)
    report.write_csv(args.out)
    _write_resolved(args.out + ".run.json", {
        "command": "bench", "model": args.model, "graphs": args.graphs,
        "refiner": args.refiner, "n_samples": args.n_samples, "seed": seed,
        "time_budget": args.time_budget,
    })
    for agg in report.aggregates:
        line = (f"{agg['method']}: mean modularity {agg['mean_modularity']:.4f}, "
                f"mean time {agg['mean_total_s']:.2f}s")
        if "time_improvement_pct" in agg:
            line += (f", time improvement {agg['time_improvement_pct']:+.1f}%, "
                     f"modularity improvement {agg['modularity_improvement_pct']:+.1f}%")
        print(line)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="paircomm",
        description="K-agnostic community detection via a pretrained "
                    "pair classifier with refinement")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic training corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--graphs", type=int)
    p.add_argument("--n-min", type=int)
    p.add_argument("--n-max", type=int)
    p.add_argument("--k-min", type=int)
    p.add_argument("--k-max", type=int)
    p.add_argument("--gamma-min", type=float)
    p.add_argument("--gamma-max", type=float)
    p.add_argument("--mu-min", type=float)
    p.add_argument("--mu-max", type=float)
    p.add_argument("--rho-min", type=float)
    p.add_argument("--rho-max", type=float)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="train a model on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--resolution", type=float)
    p.add_argument("--dense-limit", type=int)
    p.add_argument("--shuffle", action="store_const", const=True)
    p.add_argument("--no-bce", action="store_true",
                   help="ablation: drop the cross-entropy term")
    p.add_argument("--no-mod", action="store_true",
                   help="ablation: drop the modularity term")
    p.add_argument("--dim", type=int)
    p.add_argument("--feat-layers", type=int)
    p.add_argument("--gnn-layers", type=int)
    p.add_argument("--classifier-layers", type=int)
    p.add_argument("--feature-mode", choices=["modularity", "degree_onehot"])
    p.add_argument("--encoder-mode", choices=["gnn", "identity"])
    p.add_argument("--classifier-mode",
                   choices=["pairwise_temperature", "fixed_temperature"])
    p.add_argument("--fixed-tau", type=float)
    p.add_argument("--log", help="training log CSV path")
    p.add_argument("--checkpoint-dir")
    p.add_argument("--checkpoint-every", type=int)
    p.add_argument("--resume", help="checkpoint file to resume from")
    p.set_defaults(func=cmd_pretrain)

    def add_infer_options(p):
        p.add_argument("--n-samples", type=int, default=10000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--projection-seed", type=int)
        p.add_argument("--refiner", choices=["lpa", "louvain", "none"],
                       default="louvain")
        p.add_argument("--lpa-max-iter", type=int, default=100)
        p.add_argument("--refine-resolution", type=float, default=1.0)
        p.add_argument("--louvain-max-levels", type=int, default=20)
        p.add_argument("--time-budget", type=float, default=600.0)
        p.add_argument("--untrained-dim", type=int,
                       help="ablation: skip pretraining, use a random-init "
                            "model of this dimension")

    p = sub.add_parser("infer", help="partition one graph with a trained model")
    p.add_argument("--model")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--timing-csv")
    add_infer_options(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a partition file against a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--ground-truth")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="baseline-vs-pipeline benchmark")
    p.add_argument("--model")
    p.add_argument("--graphs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--include-unrefined", action="store_true")
    add_infer_options(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("infer", "bench") and args.model is None \
            and args.untrained_dim is None:
        parser.error("either --model or --untrained-dim is required")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
