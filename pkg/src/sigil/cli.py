"""Command-line interface: synth, inject, train, score, evaluate,
diagnose, and rerun.

Every command writes a ``manifest.json`` into its output directory
before any other output; ``sigil rerun`` re-executes a manifest after
verifying the recorded input digests. Exit codes: 0 success, 1 failed
check or diagnostic, 2 usage error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, check_compatible, load_model, save_model
from .config import CONFIG_KEYS, config_as_dict, resolve_config
from .diagnostics import SUITE_NAMES, run_suite, write_report
from .graphs import GraphFormatError, load_bundle, write_bundle
from .injection import InjectionPlan, apply_plan
from .manifest import ManifestError, RunManifest
from .metrics import MetricReport, write_metric_report
from .scoring import NORMALIZERS, read_score_report, score_graph, write_score_report
from .synth import SyntheticSpec, generate_synthetic
from .training import ConfigError, TrainConfig, train, write_train_log

__all__ = ["main"]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_IO = 3


def _entropy_seed() -> int:
    return int.from_bytes(os.urandom(8), "little") >> 1


def _bundle_filenames(num_views: int, name: str, labeled: bool) -> list[str]:
    out = [f"{name}.bundle"]
    for i in range(num_views):
        out += [f"{name}.view{i}.edges", f"{name}.view{i}.features"]
    if labeled:
        out.append(f"{name}.labels")
    return out


def _add_bundle_inputs(manifest: RunManifest, bundle_path) -> None:
    """Digest the bundle manifest plus every data file it references."""
    from .graphs import _parse_keyvalue

    bundle_path = Path(bundle_path)
    manifest.add_input("bundle", bundle_path)
    base = bundle_path.parent
    for key, value in _parse_keyvalue(bundle_path).items():
        if key == "views":
            continue
        manifest.add_input(f"bundle.{key}", base / value)


# ---------------------------------------------------------------------------
# command bodies; each takes the resolved (manifest-ready) config


def _run_synth(config: dict, seed: int, out_dir: Path) -> None:
    spec = SyntheticSpec(
        n=config["nodes"],
        communities=config["communities"],
        intra_prob=config["intra"],
        inter_prob=config["inter"],
        feature_dim=config["feature_dim"],
        separation=config["separation"],
        views=config["views"],
        mask_prob=config["mask_prob"],
        seed=seed,
    )
    manifest = RunManifest(command="synth", config=config, seed=seed)
    manifest.outputs = _bundle_filenames(spec.views, config["name"], labeled=True)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.write(out_dir / "manifest.json")
    graph = generate_synthetic(spec)
    from .graphs import AnomalyLabels, MultiViewGraph

    labeled = MultiViewGraph(
        n=graph.n,
        views=graph.views,
        labels=AnomalyLabels.build(np.zeros(graph.n, dtype=bool)),
    )
    write_bundle(labeled, out_dir, name=config["name"])


def _run_inject(config: dict, seed: int, out_dir: Path) -> None:
    graph = load_bundle(config["bundle"])
    plan = InjectionPlan(
        clique_size=config["clique_size"],
        clique_count=config["cliques"],
        attr_count=config["attr"],
        attr_candidates=config["k"],
        seed=seed,
    )
    manifest = RunManifest(command="inject", config=config, seed=seed)
    _add_bundle_inputs(manifest, config["bundle"])
    manifest.outputs = _bundle_filenames(graph.num_views, config["name"], labeled=True)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.write(out_dir / "manifest.json")
    injected, _ = apply_plan(graph, plan)
    write_bundle(injected, out_dir, name=config["name"])


def _run_train(config: dict, seed: int, out_dir: Path) -> None:
    graph = load_bundle(config["bundle"])
    cfg_dict = dict(config["train_config"])
    cfg_dict["clusters"] = tuple(cfg_dict["clusters"])
    cfg = TrainConfig(**{CONFIG_KEYS[k]: v for k, v in cfg_dict.items()})
    cfg.validate()
    manifest = RunManifest(command="train", config=config, seed=seed)
    _add_bundle_inputs(manifest, config["bundle"])
    manifest.outputs = ["model.ckpt", "train.log", "timing.log"]
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.write(out_dir / "manifest.json")
    checkpoint = out_dir / "model.ckpt"
    model, log = train(graph, cfg, checkpoint_path=checkpoint)
    save_model(model, checkpoint)
    write_train_log(log, out_dir / "train.log", out_dir / "timing.log")


def _run_score(config: dict, seed: int, out_dir: Path) -> None:
    graph = load_bundle(config["bundle"])
    model = load_model(config["checkpoint"])
    check_compatible(model, graph.n, graph.view_dims())
    manifest = RunManifest(command="score", config=config, seed=seed)
    _add_bundle_inputs(manifest, config["bundle"])
    manifest.add_input("checkpoint", config["checkpoint"])
    manifest.outputs = ["scores.txt"]
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.write(out_dir / "manifest.json")
    report = score_graph(
        graph,
        model,
        beta=config["beta"],
        normalizer=config["normalizer"],
        ridge=config["ridge"],
        per_view_min=config["per_view_min"],
    )
    write_score_report(report, out_dir / "scores.txt")


def _run_evaluate(config: dict, seed: int, out_dir: Path) -> None:
    report = read_score_report(config["scores"])
    n = report.combined.shape[0]
    labels = np.zeros(n, dtype=bool)
    for lineno, raw in enumerate(Path(config["labels"]).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        idx = int(line)
        if not 0 <= idx < n:
            raise GraphFormatError(
                f"{config['labels']}:{lineno}: label index {idx} does not fit "
                f"a {n}-node score report"
            )
        labels[idx] = True
    manifest = RunManifest(command="evaluate", config=config, seed=seed)
    manifest.add_input("scores", config["scores"])
    manifest.add_input("labels", config["labels"])
    manifest.outputs = ["metrics.txt", "metrics.json"]
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.write(out_dir / "manifest.json")
    metrics = MetricReport.compute(report.combined, labels, config["k"])
    write_metric_report(metrics, out_dir / "metrics.txt", out_dir / "metrics.json")


def _run_diagnose(config: dict, seed: int, out_dir: Path) -> bool:
    manifest = RunManifest(command="diagnose", config=config, seed=seed)
    manifest.outputs = ["diagnostics.txt"]
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest.write(out_dir / "manifest.json")
    report = run_suite(only=config["only"] or None, seed=seed)
    write_report(report, out_dir / "diagnostics.txt")
    for line in report.lines():
        print(line)
    return report.passed


_RUNNERS = {
    "synth": _run_synth,
    "inject": _run_inject,
    "train": _run_train,
    "score": _run_score,
    "evaluate": _run_evaluate,
    "diagnose": _run_diagnose,
}


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigil",
        description="Multi-view graph anomaly detection via similarity-guided "
        "contrastive clustering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-view graph bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--nodes", type=int, default=300)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--intra", type=float, default=0.1)
    p.add_argument("--inter", type=float, default=0.01)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--views", type=int, default=2)
    p.add_argument("--mask-prob", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--name", default="synthetic")

    p = sub.add_parser("inject", help="plant structural and attribute anomalies")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--clique-size", type=int, default=15)
    p.add_argument("--cliques", type=int, default=0)
    p.add_argument("--attr", type=int, default=0)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--name", default="injected")

    p = sub.add_parser("train", help="train a model on a graph bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--iterations", type=int, default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--clusters", default=None, help="comma-separated cluster counts")
    p.add_argument("--lambda", dest="lambda_flag", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--pair-sample", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--loss-variant", default=None)
    p.add_argument("--normalization", default=None)
    p.add_argument("--log-interval", type=int, default=None)
    p.add_argument("--checkpoint-interval", type=int, default=None)
    p.add_argument("--augment", default=None, help="true/false")
    p.add_argument("--detach-similarity", default=None, help="true/false")
    p.add_argument("--mixture-decode", default=None, help="true/false")
    p.add_argument("--tied-unpooling", default=None, help="true/false")

    p = sub.add_parser("score", help="score a bundle with a trained checkpoint")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--normalizer", default="zscore", choices=NORMALIZERS)
    p.add_argument("--ridge", type=float, default=None)
    p.add_argument("--per-view-min", action="store_true")

    p = sub.add_parser("evaluate", help="compute AUC and Recall@K from a score report")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", default="50", help="comma-separated K values")

    p = sub.add_parser("diagnose", help="run the analytical verification suite")
    p.add_argument("--out", required=True)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--all", action="store_true")
    group.add_argument("--only", default=None, help=f"subset of {SUITE_NAMES}")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("rerun", help="re-execute a recorded run manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    return parser


def _resolve_seed(flag_seed: int | None) -> int:
    return _entropy_seed() if flag_seed is None else flag_seed


def _dispatch(args) -> int:
    out_dir = Path(args.out)
    if args.command == "synth":
        if not (0.0 <= args.intra <= 1.0 and 0.0 <= args.inter <= 1.0):
            raise ConfigError("edge probabilities must be in [0, 1]")
        if not 0.0 <= args.mask_prob < 1.0:
            raise ConfigError("mask probability must be in [0, 1)")
        config = {
            "nodes": args.nodes,
            "communities": args.communities,
            "intra": args.intra,
            "inter": args.inter,
            "feature_dim": args.feature_dim,
            "separation": args.separation,
            "views": args.views,
            "mask_prob": args.mask_prob,
            "name": args.name,
        }
        _run_synth(config, _resolve_seed(args.seed), out_dir)
        return EXIT_OK

    if args.command == "inject":
        config = {
            "bundle": str(Path(args.bundle).resolve()),
            "clique_size": args.clique_size,
            "cliques": args.cliques,
            "attr": args.attr,
            "k": args.k,
            "name": args.name,
        }
        _run_inject(config, _resolve_seed(args.seed), out_dir)
        return EXIT_OK

    if args.command == "train":
        flags = {
            "iterations": args.iterations,
            "learning_rate": args.learning_rate,
            "weight_decay": args.weight_decay,
            "hidden": args.hidden,
            "clusters": args.clusters,
            "lambda": args.lambda_flag,
            "alpha": args.alpha,
            "beta": args.beta,
            "tau": args.tau,
            "pair_sample": args.pair_sample,
            "seed": args.seed,
            "loss_variant": args.loss_variant,
            "normalization": args.normalization,
            "log_interval": args.log_interval,
            "checkpoint_interval": args.checkpoint_interval,
            "augment": args.augment,
            "detach_similarity": args.detach_similarity,
            "mixture_decode": args.mixture_decode,
            "tied_unpooling": args.tied_unpooling,
        }
        cfg = resolve_config(args.config, flags)
        seeded = args.seed is not None or "seed" in _explicit_sources(args.config)
        if not seeded:
            cfg = resolve_config(args.config, {**flags, "seed": _entropy_seed()})
        config = {
            "bundle": str(Path(args.bundle).resolve()),
            "train_config": config_as_dict(cfg),
        }
        _run_train(config, cfg.seed, out_dir)
        return EXIT_OK

    if args.command == "score":
        if not 0.0 <= args.beta <= 1.0:
            raise ConfigError(f"beta must be in [0, 1], got {args.beta}")
        config = {
            "bundle": str(Path(args.bundle).resolve()),
            "checkpoint": str(Path(args.checkpoint).resolve()),
            "beta": args.beta,
            "normalizer": args.normalizer,
            "ridge": args.ridge,
            "per_view_min": args.per_view_min,
        }
        _run_score(config, 0, out_dir)
        return EXIT_OK

    if args.command == "evaluate":
        try:
            ks = [int(part) for part in args.k.split(",") if part.strip()]
        except ValueError as err:
            raise ConfigError(f"bad --k list: {err}") from err
        if not ks:
            raise ConfigError("--k needs at least one value")
        config = {
            "scores": str(Path(args.scores).resolve()),
            "labels": str(Path(args.labels).resolve()),
            "k": ks,
        }
        _run_evaluate(config, 0, out_dir)
        return EXIT_OK

    if args.command == "diagnose":
        only = None
        if args.only:
            only = [part.strip() for part in args.only.split(",") if part.strip()]
            bad = set(only) - set(SUITE_NAMES)
            if bad:
                raise ConfigError(f"unknown diagnostics: {sorted(bad)}")
        config = {"only": only or []}
        passed = _run_diagnose(config, args.seed, out_dir)
        return EXIT_OK if passed else EXIT_CHECK_FAILED

    if args.command == "rerun":
        manifest = RunManifest.read(args.manifest)
        try:
            manifest.verify_inputs()
        except ManifestError as err:
            print(f"sigil: {err}", file=sys.stderr)
            return EXIT_CHECK_FAILED
        runner = _RUNNERS.get(manifest.command)
        if runner is None:
            raise ManifestError(f"manifest has unknown command '{manifest.command}'")
        result = runner(manifest.config, manifest.seed, out_dir)
        if manifest.command == "diagnose" and result is False:
            return EXIT_CHECK_FAILED
        return EXIT_OK

    raise AssertionError(f"unhandled command {args.command}")


def _explicit_sources(config_path) -> set[str]:
    """Keys set by the config file or the environment (for seed handling)."""
    from .config import ENV_PREFIX, read_config_file

    keys: set[str] = set()
    if config_path is not None:
        keys |= set(read_config_file(config_path).keys())
    for key in CONFIG_KEYS:
        if ENV_PREFIX + key.upper() in os.environ:
            keys.add(key)
    return keys


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:  # argparse uses exit code 2 for usage errors
        return int(exit_.code or 0)
    try:
        return _dispatch(args)
    except (GraphFormatError, CheckpointError, ManifestError, OSError) as err:
        # GraphFormatError subclasses ValueError; file problems must map
        # to the I/O exit code, so this clause comes first
        print(f"sigil: {err}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as err:
        print(f"sigil: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
