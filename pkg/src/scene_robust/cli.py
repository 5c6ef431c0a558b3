"""Command-line entry point.

Subcommands: corrupt, mine, build-graph, train-high, train-fusion, evaluate,
report.  Exit codes: 0 success, 1 usage error, 2 data/config error, 3
numeric failure.  All randomness flows from ``--seed`` through derived
per-purpose streams; every artifact-producing run writes a ``run.json``
capturing the resolved configuration and input hashes (execution-only knobs
such as ``--jobs`` are excluded so reruns stay byte-identical).

``SCENE_ROBUST_CONFIG`` may point at a JSON file of default flag values,
overridden by explicit flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .captions import preprocess_caption, read_caption_records
from .cooccurrence import load_stats, mine_cooccurrence, save_stats
from .corruption.severity import load_severity_table
from .dataset import (
    SplitRules,
    build_manifest,
    generate_corrupted_benchmark,
    load_class_map,
    read_manifest,
    shipped_class_map,
    write_manifest,
)
from .embeddings import EmbeddingTable
from .errors import (
    ContractError,
    DataError,
    NumericError,
    SceneRobustError,
    UndefinedMetricError,
)
from .evaluate import CaptionSource, FeatureSource, evaluate_benchmark, sha256_file
from .fusion import ingest_features
from .graphs import build_graph
from .metrics import ErrorTable, EvalReport
from .nn.gin import GinConfig
from .training import (
    TrainHyper,
    load_fusion_checkpoint,
    load_high_checkpoint,
    save_fusion_checkpoint,
    save_high_checkpoint,
    train_fusion,
    train_high_level,
    write_training_log,
)

USAGE_EXIT = 1
DATA_EXIT = 2
NUMERIC_EXIT = 3

# excluded from run.json's config block: execution knobs never affect the
# produced bytes, and output locations only say where the bytes land
_EXECUTION_ONLY = {"jobs", "out", "out_dir", "log"}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(USAGE_EXIT, f"{self.prog}: error: {message}\n")


def _data_file_hash(name: str) -> str:
    blob = resources.files("scene_robust").joinpath(f"data/{name}").read_bytes()
    return hashlib.sha256(blob).hexdigest()[:16]


def _version_string() -> str:
    return (
        f"scene-robust {__version__} "
        f"(severity-config {_data_file_hash('severity_config_v1.txt')}, "
        f"class-map {_data_file_hash('places148_classes.csv')})"
    )


def _load_env_defaults() -> dict:
    path = os.environ.get("SCENE_ROBUST_CONFIG")
    if not path:
        return {}
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"SCENE_ROBUST_CONFIG {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise DataError(f"SCENE_ROBUST_CONFIG {path}: expected a JSON object")
    return obj


def _apply_env_defaults(args: argparse.Namespace) -> None:
    defaults = _load_env_defaults()
    for key, value in defaults.items():
        attr = key.replace("-", "_")
        if getattr(args, attr, None) is None:
            setattr(args, attr, value)


def _class_map(args) -> object:
    return load_class_map(args.classes) if args.classes else shipped_class_map()


def _write_run_json(out_dir_or_file: Path, command: str, args: argparse.Namespace, inputs: list[Path]) -> None:
    config = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in sorted(vars(args).items())
        if k not in _EXECUTION_ONLY and k != "func" and v is not None
    }
    payload = {
        "command": command,
        "version": _version_string(),
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs if p and Path(p).is_file()},
    }
    target = out_dir_or_file
    if target.is_dir():
        target = target / "run.json"
    else:
        target = target.parent / (target.name + ".run.json")
    target.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# subcommand handlers
# ---------------------------------------------------------------------------


def _cmd_corrupt(args) -> int:
    table = load_severity_table(args.severity_config)
    class_map = _class_map(args)
    out_root = Path(args.out)
    inputs: list[Path] = []
    if args.manifest:
        manifest = read_manifest(args.manifest)
        image_root = Path(args.images) if args.images else Path(args.manifest).parent
        inputs.append(Path(args.manifest))
    else:
        if not args.images:
            raise DataError("corrupt requires --manifest or --images")
        image_root = Path(args.images)
        manifest = build_manifest(image_root, class_map, SplitRules(seed=args.seed))
        out_root.mkdir(parents=True, exist_ok=True)
        write_manifest(manifest, out_root / "source_manifest.jsonl")
    benchmark = generate_corrupted_benchmark(
        manifest, image_root, out_root, args.seed, table, jobs=args.jobs
    )
    write_manifest(benchmark, out_root / "benchmark_manifest.jsonl")
    _write_run_json(out_root, "corrupt", args, inputs)
    print(f"wrote {len(benchmark.records)} images across 76 subsets under {out_root}")
    return 0


def _cmd_mine(args) -> int:
    records = read_caption_records(args.captions)
    class_map = _class_map(args)
    stats = mine_cooccurrence(records, window=args.window, num_scenes=len(class_map))
    out = Path(args.out)
    save_stats(stats, out)
    _write_run_json(out, "mine", args, [Path(args.captions)])
    print(f"mined {len(stats.vocab)} valid words from {len(records)} captions -> {out}")
    return 0


def _cmd_build_graph(args) -> int:
    stats = load_stats(args.stats)
    embeddings = EmbeddingTable.from_text(args.embeddings, fallback_seed=args.seed)
    class_map = _class_map(args)
    words = preprocess_caption(args.caption)
    graph = build_graph(
        words,
        stats,
        embeddings,
        list(class_map.names),
        include_word_edges=args.include_word_edges,
    )
    top = {}
    for i, word in enumerate(graph.words):
        weights = graph.edge_weight[i * graph.num_scenes : (i + 1) * graph.num_scenes]
        best = int(np.argmax(weights))
        top[word] = {"scene": class_map.names[best], "weight": float(weights[best])}
    summary = {
        "caption": args.caption,
        "valid_words": graph.words,
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "strongest_scene_per_word": top,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _hyper_from(args) -> TrainHyper:
    return TrainHyper(
        lr=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )


def _cmd_train_high(args) -> int:
    records = read_caption_records(args.captions)
    val_records = read_caption_records(args.val) if args.val else []
    stats = load_stats(args.stats)
    embeddings = EmbeddingTable.from_text(args.embeddings, fallback_seed=args.seed)
    class_map = _class_map(args)
    config = GinConfig(hidden_dim=args.hidden_dim, descriptor_dim=args.descriptor_dim)
    result = train_high_level(
        records, val_records, stats, embeddings, class_map, config, _hyper_from(args)
    )
    out = Path(args.out)
    save_high_checkpoint(result, out)
    if args.log:
        write_training_log(result.log, args.log)
    inputs = [Path(args.captions), Path(args.stats), Path(args.embeddings)]
    if args.val:
        inputs.append(Path(args.val))
    _write_run_json(out, "train-high", args, inputs)
    final = result.log[-1] if result.log else {}
    print(f"trained high-level encoder ({args.epochs} epochs) -> {out} {final}")
    return 0


def _cmd_train_fusion(args) -> int:
    records = read_caption_records(args.captions)
    val_records = read_caption_records(args.val) if args.val else []
    stats = load_stats(args.stats)
    embeddings = EmbeddingTable.from_text(args.embeddings, fallback_seed=args.seed)
    class_map = _class_map(args)
    high = load_high_checkpoint(args.high_ckpt)
    features = ingest_features(args.features)
    result = train_fusion(
        records, val_records, features, high, stats, embeddings, class_map, _hyper_from(args)
    )
    out = Path(args.out)
    save_fusion_checkpoint(result, out)
    if args.log:
        write_training_log(result.log, args.log)
    inputs = [
        Path(args.captions),
        Path(args.stats),
        Path(args.embeddings),
        Path(args.high_ckpt),
        Path(args.features),
    ]
    _write_run_json(out, "train-fusion", args, inputs)
    final = result.log[-1] if result.log else {}
    print(f"trained fusion head ({args.epochs} epochs) -> {out} {final}")
    return 0


def _cmd_evaluate(args) -> int:
    benchmark = read_manifest(args.benchmark)
    baseline = ErrorTable.from_json(args.baseline)
    stats = load_stats(args.stats)
    embeddings = EmbeddingTable.from_text(args.embeddings, fallback_seed=args.seed)
    class_map = _class_map(args)
    captions = CaptionSource(args.captions)
    features = FeatureSource(args.features_dir) if args.features_dir else None

    try:
        model = load_fusion_checkpoint(args.model)
    except SceneRobustError:
        model = load_high_checkpoint(args.model)
    provenance = {
        "model_checkpoint": str(args.model),
        "model_checkpoint_sha256": sha256_file(args.model),
        "baseline_model": baseline.model,
        "benchmark_seed": benchmark.global_seed,
        "feature_source": model.metadata.get("feature_source", ""),
    }
    report = evaluate_benchmark(
        benchmark,
        model,
        baseline,
        captions,
        stats,
        embeddings,
        class_map,
        features=features,
        provenance=provenance,
        model_name=Path(args.model).stem,
        jobs=args.jobs,
    )
    out = Path(args.out)
    report.save_json(out)
    _write_run_json(out, "evaluate", args, [Path(args.model), Path(args.benchmark), Path(args.baseline)])
    print(
        f"evaluated {Path(args.model).name}: clean top-1 {report.clean['top1']:.3f}, "
        f"mCE {report.mce:.1f}, mRCE {report.mrce:.1f} -> {out}"
    )
    return 0


def _cmd_report(args) -> int:
    report = EvalReport.load_json(args.report)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_grid_csv(out_dir / "accuracy_grid.csv")
    report.write_pr_csv(out_dir / "pr_points.csv")
    with open(out_dir / "ce_rce.csv", "w", encoding="utf-8") as fh:
        fh.write("kind,ce,rce\n")
        for kind in sorted(report.ce):
            fh.write(f"{kind},{report.ce[kind]:.6f},{report.rce[kind]:.6f}\n")
        fh.write(f"mean,{report.mce:.6f},{report.mrce:.6f}\n")
    _write_run_json(out_dir, "report", args, [Path(args.report)])
    print(f"wrote accuracy_grid.csv, pr_points.csv, ce_rce.csv under {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="scene-robust", description=__doc__.split("\n\n")[1])
    parser.add_argument("--version", action="version", version=_version_string())
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p: _Parser, *, seed: bool = True, classes: bool = True) -> None:
        if seed:
            p.add_argument("--seed", type=int, default=0, help="global seed (default 0)")
        if classes:
            p.add_argument("--classes", help="class map CSV (default: shipped Places148 list)")

    p = sub.add_parser("corrupt", help="generate the 76-subset corrupted benchmark")
    p.add_argument("--manifest", help="existing dataset manifest JSONL")
    p.add_argument("--images", help="image root laid out as <class_name>/<file>")
    p.add_argument("--out", required=True, help="output root for the benchmark tree")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (outputs unaffected)")
    p.add_argument("--severity-config", help="severity parameter table (default: shipped)")
    common(p)
    p.set_defaults(func=_cmd_corrupt)

    p = sub.add_parser("mine", help="mine co-occurrence statistics from labeled captions")
    p.add_argument("--captions", required=True, help="caption JSONL with label_id per record")
    p.add_argument("--out", required=True, help="output stats file (P148COOC)")
    p.add_argument("--window", type=int, default=3, help="word co-occurrence window (default 3)")
    common(p, seed=False)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("build-graph", help="debug: build and summarize one caption's graph")
    p.add_argument("--caption", required=True)
    p.add_argument("--stats", required=True, help="mined stats file")
    p.add_argument("--embeddings", required=True, help="embedding table (text format)")
    p.add_argument("--include-word-edges", action="store_true")
    common(p)
    p.set_defaults(func=_cmd_build_graph)

    def train_flags(p: _Parser, lr: float, wd: float, epochs: int) -> None:
        p.add_argument("--captions", required=True)
        p.add_argument("--val", help="validation caption JSONL")
        p.add_argument("--stats", required=True)
        p.add_argument("--embeddings", required=True)
        p.add_argument("--out", required=True, help="output checkpoint")
        p.add_argument("--log", help="training log JSONL")
        p.add_argument("--lr", type=float, default=lr)
        p.add_argument("--weight-decay", type=float, default=wd)
        p.add_argument("--epochs", type=int, default=epochs)
        p.add_argument("--batch-size", type=int, default=64)
        common(p)

    p = sub.add_parser("train-high", help="train the caption-graph encoder")
    train_flags(p, lr=1e-4, wd=6e-4, epochs=15)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--descriptor-dim", type=int, default=128)
    p.set_defaults(func=_cmd_train_high)

    p = sub.add_parser("train-fusion", help="train the fusion head on frozen streams")
    train_flags(p, lr=1e-4, wd=6e-4, epochs=15)
    p.add_argument("--high-ckpt", required=True, help="frozen high-level checkpoint")
    p.add_argument("--features", required=True, help="P148FEAT feature file for train/val ids")
    p.set_defaults(func=_cmd_train_fusion)

    p = sub.add_parser("evaluate", help="score a checkpoint over a corrupted benchmark")
    p.add_argument("--model", required=True, help="high-level or fusion checkpoint")
    p.add_argument("--benchmark", required=True, help="benchmark manifest JSONL")
    p.add_argument("--baseline", required=True, help="baseline error table JSON")
    p.add_argument("--captions", help="caption JSONL or per-subset directory")
    p.add_argument("--features-dir", help="directory of per-subset P148FEAT files")
    p.add_argument("--stats", help="mined stats file")
    p.add_argument("--embeddings", help="embedding table")
    p.add_argument("--out", default="eval_report.json", help="output report JSON")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers (outputs unaffected)")
    common(p)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="export CSV tables from an evaluation report")
    p.add_argument("--report", required=True, help="eval report JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "command", None):
        parser.print_help()
        return 0
    try:
        _apply_env_defaults(args)
        _require(args)
        return args.func(args)
    except (NumericError, UndefinedMetricError) as exc:
        print(f"scene-robust: numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_EXIT
    except (DataError, ContractError, SceneRobustError) as exc:
        print(f"scene-robust: error: {exc}", file=sys.stderr)
        return DATA_EXIT


def _require(args: argparse.Namespace) -> None:
    """Flags that may come from the env config are validated after merging."""
    if args.command == "evaluate":
        missing = [
            f"--{name.replace('_', '-')}"
            for name in ("captions", "stats", "embeddings")
            if getattr(args, name) in (None, "")
        ]
        if missing:
            raise DataError(f"evaluate is missing required inputs: {', '.join(missing)}")


if __name__ == "__main__":
    sys.exit(main())
