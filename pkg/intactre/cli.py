"""
Command line interface: ``intactre <command> [options]``.
"""

import argparse
import dataclasses
import json
import logging
from pathlib import Path
import sys
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from . import archive
from .ablation import run_ablation
from .config import RunConfig, load_config
from .data import (CorpusPaths, EncodedDataset, EncodingSettings, build_vocab, encode_dataset,
                   load_corpus, load_dataset, load_relations, load_word_vectors, save_dataset, subsample)
from .evaluation import (PREDICTIONS_NAME, EvaluationResult, evaluate, evaluate_predictions, read_gold,
                         read_predictions, summarize_runs, write_predictions, write_results, write_summary)
from .gradsuite import gradient_suite
from .model import load_checkpoint
from .numerics import NonFiniteError
from .plotting import plot_curves
from .synth import SyntheticDataset, load_synthetic, save_synthetic, synth_generate
from .train import MODEL_NAME, run_dir, train_runs
from .utils import file_content_id

logger = logging.getLogger(__name__)

Splits = Dict[str, Union[EncodedDataset, SyntheticDataset]]


def load_splits(path: Union[str, Path]) -> Splits:
    """Train/test splits from either an encoded corpus or a synthetic archive."""
    kind = archive.read_attrs(path).get("kind")
    if kind == "dataset":
        return dict(load_dataset(path))
    if kind == "synthetic":
        return dict(load_synthetic(path))
    raise ValueError(f"{path} holds neither an encoded nor a synthetic dataset (kind {kind!r})")


def _split(splits: Splits, name: str, path: Union[str, Path]) -> Union[EncodedDataset, SyntheticDataset]:
    if name not in splits:
        raise ValueError(f"{path} has no '{name}' split")
    return splits[name]


def _require(value: Optional[str], what: str) -> str:
    if value is None:
        raise ValueError(f"missing {what}")
    return value


def cmd_ingest(config: RunConfig, args: argparse.Namespace) -> int:
    data = config.data
    relations = Path(_require(data.relations, "[data] relations"))
    optional = {"descriptions": Path(data.descriptions) if data.descriptions else None,
                "types": Path(data.types) if data.types else None}
    train_raw = load_corpus(CorpusPaths(Path(_require(data.train_sentences, "[data] train_sentences")), relations,
                                        **optional), grouping="relation")
    test_raw = load_corpus(CorpusPaths(Path(_require(data.test_sentences, "[data] test_sentences")), relations,
                                       **optional), grouping=data.test_grouping)
    if data.max_bags is not None or data.top_relations is not None:
        train_raw = subsample(train_raw, data.max_bags, data.top_relations, config.train.seed)
    if data.max_test_bags is not None or data.top_relations is not None:
        test_raw = subsample(test_raw, data.max_test_bags, seed=config.train.seed, keep_relations=train_raw.relations)
    vocab = build_vocab(train_raw, data.min_count)
    settings = EncodingSettings(data.sequence_length, data.typeset_size, data.max_relative_position, data.max_bag_size)
    out_dir = Path(config.out_dir)
    cid = save_dataset(out_dir / "dataset.car", {
        "train": encode_dataset(train_raw, vocab, settings, config.train.seed),
        "test": encode_dataset(test_raw, vocab, settings, config.train.seed),
    })
    vocab.save(out_dir / "vocab")
    stats = {"train": dataclasses.asdict(train_raw.stats), "test": dataclasses.asdict(test_raw.stats), "root": cid}
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2) + "\n", encoding="utf-8")
    for name, raw in (("train", train_raw), ("test", test_raw)):
        s = raw.stats
        print(f"{name}: {s.sentences} sentences, {s.pairs} pairs, {s.facts} facts, {s.bags} bags, "
              f"{100 * s.sparse_bag_fraction:.1f}% single-sentence bags")
    print(f"wrote {out_dir / 'dataset.car'} ({cid})")
    return 0


def cmd_synth(config: RunConfig, args: argparse.Namespace) -> int:
    dataset = synth_generate(config.synth)
    train_set, test_set = dataset.split(config.synth.n_test)
    path = Path(config.out_dir) / "synthetic.car"
    cid = save_synthetic(path, {"train": train_set, "test": test_set})
    print(f"wrote {len(train_set)} training and {len(test_set)} test samples to {path} ({cid})")
    return 0


def cmd_train(config: RunConfig, args: argparse.Namespace) -> int:
    path = args.dataset or config.data.dataset
    train_set = _split(load_splits(path), "train", path)
    inputs = {"dataset": file_content_id(path)}
    word_vectors: Optional[np.ndarray] = None
    if config.data.word_vectors and isinstance(train_set, EncodedDataset):
        word_vectors, _ = load_word_vectors(config.data.word_vectors, train_set.vocab.words, config.model.d_word,
                                            np.random.default_rng(config.train.seed))
        inputs["word_vectors"] = file_content_id(config.data.word_vectors)
    out_dir = Path(config.out_dir)
    results = train_runs(train_set, config, out_dir, inputs, word_vectors)
    for result in results:
        last = result.log[-1] if result.log else None
        if last is not None:
            print(f"seed {result.seed}, epoch {last.epoch}: loss {last.loss:.4f}, accuracy {last.accuracy:.4f}")
    if len(results) == 1:
        print(f"wrote {out_dir / MODEL_NAME}")
    else:
        print(f"wrote {len(results)} runs to {out_dir}")
    return 0


def checkpoint_paths(specs: Sequence[str]) -> List[Path]:
    """
    Expand ``--checkpoint`` arguments: a file is taken as is, a run directory
    stands for its ``model.car`` or, after a multi-seed run, for the
    ``seed-*/model.car`` of every run.
    """
    paths: List[Path] = []
    for spec in specs:
        path = Path(spec)
        if not path.is_dir():
            paths.append(path)
        elif (path / MODEL_NAME).exists():
            paths.append(path / MODEL_NAME)
        else:
            runs = sorted(path.glob(f"seed-*/{MODEL_NAME}"))
            if not runs:
                raise ValueError(f"{path} holds no {MODEL_NAME}")
            paths.extend(runs)
    return paths


def _write_evaluation(out_dir: Path, result: EvaluationResult, relation_names: Sequence[str]) -> None:
    write_results(out_dir, result)
    write_predictions(out_dir / PREDICTIONS_NAME, result.predictions, relation_names)


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    out_dir = Path(config.out_dir)
    if args.predictions is not None:
        if args.gold is None or args.relations is None:
            raise ValueError("--predictions needs --gold and --relations")
        relation_names = load_relations(args.relations)
        predictions = read_predictions(args.predictions, relation_names)
        if not predictions:
            raise ValueError(f"{args.predictions} contains no predictions")
        result = evaluate_predictions(predictions, read_gold(args.gold, relation_names), top_k=config.eval.top_k)
        _write_evaluation(out_dir, result, relation_names)
        print(json.dumps(result.metrics(), indent=2, sort_keys=True))
        return 0

    if not args.checkpoint:
        raise ValueError("eval needs --checkpoint (with --dataset) or --predictions (with --gold)")
    path = args.dataset or config.data.dataset
    test_set = _split(load_splits(path), "test", path)
    results: Dict[int, EvaluationResult] = {}
    for checkpoint_path in checkpoint_paths(args.checkpoint):
        checkpoint = load_checkpoint(checkpoint_path)
        if list(test_set.relation_names) != checkpoint.relation_names:
            raise ValueError(f"{checkpoint_path} and the dataset disagree on the relation inventory")
        seed = int(checkpoint.attrs.get("seed", len(results)))
        if seed in results:
            raise ValueError(f"more than one checkpoint was trained with seed {seed}")
        results[seed] = evaluate(checkpoint.model, test_set, config.eval.batch_size, config.eval.top_k)
        relation_names = checkpoint.relation_names

    if len(results) == 1:
        (result,) = results.values()
        _write_evaluation(out_dir, result, relation_names)
        print(json.dumps(result.metrics(), indent=2, sort_keys=True))
        return 0
    for seed, result in results.items():
        _write_evaluation(run_dir(out_dir, seed), result, relation_names)
    summary = summarize_runs(results)
    write_summary(out_dir, summary)
    print(json.dumps({k: v for k, v in summary.items() if k != "per_seed"}, indent=2, sort_keys=True))
    return 0


def cmd_ablate(config: RunConfig, args: argparse.Namespace) -> int:
    suite = args.suite or config.ablation.suite
    path = args.dataset or config.data.dataset
    splits = load_splits(path)
    table = run_ablation(suite, _split(splits, "train", path), _split(splits, "test", path), config,
                         Path(config.out_dir))
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return 0


def cmd_gradcheck(config: RunConfig, args: argparse.Namespace) -> int:
    first = config.train.seed
    report = gradient_suite(range(first, first + args.seeds), fusion_form=config.model.fusion_form)
    print(f"max relative error over {len(report.errors)} seeds: {report.max_error:.3e}")
    if not report.passed:
        print(f"gradient check failed (tolerance {report.tolerance:.0e})", file=sys.stderr)
        return 1
    return 0


def _parse_curves(specs: Sequence[str]) -> Mapping[str, str]:
    curves: Dict[str, str] = {}
    for spec in specs:
        label, sep, path = spec.partition("=")
        if not sep:
            label, path = Path(spec).parent.name or spec, spec
        curves[label] = path
    return curves


def cmd_plot(config: RunConfig, args: argparse.Namespace) -> int:
    target = plot_curves(_parse_curves(args.curves), args.output or Path(config.out_dir) / "pr_curves.png",
                         args.top_k if args.top_k is not None else config.eval.top_k)
    print(f"wrote {target}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out-dir", help="override the configured output directory")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(prog="intactre", description="Multi-view relation extraction in an intact space.")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("ingest", parents=[common], help="encode a corpus into a dataset archive")
    commands.add_parser("synth", parents=[common], help="generate a synthetic multi-view dataset")

    p = commands.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--dataset", help="dataset archive (default: [data] dataset)")

    p = commands.add_parser("eval", parents=[common], help="held-out evaluation")
    p.add_argument("--checkpoint", nargs="+", help="model checkpoints or run directories (one per seed)")
    p.add_argument("--dataset", help="dataset archive (default: [data] dataset)")
    p.add_argument("--predictions", help="JSONL predictions to score instead of a model")
    p.add_argument("--gold", help="JSONL gold facts for --predictions")
    p.add_argument("--relations", help="relation list for --predictions")

    p = commands.add_parser("ablate", parents=[common], help="run an ablation suite")
    p.add_argument("--suite", choices=("views", "fusion", "dx"))
    p.add_argument("--dataset", help="dataset archive (default: [data] dataset)")

    p = commands.add_parser("gradcheck", parents=[common], help="finite-difference check at toy dimensions")
    p.add_argument("--seeds", type=int, default=20, help="number of seeds (default: 20)")

    p = commands.add_parser("plot", parents=[common], help="plot precision/recall curves")
    p.add_argument("curves", nargs="+", metavar="[LABEL=]CSV")
    p.add_argument("-o", "--output", help="output image (.png, .svg, .pdf)")
    p.add_argument("--top-k", type=int)
    return parser


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "gradcheck": cmd_gradcheck,
    "plot": cmd_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, seed=args.seed, out_dir=args.out_dir)
        return COMMANDS[args.command](config, args)
    except (ValueError, KeyError, IndexError, OSError, NonFiniteError) as e:
        logger.debug("command failed", exc_info=True)
        print(f"intactre {args.command}: error: {e}", file=sys.stderr)
        return 1
