"""Command-line interface: stats -> split -> prepare -> run -> evaluate.

Each command writing to an output directory leaves exactly one
``manifest.json`` there describing the command line, seed, parameters,
and input digests, which is enough to re-run the step. Exit codes:
0 success, 1 usage/config error, 2 data error, 3 backend failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import backend as backend_mod
from . import codec, corpus, evaluation, pipeline

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the exit-code contract wants 1.
    def error(self, message):
        raise UsageError(message)


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir: Path, args: argparse.Namespace, inputs: list[Path], outputs: list[str]) -> None:
    manifest = {
        "command": sys.argv,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "params": {k: str(v) for k, v in sorted(vars(args).items()) if k != "func"},
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": outputs,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _resolve_grammar(name: str) -> codec.AnswerGrammar:
    if name == "default":
        return codec.DEFAULT_GRAMMAR
    grammar, _ = codec.load_codec_config(name)
    return grammar


def _resolve_templates(name: str) -> codec.TemplateSet:
    if name in codec.TEMPLATE_REGISTRY:
        return codec.TEMPLATE_REGISTRY[name]
    _, templates = codec.load_codec_config(name)
    return templates


def _resolve_examples_source(path: Path) -> Path:
    """Map a split directory to the JSONL file inside it; pass files through."""
    if path.is_dir():
        for candidate in ("train.jsonl", "eval.jsonl"):
            if (path / candidate).exists():
                return path / candidate
        raise FileNotFoundError(f"no train.jsonl or eval.jsonl under {path}")
    return path


def _load_examples(path: Path) -> list[corpus.Example]:
    """Accept a split directory (train.jsonl/eval.jsonl), a JSONL file, or a raw corpus."""
    source = _resolve_examples_source(path)
    if source.suffix == ".jsonl":
        return corpus.load_examples_file(source)
    return corpus.group_examples(corpus.parse_corpus_file(source))


def _corpus_or_excerpt(path: str | None) -> Path:
    if path:
        return Path(path)
    return corpus.bundled_excerpt_path()


# -- commands ---------------------------------------------------------------


def cmd_stats(args) -> int:
    source = _corpus_or_excerpt(args.corpus)
    records = corpus.parse_corpus_file(source)
    examples = corpus.group_examples(records)
    st = corpus.stats(examples, records)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(st.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written = ["stats.json"]
    for name, hist in (
        ("ades_per_text.csv", st.ades_per_text_hist),
        ("suspects_per_text.csv", st.suspects_per_text_hist),
        ("pairs_per_text.csv", st.pairs_per_text_hist),
    ):
        with open(out_dir / name, "w", encoding="utf-8") as fh:
            fh.write("count,num_texts\n")
            for count in sorted(hist):
                fh.write(f"{count},{hist[count]}\n")
        written.append(name)
    _write_manifest(out_dir, args, [source], written)
    print(
        f"{st.num_records} records, {st.num_texts} texts, "
        f"{st.num_unique_ades} unique ADEs, {st.num_unique_suspects} unique suspects, "
        f"{st.pct_multi_entity:.1%} multi-entity",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_split(args) -> int:
    source = _corpus_or_excerpt(args.corpus)
    records = corpus.parse_corpus_file(source)
    examples = corpus.group_examples(records)
    train, evalset = corpus.split(
        examples, corpus.SplitSpec(train_size=args.train_size, seed=args.seed)
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus.save_examples_file(out_dir / "train.jsonl", train)
    corpus.save_examples_file(out_dir / "eval.jsonl", evalset)
    _write_manifest(out_dir, args, [source], ["train.jsonl", "eval.jsonl"])
    print(f"split: {len(train)} train / {len(evalset)} eval", file=sys.stderr)
    return EXIT_OK


def cmd_prepare(args) -> int:
    examples = _load_examples(Path(args.split))
    config = pipeline.PipelineConfig(
        approach=args.approach,
        grammar=_resolve_grammar(args.grammar),
        templates=_resolve_templates(args.templates),
        pair_format=codec.PairFormat(args.pair_format),
        negative_ratio=args.negative_ratio,
        no_suspect_sentinel_enabled=args.no_suspect_sentinel,
    )
    instances = pipeline.prepare_training_pairs(examples, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        pipeline.write_instances_jsonl(fh, instances)
    _write_manifest(out.parent, args, [_resolve_examples_source(Path(args.split))], [out.name])
    print(f"prepared {len(instances)} pairs for approach {args.approach}", file=sys.stderr)
    return EXIT_OK


def _build_backend(args, gold: list[corpus.Example]):
    if args.backend == "mock":
        noise = backend_mod.NoiseConfig(
            drop_prob=args.noise_drop,
            spurious_prob=args.noise_spurious,
            corrupt_prob=args.noise_corrupt,
            flip_prob=args.noise_flip,
            seed=args.seed,
        )
        return backend_mod.MockBackend(
            gold,
            noise=noise,
            grammar=_resolve_grammar(args.grammar),
            templates=_resolve_templates(args.templates),
            pair_format=codec.PairFormat(args.pair_format),
            no_suspect_sentinel=(
                codec.NO_SUSPECT_SENTINEL if args.no_suspect_sentinel else None
            ),
        )
    endpoint = args.endpoint or os.environ.get("ADEQA_ENDPOINT")
    if not endpoint:
        raise UsageError("--endpoint (or ADEQA_ENDPOINT) is required for --backend http")
    return backend_mod.HttpBackend(
        endpoint,
        timeout_ms=args.timeout_ms,
        max_retries=args.max_retries,
        concurrency_limit=args.concurrency,
    )


def cmd_run(args) -> int:
    split_path = Path(args.split)
    examples = _load_examples(split_path)
    gold_path = Path(args.gold) if args.gold else split_path
    gold = examples if gold_path == split_path else _load_examples(gold_path)

    backend = _build_backend(args, gold)
    config = pipeline.PipelineConfig(
        approach=args.approach,
        grammar=_resolve_grammar(args.grammar),
        templates=_resolve_templates(args.templates),
        pair_format=codec.PairFormat(args.pair_format),
        no_suspect_sentinel_enabled=args.no_suspect_sentinel,
        concurrency_limit=args.concurrency,
    )
    extractor = pipeline.make_extractor(config, backend)
    predictions = extractor.predict(examples)
    failures = extractor.failures_

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "predictions.jsonl", "w", encoding="utf-8") as fh:
        pipeline.write_predictions_jsonl(fh, predictions)
    written = ["predictions.jsonl"]

    if args.judgments_out:
        if args.approach != 1:
            raise UsageError("--judgments-out requires --approach 1")
        judgments = pipeline.collect_relation_judgments(
            examples, backend, _resolve_templates(args.templates)
        )
        with open(out_dir / args.judgments_out, "w", encoding="utf-8") as fh:
            evaluation.write_judgments_jsonl(fh, judgments)
        written.append(args.judgments_out)

    inputs = {_resolve_examples_source(split_path), _resolve_examples_source(gold_path)}
    _write_manifest(out_dir, args, sorted(inputs), written)
    print(
        f"predicted {len(predictions)}/{len(examples)} texts"
        + (f", skipped {len(failures)}" if failures else ""),
        file=sys.stderr,
    )
    if predictions or not examples:
        return EXIT_OK
    print("all texts failed", file=sys.stderr)
    return EXIT_BACKEND


def cmd_evaluate(args) -> int:
    with open(args.predictions, encoding="utf-8") as fh:
        predictions = pipeline.read_predictions_jsonl(fh)
    gold = _load_examples(Path(args.gold))
    mode = evaluation.MatchMode(evaluation.Matching(args.match), tau=args.tau)
    judgments = None
    if args.judgments:
        with open(args.judgments, encoding="utf-8") as fh:
            judgments = evaluation.read_judgments_jsonl(fh)
    report = evaluation.evaluate(predictions, gold, mode, judgments=judgments)
    document = evaluation.emit_report(report, args.format)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(document)
    else:
        print(document)
    return EXIT_OK


# -- parser -----------------------------------------------------------------


def _add_codec_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--grammar",
        default="default",
        help="'default' or path to a JSON codec config",
    )
    parser.add_argument(
        "--templates",
        default="default",
        help=f"one of {sorted(codec.TEMPLATE_REGISTRY)} or a JSON codec config path",
    )
    parser.add_argument(
        "--pair-format",
        choices=[f.value for f in codec.PairFormat],
        default=codec.PairFormat.TAGGED.value,
    )
    parser.add_argument(
        "--no-suspect-sentinel",
        action="store_true",
        help="recognize/emit the no-suspect sentinel for empty joint answers",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="adeqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics and histograms")
    p.add_argument("corpus", nargs="?", help="pipe-delimited corpus file (default: bundled excerpt)")
    p.add_argument("--out-dir", default="stats_out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="deterministic train/eval split")
    p.add_argument("corpus", nargs="?", help="pipe-delimited corpus file (default: bundled excerpt)")
    p.add_argument("--train-size", type=int, required=True)
    p.add_argument("--seed", type=int, default=13)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("prepare", help="emit question/answer training pairs")
    p.add_argument("split", help="split dir, examples JSONL, or raw corpus")
    p.add_argument("--approach", type=int, choices=(1, 2), required=True)
    p.add_argument("--negative-ratio", type=float, default=None)
    _add_codec_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("run", help="run an extraction approach over a split")
    p.add_argument("split", help="split dir, examples JSONL, or raw corpus")
    p.add_argument("--approach", type=int, choices=(1, 2), required=True)
    p.add_argument("--backend", choices=("mock", "http"), default="mock")
    p.add_argument("--endpoint", default=None, help="http backend URL (or ADEQA_ENDPOINT)")
    p.add_argument("--gold", default=None, help="gold examples for the mock oracle (default: the split)")
    p.add_argument("--noise-drop", type=float, default=0.0)
    p.add_argument("--noise-spurious", type=float, default=0.0)
    p.add_argument("--noise-corrupt", type=float, default=0.0)
    p.add_argument("--noise-flip", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--concurrency", type=int, default=1)
    p.add_argument("--timeout-ms", type=int, default=30_000)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--judgments-out", default=None, help="also confirm gold-entity combinations (approach 1)")
    _add_codec_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("predictions", help="predictions JSONL")
    p.add_argument("gold", help="gold examples JSONL or raw corpus")
    p.add_argument("--match", choices=("strict", "partial"), default="strict")
    p.add_argument("--tau", type=float, default=0.7)
    p.add_argument("--judgments", default=None, help="relation judgments JSONL for the confusion matrix")
    p.add_argument("--format", choices=("json", "csv", "markdown"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as error:
        print(f"usage error: {error}", file=sys.stderr)
        return EXIT_USAGE
    except (
        corpus.CorpusError,
        codec.TokenCollision,
        evaluation.MissingGold,
        FileNotFoundError,
        json.JSONDecodeError,  # before ValueError: JSONDecodeError subclasses it
    ) as error:
        print(f"data error: {error}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as error:
        print(f"config error: {error}", file=sys.stderr)
        return EXIT_USAGE
    except backend_mod.BackendError as error:
        print(f"backend error: {error}", file=sys.stderr)
        return EXIT_BACKEND


if __name__ == "__main__":
    sys.exit(main())
