"""Single executable for the whole pipeline: fetch, stats, split, convert,
augment, train, tag, eval, and the benchmark grid over annotation schemes.

Flags can be preloaded from a flat ``key = value`` config file (UTF-8, "#"
comments); anything given on the command line wins. Exit codes: 0 success,
1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import augment as augment_mod
from . import corpus as corpus_mod
from . import crf as crf_mod
from . import evaluator as evaluator_mod
from . import ingest as ingest_mod
from . import schemes as schemes_mod
from .corpus import ColumnSpec, Scheme, SplitRules
from .errors import SeqtagError
from .features import default_templates

_SCHEME_ORDER = (Scheme.IO, Scheme.BIO, Scheme.BIOES)


class _Parser(argparse.ArgumentParser):
    # Usage problems exit 1; data problems exit 2 (mapped in run()).
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_bool(raw: str) -> bool:
    return raw.strip().lower() in ("1", "true", "yes", "on")


def _load_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SeqtagError(f"config line is not `key = value`: {line!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config(subparser: argparse.ArgumentParser, config: dict[str, str]) -> None:
    for action in subparser._actions:
        if action.dest not in config:
            continue
        raw = config[action.dest]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            value = _parse_bool(raw)
        elif action.type is not None:
            value = action.type(raw)
        else:
            value = raw
        subparser.set_defaults(**{action.dest: value})


def _add_column_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--surface-col", type=int, default=0, help="column of the surface form")
    p.add_argument("--tag-col", type=int, default=1, help="column of the tag")
    p.add_argument("--pos-col", type=int, default=None, help="column of the POS attribute, if any")
    p.add_argument("--separator", choices=["space", "tab"], default="space")


def _column_spec(args) -> ColumnSpec:
    attrs = ((args.pos_col, "pos"),) if args.pos_col is not None else ()
    return ColumnSpec(
        surface_col=args.surface_col,
        tag_col=args.tag_col,
        attribute_cols=attrs,
        separator=" " if args.separator == "space" else "\t",
    )


def _read_corpus(path: str, spec: ColumnSpec, scheme: str | None = None):
    text = Path(path).read_text(encoding="utf-8")
    return corpus_mod.parse_conll(text, spec, Scheme(scheme) if scheme else None)


def _write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ingest_mod._atomic_write(path, text.encode("utf-8"))


def _parse_schemes(raw: str) -> list[Scheme]:
    wanted = {Scheme(part.strip()) for part in raw.split(",") if part.strip()}
    if not wanted:
        raise SeqtagError("at least one scheme is required")
    return [s for s in _SCHEME_ORDER if s in wanted]


def _augment_config(args) -> augment_mod.AugmentConfig:
    techniques = tuple(t.strip() for t in args.techniques.split(",") if t.strip())
    return augment_mod.AugmentConfig(
        techniques=techniques,
        p=args.p,
        copies_per_sentence=args.copies,
        seed=args.seed,
    )


def _progress(tag: str):
    def report(iteration: int, objective: float, step: float) -> None:
        if iteration == 1 or iteration % 10 == 0:
            print(f"[{tag}] iteration {iteration}: objective {objective:.4f} (step {step:g})",
                  file=sys.stderr)
    return report


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_fetch(args) -> int:
    desc = ingest_mod.DatasetDescriptor(
        source_url=args.url,
        cache_path=args.cache or ingest_mod.default_cache_dir(),
        sha256=args.sha256,
    )
    path = ingest_mod.fetch_dataset(desc, refresh=args.refresh)
    print(path)
    return 0


def _cmd_stats(args) -> int:
    corpus = _read_corpus(args.input, _column_spec(args), args.scheme)
    corpus = schemes_mod.validate_corpus(corpus)
    stats = corpus_mod.corpus_stats(corpus)
    print(f"sentences: {stats.sentences}")
    print(f"tokens: {stats.tokens}")
    print(f"entities: {stats.entities_total}")
    for etype, count in stats.entities_by_type.items():
        print(f"  {etype}: {count}")
    return 0


def _cmd_split(args) -> int:
    spec = _column_spec(args)
    parsed = _read_corpus(args.input, spec, args.scheme)
    flat = [token for sentence in parsed for token in sentence]
    corpus = corpus_mod.split_sentences(
        flat, SplitRules(max_len=args.max_len), scheme=parsed.scheme
    )
    corpus = corpus_mod.Corpus(corpus.sentences, corpus.scheme, spec)
    if args.test_budget is not None:
        train, test = ingest_mod.split_train_test(corpus, args.test_budget)
        if not args.test_output:
            raise SeqtagError("--test-budget requires --test-output")
        _write_text(args.output, corpus_mod.serialize_conll(train, spec))
        _write_text(args.test_output, corpus_mod.serialize_conll(test, spec))
        print(f"train: {train.n_tokens} tokens, {len(train)} sentences", file=sys.stderr)
        print(f"test: {test.n_tokens} tokens, {len(test)} sentences", file=sys.stderr)
    else:
        _write_text(args.output, corpus_mod.serialize_conll(corpus, spec))
        print(f"{corpus.n_tokens} tokens, {len(corpus)} sentences", file=sys.stderr)
    return 0


def _cmd_convert(args) -> int:
    spec = _column_spec(args)
    corpus = _read_corpus(args.input, spec, getattr(args, "from"))
    converted = schemes_mod.convert(corpus, Scheme(args.to))
    _write_text(args.output, corpus_mod.serialize_conll(converted, spec))
    return 0


def _cmd_augment(args) -> int:
    spec = _column_spec(args)
    corpus = _read_corpus(args.input, spec)
    if args.scheme != "keep":
        corpus = schemes_mod.convert(corpus, Scheme(args.scheme))
    else:
        corpus = schemes_mod.validate_corpus(corpus)
    augmented = augment_mod.augment_corpus(corpus, _augment_config(args))
    _write_text(args.output, corpus_mod.serialize_conll(augmented, spec))
    print(f"{len(corpus)} sentences in, {len(augmented)} out", file=sys.stderr)
    return 0


def _cmd_train(args) -> int:
    spec = _column_spec(args)
    corpus = _read_corpus(args.input, spec, args.scheme)
    corpus = schemes_mod.validate_corpus(corpus)
    if args.use_pos and args.pos_col is None:
        raise SeqtagError("--use-pos requires --pos-col")
    cfg = crf_mod.TrainConfig(
        l2_lambda=args.l2, max_iter=args.max_iter, tol=args.tol, seed=args.seed
    )
    model = crf_mod.train(
        corpus, cfg, default_templates(args.use_pos), on_iteration=_progress("train")
    )
    crf_mod.save_model(model, args.model)
    print(f"model written to {args.model}", file=sys.stderr)
    return 0


def _cmd_tag(args) -> int:
    spec = _column_spec(args)
    model = crf_mod.load_model(args.model)
    corpus = _read_corpus(args.input, spec)
    tagged = crf_mod.tag_corpus(model, corpus)
    _write_text(args.output, corpus_mod.serialize_conll(tagged, spec))
    return 0


def _cmd_eval(args) -> int:
    spec = _column_spec(args)
    if args.pred is None:
        # single-file mode: gold in --tag-col, predictions in --pred-col
        if args.pred_col is None:
            raise SeqtagError("single-file eval requires --pred-col")
        gold = _read_corpus(args.gold, spec)
        pred_spec = ColumnSpec(
            surface_col=spec.surface_col,
            tag_col=args.pred_col,
            attribute_cols=spec.attribute_cols,
            separator=spec.separator,
        )
        pred = _read_corpus(args.gold, pred_spec)
    else:
        gold = _read_corpus(args.gold, spec)
        pred = _read_corpus(args.pred, spec)
    report = evaluator_mod.evaluate(gold, pred, normalize_io=args.normalize_io)
    sys.stdout.write(evaluator_mod.format_report(report, style=args.style))
    return 0


def _benchmark_corpora(args, spec: ColumnSpec):
    if args.train and args.test:
        return _read_corpus(args.train, spec), _read_corpus(args.test, spec)
    if args.train or args.test:
        raise SeqtagError("--train and --test must be given together")
    desc = ingest_mod.DatasetDescriptor(
        source_url=args.url,
        cache_path=args.cache or ingest_mod.default_cache_dir(),
        sha256=args.sha256,
    )
    path = ingest_mod.fetch_dataset(desc, refresh=args.refresh)
    parsed = corpus_mod.parse_conll(path.read_text(encoding="utf-8"), spec)
    flat = [token for sentence in parsed for token in sentence]
    corpus = corpus_mod.split_sentences(flat, scheme=parsed.scheme)
    return ingest_mod.split_train_test(corpus, args.test_budget)


def _cmd_benchmark(args) -> int:
    spec = _column_spec(args)
    schemes = _parse_schemes(args.schemes)
    if args.use_pos and args.pos_col is None:
        raise SeqtagError("--use-pos requires --pos-col")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_c, test_c = _benchmark_corpora(args, spec)
    train_c = schemes_mod.validate_corpus(train_c)
    test_c = schemes_mod.validate_corpus(test_c)

    cfg = crf_mod.TrainConfig(
        l2_lambda=args.l2, max_iter=args.max_iter, tol=args.tol, seed=args.seed
    )
    templates = default_templates(args.use_pos)

    csv_rows = ["scheme,pos,augmented,type,gold,pred,correct,precision,recall,f1"]
    overall_f1: dict[Scheme, float] = {}
    for scheme in schemes:
        cell = scheme.value + ("_pos" if args.use_pos else "") + ("_aug" if args.augment else "")
        train_s = schemes_mod.convert(train_c, scheme)
        test_s = schemes_mod.convert(test_c, scheme)
        if args.augment:
            train_s = augment_mod.augment_corpus(train_s, _augment_config(args))

        model = crf_mod.train(train_s, cfg, templates, on_iteration=_progress(cell))
        crf_mod.save_model(model, out_dir / f"crf_{cell}.model")
        predicted = crf_mod.tag_corpus(model, test_s)
        report = evaluator_mod.evaluate(test_s, predicted, normalize_io=True)

        scored = dict(report.per_type)
        scored["ALL"] = report.overall
        for etype, ts in scored.items():
            csv_rows.append(
                f"{scheme.value},{int(args.use_pos)},{int(args.augment)},{etype},"
                f"{ts.gold_count},{ts.pred_count},{ts.correct_count},"
                f"{ts.precision:.2f},{ts.recall:.2f},{ts.f1:.2f}"
            )
        overall_f1[scheme] = report.overall.f1

    header = "        " + "".join(f"{s.value.upper():>8}" for s in schemes)
    values = "F1 score" + "".join(f"{overall_f1[s]:8.2f}" for s in schemes)
    table = header + "\n" + values + "\n"

    _write_text(out_dir / "results.csv", "\n".join(csv_rows) + "\n")
    _write_text(out_dir / "results.txt", table)
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="seqtag", description=__doc__.split("\n\n")[0])
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = subparsers.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="key = value config file; flags override it")
        p.set_defaults(handler=handler)
        subs[name] = p
        return p

    p = sub("fetch", _cmd_fetch, "download and cache the source dataset")
    p.add_argument("--url", default=ingest_mod.DEFAULT_SOURCE_URL)
    p.add_argument("--cache", default=None, help="cache directory (default: $SEQTAG_CACHE)")
    p.add_argument("--sha256", default=None, help="pin the expected digest")
    p.add_argument("--refresh", action="store_true", help="accept a changed upstream digest")

    p = sub("stats", _cmd_stats, "token, sentence and entity counts of a corpus")
    p.add_argument("input")
    p.add_argument("--scheme", choices=["io", "bio", "bioes"], default=None)
    _add_column_flags(p)

    p = sub("split", _cmd_split, "insert sentence boundaries; optionally split off a test suffix")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--scheme", choices=["io", "bio", "bioes"], default=None)
    p.add_argument("--max-len", type=int, default=200, help="hard sentence length cap")
    p.add_argument("--test-budget", type=int, default=None, help="test suffix token budget")
    p.add_argument("--test-output", default=None, help="where to write the test suffix")
    _add_column_flags(p)

    p = sub("convert", _cmd_convert, "convert a corpus between IO/BIO/BIOES")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--from", dest="from", choices=["io", "bio", "bioes"], default=None,
                   help="source scheme (default: inferred)")
    p.add_argument("--to", required=True, choices=["io", "bio", "bioes"])
    _add_column_flags(p)

    def add_augment_flags(p):
        p.add_argument("--techniques", default="lwtr,sis", help="comma list of lwtr,sis")
        p.add_argument("--p", type=float, default=0.5,
                       help="per-token (LWTR) / per-segment (SIS) probability")
        p.add_argument("--copies", type=int, default=1, help="augmented copies per sentence")
        p.add_argument("--seed", type=int, default=0, help="augmentation seed")

    p = sub("augment", _cmd_augment, "expand a training corpus with LWTR/SIS copies")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--scheme", choices=["io", "bio", "bioes", "keep"], default="bioes",
                   help="convert to this scheme before augmenting (default bioes)")
    add_augment_flags(p)
    _add_column_flags(p)

    def add_train_flags(p):
        p.add_argument("--l2", type=float, default=1.0, help="L2 regularization strength")
        p.add_argument("--max-iter", type=int, default=200, help="accepted-iteration cap")
        p.add_argument("--tol", type=float, default=1e-6,
                       help="stop below this relative objective improvement")
        p.add_argument("--use-pos", action="store_true", help="activate POS feature templates")

    p = sub("train", _cmd_train, "train a CRF tagger on a corpus")
    p.add_argument("input")
    p.add_argument("model")
    p.add_argument("--scheme", choices=["io", "bio", "bioes"], default=None)
    p.add_argument("--seed", type=int, default=0, help="recorded in the training config")
    add_train_flags(p)
    _add_column_flags(p)

    p = sub("tag", _cmd_tag, "tag a corpus with a trained model")
    p.add_argument("model")
    p.add_argument("input")
    p.add_argument("output")
    _add_column_flags(p)

    p = sub("eval", _cmd_eval, "entity-level precision/recall/F1 of predictions against gold")
    p.add_argument("gold")
    p.add_argument("pred", nargs="?", default=None,
                   help="predictions file; omit it and pass --pred-col for single-file mode")
    p.add_argument("--pred-col", type=int, default=None,
                   help="column holding predicted tags when gold and pred share one file")
    p.add_argument("--normalize-io", action="store_true",
                   help="re-express both sides in IO before scoring")
    p.add_argument("--style", choices=["text", "csv"], default="text")
    _add_column_flags(p)

    p = sub("benchmark", _cmd_benchmark, "train and score one model per annotation scheme")
    p.add_argument("--schemes", default="io,bio,bioes", help="comma list of io,bio,bioes")
    p.add_argument("--train", default=None, help="sentence-split training file")
    p.add_argument("--test", default=None, help="sentence-split test file")
    p.add_argument("--url", default=ingest_mod.DEFAULT_SOURCE_URL,
                   help="fetch mode source (used when --train/--test absent)")
    p.add_argument("--cache", default=None)
    p.add_argument("--sha256", default=None)
    p.add_argument("--refresh", action="store_true")
    p.add_argument("--test-budget", type=int, default=ingest_mod.DEFAULT_TEST_TOKEN_BUDGET)
    p.add_argument("--augment", action="store_true", help="add LWTR/SIS copies before training")
    p.add_argument("--out-dir", required=True)
    add_augment_flags(p)
    add_train_flags(p)
    _add_column_flags(p)

    return parser, subs


def run(argv=None) -> int:
    parser, _ = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if getattr(args, "config", None):
            config = _load_config(args.config)
            parser, subs = build_parser()
            _apply_config(subs[args.command], config)
            try:
                args = parser.parse_args(argv)
            except SystemExit as exc:
                return int(exc.code or 0)
        return args.handler(args)
    except (SeqtagError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
