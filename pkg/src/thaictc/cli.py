"""Command-line entry point.

Subcommands: normalize, split, tokenize, lm-train, lm-score, decode,
evaluate. Results go to stdout (or --out); diagnostics go to stderr.
Exit codes: 0 success, 1 validation/usage error, 2 I/O or parse error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .ctcdecode import (
    DecodeParams,
    beam_search_decode,
    greedy_decode,
    load_emissions,
    load_vocab,
)
from .errors import FormatError, ValidationError
from .lm import count_ngrams, estimate, read_arpa, score_sentence, write_arpa
from .metrics import corpus_wer
from .splitter import (
    SplitTargets,
    assignment_from_manifests,
    load_corpus_metadata,
    locked_speakers_from,
    merge_legacy,
    split_by_speaker,
    subtract_legacy,
    verify_no_leakage,
    write_manifests,
)
from .textnorm import NormalizationConfig, normalize_corpus, normalize_transcript
from .tokenizer import DictionaryTokenizer, ExternalTokenizer, load_dictionary

FORMAT_VERSIONS = "arpa=1 manifest=1 report=1"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="thaictc", description=__doc__)
    parser.add_argument("--version", action="version",
                        version=f"thaictc {__version__} ({FORMAT_VERSIONS})")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default option values")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--threads", type=int, default=None)
    sub = parser.add_subparsers(dest="command", metavar="command",
                                parser_class=_Parser)

    p = sub.add_parser("normalize", parents=[common], help="clean transcripts")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--corpus", help="corpus TSV (client_id/path/sentence)")
    src.add_argument("--lines", help="plain text, one transcript per line ('-' = stdin)")
    _tokenizer_flags(p)
    p.add_argument("--keep-maiyamok", action="store_true",
                   help="do not expand the repeat mark")
    p.add_argument("--substitutions",
                   help="JSON object of text replacements applied before cleaning")
    p.add_argument("--out")

    p = sub.add_parser("split", parents=[common], help="speaker-disjoint corpus split")
    p.add_argument("--v8", required=True, help="new corpus TSV")
    p.add_argument("--v7-train")
    p.add_argument("--v7-valid")
    p.add_argument("--v7-test")
    p.add_argument("--targets", default=None,
                   help="train,valid,test duration fractions (default 0.92,0.04,0.04)")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--figures", help="directory for rendered figures")
    p.add_argument("--out")

    p = sub.add_parser("tokenize", parents=[common], help="segment text into words")
    p.add_argument("input", nargs="?", default="-", help="text file ('-' = stdin)")
    _tokenizer_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("lm-train", parents=[common], help="train a trigram model, write ARPA")
    p.add_argument("--input", required=True, help="training text, one sentence per line")
    _tokenizer_flags(p)
    p.add_argument("--discount", type=float, default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--out")

    p = sub.add_parser("lm-score", parents=[common], help="log10 sentence probabilities")
    p.add_argument("input", nargs="?", default="-", help="text file ('-' = stdin)")
    p.add_argument("--lm", required=True)
    _tokenizer_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("decode", parents=[common], help="beam-search CTC decoding")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--emissions", help="one NPY or text matrix")
    src.add_argument("--emissions-dir", help="directory of matrices keyed by utterance id")
    p.add_argument("--vocab", required=True)
    p.add_argument("--lm")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--beam-width", type=int, default=None)
    p.add_argument("--token-min-logp", type=float, default=None)
    p.add_argument("--no-pruning", action="store_true")
    p.add_argument("--greedy", action="store_true",
                   help="argmax-collapse decoding instead of beam search")
    p.add_argument("--nbest", type=int, default=None)
    p.add_argument("--unnormalized", action="store_true",
                   help="skip the per-frame normalization check")
    p.add_argument("--refs", help="reference TSV (id, reference) for one-shot evaluation")
    p.add_argument("--report", help="write the one-shot evaluation report JSON here")
    _tokenizer_flags(p)
    p.add_argument("--out")

    p = sub.add_parser("evaluate", parents=[common], help="WER/CER report")
    p.add_argument("--pairs", help="TSV or JSON-lines with id, reference, hypothesis")
    p.add_argument("--refs", help="TSV with id, reference")
    p.add_argument("--hyps", help="TSV with id, hypothesis")
    _tokenizer_flags(p)
    p.add_argument("--figures", help="directory for rendered figures")
    p.add_argument("--out")

    return parser


def _tokenizer_flags(p):
    p.add_argument("--dict", dest="dictionary", help="word list, one word per line")
    p.add_argument("--external", help="external tokenizer command (stdin -> token lines)")


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            config = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}")
    if not isinstance(config, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    return config


def _get(args, config: dict, name: str, default):
    value = getattr(args, name, None)
    if value is not None and value is not False:
        return value
    if name in config:
        return config[name]
    return default


def _make_tokenizer(args, config):
    command = _get(args, config, "external", None)
    dict_path = _get(args, config, "dictionary", None)
    if command and dict_path:
        raise ValidationError("choose one of --dict and --external")
    if command:
        return ExternalTokenizer(command)
    if dict_path:
        return DictionaryTokenizer(load_dictionary(dict_path))
    raise ValidationError("a tokenizer is required: pass --dict or --external")


def _open_out(args):
    if getattr(args, "out", None):
        return open(args.out, "w", encoding="utf-8", newline="\n")
    return sys.stdout


def _read_lines(spec: str) -> list[str]:
    if spec == "-":
        return sys.stdin.read().splitlines()
    with open(spec, encoding="utf-8") as f:
        return f.read().splitlines()


def _load_substitutions(path: str | None) -> tuple[tuple[str, str], ...]:
    if not path:
        return ()
    try:
        with open(path, encoding="utf-8") as f:
            table = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}")
    if not isinstance(table, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in table.items()
    ):
        raise FormatError(f"{path}: substitutions must map strings to strings")
    return tuple(table.items())


def _cmd_normalize(args, config) -> int:
    tokenizer = _make_tokenizer(args, config)
    norm = NormalizationConfig(
        expand_maiyamok=not args.keep_maiyamok,
        substitutions=_load_substitutions(args.substitutions),
    )
    out = _open_out(args)
    try:
        if args.corpus:
            utterances = load_corpus_metadata(args.corpus)
            kept, summary = normalize_corpus(utterances, norm, tokenizer)
            out.write("client_id\tpath\tsentence\tduration_ms\n")
            for u in kept:
                out.write(f"{u.client_id}\t{u.path}\t{u.sentence}\t{u.duration_ms}\n")
            print(f"kept {summary.kept}, dropped {summary.dropped} empty transcripts",
                  file=sys.stderr)
            for warning in summary.warnings:
                print(f"warning: {warning}", file=sys.stderr)
        else:
            warnings: list[str] = []
            for line in _read_lines(args.lines):
                out.write(normalize_transcript(line, norm, tokenizer, warnings) + "\n")
            for warning in warnings:
                print(f"warning: {warning}", file=sys.stderr)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _cmd_split(args, config) -> int:
    raw_targets = _get(args, config, "targets", "0.92,0.04,0.04")
    try:
        fractions = [float(x) for x in str(raw_targets).split(",")]
    except ValueError:
        raise ValidationError(f"bad --targets value {raw_targets!r}")
    if len(fractions) != 3:
        raise ValidationError("--targets needs three comma-separated fractions")
    seed = _get(args, config, "seed", 0)
    targets = SplitTargets(*fractions, seed=seed)

    v8 = load_corpus_metadata(args.v8)
    legacy_paths = {"train": args.v7_train, "valid": args.v7_valid, "test": args.v7_test}
    given = {k: v for k, v in legacy_paths.items() if v}
    if given and len(given) != 3:
        raise ValidationError("pass all three of --v7-train/--v7-valid/--v7-test or none")

    if given:
        v7_assignment, v7_corpus = assignment_from_manifests(given)
        new_only = subtract_legacy(v8, v7_assignment)
        locked = locked_speakers_from(v7_assignment)
        new_assignment = split_by_speaker(new_only, targets, locked)
        merged = merge_legacy(new_assignment, v7_assignment)
        corpus = v7_corpus + new_only
    else:
        merged = split_by_speaker(v8, targets)
        corpus = v8

    report = verify_no_leakage(merged, corpus)
    write_manifests(merged, corpus, args.out_dir)
    out = _open_out(args)
    try:
        out.write(report.to_text() + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    if args.figures:
        from .report import render_split_figures

        for path in render_split_figures(report, targets, args.figures):
            print(f"wrote {path}", file=sys.stderr)
    if not report.clean:
        raise ValidationError("split has speaker leakage (see report)")
    return 0


def _cmd_tokenize(args, config) -> int:
    tokenizer = _make_tokenizer(args, config)
    out = _open_out(args)
    try:
        for line in _read_lines(args.input):
            out.write(tokenizer.tokenize(line).joined() + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _tokenize_sentences(lines, args, config) -> list[list[str]]:
    tokenizer = _make_tokenizer(args, config)
    sentences = []
    for line in lines:
        tokens = list(tokenizer.tokenize(line).tokens)
        if tokens:
            sentences.append(tokens)
    return sentences


def _cmd_lm_train(args, config) -> int:
    sentences = _tokenize_sentences(_read_lines(args.input), args, config)
    order = _get(args, config, "order", 3)
    discount = _get(args, config, "discount", 0.75)
    model = estimate(count_ngrams(sentences, order=order), discount=discount)
    out = _open_out(args)
    try:
        write_arpa(model, out)
    finally:
        if out is not sys.stdout:
            out.close()
    counts = " ".join(f"{n}-grams={c}" for n, c in model.entry_counts().items())
    print(f"trained on {len(sentences)} sentences: {counts}", file=sys.stderr)
    return 0


def _cmd_lm_score(args, config) -> int:
    model = read_arpa(args.lm)
    has_tokenizer = _get(args, config, "external", None) or _get(args, config, "dictionary", None)
    tokenizer = _make_tokenizer(args, config) if has_tokenizer else None
    out = _open_out(args)
    try:
        for line in _read_lines(args.input):
            tokens = (
                list(tokenizer.tokenize(line).tokens) if tokenizer else line.split()
            )
            out.write(f"{score_sentence(model, tokens):.6f}\t{' '.join(tokens)}\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def _decode_params(args, config) -> DecodeParams:
    token_min_logp = None if args.no_pruning else _get(args, config, "token_min_logp", -5.0)
    return DecodeParams(
        beam_width=_get(args, config, "beam_width", 64),
        alpha=_get(args, config, "alpha", 0.0),
        beta=_get(args, config, "beta", 0.0),
        token_min_logp=token_min_logp,
        hypotheses_returned=_get(args, config, "nbest", 1),
    )


def _emission_files(args) -> list[tuple[str, Path]]:
    if args.emissions:
        path = Path(args.emissions)
        return [(path.stem, path)]
    root = Path(args.emissions_dir)
    if not root.is_dir():
        raise ValidationError(f"{root} is not a directory")
    files = sorted(p for p in root.iterdir() if p.suffix in (".npy", ".txt"))
    if not files:
        raise ValidationError(f"no emissions files (*.npy, *.txt) in {root}")
    return [(p.stem, p) for p in files]


def _cmd_decode(args, config) -> int:
    vocab = load_vocab(args.vocab)
    params = _decode_params(args, config)
    lm_path = _get(args, config, "lm", None)
    model = read_arpa(lm_path) if lm_path else None
    if params.alpha > 0 and model is None:
        raise ValidationError("alpha > 0 requires --lm")
    if args.greedy and params.alpha > 0:
        raise ValidationError("--greedy does not use a language model")
    normalized = not args.unnormalized
    jobs = _emission_files(args)
    threads = max(1, _get(args, config, "threads", 1))

    def decode_one(item):
        utt_id, path = item
        emissions = load_emissions(path, normalized=normalized)
        if args.greedy:
            return utt_id, greedy_decode(emissions, vocab)
        hyps = beam_search_decode(emissions, vocab, params, model)
        return utt_id, hyps

    if threads > 1 and len(jobs) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(decode_one, jobs))
    else:
        results = [decode_one(job) for job in jobs]

    def best_text(decoded):
        if isinstance(decoded, str):
            return decoded
        return decoded[0].transcript if decoded else ""

    out = _open_out(args)
    try:
        if args.emissions and (args.greedy or params.hypotheses_returned == 1):
            for _, decoded in results:
                out.write(best_text(decoded) + "\n")
        elif args.greedy or params.hypotheses_returned == 1:
            out.write("id\thypothesis\n")
            for utt_id, decoded in results:
                out.write(f"{utt_id}\t{best_text(decoded)}\n")
        else:
            out.write("id\trank\tscore\thypothesis\n")
            for utt_id, hyps in results:
                for rank, h in enumerate(hyps, start=1):
                    out.write(f"{utt_id}\t{rank}\t{h.combined_score:.6f}\t{h.transcript}\n")
    finally:
        if out is not sys.stdout:
            out.close()

    if args.refs:
        refs = _read_keyed_tsv(args.refs, "reference")
        hyp_map = {utt_id: best_text(decoded) for utt_id, decoded in results}
        report = _evaluate_pairs(refs, hyp_map, args, config)
        if args.report:
            Path(args.report).write_text(
                json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n",
                encoding="utf-8",
            )
        print(report.to_text(), file=sys.stderr)
    return 0


def _read_keyed_tsv(path: str, column: str) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}: empty file")
        if "id" not in header or column not in header:
            raise FormatError(f"{path}: need columns id and {column}")
        id_col, val_col = header.index("id"), header.index(column)
        out: dict[str, str] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if max(id_col, val_col) >= len(row):
                raise FormatError(f"{path}: short row", lineno)
            if row[id_col] in out:
                raise FormatError(f"{path}: duplicate id {row[id_col]!r}", lineno)
            out[row[id_col]] = row[val_col]
    return out


def _read_pairs(path: str) -> tuple[list[str], list[tuple[str, str]]]:
    with open(path, encoding="utf-8") as f:
        head = f.read(1)
    if head == "{":
        ids, pairs = [], []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as e:
                    raise FormatError(f"{path}: {e}", lineno)
                try:
                    ids.append(str(row["id"]))
                    pairs.append((row["reference"], row["hypothesis"]))
                except KeyError as e:
                    raise FormatError(f"{path}: missing field {e}", lineno)
        return ids, pairs
    refs = _read_keyed_tsv(path, "reference")
    hyps = _read_keyed_tsv(path, "hypothesis")
    ids = sorted(refs)
    return ids, [(refs[i], hyps.get(i, "")) for i in ids]


def _evaluate_pairs(refs: dict[str, str], hyps: dict[str, str], args, config):
    missing = sorted(set(refs) - set(hyps))
    if missing:
        raise ValidationError(f"no hypothesis for id {missing[0]!r}")
    tokenizer = _make_tokenizer(args, config)
    ids = sorted(refs)
    pairs = [(refs[i], hyps[i]) for i in ids]
    diagnostics: list[str] = []
    report = corpus_wer(pairs, tokenizer, ids=ids, diagnostics=diagnostics,
                        threads=max(1, _get(args, config, "threads", 1)))
    for note in diagnostics:
        print(note, file=sys.stderr)
    return report


def _cmd_evaluate(args, config) -> int:
    if args.pairs:
        ids, pairs = _read_pairs(args.pairs)
        tokenizer = _make_tokenizer(args, config)
        diagnostics: list[str] = []
        report = corpus_wer(pairs, tokenizer, ids=ids, diagnostics=diagnostics,
                            threads=max(1, _get(args, config, "threads", 1)))
        for note in diagnostics:
            print(note, file=sys.stderr)
    elif args.refs and args.hyps:
        refs = _read_keyed_tsv(args.refs, "reference")
        hyps = _read_keyed_tsv(args.hyps, "hypothesis")
        report = _evaluate_pairs(refs, hyps, args, config)
    else:
        raise ValidationError("pass --pairs, or both --refs and --hyps")

    out = _open_out(args)
    try:
        out.write(json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    print(report.to_text(), file=sys.stderr)
    if args.figures:
        from .report import render_eval_figures

        for path in render_eval_figures(report, args.figures):
            print(f"wrote {path}", file=sys.stderr)
    return 0


_HANDLERS = {
    "normalize": _cmd_normalize,
    "split": _cmd_split,
    "tokenize": _cmd_tokenize,
    "lm-train": _cmd_lm_train,
    "lm-score": _cmd_lm_score,
    "decode": _cmd_decode,
    "evaluate": _cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        config = _load_config(args.config)
        return _HANDLERS[args.command](args, config)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
