"""Backoff trigram language model.

Counting, fixed-discount interpolated Kneser-Ney estimation, ARPA
serialization, and log10 scoring with standard backoff recursion. Lower
orders use continuation counts except for start-of-sentence contexts, which
keep raw counts (nothing can precede the start marker). The lowest order
interpolates with a uniform distribution over the vocabulary, which is also
where the unknown token gets its mass.

Models are immutable after estimation or reading; scoring is thread-safe.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

from .errors import FormatError, ValidationError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

_SENTINEL_LOG10 = -99.0  # conventional stand-in for "never predicted"


@dataclass
class NGramCounts:
    order: int
    ngrams: dict[int, Counter] = field(default_factory=dict)
    sentence_count: int = 0


@dataclass(frozen=True)
class LmState:
    """Scoring context: the last tokens emitted, at most order-1 of them."""

    context: tuple[str, ...] = (BOS, BOS)


class NGramModel:
    """Per-order tables mapping token tuples to (log10 prob, log10 backoff).

    The backoff weight is None for entries that never act as a context.
    """

    def __init__(self, order: int, tables: dict[int, dict[tuple, tuple[float, float | None]]]):
        self.order = order
        self.tables = tables
        self.vocab = frozenset(t[0] for t in tables.get(1, {}))

    def entry_counts(self) -> dict[int, int]:
        return {n: len(self.tables[n]) for n in sorted(self.tables)}

    def cond_log10(self, context: tuple[str, ...], token: str) -> float:
        """log10 P(token | context) by backoff recursion. OOV tokens are
        scored as the unknown marker."""
        word = token if (token,) in self.tables[1] else UNK
        context = context[-(self.order - 1):] if self.order > 1 else ()
        penalty = 0.0
        while True:
            n = len(context) + 1
            entry = self.tables.get(n, {}).get(context + (word,))
            if entry is not None:
                return penalty + entry[0]
            if not context:
                # no unigram: unknown marker absent from an external model
                return penalty + _SENTINEL_LOG10
            ctx_entry = self.tables.get(len(context), {}).get(context)
            if ctx_entry is not None and ctx_entry[1] is not None:
                penalty += ctx_entry[1]
            context = context[1:]


def initial_state(model: NGramModel) -> LmState:
    return LmState((BOS,) * (model.order - 1))


def score_next(model: NGramModel, state: LmState, token: str) -> tuple[float, LmState]:
    """One-token increment of log10 probability plus the advanced state."""
    word = token if (token,) in model.tables[1] else UNK
    inc = model.cond_log10(state.context, word)
    k = model.order - 1
    new_context = (state.context + (word,))[-k:] if k else ()
    return inc, LmState(new_context)


def score_sentence(model: NGramModel, tokens: Iterable[str]) -> float:
    """Total log10 probability of a sentence including the end marker."""
    state = initial_state(model)
    total = 0.0
    for token in tokens:
        inc, state = score_next(model, state, token)
        total += inc
    total += model.cond_log10(state.context, EOS)
    return total


def count_ngrams(sentences: list[list[str]], order: int = 3) -> NGramCounts:
    """Count 1..order-grams with start/end padding. The start marker is never
    counted as a predicted token."""
    if not sentences:
        raise ValidationError("no training data")
    counts = NGramCounts(order, {n: Counter() for n in range(1, order + 1)})
    for sentence in sentences:
        for token in sentence:
            if not token or token.split() != [token]:
                raise ValidationError(f"bad LM token {token!r}")
            if token in (BOS, EOS, UNK):
                raise ValidationError(f"token collides with reserved marker {token!r}")
        padded = [BOS] * (order - 1) + list(sentence) + [EOS]
        for n in range(1, order + 1):
            grams = counts.ngrams[n]
            for i in range(len(padded) - n + 1):
                window = tuple(padded[i:i + n])
                if window[-1] != BOS:
                    grams[window] += 1
        counts.sentence_count += 1
    return counts


def estimate(counts: NGramCounts, discount: float = 0.75) -> NGramModel:
    """Interpolated Kneser-Ney with a single absolute discount."""
    if not 0.0 < discount < 1.0:
        raise ValidationError(f"discount {discount} outside (0, 1)")
    order = counts.order
    d = discount

    # modified counts per order: continuation types (number of distinct
    # left-extensions), except after the start marker where raw counts stand
    # in because nothing can precede it
    modified: dict[int, Counter] = {order: Counter(counts.ngrams[order])}
    for n in range(order - 1, 0, -1):
        left_types: Counter = Counter()
        for gram in counts.ngrams[n + 1]:
            left_types[gram[1:]] += 1
        m = Counter()
        for gram, raw in counts.ngrams[n].items():
            m[gram] = raw if gram[0] == BOS else left_types[gram]
        modified[n] = m

    vocab_pred = sorted({g[0] for g in counts.ngrams[1]} | {UNK})
    uniform = 1.0 / len(vocab_pred)

    # unigram distribution
    m1 = modified[1]
    total1 = sum(m1.values())
    gamma1 = d * len(m1) / total1
    prob: dict[int, dict[tuple, float]] = {1: {}}
    for w in vocab_pred:
        base = max(m1.get((w,), 0) - d, 0.0) / total1
        prob[1][(w,)] = base + gamma1 * uniform

    gammas: dict[int, dict[tuple, float]] = {0: {(): gamma1}}
    for n in range(2, order + 1):
        by_context: dict[tuple, list[tuple]] = {}
        for gram in modified[n]:
            by_context.setdefault(gram[:-1], []).append(gram)
        prob[n] = {}
        gammas[n - 1] = {}
        for context, grams in by_context.items():
            total = sum(modified[n][g] for g in grams)
            gamma = d * len(grams) / total
            gammas[n - 1][context] = gamma
            for g in grams:
                # the suffix of an observed n-gram is always an observed
                # (n-1)-gram under this counting scheme
                prob[n][g] = (
                    max(modified[n][g] - d, 0.0) / total + gamma * prob[n - 1][g[1:]]
                )

    tables: dict[int, dict[tuple, tuple[float, float | None]]] = {}
    for n in range(1, order + 1):
        tables[n] = {}
        context_gammas = gammas.get(n, {})
        for gram, p in prob[n].items():
            bow = context_gammas.get(gram)
            tables[n][gram] = (
                math.log10(p),
                math.log10(bow) if bow is not None else None,
            )
        # contexts that are not events themselves still need a table entry to
        # carry their backoff weight (the start-marker contexts)
        for context, gamma in context_gammas.items():
            if len(context) == n and context not in tables[n]:
                tables[n][context] = (_SENTINEL_LOG10, math.log10(gamma))
    return NGramModel(order, tables)


_NGRAM_HEADER = re.compile(r"^ngram (\d+)=(\d+)$")
_SECTION = re.compile(r"^\\(\d+)-grams:$")


def _format_log10(value: float) -> str:
    return f"{value + 0.0:.7f}"


def write_arpa(model: NGramModel, sink: TextIO | str | Path) -> None:
    """Serialize in ARPA format, entries sorted for byte-stable output."""
    if isinstance(sink, (str, Path)):
        with open(sink, "w", encoding="utf-8", newline="\n") as f:
            write_arpa(model, f)
        return
    sink.write("\\data\\\n")
    for n in sorted(model.tables):
        sink.write(f"ngram {n}={len(model.tables[n])}\n")
    sink.write("\n")
    for n in sorted(model.tables):
        sink.write(f"\\{n}-grams:\n")
        for gram in sorted(model.tables[n]):
            logp, bow = model.tables[n][gram]
            line = f"{_format_log10(logp)}\t{' '.join(gram)}"
            if bow is not None and bow != 0.0:
                line += f"\t{_format_log10(bow)}"
            sink.write(line + "\n")
        sink.write("\n")
    sink.write("\\end\\\n")


def read_arpa(source: TextIO | str | Path) -> NGramModel:
    """Parse an ARPA file, validating declared counts and that every n-gram's
    context prefix exists at the lower order."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as f:
            return read_arpa(f)

    declared: dict[int, int] = {}
    tables: dict[int, dict[tuple, tuple[float, float | None]]] = {}
    entry_lines: dict[tuple, int] = {}
    section: int | None = None
    in_data = False
    saw_data = False
    saw_end = False

    for lineno, raw in enumerate(source, start=1):
        line = raw.strip()
        if saw_end:
            continue
        if not line:
            continue
        if line == "\\data\\":
            in_data = True
            saw_data = True
            continue
        if not saw_data:
            continue  # arbitrary preamble is allowed
        if line == "\\end\\":
            saw_end = True
            continue
        m = _SECTION.match(line)
        if m:
            section = int(m.group(1))
            if section not in declared:
                raise FormatError(f"section \\{section}-grams: not declared in header", lineno)
            tables.setdefault(section, {})
            in_data = False
            continue
        if in_data:
            m = _NGRAM_HEADER.match(line)
            if not m:
                raise FormatError(f"bad header line {line!r}", lineno)
            declared[int(m.group(1))] = int(m.group(2))
            continue
        if section is None:
            raise FormatError(f"entry outside any section: {line!r}", lineno)
        parts = line.split()
        if len(parts) == section + 1:
            bow = None
        elif len(parts) == section + 2:
            try:
                bow = float(parts[-1])
            except ValueError:
                raise FormatError(f"bad backoff field {parts[-1]!r}", lineno)
            parts = parts[:-1]
        else:
            raise FormatError(
                f"expected {section} tokens in \\{section}-grams: entry", lineno
            )
        try:
            logp = float(parts[0])
        except ValueError:
            raise FormatError(f"bad probability field {parts[0]!r}", lineno)
        if logp > 1e-6:
            raise FormatError(f"positive log10 probability {parts[0]}", lineno)
        gram = tuple(parts[1:])
        tables[section][gram] = (logp, bow)
        entry_lines[gram] = lineno

    if not saw_data:
        raise FormatError("no \\data\\ header found")
    if not saw_end:
        raise FormatError("no \\end\\ terminator found")
    for n, count in declared.items():
        actual = len(tables.get(n, {}))
        if actual != count:
            raise FormatError(f"\\{n}-grams: declared {count} entries, found {actual}")
    for n in sorted(tables):
        if n == 1:
            continue
        for gram in tables[n]:
            if gram[:-1] not in tables.get(n - 1, {}):
                raise FormatError(
                    f"context {' '.join(gram[:-1])!r} of {' '.join(gram)!r} "
                    f"missing from \\{n - 1}-grams:",
                    entry_lines[gram],
                )
    if not tables:
        raise FormatError("no n-gram sections found")
    return NGramModel(max(tables), tables)
