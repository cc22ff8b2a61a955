"""CTC decoding: greedy, prefix beam search with word-level LM shallow
fusion, and an exact brute-force enumerator used as a test oracle.

Acoustic mass is tracked in natural log, split per prefix into blank-ending
and non-blank-ending parts. The LM contributes alpha * log10 P(word) plus a
per-word bonus beta whenever the word delimiter completes a word; a trailing
partial word is scored the same way when the utterance ends.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError
from .lm import LmState, NGramModel, initial_state, score_next

NEG_INF = float("-inf")


def logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


@dataclass(frozen=True)
class CtcVocab:
    labels: tuple[str, ...]
    blank_index: int
    delimiter_index: int | None = None
    unk_index: int | None = None

    def __post_init__(self):
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("vocab labels are not unique")
        for name, idx in (
            ("blank", self.blank_index),
            ("delimiter", self.delimiter_index),
            ("unk", self.unk_index),
        ):
            if idx is not None and not 0 <= idx < len(self.labels):
                raise ValidationError(f"{name} index {idx} out of range")
        if self.delimiter_index == self.blank_index:
            raise ValidationError("delimiter index equals blank index")

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class Emissions:
    """T x V matrix of per-frame log probabilities."""

    logprobs: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        self.logprobs = np.asarray(self.logprobs, dtype=np.float64)
        if self.logprobs.ndim != 2 or self.logprobs.shape[0] < 1:
            raise ValidationError(f"emissions must be T x V with T >= 1, got shape {self.logprobs.shape}")
        if self.normalized:
            lse = np.logaddexp.reduce(self.logprobs, axis=1)
            worst = float(np.max(np.abs(lse)))
            if worst > 1e-3:
                raise ValidationError(
                    f"emissions marked normalized but a frame's log-sum-exp is off by {worst:.2e}"
                )


@dataclass(frozen=True)
class DecodeParams:
    beam_width: int = 64
    alpha: float = 0.0
    beta: float = 0.0
    token_min_logp: float | None = -5.0  # natural log, relative to frame max
    hypotheses_returned: int = 1

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValidationError("beam_width must be >= 1")
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0")
        if not 1 <= self.hypotheses_returned <= self.beam_width:
            raise ValidationError("hypotheses_returned must be in 1..beam_width")


@dataclass(frozen=True)
class Hypothesis:
    text: str                 # collapsed labels, delimiter symbols included
    transcript: str           # delimiters rendered as single spaces
    words: tuple[str, ...]
    p_blank: float
    p_non_blank: float
    combined_score: float
    lm_log10: float = 0.0
    word_count: int = 0
    lm_state: LmState | None = None

    @property
    def acoustic_logp(self) -> float:
        return logaddexp(self.p_blank, self.p_non_blank)


def _as_matrix(emissions) -> np.ndarray:
    if isinstance(emissions, Emissions):
        return emissions.logprobs
    return np.asarray(emissions, dtype=np.float64)


def _check_shape(matrix: np.ndarray, vocab: CtcVocab) -> None:
    if matrix.ndim != 2:
        raise ValidationError(f"emissions must be 2-D, got {matrix.ndim}-D")
    if matrix.shape[0] < 1:
        raise ValidationError("emissions have no frames")
    if matrix.shape[1] != vocab.size:
        raise ValidationError(
            f"emissions have {matrix.shape[1]} labels, vocab expects {vocab.size}"
        )


def collapse_path(path, blank_index: int) -> tuple[int, ...]:
    """CTC collapse: merge adjacent duplicates, then drop blanks."""
    out = []
    prev = None
    for label in path:
        if label != prev and label != blank_index:
            out.append(label)
        prev = label
    return tuple(out)


def render_transcript(prefix, vocab: CtcVocab) -> str:
    chars = [
        " " if i == vocab.delimiter_index else vocab.labels[i] for i in prefix
    ]
    return " ".join("".join(chars).split())


def greedy_decode(emissions, vocab: CtcVocab) -> str:
    """Argmax path, collapsed, with delimiters rendered as spaces."""
    matrix = _as_matrix(emissions)
    _check_shape(matrix, vocab)
    path = np.argmax(matrix, axis=1)
    return render_transcript(collapse_path(path.tolist(), vocab.blank_index), vocab)


class _Prefix:
    __slots__ = ("p_b", "p_nb", "lm_log10", "lm_state", "word_count", "partial")

    def __init__(self, p_b, p_nb, lm_log10, lm_state, word_count, partial):
        self.p_b = p_b
        self.p_nb = p_nb
        self.lm_log10 = lm_log10
        self.lm_state = lm_state
        self.word_count = word_count
        self.partial = partial  # label indices since the last delimiter


def _lm_advance(entry: _Prefix, label: int, vocab: CtcVocab, lm: NGramModel | None):
    """(lm_log10, lm_state, word_count, partial) after appending one label."""
    if label == vocab.delimiter_index:
        if entry.partial:
            word_count = entry.word_count + 1
            if lm is not None:
                word = "".join(vocab.labels[i] for i in entry.partial)
                inc, state = score_next(lm, entry.lm_state, word)
                return entry.lm_log10 + inc, state, word_count, ()
            return entry.lm_log10, entry.lm_state, word_count, ()
        return entry.lm_log10, entry.lm_state, entry.word_count, ()
    return entry.lm_log10, entry.lm_state, entry.word_count, entry.partial + (label,)


def _finalize(
    prefix, entry: _Prefix, vocab: CtcVocab, params: DecodeParams, lm: NGramModel | None
) -> Hypothesis:
    lm_log10 = entry.lm_log10
    lm_state = entry.lm_state
    word_count = entry.word_count
    words = []
    partial_word = "".join(vocab.labels[i] for i in entry.partial)
    if partial_word:
        word_count += 1
        if lm is not None:
            inc, lm_state = score_next(lm, lm_state, partial_word)
            lm_log10 += inc
    if vocab.delimiter_index is not None:
        for seg in _segments(prefix, vocab.delimiter_index):
            words.append("".join(vocab.labels[i] for i in seg))
    text = "".join(vocab.labels[i] for i in prefix)
    transcript = " ".join(words) if vocab.delimiter_index is not None else text
    acoustic = logaddexp(entry.p_b, entry.p_nb)
    return Hypothesis(
        text=text,
        transcript=transcript,
        words=tuple(words),
        p_blank=entry.p_b,
        p_non_blank=entry.p_nb,
        combined_score=acoustic + params.alpha * lm_log10 + params.beta * word_count,
        lm_log10=lm_log10,
        word_count=word_count,
        lm_state=lm_state,
    )


def _segments(prefix, delimiter: int):
    seg = []
    for i in prefix:
        if i == delimiter:
            if seg:
                yield tuple(seg)
            seg = []
        else:
            seg.append(i)
    if seg:
        yield tuple(seg)


def _validate_decode_args(matrix, vocab, params, lm):
    _check_shape(matrix, vocab)
    if params.alpha > 0:
        if lm is None:
            raise ValidationError("alpha > 0 requires a language model")
        if vocab.delimiter_index is None:
            raise ValidationError("alpha > 0 requires a word delimiter in the vocab")


def beam_search_decode(
    emissions,
    vocab: CtcVocab,
    params: DecodeParams | None = None,
    lm: NGramModel | None = None,
) -> list[Hypothesis]:
    """Prefix beam search with optional trigram shallow fusion.

    Distinct collapsed prefixes are merged; the LM term is a pure function of
    the prefix text so merging never mixes inconsistent states.
    """
    params = params or DecodeParams()
    matrix = _as_matrix(emissions)
    _validate_decode_args(matrix, vocab, params, lm)
    use_lm = params.alpha > 0 and lm is not None
    fusion_lm = lm if use_lm else None

    start_state = initial_state(lm) if use_lm else None
    beams: dict[tuple, _Prefix] = {
        (): _Prefix(0.0, NEG_INF, 0.0, start_state, 0, ())
    }

    rows = matrix.tolist()
    blank = vocab.blank_index
    for row in rows:
        if params.token_min_logp is None:
            allowed = range(vocab.size)
        else:
            threshold = max(row) + params.token_min_logp
            allowed = [i for i in range(vocab.size) if row[i] >= threshold]

        nxt: dict[tuple, _Prefix] = {}

        def entry_for(prefix, parent: _Prefix, last_label: int | None):
            e = nxt.get(prefix)
            if e is None:
                if last_label is None:  # same prefix carried over
                    e = _Prefix(NEG_INF, NEG_INF, parent.lm_log10, parent.lm_state,
                                parent.word_count, parent.partial)
                else:
                    lm_log10, state, wc, partial = _lm_advance(
                        parent, last_label, vocab, fusion_lm
                    )
                    e = _Prefix(NEG_INF, NEG_INF, lm_log10, state, wc, partial)
                nxt[prefix] = e
            return e

        for prefix, entry in beams.items():
            total = logaddexp(entry.p_b, entry.p_nb)
            last = prefix[-1] if prefix else None
            for label in allowed:
                lp = row[label]
                if label == blank:
                    e = entry_for(prefix, entry, None)
                    e.p_b = logaddexp(e.p_b, total + lp)
                elif label == last:
                    # repeat without blank: stays the same prefix
                    e = entry_for(prefix, entry, None)
                    e.p_nb = logaddexp(e.p_nb, entry.p_nb + lp)
                    # blank-separated repeat extends the prefix
                    ext = entry_for(prefix + (label,), entry, label)
                    ext.p_nb = logaddexp(ext.p_nb, entry.p_b + lp)
                else:
                    ext = entry_for(prefix + (label,), entry, label)
                    ext.p_nb = logaddexp(ext.p_nb, total + lp)

        if len(nxt) > params.beam_width:
            ranked = sorted(
                nxt.items(),
                key=lambda kv: (
                    -(logaddexp(kv[1].p_b, kv[1].p_nb)
                      + params.alpha * kv[1].lm_log10
                      + params.beta * kv[1].word_count),
                    kv[0],
                ),
            )
            beams = dict(ranked[: params.beam_width])
        else:
            beams = nxt

    finals = [
        _finalize(prefix, entry, vocab, params, fusion_lm)
        for prefix, entry in beams.items()
        if logaddexp(entry.p_b, entry.p_nb) > NEG_INF
    ]
    finals.sort(key=lambda h: (-h.combined_score, h.text))
    return finals[: params.hypotheses_returned]


BRUTE_FORCE_MAX_FRAMES = 8
BRUTE_FORCE_MAX_LABELS = 5


def brute_force_decode(
    emissions,
    vocab: CtcVocab,
    lm: NGramModel | None = None,
    params: DecodeParams | None = None,
) -> list[Hypothesis]:
    """Exact decoding by enumerating every alignment path. Only usable on
    tiny inputs; exists to check the beam search."""
    params = params or DecodeParams(beam_width=1_000_000, hypotheses_returned=1_000_000,
                                    token_min_logp=None)
    matrix = _as_matrix(emissions)
    _validate_decode_args(matrix, vocab, params, lm)
    frames, labels = matrix.shape
    if frames > BRUTE_FORCE_MAX_FRAMES or labels > BRUTE_FORCE_MAX_LABELS:
        raise ValidationError(
            f"brute force limited to T <= {BRUTE_FORCE_MAX_FRAMES}, "
            f"V <= {BRUTE_FORCE_MAX_LABELS}; got T={frames}, V={labels}"
        )
    use_lm = params.alpha > 0 and lm is not None
    fusion_lm = lm if use_lm else None

    rows = matrix.tolist()
    mass: dict[tuple, list[float]] = {}
    for path in itertools.product(range(labels), repeat=frames):
        logp = sum(rows[t][path[t]] for t in range(frames))
        key = collapse_path(path, vocab.blank_index)
        ends_blank = path[-1] == vocab.blank_index
        pair = mass.setdefault(key, [NEG_INF, NEG_INF])
        slot = 0 if ends_blank else 1
        pair[slot] = logaddexp(pair[slot], logp)

    finals = []
    for prefix, (p_b, p_nb) in mass.items():
        entry = _Prefix(p_b, p_nb, 0.0,
                        initial_state(lm) if use_lm else None, 0, ())
        if vocab.delimiter_index is not None:
            rebuilt = _Prefix(p_b, p_nb, 0.0, entry.lm_state, 0, ())
            for label in prefix:
                lm_log10, state, wc, partial = _lm_advance(
                    rebuilt, label, vocab, fusion_lm
                )
                rebuilt.lm_log10, rebuilt.lm_state = lm_log10, state
                rebuilt.word_count, rebuilt.partial = wc, partial
            entry = rebuilt
        else:
            entry.partial = prefix
        finals.append(_finalize(prefix, entry, vocab, params, fusion_lm))
    finals.sort(key=lambda h: (-h.combined_score, h.text))
    return finals[: params.hypotheses_returned]


def load_vocab(path: str | Path) -> CtcVocab:
    """Read a label file: one label per line, with #blank=<i> (required),
    #delimiter=<i> and #unk=<i> directives in the leading comment block."""
    directives: dict[str, int] = {}
    labels: list[str] = []
    in_header = True
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if in_header and line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    key = key.strip()
                    if key in ("blank", "delimiter", "unk"):
                        try:
                            directives[key] = int(value)
                        except ValueError:
                            raise FormatError(f"bad directive value {value!r}", lineno)
                continue
            in_header = False
            if line == "":
                raise FormatError("empty label line", lineno)
            labels.append(line)
    if "blank" not in directives:
        raise FormatError(f"{path}: missing #blank=<index> directive")
    return CtcVocab(
        labels=tuple(labels),
        blank_index=directives["blank"],
        delimiter_index=directives.get("delimiter"),
        unk_index=directives.get("unk"),
    )


def load_emissions(path: str | Path, normalized: bool = True) -> Emissions:
    """Load a T x V matrix from an NPY file or a whitespace-separated text
    matrix (one frame per row)."""
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(6)
    if magic == b"\x93NUMPY":
        try:
            matrix = np.load(path)
        except ValueError as e:
            raise FormatError(f"{path}: {e}")
    else:
        try:
            matrix = np.loadtxt(path, ndmin=2)
        except ValueError as e:
            raise FormatError(f"{path}: {e}")
    if matrix.ndim != 2:
        raise FormatError(f"{path}: expected a 2-D matrix, got {matrix.ndim}-D")
    try:
        return Emissions(matrix, normalized=normalized)
    except ValidationError as e:
        raise FormatError(f"{path}: {e}")


def save_emissions(matrix: np.ndarray, path: str | Path) -> None:
    np.save(path, np.asarray(matrix, dtype=np.float32))
