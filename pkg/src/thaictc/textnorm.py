"""Transcript normalization: character filtering, whitespace collapse, and
maiyamok (Thai repeat mark) expansion.

All functions are pure; normalization is deterministic and idempotent.
"""
from __future__ import annotations

import dataclasses
import unicodedata
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .errors import ValidationError

if TYPE_CHECKING:
    from .splitter import Utterance
    from .tokenizer import Tokenizer

MAIYAMOK = 0x0E46

# Thai block around the repeat mark, Latin letters, ASCII digits, space.
DEFAULT_ALLOWED_RANGES: tuple[tuple[int, int], ...] = (
    (0x20, 0x20),
    (0x30, 0x39),
    (0x41, 0x5A),
    (0x61, 0x7A),
    (0x0E01, 0x0E45),
    (0x0E47, 0x0E4E),
)


@dataclass(frozen=True)
class NormalizationConfig:
    """Which codepoints survive cleaning and how the repeat mark is handled.

    allowed_ranges must be sorted and non-overlapping; the space character is
    always allowed. substitutions are applied to the NFC form of the input
    before any cleaning (useful to replay hand fixes).
    """

    allowed_ranges: tuple[tuple[int, int], ...] = DEFAULT_ALLOWED_RANGES
    maiyamok_codepoint: int = MAIYAMOK
    expand_maiyamok: bool = True
    substitutions: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        prev_hi = -1
        for lo, hi in self.allowed_ranges:
            if lo > hi:
                raise ValidationError(f"bad codepoint range {lo:#x}..{hi:#x}")
            if lo <= prev_hi:
                raise ValidationError("allowed_ranges must be sorted and non-overlapping")
            prev_hi = hi

    def allows(self, ch: str) -> bool:
        if ch == " ":
            return True
        cp = ord(ch)
        for lo, hi in self.allowed_ranges:
            if lo <= cp <= hi:
                return True
            if cp < lo:
                return False
        return False


@dataclass
class NormalizeSummary:
    kept: int = 0
    dropped: int = 0
    warnings: list[str] = field(default_factory=list)


def _collapse_spaces(text: str) -> str:
    return " ".join(text.split())


def _last_word(chunk: str, tokenizer: Tokenizer) -> str:
    tokens = tokenizer.tokenize(chunk).tokens
    return tokens[-1] if tokens else ""


def normalize_transcript(
    raw: str,
    config: NormalizationConfig,
    tokenizer: Tokenizer,
    diagnostics: list[str] | None = None,
) -> str:
    """Clean one transcript.

    NFC-normalizes, applies the substitution table, drops characters outside
    the allowed ranges, collapses whitespace, and replaces each maiyamok with
    a copy of the word immediately preceding it (found by tokenizing the text
    since the previous maiyamok). A maiyamok with no preceding word is dropped
    with a warning appended to `diagnostics`.
    """
    text = unicodedata.normalize("NFC", raw)
    for old, new in config.substitutions:
        text = text.replace(old, new)

    mk = chr(config.maiyamok_codepoint)
    kept_chars = []
    for ch in text:
        if ch.isspace():
            kept_chars.append(" ")
        elif config.expand_maiyamok and ch == mk:
            kept_chars.append(mk)
        elif config.allows(ch) and ch != mk:
            kept_chars.append(ch)
    text = _collapse_spaces("".join(kept_chars))

    if config.expand_maiyamok and mk in text:
        out_parts = []
        # Each segment between repeat marks supplies the word to duplicate,
        # so expansions never feed later ones.
        segments = text.split(mk)
        for i, segment in enumerate(segments[:-1]):
            body = segment.rstrip()
            last_chunk = body.rsplit(" ", 1)[-1] if body else ""
            word = _last_word(last_chunk, tokenizer) if last_chunk else ""
            if not word:
                if diagnostics is not None:
                    diagnostics.append(
                        f"maiyamok with no preceding word dropped (segment {i})"
                    )
                out_parts.append(segment)
            else:
                out_parts.append(body + word)
        out_parts.append(segments[-1])
        text = _collapse_spaces("".join(out_parts))

    return text


def normalize_corpus(
    utterances: list[Utterance],
    config: NormalizationConfig,
    tokenizer: Tokenizer,
) -> tuple[list[Utterance], NormalizeSummary]:
    """Normalize every transcript; drop utterances that become empty."""
    summary = NormalizeSummary()
    kept = []
    for u in utterances:
        cleaned = normalize_transcript(u.sentence, config, tokenizer, summary.warnings)
        if cleaned:
            kept.append(dataclasses.replace(u, sentence=cleaned))
            summary.kept += 1
        else:
            summary.dropped += 1
    return kept, summary
