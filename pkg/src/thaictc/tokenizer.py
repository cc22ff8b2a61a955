"""Dictionary word segmentation (maximal matching over a prefix trie) and a
subprocess plug-in for external tokenizers.

The segmenter minimizes token count; ties prefer the longest token, applied
left to right. Characters at positions where no dictionary word starts are
grouped into maximal unknown runs, so every text is segmentable.
"""
from __future__ import annotations

import hashlib
import shlex
import subprocess
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

from .errors import ValidationError

_TERMINAL = "\0"


@dataclass(frozen=True)
class Segmentation:
    tokens: tuple[str, ...]
    source: str

    def joined(self) -> str:
        return " ".join(self.tokens)


class Tokenizer(Protocol):
    tokenizer_id: str

    def tokenize(self, text: str) -> Segmentation: ...


class WordDictionary:
    """Immutable word list stored as a prefix trie; shareable across threads."""

    def __init__(self, words: Iterable[str]):
        self.entries = frozenset(w for w in words if w)
        self._trie: dict = {}
        for word in self.entries:
            node = self._trie
            for ch in word:
                node = node.setdefault(ch, {})
            node[_TERMINAL] = True
        digest = hashlib.sha256()
        for word in sorted(self.entries):
            digest.update(word.encode("utf-8"))
            digest.update(b"\n")
        self.content_hash = digest.hexdigest()

    @property
    def size(self) -> int:
        return len(self.entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def match_ends(self, text: str, start: int) -> list[int]:
        """End offsets (exclusive) of every dictionary word starting at `start`."""
        ends = []
        node = self._trie
        for i in range(start, len(text)):
            node = node.get(text[i])
            if node is None:
                break
            if _TERMINAL in node:
                ends.append(i + 1)
        return ends

    def starts_word(self, text: str, start: int) -> bool:
        node = self._trie
        for i in range(start, len(text)):
            node = node.get(text[i])
            if node is None:
                return False
            if _TERMINAL in node:
                return True
        return False


def load_dictionary(path: str | Path) -> WordDictionary:
    """Read a UTF-8 word list, one word per line; blank lines are ignored."""
    with open(path, encoding="utf-8") as f:
        return WordDictionary(line.strip() for line in f)


def tokenize(text: str, dictionary: WordDictionary) -> Segmentation:
    """Segment `text` into the fewest tokens of dictionary words and maximal
    unknown runs. Whitespace is removed before segmentation."""
    stripped = "".join(text.split())
    n = len(stripped)
    if n == 0:
        return Segmentation((), text)

    starts = [dictionary.starts_word(stripped, i) for i in range(n)]
    # run_end[i]: end of the unknown run beginning at i (valid when not starts[i])
    run_end = [0] * (n + 1)
    run_end[n] = n
    for i in range(n - 1, -1, -1):
        if i + 1 >= n or starts[i + 1]:
            run_end[i] = i + 1
        else:
            run_end[i] = run_end[i + 1]

    INF = n + 1
    best = [INF] * (n + 1)
    best[n] = 0
    for i in range(n - 1, -1, -1):
        if starts[i]:
            for end in dictionary.match_ends(stripped, i):
                cost = 1 + best[end]
                if cost < best[i]:
                    best[i] = cost
        else:
            best[i] = 1 + best[run_end[i]]

    tokens = []
    i = 0
    while i < n:
        if starts[i]:
            # longest word achieving the optimum
            chosen = max(
                end for end in dictionary.match_ends(stripped, i)
                if 1 + best[end] == best[i]
            )
        else:
            chosen = run_end[i]
        tokens.append(stripped[i:chosen])
        i = chosen
    return Segmentation(tuple(tokens), text)


class DictionaryTokenizer:
    def __init__(self, dictionary: WordDictionary):
        self.dictionary = dictionary
        self.tokenizer_id = "maxmatch"

    def tokenize(self, text: str) -> Segmentation:
        return tokenize(text, self.dictionary)


def tokenize_external(text: str, command_template: str) -> Segmentation:
    """Run an external tokenizer: UTF-8 text on stdin, one token per line on
    stdout, exit code 0. The tokens must concatenate back to the
    whitespace-stripped input."""
    argv = shlex.split(command_template)
    if not argv:
        raise ValidationError("empty external tokenizer command")
    try:
        proc = subprocess.run(
            argv, input=text.encode("utf-8"), capture_output=True, timeout=120
        )
    except OSError as e:
        raise ValidationError(f"cannot run tokenizer command {command_template!r}: {e}")
    if proc.returncode != 0:
        raise ValidationError(
            f"tokenizer command {command_template!r} exited {proc.returncode} "
            f"on input {text!r}: {proc.stderr.decode('utf-8', 'replace').strip()}"
        )
    tokens = tuple(t for t in proc.stdout.decode("utf-8").splitlines() if t)
    stripped = "".join(text.split())
    if "".join(tokens) != stripped:
        raise ValidationError(
            f"tokenizer command {command_template!r} broke the text on input "
            f"{text!r}: tokens join to {''.join(tokens)!r}"
        )
    return Segmentation(tokens, text)


class ExternalTokenizer:
    """Wraps `tokenize_external`; calls are serialized per instance."""

    def __init__(self, command_template: str):
        self.command_template = command_template
        self.tokenizer_id = f"external:{command_template}"
        self._lock = threading.Lock()

    def tokenize(self, text: str) -> Segmentation:
        with self._lock:
            return tokenize_external(text, self.command_template)
