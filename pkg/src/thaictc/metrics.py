"""Tokenizer-aware WER and CER.

Both reference and hypothesis go through the same pipeline: strip all
whitespace, retokenize, compare token lists. Error rates are pooled over the
corpus (total edits over total reference length), not averaged per utterance.
CER uses the whitespace-stripped character sequences, so it does not depend
on the tokenizer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError
from .tokenizer import DictionaryTokenizer, Tokenizer


def edit_distance(ref: list, hyp: list) -> tuple[int, int, int, int]:
    """Levenshtein distance with an (S, I, D) split. Backtrace ties prefer
    substitution, then insertion, then deletion."""
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row = dist[i]
        prev = dist[i - 1]
        ri = ref[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ri == hyp[j - 1] else 1
            row[j] = min(prev[j - 1] + cost, row[j - 1] + 1, prev[j] + 1)

    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == dist[i - 1][j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and here == dist[i - 1][j - 1] + 1:
            subs += 1
            i, j = i - 1, j - 1
        elif j > 0 and here == dist[i][j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dels += 1
            i -= 1
    return dist[n][m], subs, ins, dels


def align_ops(ref: list, hyp: list) -> str:
    """Compact per-position alignment like '=SID', same tie rules as
    edit_distance."""
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            dist[i][j] = min(dist[i - 1][j - 1] + cost, dist[i][j - 1] + 1, dist[i - 1][j] + 1)
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and here == dist[i - 1][j - 1]:
            ops.append("=")
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and here == dist[i - 1][j - 1] + 1:
            ops.append("S")
            i, j = i - 1, j - 1
        elif j > 0 and here == dist[i][j - 1] + 1:
            ops.append("I")
            j -= 1
        else:
            ops.append("D")
            i -= 1
    return "".join(reversed(ops))


def postprocess(prediction: str, tokenizer: Tokenizer) -> list[str]:
    """Strip all whitespace and retokenize with the evaluation tokenizer."""
    stripped = "".join(prediction.split())
    if not stripped:
        return []
    return list(tokenizer.tokenize(stripped).tokens)


@dataclass
class UtteranceEval:
    id: str
    ref_tokens: list[str]
    hyp_tokens: list[str]
    distance: int
    substitutions: int
    insertions: int
    deletions: int
    ops: str

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "ref_tokens": self.ref_tokens,
            "hyp_tokens": self.hyp_tokens,
            "distance": self.distance,
            "substitutions": self.substitutions,
            "insertions": self.insertions,
            "deletions": self.deletions,
            "ops": self.ops,
        }


@dataclass
class EvalReport:
    wer: float
    cer: float
    substitutions: int
    insertions: int
    deletions: int
    ref_token_total: int
    char_edit_total: int
    ref_char_total: int
    per_utterance: list[UtteranceEval] = field(default_factory=list)
    tokenizer_id: str = ""
    dictionary_hash: str = ""
    excluded: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "wer": self.wer,
            "cer": self.cer,
            "substitutions": self.substitutions,
            "insertions": self.insertions,
            "deletions": self.deletions,
            "ref_token_total": self.ref_token_total,
            "char_edit_total": self.char_edit_total,
            "ref_char_total": self.ref_char_total,
            "tokenizer_id": self.tokenizer_id,
            "dictionary_hash": self.dictionary_hash,
            "excluded": self.excluded,
            "per_utterance": [u.to_dict() for u in self.per_utterance],
        }

    def to_text(self) -> str:
        lines = [
            f"utterances  {len(self.per_utterance)}"
            + (f" ({len(self.excluded)} excluded)" if self.excluded else ""),
            f"tokenizer   {self.tokenizer_id}",
        ]
        if self.dictionary_hash:
            lines.append(f"dictionary  sha256:{self.dictionary_hash[:16]}")
        lines.append(
            f"WER         {100 * self.wer:.6f}%  "
            f"(S={self.substitutions} I={self.insertions} D={self.deletions} "
            f"/ N={self.ref_token_total})"
        )
        lines.append(f"CER         {100 * self.cer:.6f}%")
        return "\n".join(lines)


def _eval_one(utt_id: str, ref: str, hyp: str, tokenizer: Tokenizer):
    ref_tokens = postprocess(ref, tokenizer)
    if not ref_tokens:
        return None
    hyp_tokens = postprocess(hyp, tokenizer)
    distance, s, i_, d = edit_distance(ref_tokens, hyp_tokens)
    ref_chars = list("".join(ref.split()))
    hyp_chars = list("".join(hyp.split()))
    char_edits = edit_distance(ref_chars, hyp_chars)[0]
    detail = UtteranceEval(
        utt_id, ref_tokens, hyp_tokens, distance, s, i_, d,
        align_ops(ref_tokens, hyp_tokens),
    )
    return detail, char_edits, len(ref_chars)


def corpus_wer(
    pairs: list[tuple[str, str]],
    tokenizer: Tokenizer,
    ids: list[str] | None = None,
    diagnostics: list[str] | None = None,
    threads: int = 1,
) -> EvalReport:
    """Pooled WER/CER over (reference, hypothesis) pairs.

    Utterances whose reference is empty after postprocessing are excluded and
    reported, never silently scored. Per-utterance work can fan out over
    `threads` workers; the aggregation order (and so the report) is identical
    for any thread count.
    """
    if not pairs:
        raise ValidationError("no evaluation pairs")
    if ids is None:
        ids = [str(i) for i in range(len(pairs))]
    if len(ids) != len(pairs):
        raise ValidationError("ids and pairs length mismatch")

    if threads > 1 and len(pairs) > 1:
        import concurrent.futures

        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(
                lambda item: _eval_one(item[0], item[1][0], item[1][1], tokenizer),
                zip(ids, pairs),
            ))
    else:
        rows = [_eval_one(i, r, h, tokenizer) for i, (r, h) in zip(ids, pairs)]

    per_utterance = []
    excluded = []
    subs = ins = dels = 0
    ref_tokens_total = 0
    char_edits = 0
    ref_chars_total = 0

    for utt_id, row in zip(ids, rows):
        if row is None:
            excluded.append(utt_id)
            if diagnostics is not None:
                diagnostics.append(f"utterance {utt_id}: empty reference, excluded")
            continue
        detail, utt_char_edits, utt_ref_chars = row
        subs += detail.substitutions
        ins += detail.insertions
        dels += detail.deletions
        ref_tokens_total += len(detail.ref_tokens)
        char_edits += utt_char_edits
        ref_chars_total += utt_ref_chars
        per_utterance.append(detail)

    if ref_tokens_total == 0:
        raise ValidationError("every reference is empty after postprocessing")

    dictionary_hash = ""
    if isinstance(tokenizer, DictionaryTokenizer):
        dictionary_hash = tokenizer.dictionary.content_hash
    return EvalReport(
        wer=(subs + ins + dels) / ref_tokens_total,
        cer=char_edits / ref_chars_total,
        substitutions=subs,
        insertions=ins,
        deletions=dels,
        ref_token_total=ref_tokens_total,
        char_edit_total=char_edits,
        ref_char_total=ref_chars_total,
        per_utterance=per_utterance,
        tokenizer_id=getattr(tokenizer, "tokenizer_id", ""),
        dictionary_hash=dictionary_hash,
        excluded=excluded,
    )
