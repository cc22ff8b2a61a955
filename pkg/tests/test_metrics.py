import random
import sys
from functools import lru_cache

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thaictc.errors import ValidationError
from thaictc.metrics import align_ops, corpus_wer, edit_distance, postprocess
from thaictc.tokenizer import DictionaryTokenizer, ExternalTokenizer, WordDictionary

TOK = DictionaryTokenizer(WordDictionary(["ไป", "มา", "ดี", "ไปมา"]))


@lru_cache(maxsize=None)
def recursive_distance(a: tuple, b: tuple) -> int:
    """Plain recursive definition, memoized; independent of the DP."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        recursive_distance(a[1:], b) + 1,
        recursive_distance(a, b[1:]) + 1,
        recursive_distance(a[1:], b[1:]) + (a[0] != b[0]),
    )


def test_identity():
    assert edit_distance(["x", "y"], ["x", "y"]) == (0, 0, 0, 0)


def test_kitten_sitting():
    d, s, i, dl = edit_distance(list("kitten"), list("sitting"))
    assert d == 3
    assert s + i + dl == 3


def test_deletion_case():
    assert edit_distance(["ไป", "มา", "ดี"], ["ไป", "ดี"]) == (1, 0, 0, 1)


def test_sid_decomposition_sums_to_distance():
    rng = random.Random(3)
    for _ in range(300):
        a = [rng.choice("abc") for _ in range(rng.randint(0, 6))]
        b = [rng.choice("abc") for _ in range(rng.randint(0, 6))]
        d, s, i, dl = edit_distance(a, b)
        assert d == s + i + dl
        assert d == recursive_distance(tuple(a), tuple(b))
        assert len(a) + i == len(b) + dl  # alignment length bookkeeping


def test_tie_break_prefers_substitution():
    # "ab" -> "ba" can be 2 substitutions or insert+delete; backtrace prefers S
    d, s, i, dl = edit_distance(list("ab"), list("ba"))
    assert (d, s, i, dl) == (2, 2, 0, 0)


def test_align_ops():
    assert align_ops(["a", "b"], ["a", "b"]) == "=="
    assert align_ops(["a", "b"], ["a"]) == "=D"
    assert align_ops(["a"], ["a", "b"]) == "=I"
    assert align_ops(["a", "b"], ["a", "c"]) == "=S"


@given(
    st.lists(st.sampled_from("abc"), max_size=6),
    st.lists(st.sampled_from("abc"), max_size=6),
)
@settings(max_examples=300, deadline=None)
def test_symmetry(a, b):
    assert edit_distance(a, b)[0] == edit_distance(b, a)[0]


def test_triangle_inequality():
    rng = random.Random(8)
    for _ in range(200):
        a, b, c = (
            [rng.choice("abcd") for _ in range(rng.randint(0, 7))] for _ in range(3)
        )
        ab = edit_distance(a, b)[0]
        bc = edit_distance(b, c)[0]
        ac = edit_distance(a, c)[0]
        assert ac <= ab + bc


def test_postprocess_strips_and_retokenizes():
    tok = DictionaryTokenizer(WordDictionary(["ไปมา"]))
    assert postprocess("ไป มา", tok) == ["ไปมา"]
    assert postprocess("", tok) == []
    assert postprocess("ไปมา", tok) == ["ไปมา"]


def test_corpus_identity_is_zero():
    pairs = [("ไปมา", "ไปมา"), ("ดี มา", "ดี มา")]
    report = corpus_wer(pairs, TOK)
    assert report.wer == 0.0
    assert report.cer == 0.0


def test_corpus_pooling():
    # refs of 3 + 2 tokens with 1 + 1 word edits pool to 2/5
    tok = DictionaryTokenizer(WordDictionary(["ไป", "มา", "ดี"]))
    pairs = [("ไปมาดี", "ไปมามา"), ("ไปมา", "ไปดี")]
    report = corpus_wer(pairs, tok)
    assert report.ref_token_total == 5
    assert report.substitutions + report.insertions + report.deletions == 2
    assert report.wer == pytest.approx(2 / 5)


def test_wer_invariant_holds():
    rng = random.Random(55)
    tok = DictionaryTokenizer(WordDictionary(["ไป", "มา"]))
    pairs = []
    for _ in range(20):
        pairs.append((
            "".join(rng.choice(["ไป", "มา", "ก"]) for _ in range(rng.randint(1, 5))),
            "".join(rng.choice(["ไป", "มา", "ก"]) for _ in range(rng.randint(0, 5))),
        ))
    r = corpus_wer(pairs, tok)
    assert r.wer == pytest.approx(
        (r.substitutions + r.insertions + r.deletions) / r.ref_token_total
    )


def test_empty_pairs_rejected():
    with pytest.raises(ValidationError):
        corpus_wer([], TOK)


def test_empty_reference_excluded():
    diags = []
    report = corpus_wer(
        [("", "ไปมา"), ("ไปมา", "ไปมา")], TOK, ids=["u0", "u1"], diagnostics=diags
    )
    assert report.excluded == ["u0"]
    assert len(report.per_utterance) == 1
    assert diags and "u0" in diags[0]


def test_all_references_empty_rejected():
    with pytest.raises(ValidationError, match="empty"):
        corpus_wer([("", "x"), ("  ", "y")], TOK)


def test_cer_is_tokenizer_invariant():
    char_cmd = (
        f"{sys.executable} -c "
        '"import sys; [print(c) for c in sys.stdin.read() if not c.isspace()]"'
    )
    external = ExternalTokenizer(char_cmd)
    pairs = [("ไป มา", "ไปมา"), ("มาดี", "มา ดี"), ("ไปมาไป", "ไปมี")]
    a = corpus_wer(pairs, TOK)
    b = corpus_wer(pairs, external)
    assert a.cer == pytest.approx(b.cer)
    assert a.tokenizer_id != b.tokenizer_id  # WER provenance is surfaced


def test_report_carries_provenance():
    report = corpus_wer([("ไปมา", "ไปมา")], TOK)
    assert report.tokenizer_id == "maxmatch"
    assert report.dictionary_hash == TOK.dictionary.content_hash
    d = report.to_dict()
    assert d["tokenizer_id"] == "maxmatch"
    assert "WER" in report.to_text()
