"""In-process bindings around the thaictc toolkit.

Everything here wraps the installed `thaictc` package directly, so results
are bit-identical to the command line on the same inputs: one code path, no
reimplementation. Emission matrices are accepted as numpy arrays without
copying at the boundary.
"""
from __future__ import annotations

import threading
from pathlib import Path

import numpy as np

import thaictc
from thaictc.cli import FORMAT_VERSIONS
from thaictc.ctcdecode import (
    CtcVocab,
    DecodeParams,
    beam_search_decode,
    load_vocab,
)
from thaictc.errors import ValidationError
from thaictc.lm import NGramModel, read_arpa, score_sentence
from thaictc.metrics import corpus_wer
from thaictc.tokenizer import DictionaryTokenizer, ExternalTokenizer, load_dictionary

__all__ = ["Decoder", "evaluate", "lm_score", "version"]

__version__ = thaictc.__version__


def version() -> str:
    """Same string the CLI prints for --version."""
    return f"thaictc {thaictc.__version__} ({FORMAT_VERSIONS})"


class Decoder:
    """Immutable decoder handle: vocab + decode parameters + optional LM.

    Construction validates exactly like the CLI; the handle is safe to share
    across threads (each decode call owns its own beam state).
    """

    def __init__(
        self,
        vocab: str | Path | CtcVocab,
        lm: str | Path | NGramModel | None = None,
        beam_width: int = 64,
        alpha: float = 0.0,
        beta: float = 0.0,
        token_min_logp: float | None = -5.0,
        nbest: int = 1,
    ):
        self.vocab = vocab if isinstance(vocab, CtcVocab) else load_vocab(vocab)
        if lm is None or isinstance(lm, NGramModel):
            self.lm = lm
        else:
            self.lm = read_arpa(lm)
        self.params = DecodeParams(
            beam_width=beam_width,
            alpha=alpha,
            beta=beta,
            token_min_logp=token_min_logp,
            hypotheses_returned=nbest,
        )
        if self.params.alpha > 0 and self.lm is None:
            raise ValidationError("alpha > 0 requires a language model")

    def decode(self, emissions) -> list[tuple[str, float]]:
        """Decode one T x V matrix of log probabilities.

        Returns (transcript, combined score) pairs, best first. A shape or
        vocab mismatch raises ValidationError with the native message.
        """
        matrix = np.asarray(emissions)
        if matrix.ndim != 2:
            raise ValidationError(f"emissions must be 2-D, got {matrix.ndim}-D")
        if matrix.shape[1] != self.vocab.size:
            raise ValidationError(
                f"emissions have {matrix.shape[1]} labels, vocab expects {self.vocab.size}"
            )
        hyps = beam_search_decode(matrix, self.vocab, self.params, self.lm)
        return [(h.transcript, h.combined_score) for h in hyps]


def _tokenizer(dictionary=None, external=None):
    if dictionary and external:
        raise ValidationError("choose one of dictionary and external")
    if external:
        return ExternalTokenizer(external)
    if dictionary:
        return DictionaryTokenizer(load_dictionary(dictionary))
    raise ValidationError("a tokenizer is required: pass dictionary or external")


def evaluate(
    pairs: list[tuple[str, str]],
    dictionary: str | Path | None = None,
    external: str | None = None,
    ids: list[str] | None = None,
) -> dict:
    """WER/CER report as a plain mapping, identical to the CLI's JSON."""
    report = corpus_wer(pairs, _tokenizer(dictionary, external), ids=ids)
    return report.to_dict()


_LM_CACHE: dict[Path, NGramModel] = {}
_LM_CACHE_LOCK = threading.Lock()


def lm_score(model_path: str | Path, tokens: list[str]) -> float:
    """log10 probability of a token sequence under an ARPA model on disk."""
    key = Path(model_path).resolve()
    with _LM_CACHE_LOCK:
        model = _LM_CACHE.get(key)
        if model is None:
            model = read_arpa(key)
            _LM_CACHE[key] = model
    return score_sentence(model, tokens)
