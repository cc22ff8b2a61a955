"""Decoding and evaluation toolkit for CTC speech recognition on Thai text:
speaker-disjoint corpus splitting, transcript normalization, dictionary word
segmentation, trigram language models, beam-search decoding with shallow
fusion, and tokenizer-aware WER/CER.
"""

__version__ = "0.1.0"

from .ctcdecode import (  # noqa: F401
    CtcVocab,
    DecodeParams,
    Emissions,
    Hypothesis,
    beam_search_decode,
    brute_force_decode,
    greedy_decode,
    load_emissions,
    load_vocab,
)
from .errors import FormatError, ToolkitError, ValidationError  # noqa: F401
from .lm import (  # noqa: F401
    LmState,
    NGramModel,
    count_ngrams,
    estimate,
    read_arpa,
    score_next,
    score_sentence,
    write_arpa,
)
from .metrics import EvalReport, corpus_wer, edit_distance, postprocess  # noqa: F401
from .splitter import (  # noqa: F401
    SplitAssignment,
    SplitTargets,
    Utterance,
    load_corpus_metadata,
    merge_legacy,
    split_by_speaker,
    subtract_legacy,
    verify_no_leakage,
)
from .textnorm import NormalizationConfig, normalize_corpus, normalize_transcript  # noqa: F401
from .tokenizer import (  # noqa: F401
    DictionaryTokenizer,
    ExternalTokenizer,
    Segmentation,
    WordDictionary,
    load_dictionary,
    tokenize,
    tokenize_external,
)
