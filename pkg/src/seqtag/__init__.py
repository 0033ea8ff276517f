"""Corpus-to-score toolkit for French NER: annotation-scheme conversion,
data augmentation, linear-chain CRF training/decoding, and entity-level
evaluation with conlleval semantics."""

from .corpus import (
    ColumnSpec,
    Corpus,
    CorpusStats,
    Scheme,
    Sentence,
    SplitRules,
    Token,
    corpus_stats,
    parse_conll,
    serialize_conll,
    split_sentences,
)
from .errors import SeqtagError
from .schemes import (
    DecodeMode,
    EntitySpan,
    Violation,
    convert,
    decode_spans,
    encode_spans,
    validate,
    validate_corpus,
)
from .augment import AugmentConfig, LabelTokenDistribution, augment_corpus, build_distribution
from .crf import CrfModel, TrainConfig, load_model, save_model, tag_corpus, train, viterbi
from .evaluator import EvalReport, evaluate, format_report
from .ingest import DatasetDescriptor, fetch_dataset, split_train_test

__version__ = "0.1.0"
