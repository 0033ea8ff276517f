import numpy as np
import pytest

from seqtag.corpus import Corpus, Scheme, Sentence, Token
from seqtag.schemes import EntitySpan, encode_spans

# The newspaper example sentence used throughout the docs, in all three schemes.
SAMPLE_SURFACES = ("M.", "Brandi", ",", "Professeur", "au", "lycée", "de", "Saint-Brieuc")
SAMPLE_TAGS = {
    Scheme.IO: ("O", "I-PER", "O", "O", "O", "I-ORG", "I-ORG", "I-ORG"),
    Scheme.BIO: ("O", "B-PER", "O", "O", "O", "B-ORG", "I-ORG", "I-ORG"),
    Scheme.BIOES: ("O", "S-PER", "O", "O", "O", "B-ORG", "I-ORG", "E-ORG"),
}
SAMPLE_SPANS = [EntitySpan(1, 1, "PER"), EntitySpan(5, 7, "ORG")]


def make_sentence(surfaces, tags, attributes=None) -> Sentence:
    attributes = attributes or [()] * len(surfaces)
    return Sentence(tuple(
        Token(s, t, tuple(a)) for s, t, a in zip(surfaces, tags, attributes)
    ))


def sample_corpus(scheme: Scheme) -> Corpus:
    return Corpus(
        (make_sentence(SAMPLE_SURFACES, SAMPLE_TAGS[scheme]),),
        scheme=scheme,
        validated=True,
    )


def random_spans(rng, length: int, types) -> list[EntitySpan]:
    spans, pos = [], 0
    while pos < length:
        if rng.random() < 0.4:
            span_len = min(int(rng.integers(1, 4)), length - pos)
            spans.append(EntitySpan(pos, pos + span_len - 1, types[int(rng.integers(len(types)))]))
            pos += span_len
        else:
            pos += 1
    return spans


def random_valid_sentence(rng, scheme: Scheme, max_len=20, n_types=4) -> Sentence:
    types = ["PER", "LOC", "ORG", "MISC"][:n_types]
    length = int(rng.integers(1, max_len + 1))
    tags = encode_spans(random_spans(rng, length, types), length, scheme)
    surfaces = [f"w{int(rng.integers(500))}" for _ in range(length)]
    return make_sentence(surfaces, tags)


def random_valid_corpus(rng, scheme: Scheme, n_sentences=5, max_len=20, n_types=4) -> Corpus:
    sentences = tuple(
        random_valid_sentence(rng, scheme, max_len, n_types) for _ in range(n_sentences)
    )
    return Corpus(sentences, scheme, validated=True)


def random_retag(rng, corpus: Corpus, n_types=4) -> Corpus:
    """Same surfaces and lengths as `corpus`, fresh random valid tags."""
    types = ["PER", "LOC", "ORG", "MISC"][:n_types]
    sentences = []
    for sentence in corpus:
        tags = encode_spans(random_spans(rng, len(sentence), types), len(sentence), corpus.scheme)
        sentences.append(make_sentence(sentence.surfaces, tags))
    return Corpus(tuple(sentences), corpus.scheme, validated=True)


def synthetic_training_corpus(n_sentences=200, seed=1234, scheme=Scheme.BIOES) -> Corpus:
    """Template-grammar corpus: ~300-word vocabulary, three entity types with
    disjoint lexicons, entity spans of 1-3 tokens."""
    rng = np.random.default_rng(seed)
    fillers = [f"mot{i}" for i in range(150)]
    entity_vocab = {
        "PER": [f"Pers{i}" for i in range(50)],
        "LOC": [f"Ville{i}" for i in range(50)],
        "ORG": [f"Soc{i}" for i in range(50)],
    }
    types = sorted(entity_vocab)
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(6, 15))
        spans, surfaces, pos = [], [], 0
        while pos < length:
            if rng.random() < 0.3:
                etype = types[int(rng.integers(len(types)))]
                span_len = min(int(rng.integers(1, 4)), length - pos)
                spans.append(EntitySpan(pos, pos + span_len - 1, etype))
                surfaces.extend(
                    entity_vocab[etype][int(rng.integers(50))] for _ in range(span_len)
                )
                pos += span_len
            else:
                surfaces.append(fillers[int(rng.integers(150))])
                pos += 1
        tags = encode_spans(spans, length, scheme)
        sentences.append(make_sentence(surfaces, tags))
    return Corpus(tuple(sentences), scheme, validated=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)
