"""Label-wise token replacement (LWTR) and shuffle-within-segments (SIS).

Both techniques are driven by an explicitly seeded PCG64 generator; the
corpus-level entry point derives one child seed per (sentence, copy) so
results never depend on evaluation order.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from .corpus import Corpus, Scheme, Sentence, Token
from .errors import SeqtagError
from .schemes import DecodeMode, EntitySpan, decode_spans, encode_spans

TECHNIQUES = ("lwtr", "sis")


class MissingTagKey(SeqtagError):
    def __init__(self, tag: str):
        self.tag = tag
        super().__init__(f"no surface forms observed for tag {tag!r}")


@dataclass(frozen=True)
class AugmentConfig:
    techniques: tuple[str, ...] = TECHNIQUES
    p: float = 0.5
    copies_per_sentence: int = 1
    seed: int = 0

    def __post_init__(self):
        techniques = tuple(sorted(set(self.techniques)))
        if not techniques or any(t not in TECHNIQUES for t in techniques):
            raise ValueError(f"techniques must be a nonempty subset of {TECHNIQUES}")
        object.__setattr__(self, "techniques", techniques)
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if self.copies_per_sentence < 1:
            raise ValueError("copies_per_sentence must be >= 1")


@dataclass(frozen=True)
class Segment:
    start: int  # inclusive
    end: int    # inclusive
    etype: str | None  # None for an O run


class LabelTokenDistribution:
    """Per-tag multiset of observed surface forms, sampled by count weight."""

    def __init__(self, counts_by_tag: dict[str, Counter]):
        self._surfaces: dict[str, list[str]] = {}
        self._cumulative: dict[str, list[int]] = {}
        for tag, counter in counts_by_tag.items():
            surfaces, cumulative, total = [], [], 0
            for surface, count in counter.items():
                surfaces.append(surface)
                total += count
                cumulative.append(total)
            self._surfaces[tag] = surfaces
            self._cumulative[tag] = cumulative

    def __contains__(self, tag: str) -> bool:
        return tag in self._surfaces

    def __len__(self) -> int:
        return len(self._surfaces)

    def counts(self, tag: str) -> dict[str, int]:
        cumulative = self._cumulative[tag]
        return {
            surface: cumulative[i] - (cumulative[i - 1] if i else 0)
            for i, surface in enumerate(self._surfaces[tag])
        }

    def sample(self, tag: str, rng) -> str:
        """One surface form, drawn proportionally to its observed count
        (cumulative counts walked with a single uniform draw)."""
        if tag not in self._surfaces:
            raise MissingTagKey(tag)
        cumulative = self._cumulative[tag]
        target = rng.random() * cumulative[-1]
        return self._surfaces[tag][bisect_right(cumulative, target)]


def build_distribution(corpus: Corpus) -> LabelTokenDistribution:
    """Count every surface under its full tag string ("B-ORG" != "I-ORG")."""
    counts: dict[str, Counter] = {}
    for sentence in corpus:
        for token in sentence:
            counts.setdefault(token.tag, Counter())[token.surface] += 1
    return LabelTokenDistribution(counts)


def lwtr_sentence(s: Sentence, dist: LabelTokenDistribution, p: float, rng) -> Sentence:
    """Replace each surface, independently with probability p, by a sample
    from the same-tag distribution; tags, attributes and order are kept."""
    tokens = []
    for token in s:
        if token.tag not in dist:
            raise MissingTagKey(token.tag)
        if rng.random() < p:
            tokens.append(Token(dist.sample(token.tag, rng), token.tag, token.attributes))
        else:
            tokens.append(token)
    return Sentence(tuple(tokens))


def segment_sentence(tags, scheme: Scheme) -> list[Segment]:
    """Partition a sentence into entity spans and maximal O runs."""
    spans = decode_spans(tags, scheme, DecodeMode.LENIENT)
    segments: list[Segment] = []
    pos = 0
    for span in spans:
        if span.start > pos:
            segments.append(Segment(pos, span.start - 1, None))
        segments.append(Segment(span.start, span.end, span.etype))
        pos = span.end + 1
    if pos < len(tags):
        segments.append(Segment(pos, len(tags) - 1, None))
    return segments


def _fisher_yates(items: list, rng) -> None:
    for i in range(len(items) - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        items[i], items[j] = items[j], items[i]


def sis_sentence(s: Sentence, scheme: Scheme, p: float, rng) -> Sentence:
    """Shuffle tokens within segments, each segment selected independently
    with probability p (Bernoulli); segment order and boundaries are fixed.

    A shuffled entity segment gets its tags re-encoded positionally under
    ``scheme`` so the output stays decodable.
    """
    tokens = list(s.tokens)
    for segment in segment_sentence(s.tags, scheme):
        if not rng.random() < p:
            continue
        chunk = tokens[segment.start:segment.end + 1]
        _fisher_yates(chunk, rng)
        if segment.etype is None:
            tokens[segment.start:segment.end + 1] = chunk
            continue
        tags = encode_spans([EntitySpan(0, len(chunk) - 1, segment.etype)], len(chunk), scheme)
        tokens[segment.start:segment.end + 1] = [
            Token(tok.surface, tag, tok.attributes) for tok, tag in zip(chunk, tags)
        ]
    return Sentence(tuple(tokens))


def _sentence_rng(seed: int, sentence_index: int, copy_index: int) -> np.random.Generator:
    # Child seed per (sentence, copy): deterministic under any scheduling.
    entropy = (seed & 0xFFFFFFFFFFFFFFFF, sentence_index, copy_index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def augment_corpus(corpus: Corpus, cfg: AugmentConfig) -> Corpus:
    """Original sentences followed by ``copies_per_sentence`` augmented copies
    of each, one enabled technique chosen uniformly per copy."""
    dist = build_distribution(corpus) if "lwtr" in cfg.techniques else None

    augmented: list[Sentence] = []
    for i, sentence in enumerate(corpus):
        for c in range(cfg.copies_per_sentence):
            rng = _sentence_rng(cfg.seed, i, c)
            technique = cfg.techniques[int(rng.integers(len(cfg.techniques)))]
            if technique == "lwtr":
                augmented.append(lwtr_sentence(sentence, dist, cfg.p, rng))
            else:
                augmented.append(sis_sentence(sentence, corpus.scheme, cfg.p, rng))

    return replace(corpus, sentences=corpus.sentences + tuple(augmented))
