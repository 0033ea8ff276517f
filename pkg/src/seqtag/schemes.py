"""Span decoding/encoding, IO/BIO/BIOES conversion and tag-sequence validation.

Lenient decoding follows conlleval conventions: an inside-like tag with no
valid opener still starts an entity, and a type change inside a run splits
it. Strict mode refuses anything encode_spans could not have produced.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import NamedTuple

from .corpus import Corpus, Scheme, Sentence, Token, _TAG_RE
from .errors import SeqtagError


class EntitySpan(NamedTuple):
    start: int  # token index, inclusive
    end: int    # token index, inclusive
    etype: str


class DecodeMode(enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"


@dataclass(frozen=True)
class Violation:
    position: int
    found: str
    reason: str


class InvalidTagForScheme(SeqtagError):
    def __init__(self, position: int, tag: str, scheme: Scheme):
        self.position = position
        self.tag = tag
        super().__init__(f"tag {tag!r} at position {position} is not legal under {scheme.value}")


class ViolationError(SeqtagError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(f"{v.position}:{v.found}:{v.reason}" for v in violations))


class OverlappingSpans(SeqtagError):
    pass


_LEGAL_PREFIXES = {
    Scheme.IO: frozenset("I"),
    Scheme.BIO: frozenset("BI"),
    Scheme.BIOES: frozenset("BIES"),
}


def split_tag(tag: str) -> tuple[str, str | None]:
    """"B-PER" -> ("B", "PER"); "O" -> ("O", None)."""
    if tag == "O":
        return "O", None
    prefix, _, etype = tag.partition("-")
    return prefix, etype


def _check_syntax(tags, scheme: Scheme) -> None:
    legal = _LEGAL_PREFIXES[scheme]
    for i, tag in enumerate(tags):
        if tag == "O":
            continue
        if not _TAG_RE.match(tag) or tag[0] not in legal:
            raise InvalidTagForScheme(i, tag, scheme)


def _starts_chunk(prev: str, cur: str) -> bool:
    if cur == "O":
        return False
    if prev == "O":
        return True
    ppre, ptype = split_tag(prev)
    cpre, ctype = split_tag(cur)
    if ptype != ctype:
        return True
    return cpre in "BS" or ppre in "ES"


def _ends_chunk(prev: str, cur: str) -> bool:
    if prev == "O":
        return False
    if cur == "O":
        return True
    ppre, ptype = split_tag(prev)
    cpre, ctype = split_tag(cur)
    if ptype != ctype:
        return True
    return cpre in "BS" or ppre in "ES"


def decode_spans(tags, scheme: Scheme, mode: DecodeMode = DecodeMode.LENIENT) -> list[EntitySpan]:
    """Recover entity spans from a tag sequence.

    Raises InvalidTagForScheme for tags whose prefix the scheme does not
    allow; in strict mode raises ViolationError if the sequence could not
    have been produced by encode_spans.
    """
    tags = list(tags)
    _check_syntax(tags, scheme)
    if mode is DecodeMode.STRICT:
        violations = validate(tags, scheme)
        if violations:
            raise ViolationError(violations)

    spans: list[EntitySpan] = []
    open_start: int | None = None
    prev = "O"
    for i, tag in enumerate(tags):
        if open_start is not None and _ends_chunk(prev, tag):
            spans.append(EntitySpan(open_start, i - 1, split_tag(prev)[1]))
            open_start = None
        if open_start is None and _starts_chunk(prev, tag):
            open_start = i
        prev = tag
    if open_start is not None:
        spans.append(EntitySpan(open_start, len(tags) - 1, split_tag(prev)[1]))
    return spans


def encode_spans(spans, length: int, scheme: Scheme) -> list[str]:
    """Write spans back out as a tag sequence under the given scheme.

    Exact inverse of lenient decoding for BIO and BIOES; under IO adjacent
    same-type spans merge on re-decoding (the scheme cannot separate them).
    """
    ordered = sorted(spans)
    prev_end = -1
    for span in ordered:
        if not (0 <= span.start <= span.end < length):
            raise ValueError(f"span {span} out of range for length {length}")
        if span.start <= prev_end:
            raise OverlappingSpans(f"span {span} overlaps a previous span")
        prev_end = span.end

    tags = ["O"] * length
    for start, end, etype in ordered:
        if scheme is Scheme.IO:
            for i in range(start, end + 1):
                tags[i] = f"I-{etype}"
        elif scheme is Scheme.BIO:
            tags[start] = f"B-{etype}"
            for i in range(start + 1, end + 1):
                tags[i] = f"I-{etype}"
        else:
            if start == end:
                tags[start] = f"S-{etype}"
            else:
                tags[start] = f"B-{etype}"
                for i in range(start + 1, end):
                    tags[i] = f"I-{etype}"
                tags[end] = f"E-{etype}"
    return tags


def validate(tags, scheme: Scheme) -> list[Violation]:
    """Strict structural check: empty iff encode_spans could have produced
    the sequence. Violations are data, one per offending position."""
    tags = list(tags)
    legal = _LEGAL_PREFIXES[scheme]
    violations: list[Violation] = []

    syntax_ok = []
    for i, tag in enumerate(tags):
        if tag != "O" and (not _TAG_RE.match(tag) or tag[0] not in legal):
            violations.append(Violation(i, tag, "invalid-tag"))
            syntax_ok.append(False)
        else:
            syntax_ok.append(True)

    if scheme is Scheme.IO:
        return violations

    if scheme is Scheme.BIO:
        inside: str | None = None
        for i, tag in enumerate(tags):
            if not syntax_ok[i]:
                inside = None
                continue
            prefix, etype = split_tag(tag)
            if prefix == "O":
                inside = None
            elif prefix == "B":
                inside = etype
            else:  # I
                if inside != etype:
                    violations.append(Violation(i, tag, "orphan-inside"))
                inside = etype
        return violations

    # BIOES: B must be continued by I/E of the same type and closed by E.
    open_type: str | None = None
    last_open_idx = -1
    for i, tag in enumerate(tags):
        if not syntax_ok[i]:
            open_type = None
            continue
        prefix, etype = split_tag(tag)
        if open_type is not None:
            if prefix in "IE" and etype == open_type:
                last_open_idx = i
                if prefix == "E":
                    open_type = None
                continue
            violations.append(Violation(last_open_idx, tags[last_open_idx], "unterminated-entity"))
            open_type = None
        if prefix == "B":
            open_type, last_open_idx = etype, i
        elif prefix in "IE":
            violations.append(Violation(i, tag, "orphan-inside"))
    if open_type is not None:
        violations.append(Violation(last_open_idx, tags[last_open_idx], "unterminated-entity"))
    return violations


def convert(corpus: Corpus, target: Scheme) -> Corpus:
    """Re-express every sentence's tags in the target scheme (lenient decode,
    then canonical encode); surfaces and attributes are untouched."""
    new_sentences = []
    for sentence in corpus:
        spans = decode_spans(sentence.tags, corpus.scheme, DecodeMode.LENIENT)
        tags = encode_spans(spans, len(sentence), target)
        new_sentences.append(
            Sentence(tuple(
                Token(tok.surface, tag, tok.attributes)
                for tok, tag in zip(sentence, tags)
            ))
        )
    return replace(corpus, sentences=tuple(new_sentences), scheme=target, validated=True)


def validate_corpus(corpus: Corpus) -> Corpus:
    """Mark a corpus validated once every sentence decodes leniently under
    its scheme; raises InvalidTagForScheme otherwise."""
    for sentence in corpus:
        decode_spans(sentence.tags, corpus.scheme, DecodeMode.LENIENT)
    return replace(corpus, validated=True)


def corpus_violations(corpus: Corpus) -> list[tuple[int, Violation]]:
    """Strict QA report over a whole corpus: (sentence index, violation)."""
    report = []
    for idx, sentence in enumerate(corpus):
        for violation in validate(sentence.tags, corpus.scheme):
            report.append((idx, violation))
    return report


def full_tag_set(etypes, scheme: Scheme) -> list[str]:
    """All tags the scheme can produce for the given entity types, "O" first."""
    prefixes = {Scheme.IO: "I", Scheme.BIO: "BI", Scheme.BIOES: "BIES"}[scheme]
    return ["O"] + sorted(f"{p}-{t}" for t in sorted(set(etypes)) for p in prefixes)
