"""In-memory corpus model and CoNLL-style column file parsing/serialization.

Tags are stored verbatim as text; what a tag *means* is decided by the
schemes module, so a file in any annotation scheme parses without loss.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

from .errors import SeqtagError

_TAG_RE = re.compile(r"^(?:O|[IBES]-[A-Z0-9]+)$")


class Scheme(enum.Enum):
    """Annotation scheme of a tagged corpus."""

    IO = "io"
    BIO = "bio"
    BIOES = "bioes"


class MalformedRow(SeqtagError):
    def __init__(self, line_no: int, reason: str = "too few fields"):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class EmptyInput(SeqtagError):
    pass


@dataclass(frozen=True)
class Token:
    """One surface form with optional attributes (attribute 0 = POS) and a tag."""

    surface: str
    tag: str
    attributes: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.surface or any(ch.isspace() for ch in self.surface):
            raise ValueError(f"token surface must be nonempty and whitespace-free: {self.surface!r}")
        if not _TAG_RE.match(self.tag):
            raise ValueError(f"invalid tag: {self.tag!r}")
        for attr in self.attributes:
            if not attr or any(ch.isspace() for ch in attr):
                raise ValueError(f"attributes must be nonempty and whitespace-free: {attr!r}")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("sentence must contain at least one token")

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @property
    def tags(self) -> tuple[str, ...]:
        return tuple(t.tag for t in self.tokens)

    @property
    def surfaces(self) -> tuple[str, ...]:
        return tuple(t.surface for t in self.tokens)


@dataclass(frozen=True)
class ColumnSpec:
    """Which columns of a row hold the surface, tag and named attributes."""

    surface_col: int = 0
    tag_col: int = 1
    attribute_cols: tuple[tuple[int, str], ...] = ()
    separator: str = " "

    def __post_init__(self):
        if self.separator not in (" ", "\t"):
            raise ValueError("separator must be a single space or tab")
        indices = [self.surface_col, self.tag_col] + [i for i, _ in self.attribute_cols]
        if len(set(indices)) != len(indices):
            raise ValueError("column indices must be distinct")

    @property
    def width(self) -> int:
        return max(self.surface_col, self.tag_col, *(i for i, _ in self.attribute_cols), 0) + 1


DEFAULT_COLUMNS = ColumnSpec()


@dataclass(frozen=True)
class Corpus:
    """Ordered sentences plus the annotation scheme their tags are read under.

    ``validated`` is False for a fresh parse; schemes.validate_corpus flips it
    once every sentence decodes cleanly under ``scheme``.
    """

    sentences: tuple[Sentence, ...]
    scheme: Scheme
    column_spec: ColumnSpec = DEFAULT_COLUMNS
    validated: bool = False

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def with_sentences(self, sentences, validated: bool | None = None) -> "Corpus":
        return replace(
            self,
            sentences=tuple(sentences),
            validated=self.validated if validated is None else validated,
        )


@dataclass(frozen=True)
class SplitRules:
    """Sentence-boundary rules for a flat (unsegmented) token stream."""

    terminals: frozenset[str] = frozenset({".", "!", "?"})
    abbreviations: frozenset[str] = frozenset(
        {"M.", "MM.", "Mme.", "Mlle.", "Dr.", "St.", "etc."}
    )
    max_len: int = 200


DEFAULT_SPLIT_RULES = SplitRules()


def infer_scheme(tags) -> Scheme:
    """Smallest scheme whose prefix set covers the tags (fresh, unvalidated parses)."""
    prefixes = {t[0] for t in tags if t != "O"}
    if prefixes <= {"I"}:
        return Scheme.IO
    if prefixes <= {"B", "I"}:
        return Scheme.BIO
    return Scheme.BIOES


def parse_conll(text: str, spec: ColumnSpec = DEFAULT_COLUMNS, scheme: Scheme | None = None) -> Corpus:
    """Parse CoNLL-style column text into a Corpus.

    Blank lines separate sentences; lines starting with "# " are skipped.
    The corpus comes back unvalidated; when ``scheme`` is None it is inferred
    from the tag prefixes actually present.

    Raises MalformedRow when a row has too few fields (or an unusable field)
    and EmptyInput when no token rows exist.
    """
    sentences: list[Sentence] = []
    current: list[Token] = []
    all_tags: list[str] = []

    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if line.startswith("# "):
            continue
        if not line.strip():
            if current:
                sentences.append(Sentence(tuple(current)))
                current = []
            continue
        fields = line.split(spec.separator)
        if len(fields) < spec.width:
            raise MalformedRow(line_no)
        try:
            token = Token(
                surface=fields[spec.surface_col],
                tag=fields[spec.tag_col],
                attributes=tuple(fields[i] for i, _ in spec.attribute_cols),
            )
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc)) from exc
        current.append(token)
        all_tags.append(token.tag)

    if current:
        sentences.append(Sentence(tuple(current)))
    if not sentences:
        raise EmptyInput("no token rows found")

    if scheme is None:
        scheme = infer_scheme(all_tags)
    return Corpus(tuple(sentences), scheme=scheme, column_spec=spec, validated=False)


def serialize_conll(corpus: Corpus, spec: ColumnSpec | None = None) -> str:
    """Inverse of parse_conll: one row per token, one blank line between
    sentences, trailing newline, unreferenced columns padded with "_"."""
    if spec is None:
        spec = corpus.column_spec
    if not corpus.sentences:
        raise EmptyInput("cannot serialize an empty corpus")

    blocks = []
    for sentence in corpus.sentences:
        rows = []
        for token in sentence:
            cells = ["_"] * spec.width
            cells[spec.surface_col] = token.surface
            cells[spec.tag_col] = token.tag
            for slot, (col, _) in enumerate(spec.attribute_cols):
                cells[col] = token.attributes[slot]
            rows.append(spec.separator.join(cells))
        blocks.append("\n".join(rows))
    return "\n\n".join(blocks) + "\n"


def _is_abbreviation(surface: str, rules: SplitRules) -> bool:
    # A bare "." is punctuation, not an abbreviation; "M."/"MM." style tokens are.
    if surface in rules.abbreviations:
        return True
    return surface.endswith(".") and 2 <= len(surface) <= 3


def split_sentences(
    tokens,
    rules: SplitRules = DEFAULT_SPLIT_RULES,
    scheme: Scheme = Scheme.IO,
) -> Corpus:
    """Insert sentence boundaries into a flat token stream.

    A boundary follows a terminal token (".", "!", "?") that is not an
    abbreviation when the next surface begins with an uppercase letter or a
    digit; a hard boundary is forced once a sentence reaches ``max_len``
    tokens. Tokens are never dropped, duplicated or reordered.
    """
    tokens = list(tokens)
    sentences: list[Sentence] = []
    current: list[Token] = []

    for i, token in enumerate(tokens):
        current.append(token)
        if len(current) >= rules.max_len:
            sentences.append(Sentence(tuple(current)))
            current = []
            continue
        if token.surface not in rules.terminals:
            continue
        if _is_abbreviation(token.surface, rules):
            continue
        if i + 1 < len(tokens):
            nxt = tokens[i + 1].surface[0]
            if nxt.isupper() or nxt.isdigit():
                sentences.append(Sentence(tuple(current)))
                current = []

    if current:
        sentences.append(Sentence(tuple(current)))
    return Corpus(tuple(sentences), scheme=scheme, validated=False)


@dataclass(frozen=True)
class CorpusStats:
    tokens: int
    sentences: int
    entities_total: int
    entities_by_type: dict[str, int] = field(default_factory=dict)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Token/sentence/entity counts; entities via lenient span decoding."""
    from . import schemes  # deferred: schemes depends on this module

    by_type: dict[str, int] = {}
    for sentence in corpus:
        for span in schemes.decode_spans(sentence.tags, corpus.scheme, schemes.DecodeMode.LENIENT):
            by_type[span.etype] = by_type.get(span.etype, 0) + 1
    return CorpusStats(
        tokens=corpus.n_tokens,
        sentences=len(corpus),
        entities_total=sum(by_type.values()),
        entities_by_type=dict(sorted(by_type.items())),
    )
