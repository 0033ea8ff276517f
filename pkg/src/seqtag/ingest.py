"""Dataset download with a checksum-pinned local cache, plus the
deterministic suffix-based train/test split.

The digest of a source file is recorded in ``manifest.tsv`` on first fetch
and never changes for that URL unless the caller explicitly refreshes.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, replace
from pathlib import Path

from filelock import FileLock

from .corpus import Corpus
from .errors import SeqtagError

# Europeana Newspapers French NER data (BnF historical newspapers, IO tags).
DEFAULT_SOURCE_URL = (
    "https://raw.githubusercontent.com/EuropeanaNewspapers/ner-corpora/"
    "master/enp_FR.bnf.bio/enp_FR.bnf.bio"
)
DEFAULT_TEST_TOKEN_BUDGET = 20592


class NetworkError(SeqtagError):
    pass


class ChecksumMismatch(SeqtagError):
    def __init__(self, expected: str, actual: str):
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"digest mismatch: expected {expected}, got {actual} "
            "(pass --refresh to accept upstream changes)"
        )


def default_cache_dir() -> Path:
    env = os.environ.get("SEQTAG_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "seqtag"


@dataclass(frozen=True)
class DatasetDescriptor:
    source_url: str = DEFAULT_SOURCE_URL
    cache_path: Path = None  # type: ignore[assignment]
    sha256: str | None = None

    def __post_init__(self):
        if self.cache_path is None:
            object.__setattr__(self, "cache_path", default_cache_dir())
        else:
            object.__setattr__(self, "cache_path", Path(self.cache_path))


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


class _Manifest:
    """`url<TAB>sha256<TAB>bytes` lines pinning what each URL hashed to."""

    def __init__(self, path: Path):
        self.path = path
        self.entries: dict[str, tuple[str, int]] = {}
        if path.exists():
            for line in path.read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                url, digest, size = line.split("\t")
                self.entries[url] = (digest, int(size))

    def get(self, url: str) -> str | None:
        entry = self.entries.get(url)
        return entry[0] if entry else None

    def record(self, url: str, digest: str, size: int) -> None:
        self.entries[url] = (digest, size)
        body = "".join(f"{u}\t{d}\t{s}\n" for u, (d, s) in sorted(self.entries.items()))
        _atomic_write(self.path, body.encode("utf-8"))


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cache_target(desc: DatasetDescriptor) -> Path:
    parsed = urllib.parse.urlparse(desc.source_url)
    return desc.cache_path / parsed.netloc / parsed.path.lstrip("/")


def fetch_dataset(desc: DatasetDescriptor, refresh: bool = False) -> Path:
    """Return the local path of the dataset, downloading it if needed.

    A warm cache with a matching digest costs no network calls and no
    writes; a digest change anywhere raises ChecksumMismatch unless
    ``refresh`` is set.
    """
    target = cache_target(desc)
    desc.cache_path.mkdir(parents=True, exist_ok=True)
    with FileLock(str(desc.cache_path / ".lock")):
        manifest = _Manifest(desc.cache_path / "manifest.tsv")
        expected = desc.sha256 or manifest.get(desc.source_url)

        if target.exists():
            actual = _sha256(target.read_bytes())
            if expected is None:
                manifest.record(desc.source_url, actual, target.stat().st_size)
                return target
            if actual == expected:
                return target
            if not refresh:
                raise ChecksumMismatch(expected, actual)

        try:
            with urllib.request.urlopen(desc.source_url) as response:
                data = response.read()
        except (urllib.error.URLError, OSError) as exc:
            raise NetworkError(f"failed to fetch {desc.source_url}: {exc}") from exc

        digest = _sha256(data)
        if expected is not None and digest != expected and not refresh:
            raise ChecksumMismatch(expected, digest)
        _atomic_write(target, data)
        manifest.record(desc.source_url, digest, len(data))
        return target


def split_train_test(corpus: Corpus, test_token_budget: int) -> tuple[Corpus, Corpus]:
    """Deterministic split: test is the maximal suffix of whole sentences
    whose token count fits the budget, train is everything before it."""
    if not 0 <= test_token_budget <= corpus.n_tokens:
        raise ValueError("test_token_budget must be between 0 and the corpus token count")

    cut = len(corpus.sentences)
    total = 0
    for sentence in reversed(corpus.sentences):
        if total + len(sentence) > test_token_budget:
            break
        total += len(sentence)
        cut -= 1
    train = replace(corpus, sentences=corpus.sentences[:cut])
    test = replace(corpus, sentences=corpus.sentences[cut:])
    return train, test
