"""Per-token feature strings for the CRF: lexical context, affixes, word
shape and surface cues, plus optional POS context from attribute column 0."""

from __future__ import annotations

import numpy as np

from .corpus import Sentence

BOS = "<BOS>"
EOS = "<EOS>"

# Catalog order is the canonical template order everywhere.
TEMPLATE_CATALOG = (
    "bias",
    "w0", "w-1", "w+1",
    "pre1", "pre2", "pre3",
    "suf1", "suf2", "suf3",
    "shape", "cap", "allcaps", "digit", "hyphen",
    "pos0", "pos-1", "pos+1",
)

POS_TEMPLATES = ("pos0", "pos-1", "pos+1")


def default_templates(include_pos: bool = False) -> tuple[str, ...]:
    if include_pos:
        return TEMPLATE_CATALOG
    return tuple(t for t in TEMPLATE_CATALOG if t not in POS_TEMPLATES)


def word_shape(surface: str) -> str:
    """Uppercase -> X, lowercase -> x, digit -> d, other chars verbatim,
    consecutive identical codes collapsed ("Saint-Brieuc" -> "Xx-Xx")."""
    out: list[str] = []
    for ch in surface:
        if ch.isupper():
            code = "X"
        elif ch.islower():
            code = "x"
        elif ch.isdigit():
            code = "d"
        else:
            code = ch
        if not out or out[-1] != code:
            out.append(code)
    return "".join(out)


def _pos_at(sentence: Sentence, t: int) -> str:
    if t < 0:
        return BOS
    if t >= len(sentence):
        return EOS
    attrs = sentence[t].attributes
    if not attrs:
        raise ValueError("POS templates require tokens with attribute column 0")
    return attrs[0]


def _features_at(sentence: Sentence, t: int, templates) -> list[str]:
    w = sentence[t].surface
    n = len(sentence)
    feats: list[str] = []
    for name in templates:
        if name == "bias":
            feats.append("bias")
        elif name == "w0":
            feats.append(f"w0={w.lower()}")
        elif name == "w-1":
            feats.append(f"w-1={sentence[t - 1].surface if t > 0 else BOS}")
        elif name == "w+1":
            feats.append(f"w+1={sentence[t + 1].surface if t + 1 < n else EOS}")
        elif name.startswith("pre"):
            feats.append(f"{name}={w[:int(name[3])]}")
        elif name.startswith("suf"):
            feats.append(f"{name}={w[-int(name[3]):]}")
        elif name == "shape":
            feats.append(f"shape={word_shape(w)}")
        elif name == "cap":
            feats.append(f"cap={1 if w[0].isupper() else 0}")
        elif name == "allcaps":
            feats.append(f"allcaps={1 if w.isupper() else 0}")
        elif name == "digit":
            feats.append(f"digit={1 if any(c.isdigit() for c in w) else 0}")
        elif name == "hyphen":
            feats.append(f"hyphen={1 if '-' in w else 0}")
        elif name == "pos0":
            feats.append(f"pos0={_pos_at(sentence, t)}")
        elif name == "pos-1":
            feats.append(f"pos-1={_pos_at(sentence, t - 1)}")
        elif name == "pos+1":
            feats.append(f"pos+1={_pos_at(sentence, t + 1)}")
        else:
            raise ValueError(f"unknown feature template: {name!r}")
    # Short words make some affix templates coincide; features are a set.
    return list(dict.fromkeys(feats))


def extract_features(sentence: Sentence, templates) -> list[list[str]]:
    """One ordered, duplicate-free feature-string list per position."""
    return [_features_at(sentence, t, templates) for t in range(len(sentence))]


class FeatureIndex:
    """Bijection between feature strings and dense ids, built from training
    data only; unknown strings simply map to nothing at lookup time."""

    def __init__(self, features=()):
        self.ids: dict[str, int] = {}
        for feature in features:
            self.add(feature)

    def add(self, feature: str) -> int:
        if feature not in self.ids:
            self.ids[feature] = len(self.ids)
        return self.ids[feature]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, feature: str) -> bool:
        return feature in self.ids

    @property
    def feature_strings(self) -> list[str]:
        return list(self.ids)

    def lookup(self, features) -> np.ndarray:
        """Ids of the known features among ``features`` (unseen ones drop out)."""
        return np.array(
            [self.ids[f] for f in features if f in self.ids],
            dtype=np.int32,
        )
