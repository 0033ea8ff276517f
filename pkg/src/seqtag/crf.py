"""From-scratch linear-chain CRF: log-space lattice computations, full-batch
maximum-likelihood training with L2 regularization and step-halving, Viterbi
decoding, and a plain-text model format with hexfloat weights.

All lattice math stays in log space; sentences of equal length are batched
so the forward/backward loops run vectorized, and every reduction happens in
a fixed order so training and scoring are bit-stable run to run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .corpus import Corpus, Scheme, Sentence, Token
from .errors import SeqtagError
from .features import FeatureIndex, TEMPLATE_CATALOG, default_templates, extract_features


class EmptyCorpus(SeqtagError):
    pass


class UnknownLabel(SeqtagError):
    def __init__(self, tag: str):
        self.tag = tag
        super().__init__(f"tag {tag!r} is not in the model's label set")


class FormatError(SeqtagError):
    def __init__(self, line_no: int, reason: str = "unreadable line"):
        self.line_no = line_no
        super().__init__(f"model file line {line_no}: {reason}")


@dataclass(frozen=True)
class TrainConfig:
    l2_lambda: float = 1.0
    max_iter: int = 200
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


@dataclass
class Lattice:
    node: np.ndarray   # (T, K) log-potentials
    trans: np.ndarray  # (K, K) log-potentials


@dataclass
class CrfModel:
    labels: tuple[str, ...]          # index 0 = "O", rest sorted
    scheme: Scheme
    feature_index: FeatureIndex
    obs_weights: np.ndarray          # (n_features, n_labels)
    trans_weights: np.ndarray        # (n_labels, n_labels)
    templates: tuple[str, ...] = field(default_factory=default_templates)

    def __post_init__(self):
        k = len(self.labels)
        if self.obs_weights.shape != (len(self.feature_index), k):
            raise ValueError("obs_weights shape does not match feature index / labels")
        if self.trans_weights.shape != (k, k):
            raise ValueError("trans_weights shape does not match labels")

    @property
    def label_ids(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)


# ---------------------------------------------------------------------------
# Encoding: sentences -> feature ids + gold label ids


class _Encoded(NamedTuple):
    feat_flat: np.ndarray     # int32, feature ids of all positions, concatenated
    feat_offsets: np.ndarray  # int32, length T+1, position t owns [off[t], off[t+1])
    gold: np.ndarray | None   # int32, length T


def _encode_sentence(sentence: Sentence, templates, index: FeatureIndex,
                     label_ids: dict[str, int] | None = None,
                     tags=None) -> _Encoded:
    per_pos = [index.lookup(feats) for feats in extract_features(sentence, templates)]
    counts = np.array([len(ids) for ids in per_pos], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
    flat = np.concatenate(per_pos) if per_pos else np.zeros(0, dtype=np.int32)

    gold = None
    if tags is not None:
        for tag in tags:
            if tag not in label_ids:
                raise UnknownLabel(tag)
        gold = np.array([label_ids[t] for t in tags], dtype=np.int32)
    return _Encoded(flat.astype(np.int32), offsets, gold)


def _node_potentials(obs_w: np.ndarray, enc: _Encoded, n_labels: int) -> np.ndarray:
    counts = np.diff(enc.feat_offsets)
    T = len(counts)
    if len(enc.feat_flat) and (counts > 0).all():
        rows = obs_w[enc.feat_flat]
        return np.add.reduceat(rows, enc.feat_offsets[:-1], axis=0)
    node = np.zeros((T, n_labels))
    for t in range(T):
        ids = enc.feat_flat[enc.feat_offsets[t]:enc.feat_offsets[t + 1]]
        if len(ids):
            node[t] = obs_w[ids].sum(axis=0)
    return node


# ---------------------------------------------------------------------------
# Public lattice operations


def log_potentials(model: CrfModel, features) -> Lattice:
    """Node log-potentials for pre-extracted per-position feature sets;
    features absent from the model's index contribute zero."""
    node = np.zeros((len(features), len(model.labels)))
    for t, feats in enumerate(features):
        ids = model.feature_index.lookup(feats)
        if len(ids):
            node[t] = model.obs_weights[ids].sum(axis=0)
    return Lattice(node=node, trans=model.trans_weights.copy())


def _forward(node: np.ndarray, trans: np.ndarray) -> np.ndarray:
    T, K = node.shape
    alpha = np.empty((T, K))
    alpha[0] = node[0]
    for t in range(1, T):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + trans, axis=0) + node[t]
    return alpha


def log_partition(lattice: Lattice) -> float:
    """log of the summed exp-score of all label sequences (forward recursion)."""
    alpha = _forward(lattice.node, lattice.trans)
    return float(_logsumexp(alpha[-1][None, :], axis=1)[0])


# ---------------------------------------------------------------------------
# Objective and gradient over an encoded batch (length-bucketed, vectorized)


def _group_by_length(encoded: list[_Encoded]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {}
    for i, enc in enumerate(encoded):
        groups.setdefault(len(enc.feat_offsets) - 1, []).append(i)
    return dict(sorted(groups.items()))


def _batch_forward(node: np.ndarray, trans: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B, T, K = node.shape
    alpha = np.empty((B, T, K))
    alpha[:, 0] = node[:, 0]
    for t in range(1, T):
        alpha[:, t] = _logsumexp(alpha[:, t - 1, :, None] + trans[None], axis=1) + node[:, t]
    log_z = _logsumexp(alpha[:, -1], axis=1)
    return alpha, log_z


def _batch_backward(node: np.ndarray, trans: np.ndarray) -> np.ndarray:
    B, T, K = node.shape
    beta = np.zeros((B, T, K))
    for t in range(T - 2, -1, -1):
        beta[:, t] = _logsumexp(trans[None] + (node[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
    return beta


def _nll_core(obs_w: np.ndarray, trans_w: np.ndarray, encoded: list[_Encoded],
              l2_lambda: float, want_gradient: bool):
    """Regularized NLL over the batch; optionally its gradient.

    Per-sentence terms are accumulated in sentence-index order regardless of
    the length bucketing, keeping results independent of grouping.
    """
    n_labels = trans_w.shape[0]
    per_sentence = np.zeros(len(encoded))
    grad_obs = np.zeros_like(obs_w) if want_gradient else None
    grad_trans = np.zeros_like(trans_w) if want_gradient else None

    for T, idxs in _group_by_length(encoded).items():
        node = np.stack([_node_potentials(obs_w, encoded[i], n_labels) for i in idxs])
        gold = np.stack([encoded[i].gold for i in idxs])
        B = len(idxs)

        alpha, log_z = _batch_forward(node, trans_w)
        gold_score = np.take_along_axis(node, gold[:, :, None], axis=2)[:, :, 0].sum(axis=1)
        if T > 1:
            gold_score += trans_w[gold[:, :-1], gold[:, 1:]].sum(axis=1)
        per_sentence[idxs] = log_z - gold_score

        if not want_gradient:
            continue

        beta = _batch_backward(node, trans_w)
        post = np.exp(alpha + beta - log_z[:, None, None])  # (B, T, K)

        counts = np.concatenate([np.diff(encoded[i].feat_offsets) for i in idxs])
        flat_ids = np.concatenate([encoded[i].feat_flat for i in idxs])
        np.add.at(grad_obs, flat_ids, np.repeat(post.reshape(B * T, n_labels), counts, axis=0))
        np.subtract.at(grad_obs, (flat_ids, np.repeat(gold.reshape(B * T), counts)), 1.0)

        for t in range(1, T):
            edge = np.exp(
                alpha[:, t - 1, :, None] + trans_w[None]
                + (node[:, t] + beta[:, t])[:, None, :]
                - log_z[:, None, None]
            )
            grad_trans += edge.sum(axis=0)
            np.subtract.at(grad_trans, (gold[:, t - 1], gold[:, t]), 1.0)

    objective = float(per_sentence.sum())
    objective += 0.5 * l2_lambda * (float(np.sum(obs_w * obs_w)) + float(np.sum(trans_w * trans_w)))
    if not want_gradient:
        return objective, None, None
    grad_obs += l2_lambda * obs_w
    grad_trans += l2_lambda * trans_w
    return objective, grad_obs, grad_trans


def nll_and_gradient(model: CrfModel, batch, l2_lambda: float):
    """Regularized negative log-likelihood of (sentence, gold tags) pairs and
    its gradient as (grad_obs, grad_trans), same shapes as the weights."""
    label_ids = model.label_ids
    encoded = [
        _encode_sentence(sentence, model.templates, model.feature_index, label_ids, tags)
        for sentence, tags in batch
    ]
    objective, grad_obs, grad_trans = _nll_core(
        model.obs_weights, model.trans_weights, encoded, l2_lambda, want_gradient=True
    )
    return objective, (grad_obs, grad_trans)


# ---------------------------------------------------------------------------
# Training


_MIN_STEP = 1e-12


def train(
    corpus: Corpus,
    cfg: TrainConfig = TrainConfig(),
    templates: tuple[str, ...] | None = None,
    on_iteration: Callable[[int, float, float], None] | None = None,
) -> CrfModel:
    """Full-batch gradient descent from zero weights with step halving:
    a step that fails to decrease the objective is rejected and retried at
    half size, so accepted objectives are strictly decreasing. Stops at
    cfg.max_iter accepted iterations or when the relative improvement drops
    below cfg.tol. Fully deterministic."""
    if not corpus.sentences:
        raise EmptyCorpus("cannot train on an empty corpus")
    if templates is None:
        templates = default_templates()

    labels = ("O",) + tuple(sorted({t.tag for s in corpus for t in s} - {"O"}))
    label_ids = {label: i for i, label in enumerate(labels)}

    index = FeatureIndex()
    for sentence in corpus:
        for feats in extract_features(sentence, templates):
            for feat in feats:
                index.add(feat)

    encoded = [
        _encode_sentence(s, templates, index, label_ids, s.tags) for s in corpus
    ]

    obs_w = np.zeros((len(index), len(labels)))
    trans_w = np.zeros((len(labels), len(labels)))
    step = 0.5

    obj, g_obs, g_trans = _nll_core(obs_w, trans_w, encoded, cfg.l2_lambda, True)
    accepted = 0
    while accepted < cfg.max_iter:
        cand_obs = obs_w - step * g_obs
        cand_trans = trans_w - step * g_trans
        cand_obj, cand_g_obs, cand_g_trans = _nll_core(
            cand_obs, cand_trans, encoded, cfg.l2_lambda, True
        )
        if cand_obj < obj:
            obs_w, trans_w = cand_obs, cand_trans
            g_obs, g_trans = cand_g_obs, cand_g_trans
            improvement = (obj - cand_obj) / max(1.0, abs(obj))
            obj = cand_obj
            accepted += 1
            if on_iteration:
                on_iteration(accepted, obj, step)
            if improvement < cfg.tol:
                break
        else:
            step *= 0.5
            if step < _MIN_STEP:
                break

    return CrfModel(
        labels=labels,
        scheme=corpus.scheme,
        feature_index=index,
        obs_weights=obs_w,
        trans_weights=trans_w,
        templates=tuple(templates),
    )


# ---------------------------------------------------------------------------
# Decoding


def viterbi(model: CrfModel, sentence: Sentence) -> list[str]:
    """Highest-scoring tag sequence; score ties resolve to the lowest label
    index at every backpointer decision (all-zero weights decode to "O")."""
    lattice = log_potentials(model, extract_features(sentence, model.templates))
    node, trans = lattice.node, lattice.trans
    T, K = node.shape

    delta = node[0].copy()
    back = np.zeros((T, K), dtype=np.int32)
    for t in range(1, T):
        scores = delta[:, None] + trans  # (from, to)
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(K)] + node[t]

    path = [int(np.argmax(delta))]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return [model.labels[i] for i in path]


def tag_corpus(model: CrfModel, corpus: Corpus) -> Corpus:
    """Corpus with every tag replaced by the model's prediction."""
    sentences = []
    for sentence in corpus:
        tags = viterbi(model, sentence)
        sentences.append(Sentence(tuple(
            Token(tok.surface, tag, tok.attributes) for tok, tag in zip(sentence, tags)
        )))
    return Corpus(
        tuple(sentences), scheme=model.scheme,
        column_spec=corpus.column_spec, validated=False,
    )


# ---------------------------------------------------------------------------
# Persistence


def save_model(model: CrfModel, path) -> None:
    """Text format: SCHEME and LABELS header lines, then one T line per
    transition and one F line per nonzero observation weight (hexfloats)."""
    lines = [
        f"SCHEME\t{model.scheme.value}",
        "LABELS\t" + ",".join(model.labels),
    ]
    for i, src in enumerate(model.labels):
        for j, dst in enumerate(model.labels):
            lines.append(f"T\t{src}\t{dst}\t{model.trans_weights[i, j].hex()}")
    for feature, fid in model.feature_index.ids.items():
        for j, label in enumerate(model.labels):
            w = model.obs_weights[fid, j]
            if w != 0.0:
                lines.append(f"F\t{feature}\t{label}\t{w.hex()}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> CrfModel:
    """Inverse of save_model; raises FormatError(line_no) on anything the
    writer could not have produced."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    if not lines or not lines[0].startswith("SCHEME\t"):
        raise FormatError(1, "missing SCHEME header")
    try:
        scheme = Scheme(lines[0].split("\t", 1)[1])
    except ValueError as exc:
        raise FormatError(1, str(exc)) from exc
    if len(lines) < 2 or not lines[1].startswith("LABELS\t"):
        raise FormatError(2, "missing LABELS header")
    labels = tuple(lines[1].split("\t", 1)[1].split(","))
    label_ids = {label: i for i, label in enumerate(labels)}

    trans = np.zeros((len(labels), len(labels)))
    index = FeatureIndex()
    obs_rows: list[tuple[int, int, float]] = []
    for line_no, line in enumerate(lines[2:], start=3):
        parts = line.split("\t")
        try:
            if parts[0] == "T" and len(parts) == 4:
                trans[label_ids[parts[1]], label_ids[parts[2]]] = float.fromhex(parts[3])
            elif parts[0] == "F" and len(parts) == 4:
                obs_rows.append((index.add(parts[1]), label_ids[parts[2]], float.fromhex(parts[3])))
            else:
                raise FormatError(line_no)
        except (KeyError, ValueError) as exc:
            raise FormatError(line_no, str(exc)) from exc

    obs = np.zeros((len(index), len(labels)))
    for fid, lid, weight in obs_rows:
        obs[fid, lid] = weight

    seen_templates = {f.split("=", 1)[0] for f in index.ids}
    templates = tuple(t for t in TEMPLATE_CATALOG if t in seen_templates)
    return CrfModel(
        labels=labels, scheme=scheme, feature_index=index,
        obs_weights=obs, trans_weights=trans, templates=templates,
    )
