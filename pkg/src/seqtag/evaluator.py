"""Entity-level precision/recall/F1 with conlleval semantics.

An entity is correct only when start, end and type all match exactly.
``normalize_io`` re-expresses both span sets in IO first (merging adjacent
same-type entities on both sides), which is how mixed-scheme results are
made comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .corpus import Corpus
from .errors import SeqtagError
from .schemes import DecodeMode, Scheme, decode_spans, encode_spans


class AlignmentError(SeqtagError):
    def __init__(self, sentence: int, position: int, reason: str = "corpora are not aligned"):
        self.sentence = sentence
        self.position = position
        super().__init__(f"sentence {sentence}, position {position}: {reason}")


def _pct(num: int, den: int) -> float:
    return 100.0 * num / den if den else 0.0


@dataclass(frozen=True)
class TypeScore:
    gold_count: int = 0
    pred_count: int = 0
    correct_count: int = 0

    @property
    def precision(self) -> float:
        return _pct(self.correct_count, self.pred_count)

    @property
    def recall(self) -> float:
        return _pct(self.correct_count, self.gold_count)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass(frozen=True)
class EvalReport:
    per_type: dict[str, TypeScore]
    overall: TypeScore
    token_accuracy: float
    tokens_total: int = 0


def evaluate(gold: Corpus, pred: Corpus, normalize_io: bool = False) -> EvalReport:
    """Score predictions against gold, entity by entity.

    Both corpora must align sentence-for-sentence, token-for-token, with
    identical surfaces; raises AlignmentError otherwise.
    """
    if len(gold) != len(pred):
        raise AlignmentError(min(len(gold), len(pred)), 0, "sentence counts differ")

    counts: dict[str, list[int]] = {}  # type -> [gold, pred, correct]
    tokens_total = 0
    tokens_correct = 0

    for s_idx, (gs, ps) in enumerate(zip(gold, pred)):
        if len(gs) != len(ps):
            raise AlignmentError(s_idx, min(len(gs), len(ps)), "sentence lengths differ")
        for t_idx, (gt, pt) in enumerate(zip(gs, ps)):
            if gt.surface != pt.surface:
                raise AlignmentError(s_idx, t_idx, f"surfaces differ: {gt.surface!r} vs {pt.surface!r}")

        g_spans = decode_spans(gs.tags, gold.scheme, DecodeMode.LENIENT)
        p_spans = decode_spans(ps.tags, pred.scheme, DecodeMode.LENIENT)
        if normalize_io:
            g_tags = encode_spans(g_spans, len(gs), Scheme.IO)
            p_tags = encode_spans(p_spans, len(ps), Scheme.IO)
            g_spans = decode_spans(g_tags, Scheme.IO)
            p_spans = decode_spans(p_tags, Scheme.IO)
        else:
            g_tags, p_tags = list(gs.tags), list(ps.tags)

        tokens_total += len(gs)
        tokens_correct += sum(1 for a, b in zip(g_tags, p_tags) if a == b)

        g_set, p_set = set(g_spans), set(p_spans)
        for span in g_spans:
            counts.setdefault(span.etype, [0, 0, 0])[0] += 1
        for span in p_spans:
            counts.setdefault(span.etype, [0, 0, 0])[1] += 1
        for span in g_set & p_set:
            counts[span.etype][2] += 1

    per_type = {
        etype: TypeScore(gold_count=g, pred_count=p, correct_count=c)
        for etype, (g, p, c) in sorted(counts.items())
    }
    overall = TypeScore(
        gold_count=sum(s.gold_count for s in per_type.values()),
        pred_count=sum(s.pred_count for s in per_type.values()),
        correct_count=sum(s.correct_count for s in per_type.values()),
    )
    return EvalReport(
        per_type=per_type,
        overall=overall,
        token_accuracy=_pct(tokens_correct, tokens_total),
        tokens_total=tokens_total,
    )


def format_report(report: EvalReport, style: str = "text") -> str:
    """Render a report; "text" mirrors conlleval's layout, "csv" emits
    `type,gold,pred,correct,precision,recall,f1` rows plus an ALL row."""
    if style == "csv":
        lines = ["type,gold,pred,correct,precision,recall,f1"]
        for etype, s in report.per_type.items():
            lines.append(
                f"{etype},{s.gold_count},{s.pred_count},{s.correct_count},"
                f"{s.precision:.2f},{s.recall:.2f},{s.f1:.2f}"
            )
        if report.per_type:
            s = report.overall
            lines.append(
                f"ALL,{s.gold_count},{s.pred_count},{s.correct_count},"
                f"{s.precision:.2f},{s.recall:.2f},{s.f1:.2f}"
            )
        return "\n".join(lines) + "\n"

    if style != "text":
        raise ValueError(f"unknown report style: {style!r}")

    s = report.overall
    lines = [
        f"processed {report.tokens_total} tokens with {s.gold_count} phrases; "
        f"found: {s.pred_count} phrases; correct: {s.correct_count}.",
        f"accuracy: {report.token_accuracy:6.2f}%; precision: {s.precision:6.2f}%; "
        f"recall: {s.recall:6.2f}%; FB1: {s.f1:6.2f}",
    ]
    for etype, ts in report.per_type.items():
        lines.append(
            f"{etype:>17}: precision: {ts.precision:6.2f}%; "
            f"recall: {ts.recall:6.2f}%; FB1: {ts.f1:6.2f}  {ts.pred_count}"
        )
    return "\n".join(lines) + "\n"
