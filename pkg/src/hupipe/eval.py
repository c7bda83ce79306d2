"""Accuracy, attachment and span metrics over aligned gold/predicted docs."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .doc import Doc


class AlignmentError(ValueError):
    pass


def prf(correct: int, n_pred: int, n_gold: int) -> Tuple[float, float, float]:
    """Precision, recall and F1. Two empty sets agree perfectly."""
    if n_pred == 0 and n_gold == 0:
        return 1.0, 1.0, 1.0
    p = correct / n_pred if n_pred else 0.0
    r = correct / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


@dataclass
class EvalReport:
    """Scores in [0, 1]; ``None`` marks a layer the gold data does not annotate."""

    sent_p: Optional[float] = None
    sent_r: Optional[float] = None
    sent_f: Optional[float] = None
    upos: Optional[float] = None
    morph: Optional[float] = None
    lemma: Optional[float] = None
    uas: Optional[float] = None
    las: Optional[float] = None
    ner_p: Optional[float] = None
    ner_r: Optional[float] = None
    ner_f: Optional[float] = None
    tokens: int = 0
    sentences: int = 0

    METRICS = ("sent_p", "sent_r", "sent_f", "upos", "morph", "lemma", "uas", "las",
               "ner_p", "ner_r", "ner_f")

    def as_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)

    def table(self) -> str:
        lines = []
        for name in self.METRICS:
            value = getattr(self, name)
            lines.append(f"{name:<8} {'n/a' if value is None else f'{100 * value:6.2f}'}")
        lines.append(f"{'tokens':<8} {self.tokens}")
        lines.append(f"{'sents':<8} {self.sentences}")
        return "\n".join(lines)

    @classmethod
    def maximum(cls, reports: Sequence["EvalReport"]) -> "EvalReport":
        """Per-metric maximum over runs."""
        out = cls(tokens=reports[0].tokens, sentences=reports[0].sentences)
        for name in cls.METRICS:
            values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
            setattr(out, name, max(values) if values else None)
        return out


def _ratio(hits: int, total: int) -> Optional[float]:
    return hits / total if total else None


def _abs_heads(doc: Doc) -> List[Optional[int]]:
    """Heads as document token indices; -1 is the root."""
    out: List[Optional[int]] = [None] * len(doc)
    for start, end in doc.sent_bounds():
        for i in range(start, end):
            h = doc.tokens[i].head
            if h is not None:
                out[i] = -1 if h == 0 else start + h - 1
    return out


def _starts(doc: Doc) -> Set[int]:
    return {start for start, _ in doc.sent_bounds() if start > 0}


def compute_metrics(gold: Sequence[Doc], pred: Sequence[Doc]) -> EvalReport:
    gold, pred = list(gold), list(pred)
    if len(gold) != len(pred):
        raise AlignmentError(f"{len(gold)} gold docs vs {len(pred)} predicted")
    c: Dict[str, int] = dict.fromkeys(
        ["upos", "upos_n", "morph", "morph_n", "lemma", "lemma_n", "uas", "las", "head_n",
         "sent", "sent_pred", "sent_gold", "ner", "ner_pred", "ner_gold"], 0)
    tokens = sentences = 0
    has_ents = False
    for k, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise AlignmentError(f"doc {k}: {len(g)} gold tokens vs {len(p)} predicted")
        for i, (gt, pt) in enumerate(zip(g.tokens, p.tokens)):
            if gt.form != pt.form:
                raise AlignmentError(f"doc {k} token {i}: {gt.form!r} vs {pt.form!r}")
        tokens += len(g)
        sentences += len(g.sent_bounds())
        for gt, pt in zip(g.tokens, p.tokens):
            if gt.upos is not None:
                c["upos_n"] += 1
                c["upos"] += pt.upos == gt.upos
            if gt.feats is not None:
                c["morph_n"] += 1
                c["morph"] += pt.feats is not None and str(pt.feats) == str(gt.feats)
            if gt.lemma is not None:
                c["lemma_n"] += 1
                c["lemma"] += pt.lemma == gt.lemma
        gh, ph = _abs_heads(g), _abs_heads(p)
        for i, (gt, pt) in enumerate(zip(g.tokens, p.tokens)):
            if gh[i] is None:
                continue
            c["head_n"] += 1
            if ph[i] == gh[i]:
                c["uas"] += 1
                c["las"] += pt.deprel == gt.deprel
        gs, ps = _starts(g), _starts(p)
        c["sent"] += len(gs & ps)
        c["sent_gold"] += len(gs)
        c["sent_pred"] += len(ps)
        if g.ents is not None:
            has_ents = True
            ge = {(s.start, s.end, s.label) for s in g.ents}
            pe = {(s.start, s.end, s.label) for s in p.ents or ()}
            c["ner"] += len(ge & pe)
            c["ner_gold"] += len(ge)
            c["ner_pred"] += len(pe)
    report = EvalReport(tokens=tokens, sentences=sentences)
    report.upos = _ratio(c["upos"], c["upos_n"])
    report.morph = _ratio(c["morph"], c["morph_n"])
    report.lemma = _ratio(c["lemma"], c["lemma_n"])
    report.uas = _ratio(c["uas"], c["head_n"])
    report.las = _ratio(c["las"], c["head_n"])
    if tokens:
        report.sent_p, report.sent_r, report.sent_f = prf(c["sent"], c["sent_pred"],
                                                          c["sent_gold"])
    if has_ents:
        report.ner_p, report.ner_r, report.ner_f = prf(c["ner"], c["ner_pred"], c["ner_gold"])
    return report
