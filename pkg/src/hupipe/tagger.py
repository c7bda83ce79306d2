"""UPOS, FEATS and sentence-start softmax heads over encoder rows."""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .doc import Doc, MorphFeats
from .nn import Linear, ParamStore, cross_entropy, softmax

NO_FEATS = "_"
SENT_LABELS = ("not-start", "start")


class ConfigError(ValueError):
    pass


class ClassifierHead:
    """Linear layer + softmax over a frozen label inventory."""

    def __init__(self, store: ParamStore, name: str, labels: Sequence[str], width: int):
        if not labels:
            raise ConfigError(f"{name}: empty label inventory")
        self.name = name
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        self.linear = Linear(store, name, len(self.labels), width)

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        return softmax(self.linear.predict(X))

    def predict(self, X: np.ndarray) -> Tuple[List[str], np.ndarray]:
        P = self.probabilities(X)
        best = P.argmax(axis=1)
        return [self.labels[i] for i in best], P

    def loss(self, X: np.ndarray, gold: Sequence[Optional[str]], normalizer: float = 1.0,
             train: bool = True):
        """Cross-entropy over rows whose gold label is known to the inventory."""
        rows = [i for i, g in enumerate(gold) if g is not None and g in self.index]
        if not rows:
            return 0.0, None
        rows = np.array(rows)
        Z, bp = self.linear.begin_update(X[rows], train)
        target = np.array([self.index[gold[i]] for i in rows])
        loss, dZ = cross_entropy(Z, target, normalizer=normalizer)

        def backprop() -> np.ndarray:
            dX = np.zeros_like(X)
            dX[rows] = bp(dZ)
            return dX

        return loss, backprop


def feats_label(feats: Optional[MorphFeats]) -> Optional[str]:
    return None if feats is None else str(feats)


class Tagger:
    def __init__(self, store: ParamStore, width: int, upos: Sequence[str],
                 feats: Optional[Sequence[str]] = None):
        self.upos = ClassifierHead(store, "tagger", upos, width)
        self.morph = ClassifierHead(store, "morph", feats, width) if feats else None

    def predict_tags(self, doc: Doc, X: np.ndarray):
        """Write argmax UPOS (and FEATS) to ``doc``; return the probability rows."""
        tags, P = self.upos.predict(X)
        for tok, tag in zip(doc.tokens, tags):
            tok.upos = tag
        Pf = None
        if self.morph is not None:
            feats, Pf = self.morph.predict(X)
            for tok, f in zip(doc.tokens, feats):
                tok.feats = MorphFeats.parse(f)
        return P, Pf


class SentenceSplitter:
    def __init__(self, store: ParamStore, width: int):
        self.head = ClassifierHead(store, "senter", SENT_LABELS, width)

    def predict_sentence_starts(self, doc: Doc, X: np.ndarray) -> List[bool]:
        if not len(doc):
            return []
        labels, _ = self.head.predict(X)
        starts = [lab == "start" for lab in labels]
        starts[0] = True
        for tok, s in zip(doc.tokens, starts):
            tok.is_sent_start = s
        return starts

    @staticmethod
    def gold(doc: Doc) -> List[Optional[str]]:
        out = []
        for i, tok in enumerate(doc.tokens):
            if i == 0:
                out.append("start")
            else:
                out.append("start" if tok.is_sent_start else "not-start")
        return out


def collect_inventories(docs: Sequence[Doc]) -> Dict[str, List[str]]:
    upos, feats, deprels, ents = set(), set(), set(), set()
    for doc in docs:
        for tok in doc.tokens:
            if tok.upos is not None:
                upos.add(tok.upos)
            if tok.feats is not None:
                feats.add(str(tok.feats))
            if tok.deprel is not None:
                deprels.add(tok.deprel)
        for span in doc.ents or ():
            ents.add(span.label)
    return {"upos": sorted(upos), "feats": sorted(feats),
            "deprel": sorted(deprels), "ents": sorted(ents)}
