"""Edit-tree lemmatizer with top-k candidates, a learned lemma dictionary and
sentence-initial true-casing."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .doc import Doc, Token
from .edit_tree import TreeTable, apply_edit_tree, build_edit_tree
from .nn import ParamStore
from .tagger import ClassifierHead, ConfigError


@dataclass(frozen=True)
class CasingPolicy:
    """Lowercases capitalized sentence-initial tokens unless their tag is exempt."""

    exempt: FrozenSet[str] = frozenset({"PROPN"})
    enabled: bool = True

    @staticmethod
    def is_capitalized(form: str) -> bool:
        rest = form[1:]
        return bool(form) and form[0].isupper() and not (rest and rest.isupper())

    def effective_form(self, form: str, sent_initial: bool, upos: Optional[str]) -> str:
        if (self.enabled and sent_initial and upos not in self.exempt
                and self.is_capitalized(form)):
            return form.lower()
        return form


def _sent_initial(doc: Doc, i: int) -> bool:
    return i == 0 or bool(doc.tokens[i].is_sent_start)


def effective_forms(doc: Doc, policy: CasingPolicy) -> List[str]:
    return [policy.effective_form(tok.form, _sent_initial(doc, i), tok.upos)
            for i, tok in enumerate(doc.tokens)]


def _dict_tag(tok: Token, key: str) -> Optional[str]:
    if key == "feats":
        return None if tok.upos is None else f"{tok.upos}|{tok.feats or '_'}"
    return tok.upos


class LemmaDict:
    """``(form, tag) -> lemma`` memory of frequent, unambiguous training triplets."""

    def __init__(self, entries: Optional[Dict[Tuple[str, str], str]] = None, key: str = "upos"):
        if key not in ("upos", "feats"):
            raise ConfigError(f"unknown dictionary key {key!r}")
        self.entries = dict(entries or {})
        self.key = key

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, form: str, tok_or_tag) -> Optional[str]:
        tag = tok_or_tag if isinstance(tok_or_tag, str) or tok_or_tag is None \
            else _dict_tag(tok_or_tag, self.key)
        return self.entries.get((form, tag))

    @classmethod
    def learn(cls, docs: Sequence[Doc], policy: CasingPolicy = CasingPolicy(),
              min_freq: int = 2, min_share: float = 0.9, key: str = "upos") -> "LemmaDict":
        counts: Dict[Tuple[str, str], Counter] = defaultdict(Counter)
        for doc in docs:
            for tok, form in zip(doc.tokens, effective_forms(doc, policy)):
                tag = _dict_tag(tok, key)
                if tok.lemma is None or tag is None:
                    continue
                counts[(form, tag)][tok.lemma] += 1
        entries = {}
        for k, lemmas in counts.items():
            total = sum(lemmas.values())
            (best, n), *rest = sorted(lemmas.items(), key=lambda kv: (-kv[1], kv[0]))
            if n >= min_freq and n / total >= min_share:
                entries[k] = best
        return cls(entries, key)

    def to_tsv(self) -> str:
        lines = [f"{f}\t{t}\t{l}" for (f, t), l in sorted(self.entries.items())]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_tsv(cls, text: str, key: str = "upos") -> "LemmaDict":
        entries = {}
        for line in text.splitlines():
            if line:
                f, t, l = line.split("\t")
                entries[(f, t)] = l
        return cls(entries, key)


def collect_tree_labels(docs: Sequence[Doc], policy: CasingPolicy = CasingPolicy(),
                        table: Optional[TreeTable] = None):
    """Tree inventory over gold ``(effective form, lemma)`` pairs, and per-doc
    gold label ids (``-1`` where the lemma is unknown)."""
    table = table if table is not None else TreeTable()
    gold = []
    for doc in docs:
        ids = []
        for tok, form in zip(doc.tokens, effective_forms(doc, policy)):
            ids.append(-1 if tok.lemma is None else table.add(build_edit_tree(form, tok.lemma)))
        gold.append(np.array(ids, dtype=np.int64))
    return table, gold


class Lemmatizer:
    def __init__(self, store: ParamStore, width: int, table: TreeTable,
                 lemma_dict: Optional[LemmaDict] = None,
                 policy: CasingPolicy = CasingPolicy(), topk: int = 3,
                 use_dict: bool = True):
        if not len(table):
            raise ConfigError("lemmatizer: empty edit-tree inventory")
        self.table = table
        self.lemma_dict = lemma_dict if lemma_dict is not None else LemmaDict()
        self.policy = policy
        self.topk = topk
        self.use_dict = use_dict
        self.head = ClassifierHead(store, "lemmatizer", [str(i) for i in range(len(table))], width)
        self.classifier_calls = 0

    def gold_labels(self, doc: Doc) -> List[Optional[str]]:
        out = []
        for tok, form in zip(doc.tokens, effective_forms(doc, self.policy)):
            label = None
            if tok.lemma is not None:
                tree_id = self.table.get(build_edit_tree(form, tok.lemma))
                label = None if tree_id is None else str(tree_id)
            out.append(label)
        return out

    def candidates(self, P: np.ndarray, topk: int) -> np.ndarray:
        # stable: equal probabilities keep lower tree ids first
        return np.argsort(-P, axis=1, kind="stable")[:, :topk]

    def lemmatize_doc(self, doc: Doc, X: np.ndarray, topk: Optional[int] = None) -> int:
        """Write lemmas to ``doc``; returns the number of identity fallbacks."""
        topk = self.topk if topk is None else topk
        forms = effective_forms(doc, self.policy)
        pending = []
        for i, (tok, form) in enumerate(zip(doc.tokens, forms)):
            hit = self.lemma_dict.lookup(form, tok) if self.use_dict else None
            if hit is not None:
                tok.lemma = hit
            else:
                pending.append(i)
        fallbacks = 0
        if pending:
            self.classifier_calls += len(pending)
            P = self.head.probabilities(X[pending])
            for row, i in enumerate(pending):
                lemma = None
                for label in self.candidates(P[row:row + 1], topk)[0]:
                    lemma = apply_edit_tree(self.table.tree(int(label)), forms[i])
                    if lemma is not None:
                        break
                if lemma is None:
                    lemma = forms[i]
                    fallbacks += 1
                doc.tokens[i].lemma = lemma
        return fallbacks
