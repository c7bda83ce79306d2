"""Biaffine arc and label scoring over encoder rows, decoded with MST."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .doc import Doc
from .mst import decode_mst
from .nn import Linear, ParamStore, cross_entropy, log_softmax

NEG_INF = -np.inf


class _TanhMLP:
    def __init__(self, store: ParamStore, name: str, nO: int, nI: int):
        self.linear = Linear(store, name, nO, nI)

    def begin_update(self, X, train=False):
        Z, bp = self.linear.begin_update(X, train)
        H = np.tanh(Z)

        def backprop(dH):
            return bp(dH * (1.0 - H * H))

        return H, backprop


def arc_scores(H: np.ndarray, D: np.ndarray, U: np.ndarray, u: np.ndarray) -> np.ndarray:
    """``S[h, d] = H[h] U D[d] + H[h] . u``."""
    return H @ U @ D.T + (H @ u)[:, None]


def arc_mask(n: int) -> np.ndarray:
    """True where ``h -> d`` is a legal arc in an ``(n+1) x (n+1)`` matrix."""
    mask = ~np.eye(n + 1, dtype=bool)
    mask[:, 0] = False
    return mask


class BiaffineParser:
    """``s_arc(h, d) = head_h^T U dep_d + head_h . u`` and, per label,
    ``s_lab(h, d) = [head_h; 1]^T U_l [dep_d; 1]``; index 0 is a learned root."""

    def __init__(self, store: ParamStore, width: int, labels: Sequence[str],
                 arc_hidden: int = 128, label_hidden: int = 64, name: str = "parser"):
        if not labels:
            raise ValueError("parser: empty dependency label inventory")
        self.store, self.name, self.width = store, name, width
        self.labels = list(labels)
        self.index = {lab: i for i, lab in enumerate(self.labels)}
        self.arc_head = _TanhMLP(store, f"{name}.arc_head", arc_hidden, width)
        self.arc_dep = _TanhMLP(store, f"{name}.arc_dep", arc_hidden, width)
        self.lab_head = _TanhMLP(store, f"{name}.lab_head", label_hidden, width)
        self.lab_dep = _TanhMLP(store, f"{name}.lab_dep", label_hidden, width)
        if f"{name}.root" not in store:
            store.add(f"{name}.root", (width,), init="uniform", scale=0.1)
            store.add(f"{name}.U_arc", (arc_hidden, arc_hidden), init="zeros")
            store.add(f"{name}.u_arc", (arc_hidden,), init="zeros")
            store.add(f"{name}.U_lab", (len(self.labels), label_hidden + 1, label_hidden + 1),
                      init="zeros")

    def begin_update(self, X: np.ndarray, train: bool = False):
        """Scores for one sentence ``X`` (n x width).

        Returns ``(arc, lab), backprop`` with ``arc`` of shape (n+1, n+1)
        (masked entries -inf) and ``lab`` of shape (n+1, n+1, L).
        ``backprop(d_arc, d_lab)`` returns the gradient for ``X``.
        """
        st, nm = self.store, self.name
        n = X.shape[0]
        Xr = np.vstack([st[f"{nm}.root"][None, :].astype(X.dtype), X])
        Ha, bp_ah = self.arc_head.begin_update(Xr, train)
        Da, bp_ad = self.arc_dep.begin_update(Xr, train)
        Hl, bp_lh = self.lab_head.begin_update(Xr, train)
        Dl, bp_ld = self.lab_dep.begin_update(Xr, train)
        U, u, UL = st[f"{nm}.U_arc"], st[f"{nm}.u_arc"], st[f"{nm}.U_lab"]
        HaU = Ha @ U
        arc = arc_scores(Ha, Da, U, u)
        ones = np.ones((n + 1, 1), dtype=X.dtype)
        Hl1 = np.hstack([Hl, ones])
        Dl1 = np.hstack([Dl, ones])
        HlU = np.einsum("hi,lij->lhj", Hl1, UL)
        lab = np.einsum("lhj,dj->hdl", HlU, Dl1)
        arc = np.where(arc_mask(n), arc, NEG_INF)

        def backprop(d_arc: np.ndarray, d_lab: Optional[np.ndarray]) -> np.ndarray:
            d_arc = np.where(arc_mask(n), d_arc, 0.0)
            row = d_arc.sum(axis=1)
            st.inc_grad(f"{nm}.U_arc", Ha.T @ d_arc @ Da)
            st.inc_grad(f"{nm}.u_arc", Ha.T @ row)
            dHa = d_arc @ Da @ U.T + np.outer(row, u)
            dDa = d_arc.T @ HaU
            dXr = bp_ah(dHa) + bp_ad(dDa)
            if d_lab is not None:
                st.inc_grad(f"{nm}.U_lab", np.einsum("hdl,hi,dj->lij", d_lab, Hl1, Dl1,
                                                     optimize=True))
                dHl1 = np.einsum("hdl,lij,dj->hi", d_lab, UL, Dl1, optimize=True)
                dDl1 = np.einsum("hdl,lhj->dj", d_lab, HlU, optimize=True)
                dXr = dXr + bp_lh(dHl1[:, :-1]) + bp_ld(dDl1[:, :-1])
            st.inc_grad(f"{nm}.root", dXr[0])
            return dXr[1:]

        return (arc, lab), backprop

    def score_arcs_labels(self, X: np.ndarray):
        return self.begin_update(X, train=False)[0]

    def loss(self, X: np.ndarray, heads: Sequence[Optional[int]],
             deprels: Sequence[Optional[str]], normalizer: float = 1.0, train: bool = True):
        """Head cross-entropy per dependent plus label cross-entropy at gold arcs."""
        n = X.shape[0]
        (arc, lab), bp = self.begin_update(X, train)
        deps = [d for d in range(n) if heads[d] is not None]
        if not deps:
            return 0.0, None
        d_idx = np.array(deps) + 1
        h_idx = np.array([heads[d] for d in deps])
        Z = arc[:, d_idx].T
        loss, dZ = cross_entropy(Z, h_idx, mask=np.isfinite(Z), normalizer=normalizer)
        d_arc = np.zeros_like(arc)
        d_arc[:, d_idx] = dZ.T
        d_lab = np.zeros_like(lab)
        lab_rows = [k for k, d in enumerate(deps) if deprels[d] in self.index]
        if lab_rows:
            hk, dk = h_idx[lab_rows], d_idx[lab_rows]
            gold = np.array([self.index[deprels[deps[k]]] for k in lab_rows])
            l_loss, dL = cross_entropy(lab[hk, dk], gold, normalizer=normalizer)
            loss += l_loss
            d_lab[hk, dk] = dL
        return loss, lambda: bp(d_arc, d_lab)

    def predict(self, X: np.ndarray) -> Tuple[List[int], List[str]]:
        (arc, lab), _ = self.begin_update(X, train=False)
        heads = decode_mst(arc)
        rels = [self.labels[int(lab[h, d].argmax())] for d, h in enumerate(heads, start=1)]
        return heads, rels

    def parse_doc(self, doc: Doc, X: np.ndarray) -> None:
        for start, end in doc.sent_bounds():
            heads, rels = self.predict(X[start:end])
            for tok, h, r in zip(doc.tokens[start:end], heads, rels):
                tok.head, tok.deprel = h, r
