"""Transition-based named entity recognition with beam search.

The transition system uses BILOU moves: ``B``egin, ``I``n, ``L``ast,
``U``nit and ``O``ut. Per-step scores come from a feature head over the
current token vector and an embedding of the currently open entity label.
Because those features depend on nothing else, hypotheses sharing the
same open label at the same position have identical futures; the beam
keeps only the best of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .doc import Doc, Span
from .nn import Linear, Maxout, ParamStore, cross_entropy, log_softmax


class NerAction(NamedTuple):
    move: str
    label: Optional[str] = None

    def __str__(self) -> str:
        return self.move if self.label is None else f"{self.move}-{self.label}"


OUT = NerAction("O")


class TransitionError(ValueError):
    pass


@dataclass(frozen=True)
class TransitionState:
    n: int
    position: int = 0
    open: Optional[Tuple[str, int]] = None
    spans: Tuple[Span, ...] = ()

    @property
    def is_final(self) -> bool:
        return self.position >= self.n

    @property
    def is_dead(self) -> bool:
        return self.is_final and self.open is not None

    def apply(self, action: NerAction) -> "TransitionState":
        if self.is_final:
            raise TransitionError("no action is valid in a final state")
        if self.open is None:
            legal = action.move in ("O", "B", "U")
        else:
            legal = action.move in ("I", "L") and action.label == self.open[0]
        if not legal:
            raise TransitionError(f"{action} is not valid in {self}")
        i = self.position
        if action.move == "O":
            return TransitionState(self.n, i + 1, None, self.spans)
        if action.move == "U":
            return TransitionState(self.n, i + 1, None, self.spans + (Span(i, i + 1, action.label),))
        if action.move == "B":
            return TransitionState(self.n, i + 1, (action.label, i), self.spans)
        if action.move == "I":
            return TransitionState(self.n, i + 1, self.open, self.spans)
        label, start = self.open
        return TransitionState(self.n, i + 1, None, self.spans + (Span(start, i + 1, label),))


def valid_actions(state: TransitionState, labels: Sequence[str]) -> set:
    if state.is_final:
        return set()
    if state.open is not None:
        lab = state.open[0]
        return {NerAction("I", lab), NerAction("L", lab)}
    return {OUT} | {NerAction(m, l) for l in labels for m in ("B", "U")}


def oracle_actions(n: int, spans: Sequence[Span]) -> List[NerAction]:
    spans = sorted(spans, key=lambda s: s.start)
    actions = [OUT] * n
    prev_end = 0
    for s in spans:
        if s.start < prev_end or s.end > n:
            raise TransitionError(f"invalid or overlapping gold span {s}")
        prev_end = s.end
        if s.end - s.start == 1:
            actions[s.start] = NerAction("U", s.label)
        else:
            actions[s.start] = NerAction("B", s.label)
            for i in range(s.start + 1, s.end - 1):
                actions[i] = NerAction("I", s.label)
            actions[s.end - 1] = NerAction("L", s.label)
    return actions


def execute(n: int, actions: Sequence[NerAction]) -> List[Span]:
    state = TransitionState(n)
    for a in actions:
        state = state.apply(a)
    if not state.is_final or state.is_dead:
        raise TransitionError("action sequence does not reach a live final state")
    return list(state.spans)


@dataclass(order=True)
class BeamItem:
    sort_key: Tuple = field(init=False, repr=False)
    logprob: float
    history: Tuple[int, ...]
    state: TransitionState = field(compare=False)

    def __post_init__(self):
        self.sort_key = (-self.logprob, self.history)


class NerModel:
    def __init__(self, store: ParamStore, width: int, labels: Sequence[str],
                 hidden: int = 64, label_width: int = 16, name: str = "ner"):
        if not labels:
            raise ValueError("ner: empty entity label inventory")
        self.store, self.name, self.width = store, name, width
        self.labels = list(labels)
        L = len(self.labels)
        self.actions = [OUT] + [NerAction(m, l) for m in "BILU" for l in self.labels]
        self.action_index = {a: i for i, a in enumerate(self.actions)}
        # state 0: nothing open; state 1 + j: label j open
        self.valid = np.zeros((L + 1, len(self.actions)), dtype=bool)
        for a, act in enumerate(self.actions):
            if act.move in "OBU":
                self.valid[0, a] = True
            else:
                self.valid[1 + self.labels.index(act.label), a] = True
        if f"{name}.state_embed.E" not in store:
            store.add(f"{name}.state_embed.E", (L + 1, label_width), init="uniform", scale=0.1)
        self.hidden = Maxout(store, f"{name}.hidden", hidden, width + label_width, pieces=2)
        self.output = Linear(store, f"{name}.output", len(self.actions), hidden)

    def _state_id(self, state: TransitionState) -> int:
        return 0 if state.open is None else 1 + self.labels.index(state.open[0])

    def _logits(self, X: np.ndarray, rows: np.ndarray, states: np.ndarray, train=False):
        E = self.store[f"{self.name}.state_embed.E"]
        F = np.hstack([X[rows], E[states].astype(X.dtype)])
        H, bp_h = self.hidden.begin_update(F, train)
        Z, bp_o = self.output.begin_update(H, train)

        def backprop(dZ):
            dF = bp_h(bp_o(dZ))
            self.store.inc_grad(f"{self.name}.state_embed.E",
                                _scatter_rows(dF[:, self.width:], states, len(E)))
            dX = np.zeros_like(X)
            np.add.at(dX, rows, dF[:, :self.width])
            return dX

        return Z, backprop

    def step_logprobs(self, X: np.ndarray) -> np.ndarray:
        """``(n, L+1, A)`` log-probabilities over valid actions for every
        position and open-label state."""
        n, S = X.shape[0], len(self.labels) + 1
        rows = np.repeat(np.arange(n), S)
        states = np.tile(np.arange(S), n)
        Z, _ = self._logits(X, rows, states)
        Z = Z.reshape(n, S, -1)
        return log_softmax(Z, np.broadcast_to(self.valid, Z.shape))

    def loss(self, X: np.ndarray, spans: Sequence[Span], normalizer: float = 1.0,
             train: bool = True):
        n = X.shape[0]
        if n == 0:
            return 0.0, None
        spans = [s for s in spans if s.label in self.labels]
        actions = oracle_actions(n, spans)
        state = TransitionState(n)
        states = []
        for a in actions:
            states.append(self._state_id(state))
            state = state.apply(a)
        states = np.array(states)
        Z, bp = self._logits(X, np.arange(n), states, train)
        gold = np.array([self.action_index[a] for a in actions])
        loss, dZ = cross_entropy(Z, gold, mask=self.valid[states], normalizer=normalizer)
        return loss, lambda: bp(dZ)

    def _expand(self, item: BeamItem, table: np.ndarray) -> List[BeamItem]:
        state = item.state
        s = self._state_id(state)
        out = []
        for a in np.nonzero(self.valid[s])[0]:
            new = state.apply(self.actions[a])
            if new.is_dead:
                continue
            out.append(BeamItem(item.logprob + float(table[state.position, s, a]),
                                item.history + (int(a),), new))
        return out

    def beam_search(self, X: np.ndarray, beam_width: int = 8,
                    table: Optional[np.ndarray] = None) -> List[BeamItem]:
        """Final items of a beam search, best first."""
        if beam_width < 1:
            raise ValueError("beam width must be >= 1")
        n = X.shape[0]
        if table is None:
            table = self.step_logprobs(X)
        beam = [BeamItem(0.0, (), TransitionState(n))]
        for _ in range(n):
            best_per_state = {}
            for item in beam:
                for cand in self._expand(item, table):
                    key = self._state_id(cand.state)
                    cur = best_per_state.get(key)
                    if cur is None or cand < cur:
                        best_per_state[key] = cand
            beam = sorted(best_per_state.values())[:beam_width]
        return beam

    def greedy(self, X: np.ndarray, table: Optional[np.ndarray] = None) -> BeamItem:
        n = X.shape[0]
        if table is None:
            table = self.step_logprobs(X)
        item = BeamItem(0.0, (), TransitionState(n))
        for _ in range(n):
            item = min(self._expand(item, table))
        return item

    def beam_decode(self, doc: Doc, X: np.ndarray, beam_width: int = 8) -> List[Span]:
        spans: List[Span] = []
        if len(doc):
            spans = list(self.beam_search(X, beam_width)[0].state.spans)
        doc.set_ents(spans)
        return spans


def _scatter_rows(dY: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n, dY.shape[1]), dtype=dY.dtype)
    np.add.at(out, idx, dY)
    return out
