"""Maximum spanning arborescence decoding (Chu-Liu/Edmonds).

Arc weights are compared lexicographically as ``(-root_arc, score, tiebreak)``
triples that add componentwise. Maximizing the first component forces a
single child of the root; the last one encodes a preference for the
lexicographically smallest head vector among equal-score trees. Both
constraints are therefore exact rather than heuristic, and a single
Chu-Liu/Edmonds run is enough.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

Weight = Tuple[int, float, int]


def _sub(a: Weight, b: Weight) -> Weight:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _find_cycle(heads: Dict[int, int]):
    color: Dict[int, int] = {}
    for start in heads:
        path = []
        node = start
        while node in heads and node not in color:
            color[node] = 1
            path.append(node)
            node = heads[node]
        if node in heads and color.get(node) == 1 and node in path:
            return path[path.index(node):]
        for p in path:
            color[p] = 2
    return None


def _chu_liu_edmonds(nodes: List[int], arcs: Dict[Tuple[int, int], Weight],
                     root: int, next_id: int) -> Dict[int, int]:
    incoming: Dict[int, List[Tuple[int, Weight]]] = {}
    for (h, d), w in arcs.items():
        incoming.setdefault(d, []).append((h, w))
    best: Dict[int, int] = {}
    best_w: Dict[int, Weight] = {}
    for d in nodes:
        if d == root:
            continue
        cands = incoming.get(d)
        if not cands:
            raise ValueError(f"node {d} has no incoming arc")
        h, w = max(cands, key=lambda hw: (hw[1], -hw[0]))
        best[d], best_w[d] = h, w
    cycle = _find_cycle(best)
    if cycle is None:
        return best
    in_cycle = set(cycle)
    c = next_id
    new_arcs: Dict[Tuple[int, int], Weight] = {}
    origin: Dict[Tuple[int, int], Tuple[int, int]] = {}
    for (h, d), w in arcs.items():
        if h in in_cycle and d in in_cycle:
            continue
        if d in in_cycle:
            key, w = (h, c), _sub(w, best_w[d])
        elif h in in_cycle:
            key = (c, d)
        else:
            key = (h, d)
        if key not in new_arcs or w > new_arcs[key]:
            new_arcs[key] = w
            origin[key] = (h, d)
    new_nodes = [n for n in nodes if n not in in_cycle] + [c]
    sub = _chu_liu_edmonds(new_nodes, new_arcs, root, next_id + 1)
    heads: Dict[int, int] = {}
    for d, h in sub.items():
        oh, od = origin[(h, d)]
        heads[od] = oh
    for d in cycle:
        heads.setdefault(d, best[d])
    return heads


def decode_mst(scores: np.ndarray) -> List[int]:
    """Heads (1-based dependents, 0 = root) of the best single-root tree.

    ``scores[h, d]`` scores the arc ``h -> d``; the diagonal, column 0 and
    any ``-inf`` entry are ignored.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0] - 1
    if n <= 0:
        return []
    base = n + 1
    arcs: Dict[Tuple[int, int], Weight] = {}
    for d in range(1, n + 1):
        place = base ** (n - d)
        for h in range(n + 1):
            s = scores[h, d]
            if h == d or not np.isfinite(s):
                continue
            arcs[(h, d)] = (-1 if h == 0 else 0, float(s), -h * place)
    heads = _chu_liu_edmonds(list(range(n + 1)), arcs, 0, n + 1)
    return [heads[d] for d in range(1, n + 1)]


def tree_score(scores: np.ndarray, heads: Sequence[int]) -> float:
    return float(sum(scores[h, d] for d, h in enumerate(heads, start=1)))


def is_single_root_tree(heads: Sequence[int]) -> bool:
    n = len(heads)
    if n == 0:
        return True
    if sum(1 for h in heads if h == 0) != 1:
        return False
    for d, h in enumerate(heads, start=1):
        if not 0 <= h <= n or h == d:
            return False
    for d in range(1, n + 1):
        seen = set()
        node = d
        while node != 0:
            if node in seen:
                return False
            seen.add(node)
            node = heads[node - 1]
    return True
