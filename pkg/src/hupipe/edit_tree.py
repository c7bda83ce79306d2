"""Edit trees: recursive match/substitution scripts from wordforms to lemmas."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from difflib import SequenceMatcher
from typing import Dict, List, Optional, Sequence, Tuple, Union


@dataclass(frozen=True)
class Subst:
    orig: str
    subst: str

    def __str__(self) -> str:
        return f"subst({self.orig},{self.subst})"


@dataclass(frozen=True)
class Match:
    prefix_len: int
    suffix_len: int
    left: "EditTree"
    right: "EditTree"

    def __str__(self) -> str:
        return f"match({self.prefix_len},{self.suffix_len})[{self.left}, {self.right}]"


EditTree = Union[Match, Subst]


def longest_common_substring(a: str, b: str) -> Tuple[int, int, int]:
    """``(start_a, start_b, length)``; ties go to the smallest start in ``a``,
    then the smallest start in ``b``."""
    m = SequenceMatcher(None, a, b, autojunk=False).find_longest_match(0, len(a), 0, len(b))
    return m.a, m.b, m.size


def build_edit_tree(form: str, lemma: str) -> EditTree:
    i, j, size = longest_common_substring(form, lemma)
    if size == 0:
        return Subst(form, lemma)
    return Match(
        i, len(form) - i - size,
        build_edit_tree(form[:i], lemma[:j]),
        build_edit_tree(form[i + size:], lemma[j + size:]),
    )


def apply_edit_tree(tree: EditTree, form: str) -> Optional[str]:
    """Lemma produced by ``tree`` for ``form``, or ``None`` if inapplicable."""
    if isinstance(tree, Subst):
        return tree.subst if form == tree.orig else None
    n = len(form)
    if n < tree.prefix_len + tree.suffix_len:
        return None
    left = apply_edit_tree(tree.left, form[:tree.prefix_len])
    if left is None:
        return None
    right = apply_edit_tree(tree.right, form[n - tree.suffix_len:])
    if right is None:
        return None
    return left + form[tree.prefix_len:n - tree.suffix_len] + right


class TreeTable:
    """Interned edit-tree nodes plus the label inventory of root trees.

    Every node, children included, gets an id the first time it is seen,
    so children always precede their parents.
    """

    def __init__(self):
        self.nodes: List[EditTree] = []
        self._node_ids: Dict[EditTree, int] = {}
        self.labels: List[int] = []
        self._label_ids: Dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.labels)

    def _intern(self, tree: EditTree) -> int:
        node_id = self._node_ids.get(tree)
        if node_id is None:
            if isinstance(tree, Match):
                self._intern(tree.left)
                self._intern(tree.right)
            node_id = self._node_ids[tree] = len(self.nodes)
            self.nodes.append(tree)
        return node_id

    def add(self, tree: EditTree) -> int:
        """Label id of ``tree``, registering it if new."""
        node_id = self._intern(tree)
        label = self._label_ids.get(node_id)
        if label is None:
            label = self._label_ids[node_id] = len(self.labels)
            self.labels.append(node_id)
        return label

    def get(self, tree: EditTree) -> Optional[int]:
        node_id = self._node_ids.get(tree)
        return None if node_id is None else self._label_ids.get(node_id)

    def tree(self, label: int) -> EditTree:
        return self.nodes[self.labels[label]]

    def to_bytes(self) -> bytes:
        out = [b"ETREE1", struct.pack("<I", len(self.nodes))]
        for node in self.nodes:
            if isinstance(node, Match):
                out.append(struct.pack("<BIIII", 0, node.prefix_len, node.suffix_len,
                                       self._node_ids[node.left], self._node_ids[node.right]))
            else:
                o, s = node.orig.encode("utf-8"), node.subst.encode("utf-8")
                out.append(struct.pack("<BI", 1, len(o)) + o + struct.pack("<I", len(s)) + s)
        out.append(struct.pack("<I", len(self.labels)))
        out.append(struct.pack(f"<{len(self.labels)}I", *self.labels))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TreeTable":
        if not data.startswith(b"ETREE1"):
            raise ValueError("not an edit-tree table")
        table = cls()
        pos = 6
        (n_nodes,) = struct.unpack_from("<I", data, pos)
        pos += 4
        for _ in range(n_nodes):
            marker = data[pos]
            if marker == 0:
                _, pre, suf, left, right = struct.unpack_from("<BIIII", data, pos)
                pos += 17
                node = Match(pre, suf, table.nodes[left], table.nodes[right])
            else:
                (n,) = struct.unpack_from("<I", data, pos + 1)
                pos += 5
                orig = data[pos:pos + n].decode("utf-8")
                pos += n
                (n,) = struct.unpack_from("<I", data, pos)
                pos += 4
                node = Subst(orig, data[pos:pos + n].decode("utf-8"))
                pos += n
            table._node_ids[node] = len(table.nodes)
            table.nodes.append(node)
        (n_labels,) = struct.unpack_from("<I", data, pos)
        pos += 4
        for node_id in struct.unpack_from(f"<{n_labels}I", data, pos):
            table._label_ids[node_id] = len(table.labels)
            table.labels.append(node_id)
        return table
