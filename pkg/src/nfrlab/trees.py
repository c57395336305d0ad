"""Ordered trees indexing the normal form hierarchy.

A tree is stored flat.  Elements are numbered in creation order with the
root as element 0.  Each node (internal element) has an ordered tuple of
children and a label in ``1..J`` giving the order in which it was created;
extending a leaf turns it into the node with the next label.

The same class covers the system variant, where every element carries a
component index and every node a term index, and the arity of a node is the
arity of the chosen term.  Scalar trees use component 0 and term 0
throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import prod
from typing import Iterator, Sequence

import numpy as np

from .lattice import TruncatedLattice

__all__ = [
    "TreeCountError",
    "Tree",
    "IndexAssignment",
    "tree_count",
    "root_tree",
    "extend_at_leaf",
    "enumerate_trees",
    "enumerate_system_trees",
    "enumerate_assignments",
    "assignment_array",
    "expand_node",
    "element_radii",
    "DEFAULT_CAP",
    "dump_trees",
]

DEFAULT_CAP = 10 ** 6


class TreeCountError(RuntimeError):
    """Raised when an enumeration would exceed the configured cap."""

    def __init__(self, count, cap):
        super().__init__(f"enumeration needs {count} trees, cap is {cap}")
        self.count = count
        self.cap = cap


@dataclass(frozen=True)
class Tree:
    children: tuple          # per element: tuple of child elements, or None for a leaf
    parent: tuple            # per element: parent element, -1 at the root
    slot: tuple              # per element: position among the parent's children, -1 at the root
    nodes: tuple             # element of the node with label k+1
    iota: tuple              # per element: component index
    kappa: tuple             # per node label: term index

    @property
    def J(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.children)

    @property
    def arity(self) -> int | None:
        """Common arity of all nodes, or ``None`` if it varies."""
        ar = {len(self.children[e]) for e in self.nodes}
        return ar.pop() if len(ar) == 1 else None

    def label(self, e: int) -> int | None:
        """Node label of element ``e`` (1-based), ``None`` for leaves."""
        try:
            return self.nodes.index(e) + 1
        except ValueError:
            return None

    def is_leaf(self, e: int) -> bool:
        return self.children[e] is None

    def preorder(self) -> list:
        out, stack = [], [0]
        while stack:
            e = stack.pop()
            out.append(e)
            if self.children[e] is not None:
                stack.extend(reversed(self.children[e]))
        return out

    @property
    def leaves(self) -> list:
        """Leaves in preorder (left to right)."""
        return [e for e in self.preorder() if self.children[e] is None]

    def descendants_leaf_count(self) -> list:
        cnt = [0] * self.n_elements
        for e in reversed(self.preorder()):
            ch = self.children[e]
            cnt[e] = 1 if ch is None else sum(cnt[c] for c in ch)
        return cnt

    def canonical(self) -> tuple:
        """Preorder listing of ``(label or 0, child slot, component, term)``."""
        out = []
        for e in self.preorder():
            lab = self.label(e)
            term = self.kappa[lab - 1] if lab else -1
            out.append((lab or 0, self.slot[e], self.iota[e], term))
        return tuple(out)

    def dump(self, system: bool = False) -> list:
        """JSON-ready list of element records in preorder."""
        recs = []
        for e in self.preorder():
            lab = self.label(e)
            par = self.parent[e]
            rec = {
                "label": lab,
                "parentLabel": None if par < 0 else self.label(par),
                "childSlot": None if par < 0 else self.slot[e],
            }
            if system:
                rec["componentIndex"] = self.iota[e]
                rec["termIndex"] = None if lab is None else self.kappa[lab - 1]
            recs.append(rec)
        return recs

    def check(self) -> None:
        """Assert the structural invariants."""
        J = self.J
        leaves = self.leaves
        assert self.children[0] is not None or J == 0
        arities = [len(self.children[e]) for e in self.nodes]
        assert len(leaves) == 1 + sum(a - 1 for a in arities)
        assert self.n_elements == 1 + sum(arities)
        # labels extend the tree order: a parent is created before its child
        for k, e in enumerate(self.nodes):
            par = self.parent[e]
            if par >= 0:
                assert self.nodes.index(par) < k


def tree_count(p: int, J: int) -> int:
    """``prod_{j<J} ((p-1) j + 1)``."""
    return prod((p - 1) * j + 1 for j in range(J))


def root_tree(arity: int, component: int = 0, term: int = 0,
              child_components: Sequence[int] | None = None) -> Tree:
    """The one-node tree."""
    if child_components is None:
        child_components = (component,) * arity
    return Tree(
        children=(tuple(range(1, arity + 1)),) + (None,) * arity,
        parent=(-1,) + (0,) * arity,
        slot=(-1,) + tuple(range(arity)),
        nodes=(0,),
        iota=(component,) + tuple(child_components),
        kappa=(term,),
    )


def extend_at_leaf(tree: Tree, leaf: int, arity: int | None = None, term: int = 0,
                   child_components: Sequence[int] | None = None) -> Tree:
    """Develop ``leaf`` into the node with label ``J+1`` and its children."""
    if not (0 <= leaf < tree.n_elements) or tree.children[leaf] is not None:
        raise ValueError(f"element {leaf} is not a leaf of the tree")
    if arity is None:
        arity = tree.arity
        if arity is None:
            raise ValueError("arity must be given for mixed-arity trees")
    if child_components is None:
        child_components = (tree.iota[leaf],) * arity
    if len(child_components) != arity:
        raise ValueError("child_components length differs from arity")
    E = tree.n_elements
    new = tuple(range(E, E + arity))
    children = list(tree.children) + [None] * arity
    children[leaf] = new
    return Tree(
        children=tuple(children),
        parent=tree.parent + (leaf,) * arity,
        slot=tree.slot + tuple(range(arity)),
        nodes=tree.nodes + (leaf,),
        iota=tree.iota + tuple(child_components),
        kappa=tree.kappa + (term,),
    )


def enumerate_trees(p: int, J: int, cap: int = DEFAULT_CAP) -> list:
    """All ordered p-ary trees with ``J`` labelled nodes, generation order."""
    if p < 2 or J < 1:
        raise ValueError(f"need p >= 2 and J >= 1, got p={p}, J={J}")
    total = tree_count(p, J)
    if total > cap:
        raise TreeCountError(total, cap)
    gen = [root_tree(p)]
    for _ in range(1, J):
        gen = [extend_at_leaf(t, a) for t in gen for a in t.leaves]
    return gen


def enumerate_system_trees(terms: Sequence[Sequence[Sequence[int]]], root_component: int,
                           J: int, cap: int = DEFAULT_CAP) -> list:
    """All triples ``(T, iota, kappa)`` with ``J`` nodes.

    ``terms[c][k]`` lists the components of the ordered children of term
    ``k`` in the equation for component ``c``.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    for c, tl in enumerate(terms):
        for k, ch in enumerate(tl):
            if len(ch) < 2:
                raise ValueError(f"term {k} of component {c} has degree {len(ch)} < 2")
    gen = [root_tree(len(ch), root_component, k, ch) for k, ch in enumerate(terms[root_component])]
    for _ in range(1, J):
        nxt = []
        for t in gen:
            for a in t.leaves:
                for k, ch in enumerate(terms[t.iota[a]]):
                    nxt.append(extend_at_leaf(t, a, len(ch), k, ch))
                    if len(nxt) > cap:
                        raise TreeCountError(f"more than {cap}", cap)
        gen = nxt
    if len(gen) > cap:
        raise TreeCountError(len(gen), cap)
    return gen


# ---------------------------------------------------------------------------
# index functions

@dataclass(frozen=True)
class IndexAssignment:
    tree: Tree
    freqs: np.ndarray        # shape (n_elements, d)

    @property
    def leaf_freqs(self) -> np.ndarray:
        return self.freqs[self.tree.leaves]

    def check(self) -> None:
        for e, ch in enumerate(self.tree.children):
            if ch is not None:
                assert np.array_equal(self.freqs[e], self.freqs[list(ch)].sum(axis=0))


def _box(radius: int, d: int) -> np.ndarray:
    axes = [np.arange(-radius, radius + 1, dtype=np.int64)] * d
    grid = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grid], axis=1)


def element_radii(tree: Tree, lattice: TruncatedLattice, truncate_internal: bool) -> list:
    """Sup-norm range of each element's frequency.

    Leaves lie in the box.  Internal elements either lie in the box too or
    range over the forced sums, i.e. ``(#leaves below) * N``.
    """
    if truncate_internal:
        return [lattice.N] * tree.n_elements
    return [c * lattice.N for c in tree.descendants_leaf_count()]


def expand_node(F: np.ndarray, tree: Tree, label: int, radii: Sequence[int]):
    """Split the frequency of node ``label`` among its children.

    ``F`` has shape ``(rows, n_elements, d)`` with the node's frequency
    already set.  Returns ``(F_new, parent_row)``: every admissible choice
    of child frequencies within ``radii``, and for each new row the row of
    ``F`` it came from.
    """
    e = tree.nodes[label - 1]
    ch = tree.children[e]
    rows, _, d = F.shape
    parent_row = np.arange(rows)
    for c in ch[:-2]:
        box = _box(radii[c], d)
        K = box.shape[0]
        F = np.repeat(F, K, axis=0)
        F[:, c] = np.tile(box, (rows, 1))
        parent_row = np.repeat(parent_row, K)
        rows = F.shape[0]
    last = ch[-1]
    if len(ch) == 1:
        F[:, last] = F[:, e]
        ok = np.all(np.abs(F[:, last]) <= radii[last], axis=1)
        return F[ok], parent_row[ok]
    # the second-to-last child ranges only over values that keep the last in its box
    pen = ch[-2]
    rest = F[:, e].copy()
    for c in ch[:-2]:
        rest -= F[:, c]
    lo = np.maximum(-radii[pen], rest - radii[last])
    width = np.maximum(np.minimum(radii[pen], rest + radii[last]) - lo + 1, 0)
    counts = width.prod(axis=1)
    F = np.repeat(F, counts, axis=0)
    parent_row = np.repeat(parent_row, counts)
    lo = np.repeat(lo, counts, axis=0)
    width = np.repeat(width, counts, axis=0)
    starts = np.cumsum(counts) - counts
    local = np.arange(F.shape[0]) - np.repeat(starts, counts)
    for k in range(d - 1, -1, -1):
        F[:, pen, k] = lo[:, k] + local % width[:, k]
        local //= width[:, k]
    F[:, last] = F[:, e]
    for c in ch[:-1]:
        F[:, last] -= F[:, c]
    return F, parent_row


def assignment_array(tree: Tree, lattice: TruncatedLattice, root,
                     truncate_internal: bool = False) -> np.ndarray:
    """All index functions with root frequency ``root`` and leaves in the box.

    Returns shape ``(count, n_elements, d)`` sorted lexicographically by the
    leaf frequencies in preorder.
    """
    d = lattice.d
    root = np.asarray(root, dtype=np.int64).reshape(d)
    radii = element_radii(tree, lattice, truncate_internal)
    F = np.zeros((1, tree.n_elements, d), dtype=np.int64)
    F[0, 0] = root
    if np.any(np.abs(root) > radii[0]):
        return F[:0]
    for label in range(1, tree.J + 1):
        F, _ = expand_node(F, tree, label, radii)
    if F.shape[0]:
        keys = F[:, tree.leaves].reshape(F.shape[0], -1)
        order = np.lexsort(keys.T[::-1])
        F = F[order]
    return F


def enumerate_assignments(tree: Tree, lattice: TruncatedLattice, root,
                          truncate_internal: bool = False) -> Iterator[IndexAssignment]:
    """Iterate over :func:`assignment_array` as :class:`IndexAssignment` objects."""
    for row in assignment_array(tree, lattice, root, truncate_internal):
        yield IndexAssignment(tree, row)


def dump_trees(trees: Sequence[Tree], system: bool = False) -> str:
    return json.dumps([t.dump(system) for t in trees], indent=1)
