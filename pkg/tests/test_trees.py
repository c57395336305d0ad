import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nfrlab.lattice import TruncatedLattice
from nfrlab.model import registry
from nfrlab.trees import (TreeCountError, assignment_array, dump_trees, enumerate_assignments,
                          enumerate_system_trees, enumerate_trees, extend_at_leaf, root_tree,
                          tree_count)

GOLDEN = Path(__file__).parent / "golden"

# closed-form counts, evaluated by hand
COUNTS = {2: [1, 2, 6, 24, 120, 720], 3: [1, 3, 15, 105, 945, 10395], 4: [1, 4, 28, 280, 3640, 58240]}


def test_spec_counts():
    assert len(enumerate_trees(3, 1)) == 1
    assert len(enumerate_trees(2, 3)) == 6
    assert len(enumerate_trees(3, 3)) == 15


@pytest.mark.parametrize("p", [2, 3, 4])
def test_counts_and_shapes(p):
    for J, want in enumerate(COUNTS[p], start=1):
        if J > 5 and p == 4:
            assert tree_count(p, J) == want
            continue
        trees = enumerate_trees(p, J)
        assert len(trees) == want == tree_count(p, J)
        for t in trees:
            t.check()
            assert t.J == J
            assert len(t.leaves) == (p - 1) * J + 1
            assert t.n_elements == p * J + 1


def test_labels_extend_tree_order():
    for t in enumerate_trees(3, 4):
        for k, e in enumerate(t.nodes):
            anc = t.parent[e]
            while anc >= 0:
                assert t.label(anc) < k + 1
                anc = t.parent[anc]


def test_extension_distinct_and_complete():
    for p in (2, 3):
        for J in (1, 2, 3):
            ext = [extend_at_leaf(t, a) for t in enumerate_trees(p, J) for a in t.leaves]
            canon = [t.canonical() for t in ext]
            assert len(canon) == tree_count(p, J + 1)
            assert len(set(canon)) == len(canon)
            assert set(canon) == {t.canonical() for t in enumerate_trees(p, J + 1)}


def test_extend_single():
    t = root_tree(2)
    t2 = extend_at_leaf(t, t.leaves[0])
    assert t2.J == 2 and t2.label(t2.nodes[1]) == 2
    assert t2.canonical() in {x.canonical() for x in enumerate_trees(2, 2)}
    with pytest.raises(ValueError):
        extend_at_leaf(t, 0)


def test_cap():
    with pytest.raises(TreeCountError, match="10395"):
        enumerate_trees(3, 6, cap=1000)


def test_bad_arguments():
    with pytest.raises(ValueError):
        enumerate_trees(1, 2)
    with pytest.raises(ValueError):
        enumerate_trees(2, 0)


@pytest.mark.parametrize("J", [1, 2])
def test_golden_dump(J):
    want = json.loads((GOLDEN / f"trees_p3_J{J}.json").read_text())
    assert json.loads(dump_trees(enumerate_trees(3, J))) == want


def test_dump_fields():
    rec = enumerate_trees(2, 2)[1].dump()
    assert rec[0] == {"label": 1, "parentLabel": None, "childSlot": None}
    assert {r["label"] for r in rec} == {1, 2, None}


def test_assignment_examples():
    lat = TruncatedLattice(1, 1)
    t = root_tree(2)
    got = [tuple(a.leaf_freqs[:, 0]) for a in enumerate_assignments(t, lat, [0])]
    assert got == [(-1, 1), (0, 0), (1, -1)]
    assert [tuple(a.leaf_freqs[:, 0]) for a in enumerate_assignments(t, lat, [2])] == [(1, 1)]
    t3 = root_tree(3)
    assert [tuple(a.leaf_freqs[:, 0]) for a in enumerate_assignments(t3, lat, [3])] == [(1, 1, 1)]


def test_internal_nodes_not_truncated():
    # J=2, p=2, N=1, root 1: the inner node may carry frequency 2
    lat = TruncatedLattice(1, 1)
    t = enumerate_trees(2, 2)[0]
    F = assignment_array(t, lat, [1])
    inner = F[:, t.nodes[1], 0]
    assert inner.max() == 2
    Ft = assignment_array(t, lat, [1], truncate_internal=True)
    assert np.abs(Ft).max() == 1
    assert len(Ft) < len(F)
    for a in enumerate_assignments(t, lat, [0]):
        a.check()


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 6), st.integers(-14, 14))
def test_pair_count_matches_interval(d, N, n):
    lat = TruncatedLattice(1, N)
    count = len(assignment_array(root_tree(2), lat, [n]))
    lo, hi = max(-N, n - N), min(N, n + N)
    assert count == max(0, hi - lo + 1)


def test_system_trees_degenerate():
    for J in (1, 2, 3):
        assert len(enumerate_system_trees([[[0, 0, 0]]], 0, J)) == tree_count(3, J)


def test_system_trees_zakharov():
    eq = registry("zakharov")
    terms = eq.term_children()
    assert len(enumerate_system_trees(terms, 0, 1)) == 2
    assert len(enumerate_system_trees(terms, 0, 2)) == 6
    # bound prod_j ((P-1) j + 1) I with P=2, I=2
    for J in (1, 2, 3):
        assert len(enumerate_system_trees(terms, 0, J)) <= tree_count(2, J) * 2 ** J
    for t in enumerate_system_trees(terms, 0, 3):
        t.check()
        for lab, e in enumerate(t.nodes, start=1):
            ch = terms[t.iota[e]][t.kappa[lab - 1]]
            assert tuple(t.iota[c] for c in t.children[e]) == tuple(ch)


def test_system_tree_dump_has_components():
    t = enumerate_system_trees(registry("zakharov").term_children(), 0, 2)[0]
    rec = t.dump(system=True)
    assert all("componentIndex" in r and "termIndex" in r for r in rec)


def test_system_rejects_degree_one():
    with pytest.raises(ValueError):
        enumerate_system_trees([[[0]]], 0, 1)
