import numpy as np
import pytest
from hypothesis import given, strategies as st

from stlflow.graph import (
    FEATURE_DIM, SpecGraph, augment_duplicate_children, canonical_order, graph_distinguishability,
    to_graph, wl_signature,
)
from stlflow.stl import And, Ap, Eventually, Not, Or, Polarity, Predicate, Shape, Top, Until, parse, robustness, walk

import oracles
from strategies import formulas, random_formula, signals

A = Ap(Predicate(Shape.CIRCLE, (1, 1), 0.5))
B = Ap(Predicate(Shape.CIRCLE, (-1, 2), 0.7))


def test_top_graph():
    g = to_graph(Top())
    assert g.num_nodes == 1 and g.edges == ()
    np.testing.assert_array_equal(g.features, [[0, -1, -1, -1, -1, -1, -1, 0]])


def test_eventually_graph():
    g = to_graph(parse("F[0,10] circle(2,0,1)"))
    assert g.edges == ((1, 0),)
    np.testing.assert_array_equal(g.features[0], [5, 0, 10, -1, -1, -1, -1, 0])
    np.testing.assert_array_equal(g.features[1], [1, -1, -1, 2, 0, 0, 1, 0])


def test_until_left_flag():
    g = to_graph(Until(2, 5, A, B))
    assert g.num_nodes == 3
    assert g.features[1, 7] == 1 and g.features[2, 7] == 0
    assert g.features[0, 0] == 7 and tuple(g.features[0, 1:3]) == (2, 5)


def test_avoid_is_materialized_as_not():
    g = to_graph(Ap(Predicate(Shape.CIRCLE, (0, 3), 1, Polarity.AVOID)))
    assert g.num_nodes == 2 and g.edges == ((1, 0),)
    assert g.features[0, 0] == 2 and g.features[1, 0] == 1
    assert g.features[1, 6] == 1.0


@given(formulas())
def test_graph_is_a_tree(phi):
    g = to_graph(phi)
    assert g.features.shape[1] == FEATURE_DIM
    assert len(g.edges) == g.num_nodes - 1
    avoid = sum(isinstance(n, Ap) and n.pred.polarity is Polarity.AVOID for n in walk(phi))
    assert g.num_nodes == sum(1 for _ in walk(phi)) + avoid
    # every non-root node has exactly one parent, listed before it in DFS order
    parents = {}
    for s, d in g.edges:
        assert s not in parents and d < s
        parents[s] = d
    assert set(parents) == set(range(1, g.num_nodes))


@given(formulas())
def test_graph_json_round_trip(phi):
    g = to_graph(phi)
    assert SpecGraph.loads(g.dumps()) == g
    assert SpecGraph.from_json(g.to_json()) == g


def test_canonical_order_ignores_sibling_order():
    g1 = canonical_order(to_graph(And((A, Or((B, Top())), B))))
    g2 = canonical_order(to_graph(And((B, A, Or((Top(), B))))))
    assert g1 == g2


def test_augment_examples():
    out = augment_duplicate_children(And((A, B)), 1, 0)
    assert out in (And((A, B, B)), And((A, B, A)))
    assert augment_duplicate_children(A, 5, 0) == A
    with pytest.raises(ValueError):
        augment_duplicate_children(A, -1)


def test_augment_grows_nary_nodes():
    phi = parse("F[0,5] circle(0,0,1) & circle(2,2,1) & G[0,9] ~circle(1,1,0.5)")
    out = augment_duplicate_children(phi, 4, 1)
    assert isinstance(out, And) and len(out.children) == 7
    assert set(out.children) == set(phi.children)


@given(formulas(), signals(), st.integers(0, 6), st.integers(0, 2**32 - 1))
def test_augment_preserves_robustness(phi, s, k, seed):
    aug = augment_duplicate_children(phi, k, seed)
    assert robustness(s, 0, aug) == robustness(s, 0, phi)


def test_augment_deterministic():
    phi = random_formula(np.random.default_rng(4), depth=3)
    assert augment_duplicate_children(phi, 6, 9) == augment_duplicate_children(phi, 6, 9)


def test_distinguishability_examples():
    assert not graph_distinguishability(And((A, B)), And((A, B)))
    assert graph_distinguishability(Eventually(0, 5, A), Eventually(0, 6, A))
    assert graph_distinguishability(And((A, B)), Or((A, B)))
    # sibling order is invisible to 1-WL
    assert not graph_distinguishability(And((A, B)), And((B, A)))


def test_wl_separates_structure_with_equal_multisets():
    # same node-feature multiset, different attachment
    p = And((Eventually(0, 3, A), Eventually(0, 3, Not(B))))
    q = And((Eventually(0, 3, Not(A)), Eventually(0, 3, B)))
    assert graph_distinguishability(p, q)
    assert wl_signature(to_graph(p)) != wl_signature(to_graph(q))


def test_generated_corpus_wl_injective():
    """Semantically distinct generated specs never collide under 1-WL."""
    from stlflow.datagen import Template, place_scene, sample_spec
    from stlflow.envs import linear_env
    from stlflow.stl import canonical_key

    env = linear_env()
    rng = np.random.default_rng(2)
    seen = {}
    templates = list(Template)
    for i in range(2000):
        tpl = templates[i % 4]
        scene = place_scene(env, (int(rng.integers(2, 5)), int(rng.integers(0, 4))), rng)
        phi = sample_spec(tpl, scene, rng, env=env)
        sig = wl_signature(to_graph(phi))
        key = canonical_key(phi)
        assert seen.setdefault(sig, key) == key
