from fractions import Fraction
from random import Random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import load

from bassserre.gog import loop_graph, parse_gog, seg_graph
from bassserre.sampling import random_gbs, random_word
from bassserre.words import (
    WordError,
    component_generators,
    concat,
    conjugate,
    dominates,
    inverse_word,
    is_elliptic,
    parse_word,
    power,
    reduce_word,
    render_word,
    subgroup_elliptic,
)

# -- independent oracle: BS(1, n) acts faithfully on Q by x -> n^k x + b ----------
# a = [[1, 1], [0, 1]] and the letter e = diag(n, 1) satisfy e' a^n e = a.


def _mul(p, q):
    return (
        (p[0][0] * q[0][0] + p[0][1] * q[1][0], p[0][0] * q[0][1] + p[0][1] * q[1][1]),
        (p[1][0] * q[0][0] + p[1][1] * q[1][0], p[1][0] * q[0][1] + p[1][1] * q[1][1]),
    )


def _affine(n, w):
    one = Fraction(1)
    m = ((one, Fraction(0)), (Fraction(0), one))
    stable = ((Fraction(n), Fraction(0)), (Fraction(0), one))
    stable_inv = ((1 / Fraction(n), Fraction(0)), (Fraction(0), one))
    for i, x in enumerate(w.elements):
        m = _mul(m, ((one, Fraction(x)), (Fraction(0), one)))
        if i < len(w.letters):
            m = _mul(m, stable_inv if w.letters[i][1] else stable)
    return m


def _exponent_sum(w):
    return sum(-1 if inv else 1 for _, inv in w.letters)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([2, 3, -2, 5]), st.integers(0, 2**32), st.integers(0, 10))
def test_bs1n_against_affine_oracle(n, seed, length):
    g = loop_graph(1, n)
    w = random_word(g, Random(seed), length, bound=4)
    m = _affine(n, w)
    r = reduce_word(g, w)
    assert _affine(n, r) == m
    identity = m == ((1, 0), (0, 1))
    assert identity == (not r.letters and r.elements == (0,))
    v = is_elliptic(g, w)
    k = _exponent_sum(w)
    assert v.elliptic == (m[0][0] == 1)
    assert v.translation_length == abs(k)


def test_reduce_examples():
    bs12 = loop_graph(1, 2)
    r = reduce_word(bs12, parse_word(bs12, "e' a^2 e"))
    assert render_word(bs12, r) == "v.a^1"
    bs23 = loop_graph(2, 3)
    r = reduce_word(bs23, parse_word(bs23, "e a^0 e'"), cyclic=True)
    assert r.length == 0 and r.elements == (0,)
    w = parse_word(bs23, "a^1 e a^1 e'")
    r = reduce_word(bs23, w, cyclic=True)
    assert r.length == 2


def test_ellipticity_examples():
    bs12 = loop_graph(1, 2)
    v = is_elliptic(bs12, parse_word(bs12, "e"))
    assert v.status == "Hyperbolic" and v.translation_length == 1
    bs23 = loop_graph(2, 3)
    assert is_elliptic(bs23, parse_word(bs23, "e a e'")).elliptic


def test_collapsed_edges_only_count_survivors():
    g = parse_gog("vertex u Z; vertex v Z; edge e u v Z *2 *3; edge f v v Z *5 *7")
    w = parse_word(g, "f", base="v")
    v = is_elliptic(g, w, collapsed={"e"})
    assert v.status == "Hyperbolic" and v.translation_length == 1
    assert is_elliptic(g, w, collapsed={"f"}).elliptic


def test_subgroup_examples():
    bs23 = loop_graph(2, 3)
    a, a3 = parse_word(bs23, "a"), parse_word(bs23, "a^3")
    assert subgroup_elliptic(bs23, [a, a3]).status == "Elliptic"
    conj = parse_word(bs23, "e a e'")
    verdict = subgroup_elliptic(bs23, [a, conj])
    assert verdict.status == "NotElliptic"
    assert reduce_word(bs23, verdict.witness, cyclic=True).length == 2
    z2 = loop_graph(1, 1)
    assert subgroup_elliptic(z2, [parse_word(z2, "a"), parse_word(z2, "e a e'")]).status == "Elliptic"


def test_subgroup_needs_common_base():
    g = seg_graph(2, 3, "u", "v", "e")
    with pytest.raises(WordError):
        subgroup_elliptic(g, [parse_word(g, "u.a"), parse_word(g, "v.a", base="v")])


def test_domination_examples():
    g = seg_graph(2, 2, "u", "v", "e")
    assert dominates(g, set(), {"e"}).status == "Dominates"
    refuted = dominates(g, {"e"}, set())
    assert refuted.status == "RefutedBy"
    assert is_elliptic(g, refuted.witness).hyperbolic
    theta = load("gbs_theta.gog")
    # collapsing e leaves f and g; the vertex groups of the e-component are
    # elliptic when every edge is kept
    assert dominates(theta, set(), {"e", "f", "g"}).status == "Dominates"
    with pytest.raises(ValueError):
        dominates(theta, {"e"}, {"e", "f"})


def test_domination_through_an_onto_edge():
    # e is onto at u, so the {e}-component group is just the v group, which
    # stays elliptic when f is collapsed; the {f}-component is an honest amalgam
    g = parse_gog("vertex u Z; vertex v Z; vertex w Z; edge e u v Z *1 *3; edge f v w Z *2 *3")
    assert dominates(g, {"e"}, {"f"}).status == "Dominates"
    assert dominates(g, {"f"}, {"e"}).status == "RefutedBy"


def test_opaque_pinch_is_unknown():
    g = load("atom_edge.gog")
    w = parse_word(g, "e' v.[K] e", base="u")
    assert is_elliptic(g, w).status == "Unknown"


def test_parse_render_round_trip():
    g = load("gbs_theta.gog")
    w = parse_word(g, "u.a^2 e' v.a^-1 g^2 f")
    assert parse_word(g, render_word(g, w)) == w
    with pytest.raises(WordError):
        parse_word(g, "e' e'", base="u")  # second letter does not start at u


def test_component_generators_of_collapsed_loop():
    g = loop_graph(1, 2)
    gens = component_generators(g, {"v"}, {"e"}, "v")
    assert len(gens) == 2
    assert any(x.letters for x in gens)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32))
def test_inverse_and_power_laws(seed):
    rng = Random(seed)
    g = random_gbs(rng)
    w = random_word(g, rng, rng.randint(0, 6))
    ww = concat(g, w, inverse_word(g, w))
    r = reduce_word(g, ww)
    assert not r.letters
    v = is_elliptic(g, w)
    for n in (2, 3):
        assert is_elliptic(g, power(g, w, n)).translation_length == n * v.translation_length
    c = random_word(g, rng, rng.randint(0, 4))
    assert is_elliptic(g, conjugate(g, c, w)).status == v.status


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32))
def test_reduction_idempotent(seed):
    rng = Random(seed)
    g = random_gbs(rng)
    w = random_word(g, rng, rng.randint(0, 8))
    for cyclic in (False, True):
        r = reduce_word(g, w, cyclic)
        assert reduce_word(g, r, cyclic) == r
