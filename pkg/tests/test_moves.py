from random import Random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import load

from bassserre.gog import loop_graph, parse_gog, point_graph, seg_graph, serialize_gog
from bassserre.labels import TRIV, CyclicMult, InfCyclic, Quotient
from bassserre.moves import (
    Certificate,
    DeformationCollapse,
    MoveError,
    Slide,
    Subdivide,
    VertexPlan,
    apply_move,
    collapse_edges,
    inverse_move,
    is_reduced,
    legal_collapses,
    parse_move,
    parse_script,
    reduce_graph,
    refine_at_vertex,
    refine_elliptic,
    render_move,
    total_collapse,
    transport_collapse,
    transport_word,
)
from bassserre.sampling import gbs_expansions, random_gbs, random_move, random_word
from bassserre.words import is_elliptic, parse_word

Z = InfCyclic()


def test_collapse_onto_edge():
    g = seg_graph(1, 3, "u", "v", "e")
    assert apply_move(g, DeformationCollapse("e")) == point_graph(Z, "v")


def test_collapse_requires_onto():
    with pytest.raises(MoveError, match="onto"):
        apply_move(seg_graph(2, 3, "u", "v", "e"), DeformationCollapse("e"))


def test_loops_never_collapse():
    with pytest.raises(MoveError):
        apply_move(loop_graph(1, 2), DeformationCollapse("e"))


def test_expansion_then_collapse_is_identity():
    g = load("gbs_theta.gog")
    for m in gbs_expansions(g):
        h = apply_move(g, m)
        assert apply_move(h, inverse_move(g, m)) == g


def test_slide_arithmetic():
    g = parse_gog("vertex u Z; vertex v Z; vertex w Z; edge e u v Z *2 *3; edge f u w Z *4 *5")
    h = apply_move(g, Slide(("f", "o"), "e"))
    f = h.edges["f"]
    assert (f.origin, f.terminus, f.inj_origin, f.inj_terminus) == ("v", "w", CyclicMult(6), CyclicMult(5))
    assert len(h.vertices) == 3 and len(h.edges) == 2


def test_slide_requires_divisibility():
    g = parse_gog("vertex u Z; vertex v Z; vertex w Z; edge e u v Z *2 *3; edge f u w Z *3 *5")
    with pytest.raises(MoveError):
        apply_move(g, Slide(("f", "o"), "e"))


def test_subdivide_adds_valence_two_vertex():
    g = loop_graph(1, 2)
    h = apply_move(g, Subdivide("e"))
    assert len(h.vertices) == 2 and len(h.edges) == 2
    mid = next(v for v in h.vertices if v != "v")
    assert h.valence(mid) == 2
    assert apply_move(h, inverse_move(g, Subdivide("e"))) == g


def test_move_text_round_trip():
    g = load("gbs_theta.gog")
    moves = legal_collapses(g) + gbs_expansions(g)[:5] + [Slide(("f", "o"), "e"), Subdivide("g")]
    for m in moves:
        assert parse_move(render_move(m)) == m
    script = parse_script("collapse e into v; subdivide f\n")
    assert [render_move(m) for m in script] == ["collapse e into v", "subdivide f"]


def test_reduce_graph_examples():
    r, cert = reduce_graph(seg_graph(1, 3, "u", "v", "e"))
    assert r.edges == {} and len(cert.script) == 1 and cert.verify()
    g = loop_graph(1, 2)
    r, cert = reduce_graph(g)
    assert r == g and cert.script == ()
    chain = parse_gog("vertex u Z; vertex v Z; vertex w Z; edge e u v Z *1 *2; edge f v w Z *1 *5")
    r, cert = reduce_graph(chain)
    assert len(r.vertices) == 1 and len(cert.script) == 2
    assert cert.replay() == r and is_reduced(r)


def test_collapse_edges_examples():
    g = seg_graph(2, 2, "u", "v", "e")
    assert collapse_edges(g, set()) == g
    total = collapse_edges(g, {"e"})
    assert list(total.vertices.values()) == [Quotient(g)] and not total.edges
    assert total == total_collapse(g)
    w = parse_word(g, "u.a^1 e' v.a^1 e")
    assert is_elliptic(g, w).hyperbolic
    assert is_elliptic(total, transport_collapse(g, {"e"}, w)).elliptic
    assert is_elliptic(g, w, collapsed={"e"}).elliptic


def test_refine_point_by_splitting_gives_splitting():
    split = seg_graph(2, 3, "x", "y", "s")
    assert refine_at_vertex(point_graph(Z, "v"), "v", split, {}) == split


def test_refine_quotient_by_inner_graph_uncollapses():
    g = load("gbs_theta.gog")
    t1 = collapse_edges(g, {"e"})
    inner = t1.vertices["u"].inner
    att = {(fid, side): (t1.edges[fid].injection_at(side).tag, t1.edges[fid].injection_at(side).inner)
           for fid, side in t1.incident_ends("u")}
    assert refine_at_vertex(t1, "u", inner, att) == g


def test_refine_errors():
    g = loop_graph(1, 2)
    split = seg_graph(1, 3, "x", "y", "s")
    with pytest.raises(MoveError):
        refine_at_vertex(g, "v", split, {("e", "o"): ("x", CyclicMult(1))})  # e.t unassigned
    with pytest.raises(MoveError):
        refine_at_vertex(g, "v", split, {"e": ("x", TRIV)})


def test_grushko_atom_blow_up():
    g = parse_gog("vertex c 1; vertex x atom:G1; vertex y atom:G2[freely_indecomposable]; "
                  "edge a c x 1 triv triv; edge b c y 1 triv triv")
    # G1 = A * B declared by its free splitting
    split = parse_gog("vertex xa atom:A[freely_indecomposable]; vertex xb atom:B[freely_indecomposable]; "
                      "edge s xa xb 1 triv triv")
    out, report = refine_elliptic(g, {"x": VertexPlan(split, {"a": ("xa", TRIV)})}, n_samples=50)
    assert report.ok and report.collapses_back
    assert set(out.vertices) == {"c", "xa", "xb", "y"}


def test_trivial_plan_returns_t1():
    g = load("bs12.gog")
    out, report = refine_elliptic(g, {}, n_samples=10)
    assert out == g and report.ok


def test_certificate_text():
    g = seg_graph(1, 3, "u", "v", "e")
    cert = Certificate(g, point_graph(Z, "v"), (DeformationCollapse("e", "v"),))
    assert cert.to_text() == "collapse e into v\n"
    assert cert.verify()


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_random_move_inverse_and_invariance(seed):
    rng = Random(seed)
    g = random_gbs(rng)
    m = random_move(g, rng)
    h = apply_move(g, m)
    assert apply_move(h, inverse_move(g, m)) == g
    for _ in range(5):
        w = random_word(g, rng, rng.randint(0, 6))
        assert is_elliptic(g, w).status == is_elliptic(h, transport_word(g, m, w)).status


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32))
def test_collapse_transport_matches_collapsed_ellipticity(seed):
    rng = Random(seed)
    g = random_gbs(rng)
    chosen = {eid for eid in g.edges if rng.random() < 0.5}
    h = collapse_edges(g, chosen)
    for _ in range(5):
        w = random_word(g, rng, rng.randint(0, 6))
        assert (is_elliptic(h, transport_collapse(g, chosen, w)).status
                == is_elliptic(g, w, collapsed=chosen).status)


def test_collapsed_text_round_trips():
    g = collapse_edges(load("gbs_triangle.gog"), {"e", "f"})
    assert parse_gog(serialize_gog(g)) == g
