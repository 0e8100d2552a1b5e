import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from conftest import FIXTURES, load

from bassserre.gog import GraphOfGroups, point_graph
from bassserre.labels import Atom, FiniteCyclic, InfCyclic, Quotient, Trivial
from bassserre.moves import same_label_structure, total_collapse
from bassserre.qh import (
    CutSystem,
    FiniteImage,
    InBoundary,
    OrbifoldError,
    QhData,
    Unconstrained,
    boundary_splitting_case,
    dual_tree,
    euler_characteristic,
    fill,
    flexibility,
    has_essential_scc,
    marks_of,
    parse_sig,
    star_universally_elliptic,
    unfill,
    validate_qh,
)

Z = InfCyclic()
PANTS = "sig(g=0, or=true, bd=[B, B, B])"


def chi(text):
    return euler_characteristic(parse_sig(text)).chi


def test_euler_examples():
    assert chi(PANTS) == -1 and euler_characteristic(parse_sig(PANTS)).hyperbolic
    torus = euler_characteristic(parse_sig("sig(g=1, or=true)"))
    assert torus.chi == 0 and not torus.hyperbolic
    assert chi("sig(g=0, or=true, cones=[2, 3, 7])") == Fraction(-1, 42)


def test_euler_mirrors_and_corners():
    # reflection triangle (2,3,7): half of the (2,3,7) sphere
    assert chi("sig(g=0, or=true, mirrors=[M-2-M-3-M-7])") == Fraction(-1, 84)
    # non-orientable genus counts crosscaps
    assert chi("sig(g=1, or=false)") == 1  # projective plane
    assert chi("sig(g=2, or=false)") == 0  # Klein bottle
    assert chi("sig(g=1, or=false, bd=[B, B])") == -1  # Mobius band with a hole
    # disc whose boundary alternates two arcs and two mirrors is a Euclidean rectangle
    assert chi("sig(g=0, or=true, bd=[B-M-B-M])") == 0


@given(st.permutations([2, 3, 5, 7]))
def test_euler_ignores_cone_order(cones):
    text = f"sig(g=0, or=true, bd=[B], cones=[{', '.join(map(str, cones))}])"
    assert chi(text) == chi("sig(g=0, or=true, bd=[B], cones=[2, 3, 5, 7])")


def test_bad_orbifolds_rejected():
    for bad in ("sig(g=0, or=true, cones=[3])", "sig(g=0, or=true, cones=[2, 3])"):
        with pytest.raises(OrbifoldError):
            euler_characteristic(parse_sig(bad))


def test_essential_curves():
    assert has_essential_scc(parse_sig(PANTS)) == "No"
    assert has_essential_scc(parse_sig("sig(g=1, or=true, bd=[B])")) == "Yes"
    # four order-two cones give a Euclidean pillowcase; add an order-three cone instead
    assert has_essential_scc(parse_sig("sig(g=0, or=true, cones=[2, 2, 2, 3])")) == "Yes"
    assert has_essential_scc(parse_sig("sig(g=0, or=true, cones=[2, 3, 7])")) == "No"
    assert has_essential_scc(parse_sig("sig(g=0, or=true, bd=[B-M-B-M-B-M])")) == "Unknown"


def test_arc_cases():
    assert boundary_splitting_case(parse_sig(PANTS), 0).case == "FreeArc"
    assert boundary_splitting_case(parse_sig(PANTS), 0).edge_group == Trivial()
    disc = boundary_splitting_case(parse_sig("sig(g=0, or=true, bd=[B-M-B-M-B-M])"), 0)
    assert (disc.case, disc.edge_group) == ("DiscMirrorZ2", FiniteCyclic(2))
    annulus = boundary_splitting_case(parse_sig("sig(g=0, or=true, bd=[B, M-2-M-3])"), 0)
    assert annulus.case == "AnnulusMirrorZ2"


def _cut(name):
    data = json.loads((FIXTURES / "cuts" / name).read_text())
    return (parse_sig(data["sig"]),
            CutSystem(tuple(parse_sig(p) for p in data["pieces"]),
                      tuple(tuple(tuple(e) for e in c) for c in data["curves"])))


def test_dual_tree_shapes():
    g, _ = dual_tree(*_cut("genus2_separating.json"))
    assert len(g.vertices) == 2 and len(g.edges) == 1 and not g.edges["c0"].is_loop
    g, pieces = dual_tree(*_cut("genus1_nonseparating.json"))
    assert len(g.vertices) == 1 and g.edges["c0"].is_loop
    assert pieces["p0"] == parse_sig(PANTS)


def test_dual_tree_additivity_on_fixtures():
    for path in sorted((FIXTURES / "cuts").glob("*.json")):
        sig, cut = _cut(path.name)
        dual_tree(sig, cut)
        assert sum(euler_characteristic(p).chi for p in cut.pieces) == euler_characteristic(sig).chi


def test_dual_tree_chi_deficit():
    sig = parse_sig("sig(g=2, or=true)")
    pieces = (parse_sig("sig(g=1, or=true, bd=[B])"), parse_sig("sig(g=1, or=true, bd=[B], cones=[2])"))
    cut = CutSystem(pieces, (((0, 0), (1, 0)),))
    with pytest.raises(OrbifoldError, match="deficit"):
        dual_tree(sig, cut)


def test_one_sided_curve_rejected():
    sig = parse_sig("sig(g=1, or=false)")
    cut = CutSystem((parse_sig("sig(g=0, or=true, bd=[B])"),), (((0, 0),),))
    with pytest.raises(OrbifoldError, match="one-sided"):
        dual_tree(sig, cut)


def test_fill_examples():
    g = load("bs12.gog")
    assert fill(g, []) == GraphOfGroups({"v": Quotient(g)})
    star = fill(g, [(Z, "R1"), (FiniteCyclic(2), "R2")])
    assert len(star.vertices) == 3 and len(star.edges) == 2
    assert marks_of(star) == [(Z, "R1"), (FiniteCyclic(2), "R2")]
    assert star_universally_elliptic(star)
    assert unfill(star) == g
    with pytest.raises(OrbifoldError):
        fill(g, [(Z, "not a name")])
    with pytest.raises(OrbifoldError):
        fill(g, [Z])


def test_fill_round_trip_on_corpus():
    for path in sorted(FIXTURES.glob("*.gog")):
        g = load(path.name)
        star = fill(g, [(Z, "R1"), (Trivial(), "R2")])
        (inner,) = [lab.inner for lab in total_collapse(star).vertices.values()]
        assert same_label_structure(unfill(inner), g), path.name


def _qh_star():
    centre = point_graph(Atom("Q"), "q")
    return fill(centre, [(Z, "R1"), (Z, "R2")])


def test_qh_star_validates():
    star = _qh_star()
    data = QhData(Trivial(), parse_sig("sig(g=1, or=true, bd=[B, B])"),
                  {"e1": InBoundary(0), "e2": InBoundary(1)})
    report = validate_qh(star, "v", data)
    assert report.is_qh and report.used == (0, 1) and report.unused == ()
    assert report.flexibility == "Yes"
    assert star_universally_elliptic(star)


def test_unused_component_reported():
    star = _qh_star()
    data = QhData(Trivial(), parse_sig("sig(g=1, or=true, bd=[B, B])"),
                  {"e1": InBoundary(0), "e2": InBoundary(0, finite_index=False)})
    report = validate_qh(star, "v", data)
    assert report.is_qh and report.unused == (1,)


def test_pants_is_never_flexible():
    star = _qh_star()
    data = QhData(Trivial(), parse_sig(PANTS), {"e1": InBoundary(0), "e2": FiniteImage()})
    report = validate_qh(star, "v", data)
    assert report.is_qh and report.flexibility == "No"


def test_unconstrained_and_missing_assignments():
    star = _qh_star()
    sig = parse_sig("sig(g=1, or=true, bd=[B, B])")
    bad = validate_qh(star, "v", QhData(Trivial(), sig, {"e1": InBoundary(0), "e2": Unconstrained()}))
    assert not bad.is_qh and bad.problems
    with pytest.raises(OrbifoldError, match="missing"):
        validate_qh(star, "v", QhData(Trivial(), sig, {"e1": InBoundary(0)}))
    with pytest.raises(OrbifoldError):
        validate_qh(star, "v", QhData(Trivial(), sig, {"e1": InBoundary(5), "e2": FiniteImage()}))


@given(st.sets(st.sampled_from(["e1", "e2"])))
def test_used_set_monotone(extra):
    star = _qh_star()
    sig = parse_sig("sig(g=1, or=true, bd=[B, B])")
    base = {"e1": FiniteImage(), "e2": FiniteImage()}
    more = dict(base)
    for i, k in enumerate(sorted(extra)):
        more[k] = InBoundary(i)
    assert set(validate_qh(star, "v", QhData(Trivial(), sig, base)).used) <= \
        set(validate_qh(star, "v", QhData(Trivial(), sig, more)).used)


def test_no_scc_means_not_flexible():
    for text in (PANTS, "sig(g=0, or=true, cones=[2, 3, 7])", "sig(g=0, or=true, bd=[B], cones=[2, 3])"):
        sig = parse_sig(text)
        if has_essential_scc(sig) == "No":
            assert flexibility(sig, Trivial()) == "No"


def test_signature_render_round_trip():
    for text in (PANTS, "sig(g=2, or=false, bd=[B-M-2-M], cones=[3])", "sig(g=0, or=true, mirrors=[M-2-M-3-M-7])"):
        sig = parse_sig(text)
        assert parse_sig(sig.render()) == sig


def test_parse_sig_errors():
    for bad in ("sig(g=1, colour=red)", "orbifold(g=1)", "sig(g=0, cones=[x])", "sig(mirrors=[B])"):
        with pytest.raises(OrbifoldError):
            parse_sig(bad)
