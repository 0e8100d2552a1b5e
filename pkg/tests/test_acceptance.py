"""Acceptance suite: one test per criterion, each recording a pass/fail line
that is printed in the terminal summary."""

import json
import time
from fractions import Fraction
from random import Random

from conftest import FIXTURES, load, record

from bassserre.gbs import (
    Bounds,
    canonical_graph,
    classify_gbs,
    connect_search,
)
from bassserre.gog import parse_gog, point_graph, seg_graph, loop_graph, serialize_gog
from bassserre.grushko import grushko_compare
from bassserre.labels import Atom, InfCyclic, Product, Quotient, CyclicMult, TRIV, finite_cyclic
from bassserre.moves import (
    VertexPlan,
    apply_move,
    collapse_edges,
    refine_elliptic,
    same_label_structure,
    total_collapse,
    transport_collapse,
    transport_word,
)
from bassserre.qh import (
    CutSystem,
    dual_tree,
    euler_characteristic,
    fill,
    has_essential_scc,
    parse_sig,
    unfill,
)
from bassserre.sampling import random_gbs, random_move, random_word
from bassserre.words import conjugate, is_elliptic, power, reduce_word

Z = InfCyclic()


# -- 1 ------------------------------------------------------------------------------


def test_criterion_1_gbs_classification_table():
    table = [
        (loop_graph(1, 1, "v", "e"), ("Z2", "NoNontrivialUniversallyElliptic")),
        (loop_graph(1, -1, "v", "e"), ("KleinHNN", "TwoSpacesNoJSJ")),
        (seg_graph(2, 2, "u", "v", "e"), ("KleinAmalgam", "TwoSpacesNoJSJ")),
        (loop_graph(1, 2, "v", "e"), ("NonElementary", "OwnSpaceIsJSJ")),
        (loop_graph(1, 3, "v", "e"), ("NonElementary", "OwnSpaceIsJSJ")),
        (loop_graph(1, 5, "v", "e"), ("NonElementary", "OwnSpaceIsJSJ")),
        (point_graph(Z, "v"), ("Z", "Trivial")),
    ]
    start = time.perf_counter()
    got = [(lambda c: (c.kind, c.jsj_verdict))(classify_gbs(g)) for g, _ in table]
    elapsed = time.perf_counter() - start
    mismatches = [(serialize_gog(g, "inline"), want, have)
                  for (g, want), have in zip(table, got) if want != have]
    ok = not mismatches and elapsed < 1.0
    record(1, ok, f"{len(table) - len(mismatches)}/{len(table)} rows match in {elapsed:.3f}s (limit 1s)")
    assert not mismatches
    assert elapsed < 1.0


# -- 2 ------------------------------------------------------------------------------


def test_criterion_2_word_calculus_properties():
    rng = Random(20240601)
    violations = []
    hyperbolic = 0
    start = time.perf_counter()
    n_words = 0
    while n_words < 1000:
        g = random_gbs(rng, max_edges=6, max_label=9)
        for _ in range(10):
            w = random_word(g, rng, rng.randint(0, 8))
            n_words += 1
            for cyclic in (False, True):
                r = reduce_word(g, w, cyclic=cyclic)
                if reduce_word(g, r, cyclic=cyclic) != r:
                    violations.append(("idempotence", cyclic, w))
            v = is_elliptic(g, w)
            c = random_word(g, rng, rng.randint(0, 5))
            vc = is_elliptic(g, conjugate(g, c, w))
            if (v.status, v.translation_length) != (vc.status, vc.translation_length):
                violations.append(("conjugation", c, w))
            if v.hyperbolic:
                hyperbolic += 1
                for n in range(2, 6):
                    vn = is_elliptic(g, power(g, w, n))
                    if vn.translation_length != n * v.translation_length:
                        violations.append(("power", n, w))
    elapsed = time.perf_counter() - start
    ok = not violations and elapsed < 10.0
    record(2, ok, f"{n_words} words ({hyperbolic} hyperbolic), {len(violations)} violations, "
                  f"{elapsed:.2f}s (limit 10s)")
    assert not violations, violations[:3]
    assert elapsed < 10.0


# -- 3 ------------------------------------------------------------------------------


def test_criterion_3_move_invariance():
    rng = Random(7)
    violations = []
    kinds = {}
    for _ in range(200):
        g = random_gbs(rng)
        m = random_move(g, rng)
        kinds[type(m).__name__] = kinds.get(type(m).__name__, 0) + 1
        h = apply_move(g, m)
        for _ in range(20):
            w = random_word(g, rng, rng.randint(0, 8))
            if is_elliptic(g, w).status != is_elliptic(h, transport_word(g, m, w)).status:
                violations.append((g, m, w))
    mix = ", ".join(f"{k}={v}" for k, v in sorted(kinds.items()))
    record(3, not violations, f"200 triples x 20 words ({mix}), {len(violations)} violations")
    assert not violations


# -- 4 ------------------------------------------------------------------------------


def _status_after_collapse(g, edges, w):
    if not edges:
        return is_elliptic(g, w).status
    return is_elliptic(collapse_edges(g, edges), transport_collapse(g, edges, w)).status


def test_criterion_4_partition_collapse():
    rng = Random(11)
    violations = []
    both = 0
    for _ in range(200):
        g = random_gbs(rng)
        while len(g.edges) < 2:
            g = random_gbs(rng)
        ids = sorted(g.edges)
        rng.shuffle(ids)
        cut = rng.randint(1, len(ids) - 1)
        e1, e2 = set(ids[:cut]), set(ids[cut:])
        w = random_word(g, rng, rng.randint(0, 8))
        # T1 keeps e1 (collapses e2); T2 keeps e2 (collapses e1)
        s1 = _status_after_collapse(g, e2, w)
        s2 = _status_after_collapse(g, e1, w)
        if s1 == "Elliptic" and s2 == "Elliptic":
            both += 1
            if is_elliptic(g, w).status != "Elliptic":
                violations.append((g, e1, w))
    record(4, not violations, f"200 triples ({both} elliptic in both collapses), {len(violations)} violations")
    assert not violations


# -- 5 ------------------------------------------------------------------------------


def _identity_plan(t1, v):
    inner = t1.vertices[v].inner
    att = {}
    for fid, side in t1.incident_ends(v):
        inj = t1.edges[fid].injection_at(side)
        att[(fid, side)] = (inj.tag, inj.inner)
    return VertexPlan(inner, att)


def _collapse_plans(name, edges):
    t1 = collapse_edges(load(name), edges)
    return t1, {v: _identity_plan(t1, v) for v, lab in t1.vertices.items() if isinstance(lab, Quotient)}


def _refinement_cases():
    cases = [
        ("Grushko blow-up of star centre", *_collapse_plans("grushko_star.gog", {"a", "l1"})),
        ("Grushko blow-up of chain middle", *_collapse_plans("grushko_chain.gog", {"a", "b"})),
        ("Grushko blow-up of a rank-one atom", *_collapse_plans("grushko_chain.gog", {"l1"})),
        ("GBS identity plan, theta", *_collapse_plans("gbs_theta.gog", {"e"})),
        ("GBS identity plan, triangle", *_collapse_plans("gbs_triangle.gog", {"e", "f"})),
    ]
    # Z = Z *_Z Z with labels 1 and 3: both loop ends land on the onto side
    bs12 = load("bs12.gog")
    split = parse_gog("vertex x Z\nvertex y Z\nedge s x y Z *1 *3\n")
    cases.append(("GBS segment plan on BS(1,2)", bs12,
                  {"v": VertexPlan(split, {("e", "o"): ("x", CyclicMult(1)), ("e", "t"): ("x", CyclicMult(2))})}))
    return cases


def test_criterion_5_refinement_postconditions():
    failures = []
    checked = 0
    for name, t1, plan in _refinement_cases():
        _, report = refine_elliptic(t1, plan, n_samples=50, seed=5)
        checked += report.samples_checked - report.unknown_samples
        if not report.ok or report.samples_checked != 50:
            failures.append((name, report))
    n = len(_refinement_cases())
    record(5, not failures, f"{n} plans, {checked} sampled words decided, {len(failures)} failing plans")
    assert n >= 5
    assert not failures, failures


# -- 6 ------------------------------------------------------------------------------


def test_criterion_6_grushko_compare():
    star, chain = load("grushko_star.gog"), load("grushko_chain.gog")
    renamed = parse_gog(FIXTURES.joinpath("grushko_chain.gog").read_text().replace("G2", "G3"))
    rank_down = parse_gog("".join(line for line in FIXTURES.joinpath("grushko_chain.gog").read_text()
                                  .splitlines(keepends=True) if not line.startswith("edge l2")))
    got = (grushko_compare(star, chain), grushko_compare(star, renamed), grushko_compare(star, rank_down))
    want = ("SameSpace", "DifferentSpace", "DifferentSpace")
    record(6, got == want, f"star/chain, renamed atom, lowered rank -> {', '.join(got)}")
    assert got == want


# -- 7 ------------------------------------------------------------------------------


def test_criterion_7_qh_suite():
    checks = {}
    pants = parse_sig("sig(g=0, or=true, bd=[B, B, B])")
    checks["chi(pants) = -1"] = euler_characteristic(pants).chi == Fraction(-1)
    checks["scc(pants) = No"] = has_essential_scc(pants) == "No"
    checks["scc(genus 1, one boundary) = Yes"] = has_essential_scc(parse_sig("sig(g=1, or=true, bd=[B])")) == "Yes"

    additive = 0
    for path in sorted((FIXTURES / "cuts").glob("*.json")):
        data = json.loads(path.read_text())
        sig = parse_sig(data["sig"])
        pieces = tuple(parse_sig(p) for p in data["pieces"])
        curves = tuple(tuple(tuple(end) for end in c) for c in data["curves"])
        g, _ = dual_tree(sig, CutSystem(pieces, curves))
        total = sum(euler_characteristic(p).chi for p in pieces)
        if total == euler_characteristic(sig).chi and len(g.edges) == len(curves):
            additive += 1
    checks["dual_tree chi additivity on >= 3 cut systems"] = additive >= 3

    g = load("bs12.gog")
    h1, h2 = Z, finite_cyclic(2)
    star = fill(g, [(h1, "R1"), (h2, "R2")])
    leaves_ok = (
        star.vertices["v"] == Quotient(g)
        and star.vertices["v1"] == Product((h1, Atom("R1", frozenset({"property_fa"}))))
        and star.vertices["v2"] == Product((h2, Atom("R2", frozenset({"property_fa"}))))
        and [(e.origin, e.terminus, e.label) for _, e in sorted(star.edges.items())]
        == [("v", "v1", h1), ("v", "v2", h2)]
    )
    checks["fill(p=2) is the star"] = leaves_ok
    collapsed = total_collapse(star)
    (only,) = collapsed.vertices.values()
    checks["fill round-trips under total collapse"] = (
        not collapsed.edges and isinstance(only, Quotient) and only.inner == star
        and unfill(only.inner) == g and same_label_structure(only.inner.vertices["v"].inner, g)
    )
    failed = [k for k, v in checks.items() if not v]
    record(7, not failed, f"{len(checks) - len(failed)}/{len(checks)} checks" + (f"; failed: {failed}" if failed else ""))
    assert not failed


# -- 8 ------------------------------------------------------------------------------


def test_criterion_8_connect_soundness():
    start = time.perf_counter()
    rng = Random(3)
    bounds = Bounds(max_size=6, max_depth=4)
    replay_failures = []
    equivalent = 0
    for _ in range(40):
        a = random_gbs(rng, max_edges=3, max_label=6, max_vertices=3)
        b = a
        for _ in range(rng.randint(1, 2)):
            b = apply_move(b, random_move(b, rng))
        r = connect_search(a, b, bounds)
        if r.status == "Equivalent":
            equivalent += 1
            replayed = serialize_gog(canonical_graph(r.certificate.replay()))
            if replayed != serialize_gog(canonical_graph(b)):
                replay_failures.append((a, b))
    distinct = connect_search(loop_graph(1, 2, "v", "e"), loop_graph(1, 3, "v", "e"), bounds)
    seg = connect_search(seg_graph(1, 3, "u", "v", "e"), point_graph(Z, "v"), bounds)
    elapsed = time.perf_counter() - start
    checks = {
        "replays": not replay_failures and equivalent > 0,
        "loop(1,2) vs loop(1,3) Distinct via modular image":
            distinct.status == "Distinct" and distinct.witness[0] == "modular_image",
        "seg(1,3) vs point Equivalent at depth 1":
            seg.status == "Equivalent" and len(seg.certificate.script) == 1
            and seg.certificate.replay() == point_graph(Z, "v"),
        "under 5s": elapsed < 5.0,
    }
    failed = [k for k, v in checks.items() if not v]
    record(8, not failed, f"{equivalent} certificates replayed, {len(replay_failures)} mismatches, "
                          f"{elapsed:.2f}s" + (f"; failed: {failed}" if failed else ""))
    assert not failed


# -- 9 ------------------------------------------------------------------------------


def test_criterion_9_parser_round_trip():
    files = sorted(FIXTURES.glob("*.gog"))
    bad = [p.name for p in files if serialize_gog(parse_gog(p.read_text())) != p.read_text()]
    ok = len(files) >= 20 and not bad
    record(9, ok, f"{len(files) - len(bad)}/{len(files)} fixtures byte-exact")
    assert len(files) >= 20
    assert not bad
