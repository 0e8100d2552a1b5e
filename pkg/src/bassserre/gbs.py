"""Generalized Baumslag-Solitar graphs: modular homomorphism, elementary
classification and a bounded search for deformation equivalence."""

from __future__ import annotations

import os
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from itertools import permutations, product
from typing import Dict, List, Optional, Sequence, Tuple

from sympy import Matrix, factorint
from sympy.matrices.normalforms import hermite_normal_form

from .gog import Edge, GraphOfGroups, invert_letter, letter_end, tree_paths
from .labels import CyclicMult, InfCyclic
from .moves import (
    Certificate,
    DeformationCollapse,
    Expansion,
    Move,
    MoveError,
    Slide,
    apply_move,
    inverse_move,
    legal_collapses,
    legal_slides,
    reduce_graph,
    render_move,
)
from .words import LoopWord

DEFAULT_BOUNDS_ENV = "BASSSERRE_BOUNDS"


class GbsError(ValueError):
    pass


def check_gbs(g: GraphOfGroups) -> None:
    for v, lab in g.vertices.items():
        if not isinstance(lab, InfCyclic):
            raise GbsError(f"vertex {v} is not labelled Z")
    for eid, e in g.edges.items():
        if not (isinstance(e.label, InfCyclic) and isinstance(e.inj_origin, CyclicMult)
                and isinstance(e.inj_terminus, CyclicMult)):
            raise GbsError(f"edge {eid} is not a Z edge with *k injections")


def labels(g: GraphOfGroups, eid: str) -> Tuple[int, int]:
    e = g.edges[eid]
    return e.inj_origin.multiplier, e.inj_terminus.multiplier


# -- modular homomorphism ----------------------------------------------------------


def modular(g: GraphOfGroups, w: LoopWord) -> Fraction:
    """Product over the letters of (label where the letter starts) / (label where it ends).

    The stable letter of a loop with labels (l, m) maps to m/l; vertex
    elements map to 1.
    """
    check_gbs(g)
    value = Fraction(1)
    for eid, rev in w.letters:
        lam, mu = labels(g, eid)
        value *= Fraction(lam, mu) if rev else Fraction(mu, lam)
    return value


def basis_loops(g: GraphOfGroups) -> List[LoopWord]:
    """One loop per edge outside the BFS spanning tree at the base."""
    paths, tree = tree_paths(g, g.base)
    out = []
    for eid in g.edges:
        if eid in tree:
            continue
        e = g.edges[eid]
        letters = paths[e.origin] + [(eid, True)] + [invert_letter(L) for L in reversed(paths[e.terminus])]
        out.append(LoopWord(g.base, (0,) * (len(letters) + 1), tuple(letters)))
    return out


@dataclass(frozen=True)
class ModularImage:
    """Subgroup of the nonzero rationals, as the Hermite normal form of the
    lattice (sign mod 2, prime exponents) its generators span."""

    primes: Tuple[int, ...]
    hnf: Tuple[Tuple[int, ...], ...]  # columns
    generators: Tuple[Fraction, ...]

    def key(self):
        return self.primes, self.hnf

    def __eq__(self, other):
        return isinstance(other, ModularImage) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def describe(self) -> str:
        """Generators read off the HNF columns, so equal images print alike."""
        gens = []
        for col in self.hnf:
            q = Fraction(-1 if col[0] % 2 else 1)
            for p, k in zip(self.primes, col[1:]):
                q *= Fraction(p) ** k
            if q != 1:
                # a subgroup contains inverses, so show each generator with |q| >= 1
                gens.append(str(q if abs(q) >= 1 else 1 / q))
        return "<" + ", ".join(gens) + ">" if gens else "<1>"


def _exponents(q: Fraction) -> Dict[int, int]:
    out: Dict[int, int] = {}
    for p, k in factorint(abs(q.numerator)).items():
        out[p] = out.get(p, 0) + k
    for p, k in factorint(q.denominator).items():
        out[p] = out.get(p, 0) - k
    return {p: k for p, k in out.items() if k}


def subgroup_of_rationals(gens: Sequence[Fraction]) -> ModularImage:
    exps = [_exponents(q) for q in gens]
    primes = tuple(sorted({p for e in exps for p in e}))
    cols = [[1 if q < 0 else 0] + [e.get(p, 0) for p in primes] for q, e in zip(gens, exps)]
    cols.append([2] + [0] * len(primes))
    m = Matrix(cols).T
    h = hermite_normal_form(m)
    hnf = tuple(tuple(int(h[i, j]) for i in range(h.rows)) for j in range(h.cols))
    return ModularImage(primes, hnf, tuple(gens))


def modular_image(g: GraphOfGroups) -> ModularImage:
    return subgroup_of_rationals([modular(g, w) for w in basis_loops(g)])


# -- classification ----------------------------------------------------------------


@dataclass(frozen=True)
class GbsClassification:
    kind: str  # Z | Z2 | KleinHNN | KleinAmalgam | NonElementary
    jsj_verdict: str  # Trivial | NoNontrivialUniversallyElliptic | TwoSpacesNoJSJ | OwnSpaceIsJSJ


_VERDICT = {
    "Z": "Trivial",
    "Z2": "NoNontrivialUniversallyElliptic",
    "KleinHNN": "TwoSpacesNoJSJ",
    "KleinAmalgam": "TwoSpacesNoJSJ",
    "NonElementary": "OwnSpaceIsJSJ",
}


def classify_gbs(g: GraphOfGroups) -> GbsClassification:
    """Elementary cases are read off the reduced graph; everything else has
    its own deformation space as JSJ space."""
    check_gbs(g)
    r, _ = reduce_graph(g)
    kind = "NonElementary"
    if not r.edges:
        kind = "Z"
    elif len(r.edges) == 1:
        (eid, e), = r.edges.items()
        lam, mu = labels(r, eid)
        if e.is_loop and abs(lam) == 1 and abs(mu) == 1:
            kind = "Z2" if lam == mu else "KleinHNN"
        elif not e.is_loop and abs(lam) == 2 and abs(mu) == 2:
            kind = "KleinAmalgam"
    return GbsClassification(kind, _VERDICT[kind])


# -- canonical forms ---------------------------------------------------------------


@dataclass(frozen=True)
class _Canon:
    key: tuple
    order: Tuple[str, ...]  # vertex ids in canonical position order
    signs: Dict[str, int]
    # edge id -> (canonical index, reversed, edge sign)
    edge_pos: Dict[str, Tuple[int, bool, int]]


def _vertex_invariant(g: GraphOfGroups, v: str):
    ends = sorted(abs(g.edges[eid].injection_at(side).multiplier) for eid, side in g.incident_ends(v))
    loops = sum(1 for e in g.edges.values() if e.origin == v and e.terminus == v)
    return (len(ends), loops, tuple(ends))


def _edge_form(pos_o, pos_t, lam, mu):
    best = None
    for rev in (False, True):
        a, b, x, y = (pos_o, pos_t, lam, mu) if not rev else (pos_t, pos_o, mu, lam)
        for sign in (1, -1):
            cand = (a, b, sign * x, sign * y)
            if best is None or cand < best[0]:
                best = (cand, rev, sign)
    return best


def canonical(g: GraphOfGroups) -> _Canon:
    """Least edge list over vertex relabellings (within invariant classes),
    generator signs at vertices, and edge orientation/sign."""
    check_gbs(g)
    inv = {v: _vertex_invariant(g, v) for v in g.vertices}
    classes: Dict[tuple, List[str]] = {}
    for v in sorted(g.vertices, key=lambda v: (inv[v], v)):
        classes.setdefault(inv[v], []).append(v)
    class_list = [classes[k] for k in sorted(classes)]
    best = None
    for perms in product(*(permutations(c) for c in class_list)):
        order = [v for p in perms for v in p]
        pos = {v: i for i, v in enumerate(order)}
        for bits in product((1, -1), repeat=len(order) - 1):
            signs = dict(zip(order, (1,) + bits))
            forms = []
            for eid, e in g.edges.items():
                lam, mu = labels(g, eid)
                form, rev, sgn = _edge_form(pos[e.origin], pos[e.terminus],
                                            signs[e.origin] * lam, signs[e.terminus] * mu)
                forms.append((form, eid, rev, sgn))
            forms.sort()
            key = (len(order), tuple(f[0] for f in forms))
            if best is None or key < best[0]:
                best = (key, tuple(order), signs, forms)
    key, order, signs, forms = best
    edge_pos = {eid: (i, rev, sgn) for i, (_, eid, rev, sgn) in enumerate(forms)}
    return _Canon(key, order, signs, edge_pos)


def canonical_key(g: GraphOfGroups) -> tuple:
    return canonical(g).key


def canonical_graph(g: GraphOfGroups) -> GraphOfGroups:
    """The canonical representative with vertices v0.. and edges e0.."""
    key = canonical(g).key
    n, forms = key
    width = max(1, len(str(max(n, len(forms)) - 1)))
    vname = [f"v{i:0{width}d}" for i in range(n)]
    edges = {f"e{i:0{width}d}": Edge(vname[a], vname[b], InfCyclic(), CyclicMult(x), CyclicMult(y))
             for i, (a, b, x, y) in enumerate(forms)}
    return GraphOfGroups({v: InfCyclic() for v in vname}, edges)


def equal_up_to_canonical(a: GraphOfGroups, b: GraphOfGroups) -> bool:
    return canonical_key(a) == canonical_key(b)


def _translate(move: Move, src: GraphOfGroups, dst: GraphOfGroups) -> Move:
    """Rewrite a move valid on ``dst`` as a move on the isomorphic ``src``."""
    cs, cd = canonical(src), canonical(dst)
    vmap = dict(zip(cd.order, cs.order))  # dst vertex -> src vertex
    vsign = {vd: cd.signs[vd] * cs.signs[vmap[vd]] for vd in cd.order}
    by_index = {idx: (eid, rev, sgn) for eid, (idx, rev, sgn) in cs.edge_pos.items()}
    emap = {}
    for eid, (idx, rev, sgn) in cd.edge_pos.items():
        s_eid, s_rev, _ = by_index[idx]
        emap[eid] = (s_eid, rev != s_rev)

    def end(e):
        s_eid, flip = emap[e[0]]
        side = e[1] if not flip else ("t" if e[1] == "o" else "o")
        return (s_eid, side)

    if isinstance(move, DeformationCollapse):
        return DeformationCollapse(emap[move.edge][0], vmap[move.into] if move.into else None)
    if isinstance(move, Slide):
        s_eid, flip = emap[move.across]
        fwd = True if move.forward is None else move.forward
        if move.forward is None:
            fwd = dst.edges[move.across].vertex_at("o") == dst.edges[move.end[0]].vertex_at(move.end[1])
        return Slide(end(move.end), s_eid, fwd != flip)
    if isinstance(move, Expansion):
        v = vmap[move.vertex]
        mu = move.inj_old.multiplier * vsign[move.vertex]
        from .moves import fresh_name
        u = fresh_name(src.vertices, move.new_vertex)
        n = fresh_name(src.edges, move.new_edge)
        return Expansion(v, u, n, move.label, move.inj_new, CyclicMult(mu),
                         tuple((end(e), None) for e, _ in move.moved), move.new_is_origin)
    raise GbsError(f"cannot translate {move!r}")


# -- search ------------------------------------------------------------------------


@dataclass(frozen=True)
class Bounds:
    max_size: int = 6
    max_depth: int = 4

    @classmethod
    def from_env(cls) -> "Bounds":
        raw = os.environ.get(DEFAULT_BOUNDS_ENV, "")
        vals = {}
        for part in filter(None, raw.split(",")):
            k, _, v = part.partition("=")
            vals[k.strip().replace("-", "_")] = int(v)
        return cls(**vals)


@dataclass(frozen=True)
class ConnectResult:
    status: str  # Equivalent | Distinct | Unknown
    certificate: Optional[Certificate] = None
    witness: Optional[Tuple[str, str, str]] = None  # (invariant, value a, value b)
    explored: int = 0


def distinguishing_invariant(a: GraphOfGroups, b: GraphOfGroups) -> Optional[Tuple[str, str, str]]:
    ca, cb = classify_gbs(a), classify_gbs(b)
    if ca != cb:
        return ("classification", ca.kind, cb.kind)
    ba, bb = a.betti_number(), b.betti_number()
    if ba != bb:
        return ("betti_number", str(ba), str(bb))
    ma, mb = modular_image(a), modular_image(b)
    if ma != mb:
        return ("modular_image", ma.describe(), mb.describe())
    return None


def search_moves(g: GraphOfGroups, max_size: int) -> List[Move]:
    """Collapses, slides, and expansions (new edge labelled 1 and mu >= 2)."""
    from .sampling import gbs_expansions
    moves: List[Move] = list(legal_collapses(g)) + list(legal_slides(g))
    if len(g.edges) < max_size:
        moves += gbs_expansions(g)
    return sorted(moves, key=render_move)


def connect_search(a: GraphOfGroups, b: GraphOfGroups, bounds: Optional[Bounds] = None) -> ConnectResult:
    """Decide deformation equivalence of two GBS graphs within bounds.

    Invariants are compared first; if they agree, a bidirectional
    breadth-first search over canonical forms looks for a move sequence of
    length at most ``max_depth`` through graphs with at most ``max_size``
    edges.  The certificate is deterministic: successors are explored in
    sorted move order.
    """
    check_gbs(a)
    check_gbs(b)
    bounds = bounds or Bounds.from_env()
    if bounds.max_size < 1 or bounds.max_depth < 0:
        raise GbsError("bounds must be positive")
    witness = distinguishing_invariant(a, b)
    if witness:
        return ConnectResult("Distinct", witness=witness)
    ka, kb = canonical_key(a), canonical_key(b)
    if ka == kb:
        return ConnectResult("Equivalent", Certificate(a, b, ()))
    # key -> (graph, parent key, move from parent graph)
    seen = [{ka: (a, None, None)}, {kb: (b, None, None)}]
    frontier = [[ka], [kb]]
    depth = [0, 0]
    explored = 2
    while depth[0] + depth[1] < bounds.max_depth and (frontier[0] or frontier[1]):
        side = 0 if (depth[0] <= depth[1] and frontier[0]) or not frontier[1] else 1
        nxt = []
        meet = None
        for key in frontier[side]:
            g = seen[side][key][0]
            for m in search_moves(g, bounds.max_size):
                try:
                    h = apply_move(g, m)
                except MoveError:
                    continue
                kh = canonical_key(h)
                if kh in seen[side]:
                    continue
                seen[side][kh] = (h, key, m)
                explored += 1
                nxt.append(kh)
                if kh in seen[1 - side]:
                    meet = kh
                    break
            if meet:
                break
        # a side with no successors adds no level to any path
        if nxt:
            depth[side] += 1
        frontier[side] = nxt
        if meet:
            cert = _certificate(a, b, seen, meet)
            return ConnectResult("Equivalent", cert, explored=explored)
    return ConnectResult("Unknown", explored=explored)


def _chain(seen: dict, key) -> List[Tuple[GraphOfGroups, Optional[Move]]]:
    out = []
    while key is not None:
        g, parent, m = seen[key]
        out.append((g, m))
        key = parent
    return list(reversed(out))


def _certificate(a, b, seen, meet) -> Certificate:
    fwd = _chain(seen[0], meet)
    script: List[Move] = [m for _, m in fwd[1:]]
    current = fwd[-1][0]
    bwd = _chain(seen[1], meet)  # b -> ... -> y(meet)
    # walk back from the meeting graph to b, replaying inverses on our side
    for i in range(len(bwd) - 1, 0, -1):
        prev_g, _ = bwd[i - 1]
        y, m = bwd[i]
        inv = inverse_move(prev_g, m)  # valid on y
        moved = _translate(inv, current, y)
        current = apply_move(current, moved)
        script.append(moved)
    return Certificate(a, b, tuple(script))


def verify_certificate(cert: Certificate) -> bool:
    """Replay and compare canonical representatives."""
    return canonical_graph(cert.replay()) == canonical_graph(cert.target)
