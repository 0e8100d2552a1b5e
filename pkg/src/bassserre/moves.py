"""Deformation moves, general collapses, reduction and refinements.

Every elementary move comes with a word transport: a homomorphism between
the fundamental groups of the graph before and after the move, computed
letter by letter.  Deformation moves preserve elliptic subgroups, so the
status of a word and of its transport agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from ._lexer import TokenStream
from .gog import (
    Edge,
    End,
    GraphOfGroups,
    Letter,
    SemanticError,
    _parse_injection,
    _parse_label,
    end_side,
    invert_letter,
    letter_end,
    letter_start,
    other_side,
    render_injection,
    render_label,
    start_side,
    tree_paths,
)
from .labels import (
    ClassSpec,
    GroupLabel,
    Injection,
    LabelError,
    NamedEmbedding,
    Quotient,
    check_injection,
    compose,
    factor,
    identity_injection,
    is_onto,
)
from .words import (
    LoopWord,
    _path_element,
    apply_injection,
    concat,
    identity,
    is_elliptic,
    multiply,
    preimage,
)


class MoveError(ValueError):
    pass


@dataclass(frozen=True)
class DeformationCollapse:
    """Collapse a non-loop edge one of whose injections is onto.

    ``into`` names the surviving endpoint; by default the origin is absorbed
    into the terminus when the origin injection is onto, otherwise the
    terminus into the origin.
    """

    edge: str
    into: Optional[str] = None


@dataclass(frozen=True)
class Expansion:
    """Split ``vertex`` by a new edge to a new vertex carrying the ends in ``moved``.

    The new edge has group ``label``, maps onto the new vertex via ``inj_new``
    and into ``vertex`` via ``inj_old``.  Each moved end may carry its new
    injection explicitly; otherwise it is computed by factoring through the
    new edge group.
    """

    vertex: str
    new_vertex: str
    new_edge: str
    label: GroupLabel
    inj_new: Injection
    inj_old: Injection
    moved: Tuple[Tuple[End, Optional[Injection]], ...] = ()
    new_is_origin: bool = True
    new_vertex_label: Optional[GroupLabel] = None

    def __post_init__(self):
        object.__setattr__(self, "moved", tuple(
            (tuple(end), inj) for end, inj in sorted(self.moved, key=lambda m: m[0])))


@dataclass(frozen=True)
class Slide:
    """Slide the end ``end`` of an edge across edge ``across``.

    ``forward`` means travelling from the origin of ``across`` to its
    terminus; it may be omitted unless ``across`` is a loop.
    """

    end: End
    across: str
    forward: Optional[bool] = None

    def __post_init__(self):
        object.__setattr__(self, "end", tuple(self.end))


@dataclass(frozen=True)
class Subdivide:
    edge: str


Move = Union[DeformationCollapse, Expansion, Slide, Subdivide]


# -- helpers -----------------------------------------------------------------------


def fresh_name(taken: Iterable[str], stem: str) -> str:
    taken = set(taken)
    if stem not in taken:
        return stem
    i = 2
    while f"{stem}{i}" in taken:
        i += 1
    return f"{stem}{i}"


@dataclass
class _Transport:
    vertex_map: Callable[[str], str]
    element_map: Callable[[str, object], object]
    letter_map: Callable[[Letter], List[Letter]]


def _build(new: GraphOfGroups, tr: _Transport, old: GraphOfGroups, w: LoopWord) -> LoopWord:
    verts = w.vertex_path(old)
    base = tr.vertex_map(w.base)
    elements = [identity(new.vertices[base])]
    letters: List[Letter] = []
    current = base

    def put(v_old, x):
        nonlocal current
        v_new = tr.vertex_map(v_old)
        if v_new != current:
            raise MoveError(f"transport lost the path: expected {current}, got {v_new}")
        y = tr.element_map(v_old, x)
        elements[-1] = multiply(new.vertices[current], elements[-1], y)

    for i, x in enumerate(w.elements):
        put(verts[i], x)
        if i < w.length:
            for L in tr.letter_map(w.letters[i]):
                if letter_start(new, L) != current:
                    raise MoveError(f"transport produced a broken path at {L}")
                letters.append(L)
                current = letter_end(new, L)
                elements.append(identity(new.vertices[current]))
    return LoopWord(base, tuple(elements), tuple(letters))


def _identity_map(v, x):
    return x


# -- collapse ----------------------------------------------------------------------


def _collapse_sides(g: GraphOfGroups, m: DeformationCollapse) -> Tuple[str, str]:
    """Return (removed side, kept side) for a deformation collapse."""
    if m.edge not in g.edges:
        raise MoveError(f"collapse: unknown edge {m.edge!r}")
    e = g.edges[m.edge]
    if e.is_loop:
        raise MoveError(f"collapse: edge {m.edge} is a loop; loops never deformation-collapse")
    onto = {s: is_onto(e.injection_at(s), e.label, g.vertices[e.vertex_at(s)]) for s in ("o", "t")}
    if m.into is None:
        if onto["o"]:
            return "o", "t"
        if onto["t"]:
            return "t", "o"
        raise MoveError(f"collapse requires onto injection: neither end of {m.edge} is onto")
    if m.into not in (e.origin, e.terminus):
        raise MoveError(f"collapse: {m.into!r} is not an endpoint of {m.edge}")
    kept = "o" if m.into == e.origin else "t"
    removed = other_side(kept)
    if not onto[removed]:
        raise MoveError(
            f"collapse requires onto injection at {e.vertex_at(removed)} to merge it into {m.into}")
    return removed, kept


def _apply_collapse(g: GraphOfGroups, m: DeformationCollapse):
    removed_side, kept_side = _collapse_sides(g, m)
    e = g.edges[m.edge]
    r, k = e.vertex_at(removed_side), e.vertex_at(kept_side)
    iota_r, iota_k = e.injection_at(removed_side), e.injection_at(kept_side)
    G_r, G_k = g.vertices[r], g.vertices[k]
    vertices = {v: lab for v, lab in g.vertices.items() if v != r}
    edges = {}
    for fid, f in g.edges.items():
        if fid == m.edge:
            continue
        for side in ("o", "t"):
            if f.vertex_at(side) == r:
                c = factor(iota_r, f.injection_at(side), f.label, e.label, G_r)
                if c is None:
                    raise MoveError(f"collapse: cannot factor end {fid}.{side} through {m.edge}")
                try:
                    f = f.with_end(side, k, compose(iota_k, c, f.label, e.label, G_k))
                except LabelError as exc:
                    raise MoveError(f"collapse: {exc}") from None
        edges[fid] = f
    new = GraphOfGroups(vertices, edges)

    def element_map(v, x):
        if v != r:
            return x
        y = preimage(iota_r, e.label, G_r, x)
        return apply_injection(iota_k, e.label, G_k, y)

    tr = _Transport(lambda v: k if v == r else v, element_map,
                    lambda L: [] if L[0] == m.edge else [L])
    return new, tr


# -- expansion ---------------------------------------------------------------------


def _apply_expansion(g: GraphOfGroups, m: Expansion):
    v, u, n = m.vertex, m.new_vertex, m.new_edge
    if v not in g.vertices:
        raise MoveError(f"expand: unknown vertex {v!r}")
    if u in g.vertices:
        raise MoveError(f"expand: vertex {u!r} already exists")
    if n in g.edges:
        raise MoveError(f"expand: edge {n!r} already exists")
    G_v = g.vertices[v]
    G_u = m.new_vertex_label if m.new_vertex_label is not None else m.label
    problem = check_injection(m.inj_new, m.label, G_u) or check_injection(m.inj_old, m.label, G_v)
    if problem:
        raise MoveError(f"expand: {problem}")
    if not is_onto(m.inj_new, m.label, G_u):
        raise MoveError("expand: the injection into the new vertex must be onto")
    incident = set(g.incident_ends(v))
    moved = {}
    for end, given in m.moved:
        if end not in incident:
            raise MoveError(f"expand: end {end[0]}.{end[1]} is not at {v}")
        if end in moved:
            raise MoveError(f"expand: end {end[0]}.{end[1]} listed twice")
        f = g.edges[end[0]]
        iota_f = f.injection_at(end[1])
        c = factor(m.inj_old, iota_f, f.label, m.label, G_v)
        computed = None
        if c is not None:
            try:
                computed = compose(m.inj_new, c, f.label, m.label, G_u)
            except LabelError:
                computed = None
        if given is None:
            if computed is None:
                raise MoveError(
                    f"expand: edge group of {end[0]} is not contained in the new edge group at {v}")
            given = computed
        else:
            problem = check_injection(given, f.label, G_u)
            if problem:
                raise MoveError(f"expand: end {end[0]}.{end[1]}: {problem}")
            if computed is not None and computed != given:
                raise MoveError(
                    f"expand: end {end[0]}.{end[1]} injection {render_injection(given)} "
                    f"disagrees with the factored map {render_injection(computed)}")
            if computed is None:
                back = factor(m.inj_new, given, f.label, m.label, G_u)
                if back is None or _safe_compose(m.inj_old, back, f.label, m.label, G_v) != iota_f:
                    raise MoveError(f"expand: cannot verify end {end[0]}.{end[1]} factors through {n}")
        moved[end] = given
    vertices = dict(g.vertices)
    vertices[u] = G_u
    edges = {}
    for fid, f in g.edges.items():
        for side in ("o", "t"):
            if (fid, side) in moved:
                f = f.with_end(side, u, moved[(fid, side)])
        edges[fid] = f
    if m.new_is_origin:
        edges[n] = Edge(u, v, m.label, m.inj_new, m.inj_old)
    else:
        edges[n] = Edge(v, u, m.label, m.inj_old, m.inj_new)
    new = GraphOfGroups(vertices, edges)
    to_u: Letter = (n, not m.new_is_origin)  # leaves v
    to_v: Letter = invert_letter(to_u)

    def letter_map(L):
        pre = [to_u] if (L[0], start_side(L)) in moved else []
        post = [to_v] if (L[0], end_side(L)) in moved else []
        return pre + [L] + post

    return new, _Transport(lambda x: x, _identity_map, letter_map)


def _safe_compose(outer, inner, source, middle, target):
    try:
        return compose(outer, inner, source, middle, target)
    except LabelError:
        return None


# -- slide -------------------------------------------------------------------------


def _slide_direction(g: GraphOfGroups, m: Slide) -> bool:
    fid, side = m.end
    if fid not in g.edges or side not in ("o", "t"):
        raise MoveError(f"slide: unknown end {fid}.{side}")
    if m.across not in g.edges:
        raise MoveError(f"slide: unknown edge {m.across!r}")
    if m.across == fid:
        raise MoveError("slide: an edge cannot slide across itself")
    e = g.edges[m.across]
    u = g.edges[fid].vertex_at(side)
    if e.is_loop:
        if m.forward is None:
            raise MoveError(f"slide: direction required across loop {m.across}")
        if e.origin != u:
            raise MoveError(f"slide: {m.across} is not incident to {u}")
        return m.forward
    if m.forward is None:
        if e.origin == u:
            return True
        if e.terminus == u:
            return False
        raise MoveError(f"slide: {m.across} is not incident to {u}")
    if e.vertex_at("o" if m.forward else "t") != u:
        raise MoveError(f"slide: {m.across} does not start at {u} in that direction")
    return m.forward


def _apply_slide(g: GraphOfGroups, m: Slide):
    forward = _slide_direction(g, m)
    fid, side = m.end
    f, e = g.edges[fid], g.edges[m.across]
    a_side = "o" if forward else "t"
    b_side = other_side(a_side)
    u, v = e.vertex_at(a_side), e.vertex_at(b_side)
    alpha, beta = e.injection_at(a_side), e.injection_at(b_side)
    c = factor(alpha, f.injection_at(side), f.label, e.label, g.vertices[u])
    if c is None:
        raise MoveError(
            f"slide: edge group of {fid} at {u} is not contained in that of {m.across} "
            f"(needs {render_injection(alpha)} | {render_injection(f.injection_at(side))})")
    new_inj = _safe_compose(beta, c, f.label, e.label, g.vertices[v])
    if new_inj is None:
        raise MoveError("slide: cannot compose opaque embeddings")
    edges = dict(g.edges)
    edges[fid] = f.with_end(side, v, new_inj)
    new = GraphOfGroups(g.vertices, edges)
    to_v: Letter = (m.across, forward)
    to_u: Letter = invert_letter(to_v)

    def letter_map(L):
        pre = [to_v] if (L[0], start_side(L)) == m.end else []
        post = [to_u] if (L[0], end_side(L)) == m.end else []
        return pre + [L] + post

    return new, _Transport(lambda x: x, _identity_map, letter_map)


# -- subdivision -------------------------------------------------------------------


def subdivision_names(g: GraphOfGroups, eid: str) -> Tuple[str, str]:
    return fresh_name(g.vertices, f"{eid}_m"), fresh_name(g.edges, f"{eid}_2")


def _apply_subdivide(g: GraphOfGroups, m: Subdivide):
    if m.edge not in g.edges:
        raise MoveError(f"subdivide: unknown edge {m.edge!r}")
    e = g.edges[m.edge]
    w, e2 = subdivision_names(g, m.edge)
    ident = identity_injection(e.label)
    vertices = dict(g.vertices)
    vertices[w] = e.label
    edges = dict(g.edges)
    edges[m.edge] = Edge(e.origin, w, e.label, e.inj_origin, ident)
    edges[e2] = Edge(w, e.terminus, e.label, ident, e.inj_terminus)
    new = GraphOfGroups(vertices, edges)

    def letter_map(L):
        if L[0] != m.edge:
            return [L]
        if L[1]:
            return [(m.edge, True), (e2, True)]
        return [(e2, False), (m.edge, False)]

    return new, _Transport(lambda x: x, _identity_map, letter_map)


# -- public move API ---------------------------------------------------------------


def _dispatch(g: GraphOfGroups, m: Move):
    if isinstance(m, DeformationCollapse):
        return _apply_collapse(g, m)
    if isinstance(m, Expansion):
        return _apply_expansion(g, m)
    if isinstance(m, Slide):
        return _apply_slide(g, m)
    if isinstance(m, Subdivide):
        return _apply_subdivide(g, m)
    raise TypeError(f"not a move: {m!r}")


def apply_move(g: GraphOfGroups, m: Move) -> GraphOfGroups:
    """Apply one elementary deformation; raises MoveError naming the failed side condition."""
    try:
        return _dispatch(g, m)[0]
    except SemanticError as exc:
        raise MoveError(str(exc)) from None


def transport_word(g: GraphOfGroups, m: Move, w: LoopWord) -> LoopWord:
    """Image of ``w`` under the isomorphism of fundamental groups induced by ``m``."""
    new, tr = _dispatch(g, m)
    return _build(new, tr, g, w)


def inverse_move(g: GraphOfGroups, m: Move) -> Move:
    """A move undoing ``m``, valid on ``apply_move(g, m)``."""
    if isinstance(m, DeformationCollapse):
        removed_side, kept_side = _collapse_sides(g, m)
        e = g.edges[m.edge]
        r, k = e.vertex_at(removed_side), e.vertex_at(kept_side)
        moved = tuple(((fid, s), g.edges[fid].injection_at(s)) for fid, s in g.incident_ends(r)
                      if fid != m.edge)
        return Expansion(k, r, m.edge, e.label, e.injection_at(removed_side), e.injection_at(kept_side),
                         moved, removed_side == "o", g.vertices[r])
    if isinstance(m, Expansion):
        return DeformationCollapse(m.new_edge, into=m.vertex)
    if isinstance(m, Slide):
        return Slide(m.end, m.across, not _slide_direction(g, m))
    if isinstance(m, Subdivide):
        _, e2 = subdivision_names(g, m.edge)
        return DeformationCollapse(e2, into=g.edges[m.edge].terminus)
    raise TypeError(f"not a move: {m!r}")


def legal_collapses(g: GraphOfGroups) -> List[DeformationCollapse]:
    out = []
    for eid, e in g.edges.items():
        if e.is_loop:
            continue
        for removed in ("o", "t"):
            if is_onto(e.injection_at(removed), e.label, g.vertices[e.vertex_at(removed)]):
                out.append(DeformationCollapse(eid, into=e.vertex_at(other_side(removed))))
    return out


def legal_slides(g: GraphOfGroups) -> List[Slide]:
    out = []
    for fid, f in g.edges.items():
        for side in ("o", "t"):
            u = f.vertex_at(side)
            for eid, e in g.edges.items():
                if eid == fid:
                    continue
                for forward in (True, False):
                    if e.vertex_at("o" if forward else "t") != u:
                        continue
                    m = Slide((fid, side), eid, forward)
                    alpha = e.injection_at("o" if forward else "t")
                    if factor(alpha, f.injection_at(side), f.label, e.label, g.vertices[u]) is not None:
                        out.append(m)
    return out


# -- certificates ------------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    source: GraphOfGroups
    target: GraphOfGroups
    script: Tuple[Move, ...] = ()

    def replay(self) -> GraphOfGroups:
        g = self.source
        for m in self.script:
            g = apply_move(g, m)
        return g

    def verify(self, equal: Callable[[GraphOfGroups, GraphOfGroups], bool] = None) -> bool:
        equal = equal or (lambda a, b: a == b)
        return equal(self.replay(), self.target)

    def to_text(self) -> str:
        return "".join(render_move(m) + "\n" for m in self.script)


def render_move(m: Move) -> str:
    if isinstance(m, DeformationCollapse):
        return f"collapse {m.edge}" + (f" into {m.into}" if m.into else "")
    if isinstance(m, Slide):
        prime = "" if m.forward in (None, True) else "'"
        return f"slide {m.end[0]}.{m.end[1]} {m.across}{prime}"
    if isinstance(m, Subdivide):
        return f"subdivide {m.edge}"
    parts = ["expand", m.vertex, m.new_vertex, m.new_edge, render_label(m.label),
             render_injection(m.inj_new), render_injection(m.inj_old)]
    if m.new_vertex_label is not None and m.new_vertex_label != m.label:
        parts += ["as", render_label(m.new_vertex_label)]
    for (fid, side), inj in m.moved:
        parts.append(f"{fid}.{side}" + (f"={render_injection(inj)}" if inj is not None else ""))
    if not m.new_is_origin:
        parts.append("reversed")
    return " ".join(parts)


def _parse_end(ts: TokenStream) -> End:
    fid = ts.expect("id", what="edge id").value
    ts.expect("punct", ".")
    side = ts.expect("id", what="side o or t")
    if side.value not in ("o", "t"):
        raise ts.error("side must be o or t", side)
    return fid, side.value


def _parse_move(ts: TokenStream) -> Move:
    kw = ts.expect("id", what="move keyword")
    if kw.value == "collapse":
        eid = ts.expect("id", what="edge id").value
        into = ts.expect("id", what="vertex id").value if ts.accept("id", "into") else None
        return DeformationCollapse(eid, into)
    if kw.value == "subdivide":
        return Subdivide(ts.expect("id", what="edge id").value)
    if kw.value == "slide":
        end = _parse_end(ts)
        across = ts.expect("id", what="edge id").value
        forward = None if not ts.accept("punct", "'") else False
        return Slide(end, across, forward)
    if kw.value == "expand":
        v = ts.expect("id", what="vertex id").value
        u = ts.expect("id", what="new vertex id").value
        n = ts.expect("id", what="new edge id").value
        label = _parse_label(ts)
        inj_new = _parse_injection(ts)
        inj_old = _parse_injection(ts)
        vlabel = _parse_label(ts) if ts.accept("id", "as") else None
        moved = []
        new_is_origin = True
        while ts.at("id"):
            if ts.accept("id", "reversed"):
                new_is_origin = False
                continue
            end = _parse_end(ts)
            inj = _parse_injection(ts) if ts.accept("punct", "=") else None
            moved.append((end, inj))
        return Expansion(v, u, n, label, inj_new, inj_old, tuple(moved), new_is_origin, vlabel)
    raise ts.error("unknown move (collapse, expand, slide, subdivide)", kw)


def parse_move(text: str) -> Move:
    ts = TokenStream.of(text)
    m = _parse_move(ts)
    ts.skip_seps()
    if not ts.at("eof"):
        raise ts.error("unexpected input after move")
    return m


def parse_script(text: str) -> Tuple[Move, ...]:
    ts = TokenStream.of(text)
    out = []
    while True:
        ts.skip_seps()
        if ts.at("eof"):
            break
        out.append(_parse_move(ts))
        if not (ts.at("sep") or ts.at("eof")):
            raise ts.error("expected end of move")
    return tuple(out)


# -- reduction ---------------------------------------------------------------------


def reduce_graph(g: GraphOfGroups) -> Tuple[GraphOfGroups, Certificate]:
    """Collapse deformation-collapsible edges until none is left.

    Edges are tried in sorted order; each step removes one edge, so at most
    ``|E|`` steps are taken.
    """
    src = g
    script: List[Move] = []
    while True:
        for eid in g.edges:
            try:
                m = DeformationCollapse(eid)
                _collapse_sides(g, m)
            except MoveError:
                continue
            g = apply_move(g, m)
            script.append(m)
            break
        else:
            return g, Certificate(src, g, tuple(script))


def is_reduced(g: GraphOfGroups) -> bool:
    return not legal_collapses(g)


# -- general collapses -------------------------------------------------------------


def _select_edges(g: GraphOfGroups, edges) -> Set[str]:
    if isinstance(edges, ClassSpec):
        return {eid for eid, e in g.edges.items() if not edges.admits(e.label)}
    chosen = set(edges)
    unknown = chosen - set(g.edges)
    if unknown:
        raise MoveError(f"unknown edges: {sorted(unknown)}")
    return chosen


def _collapse_plan(g: GraphOfGroups, chosen: Set[str]):
    comps = [c for c in g.components(chosen)
             if any(g.edges[eid].origin in c for eid in chosen)]
    owner = {}
    inner_graphs = {}
    for c in comps:
        root = min(c)
        comp_edges = {eid for eid in chosen if g.edges[eid].origin in c}
        inner_graphs[root] = g.subgraph(c, comp_edges)
        for v in c:
            owner[v] = root
    return owner, inner_graphs


def collapse_edges(g: GraphOfGroups, edges) -> GraphOfGroups:
    """Collapse each connected component of the chosen sub-graph to one
    vertex labelled by the component itself.

    ``edges`` is a set of edge ids or a ClassSpec; the latter collapses every
    edge whose label the class does not admit.  Surviving ends that land in a
    component record the inner vertex and injection as ``emb:w(inj)``.
    """
    chosen = _select_edges(g, edges)
    if not chosen:
        return g
    owner, inner_graphs = _collapse_plan(g, chosen)
    vertices = {v: lab for v, lab in g.vertices.items() if v not in owner}
    for root, inner in inner_graphs.items():
        vertices[root] = Quotient(inner)
    new_edges = {}
    for fid, f in g.edges.items():
        if fid in chosen:
            continue
        for side in ("o", "t"):
            w = f.vertex_at(side)
            if w in owner:
                f = f.with_end(side, owner[w], NamedEmbedding(w, f.injection_at(side)))
        new_edges[fid] = f
    return GraphOfGroups(vertices, new_edges)


def transport_collapse(g: GraphOfGroups, edges, w: LoopWord) -> LoopWord:
    """Image of ``w`` in the fundamental group of ``collapse_edges(g, edges)``.

    Inside a collapsed component every vertex ``a`` is identified with the
    component root through the tree path ``p_a``, so a piece of path from
    ``a`` to ``b`` becomes the quotient element ``p_a . piece . p_b^-1``.
    """
    chosen = _select_edges(g, edges)
    if not chosen:
        return w
    owner, inner_graphs = _collapse_plan(g, chosen)
    new = collapse_edges(g, chosen)
    paths = {root: tree_paths(inner, root)[0] for root, inner in inner_graphs.items()}

    def conj(a: str, middle: LoopWord, b: str) -> LoopWord:
        root = owner[a]
        inner = inner_graphs[root]
        pa = _path_element(inner, paths[root][a], root, identity(inner.vertices[a]), False)
        back = [invert_letter(L) for L in reversed(paths[root][b])]
        pb = _path_element(inner, back, b, identity(inner.vertices[root]), False)
        return concat(inner, concat(inner, pa, middle), pb)

    verts = w.vertex_path(g)
    base = owner.get(w.base, w.base)
    elements = [identity(new.vertices[base])]
    letters: List[Letter] = []

    def put(v: str, x) -> None:
        vn = owner.get(v, v)
        if v in owner:
            x = conj(v, LoopWord(v, (x,)), v)
        elements[-1] = multiply(new.vertices[vn], elements[-1], x)

    for i, x in enumerate(w.elements):
        put(verts[i], x)
        if i == w.length:
            break
        L = w.letters[i]
        a, b = verts[i], verts[i + 1]
        if L[0] in chosen:
            inner = inner_graphs[owner[a]]
            step = LoopWord(a, (identity(inner.vertices[a]), identity(inner.vertices[b])), (L,))
            elements[-1] = multiply(new.vertices[owner[a]], elements[-1], conj(a, step, b))
        else:
            letters.append(L)
            elements.append(identity(new.vertices[owner.get(b, b)]))
    return LoopWord(base, tuple(elements), tuple(letters))


def total_collapse(g: GraphOfGroups) -> GraphOfGroups:
    return collapse_edges(g, set(g.edges))


# -- refinement --------------------------------------------------------------------


AttachKey = Union[End, str]


def _normalize_attachment(g: GraphOfGroups, v: str, attachment: Mapping) -> Dict[End, Tuple[str, Injection]]:
    ends = g.incident_ends(v)
    out: Dict[End, Tuple[str, Injection]] = {}
    for key, target in attachment.items():
        if isinstance(key, str):
            hits = [end for end in ends if end[0] == key]
            if len(hits) != 1:
                raise MoveError(f"refine: attachment key {key!r} must name exactly one end at {v}"
                                " (use (edge, side) for loops)")
            key = hits[0]
        key = tuple(key)
        if key not in ends:
            raise MoveError(f"refine: {key[0]}.{key[1]} is not an end at {v}")
        out[key] = tuple(target)
    missing = [end for end in ends if end not in out]
    if missing:
        raise MoveError("refine: unassigned incident edge end(s) "
                        + ", ".join(f"{f}.{s}" for f, s in missing))
    return out


def refine_at_vertex(g: GraphOfGroups, v: str, splitting: GraphOfGroups,
                     attachment: Mapping[AttachKey, Tuple[str, Injection]]) -> GraphOfGroups:
    """Replace ``v`` by the graph of groups ``splitting`` of its vertex group.

    Every end at ``v`` is attached to a splitting vertex through an injection
    of its edge group.  A quotient label must be refined by its own inner
    graph, with attachments matching the recorded embeddings; other labels
    are trusted to split as declared.
    """
    if v not in g.vertices:
        raise MoveError(f"refine: unknown vertex {v!r}")
    att = _normalize_attachment(g, v, attachment)
    G_v = g.vertices[v]
    clash_v = (set(splitting.vertices) & set(g.vertices)) - {v}
    clash_e = set(splitting.edges) & set(g.edges)
    if clash_v or clash_e:
        raise MoveError(f"refine: splitting reuses names {sorted(clash_v | clash_e)}")
    for (fid, side), (w, inj) in att.items():
        f = g.edges[fid]
        if w not in splitting.vertices:
            raise MoveError(f"refine: {fid}.{side} attached to unknown splitting vertex {w!r}")
        problem = check_injection(inj, f.label, splitting.vertices[w])
        if problem:
            raise MoveError(f"refine: injection of {fid}.{side} does not factor: {problem}")
        if isinstance(G_v, Quotient):
            if f.injection_at(side) != NamedEmbedding(w, inj):
                raise MoveError(f"refine: {fid}.{side} attachment disagrees with its quotient embedding")
    if isinstance(G_v, Quotient) and splitting != G_v.inner:
        raise MoveError("refine: a quotient vertex must be refined by its stored inner graph")
    vertices = {x: lab for x, lab in g.vertices.items() if x != v}
    vertices.update(splitting.vertices)
    edges = {}
    for fid, f in g.edges.items():
        for side in ("o", "t"):
            if (fid, side) in att:
                w, inj = att[(fid, side)]
                f = f.with_end(side, w, inj)
        edges[fid] = f
    edges.update(splitting.edges)
    return GraphOfGroups(vertices, edges)


def expand_quotient(g: GraphOfGroups, v: str) -> GraphOfGroups:
    """Inverse of collapse_edges at one quotient vertex."""
    label = g.vertices[v]
    if not isinstance(label, Quotient):
        raise MoveError(f"{v} is not a quotient vertex")
    att = {}
    for fid, side in g.incident_ends(v):
        inj = g.edges[fid].injection_at(side)
        if not (isinstance(inj, NamedEmbedding) and inj.inner is not None):
            raise MoveError(f"{fid}.{side}: opaque embedding into a quotient cannot be expanded")
        att[(fid, side)] = (inj.tag, inj.inner)
    return refine_at_vertex(g, v, label.inner, att)


def flatten(g: GraphOfGroups) -> GraphOfGroups:
    """Expand every quotient vertex, recursively."""
    while True:
        qs = [v for v, lab in g.vertices.items() if isinstance(lab, Quotient)]
        if not qs:
            return g
        g = expand_quotient(g, qs[0])


def same_label_structure(a: GraphOfGroups, b: GraphOfGroups) -> bool:
    """Equality after expanding quotients; graphs whose quotients hide opaque
    embeddings are compared as stored."""
    try:
        return flatten(a) == flatten(b)
    except MoveError:
        return a == b


@dataclass(frozen=True)
class VertexPlan:
    splitting: GraphOfGroups
    attachment: Mapping[AttachKey, Tuple[str, Injection]] = field(default_factory=dict)


@dataclass
class RefinementReport:
    collapses_back: bool
    label_check: bool
    samples_checked: int = 0
    unknown_samples: int = 0
    violations: List[LoopWord] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.collapses_back and self.label_check and not self.violations


def _identify_back(collapsed: GraphOfGroups, t1: GraphOfGroups, plans: Mapping[str, VertexPlan],
                   atts: Mapping[str, Dict[End, Tuple[str, Injection]]]) -> GraphOfGroups:
    """Rename each collapsed splitting back to its original vertex, label and injections."""
    rename = {}
    for v, plan in plans.items():
        rename[min(plan.splitting.vertices) if plan.splitting.edges else next(iter(plan.splitting.vertices))] = v
    vertices = {}
    for x, lab in collapsed.vertices.items():
        vertices[rename.get(x, x)] = t1.vertices[rename[x]] if x in rename else lab
    edges = {}
    for fid, f in collapsed.edges.items():
        for side in ("o", "t"):
            x = f.vertex_at(side)
            if x in rename:
                f = f.with_end(side, rename[x], t1.edges[fid].injection_at(side)
                               if (fid, side) in atts[rename[x]] else f.injection_at(side))
        edges[fid] = f
    return GraphOfGroups(vertices, edges)


def refine_elliptic(t1: GraphOfGroups, plan: Mapping[str, VertexPlan],
                    samples: Optional[Sequence[LoopWord]] = None, n_samples: int = 50,
                    seed: int = 0) -> Tuple[GraphOfGroups, RefinementReport]:
    """Blow up each planned vertex of ``t1`` into its splitting.

    The report checks that collapsing the inserted edges gives back ``t1``,
    that every edge label is an old edge label or a splitting edge label,
    and, on sample words of the output, that a word is elliptic in the
    refinement iff it is elliptic both after collapsing the inserted edges
    and after collapsing the original ones.
    """
    out = t1
    atts = {}
    new_edges: Set[str] = set()
    for v in sorted(plan):
        p = plan[v]
        atts[v] = _normalize_attachment(t1, v, p.attachment)
        out = refine_at_vertex(out, v, p.splitting, p.attachment)
        new_edges |= set(p.splitting.edges)
    old_edges = set(t1.edges)

    collapsed = collapse_edges(out, new_edges)
    try:
        back = _identify_back(collapsed, t1, plan, atts)
        collapses_back = back == t1
    except (KeyError, SemanticError):
        collapses_back = False

    allowed = {e.label for e in t1.edges.values()}
    for p in plan.values():
        allowed |= {e.label for e in p.splitting.edges.values()}
    label_check = all(e.label in allowed for e in out.edges.values())

    if samples is None:
        from .sampling import random_word
        rng = Random(seed)
        samples = [random_word(out, rng, rng.randint(0, 6)) for _ in range(n_samples)]
    report = RefinementReport(collapses_back, label_check)
    for w in samples:
        hat = is_elliptic(out, w)
        in_t1 = is_elliptic(collapsed, transport_collapse(out, new_edges, w)) if new_edges else hat
        in_t2 = is_elliptic(out, w, old_edges)
        report.samples_checked += 1
        if "Unknown" in (hat.status, in_t1.status, in_t2.status):
            report.unknown_samples += 1
            continue
        if hat.elliptic != (in_t1.elliptic and in_t2.elliptic):
            report.violations.append(w)
    return out, report
