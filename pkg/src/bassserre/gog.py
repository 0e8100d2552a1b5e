"""Graphs of groups: data model, text format, DOT export and validation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from ._lexer import ParseError, TokenStream
from .labels import (
    ATOM_FLAGS,
    TRIV,
    Atom,
    ClassSpec,
    CyclicModMult,
    CyclicMult,
    FiniteCyclic,
    GroupLabel,
    InfCyclic,
    Injection,
    LabelError,
    NamedEmbedding,
    Product,
    Quotient,
    Trivial,
    TrivialInto,
    check_injection,
    finite_cyclic,
    is_onto,
)

# An edge end is (edge id, "o" | "t"); a letter is (edge id, reversed).
End = Tuple[str, str]
Letter = Tuple[str, bool]


class GogError(ValueError):
    pass


class SemanticError(GogError):
    def __init__(self, message: str, edge: Optional[str] = None, vertex: Optional[str] = None):
        super().__init__(message)
        self.edge = edge
        self.vertex = vertex


@dataclass(frozen=True)
class Edge:
    origin: str
    terminus: str
    label: GroupLabel
    inj_origin: Injection
    inj_terminus: Injection

    def vertex_at(self, side: str) -> str:
        return self.origin if side == "o" else self.terminus

    def injection_at(self, side: str) -> Injection:
        return self.inj_origin if side == "o" else self.inj_terminus

    @property
    def is_loop(self) -> bool:
        return self.origin == self.terminus

    def with_end(self, side: str, vertex: str, inj: Injection) -> "Edge":
        if side == "o":
            return Edge(vertex, self.terminus, self.label, inj, self.inj_terminus)
        return Edge(self.origin, vertex, self.label, self.inj_origin, inj)


def other_side(side: str) -> str:
    return "t" if side == "o" else "o"


class GraphOfGroups:
    """Finite connected graph with group labels and edge-to-vertex injections.

    Instances are immutable.  Each edge is stored once with an orientation;
    for ``Z`` endpoints the edge ``e`` with multipliers ``l`` at the origin and
    ``m`` at the terminus encodes ``t_e a^l t_e^-1 = a^m``.
    """

    __slots__ = ("_vertices", "_edges", "_key", "_hash")

    def __init__(self, vertices: Mapping[str, GroupLabel], edges: Optional[Mapping[str, Edge]] = None):
        edges = dict(edges or {})
        if not vertices:
            raise SemanticError("a graph of groups needs at least one vertex")
        self._vertices = dict(sorted(vertices.items()))
        self._edges = dict(sorted(edges.items()))
        for eid, e in self._edges.items():
            for side in ("o", "t"):
                v = e.vertex_at(side)
                if v not in self._vertices:
                    raise SemanticError(f"edge {eid}: undeclared vertex {v!r}", edge=eid, vertex=v)
                problem = check_injection(e.injection_at(side), e.label, self._vertices[v])
                if problem:
                    where = "origin" if side == "o" else "terminus"
                    raise SemanticError(f"edge {eid} ({where} {v}): {problem}", edge=eid, vertex=v)
        if len(self._components(self._edges)) != 1:
            raise SemanticError("underlying graph is not connected")
        self._key = (tuple(self._vertices.items()), tuple(self._edges.items()))
        self._hash = None

    # -- access ---------------------------------------------------------------

    @property
    def vertices(self) -> Mapping[str, GroupLabel]:
        return MappingProxyType(self._vertices)

    @property
    def edges(self) -> Mapping[str, Edge]:
        return MappingProxyType(self._edges)

    @property
    def base(self) -> str:
        return next(iter(self._vertices))

    def __eq__(self, other):
        return isinstance(other, GraphOfGroups) and self._key == other._key

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._key)
        return self._hash

    def __repr__(self):
        return f"GraphOfGroups({serialize_gog(self, 'inline')!r})"

    def incident_ends(self, v: str) -> List[End]:
        ends = []
        for eid, e in self._edges.items():
            if e.origin == v:
                ends.append((eid, "o"))
            if e.terminus == v:
                ends.append((eid, "t"))
        return ends

    def valence(self, v: str) -> int:
        return len(self.incident_ends(v))

    def betti_number(self) -> int:
        return len(self._edges) - len(self._vertices) + 1

    def injection_at(self, end: End) -> Injection:
        eid, side = end
        return self._edges[eid].injection_at(side)

    def vertex_at(self, end: End) -> str:
        eid, side = end
        return self._edges[eid].vertex_at(side)

    def _components(self, edges: Mapping[str, Edge]) -> List[Set[str]]:
        parent = {v: v for v in self._vertices}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for e in edges.values():
            a, b = find(e.origin), find(e.terminus)
            if a != b:
                parent[max(a, b)] = min(a, b)
        groups: Dict[str, Set[str]] = {}
        for v in self._vertices:
            groups.setdefault(find(v), set()).add(v)
        return sorted(groups.values(), key=min)

    def components(self, edge_ids: Iterable[str]) -> List[Set[str]]:
        """Vertex sets of the connected components of the sub-graph on ``edge_ids``."""
        chosen = {eid: self._edges[eid] for eid in edge_ids}
        return self._components(chosen)

    def subgraph(self, vertex_ids: Iterable[str], edge_ids: Iterable[str]) -> "GraphOfGroups":
        vs = {v: self._vertices[v] for v in vertex_ids}
        es = {eid: self._edges[eid] for eid in edge_ids}
        return GraphOfGroups(vs, es)


# -- letters and spanning trees --------------------------------------------------


def letter_start(g: GraphOfGroups, letter: Letter) -> str:
    """Vertex a letter leaves from.  The letter ``e`` runs terminus -> origin."""
    e = g.edges[letter[0]]
    return e.origin if letter[1] else e.terminus


def letter_end(g: GraphOfGroups, letter: Letter) -> str:
    e = g.edges[letter[0]]
    return e.terminus if letter[1] else e.origin


def invert_letter(letter: Letter) -> Letter:
    return (letter[0], not letter[1])


def end_side(letter: Letter) -> str:
    """Side of the edge at which the letter arrives."""
    return "t" if letter[1] else "o"


def start_side(letter: Letter) -> str:
    return "o" if letter[1] else "t"


def tree_paths(g: GraphOfGroups, root: str, edge_ids: Optional[Iterable[str]] = None
               ) -> Tuple[Dict[str, List[Letter]], Set[str]]:
    """Deterministic BFS spanning tree of the component of ``root``.

    Returns letter paths from ``root`` to each reached vertex and the set of
    tree edges used.
    """
    allowed = set(g.edges) if edge_ids is None else set(edge_ids)
    paths: Dict[str, List[Letter]] = {root: []}
    tree: Set[str] = set()
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for eid, side in g.incident_ends(v):
            if eid not in allowed or eid in tree:
                continue
            e = g.edges[eid]
            w = e.vertex_at("t" if side == "o" else "o")
            if w in paths:
                continue
            # leave v through side `side`: the letter must start there
            letter = (eid, side == "o")
            paths[w] = paths[v] + [letter]
            tree.add(eid)
            queue.append(w)
    return paths, tree


# -- text format -------------------------------------------------------------------


def render_label(label: GroupLabel) -> str:
    if isinstance(label, Trivial):
        return "1"
    if isinstance(label, FiniteCyclic):
        return f"Z/{label.order}"
    if isinstance(label, InfCyclic):
        return "Z"
    if isinstance(label, Atom):
        if label.flags:
            return f"atom:{label.name}[{','.join(sorted(label.flags))}]"
        return f"atom:{label.name}"
    if isinstance(label, Product):
        return "prod(" + ",".join(render_label(f) for f in label.factors) + ")"
    return "quot{" + serialize_gog(label.inner, "inline") + "}"


def render_injection(inj: Injection) -> str:
    if isinstance(inj, TrivialInto):
        return "triv"
    if isinstance(inj, CyclicMult):
        return f"*{inj.multiplier}"
    if isinstance(inj, CyclicModMult):
        return f"*{inj.multiplier}%{inj.modulus}"
    if inj.inner is not None:
        return f"emb:{inj.tag}({render_injection(inj.inner)})"
    return f"emb:{inj.tag}"


def _parse_label(ts: TokenStream) -> GroupLabel:
    tok = ts.peek()
    if tok.kind == "int":
        ts.next()
        if tok.value != "1":
            raise ts.error("the only integer label is 1", tok)
        return Trivial()
    if tok.kind != "id":
        raise ts.error("expected a label")
    ts.next()
    if tok.value == "Z":
        if ts.accept("punct", "/"):
            n_tok = ts.peek()
            n = ts.expect_int("order")
            if n < 1:
                raise ts.error("cyclic order must be positive", n_tok)
            return finite_cyclic(n)
        return InfCyclic()
    if tok.value == "atom":
        ts.expect("punct", ":")
        name = ts.expect("id", what="atom name").value
        flags = set()
        if ts.accept("punct", "["):
            if not ts.at("punct", "]"):
                while True:
                    ftok = ts.expect("id", what="atom flag")
                    if ftok.value not in ATOM_FLAGS:
                        raise ts.error(f"unknown atom flag {ftok.value!r}", ftok)
                    flags.add(ftok.value)
                    if not ts.accept("punct", ","):
                        break
            ts.expect("punct", "]")
        return Atom(name, frozenset(flags))
    if tok.value == "prod":
        ts.expect("punct", "(")
        factors = [_parse_label(ts)]
        while ts.accept("punct", ","):
            factors.append(_parse_label(ts))
        close = ts.expect("punct", ")")
        try:
            return Product(tuple(factors))
        except LabelError as exc:
            raise ParseError(str(exc), close.line, close.col) from None
    if tok.value == "quot":
        ts.expect("punct", "{")
        inner = _parse_document(ts, closing="}")
        ts.expect("punct", "}")
        return Quotient(inner)
    raise ts.error("unknown label", tok)


def _parse_injection(ts: TokenStream) -> Injection:
    tok = ts.peek()
    if ts.accept("id", "triv"):
        return TRIV
    if ts.accept("punct", "*"):
        k = ts.expect_int("multiplier")
        if ts.accept("punct", "%"):
            n_tok = ts.peek()
            n = ts.expect_int("modulus")
            if n < 1:
                raise ts.error("modulus must be positive", n_tok)
            return CyclicModMult(k, n)
        if k == 0:
            raise ts.error("multiplier must be nonzero", tok)
        return CyclicMult(k)
    if ts.accept("id", "emb"):
        ts.expect("punct", ":")
        tag = ts.expect("id", what="embedding tag").value
        if ts.accept("punct", "("):
            inner = _parse_injection(ts)
            ts.expect("punct", ")")
            return NamedEmbedding(tag, inner)
        return NamedEmbedding(tag)
    raise ts.error("expected an injection (*k, *k%n, emb:tag or triv)")


def _parse_document(ts: TokenStream, closing: Optional[str] = None) -> GraphOfGroups:
    vertices: Dict[str, GroupLabel] = {}
    edges: Dict[str, Edge] = {}
    edge_tokens = {}
    while True:
        ts.skip_seps()
        if ts.at("eof") or (closing and ts.at("punct", closing)):
            break
        kw = ts.expect("id", what="'vertex' or 'edge'")
        if kw.value == "vertex":
            vid = ts.expect("id", what="vertex id")
            if vid.value in vertices:
                raise ParseError(f"duplicate vertex {vid.value!r}", vid.line, vid.col)
            vertices[vid.value] = _parse_label(ts)
        elif kw.value == "edge":
            eid = ts.expect("id", what="edge id")
            if eid.value in edges:
                raise ParseError(f"duplicate edge {eid.value!r}", eid.line, eid.col)
            o = ts.expect("id", what="origin vertex").value
            t = ts.expect("id", what="terminus vertex").value
            label = _parse_label(ts)
            io = _parse_injection(ts)
            it = _parse_injection(ts)
            edges[eid.value] = Edge(o, t, label, io, it)
            edge_tokens[eid.value] = eid
        else:
            raise ts.error("expected 'vertex' or 'edge'", kw)
        if not (ts.at("sep") or ts.at("eof") or (closing and ts.at("punct", closing))):
            raise ts.error("expected end of declaration")
    if not vertices:
        tok = ts.peek()
        raise SemanticError(f"line {tok.line}: no vertices declared")
    try:
        return GraphOfGroups(vertices, edges)
    except SemanticError as exc:
        if exc.edge in edge_tokens:
            tok = edge_tokens[exc.edge]
            raise SemanticError(f"line {tok.line}: {exc}", edge=exc.edge, vertex=exc.vertex) from None
        raise


def parse_gog(text: str) -> GraphOfGroups:
    """Parse the line-based graph-of-groups format.

    Raises ``ParseError`` (with line/column) on syntax errors and
    ``SemanticError`` (naming the edge or vertex) on dangling references or
    injection/label mismatches.
    """
    ts = TokenStream.of(text)
    g = _parse_document(ts)
    if not ts.at("eof"):
        raise ts.error("unexpected input")
    return g


def parse_label(text: str) -> GroupLabel:
    ts = TokenStream.of(text)
    label = _parse_label(ts)
    ts.skip_seps()
    if not ts.at("eof"):
        raise ts.error("unexpected input after label")
    return label


def parse_injection(text: str) -> Injection:
    ts = TokenStream.of(text)
    inj = _parse_injection(ts)
    if not ts.at("eof"):
        raise ts.error("unexpected input after injection")
    return inj


def _declarations(g: GraphOfGroups) -> List[str]:
    lines = [f"vertex {v} {render_label(label)}" for v, label in g.vertices.items()]
    for eid, e in g.edges.items():
        lines.append(
            f"edge {eid} {e.origin} {e.terminus} {render_label(e.label)} "
            f"{render_injection(e.inj_origin)} {render_injection(e.inj_terminus)}"
        )
    return lines


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _dot(g: GraphOfGroups) -> str:
    out = ["digraph gog {"]
    for v, label in g.vertices.items():
        if isinstance(label, Quotient):
            inner = label.inner
            summary = (f"{v}: quot[{len(inner.vertices)} vertices, {len(inner.edges)} edges]\\n"
                       + ", ".join(f"{w}: {render_label(lab)}" for w, lab in inner.vertices.items()))
            out.append(f"  {_dot_quote(v)} [shape=box, label={_dot_quote(summary)}];")
        else:
            out.append(f"  {_dot_quote(v)} [label={_dot_quote(f'{v}: {render_label(label)}')}];")
    for eid, e in g.edges.items():
        text = (f"{eid}: {render_label(e.label)} "
                f"({render_injection(e.inj_origin)}, {render_injection(e.inj_terminus)})")
        out.append(f"  {_dot_quote(e.origin)} -> {_dot_quote(e.terminus)} [label={_dot_quote(text)}];")
    out.append("}")
    return "\n".join(out) + "\n"


def serialize_gog(g: GraphOfGroups, format: str = "canonical_text") -> str:
    """Render ``g`` as canonical text (one declaration per line), DOT, or a
    single-line ``inline`` form used inside ``quot{...}``."""
    if format == "canonical_text":
        return "".join(line + "\n" for line in _declarations(g))
    if format == "inline":
        return "; ".join(_declarations(g))
    if format == "dot":
        return _dot(g)
    raise ValueError(f"unknown format {format!r}")


# -- validation --------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    violations: Tuple[Tuple[str, str], ...]  # (edge id, rendered label)
    non_minimal: Tuple[str, ...]

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def minimal(self) -> bool:
        return not self.non_minimal


def non_minimal_vertices(g: GraphOfGroups) -> List[str]:
    """Valence-1 vertices whose unique incident injection is onto.

    Such a vertex lifts to terminal vertices of the Bass-Serre tree, so the
    action has a proper invariant subtree.
    """
    flagged = []
    for v, label in g.vertices.items():
        ends = g.incident_ends(v)
        if len(ends) == 1:
            e = g.edges[ends[0][0]]
            if is_onto(e.injection_at(ends[0][1]), e.label, label):
                flagged.append(v)
    return flagged


def validate(g: GraphOfGroups, cls: ClassSpec) -> ValidationReport:
    violations = tuple(
        (eid, render_label(e.label)) for eid, e in g.edges.items() if not cls.admits(e.label)
    )
    return ValidationReport(violations, tuple(non_minimal_vertices(g)))


def point_graph(label: GroupLabel, vertex: str = "v") -> GraphOfGroups:
    return GraphOfGroups({vertex: label})


def loop_graph(lam: int, mu: int, vertex: str = "v", edge: str = "e") -> GraphOfGroups:
    """BS(lam, mu) as a one-vertex, one-loop GBS graph."""
    return GraphOfGroups(
        {vertex: InfCyclic()},
        {edge: Edge(vertex, vertex, InfCyclic(), CyclicMult(lam), CyclicMult(mu))},
    )


def seg_graph(lam: int, mu: int, origin: str = "u", terminus: str = "v", edge: str = "e") -> GraphOfGroups:
    """Amalgam Z *_Z Z with multipliers lam at the origin and mu at the terminus."""
    return GraphOfGroups(
        {origin: InfCyclic(), terminus: InfCyclic()},
        {edge: Edge(origin, terminus, InfCyclic(), CyclicMult(lam), CyclicMult(mu))},
    )
