"""Random graphs, words and moves for property checks."""

from __future__ import annotations

from math import gcd
from random import Random
from typing import List, Optional

from .gog import Edge, GraphOfGroups, letter_end, tree_paths, invert_letter
from .labels import Atom, CyclicMult, FiniteCyclic, InfCyclic, Product, Trivial
from .moves import (
    Expansion,
    Move,
    Subdivide,
    fresh_name,
    legal_collapses,
    legal_slides,
)
from .words import LoopWord, identity


def _nonzero(rng: Random, bound: int) -> int:
    k = rng.randint(1, bound)
    return k if rng.random() < 0.7 else -k


def random_gbs(rng: Random, max_edges: int = 6, max_label: int = 9,
               max_vertices: int = 4) -> GraphOfGroups:
    """Connected GBS graph with at most ``max_edges`` edges and labels in
    ``[-max_label, max_label] \\ {0}``; small labels are favoured so that
    pinches actually occur."""
    n_edges = rng.randint(1, max_edges)
    n_vertices = rng.randint(1, min(max_vertices, n_edges + 1))
    names = [f"v{i}" for i in range(n_vertices)]
    edges = {}
    pairs = [(names[rng.randrange(i)], names[i]) for i in range(1, n_vertices)]
    while len(pairs) < n_edges:
        pairs.append((rng.choice(names), rng.choice(names)))
    rng.shuffle(pairs)

    def label():
        return _nonzero(rng, 3) if rng.random() < 0.6 else _nonzero(rng, max_label)

    for i, (a, b) in enumerate(pairs):
        if rng.random() < 0.5:
            a, b = b, a
        edges[f"e{i}"] = Edge(a, b, InfCyclic(), CyclicMult(label()), CyclicMult(label()))
    return GraphOfGroups({v: InfCyclic() for v in names}, edges)


def random_element(label, rng: Random, bound: int = 6):
    if isinstance(label, Trivial):
        return 0
    if isinstance(label, FiniteCyclic):
        return rng.randrange(label.order)
    if isinstance(label, InfCyclic):
        return rng.randint(-bound, bound)
    if isinstance(label, Atom):
        return () if rng.random() < 0.5 else ((label.name, rng.choice((1, -1))),)
    if isinstance(label, Product):
        return ()
    return identity(label)


def random_word(g: GraphOfGroups, rng: Random, length: int, base: Optional[str] = None,
                bound: int = 6) -> LoopWord:
    """A closed random walk of about ``length`` letters with random vertex elements."""
    base = base or g.base
    letters = []
    v = base
    for _ in range(length):
        options = [(eid, side == "o") for eid, side in g.incident_ends(v)]
        if not options:
            break
        L = rng.choice(options)
        letters.append(L)
        v = letter_end(g, L)
    paths, _ = tree_paths(g, base)
    letters += [invert_letter(L) for L in reversed(paths[v])]
    verts = [base] + [letter_end(g, L) for L in letters]
    elements = [random_element(g.vertices[x], rng, bound) if rng.random() < 0.8
                else identity(g.vertices[x]) for x in verts]
    if letters:
        # fold the closing element into the first one to keep words short
        elements[-1] = identity(g.vertices[base])
    return LoopWord(base, tuple(elements), tuple(letters))


def gbs_expansions(g: GraphOfGroups, max_mu: Optional[int] = None) -> List[Expansion]:
    """Expansions of a GBS graph: for each vertex, each nonempty set of ends
    whose labels share a divisor mu >= 2, pull those ends onto a new vertex
    across an edge labelled (1, mu)."""
    out = []
    u = fresh_name(g.vertices, "x")
    n = fresh_name(g.edges, "n")
    for v in g.vertices:
        ends = g.incident_ends(v)
        for mask in range(1, 1 << len(ends)):
            chosen = [ends[i] for i in range(len(ends)) if mask >> i & 1]
            d = 0
            for eid, side in chosen:
                d = gcd(d, g.edges[eid].injection_at(side).multiplier)
            for mu in range(2, abs(d) + 1):
                if d % mu or (max_mu and mu > max_mu):
                    continue
                out.append(Expansion(v, u, n, InfCyclic(), CyclicMult(1), CyclicMult(mu),
                                     tuple((end, None) for end in chosen)))
    return out


def random_move(g: GraphOfGroups, rng: Random) -> Move:
    """A uniformly chosen kind of legal move (collapse, slide, expansion or subdivision)."""
    kinds = []
    collapses = legal_collapses(g)
    slides = legal_slides(g)
    if collapses:
        kinds.append(collapses)
    if slides:
        kinds.append(slides)
    exps = gbs_expansions(g) if all(isinstance(l, InfCyclic) for l in g.vertices.values()) else []
    if exps:
        kinds.append(exps)
    kinds.append([Subdivide(eid) for eid in g.edges] or [None])
    choice = rng.choice(kinds)
    return rng.choice(choice)
