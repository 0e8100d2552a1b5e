"""Loop words in the fundamental group of a graph of groups.

A loop word is ``g0 L1 g1 ... Ln gn``: letters ``L_i`` form a closed edge
path at ``base`` and ``g_i`` is an element of the vertex group reached after
``L_i``.  The letter ``(e, False)`` is the stable letter ``t_e`` with
``t_e . i_o(x) . t_e^-1 = i_t(x)``; as a path step it runs from the terminus
of ``e`` to its origin.  ``(e, True)`` is its inverse.

Vertex elements are encoded per label:

* Trivial, Z/n, Z: an ``int`` (reduced mod n for Z/n, 0 for Trivial);
* Atom, Product: a freely reduced tuple of ``(symbol, +-1)`` pairs;
* Quotient: a reduced ``LoopWord`` over the inner graph at its base.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, List, Optional, Sequence, Tuple, Union

from .gog import (
    GraphOfGroups,
    Letter,
    end_side,
    invert_letter,
    letter_end,
    letter_start,
    start_side,
    tree_paths,
)
from .labels import (
    IDENTITY_TAG,
    Atom,
    CyclicModMult,
    CyclicMult,
    FiniteCyclic,
    GroupLabel,
    InfCyclic,
    Injection,
    NamedEmbedding,
    Product,
    Quotient,
    Trivial,
    TrivialInto,
)


class OpaquePinch(Exception):
    """A pinch test needs arithmetic inside an opaque label."""


class WordError(ValueError):
    pass


@dataclass(frozen=True)
class LoopWord:
    base: str
    elements: tuple  # n + 1 vertex elements
    letters: Tuple[Letter, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "letters", tuple(self.letters))
        if len(self.elements) != len(self.letters) + 1:
            raise WordError("a loop word needs exactly one more element than letters")

    @property
    def length(self) -> int:
        return len(self.letters)

    def vertex_path(self, g: GraphOfGroups) -> List[str]:
        return [self.base] + [letter_end(g, L) for L in self.letters]


# -- vertex group arithmetic -------------------------------------------------------


def identity(label: GroupLabel):
    if isinstance(label, (Trivial, FiniteCyclic, InfCyclic)):
        return 0
    if isinstance(label, (Atom, Product)):
        return ()
    return LoopWord(label.inner.base, (identity(label.inner.vertices[label.inner.base]),))


def _free_reduce(symbols: Iterable[Tuple[str, int]]) -> tuple:
    out: List[Tuple[str, int]] = []
    for sym in symbols:
        if out and out[-1][0] == sym[0] and out[-1][1] == -sym[1]:
            out.pop()
        else:
            out.append(sym)
    return tuple(out)


def multiply(label: GroupLabel, x, y):
    if isinstance(label, Trivial):
        return 0
    if isinstance(label, FiniteCyclic):
        return (x + y) % label.order
    if isinstance(label, InfCyclic):
        return x + y
    if isinstance(label, (Atom, Product)):
        return _free_reduce(tuple(x) + tuple(y))
    return reduce_word(label.inner, concat(label.inner, x, y))


def invert(label: GroupLabel, x):
    if isinstance(label, Trivial):
        return 0
    if isinstance(label, FiniteCyclic):
        return (-x) % label.order
    if isinstance(label, InfCyclic):
        return -x
    if isinstance(label, (Atom, Product)):
        return tuple((s, -e) for s, e in reversed(x))
    return inverse_word(label.inner, x)


def is_identity(label: GroupLabel, x) -> bool:
    if isinstance(label, (Trivial, FiniteCyclic, InfCyclic)):
        return x == 0
    if isinstance(label, (Atom, Product)):
        return len(x) == 0
    r = reduce_word(label.inner, x)
    return r.length == 0 and is_identity(label.inner.vertices[r.base], r.elements[0])


def normalize_element(label: GroupLabel, x):
    """Coerce user input into the canonical encoding, or raise WordError."""
    if isinstance(label, Trivial):
        if x not in (0, ()):
            raise WordError("trivial vertex group has only the identity")
        return 0
    if isinstance(label, FiniteCyclic):
        if not isinstance(x, int):
            raise WordError("Z/n elements are integers")
        return x % label.order
    if isinstance(label, InfCyclic):
        if not isinstance(x, int):
            raise WordError("Z elements are integers")
        return x
    if isinstance(label, (Atom, Product)):
        if isinstance(x, int):
            if x != 0:
                raise WordError("atom elements are symbol words")
            return ()
        return _free_reduce(tuple((str(s), int(e)) for s, e in x))
    if not isinstance(x, LoopWord):
        if x in (0, ()):
            return identity(label)
        raise WordError("quotient elements are loop words over the inner graph")
    check_word(label.inner, x)
    return x


def _path_element(g: GraphOfGroups, path: Sequence[Letter], start: str, x_at_end, inverse_after: bool):
    """The loop ``path . x . path^-1`` at ``start``."""
    verts = [start] + [letter_end(g, L) for L in path]
    elements = [identity(g.vertices[v]) for v in verts]
    elements[-1] = x_at_end
    letters = list(path)
    if inverse_after:
        back = [invert_letter(L) for L in reversed(path)]
        elements += [identity(g.vertices[v]) for v in reversed(verts[:-1])]
        letters += back
    return LoopWord(start, tuple(elements), tuple(letters))


def apply_injection(inj: Injection, source: GroupLabel, target: GroupLabel, x):
    """Image of the edge-group element ``x`` in the vertex group ``target``."""
    if isinstance(inj, TrivialInto) or isinstance(source, Trivial):
        return identity(target)
    if isinstance(inj, CyclicMult):
        return inj.multiplier * x
    if isinstance(inj, CyclicModMult):
        return (inj.multiplier * x) % inj.modulus
    if inj.inner is not None:
        inner = target.inner
        paths, _ = tree_paths(inner, inner.base)
        y = apply_injection(inj.inner, source, inner.vertices[inj.tag], x)
        return _path_element(inner, paths[inj.tag], inner.base, y, True)
    if inj.tag == IDENTITY_TAG:
        return x
    if is_identity(source, x):
        return identity(target)
    raise OpaquePinch(f"image of a non-identity element under opaque embedding emb:{inj.tag}")


def preimage(inj: Injection, source: GroupLabel, target: GroupLabel, y):
    """The unique ``x`` with ``inj(x) = y``, or None when ``y`` is not in the image."""
    if isinstance(inj, TrivialInto) or isinstance(source, Trivial):
        return 0 if is_identity(target, y) else None
    if isinstance(inj, CyclicMult):
        return y // inj.multiplier if y % inj.multiplier == 0 else None
    if isinstance(inj, CyclicModMult):
        n = inj.modulus
        m = source.order
        d = n // m  # gcd(k, n) by the injectivity condition
        if y % d:
            return None
        return (y // d) * pow((inj.multiplier // d) % m, -1, m) % m if m > 1 else 0
    if inj.inner is not None:
        inner = target.inner
        paths, _ = tree_paths(inner, inner.base)
        p = paths[inj.tag]
        back = [invert_letter(L) for L in reversed(p)]
        conj = concat(inner, concat(inner, _path_element(inner, back, inj.tag, identity(target.inner.vertices[inner.base]), False), y),
                      _path_element(inner, p, inner.base, identity(inner.vertices[inj.tag]), False))
        r = reduce_word(inner, conj)
        if r.length:
            return None
        return preimage(inj.inner, source, inner.vertices[inj.tag], r.elements[0])
    if inj.tag == IDENTITY_TAG:
        return y
    if is_identity(target, y):
        return identity(source)
    raise OpaquePinch(f"membership of a non-identity element in the image of emb:{inj.tag}")


# -- words -------------------------------------------------------------------------


def vertex_word(g: GraphOfGroups, v: str, x) -> LoopWord:
    return LoopWord(v, (normalize_element(g.vertices[v], x),))


def check_word(g: GraphOfGroups, w: LoopWord) -> None:
    if w.base not in g.vertices:
        raise WordError(f"unknown base vertex {w.base!r}")
    v = w.base
    for L in w.letters:
        if L[0] not in g.edges:
            raise WordError(f"unknown edge {L[0]!r}")
        if letter_start(g, L) != v:
            raise WordError(f"letter {render_letter(L)} does not start at {v}")
        v = letter_end(g, L)
    if v != w.base:
        raise WordError("word is not a closed path at its base")
    for vertex, x in zip(w.vertex_path(g), w.elements):
        normalize_element(g.vertices[vertex], x)


def make_word(g: GraphOfGroups, base: str, elements: Sequence, letters: Sequence[Letter]) -> LoopWord:
    w = LoopWord(base, tuple(elements), tuple(letters))
    check_word(g, w)
    verts = w.vertex_path(g)
    return LoopWord(base, tuple(normalize_element(g.vertices[v], x) for v, x in zip(verts, w.elements)),
                    w.letters)


def concat(g: GraphOfGroups, w1: LoopWord, w2: LoopWord) -> LoopWord:
    """Product of two loops; ``w2`` must be based where ``w1`` ends."""
    end = w1.vertex_path(g)[-1]
    if w2.base != end:
        raise WordError(f"cannot concatenate: {w1.base}-path ends at {end}, next starts at {w2.base}")
    label = g.vertices[end]
    mid = multiply(label, w1.elements[-1], w2.elements[0])
    return LoopWord(w1.base, w1.elements[:-1] + (mid,) + w2.elements[1:], w1.letters + w2.letters)


def inverse_word(g: GraphOfGroups, w: LoopWord) -> LoopWord:
    verts = w.vertex_path(g)
    elements = tuple(invert(g.vertices[v], x) for v, x in zip(reversed(verts), reversed(w.elements)))
    letters = tuple(invert_letter(L) for L in reversed(w.letters))
    return LoopWord(verts[-1], elements, letters)


def power(g: GraphOfGroups, w: LoopWord, n: int) -> LoopWord:
    if n < 0:
        return power(g, inverse_word(g, w), -n)
    result = LoopWord(w.base, (identity(g.vertices[w.base]),))
    for _ in range(n):
        result = concat(g, result, w)
    return result


def conjugate(g: GraphOfGroups, c: LoopWord, w: LoopWord) -> LoopWord:
    """``c . w . c^-1``."""
    return concat(g, concat(g, c, w), inverse_word(g, c))


# -- reduction ---------------------------------------------------------------------


def _pinch(g: GraphOfGroups, letter: Letter, m):
    """For ``letter . m . letter^-1``, return the collapsed element at the
    letter's start, or None when ``m`` is not in the edge group image."""
    e = g.edges[letter[0]]
    s_end, s_start = end_side(letter), start_side(letter)
    x = preimage(e.injection_at(s_end), e.label, g.vertices[e.vertex_at(s_end)], m)
    if x is None:
        return None
    return apply_injection(e.injection_at(s_start), e.label, g.vertices[e.vertex_at(s_start)], x)


def _linear_reduce(g: GraphOfGroups, w: LoopWord) -> LoopWord:
    elements = [w.elements[0]]
    letters: List[Letter] = []
    for L, x in zip(w.letters, w.elements[1:]):
        if letters and letters[-1] == invert_letter(L):
            r = _pinch(g, letters[-1], elements[-1])
            if r is not None:
                letters.pop()
                elements.pop()
                v = letter_end(g, letters[-1]) if letters else w.base
                label = g.vertices[v]
                elements[-1] = multiply(label, multiply(label, elements[-1], r), x)
                continue
        letters.append(L)
        elements.append(x)
    return LoopWord(w.base, tuple(elements), tuple(letters))


def reduce_word(g: GraphOfGroups, w: LoopWord, cyclic: bool = False) -> LoopWord:
    """Britton reduction: remove every pinch ``L . m . L^-1`` with ``m`` in
    the image of the edge group at the far end of ``L``.

    With ``cyclic`` the result is also reduced across the wrap point, so it is
    a shortest representative of the conjugacy class; its last element is the
    identity.  Raises ``OpaquePinch`` when a pinch test needs arithmetic in an
    opaque label.
    """
    w = _linear_reduce(g, w)
    if not cyclic:
        return w
    while w.length >= 2 and w.letters[0] == invert_letter(w.letters[-1]):
        base_label = g.vertices[w.base]
        m = multiply(base_label, w.elements[-1], w.elements[0])
        r = _pinch(g, w.letters[-1], m)
        if r is None:
            break
        last_v = letter_start(g, w.letters[-1])
        elements = list(w.elements[1:-1])
        elements[-1] = multiply(g.vertices[last_v], elements[-1], r)
        w = _linear_reduce(g, LoopWord(letter_end(g, w.letters[0]), tuple(elements), w.letters[1:-1]))
    # rotate the closing element to the front
    label = g.vertices[w.base]
    if w.length == 0:
        return w
    first = multiply(label, w.elements[-1], w.elements[0])
    return LoopWord(w.base, (first,) + w.elements[1:-1] + (identity(label),), w.letters)


# -- ellipticity -------------------------------------------------------------------


@dataclass(frozen=True)
class EllipticityVerdict:
    status: str  # "Elliptic" | "Hyperbolic" | "Unknown"
    witness: Optional[LoopWord]
    translation_length: int = 0
    reason: str = ""

    @property
    def elliptic(self) -> bool:
        return self.status == "Elliptic"

    @property
    def hyperbolic(self) -> bool:
        return self.status == "Hyperbolic"


def is_elliptic(g: GraphOfGroups, w: LoopWord, collapsed: Optional[Iterable[str]] = None) -> EllipticityVerdict:
    """Elliptic/hyperbolic status of ``w`` in the Bass-Serre tree of ``g``.

    With ``collapsed`` the status refers to the tree obtained by collapsing
    the orbits of those edges; the translation length then counts the
    witness letters whose edges survive.
    """
    try:
        r = reduce_word(g, w, cyclic=True)
    except OpaquePinch as exc:
        return EllipticityVerdict("Unknown", None, 0, str(exc))
    dead = set(collapsed or ())
    n = sum(1 for L in r.letters if L[0] not in dead)
    if n == 0:
        return EllipticityVerdict("Elliptic", r)
    return EllipticityVerdict("Hyperbolic", r, n)


@dataclass(frozen=True)
class SubgroupVerdict:
    status: str  # "Elliptic" | "NotElliptic" | "Unknown"
    witness: Optional[LoopWord] = None
    reason: str = ""


def subgroup_elliptic(g: GraphOfGroups, generators: Sequence[LoopWord],
                      collapsed: Optional[Iterable[str]] = None) -> SubgroupVerdict:
    """Serre's criterion on a finite generating set.

    The subgroup fixes a point iff every generator and every product of two
    generators is elliptic.  Generators must share a base vertex.
    """
    collapsed = frozenset(collapsed or ())
    bases = {w.base for w in generators}
    if len(bases) > 1:
        raise WordError("generators must share a base vertex")
    candidates = list(generators)
    candidates += [concat(g, a, b) for a, b in combinations(generators, 2)]
    unknown = ""
    for w in candidates:
        v = is_elliptic(g, w, collapsed)
        if v.hyperbolic:
            return SubgroupVerdict("NotElliptic", w)
        if v.status == "Unknown" and not unknown:
            unknown = v.reason
    if unknown:
        return SubgroupVerdict("Unknown", None, unknown)
    return SubgroupVerdict("Elliptic")


def vertex_generators(g: GraphOfGroups, v: str) -> List:
    """Generators of the vertex group, in the element encoding.

    Opaque labels get one formal symbol (or one per factor, or the inner
    component's generators for a quotient); they stand for a generic element.
    """
    label = g.vertices[v]
    if isinstance(label, Trivial):
        return []
    if isinstance(label, (FiniteCyclic, InfCyclic)):
        return [1]
    if isinstance(label, Atom):
        return [((label.name, 1),)]
    if isinstance(label, Product):
        return [((f"{v}_{i}", 1),) for i in range(len(label.factors))]
    inner = label.inner
    return component_generators(inner, set(inner.vertices), set(inner.edges), inner.base)


def component_generators(g: GraphOfGroups, vertices: set, edges: set, root: str) -> List[LoopWord]:
    """Generating loops at ``root`` for the fundamental group of the
    sub-graph of groups on ``vertices``/``edges``: conjugated vertex
    generators plus one loop per non-tree edge."""
    paths, tree = tree_paths(g, root, edges)
    gens: List[LoopWord] = []
    for v in sorted(vertices):
        p = paths[v]
        for x in vertex_generators(g, v):
            gens.append(_path_element(g, p, root, x, True))
    for eid in sorted(edges - tree):
        e = g.edges[eid]
        letters = paths[e.origin] + [(eid, True)] + [invert_letter(L) for L in reversed(paths[e.terminus])]
        verts = [root] + [letter_end(g, L) for L in letters]
        gens.append(LoopWord(root, tuple(identity(g.vertices[x]) for x in verts), tuple(letters)))
    return gens


@dataclass(frozen=True)
class DominationVerdict:
    status: str  # "Dominates" | "RefutedBy" | "Inconclusive"
    witness: Optional[LoopWord] = None
    reason: str = ""


def dominates(g: GraphOfGroups, e1: Iterable[str], e2: Iterable[str],
              samples: Sequence[LoopWord] = ()) -> DominationVerdict:
    """Does the collapse along ``e1`` dominate the collapse along ``e2``?

    Each vertex group of the first tree is the fundamental group of a
    component of the ``e1`` sub-graph; it is checked for a fixed point in
    the second tree via Serre's criterion.
    """
    e1, e2 = frozenset(e1), frozenset(e2)
    if e1 & e2:
        raise ValueError(f"edge sets overlap: {sorted(e1 & e2)}")
    unknown = ""
    for comp in g.components(e1):
        comp_edges = {eid for eid in e1 if g.edges[eid].origin in comp}
        root = min(comp)
        gens = component_generators(g, comp, comp_edges, root)
        verdict = subgroup_elliptic(g, gens, e2)
        if verdict.status == "NotElliptic":
            return DominationVerdict("RefutedBy", verdict.witness)
        if verdict.status == "Unknown" and not unknown:
            unknown = verdict.reason
    if not unknown:
        return DominationVerdict("Dominates")
    for w in samples:
        v1, v2 = is_elliptic(g, w, e1), is_elliptic(g, w, e2)
        if v1.elliptic and v2.hyperbolic:
            return DominationVerdict("RefutedBy", w)
    return DominationVerdict("Inconclusive", None, unknown)


# -- text --------------------------------------------------------------------------


def render_letter(L: Letter) -> str:
    return L[0] + ("'" if L[1] else "")


def render_element(label: GroupLabel, x) -> str:
    if isinstance(label, (FiniteCyclic, InfCyclic, Trivial)):
        return f"a^{x}"
    if isinstance(label, (Atom, Product)):
        return "[" + ",".join(s if e == 1 else f"{s}^{e}" for s, e in x) + "]"
    return "{" + render_word(label.inner, x) + "}"


def render_word(g: GraphOfGroups, w: LoopWord) -> str:
    """Space-separated tokens; identity elements are omitted, the base is
    given as a prefix on the first token when it would be ambiguous."""
    tokens: List[str] = []
    verts = w.vertex_path(g)
    for i, x in enumerate(w.elements):
        label = g.vertices[verts[i]]
        if not is_identity(label, x):
            tokens.append(f"{verts[i]}.{render_element(label, x)}")
        if i < w.length:
            tokens.append(render_letter(w.letters[i]))
    if not tokens:
        return f"{w.base}.1"
    if not tokens[0].startswith(f"{w.base}.") and w.base != letter_start(g, w.letters[0]):
        tokens.insert(0, f"{w.base}.1")
    return " ".join(tokens)


_WORD_TOKEN = re.compile(
    r"\s*(?:(?P<vert>[A-Za-z_][A-Za-z0-9_]*)\.)?"
    r"(?:(?P<one>1)(?![0-9])"
    r"|\[(?P<atom>[^\]]*)\]"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)(?P<prime>')?(?:\^(?P<exp>-?\d+))?)"
)


def _parse_atom_symbols(text: str) -> tuple:
    out = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        m = re.fullmatch(r"([A-Za-z_][A-Za-z0-9_]*)(?:\^(-?\d+))?", part)
        if not m:
            raise WordError(f"bad atom symbol {part!r}")
        k = int(m.group(2) or 1)
        out.extend([(m.group(1), 1 if k > 0 else -1)] * abs(k))
    return _free_reduce(out)


def parse_word(g: GraphOfGroups, text: str, base: Optional[str] = None) -> LoopWord:
    """Parse ``a^k``, ``v.a^k``, ``v.[x,y^-1]``, ``e``, ``e'``, ``e^-2`` tokens.

    Tokens are separated by whitespace or ``·``.  Element tokens without a
    vertex prefix refer to the current vertex of the path; the base defaults
    to the first prefix, the start of the first letter, or the graph base.
    """
    text = text.replace("·", " ").strip()
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _WORD_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise WordError(f"cannot parse word at {text[pos:]!r}")
        tokens.append(m)
        pos = m.end()
    steps: List[Tuple[str, object]] = []
    for m in tokens:
        vert, name = m.group("vert"), m.group("name")
        if m.group("one") is not None:
            steps.append(("elem", (vert, None)))
        elif m.group("atom") is not None:
            steps.append(("elem", (vert, _parse_atom_symbols(m.group("atom")))))
        elif name in g.edges and vert is None:
            k = int(m.group("exp") or 1)
            rev = bool(m.group("prime"))
            if k < 0:
                rev, k = not rev, -k
            steps.extend([("letter", (name, rev))] * k)
        elif name == "a" and not m.group("prime"):
            steps.append(("elem", (vert, int(m.group("exp") or 1))))
        else:
            raise WordError(f"unknown token {m.group().strip()!r}")
    if base is None:
        for kind, data in steps:
            if kind == "elem" and data[0] is not None:
                base = data[0]
            elif kind == "letter":
                base = letter_start(g, data)
            else:
                continue
            break
        else:
            base = g.base
    if base not in g.vertices:
        raise WordError(f"unknown vertex {base!r}")
    current = base
    elements = [identity(g.vertices[base])]
    letters: List[Letter] = []
    for kind, data in steps:
        if kind == "letter":
            if data[0] not in g.edges:
                raise WordError(f"unknown edge {data[0]!r}")
            if letter_start(g, data) != current:
                raise WordError(f"letter {render_letter(data)} does not start at {current}")
            letters.append(data)
            current = letter_end(g, data)
            elements.append(identity(g.vertices[current]))
        else:
            vert, x = data
            if vert is not None and vert != current:
                raise WordError(f"element at {vert} but the path is at {current}")
            if x is None:
                continue
            label = g.vertices[current]
            elements[-1] = multiply(label, elements[-1], normalize_element(label, x))
    if current != base:
        raise WordError(f"word is not closed: starts at {base}, ends at {current}")
    return LoopWord(base, tuple(elements), tuple(letters))
