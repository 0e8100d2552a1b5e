"""Compact 2-orbifold signatures and QH-vertex bookkeeping.

A signature records the underlying surface (genus, orientability), cone
points, and the circles of the topological boundary.  Each such circle is
either entirely boundary (``B``), entirely mirror (``M``, possibly with
corner reflectors), or a cyclic alternation of boundary arcs and mirror
runs, written ``B-M-3-M`` with corner orders between consecutive mirrors.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .gog import Edge, End, GraphOfGroups
from .labels import (
    Atom,
    FiniteCyclic,
    GroupLabel,
    InfCyclic,
    NamedEmbedding,
    Product,
    Quotient,
    Trivial,
    TRIV,
    is_finite,
    product,
)


class OrbifoldError(ValueError):
    pass


# -- signatures --------------------------------------------------------------------


@dataclass(frozen=True)
class Circle:
    """One circle of the topological boundary, as a cyclic item sequence of
    ``"B"``, ``"M"`` and corner orders (ints, only between two ``"M"``)."""

    items: Tuple[Union[str, int], ...]

    def __post_init__(self):
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        segs = [x for x in items if isinstance(x, str)]
        if not segs:
            raise OrbifoldError("a boundary circle needs at least one segment")
        for x in items:
            if isinstance(x, str) and x not in ("B", "M"):
                raise OrbifoldError(f"unknown segment {x!r}")
            if isinstance(x, int) and x < 2:
                raise OrbifoldError(f"corner orders must be >= 2, got {x}")
        if items == ("B",) or items == ("M",):
            return
        n = len(items)
        for i, x in enumerate(items):
            nxt = items[(i + 1) % n]
            prev = items[i - 1]
            if isinstance(x, int):
                if prev != "M" or nxt != "M":
                    raise OrbifoldError("corner reflectors sit only between two mirror segments")
            elif x == "B" and nxt == "B":
                raise OrbifoldError("boundary components are disjoint: B-B is not allowed")
            elif x == "M" and nxt == "M":
                raise OrbifoldError("adjacent mirrors must meet at a corner (write M-2-M)")

    @property
    def kind(self) -> str:
        if self.items == ("B",):
            return "boundary"
        if "B" not in self.items:
            return "mirror"
        return "mixed"

    @property
    def corners(self) -> Tuple[int, ...]:
        return tuple(x for x in self.items if isinstance(x, int))

    @property
    def boundary_arcs(self) -> int:
        return sum(1 for x in self.items if x == "B") if self.kind == "mixed" else 0

    def render(self) -> str:
        return "-".join(str(x) for x in self.items)


WHOLE_BOUNDARY = Circle(("B",))
WHOLE_MIRROR = Circle(("M",))


@dataclass(frozen=True)
class OrbifoldSig:
    genus: int = 0
    orientable: bool = True
    circles: Tuple[Circle, ...] = ()
    cones: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "circles", tuple(self.circles))
        object.__setattr__(self, "cones", tuple(sorted(self.cones)))
        if self.genus < 0:
            raise OrbifoldError("genus must be non-negative")
        if not self.orientable and self.genus < 1:
            raise OrbifoldError("a non-orientable surface has at least one cross-cap")
        if any(q < 2 for q in self.cones):
            raise OrbifoldError("cone orders must be >= 2")

    @property
    def has_mirrors(self) -> bool:
        return any(c.kind != "boundary" for c in self.circles)

    def boundary_components(self) -> List[Tuple[int, Optional[int]]]:
        """(circle index, arc index or None) for each component of the boundary."""
        out = []
        for i, c in enumerate(self.circles):
            if c.kind == "boundary":
                out.append((i, None))
            elif c.kind == "mixed":
                out.extend((i, j) for j in range(c.boundary_arcs))
        return out

    def topological_euler(self) -> int:
        b = len(self.circles)
        return 2 - 2 * self.genus - b if self.orientable else 2 - self.genus - b

    def render(self) -> str:
        parts = [f"g={self.genus}", f"or={'true' if self.orientable else 'false'}"]
        parts.append("bd=[" + ", ".join(c.render() for c in self.circles) + "]")
        parts.append("cones=[" + ", ".join(str(q) for q in self.cones) + "]")
        return "sig(" + ", ".join(parts) + ")"


def _circle_token(tok: str) -> Circle:
    tok = tok.strip()
    alias = {"circle": "B", "boundary": "B", "mirror": "M"}
    items: List[Union[str, int]] = []
    for part in tok.split("-"):
        part = alias.get(part.strip(), part.strip())
        if part in ("B", "M"):
            items.append(part)
        elif part.isdigit():
            items.append(int(part))
        else:
            raise OrbifoldError(f"bad circle token {tok!r}")
    return Circle(tuple(items))


def _split_list(body: str) -> List[str]:
    return [x.strip() for x in body.split(",") if x.strip()]


def parse_sig(text: str) -> OrbifoldSig:
    """Parse ``sig(g=1, or=true, bd=[circle, B-M-2-M], cones=[2,3], mirrors=[M-3-M])``.

    ``mirrors`` lists further circles; each must be entirely mirror.
    """
    m = re.fullmatch(r"\s*sig\s*\((.*)\)\s*", text, re.S)
    if not m:
        raise OrbifoldError("signature must look like sig(...)")
    body = m.group(1)
    fields = {}
    for km in re.finditer(r"(\w+)\s*=\s*(\[[^\]]*\]|[^,\s\)]+)", body):
        fields[km.group(1)] = km.group(2)
    leftover = re.sub(r"(\w+)\s*=\s*(\[[^\]]*\]|[^,\s\)]+)", "", body).replace(",", "").strip()
    if leftover:
        raise OrbifoldError(f"unexpected text in signature: {leftover!r}")
    unknown = set(fields) - {"g", "or", "bd", "cones", "mirrors"}
    if unknown:
        raise OrbifoldError(f"unknown signature field(s): {sorted(unknown)}")

    def as_list(key):
        raw = fields.get(key, "[]")
        if not (raw.startswith("[") and raw.endswith("]")):
            raise OrbifoldError(f"{key} must be a bracketed list")
        return _split_list(raw[1:-1])

    genus = int(fields.get("g", "0"))
    orient = fields.get("or", "true").lower()
    if orient not in ("true", "false"):
        raise OrbifoldError("or must be true or false")
    circles = [_circle_token(t) for t in as_list("bd")]
    for t in as_list("mirrors"):
        c = _circle_token(t)
        if c.kind != "mirror":
            raise OrbifoldError(f"mirrors entry {t!r} contains boundary")
        circles.append(c)
    try:
        cones = [int(q) for q in as_list("cones")]
    except ValueError:
        raise OrbifoldError("cone orders must be integers") from None
    return OrbifoldSig(genus, orient == "true", tuple(circles), tuple(cones))


# -- Euler characteristic ----------------------------------------------------------


def _bad(sig: OrbifoldSig) -> Optional[str]:
    if sig.genus or not sig.orientable:
        return None
    if not sig.circles:
        if len(sig.cones) == 1:
            return "teardrop (sphere with one cone point)"
        if len(sig.cones) == 2 and sig.cones[0] != sig.cones[1]:
            return "spindle (sphere with two unequal cone points)"
    if len(sig.circles) == 1 and sig.circles[0].kind == "mirror" and not sig.cones:
        corners = sig.circles[0].corners
        if len(corners) == 1:
            return "reflector teardrop (mirror disc with one corner)"
        if len(corners) == 2 and corners[0] != corners[1]:
            return "reflector spindle (mirror disc with two unequal corners)"
    return None


@dataclass(frozen=True)
class EulerResult:
    chi: Fraction
    hyperbolic: bool


def euler_characteristic(sig: OrbifoldSig) -> EulerResult:
    """chi_top - sum(1 - 1/q) over cones - 1/2 sum(1 - 1/r) over corners,
    minus 1/2 for each mirror run ending on boundary arcs.

    Bad orbifolds raise OrbifoldError.
    """
    bad = _bad(sig)
    if bad:
        raise OrbifoldError(f"bad orbifold: {bad}")
    chi = Fraction(sig.topological_euler())
    chi -= sum((1 - Fraction(1, q) for q in sig.cones), Fraction(0))
    for c in sig.circles:
        chi -= sum((Fraction(1, 2) * (1 - Fraction(1, r)) for r in c.corners), Fraction(0))
        # each mirror run of a mixed circle is an arc: half its Euler characteristic
        chi -= Fraction(c.boundary_arcs, 2)
    return EulerResult(chi, chi < 0)


def _require_hyperbolic(sig: OrbifoldSig) -> None:
    if not euler_characteristic(sig).hyperbolic:
        raise OrbifoldError(f"{sig.render()} is not hyperbolic")


# -- essential curves --------------------------------------------------------------


def has_essential_scc(sig: OrbifoldSig) -> str:
    """Yes / No / Unknown: does the orbifold contain an essential simple closed geodesic?

    Mirror-free orientable case: pants-decomposition count 3g - 3 + n >= 1,
    with boundary circles and cone points both counted in n.  Mirror-free
    non-orientable hyperbolic surfaces always contain a one-sided simple
    closed geodesic.  Reflection polygons (a disc bounded by mirrors with k
    corners) contain one iff k >= 4.  Other mirror cases are Unknown.
    """
    _require_hyperbolic(sig)
    if not sig.has_mirrors:
        if sig.orientable:
            n = len(sig.circles) + len(sig.cones)
            return "Yes" if 3 * sig.genus - 3 + n >= 1 else "No"
        return "Yes"
    if (sig.orientable and sig.genus == 0 and not sig.cones and len(sig.circles) == 1
            and sig.circles[0].kind == "mirror"):
        return "Yes" if len(sig.circles[0].corners) >= 4 else "No"
    return "Unknown"


# -- boundary splittings -----------------------------------------------------------


@dataclass(frozen=True)
class ArcCase:
    case: str  # FreeArc | DiscMirrorZ2 | AnnulusArcFree | AnnulusMirrorZ2
    edge_group: GroupLabel


def boundary_splitting_case(sig: OrbifoldSig, component: int) -> ArcCase:
    """Which arc gives a non-trivial splitting relative to the other boundary components.

    An arc with both endpoints on the component gives a free splitting unless
    the underlying surface is a disc or an annulus without cone points; then
    an arc to a mirror gives a splitting over Z/2, except for a boundary arc
    on an annulus, which still has a free arc.
    """
    _require_hyperbolic(sig)
    comps = sig.boundary_components()
    if not 0 <= component < len(comps):
        raise OrbifoldError(f"component {component} out of range (0..{len(comps) - 1})")
    circle, arc = comps[component]
    planar = sig.orientable and sig.genus == 0 and not sig.cones
    if planar and len(sig.circles) == 1:
        return ArcCase("DiscMirrorZ2", FiniteCyclic(2))
    if planar and len(sig.circles) == 2:
        if arc is not None:
            return ArcCase("AnnulusArcFree", Trivial())
        return ArcCase("AnnulusMirrorZ2", FiniteCyclic(2))
    return ArcCase("FreeArc", Trivial())


# -- QH validation -----------------------------------------------------------------


@dataclass(frozen=True)
class FiniteImage:
    pass


@dataclass(frozen=True)
class InBoundary:
    component: int
    finite_index: bool = True


@dataclass(frozen=True)
class Unconstrained:
    """The image is neither finite nor known to lie in a boundary subgroup."""


Assignment = Union[FiniteImage, InBoundary, Unconstrained]


@dataclass(frozen=True)
class QhData:
    fiber: GroupLabel
    sig: OrbifoldSig
    incident_assignments: Mapping = field(default_factory=dict)
    relative_assignments: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class QhReport:
    is_qh: bool
    used: Tuple[int, ...]
    unused: Tuple[int, ...]
    flexibility: str  # Yes | No | Unknown
    problems: Tuple[str, ...] = ()


def fiber_universally_elliptic(fiber: GroupLabel) -> bool:
    if isinstance(fiber, Trivial) or is_finite(fiber):
        return True
    if isinstance(fiber, Atom):
        return "universally_elliptic" in fiber.flags
    if isinstance(fiber, Product):
        return all(fiber_universally_elliptic(f) for f in fiber.factors)
    return False


def flexibility(sig: OrbifoldSig, fiber: GroupLabel) -> str:
    scc = has_essential_scc(sig)
    if scc == "No":
        return "No"
    if scc == "Yes" and fiber_universally_elliptic(fiber):
        return "Yes"
    return "Unknown"


def _normalize_keys(g: GraphOfGroups, v: str, assignments: Mapping) -> Dict[End, Assignment]:
    ends = g.incident_ends(v)
    out: Dict[End, Assignment] = {}
    for key, a in assignments.items():
        if isinstance(key, str):
            if "." in key:
                fid, side = key.split(".", 1)
                key = (fid, side)
            else:
                hits = [end for end in ends if end[0] == key]
                if len(hits) != 1:
                    raise OrbifoldError(f"assignment key {key!r} must name exactly one end at {v}")
                key = hits[0]
        key = tuple(key)
        if key not in ends:
            raise OrbifoldError(f"{key[0]}.{key[1]} is not incident to {v}")
        if key in out:
            raise OrbifoldError(f"{key[0]}.{key[1]} assigned twice")
        out[key] = a
    return out


def validate_qh(g: GraphOfGroups, v: str, data: QhData) -> QhReport:
    """Check the QH conditions at ``v`` for the declared data.

    A component is used when some incident or relative group is assigned to
    it with finite index.
    """
    if v not in g.vertices:
        raise OrbifoldError(f"unknown vertex {v!r}")
    inc = _normalize_keys(g, v, data.incident_assignments)
    missing = [end for end in g.incident_ends(v) if end not in inc]
    if missing:
        raise OrbifoldError("missing assignment for " + ", ".join(f"{f}.{s}" for f, s in missing))
    n_comp = len(data.sig.boundary_components())
    problems = []
    used = set()
    everything = [(f"{f}.{s}", a) for (f, s), a in sorted(inc.items())]
    everything += [(f"relative {k}", a) for k, a in sorted(data.relative_assignments.items())]
    for name, a in everything:
        if isinstance(a, InBoundary):
            if not 0 <= a.component < n_comp:
                raise OrbifoldError(f"{name}: boundary component {a.component} out of range")
            if a.finite_index:
                used.add(a.component)
        elif isinstance(a, Unconstrained):
            problems.append(f"{name}: image neither finite nor in a boundary subgroup")
    return QhReport(
        not problems,
        tuple(sorted(used)),
        tuple(i for i in range(n_comp) if i not in used),
        flexibility(data.sig, data.fiber),
        tuple(problems),
    )


# -- dual graphs of cut systems ----------------------------------------------------


@dataclass(frozen=True)
class CutSystem:
    pieces: Tuple[OrbifoldSig, ...]
    # each curve lists the (piece, boundary slot) ends it separates; one end = one-sided
    curves: Tuple[Tuple[Tuple[int, int], ...], ...]


def dual_tree(sig: OrbifoldSig, cut: CutSystem) -> Tuple[GraphOfGroups, Dict[str, OrbifoldSig]]:
    """Graph of groups dual to a family of disjoint two-sided curves.

    One atom vertex ``p<i>`` per piece and one Z edge ``c<j>`` per curve,
    attached through ``emb:b<slot>``.  Euler characteristics must add up and
    the unused piece boundary slots must match the boundary of ``sig``.
    """
    if not cut.pieces:
        raise OrbifoldError("a cut system needs at least one piece")
    used_slots = set()
    for j, ends in enumerate(cut.curves):
        if len(ends) == 1:
            raise OrbifoldError(
                f"curve {j} is one-sided; cut along the boundary of its regular neighbourhood instead")
        if len(ends) != 2:
            raise OrbifoldError(f"curve {j} must have exactly two sides")
        for p, s in ends:
            if not 0 <= p < len(cut.pieces):
                raise OrbifoldError(f"curve {j}: unknown piece {p}")
            comps = cut.pieces[p].boundary_components()
            if not 0 <= s < len(comps):
                raise OrbifoldError(f"curve {j}: piece {p} has no boundary slot {s}")
            if comps[s][1] is not None:
                raise OrbifoldError(f"curve {j}: slot {s} of piece {p} is an arc, not a circle")
            if (p, s) in used_slots:
                raise OrbifoldError(f"slot {s} of piece {p} used twice")
            used_slots.add((p, s))
    total = sum((euler_characteristic(p).chi for p in cut.pieces), Fraction(0))
    chi = euler_characteristic(sig).chi
    if total != chi:
        raise OrbifoldError(f"Euler characteristic mismatch: pieces sum to {total}, "
                            f"orbifold has {chi} (deficit {chi - total})")
    slots = sum(len(p.boundary_components()) for p in cut.pieces)
    expected = len(sig.boundary_components()) + 2 * len(cut.curves)
    if slots != expected:
        raise OrbifoldError(f"boundary slot mismatch: pieces have {slots}, expected {expected} "
                            "(orbifold boundary + 2 per curve)")
    free = sorted(cut.pieces[p].boundary_components()[s][1] is None
                  for p in range(len(cut.pieces))
                  for s in range(len(cut.pieces[p].boundary_components())) if (p, s) not in used_slots)
    if free != sorted(c[1] is None for c in sig.boundary_components()):
        raise OrbifoldError("unused piece slots do not match the orbifold's boundary components")
    width = len(str(max(len(cut.pieces), len(cut.curves), 1) - 1))
    names = [f"p{i:0{width}d}" for i in range(len(cut.pieces))]
    vertices = {names[i]: Atom(f"orb{i}") for i in range(len(cut.pieces))}
    edges = {}
    for j, ((p1, s1), (p2, s2)) in enumerate(cut.curves):
        edges[f"c{j:0{width}d}"] = Edge(names[p1], names[p2], InfCyclic(),
                                         NamedEmbedding(f"b{s1}"), NamedEmbedding(f"b{s2}"))
    try:
        g = GraphOfGroups(vertices, edges)
    except ValueError as exc:
        raise OrbifoldError(f"cut system is not connected: {exc}") from None
    return g, {names[i]: cut.pieces[i] for i in range(len(cut.pieces))}


# -- filling -----------------------------------------------------------------------


def fill(g: GraphOfGroups, marked: Sequence[Tuple[GroupLabel, str]]) -> GraphOfGroups:
    """Star with centre ``v`` labelled by ``g`` and one leaf ``v<i>`` per marked
    subgroup H_i, labelled H_i x R_i with R_i an atom having property FA; edge
    ``e<i>`` is labelled H_i."""
    vertices: Dict[str, GroupLabel] = {"v": Quotient(g)}
    edges = {}
    for i, entry in enumerate(marked, start=1):
        try:
            h, r = entry
        except (TypeError, ValueError):
            raise OrbifoldError(f"marked entry {i} must be (subgroup label, atom name)") from None
        if not isinstance(r, str) or not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", r):
            raise OrbifoldError(f"marked entry {i}: atom name {r!r} is not an identifier")
        if not isinstance(h, (Trivial, FiniteCyclic, InfCyclic, Atom, Product)):
            raise OrbifoldError(f"marked entry {i}: subgroup must be a plain label, got {h!r}")
        leaf = product(h, Atom(r, frozenset({"property_fa"})))
        vertices[f"v{i}"] = leaf
        if isinstance(h, Trivial):
            io = it = TRIV
        else:
            io, it = NamedEmbedding(f"h{i}"), NamedEmbedding(f"h{i}")
        edges[f"e{i}"] = Edge("v", f"v{i}", h, io, it)
    return GraphOfGroups(vertices, edges)


def unfill(star: GraphOfGroups) -> GraphOfGroups:
    """Recover ``g`` from ``fill(g, ...)``."""
    centre = star.vertices.get("v")
    if not isinstance(centre, Quotient):
        raise OrbifoldError("not a filled star: centre v must carry a quotient label")
    return centre.inner


def marks_of(star: GraphOfGroups) -> List[Tuple[GroupLabel, str]]:
    out = []
    for eid in sorted(star.edges, key=lambda e: int(e[1:]) if e[1:].isdigit() else 0):
        e = star.edges[eid]
        leaf = star.vertices[e.terminus]
        atom = leaf.factors[-1] if isinstance(leaf, Product) else leaf
        out.append((e.label, atom.name))
    return out


def star_universally_elliptic(star: GraphOfGroups) -> bool:
    """A filled star is flagged universally elliptic when every leaf carries an
    atom with property FA and every edge group is the leaf's H factor."""
    if not isinstance(star.vertices.get("v"), Quotient):
        return False
    for eid, e in star.edges.items():
        if e.origin != "v" or e.terminus == "v":
            return False
        leaf = star.vertices[e.terminus]
        factors = leaf.factors if isinstance(leaf, Product) else (leaf,)
        fa = factors[-1]
        if not (isinstance(fa, Atom) and "property_fa" in fa.flags):
            return False
        if product(*factors[:-1]) != e.label:
            return False
    return True
