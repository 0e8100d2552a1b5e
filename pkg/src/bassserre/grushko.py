"""Free splittings: Grushko fingerprints, verdicts and comparison.

Atoms are identified by name, so two decompositions can only be compared
when they use consistent names for the same factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from .gog import GraphOfGroups, non_minimal_vertices, render_label
from .labels import Atom, InfCyclic, Trivial


class GrushkoError(ValueError):
    pass


@dataclass(frozen=True)
class GrushkoFingerprint:
    atoms: Tuple[str, ...]  # sorted multiset
    rank: int


def _atom_key(label) -> str:
    return label.name if isinstance(label, Atom) else render_label(label)


def grushko_fingerprint(g: GraphOfGroups) -> GrushkoFingerprint:
    for eid, e in g.edges.items():
        if not isinstance(e.label, Trivial):
            raise GrushkoError(f"edge {eid} has non-trivial label {render_label(e.label)}")
    atoms = sorted(_atom_key(lab) for lab in g.vertices.values() if not isinstance(lab, Trivial))
    return GrushkoFingerprint(tuple(atoms), g.betti_number())


@dataclass(frozen=True)
class GrushkoVerdict:
    is_grushko: bool
    reasons: Tuple[str, ...] = ()


def grushko_verdict(g: GraphOfGroups) -> GrushkoVerdict:
    reasons = []
    for eid, e in g.edges.items():
        if not isinstance(e.label, Trivial):
            reasons.append(f"edge {eid} has non-trivial label {render_label(e.label)}")
    for v, lab in g.vertices.items():
        if isinstance(lab, Trivial):
            continue
        if isinstance(lab, InfCyclic):
            reasons.append(f"vertex {v}: Z is freely decomposable")
        elif not isinstance(lab, Atom):
            reasons.append(f"vertex {v}: label {render_label(lab)} is not a declared atom")
        elif "freely_indecomposable" not in lab.flags:
            reasons.append(f"vertex {v}: atom {lab.name} lacks the freely_indecomposable flag")
    for v in non_minimal_vertices(g):
        reasons.append(f"vertex {v} is a non-minimal leaf")
    return GrushkoVerdict(not reasons, tuple(reasons))


def grushko_compare(a: GraphOfGroups, b: GraphOfGroups) -> str:
    """SameSpace, DifferentSpace, or Unknown when either input fails the verdict."""
    if not (grushko_verdict(a).is_grushko and grushko_verdict(b).is_grushko):
        return "Unknown"
    return "SameSpace" if grushko_fingerprint(a) == grushko_fingerprint(b) else "DifferentSpace"
