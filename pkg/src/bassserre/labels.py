"""Group labels, edge injections and edge-group classes.

Labels are a small computable algebra of group descriptors.  Only the
cyclic labels (``Trivial``, ``FiniteCyclic``, ``InfCyclic``) carry
arithmetic; atoms, products and quotients are opaque and are reasoned
about through declared flags and named embeddings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from math import gcd
from typing import TYPE_CHECKING, Optional, Union

if TYPE_CHECKING:
    from .gog import GraphOfGroups

ATOM_FLAGS = frozenset(
    {"freely_indecomposable", "slender", "small", "property_fa", "universally_elliptic"}
)


class LabelError(ValueError):
    pass


@dataclass(frozen=True)
class Trivial:
    pass


@dataclass(frozen=True)
class FiniteCyclic:
    order: int

    def __post_init__(self):
        # order 1 must go through finite_cyclic() so that it becomes Trivial
        if self.order < 2:
            raise LabelError(f"finite cyclic order must be >= 2, got {self.order}")


@dataclass(frozen=True)
class InfCyclic:
    pass


@dataclass(frozen=True)
class Atom:
    name: str
    flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "flags", frozenset(self.flags))
        unknown = self.flags - ATOM_FLAGS
        if unknown:
            raise LabelError(f"unknown atom flag(s): {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class Product:
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if len(self.factors) < 2:
            raise LabelError("a product needs at least two factors")
        if any(isinstance(f, Trivial) for f in self.factors):
            raise LabelError("a product factor may not be trivial")


@dataclass(frozen=True)
class Quotient:
    """Fundamental group of a collapsed sub-graph, stored verbatim."""

    inner: "GraphOfGroups"


GroupLabel = Union[Trivial, FiniteCyclic, InfCyclic, Atom, Product, Quotient]

TRIVIAL = Trivial()
Z = InfCyclic()


def finite_cyclic(order: int) -> GroupLabel:
    if order < 1:
        raise LabelError(f"cyclic order must be positive, got {order}")
    return TRIVIAL if order == 1 else FiniteCyclic(order)


def product(*factors: GroupLabel) -> GroupLabel:
    """Product with trivial factors dropped; one factor collapses to itself."""
    kept = tuple(f for f in factors if not isinstance(f, Trivial))
    if not kept:
        return TRIVIAL
    if len(kept) == 1:
        return kept[0]
    return Product(kept)


def is_arithmetic(label: GroupLabel) -> bool:
    return isinstance(label, (Trivial, FiniteCyclic, InfCyclic))


def cyclic_order(label: GroupLabel) -> Optional[int]:
    """1 for trivial, n for Z/n, 0 for Z, None for opaque labels."""
    if isinstance(label, Trivial):
        return 1
    if isinstance(label, FiniteCyclic):
        return label.order
    if isinstance(label, InfCyclic):
        return 0
    return None


def is_finite(label: GroupLabel) -> bool:
    if isinstance(label, (Trivial, FiniteCyclic)):
        return True
    if isinstance(label, Product):
        return all(is_finite(f) for f in label.factors)
    return False


# ---------------------------------------------------------------- injections


@dataclass(frozen=True)
class TrivialInto:
    pass


@dataclass(frozen=True)
class CyclicMult:
    multiplier: int

    def __post_init__(self):
        if self.multiplier == 0:
            raise LabelError("CyclicMult multiplier must be nonzero")


@dataclass(frozen=True)
class CyclicModMult:
    multiplier: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 1:
            raise LabelError("modulus must be positive")
        object.__setattr__(self, "multiplier", self.multiplier % self.modulus)


@dataclass(frozen=True)
class NamedEmbedding:
    """Opaque embedding.

    With ``inner`` set, the target is a ``Quotient`` label and the edge group
    is declared to sit in the inner vertex named ``tag`` through ``inner``.
    The tag ``id`` (without ``inner``) declares the identity map between
    equal labels.
    """

    tag: str
    inner: Optional["Injection"] = None


Injection = Union[TrivialInto, CyclicMult, CyclicModMult, NamedEmbedding]

TRIV = TrivialInto()
IDENTITY_TAG = "id"


def identity_injection(label: GroupLabel) -> Injection:
    if isinstance(label, Trivial):
        return TRIV
    if isinstance(label, FiniteCyclic):
        return CyclicModMult(1, label.order)
    if isinstance(label, InfCyclic):
        return CyclicMult(1)
    return NamedEmbedding(IDENTITY_TAG)


def _gen_image(inj: Injection) -> int:
    if isinstance(inj, TrivialInto):
        return 0
    return inj.multiplier


def _cyclic_injection(k: int, source: GroupLabel, target: GroupLabel) -> Injection:
    """The homomorphism source -> target sending generator to k-th power."""
    if isinstance(source, Trivial):
        return TRIV
    if isinstance(target, InfCyclic):
        return CyclicMult(k)
    return CyclicModMult(k, target.order)


def check_injection(inj: Injection, source: GroupLabel, target: GroupLabel) -> Optional[str]:
    """Return a description of what is wrong, or None when ``inj`` is valid."""
    if isinstance(inj, TrivialInto):
        if not isinstance(source, Trivial):
            return "triv requires a trivial edge label"
        return None
    if isinstance(inj, CyclicMult):
        if not (isinstance(source, InfCyclic) and isinstance(target, InfCyclic)):
            return "*k requires Z edge and Z vertex labels"
        return None
    if isinstance(inj, CyclicModMult):
        if not isinstance(target, FiniteCyclic):
            return "*k%n requires a finite cyclic vertex label"
        if inj.modulus != target.order:
            return f"modulus {inj.modulus} does not match vertex order {target.order}"
        m = cyclic_order(source)
        if m is None or m == 0:
            return "*k%n requires a finite cyclic or trivial edge label"
        if gcd(inj.multiplier, inj.modulus) * m != inj.modulus:
            return f"*{inj.multiplier}%{inj.modulus} is not injective on Z/{m}"
        return None
    # NamedEmbedding
    if is_arithmetic(target):
        return "emb: is only allowed into atom, product or quotient labels"
    if inj.inner is not None:
        if not isinstance(target, Quotient):
            return "emb:<vertex>(...) requires a quotient vertex label"
        inner_labels = target.inner.vertices
        if inj.tag not in inner_labels:
            return f"quotient has no inner vertex {inj.tag!r}"
        return check_injection(inj.inner, source, inner_labels[inj.tag])
    if inj.tag == IDENTITY_TAG and source != target:
        return "emb:id requires equal edge and vertex labels"
    return None


def is_onto(inj: Injection, source: GroupLabel, target: GroupLabel) -> bool:
    if isinstance(inj, TrivialInto):
        return isinstance(target, Trivial)
    if isinstance(inj, CyclicMult):
        return abs(inj.multiplier) == 1
    if isinstance(inj, CyclicModMult):
        return gcd(inj.multiplier, inj.modulus) == 1
    if inj.inner is not None:
        inner = target.inner
        return (
            len(inner.vertices) == 1
            and not inner.edges
            and is_onto(inj.inner, source, inner.vertices[inj.tag])
        )
    return inj.tag == IDENTITY_TAG


def compose(outer: Injection, inner: Injection, source: GroupLabel, middle: GroupLabel,
            target: GroupLabel) -> Injection:
    """outer o inner : source -> middle -> target."""
    if isinstance(inner, TrivialInto) or isinstance(source, Trivial):
        return TRIV
    if is_arithmetic(middle) and is_arithmetic(target):
        k = _gen_image(outer) * _gen_image(inner)
        return _cyclic_injection(k, source, target)
    if isinstance(outer, NamedEmbedding) and outer.tag == IDENTITY_TAG and outer.inner is None:
        return inner
    if isinstance(inner, NamedEmbedding) and inner.tag == IDENTITY_TAG and inner.inner is None:
        return outer
    if isinstance(outer, NamedEmbedding) and outer.inner is not None:
        inner_target = target.inner.vertices[outer.tag]
        return NamedEmbedding(outer.tag, compose(outer.inner, inner, source, middle, inner_target))
    raise LabelError("cannot compose opaque embeddings")


def factor(a: Injection, b: Injection, source_b: GroupLabel, source_a: GroupLabel,
           target: GroupLabel) -> Optional[Injection]:
    """Find c : source_b -> source_a with a o c = b, or None.

    ``a`` maps source_a into target, ``b`` maps source_b into target.
    """
    if isinstance(b, TrivialInto) or isinstance(source_b, Trivial):
        return TRIV
    if isinstance(source_a, Trivial):
        return None
    if is_arithmetic(target) and is_arithmetic(source_a):
        ka, kb = _gen_image(a), _gen_image(b)
        if isinstance(target, InfCyclic):
            if kb % ka:
                return None
            return _cyclic_injection(kb // ka, source_b, source_a)
        n = target.order
        d = gcd(ka, n)
        if kb % d:
            return None
        m = n // d  # order of source_a
        kc = (kb // d) * pow(ka // d, -1, m) % m if m > 1 else 0
        c = _cyclic_injection(kc, source_b, source_a)
        if check_injection(c, source_b, source_a) is not None:
            return None
        return c
    if a == b and source_a == source_b:
        return identity_injection(source_a)
    if isinstance(a, NamedEmbedding) and a.tag == IDENTITY_TAG and a.inner is None:
        return b
    if (isinstance(a, NamedEmbedding) and isinstance(b, NamedEmbedding)
            and a.inner is not None and b.inner is not None and a.tag == b.tag):
        inner_target = target.inner.vertices[a.tag]
        return factor(a.inner, b.inner, source_b, source_a, inner_target)
    return None


# ---------------------------------------------------------------- edge classes


class ClassSpec(enum.Enum):
    TRIVIAL_ONLY = "trivial"
    FINITE = "finite"
    FINITE_CYCLIC_ONLY = "finite-cyclic"
    CYCLIC = "cyclic"
    SLENDER_FLAGGED = "slender"
    ANY_DECLARED = "any"

    def admits(self, label: GroupLabel) -> bool:
        if self is ClassSpec.ANY_DECLARED:
            return True
        if self is ClassSpec.TRIVIAL_ONLY:
            return isinstance(label, Trivial)
        if self is ClassSpec.FINITE_CYCLIC_ONLY:
            return isinstance(label, (Trivial, FiniteCyclic))
        if self is ClassSpec.FINITE:
            return is_finite(label)
        if self is ClassSpec.CYCLIC:
            return is_arithmetic(label)
        # SLENDER_FLAGGED: arithmetic, slender atoms and products of those
        if is_arithmetic(label):
            return True
        if isinstance(label, Atom):
            return "slender" in label.flags
        if isinstance(label, Product):
            return all(self.admits(f) for f in label.factors)
        return False

    def includes(self, other: "ClassSpec") -> bool:
        """True when every label admitted by ``other`` is admitted by self."""
        return other in _SUBCLASSES[self]


_SUBCLASSES = {
    ClassSpec.TRIVIAL_ONLY: {ClassSpec.TRIVIAL_ONLY},
    ClassSpec.FINITE_CYCLIC_ONLY: {ClassSpec.TRIVIAL_ONLY, ClassSpec.FINITE_CYCLIC_ONLY},
    ClassSpec.FINITE: {ClassSpec.TRIVIAL_ONLY, ClassSpec.FINITE_CYCLIC_ONLY, ClassSpec.FINITE},
    ClassSpec.CYCLIC: {ClassSpec.TRIVIAL_ONLY, ClassSpec.FINITE_CYCLIC_ONLY, ClassSpec.CYCLIC},
}
_SUBCLASSES[ClassSpec.SLENDER_FLAGGED] = (
    _SUBCLASSES[ClassSpec.FINITE] | _SUBCLASSES[ClassSpec.CYCLIC] | {ClassSpec.SLENDER_FLAGGED}
)
_SUBCLASSES[ClassSpec.ANY_DECLARED] = set(ClassSpec)
