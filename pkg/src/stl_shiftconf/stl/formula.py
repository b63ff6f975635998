"""STL abstract syntax tree over linear predicates.

All nodes are frozen dataclasses, so formulas hash, compare structurally and
can be shared freely between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

from ..errors import IntervalError


@dataclass(frozen=True)
class Predicate:
    """Linear predicate ``a . x_t >= b``.

    ``a`` is stored with trailing zeros trimmed; a predicate that mentions only
    ``x0`` is valid on a trajectory of any dimension ``d >= 1``.
    """

    a: tuple[float, ...]
    b: float

    def __post_init__(self):
        a = tuple(float(v) for v in self.a)
        while a and a[-1] == 0.0:
            a = a[:-1]
        if not a:
            raise ValueError("predicate coefficients must not be all zero")
        if not all(math.isfinite(v) for v in a) or not math.isfinite(self.b):
            raise ValueError("predicate coefficients must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        """Smallest state dimension this predicate can be evaluated on."""
        return len(self.a)


@dataclass(frozen=True)
class Atom:
    predicate: Predicate

    @classmethod
    def ge(cls, a: Sequence[float], b: float) -> "Atom":
        return cls(Predicate(tuple(a), b))

    @classmethod
    def le(cls, a: Sequence[float], b: float) -> "Atom":
        """``a . x <= b``, canonicalised as ``-a . x >= -b``."""
        return cls(Predicate(tuple(-v for v in a), -b))


@dataclass(frozen=True)
class Not:
    child: "Formula"


@dataclass(frozen=True)
class And:
    children: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("And needs at least two children")


@dataclass(frozen=True)
class Or:
    children: tuple["Formula", ...]

    def __post_init__(self):
        object.__setattr__(self, "children", tuple(self.children))
        if len(self.children) < 2:
            raise ValueError("Or needs at least two children")


def _check_interval(t1: int, t2: int) -> None:
    if int(t1) != t1 or int(t2) != t2:
        raise IntervalError(f"interval bounds must be integers, got [{t1},{t2}]")
    if t1 < 0 or t1 > t2:
        raise IntervalError(f"invalid interval [{t1},{t2}]: need 0 <= t1 <= t2")


@dataclass(frozen=True)
class Eventually:
    t1: int
    t2: int
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.t1, self.t2)
        object.__setattr__(self, "t1", int(self.t1))
        object.__setattr__(self, "t2", int(self.t2))


@dataclass(frozen=True)
class Always:
    t1: int
    t2: int
    child: "Formula"

    def __post_init__(self):
        _check_interval(self.t1, self.t2)
        object.__setattr__(self, "t1", int(self.t1))
        object.__setattr__(self, "t2", int(self.t2))


Formula = Union[Atom, Not, And, Or, Eventually, Always]
Temporal = (Eventually, Always)


def children(f: Formula) -> tuple[Formula, ...]:
    if isinstance(f, Atom):
        return ()
    if isinstance(f, (And, Or)):
        return f.children
    return (f.child,)


def horizon(f: Formula) -> int:
    """Number of steps past ``t`` that evaluating ``f`` at ``t`` reads."""
    if isinstance(f, Atom):
        return 0
    if isinstance(f, Not):
        return horizon(f.child)
    if isinstance(f, (And, Or)):
        return max(horizon(c) for c in f.children)
    return f.t2 + horizon(f.child)


def dimension(f: Formula) -> int:
    """Minimum state dimension required by the predicates of ``f``."""
    if isinstance(f, Atom):
        return f.predicate.dim
    return max(dimension(c) for c in children(f))


def atoms(f: Formula) -> Iterator[Atom]:
    if isinstance(f, Atom):
        yield f
        return
    for c in children(f):
        yield from atoms(c)


def aggregation_depth(f: Formula) -> int:
    """Largest number of min/max aggregations on a root-to-leaf path.

    Singleton windows and the trivial cases count as zero because they do not
    aggregate anything.
    """
    if isinstance(f, Atom):
        return 0
    if isinstance(f, Not):
        return aggregation_depth(f.child)
    if isinstance(f, (And, Or)):
        return 1 + max(aggregation_depth(c) for c in f.children)
    own = 1 if f.t2 > f.t1 else 0
    return own + aggregation_depth(f.child)


def max_arity(f: Formula) -> int:
    """Largest aggregation width (number of children or window length)."""
    if isinstance(f, Atom):
        return 1
    if isinstance(f, Not):
        return max_arity(f.child)
    if isinstance(f, (And, Or)):
        return max(len(f.children), *(max_arity(c) for c in f.children))
    return max(f.t2 - f.t1 + 1, max_arity(f.child))
