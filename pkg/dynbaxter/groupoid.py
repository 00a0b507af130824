"""Finite groupoids, connecting sets between them and connecting systems."""

import logging
from collections import deque
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .exceptions import GroupoidError, IncidenceViolation, NotComposable
from .models import ArrowSchema, ConnectingSetSchema, GroupoidSchema, SystemFlavor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Arrow:
    id: str
    src: str
    tgt: str
    inv: str


def identity_id(obj: str) -> str:
    return f"1_{obj}"


def reversed_id(arrow_id: str) -> str:
    """Name of the formal reverse of a connecting arrow; ``b~~`` is ``b``."""
    return arrow_id[:-1] if arrow_id.endswith("~") else f"{arrow_id}~"


class Groupoid:
    """A finite groupoid given by its objects and materialized arrows.

    Identities ``1_<obj>`` are always present. Arrows of graph groupoids are the
    generating steps only; composites of two steps that are not mutually inverse
    are represented as paths by callers. Action-groupoid windows materialize
    every arrow, so composition is total there.
    """

    def __init__(
        self,
        objects: Sequence[str],
        arrows: Iterable[Arrow],
        positions: Optional[Dict[str, float]] = None,
        truncated: Optional[Iterable[str]] = None,
        displacement: Optional[Dict[str, int]] = None,
        name: str = "groupoid",
    ):
        self.name = name
        self.objects: List[str] = list(objects)
        if len(set(self.objects)) != len(self.objects):
            raise GroupoidError("duplicate object identifiers")
        self._object_set = set(self.objects)
        self.positions: Dict[str, float] = dict(positions or {})
        self.truncated: Set[str] = set(truncated or ())
        self._displacement = dict(displacement or {})

        self.arrows: Dict[str, Arrow] = {}
        for obj in self.objects:
            ident = identity_id(obj)
            self.arrows[ident] = Arrow(ident, obj, obj, ident)
        for arrow in arrows:
            if arrow.id in self.arrows:
                raise GroupoidError(f"duplicate arrow id {arrow.id!r}")
            if arrow.src not in self._object_set or arrow.tgt not in self._object_set:
                raise GroupoidError(f"arrow {arrow.id!r} has an endpoint outside the object set")
            self.arrows[arrow.id] = arrow
        self._validate_inverses()

        self._outgoing: Dict[str, List[str]] = {obj: [] for obj in self.objects}
        self._incoming: Dict[str, List[str]] = {obj: [] for obj in self.objects}
        self._between: Dict[Tuple[str, str], List[str]] = {}
        for arrow in self.arrows.values():
            self._outgoing[arrow.src].append(arrow.id)
            self._incoming[arrow.tgt].append(arrow.id)
            self._between.setdefault((arrow.src, arrow.tgt), []).append(arrow.id)
        for table in (self._outgoing, self._incoming):
            for ids in table.values():
                ids.sort()

    def _validate_inverses(self):
        for arrow in self.arrows.values():
            inverse = self.arrows.get(arrow.inv)
            if inverse is None:
                raise GroupoidError(f"inverse {arrow.inv!r} of {arrow.id!r} is missing")
            if inverse.inv != arrow.id:
                raise GroupoidError(f"inverse of {arrow.id!r} is not an involution")
            if inverse.src != arrow.tgt or inverse.tgt != arrow.src:
                raise GroupoidError(f"inverse of {arrow.id!r} has mismatched endpoints")

    def __repr__(self):
        return f"Groupoid({self.name!r}, {len(self.objects)} objects, {len(self.arrows)} arrows)"

    def __contains__(self, obj: str) -> bool:
        return obj in self._object_set

    def source(self, arrow_id: str) -> str:
        return self._arrow(arrow_id).src

    def target(self, arrow_id: str) -> str:
        return self._arrow(arrow_id).tgt

    def inverse(self, arrow_id: str) -> str:
        return self._arrow(arrow_id).inv

    def identity(self, obj: str) -> str:
        if obj not in self._object_set:
            raise GroupoidError(f"unknown object {obj!r}")
        return identity_id(obj)

    def is_identity(self, arrow_id: str) -> bool:
        arrow = self._arrow(arrow_id)
        return arrow.id == identity_id(arrow.src)

    def _arrow(self, arrow_id: str) -> Arrow:
        try:
            return self.arrows[arrow_id]
        except KeyError:
            raise GroupoidError(f"unknown arrow {arrow_id!r} in {self.name}") from None

    def compose(self, first: str, second: str) -> str:
        """The arrow ``first`` followed by ``second``; needs t(first) = s(second)."""
        a, b = self._arrow(first), self._arrow(second)
        if a.tgt != b.src:
            raise NotComposable(f"{first!r} ends at {a.tgt!r} but {second!r} starts at {b.src!r}")
        if self.is_identity(first):
            return second
        if self.is_identity(second):
            return first
        if a.inv == second:
            return identity_id(a.src)
        if a.id in self._displacement and b.id in self._displacement:
            shift = self._displacement[a.id] + self._displacement[b.id]
            for candidate in self._between.get((a.src, b.tgt), []):
                if self._displacement.get(candidate) == shift:
                    return candidate
        raise GroupoidError(f"composite of {first!r} and {second!r} is not materialized in {self.name}")

    def try_compose(self, first: str, second: str) -> Optional[str]:
        try:
            return self.compose(first, second)
        except GroupoidError:
            return None

    def source_fiber(self, obj: str) -> List[str]:
        return list(self._outgoing[obj])

    def target_fiber(self, obj: str) -> List[str]:
        return list(self._incoming[obj])

    def arrows_from(self, obj: str) -> List[str]:
        return self._outgoing.get(obj, [])

    def arrows_between(self, src: str, tgt: str) -> List[str]:
        return list(self._between.get((src, tgt), []))

    def arrow_between(self, src: str, tgt: str) -> str:
        """The unique non-identity step from src to tgt."""
        found = [a for a in self._between.get((src, tgt), []) if self.is_step(a)]
        if len(found) != 1:
            raise GroupoidError(f"expected one arrow {src!r}->{tgt!r}, found {len(found)}")
        return found[0]

    def is_step(self, arrow_id: str) -> bool:
        if self.is_identity(arrow_id):
            return False
        if self._displacement:
            return abs(self._displacement[arrow_id]) == 1
        return True

    def steps(self) -> List[str]:
        """Generating arrows: graph edges or unit steps of an action window."""
        return [a for a in sorted(self.arrows) if self.is_step(a)]

    def adjacency(self) -> np.ndarray:
        """Integer adjacency matrix counting steps, rows/columns in object order."""
        index = {obj: i for i, obj in enumerate(self.objects)}
        M = np.zeros((len(self.objects), len(self.objects)), dtype=np.int64)
        for arrow_id in self.steps():
            arrow = self.arrows[arrow_id]
            M[index[arrow.src], index[arrow.tgt]] += 1
        return M

    def position(self, obj: str) -> float:
        try:
            return self.positions[obj]
        except KeyError:
            raise GroupoidError(f"object {obj!r} of {self.name} carries no position") from None

    def distances_from(self, sources: Iterable[str]) -> Dict[str, int]:
        """Graph distance along steps from the nearest of ``sources``."""
        dist = {obj: 0 for obj in sources}
        queue = deque(dist)
        while queue:
            obj = queue.popleft()
            for arrow_id in self.arrows_from(obj):
                if not self.is_step(arrow_id):
                    continue
                nxt = self.arrows[arrow_id].tgt
                if nxt not in dist:
                    dist[nxt] = dist[obj] + 1
                    queue.append(nxt)
        return dist

    def interior(self, margin: int = 2) -> List[str]:
        """Objects at distance >= margin from every truncated window edge."""
        if not self.truncated:
            return list(self.objects)
        dist = self.distances_from(self.truncated)
        return [obj for obj in self.objects if dist.get(obj, margin) >= margin]

    def to_schema(self) -> GroupoidSchema:
        return GroupoidSchema(
            objects=list(self.objects),
            arrows=[
                ArrowSchema(id=a.id, src=a.src, tgt=a.tgt, inv=a.inv)
                for a in self.arrows.values()
                if not self.is_identity(a.id)
            ],
            positions=dict(self.positions),
        )

    @classmethod
    def from_schema(cls, schema: GroupoidSchema, name: str = "groupoid") -> "Groupoid":
        arrows = [Arrow(a.id, a.src, a.tgt, a.inv) for a in schema.arrows if a.id != identity_id(a.src)]
        return cls(schema.objects, arrows, positions=schema.positions, name=name)


def graph_groupoid(
    edges: Sequence[Tuple[str, str]],
    objects: Optional[Sequence[str]] = None,
    name: str = "graph",
) -> Groupoid:
    """Path groupoid generators of an undirected graph: arrows ``u->v`` and ``v->u`` per edge."""
    if objects is None:
        seen: List[str] = []
        for u, v in edges:
            for obj in (u, v):
                if obj not in seen:
                    seen.append(obj)
        objects = seen

    arrows: List[Arrow] = []
    counts: Dict[Tuple[str, str], int] = {}
    for u, v in edges:
        if u == v:
            raise GroupoidError(f"self loop at {u!r} is not a groupoid generator pair")
        key = tuple(sorted((u, v)))
        if key in counts:
            counts[key] += 1
            tag = f"#{counts[key]}"
        else:
            counts[key] = 0
            tag = ""
        forward, backward = f"{u}->{v}{tag}", f"{v}->{u}{tag}"
        arrows.append(Arrow(forward, u, v, backward))
        arrows.append(Arrow(backward, v, u, forward))
    return Groupoid(objects, arrows, name=name)


def action_groupoid_window(
    b: float,
    N: int,
    center: int = 0,
    suffix: str = "",
    truncated: bool = True,
    name: str = "action",
) -> Groupoid:
    """Window {k + b : |k - center| <= N} of the action groupoid (Z + b) x Z.

    Objects are named ``f"{k}{suffix}"`` and carry position k + b. Unit steps are
    ``<obj>+`` and ``<obj>-``; longer displacements g are ``<obj><g:+d>``.
    """
    if N < 1:
        raise GroupoidError("window radius must be at least 1")
    ks = list(range(center - N, center + N + 1))
    names = {k: f"{k}{suffix}" for k in ks}
    arrows: List[Arrow] = []
    displacement: Dict[str, int] = {}

    def arrow_id(k: int, g: int) -> str:
        if g == 1:
            return f"{names[k]}+"
        if g == -1:
            return f"{names[k]}-"
        return f"{names[k]}{g:+d}"

    for k in ks:
        for m in ks:
            g = m - k
            if g == 0:
                continue
            ident = arrow_id(k, g)
            arrows.append(Arrow(ident, names[k], names[m], arrow_id(m, -g)))
            displacement[ident] = g

    edges = {names[ks[0]], names[ks[-1]]} if truncated else set()
    return Groupoid(
        [names[k] for k in ks],
        arrows,
        positions={names[k]: k + b for k in ks},
        truncated=edges,
        displacement=displacement,
        name=name,
    )


def restricted_chain(L: int, suffix: str = "") -> Groupoid:
    """The full subgroupoid on {1, ..., 2L-3} with b = 0, i.e. the A_{2L-3} chain."""
    if L < 2:
        raise GroupoidError("level must be at least 2")
    n = 2 * L - 3
    if n == 1:
        return Groupoid([f"1{suffix}"], [], positions={f"1{suffix}": 1.0}, name=f"A{n}")
    center = L - 1
    return action_groupoid_window(0.0, L - 2, center=center, suffix=suffix, truncated=False, name=f"A{n}")


def one_point_groupoid(loops: Sequence[str] = ("+", "-"), obj: str = "v", name: str = "point") -> Groupoid:
    """One object with a mutually inverse pair of loops (or none)."""
    arrows = []
    if loops:
        up, down = loops
        arrows = [Arrow(up, obj, obj, down), Arrow(down, obj, obj, up)]
    return Groupoid([obj], arrows, name=name)


def dynkin_D(L: int, suffix: str = "D") -> Groupoid:
    """D_L: chain 1..L-1 with L attached to L-2."""
    if L < 4:
        raise GroupoidError("D_L needs L >= 4")
    names = [f"{i}{suffix}" for i in range(1, L + 1)]
    edges = [(names[i], names[i + 1]) for i in range(L - 2)]
    edges.append((names[L - 3], names[L - 1]))
    return graph_groupoid(edges, objects=names, name=f"D{L}")


def dynkin_E6(suffix: str = "E") -> Groupoid:
    """E_6: chain 1-2-3-4-5 with 6 attached to 3."""
    names = [f"{i}{suffix}" for i in range(1, 7)]
    edges = [(names[i], names[i + 1]) for i in range(4)] + [(names[2], names[5])]
    return graph_groupoid(edges, objects=names, name="E6")


class ConnectingSet:
    """Arrows beta from objects of a left groupoid to objects of a right groupoid."""

    def __init__(
        self,
        arrows: Iterable[Tuple[str, str, str]],
        left: Groupoid,
        right: Groupoid,
        name: str = "connecting",
        check_surjective: bool = True,
        star: Optional[Tuple[str, str]] = None,
    ):
        self.name = name
        self.left = left
        self.right = right
        self.star = star
        self._transposed: Optional["ConnectingSet"] = None
        self.arrows: Dict[str, Arrow] = {}
        for ident, src, tgt in arrows:
            if ident in self.arrows:
                raise GroupoidError(f"duplicate connecting arrow {ident!r}")
            if src not in left:
                raise GroupoidError(f"connecting arrow {ident!r} starts outside {left.name}")
            if tgt not in right:
                raise GroupoidError(f"connecting arrow {ident!r} ends outside {right.name}")
            self.arrows[ident] = Arrow(ident, src, tgt, ident)

        self._outgoing: Dict[str, List[str]] = {}
        self._incoming: Dict[str, List[str]] = {}
        for arrow in self.arrows.values():
            self._outgoing.setdefault(arrow.src, []).append(arrow.id)
            self._incoming.setdefault(arrow.tgt, []).append(arrow.id)
        for table in (self._outgoing, self._incoming):
            for ids in table.values():
                ids.sort()

        if check_surjective:
            missing_src = [o for o in left.objects if o not in self._outgoing]
            missing_tgt = [o for o in right.objects if o not in self._incoming]
            if missing_src or missing_tgt:
                raise GroupoidError(
                    f"connecting set {name} is not surjective: sources {missing_src}, targets {missing_tgt}"
                )

    def __repr__(self):
        return f"ConnectingSet({self.name!r}, {len(self.arrows)} arrows)"

    def source(self, arrow_id: str) -> str:
        return self._arrow(arrow_id).src

    def target(self, arrow_id: str) -> str:
        return self._arrow(arrow_id).tgt

    def _arrow(self, arrow_id: str) -> Arrow:
        try:
            return self.arrows[arrow_id]
        except KeyError:
            raise GroupoidError(f"unknown connecting arrow {arrow_id!r}") from None

    def arrows_from(self, obj: str) -> List[str]:
        return self._outgoing.get(obj, [])

    def arrows_into(self, obj: str) -> List[str]:
        return self._incoming.get(obj, [])

    def arrow_between(self, src: str, tgt: str) -> str:
        found = [a for a in self.arrows_from(src) if self.arrows[a].tgt == tgt]
        if len(found) != 1:
            raise GroupoidError(f"expected one connecting arrow {src!r}=>{tgt!r}, found {len(found)}")
        return found[0]

    def has_multi_edges(self) -> bool:
        pairs = [(a.src, a.tgt) for a in self.arrows.values()]
        return len(pairs) != len(set(pairs))

    def transpose(self) -> "ConnectingSet":
        """Formal reversal: beta: a -> e becomes ``beta~``: e -> a.

        Transposing twice returns this very set.
        """
        if self._transposed is None:
            flipped = ConnectingSet(
                [(reversed_id(a.id), a.tgt, a.src) for a in self.arrows.values()],
                self.right,
                self.left,
                name=reversed_id(self.name),
                check_surjective=False,
            )
            flipped._transposed = self
            self._transposed = flipped
        return self._transposed

    def then(self, other: "ConnectingSet") -> "ConnectingSet":
        """Composite set ``beta*betahat`` over the shared middle groupoid."""
        composite = []
        for beta in self.arrows.values():
            for hat_id in other.arrows_from(beta.tgt):
                composite.append((f"{beta.id}*{hat_id}", beta.src, other.target(hat_id)))
        return ConnectingSet(composite, self.left, other.right, name=f"{self.name}*{other.name}")

    @classmethod
    def identity(cls, groupoid: Groupoid, name: str = "identity") -> "ConnectingSet":
        return cls([(f"{o}=>{o}", o, o) for o in groupoid.objects], groupoid, groupoid, name=name)

    def to_schema(self) -> ConnectingSetSchema:
        return ConnectingSetSchema(
            src_groupoid=self.left.to_schema(),
            tgt_groupoid=self.right.to_schema(),
            arrows=[(a.id, a.src, a.tgt) for a in self.arrows.values()],
        )


def connecting_set_from_incidence(
    C: np.ndarray,
    left: Groupoid,
    right: Groupoid,
    star_left: str,
    star_right: str,
    name: str = "cells",
) -> ConnectingSet:
    """Connecting set with C[i, j] arrows from left object i to right object j.

    Validates M_left C = C M_right, the star condition and row coverage.
    """
    C = np.asarray(C, dtype=np.int64)
    if C.shape != (len(left.objects), len(right.objects)):
        raise IncidenceViolation("shape", f"expected {(len(left.objects), len(right.objects))}, got {C.shape}")
    if (C < 0).any():
        raise IncidenceViolation("nonnegative", "incidence entries must be nonnegative integers")

    lhs = left.adjacency() @ C
    rhs = C @ right.adjacency()
    if not np.array_equal(lhs, rhs):
        bad = [(left.objects[i], right.objects[j]) for i, j in zip(*np.nonzero(lhs != rhs))]
        raise IncidenceViolation("M1 C = C M2", f"mismatch at {bad[:5]}")

    i_star = left.objects.index(star_left)
    expected = np.zeros(len(right.objects), dtype=np.int64)
    expected[right.objects.index(star_right)] = 1
    if not np.array_equal(C[i_star], expected):
        raise IncidenceViolation("star", f"row {star_left!r} must connect only to {star_right!r} once")

    empty = [left.objects[i] for i in range(C.shape[0]) if not C[i].any()]
    if empty:
        raise IncidenceViolation("row coverage", f"objects without connecting arrows: {empty}")

    arrows = []
    for i, a in enumerate(left.objects):
        for j, e in enumerate(right.objects):
            for k in range(C[i, j]):
                ident = f"{a}=>{e}" if k == 0 else f"{a}=>{e}#{k}"
                arrows.append((ident, a, e))
    cset = ConnectingSet(arrows, left, right, name=name, star=(star_left, star_right))
    logger.debug(f"incidence connecting set {name}: {len(arrows)} arrows")
    return cset


class ConnectingSystem:
    """A choice of connecting arrow for every object of the right groupoid.

    ``assignment[e]`` is the arrow that lands on e; ``anchor`` is an arrow whose
    source has no other connecting arrow, from which every object is reachable.
    """

    def __init__(
        self,
        connecting: ConnectingSet,
        assignment: Dict[str, str],
        anchor: Optional[str] = None,
    ):
        self.connecting = connecting
        self.assignment = dict(assignment)
        self.anchor = anchor
        for obj in connecting.right.objects:
            beta = self.assignment.get(obj)
            if beta is None:
                raise GroupoidError(f"connecting system assigns nothing to {obj!r}")
            if connecting.target(beta) != obj:
                raise GroupoidError(f"assigned arrow {beta!r} does not land on {obj!r}")

    def __getitem__(self, obj: str) -> str:
        return self.assignment[obj]

    @classmethod
    def natural(cls, connecting: ConnectingSet) -> "ConnectingSystem":
        """First arrow (by id) into each object, anchored at a star arrow when one exists."""
        assignment = {e: connecting.arrows_into(e)[0] for e in connecting.right.objects}
        if connecting.star is not None:
            anchor = connecting.arrow_between(*connecting.star)
        else:
            singles = [b for b in sorted(connecting.arrows) if _singleton_source(connecting, b)]
            anchor = singles[0] if singles else None
        return cls(connecting, assignment, anchor=anchor)


def _singleton_source(connecting: ConnectingSet, beta: str) -> bool:
    return connecting.arrows_from(connecting.source(beta)) == [beta]


def classify_connecting_system(system: ConnectingSystem) -> SystemFlavor:
    cset = system.connecting
    if all(_singleton_source(cset, beta) for beta in system.assignment.values()):
        return SystemFlavor.UNIQUE

    right = cset.right
    candidates = [system.anchor] if system.anchor else []
    candidates += [b for b in sorted(cset.arrows) if b != system.anchor]
    for beta in candidates:
        if not _singleton_source(cset, beta):
            continue
        reach = right.distances_from([cset.target(beta)])
        if all(obj in reach for obj in right.objects):
            return SystemFlavor.QUASI_UNIQUE
    return SystemFlavor.GENERAL
