"""Twists: Drinfeld and dynamical twists, connecting-system twists and cell systems."""

import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from . import config
from .exceptions import DomainError, GroupoidError, NoConsistentAssignment, NotInvertible, SchemaError
from .graded import (
    BlockOperator,
    GradedSpace,
    TransferOperator,
    fiber_basis,
    fiber_matrix,
    fuse_power,
    identity_block,
    path_start,
    tensor_blocks,
    transfer_compose,
    transfer_conjugate,
    transfer_fuse,
    transfer_identity_residual,
    triangle_down,
)
from .groupoid import (
    ConnectingSet,
    ConnectingSystem,
    Groupoid,
    classify_connecting_system,
    connecting_set_from_incidence,
    dynkin_D,
    dynkin_E6,
    restricted_chain,
)
from .intertwine import Intertwiner
from .models import CellDataSchema, CellSchema, CheckResult, SystemFlavor, TransferKind
from .rmodels import SpectralOperator, check_dybe, step_space

logger = logging.getLogger(__name__)

CellKey = Tuple[str, str, str, str]


# Cell data


@dataclass
class CellData:
    """Square coefficients C(a1, a2; e1, e2) of a one-dimensional cell twist.

    The square has left step a1 -> a2, right step e1 -> e2, top connecting
    arrow a1 => e1 and bottom connecting arrow a2 => e2.
    """

    connecting: ConnectingSet
    left: GradedSpace
    right: GradedSpace
    values: Dict[CellKey, complex]
    flagged: List[CellKey] = field(default_factory=list)
    inverse_values: Optional[Dict[CellKey, complex]] = None
    name: str = "cells"
    resolution: Optional[dict] = None

    def value(self, a1: str, a2: str, e1: str, e2: str) -> complex:
        return self.values.get((a1, a2, e1, e2), 0j)

    def _square(self, key: CellKey):
        a1, a2, e1, e2 = key
        alpha = self.left.carrier.arrow_between(a1, a2)
        gamma = self.right.carrier.arrow_between(e1, e2)
        top = self.connecting.arrow_between(a1, e1)
        bottom = self.connecting.arrow_between(a2, e2)
        return alpha, gamma, top, bottom

    def forward(self) -> TransferOperator:
        entries: Dict = {}
        for key, value in self.values.items():
            alpha, gamma, top, bottom = self._square(key)
            entries.setdefault((bottom, top), {})[((alpha,), (gamma,))] = np.array([[value]], dtype=complex)
        return TransferOperator(TransferKind.FORWARD, entries, self.connecting, [self.left], [self.right])

    def backward(self) -> TransferOperator:
        """Explicit inverse table when given, otherwise the gradewise inverse of ``forward``."""
        if self.inverse_values is None:
            return self.forward().inverse()
        entries: Dict = {}
        for key, value in self.inverse_values.items():
            alpha, gamma, top, bottom = self._square(key)
            entries.setdefault((top, bottom), {})[((gamma,), (alpha,))] = np.array([[value]], dtype=complex)
        return TransferOperator(TransferKind.BACKWARD, entries, self.connecting, [self.right], [self.left])

    def system(self) -> ConnectingSystem:
        return ConnectingSystem.natural(self.connecting)

    def with_signs(self, flips: Sequence[bool]) -> "CellData":
        """Copy with the flagged entries negated where ``flips`` is set."""
        if len(flips) != len(self.flagged):
            raise DomainError(f"expected {len(self.flagged)} sign choices, got {len(flips)}")
        values = dict(self.values)
        inverse = dict(self.inverse_values) if self.inverse_values is not None else None
        for key, flip in zip(self.flagged, flips):
            if flip:
                values[key] = -values[key]
                if inverse is not None and key in inverse:
                    inverse[key] = -inverse[key]
        return replace(self, values=values, inverse_values=inverse, resolution=None)

    def to_schema(self, family: Optional[str] = None, level: Optional[int] = None) -> CellDataSchema:
        flagged = set(self.flagged)
        return CellDataSchema(
            family=family,
            level=level,
            cells=[
                CellSchema(a1=k[0], a2=k[1], e1=k[2], e2=k[3], value=(v.real, v.imag), flagged=k in flagged)
                for k, v in sorted(self.values.items())
            ],
        )


def cells_from_schema(schema: CellDataSchema) -> CellData:
    """Lay the cell values of a JSON file over the A->D or E6 skeleton it names."""
    if schema.family == "e6":
        base = build_E6_cells()
    elif schema.family == "ad":
        base = build_AD_cells(schema.level or config.LEVEL)
    else:
        raise SchemaError(f"family: unknown cell family {schema.family!r}")
    values, flagged = {}, []
    for i, cell in enumerate(schema.cells):
        key = (cell.a1, cell.a2, cell.e1, cell.e2)
        try:
            base._square(key)
        except GroupoidError as e:
            raise SchemaError(f"cells[{i}]: {e}") from None
        values[key] = complex(*cell.value)
        if cell.flagged:
            flagged.append(key)
    return replace(base, values=values, flagged=flagged, inverse_values=None)


def twisted_intertwiner(cell: CellData) -> Intertwiner:
    """One-dimensional intertwiner with block (alpha, bottom) -> (top, gamma) = C(square)."""
    Vpi = GradedSpace.uniform(cell.connecting, cell.connecting.arrows, "Vcell")
    blocks = {}
    for key, value in cell.values.items():
        alpha, gamma, top, bottom = cell._square(key)
        blocks[((alpha, bottom), (top, gamma))] = np.array([[value]], dtype=complex)
    op = BlockOperator([cell.left, Vpi], [Vpi, cell.right], blocks)
    return Intertwiner(lambda z: op, cell.left, Vpi, cell.right, cell.connecting, name=f"C[{cell.name}]")


# Concrete cell systems


def build_AD_cells(L: int) -> CellData:
    """Folding cells from the A_{2L-3} chain onto the D_L graph."""
    if L < 4:
        raise DomainError("the A -> D cell system needs L >= 4")
    left = restricted_chain(L, suffix="A")
    right = dynkin_D(L)
    A = lambda i: f"{i}A"
    D = lambda i: f"{i}D"

    incidence = np.zeros((len(left.objects), len(right.objects)), dtype=np.int64)
    row = {o: i for i, o in enumerate(left.objects)}
    col = {o: j for j, o in enumerate(right.objects)}
    for i in range(1, L - 1):
        incidence[row[A(i)], col[D(i)]] = 1
        incidence[row[A(2 * L - 2 - i)], col[D(i)]] = 1
    incidence[row[A(L - 1)], col[D(L - 1)]] = 1
    incidence[row[A(L - 1)], col[D(L)]] = 1
    connecting = connecting_set_from_incidence(incidence, left, right, A(1), D(1), name=f"A{2 * L - 3}->D{L}")

    values: Dict[CellKey, complex] = {}
    for i in range(1, L - 2):
        values[(A(i + 1), A(i), D(i + 1), D(i))] = 1.0
        values[(A(i), A(i + 1), D(i), D(i + 1))] = 1.0
        values[(A(2 * L - 3 - i), A(2 * L - 2 - i), D(i + 1), D(i))] = 1.0
        values[(A(2 * L - 2 - i), A(2 * L - 3 - i), D(i), D(i + 1))] = 1.0

    r = 1 / math.sqrt(2)
    values.update({
        (A(L - 1), A(L - 2), D(L - 1), D(L - 2)): r,
        (A(L - 1), A(L - 2), D(L), D(L - 2)): -r,
        (A(L - 1), A(L), D(L - 1), D(L - 2)): r,
        (A(L - 1), A(L), D(L), D(L - 2)): r,
        (A(L - 2), A(L - 1), D(L - 2), D(L - 1)): 1.0,
        (A(L - 2), A(L - 1), D(L - 2), D(L)): -1.0,
        (A(L), A(L - 1), D(L - 2), D(L - 1)): 1.0,
        (A(L), A(L - 1), D(L - 2), D(L)): 1.0,
    })
    values = {k: complex(v) for k, v in values.items()}
    return CellData(connecting, step_space(left, "VA"), step_space(right, "VD"), values, name=f"AD{L}")


_E6_INCIDENCE = {
    1: (1,), 2: (2,), 3: (3,), 4: (4, 6), 5: (3, 5), 6: (2, 4),
    7: (1, 3), 8: (2, 6), 9: (3,), 10: (4,), 11: (5,),
}


def build_E6_cells() -> CellData:
    """Cells from the A_11 chain onto E6; three printed entries carry undetermined signs."""
    left = restricted_chain(7, suffix="A")
    right = dynkin_E6()
    incidence = np.zeros((11, 6), dtype=np.int64)
    for a, targets in _E6_INCIDENCE.items():
        for e in targets:
            incidence[a - 1, e - 1] = 1
    connecting = connecting_set_from_incidence(incidence, left, right, "1A", "1E", name="A11->E6")

    s3 = math.sqrt(3)
    q = 3 ** -0.25
    u = math.sqrt(1 - 1 / s3)
    v = math.sqrt(2 * s3 - 3)
    w = s3 - 1
    x = 0.5 * math.sqrt(s3 + 1)
    y = 0.5 * math.sqrt(3 - s3)
    table = [
        (1, 2, 1, 2, 1.0), (2, 1, 2, 1, 1.0), (2, 3, 2, 3, 1.0),
        (3, 4, 3, 4, 1.0), (3, 2, 3, 2, 1.0), (3, 4, 3, 6, -1.0), (4, 5, 4, 5, -1.0),
        (4, 3, 4, 3, q), (4, 5, 6, 3, q), (4, 3, 6, 3, -u), (4, 5, 4, 3, u),
        (5, 4, 3, 6, 1.0), (5, 6, 3, 2, 1.0), (5, 4, 5, 4, -v), (5, 6, 3, 4, v), (5, 4, 3, 4, w), (5, 6, 5, 4, w),
        (6, 7, 2, 1, 1.0), (6, 5, 4, 5, 1.0), (6, 5, 2, 3, x), (6, 7, 4, 3, x), (6, 5, 4, 3, y), (6, 7, 2, 3, -y),
        (7, 6, 3, 4, 1.0), (7, 8, 3, 6, 1.0), (7, 8, 1, 2, v), (7, 6, 3, 2, -v), (7, 8, 3, 2, w), (7, 6, 1, 2, w),
        (8, 7, 2, 1, 1.0), (8, 7, 6, 3, q), (8, 9, 2, 3, q), (8, 9, 6, 3, -u), (8, 7, 2, 3, u),
        (9, 8, 3, 2, 1.0), (9, 10, 3, 4, 1.0), (9, 8, 3, 6, -1.0),
        (10, 9, 4, 3, 1.0), (10, 11, 4, 5, 1.0), (11, 10, 5, 4, 1.0),
    ]
    values = {(f"{a1}A", f"{a2}A", f"{e1}E", f"{e2}E"): complex(val) for a1, a2, e1, e2, val in table}
    # printed as C(3,4;3,4) = C(3,2;3,2) = -C(3,4;3,6) = -C(4,5;4,5) = 1, which repeats one entry
    flagged = [("3A", "4A", "3E", "4E"), ("3A", "4A", "3E", "6E"), ("4A", "5A", "4E", "5E")]
    return CellData(connecting, step_space(left, "VA"), step_space(right, "VE"), values, flagged=flagged, name="E6")


# Twisting through connecting systems


def _lift(op: BlockOperator, space: GradedSpace, before: int, after: int) -> BlockOperator:
    """id^before (x) op (x) id^after."""
    if before:
        op = tensor_blocks(identity_block([space] * before), op)
    if after:
        op = tensor_blocks(op, identity_block([space] * after))
    return op


def _restricted_to(op: BlockOperator, start: str) -> Dict:
    return {(p, q): m for (p, q), m in op.blocks.items() if path_start(op.domain, p) == start}


def _block_dict_difference(first: Dict, second: Dict) -> float:
    worst = 0.0
    for key in set(first) | set(second):
        a, b = first.get(key), second.get(key)
        if a is None:
            diff = np.abs(b)
        elif b is None:
            diff = np.abs(a)
        else:
            diff = np.abs(a - b)
        if diff.size:
            worst = max(worst, float(diff.max()))
    return worst


def triangle_deviation(tri: TransferOperator, expected: Optional[BlockOperator] = None) -> Tuple[float, float]:
    """Spread of the diagonal (b, b) entries per target and size of the off-diagonal ones.

    With ``expected`` the diagonal entries are compared against it instead of each other.
    """
    cset = tri.connecting
    diagonal: Dict[str, List[Dict]] = defaultdict(list)
    off = 0.0
    for (b1, b2), blocks in tri.entries.items():
        if b1 != b2:
            off = max(off, _block_dict_difference(blocks, {}))
        else:
            diagonal[cset.target(b1)].append(blocks)
    spread = 0.0
    for target, group in diagonal.items():
        if expected is not None:
            reference, rest = _restricted_to(expected, target), group
        else:
            reference, rest = group[0], group[1:]
        for blocks in rest:
            spread = max(spread, _block_dict_difference(blocks, reference))
    return spread, off


def twist_r2(
    j: TransferOperator,
    R1: SpectralOperator,
    system: ConnectingSystem,
    j_inv: Optional[TransferOperator] = None,
) -> SpectralOperator:
    """R2(b1, b1) = sum_b j^-1(b, b1) R1 j(b1, b), read off through the connecting system."""
    if j.kind != TransferKind.BACKWARD:
        raise GroupoidError("the twist j must be a backward transfer operator")
    if j_inv is None:
        j_inv = j.right_inverse()

    def evaluate(z: complex) -> BlockOperator:
        return triangle_down(transfer_conjugate(j_inv, R1(z), j), system)

    return SpectralOperator(evaluate, j.in_spaces, name=f"{R1.name}^j")


@dataclass
class TwistWitness:
    """Twist data over a connecting system: j on two legs, q on three.

    ``step``/``step_inv`` are the one-leg squares the n-fold q's are fused from.
    """

    system: ConnectingSystem
    j: TransferOperator
    q: TransferOperator
    j_inv: Optional[TransferOperator] = None
    q_inv: Optional[TransferOperator] = None
    step: Optional[TransferOperator] = None
    step_inv: Optional[TransferOperator] = None

    def __post_init__(self):
        if self.j_inv is None:
            self.j_inv = self.j.right_inverse()
        if self.q_inv is None:
            self.q_inv = self.q.right_inverse()

    @classmethod
    def from_cells(cls, cell: CellData) -> "TwistWitness":
        forward, backward = cell.forward(), cell.backward()
        return cls(
            system=cell.system(),
            j=fuse_power(backward, 2),
            q=fuse_power(backward, 3),
            j_inv=fuse_power(forward, 2),
            q_inv=fuse_power(forward, 3),
            step=backward,
            step_inv=forward,
        )

    def q_power(self, n: int) -> Tuple[TransferOperator, TransferOperator]:
        if n == 3:
            return self.q, self.q_inv
        if self.step is None:
            raise GroupoidError("length-n twists need the one-leg squares of the witness")
        return fuse_power(self.step, n), fuse_power(self.step_inv, n)

    def r2(self, R1: SpectralOperator) -> SpectralOperator:
        return twist_r2(self.j, R1, self.system, self.j_inv)


def _leg_identities(witness: TwistWitness, R1: SpectralOperator, R2: SpectralOperator, z: complex, n: int):
    q, q_inv = witness.q_power(n)
    left, right = q.out_spaces[0], q.in_spaces[0]
    R1z, R2z = R1(z), R2(z)
    worst_diag, worst_off = 0.0, 0.0
    for k in range(n - 1):
        S = _lift(R1z, left, k, n - k - 2)
        expected = _lift(R2z, right, k, n - k - 2)
        diag, off = triangle_deviation(transfer_conjugate(q_inv, S, q), expected)
        worst_diag, worst_off = max(worst_diag, diag), max(worst_off, off)
    return worst_diag, worst_off


def check_unique_twist(
    witness: TwistWitness,
    R1: SpectralOperator,
    z: complex,
    w: complex,
    tol: float = config.TOLERANCE,
    margin: int = 2,
) -> List[CheckResult]:
    """id (x) R2 and R2 (x) id against q^-1 (R1 on two of three legs) q, then the dynamical YBE for R2."""
    flavor = classify_connecting_system(witness.system)
    if flavor != SystemFlavor.UNIQUE:
        raise GroupoidError(f"unique twist check needs a unique connecting system, got {flavor.value}")
    R2 = witness.r2(R1)
    q, q_inv = witness.q, witness.q_inv
    left, right = q.out_spaces[0], q.in_spaces[0]
    R1z, R2z = R1(z), R2(z)

    results = []
    for label, before, after in (("twist-23", 1, 0), ("twist-12", 0, 1)):
        tri = transfer_conjugate(q_inv, _lift(R1z, left, before, after), q)
        diag, off = triangle_deviation(tri, _lift(R2z, right, before, after))
        results.append(CheckResult(name=label, residual=max(diag, off), tol=tol, detail={"off_diagonal": off}))
    results.append(check_dybe(R2, z, w, tol=tol, margin=margin))
    return results


def check_quasi_unique_twist(
    witness: TwistWitness,
    R1: SpectralOperator,
    z: complex,
    w: complex,
    tol: float = config.TOLERANCE,
    lengths: Iterable[int] = (3, 4, 5),
    margin: int = 2,
) -> List[CheckResult]:
    """Ice-rule identities on paths of the given lengths, the factorization of q, and the dynamical YBE for R2."""
    system = witness.system
    flavor = classify_connecting_system(system)
    if flavor == SystemFlavor.GENERAL:
        raise GroupoidError("quasi-unique twist check needs a unique or quasi-unique connecting system")
    if system.connecting.has_multi_edges():
        raise GroupoidError("quasi-unique twists need a connecting set without multi-edges")
    R2 = witness.r2(R1)

    results = []
    for n in lengths:
        diag, off = _leg_identities(witness, R1, R2, z, n)
        results.append(CheckResult(name=f"quasi-paths-{n}", residual=diag, tol=tol))
        results.append(CheckResult(name=f"quasi-ice-rule-{n}", residual=off, tol=tol))
        if n > 3 and witness.step is not None:
            q, _ = witness.q_power(n)
            factored = transfer_fuse(fuse_power(witness.step, n - 3), witness.q)
            results.append(CheckResult(name=f"factorization-{n}", residual=transfer_difference(q, factored), tol=tol))
    results.append(check_dybe(R2, z, w, tol=tol, margin=margin))
    return results


def transfer_difference(first: TransferOperator, second: TransferOperator) -> float:
    worst = 0.0
    for key in set(first.entries) | set(second.entries):
        worst = max(worst, _block_dict_difference(first.entries.get(key, {}), second.entries.get(key, {})))
    return worst


def _support(connecting: ConnectingSet, space: GradedSpace, right: bool) -> List[Tuple[str, Tuple[str]]]:
    """Right paths leaving t(b), or left paths arriving at s(b)."""
    out = []
    for beta in sorted(connecting.arrows):
        if right:
            out.extend((beta, (a,)) for a in space.support_from(connecting.target(beta)))
        else:
            inverse = space.carrier.inverse
            out.extend((beta, (inverse(a),)) for a in space.support_from(connecting.source(beta)))
    return out


def check_cell_twist(
    cell: CellData,
    R1: SpectralOperator,
    z: complex,
    tol: float = config.TOLERANCE,
) -> List[CheckResult]:
    """Mutual inverse of the cell tables, then equal diagonal entries per target
    and vanishing off-diagonal ones of C(x)C R1 C^-1(x)C^-1.
    """
    forward, backward = cell.forward(), cell.backward()
    inverse = max(
        transfer_identity_residual(transfer_compose(forward, backward), _support(cell.connecting, cell.right, True)),
        transfer_identity_residual(transfer_compose(backward, forward), _support(cell.connecting, cell.left, False)),
    )
    tri = transfer_conjugate(fuse_power(forward, 2), R1(z), fuse_power(backward, 2))
    diag, off = triangle_deviation(tri)
    logger.debug(f"cell twist {cell.name} z={z}: diagonal {diag:.3e}, off-diagonal {off:.3e}")
    return [
        CheckResult(name="cell-inverse", residual=inverse, tol=tol),
        CheckResult(name="cell-diagonal", residual=diag, tol=tol),
        CheckResult(name="cell-offdiagonal", residual=off, tol=tol),
    ]


def cell_deviation(cell: CellData, R1: SpectralOperator, z: complex) -> float:
    try:
        return max(c.residual for c in check_cell_twist(cell, R1, z))
    except NotInvertible:
        return math.inf


class SignSearch:
    """Exhaustive search over the signs of flagged cell entries."""

    def __init__(self, R1: SpectralOperator, z: complex, tol: float = 1e-8, gap: float = 1e-4):
        self.R1 = R1
        self.z = z
        self.tol = tol
        self.gap = gap
        self.logger = logging.getLogger(__name__)

    def table(self, cell: CellData) -> List[Tuple[Tuple[bool, ...], float]]:
        rows = []
        for flips in itertools.product((False, True), repeat=len(cell.flagged)):
            rows.append((flips, cell_deviation(cell.with_signs(flips), self.R1, self.z)))
        # stable sort keeps the lexicographically smallest assignment first among ties
        rows.sort(key=lambda row: row[1])
        return rows

    def resolve(self, cell: CellData) -> CellData:
        if not cell.flagged:
            return cell
        if len(cell.flagged) > 12:
            raise DomainError(f"too many flagged entries for an exhaustive search ({len(cell.flagged)})")
        rows = self.table(cell)
        best_flips, best = rows[0]
        runner_up = rows[1][1] if len(rows) > 1 else math.inf
        report = [{"flips": list(f), "deviation": d} for f, d in rows]
        if not best < self.tol:
            self.logger.warning(f"no sign assignment for {cell.name} reaches {self.tol}: best {best:.3e}")
            raise NoConsistentAssignment(f"best deviation {best:.3e} for {cell.name}", table=report)
        ambiguous = not runner_up > self.gap
        if ambiguous:
            self.logger.warning(f"sign search for {cell.name} is ambiguous: runner-up {runner_up:.3e}")
        self.logger.info(f"resolved {len(cell.flagged)} signs of {cell.name}: deviation {best:.3e}")
        resolved = cell.with_signs(best_flips)
        resolved.resolution = {
            "flips": list(best_flips),
            "deviation": best,
            "runner_up": runner_up,
            "ambiguous": ambiguous,
            "table": report,
        }
        return resolved


def resolve_signs(cell: CellData, R1: SpectralOperator, z: complex, tol: float = 1e-8) -> CellData:
    return SignSearch(R1, z, tol=tol).resolve(cell)


# Gauge transforms


def gauge_cells(scalars: Dict[str, complex], space: GradedSpace) -> CellData:
    """Identity connecting set; the square over step a carries 1/c(a) and its inverse c(a)."""
    groupoid = space.carrier
    connecting = ConnectingSet.identity(groupoid, name="gauge")
    values, inverse = {}, {}
    for arrow in space.dims:
        c = complex(scalars.get(arrow, 1.0))
        if c == 0:
            raise DomainError(f"gauge scalar on {arrow!r} is zero")
        key = (groupoid.source(arrow), groupoid.target(arrow)) * 2
        values[key] = 1 / c
        inverse[key] = c
    return CellData(connecting, space, space, values, inverse_values=inverse, name="gauge")


def gauge_transform(scalars: Dict[str, complex], R1: SpectralOperator) -> SpectralOperator:
    """R2 on paths p -> q equals R1 times c(p)/c(q), with c multiplicative along paths."""
    cell = gauge_cells(scalars, R1.space)
    return TwistWitness.from_cells(cell).r2(R1)


# Drinfeld and dynamical twists


@dataclass
class StaticTwistPair:
    """J on V (x) V and Q on V (x) V (x) V as dense matrices in the fiber basis."""

    J: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=complex)
        self.Q = np.asarray(self.Q, dtype=complex)
        _require_invertible(self.J, "J")
        _require_invertible(self.Q, "Q")


def _require_invertible(M: np.ndarray, label: str, cutoff: float = config.INVERSE_CUTOFF):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotInvertible(f"{label} is not square: {M.shape}")
    s = linalg.svdvals(M)
    if s.size == 0 or s.min() <= cutoff * s.max():
        raise NotInvertible(f"{label} is numerically singular")


def check_drinfeld(R: np.ndarray, pair: StaticTwistPair, tol: float = config.TOLERANCE) -> List[CheckResult]:
    """R_J = J^-1 R J with R_J (x) id = Q (R (x) id) Q^-1 and id (x) R_J = Q (id (x) R) Q^-1."""
    R = np.asarray(R, dtype=complex)
    d = int(round(math.sqrt(R.shape[0])))
    if d * d != R.shape[0] or pair.J.shape != R.shape or pair.Q.shape != (d ** 3, d ** 3):
        raise DomainError(f"shapes do not match: R {R.shape}, J {pair.J.shape}, Q {pair.Q.shape}")
    I = np.eye(d)
    J_inv = linalg.inv(pair.J)
    Q_inv = linalg.inv(pair.Q)
    RJ = J_inv @ R @ pair.J
    r12 = np.abs(np.kron(RJ, I) - pair.Q @ np.kron(R, I) @ Q_inv).max()
    r23 = np.abs(np.kron(I, RJ) - pair.Q @ np.kron(I, R) @ Q_inv).max()
    definition = np.abs(pair.J @ RJ - R @ pair.J).max()
    return [
        CheckResult(name="drinfeld-definition", residual=float(definition), tol=tol),
        CheckResult(name="drinfeld-12", residual=float(r12), tol=tol),
        CheckResult(name="drinfeld-23", residual=float(r23), tol=tol),
    ]


def cocycle_check(J: np.ndarray, J12_3: np.ndarray, J1_23: np.ndarray) -> float:
    """|| (Delta (x) id)(J) (J (x) 1) - (id (x) Delta)(J) (1 (x) J) ||."""
    J = np.asarray(J, dtype=complex)
    d = int(round(math.sqrt(J.shape[0])))
    I = np.eye(d)
    lhs = np.asarray(J12_3) @ np.kron(J, I)
    rhs = np.asarray(J1_23) @ np.kron(I, J)
    return float(np.abs(lhs - rhs).max())


def check_dynamical_twist(
    R: BlockOperator,
    J: BlockOperator,
    Q: BlockOperator,
    tol: float = config.TOLERANCE,
    margin: int = 2,
    cutoff: float = config.INVERSE_CUTOFF,
) -> List[CheckResult]:
    """Base-object-dependent twist: R_J(l) = J(l)^-1 R J(l), then
    R_J (x) id = Q (R (x) id) Q^-1 and id (x) R_J(l - h1) = Q (id (x) R) Q^-1 on every interior fiber.

    The weight shift h1 is the move of the base object to the target of the first leg.
    """
    V = R.domain[0]
    legs2, legs3 = [V, V], [V, V, V]
    groupoid = V.carrier
    interior = groupoid.interior(margin) if isinstance(groupoid, Groupoid) else V.start_objects()

    twisted: Dict[str, np.ndarray] = {}
    definition = 0.0
    for base in V.start_objects():
        if not fiber_basis(legs2, base).paths:
            continue
        Jf = fiber_matrix(J, legs2, 0, base)
        Rf = fiber_matrix(R, legs2, 0, base)
        try:
            _require_invertible(Jf, f"J at {base}", cutoff)
        except NotInvertible:
            if base in interior:
                raise
            continue
        RJf = linalg.solve(Jf, Rf @ Jf)
        twisted[base] = RJf
        definition = max(definition, float(np.abs(Jf @ RJf - Rf @ Jf).max()))
    RJ = BlockOperator.from_fiber_matrices(twisted, legs2, legs2)

    r12, r23 = 0.0, 0.0
    for base in interior:
        if not fiber_basis(legs3, base).paths:
            continue
        Qf = fiber_matrix(Q, legs3, 0, base)
        _require_invertible(Qf, f"Q at {base}", cutoff)
        for offset in (0, 1):
            lhs = fiber_matrix(RJ, legs3, offset, base)
            rhs = Qf @ fiber_matrix(R, legs3, offset, base) @ linalg.inv(Qf)
            diff = float(np.abs(lhs - rhs).max())
            if offset == 0:
                r12 = max(r12, diff)
            else:
                r23 = max(r23, diff)
    return [
        CheckResult(name="dynamical-definition", residual=definition, tol=tol),
        CheckResult(name="dynamical-12", residual=r12, tol=tol),
        CheckResult(name="dynamical-23", residual=r23, tol=tol),
    ]


def point_transfer(
    matrix: np.ndarray,
    space: GradedSpace,
    legs: int,
    kind: TransferKind,
    connecting: Optional[ConnectingSet] = None,
) -> TransferOperator:
    """Transfer operator over the identity connecting set of a one-object groupoid from a dense matrix."""
    groupoid = space.carrier
    if len(groupoid.objects) != 1:
        raise GroupoidError("dense transfer operators need a one-object groupoid")
    connecting = connecting or ConnectingSet.identity(groupoid, name="point")
    (obj,) = groupoid.objects
    (beta,) = connecting.arrows
    spaces = [space] * legs
    fiber = fiber_basis(spaces, obj)
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (fiber.size, fiber.size):
        raise DomainError(f"expected a {fiber.size}x{fiber.size} matrix, got {matrix.shape}")
    blocks = {}
    for p in fiber.paths:
        for q in fiber.paths:
            sub = matrix[fiber.slot(q), fiber.slot(p)]
            if np.abs(sub).max() > 0:
                blocks[(p, q)] = sub.copy()
    return TransferOperator(kind, {(beta, beta): blocks}, connecting, spaces, spaces)


def point_witness(j: np.ndarray, q: np.ndarray, space: GradedSpace) -> TwistWitness:
    """Witness on a one-object groupoid from dense j (two legs) and q (three legs)."""
    connecting = ConnectingSet.identity(space.carrier, name="point")
    system = ConnectingSystem.natural(connecting)
    return TwistWitness(
        system=system,
        j=point_transfer(j, space, 2, TransferKind.BACKWARD, connecting),
        q=point_transfer(q, space, 3, TransferKind.BACKWARD, connecting),
        j_inv=point_transfer(linalg.inv(j), space, 2, TransferKind.FORWARD, connecting),
        q_inv=point_transfer(linalg.inv(q), space, 3, TransferKind.FORWARD, connecting),
    )
