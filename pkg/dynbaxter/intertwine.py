"""Intertwiners between Yang-Baxter operators and the relations they satisfy."""

import logging
from collections import defaultdict
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg

from . import config, graded
from .elliptic import h, jacobi_H, jacobi_Theta
from .exceptions import GroupoidError, NotInvertible, UnsupportedDimension
from .graded import (
    BlockOperator,
    GradedSpace,
    fiber_basis,
    fiber_matrix,
    path_dim,
    transfer_matrix,
)
from .groupoid import ConnectingSet, Groupoid, one_point_groupoid, reversed_id
from .models import CheckResult, ModelParams
from .rmodels import SpectralOperator, sos_groupoid, step_space, transpose_op

logger = logging.getLogger(__name__)


class Intertwiner(SpectralOperator):
    """A spectral family C(z) in Hom(V1 (x) Vpi, Vpi (x) V2)."""

    def __init__(
        self,
        evaluator: Callable[[complex], BlockOperator],
        V1: GradedSpace,
        Vpi: GradedSpace,
        V2: GradedSpace,
        connecting,
        pole_guard=None,
        inverse: Optional[Callable[[complex], BlockOperator]] = None,
        name: str = "C",
    ):
        super().__init__(evaluator, [V1, Vpi], [Vpi, V2], pole_guard=pole_guard, name=name)
        self.connecting = connecting
        self.inverse_evaluator = inverse

    @property
    def V1(self) -> GradedSpace:
        return self.domain[0]

    @property
    def Vpi(self) -> GradedSpace:
        return self.domain[1]

    @property
    def V2(self) -> GradedSpace:
        return self.codomain[1]


def intertwiner_from_operator(R: SpectralOperator) -> Intertwiner:
    """Regard R itself as an (R, R) intertwiner with the middle leg on the same groupoid."""
    V = R.space
    return Intertwiner(R.evaluate, V, V, V, V.carrier, name=f"C={R.name}")


def constant_intertwiner(op: BlockOperator, connecting, name: str = "C") -> Intertwiner:
    V1, Vpi = op.domain
    return Intertwiner(lambda z: op, V1, Vpi, op.codomain[1], connecting, name=name)


# Concrete intertwiners


def build_baxter_C(
    params: ModelParams,
    V1: Optional[GradedSpace] = None,
    V2: Optional[GradedSpace] = None,
) -> Intertwiner:
    """Vertex-face intertwiner from the eight-vertex space to the SOS window.

    Evaluated with the spectral sign reversed relative to the usual square
    coefficients, so C(z) at square (alpha, a -> a +- 1) reads
    H or Theta of lambda (s +- a -+ ... ) with +z on up-steps and -z on down-steps.
    """
    ell = params.elliptic
    lam, xi = ell.lam, params.xi
    s_plus, s_minus = params.s_plus, params.s_minus
    if V1 is None:
        V1 = step_space(one_point_groupoid(), "V8v")
    if V2 is None:
        V2 = step_space(sos_groupoid(params), "Vsos")
    point, sos = V1.carrier, V2.carrier
    (vertex,) = point.objects

    connecting = ConnectingSet([(f"{vertex}=>{o}", vertex, o) for o in sos.objects], point, sos, name="baxter")
    Vpi = GradedSpace.uniform(connecting, connecting.arrows, "Vpi")
    loops = V1.support_from(vertex)

    squares = []
    for a1 in sos.objects:
        a = sos.position(a1)
        for gamma in V2.support_from(a1):
            a2 = V2.target(gamma)
            up = sos.position(a2) > a
            squares.append((a1, a2, gamma, a, up))

    def evaluate(z: complex) -> BlockOperator:
        blocks = {}
        for a1, a2, gamma, a, up in squares:
            # +z on up-steps: the printed squares at -z; RCC fails with the printed sign
            if up:
                x = lam * (s_plus + a + z - xi)
            else:
                x = lam * (s_minus + a - z - xi)
            weights = {"+": jacobi_H(x, ell), "-": jacobi_Theta(x, ell)}
            for alpha in loops:
                blocks[((alpha, f"{vertex}=>{a2}"), (f"{vertex}=>{a1}", gamma))] = np.array(
                    [[weights[alpha[-1]]]], dtype=complex
                )
        return BlockOperator([V1, Vpi], [Vpi, V2], blocks)

    return Intertwiner(evaluate, V1, Vpi, V2, connecting, name="C8v-sos")


def build_hatC(params: ModelParams, V: Optional[GradedSpace] = None, V2: Optional[GradedSpace] = None) -> Intertwiner:
    """Gauge intertwiner between the SOS and symmetric SOS operators on one window."""
    ell = params.elliptic
    if V is None:
        V = step_space(sos_groupoid(params), "Vsos")
    V2 = V2 or V
    groupoid = V.carrier
    connecting = ConnectingSet.identity(groupoid, name="hat")
    Vpi = GradedSpace.uniform(connecting, connecting.arrows, "Vhat")

    blocks = {}
    for a in groupoid.objects:
        for alpha in V.support_from(a):
            a_next = V.target(alpha)
            value = (h(groupoid.position(a), ell) * h(groupoid.position(a_next), ell)) ** -0.25
            blocks[((alpha, f"{a_next}=>{a_next}"), (f"{a}=>{a}", alpha))] = np.array([[value]], dtype=complex)
    op = BlockOperator([V, Vpi], [Vpi, V2], blocks)

    inverse = {}
    for (inp, out), mat in blocks.items():
        inverse[(out, inp)] = 1.0 / mat
    inv_op = BlockOperator([Vpi, V2], [V, Vpi], inverse)

    return Intertwiner(lambda z: op, V, Vpi, V2, connecting, inverse=lambda z: inv_op, name="Chat")


# Composition and transposition


def compose_intertwiners(C: Intertwiner, D: Intertwiner) -> Intertwiner:
    """D^(23) C^(12) packaged as one intertwiner over the composite connecting set."""
    if C.V2.name != D.V1.name:
        raise GroupoidError(f"cannot compose: {C.name} ends in {C.V2.name}, {D.name} starts in {D.V1.name}")
    if not (isinstance(C.connecting, ConnectingSet) and isinstance(D.connecting, ConnectingSet)):
        raise GroupoidError("composition needs connecting sets on both sides")
    connecting = C.connecting.then(D.connecting)
    dims = {
        f"{b}*{bh}": C.Vpi.dim(b) * D.Vpi.dim(bh)
        for b in C.connecting.arrows
        for bh in D.connecting.arrows_from(C.connecting.target(b))
    }
    Vpi = GradedSpace(connecting, dims, f"{C.Vpi.name}*{D.Vpi.name}")

    def evaluate(z: complex) -> BlockOperator:
        by_gamma = defaultdict(list)
        for (d_in, d_out), d_mat in D(z).blocks.items():
            by_gamma[d_in[0]].append((d_in[1], d_out, d_mat))

        blocks: Dict = {}
        for ((alpha, beta), (beta_out, gamma)), c_mat in C(z).blocks.items():
            for beta_hat, (beta_hat_out, delta), d_mat in by_gamma[gamma]:
                first = np.kron(c_mat, np.eye(D.Vpi.dim(beta_hat)))
                second = np.kron(np.eye(C.Vpi.dim(beta_out)), d_mat)
                key = ((alpha, f"{beta}*{beta_hat}"), (f"{beta_out}*{beta_hat_out}", delta))
                prod = second @ first
                blocks[key] = blocks[key] + prod if key in blocks else prod
        return BlockOperator([C.V1, Vpi], [Vpi, D.V2], blocks)

    return Intertwiner(evaluate, C.V1, Vpi, D.V2, connecting, name=f"{D.name}o{C.name}")


def transpose_intertwiner(C: Intertwiner) -> Intertwiner:
    """Reverse every square: block (in, out) becomes (rev^-1(out), rev^-1(in)).

    A connecting arrow b: a -> e is reversed to the formal arrow ``b~``: e -> a;
    when the middle leg lives on a groupoid its own inverses are used.
    """
    for space in (C.V1, C.Vpi, C.V2):
        if any(d != 1 for d in space.dims.values()):
            raise UnsupportedDimension(f"transposed intertwiners need one-dimensional components ({space.name})")
    V1, V2 = C.V1, C.V2
    if isinstance(C.connecting, Groupoid):
        connecting, Vpi, inv_pi = C.connecting, C.Vpi, C.connecting.inverse
    else:
        connecting = C.connecting.transpose()
        Vpi = GradedSpace.uniform(connecting, connecting.arrows, reversed_id(C.Vpi.name))
        inv_pi = reversed_id

    def evaluate(z: complex) -> BlockOperator:
        blocks = {}
        for ((alpha, beta), (beta_out, gamma)), mat in C(z).blocks.items():
            new_in = (V2.carrier.inverse(gamma), inv_pi(beta_out))
            new_out = (inv_pi(beta), V1.carrier.inverse(alpha))
            blocks[(new_in, new_out)] = mat.copy()
        return BlockOperator([V2, Vpi], [Vpi, V1], blocks)

    return Intertwiner(evaluate, V2, Vpi, V1, connecting, name=reversed_id(C.name))


# Relation checkers


def _interior_rows(fiber, spaces: Sequence[GradedSpace], allowed: set) -> np.ndarray:
    mask = np.zeros(fiber.size, dtype=bool)
    for path in fiber.paths:
        objects = {space.target(a) for space, a in zip(spaces, path)}
        if objects <= allowed:
            mask[fiber.slot(path)] = True
    return mask


def _interior(groupoid, margin: int) -> List[str]:
    return groupoid.interior(margin) if hasattr(groupoid, "interior") else list(groupoid.objects)


def rcc_residual(
    C: SpectralOperator,
    R1: SpectralOperator,
    R2: SpectralOperator,
    z: complex,
    w: complex,
    margin: int = 2,
):
    V1, Vpi = C.domain
    V2 = C.codomain[1]
    Cz, Cw, R1u, R2u = C(z), C(w), R1(z - w), R2(z - w)
    legs_in = [V1, V1, Vpi]
    legs_mid = [V1, Vpi, V2]
    legs_out = [Vpi, V2, V2]
    allowed = set(_interior(V2.carrier, margin))

    worst, where = 0.0, None
    for base in _interior(V1.carrier, margin):
        if not fiber_basis(legs_in, base).paths:
            continue
        lhs = (
            fiber_matrix(Cw, legs_mid, 0, base)
            @ fiber_matrix(Cz, legs_in, 1, base)
            @ fiber_matrix(R1u, legs_in, 0, base)
        )
        rhs = (
            fiber_matrix(R2u, legs_out, 1, base)
            @ fiber_matrix(Cz, legs_mid, 0, base)
            @ fiber_matrix(Cw, legs_in, 1, base)
        )
        rows = _interior_rows(fiber_basis(legs_out, base), legs_out, allowed)
        if rows.any() and lhs.size:
            diff = float(np.abs(lhs[rows] - rhs[rows]).max())
            if diff >= worst:
                worst, where = diff, base
    return worst, where


def check_rcc(
    C: SpectralOperator,
    R1: SpectralOperator,
    R2: SpectralOperator,
    z: complex,
    w: complex,
    tol: float = config.TOLERANCE,
    margin: int = 2,
) -> CheckResult:
    """C(w)^(12) C(z)^(23) R1(z-w)^(12) = R2^(23)(z-w) C^(12)(z) C^(23)(w)."""
    residual, where = rcc_residual(C, R1, R2, z, w, margin)
    logger.debug(f"rcc {C.name} z={z} w={w}: {residual:.3e}")
    return CheckResult(name=f"rcc:{C.name}", residual=residual, tol=tol, detail={"base": where})


def check_rdd(
    D: SpectralOperator,
    R1: SpectralOperator,
    R2: SpectralOperator,
    z: complex,
    w: complex,
    tol: float = config.TOLERANCE,
    margin: int = 2,
) -> CheckResult:
    """Transposed relation: D intertwines the transposes of R2 and R1."""
    residual, where = rcc_residual(D, transpose_op(R2), transpose_op(R1), z, w, margin)
    return CheckResult(name=f"rdd:{D.name}", residual=residual, tol=tol, detail={"base": where})


def _closed_interior_rows(T, space: GradedSpace, allowed: set) -> np.ndarray:
    mask = np.zeros(T.matrix.shape[0], dtype=bool)
    for path in T.row_paths:
        if {space.target(a) for a in path} <= allowed:
            start = T.row_offsets[path]
            mask[start:start + path_dim([space] * len(path), path)] = True
    return mask


def _ring_residual(lhs, rhs, space: GradedSpace, margin: int):
    rows = _closed_interior_rows(lhs, space, set(_interior(space.carrier, margin)))
    if not rows.any():
        return 0.0, 0, 0.0
    residual = float(np.abs(lhs.matrix[rows] - rhs.matrix[rows]).max())
    return residual, int(rows.sum()), float(np.abs(lhs.matrix[rows]).max())


def _connecting_arrow(connecting: ConnectingSet, src: str, tgt: str) -> Optional[str]:
    found = [b for b in connecting.arrows_from(src) if connecting.target(b) == tgt]
    if len(found) > 1:
        raise GroupoidError(f"trace relation needs a single connecting arrow {src!r}=>{tgt!r}")
    return found[0] if found else None


def _left_action(carrier, left: Groupoid) -> Callable[[str, str], Optional[str]]:
    """alpha in the left groupoid acting on beta: alpha then beta."""
    if not isinstance(carrier, ConnectingSet):
        return carrier.try_compose

    def act(alpha: str, beta: str) -> Optional[str]:
        if left.target(alpha) != carrier.source(beta):
            return None
        return _connecting_arrow(carrier, left.source(alpha), carrier.target(beta))

    return act


def _right_action(carrier, right: Groupoid) -> Callable[[str, str], Optional[str]]:
    """beta then gamma in the right groupoid."""
    if not isinstance(carrier, ConnectingSet):
        return carrier.try_compose

    def act(beta: str, gamma: str) -> Optional[str]:
        if carrier.target(beta) != right.source(gamma):
            return None
        return _connecting_arrow(carrier, carrier.source(beta), right.target(gamma))

    return act


def _interior_entries(element, margin: int):
    carrier = element.carrier
    if isinstance(carrier, ConnectingSet):
        left, right = set(_interior(carrier.left, margin)), set(_interior(carrier.right, margin))
    else:
        left = right = set(_interior(carrier, margin))
    entries = {
        arrow: coeff
        for arrow, coeff in element.entries.items()
        if carrier.source(arrow) in left and carrier.target(arrow) in right
    }
    return graded.ConvolutionElement(carrier, entries, tag=element.tag)


def trace_convolutions(C: BlockOperator, R1: BlockOperator, R2: BlockOperator):
    """Both sides of tr R1 *_{pi1} tr C = tr C *_{pi2} tr R2 as convolution elements."""
    V1, Vpi = C.domain
    V2 = C.codomain[1]
    tr_C = graded.partial_trace(C)
    tr_R1, tr_R2 = graded.partial_trace(R1), graded.partial_trace(R2)
    lhs = graded.module_act(tr_R1, tr_C, _left_action(Vpi.carrier, V1.carrier), carrier=Vpi.carrier)
    rhs = graded.module_act(tr_C, tr_R2, _right_action(Vpi.carrier, V2.carrier), carrier=Vpi.carrier)
    return lhs, rhs


def check_trace_relation(
    C: SpectralOperator,
    R1: SpectralOperator,
    R2: SpectralOperator,
    z: complex,
    zp: complex,
    tol: float = config.TOLERANCE,
    ring: int = config.RING_LENGTH,
    margin: int = 2,
) -> List[CheckResult]:
    """tr R1(z) * tr C(z') = tr C(z') * tr R2(z), then the same on periodic rows.

    The partial traces only see squares whose auxiliary arrow closes on itself,
    so on face windows the convolution sides are empty and the ring check
    carries the relation.
    """
    Cz = C(zp)
    lhs, rhs = trace_convolutions(Cz, R1(z), R2(z))
    lhs, rhs = _interior_entries(lhs, margin), _interior_entries(rhs, margin)
    support = len(set(lhs.entries) | set(rhs.entries))

    T_C = transfer_matrix(Cz, ring)
    ring_res, rows, scale = _ring_residual(
        T_C @ transfer_matrix(R1(z), ring), transfer_matrix(R2(z), ring) @ T_C, C.codomain[1], margin
    )
    logger.debug(f"trace {C.name}: convolution support {support}, ring rows {rows}")
    return [
        CheckResult(name=f"trace:{C.name}", residual=lhs.difference(rhs), tol=tol, detail={"support": support}),
        CheckResult(
            name=f"trace-ring:{C.name}",
            residual=ring_res,
            tol=tol,
            detail={"ring": ring, "rows": rows, "scale": scale},
        ),
    ]


def check_commuting_transfer(
    R: SpectralOperator,
    z: complex,
    zp: complex,
    tol: float = config.TOLERANCE,
    ring: int = config.RING_LENGTH,
    margin: int = 2,
) -> List[CheckResult]:
    """tr R(z) * tr R(z') = tr R(z') * tr R(z), and [T(R(z)), T(R(z'))] = 0 on periodic rows."""
    Rz, Rp = R(z), R(zp)
    tr_z, tr_p = graded.partial_trace(Rz), graded.partial_trace(Rp)
    lhs = _interior_entries(graded.convolve(tr_p, tr_z), margin)
    rhs = _interior_entries(graded.convolve(tr_z, tr_p), margin)
    support = len(set(lhs.entries) | set(rhs.entries))

    Tz, Tp = transfer_matrix(Rz, ring), transfer_matrix(Rp, ring)
    ring_res, rows, _ = _ring_residual(Tz @ Tp, Tp @ Tz, R.space, margin)
    return [
        CheckResult(name=f"commuting:{R.name}", residual=lhs.difference(rhs), tol=tol, detail={"support": support}),
        CheckResult(name=f"commuting-ring:{R.name}", residual=ring_res, tol=tol, detail={"ring": ring, "rows": rows}),
    ]


def check_weight_zero(
    C: SpectralOperator,
    R1: SpectralOperator,
    R2: SpectralOperator,
    z: complex,
    tol: float = config.TOLERANCE,
    cutoff: float = config.INVERSE_CUTOFF,
) -> List[CheckResult]:
    """C^(12)C^(23) R1^(12) (C^(12)C^(23))_r^-1 = R2^(23), its ice rule, trace and fiber compatibility."""
    V1, Vpi = C.domain
    V2 = C.codomain[1]
    if getattr(V2.carrier, "truncated", None):
        raise GroupoidError("the weight-zero relation needs an untruncated right groupoid")
    Cz, R1z, R2z = C(z), R1(z), R2(z)
    legs_in, legs_mid, legs_out = [V1, V1, Vpi], [V1, Vpi, V2], [Vpi, V2, V2]

    weight, ice, trace = 0.0, 0.0, 0.0
    traces: Dict[str, List[np.ndarray]] = {}
    for base in V1.carrier.objects:
        fin = fiber_basis(legs_in, base)
        fout = fiber_basis(legs_out, base)
        if not fin.paths or not fout.paths:
            continue
        M = fiber_matrix(Cz, legs_mid, 0, base) @ fiber_matrix(Cz, legs_in, 1, base)
        s = linalg.svdvals(M)
        if s.size == 0 or int((s > cutoff * s.max()).sum()) < M.shape[0]:
            raise NotInvertible("C(12)C(23) is not right invertible", grade=base)
        W = M @ fiber_matrix(R1z, legs_in, 0, base) @ linalg.pinv(M)
        expected = fiber_matrix(R2z, legs_out, 1, base)
        weight = max(weight, float(np.abs(W - expected).max()))

        for p in fout.paths:
            for q in fout.paths:
                if p[0] != q[0]:
                    blk = W[fout.slot(q), fout.slot(p)]
                    if blk.size:
                        ice = max(ice, float(np.abs(blk).max()))

        for beta in {p[0] for p in fout.paths}:
            d_beta = Vpi.dim(beta)
            sub_paths = [p for p in fout.paths if p[0] == beta]
            target = Vpi.target(beta)
            local = fiber_basis([V2, V2], target)
            T = np.zeros((local.size, local.size), dtype=complex)
            for p in sub_paths:
                for q in sub_paths:
                    blk = W[fout.slot(q), fout.slot(p)]
                    dq, dp = blk.shape[0] // d_beta, blk.shape[1] // d_beta
                    T[local.slot(q[1:]), local.slot(p[1:])] += np.einsum(
                        "iaib->ab", blk.reshape(d_beta, dq, d_beta, dp)
                    )
            reference = d_beta * fiber_matrix(R2z, [V2, V2], 0, target)
            trace = max(trace, float(np.abs(T - reference).max()) if T.size else 0.0)
            traces.setdefault(target, []).append(T / d_beta)

    mismatched = []
    spread = 0.0
    for target in V2.carrier.objects:
        carrier = Vpi.carrier
        into = carrier.arrows_into(target) if isinstance(carrier, ConnectingSet) else carrier.target_fiber(target)
        dims = {Vpi.dim(b) for b in into if Vpi.dim(b)}
        if len(dims) > 1:
            mismatched.append(target)
        group = traces.get(target, [])
        for T in group[1:]:
            spread = max(spread, float(np.abs(T - group[0]).max()))
    compat = 1.0 if mismatched else spread

    return [
        CheckResult(name="weight-zero", residual=weight, tol=tol),
        CheckResult(name="ice-rule", residual=ice, tol=tol),
        CheckResult(name="trace-ice-rule", residual=trace, tol=tol),
        CheckResult(name="target-fiber-compatibility", residual=compat, tol=tol, detail={"mismatched": mismatched}),
    ]
