"""Spectral Yang-Baxter operator families and the equation checkers."""

import cmath
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import config
from .elliptic import bracket, h, jacobi_H, jacobi_Theta, trig_bracket
from .exceptions import PoleProximity, UnsupportedDimension
from .graded import (
    BlockOperator,
    GradedSpace,
    fiber_matrix,
    max_difference,
)
from .groupoid import Groupoid, action_groupoid_window, one_point_groupoid, restricted_chain
from .models import CheckResult, ModelParams, ModelVariant

logger = logging.getLogger(__name__)


class SpectralOperator:
    """A meromorphic family z -> BlockOperator with a pole guard."""

    def __init__(
        self,
        evaluator: Callable[[complex], BlockOperator],
        domain: Sequence[GradedSpace],
        codomain: Optional[Sequence[GradedSpace]] = None,
        pole_guard: Optional[Callable[[complex], bool]] = None,
        name: str = "R",
    ):
        self._evaluator = evaluator
        self.domain = list(domain)
        self.codomain = list(codomain if codomain is not None else domain)
        self._pole_guard = pole_guard
        self.name = name

    def __repr__(self):
        return f"SpectralOperator({self.name!r})"

    def evaluate(self, z: complex) -> BlockOperator:
        z = complex(z)
        if self._pole_guard is not None and self._pole_guard(z):
            raise PoleProximity(f"{self.name} is too close to a pole at z={z}")
        op = self._evaluator(z)
        if not op.is_finite():
            raise PoleProximity(f"{self.name} is not finite at z={z}")
        return op

    __call__ = evaluate

    @property
    def space(self) -> GradedSpace:
        return self.domain[0]

    @property
    def groupoid(self):
        return self.domain[0].carrier


def constant_operator(op: BlockOperator, name: str = "const") -> SpectralOperator:
    return SpectralOperator(lambda z: op, op.domain, op.codomain, name=name)


def step_space(groupoid: Groupoid, name: str = "V") -> GradedSpace:
    """One-dimensional components on every step arrow."""
    return GradedSpace.uniform(groupoid, groupoid.steps(), name)


def _near_zero(value: complex, scale: float = 1.0) -> bool:
    return abs(value) < config.POLE_THRESHOLD * scale


# Eight-vertex


def build_r8v(params: ModelParams) -> SpectralOperator:
    """Zero-field eight-vertex operator on one object with loops + and -.

    Ordered basis ++, +-, -+, --; Ř(0) = id.
    """
    ell = params.elliptic
    lam = ell.lam
    groupoid = one_point_groupoid()
    V = step_space(groupoid, "V8v")
    paths = [("+", "+"), ("+", "-"), ("-", "+"), ("-", "-")]
    theta0 = jacobi_Theta(0, ell)
    H_lam, Th_lam = jacobi_H(lam, ell), jacobi_Theta(lam, ell)

    def weights(z: complex):
        Hz, Thz = jacobi_H(lam * z, ell), jacobi_Theta(lam * z, ell)
        Hs, Ths = jacobi_H(lam * (1 + z), ell), jacobi_Theta(lam * (1 + z), ell)
        norm = theta0 * Hs * Ths
        a = Th_lam * Thz * Hs / norm
        b = Th_lam * Hz * Ths / norm
        c = H_lam * Thz * Ths / norm
        d = H_lam * Hz * Hs / norm
        return a, b, c, d

    def evaluate(z: complex) -> BlockOperator:
        a, b, c, d = weights(z)
        M = np.array(
            [[a, 0, 0, d], [0, c, b, 0], [0, b, c, 0], [d, 0, 0, a]],
            dtype=complex,
        )
        blocks = {}
        for i, p in enumerate(paths):
            for j, q in enumerate(paths):
                if M[j, i] != 0:
                    blocks[(p, q)] = M[j:j + 1, i:i + 1]
        return BlockOperator([V, V], [V, V], blocks)

    def guard(z: complex) -> bool:
        x = lam * (1 + z)
        return _near_zero(jacobi_H(x, ell) * jacobi_Theta(x, ell))

    return SpectralOperator(evaluate, [V, V], pole_guard=guard, name="R8v")


# Two-step chain models


def _chain_operator(
    groupoid: Groupoid,
    V: GradedSpace,
    entries: Callable[[float, complex], Dict[str, complex]],
    guard: Callable[[complex], bool],
    name: str,
) -> SpectralOperator:
    """Operator on a unit-step chain with the six-entry face pattern.

    ``entries(a, z)`` returns the weights keyed "++", "--", "+-", "-+"
    (diagonal) and "-+>+-", "+->-+" (off-diagonal, input>output).
    """
    local_paths = {}
    for obj in groupoid.objects:
        paths = {}
        for first in V.support_from(obj):
            for second in V.support_from(V.target(first)):
                label = first[-1] + second[-1]
                paths[label] = (first, second)
        local_paths[obj] = paths

    def evaluate(z: complex) -> BlockOperator:
        blocks = {}
        for obj, paths in local_paths.items():
            if not paths:
                continue
            w = entries(groupoid.position(obj), z)
            for label in ("++", "--", "+-", "-+"):
                if label in paths:
                    blocks[(paths[label], paths[label])] = np.array([[w[label]]], dtype=complex)
            for key in ("-+>+-", "+->-+"):
                src, dst = key.split(">")
                if src in paths and dst in paths:
                    blocks[(paths[src], paths[dst])] = np.array([[w[key]]], dtype=complex)
        return BlockOperator([V, V], [V, V], blocks)

    return SpectralOperator(evaluate, [V, V], pole_guard=guard, name=name)


def sos_groupoid(params: ModelParams) -> Groupoid:
    return action_groupoid_window(params.xi, params.window, center=params.center, name="sos")


def _check_object_poles(groupoid: Groupoid, fn: Callable[[float], complex], label: str):
    for obj in groupoid.objects:
        if _near_zero(fn(groupoid.position(obj))):
            raise PoleProximity(f"{label} vanishes at object {obj!r}")


def build_rsos(params: ModelParams, groupoid: Optional[Groupoid] = None) -> SpectralOperator:
    """Dynamical SOS operator; the dynamical variable is the base object's position."""
    ell = params.elliptic
    groupoid = groupoid or sos_groupoid(params)
    V = step_space(groupoid, "Vsos")
    h1 = h(1, ell)
    _check_object_poles(groupoid, lambda a: h(a, ell), "h(a)")

    def entries(a: float, z: complex) -> Dict[str, complex]:
        den = h(a, ell) * h(z + 1, ell)
        hz = h(z, ell)
        return {
            "++": 1.0,
            "--": 1.0,
            "+-": h(a - z, ell) * h1 / den,
            "-+": h(a + z, ell) * h1 / den,
            "-+>+-": h(a + 1, ell) * hz / den,
            "+->-+": h(a - 1, ell) * hz / den,
        }

    def guard(z: complex) -> bool:
        return _near_zero(h(z + 1, ell))

    return _chain_operator(groupoid, V, entries, guard, "Rsos")


def build_rsym_sos(params: ModelParams, groupoid: Optional[Groupoid] = None) -> SpectralOperator:
    ell = params.elliptic
    groupoid = groupoid or sos_groupoid(params)
    V = step_space(groupoid, "Vsos")
    h1 = h(1, ell)
    _check_object_poles(groupoid, lambda a: h(a, ell), "h(a)")

    def entries(a: float, z: complex) -> Dict[str, complex]:
        den = h(a, ell) * h(z + 1, ell)
        off = cmath.sqrt(h(a + 1, ell) * h(a - 1, ell)) * h(z, ell) / den
        return {
            "++": 1.0,
            "--": 1.0,
            "+-": h(a - z, ell) * h1 / den,
            "-+": h(a + z, ell) * h1 / den,
            "-+>+-": off,
            "+->-+": off,
        }

    def guard(z: complex) -> bool:
        return _near_zero(h(z + 1, ell))

    return _chain_operator(groupoid, V, entries, guard, "Rsym-sos")


def _face_entries(br: Callable[[complex], complex]):
    one = br(1)

    def entries(a: float, z: complex) -> Dict[str, complex]:
        den = br(a) * br(1 - z)
        off = cmath.sqrt(br(a - 1) * br(a + 1)) * br(z) / den
        return {
            "++": 1.0,
            "--": 1.0,
            "+-": br(a + z) * one / den,
            "-+": br(a - z) * one / den,
            "-+>+-": off,
            "+->-+": off,
        }

    return entries


def face_groupoid(params: ModelParams) -> Groupoid:
    """Restricted A_{2L-3} chain, or a shifted window of the action groupoid."""
    if params.restricted:
        L = params.scale // 2 + 1
        return restricted_chain(L)
    return action_groupoid_window(params.shift, params.window, center=params.center, name="face")


def build_elliptic_A(params: ModelParams, groupoid: Optional[Groupoid] = None) -> SpectralOperator:
    theta = params.theta
    groupoid = groupoid or face_groupoid(params)
    V = step_space(groupoid, "VA")
    br = lambda x: bracket(x, theta)
    _check_object_poles(groupoid, br, "[a]")

    def guard(z: complex) -> bool:
        return _near_zero(br(1 - z))

    return _chain_operator(groupoid, V, _face_entries(br), guard, "Rell-A")


def build_trig_A(params: ModelParams, groupoid: Optional[Groupoid] = None) -> SpectralOperator:
    g = params.scale
    groupoid = groupoid or face_groupoid(params)
    V = step_space(groupoid, "VA")
    br = lambda x: trig_bracket(x, g)
    _check_object_poles(groupoid, br, "<a>")

    def guard(z: complex) -> bool:
        return _near_zero(br(1 - z))

    return _chain_operator(groupoid, V, _face_entries(br), guard, "Rtrig-A")


def build_model(params: ModelParams) -> SpectralOperator:
    builders = {
        ModelVariant.EIGHT_VERTEX: build_r8v,
        ModelVariant.SOS: build_rsos,
        ModelVariant.SYM_SOS: build_rsym_sos,
        ModelVariant.ELLIPTIC_A: build_elliptic_A,
        ModelVariant.TRIG_A: build_trig_A,
    }
    return builders[params.variant](params)


# Checkers


def check_bases(space: GradedSpace, margin: int = 2) -> List[str]:
    groupoid = space.carrier
    objects = groupoid.interior(margin) if hasattr(groupoid, "interior") else space.start_objects()
    return [o for o in objects if space.support_from(o)]


def _triple_residual(R: SpectralOperator, z: complex, w: complex, bases: List[str]) -> Tuple[float, Optional[str]]:
    Rz, Rw, Ru = R(z), R(w), R(z - w)
    V = R.space
    legs = [V, V, V]
    worst, where = 0.0, None
    for base in bases:
        lhs = fiber_matrix(Ru, legs, 1, base) @ fiber_matrix(Rz, legs, 0, base) @ fiber_matrix(Rw, legs, 1, base)
        rhs = fiber_matrix(Rw, legs, 0, base) @ fiber_matrix(Rz, legs, 1, base) @ fiber_matrix(Ru, legs, 0, base)
        if lhs.size:
            diff = float(np.abs(lhs - rhs).max())
            if diff >= worst:
                worst, where = diff, base
    return worst, where


def check_ybe(R: SpectralOperator, z: complex, w: complex, tol: float = config.TOLERANCE) -> CheckResult:
    """Braid-form Yang-Baxter equation on every triple fiber."""
    bases = R.space.start_objects()
    residual, where = _triple_residual(R, z, w, bases)
    logger.debug(f"ybe {R.name} z={z} w={w}: {residual:.3e}")
    return CheckResult(name=f"ybe:{R.name}", residual=residual, tol=tol, detail={"base": where})


def check_dybe(
    R: SpectralOperator,
    z: complex,
    w: complex,
    tol: float = config.TOLERANCE,
    margin: int = 2,
) -> CheckResult:
    """Dynamical YBE; the second-leg operators act at the shifted base t(first arrow)."""
    bases = check_bases(R.space, margin)
    residual, where = _triple_residual(R, z, w, bases)
    logger.debug(f"dybe {R.name} z={z} w={w}: {residual:.3e}")
    return CheckResult(name=f"dybe:{R.name}", residual=residual, tol=tol, detail={"base": where})


def check_inversion(
    R: SpectralOperator,
    z: complex,
    tol: float = config.TOLERANCE,
    margin: int = 2,
) -> CheckResult:
    Rz, Rm = R(z), R(-z)
    V = R.space
    worst, where = 0.0, None
    for base in check_bases(V, margin):
        prod = fiber_matrix(Rz, [V, V], 0, base) @ fiber_matrix(Rm, [V, V], 0, base)
        if prod.size:
            diff = float(np.abs(prod - np.eye(prod.shape[0])).max())
            if diff >= worst:
                worst, where = diff, base
    return CheckResult(name=f"inversion:{R.name}", residual=worst, tol=tol, detail={"base": where})


def reverse_inverse(path: Tuple[str, ...], inverse: Callable[[str], str]) -> Tuple[str, ...]:
    return tuple(inverse(a) for a in reversed(path))


def transpose_blocks(op: BlockOperator, inverse: Optional[Callable[[str], str]] = None) -> BlockOperator:
    """Reindex a one-dimensional table by reversing and inverting both paths."""
    for space in op.domain + op.codomain:
        if any(d != 1 for d in space.dims.values()):
            raise UnsupportedDimension(f"transposition needs one-dimensional components ({space.name})")
    inv = inverse or op.domain[0].carrier.inverse
    blocks = {}
    for (inp, out), mat in op.blocks.items():
        new_in = reverse_inverse(out, inv)
        new_out = reverse_inverse(inp, inv)
        blocks[(new_in, new_out)] = mat.copy()
    return BlockOperator(list(reversed(op.codomain)), list(reversed(op.domain)), blocks, validate=False)


def transpose_op(R: SpectralOperator) -> SpectralOperator:
    for space in R.domain:
        for arrow_id, d in space.dims.items():
            if space.dim(space.carrier.inverse(arrow_id)) != d:
                raise UnsupportedDimension(f"{space.name}: dimension of {arrow_id!r} differs from its inverse")
    return SpectralOperator(
        lambda z: transpose_blocks(R(z)),
        list(reversed(R.codomain)),
        list(reversed(R.domain)),
        name=f"{R.name}^T",
    )


def check_symmetric(R: SpectralOperator, z: complex, tol: float = config.TOLERANCE) -> CheckResult:
    op = R(z)
    residual = max_difference(op, transpose_blocks(op))
    return CheckResult(name=f"symmetric:{R.name}", residual=residual, tol=tol)


# Sampling


def sample_points(
    seed: int = config.SEED,
    count: int = config.SAMPLES,
    scale: float = 1.0,
    arity: int = 2,
) -> np.ndarray:
    """Seeded points in scale * ([0.05, 0.95] + i[-0.2, 0.2]), shape (count, arity)."""
    rng = np.random.default_rng(seed)
    return _draw(rng, count, scale, arity)


def _draw(rng: np.random.Generator, count: int, scale: float, arity: int) -> np.ndarray:
    re = rng.uniform(0.05, 0.95, size=(count, arity))
    im = rng.uniform(-0.2, 0.2, size=(count, arity))
    return scale * (re + 1j * im)


def sweep_many(
    check: Callable[..., List[CheckResult]],
    samples: int = config.SAMPLES,
    seed: int = config.SEED,
    scale: float = 1.0,
    arity: int = 2,
    max_resamples: int = config.MAX_RESAMPLES,
) -> Tuple[List[CheckResult], int]:
    """Run ``check`` at seeded random points and keep the worst result per check name.

    Points too close to a pole are redrawn; more than ``max_resamples`` redraws
    for one point raises PoleProximity.
    """
    rng = np.random.default_rng(seed)
    worst: Dict[str, CheckResult] = {}
    resamples = 0
    for i in range(samples):
        for attempt in range(max_resamples + 1):
            point = _draw(rng, 1, scale, arity)[0]
            try:
                results = check(*point)
                break
            except PoleProximity as e:
                resamples += 1
                logger.warning(f"resampling point {i}: {e}")
        else:
            raise PoleProximity(f"pole exhaustion after {max_resamples} resamples")
        for result in results:
            current = worst.get(result.name)
            if current is None or result.residual > current.residual or not np.isfinite(result.residual):
                result.detail = dict(result.detail, point=[[p.real, p.imag] for p in point])
                worst[result.name] = result
        logger.debug(f"sample {i}: " + ", ".join(f"{r.name}={r.residual:.2e}" for r in results))
    return list(worst.values()), resamples


def sweep(
    check: Callable[..., CheckResult],
    samples: int = config.SAMPLES,
    seed: int = config.SEED,
    scale: float = 1.0,
    arity: int = 2,
    max_resamples: int = config.MAX_RESAMPLES,
) -> Tuple[CheckResult, int]:
    results, resamples = sweep_many(lambda *p: [check(*p)], samples, seed, scale, arity, max_resamples)
    return results[0], resamples
