"""Named verification suites, JSON loading and fiber export."""

import json
import logging
import time
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy import linalg

from . import config
from .elliptic import bracket, euler_phi, h, jacobi_H, jacobi_Theta, theta_odd, trig_bracket
from .exceptions import DomainError, NoConsistentAssignment, SchemaError
from .graded import BlockOperator, fiber_basis, fiber_matrix, identity_block
from .groupoid import Groupoid
from .intertwine import (
    build_baxter_C,
    build_hatC,
    check_commuting_transfer,
    check_rcc,
    check_rdd,
    check_trace_relation,
    check_weight_zero,
    compose_intertwiners,
    transpose_intertwiner,
)
from .models import (
    CellDataSchema,
    CheckResult,
    EllipticParams,
    ModelParams,
    ModelVariant,
    ResidualReport,
    SuiteConfig,
    ThetaParams,
    TwistPairSchema,
)
from .rmodels import (
    build_elliptic_A,
    build_model,
    build_r8v,
    build_rsos,
    build_rsym_sos,
    build_trig_A,
    check_dybe,
    check_inversion,
    check_symmetric,
    check_ybe,
    sample_points,
    sos_groupoid,
    step_space,
    sweep_many,
)
from .twist import (
    CellData,
    StaticTwistPair,
    TwistWitness,
    build_AD_cells,
    build_E6_cells,
    cells_from_schema,
    check_cell_twist,
    check_drinfeld,
    cocycle_check,
    check_dynamical_twist,
    check_quasi_unique_twist,
    check_unique_twist,
    gauge_cells,
    resolve_signs,
    twisted_intertwiner,
)

logger = logging.getLogger(__name__)

PAIRS = ("8v-sos", "sos-sym", "8v-sym")
E6_SCALE = 12


def default_params(
    variant: Optional[ModelVariant] = None,
    tau: Optional[complex] = None,
    nome: Optional[complex] = None,
    level: Optional[int] = None,
    shift: Optional[float] = None,
) -> ModelParams:
    """Model parameters from CLI-level choices.

    Face models use the restricted chain of the given level unless a shift is
    given; a shifted window is centred at L-1 with radius L-3 so that every
    bracket radicand stays positive.
    """
    variant = ModelVariant(variant or ModelVariant.SOS)
    elliptic = EllipticParams(p=nome if nome is not None else config.NOME)
    L = level or config.LEVEL
    theta = ThetaParams(tau=tau if tau is not None else config.TAU, L=L)
    extra = {}
    if variant in (ModelVariant.ELLIPTIC_A, ModelVariant.TRIG_A):
        if shift is None:
            extra = {"restricted": True}
        else:
            extra = {"restricted": False, "shift": shift, "center": L - 1, "window": max(1, L - 3)}
    return ModelParams(variant=variant, elliptic=elliptic, theta=theta, **extra)


# JSON input


def load_schema(path: str, schema: type) -> BaseModel:
    """Parse a JSON file into ``schema``; failures name the offending field path."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"{path}: {e}") from None
    try:
        return schema.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"]) or "<root>"
        raise SchemaError(f"{location}: {first['msg']}") from None


def load_twist_pair(path: str) -> Tuple[Groupoid, BlockOperator, BlockOperator, Optional[BlockOperator]]:
    schema = load_schema(path, TwistPairSchema)
    groupoid = Groupoid.from_schema(schema.groupoid, name="pair")
    V = step_space(groupoid, "V")
    spaces = {"V": V}
    try:
        J = BlockOperator.from_schema(schema.J, spaces)
        Q = BlockOperator.from_schema(schema.Q, spaces)
        R = BlockOperator.from_schema(schema.R, spaces) if schema.R is not None else None
    except SchemaError as e:
        raise SchemaError(f"{path}: {e}") from None
    return groupoid, J, Q, R


# Model pairs and cells


def build_pair(pair: str, params: ModelParams):
    """(intertwiner, R1, R2) for one of the named vertex-face pairs."""
    if pair not in PAIRS:
        raise DomainError(f"unknown model pair {pair!r}; expected one of {', '.join(PAIRS)}")
    groupoid = sos_groupoid(params)
    sos = build_rsos(params, groupoid)
    sym = build_rsym_sos(params, groupoid)
    if pair == "sos-sym":
        return build_hatC(params, sos.space, sym.space), sos, sym
    r8v = build_r8v(params)
    C = build_baxter_C(params, r8v.space, sos.space)
    if pair == "8v-sos":
        return C, r8v, sos
    return compose_intertwiners(C, build_hatC(params, sos.space, sym.space)), r8v, sym


def load_cells(cells: Optional[str], params: ModelParams, model: Optional[ModelVariant] = None):
    """Cell data with the face operator on its left chain: "ad", "e6" or a cell JSON file."""
    if cells in (None, "ad"):
        cell, family = build_AD_cells(params.theta.L), "ad"
    elif cells == "e6":
        cell, family = build_E6_cells(), "e6"
    else:
        schema = load_schema(cells, CellDataSchema)
        cell, family = cells_from_schema(schema), schema.family

    left = cell.left.carrier
    if family == "e6":
        face = ModelParams(variant=ModelVariant.TRIG_A, g=E6_SCALE, restricted=True)
        R1 = build_trig_A(face, groupoid=left)
    elif model == ModelVariant.TRIG_A:
        L = (len(left.objects) + 3) // 2
        face = params.model_copy(update={"variant": ModelVariant.TRIG_A, "g": 2 * L - 2, "restricted": True})
        R1 = build_trig_A(face, groupoid=left)
    else:
        L = (len(left.objects) + 3) // 2
        theta = ThetaParams(tau=params.theta.tau, L=L)
        face = params.model_copy(update={"variant": ModelVariant.ELLIPTIC_A, "theta": theta, "restricted": True})
        R1 = build_elliptic_A(face, groupoid=left)
    return cell, R1


def _resolved(cell: CellData, R1, seed: int) -> Tuple[CellData, List[CheckResult]]:
    if not cell.flagged:
        return cell, []
    z0 = complex(sample_points(seed, 1, arity=1)[0, 0])
    try:
        resolved = resolve_signs(cell, R1, z0)
    except NoConsistentAssignment as e:
        best = e.table[0]
        logger.warning(f"sign search failed for {cell.name}; continuing with the best assignment")
        return cell.with_signs(best["flips"]), [
            CheckResult(name="sign-resolution", residual=best["deviation"], tol=1e-8, detail={"table": e.table})
        ]
    info = resolved.resolution
    return resolved, [
        CheckResult(
            name="sign-resolution",
            residual=info["deviation"],
            tol=1e-8,
            detail={"flips": info["flips"], "runner_up": info["runner_up"], "ambiguous": info["ambiguous"]},
        )
    ]


# Suites


SuiteResult = Tuple[List[CheckResult], int]


def _sweep(cfg: SuiteConfig, check: Callable[..., List[CheckResult]], arity: int = 2) -> SuiteResult:
    return sweep_many(check, samples=cfg.samples, seed=cfg.seed, arity=arity)


def _suite_dybe(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    R = build_model(params)
    return _sweep(cfg, lambda z, w: [check_dybe(R, z, w, tol=cfg.tolerance)])


def _suite_ybe(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    R = build_model(params)
    return _sweep(cfg, lambda z, w: [check_ybe(R, z, w, tol=cfg.tolerance)])


def _suite_inversion(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    R = build_model(params)
    return _sweep(cfg, lambda z: [check_inversion(R, z, tol=cfg.tolerance)], arity=1)


def _suite_symmetric(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    R = build_model(params)
    return _sweep(cfg, lambda z: [check_symmetric(R, z, tol=cfg.tolerance)], arity=1)


def _suite_rcc(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    C, R1, R2 = build_pair(cfg.pair or "8v-sos", params)
    return _sweep(cfg, lambda z, w: [check_rcc(C, R1, R2, z, w, tol=cfg.tolerance)])


def _suite_rdd(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    C, R1, R2 = build_pair(cfg.pair or "8v-sym", params)
    D = transpose_intertwiner(C)
    return _sweep(cfg, lambda z, w: [check_rdd(D, R1, R2, z, w, tol=cfg.tolerance)])


def _suite_trace(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    if cfg.pair:
        C, R1, R2 = build_pair(cfg.pair, params)
        return _sweep(cfg, lambda z, zp: check_trace_relation(C, R1, R2, z, zp, tol=cfg.tolerance))
    R = build_model(params)
    return _sweep(cfg, lambda z, zp: check_commuting_transfer(R, z, zp, tol=cfg.tolerance))


def _cell_witness(cfg: SuiteConfig, params: ModelParams):
    cell, R1 = load_cells(cfg.cells, params, cfg.model)
    cell, notes = _resolved(cell, R1, cfg.seed)
    return cell, R1, TwistWitness.from_cells(cell), notes


def _suite_cell(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    cell, R1, witness, notes = _cell_witness(cfg, params)
    R2 = witness.r2(R1)
    C = twisted_intertwiner(cell)

    def check(z, w):
        results = check_cell_twist(cell, R1, z, tol=cfg.tolerance)
        results.append(check_dybe(R2, z, w, tol=cfg.tolerance))
        if all(r.passed for r in results):
            results.extend(check_weight_zero(C, R1, R2, z, tol=cfg.tolerance))
        return results

    checks, resamples = _sweep(cfg, check)
    return notes + checks, resamples


def _suite_weight_zero(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    cell, R1, witness, notes = _cell_witness(cfg, params)
    R2 = witness.r2(R1)
    C = twisted_intertwiner(cell)
    checks, resamples = _sweep(cfg, lambda z: check_weight_zero(C, R1, R2, z, tol=cfg.tolerance), arity=1)
    return notes + checks, resamples


def _suite_twist_quasi(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    cell, R1, witness, notes = _cell_witness(cfg, params)
    checks, resamples = _sweep(cfg, lambda z, w: check_quasi_unique_twist(witness, R1, z, w, tol=cfg.tolerance))
    return notes + checks, resamples


def _suite_twist_unique(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    """Gauge twist by seeded random nonzero scalars."""
    R1 = build_model(params)
    rng = np.random.default_rng(cfg.seed)
    scalars = {a: complex(rng.uniform(0.5, 2.0), rng.uniform(-0.5, 0.5)) for a in sorted(R1.space.dims)}
    witness = TwistWitness.from_cells(gauge_cells(scalars, R1.space))
    return _sweep(cfg, lambda z, w: check_unique_twist(witness, R1, z, w, tol=cfg.tolerance))


def _dense_at_single_object(op: BlockOperator, legs: int) -> np.ndarray:
    V = op.domain[0]
    (obj,) = V.carrier.objects
    return fiber_matrix(op, [V] * legs, 0, obj)


def _suite_drinfeld(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    if cfg.input_path:
        groupoid, J, Q, R = load_twist_pair(cfg.input_path)
        if len(groupoid.objects) != 1:
            raise SchemaError("groupoid: a Drinfeld twist lives on a one-object groupoid")
        if R is None:
            raise SchemaError("R: the operator to twist is required")
        pair = StaticTwistPair(_dense_at_single_object(J, 2), _dense_at_single_object(Q, 3))
        return check_drinfeld(_dense_at_single_object(R, 2), pair, tol=cfg.tolerance), 0

    rng = np.random.default_rng(cfg.seed)
    R, pair = factorized_twist_example(rng)
    checks = check_drinfeld(R, pair, tol=cfg.tolerance)

    r8v = build_r8v(params)(0.37)
    bad = counterexample_twist(rng)
    rejected = max(c.residual for c in check_drinfeld(_dense_at_single_object(r8v, 2), bad, tol=cfg.tolerance))
    checks.append(
        CheckResult(
            name="rejects-non-twist",
            residual=0.0 if rejected >= 1e-6 else 1.0,
            tol=cfg.tolerance,
            detail={"non_twist_residual": rejected},
        )
    )
    J, J12_3, J1_23 = coboundary_twist_example(rng)
    checks.append(CheckResult(name="cocycle", residual=cocycle_check(J, J12_3, J1_23), tol=cfg.tolerance))
    return checks, 0


def _suite_dyn_twist(cfg: SuiteConfig, params: ModelParams) -> SuiteResult:
    if cfg.input_path:
        groupoid, J, Q, R = load_twist_pair(cfg.input_path)
        if R is None:
            raise SchemaError("R: the operator to twist is required")
        return check_dynamical_twist(R, J, Q, tol=cfg.tolerance), 0

    sos = build_rsos(params)
    V = sos.space
    J = identity_block([V, V])
    Q = identity_block([V, V, V])
    return _sweep(cfg, lambda z: check_dynamical_twist(sos(z), J, Q, tol=cfg.tolerance), arity=1)


def factorized_twist_example(rng: np.random.Generator) -> Tuple[np.ndarray, StaticTwistPair]:
    """R = P with J = A (x) B and Q = A^-1 B (x) 1 (x) B^-1 A."""
    A = np.eye(2) * 2 + rng.normal(size=(2, 2)) * 0.3
    B = np.eye(2) * 2 + rng.normal(size=(2, 2)) * 0.3
    P = np.eye(4)[[0, 2, 1, 3]]
    Q = np.kron(np.kron(linalg.inv(A) @ B, np.eye(2)), linalg.inv(B) @ A)
    return P, StaticTwistPair(np.kron(A, B), Q)


def counterexample_twist(rng: np.random.Generator) -> StaticTwistPair:
    J = np.eye(4) * 2 + rng.normal(size=(4, 4))
    return StaticTwistPair(J, np.kron(J, np.eye(2)))


def coboundary_twist_example(rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """J = Delta(u)(u^-1 (x) u^-1) for u = 1 + c s + d r in the group algebra of S3 on its 2d irrep.

    Returns J with its images under Delta (x) id and id (x) Delta.
    """
    c, d = rng.uniform(0.1, 0.3, size=2)
    I = np.eye(2)
    s = np.diag([1.0, -1.0])
    r = np.array([[-0.5, -np.sqrt(3) / 2], [np.sqrt(3) / 2, -0.5]])
    u_inv = linalg.inv(I + c * s + d * r)
    U2 = np.kron(I, I) + c * np.kron(s, s) + d * np.kron(r, r)
    U3 = np.kron(np.kron(I, I), I) + c * np.kron(np.kron(s, s), s) + d * np.kron(np.kron(r, r), r)
    U2_inv = linalg.inv(U2)
    J = U2 @ np.kron(u_inv, u_inv)
    return J, U3 @ np.kron(U2_inv, u_inv), U3 @ np.kron(u_inv, U2_inv)


SUITES: Dict[str, Callable[[SuiteConfig, ModelParams], SuiteResult]] = {
    "dybe": _suite_dybe,
    "ybe": _suite_ybe,
    "inversion": _suite_inversion,
    "symmetric": _suite_symmetric,
    "rcc": _suite_rcc,
    "rdd": _suite_rdd,
    "trace": _suite_trace,
    "weight-zero": _suite_weight_zero,
    "twist-unique": _suite_twist_unique,
    "twist-quasi": _suite_twist_quasi,
    "cell": _suite_cell,
    "drinfeld": _suite_drinfeld,
    "dyn-twist": _suite_dyn_twist,
}


def run_suite(cfg: SuiteConfig) -> ResidualReport:
    """Run one named suite and return (and optionally write) its residual report."""
    runner = SUITES.get(cfg.suite)
    if runner is None:
        raise DomainError(f"unknown suite {cfg.suite!r}")
    params = cfg.params or default_params(cfg.model)

    logger.info(f"Running suite {cfg.suite} ({cfg.samples} samples, seed {cfg.seed})")
    start = time.perf_counter()
    checks, resamples = runner(cfg, params)
    report = ResidualReport(suite=cfg.suite, samples=cfg.samples, resamples=resamples)
    for check in checks:
        report.add(check)
        logger.info(f"{check.name}: {check.residual:.3e} ({'pass' if check.passed else 'FAIL'})")
    report.wall_time = time.perf_counter() - start

    if cfg.out:
        with open(cfg.out, "w") as fh:
            json.dump(report.to_json_dict(), fh, indent=2)
    logger.info(f"Suite {cfg.suite} {'passed' if report.passed else 'failed'} in {report.wall_time:.2f}s")
    return report


# Export and special-function evaluation


def export_fiber(params: ModelParams, obj: str, z: complex) -> dict:
    """Source-fiber matrix of R(z) at ``obj`` in the documented basis order."""
    R = build_model(params)
    V = R.space
    fiber = fiber_basis([V, V], obj)
    if not fiber.paths:
        raise DomainError(f"no two-step paths leave {obj!r}")
    M = fiber_matrix(R(z), [V, V], 0, obj)
    return {
        "model": params.variant.value,
        "object": obj,
        "z": [z.real, z.imag],
        "paths": [list(p) for p in fiber.paths],
        "matrix": [[[v.real, v.imag] for v in row] for row in M],
    }


THETA_KINDS = ("H", "Theta", "h", "theta", "bracket", "trig", "phi")


def theta_eval(kind: str, z: complex, params: ModelParams) -> complex:
    ell, theta = params.elliptic, params.theta
    table = {
        "H": lambda: jacobi_H(z, ell),
        "Theta": lambda: jacobi_Theta(z, ell),
        "h": lambda: h(z, ell),
        "theta": lambda: theta_odd(z, theta),
        "bracket": lambda: bracket(z, theta),
        "trig": lambda: trig_bracket(z, params.scale),
        "phi": lambda: euler_phi(z),
    }
    if kind not in table:
        raise DomainError(f"unknown function {kind!r}; expected one of {', '.join(THETA_KINDS)}")
    return complex(table[kind]())
