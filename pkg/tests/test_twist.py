"""Cell systems, connecting-system twists, gauge transforms and Drinfeld twists."""

import math

import numpy as np
import pytest
from scipy import linalg

from dynbaxter.exceptions import DomainError, GroupoidError, NoConsistentAssignment, NotInvertible, SchemaError
from dynbaxter.graded import BlockOperator, fiber_matrix, identity_block
from dynbaxter.groupoid import ConnectingSet, graph_groupoid, one_point_groupoid
from dynbaxter.intertwine import check_weight_zero
from dynbaxter.models import CellDataSchema, ModelParams, ModelVariant, ThetaParams
from dynbaxter.rmodels import build_elliptic_A, build_trig_A, check_dybe, constant_operator, step_space
from dynbaxter.suites import coboundary_twist_example, counterexample_twist, factorized_twist_example
from dynbaxter.twist import (
    CellData,
    SignSearch,
    StaticTwistPair,
    TwistWitness,
    build_AD_cells,
    build_E6_cells,
    cells_from_schema,
    check_cell_twist,
    check_drinfeld,
    check_dynamical_twist,
    check_quasi_unique_twist,
    check_unique_twist,
    cocycle_check,
    gauge_cells,
    gauge_transform,
    point_witness,
    resolve_signs,
    twist_r2,
    twisted_intertwiner,
)

Z = 0.3 + 0.05j
W = 0.55 - 0.1j
FORK = ("3A", "2A", "4D", "2D")


def face_operator(cell: CellData, L: int):
    params = ModelParams(variant=ModelVariant.ELLIPTIC_A, theta=ThetaParams(tau=1.2j, L=L), restricted=True)
    return build_elliptic_A(params, groupoid=cell.left.carrier)


@pytest.fixture(scope="module")
def ad4():
    cell = build_AD_cells(4)
    return cell, face_operator(cell, 4)


def test_ad_cell_twist(ad4):
    """The A5 -> D4 cells solve the cell equations for the elliptic face model."""
    cell, R1 = ad4
    for result in check_cell_twist(cell, R1, Z, tol=1e-8):
        assert result.passed, f"{result.name}: {result.residual:.3e}"
    print("✅ A5 -> D4 cell twist equations hold")


def test_twisted_operator_on_d4_satisfies_dybe(ad4):
    cell, R1 = ad4
    R2 = TwistWitness.from_cells(cell).r2(R1)
    assert [s.name for s in R2.domain] == ["VD", "VD"]
    result = check_dybe(R2, Z, W, tol=1e-8)
    assert result.passed, f"{result.residual:.3e}"


def test_cell_twist_implies_weight_zero(ad4):
    cell, R1 = ad4
    R2 = TwistWitness.from_cells(cell).r2(R1)
    C = twisted_intertwiner(cell)
    results = check_weight_zero(C, R1, R2, Z, tol=1e-8)
    assert [r.name for r in results] == ["weight-zero", "ice-rule", "trace-ice-rule", "target-fiber-compatibility"]
    for result in results:
        assert result.passed, f"{result.name}: {result.residual:.3e}"


def test_quasi_unique_twist(ad4):
    cell, R1 = ad4
    witness = TwistWitness.from_cells(cell)
    results = check_quasi_unique_twist(witness, R1, Z, W, tol=1e-8)
    names = [r.name for r in results]
    assert "factorization-4" in names and "quasi-ice-rule-3" in names
    assert "quasi-ice-rule-5" in names and "factorization-5" in names
    for result in results:
        assert result.passed, f"{result.name}: {result.residual:.3e}"
    with pytest.raises(GroupoidError):
        check_unique_twist(witness, R1, Z, W)


def test_quasi_unique_rejects_general_systems():
    left = graph_groupoid([("a", "b")])
    right = graph_groupoid([("x", "y")])
    cset = ConnectingSet(
        [("a=>x", "a", "x"), ("a=>y", "a", "y"), ("b=>x", "b", "x"), ("b=>y", "b", "y")], left, right
    )
    values = {(a1, a2, e1, e2): 0.5 for a1, a2 in (("a", "b"), ("b", "a")) for e1, e2 in (("x", "y"), ("y", "x"))}
    cell = CellData(cset, step_space(left), step_space(right), values, inverse_values=values, name="general")
    witness = TwistWitness.from_cells(cell)
    R1 = constant_operator(identity_block([cell.left, cell.left]))
    with pytest.raises(GroupoidError):
        check_quasi_unique_twist(witness, R1, Z, W)


def test_larger_fold_is_invertible():
    cell = build_AD_cells(5)
    assert len(cell.connecting.left.objects) == 7
    R1 = face_operator(cell, 5)
    inverse = check_cell_twist(cell, R1, Z)[0]
    assert inverse.name == "cell-inverse" and inverse.residual < 1e-10
    with pytest.raises(DomainError):
        build_AD_cells(3)


def test_resolve_flipped_fork_sign(ad4):
    """A wrong sign on a flagged fork square is found and corrected."""
    cell, R1 = ad4
    wrong = cell.with_signs([])
    wrong.values[FORK] = -wrong.values[FORK]
    wrong.flagged = [FORK]
    resolved = resolve_signs(wrong, R1, Z)
    assert resolved.resolution["flips"] == [True]
    assert resolved.resolution["deviation"] < 1e-8
    assert not resolved.resolution["ambiguous"]
    assert resolved.values[FORK] == pytest.approx(-1 / math.sqrt(2))


def test_resolving_a_resolved_cell_changes_nothing(ad4):
    cell, R1 = ad4
    wrong = cell.with_signs([])
    wrong.values[FORK] = -wrong.values[FORK]
    wrong.flagged = [FORK]
    once = resolve_signs(wrong, R1, Z)
    twice = resolve_signs(once, R1, Z)
    assert twice.resolution["flips"] == [False]
    assert twice.values == once.values
    assert twice.resolution["deviation"] == pytest.approx(once.resolution["deviation"], abs=1e-15)


def test_sign_search_reports_its_table(ad4):
    cell, R1 = ad4
    broken = cell.with_signs([])
    key = ("3A", "2A", "3D", "2D")
    broken.values[key] = 2 * broken.values[key]
    broken.flagged = [key]
    with pytest.raises(NoConsistentAssignment) as err:
        SignSearch(R1, Z).resolve(broken)
    assert len(err.value.table) == 2
    assert all(row["deviation"] > 1e-8 for row in err.value.table)


def test_e6_sign_search_is_exhaustive():
    """The three flagged E6 entries give an 8-row search table either way."""
    cell = build_E6_cells()
    assert len(cell.flagged) == 3
    R1 = build_trig_A(ModelParams(variant=ModelVariant.TRIG_A, g=12, restricted=True), groupoid=cell.left.carrier)
    try:
        resolved = resolve_signs(cell, R1, Z)
    except NoConsistentAssignment as e:
        table = e.table
    else:
        table = resolved.resolution["table"]
        assert resolved.resolution["deviation"] < 1e-8
    assert len(table) == 8
    assert [row["deviation"] for row in table] == sorted(row["deviation"] for row in table)


def test_cell_schema(ad4):
    cell, _ = ad4
    schema = cell.to_schema(family="ad", level=4)
    again = cells_from_schema(CellDataSchema.model_validate(schema.model_dump()))
    assert again.values == cell.values
    with pytest.raises(SchemaError):
        cells_from_schema(CellDataSchema(family="b2", cells=[]))
    bad = CellDataSchema(family="ad", level=4, cells=[{"a1": "1A", "a2": "3A", "e1": "1D", "e2": "2D", "value": (1, 0)}])
    with pytest.raises(SchemaError) as err:
        cells_from_schema(bad)
    assert "cells[0]" in str(err.value)


def test_gauge_twist_preserves_dybe():
    R1 = build_trig_A(ModelParams(variant=ModelVariant.TRIG_A, theta=ThetaParams(L=5), restricted=True))
    rng = np.random.default_rng(3)
    scalars = {a: complex(rng.uniform(0.5, 2), rng.uniform(-0.5, 0.5)) for a in R1.space.dims}
    R2 = gauge_transform(scalars, R1)
    assert check_dybe(R2, Z, W, tol=1e-11).passed

    witness = TwistWitness.from_cells(gauge_cells(scalars, R1.space))
    for result in check_unique_twist(witness, R1, Z, W, tol=1e-10):
        assert result.passed, f"{result.name}: {result.residual:.3e}"

    Rz, R2z = R1(Z), R2(Z)
    for (p, q), mat in Rz.blocks.items():
        factor = scalars[p[0]] * scalars[p[1]] / (scalars[q[0]] * scalars[q[1]])
        assert abs(R2z.scalar(p, q) - mat[0, 0] * factor) < 1e-12


def test_gauge_rejects_zero_scalar():
    R1 = build_trig_A(ModelParams(variant=ModelVariant.TRIG_A, theta=ThetaParams(L=4), restricted=True))
    with pytest.raises(DomainError):
        gauge_cells({"1+": 0.0}, R1.space)


def test_twist_r2_needs_backward_operator(ad4):
    cell, R1 = ad4
    with pytest.raises(GroupoidError):
        twist_r2(cell.forward(), R1, cell.system())


def test_drinfeld_factorized_example():
    """R = P twisted by J = A (x) B passes; a random non-twist fails."""
    rng = np.random.default_rng(0)
    R, pair = factorized_twist_example(rng)
    for result in check_drinfeld(R, pair, tol=1e-10):
        assert result.passed, f"{result.name}: {result.residual:.3e}"
    bad = counterexample_twist(rng)
    assert max(r.residual for r in check_drinfeld(R, bad)) > 1e-6


def test_drinfeld_input_validation():
    with pytest.raises(NotInvertible):
        StaticTwistPair(np.zeros((4, 4)), np.eye(8))
    pair = StaticTwistPair(np.eye(4), np.eye(8))
    with pytest.raises(DomainError):
        check_drinfeld(np.eye(9), pair)


def test_cocycle_check_on_coboundary():
    assert cocycle_check(np.eye(4), np.eye(8), np.eye(8)) == 0.0
    J, J12_3, J1_23 = coboundary_twist_example(np.random.default_rng(5))
    assert cocycle_check(J, J12_3, J1_23) < 1e-12


def test_cocycle_check_rejects_group_like_square():
    """J = A (x) A with group-like images fails: A^2 (x) A^2 (x) A against A (x) A^2 (x) A^2."""
    A = np.array([[2.0, 1.0], [0.0, 1.0]])
    J = np.kron(A, A)
    AAA = np.kron(np.kron(A, A), A)
    assert cocycle_check(J, AAA, AAA) > 1.0


def test_point_witness_matches_drinfeld():
    """On one object the connecting-system twist reduces to the Drinfeld twist."""
    rng = np.random.default_rng(4)
    R, pair = factorized_twist_example(rng)
    V = step_space(one_point_groupoid(), "V")
    R1 = constant_operator(BlockOperator.from_fiber_matrix(R, [V, V], [V, V], "v"), name="P")
    witness = point_witness(pair.J, linalg.inv(pair.Q), V)
    for result in check_unique_twist(witness, R1, Z, W, tol=1e-10):
        assert result.passed, f"{result.name}: {result.residual:.3e}"
    R2 = witness.r2(R1)(Z)
    expected = linalg.solve(pair.J, R @ pair.J)
    assert np.allclose(fiber_matrix(R2, [V, V], 0, "v"), expected)


def test_dynamical_identity_twist(model_for):
    R = model_for("sos")
    V = R.space
    results = check_dynamical_twist(R(Z), identity_block([V, V]), identity_block([V, V, V]))
    assert [r.name for r in results] == ["dynamical-definition", "dynamical-12", "dynamical-23"]
    assert all(r.residual < 1e-14 for r in results)
