"""Graded spaces, block operators, transfer operators and row transfer matrices."""

from dataclasses import replace

import numpy as np
import pytest

from dynbaxter.exceptions import GradingError, NotInvertible, SchemaError, UnsupportedDimension
from dynbaxter.graded import (
    BlockOperator,
    ConvolutionElement,
    GradedSpace,
    TransferOperator,
    add_blocks,
    closed_paths,
    compose_blocks,
    convolve,
    enumerate_paths,
    fiber_basis,
    fiber_matrix,
    fuse_power,
    graded_tensor,
    identity_block,
    matrix_element,
    max_difference,
    module_act,
    partial_trace,
    restrict_source_fiber,
    tensor_blocks,
    transfer_compose,
    transfer_fuse,
    transfer_identity_residual,
    transfer_matrix,
    triangle_down,
    triangle_up,
)
from dynbaxter.groupoid import ConnectingSet, ConnectingSystem, action_groupoid_window, one_point_groupoid, restricted_chain
from dynbaxter.models import BlockOperatorSchema, ModelParams, ModelVariant, ThetaParams, TransferKind
from dynbaxter.rmodels import build_trig_A, step_space
from dynbaxter.twist import build_AD_cells, gauge_cells, transfer_difference, twisted_intertwiner


@pytest.fixture
def trig():
    return build_trig_A(ModelParams(variant=ModelVariant.TRIG_A, theta=ThetaParams(L=4), restricted=True))


@pytest.fixture
def chain_space(trig):
    return trig.space


def test_fiber_order_and_boundary(chain_space):
    """Two-step fibers are ordered ++, +-, -+, --; the boundary fiber has two paths."""
    V = chain_space
    fiber = fiber_basis([V, V], "3")
    assert fiber.paths == [("3+", "4+"), ("3+", "4-"), ("3-", "2+"), ("3-", "2-")]
    assert fiber.size == 4
    assert fiber_basis([V, V], "1").paths == [("1+", "2+"), ("1+", "2-")]
    assert fiber_basis([V, V], "5").paths == [("5-", "4+"), ("5-", "4-")]


def test_graded_tensor_groups_by_endpoints(chain_space):
    summands = graded_tensor(chain_space, chain_space)
    assert summands[("3", "3")] == [("3+", "4-"), ("3-", "2+")]
    assert summands[("1", "3")] == [("1+", "2+")]


def test_block_validation(chain_space):
    V = chain_space
    with pytest.raises(GradingError):
        BlockOperator([V, V], [V, V], {(("1+", "3+"), ("1+", "3+")): np.eye(1)})
    with pytest.raises(GradingError):
        BlockOperator([V, V], [V, V], {(("3+", "4-"), ("3+", "4+")): np.eye(1)})
    with pytest.raises(GradingError):
        BlockOperator([V, V], [V, V], {(("3+", "4-"), ("3-", "2+")): np.eye(2)})


def test_identity_fiber_matrix(chain_space):
    V = chain_space
    ident = identity_block([V, V, V])
    for base in V.start_objects():
        M = fiber_matrix(ident, [V, V, V], 0, base)
        assert np.array_equal(M, np.eye(M.shape[0]))


def test_tensor_matches_offset_action(trig, chain_space):
    """id (x) R acts like R on legs two and three."""
    V = chain_space
    Rz = trig(0.3 + 0.1j)
    lifted = tensor_blocks(identity_block([V]), Rz)
    for base in V.start_objects():
        legs = [V, V, V]
        assert np.allclose(fiber_matrix(lifted, legs, 0, base), fiber_matrix(Rz, legs, 1, base))


def test_compose_and_difference(trig):
    Rz = trig(0.25)
    assert max_difference(compose_blocks(identity_block(Rz.domain), Rz), Rz) < 1e-15
    with pytest.raises(GradingError):
        compose_blocks(Rz, identity_block([Rz.domain[0]]))


def test_from_fiber_matrices_rebuilds_operator(trig, chain_space):
    V = chain_space
    Rz = trig(0.4 - 0.1j)
    matrices = {base: fiber_matrix(Rz, [V, V], 0, base) for base in V.start_objects()}
    rebuilt = BlockOperator.from_fiber_matrices(matrices, [V, V], [V, V])
    assert max_difference(rebuilt, Rz) < 1e-15


def test_schema_error_names_block(chain_space):
    """A malformed block is reported with its index."""
    schema = BlockOperatorSchema(
        domain=["VA", "VA"],
        codomain=["VA", "VA"],
        blocks=[
            {"in": ["3+", "4+"], "out": ["3+", "4+"], "mat": [[[1.0, 0.0]]]},
            {"in": ["3+", "4-"], "out": ["3+", "4+"], "mat": [[[1.0, 0.0]]]},
        ],
    )
    with pytest.raises(SchemaError) as err:
        BlockOperator.from_schema(schema, {"VA": chain_space})
    assert "blocks[1]" in str(err.value)
    with pytest.raises(SchemaError):
        BlockOperator.from_schema(schema, {})


def test_transfer_inverse_of_gauge_cells():
    """The gradewise inverse of a gauge square table is the table of inverse scalars."""
    V = step_space(action_groupoid_window(0.5, 2), "V")
    scalars = {a: 1.5 + 0.5j * i for i, a in enumerate(sorted(V.dims))}
    cell = gauge_cells(scalars, V)
    assert transfer_difference(cell.forward().inverse(), cell.backward()) < 1e-12
    assert transfer_difference(cell.forward().left_inverse(), cell.backward()) < 1e-12


def test_fuse_power_grows_legs():
    cell = build_AD_cells(4)
    q = fuse_power(cell.forward(), 3)
    assert [s.name for s in q.in_spaces] == ["VA"] * 3
    assert [s.name for s in q.out_spaces] == ["VD"] * 3
    with pytest.raises(GradingError):
        fuse_power(cell.forward(), 0)


def test_singular_grade_is_reported():
    cell = build_AD_cells(4)
    bad = cell.with_signs([])
    key = ("3A", "2A", "4D", "2D")
    bad.values[key] = bad.values[("3A", "2A", "3D", "2D")]
    with pytest.raises(NotInvertible):
        bad.forward().inverse()


def test_convolution_with_unit():
    G = action_groupoid_window(0.0, 2)
    unit = ConvolutionElement.unit(G)
    f = ConvolutionElement(G, {"0+": {((), ()): np.array([[2.0]])}})
    g = ConvolutionElement(G, {"1-": {((), ()): np.array([[3.0]])}})
    assert convolve(unit, f).difference(f) < 1e-15
    loop = convolve(g, f)
    assert list(loop.entries) == ["1_0"]
    assert loop.entries["1_0"][((), ())][0, 0] == 6.0


def test_partial_trace_of_identity():
    V = step_space(one_point_groupoid(), "V")
    traced = partial_trace(identity_block([V, V]))
    assert sorted(traced.entries) == ["+", "-"]
    assert traced.entries["+"][(("+",), ("+",))][0, 0] == 1.0


def test_transfer_matrix_of_identity_is_a_rotation(trig, chain_space):
    """At z = 0 the row transfer matrix cyclically shifts closed paths."""
    n = 4
    T = transfer_matrix(trig(0), n)
    assert T.row_paths == closed_paths(chain_space, n)
    M = T.matrix
    assert np.allclose(np.sort(np.abs(M), axis=0)[-1], 1.0)
    power = T
    for _ in range(n - 1):
        power = power @ T
    assert np.allclose(power.matrix, np.eye(M.shape[0]))


def test_transfer_matrix_needs_one_dimensional_components():
    G = restricted_chain(3)
    V = GradedSpace(G, {"1+": 2, "2-": 1, "2+": 1, "3-": 1}, "W")
    with pytest.raises(UnsupportedDimension):
        transfer_matrix(identity_block([V, V]), 2)
    with pytest.raises(GradingError):
        transfer_matrix(identity_block([V, V]), 0)


def test_enumerate_paths_respects_grading():
    G = restricted_chain(3)
    V = GradedSpace(G, {"1+": 2, "2-": 1, "2+": 1, "3-": 1}, "W")
    assert enumerate_paths([V, V], "1") == [("1+", "2+"), ("1+", "2-")]
    assert fiber_basis([V, V], "1").size == 4


def test_triangle_round_trip(trig):
    """Lifting an operator onto the identity connecting system and reading it back changes nothing."""
    Rz = trig(0.35 - 0.05j)
    connecting = ConnectingSet.identity(trig.groupoid)
    tri = triangle_up(Rz, connecting)
    assert all(b1 == b2 for b1, b2 in tri.entries)
    assert max_difference(triangle_down(tri, ConnectingSystem.natural(connecting)), Rz) == 0.0


def test_matrix_element_recovers_cells():
    cell = build_AD_cells(4)
    C = twisted_intertwiner(cell)
    forward = matrix_element(C(0.0), C.Vpi)
    assert forward.kind == TransferKind.FORWARD
    assert transfer_difference(forward, cell.forward()) == 0.0
    assert forward.is_invertible()
    with pytest.raises(GradingError):
        matrix_element(C(0.0), C.Vpi, shape="hexagon")


def test_restrict_source_fiber(trig, chain_space):
    Rz = trig(0.2)
    assert np.array_equal(restrict_source_fiber(Rz, "3"), fiber_matrix(Rz, [chain_space, chain_space], 0, "3"))
    C = twisted_intertwiner(build_AD_cells(4))
    with pytest.raises(GradingError):
        restrict_source_fiber(C(0.0), "1A")


def test_add_blocks_and_module_action(trig):
    Rz = trig(0.3)
    assert add_blocks(Rz, Rz, scale=-1).max_abs() == 0.0

    G = action_groupoid_window(0.0, 2)
    unit = ConvolutionElement.unit(G)
    l = ConvolutionElement(G, {"0+": {((), ()): np.array([[2.0]])}})
    assert module_act(unit, l, G.try_compose).difference(l) == 0.0


def _add(first: TransferOperator, second: TransferOperator) -> TransferOperator:
    entries = {}
    for op in (first, second):
        for key, blocks in op.entries.items():
            target = entries.setdefault(key, {})
            for bkey, mat in blocks.items():
                target[bkey] = target.get(bkey, 0) + mat
    return TransferOperator(first.kind, entries, first.connecting, first.in_spaces, first.out_spaces, validate=False)


def test_fuse_and_compose_distribute_over_sums():
    cell = build_AD_cells(4)
    rng = np.random.default_rng(7)
    other = replace(
        cell,
        values={k: complex(rng.normal(), rng.normal()) for k in cell.values},
        flagged=[],
        inverse_values=None,
    )
    total = replace(other, values={k: cell.values[k] + other.values[k] for k in cell.values})
    f, g, h = cell.forward(), other.forward(), total.forward()
    assert transfer_difference(_add(f, g), h) < 1e-14

    fixed = cell.forward()
    lower = _add(transfer_fuse(f, fixed), transfer_fuse(g, fixed))
    assert transfer_difference(transfer_fuse(h, fixed), lower) < 1e-12
    upper = _add(transfer_fuse(fixed, f), transfer_fuse(fixed, g))
    assert transfer_difference(transfer_fuse(fixed, h), upper) < 1e-12

    back = cell.backward()
    after = _add(transfer_compose(back, f), transfer_compose(back, g))
    assert transfer_difference(transfer_compose(back, h), after) < 1e-12
    before = _add(transfer_compose(f, back), transfer_compose(g, back))
    assert transfer_difference(transfer_compose(h, back), before) < 1e-12


def test_fusion_interchanges_with_composition():
    """(F *x F) *o (B *x B) = (F *o B) *x (F *o B), which is the identity when B inverts F."""
    cell = build_AD_cells(4)
    forward = cell.forward()
    backward = forward.inverse()
    cset = cell.connecting
    single = transfer_compose(forward, backward)
    assert transfer_identity_residual(single, []) < 1e-10

    fused = transfer_compose(fuse_power(forward, 2), fuse_power(backward, 2))
    legs = [cell.right, cell.right]
    support = [(beta, path) for beta in sorted(cset.arrows) for path in enumerate_paths(legs, cset.target(beta))]
    assert support
    assert transfer_identity_residual(fused, support) < 1e-10
