"""Spectral operator families and the Yang-Baxter checkers."""

import numpy as np
import pytest

from dynbaxter.elliptic import h
from dynbaxter.exceptions import PoleProximity, UnsupportedDimension
from dynbaxter.graded import GradedSpace, fiber_matrix, identity_block, max_difference
from dynbaxter.groupoid import restricted_chain
from dynbaxter.models import CheckResult, ModelParams, ModelVariant, ThetaParams
from dynbaxter.rmodels import (
    SpectralOperator,
    build_elliptic_A,
    build_r8v,
    build_rsos,
    build_trig_A,
    check_bases,
    check_dybe,
    check_inversion,
    check_symmetric,
    check_ybe,
    sample_points,
    sweep,
    sweep_many,
    transpose_blocks,
    transpose_op,
)

MODELS = ["8v", "sos", "sym-sos", "ell-a", "trig-a"]


@pytest.mark.parametrize("variant", MODELS)
def test_identity_at_zero(model_for, variant):
    """Every family is normalized to R(0) = id."""
    R = model_for(variant)
    assert max_difference(R(0).pruned(), identity_block(R.domain)) < 1e-12


@pytest.mark.parametrize("variant", MODELS)
def test_inversion(model_for, variant):
    R = model_for(variant)
    for z in sample_points(seed=3, count=4, arity=1)[:, 0]:
        result = check_inversion(R, z)
        assert result.passed, f"{variant}: {result.residual:.3e}"


@pytest.mark.parametrize("variant", MODELS)
def test_dynamical_ybe(model_for, variant, points):
    R = model_for(variant)
    for z, w in points:
        result = check_dybe(R, z, w)
        assert result.passed, f"{variant}: {result.residual:.3e} at base {result.detail['base']}"
    print(f"✅ dynamical YBE holds for {variant}")


def test_boundary_fibers_are_checked():
    """The restricted chain is untruncated, so its end objects are checked too."""
    R = build_trig_A(ModelParams(variant=ModelVariant.TRIG_A, theta=ThetaParams(L=4), restricted=True))
    assert check_bases(R.space) == ["1", "2", "3", "4", "5"]
    M = fiber_matrix(R(0.3), [R.space, R.space], 0, "1")
    assert M.shape == (2, 2)
    assert abs(M[1, 0]) < 1e-15 and abs(M[0, 1]) < 1e-15


def test_eight_vertex_pattern_and_ybe(params_for, points):
    R = build_r8v(params_for("8v"))
    M = fiber_matrix(R(0.4), [R.space, R.space], 0, "v")
    assert M[0, 1] == 0 and M[1, 0] == 0
    assert abs(M[0, 0] - M[3, 3]) < 1e-15 and abs(M[0, 3] - M[3, 0]) < 1e-15
    assert abs(M[1, 2] - M[2, 1]) < 1e-15
    for z, w in points:
        assert check_ybe(R, z, w).passed


def test_symmetry_of_tables(model_for):
    """The eight-vertex and symmetric SOS tables are symmetric; plain SOS is not."""
    z = 0.35 + 0.05j
    assert check_symmetric(model_for("8v"), z).residual == 0.0
    assert check_symmetric(model_for("sym-sos"), z).residual == 0.0
    assert not check_symmetric(model_for("sos"), z).passed


def test_transpose_op_is_an_involution(model_for):
    R = model_for("sos")
    z = 0.2 - 0.1j
    twice = transpose_blocks(transpose_blocks(R(z)))
    assert max_difference(twice, R(z)) == 0.0
    assert transpose_op(R).name == "Rsos^T"


def test_transpose_needs_one_dimensional_components():
    G = restricted_chain(3)
    V = GradedSpace(G, {a: 2 for a in G.steps()}, "W")
    with pytest.raises(UnsupportedDimension):
        transpose_blocks(identity_block([V, V]))


def test_pole_guard(params_for):
    R = build_r8v(params_for("8v"))
    with pytest.raises(PoleProximity):
        R(-1)


def test_face_window_needs_positive_brackets():
    """A window reaching an object with [a] = 0 is rejected."""
    params = ModelParams(variant=ModelVariant.ELLIPTIC_A, theta=ThetaParams(L=6), shift=0.0, window=3, center=3)
    with pytest.raises(PoleProximity):
        build_elliptic_A(params)


def test_sos_uses_base_position(sos_params):
    """The dynamical variable is the position k + xi of the base object."""
    R = build_rsos(sos_params)
    G = R.groupoid
    assert G.position("0") == pytest.approx(sos_params.xi)
    assert R.name == "Rsos"


def test_sos_off_diagonal_entries(sos_params):
    """At base a the -+ -> +- entry is h(a+1)h(z)/(h(a)h(z+1)) and +- -> -+ is h(a-1)h(z)/(h(a)h(z+1))."""
    R = build_rsos(sos_params)
    V = R.space
    ell = sos_params.elliptic
    a, z = sos_params.xi, 0.3 + 0.1j
    M = fiber_matrix(R(z), [V, V], 0, "0")
    den = h(a, ell) * h(z + 1, ell)
    assert M[1, 2] == pytest.approx(h(a + 1, ell) * h(z, ell) / den, rel=1e-12)
    assert M[2, 1] == pytest.approx(h(a - 1, ell) * h(z, ell) / den, rel=1e-12)
    assert M[1, 1] == pytest.approx(h(a - z, ell) * h(1, ell) / den, rel=1e-12)


def test_sos_window_doubling_keeps_blocks():
    """Widening the window only adds blocks; the shared ones keep their values."""
    z = 0.35 - 0.05j
    small = build_rsos(ModelParams(variant=ModelVariant.SOS, window=4))(z)
    wide = build_rsos(ModelParams(variant=ModelVariant.SOS, window=8))(z)
    assert len(wide.blocks) > len(small.blocks)
    for key, mat in small.blocks.items():
        assert key in wide.blocks
        assert np.allclose(wide.blocks[key], mat, rtol=1e-14, atol=0)


def test_elliptic_face_weights_tend_to_trigonometric():
    """The restricted face weights are homogeneous of degree zero in brackets, so they converge as Im(tau) grows."""
    z = 0.3 + 0.1j
    trig = build_trig_A(ModelParams(variant=ModelVariant.TRIG_A, theta=ThetaParams(L=4), restricted=True))(z)

    def gap(im: float) -> float:
        params = ModelParams(variant=ModelVariant.ELLIPTIC_A, theta=ThetaParams(tau=im * 1j, L=4), restricted=True)
        return max_difference(build_elliptic_A(params)(z), trig)

    assert gap(4.0) < 1e-8 < gap(1.2)
    assert gap(2.0) < gap(1.2)


def test_sample_points_are_seeded():
    a = sample_points(seed=11, count=5)
    b = sample_points(seed=11, count=5)
    assert a.shape == (5, 2)
    assert np.array_equal(a, b)
    assert (a.real >= 0.05).all() and (a.real <= 0.95).all()
    assert (np.abs(a.imag) <= 0.2).all()


def test_sweep_keeps_worst_and_is_deterministic(model_for):
    R = model_for("trig-a")
    first, resamples = sweep(lambda z, w: check_dybe(R, z, w), samples=3, seed=5)
    second, _ = sweep(lambda z, w: check_dybe(R, z, w), samples=3, seed=5)
    assert resamples == 0
    assert first.residual == second.residual
    assert first.detail["point"] == second.detail["point"]


def test_sweep_resamples_then_gives_up():
    calls = []

    def flaky(z):
        calls.append(z)
        if len(calls) < 3:
            raise PoleProximity("near a pole")
        return [CheckResult(name="ok", residual=0.0, tol=1.0)]

    results, resamples = sweep_many(flaky, samples=1, arity=1)
    assert resamples == 2 and results[0].passed

    def always(z):
        raise PoleProximity("near a pole")

    with pytest.raises(PoleProximity):
        sweep_many(always, samples=1, arity=1, max_resamples=4)


def test_spectral_operator_rejects_non_finite_values(model_for):
    R = model_for("trig-a")
    broken = SpectralOperator(lambda z: R(z).pruned() if z != 0.5 else _nan_like(R(z)), R.domain, name="broken")
    with pytest.raises(PoleProximity):
        broken(0.5)


def _nan_like(op):
    blocks = {k: m * np.nan for k, m in op.blocks.items()}
    return type(op)(op.domain, op.codomain, blocks, validate=False)
