"""Shared fixtures for the dynbaxter test suite."""

import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from dynbaxter.models import EllipticParams, ModelParams, ModelVariant, ThetaParams
from dynbaxter.rmodels import build_model, sample_points


@pytest.fixture
def elliptic():
    return EllipticParams(p=0.05)


@pytest.fixture
def theta():
    return ThetaParams(tau=1.2j, L=4)


@pytest.fixture
def sos_params():
    return ModelParams(variant=ModelVariant.SOS)


@pytest.fixture
def params_for():
    """Factory for the five model families at the acceptance parameters."""

    def make(variant: str) -> ModelParams:
        variant = ModelVariant(variant)
        if variant == ModelVariant.ELLIPTIC_A:
            return ModelParams(
                variant=variant,
                theta=ThetaParams(tau=1.2j, L=6),
                restricted=False,
                shift=0.39,
                center=5,
                window=3,
            )
        if variant == ModelVariant.TRIG_A:
            return ModelParams(variant=variant, theta=ThetaParams(L=6), restricted=True)
        return ModelParams(variant=variant)

    return make


@pytest.fixture
def model_for(params_for):
    return lambda variant: build_model(params_for(variant))


@pytest.fixture
def points():
    """A few seeded (z, w) pairs inside the sampling box."""
    return [tuple(p) for p in sample_points(seed=7, count=3, arity=2)]
