import math

import numpy as np
import pytest

from weakmeas import ApparatusConfig, PureState, Spectrum, make_state


@pytest.fixture
def ref_state() -> PureState:
    """Qubit with eigenvalues -1/+1 and Born weights 0.2/0.8."""
    return make_state([1.0, -1.0], [math.sqrt(0.8), math.sqrt(0.2)])


@pytest.fixture
def ref_app() -> ApparatusConfig:
    """Weak pointer: spread 10 against a spectral range of 2."""
    return ApparatusConfig(delta_p=10.0)


@pytest.fixture
def random_state():
    """Factory for Haar-ish random states over a random distinct spectrum."""

    def make(rng: np.random.Generator, dim: int) -> PureState:
        vals = np.sort(rng.uniform(-3.0, 3.0, size=dim))
        while np.any(np.diff(vals) < 1e-3):
            vals = np.sort(rng.uniform(-3.0, 3.0, size=dim))
        amps = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        return PureState.normalized(Spectrum(vals), amps)

    return make
