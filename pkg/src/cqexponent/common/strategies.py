"""hypothesis strategies for states, priors and channels"""

from __future__ import annotations

import numpy as np
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("cqexponent", deadline=None, derandomize=True, print_blob=True)
settings.load_profile("cqexponent")

entries = st.floats(-1.0, 1.0, allow_nan=False, allow_infinity=False)
s_values = st.floats(0.0, 1.0, allow_nan=False)
open_s_values = st.floats(-0.9, 0.0, allow_nan=False)


@st.composite
def psd_arrays(draw, dim: int | None = None, max_dim: int = 4, floor: float = 1e-3) -> np.ndarray:
    """
    Positive definite G G^H + floor I with trace one. The floor bounds the
    smallest eigenvalue away from zero.
    """
    d = draw(st.integers(1, max_dim)) if dim is None else dim
    parts = draw(arrays(np.float64, (2, d, d), elements=entries))
    g = parts[0] + 1j * parts[1]
    rho = g @ g.conj().T + floor * np.eye(d)
    return rho / np.trace(rho).real


@st.composite
def density_matrices(draw, dim: int | None = None, max_dim: int = 4, floor: float = 1e-3):
    from ..channel.model import DensityMatrix

    return DensityMatrix(draw(psd_arrays(dim, max_dim, floor)))


@st.composite
def priors(draw, size: int):
    from ..channel.model import Prior

    weights = draw(st.lists(st.floats(0.01, 1.0), min_size=size, max_size=size))
    return Prior.normalized(weights)


@st.composite
def channels(draw, max_letters: int = 3, min_dim: int = 1, max_dim: int = 3, floor: float = 1e-3):
    """
    A channel with a prior of full support.
    """
    from ..channel.model import Channel

    a = draw(st.integers(1, max_letters))
    d = draw(st.integers(min_dim, max_dim))
    states = tuple(draw(density_matrices(d, floor=floor)) for _ in range(a))
    return Channel(states), draw(priors(a))
