from pathlib import Path

import numpy as np
import pytest

from src.espline_basis import compute_basis_constants
from src.models import GardnerParameters, ProblemSpec
from src.problem_model import example1_spec, example1_derivative, example1_solution, make_grid


@pytest.fixture
def small_example1():
    return example1_spec(N=20, dt=0.1, zeta=1.0, t_end=0.5)


@pytest.fixture
def constants_for():
    def build(spec: ProblemSpec):
        return compute_basis_constants(spec.zeta, spec.grid.h)

    return build


@pytest.fixture
def constant_spec():
    """Factory for a problem whose initial data is the constant c0."""

    def build(
        c0: float = 0.3,
        mu1: float = 4.0,
        mu2: float = -3.0,
        mu3: float = 1.0,
        dt: float = 0.1,
        zeta: float = 1.0,
        N: int = 16,
        t_end: float = 1.0,
    ) -> ProblemSpec:
        return ProblemSpec(
            name="constant",
            params=GardnerParameters(mu1=mu1, mu2=mu2, mu3=mu3),
            grid=make_grid(0.0, 8.0, N),
            dt=dt,
            zeta=zeta,
            t_end=t_end,
            initial_u=lambda x: np.full_like(np.asarray(x, dtype=float), c0),
            initial_v=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        )

    return build


@pytest.fixture
def linear_pulse_spec():
    """Example 1 initial data under the linear equation u_t + u_xxx = 0."""
    return ProblemSpec(
        name="linear",
        params=GardnerParameters(mu1=0.0, mu2=0.0, mu3=1.0),
        grid=make_grid(-20.0, 30.0, 50),
        dt=0.1,
        zeta=1.0,
        t_end=1.0,
        initial_u=lambda x: example1_solution(x, 0.0),
        initial_v=lambda x: example1_derivative(x, 0.0),
    )


@pytest.fixture
def write_config(tmp_path):
    """Writes a key=value config into tmp_path, pointing output_dir there too."""

    def write(name: str = "run.env", **entries) -> Path:
        entries.setdefault("output_dir", str(tmp_path / "out"))
        path = tmp_path / name
        path.write_text("".join(f"{key}={value}\n" for key, value in entries.items()))
        return path

    return write
