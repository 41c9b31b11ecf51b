"""
Shared fixtures for the multiresilience lab test suite.

Worlds are small and built fresh per test; the deadlock guard is shortened so
a lockstep bug fails the test instead of hanging it.
"""

import os
import sys

import numpy as np
import pytest

# Add project root to path for imports
project_root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from backend.code.harness import experiment
from backend.code.linalg.poisson import build_poisson3d
from backend.code.linalg.types import CsrMatrix, DenseVector, Poisson3DSpec
from backend.code.runtime.world import World
from backend.code.solver.config import SolverConfig

TEST_DEADLOCK_TIMEOUT = 20.0


@pytest.fixture
def run_world():
    """Run `program` on a fresh world; returns (per-rank results, world)."""

    def _run(n_active, program, n_spares=0, plan=None):
        world = World(n_active, n_spares=n_spares, deadlock_timeout=TEST_DEADLOCK_TIMEOUT)
        if plan is not None:
            world.arm(plan)
        return world.spawn(program), world

    return _run


@pytest.fixture
def poisson_small():
    """4x4x4 Poisson system, n = 64."""
    return build_poisson3d(Poisson3DSpec(4, 4, 4))


@pytest.fixture
def poisson_8cube():
    """8x8x8 Poisson system, n = 512."""
    return build_poisson3d(Poisson3DSpec(8, 8, 8))


@pytest.fixture
def diag_system():
    """A = diag(1, 2, 3), b = ones."""
    return CsrMatrix.from_dense(np.diag([1.0, 2.0, 3.0])), DenseVector(np.ones(3))


@pytest.fixture
def solver_cfg():
    """25 inner x 20 outer budget with the bounded detector and no checkpointing."""
    return SolverConfig(inner_iters=25, outer_iters=20, tol=1e-8, detector="bounded")


@pytest.fixture(autouse=True)
def fresh_reference_cache():
    """Fault-free reference runs are cached per process; isolate tests from each other."""
    experiment._reference_iterations.clear()
    yield
    experiment._reference_iterations.clear()


@pytest.fixture
def poisson_generic():
    """8x8x8 Poisson matrix with a seeded random right-hand side.

    A constant b only excites the few symmetric grid modes, so inner GMRES
    solves it almost exactly; a generic b keeps the outer iteration busy long
    enough for scheduled failures to fire.
    """
    a, _ = build_poisson3d(Poisson3DSpec(8, 8, 8))
    return a, DenseVector(np.random.default_rng(2024).uniform(0.5, 1.5, a.n_rows))


@pytest.fixture
def diag_mtx(tmp_path):
    """Matrix Market file holding diag(1..60); with b = ones every eigencomponent is excited."""
    n = 60
    lines = ["%%MatrixMarket matrix coordinate real general", f"{n} {n} {n}"]
    lines += [f"{i} {i} {float(i)}" for i in range(1, n + 1)]
    path = tmp_path / "diag60.mtx"
    path.write_text("\n".join(lines) + "\n")
    return str(path)
