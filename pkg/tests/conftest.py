import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
CASES = ROOT / "cases"
PARTITIONS = CASES / "partitions"
sys.path.insert(0, str(Path(__file__).resolve().parent))

from gridweld import CouplingPort, PortBuild, build_problem, load_case  # noqa: E402


def case_path(name: str) -> str:
    return str(CASES / f"{name}.json")


def partition_path(name: str) -> str:
    return str(PARTITIONS / f"{name}.json")


def load(name: str):
    return load_case(case_path(name))


def centralized_problem(name: str, **kw):
    nets, coups = load(name)
    ports = [PortBuild(CouplingPort(c), "internal") for c in coups]
    kw.setdefault("source_kind", "current")
    kw.setdefault("norm", "l2")
    return nets, coups, build_problem(nets, ports, **kw)


def interior_point(problem, rng, scale=0.05):
    """Random strictly-interior perturbation of the flat start."""
    for _ in range(200):
        x = problem.x0() + scale * rng.standard_normal(problem.nvar)
        g = problem.residual_in(x)
        if problem.interior_ok(x) and (g.size == 0 or np.max(g) < -1e-6):
            return x
    raise RuntimeError("could not draw an interior point")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def micro():
    return load("case_micro_td")


@pytest.fixture(scope="session")
def micro_stressed():
    return load("case_micro_td_stressed")
