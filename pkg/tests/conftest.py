import numpy as np
import pytest

from unstart.engine import EngineGeometry, FreeStream, FuelSchedule, GasModel
from unstart.ldp import EventSpec, NoiseModel, minimize_action
from unstart.solver import Discretization, ScramjetModel

PAPER_SEED = 20240


def make_model(cycle="short", theta_c=7.5, k_cells=100, dt=1e-6, n_steps=10_000):
    gas = GasModel()
    geom = EngineGeometry(theta_c_deg=theta_c)
    flow = FreeStream()
    if cycle == "short":
        sched = FuelSchedule()
    elif cycle == "long":
        sched = FuelSchedule(tau=2e-3, burst=0.4e-3)
    else:
        raise ValueError(cycle)
    disc = Discretization.for_geometry(geom, k_cells, dt, n_steps)
    return ScramjetModel(gas, geom, sched, flow, disc)


def make_cheap_model(cycle="short"):
    """Coarse, fast configuration for optimizer property tests."""
    return make_model(cycle, k_cells=50, dt=2e-6, n_steps=5000)


@pytest.fixture(scope="session")
def model_short():
    return make_model("short")


@pytest.fixture(scope="session")
def model_long():
    return make_model("long")


@pytest.fixture(scope="session")
def noise():
    return NoiseModel()


_MINIMIZERS = {}


def full_scale_minimizer(cycle: str):
    """Full-scale optimal path, computed once per session and shared."""
    if cycle not in _MINIMIZERS:
        model = make_model(cycle)
        res = minimize_action(EventSpec(1.0), model, NoiseModel(), n_tilde=20)
        assert res.feasible
        _MINIMIZERS[cycle] = res
    return _MINIMIZERS[cycle]
