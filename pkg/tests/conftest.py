"""Shared fixtures: the expensive replication sweeps are session-scoped so
the acceptance criteria and the harness trend checks reuse one run."""

import os

import pytest

from stochis import make_exp_exp, make_normal_normal
from stochis.runner import run_cell

WORKERS = min(2, os.cpu_count() or 1)
MASTER_SEED = 20260810


@pytest.fixture(scope="session")
def exp_exp_d1():
    return make_exp_exp(1)


@pytest.fixture(scope="session")
def normal_normal_d1():
    return make_normal_normal(1)


@pytest.fixture(scope="session")
def nn_param_sweep(normal_normal_d1):
    """Correct-parametric cells, n in {1000, 2000, 4000, 8000}, 2000 reps."""
    scenario = normal_normal_d1.with_sampler("param_correct")
    return {n: run_cell(scenario, n, 2000, MASTER_SEED, cell_index=i, workers=WORKERS)
            for i, n in enumerate([1000, 2000, 4000, 8000])}


@pytest.fixture(scope="session")
def nn_incorrect_8000(normal_normal_d1):
    """Mis-specified parametric cell at n = 8000, 2000 reps."""
    scenario = normal_normal_d1.with_sampler("param_incorrect")
    return run_cell(scenario, 8000, 2000, MASTER_SEED, cell_index=10, workers=WORKERS)


@pytest.fixture(scope="session")
def nn_nonparam_sweep(normal_normal_d1):
    """Kernel-sampler cells, n in {1000, 2000, 4000, 8000}, 1000 reps."""
    scenario = normal_normal_d1.with_sampler("nonparam")
    return {n: run_cell(scenario, n, 1000, MASTER_SEED, cell_index=20 + i, workers=WORKERS)
            for i, n in enumerate([1000, 2000, 4000, 8000])}
