"""Pilot-allocation rules and their empirical near-optimality."""

import mpmath as mp
import numpy as np
import pytest

from stochis import (
    AllocationPolicy,
    make_exp_exp,
    nonparametric_allocation,
    parametric_allocation,
)
from stochis.runner import run_cell

from .conftest import WORKERS


def test_parametric_allocation_values():
    assert parametric_allocation(1000, 2.0) == 200
    assert parametric_allocation(8000, 2.0) == 800
    assert parametric_allocation(4, 100.0) == 3
    with pytest.raises(ValueError):
        parametric_allocation(3, 2.0)


def test_nonparametric_allocation_values():
    assert nonparametric_allocation(1000, 1, 6.0) == 210
    assert nonparametric_allocation(1000, 2, 6.0) == 251
    with pytest.raises(ValueError):
        nonparametric_allocation(3, 1, 6.0)
    with pytest.raises(ValueError):
        nonparametric_allocation(1000, 0, 6.0)


def test_nonparametric_allocation_against_high_precision():
    mp.mp.dps = 60
    for n, d in [(1000, 1), (1000, 2), (8000, 1), (250000, 3)]:
        exponent = mp.mpf(d + 4) / (d + 6)
        raw = 6 * (mp.mpf(n) / mp.log(n)) ** exponent
        assert nonparametric_allocation(n, d, 6.0) == int(mp.ceil(raw))


def test_constant_scales_preceiling_value():
    m3 = nonparametric_allocation(10 ** 5, 1, 3.0)
    m6 = nonparametric_allocation(10 ** 5, 1, 6.0)
    assert abs(m6 - 2 * m3) <= 1
    p2 = parametric_allocation(10 ** 5, 2.0)
    p4 = parametric_allocation(10 ** 5, 4.0)
    assert abs(p4 - 2 * p2) <= 1


def test_allocation_monotone_in_budget():
    ns = [10, 30, 100, 1000, 10 ** 4, 10 ** 5, 10 ** 6]
    for alloc in (lambda n: parametric_allocation(n, 2.0),
                  lambda n: nonparametric_allocation(n, 1, 6.0),
                  lambda n: nonparametric_allocation(n, 4, 6.0)):
        values = [alloc(n) for n in ns]
        assert all(a <= b for a, b in zip(values, values[1:]))


def test_allocation_fraction_vanishes():
    # ceil(2 * (10^6)^(2/3)) = 20000 exactly, so the parametric fraction sits
    # exactly at 2% rather than strictly below it.
    assert parametric_allocation(10 ** 6, 2.0) / 10 ** 6 <= 0.02
    assert nonparametric_allocation(10 ** 6, 1, 6.0) / 10 ** 6 < 0.02


def test_policy_kinds():
    assert AllocationPolicy("parametric", 2.0).allocate(1000) == 200
    assert AllocationPolicy("nonparametric", 6.0).allocate(1000, d=1) == 210
    assert AllocationPolicy("fixed", fixed_m=50).allocate(1000) == 50
    assert AllocationPolicy("fixed", fixed_m=5000).allocate(1000) == 999
    assert AllocationPolicy.for_sampler("nonparam").kind == "nonparametric"
    assert AllocationPolicy.for_sampler("param_correct").kind == "parametric"
    with pytest.raises(ValueError):
        AllocationPolicy("adaptive")
    with pytest.raises(ValueError):
        AllocationPolicy("fixed")


def test_policy_allocation_is_near_optimal_over_m_grid():
    # Empirical variance across a grid of pilot sizes at n = 1000; the rate
    # rule's choice (m = 200) must be within 25% of the grid minimum.
    scenario = make_exp_exp(1).with_sampler("param_correct")
    reps = 2000
    variances = {}
    for i, m in enumerate([25, 50, 100, 200, 400, 800]):
        records = run_cell(scenario, 1000, reps, master_seed=31, cell_index=i,
                           policy=AllocationPolicy("fixed", fixed_m=m),
                           workers=WORKERS)
        estimates = np.array([r.estimate for r in records if not r.excluded])
        variances[m] = 1000 * estimates.var(ddof=1)
    chosen = parametric_allocation(1000, 2.0)
    assert variances[chosen] <= 1.25 * min(variances.values())
