import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasithermo.cumulants import (
    HBAR_PHYS,
    KB_PHYS,
    CumulantTable,
    ScaleParams,
    cumulants_from_chart,
    cumulants_from_density,
    cumulants_to_moments,
    density_moments,
    ideal_gas_log_partition,
    ideal_gas_log_states,
    moments_to_cumulants,
    multi_indices,
    scaling_exponent,
)
from quasithermo.errors import NonNormalizedDensity
from quasithermo.fields import Grid, StateField
from quasithermo.manifold import FocalChartSpec

C_V = 1.5
BETA_CHART = FocalChartSpec(3, {1})
ENERGY_CHART = FocalChartSpec(3, ())


def _beta_chart_entropy(z, lam):
    return ideal_gas_log_partition(z[0], z[1], z[2], lam, C_V) / lam


def _energy_chart_entropy(z, lam):
    return ideal_gas_log_states(z[0], z[1], z[2], lam, C_V) / lam


def test_constants():
    assert HBAR_PHYS == 6.6262e-27
    assert KB_PHYS == 1.3807e-16
    assert ScaleParams().k_B_phys == KB_PHYS
    with pytest.raises(ValueError):
        ScaleParams(lam=0.0)


def test_multi_indices_graded():
    idx = multi_indices(2, 2)
    assert idx == [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert len(multi_indices(3, 4)) == 34


def test_ideal_gas_mean_energy_and_variance():
    lam = 1e3
    beta, V, nu = 0.5, 2.0, 1.0
    t = cumulants_from_chart(_beta_chart_entropy, BETA_CHART, [beta, V, nu], 2, ScaleParams(lam))
    # gamma-distributed energy: mean N f / (2 beta), variance mean / beta
    mean = lam * C_V * nu / beta
    assert t[(1, 0, 0)] == pytest.approx(mean, rel=1e-6)
    assert t[(2, 0, 0)] == pytest.approx(mean / beta, rel=1e-4)
    assert t.schwarz_residual <= 1e-4


def test_zero_multi_index_rejected():
    with pytest.raises(ValueError):
        cumulants_from_chart(_beta_chart_entropy, BETA_CHART, [0.5, 2.0, 1.0], 2, ScaleParams(100.0), indices=[(0, 0, 0)])


def test_order_limits():
    with pytest.raises(ValueError):
        cumulants_from_chart(_beta_chart_entropy, BETA_CHART, [0.5, 2.0, 1.0], 5, ScaleParams(100.0))
    with pytest.raises(ValueError):
        cumulants_from_chart(_beta_chart_entropy, BETA_CHART, [0.5, 2.0], 2, ScaleParams(100.0))


def test_extensive_and_intensive_scaling():
    lams = [1e2, 1e3, 1e4]
    c1, c2, cb = [], [], []
    for lam in lams:
        t = cumulants_from_chart(_beta_chart_entropy, BETA_CHART, [0.5, 2.0, 1.0], 2, ScaleParams(lam))
        c1.append(t[(1, 0, 0)])
        c2.append(t[(2, 0, 0)])
        e = cumulants_from_chart(_energy_chart_entropy, ENERGY_CHART, [C_V / 0.5, 2.0, 1.0], 2, ScaleParams(lam))
        cb.append(e[(2, 0, 0)])
    assert scaling_exponent(lams, c1) == pytest.approx(1.0, abs=0.05)
    assert scaling_exponent(lams, c2) == pytest.approx(1.0, abs=0.05)
    assert scaling_exponent(lams, cb) == pytest.approx(-1.0, abs=0.05)
    # energy and inverse-temperature spreads multiply to about k_B
    product = np.sqrt(abs(c2[-1] * cb[-1]))
    assert 0.5 <= product <= 2.0


def _gaussian_field(mean=0.3, var=0.7, n=256):
    g = Grid([-8], [8], n)
    x = g.axes[0]
    return StateField(g, np.exp(-((x - mean) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var))


def test_gaussian_density_cumulants():
    t = cumulants_from_density(_gaussian_field(), 4)
    assert t[(1,)] == pytest.approx(0.3, abs=1e-10)
    assert t[(2,)] == pytest.approx(0.7, rel=1e-6)
    assert abs(t[(3,)]) <= 1e-6
    assert abs(t[(4,)]) <= 1e-4


def test_two_cell_density_matches_moment_route():
    g = Grid([0, 0], [2, 2], [2, 1])
    field = StateField(g, np.array([[0.3], [0.7]]) / g.cell_volume)
    direct = cumulants_from_density(field, 3)
    oracle = moments_to_cumulants(density_moments(field, 3))
    for M in oracle.keys():
        assert direct[M] == pytest.approx(oracle[M], abs=1e-4)
    # Bernoulli(0.7) on {0.5, 1.5}: variance p(1 - p)
    assert oracle[(2, 0)] == pytest.approx(0.21, abs=1e-12)


def test_unnormalized_density_rejected():
    g = Grid([-1], [1], 4)
    with pytest.raises(NonNormalizedDensity):
        cumulants_from_density(StateField(g, np.full(4, 3.0)), 2)


def test_moments_of_gaussian():
    kap = {(1,): 0.5, (2,): 2.0, (3,): 0.0, (4,): 0.0}
    mom = cumulants_to_moments(kap)
    assert mom[(2,)] == pytest.approx(2.25)
    assert mom[(4,)] == pytest.approx(0.5**4 + 6 * 0.5**2 * 2.0 + 3 * 4.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2.0, 2.0), min_size=9, max_size=9))
def test_moment_cumulant_round_trip(values):
    keys = multi_indices(2, 3)
    kap = dict(zip(keys, values))
    back = moments_to_cumulants(cumulants_to_moments(kap))
    for M in keys:
        assert back[M] == pytest.approx(kap[M], abs=1e-9)


def test_table_serialization():
    t = CumulantTable({(1, 0): 1.5, (0, 1): -0.25}, 1, ("x1", "y2"))
    lines = t.to_csv().splitlines()
    assert lines[0] == "x1,y2,value"
    assert len(lines) == 3
    json.loads(t.to_json())
