import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kslab.direct_spectrum import (
    FINE_NODES,
    Form,
    assemble_discretization,
    count_above,
    default_r_max,
    direct_spectrum,
    gap_trials,
    norm_constants,
    rayleigh_quotient,
    solve_spectrum,
    spectral_diagnostics,
)
from kslab.matching import predicted_eigenvalue, solve_eigenvalue
from kslab.radial_core import Parameters


@pytest.fixture(scope="module")
def spec_1e3():
    return direct_spectrum(Parameters(beta=0.5, nu=1e-3), 4)


def test_weighted_symmetry(spec_1e3):
    assert spec_1e3.operator.weighted_matrix_asymmetry() <= 1e-13


def test_truncation_radius_is_harmless(spec_1e3):
    p = spec_1e3.params
    op = assemble_discretization(p, 4400, r_max=1.1 * default_r_max(p.b))
    lam = solve_spectrum(op, 2, p).eigenvalues
    assert np.max(np.abs(lam - spec_1e3.eigenvalues[:2])) <= 1e-5 * 2 * p.b


def test_b_zero_kernel_is_psi0():
    op = assemble_discretization(None, 2000, b=0.0, r_max=1e3)
    res = solve_spectrum(op, 1)
    assert abs(res.eigenvalues[0]) <= 1e-12
    # ground-state transform: psi0 corresponds to the constant
    assert np.max(np.abs(res.reduced[0] - 1.0)) <= 1e-10
    r = res.eigenvectors[0].nodes
    assert np.allclose(res.eigenvectors[0].values, r**2 / (1 + r**2) ** 2, rtol=1e-10)


def test_residuals_and_order(spec_1e3):
    lam = spec_1e3.eigenvalues
    assert np.all(np.diff(lam) < 0)
    assert np.all(spec_1e3.residuals <= 1e-9)
    assert lam[0] > 0 > lam[1]
    assert spec_1e3.zero_counts() == [0, 1, 2, 3]


def test_gram_orthogonality(spec_1e3):
    g = spec_1e3.gram
    d = np.diag(g)
    assert np.all(d > 0)
    off = np.abs(g - np.diag(d)) / np.sqrt(np.outer(d, d))
    assert off.max() <= 1e-8


def test_simple_eigenvalues(spec_1e3):
    op = spec_1e3.operator
    lam = spec_1e3.eigenvalues
    for k in range(1, 4):
        assert count_above(op, lam[k] - 1e-3 * op.b) == k + 1
        assert count_above(op, lam[k] + 1e-3 * op.b) == k


def test_ground_eigenvalue_law(spec_1e3):
    p = spec_1e3.params
    dev = spec_1e3.eigenvalues[0] / (2 * p.b) - 1 - 1 / p.log_b
    assert abs(dev) * p.log_b**2 <= 2.0
    second = predicted_eigenvalue(p, 0, 2)
    assert abs(spec_1e3.eigenvalues[0] - second) <= 2 * p.b * 2.0 / p.log_b**2


def test_grid_refinement(spec_1e3):
    fine = direct_spectrum(spec_1e3.params, 1, n_nodes=8000)
    assert abs(fine.eigenvalues[0] / spec_1e3.eigenvalues[0] - 1) <= 1e-3


def test_fine_grid_for_small_nu():
    op = assemble_discretization(Parameters(beta=0.5, nu=1e-5))
    assert op.size == FINE_NODES


def test_unconjugated_form_cross_check():
    # accurate only where the eigenvalues are not swamped by O(h^2) errors of the b = 0 part
    p = Parameters(beta=0.5, nu=0.1)
    ref = solve_spectrum(assemble_discretization(p, 4000), 3, p).eigenvalues
    alt = solve_spectrum(assemble_discretization(p, 4000, form=Form.DIRECT, r_min=1e-3), 3, p)
    assert np.max(np.abs(alt.eigenvalues / ref - 1)) <= 1e-3
    assert alt.zero_counts() == [0, 1, 2]


def test_k_guard(spec_1e3):
    with pytest.raises(ValueError):
        solve_spectrum(spec_1e3.operator, 11)


def test_b_zero_needs_r_max():
    with pytest.raises(ValueError):
        assemble_discretization(None, 100, b=0.0)


@pytest.mark.parametrize("nu", [1e-3, 1e-5])
def test_diagnostics(nu):
    p = Parameters(beta=0.5, nu=nu)
    res = direct_spectrum(p, 4)
    matched = [solve_eigenvalue(p, n) for n in range(3)]
    rep = spectral_diagnostics(res, matched)
    assert rep["gap"]["holds"]
    assert all(abs(g - 1) <= 0.15 for g in rep["gaps_over_2b"])
    assert all(m["scaled"] <= 20 for m in rep["matched_deviation"])
    if nu == 1e-5:
        assert 0.6 <= rep["c0_ratio"] <= 1.4


def test_norm_constants_positive(spec_1e3):
    c = norm_constants(spec_1e3)
    assert np.all(c > 0)


def test_pointwise_envelope(spec_1e3):
    b = spec_1e3.params.b
    for n, v in enumerate(spec_1e3.eigenvectors):
        r = v.nodes
        env = (r**2 / (1 + r**2)) / (1 + r**2) * (1 + b * r**2) ** ((2 * n + 0.1) / 2)
        env *= 1 + (n >= 1) * 0.5 * np.log1p(r**2)
        assert np.max(np.abs(v.values) / env) <= 20


def test_gap_trials_deterministic(spec_1e3):
    a = gap_trials(spec_1e3, 2, trials=5, seed=3)
    b = gap_trials(spec_1e3, 2, trials=5, seed=3)
    assert np.array_equal(a, b)
    assert np.all(a <= spec_1e3.eigenvalues[2] + 1e-8 * spec_1e3.params.b)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_rayleigh_quotient_below_top(spec_1e3, seed):
    op = spec_1e3.operator
    rng = np.random.default_rng(seed)
    s = np.log(op.r)
    g = sum(rng.standard_normal() * np.exp(-0.5 * ((s - c) / 1.5) ** 2) for c in np.linspace(s[0], s[-1], 10))
    assert rayleigh_quotient(op, g) <= spec_1e3.eigenvalues[0] * (1 + 1e-10)
