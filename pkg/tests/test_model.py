import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qndsim.errors import InfiniteReadoutNoiseError
from qndsim.model import (
    Region,
    classify_region,
    default_eta_grid,
    evaluate_point,
    model_idt,
    model_qsp,
    oracle_moments,
    sweep,
)
from qndsim.params import ExperimentParams, damage_noise_variance, derive


def test_model_qsp_reference_point():
    assert model_qsp(43.5, 0.093) == pytest.approx(0.4236, abs=5e-5)


def test_model_qsp_limits():
    for d0 in (0.0, 1.0, 43.5, 1e6):
        assert model_qsp(d0, 0.0) == 1.0
    assert model_qsp(1e12, 0.093) == pytest.approx(2 * 0.093 / 0.907, rel=1e-9)
    assert model_qsp(1e12, 0.093) == pytest.approx(0.20507, abs=5e-6)
    for eta in (0.01, 0.2, 0.7):
        assert model_qsp(0.0, eta) == pytest.approx(1 / (1 - eta) + 2 * eta / (1 - eta))
    with pytest.raises(ZeroDivisionError):
        model_qsp(10.0, 1.0)


def test_model_idt_reference_point():
    r = model_idt(43.5, 0.093, 0.3)
    assert r.x_m_sq == pytest.approx(0.2472, abs=5e-5)
    assert r.x_s_sq == pytest.approx(0.3308, abs=5e-5)
    assert r.t_sum == pytest.approx(1.553, abs=1e-3)


def test_model_idt_zero_disturbance():
    r = model_idt(5.0, 0.2, 0.0)
    assert r.x_s_sq == 0 and r.t_s == 1 and r.t_sum > 1


def test_model_idt_requires_signal():
    with pytest.raises(InfiniteReadoutNoiseError):
        model_idt(0.0, 0.1)
    with pytest.raises(InfiniteReadoutNoiseError):
        model_idt(10.0, 0.0)


@given(d0=st.floats(1e-3, 1e4), eta=st.floats(1e-4, 0.99), djs=st.floats(0, 10))
def test_idt_product_identity(d0, eta, djs):
    r = model_idt(d0, eta, djs)
    assert r.product == pytest.approx(djs / (d0 * eta * (1 - eta)), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("x_sm,t_sum,region", [
    (0.64, 1.72, Region.QND), (1.0, 1.0, Region.CLASSICAL), (0.5, 1.0, Region.QSP_ONLY),
    (1.0, 1.5, Region.IDT_ONLY), (2.0, 0.9, Region.CLASSICAL), (0.999, 1.001, Region.QND),
])
def test_classify_region(x_sm, t_sum, region):
    assert classify_region(x_sm, t_sum) is region


@given(x=st.floats(-10, 10), t=st.floats(0, 2))
def test_classify_partition(x, t):
    r = classify_region(x, t)
    assert (r in (Region.QND, Region.QSP_ONLY)) == (x < 1)
    assert (r in (Region.QND, Region.IDT_ONLY)) == (t > 1)


def test_low_eta_high_d0_is_qsp_only():
    pt = evaluate_point(100.0, 1e-3, 0.3)
    assert pt.x_sm_sq < 1 and pt.t_sum <= 1
    assert pt.region is Region.QSP_ONLY


def test_sweep_single_point_matches_components():
    (pt,) = sweep([43.5], [0.093], 0.3)
    idt = model_idt(43.5, 0.093, 0.3)
    assert pt.x_sm_sq == model_qsp(43.5, 0.093)
    assert (pt.x_m_sq, pt.x_s_sq, pt.t_sum, pt.idt_product) == (idt.x_m_sq, idt.x_s_sq, idt.t_sum, idt.product)
    assert pt.region is Region.QND


def test_sweep_order_and_errors():
    pts = sweep([1.0, 2.0], [0.0, 0.1, 0.2])
    assert [(p.d0, p.eta) for p in pts] == [(d, e) for d in (1.0, 2.0) for e in (0.0, 0.1, 0.2)]
    assert not pts[0].ok and pts[0].region is None  # eta = 0 -> infinite meter noise, flagged
    assert all(p.ok for p in pts[1:3])
    with pytest.raises(ValueError):
        sweep([1.0], [])


@pytest.mark.parametrize("eta", [0.01, 0.093, 0.3])
def test_qsp_decreases_with_d0(eta):
    d0s = np.geomspace(0.1, 1e4, 60)
    vals = np.array([p.x_sm_sq for p in sweep(d0s, [eta])])
    assert np.all(np.diff(vals) < 0)
    # finite-difference sign agrees with the analytic derivative
    h = 1e-6
    for d0 in (0.5, 43.5, 900.0):
        fd = (model_qsp(d0 + h, eta) - model_qsp(d0 - h, eta)) / (2 * h)
        analytic = -eta / ((1 + d0 * eta) ** 2 * (1 - eta))
        assert fd == pytest.approx(analytic, rel=1e-4)


def test_region_order_along_eta():
    regions = [p.region for p in sweep([43.5], np.linspace(1e-4, 0.9, 2000), 0.3)]
    collapsed = [r for i, r in enumerate(regions) if i == 0 or r is not regions[i - 1]]
    assert collapsed == [Region.QSP_ONLY, Region.QND, Region.IDT_ONLY]


def test_default_eta_grid():
    g = default_eta_grid()
    assert g.size == 50 and g[0] == pytest.approx(1e-3) and g[-1] == pytest.approx(0.5)


# --- oracle moments -----------------------------------------------------------

def _per_atom_moments(eta, beta):
    """Exact E[j_k j_l] for one pseudo-spin by enumerating every outcome.

    Outcomes: initial sign, then per interval (scatter?, fresh sign).
    """
    fresh = math.sqrt(beta) / 2
    m = np.zeros((3, 3))
    for s0, (hit1, f1), (hit2, f2) in itertools.product(
        (-1, 1), itertools.product((0, 1), (-1, 1)), itertools.product((0, 1), (-1, 1))
    ):
        p = 0.5 * (eta if hit1 else 1 - eta) * 0.5 * (eta if hit2 else 1 - eta) * 0.5
        j1 = s0 / 2
        j2 = f1 * fresh if hit1 else j1
        j3 = f2 * fresh if hit2 else j2
        v = np.array([j1, j2, j3])
        m += p * np.outer(v, v)
    return m


def _linear_gaussian_cov(j0, eta, beta, tau, sigma_ro_sq):
    """Covariance of the Gaussian backend from its linear map of six unit normals."""
    q = 1 - eta
    s1 = math.sqrt(damage_noise_variance(j0, eta, beta, 1) + tau)
    s2 = math.sqrt(damage_noise_variance(j0, eta, beta, 2) + tau)
    lat = np.zeros((3, 6))
    lat[0, 0] = math.sqrt(j0)
    lat[1] = q * lat[0]
    lat[1, 1] = s1
    lat[2] = q * lat[1]
    lat[2, 2] = s2
    phi = lat.copy()
    phi[:, 3:] = math.sqrt(sigma_ro_sq) * np.eye(3)
    return phi @ phi.T


@pytest.mark.parametrize("eta,beta", [(0.093, 2.0), (0.3, 0.0), (0.5, 1.0), (0.0, 2.0), (0.2, 5.0)])
def test_oracle_matches_enumeration_and_linear_map(eta, beta):
    n = 1000.0
    params = ExperimentParams(n_atoms_total=n, atom_efficiency=1.0, d0=20.0, eta=eta, beta=beta,
                              readout_noise_sq=300.0)
    o = oracle_moments(params)
    atomic = n * _per_atom_moments(eta, beta) + 300.0 * np.eye(3)
    np.testing.assert_allclose(o.cov, atomic, rtol=1e-12)
    np.testing.assert_allclose(o.cov, _linear_gaussian_cov(n / 4, eta, beta, 0.0, 300.0), rtol=1e-12)


def test_oracle_tech_noise_matches_linear_map():
    params = ExperimentParams(n_atoms_total=4000, atom_efficiency=1.0, d0=20.0, eta=0.1, beta=2.0,
                              sigma_tech_sq=150.0)
    o = oracle_moments(params)
    np.testing.assert_allclose(o.cov, _linear_gaussian_cov(1000.0, 0.1, 2.0, 150.0, o.sigma_ro_sq), rtol=1e-12)


def test_oracle_reference_values():
    p = ExperimentParams(n_atoms_total=8.5e5 / 0.9, d0=43.5)
    o = oracle_moments(p)
    assert o.cov[0, 0] == pytest.approx(265027.5, abs=0.5)
    assert o.cov[0, 1] == pytest.approx(192737.5, rel=1e-12)
    assert o.cov[0, 2] == pytest.approx(174813, abs=0.5)
    assert o.cov[1, 1] - o.cov[0, 0] == pytest.approx(19762.5, rel=1e-9)
    assert o.chi == pytest.approx(0.72724, abs=5e-6)
    assert o.r_a == pytest.approx(0.907, rel=1e-12)
    assert o.x_m_sq == pytest.approx(1 / 4.0455, rel=1e-9)
    assert o.x_s_sq == pytest.approx(0.093 / 0.907, rel=1e-9)
    assert o.delta_j_s == pytest.approx(0.093, rel=1e-9)
    assert o.cond_var_spins_sq == pytest.approx(82786, abs=1)
    assert o.x_sm_sq == pytest.approx(0.4295, abs=5e-5)


def test_oracle_conditional_variance_by_quadratic_form():
    # Var(phi1 - chi phi2) = w' C w with w = (1, -chi, 0), independent of the expanded formula
    p = ExperimentParams(n_atoms_total=8.5e5 / 0.9, d0=43.5)
    o = oracle_moments(p)
    w = np.array([1.0, -o.chi, 0.0])
    assert o.cond_var_spins_sq == pytest.approx(w @ o.cov @ w - o.sigma_ro_sq, rel=1e-12)
    r = oracle_moments(p, convention="regression")
    w = np.array([-r.chi, 1.0, 0.0])
    assert r.cond_var_spins_sq == pytest.approx(w @ r.cov @ w - r.sigma_ro_sq, rel=1e-12)


def test_oracle_conditional_variance_by_quadrature():
    # brute-force: integrate (phi1 - chi phi2)^2 over the bivariate Gaussian on a grid
    p = ExperimentParams(n_atoms_total=8.5e5 / 0.9, d0=43.5)
    o = oracle_moments(p)
    c = o.cov[:2, :2]
    sd = np.sqrt(np.diag(c))
    g = np.linspace(-9, 9, 1201)
    x, y = np.meshgrid(g * sd[0], g * sd[1], indexing="ij")
    inv = np.linalg.inv(c)
    dens = np.exp(-0.5 * (inv[0, 0] * x * x + 2 * inv[0, 1] * x * y + inv[1, 1] * y * y))
    dens /= dens.sum()
    var = ((x - o.chi * y) ** 2 * dens).sum()
    assert var - o.sigma_ro_sq == pytest.approx(o.cond_var_spins_sq, rel=1e-6)


def test_oracle_eta_zero():
    p = ExperimentParams(n_atoms_total=4e5, atom_efficiency=1.0, d0=10.0, eta=0.0,
                         readout_noise_sq=5000.0, sigma_tech_sq=700.0)
    o = oracle_moments(p)
    assert o.r_a == 1.0
    assert o.delta_j_s == pytest.approx(700.0 / 1e5, rel=1e-12)


def test_oracle_beta_one_no_disturbance():
    o = oracle_moments(ExperimentParams(d0=43.5, beta=1.0))
    assert o.delta_j_s == pytest.approx(0.0, abs=1e-15)
    assert o.x_s_sq == pytest.approx(0.0, abs=1e-15)


def test_oracle_conditioning_never_adds_variance():
    for eta in (0.0, 0.05, 0.3, 0.8):
        p = ExperimentParams(d0=43.5, eta=eta, readout_noise_sq=derive(ExperimentParams(d0=43.5)).sigma_ro_sq)
        for conv in ("as-written", "regression"):
            o = oracle_moments(p, convention=conv)
            k = 0 if conv == "as-written" else 1
            assert o.cond_var_spins_sq <= o.cov[k, k] - o.sigma_ro_sq + 1e-9
