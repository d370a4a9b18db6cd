import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qndsim.data import BinData, TrialKind, TrialRecord
from qndsim.errors import DegenerateDenominatorError, InsufficientDataError, UnstableEstimateError
from qndsim.estimators import (
    METRIC_NAMES,
    Estimate,
    Moments,
    QndMetrics,
    analyze_bin,
    bootstrap,
    certify,
    conditional_spin_variance,
    excess_moments,
    point_metrics,
    qnd_metrics,
    retention_fraction,
    sample_moments,
)
from qndsim.model import oracle_moments
from qndsim.simulator import simulate_campaign

from conftest import single_bin_params


def _moments(cov, n=1000):
    return Moments(n, np.zeros(3), np.asarray(cov, dtype=float))


def test_sample_moments_constant():
    m = sample_moments([(1.0, 1.0, 1.0)] * 5)
    assert not m.cov.any()
    np.testing.assert_array_equal(m.mean, [1, 1, 1])


def test_sample_moments_two_points():
    m = sample_moments(np.array([[0.0, 0, 0], [2, 2, 2]]))
    np.testing.assert_allclose(m.cov, np.full((3, 3), 2.0))


def test_sample_moments_from_records():
    recs = [TrialRecord(0, 0, TrialKind.ATOMS, 10, 1.0, 2.0, 3.0),
            TrialRecord(1, 0, TrialKind.ATOMS, 10, 3.0, 2.0, 1.0)]
    m = sample_moments(recs)
    assert m.var(0) == 2.0 and m.var(1) == 0.0 and m.covar(0, 2) == -2.0


def test_sample_moments_needs_two():
    with pytest.raises(InsufficientDataError):
        sample_moments([(1.0, 2.0, 3.0)])


def test_from_sums_matches_direct():
    x = np.random.default_rng(1).normal(size=(500, 3)) @ [[1, 0.5, 0.2], [0, 1, 0.3], [0, 0, 2]] + 7.0
    shift = x.mean(axis=0)
    d = x - shift
    sums = [*d.sum(axis=0), d[:, 0] @ d[:, 0], d[:, 0] @ d[:, 1], d[:, 0] @ d[:, 2],
            d[:, 1] @ d[:, 1], d[:, 1] @ d[:, 2], d[:, 2] @ d[:, 2]]
    m = Moments.from_sums(500, sums, shift)
    np.testing.assert_allclose(m.cov, np.cov(x, rowvar=False), rtol=1e-12)
    np.testing.assert_allclose(m.mean, shift, rtol=1e-12)


def test_excess_moments_keeps_negative():
    e = excess_moments(_moments(np.eye(3)), _moments(2 * np.eye(3)))
    assert e.var(0) == -1.0


def test_conditional_variance_uncorrelated_pulses():
    # chi = 0: nothing to condition on, result is Var(phi1) - Var(ro1)
    atom = _moments(np.diag([5.0, 3.0, 2.0]))
    ro = _moments(np.diag([1.0, 1.0, 1.0]))
    assert conditional_spin_variance(atom, ro) == 4.0
    assert conditional_spin_variance(atom, ro, "regression") == 2.0


def test_conditional_variance_noiseless_qnd():
    # identical pulses, no readout noise: the first measurement predicts the second exactly
    atom = _moments(np.full((3, 3), 7.0))
    ro = _moments(np.zeros((3, 3)))
    assert conditional_spin_variance(atom, ro) == pytest.approx(0.0, abs=1e-12)


@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(0.1, 5))
def test_conditional_variance_quadratic_form(entries, ro_var):
    a = np.array(entries[:3]), np.array(entries[3:])
    cov = np.eye(3) + np.outer(a[0], a[0]) + np.outer(a[1], a[1])
    chi = cov[0, 1] / cov[0, 0]
    atom, ro = _moments(cov), _moments(ro_var * np.eye(3))
    w = np.array([1.0, -chi, 0.0])
    assert conditional_spin_variance(atom, ro) == pytest.approx(w @ cov @ w - ro_var, rel=1e-9, abs=1e-9)
    w = np.array([-chi, 1.0, 0.0])
    assert conditional_spin_variance(atom, ro, "regression") == pytest.approx(w @ cov @ w - ro_var, rel=1e-9, abs=1e-9)


def test_retention_fraction():
    e = excess_moments(_moments([[4, 2, 1], [2, 4, 2], [1, 2, 4]]), _moments(np.eye(3)))
    assert retention_fraction(e, 1.0) == 0.5
    z = excess_moments(_moments(np.eye(3)), _moments(np.eye(3)))
    with pytest.raises(DegenerateDenominatorError):
        retention_fraction(z, 1.0)


def test_point_metrics_on_oracle_moments(reference_params):
    # feeding exact moments must reproduce the closed-form figures of merit
    o = oracle_moments(reference_params)
    atom = _moments(o.cov)
    ro = _moments(o.sigma_ro_sq * np.eye(3))
    v = point_metrics(atom, ro, o.j0)
    assert v["chi"] == pytest.approx(0.727236, abs=1e-6)
    assert v["r_a"] == pytest.approx(0.907, rel=1e-12)
    assert v["x_sm_sq"] == pytest.approx(0.42953, abs=1e-5)
    assert v["x_m_sq"] == pytest.approx(0.247188, abs=1e-6)
    assert v["x_s_sq"] == pytest.approx(0.102536, abs=1e-6)
    assert v["delta_j_s"] == pytest.approx(0.093, rel=1e-9)
    assert v["t_sum"] == pytest.approx(1.70880, abs=1e-5)
    assert v["t_sum"] == pytest.approx(1 / (1 + v["x_s_sq"]) + 1 / (1 + v["x_m_sq"]), rel=1e-15)


def test_x_m_zero_when_var_equals_j0():
    cov = np.array([[100.0, 60, 50], [60, 110, 70], [50, 70, 120]])
    bin_ = BinData(np.zeros((0, 3)), np.zeros((0, 3)), 100.0, 400.0)
    v = point_metrics(_moments(cov), _moments(5 * np.eye(3)), bin_.j0_reference)
    assert v["x_m_sq"] == 0.0 and v["t_m"] == 1.0


def _campaign_bin(n, seed=1, backend="gaussian", **kw):
    return simulate_campaign(single_bin_params(n, seed=seed, **kw), backend).single_bin()


def test_qnd_metrics_flags_and_counts():
    b = _campaign_bin(2000)
    m = qnd_metrics(b)
    assert m.n_atoms_trials == 2000 and m.n_ro_trials == 2000
    assert m.j0_reference == pytest.approx(212500)
    assert set(m.values()) == set(METRIC_NAMES)
    assert all(e.se is None for e in (getattr(m, k) for k in METRIC_NAMES))


def test_qnd_metrics_flags_bad_retention():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(4000, 1))
    atoms = np.hstack([s, s, -s]) * 10 + rng.normal(size=(4000, 3))
    m = qnd_metrics(BinData(atoms, rng.normal(size=(4000, 3)), 100.0, 400.0))
    assert "r_a_out_of_range" in m.flags


def test_permutation_invariance():
    b = _campaign_bin(3000, seed=4)
    perm = np.random.default_rng(9).permutation(3000)
    shuffled = BinData(b.atoms[perm], b.ro[perm[::-1]], b.j0_reference, b.n_atoms)
    a, c = qnd_metrics(b).values(), qnd_metrics(shuffled).values()
    for k in METRIC_NAMES:
        assert c[k] == pytest.approx(a[k], rel=1e-9, abs=1e-12)


def _simple(a, r, j0):
    return {"v1": a.var(0), "mean1": float(a.mean[0])}


def test_bootstrap_constant_data_has_zero_se():
    b = BinData(np.ones((50, 3)), np.ones((50, 3)), 1.0, 4.0)
    res = bootstrap(b, _simple, n_resamples=200)
    assert res.estimates["v1"].se == 0.0
    assert res.estimates["mean1"].value == 1.0


def test_bootstrap_deterministic_and_worker_independent():
    b = _campaign_bin(3000, seed=2)
    r1 = bootstrap(b, n_resamples=200, seed=5)
    r2 = bootstrap(b, n_resamples=200, seed=5, workers=3)
    for k in METRIC_NAMES:
        np.testing.assert_array_equal(r1.samples[k], r2.samples[k])
    r3 = bootstrap(b, n_resamples=200, seed=6)
    assert not np.array_equal(r1.samples["x_sm_sq"], r3.samples["x_sm_sq"])


def test_bootstrap_se_matches_analytic_mean_se():
    rng = np.random.default_rng(3)
    x = rng.normal(scale=2.0, size=(4000, 3))
    res = bootstrap(BinData(x, x, 1.0, 4.0), _simple, n_resamples=1000, seed=1)
    assert res.estimates["mean1"].se == pytest.approx(2.0 / math.sqrt(4000), rel=0.1)
    lo, hi = res.estimates["mean1"].ci
    assert lo < x[:, 0].mean() < hi


def test_bootstrap_unstable_raises():
    def flaky(a, r, j0):
        if a.mean[0] > 0:
            raise ZeroDivisionError
        return {"m": float(a.mean[0])}

    x = np.random.default_rng(0).normal(size=(100, 3))
    x[:, 0] -= x[:, 0].mean()
    with pytest.raises(UnstableEstimateError) as err:
        bootstrap(BinData(x, x, 1.0, 4.0), flaky, n_resamples=200)
    assert "m" in err.value.failing


def test_bootstrap_rejects_bad_arguments():
    x = np.zeros((1, 3))
    with pytest.raises(InsufficientDataError):
        bootstrap(BinData(x, x, 1.0, 4.0), _simple, n_resamples=200)
    with pytest.raises(ValueError):
        bootstrap(BinData(np.ones((5, 3)), np.ones((5, 3)), 1.0, 4.0), _simple, n_resamples=10)


def test_analyze_bin_attaches_intervals():
    m = analyze_bin(_campaign_bin(5000, seed=3), n_resamples=200)
    for k in METRIC_NAMES:
        e = getattr(m, k)
        assert e.se is not None and e.se >= 0
        assert e.ci_lo <= e.ci_hi


# --- certification -------------------------------------------------------------

def test_certify_reference_numbers():
    m = QndMetrics.from_values({"x_sm_sq": 0.64, "t_sum": 1.72}, se={"x_sm_sq": 0.05, "t_sum": 0.04})
    v = certify(m)
    assert v.qnd_pass
    assert v.qsp_sigma == pytest.approx(7.2)
    assert v.idt_sigma == pytest.approx(18.0)


def test_certify_boundary_is_strict():
    v = certify(QndMetrics.from_values({"x_sm_sq": 1.0, "t_sum": 1.0}))
    assert not v.qsp_pass and not v.idt_pass and not v.qnd_pass
    assert v.qsp_sigma is None and not v.significance_available


def test_certify_transfer_from_variances():
    m = QndMetrics.from_values({"x_sm_sq": 0.5, "x_s_sq": 2.0, "x_m_sq": 0.0})
    assert m.t_sum.value == pytest.approx(4 / 3)
    assert certify(m).qnd_pass


@given(x_sm=st.floats(-1, 3), t_sum=st.floats(0, 2))
def test_certify_equivalent_to_thresholds(x_sm, t_sum):
    v = certify(QndMetrics.from_values({"x_sm_sq": x_sm, "t_sum": t_sum}, se={"x_sm_sq": 0.1, "t_sum": 0.1}))
    assert v.qnd_pass == (x_sm < 1 and t_sum > 1)
    assert (v.qsp_sigma > 0) == v.qsp_pass or x_sm == 1


def test_certify_zero_se():
    v = certify(QndMetrics.from_values({"x_sm_sq": 0.5, "t_sum": 1.5}, se={"x_sm_sq": 0.0, "t_sum": 0.0}))
    assert v.qsp_sigma == math.inf and v.idt_sigma == math.inf


def test_estimate_ci_property():
    assert Estimate(1.0, 0.1, 0.9, 1.1).ci == (0.9, 1.1)


# --- statistical consistency -----------------------------------------------------

@settings(deadline=None, max_examples=5)
@given(seed=st.integers(0, 2**32 - 1))
def test_estimates_unbiased_at_large_n(seed):
    b = _campaign_bin(100_000, seed=seed, n_atoms=1e4)
    o = oracle_moments(single_bin_params(1, n_atoms=1e4))
    v = qnd_metrics(b).values()
    # generous 6-sigma bands from the large-sample SE of each ratio
    assert abs(v["x_m_sq"] - o.x_m_sq) < 6 * math.sqrt(2 / 1e5) * (1 + o.x_m_sq)
    assert abs(v["r_a"] - o.r_a) < 0.05


def test_error_shrinks_as_inverse_root_n():
    o = oracle_moments(single_bin_params(1, n_atoms=1e4))
    ns = np.array([1000, 4000, 16000, 64000])
    rms = []
    for n in ns:
        errs = [qnd_metrics(_campaign_bin(int(n), seed=100 + r, n_atoms=1e4)).x_sm_sq.value - o.x_sm_sq
                for r in range(40)]
        rms.append(np.sqrt(np.mean(np.square(errs))))
    slope = np.polyfit(np.log(ns), np.log(rms), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.15)
