"""Three-pulse estimators, bootstrap intervals and the QND verdict.

Every metric is a function of two 3x3 sample covariance matrices: one
from trials with atoms, one from readout-only trials.  Primed statistics
subtract the readout-only counterpart, covariances included.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Callable, Mapping

import numpy as np

from . import _rng, kernels
from .data import BinData, TrialRecord
from .errors import (
    ConfigError,
    DegenerateDenominatorError,
    InsufficientDataError,
    QndError,
    UnstableEstimateError,
)
from .model import transfer
from .params import Convention

METRIC_NAMES = (
    "chi", "r_a", "cond_var_spins_sq", "x_sm_sq", "x_m_sq", "x_s_sq",
    "t_s", "t_m", "t_sum", "delta_j_s",
)
DEFAULT_RESAMPLES = 2000
DEFAULT_CI_LEVEL = 0.68
RETENTION_FLOOR = 1e-9
MAX_FAILURE_FRACTION = 0.10


@dataclass(frozen=True)
class Moments:
    """Sample mean and unbiased covariance of (phi1, phi2, phi3)."""

    n: int
    mean: np.ndarray
    cov: np.ndarray

    def var(self, k: int) -> float:
        return float(self.cov[k, k])

    def covar(self, j: int, k: int) -> float:
        return float(self.cov[j, k])

    @classmethod
    def from_sums(cls, n: int, sums, shift=None) -> Moments:
        """Moments from ``resample_sums`` output of data that was shifted by ``-shift``."""
        if n < 2:
            raise InsufficientDataError("need at least 2 trials for a variance")
        s = np.asarray(sums, dtype=np.float64)
        lin = s[:3]
        quad = np.array([[s[3], s[4], s[5]], [s[4], s[6], s[7]], [s[5], s[7], s[8]]])
        cov = (quad - np.outer(lin, lin) / n) / (n - 1)
        mean = lin / n + (0.0 if shift is None else np.asarray(shift))
        return cls(n, mean, cov)


def _as_array(trials) -> np.ndarray:
    if isinstance(trials, np.ndarray):
        return trials.reshape(-1, 3).astype(np.float64, copy=False)
    trials = list(trials)
    if trials and isinstance(trials[0], TrialRecord):
        return np.array([(t.phi1, t.phi2, t.phi3) for t in trials], dtype=np.float64)
    return np.asarray(trials, dtype=np.float64).reshape(-1, 3)


def sample_moments(trials) -> Moments:
    """Unbiased (n - 1) variances and covariances of the three pulses.

    ``trials`` is an (n, 3) array or a sequence of :class:`TrialRecord`.
    """
    x = _as_array(trials)
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 trials, got {n}")
    mean = x.mean(axis=0)
    d = x - mean
    return Moments(n, mean, d.T @ d / (n - 1))


@dataclass(frozen=True)
class ExcessMoments:
    """Readout-subtracted covariance: ``cov[j, k] = Cov(phi_j, phi_k) - Cov(ro_j, ro_k)``."""

    cov: np.ndarray

    def var(self, k: int) -> float:
        return float(self.cov[k, k])

    def covar(self, j: int, k: int) -> float:
        return float(self.cov[j, k])


def excess_moments(atom: Moments, ro: Moments) -> ExcessMoments:
    # negative entries are legitimate finite-sample outcomes and are kept
    return ExcessMoments(atom.cov - ro.cov)


def conditional_spin_variance(atom: Moments, ro: Moments,
                              convention: Convention | str = Convention.AS_WRITTEN) -> float:
    """Spin variance left after conditioning on the first measurement (spins^2).

    ``as-written``: ``Var(phi1 - chi phi2) - Var(ro1)``;
    ``regression``: ``Var(phi2 - chi phi1) - Var(ro2)``;
    both with ``chi = Cov(phi1, phi2) / Var(phi1)``.
    """
    v1, v2, c12 = atom.var(0), atom.var(1), atom.covar(0, 1)
    if v1 == 0:
        raise ZeroDivisionError("Var(phi1) = 0; conditioning coefficient undefined")
    chi = c12 / v1
    if Convention(convention) is Convention.AS_WRITTEN:
        return v1 - 2.0 * chi * c12 + chi * chi * v2 - ro.var(0)
    return v2 - 2.0 * chi * c12 + chi * chi * v1 - ro.var(1)


def retention_fraction(excess: ExcessMoments, j0_reference: float, floor: float = RETENTION_FLOOR) -> float:
    """``Cov'(phi1, phi3) / Cov'(phi1, phi2)``.

    Values outside [0, 1] are returned unchanged; :func:`qnd_metrics`
    flags them.
    """
    den = excess.covar(0, 1)
    if abs(den) < floor * j0_reference:
        raise DegenerateDenominatorError(f"|Cov'(phi1, phi2)| = {abs(den):.3g} below floor")
    return excess.covar(0, 2) / den


def point_metrics(atom: Moments, ro: Moments, j0_reference: float,
                  convention: Convention | str = Convention.AS_WRITTEN) -> dict[str, float]:
    """All figures of merit from atom/readout moments and the calibrated J_0."""
    if not j0_reference > 0:
        raise ConfigError("j0_reference must be > 0")
    excess = excess_moments(atom, ro)
    v1 = atom.var(0)
    if v1 == 0:
        raise ZeroDivisionError("Var(phi1) = 0")
    chi = atom.covar(0, 1) / v1
    r_a = retention_fraction(excess, j0_reference)
    cond = conditional_spin_variance(atom, ro, convention)
    growth = excess.var(1) - excess.var(0)
    x_sm = cond / (r_a * j0_reference)
    x_m = (v1 - j0_reference) / j0_reference
    x_s = growth / (r_a * j0_reference)
    t_s, t_m = transfer(x_s), transfer(x_m)
    return {
        "chi": chi, "r_a": r_a, "cond_var_spins_sq": cond, "x_sm_sq": x_sm,
        "x_m_sq": x_m, "x_s_sq": x_s, "t_s": t_s, "t_m": t_m, "t_sum": t_s + t_m,
        "delta_j_s": growth / j0_reference,
    }


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float | None = None
    ci_lo: float | None = None
    ci_hi: float | None = None

    @property
    def ci(self):
        return (self.ci_lo, self.ci_hi)


@dataclass(frozen=True)
class QndMetrics:
    chi: Estimate
    r_a: Estimate
    cond_var_spins_sq: Estimate
    x_sm_sq: Estimate
    x_m_sq: Estimate
    x_s_sq: Estimate
    t_s: Estimate
    t_m: Estimate
    t_sum: Estimate
    delta_j_s: Estimate
    flags: tuple = ()
    n_atoms_trials: int = 0
    n_ro_trials: int = 0
    j0_reference: float = float("nan")

    def values(self) -> dict[str, float]:
        return {k: getattr(self, k).value for k in METRIC_NAMES}

    @classmethod
    def from_values(cls, values: Mapping[str, float], se: Mapping[str, float] | None = None,
                    **extra) -> QndMetrics:
        """Build from point values, filling transfer coefficients from the variances.

        Missing metrics are NaN.  Useful for certifying externally
        obtained numbers.
        """
        vals = {k: float("nan") for k in METRIC_NAMES}
        vals.update(values)
        if "t_s" not in values and "x_s_sq" in values:
            vals["t_s"] = transfer(vals["x_s_sq"])
        if "t_m" not in values and "x_m_sq" in values:
            vals["t_m"] = transfer(vals["x_m_sq"])
        if "t_sum" not in values:
            vals["t_sum"] = vals["t_s"] + vals["t_m"]
        se = se or {}
        ests = {k: Estimate(vals[k], se.get(k)) for k in METRIC_NAMES}
        return cls(**ests, **extra)

    def with_intervals(self, boot: Mapping[str, Estimate]) -> QndMetrics:
        changes = {}
        for k in METRIC_NAMES:
            b = boot.get(k)
            if b is not None:
                changes[k] = Estimate(getattr(self, k).value, b.se, b.ci_lo, b.ci_hi)
        return _replace(self, **changes)


def _replace(obj, **changes):
    kwargs = {f.name: getattr(obj, f.name) for f in fields(obj)}
    kwargs.update(changes)
    return type(obj)(**kwargs)


def _quality_flags(values: Mapping[str, float]) -> tuple:
    flags = []
    if not 0.0 <= values["r_a"] <= 1.0:
        flags.append("r_a_out_of_range")
    for k in ("cond_var_spins_sq", "x_s_sq", "delta_j_s"):
        if values[k] < 0:
            flags.append(f"negative_{k}")
    return tuple(flags)


def qnd_metrics(data: BinData, convention: Convention | str = Convention.AS_WRITTEN) -> QndMetrics:
    """Point estimates of all figures of merit (no intervals)."""
    if not data.j0_reference > 0:
        raise ConfigError("j0_reference must be > 0")
    values = point_metrics(sample_moments(data.atoms), sample_moments(data.ro), data.j0_reference, convention)
    return QndMetrics(
        **{k: Estimate(v) for k, v in values.items()},
        flags=_quality_flags(values),
        n_atoms_trials=data.atoms.shape[0],
        n_ro_trials=data.ro.shape[0],
        j0_reference=data.j0_reference,
    )


MetricFn = Callable[[Moments, Moments, float], Mapping[str, float]]


@dataclass(frozen=True)
class BootstrapResult:
    estimates: dict[str, Estimate]
    samples: dict[str, np.ndarray] = field(repr=False)
    failures: dict[str, int]
    n_resamples: int


def _resampled_moments(x: np.ndarray, keys: np.ndarray, workers: int) -> list[Moments]:
    n = x.shape[0]
    shift = x.mean(axis=0)
    centred = np.ascontiguousarray(x - shift)
    out = np.empty((keys.size, 9))
    if workers > 1 and keys.size > 1:
        bounds = np.linspace(0, keys.size, workers + 1).astype(int)

        def run(i):
            lo, hi = bounds[i], bounds[i + 1]
            kernels.resample_sums(centred, keys[lo:hi], out[lo:hi])

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(workers)))
    else:
        kernels.resample_sums(centred, keys, out)
    return [Moments.from_sums(n, row, shift) for row in out]


def bootstrap(data: BinData, metric_fn: MetricFn | None = None, n_resamples: int = DEFAULT_RESAMPLES,
              seed: int = 0, ci_level: float = DEFAULT_CI_LEVEL,
              convention: Convention | str = Convention.AS_WRITTEN, workers: int = 1) -> BootstrapResult:
    """Nonparametric bootstrap over trials.

    Atom and readout-only trials are resampled independently, each from
    its own counter-based stream keyed by ``(seed, resample_index)``.
    ``metric_fn(atom_moments, ro_moments, j0)`` returns named values; the
    default is :func:`point_metrics`.  SE is the resample standard
    deviation and the interval is the central ``ci_level`` percentile range.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be >= 100")
    if not 0 < ci_level < 1:
        raise ValueError("ci_level must be in (0, 1)")
    if data.atoms.shape[0] < 2 or data.ro.shape[0] < 2:
        raise InsufficientDataError("bootstrap needs at least 2 atom and 2 readout-only trials")
    if metric_fn is None:
        def metric_fn(a, r, j0):
            return point_metrics(a, r, j0, convention)

    idx = np.arange(n_resamples)
    atom_m = _resampled_moments(data.atoms, _rng.derive_keys(seed, np.full_like(idx, _rng.TAG_BOOT_ATOMS), idx), workers)
    ro_m = _resampled_moments(data.ro, _rng.derive_keys(seed, np.full_like(idx, _rng.TAG_BOOT_RO), idx), workers)

    rows: list[Mapping[str, float] | None] = []
    names: list[str] = []
    for a, r in zip(atom_m, ro_m):
        try:
            res = metric_fn(a, r, data.j0_reference)
        except (QndError, ArithmeticError, ValueError, FloatingPointError):
            rows.append(None)
            continue
        for k in res:
            if k not in names:
                names.append(k)
        rows.append(res)
    if not names:
        raise UnstableEstimateError({"<all>": n_resamples}, n_resamples)

    samples, failures, estimates = {}, {}, {}
    lo_q, hi_q = 50.0 * (1.0 - ci_level), 50.0 * (1.0 + ci_level)
    for k in names:
        col = np.array([np.nan if row is None else row.get(k, np.nan) for row in rows], dtype=np.float64)
        ok = np.isfinite(col)
        failures[k] = int(n_resamples - ok.sum())
        samples[k] = col
        good = col[ok]
        if good.size >= 2:
            lo, hi = np.percentile(good, [lo_q, hi_q])
            estimates[k] = Estimate(float(np.mean(good)), float(np.std(good, ddof=1)), float(lo), float(hi))
    bad = {k: v for k, v in failures.items() if v > MAX_FAILURE_FRACTION * n_resamples}
    if bad:
        raise UnstableEstimateError(bad, n_resamples)
    return BootstrapResult(estimates, samples, failures, n_resamples)


def analyze_bin(data: BinData, convention: Convention | str = Convention.AS_WRITTEN,
                n_resamples: int = DEFAULT_RESAMPLES, seed: int = 0,
                ci_level: float = DEFAULT_CI_LEVEL, workers: int = 1) -> QndMetrics:
    """Point estimates with bootstrap standard errors and intervals."""
    point = qnd_metrics(data, convention)
    boot = bootstrap(data, None, n_resamples, seed, ci_level, convention, workers)
    return point.with_intervals(boot.estimates)


@dataclass(frozen=True)
class Verdict:
    qsp_pass: bool
    idt_pass: bool
    qnd_pass: bool
    qsp_sigma: float | None
    idt_sigma: float | None

    @property
    def significance_available(self) -> bool:
        return self.qsp_sigma is not None and self.idt_sigma is not None


def _z(excess: float, se: float | None) -> float | None:
    if se is None or not math.isfinite(se) or not math.isfinite(excess):
        return None
    if se == 0:
        return math.copysign(math.inf, excess) if excess != 0 else 0.0
    return excess / se


def certify(metrics: QndMetrics) -> Verdict:
    """Both strict criteria and their z-scores.

    QSP: ``x_sm_sq < 1``, z = (1 - x_sm_sq)/SE.  IDT: ``t_sum > 1``,
    z = (t_sum - 1)/SE.  A missing SE leaves the z-score as None.
    """
    x_sm, t_sum = metrics.x_sm_sq, metrics.t_sum
    qsp = bool(x_sm.value < 1.0)
    idt = bool(t_sum.value > 1.0)
    return Verdict(qsp, idt, qsp and idt, _z(1.0 - x_sm.value, x_sm.se), _z(t_sum.value - 1.0, t_sum.se))
