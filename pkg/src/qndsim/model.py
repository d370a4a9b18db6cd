"""Simple ideal-QND noise model, region classification and sweeps.

Also hosts :func:`oracle_moments`, the closed-form second moments of the
simulator's generative model, used as the reference for estimator tests.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfiniteReadoutNoiseError
from .params import Convention, ExperimentParams, derive

DEFAULT_DELTA_J_S = 0.3
DEFAULT_D0_GRID = (1.0, 3.0, 10.0, 30.0, 43.5, 100.0, 300.0)


def default_eta_grid(num: int = 50) -> np.ndarray:
    """Log-spaced eta from 1e-3 to 0.5 (an arbitrary but dense choice)."""
    return np.logspace(-3.0, math.log10(0.5), num)


class Region(str, enum.Enum):
    CLASSICAL = "classical"
    QSP_ONLY = "qsp_only"
    IDT_ONLY = "idt_only"
    QND = "qnd"


def model_qsp(d0: float, eta: float) -> float:
    """Normalised conditional variance of an ideal QND measurement with scattering.

    ``1/((1 + d0*eta)(1 - eta)) + 2*eta/(1 - eta)``
    """
    if eta >= 1.0:
        raise ZeroDivisionError("model conditional variance is singular at eta = 1")
    if eta < 0 or d0 < 0:
        raise ValueError("d0 and eta must be non-negative")
    return 1.0 / ((1.0 + d0 * eta) * (1.0 - eta)) + 2.0 * eta / (1.0 - eta)


@dataclass(frozen=True)
class IdtResult:
    x_m_sq: float
    x_s_sq: float
    product: float
    t_s: float
    t_m: float
    t_sum: float


def transfer(x_sq: float) -> float:
    return 1.0 / (1.0 + x_sq)


def model_idt(d0: float, eta: float, delta_j_s: float = DEFAULT_DELTA_J_S) -> IdtResult:
    if d0 * eta <= 0:
        raise InfiniteReadoutNoiseError("infinite meter noise: d0*eta = 0")
    if eta >= 1.0:
        raise ZeroDivisionError("system variance is singular at eta = 1")
    if delta_j_s < 0:
        raise ValueError("delta_j_s must be >= 0")
    x_m = 1.0 / (d0 * eta)
    x_s = delta_j_s / (1.0 - eta)
    t_s, t_m = transfer(x_s), transfer(x_m)
    return IdtResult(x_m, x_s, x_m * x_s, t_s, t_m, t_s + t_m)


def classify_region(x_sm_sq: float, t_sum: float) -> Region:
    qsp = x_sm_sq < 1.0
    idt = t_sum > 1.0
    if qsp and idt:
        return Region.QND
    if qsp:
        return Region.QSP_ONLY
    if idt:
        return Region.IDT_ONLY
    return Region.CLASSICAL


@dataclass(frozen=True)
class ModelPoint:
    d0: float
    eta: float
    delta_j_s: float
    x_sm_sq: float
    x_m_sq: float
    x_s_sq: float
    t_sum: float
    idt_product: float
    region: Region | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def evaluate_point(d0: float, eta: float, delta_j_s: float = DEFAULT_DELTA_J_S) -> ModelPoint:
    """Evaluate both model criteria at one point; singularities become a flagged point."""
    try:
        x_sm = model_qsp(d0, eta)
        idt = model_idt(d0, eta, delta_j_s)
    except (ArithmeticError, ValueError) as exc:
        nan = float("nan")
        return ModelPoint(d0, eta, delta_j_s, nan, nan, nan, nan, nan, None, str(exc))
    return ModelPoint(
        d0, eta, delta_j_s, x_sm, idt.x_m_sq, idt.x_s_sq, idt.t_sum, idt.product,
        classify_region(x_sm, idt.t_sum),
    )


def sweep(d0_values, eta_values, delta_j_s: float = DEFAULT_DELTA_J_S) -> list[ModelPoint]:
    """Row-major (d0 outer, eta inner) grid of model points."""
    d0_values, eta_values = list(d0_values), list(eta_values)
    if not d0_values or not eta_values:
        raise ValueError("sweep grids must be non-empty")
    return [evaluate_point(float(d), float(e), delta_j_s) for d in d0_values for e in eta_values]


SWEEP_COLUMNS = ("d0", "eta", "delta_j_s", "x_sm_sq", "x_m_sq", "x_s_sq", "t_sum", "idt_product", "region")


@dataclass(frozen=True)
class OracleMoments:
    """Population moments and estimator limits of the simulator at one atom number."""

    n_atoms: float
    j0: float
    sigma_ro_sq: float
    cov: np.ndarray = field(repr=False)
    ro_cov: np.ndarray = field(repr=False)
    chi: float
    r_a: float
    cond_var_spins_sq: float
    x_sm_sq: float
    x_m_sq: float
    x_s_sq: float
    delta_j_s: float
    t_s: float
    t_m: float
    t_sum: float

    def as_dict(self) -> dict:
        keys = ("chi", "r_a", "cond_var_spins_sq", "x_sm_sq", "x_m_sq", "x_s_sq",
                "delta_j_s", "t_s", "t_m", "t_sum")
        return {k: float(getattr(self, k)) for k in keys}


def oracle_moments(params: ExperimentParams, n_atoms: float | None = None,
                   convention: Convention | str | None = None) -> OracleMoments:
    """Closed-form second moments of (phi1, phi2, phi3) and the induced estimator limits.

    With ``q = 1 - eta`` and ``a_k = q**(k-1) + (1 - q**(k-1)) * beta`` the
    atomic part of the spin has ``Var(jz_k) = j0 a_k`` and
    ``Cov(jz_j, jz_k) = q**(k-j) j0 a_j`` (j < k).  Technical noise ``tau``
    adds ``Var = 0, tau, (1 + q**2) tau`` and ``Cov(jz2, jz3) = q tau``.
    Readout noise adds ``sigma_ro_sq`` to every variance.
    """
    derived = derive(params)
    sigma_ro_sq = derived.sigma_ro_sq
    n = derived.n_atoms_effective if n_atoms is None else float(n_atoms)
    if not n > 0:
        raise ConfigError("oracle needs a positive atom number")
    j0 = n / 4.0
    q, beta, tau = 1.0 - params.eta, params.beta, params.sigma_tech_sq
    a = [q ** (k - 1) + (1.0 - q ** (k - 1)) * beta for k in (1, 2, 3)]
    cov = np.empty((3, 3))
    for j in range(3):
        for k in range(j, 3):
            cov[j, k] = cov[k, j] = q ** (k - j) * j0 * a[j]
    tech = np.array([[0.0, 0.0, 0.0], [0.0, tau, q * tau], [0.0, q * tau, (1.0 + q * q) * tau]])
    cov = cov + tech + sigma_ro_sq * np.eye(3)
    ro_cov = sigma_ro_sq * np.eye(3)

    convention = Convention(convention or params.conditioning_convention)
    v1, v2, c12, c13 = (float(cov[i, j]) for i, j in ((0, 0), (1, 1), (0, 1), (0, 2)))
    chi = c12 / v1
    if convention is Convention.AS_WRITTEN:
        cond = v1 - 2.0 * chi * c12 + chi * chi * v2 - sigma_ro_sq
    else:
        cond = v2 - 2.0 * chi * c12 + chi * chi * v1 - sigma_ro_sq
    r_a = c13 / c12
    excess_growth = (v2 - sigma_ro_sq) - (v1 - sigma_ro_sq)
    x_s = excess_growth / (r_a * j0)
    x_m = (v1 - j0) / j0
    t_s, t_m = transfer(x_s), transfer(x_m)
    return OracleMoments(
        n_atoms=n, j0=j0, sigma_ro_sq=sigma_ro_sq, cov=cov, ro_cov=ro_cov,
        chi=chi, r_a=r_a, cond_var_spins_sq=cond, x_sm_sq=cond / (r_a * j0),
        x_m_sq=x_m, x_s_sq=x_s, delta_j_s=excess_growth / j0,
        t_s=t_s, t_m=t_m, t_sum=t_s + t_m,
    )
