"""Physical parameters, derived quantities and unit conversions.

All spin-domain quantities are in scaled-angle units (equivalent spins);
radians only appear in :func:`to_radians` / :func:`to_scaled`.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

from .errors import ConfigError, InfiniteReadoutNoiseError

#: Faraday coupling, radians per spin.
KAPPA = 1.47e-7
#: Effective-to-total atom number ratio for the reference trap geometry.
ATOM_EFFICIENCY = 0.9
#: Reference effective atom number and peak optical depth.
N_ATOMS_REF = 8.5e5
D0_REF = 43.5
ETA_REF = 0.093
PHOTONS_PER_PULSE = 2e8


class Convention(str, enum.Enum):
    """Which residual is used for the conditional spin variance."""

    AS_WRITTEN = "as-written"
    REGRESSION = "regression"


@dataclass(frozen=True)
class CampaignPlan:
    n_cycles: int = 1000
    n_steps: int = 20
    loss_per_step: float = 0.15
    ro_trials_per_cycle: int = 1

    def __post_init__(self):
        if self.n_cycles < 0:
            raise ConfigError("n_cycles must be >= 0")
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if not 0.0 <= self.loss_per_step < 1.0:
            raise ConfigError("loss_per_step must be in [0, 1)")
        if self.ro_trials_per_cycle < 0:
            raise ConfigError("ro_trials_per_cycle must be >= 0")

    @property
    def n_trials(self) -> int:
        return self.n_cycles * (self.n_steps + self.ro_trials_per_cycle)


@dataclass(frozen=True)
class ExperimentParams:
    """Full physical and campaign configuration.

    At most one of ``d0`` and ``sigma0_over_A`` may be given; with neither,
    ``sigma0_over_A`` defaults to the reference 43.5 / 8.5e5.  In either
    case ``d0`` refers to the optical depth at ``n_atoms_effective`` and
    scales linearly with the atom number along the loading ladder.

    ``readout_noise_sq`` (spins^2) replaces ``J_0/(d0*eta)`` as the readout
    noise when set.  It is needed to simulate the damage-free limit
    ``eta = 0``, where the coupled definition diverges.
    """

    n_atoms_total: float = N_ATOMS_REF / ATOM_EFFICIENCY
    atom_efficiency: float = ATOM_EFFICIENCY
    kappa: float = KAPPA
    n_photons: float = PHOTONS_PER_PULSE
    eta: float = ETA_REF
    d0: float | None = None
    sigma0_over_A: float | None = None
    beta: float = 2.0
    sigma_tech_sq: float = 0.0
    readout_noise_sq: float | None = None
    conditioning_convention: Convention = Convention.AS_WRITTEN
    campaign: CampaignPlan = field(default_factory=CampaignPlan)
    seed: int = 0

    def __post_init__(self):
        conv = self.conditioning_convention
        if not isinstance(conv, Convention):
            try:
                object.__setattr__(self, "conditioning_convention", Convention(conv))
            except ValueError:
                raise ConfigError(f"unknown conditioning convention {conv!r}") from None
        if isinstance(self.campaign, dict):
            object.__setattr__(self, "campaign", CampaignPlan(**self.campaign))
        if not self.n_atoms_total >= 0:
            raise ConfigError("n_atoms_total must be >= 0")
        if not 0.0 < self.atom_efficiency <= 1.0:
            raise ConfigError("atom_efficiency must be in (0, 1]")
        if not self.kappa > 0:
            raise ConfigError("kappa must be > 0")
        if not self.n_photons > 0:
            raise ConfigError("n_photons must be > 0")
        if not 0.0 <= self.eta < 1.0:
            raise ConfigError("eta must be in [0, 1)")
        if not self.beta >= 0:
            raise ConfigError("beta must be >= 0")
        if not self.sigma_tech_sq >= 0:
            raise ConfigError("sigma_tech_sq must be >= 0")
        if self.readout_noise_sq is not None and not self.readout_noise_sq >= 0:
            raise ConfigError("readout_noise_sq must be >= 0")
        if self.d0 is None and self.sigma0_over_A is None:
            object.__setattr__(self, "sigma0_over_A", D0_REF / N_ATOMS_REF)
        elif self.d0 is not None and self.sigma0_over_A is not None:
            raise ConfigError("exactly one of d0 and sigma0_over_A must be set")
        if self.d0 is not None and not self.d0 >= 0:
            raise ConfigError("d0 must be >= 0")
        if self.sigma0_over_A is not None and not self.sigma0_over_A >= 0:
            raise ConfigError("sigma0_over_A must be >= 0")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def replace(self, **changes) -> ExperimentParams:
        """Return a copy with ``changes`` applied.

        Setting ``d0`` clears ``sigma0_over_A`` and vice versa, so that
        callers can switch modes in a single call.
        """
        if "d0" in changes and "sigma0_over_A" not in changes:
            changes["sigma0_over_A"] = None
        elif "sigma0_over_A" in changes and "d0" not in changes:
            changes["d0"] = None
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["conditioning_convention"] = self.conditioning_convention.value
        return out

    @classmethod
    def from_dict(cls, mapping: dict) -> ExperimentParams:
        """Build from a flat (or campaign-nested) key-value mapping."""
        plan_fields = {f.name for f in dataclasses.fields(CampaignPlan)}
        own_fields = {f.name for f in dataclasses.fields(cls)}
        kwargs, plan = {}, {}
        for key, value in mapping.items():
            if key == "campaign":
                if not isinstance(value, dict):
                    raise ConfigError("campaign must be a mapping")
                plan.update(value)
            elif key in plan_fields:
                plan[key] = value
            elif key in own_fields:
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown parameter {key!r}")
        if "d0" in kwargs and kwargs["d0"] is not None and "sigma0_over_A" not in kwargs:
            kwargs["sigma0_over_A"] = None
        try:
            kwargs["campaign"] = CampaignPlan(**plan)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        return cls(**kwargs)


@dataclass(frozen=True)
class DerivedParams:
    n_atoms_effective: float
    j0: float
    d0: float
    snr: float
    sigma_w_sq: float
    r_a_model: float
    _sigma_ro_sq: float | None = field(default=None, repr=False)

    @property
    def readout_defined(self) -> bool:
        return self._sigma_ro_sq is not None

    @property
    def sigma_ro_sq(self) -> float:
        if self._sigma_ro_sq is None:
            raise InfiniteReadoutNoiseError("infinite readout noise: d0*eta = 0")
        return self._sigma_ro_sq


def damage_noise_variance(j0: float, eta: float, beta: float, interval: int = 1) -> float:
    """Variance injected into the latent spin during damage interval ``interval``.

    Chosen so that ``jz_{k+1} = (1-eta) jz_k + w_k`` reproduces the
    per-atom scattering model exactly: after ``k`` intervals a fraction
    ``(1-eta)**k`` of atoms still hold their input spin (variance 1/4 each)
    and the rest carry a fresh spin of variance ``beta/4``.  For the first
    interval this reduces to ``j0*eta*(1 + beta - eta)``.
    """
    if interval < 1:
        raise ValueError("interval must be >= 1")
    keep = 1.0 - eta
    if interval == 1:
        return j0 * eta * (1.0 + beta - eta)
    before = keep ** (interval - 1) + (1.0 - keep ** (interval - 1)) * beta
    after = keep**interval + (1.0 - keep**interval) * beta
    return j0 * (after - keep * keep * before)


def _readout_noise(params, j0, snr):
    if params.readout_noise_sq is not None:
        return float(params.readout_noise_sq)
    return j0 / snr if snr > 0 else None


def derive(params: ExperimentParams) -> DerivedParams:
    n_eff = params.atom_efficiency * params.n_atoms_total
    j0 = n_eff / 4.0
    d0 = params.d0 if params.d0 is not None else params.sigma0_over_A * n_eff
    snr = d0 * params.eta
    return DerivedParams(
        n_atoms_effective=n_eff,
        j0=j0,
        d0=d0,
        snr=snr,
        sigma_w_sq=damage_noise_variance(j0, params.eta, params.beta),
        r_a_model=1.0 - params.eta,
        _sigma_ro_sq=_readout_noise(params, j0, snr),
    )


def snr_from_coupling(kappa: float, n_atoms: float, n_photons: float) -> float:
    """Projection-to-readout noise ratio ``kappa**2 * N_A * N_L / 2``."""
    if kappa < 0 or n_atoms < 0 or n_photons < 0:
        raise ValueError("inputs must be non-negative")
    return kappa * kappa * n_atoms * n_photons / 2.0


def to_radians(phi_scaled, kappa: float = KAPPA):
    """Scaled angle (spins) -> Faraday rotation (rad)."""
    if not kappa > 0:
        raise ConfigError("kappa must be > 0")
    return phi_scaled * kappa


def to_scaled(phi_raw, kappa: float = KAPPA):
    """Faraday rotation (rad) -> scaled angle (spins)."""
    if not kappa > 0:
        raise ConfigError("kappa must be > 0 to invert the angle scaling")
    return phi_raw / kappa
