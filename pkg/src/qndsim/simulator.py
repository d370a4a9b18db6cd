"""Synthetic three-pulse QND measurement campaigns.

Two stochastic backends produce records with identical second moments:

``gaussian``
    Linear-Gaussian surrogate.  The latent spin shrinks by ``1 - eta`` and
    picks up injected noise between pulses.
``atomic``
    Explicit pseudo-spin-1/2 atoms, each scattering with probability
    ``eta`` per interval into a fresh spin of variance ``beta/4``.

In both, pulse ``k`` reads ``phi_k = jz_k + n_k`` with readout noise
``n_k ~ N(0, sigma_ro_sq)``.  Technical spin noise enters each interval
as a collective displacement that is carried (and damped by ``1 - eta``)
like the spin itself.

All randomness is keyed by ``(seed, cycle_id, step_index, trial_kind)``
so campaigns are reproducible under any worker count or chunking.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _rng, kernels
from .data import CampaignData, TrialKind, TrialRecord
from .errors import ConfigError
from .params import DerivedParams, ExperimentParams, damage_noise_variance, derive

BACKENDS = ("gaussian", "atomic")
MAX_ATOMS = 10_000_000
_CHUNK = 1 << 16


def atom_ladder(params: ExperimentParams, derived: DerivedParams | None = None) -> np.ndarray:
    """Effective atom number at each ladder step, rounded to whole atoms."""
    derived = derived or derive(params)
    plan = params.campaign
    steps = np.arange(plan.n_steps)
    counts = np.rint(derived.n_atoms_effective * (1.0 - plan.loss_per_step) ** steps).astype(np.int64)
    if np.any(counts < 1):
        warnings.warn("atom ladder falls below one atom; clamping remaining steps to 1", stacklevel=2)
        counts = np.maximum(counts, 1)
    return counts


def _trial_keys(seed, cycle_id, step_index, kind):
    return _rng.derive_keys(seed, np.full_like(cycle_id, _rng.TAG_TRIAL), cycle_id, step_index, kind)


def _gaussian_latent(z, n_atoms, params):
    eta, beta, tech = params.eta, params.beta, params.sigma_tech_sq
    j0 = n_atoms / 4.0
    jz = np.empty((n_atoms.size, 3))
    jz[:, 0] = np.sqrt(j0) * z[:, 0]
    for k in (1, 2):
        w_var = damage_noise_variance(j0, eta, beta, interval=k) + tech
        jz[:, k] = (1.0 - eta) * jz[:, k - 1] + np.sqrt(w_var) * z[:, k]
    return jz


def _atomic_latent(keys, z, n_atoms, params, max_atoms):
    if n_atoms.size and n_atoms.max() > max_atoms:
        raise ConfigError(f"atomic backend refuses {n_atoms.max()} atoms (cap {max_atoms})")
    sums = kernels.atomic_spin_sums(keys, n_atoms, _rng.scatter_threshold(params.eta))
    root_beta = math.sqrt(params.beta)
    jz = np.empty((keys.size, 3))
    jz[:, 0] = 0.5 * sums[:, 0]
    jz[:, 1] = 0.5 * (sums[:, 1] + root_beta * sums[:, 2])
    jz[:, 2] = 0.5 * (sums[:, 3] + root_beta * sums[:, 4])
    if params.sigma_tech_sq > 0:
        s = math.sqrt(params.sigma_tech_sq)
        t2 = s * z[:, 1]
        jz[:, 1] += t2
        jz[:, 2] += (1.0 - params.eta) * t2 + s * z[:, 2]
    return jz


def simulate_block(keys, n_atoms, derived, params, backend="gaussian", max_atoms=MAX_ATOMS):
    """Simulate trials given their stream keys and atom numbers.

    Trials with ``n_atoms == 0`` are readout-only.  Returns ``(phi, jz)``,
    both (n, 3) arrays in spins.
    """
    keys = np.asarray(keys, dtype=np.uint64).reshape(-1)
    n_atoms = np.asarray(n_atoms, dtype=np.int64).reshape(-1)
    sigma_ro = math.sqrt(derived.sigma_ro_sq)
    z = _rng.normals(keys, 6)
    if backend == "gaussian":
        jz = _gaussian_latent(z, n_atoms, params)
    elif backend == "atomic":
        jz = _atomic_latent(keys, z, n_atoms, params, max_atoms)
    else:
        raise ConfigError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    jz[n_atoms == 0] = 0.0
    return jz + sigma_ro * z[:, 3:], jz


def _single_trial(backend, derived, params, key, n_atoms, cycle_id, step_index):
    n = derived.n_atoms_effective if n_atoms is None else n_atoms
    phi, _ = simulate_block([key], [round(n)], derived, params, backend)
    return TrialRecord(cycle_id, step_index, TrialKind.ATOMS, round(n), *map(float, phi[0]))


def simulate_trial_gaussian(derived, params, key, n_atoms=None, cycle_id=0, step_index=0) -> TrialRecord:
    """One three-pulse record from the Gaussian backend; ``key`` is the trial's stream key."""
    return _single_trial("gaussian", derived, params, key, n_atoms, cycle_id, step_index)


def simulate_trial_atomic(derived, params, key, n_atoms=None, cycle_id=0, step_index=0) -> TrialRecord:
    """One three-pulse record from the per-atom backend."""
    return _single_trial("atomic", derived, params, key, n_atoms, cycle_id, step_index)


def campaign_layout(params: ExperimentParams, derived: DerivedParams | None = None):
    """Canonically ordered (cycle_id, step_index, kind, n_atoms) columns."""
    plan = params.campaign
    ladder = atom_ladder(params, derived)
    per_cycle = plan.n_steps + plan.ro_trials_per_cycle
    step = np.arange(per_cycle, dtype=np.int64)
    kind = (step >= plan.n_steps).astype(np.int8)
    atoms = np.concatenate([ladder, np.zeros(plan.ro_trials_per_cycle, dtype=np.int64)])
    cycle = np.repeat(np.arange(plan.n_cycles, dtype=np.int64), per_cycle)
    return cycle, np.tile(step, plan.n_cycles), np.tile(kind, plan.n_cycles), np.tile(atoms, plan.n_cycles)


def simulate_campaign(
    params: ExperimentParams,
    backend: str = "gaussian",
    workers: int = 1,
    max_atoms: int = MAX_ATOMS,
    return_latent: bool = False,
):
    """Run a full loading-cycle campaign.

    Each cycle walks the atom-number ladder (``n_steps`` steps losing
    ``loss_per_step`` each) and ends with ``ro_trials_per_cycle``
    readout-only trials.  Returns :class:`CampaignData` (and the latent
    spins if ``return_latent``).
    """
    derived = derive(params)
    if params.campaign.n_cycles == 0:
        empty = CampaignData.empty()
        return (empty, np.zeros((0, 3))) if return_latent else empty
    cycle, step, kind, n_atoms = campaign_layout(params, derived)
    keys = _trial_keys(params.seed, cycle, step, kind)
    if backend == "atomic" and n_atoms.max() > max_atoms:
        raise ConfigError(f"atomic backend refuses {n_atoms.max()} atoms (cap {max_atoms})")

    def run(start):
        sl = slice(start, start + _CHUNK)
        return simulate_block(keys[sl], n_atoms[sl], derived, params, backend, max_atoms)

    starts = range(0, keys.size, _CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    phi = np.concatenate([p[0] for p in parts])
    data = CampaignData(cycle, step, kind, n_atoms, phi)
    if return_latent:
        return data, np.concatenate([p[1] for p in parts])
    return data
