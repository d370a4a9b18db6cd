"""Trial records and campaign containers.

Campaigns are stored column-wise; :class:`TrialRecord` is the row view.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import DataError, InsufficientDataError


class TrialKind(str, enum.Enum):
    ATOMS = "atoms"
    READOUT_ONLY = "ro"


_KIND_CODE = {TrialKind.ATOMS: 0, TrialKind.READOUT_ONLY: 1}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


@dataclass(frozen=True)
class TrialRecord:
    cycle_id: int
    step_index: int
    trial_kind: TrialKind
    n_atoms_at_step: int
    phi1: float
    phi2: float
    phi3: float

    def __post_init__(self):
        kind = TrialKind(self.trial_kind)
        object.__setattr__(self, "trial_kind", kind)
        if kind is TrialKind.READOUT_ONLY and self.n_atoms_at_step != 0:
            raise DataError("readout-only trial must have n_atoms = 0")
        if not np.all(np.isfinite([self.phi1, self.phi2, self.phi3])):
            raise DataError("phi values must be finite")


@dataclass(frozen=True)
class BinData:
    """Estimator input: one atom-number bin plus the readout-only trials.

    ``atoms`` and ``ro`` are (n, 3) arrays of (phi1, phi2, phi3) in spins;
    ``j0_reference`` is the independently known projection noise N_A/4.
    """

    atoms: np.ndarray
    ro: np.ndarray
    j0_reference: float
    n_atoms: float = float("nan")

    def __post_init__(self):
        for name in ("atoms", "ro"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1, 3)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_records(cls, atoms: Iterable[TrialRecord], ro: Iterable[TrialRecord], j0_reference: float):
        atoms, ro = list(atoms), list(ro)
        n_atoms = float(np.mean([r.n_atoms_at_step for r in atoms])) if atoms else float("nan")
        return cls(
            atoms=np.array([(r.phi1, r.phi2, r.phi3) for r in atoms], dtype=np.float64).reshape(-1, 3),
            ro=np.array([(r.phi1, r.phi2, r.phi3) for r in ro], dtype=np.float64).reshape(-1, 3),
            j0_reference=j0_reference,
            n_atoms=n_atoms,
        )


@dataclass(eq=False)
class CampaignData:
    """All trials of a campaign in canonical (cycle, step, kind) order.

    Readout-only trials of cycle ``c`` carry ``step_index >= n_steps`` so
    they sort after the atom ladder, as in the physical sequence.
    """

    cycle_id: np.ndarray
    step_index: np.ndarray
    kind: np.ndarray  # 0 = atoms, 1 = readout only
    n_atoms: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.cycle_id = np.asarray(self.cycle_id, dtype=np.int64).reshape(-1)
        self.step_index = np.asarray(self.step_index, dtype=np.int64).reshape(-1)
        self.kind = np.asarray(self.kind, dtype=np.int8).reshape(-1)
        self.n_atoms = np.asarray(self.n_atoms, dtype=np.int64).reshape(-1)
        self.phi = np.asarray(self.phi, dtype=np.float64).reshape(-1, 3)
        n = self.cycle_id.size
        if not (self.step_index.size == self.kind.size == self.n_atoms.size == self.phi.shape[0] == n):
            raise DataError("campaign columns have different lengths")

    @classmethod
    def empty(cls) -> CampaignData:
        return cls(np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros((0, 3)))

    @classmethod
    def from_records(cls, records: Iterable[TrialRecord]) -> CampaignData:
        records = list(records)
        if not records:
            return cls.empty()
        data = cls(
            cycle_id=[r.cycle_id for r in records],
            step_index=[r.step_index for r in records],
            kind=[_KIND_CODE[r.trial_kind] for r in records],
            n_atoms=[r.n_atoms_at_step for r in records],
            phi=[(r.phi1, r.phi2, r.phi3) for r in records],
        )
        return data.canonical()

    def __len__(self) -> int:
        return self.cycle_id.size

    def __iter__(self) -> Iterator[TrialRecord]:
        for i in range(len(self)):
            yield self.record(i)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CampaignData):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, f), getattr(other, f))
            for f in ("cycle_id", "step_index", "kind", "n_atoms", "phi")
        )

    def record(self, i: int) -> TrialRecord:
        p = self.phi[i]
        return TrialRecord(
            int(self.cycle_id[i]), int(self.step_index[i]), _CODE_KIND[int(self.kind[i])],
            int(self.n_atoms[i]), float(p[0]), float(p[1]), float(p[2]),
        )

    def canonical(self) -> CampaignData:
        order = np.lexsort((self.kind, self.step_index, self.cycle_id))
        return CampaignData(
            self.cycle_id[order], self.step_index[order], self.kind[order],
            self.n_atoms[order], self.phi[order],
        )

    def validate(self) -> None:
        if not np.all(np.isfinite(self.phi)):
            raise DataError("phi values must be finite")
        if np.any(self.n_atoms[self.kind == 1] != 0):
            raise DataError("readout-only trials must have n_atoms = 0")
        if np.any(self.n_atoms[self.kind == 0] < 1):
            raise DataError("atom trials must have n_atoms >= 1")

    @property
    def ro_phi(self) -> np.ndarray:
        return self.phi[self.kind == 1]

    def bins(self, by: str = "step", j0: dict | None = None) -> dict:
        """Split atom trials into bins; every bin shares all readout-only trials.

        ``by`` is ``"step"`` (ladder step index) or ``"atoms"`` (rounded atom
        count).  ``j0`` maps bin keys to externally calibrated projection
        noise; bins not listed use mean(n_atoms)/4 from the trial metadata.
        """
        atoms = self.kind == 0
        if by == "step":
            labels = self.step_index
        elif by == "atoms":
            labels = self.n_atoms
        else:
            raise ValueError(f"unknown binning {by!r}")
        ro = self.ro_phi
        out = {}
        for key in np.unique(labels[atoms]):
            sel = atoms & (labels == key)
            n_atoms = float(np.mean(self.n_atoms[sel]))
            j0_ref = (j0 or {}).get(int(key), n_atoms / 4.0)
            out[int(key)] = BinData(self.phi[sel], ro, float(j0_ref), n_atoms)
        return out

    def single_bin(self, j0: float | None = None) -> BinData:
        bins = self.bins("atoms")
        if len(bins) != 1:
            raise InsufficientDataError(f"expected one atom-number bin, found {len(bins)}")
        (b,) = bins.values()
        if j0 is not None:
            b = BinData(b.atoms, b.ro, j0, b.n_atoms)
        return b
