"""Campaign CSV files, configuration files and sweep tables."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .data import CampaignData
from .errors import ConfigError, DataError, SchemaError
from .params import ExperimentParams

CAMPAIGN_COLUMNS = ("cycle_id", "step_index", "trial_kind", "n_atoms", "phi1", "phi2", "phi3")
CONFIG_ENV = "QNDSIM_CONFIG"
_KINDS = {"atoms": 0, "ro": 1}
_KIND_NAMES = ("atoms", "ro")


def _open_out(path):
    if path is None or str(path) == "-":
        import sys
        return sys.stdout, False
    return open(path, "w", newline="", encoding="utf-8"), True


def write_campaign_csv(data: CampaignData, path) -> None:
    """Write trials in canonical order; floats use shortest round-trip repr."""
    data = data.canonical()
    fh, close = _open_out(path)
    try:
        fh.write(",".join(CAMPAIGN_COLUMNS) + "\n")
        rows = zip(data.cycle_id.tolist(), data.step_index.tolist(), data.kind.tolist(),
                   data.n_atoms.tolist(), data.phi.tolist())
        fh.writelines(
            f"{c},{s},{_KIND_NAMES[k]},{n},{p[0]!r},{p[1]!r},{p[2]!r}\n" for c, s, k, n, p in rows
        )
    finally:
        if close:
            fh.close()


def _parse_int(text, line, name):
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{name} is not an integer: {text!r}", line) from None


def _parse_float(text, line, name):
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"{name} is not a number: {text!r}", line) from None
    if not math.isfinite(value):
        raise DataError(f"{name} is not finite: {text!r}", line)
    return value


def read_campaign_csv(path, radians: bool = False, kappa: float | None = None) -> CampaignData:
    """Read and validate a campaign CSV.

    With ``radians=True`` the phi columns are Faraday angles in radians and
    are divided by ``kappa`` on ingest.
    """
    if radians and not (kappa and kappa > 0):
        raise ConfigError("--radians requires a positive kappa")
    cycles, steps, kinds, atoms, phis = [], [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError("empty file: missing header", 1)
        header = [h.strip() for h in header]
        if tuple(header) != CAMPAIGN_COLUMNS:
            extra = sorted(set(header) - set(CAMPAIGN_COLUMNS))
            missing = sorted(set(CAMPAIGN_COLUMNS) - set(header))
            raise SchemaError(
                f"header must be {','.join(CAMPAIGN_COLUMNS)} (unknown: {extra}, missing: {missing})", 1
            )
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CAMPAIGN_COLUMNS):
                raise DataError(f"expected {len(CAMPAIGN_COLUMNS)} fields, got {len(row)}", line)
            kind = row[2].strip()
            if kind not in _KINDS:
                raise DataError(f"trial_kind must be 'atoms' or 'ro', got {kind!r}", line)
            n_atoms = _parse_int(row[3], line, "n_atoms")
            if kind == "ro" and n_atoms != 0:
                raise DataError("readout-only row must have n_atoms = 0", line)
            if kind == "atoms" and n_atoms < 1:
                raise DataError("atoms row must have n_atoms >= 1", line)
            cycles.append(_parse_int(row[0], line, "cycle_id"))
            steps.append(_parse_int(row[1], line, "step_index"))
            kinds.append(_KINDS[kind])
            atoms.append(n_atoms)
            phis.append([_parse_float(row[i], line, CAMPAIGN_COLUMNS[i]) for i in (4, 5, 6)])
    phi = np.array(phis, dtype=np.float64).reshape(-1, 3)
    if radians:
        phi = phi / kappa
    return CampaignData(cycles, steps, kinds, atoms, phi).canonical()


def load_config(path=None) -> dict:
    """Flat key-value JSON config; falls back to ``$QNDSIM_CONFIG``, then defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def params_from_config(cfg: dict, overrides: dict | None = None) -> ExperimentParams:
    merged = dict(cfg)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "d0":
            merged.pop("sigma0_over_A", None)
        elif key == "sigma0_over_A":
            merged.pop("d0", None)
        merged[key] = value
    return ExperimentParams.from_dict(merged)


def load_j0_sidecar(path) -> dict[int, float]:
    """JSON object mapping bin keys to J_0 in spins^2."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read j0 sidecar {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise SchemaError("j0 sidecar must be a JSON object")
    out = {}
    for key, value in raw.items():
        try:
            out[int(key)] = float(value)
        except (TypeError, ValueError):
            raise DataError(f"bad j0 entry {key!r}: {value!r}") from None
        if not out[int(key)] > 0:
            raise DataError(f"j0 for bin {key} must be > 0")
    return out


def write_sweep_csv(points, path) -> None:
    from .model import SWEEP_COLUMNS

    fh, close = _open_out(path)
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for p in points:
            region = p.region.value if p.region is not None else "undefined"
            writer.writerow([repr(float(getattr(p, c))) for c in SWEEP_COLUMNS[:-1]] + [region])
    finally:
        if close:
            fh.close()
