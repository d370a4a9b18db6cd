"""Metrics report: per-bin estimates, verdicts and reference annotations."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__, kernels
from .data import CampaignData
from .errors import SchemaError
from .estimators import (
    DEFAULT_CI_LEVEL,
    DEFAULT_RESAMPLES,
    METRIC_NAMES,
    Estimate,
    QndMetrics,
    Verdict,
    analyze_bin,
    certify,
)
from .model import DEFAULT_DELTA_J_S, model_idt, model_qsp, oracle_moments
from .params import Convention, ExperimentParams, derive

SCHEMA_VERSION = "qndsim.report/1"

#: Measured values from the reference experiment at N_A = 8.5e5.  Shown for
#: context only; the generative model does not reproduce them.
REFERENCE_ANNOTATIONS = (
    {"quantity": "x_sm_sq", "value": 0.64, "error": 0.05, "n_atoms": 8.5e5, "kind": "measured"},
    {"quantity": "t_sum", "value": 1.72, "error": 0.04, "n_atoms": 8.5e5, "kind": "measured"},
    {"quantity": "r_a", "value": 0.76, "error": 0.04, "n_atoms": 8.5e5, "kind": "measured"},
    {"quantity": "x_m_sq", "value": 0.11, "error": 0.05, "n_atoms": 8.5e5, "kind": "measured"},
    {"quantity": "x_s_sq", "value": 0.23, "error": 0.01, "n_atoms": 8.5e5, "kind": "measured"},
)
REFERENCE_NOTE = (
    "experimental outcomes, not derivable from the noise model; "
    "displayed for comparison, not used as reproduction targets"
)


def _clean(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


@dataclass
class BinReport:
    key: int
    n_atoms: float
    j0: float
    n_atoms_trials: int
    n_ro_trials: int
    metrics: dict
    verdict: dict
    flags: list = field(default_factory=list)
    oracle: dict | None = None
    oracle_z: dict | None = None
    model: dict | None = None

    def qnd_metrics(self) -> QndMetrics:
        ests = {
            k: Estimate(math.nan if m["value"] is None else m["value"], m["se"], m["ci_lo"], m["ci_hi"])
            for k, m in self.metrics.items()
        }
        return QndMetrics(**ests, flags=tuple(self.flags), n_atoms_trials=self.n_atoms_trials,
                          n_ro_trials=self.n_ro_trials, j0_reference=self.j0)


@dataclass
class MetricsReport:
    bins: list
    seed: int
    convention: str
    n_resamples: int
    ci_level: float
    binning: str
    headline_bin: int | None
    params: dict | None = None
    tool_version: str = __version__
    kernel_backend: str = kernels.BACKEND
    schema_version: str = SCHEMA_VERSION
    reference_annotations: list = field(default_factory=lambda: [dict(a) for a in REFERENCE_ANNOTATIONS])
    reference_note: str = REFERENCE_NOTE

    def bin(self, key: int | None = None) -> BinReport:
        key = self.headline_bin if key is None else key
        for b in self.bins:
            if b.key == key:
                return b
        raise KeyError(f"no bin {key!r} in report")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["bins"] = [asdict(b) for b in self.bins]
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> MetricsReport:
        version = raw.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"report schema {version!r} is incompatible with {SCHEMA_VERSION!r}")
        raw = dict(raw)
        try:
            raw["bins"] = [BinReport(**b) for b in raw["bins"]]
            return cls(**raw)
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed report: {exc}") from None


def _metrics_dict(m: QndMetrics) -> dict:
    return {
        k: {"value": _clean(e.value), "se": _clean(e.se), "ci_lo": _clean(e.ci_lo), "ci_hi": _clean(e.ci_hi)}
        for k in METRIC_NAMES
        for e in [getattr(m, k)]
    }


def _verdict_dict(v: Verdict) -> dict:
    return {"qsp_pass": v.qsp_pass, "idt_pass": v.idt_pass, "qnd_pass": v.qnd_pass,
            "qsp_sigma": _clean(v.qsp_sigma), "idt_sigma": _clean(v.idt_sigma)}


def build_report(
    campaign: CampaignData,
    params: ExperimentParams | None = None,
    j0: dict | None = None,
    binning: str = "step",
    convention: Convention | str = Convention.AS_WRITTEN,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
    ci_level: float = DEFAULT_CI_LEVEL,
    workers: int = 1,
    delta_j_s_model: float = DEFAULT_DELTA_J_S,
) -> MetricsReport:
    """Analyse every bin of a campaign.

    With ``params`` (simulated data) each bin also carries the oracle
    limits, z-scores of the estimates against them, and the simple-model
    prediction at the bin's optical depth.
    """
    convention = Convention(convention)
    bins = []
    by = "atoms" if binning == "atoms" else "step"
    for key, data in campaign.bins(by=by, j0=j0).items():
        metrics = analyze_bin(data, convention, n_resamples, seed, ci_level, workers)
        entry = BinReport(
            key=key, n_atoms=data.n_atoms, j0=data.j0_reference,
            n_atoms_trials=metrics.n_atoms_trials, n_ro_trials=metrics.n_ro_trials,
            metrics=_metrics_dict(metrics), verdict=_verdict_dict(certify(metrics)),
            flags=list(metrics.flags),
        )
        if params is not None:
            oracle = oracle_moments(params, data.n_atoms, convention).as_dict()
            entry.oracle = oracle
            entry.oracle_z = {
                k: _clean((entry.metrics[k]["value"] - oracle[k]) / entry.metrics[k]["se"])
                if entry.metrics[k]["se"] else None
                for k in oracle
            }
            d0_bin = derive(params).d0 * data.n_atoms / derive(params).n_atoms_effective
            idt = model_idt(d0_bin, params.eta, delta_j_s_model) if d0_bin * params.eta > 0 else None
            entry.model = {
                "d0": d0_bin,
                "eta": params.eta,
                "x_sm_sq": model_qsp(d0_bin, params.eta),
                "x_m_sq": idt.x_m_sq if idt else None,
                "x_s_sq": idt.x_s_sq if idt else None,
                "t_sum": idt.t_sum if idt else None,
                "delta_j_s_input": delta_j_s_model,
                "delta_j_s_emergent": oracle["delta_j_s"],
            }
        bins.append(entry)
    headline = max(bins, key=lambda b: (b.n_atoms, -b.key)).key if bins else None
    return MetricsReport(
        bins=bins, seed=seed, convention=convention.value, n_resamples=n_resamples,
        ci_level=ci_level, binning=by, headline_bin=headline,
        params=params.to_dict() if params is not None else None,
    )


def write_report(report: MetricsReport, path) -> None:
    text = json.dumps(report.to_dict(), indent=2, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_report(path) -> MetricsReport:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"report is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise SchemaError("report must be a JSON object")
    return MetricsReport.from_dict(raw)
