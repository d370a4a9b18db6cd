"""Command-line entry point.

Exit codes: 0 success / certified, 1 certification failed, 2 usage or
configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, kernels
from .errors import ConfigError, QndError
from .estimators import DEFAULT_RESAMPLES, analyze_bin, certify
from .io import (
    load_config,
    load_j0_sidecar,
    params_from_config,
    read_campaign_csv,
    write_campaign_csv,
    write_sweep_csv,
)
from .model import DEFAULT_D0_GRID, DEFAULT_DELTA_J_S, default_eta_grid, evaluate_point, oracle_moments, sweep
from .params import CampaignPlan
from .report import build_report, read_report, write_report
from .simulator import BACKENDS, simulate_campaign

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DATA = 0, 1, 2, 3

# (flag, ExperimentParams/CampaignPlan field, type)
_PARAM_FLAGS = (
    ("--n-atoms-total", "n_atoms_total", float),
    ("--atom-efficiency", "atom_efficiency", float),
    ("--kappa", "kappa", float),
    ("--n-photons", "n_photons", float),
    ("--eta", "eta", float),
    ("--d0", "d0", float),
    ("--sigma0-over-A", "sigma0_over_A", float),
    ("--beta", "beta", float),
    ("--sigma-tech-sq", "sigma_tech_sq", float),
    ("--readout-noise-sq", "readout_noise_sq", float),
    ("--conditioning-convention", "conditioning_convention", str),
    ("--n-cycles", "n_cycles", int),
    ("--n-steps", "n_steps", int),
    ("--loss-per-step", "loss_per_step", float),
    ("--ro-trials-per-cycle", "ro_trials_per_cycle", int),
    ("--seed", "seed", int),
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_param_flags(p):
    p.add_argument("--config", help="JSON config (default: $QNDSIM_CONFIG)")
    g = p.add_argument_group("parameter overrides")
    for flag, dest, typ in _PARAM_FLAGS:
        g.add_argument(flag, dest=f"p_{dest}", type=typ, default=None)


def _params(args):
    overrides = {dest: getattr(args, f"p_{dest}") for _, dest, _ in _PARAM_FLAGS}
    return params_from_config(load_config(args.config), overrides)


def _csv_floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qndsim", description="Simulate and certify pulsed QND spin measurements.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({kernels.BACKEND} kernels)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a campaign and write its CSV")
    _add_param_flags(p)
    p.add_argument("--backend", choices=BACKENDS, default="gaussian")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", "-o", default="-", help="output CSV (default stdout)")

    p = sub.add_parser("analyze", help="estimate metrics from a campaign CSV")
    p.add_argument("csv")
    p.add_argument("--config", help="parameters of a simulated campaign (adds oracle comparison)")
    p.add_argument("--j0-file", help="JSON sidecar mapping bin key -> J0 (spins^2)")
    p.add_argument("--bin-by-atoms", action="store_true", help="bin by rounded n_atoms instead of step index")
    p.add_argument("--convention", choices=("as-written", "regression"), default=None)
    p.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    p.add_argument("--boot-seed", type=int, default=0)
    p.add_argument("--ci-level", type=float, default=0.68)
    p.add_argument("--radians", action="store_true", help="phi columns are in radians; divide by --kappa")
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", "-o", help="write JSON report here")

    p = sub.add_parser("model", help="evaluate the simple noise model at one point")
    p.add_argument("--d0", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--djs", type=float, default=DEFAULT_DELTA_J_S)
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("sweep", help="evaluate the model on a (d0, eta) grid")
    p.add_argument("--d0", type=_csv_floats, default=list(DEFAULT_D0_GRID))
    p.add_argument("--eta", type=_csv_floats, default=None, help="explicit eta list")
    p.add_argument("--eta-num", type=int, default=50, help="points in the default log eta grid")
    p.add_argument("--djs", type=float, default=DEFAULT_DELTA_J_S)
    p.add_argument("--out", "-o", default="-")

    p = sub.add_parser("certify", help="print the verdict of a metrics report")
    p.add_argument("report")
    p.add_argument("--bin", type=int, default=None, help="bin key (default: largest atom number)")

    p = sub.add_parser("selftest", help="compare simulated estimators with their closed-form limits")
    p.add_argument("--trials", type=int, default=200_000)
    p.add_argument("--resamples", type=int, default=200)
    p.add_argument("--seed", type=int, default=12345)
    return parser


def _cmd_simulate(args):
    params = _params(args)
    data = simulate_campaign(params, backend=args.backend, workers=args.workers)
    write_campaign_csv(data, args.out)
    return EXIT_OK


def _cmd_analyze(args):
    data = read_campaign_csv(args.csv, radians=args.radians, kappa=args.kappa)
    data.validate()
    params = params_from_config(load_config(args.config)) if args.config else None
    convention = args.convention or (params.conditioning_convention if params else "as-written")
    j0 = load_j0_sidecar(args.j0_file) if args.j0_file else None
    report = build_report(
        data, params=params, j0=j0, binning="atoms" if args.bin_by_atoms else "step",
        convention=convention, n_resamples=args.resamples, seed=args.boot_seed,
        ci_level=args.ci_level, workers=args.workers,
    )
    if args.out:
        write_report(report, args.out)
    print(f"{'bin':>4} {'n_atoms':>9} {'x_sm_sq':>17} {'x_m_sq':>17} {'x_s_sq':>17} {'t_sum':>17} {'r_a':>17}  verdict")
    for b in report.bins:
        cells = []
        for k in ("x_sm_sq", "x_m_sq", "x_s_sq", "t_sum", "r_a"):
            m = b.metrics[k]
            cells.append(f"{m['value']:.4f}+-{m['se'] or float('nan'):.4f}".rjust(17))
        verdict = "QND" if b.verdict["qnd_pass"] else ("QSP" if b.verdict["qsp_pass"] else ("IDT" if b.verdict["idt_pass"] else "classical"))
        print(f"{b.key:>4} {b.n_atoms:>9.0f} {' '.join(cells)}  {verdict}")
    return EXIT_OK


def _cmd_model(args):
    pt = evaluate_point(args.d0, args.eta, args.djs)
    if not pt.ok:
        print(f"model undefined: {pt.error}", file=sys.stderr)
        return EXIT_DATA
    fields = {
        "d0": pt.d0, "eta": pt.eta, "delta_j_s": pt.delta_j_s, "x_sm_sq": pt.x_sm_sq,
        "x_m_sq": pt.x_m_sq, "x_s_sq": pt.x_s_sq, "t_sum": pt.t_sum,
        "idt_product": pt.idt_product, "region": pt.region.value,
    }
    if args.json:
        print(json.dumps(fields))
    else:
        for k, v in fields.items():
            print(f"{k} = {v:.4f}" if isinstance(v, float) else f"{k} = {v}")
    return EXIT_OK


def _cmd_sweep(args):
    etas = args.eta if args.eta is not None else default_eta_grid(args.eta_num)
    write_sweep_csv(sweep(args.d0, etas, args.djs), args.out)
    return EXIT_OK


def _cmd_certify(args):
    report = read_report(args.report)
    try:
        b = report.bin(args.bin)
    except KeyError as exc:
        print(f"qndsim: {exc.args[0]}", file=sys.stderr)
        return EXIT_DATA
    verdict = certify(b.qnd_metrics())

    def z(s):
        return "n/a" if s is None else f"{s:.2f} sigma"

    m = b.metrics
    print(f"bin {b.key} (n_atoms = {b.n_atoms:.0f}, {b.n_atoms_trials} atom trials, {b.n_ro_trials} readout trials)")
    print(f"  QSP  x_sm_sq = {m['x_sm_sq']['value']:.4f}  < 1: {verdict.qsp_pass}  ({z(verdict.qsp_sigma)})")
    print(f"  IDT  t_sum   = {m['t_sum']['value']:.4f}  > 1: {verdict.idt_pass}  ({z(verdict.idt_sigma)})")
    print(f"  QND certified: {verdict.qnd_pass}")
    print("reference (measured, not reproduction targets): "
          + ", ".join(f"{a['quantity']} = {a['value']}({round(a['error'] * 100)})" for a in report.reference_annotations))
    return EXIT_OK if verdict.qnd_pass else EXIT_FAIL


def _cmd_selftest(args):
    from .params import ExperimentParams, derive

    base = ExperimentParams(seed=args.seed)
    plan = CampaignPlan(n_cycles=args.trials, n_steps=1, loss_per_step=0.0, ro_trials_per_cycle=1)
    cases = [
        ("gaussian", "reference", base.replace(campaign=plan)),
        ("gaussian", "eta=0", base.replace(campaign=plan, eta=0.0, d0=43.5,
                                                  readout_noise_sq=derive(base).sigma_ro_sq)),
        ("atomic", "ref/N=1e4", base.replace(campaign=CampaignPlan(n_cycles=max(args.trials // 10, 1000), n_steps=1,
                                                                    loss_per_step=0.0, ro_trials_per_cycle=1),
                                              n_atoms_total=1e4 / 0.9, d0=43.5)),
    ]
    ok = True
    for backend, label, params in cases:
        data = simulate_campaign(params, backend=backend).single_bin()
        metrics = analyze_bin(data, n_resamples=args.resamples, seed=args.seed)
        oracle = oracle_moments(params, data.n_atoms).as_dict()
        for k in ("chi", "r_a", "x_m_sq", "x_s_sq", "x_sm_sq", "delta_j_s"):
            est = getattr(metrics, k)
            zval = (est.value - oracle[k]) / est.se if est.se else float("inf")
            passed = abs(zval) < 4.0
            ok &= passed
            print(f"{'PASS' if passed else 'FAIL'} {backend:8s} {label:12s} {k:9s} "
                  f"est={est.value:.5f} oracle={oracle[k]:.5f} z={zval:+.2f}")
    print("selftest", "passed" if ok else "FAILED", f"({kernels.BACKEND} kernels)")
    return EXIT_OK if ok else EXIT_FAIL


_COMMANDS = {
    "simulate": _cmd_simulate, "analyze": _cmd_analyze, "model": _cmd_model,
    "sweep": _cmd_sweep, "certify": _cmd_certify, "selftest": _cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code
    np.seterr(all="ignore")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"qndsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QndError, OSError) as exc:
        print(f"qndsim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
