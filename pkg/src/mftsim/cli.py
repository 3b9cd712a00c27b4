"""Scenario-driven command line.

Every command loads one scenario file, runs one analysis pipeline, and
writes CSVs whose bodies are byte-identical across runs and thread counts
for a fixed scenario and seed. Comment headers carry the tool version,
scenario hash, seed, and command line, so any result file identifies the
run that produced it.

Exit codes: 0 success, 1 a statistical or threshold gate failed (or the
run aborted at a node), 2 I/O, parse, or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import integrate_sheet, newton_report
from .ensemble import (CollapseScenario, collapse_statistics,
                       equivariance_test, sample_initial)
from .errors import NodeError, NodeStall, ParseError, Unclassifiable, ValidationError
from .kernels import set_threads
from .locality import epr_timing_scan, sensitivity_scan
from .residuals import random_probe_points, residual_report
from .scenario import load_scenario, serialize_scenario

COMMANDS = ("simulate", "equivariance", "collapse", "sensitivity",
            "epr-scan", "newton-check", "residuals", "validate")

RESIDUAL_GATE = 1e-5
NEWTON_GATE = 1e-3
KS_P_GATE = 0.01
PRODUCT_SENSITIVITY_GATE = 1e-9
PROBE_NODE_FLOOR = 0.3


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


class _Run:
    """Per-invocation context: effective scenario, output dir, header lines."""

    def __init__(self, sc, out_dir: Path, command_line: str, plots: bool):
        self.sc = sc
        self.out = out_dir
        self.command_line = command_line
        self.plots = plots

    def need_params(self, op: str) -> dict:
        params = self.sc.analysis_params(op)
        if params is None:
            raise ValidationError(
                f"scenario {self.sc.name!r} has no analysis entry for {op!r}")
        return params

    def write_csv(self, name: str, columns, rows, plot: str = ""):
        lines = [
            f"# mftsim {__version__}",
            f"# scenario: {self.sc.name} sha256={self.sc.sha256[:16]}",
            f"# seed: {self.sc.sampler.seed}",
            f"# command: {self.command_line}",
            ",".join(columns),
        ]
        lines.extend(",".join(_fmt(v) for v in row) for row in rows)
        path = self.out / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        if self.plots and plot:
            script = (f"# gnuplot script for {name}\n"
                      "set datafile separator ','\n"
                      f"set title '{self.sc.name}: {name}'\n"
                      + plot + "\n")
            (self.out / (name[:-4] + ".gnuplot")).write_text(script,
                                                             encoding="utf-8")


def _cmd_simulate(run: _Run) -> int:
    params = run.need_params("simulate")
    sc = run.sc
    n = sc.state.n_particles
    sheet = integrate_sheet(sc.state, sc.delta_offsets, params["x0"],
                            sc.tau0, sc.tau1, sc.step)
    cols = (["tau"] + [f"t_{i + 1}" for i in range(n)]
            + [f"x_{i + 1}" for i in range(n)])
    rows = [[tau, *sheet.times(k), *sheet.positions[k]]
            for k, tau in enumerate(sheet.tau_grid)]
    plot = ("set xlabel 'tau'\nset ylabel 'x_i'\nplot " + ", ".join(
        f"'trajectory.csv' using 1:{1 + n + i + 1} with lines title 'x_{i + 1}'"
        for i in range(n)))
    run.write_csv("trajectory.csv", cols, rows, plot)
    print(f"final_tau={_fmt(sheet.tau_grid[-1])}")
    for i in range(n):
        print(f"final_x_{i + 1}={_fmt(sheet.positions[-1, i])}")
    return 0


def _cmd_equivariance(run: _Run) -> int:
    run.need_params("equivariance")
    sc = run.sc
    rep = equivariance_test(sc.state, sc.delta_offsets, sc.tau0, sc.tau1,
                            sc.sampler, sc.step)
    cols = ["coordinate", "ks_stat", "p_value", "n"]
    rows = [[r.coordinate + 1, r.statistic, r.p_value, r.n] for r in rep.ks]
    plot = (f"set xlabel 'coordinate'\nset ylabel 'KS p value'\nset logscale y\n"
            f"plot 'equivariance.csv' using 1:3 with points pt 7 title 'p', "
            f"{KS_P_GATE} with lines title 'gate'")
    run.write_csv("equivariance.csv", cols, rows, plot)
    for line in rep.as_kv_lines():
        print(line)
    ok = rep.valid and all(r.p_value > KS_P_GATE for r in rep.ks)
    if not ok:
        print("equivariance gate failed: "
              + (";".join(rep.reasons) or f"some KS p <= {KS_P_GATE}"),
              file=sys.stderr)
    return 0 if ok else 1


def _cmd_collapse(run: _Run) -> int:
    params = run.need_params("collapse")
    sc = run.sc
    sep = CollapseScenario(offsets=sc.delta_offsets, tau0=sc.tau0,
                           tau1=sc.tau1, step=sc.step,
                           recheck_dtau=params["recheck_dtau"])
    rep = collapse_statistics(sc.state, sep, sc.sampler)
    cols = ["branch", "freq", "ci_low", "ci_high", "expected"]
    rows = [[r.branch + 1, r.freq, r.ci_low, r.ci_high, r.expected]
            for r in rep.branches]
    plot = ("set xlabel 'branch'\nset ylabel 'frequency'\n"
            "plot 'collapse.csv' using 1:2:3:4 with yerrorbars title 'observed', "
            "'collapse.csv' using 1:5 with points pt 4 title 'expected'")
    run.write_csv("collapse.csv", cols, rows, plot)
    for line in rep.as_kv_lines():
        print(line)
    nsamp = sc.sampler.n_samples
    within = all(abs(r.freq - r.expected)
                 <= 3.0 * np.sqrt(r.expected * (1.0 - r.expected) / nsamp)
                 for r in rep.branches)
    ok = rep.valid and rep.flips == 0 and within
    if not ok:
        reasons = list(rep.reasons)
        if rep.flips:
            reasons.append(f"{rep.flips} classification flips")
        if not within:
            reasons.append("branch frequency outside 3 sigma of |c|^2")
        print("collapse gate failed: " + ";".join(reasons), file=sys.stderr)
    return 0 if ok else 1


def _cmd_sensitivity(run: _Run) -> int:
    params = run.need_params("sensitivity")
    sc = run.sc
    n = sc.state.n_particles
    i, j = params["i"], params["j"]
    reports = sensitivity_scan(sc.state, params["times"], i, j,
                               params["n_per_axis"], params["half_widths"])
    cols = (["i", "j"] + [f"x_{k + 1}" for k in range(n)]
            + [f"t_{k + 1}" for k in range(n)] + ["dvi_dtj", "step"])
    rows = [[r.i + 1, r.j + 1, *r.x, *r.t, r.dvi_dtj, r.step]
            for r in reports]
    dcol = 2 + 2 * n + 1
    plot = (f"set ylabel 'dv_{i + 1}/dt_{j + 1}'\n"
            f"plot 'sensitivity.csv' using 0:{dcol} with points pt 7 notitle")
    run.write_csv("sensitivity.csv", cols, rows, plot)
    vmax = max(abs(r.dvi_dtj) for r in reports)
    print(f"sensitivity_max={_fmt(vmax)}")
    print(f"n_probes={len(reports)}")
    if sc.state.n_branches == 1 and vmax >= PRODUCT_SENSITIVITY_GATE:
        print(f"sensitivity gate failed: product state has "
              f"|dv_i/dt_j| = {vmax:.3e} >= {PRODUCT_SENSITIVITY_GATE:g}",
              file=sys.stderr)
        return 1
    return 0


def _cmd_epr_scan(run: _Run) -> int:
    params = run.need_params("epr-scan")
    sc = run.sc
    T0 = sc.tau0 + np.asarray(sc.delta_offsets)
    X0 = sample_initial(sc.state, T0, sc.sampler)
    rep = epr_timing_scan(sc.state, params["t1_fixed"], params["t2_grid"],
                          X0, tau0=sc.tau0, step=sc.step,
                          offsets=sc.delta_offsets)
    cols = ["sample", "t2", "branch", "w_max"]
    rows = [[r.sample, r.t2, r.branch + 1, r.w_max] for r in rep.rows]
    plot = ("set xlabel 't2'\nset ylabel 'dominant branch weight'\n"
            "plot 'epr_scan.csv' using 2:4 with points pt 0 notitle")
    run.write_csv("epr_scan.csv", cols, rows, plot)
    print(f"flips={rep.flips}")
    nsamp = rep.n_samples
    dev_ok = True
    for t2, freqs, uncls in zip(rep.t2_grid, rep.frequencies, rep.unclassified):
        for a, (f, e) in enumerate(zip(freqs, rep.expected)):
            if abs(f - e) > 3.0 * np.sqrt(e * (1.0 - e) / nsamp):
                dev_ok = False
        print(f"freq_t2_{_fmt(t2)}=" + ",".join(_fmt(f) for f in freqs))
        print(f"unclassified_t2_{_fmt(t2)}={_fmt(uncls)}")
    print(f"max_freq_deviation={_fmt(rep.max_freq_deviation)}")
    ok = (rep.flips == 0 and dev_ok
          and all(u < 0.01 for u in rep.unclassified))
    if not ok:
        print("epr-scan gate failed: flips or frequency deviation beyond "
              "3 sigma or unclassified >= 1%", file=sys.stderr)
    return 0 if ok else 1


def _cmd_newton_check(run: _Run) -> int:
    params = run.need_params("newton-check")
    sc = run.sc
    n = sc.state.n_particles
    sheet = integrate_sheet(sc.state, sc.delta_offsets, params["x0"],
                            sc.tau0, sc.tau1, sc.step)
    taus, res = newton_report(sheet, sc.state, params["q_step"])
    cols = ["tau"] + [f"residual_{i + 1}" for i in range(n)]
    rows = [[tau, *res[k]] for k, tau in enumerate(taus)]
    plot = ("set xlabel 'tau'\nset ylabel 'residual'\nplot " + ", ".join(
        f"'newton.csv' using 1:{i + 2} with lines title 'particle {i + 1}'"
        for i in range(n)))
    run.write_csv("newton.csv", cols, rows, plot)
    rmax = float(np.abs(res).max())
    print(f"newton_max={_fmt(rmax)}")
    if rmax >= NEWTON_GATE:
        print(f"newton gate failed: max residual {rmax:.3e} >= {NEWTON_GATE:g}",
              file=sys.stderr)
        return 1
    return 0


def _cmd_residuals(run: _Run) -> int:
    params = run.need_params("residuals")
    sc = run.sc
    n = sc.state.n_particles
    hx, ht = params["hx"], params["ht"]
    cols = ([f"t_{i + 1}" for i in range(n)]
            + ["max_schrodinger", "max_hj", "max_continuity",
               "n_probes", "n_dropped"])
    rows = []
    worst = 0.0
    for k, T in enumerate(params["times"]):
        def probe_fn(state, t, _k=k):
            rng = np.random.default_rng([sc.sampler.seed, 101, _k])
            return random_probe_points(state, t, 100, rng,
                                       node_floor=PROBE_NODE_FLOOR)
        rep = residual_report(sc.state, [T], hx, ht, probe_fn=probe_fn)
        rows.append([*T, rep.max_schrodinger, rep.max_hj, rep.max_continuity,
                     rep.n_probes, rep.n_dropped])
        worst = max(worst, rep.max_schrodinger, rep.max_hj, rep.max_continuity)
    plot = (f"set ylabel 'max residual'\nset logscale y\nplot "
            f"'residuals.csv' using 0:{n + 1} with points title 'schrodinger', "
            f"'residuals.csv' using 0:{n + 2} with points title 'hj', "
            f"'residuals.csv' using 0:{n + 3} with points title 'continuity'")
    run.write_csv("residuals.csv", cols, rows, plot)
    print(f"residual_max={_fmt(worst)}")
    if worst >= RESIDUAL_GATE:
        print(f"residual gate failed: {worst:.3e} >= {RESIDUAL_GATE:g} "
              f"(hx={hx:g}, ht={ht:g})", file=sys.stderr)
        return 1
    return 0


def _cmd_validate(run: _Run) -> int:
    sc = run.sc
    print(f"name={sc.name}")
    print(f"sha256={sc.sha256}")
    print(f"n_particles={sc.state.n_particles}")
    print(f"n_branches={sc.state.n_branches}")
    print("analysis=" + ",".join(op for op, _ in sc.analysis))
    print("valid=1")
    return 0


_DISPATCH = {
    "simulate": _cmd_simulate,
    "equivariance": _cmd_equivariance,
    "collapse": _cmd_collapse,
    "sensitivity": _cmd_sensitivity,
    "epr-scan": _cmd_epr_scan,
    "newton-check": _cmd_newton_check,
    "residuals": _cmd_residuals,
    "validate": _cmd_validate,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mftsim",
        description="multi-time wave packet and beable flow simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--scenario", required=True, help="scenario JSON file")
        p.add_argument("--out", default=None,
                       help="output directory (default: scenario output_dir)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario sampler seed")
        p.add_argument("--plots", action="store_true",
                       help="also write gnuplot scripts next to each CSV")
        p.add_argument("--threads", type=int, default=0,
                       help="kernel thread count (0 = auto)")
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _build_parser().parse_args(argv)
    command_line = "mftsim " + shlex.join(argv)
    try:
        sc = load_scenario(args.scenario)
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"scenario parse error at line {exc.line}, column {exc.column}: "
              f"{exc}", file=sys.stderr)
        return 2
    except ValidationError as exc:
        print(f"scenario invalid: {exc}", file=sys.stderr)
        return 2

    if args.seed is not None:
        try:
            sampler = dataclasses.replace(sc.sampler, seed=args.seed)
        except ValueError as exc:
            print(f"bad --seed: {exc}", file=sys.stderr)
            return 2
        sc = dataclasses.replace(sc, sampler=sampler)
    if args.threads:
        set_threads(args.threads)

    if args.command == "validate":
        return _cmd_validate(_Run(sc, Path("."), command_line, False))

    out_dir = Path(args.out) if args.out is not None else Path(sc.output_dir)
    run = _Run(sc, out_dir, command_line, args.plots)
    try:
        run.need_params(args.command)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "scenario_used.json").write_text(serialize_scenario(sc),
                                                    encoding="utf-8")
        return _DISPATCH[args.command](run)
    except ValidationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except NodeStall as exc:
        print(f"run aborted: {exc} (last good tau {exc.last_good_tau:.6g})",
              file=sys.stderr)
        return 1
    except (NodeError, Unclassifiable) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
