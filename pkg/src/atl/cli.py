"""Command-line front end: run, certify, probe-nussbaum, batch.

Exit codes
    0  success (Completed with all configured assertions / uniform certificate / consistent probe)
    1  configuration error (or an empty batch directory)
    2  run ended Diverged or GainOverflow
    3  certificate Violated or probe Inconsistent
    4  run Completed but a configured assertion failed
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis as an
from . import nussbaum as nb
from . import scenario_file as sfm
from .errors import ConfigError, DomainError, GainOverflowError
from .simulate import run
from .trace_io import write_trace

log = logging.getLogger("atl")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_VIOLATED, EXIT_ASSERTION = 0, 1, 2, 3, 4
CHECKPOINTS = (5.0, 10.0, 20.0, 30.0)


@dataclass
class RunSummary:
    scenario: str
    exit_code: int
    verdict: str
    error_at: dict
    steady_band: float
    chatter_index: float
    message: str = ""


def _fmt(v) -> str:
    return "nan" if v is None else f"{v:.6g}"


def _assertions(trace, opts, metrics, budget):
    """List of (name, ok, detail) for the assertions configured in [outputs]."""
    out = []
    if opts.max_band is not None:
        out.append(("steady_band", metrics.steady_band < opts.max_band,
                    f"{metrics.steady_band:.6g} < {opts.max_band:g}"))
    if opts.require_no_clamp:
        out.append(("no_clamp", trace.clamp_events == 0, f"{trace.clamp_events} clamp events"))
    if opts.require_monotone:
        for name in ("zeta", "theta_hat"):
            out.append((f"{name}_nondecreasing", an.is_nondecreasing(getattr(trace, name)), ""))
    if opts.max_tail_growth is not None:
        for name in ("zeta", "theta_hat"):
            g = an.boundedness_growth(getattr(trace, name), trace.t)
            out.append((f"{name}_tail_growth", g < opts.max_tail_growth, f"{g:.6g} < {opts.max_tail_growth:g}"))
    if opts.require_budget:
        if budget is None:
            out.append(("lyapunov_budget", False, "no oracle diagnostics available"))
        else:
            tol = -1e-6 * budget.delta
            out.append(("lyapunov_budget", budget.min_margin >= tol,
                        f"min margin {budget.min_margin:.6g} >= {tol:.3g}"))
    return out


def execute(scenario_path, out_dir, overrides=()) -> RunSummary:
    """Run one scenario file and write its bundle; never raises for config problems."""
    name = Path(scenario_path).stem
    try:
        sf = sfm.load(scenario_path, overrides)
        name = sf.get("outputs", "name")
        scenario = sfm.build_scenario(sf)
        opts = sfm.output_options(sf)
    except ConfigError as exc:
        log.error("%s: %s", scenario_path, exc)
        return RunSummary(name, EXIT_CONFIG, "ConfigError", {}, math.nan, math.nan, str(exc))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.echo").write_text(sfm.echo_text(sf))
    trace = run(scenario)
    write_trace(trace, out / "trace.csv")

    lines = [f"scenario: {name}", f"verdict: {trace.verdict.value}", f"nodes: {len(trace)}",
             f"clamp_events: {trace.clamp_events}"]
    if not trace.completed:
        lines.append(f"verdict_time: {trace.verdict_time!r}")
        lines.append(f"message: {trace.message}")
        (out / "metrics.txt").write_text("\n".join(lines) + "\n")
        log.error("%s: %s at t=%s: %s", name, trace.verdict.value, trace.verdict_time, trace.message)
        return RunSummary(name, EXIT_DIVERGED, trace.verdict.value, {}, math.nan, math.nan,
                          f"{trace.verdict.value} at t={trace.verdict_time}")

    metrics = an.tracking_metrics(trace, CHECKPOINTS)
    budget = None
    cert_lines = []
    oracle = scenario.oracle
    if oracle is not None:
        cert = an.certify_controllability(scenario.plant, scenario.faults, oracle.alpha, trace)
        cert_lines.append(cert.to_text())
        skew = an.skew_identity_check(oracle.alpha, scenario.plant, scenario.faults, trace)
        cert_lines.append(f"skew_identity_max_relative: {skew.max_relative:.17g} ({'ok' if skew.ok else 'FAIL'})\n")
        if scenario.controller.variant.uses_nussbaum:
            budget = an.lyapunov_budget(trace, oracle, scenario.plant, scenario.faults,
                                        scenario.reference, scenario.controller)
            lines += [f"lyapunov_theta: {budget.theta:.17g}", f"lyapunov_delta: {budget.delta:.17g}",
                      f"lyapunov_min_margin: {budget.min_margin:.17g}",
                      f"s_sq_integral_last_quarter_fraction: {budget.last_quarter_fraction:.17g}"]
    else:
        cert_lines.append("no oracle configured: controllability not certified\n")
    (out / "certificate.txt").write_text("".join(cert_lines))

    if opts.probe and scenario.controller.variant.uses_nussbaum:
        try:
            rep = nb.probe_bl(scenario.controller.nussbaum, opts.probe_horizons, opts.probe_target)
            (out / "probe.txt").write_text(rep.to_text())
        except GainOverflowError as exc:
            (out / "probe.txt").write_text(f"verdict: GainOverflow\nmessage: {exc}\n")

    checks = _assertions(trace, opts, metrics, budget)
    lines.append(metrics.to_text().rstrip("\n"))
    lines += [f"assert {n}: {'pass' if ok else 'FAIL'} {d}".rstrip() for n, ok, d in checks]
    (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    failed = [n for n, ok, _ in checks if not ok]
    code = EXIT_ASSERTION if failed else EXIT_OK
    return RunSummary(name, code, trace.verdict.value, metrics.error_at, metrics.steady_band,
                      metrics.chatter_index, ("failed: " + ", ".join(failed)) if failed else "")


def cmd_run(scenario_path, out_dir, overrides=()) -> int:
    summary = execute(scenario_path, out_dir, overrides)
    print(f"{summary.scenario}: {summary.verdict} (exit {summary.exit_code}) {summary.message}".rstrip())
    return summary.exit_code


# --- certify ------------------------------------------------------------------

def _parse_range(text: str, where: str):
    parts = text.replace(":", " ").split()
    try:
        if len(parts) == 1:
            v = float(parts[0])
            return v, v, 1
        if len(parts) == 3:
            return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        pass
    raise ConfigError(f"{where}: expected 'lo:hi:count' or a single value, got {text!r}")


def _load_alpha_spec(spec: str):
    """Built-in alpha name, or a file with [alpha] name=... and an optional [box]."""
    path = Path(spec)
    if not path.is_file():
        return spec, {}
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(path.read_text(), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for sec in cp.sections():
        if sec not in ("alpha", "box"):
            raise ConfigError(f"{path}: unknown section [{sec}]")
    if not cp.has_option("alpha", "name"):
        raise ConfigError(f"{path}: [alpha] name is required")
    extra = set(cp["alpha"]) - {"name"}
    if extra:
        raise ConfigError(f"{path}: unknown key alpha.{sorted(extra)[0]}")
    box = dict(cp["box"]) if cp.has_section("box") else {}
    return cp["alpha"]["name"], box


def _box_samples(box: dict, m: int, n: int):
    names = [f"x_{i}_{j}" for i in range(1, n + 1) for j in range(1, m + 1)]
    for key in box:
        if key not in (*names, "t"):
            raise ConfigError(f"box key {key!r} is not a state entry (x_i_j) or t")
    bounds, counts = [], []
    for nm in names:
        lo, hi, c = _parse_range(box.get(nm, "0"), f"box.{nm}")
        bounds.append((lo, hi))
        counts.append(c)
    t_lo, t_hi, t_c = _parse_range(box.get("t", "0"), "box.t")
    return an.grid_samples(bounds, counts, np.linspace(t_lo, t_hi, t_c))


def cmd_certify(scenario_path, alpha_spec, out_dir, box_items=(), use_trace=False,
                fault_free=False, overrides=()) -> int:
    try:
        sf = sfm.load(scenario_path, overrides)
        plant = sfm.build_plant(sf)
        schedule = None if fault_free else sfm.build_faults(sf, plant.m)
        name, box = _load_alpha_spec(alpha_spec)
        alpha = an.make_alpha(name, plant.m)
        for item in box_items:
            k, sep, v = item.partition("=")
            if not sep:
                raise ConfigError(f"box item {item!r} must look like key=lo:hi:count")
            box[k.strip()] = v.strip()
        if use_trace:
            trace = run(sfm.build_scenario(sf))
            if not trace.completed:
                print(f"run ended {trace.verdict.value} at t={trace.verdict_time}; certifying its partial trace")
            samples = trace
        elif box:
            samples = _box_samples(box, plant.m, plant.n)
        else:
            raise ConfigError("certify needs --trace or a sampling box")
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cert = an.certify_controllability(plant, schedule, alpha, samples)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "certificate.txt").write_text(cert.to_text())
    print(cert.to_text(), end="")
    return EXIT_OK if cert.uniform else EXIT_VIOLATED


# --- probe --------------------------------------------------------------------

def cmd_probe_nussbaum(kind, horizons, L_target, out_dir, a=None, b=None, cap=1e300) -> int:
    try:
        fn = nb.make_nussbaum(kind, a, b, cap)
        rep = nb.probe_bl(fn, horizons, L_target)
        text = rep.to_text()
        code = EXIT_VIOLATED if rep.verdict is nb.ProbeVerdict.INCONSISTENT else EXIT_OK
    except GainOverflowError as exc:
        text = f"verdict: GainOverflow\nmessage: {exc}\n"
        code = EXIT_VIOLATED
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "probe.txt").write_text(text)
    print(text, end="")
    return code


# --- batch --------------------------------------------------------------------

def _batch_worker(args):
    path, out_dir = args
    try:
        return execute(path, out_dir)
    except Exception as exc:  # isolate one broken run from the rest of the batch
        return RunSummary(Path(path).stem, EXIT_CONFIG, "Error", {}, math.nan, math.nan, repr(exc))


def summary_table(rows) -> str:
    head = ["scenario", "exit", "verdict", *[f"e_at_{c:g}" for c in CHECKPOINTS], "steady_band", "chatter", "message"]
    lines = ["\t".join(head)]
    for r in rows:
        cells = [r.scenario, str(r.exit_code), r.verdict, *[_fmt(r.error_at.get(c)) for c in CHECKPOINTS],
                 _fmt(r.steady_band), _fmt(r.chatter_index), r.message]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def cmd_batch(scenario_dir, out_dir, parallel: int = 1) -> int:
    paths = sorted(Path(scenario_dir).glob("*.cfg"))
    if not paths:
        print(f"no scenario files in {scenario_dir}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(out_dir)
    jobs = [(str(p), str(out / p.stem)) for p in paths]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_batch_worker, jobs))
    else:
        rows = [_batch_worker(j) for j in jobs]
    out.mkdir(parents=True, exist_ok=True)
    table = summary_table(rows)
    (out / "summary.tsv").write_text(table)
    print(table, end="")
    failures = [r for r in rows if r.exit_code != EXIT_OK]
    if failures:
        print(f"first failure: {failures[0].scenario} (exit {failures[0].exit_code}) {failures[0].message}",
              file=sys.stderr)
        return max(r.exit_code for r in failures)
    return EXIT_OK


# --- entry point -----------------------------------------------------------------

def _float_list(text):
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="atl", description="Adaptive tracking lab: simulate, certify, probe.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario file")
    r.add_argument("scenario")
    r.add_argument("--out", required=True)
    r.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")

    c = sub.add_parser("certify", help="sampling-based controllability certificate")
    c.add_argument("scenario")
    c.add_argument("--alpha", default="identity", help="built-in alpha name or file with [alpha]/[box]")
    c.add_argument("--out", required=True)
    c.add_argument("--box", action="append", default=[], metavar="KEY=LO:HI:COUNT")
    c.add_argument("--trace", action="store_true", help="certify along a simulated trace")
    c.add_argument("--fault-free", action="store_true", help="ignore the fault schedule")
    c.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")

    pr = sub.add_parser("probe-nussbaum", help="finite-horizon BL/B-type probe")
    pr.add_argument("function", choices=["exp_quad_cos", "exp_quad_sin", "quad_sin", "exp_sin", "constant"])
    pr.add_argument("--a", type=float)
    pr.add_argument("--b", type=float)
    pr.add_argument("--horizons", type=_float_list, default=[10, 20, 30, 40, 50, 60])
    pr.add_argument("--target", type=float, default=10.0)
    pr.add_argument("--cap", type=float, default=1e300)
    pr.add_argument("--out", required=True)

    b = sub.add_parser("batch", help="run every *.cfg in a directory")
    b.add_argument("directory")
    b.add_argument("--out", required=True)
    b.add_argument("--parallel", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args.scenario, args.out, args.override)
    if args.command == "certify":
        return cmd_certify(args.scenario, args.alpha, args.out, args.box, args.trace, args.fault_free, args.override)
    if args.command == "probe-nussbaum":
        return cmd_probe_nussbaum(args.function, args.horizons, args.target, args.out, args.a, args.b, args.cap)
    return cmd_batch(args.directory, args.out, max(1, args.parallel))


if __name__ == "__main__":
    sys.exit(main())
