"""Command line interface: ``subdiff <command> <scenario> [options]``.

Commands: ``steady``, ``evolve``, ``verify``, ``sweep``, ``gronwall-demo``,
``mlf-table``. The scenario is a built-in name or a YAML file.

Exit codes: 0 success, 2 invalid scenario, 3 a hard hypothesis failure
(e.g. the operator is not elliptic), 4 solver failure.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import scenarios
from .decayfit import Run, smallness_probe, verify_decay_theorem, verify_ut_theorem
from .evolve import MonitorConstants, StepFailure, monitor_energy, solve_transient
from .fracops import TimeGrid
from .gronwall import MajorantSpec, check_majorization, nu_majorant, solve_fractional_relaxation
from .model import Source, check_pinfty
from .scenarios import ConfigError, Scenario
from .space import EllipticityError, norm_Hs_sq
from .specialfn import ml_bound_suite
from .steady import SolverError, solve_steady

logger = logging.getLogger("subdiff")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_SOLVER = 4

COMMANDS = ("steady", "evolve", "verify", "sweep", "gronwall-demo", "mlf-table")


@dataclass
class Outcome:
    scenario: Scenario
    u_inf: np.ndarray
    run: Run | None = None
    steady_iterations: int = 0


def _write(path, text: str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def prepare(cfg: dict, seed: int = 0) -> Outcome:
    """Steady state for a validated config."""
    sc = Scenario(cfg, seed)
    if cfg["initial"]["mode"] == "controlled":
        U, R, u_inf, r_inf = sc.controlled()
        sc.source = Source(r_inf, samples=R, meta={"kind": "controlled"})
        sc.r_inf = r_inf
        pb = sc.problem(U[0])
        pb.A  # noqa: B018 - assemble now so ellipticity errors surface here
        return Outcome(sc, u_inf)
    pb = sc.problem()
    pb.A  # noqa: B018
    res = solve_steady(pb)
    return Outcome(sc, res.u, steady_iterations=res.iterations)


def evolve(cfg: dict, seed: int = 0) -> Outcome:
    out = prepare(cfg, seed)
    sc = out.scenario
    vc = cfg["verify"]
    pb = sc.problem(sc.initial_state(out.u_inf))
    hist = solve_transient(pb, u_inf=out.u_inf, history_method=vc["history"])
    trace = monitor_energy(hist, out.u_inf, regime=vc["regime"], phi1_variant=vc["phi1_variant"])
    out.run = Run(pb, hist, out.u_inf, trace, cfg["name"])
    return out


def _write_steady(out: Outcome, outdir: str) -> None:
    x = out.scenario.grid.x
    _write_rows(os.path.join(outdir, "steady.csv"), ["x", "u_inf"], zip(x.tolist(), out.u_inf.tolist()))


def _write_norms(out: Outcome, outdir: str) -> None:
    h = out.run.history
    u_inf = out.u_inf
    cols = [h.t, h.norms_sq(0, u_inf), h.norms_sq(1, u_inf), h.norms_sq(2, u_inf), h.norms_sq(-1, u_inf)]
    _write_rows(os.path.join(outdir, "norms.csv"), ["t", "norm_L2_sq", "norm_H1_sq", "norm_H2_sq", "norm_Hm1_sq"],
                zip(*[c.tolist() for c in cols]))
    with open(os.path.join(outdir, "monitor.csv"), "w", newline="") as fh:
        out.run.trace.to_csv(fh)


def _plot_norms(out: Outcome, outdir: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "subdiff"
    os.makedirs(os.path.join(outdir, "plots"), exist_ok=True)
    h = out.run.history
    alpha = out.run.problem.alpha
    t = h.t[1:]
    fig, ax = plt.subplots(figsize=(6, 4))
    for s, label in ((0, "L2"), (1, "H1"), (2, "H2")):
        y = h.norms_sq(s, out.u_inf)[1:]
        ax.plot(t, np.where(y > 0, y, np.nan), label=f"||u - u_inf||^2 in {label}")
    if alpha < 1.0:
        ax.set_xscale("log")
        ax.set_yscale("log")
        y0 = h.norms_sq(0, out.u_inf)
        ref_t = t[t >= t[-1] / 100.0]
        if ref_t.size and y0[-1] > 0:
            ax.plot(ref_t, y0[-1] * (ref_t / t[-1]) ** (-alpha), "k--", label=f"slope -{alpha:g}")
    else:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(os.path.join(outdir, "plots", "norms.svg"), format="svg", metadata={"Date": None})
    plt.close(fig)


def _summary_lines(out: Outcome) -> list:
    sc = out.scenario
    pb = out.run.problem if out.run else sc.problem()
    lines = [
        f"scenario: {sc.cfg['name']}",
        f"alpha: {sc.alpha!r}",
        f"nx: {sc.grid.nx}",
        f"nt: {sc.tgrid.N}",
        f"steady newton iterations: {out.steady_iterations}",
        f"min p f'(u_inf) - q: {check_pinfty(pb.p, pb.q, pb.nl, out.u_inf)!r}",
    ]
    if out.run is not None:
        hdr = out.run.trace.header
        for key in sorted(hdr):
            lines.append(f"monitor {key}: {hdr[key]!r}")
        lines.append(f"barrier tripped: {out.run.trace.barrier_tripped}")
    return lines


def verify(cfg: dict, seed: int, outdir: str) -> int:
    out = evolve(cfg, seed)
    _write_steady(out, outdir)
    _write_norms(out, outdir)
    _plot_norms(out, outdir)
    vc = cfg["verify"]
    text = _summary_lines(out)
    rows = []
    window = tuple(vc["window"]) if vc["window"] else None
    for name in vc["theorems"]:
        if name == "decay":
            rep = verify_decay_theorem(out.run, window=window)
        elif name == "ut":
            rep = verify_ut_theorem(out.run, t0=vc["t0"], beta=vc["beta"], window=window)
        else:
            pb = out.run.problem
            probe = smallness_probe(pb, out.u_inf, vc["probe_radii"], regime=vc["regime"],
                                    history_method=vc["history"])
            text.append("[probe]")
            text.append(probe.to_text().rstrip("\n"))
            for r, st, note in probe.rows:
                rows.append(("probe", f"radius={r!r}", st, math.nan, math.nan, math.nan))
            continue
        text.append(f"[{name}]")
        text.append(rep.to_text().rstrip("\n"))
        for v in rep.verdicts:
            rows.append((name, v.claim, v.status, v.margin, v.fitted, v.tolerance))
    _write(os.path.join(outdir, "report.txt"), "\n".join(text) + "\n")
    _write_rows(os.path.join(outdir, "report.csv"), ["theorem", "claim_id", "status", "margin", "fitted_value", "tolerance"], rows)
    return EXIT_OK


def _run_command(command: str, cfg: dict, seed: int, outdir: str) -> int:
    os.makedirs(outdir, exist_ok=True)
    _write(os.path.join(outdir, "config.yaml"), scenarios.dump(cfg))
    if command == "steady":
        out = prepare(cfg, seed)
        _write_steady(out, outdir)
        _write(os.path.join(outdir, "report.txt"), "\n".join(_summary_lines(out)) + "\n")
        return EXIT_OK
    if command == "evolve":
        out = evolve(cfg, seed)
        _write_steady(out, outdir)
        _write_norms(out, outdir)
        _plot_norms(out, outdir)
        _write(os.path.join(outdir, "report.txt"), "\n".join(_summary_lines(out)) + "\n")
        return EXIT_OK
    if command == "verify":
        return verify(cfg, seed, outdir)
    raise ValueError(command)


def _sweep_one(args):
    cfg, seed, outdir = args
    try:
        return cfg["alpha"], _guarded(lambda: verify(cfg, seed, outdir))
    except Exception as exc:  # pragma: no cover - reported per run
        logger.error("alpha=%s failed: %s", cfg["alpha"], exc)
        return cfg["alpha"], EXIT_SOLVER


def sweep(raw: dict, alphas, seed: int, outdir: str, jobs: int) -> int:
    tasks = []
    for a in alphas:
        cfg = scenarios.validate(scenarios.apply_overrides(raw, [f"alpha={a!r}"]))
        sub = os.path.join(outdir, f"alpha={a!r}")
        os.makedirs(sub, exist_ok=True)
        _write(os.path.join(sub, "config.yaml"), scenarios.dump(cfg))
        tasks.append((cfg, seed, sub))
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(t) for t in tasks]
    _write_rows(os.path.join(outdir, "sweep.csv"), ["alpha", "exit_code"], results)
    return max(code for _, code in results) if results else EXIT_OK


def gronwall_demo(outdir: str, seed: int) -> int:
    """Tables of the L1 solution and the majorant for a small suite of specs."""
    os.makedirs(outdir, exist_ok=True)
    suite = [
        MajorantSpec(0.5, 1.0, 1.0, "zero"),
        MajorantSpec(0.5, 1.0, 0.5, "constant", 0.3),
        MajorantSpec(0.5, 0.7, 0.5, "power", 0.2),
        MajorantSpec(0.7, 1.5, 1.0, "shifted_power", 1.0),
        MajorantSpec(1.0, 1.0, 1.0, "exponential", 1.0, c1=2.0),
    ]
    rows = []
    for i, spec in enumerate(suite):
        gamma = min((2.0 - spec.alpha) / spec.alpha, 4.0) if spec.alpha < 1.0 else 1.0
        tg = TimeGrid.graded(10.0, 200, gamma)
        phi = spec.phi(tg.nodes)
        if spec.phi_kind == "power":
            phi[0] = 0.0  # unused by the implicit scheme
        eta = solve_fractional_relaxation(spec.alpha, spec.c0, phi, spec.eta0, tg)
        rep = check_majorization(eta, spec, tg, nu=nu_majorant(spec, tg))
        _write(os.path.join(outdir, f"spec{i}_{spec.phi_kind}.csv"), rep.to_csv())
        rows.append((i, spec.phi_kind, spec.alpha, spec.c0, spec.eta0, spec.phi0, "pass" if rep.passed else "fail",
                     rep.worst_gap))
    _write_rows(os.path.join(outdir, "gronwall.csv"),
                ["spec", "phi_kind", "alpha", "c0", "eta0", "phi0", "status", "worst_gap"], rows)
    return EXIT_OK


def mlf_table(outdir: str, alphas) -> int:
    os.makedirs(outdir, exist_ok=True)
    xs = np.logspace(-3, 4, 1000)
    lines = []
    ok = True
    for a in alphas:
        rep = ml_bound_suite(a, xs)
        ok &= rep.passed
        lines.append(rep.to_csv() if not lines else rep.to_csv().split("\n", 1)[1])
    _write(os.path.join(outdir, "mlf_table.csv"), "".join(lines))
    return EXIT_OK if ok else EXIT_HYPOTHESIS


def _guarded(fn) -> int:
    try:
        return fn()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EllipticityError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except StepFailure as exc:
        print(f"solver failure at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="subdiff", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("scenario", nargs="?", default=None,
                    help=f"built-in ({', '.join(sorted(scenarios.BUILTINS))}) or YAML file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a scenario key by dotted path, e.g. time.nt=800")
    ap.add_argument("--seed", type=int, default=0, help="seed for randomized profiles")
    ap.add_argument("--out", default=None, help="output directory (default: runs/<name>)")
    ap.add_argument("--alphas", default="0.4,0.6,0.8", help="comma-separated alpha list for sweep / mlf-table")
    ap.add_argument("--jobs", type=int, default=1, help="parallel runs for sweep")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError:
        print(f"config error: --alphas: cannot parse {args.alphas!r}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "mlf-table":
        return mlf_table(args.out or os.path.join("runs", "mlf-table"), alphas)
    if args.command == "gronwall-demo":
        return gronwall_demo(args.out or os.path.join("runs", "gronwall-demo"), args.seed)
    if args.scenario is None:
        print("config error: scenario: a built-in name or a file path is required", file=sys.stderr)
        return EXIT_CONFIG

    def go():
        try:
            raw = scenarios.load(args.scenario)
        except FileNotFoundError:
            raise ConfigError("scenario", f"no built-in or file named {args.scenario!r}") from None
        raw = scenarios.apply_overrides(raw, args.overrides)
        if args.command == "sweep":
            scenarios.validate(raw)
            outdir = args.out or os.path.join("runs", f"{raw.get('name', 'scenario')}-sweep")
            return sweep(raw, alphas, args.seed, outdir, args.jobs)
        cfg = scenarios.validate(raw)
        outdir = args.out or os.path.join("runs", cfg["name"])
        return _run_command(args.command, cfg, args.seed, outdir)

    return _guarded(go)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
