"""Command-line front end: ``derstab <command> --scenario FILE [options]``.

Exit codes: 0 success, 1 unstable verdict under ``--require-stable``,
2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import region as rg
from . import sim
from .errors import DerstabError, FileError, InputError, NumericalError
from .netmodel import build_impedance_matrices, common_node_impedance, parse_feeder
from .placement import parse_placement
from .scenario import Scenario, load_scenario, read_text
from .stability import report, stability_margin
from .sysbuild import (GainMatrix, build_open_loop, closed_loop, cluster_pattern, colocated_pattern,
                       full_pattern, reduce)

log = logging.getLogger("derstab")

EXIT_OK, EXIT_UNSTABLE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class Model:
    """Everything derived from one scenario, built lazily."""

    def __init__(self, sc: Scenario, placement_path=None):
        self.sc = sc
        self.net = parse_feeder(read_text(sc.feeder, "feeder"))
        self.mats = build_impedance_matrices(self.net)
        self.placement = parse_placement(read_text(placement_path or sc.placement, "placement"),
                                         self.net.buses)
        self.ss = reduce(build_open_loop(self.mats, self.placement))
        self._poly = self._cheb = None

    def pattern(self, kind=None) -> np.ndarray:
        kind = kind or self.sc.pattern
        p = self.placement
        return {"cluster": lambda: cluster_pattern(p),
                "cluster_cross": lambda: cluster_pattern(p, cross_phase=True),
                "colocated": lambda: colocated_pattern(p),
                "full": lambda: full_pattern(p)}[kind]()

    @property
    def poly(self):
        if self._poly is None:
            self._poly = rg.build_polytope(self.ss, self.pattern(), self.sc.eps)
        return self._poly

    @property
    def cheb(self):
        if self._cheb is None:
            self._cheb = rg.chebyshev(self.poly, self.sc.range_mode)
        return self._cheb

    @property
    def ranges(self):
        return rg.parameter_ranges(self.cheb, self.sc.range_mode)

    def fixed_gain(self, policy=None) -> GainMatrix:
        policy = policy or self.sc.gain
        if policy == "benchmark":
            return sim.benchmark_gain(self.ss, self.pattern(self.sc.benchmark_pattern))
        if policy == "zero":
            return GainMatrix.zeros(self.pattern())
        if policy == "schedule":
            policy = "midpoint"
        return rg.sample_gain(self.ranges, self.pattern(), policy)

    def gain_source(self, policy=None):
        policy = policy or self.sc.gain
        if policy == "schedule":
            return self.schedule()
        return self.fixed_gain(policy)

    def schedule(self):
        return sim.tou_schedule(self.ranges, self.pattern(), self.placement, self.tariff(),
                                self.sc.voltage_peak, self.sc.energy_peak)

    def tariff(self):
        if self.sc.tariff is None:
            raise InputError("scenario names no tariff")
        return sim.parse_tariff(read_text(self.sc.tariff, "tariff"))

    def profile(self) -> sim.Profile:
        if self.sc.profile is not None:
            if not Path(self.sc.profile).exists():
                raise FileError(f"profile {self.sc.profile} does not exist")
            return sim.load_profile_csv(self.sc.profile, self.net.buses)
        return sim.synth_profiles(self.sc.profile_spec(), self.net.buses, self.sc.seed)

    def simulate(self, gain, profile=None) -> sim.Trace:
        profile = profile if profile is not None else self.profile()
        p = self.placement
        refs = None
        if self.sc.v_ref != 1.0:
            refs = sim.ReferenceSchedule(np.full((profile.K, len(p.S1)), self.sc.v_ref))
        return sim.simulate(self.net, p, gain, profile, refs, self.sc.truth, self.k_on(profile),
                            self.sc.der_cap, self.mats)

    def k_on(self, profile) -> int:
        return sim.default_k_on(profile.dt, self.sc.k_on_s)


# reports -------------------------------------------------------------------

def _norms(mats, ss) -> dict:
    return {"R0_fro": float(np.linalg.norm(mats.R0)), "X0_fro": float(np.linalg.norm(mats.X0)),
            "Bbar_fro": float(np.linalg.norm(ss.Bbar))}


def cmd_build(m: Model, args) -> tuple:
    p = m.placement
    out = {"n": m.net.n, "buses": m.mats.n, "phase_count": m.net.phase_count,
           "d": p.d, "s": p.s, "y": int(m.pattern().sum()), "pattern": m.sc.pattern,
           "der_nodes": p.der_nodes(), "sensor_nodes": p.sensor_nodes(),
           "norms": _norms(m.mats, m.ss)}
    text = (f"buses={out['buses']} (nodes {out['n']})  d={p.d}  s={p.s}  y={out['y']}\n"
            f"|R0|={out['norms']['R0_fro']:.6g}  |X0|={out['norms']['X0_fro']:.6g}  "
            f"|Bbar|={out['norms']['Bbar_fro']:.6g}")
    return out, text, True


def cmd_stability(m: Model, args) -> tuple:
    gain = m.fixed_gain()
    rep = report(closed_loop(m.ss, gain), m.sc.eps)
    out = {"gain": m.sc.gain, "y": gain.y, **rep.to_dict()}
    lines = [f"gain={m.sc.gain}  y={gain.y}  eps={m.sc.eps}",
             f"eigen verdict: {'stable' if rep.eig_verdict else 'UNSTABLE'}  (rho_exact={rep.rho_exact:.6f})",
             f"disc verdict:  {'certified' if rep.disc_verdict else 'not certified'}  "
             f"(margin={rep.margin:.6f}, rho_hat={rep.rho_hat:.6f})",
             f"{'row':>4} {'center':>12} {'radius':>12}"]
    lines += [f"{dsc.row:>4} {dsc.center:>12.6f} {dsc.radius:>12.6f}" for dsc in rep.discs]
    return out, "\n".join(lines), rep.eig_verdict


def cmd_region(m: Model, args) -> tuple:
    poly, cheb = m.poly, m.cheb
    ranges = m.ranges
    cert = rg.hypercube_certified(poly, cheb, ranges)
    out = {"y": poly.y, "rows": poly.rows, "pruned": poly.pruned, "eps": poly.eps,
           "radius": cheb.radius, "range_mode": m.sc.range_mode,
           "range_width": float(ranges[0, 1] - ranges[0, 0]), "hypercube_certified": cert,
           "chebyshev": replace(cheb, ranges=ranges).to_dict()}
    text = (f"polytope: {poly.rows} rows over y={poly.y} parameters ({poly.pruned} zero terms pruned)\n"
            f"Chebyshev radius {cheb.radius:.6f}; {m.sc.range_mode} range width "
            f"{out['range_width']:.6f}; hypercube certified: {cert}")
    if args.out and args.svg:
        rg.slice_svg(Path(args.out) / "region_slice.svg", poly, cheb, ranges=ranges)
    return out, text, cert


def cmd_simulate(m: Model, args) -> tuple:
    gain = m.gain_source()
    tr = m.simulate(gain)
    mt = sim.metrics(tr, m.sc.band, settle_band=m.sc.settle_band)
    stable = True
    if isinstance(gain, GainMatrix):
        stable = report(closed_loop(m.ss, gain), m.sc.eps).eig_verdict
    if args.out:
        tr.to_csv(Path(args.out) / "trace.csv")
        if args.svg:
            envelope_svg(Path(args.out) / "envelope.svg", tr, m.sc.band)
    out = {"gain": m.sc.gain, "truth": tr.truth, "k_on": tr.k_on, "steps": int(tr.clock.size),
           "saturated": tr.saturated, "eig_verdict": stable, "metrics": mt.to_dict()}
    text = (f"{tr.truth} truth, gain={m.sc.gain}: violation share {mt.violation_share:.4f}, "
            f"settling {mt.settling_steps if mt.settling_steps is not None else 'never'} steps")
    return out, text, stable


def cmd_economics(m: Model, args) -> tuple:
    tariff = m.tariff()
    profile = m.profile()
    off = m.simulate(GainMatrix.zeros(m.pattern()), profile)
    fixed = m.simulate(m.fixed_gain("midpoint"), profile)
    adjusted = m.simulate(m.schedule(), profile)
    table = {"fixed": sim.economics(fixed, off, tariff, m.sc.s_base_kva),
             "adjusted": sim.economics(adjusted, off, tariff, m.sc.s_base_kva)}
    if args.out:
        off.to_csv(Path(args.out) / "trace_off.csv")
        fixed.to_csv(Path(args.out) / "trace_fixed.csv")
        adjusted.to_csv(Path(args.out) / "trace_adjusted.csv")
    out = {"s_base_kva": m.sc.s_base_kva, "rows": [k for k, _ in sim.REVENUE_ROWS], "table": table}
    return out, sim.revenue_table(table), True


def cmd_sitescan(m: Model, args) -> tuple:
    cands = m.sc.candidates or (m.sc.placement,)
    rows = []
    ok = True
    for path in cands:
        mm = Model(m.sc, path)
        cheb = mm.cheb
        gain = mm.fixed_gain("midpoint")
        cl = closed_loop(mm.ss, gain)
        margin, rho_hat = stability_margin(cl)
        rep = report(cl, m.sc.eps)
        sens = mm.placement.sensor_nodes()
        z_self = {str(k): abs(common_node_impedance(mm.net, mm.mats, k, k, mm.net.phases(k)[0]))
                  for k in sens}
        z_pair = {f"{a}-{b}": abs(common_node_impedance(mm.net, mm.mats, a, b, mm.net.phases(a)[0]))
                  for i, a in enumerate(sens) for b in sens[i + 1:]
                  if mm.net.phases(a)[0] in mm.net.phases(b)}
        ok &= rep.eig_verdict
        rows.append({"placement": Path(path).name, "d": mm.placement.d, "s": mm.placement.s,
                     "y": cheb.center.size, "radius": cheb.radius, "margin": margin, "rho_hat": rho_hat,
                     "rho_exact": rep.rho_exact, "sensor_self_impedance": z_self,
                     "sensor_pair_impedance": z_pair})
    lines = [f"{'placement':<24} {'d':>3} {'s':>3} {'y':>4} {'radius':>10} {'margin':>10} {'rho':>8}"]
    lines += [f"{r['placement']:<24} {r['d']:>3} {r['s']:>3} {r['y']:>4} {r['radius']:>10.5f} "
              f"{r['margin']:>10.5f} {r['rho_exact']:>8.5f}" for r in rows]
    return {"sitings": rows}, "\n".join(lines), ok


def envelope_svg(path, trace: sim.Trace, band: float) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    t = trace.clock - trace.clock[0]
    V = trace.V
    fig, ax = plt.subplots(figsize=(6, 3.2))
    ax.fill_between(t, V.min(axis=1), V.max(axis=1), color="tab:purple", alpha=0.4, label="envelope")
    for lvl in (1 - band, 1 + band):
        ax.axhline(lvl, color="k", lw=0.8)
    ax.axvline(t[min(trace.k_on, len(t) - 1)], color="grey", ls="--", lw=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("|V| (pu)")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


COMMANDS = {"build": cmd_build, "stability": cmd_stability, "region": cmd_region,
            "simulate": cmd_simulate, "economics": cmd_economics, "site-scan": cmd_sitescan}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="derstab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--scenario", required=True, help="flat key = value scenario file")
    ap.add_argument("--out", help="directory for JSON/CSV/SVG outputs (JSON goes to stdout otherwise)")
    ap.add_argument("--seed", type=int, help="override the scenario seed")
    ap.add_argument("--eps", type=float, help="disc-condition tightening")
    ap.add_argument("--range-mode", choices=("paper", "safe"))
    ap.add_argument("--truth", choices=("linear", "sweep"))
    ap.add_argument("--require-stable", action="store_true",
                    help="exit 1 when the analysed gain is not stable")
    ap.add_argument("--svg", action="store_true", help="also write SVG figures (needs --out)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        sc = load_scenario(args.scenario)
        if args.seed is not None:
            sc.seed = args.seed
        if args.eps is not None:
            sc.eps = args.eps
        if args.range_mode:
            sc.range_mode = args.range_mode
        if args.truth:
            sc.truth = args.truth
        for path in (sc.feeder, sc.placement):
            if not Path(path).exists():
                raise FileError(f"{path} does not exist")
        if args.out:
            Path(args.out).mkdir(parents=True, exist_ok=True)
        model = Model(sc)
        out, text, verdict = COMMANDS[args.command](model, args)
        out = {"command": args.command, "scenario": Path(args.scenario).name, "seed": sc.seed, **out}
        if args.out:
            name = args.command.replace("-", "_") + ".json"
            (Path(args.out) / name).write_text(dumps(out), encoding="utf-8")
            print(text)
        else:
            sys.stdout.write(dumps(out))
    except (InputError, ValueError) as exc:
        print(f"input error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, ZeroDivisionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DerstabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    log.info("%s finished in %.2fs", args.command, time.perf_counter() - t0)
    if args.require_stable and not verdict:
        print("verdict: unstable", file=sys.stderr)
        return EXIT_UNSTABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
