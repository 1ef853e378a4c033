"""Quasi-steady-state closed-loop simulation, metrics and tariff accounting.

One step k: solve voltages for the current injections, measure tracking
errors at the sensors, and (from k_on on) update the DER set-points by
u = -F e. The new set-points apply from step k+1.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, MismatchedScenario, ParseError
from .netmodel import ImpedanceMatrices, RadialNetwork, build_impedance_matrices
from .placement import Placement
from .powerflow import SweepSolver
from .sysbuild import GainMatrix, StateSpace

log = logging.getLogger(__name__)

DAY = 86400


def hhmm_to_seconds(hhmm) -> int:
    s = str(hhmm).strip().zfill(4)
    h, m = int(s[:-2]), int(s[-2:])
    if not (0 <= h <= 24 and 0 <= m < 60) or h * 3600 + m * 60 > DAY:
        raise ValueError(f"bad clock time {hhmm!r}")
    return h * 3600 + m * 60


# profiles ------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """Uncontrolled injections p~, q~ (K x buses, p.u., generation positive)."""

    p: np.ndarray
    q: np.ndarray
    buses: tuple
    dt: float = 5.0
    start_s: float = 0.0

    def __post_init__(self):
        if self.p.shape != self.q.shape or self.p.shape[1] != len(self.buses):
            raise DimensionError("profile arrays must be K x buses and share a shape")

    @property
    def K(self) -> int:
        return self.p.shape[0]

    @property
    def clock(self) -> np.ndarray:
        return self.start_s + self.dt * np.arange(self.K)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "node", "phase", "p", "q"])
            for k, t in enumerate(self.clock):
                for b, (node, ph) in enumerate(self.buses):
                    w.writerow([repr(float(t)), node, ph, repr(float(self.p[k, b])), repr(float(self.q[k, b]))])


def load_profile_csv(path, buses) -> Profile:
    index = {bus: b for b, bus in enumerate(buses)}
    rows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t", "node", "phase", "p", "q"]:
            raise ParseError(f"profile header must be t,node,phase,p,q, got {reader.fieldnames}")
        for n, row in enumerate(reader, start=2):
            try:
                key = (int(row["node"]), row["phase"])
                t, pv, qv = float(row["t"]), float(row["p"]), float(row["q"])
            except (TypeError, ValueError) as exc:
                raise ParseError(str(exc), n) from None
            if key not in index:
                raise ParseError(f"unknown bus {key}", n)
            rows.setdefault(t, {})[index[key]] = (pv, qv)
    times = sorted(rows)
    if not times:
        raise ParseError("empty profile")
    dt = times[1] - times[0] if len(times) > 1 else 5.0
    p = np.zeros((len(times), len(buses)))
    q = np.zeros_like(p)
    for k, t in enumerate(times):
        for b, (pv, qv) in rows[t].items():
            p[k, b], q[k, b] = pv, qv
    return Profile(p, q, tuple(buses), dt, times[0])


@dataclass(frozen=True)
class ProfileSpec:
    """Scenario descriptor for :func:`synth_profiles`.

    Loads follow a two-peak daily shape and PV a clipped sine between 06:00
    and 19:00 whose peak is ``penetration`` times the peak load at each
    bus. Before ``event_start_s`` (seconds after start) PV is dimmed by
    cloud cover of depth ``event_depth``; the cloud then clears linearly
    over ``event_ramp_s`` seconds, producing the over-voltage event.
    """

    start_hhmm: str = "1100"
    horizon_s: float = 480.0
    dt: float = 5.0
    base_load: float = 0.01
    power_factor: float = 0.98
    penetration: float = 1.25
    solar_fraction: float = 1.0
    noise: float = 0.0
    event_start_s: Optional[float] = None
    event_ramp_s: float = 60.0
    event_depth: float = 0.0
    flat: bool = False
    spread: float = 0.5


def _load_shape(h):
    return 0.45 + 0.25 * np.exp(-(((h - 9.0) / 2.5) ** 2)) + 0.55 * np.exp(-(((h - 19.0) / 2.5) ** 2))


def _solar_shape(h):
    return np.clip(np.sin(np.pi * (h - 6.0) / 13.0), 0.0, None) ** 1.2


def synth_profiles(spec: ProfileSpec, buses: Sequence, seed: int = 0) -> Profile:
    rng = np.random.default_rng(seed)
    nb = len(buses)
    K = int(round(spec.horizon_s / spec.dt))
    start = hhmm_to_seconds(spec.start_hhmm)
    t = np.arange(K) * spec.dt
    hours = ((start + t) % DAY) / 3600.0

    hgrid = np.linspace(0, 24, 24 * 60 + 1)
    if spec.flat:
        load = np.ones(K)
        solar = np.ones(K)
    else:
        load = _load_shape(hours) / _load_shape(hgrid).max()
        solar = _solar_shape(hours) / _solar_shape(hgrid).max()

    cloud = np.ones(K)
    if spec.event_start_s is not None and spec.event_depth:
        ramp = np.clip((t - spec.event_start_s) / max(spec.event_ramp_s, 1e-9), 0.0, 1.0)
        cloud = 1.0 - spec.event_depth * (1.0 - ramp)

    weight = spec.base_load * rng.uniform(1 - spec.spread, 1 + spec.spread, nb)
    has_pv = rng.random(nb) < spec.solar_fraction
    pv_peak = spec.penetration * weight * has_pv
    tanphi = math.tan(math.acos(spec.power_factor))

    noise = 1.0 + spec.noise * rng.standard_normal((K, nb)) if spec.noise else 1.0
    p_load = np.outer(load, weight) * noise
    p = np.outer(solar * cloud, pv_peak) - p_load
    q = -p_load * tanphi
    return Profile(p, q, tuple(buses), spec.dt, float(start))


# references and traces -------------------------------------------------------

@dataclass(frozen=True)
class ReferenceSchedule:
    """Tracking references per step and sensor bus. A missing ``delta_ref``
    means the angle measured at k_on with the controller still off."""

    v_ref: np.ndarray                        # K x sensor buses, squared magnitude
    delta_ref: Optional[np.ndarray] = None   # K x sensor buses, radians


@dataclass
class Trace:
    clock: np.ndarray
    v: np.ndarray            # K x buses, squared magnitude
    delta: np.ndarray
    p_hat: np.ndarray        # K x DER buses
    q_hat: np.ndarray
    e: np.ndarray            # K x s, [v errors; angle errors] at sensors
    u: np.ndarray            # K x d, [u_q; u_p]
    refs: ReferenceSchedule
    k_on: int
    truth: str
    buses: tuple
    der_buses: tuple         # 1-based bus indices
    sensor_buses: tuple
    dt: float
    saturated: int = 0

    @property
    def V(self) -> np.ndarray:
        return np.sqrt(self.v)

    def to_csv(self, path) -> None:
        pos = {b - 1: i for i, b in enumerate(self.der_buses)}
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "node", "phase", "v", "delta", "p_hat", "q_hat"])
            V = self.V
            for k, t in enumerate(self.clock):
                for b, (node, ph) in enumerate(self.buses):
                    i = pos.get(b)
                    ph_ = repr(float(self.p_hat[k, i])) if i is not None else "0.0"
                    qh_ = repr(float(self.q_hat[k, i])) if i is not None else "0.0"
                    w.writerow([repr(float(t)), node, ph, repr(float(V[k, b])),
                                repr(float(self.delta[k, b])), ph_, qh_])


GainSource = Union[GainMatrix, Callable[[int, float], GainMatrix]]


def default_k_on(dt: float, on_after_s: float = 60.0) -> int:
    return int(round(on_after_s / dt))


def simulate(net: RadialNetwork, placement: Placement, gain: GainSource, profile: Profile,
             refs: Optional[ReferenceSchedule] = None, truth: str = "sweep",
             k_on: Optional[int] = None, der_cap: Optional[float] = None,
             mats: Optional[ImpedanceMatrices] = None) -> Trace:
    """Run the closed loop over the profile horizon.

    ``gain`` is a fixed GainMatrix or a callable ``(k, clock_s) -> GainMatrix``
    for time-varying schedules. ``der_cap`` bounds each DER bus's apparent
    power; commands that would exceed it are scaled back onto the cap.
    """
    p = placement
    if tuple(profile.buses) != tuple(p.buses):
        raise DimensionError("profile buses do not match the placement")
    K, nb = profile.K, p.n
    nd, ns = len(p.D1), len(p.S1)
    der = np.array([b - 1 for b in p.D1], dtype=int)
    sen = np.array([b - 1 for b in p.S1], dtype=int)
    k_on = default_k_on(profile.dt) if k_on is None else k_on
    clock = profile.clock

    if truth == "linear":
        mats = mats or build_impedance_matrices(net)
        R0, X0 = mats.R0, mats.X0

        def solve(pt, qt):
            return net.v0 + R0 @ pt + X0 @ qt, net.delta0 - 0.5 * R0 @ qt + 0.5 * X0 @ pt
    elif truth == "sweep":
        solver = SweepSolver(net)

        def solve(pt, qt):
            return solver.solve(pt, qt)
    else:
        raise ValueError(f"unknown truth model {truth!r}")

    fixed = gain if isinstance(gain, GainMatrix) else None
    v = np.empty((K, nb))
    delta = np.empty((K, nb))
    P_hat = np.zeros((K, nd))
    Q_hat = np.zeros((K, nd))
    U = np.zeros((K, p.d))
    E = np.zeros((K, p.s))
    if refs is not None:
        v_ref, d_ref = np.asarray(refs.v_ref, dtype=float), refs.delta_ref
        if v_ref.shape != (K, ns) or (d_ref is not None and np.shape(d_ref) != (K, ns)):
            raise DimensionError("references must be K x sensor buses")
    else:
        v_ref, d_ref = np.ones((K, ns)), None
    p_hat, q_hat = np.zeros(nd), np.zeros(nd)
    saturated = 0

    for k in range(K):
        pt = profile.p[k].copy()
        qt = profile.q[k].copy()
        pt[der] += p_hat
        qt[der] += q_hat
        v[k], delta[k] = solve(pt, qt)
        P_hat[k], Q_hat[k] = p_hat, q_hat
        if d_ref is None and k == min(k_on, K - 1):
            d_ref = np.tile(delta[k, sen], (K, 1))
        if k < k_on:
            continue
        e = np.concatenate([v[k, sen] - v_ref[k], delta[k, sen] - d_ref[k]])
        F = fixed.F if fixed is not None else gain(k, clock[k]).F
        u = -F @ e
        q_new, p_new = q_hat + u[:nd], p_hat + u[nd:]
        if der_cap is not None:
            mag = np.hypot(p_new, q_new)
            over = mag > der_cap
            if over.any():
                saturated += int(over.sum())
                scale = der_cap / mag[over]
                p_new[over] *= scale
                q_new[over] *= scale
                u = np.concatenate([q_new - q_hat, p_new - p_hat])
        U[k] = u
        p_hat, q_hat = p_new, q_new

    if d_ref is None:
        d_ref = np.zeros((K, ns))
    E[:, :ns] = v[:, sen] - v_ref
    E[:, ns:] = delta[:, sen] - d_ref
    if saturated:
        log.info("DER apparent-power cap engaged %d times", saturated)
    return Trace(clock, v, delta, P_hat, Q_hat, E, U, ReferenceSchedule(v_ref, d_ref), k_on, truth,
                 tuple(p.buses), p.D1, p.S1, profile.dt, saturated)


def benchmark_gain(ss: StateSpace, pattern) -> GainMatrix:
    """Stationary policy F_ij = (1.98 / y) * (2 / X_ij) on the permitted positions,
    X_ij being the common-node reactance between the sensor bus of column j and
    the DER bus of row i."""
    p = ss.placement
    pattern = np.asarray(pattern, dtype=bool)
    y = int(pattern.sum())
    nd, ns = len(p.D1), len(p.S1)
    F = np.zeros(pattern.shape)
    for r, c in np.argwhere(pattern):
        x = ss.mats.X0[p.S1[c % ns] - 1, p.D1[r % nd] - 1]
        if x == 0:
            raise ZeroDivisionError(f"zero reactance between sensor column {c} and DER row {r}")
        F[r, c] = (1.98 / y) * (2.0 / x)
    return GainMatrix(F, pattern)


# metrics -------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    violation_share: float
    settling_steps: Optional[int]
    settling_time_s: Optional[float]
    vmin: np.ndarray = field(repr=False)
    vmax: np.ndarray = field(repr=False)
    band: float = 0.05
    settle_band: float = 0.015

    def to_dict(self) -> dict:
        return {
            "violation_share": self.violation_share,
            "settling_steps": self.settling_steps,
            "settling_time_s": self.settling_time_s,
            "band": self.band,
            "settle_band": self.settle_band,
            "vmin": [float(x) for x in self.vmin],
            "vmax": [float(x) for x in self.vmax],
        }


def metrics(trace: Trace, band: float = 0.05, nominal: float = 1.0, settle_band: float = 0.015) -> MetricsReport:
    """Violation share and settling over the controlled window [k_on, K).

    A step counts as a violation when any bus on any phase leaves
    nominal * (1 +/- band). Settling is the number of steps after k_on until
    every bus stays within the inner band for the rest of the horizon
    (None if it never does).
    """
    V = trace.V
    window = V[trace.k_on:]
    if window.shape[0] == 0:
        raise ValueError("controller never turns on within the horizon")
    dev = np.abs(window - nominal)
    bad = np.any(dev > nominal * band, axis=1)
    outside = np.nonzero(np.any(dev > nominal * settle_band, axis=1))[0]
    if outside.size == 0:
        steps = 0
    elif outside[-1] == window.shape[0] - 1:
        steps = None
    else:
        steps = int(outside[-1] + 1)
    return MetricsReport(float(bad.mean()), steps, None if steps is None else steps * trace.dt,
                         V.min(axis=1), V.max(axis=1), band, settle_band)


# tariffs and revenue -------------------------------------------------------

@dataclass(frozen=True)
class TariffWindow:
    service: str
    start_s: int
    end_s: int
    price: float

    @property
    def all_day(self) -> bool:
        return self.start_s == 0 and self.end_s == DAY

    def covers(self, clock) -> np.ndarray:
        c = np.asarray(clock) % DAY
        if self.start_s <= self.end_s:
            return (c >= self.start_s) & (c < self.end_s)
        return (c >= self.start_s) | (c < self.end_s)


SERVICES = ("voltage", "energy")


def parse_tariff(text: str) -> list:
    """CSV ``service,start_hhmm,end_hhmm,price``; a 0000-2400 row is the
    off-peak price, every other row an on-peak window."""
    out = []
    rows = list(csv.reader(line for line in text.splitlines() if line.strip() and not line.startswith("#")))
    if rows and rows[0] and rows[0][0].strip() == "service":
        rows = rows[1:]
    for n, row in enumerate(rows, start=1):
        if len(row) != 4:
            raise ParseError("tariff rows need service,start_hhmm,end_hhmm,price", n)
        svc = row[0].strip()
        if svc not in SERVICES:
            raise ParseError(f"unknown service {svc!r}", n)
        try:
            out.append(TariffWindow(svc, hhmm_to_seconds(row[1]), hhmm_to_seconds(row[2]), float(row[3])))
        except ValueError as exc:
            raise ParseError(str(exc), n) from None
    for svc in SERVICES:
        if not any(w.service == svc and w.all_day for w in out):
            raise ParseError(f"tariff needs an all-day (0000-2400) off-peak row for {svc!r}")
    return out


def load_tariff(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_tariff(fh.read())


def tariff_prices(tariff, service: str, clock):
    """(price per step, on-peak flag per step) for one service."""
    clock = np.asarray(clock, dtype=float)
    base = next(w for w in tariff if w.service == service and w.all_day)
    price = np.full(clock.shape, base.price)
    peak = np.zeros(clock.shape, dtype=bool)
    for w in tariff:
        if w.service == service and not w.all_day:
            hit = w.covers(clock)
            price[hit] = w.price
            peak |= hit
    return price, peak


REVENUE_ROWS = (
    ("voltage_effort_off_peak", "Voltage regulation effort off-peak (pu-h)"),
    ("voltage_revenue_off_peak", "Voltage regulation revenue off-peak"),
    ("voltage_effort_on_peak", "Voltage regulation effort on-peak (pu-h)"),
    ("voltage_revenue_on_peak", "Voltage regulation revenue on-peak"),
    ("energy_off_peak_kwh", "Accumulated real power actuation off-peak (kWh)"),
    ("energy_revenue_off_peak", "Accumulated real power actuation revenue off-peak"),
    ("energy_on_peak_kwh", "Accumulated real power actuation on-peak (kWh)"),
    ("energy_revenue_on_peak", "Accumulated real power actuation revenue on-peak"),
    ("total", "Total revenue"),
)


def economics(trace_on: Trace, trace_off: Trace, tariff, s_base_kva: float = 1.0) -> dict:
    """Revenue table for one controlled trace against the controller-off trace.

    Voltage effort per step is the drop in summed |V - 1| over all buses
    relative to the controller-off run, times the step length in hours.
    Energy counts DER real-power generation (positive p_hat) only.
    """
    if (trace_on.buses != trace_off.buses or trace_on.clock.shape != trace_off.clock.shape
            or not np.array_equal(trace_on.clock, trace_off.clock)):
        raise MismatchedScenario("traces do not share buses and time grid")
    hours = trace_on.dt / 3600.0
    mitig = (np.abs(trace_off.V - 1.0).sum(axis=1) - np.abs(trace_on.V - 1.0).sum(axis=1)) * hours
    energy = np.clip(trace_on.p_hat, 0.0, None).sum(axis=1) * s_base_kva * hours
    vprice, vpeak = tariff_prices(tariff, "voltage", trace_on.clock)
    eprice, epeak = tariff_prices(tariff, "energy", trace_on.clock)
    row = {
        "voltage_effort_off_peak": float(mitig[~vpeak].sum()),
        "voltage_revenue_off_peak": float((mitig * vprice)[~vpeak].sum()),
        "voltage_effort_on_peak": float(mitig[vpeak].sum()),
        "voltage_revenue_on_peak": float((mitig * vprice)[vpeak].sum()),
        "energy_off_peak_kwh": float(energy[~epeak].sum()),
        "energy_revenue_off_peak": float((energy * eprice)[~epeak].sum()),
        "energy_on_peak_kwh": float(energy[epeak].sum()),
        "energy_revenue_on_peak": float((energy * eprice)[epeak].sum()),
    }
    row["total"] = (row["voltage_revenue_off_peak"] + row["voltage_revenue_on_peak"]
                    + row["energy_revenue_off_peak"] + row["energy_revenue_on_peak"])
    return row


def revenue_table(columns: dict) -> str:
    """Plain-text table, one column per case (e.g. fixed / adjusted)."""
    names = list(columns)
    width = max(len(label) for _, label in REVENUE_ROWS)
    lines = [" " * width + "".join(f"  {n:>14}" for n in names)]
    for key, label in REVENUE_ROWS:
        lines.append(f"{label:<{width}}" + "".join(f"  {columns[n][key]:>14.4f}" for n in names))
    return "\n".join(lines)


def tou_schedule(ranges, pattern, placement: Placement, tariff,
                 voltage_peak: str = "upper", energy_peak: str = "upper"):
    """Time-of-use parameter adjustment within the certified ranges.

    Parameters start at their midpoints. While the voltage service is
    on-peak, the reactive-power/magnitude quadrant moves to the
    ``voltage_peak`` end of its ranges; while the energy service is on-peak,
    the real-power/magnitude quadrant moves to the ``energy_peak`` end.
    With u = -F e, e = v - v_ref and generation counted positive, the upper
    end makes both quadrants respond harder. Returns ``gain(k, clock_s)``.
    """
    from .region import sample_gain
    from .sysbuild import quadrant_mask

    q11 = quadrant_mask(placement, "11")
    q21 = quadrant_mask(placement, "21")
    cache = {}

    def variant(vpeak: bool, epeak: bool) -> GainMatrix:
        key = (vpeak, epeak)
        if key not in cache:
            over = (([(q11, voltage_peak)] if vpeak else [])
                    + ([(q21, energy_peak)] if epeak else []))
            cache[key] = sample_gain(ranges, pattern, "midpoint", over)
        return cache[key]

    def gain(k: int, clock_s: float) -> GainMatrix:
        _, vpeak = tariff_prices(tariff, "voltage", [clock_s])
        _, epeak = tariff_prices(tariff, "energy", [clock_s])
        return variant(bool(vpeak[0]), bool(epeak[0]))

    return gain
