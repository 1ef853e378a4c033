"""Flat ``key = value`` scenario files and the objects they resolve to.

Paths inside a scenario are relative to the scenario file. A path of the
form ``builtin:<name>`` refers to a file shipped in ``derstab/data``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import FileError, ParseError

DATA_DIR = Path(__file__).resolve().parent / "data"

PATTERNS = ("cluster", "cluster_cross", "colocated", "full")
GAINS = ("midpoint", "upper", "lower", "benchmark", "schedule", "zero")
TRUTHS = ("linear", "sweep")
RANGE_MODES = ("paper", "safe")


@dataclass
class Scenario:
    feeder: Path
    placement: Path
    profile: Optional[Path] = None          # CSV; None means synthesise
    tariff: Optional[Path] = None
    candidates: tuple = ()
    pattern: str = "cluster_cross"
    benchmark_pattern: str = "cluster"
    gain: str = "midpoint"
    eps: float = 1e-2
    range_mode: str = "safe"
    truth: str = "sweep"
    seed: int = 0
    k_on_s: float = 60.0
    v_ref: float = 1.0
    der_cap: Optional[float] = None
    s_base_kva: float = 1000.0
    band: float = 0.05
    settle_band: float = 0.015
    voltage_peak: str = "upper"             # schedule end for the reactive quadrant
    energy_peak: str = "upper"              # schedule end for the real-power quadrant
    # profile synthesis
    start: str = "1100"
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
    source: Optional[Path] = field(default=None, compare=False)

    def profile_spec(self):
        from .sim import ProfileSpec
        return ProfileSpec(self.start, self.horizon_s, self.dt, self.base_load, self.power_factor,
                           self.penetration, self.solar_fraction, self.noise, self.event_start_s,
                           self.event_ramp_s, self.event_depth, self.flat, self.spread)


_PATH_KEYS = {"feeder", "placement", "profile", "tariff"}
_ENUMS = {"pattern": PATTERNS, "benchmark_pattern": PATTERNS, "gain": GAINS, "truth": TRUTHS,
          "range_mode": RANGE_MODES, "voltage_peak": ("upper", "lower"),
          "energy_peak": ("upper", "lower")}


def _resolve(value: str, base: Path) -> Path:
    if value.startswith("builtin:"):
        return DATA_DIR / value[len("builtin:"):]
    p = Path(value)
    return p if p.is_absolute() else base / p


def parse_scenario(text: str, base: Path = Path(".")) -> Scenario:
    types = {f.name: f.type for f in dataclasses.fields(Scenario)}
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (part.strip() for part in line.partition("="))
        if not sep or not key:
            raise ParseError(f"expected key = value, got {line!r}", lineno)
        if key not in types or key == "source":
            raise ParseError(f"unknown scenario key {key!r}", lineno)
        if key in raw:
            raise ParseError(f"duplicate key {key!r}", lineno)
        raw[key] = (value, lineno)
    for req in ("feeder", "placement"):
        if req not in raw:
            raise ParseError(f"scenario is missing {req!r}")

    kw = {}
    for key, (value, lineno) in raw.items():
        try:
            kw[key] = _convert(key, value, base)
        except ValueError as exc:
            raise ParseError(f"{key}: {exc}", lineno) from None
    return Scenario(**kw)


def _convert(key: str, value: str, base: Path):
    if key in _PATH_KEYS:
        return _resolve(value, base)
    if key == "candidates":
        return tuple(_resolve(v.strip(), base) for v in value.split(",") if v.strip())
    if key in _ENUMS:
        if value not in _ENUMS[key]:
            raise ValueError(f"{value!r} not one of {', '.join(_ENUMS[key])}")
        return value
    if key in ("seed",):
        return int(value)
    if key == "flat":
        if value.lower() not in ("0", "1", "true", "false"):
            raise ValueError("expected a boolean")
        return value.lower() in ("1", "true")
    if key == "start":
        from .sim import hhmm_to_seconds
        hhmm_to_seconds(value)
        return value
    if key in ("der_cap", "event_start_s"):
        return None if value.lower() == "none" else float(value)
    return float(value)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FileError(f"cannot read scenario {path}: {exc.strerror}") from None
    sc = parse_scenario(text, path.parent)
    sc.source = path
    return sc


def read_text(path: Path, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise FileError(f"cannot read {what} {path}: {exc.strerror}") from None
