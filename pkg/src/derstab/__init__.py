"""Stability regions and simulation for decentralized DER voltage control.

A radial feeder is linearized into an open-loop model mapping DER
injections to sensor voltages. Integral controllers with sparse gain
matrices close the loop; a polytope of certified-stable gains is built
from Gershgorin discs and its inscribed ball yields per-parameter ranges.
"""

from .errors import DerstabError
from .netmodel import build_impedance_matrices, load_feeder, parse_feeder
from .placement import load_placement, parse_placement
from .region import build_polytope, chebyshev, parameter_ranges, sample_gain
from .stability import check_region, report
from .sysbuild import GainMatrix, build_open_loop, closed_loop, reduce

__version__ = "0.1.0"

__all__ = [
    "DerstabError", "GainMatrix", "build_impedance_matrices", "build_open_loop",
    "build_polytope", "chebyshev", "check_region", "closed_loop", "load_feeder",
    "load_placement", "parameter_ranges", "parse_feeder", "parse_placement",
    "reduce", "report", "sample_gain",
]
