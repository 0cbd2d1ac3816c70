"""Configuration loading: decompositions, boundary loads, run settings.

All three inputs are JSON.  A run config may embed the decomposition and load
objects inline or point at separate files (paths resolved relative to the
config file).  Detailed formats are documented in the README.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .decomp import Decomposition, Rect, SubdomainSpec, validate_decomposition
from .gridmaps import SIDES, side_normal

__all__ = [
    "DEFAULT_INTERVALS",
    "BoundaryLoad",
    "LoadCase",
    "compression_load",
    "shear_load",
    "parse_decomposition",
    "parse_loads",
    "RunConfig",
    "load_run_config",
]

# Loaded sub-intervals of each boundary facet, as fractions of the facet.
DEFAULT_INTERVALS = ((1.0 / 3.0, 1.0 / 2.0), (2.0 / 3.0, 5.0 / 6.0))


@dataclass(frozen=True)
class BoundaryLoad:
    """Constant traction applied on sub-intervals of boundary facets.

    The same ``intervals`` apply to every boundary facet on the given domain
    side, as (start, end) fractions in [0, 1] of that facet's length,
    measured in the direction of increasing x (bottom/top) or y (left/right).
    The pattern therefore repeats along a side that is tiled by several
    subdomains.
    """

    side: str
    traction: tuple
    intervals: tuple = DEFAULT_INTERVALS

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        for a, b in self.intervals:
            if not (0.0 <= a < b <= 1.0):
                raise ValueError(f"bad interval ({a}, {b}) on side {self.side}")
        spans = sorted(self.intervals)
        for (_, b0), (a1, _) in zip(spans, spans[1:]):
            if a1 < b0:
                raise ValueError(f"overlapping intervals on side {self.side}")


@dataclass(frozen=True)
class LoadCase:
    """A set of boundary loads, at most one per domain side."""

    loads: tuple

    def __post_init__(self):
        sides = [bl.side for bl in self.loads]
        if len(set(sides)) != len(sides):
            raise ValueError("duplicate side in load case")

    def for_side(self, side: str):
        for bl in self.loads:
            if bl.side == side:
                return bl
        return None


def compression_load(magnitude: float = 1.0,
                     intervals=DEFAULT_INTERVALS) -> LoadCase:
    """Inward normal tractions of equal magnitude on all four sides."""
    loads = tuple(
        BoundaryLoad(side=s, traction=tuple(-magnitude * side_normal(s)),
                     intervals=tuple(intervals))
        for s in SIDES)
    return LoadCase(loads=loads)


def shear_load(magnitude: float = 1.0, intervals=DEFAULT_INTERVALS) -> LoadCase:
    """Tractions of the pure shear stress [[0, s], [s, 0]] on all sides."""
    s = magnitude
    tractions = {"left": (0.0, -s), "right": (0.0, s),
                 "bottom": (-s, 0.0), "top": (s, 0.0)}
    loads = tuple(
        BoundaryLoad(side=name, traction=tractions[name],
                     intervals=tuple(intervals))
        for name in SIDES)
    return LoadCase(loads=loads)


def parse_decomposition(obj: dict) -> Decomposition:
    """Build and validate a decomposition from its JSON form."""
    box = Rect(*map(float, obj["bounding_box"]))
    subs = [
        SubdomainSpec(id=int(s["id"]), rect=Rect(*map(float, s["rect"])),
                      reference=int(s["reference"]),
                      rotation=int(s.get("rotation", 0)))
        for s in obj["subdomains"]
    ]
    return validate_decomposition(subs, box)


def parse_loads(obj) -> LoadCase:
    """Build a load case from its JSON form.

    Either a preset ``{"preset": "compression"|"shear", "magnitude": m,
    "intervals": [[a,b], ...]}`` or explicit per-side tractions
    ``{"sides": {"top": {"traction": [tx,ty], "intervals": [[a,b], ...]}}}``
    (a bare ``[tx, ty]`` is accepted as the traction with default intervals,
    and top-level ``"intervals"`` sets the per-side default).
    """
    if "preset" in obj:
        mag = float(obj.get("magnitude", 1.0))
        intervals = _parse_intervals(obj.get("intervals"), DEFAULT_INTERVALS)
        preset = obj["preset"]
        if preset == "compression":
            return compression_load(mag, intervals)
        if preset == "shear":
            return shear_load(mag, intervals)
        raise ValueError(f"unknown load preset {preset!r}")

    shared = _parse_intervals(obj.get("intervals"), DEFAULT_INTERVALS)
    loads = []
    for side, val in obj.get("sides", {}).items():
        if isinstance(val, dict):
            traction = tuple(map(float, val["traction"]))
            intervals = _parse_intervals(val.get("intervals"), shared)
        else:
            traction = tuple(map(float, val))
            intervals = shared
        loads.append(BoundaryLoad(side=side, traction=traction,
                                  intervals=intervals))
    return LoadCase(loads=tuple(loads))


def _parse_intervals(val, default):
    if val is None:
        return tuple(default)
    return tuple((float(a), float(b)) for a, b in val)


@dataclass
class RunConfig:
    """Everything one optimization run needs.

    ``epsilon = None`` requests the default interface width, twice the finest
    cell size of the decomposition at the configured resolution.
    """

    decomposition: Decomposition
    loads: LoadCase
    n_cells: int = 8
    beta: float = 1.0
    eta: float = 0.1
    epsilon: float | None = None
    delta: float = 0.01
    max_iters: int = 200
    stop_tol: float = 1e-4
    max_sweeps: int = 50
    sweep_tol: float = 1e-8
    schedule: str = "lex"
    warm_start: bool = False
    figures: bool = True
    echo: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_cells < 2:
            raise ValueError("n_cells must be at least 2")
        if self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.schedule not in ("lex", "redblack"):
            raise ValueError(f"unknown sweep schedule {self.schedule!r}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie strictly between 0 and 1")
        if self.beta < 0 or self.eta < 0:
            raise ValueError("beta and eta must be nonnegative")
        if self.epsilon is not None and self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def load_run_config(path: str) -> RunConfig:
    """Read a run config JSON file, resolving referenced files."""
    with open(path) as fh:
        raw = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(val):
        if isinstance(val, str):
            sub = val if os.path.isabs(val) else os.path.join(base, val)
            with open(sub) as fh:
                return json.load(fh)
        return val

    dec = parse_decomposition(resolve(raw["decomposition"]))
    loads = parse_loads(resolve(raw["loads"]))
    phase = raw.get("phase", {})
    eps = phase.get("epsilon")
    return RunConfig(
        decomposition=dec,
        loads=loads,
        n_cells=int(raw.get("n_cells", 8)),
        beta=float(phase.get("beta", 1.0)),
        eta=float(phase.get("eta", 0.1)),
        epsilon=None if eps is None else float(eps),
        delta=float(phase.get("delta", 0.01)),
        max_iters=int(raw.get("max_iters", 200)),
        stop_tol=float(raw.get("stop_tol", 1e-4)),
        max_sweeps=int(raw.get("max_sweeps", 50)),
        sweep_tol=float(raw.get("sweep_tol", 1e-8)),
        schedule=str(raw.get("schedule", "lex")),
        warm_start=bool(raw.get("warm_start", False)),
        figures=bool(raw.get("figures", True)),
        echo=raw,
    )
