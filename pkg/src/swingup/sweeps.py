"""Final-occupation maps over one- and two-dimensional parameter grids."""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import __version__
from .core import (
    HBAR,
    BlochState,
    IntegrationError,
    IntegratorSettings,
    apply_unitary,
    delta_rotation,
    integrate,
)
from .protocols import second_detuning_for
from .pulses import AREA, ANGLE, RATE, TIME, PulseSpec, TwoColor, pulse_type_name

DISPLAY_UNITS = {
    RATE: ("meV", HBAR),
    TIME: ("ps", 1.0),
    AREA: ("pi", 1.0 / math.pi),
    ANGLE: ("rad", 1.0),
}


def display(spec_cls, name, value):
    """Value of a parameter in display units and the unit label."""
    kind = spec_cls.FIELD_KINDS.get(name)
    unit, scale = DISPLAY_UNITS.get(kind, ("", 1.0))
    return value * scale, unit


def final_occupation(spec: PulseSpec, gamma=0.0, settings: IntegratorSettings | None = None):
    """Excited occupation after the pulse, starting from the ground state."""
    t0, t1 = spec.window()
    if t1 == t0:
        state = BlochState()
        for _, area, phase in spec.impulses():
            state = apply_unitary(state, delta_rotation(area, phase))
        return state.f
    return integrate(BlochState(), spec, t0, t1, settings, gamma).final.f


@dataclass(frozen=True)
class SweepAxis:
    """Linearly spaced values of one pulse field (internal units)."""

    name: str
    start: float
    stop: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("axis count must be >= 1")
        if self.count == 1 and self.start != self.stop:
            raise ValueError("a single-point axis needs start == stop")

    def values(self):
        return np.linspace(self.start, self.stop, self.count)


@dataclass(frozen=True)
class SweepGrid:
    """Parameter grid around a base pulse.

    Parameters
    ----------
    base : PulseSpec
        Every field not on an axis keeps its base value.
    axis1, axis2 : SweepAxis
        Rows follow ``axis1``, columns ``axis2``.
    links : tuple of (target, source, factor)
        After the axes are applied, set ``target = factor * source``
        (e.g. equal areas, or sigma2 = 1.5 sigma1).
    derive_delta2 : bool
        Recompute ``delta2`` of a two-colour pulse from its first pulse
        using the second-detuning rule in every cell.
    """

    base: PulseSpec
    axis1: SweepAxis
    axis2: SweepAxis | None = None
    links: tuple = ()
    derive_delta2: bool = False

    def __post_init__(self):
        names = set(self.base.field_names())
        for ax in (self.axis1, self.axis2):
            if ax is not None and ax.name not in names:
                raise ValueError(f"{ax.name!r} is not a field of {type(self.base).__name__}")
        links = tuple(tuple(x) for x in self.links)
        for target, source, _ in links:
            if target not in names or source not in names:
                raise ValueError(f"link {target} <- {source} refers to unknown fields")
        object.__setattr__(self, "links", links)
        if self.derive_delta2 and not isinstance(self.base, TwoColor):
            raise ValueError("derive_delta2 needs a two-colour base pulse")

    @property
    def shape(self):
        return (self.axis1.count, 1 if self.axis2 is None else self.axis2.count)

    def spec_at(self, i, j=0) -> PulseSpec:
        kw = {self.axis1.name: float(self.axis1.values()[i])}
        if self.axis2 is not None:
            kw[self.axis2.name] = float(self.axis2.values()[j])
        spec = replace(self.base, **kw)
        if self.links:
            spec = replace(spec, **{t: k * getattr(spec, s) for t, s, k in self.links})
        if self.derive_delta2:
            spec = replace(spec, delta2=second_detuning_for(spec.alpha1, spec.sigma1, spec.delta1))
        return spec


@dataclass
class SweepResult:
    """Final occupations on a grid; failed cells hold NaN and are listed."""

    grid: SweepGrid
    values: np.ndarray
    failures: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def axis_values(self, k=1):
        ax = self.grid.axis1 if k == 1 else self.grid.axis2
        return None if ax is None else ax.values()

    def to_csv(self, path):
        cls = type(self.grid.base)
        a1 = self.grid.axis1
        a2 = self.grid.axis2
        _, u1 = display(cls, a1.name, 1.0)
        head = [f"{a1.name} [{u1}]"]
        if a2 is not None:
            _, u2 = display(cls, a2.name, 1.0)
            head.append(f"{a2.name} [{u2}]")
        head.append("f")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            v1 = a1.values()
            v2 = a2.values() if a2 is not None else [None]
            for i in range(len(v1)):
                for j in range(len(v2)):
                    row = [repr(float(display(cls, a1.name, v1[i])[0]))]
                    if a2 is not None:
                        row.append(repr(float(display(cls, a2.name, v2[j])[0])))
                    val = self.values[i, j]
                    row.append("nan" if np.isnan(val) else repr(float(val)))
                    w.writerow(row)

    def envelope(self):
        cls = type(self.grid.base)

        def ax(a):
            if a is None:
                return None
            vals, unit = display(cls, a.name, a.values())
            return {"name": a.name, "unit": unit, "values": [float(x) for x in vals]}

        vals = [[None if np.isnan(x) else float(x) for x in row] for row in self.values]
        return {
            "pulse_type": pulse_type_name(self.grid.base),
            "base": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self.grid.base).items()},
            "axis1": ax(self.grid.axis1),
            "axis2": ax(self.grid.axis2),
            "links": [list(x) for x in self.grid.links],
            "derive_delta2": self.grid.derive_delta2,
            "values": vals,
            "failures": self.failures,
            "metadata": self.metadata,
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.envelope(), fh, indent=1)


def _cell(grid, i, j, gamma, settings):
    try:
        v = final_occupation(grid.spec_at(i, j), gamma, settings)
        if not math.isfinite(v):
            return math.nan, f"non-finite occupation {v!r}"
        return v, None
    except (IntegrationError, ValueError, FloatingPointError, ZeroDivisionError) as exc:
        return math.nan, f"{type(exc).__name__}: {exc}"


def run_sweep(grid: SweepGrid, workers=None, settings: IntegratorSettings | None = None, gamma=0.0):
    """Evaluate ``final_occupation`` on every cell of ``grid``.

    Rows are distributed over ``workers`` threads (the compiled integrator
    releases the GIL). Each cell is computed independently into its own
    slot, so the result does not depend on the worker count. A failing
    cell is stored as NaN and reported in ``failures``.
    """
    settings = settings or IntegratorSettings()
    n1, n2 = grid.shape
    values = np.full((n1, n2), np.nan)
    errors = {}

    def row(i):
        out = []
        for j in range(n2):
            out.append(_cell(grid, i, j, gamma, settings))
        return i, out

    start = time.time()
    if workers is None or workers <= 1:
        rows = map(row, range(n1))
        done = list(rows)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(row, range(n1)))
    for i, out in done:
        for j, (v, err) in enumerate(out):
            values[i, j] = v
            if err is not None:
                errors[(i, j)] = err
    failures = [{"i": i, "j": j, "error": e} for (i, j), e in sorted(errors.items())]
    meta = {
        "settings": asdict(settings),
        "gamma": gamma,
        "workers": workers or 1,
        "elapsed_s": time.time() - start,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "version": __version__,
    }
    return SweepResult(grid, values, failures, meta)


def phase_scan(spec: TwoColor, n=32, settings: IntegratorSettings | None = None):
    """Final occupation for ``n`` relative phases spread over [0, 2 pi]."""
    phis = np.linspace(0.0, 2 * math.pi, n)
    grid = SweepGrid(spec, SweepAxis("phi", 0.0, 2 * math.pi, n))
    res = run_sweep(grid, settings=settings)
    return phis, res.values[:, 0]


# --- structural analysis of maps --------------------------------------------


def stripe_onset(result: SweepResult, threshold=0.9):
    """Smallest axis-1 value whose column of axis-2 values reaches ``threshold``.

    Returns None if no row reaches it.
    """
    v1 = result.axis_values(1)
    best = np.nanmax(result.values, axis=1)
    hit = np.flatnonzero(best >= threshold)
    return None if len(hit) == 0 else float(v1[hit[0]])


def gradient_orientation(values, x1, x2, rows=None, cols=None, log=True):
    """Share of gradient energy along the second axis inside a sub-block.

    ``values[i, j]`` is sampled at ``x1[i]``, ``x2[j]``. Returns
    ``sum (df/dx2)^2 / sum |grad f|^2`` over the rows/cols slices. With
    ``log=True`` derivatives are taken in log coordinates, which makes
    the index independent of the axis units: a map depending on x1 alone
    gives 0, one depending only on the ratio x1/x2 gives 0.5.
    """
    v = np.asarray(values, dtype=float)
    c1 = np.log(x1) if log else np.asarray(x1, dtype=float)
    c2 = np.log(x2) if log else np.asarray(x2, dtype=float)
    g1, g2 = np.gradient(v, c1, c2)
    sl = (slice(None) if rows is None else slice(*rows), slice(None) if cols is None else slice(*cols))
    a = np.nansum(g2[sl] ** 2)
    b = np.nansum(g1[sl] ** 2)
    return float(a / (a + b)) if a + b > 0 else 0.0
