"""TOML run configurations with explicit physical units.

Every physical quantity carries its unit in the file, e.g.
``delta1 = "-8 meV"``, ``sigma1 = "2.4 ps"``, ``alpha1 = "22.65 pi"``.
Bare numbers are rejected for physical fields. A leading ``pi`` factor
is allowed before any unit (``"4.95 pi ps"``).

Layout::

    [pulse]          # pulse type and fields (base for every run)
    [integrator]     # IntegratorSettings overrides
    [trajectory]     # per-command sections
    [sweep]
    [spectrum]
    [photonics]
    [[runs]]         # optional named runs, see ``RunConfig``

The full schema is documented in ``docs/config.md``.
"""

from __future__ import annotations

import math
import re
import sys
from dataclasses import dataclass, field, fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .core import HBAR, IntegratorSettings
from .pulses import ANGLE, AREA, PULSE_TYPES, RATE, TIME, PulseSpec, RectangularSwitched, pulse_type_name

COMMANDS = ("trajectory", "sweep", "spectrum", "photonics")

# unit -> factor to internal units (ps, 1/ps, rad)
UNITS = {
    TIME: {"ps": 1.0, "fs": 1e-3, "ns": 1e3},
    RATE: {"meV": 1.0 / HBAR, "ueV": 1e-3 / HBAR, "/ps": 1.0, "1/ps": 1.0, "/ns": 1e-3, "1/ns": 1e-3},
    AREA: {"pi": math.pi, "rad": 1.0},
    ANGLE: {"pi": math.pi, "rad": 1.0, "deg": math.pi / 180},
}
_QUANTITY = re.compile(r"^\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(pi\b)?\s*(\S*)\s*$")


class ConfigError(ValueError):
    """Invalid configuration; carries the file and line when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = ""
        if path is not None:
            loc = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(loc + message)
        self.message = message


def parse_quantity(value, kind, name="value"):
    """Convert ``"<number> [pi] <unit>"`` of physical ``kind`` to internal units."""
    if isinstance(value, bool) or isinstance(value, (int, float)):
        raise ConfigError(f"{name}: bare number {value!r} needs a unit ({', '.join(UNITS[kind])})")
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a quantity string, got {type(value).__name__}")
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"{name}: cannot parse quantity {value!r}")
    number, pi, unit = m.groups()
    x = float(number)
    if pi and not unit:
        unit = "pi"
    elif pi:
        x *= math.pi
    if not unit:
        raise ConfigError(f"{name}: {value!r} is missing a unit ({', '.join(UNITS[kind])})")
    table = UNITS[kind]
    if unit not in table:
        raise ConfigError(f"{name}: unit {unit!r} is not a {kind} unit ({', '.join(table)})")
    return x * table[unit]


def format_quantity(value, kind):
    """Inverse of ``parse_quantity`` in the display unit of ``kind``."""
    if kind == RATE:
        return f"{value * HBAR!r} meV"
    if kind == TIME:
        return f"{value!r} ps"
    if kind == AREA:
        return f"{value / math.pi!r} pi"
    return f"{value!r} rad"


# --- pulses -----------------------------------------------------------------


def pulse_from_table(table, where="pulse"):
    """Build a pulse from a config table.

    Besides the pulse types of ``PULSE_TYPES`` the constructor
    ``rectangular_schedule`` builds a switching schedule from the dwell
    rule (fields ``omega0``, ``delta_low``, ``delta_high``, ``n_cycles``,
    ``scale_low``, ``scale_high``; with ``total_duration`` the dwell
    correction is scanned).
    """
    table = dict(table)
    kind = table.pop("type", None)
    if kind is None:
        raise ConfigError(f"{where}: missing 'type'")
    if kind == "rectangular_schedule":
        return _schedule_from_table(table, where)
    cls = PULSE_TYPES.get(kind)
    if cls is None:
        raise ConfigError(f"{where}: unknown pulse type {kind!r} (have {', '.join(PULSE_TYPES)})")
    names = cls.field_names()
    kw = {}
    for key, val in table.items():
        if key not in names:
            raise ConfigError(f"{where}.{key}: not a field of {kind} ({', '.join(names)})")
        if key == "segments":
            kw[key] = _segments(val, f"{where}.segments")
        else:
            kw[key] = parse_quantity(val, cls.FIELD_KINDS[key], f"{where}.{key}")
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _segments(val, where):
    if not isinstance(val, list) or not val:
        raise ConfigError(f"{where}: expected a list of [detuning, dwell] pairs")
    out = []
    for k, seg in enumerate(val):
        if not isinstance(seg, list) or len(seg) != 2:
            raise ConfigError(f"{where}[{k}]: expected [detuning, dwell]")
        out.append((parse_quantity(seg[0], RATE, f"{where}[{k}]"),
                    parse_quantity(seg[1], TIME, f"{where}[{k}]")))
    return tuple(out)


def _schedule_from_table(table, where):
    from .protocols import rectangular_schedule, scan_rectangular_schedule

    allowed = {"omega0", "delta_low", "delta_high", "n_cycles", "scale_low", "scale_high",
               "total_duration", "correction", "n_grid", "t_start"}
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}: not a rectangular_schedule field")
    try:
        omega0 = parse_quantity(table["omega0"], RATE, f"{where}.omega0")
        dl = parse_quantity(table["delta_low"], RATE, f"{where}.delta_low")
        dh = parse_quantity(table["delta_high"], RATE, f"{where}.delta_high")
    except KeyError as exc:
        raise ConfigError(f"{where}: missing {exc.args[0]!r}") from None
    try:
        if "total_duration" in table:
            dur = parse_quantity(table["total_duration"], TIME, f"{where}.total_duration")
            n = table.get("n_cycles", [9, 10])
            n = tuple(n) if isinstance(n, list) else (int(n),)
            scan = scan_rectangular_schedule(omega0, dl, dh, dur, n, float(table.get("correction", 0.2)),
                                             int(table.get("n_grid", 401)))
            sched = scan.schedule
        else:
            sched = rectangular_schedule(omega0, dl, dh, int(table.get("n_cycles", 9)),
                                         float(table.get("scale_low", 1.0)),
                                         float(table.get("scale_high", 1.0)))
        if "t_start" in table:
            sched = replace(sched, t_start=parse_quantity(table["t_start"], TIME, f"{where}.t_start"))
        return sched
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def pulse_to_table(spec: PulseSpec):
    """Config table for ``spec`` with every field in its display unit."""
    out = {"type": pulse_type_name(spec)}
    for f in fields(spec):
        val = getattr(spec, f.name)
        if isinstance(spec, RectangularSwitched) and f.name == "segments":
            out["segments"] = [[format_quantity(d, RATE), format_quantity(w, TIME)] for d, w in val]
        else:
            out[f.name] = format_quantity(val, spec.FIELD_KINDS[f.name])
    return out


def _toml_value(v):
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {type(v).__name__} to TOML")


def dumps_pulse(spec: PulseSpec, section="pulse"):
    """TOML text of a ``[pulse]`` section for ``spec``."""
    lines = [f"[{section}]"]
    lines += [f"{k} = {_toml_value(v)}" for k, v in pulse_to_table(spec).items()]
    return "\n".join(lines) + "\n"


def loads_pulse(text, section="pulse"):
    return pulse_from_table(loads(text).get(section, {}), section)


# --- run configurations -------------------------------------------------------


@dataclass
class RunConfig:
    """One named run: a pulse plus the command sections that apply to it.

    ``sections`` maps a command name to its (unit-checked) raw table.
    """

    name: str
    pulse: PulseSpec
    integrator: IntegratorSettings
    sections: dict = field(default_factory=dict)
    source: str | None = None

    def has(self, command):
        return command in self.sections


@dataclass
class ConfigFile:
    path: str | None
    runs: list
    commands: tuple
    raw: dict


def loads(text, path=None):
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", path, int(m.group(1)) if m else None) from None


def line_of(text, dotted):
    """Best-effort line number of a dotted key (``section.key``) in TOML text."""
    if not text or not dotted:
        return None
    parts = re.split(r"[.\[]", dotted)
    key = parts[-1].rstrip("]")
    if key.isdigit() and len(parts) > 1:
        key = parts[-2].rstrip("]")
    section = parts[0]
    current = None
    for k, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        hdr = re.match(r"^\[\[?\s*([^\]]+?)\s*\]\]?", s)
        if hdr:
            current = hdr.group(1)
            if current.split(".")[-1] == key:
                return k
            continue
        if re.match(rf"^{re.escape(key)}\s*=", s) and (current is None or section in current.split(".")
                                                        or len(parts) == 1):
            return k
    return None


def _integrator(table, where="integrator"):
    kinds = {"step": TIME, "min_step": TIME}
    kw = {}
    names = {f.name for f in fields(IntegratorSettings)}
    for key, val in table.items():
        if key not in names:
            raise ConfigError(f"{where}.{key}: unknown integrator setting ({', '.join(sorted(names))})")
        kw[key] = parse_quantity(val, kinds[key], f"{where}.{key}") if key in kinds else val
    try:
        return IntegratorSettings(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _merge(base, over):
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _run_pulse(base, over):
    if not over:
        return dict(base)
    if "type" in over and over["type"] != base.get("type"):
        return dict(over)
    return _merge(base, over)


def parse_config(data, path=None, text=None) -> ConfigFile:
    """Turn parsed TOML into validated runs.

    Without ``[[runs]]`` the file is a single run named ``main`` that
    performs every command section present. With ``[[runs]]`` each run
    inherits ``[pulse]`` and ``[integrator]`` and performs the commands
    whose sections it declares; top-level command sections act as
    defaults for those.
    """
    def fail(exc, dotted):
        raise ConfigError(exc.message, path, line_of(text, dotted)) from None

    known = {"pulse", "integrator", "runs", "commands", "description", *COMMANDS}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown top-level key {key!r}", path, line_of(text, key))
    base_pulse = data.get("pulse", {})
    base_int = data.get("integrator", {})
    runs_raw = data.get("runs")
    if runs_raw is None:
        runs_raw = [{"name": "main", **{c: data[c] for c in COMMANDS if c in data}}]
        defaults = {}
    else:
        defaults = {c: data[c] for c in COMMANDS if c in data}
    runs = []
    seen = set()
    for k, r in enumerate(runs_raw):
        name = str(r.get("name", f"run{k}"))
        if name in seen:
            raise ConfigError(f"duplicate run name {name!r}", path, line_of(text, "runs.name"))
        seen.add(name)
        where = "pulse" if name == "main" else f"runs[{name}].pulse"
        ptable = _run_pulse(base_pulse, r.get("pulse", {}))
        try:
            pulse = pulse_from_table(ptable, where)
        except ConfigError as exc:
            bad = exc.message.split(":")[0].split(".")[-1]
            fail(exc, f"pulse.{bad}")
        try:
            settings = _integrator(_merge(base_int, r.get("integrator", {})))
        except ConfigError as exc:
            fail(exc, "integrator." + exc.message.split(":")[0].split(".")[-1])
        sections = {}
        for c in COMMANDS:
            if c in r:
                sections[c] = _merge(defaults.get(c, {}), r[c])
        for key in r:
            if key not in {"name", "pulse", "integrator", *COMMANDS}:
                raise ConfigError(f"runs[{name}]: unknown key {key!r}", path, line_of(text, key))
        run = RunConfig(name, pulse, settings, sections, path)
        for c, sec in sections.items():
            try:
                validate_section(c, sec, pulse)
            except ConfigError as exc:
                fail(exc, f"{c}." + exc.message.split(":")[0].split(".")[-1])
        runs.append(run)
    commands = tuple(data.get("commands", [c for c in COMMANDS if any(r.has(c) for r in runs)]))
    for c in commands:
        if c not in COMMANDS:
            raise ConfigError(f"unknown command {c!r} in 'commands'", path, line_of(text, "commands"))
    return ConfigFile(path, runs, commands, data)


def load_config(path) -> ConfigFile:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(loads(text, path), str(path), text)


# --- command sections ---------------------------------------------------------

# allowed keys per command: key -> kind (None for plain values)
SECTION_KEYS = {
    "trajectory": {"t0": TIME, "t1": TIME, "gamma": RATE, "stride": None, "max_rows": None},
    "sweep": {"axis1": "axis", "axis2": "axis", "links": None, "derive_delta2": None, "gamma": RATE},
    "spectrum": {"resolution": RATE, "t0": TIME, "t1": TIME, "step": TIME, "detuning_min": RATE,
                 "detuning_max": RATE},
    "photonics": {"gamma": RATE, "period": TIME, "max_periods": None, "tol": None,
                  "warmup_periods": None, "correlations": None, "tau_points": None},
}


def validate_section(command, table, pulse):
    keys = SECTION_KEYS[command]
    for key, val in table.items():
        if key not in keys:
            raise ConfigError(f"{command}.{key}: unknown key ({', '.join(keys)})")
        kind = keys[key]
        if kind == "axis":
            axis_from_table(val, pulse, f"{command}.{key}")
        elif kind is not None:
            parse_quantity(val, kind, f"{command}.{key}")
    if command == "photonics":
        for req in ("gamma", "period"):
            if req not in table:
                raise ConfigError(f"photonics.{req}: required")
    if command == "sweep" and "axis1" not in table:
        raise ConfigError("sweep.axis1: required")


def quantity(table, key, kind, default=None, where=""):
    if key not in table:
        return default
    return parse_quantity(table[key], kind, f"{where}.{key}" if where else key)


def axis_from_table(table, pulse, where="sweep.axis"):
    from .sweeps import SweepAxis

    if not isinstance(table, dict):
        raise ConfigError(f"{where}: expected a table {{name, start, stop, count}}")
    name = table.get("name")
    if name not in pulse.FIELD_KINDS:
        raise ConfigError(f"{where}: {name!r} is not a sweepable field of {pulse_type_name(pulse)}")
    kind = pulse.FIELD_KINDS[name]
    try:
        count = table["count"]
        start = parse_quantity(table["start"], kind, f"{where}.start")
        stop = parse_quantity(table["stop"], kind, f"{where}.stop")
    except KeyError as exc:
        raise ConfigError(f"{where}: missing {exc.args[0]!r}") from None
    if not isinstance(count, int) or isinstance(count, bool):
        raise ConfigError(f"{where}.count: expected an integer")
    try:
        return SweepAxis(name, start, stop, count)
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def sweep_grid(run: RunConfig, max_points=None):
    from .sweeps import SweepGrid

    sec = run.sections["sweep"]
    ax1 = axis_from_table(sec["axis1"], run.pulse, "sweep.axis1")
    ax2 = axis_from_table(sec["axis2"], run.pulse, "sweep.axis2") if "axis2" in sec else None
    if max_points:
        ax1, ax2 = (_cap(a, max_points) for a in (ax1, ax2))
    links = []
    for k, ln in enumerate(sec.get("links", [])):
        if not (isinstance(ln, list) and len(ln) == 3):
            raise ConfigError(f"sweep.links[{k}]: expected [target, source, factor]")
        links.append((str(ln[0]), str(ln[1]), float(ln[2])))
    try:
        return SweepGrid(run.pulse, ax1, ax2, tuple(links), bool(sec.get("derive_delta2", False)))
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}") from None


def _cap(axis, n):
    if axis is None or axis.count <= n:
        return axis
    return replace(axis, count=n)
