"""Scenario configuration: a small line-based format with full validation.

Grammar::

    # comment
    [section]            run, units, grid, layer.N, layer.N.pole.M,
                         dispersion, green, evolve, extract, eigen, equiv, oracle, accept
    key = value          numbers, words, comma-separated integer lists

Layers are numbered from 1 (left wall) upward; a layer without poles is
vacuum. Without any layer the domain is uniform vacuum of ``grid.length``.
Every problem found is reported at once, not just the first.

The standard library parser cannot report both lines of a duplicate key nor
keep going after the first error, hence the hand-rolled reader.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

from .dispersion import Layer, LorentzPole, MediumStack, OscillatorModel
from .errors import ConfigError
from .units import Units

KINDS = ("dispersion", "green", "evolve", "eigen", "extract", "equiv", "oracle", "accept")


def _pos(v):
    return v > 0 and math.isfinite(v)


def _nonneg(v):
    return v >= 0 and math.isfinite(v)


# section -> key -> (type, default, check, description)
_SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "kind": (str, None, lambda v: v in KINDS, f"one of {', '.join(KINDS)}"),
        "output": (str, "medeq_out", lambda v: bool(v), "nonempty path"),
        "seed": (int, 0, lambda v: v >= 0, ">= 0"),
    },
    "units": {
        "c": (float, 1.0, _pos, "> 0"),
        "eps0": (float, 1.0, _pos, "> 0"),
        "hbar": (float, 1.0, _pos, "> 0"),
    },
    "grid": {
        "length": (float, 24.0, _pos, "> 0"),
        "n": (int, 96, lambda v: v >= 8, ">= 8"),
        "k": (int, 64, lambda v: v >= 8, ">= 8"),
        "lam_max": (float, 40.0, _pos, "> 0"),
        "eta": (float, 1e-6, _nonneg, ">= 0"),
    },
    "layer": {
        "thickness": (float, None, _pos, "> 0"),
    },
    "pole": {
        "plasma": (float, None, _nonneg, ">= 0"),
        "resonance": (float, None, _nonneg, ">= 0"),
        "damping": (float, None, _pos, "> 0"),
    },
    "dispersion": {
        "omega_max": (float, 50.0, _pos, "> 0"),
        "count": (int, 4096, lambda v: v >= 8, ">= 8"),
    },
    "green": {
        "omega_min": (float, 0.2, _pos, "> 0"),
        "omega_max": (float, 3.0, _pos, "> 0"),
        "count": (int, 16, lambda v: v >= 1, ">= 1"),
        "dump": (int, 0, lambda v: v >= 0, ">= 0 (number of Green matrices written)"),
    },
    "evolve": {
        "t": (float, 10.0, _pos, "> 0"),
        "samples": (int, 11, lambda v: v >= 2, ">= 2"),
        "method": (str, "exact", lambda v: v in ("exact", "rk4"), "exact or rk4"),
        "dt": (float, 1e-3, _pos, "> 0"),
        "initial": (str, "pulse", lambda v: v in ("pulse", "random"), "pulse or random"),
        "x0": (float, 7.0, math.isfinite, "finite"),
        "width": (float, 1.0, _pos, "> 0"),
        "wavenumber": (float, 1.0, math.isfinite, "finite"),
    },
    "extract": {
        "horizon": (float, 5.0, _pos, "> 0"),
        "dt": (float, 0.005, _pos, "> 0"),
        "x0": (float, 12.0, math.isfinite, "finite"),
        "width": (float, 1.0, _pos, "> 0"),
        "wavenumber": (float, 1.0, math.isfinite, "finite"),
    },
    "eigen": {
        "refine": (int, 3, lambda v: v >= 0, ">= 0"),
    },
    "equiv": {
        "horizon": (float, 5.0, _pos, "> 0"),
        "dt": (float, 0.005, _pos, "> 0"),
    },
    "oracle": {
        "t": (float, 10.0, _pos, "> 0"),
        "dt": (float, 1e-3, _pos, "> 0"),
        "x0": (float, 7.0, math.isfinite, "finite"),
        "k": (int, 200, lambda v: v >= 8, ">= 8 (bath nodes on the AF side)"),
    },
    "accept": {
        "gates": (list, list(range(1, 12)), lambda v: bool(v) and all(1 <= g <= 11 for g in v), "integers in 1..11"),
    },
}

_SECTION_RE = re.compile(r"^\[\s*([A-Za-z0-9_.]+)\s*\]$")
_KEY_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")
_LAYER_RE = re.compile(r"^layer\.([1-9][0-9]*)$")
_POLE_RE = re.compile(r"^layer\.([1-9][0-9]*)\.pole\.([1-9][0-9]*)$")


@dataclass(frozen=True)
class PoleConfig:
    plasma: float
    resonance: float
    damping: float


@dataclass(frozen=True)
class LayerConfig:
    thickness: float
    poles: tuple[PoleConfig, ...] = ()


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    output: str = "medeq_out"
    seed: int = 0
    units: Units = field(default_factory=Units)
    length: float = 24.0
    n: int = 96
    k: int = 64
    lam_max: float = 40.0
    eta: float = 1e-6
    layers: tuple[LayerConfig, ...] = ()
    params: dict = field(default_factory=dict)  # section -> {key: value} for the run sections
    defaults_applied: tuple[str, ...] = field(default=(), compare=False)

    def section(self, name: str) -> dict:
        out = {k: spec[1] for k, spec in _SCHEMA[name].items()}
        out.update(self.params.get(name, {}))
        return out

    def stack(self) -> MediumStack:
        if not self.layers:
            return MediumStack.uniform(self.length, OscillatorModel((), self.eta))
        out = []
        for layer in self.layers:
            poles = tuple(LorentzPole(p.plasma, p.resonance, p.damping) for p in layer.poles)
            out.append(Layer(layer.thickness, OscillatorModel(poles, self.eta)))
        return MediumStack(tuple(out))

    def to_text(self) -> str:
        """Canonical text that parses back to an equal config."""
        lines = ["[run]", f"kind = {self.kind}", f"output = {self.output}", f"seed = {self.seed}",
                 "", "[units]", f"c = {self.units.c!r}", f"eps0 = {self.units.eps0!r}", f"hbar = {self.units.hbar!r}",
                 "", "[grid]", f"length = {self.length!r}", f"n = {self.n}", f"k = {self.k}",
                 f"lam_max = {self.lam_max!r}", f"eta = {self.eta!r}"]
        for i, layer in enumerate(self.layers, 1):
            lines += ["", f"[layer.{i}]", f"thickness = {layer.thickness!r}"]
            for j, p in enumerate(layer.poles, 1):
                lines += ["", f"[layer.{i}.pole.{j}]", f"plasma = {p.plasma!r}", f"resonance = {p.resonance!r}",
                          f"damping = {p.damping!r}"]
        for sec in sorted(self.params):
            lines += ["", f"[{sec}]"]
            for key in sorted(self.params[sec]):
                v = self.params[sec][key]
                lines.append(f"{key} = {_render(v)}")
        return "\n".join(lines) + "\n"


def _render(v) -> str:
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _convert(kind, raw: str):
    if kind is str:
        return raw
    if kind is int:
        return int(raw)
    if kind is float:
        v = float(raw)
        return v
    if kind is list:
        return [int(x) for x in raw.split(",") if x.strip()]
    raise TypeError(kind)


def _schema_for(section: str) -> dict | None:
    if _POLE_RE.match(section):
        return _SCHEMA["pole"]
    if _LAYER_RE.match(section):
        return _SCHEMA["layer"]
    if section in ("layer", "pole"):
        return None
    return _SCHEMA.get(section)


def parse_config(text: str, overrides: list[str] | None = None) -> ScenarioConfig:
    """Parse and validate; raise ConfigError listing every problem."""
    errors: list[str] = []
    raw: dict[str, dict[str, tuple[str, int]]] = {}
    section_lines: dict[str, int] = {}
    current = None
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        m = _SECTION_RE.match(stripped)
        if m:
            current = m.group(1)
            if _schema_for(current) is None:
                errors.append(f"line {lineno}: unknown section [{current}]")
            if current in section_lines:
                errors.append(f"line {lineno}: section [{current}] repeated (first at line {section_lines[current]})")
            else:
                section_lines[current] = lineno
            raw.setdefault(current, {})
            continue
        m = _KEY_RE.match(stripped)
        if not m:
            errors.append(f"line {lineno}: cannot parse {stripped!r} (expected [section] or key = value)")
            continue
        if current is None:
            errors.append(f"line {lineno}: key {m.group(1)!r} appears before any [section]")
            continue
        key, value = m.group(1), m.group(2).strip()
        if key in raw[current]:
            errors.append(f"line {lineno}: duplicate key [{current}] {key} (first at line {raw[current][key][1]}, "
                          f"again at line {lineno})")
            continue
        raw[current][key] = (value, lineno)
    for item in overrides or []:
        m = re.match(r"^([A-Za-z0-9_.]+)\.([A-Za-z_][A-Za-z0-9_]*)=(.*)$", item.strip())
        if not m:
            errors.append(f"--set {item!r}: expected section.key=value")
            continue
        sec, key, value = m.groups()
        if _schema_for(sec) is None:
            errors.append(f"--set {item!r}: unknown section [{sec}]")
            continue
        raw.setdefault(sec, {})[key] = (value.strip(), 0)

    values: dict[str, dict] = {}
    applied: list[str] = []
    for sec, entries in raw.items():
        schema = _schema_for(sec)
        if schema is None:
            continue
        out = {}
        for key, (value, lineno) in entries.items():
            where = f"line {lineno}" if lineno else "--set"
            if key not in schema:
                errors.append(f"{where}: unknown key [{sec}] {key} (allowed: {', '.join(schema)})")
                continue
            kind, _, check, desc = schema[key]
            try:
                v = _convert(kind, value)
            except ValueError:
                errors.append(f"{where}: [{sec}] {key} = {value!r} is not a valid {kind.__name__}")
                continue
            if not check(v):
                errors.append(f"{where}: [{sec}] {key} = {value} violates constraint {desc}")
                continue
            out[key] = v
        values[sec] = out

    if "run" not in raw:
        errors.append("missing required section [run]")
    elif "kind" not in values.get("run", {}) and not any("[run] kind" in e for e in errors):
        errors.append("missing required key [run] kind")

    # layers and poles must be numbered contiguously from 1
    layer_ids = sorted(int(_LAYER_RE.match(s).group(1)) for s in raw if _LAYER_RE.match(s))
    if layer_ids and layer_ids != list(range(1, len(layer_ids) + 1)):
        errors.append(f"layers must be numbered 1..{len(layer_ids)} without gaps, got {layer_ids}")
    layers = []
    for i in layer_ids:
        sec = f"layer.{i}"
        thick = values.get(sec, {}).get("thickness")
        if thick is None and not any(f"[{sec}] thickness" in e for e in errors):
            errors.append(f"[{sec}]: missing required key thickness")
        pole_ids = sorted(int(_POLE_RE.match(s).group(2)) for s in raw
                          if _POLE_RE.match(s) and int(_POLE_RE.match(s).group(1)) == i)
        if pole_ids and pole_ids != list(range(1, len(pole_ids) + 1)):
            errors.append(f"[{sec}]: poles must be numbered 1..{len(pole_ids)} without gaps, got {pole_ids}")
        poles = []
        for j in pole_ids:
            psec = f"{sec}.pole.{j}"
            pv = values.get(psec, {})
            missing = [kk for kk in ("plasma", "resonance", "damping")
                       if kk not in pv and not any(f"[{psec}] {kk}" in e for e in errors)]
            if missing:
                errors.append(f"[{psec}]: missing required key(s) {', '.join(missing)}")
                continue
            if all(kk in pv for kk in ("plasma", "resonance", "damping")):
                poles.append(PoleConfig(pv["plasma"], pv["resonance"], pv["damping"]))
        layers.append(LayerConfig(thick if thick is not None else math.nan, tuple(poles)))
    orphan = sorted({int(_POLE_RE.match(s).group(1)) for s in raw if _POLE_RE.match(s)} - set(layer_ids))
    for i in orphan:
        errors.append(f"pole sections reference missing section [layer.{i}]")

    grid = values.get("grid", {})
    for key, spec in _SCHEMA["grid"].items():
        if key not in grid:
            applied.append(f"grid.{key} = {_render(spec[1])}")
    for key, spec in _SCHEMA["units"].items():
        if key not in values.get("units", {}):
            applied.append(f"units.{key} = {_render(spec[1])}")
    total = sum(layer.thickness for layer in layers) if layers else None
    if layers and "length" in grid and total is not None and math.isfinite(total) \
            and abs(total - grid["length"]) > 1e-12 * max(1.0, total):
        errors.append(f"[grid] length = {grid['length']} disagrees with the layer total {total}")
    if not layers:
        applied.append("medium = uniform vacuum")
    green = values.get("green", {})
    gmin = green.get("omega_min", _SCHEMA["green"]["omega_min"][1])
    gmax = green.get("omega_max", _SCHEMA["green"]["omega_max"][1])
    if gmax < gmin:
        errors.append(f"[green] omega_max = {gmax} is below omega_min = {gmin}")

    if errors:
        raise ConfigError(errors)

    run = values["run"]
    for key, spec in _SCHEMA["run"].items():
        if key not in run and spec[1] is not None:
            applied.append(f"run.{key} = {spec[1]}")
    u = values.get("units", {})
    params = {s: dict(v) for s, v in values.items() if s in _SCHEMA and s not in ("run", "units", "grid") and v}
    length = total if layers else grid.get("length", 24.0)
    return ScenarioConfig(
        kind=run["kind"], output=run.get("output", "medeq_out"), seed=run.get("seed", 0),
        units=Units(u.get("c", 1.0), u.get("eps0", 1.0), u.get("hbar", 1.0)),
        length=float(length), n=grid.get("n", 96), k=grid.get("k", 64), lam_max=grid.get("lam_max", 40.0),
        eta=grid.get("eta", 1e-6), layers=tuple(layers), params=params, defaults_applied=tuple(applied),
    )


def with_kind(cfg: ScenarioConfig, kind: str) -> ScenarioConfig:
    if kind not in KINDS:
        raise ConfigError([f"unknown kind {kind!r}"])
    return replace(cfg, kind=kind)


STANDARD_TEXT = """\
# vacuum | Lorentz slab | vacuum between mirrors
[run]
kind = accept

[grid]
n = 96
k = 64
lam_max = 40.0
eta = 1e-06

[layer.1]
thickness = 11.0

[layer.2]
thickness = 2.0

[layer.2.pole.1]
plasma = 1.0
resonance = 1.0
damping = 0.1

[layer.3]
thickness = 11.0
"""

