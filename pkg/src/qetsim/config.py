"""Experiment configuration: strict JSON schema with unit-suffixed quantities.

Every dimensional value is a string such as ``"10nH"``, ``"160uA"`` or
``"2.5GHz"``.  Frequencies given in Hz become angular frequencies (x 2 pi);
``"rad/s"`` is taken verbatim.  Unknown keys, missing required keys and unit
mismatches raise :class:`~qetsim.errors.ConfigError` naming the field path
and, where the key can be located, its line in the file.

The resolved configuration (every default filled in) can be rendered back
to a config dictionary with :func:`echo`; values are written with full
``repr`` precision so a re-run from the echo is bit-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError
from .magnetics import QetParams
from .transient import (PORTS, JunctionParams, ParasiticParams, SourceEvent, TransientConfig,
                        reference_pattern)
from .transmon import TransmonParams

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "parse_quantity",
    "echo",
    "digest",
]

PREFIXES = {
    "f": 1e-15, "p": 1e-12, "n": 1e-9, "u": 1e-6, "µ": 1e-6, "μ": 1e-6,
    "m": 1e-3, "": 1.0, "k": 1e3, "M": 1e6, "G": 1e9, "T": 1e12,
}

# canonical unit -> accepted spellings and the factor to SI
UNITS = {
    "H": {"H": 1.0},
    "A": {"A": 1.0},
    "F": {"F": 1.0},
    "ohm": {"ohm": 1.0, "Ohm": 1.0, "Ω": 1.0},
    "s": {"s": 1.0},
    "V": {"V": 1.0},
    "Wb": {"Wb": 1.0},
    "rad/s": {"Hz": 2 * math.pi, "rad/s": 1.0},
    "rad": {"rad": 1.0, "deg": math.pi / 180, "pi": math.pi},
}

_NUMBER = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*(\S*)\s*$")

QET_KEYS = ("Lc", "Lf", "Mc", "Mf", "M12", "M34", "M", "Ln0", "Ln5", "Ln1", "Ln2", "Ln3", "Ln4")

REQ = object()


@dataclass(frozen=True)
class Field:
    kind: str            # a key of UNITS, or float/int/str/bool/any
    default: Any = REQ
    choices: tuple = ()


def _q(unit, default=REQ):
    return Field(unit, default)


_PAR = ParasiticParams.reference()

SCHEMA: dict[str, dict[str, Field]] = {
    "qet": {
        **{k: _q("H") for k in ("Lc", "Lf", "Mc", "Mf", "M12", "M34", "M", "Ln0", "Ln5")},
        **{k: _q("H", None) for k in ("Ln1", "Ln2", "Ln3", "Ln4")},
    },
    "junction": {
        "i_c": _q("A", JunctionParams.i_c),
        "r_shunt": _q("ohm", JunctionParams.r_shunt),
        "c": _q("F", JunctionParams.c),
    },
    "parasitic": {"l_a": _q("H", _PAR.l_a), "l_b": _q("H", _PAR.l_b), "l_c": _q("H", _PAR.l_c)},
    "transient": {
        "t_end": _q("s", None),
        "dt_max": _q("s", TransientConfig.dt_max),
        "rel_tol": Field("float", TransientConfig.rel_tol),
        "abs_tol": Field("float", TransientConfig.abs_tol),
        "sample_dt": _q("s", TransientConfig.sample_dt),
        "settle": _q("s", 200e-12),
        "source_resistance": _q("ohm", 0.0),
    },
    "analyze": {"counts": Field("any", [[1, 0], [0, 1], [1, 1], [2, 0], [0, 2]])},
    "transmon": {
        "e_j": _q("rad/s", None),
        "e_j1": _q("rad/s", None),
        "e_j2": _q("rad/s", None),
        "e_c": _q("rad/s"),
        "m": _q("H"),
        "n_g": Field("float", 0.0),
        "levels": Field("int", 3),
        "i_idle": _q("A", 0.0),
    },
    "gate": {
        "type": Field("str", REQ, ("z", "iswap")),
        "phi_target": _q("rad", math.pi),
        "i_work": _q("A", None),
        "timing": Field("any", "auto"),
        "t_start": _q("s", 0.5e-9),
        "profile": Field("str", "ideal", ("ideal", "transient")),
        "psi0": Field("str", None),
        "g": _q("rad/s", None),
        "bracket": Field("any", [48e-9, 51e-9]),
        "tol_t": _q("s", 1e-12),
        "phase_corrected": Field("bool", True),
        "method": Field("str", "auto", ("auto", "exact", "stepwise")),
        "dt_max": _q("s", 1e-12),
    },
    "sweep": {
        "parameter": Field("str"),
        "values": Field("any", None),
        "start": Field("any", None),
        "stop": Field("any", None),
        "num": Field("int", None),
        "gate": Field("bool", False),
    },
    "output": {
        "dir": Field("str", None),
        "waveform_csv": Field("str", "waveform.csv"),
        "summary": Field("str", "summary.json"),
        "sweep_csv": Field("str", "sweep.csv"),
    },
}
SCHEMA["transmon2"] = SCHEMA["transmon"]
SOURCE_KEYS = {"port": Field("str", REQ, PORTS), "t0": _q("s"), "sigma": _q("s", 1e-12)}
PATTERN_KEYS = {"pattern": Field("str", REQ, ("reference",)), "spacing": _q("s", 2e-9), "sigma": _q("s", 1e-12)}
TOP_LEVEL = tuple(SCHEMA) + ("sources",)


class _Locator:
    """Maps field paths to line numbers by scanning the raw text for keys."""

    def __init__(self, text: str | None):
        self.text = text or ""

    def line(self, key: str) -> int | None:
        m = re.search(rf'"{re.escape(key)}"\s*:', self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, path: str, message: str) -> ConfigError:
        line = self.line(path.rsplit(".", 1)[-1].split("[", 1)[0])
        where = f"{path} (line {line})" if line else path
        return ConfigError(f"{where}: {message}")


def parse_quantity(value, unit: str, path: str = "value") -> float:
    """Parse ``"<number><prefix><unit>"`` into SI (angular frequency for ``rad/s``).

    Plain numbers are accepted only for ``rad`` (as radians) so that every
    dimensional quantity states its unit explicitly.
    """
    if isinstance(value, bool):
        raise ConfigError(f"{path}: expected a quantity in {unit}, got {value!r}")
    if isinstance(value, (int, float)):
        if unit == "rad":
            return float(value)
        if value == 0:
            return 0.0
        raise ConfigError(f"{path}: missing unit, write e.g. \"{value}{unit}\"")
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a quantity string in {unit}, got {value!r}")
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"{path}: cannot parse quantity {value!r}")
    number, suffix = float(m.group(1)), m.group(2)
    if not suffix and unit == "rad":
        return number
    for spelling, factor in sorted(UNITS[unit].items(), key=lambda kv: -len(kv[0])):
        if suffix.endswith(spelling):
            prefix = suffix[: len(suffix) - len(spelling)]
            if prefix in PREFIXES:
                x = number * PREFIXES[prefix] * factor
                if not math.isfinite(x):
                    raise ConfigError(f"{path}: quantity {value!r} is not finite")
                return x
    raise ConfigError(f"{path}: unit mismatch in {value!r}, expected {unit}")


def _coerce(f: Field, value, path: str, loc: _Locator):
    try:
        if f.kind in UNITS:
            return parse_quantity(value, f.kind, path)
    except ConfigError as exc:
        raise loc.error(path, str(exc).split(": ", 1)[1]) from None
    if f.kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise loc.error(path, f"expected a number, got {value!r}")
        return float(value)
    if f.kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise loc.error(path, f"expected an integer, got {value!r}")
        return value
    if f.kind == "bool":
        if not isinstance(value, bool):
            raise loc.error(path, f"expected true or false, got {value!r}")
        return value
    if f.kind == "str":
        if not isinstance(value, str):
            raise loc.error(path, f"expected a string, got {value!r}")
        if f.choices and value not in f.choices:
            raise loc.error(path, f"must be one of {list(f.choices)}, got {value!r}")
        return value
    return value


def _block(raw, schema: dict, path: str, loc: _Locator) -> dict:
    if not isinstance(raw, dict):
        raise loc.error(path, "expected an object")
    for key in raw:
        if key not in schema:
            raise loc.error(f"{path}.{key}", f"unknown key (allowed: {', '.join(schema)})")
    out = {}
    for key, f in schema.items():
        if key in raw and raw[key] is not None:
            out[key] = _coerce(f, raw[key], f"{path}.{key}", loc)
        elif f.default is REQ:
            raise loc.error(f"{path}.{key}", "missing required key")
        else:
            out[key] = f.default
    return out


@dataclass
class ExperimentConfig:
    """Resolved configuration: per-block dictionaries of SI values."""

    blocks: dict = field(default_factory=dict)
    sources: tuple = ()
    source_decl: Any = None
    path: str | None = None

    def has(self, name: str) -> bool:
        return name in self.blocks

    def require(self, name: str) -> dict:
        if name not in self.blocks:
            raise ConfigError(f"missing {name} block")
        return self.blocks[name]

    def block(self, name: str) -> dict:
        """Block values, falling back to schema defaults when the block is absent."""
        if name in self.blocks:
            return self.blocks[name]
        return {k: f.default for k, f in SCHEMA[name].items() if f.default is not REQ}

    def qet_params(self) -> QetParams:
        q = self.require("qet")
        return QetParams.paired(**{k: q[k] for k in QET_KEYS})

    def junction(self) -> JunctionParams:
        return JunctionParams(**self.block("junction"))

    def parasitics(self) -> ParasiticParams:
        return ParasiticParams(**self.block("parasitic"))

    def transient_config(self, rel_tol: float | None = None) -> TransientConfig:
        t = self.block("transient")
        t_end = t["t_end"]
        if t_end is None:
            t_end = max((e.t0 for e in self.sources), default=0.0) + 2e-9
        return TransientConfig(
            t_end=t_end, dt_max=t["dt_max"], rel_tol=t["rel_tol"] if rel_tol is None else rel_tol,
            abs_tol=t["abs_tol"], sample_dt=t["sample_dt"],
        )

    def transmon(self, name: str = "transmon") -> TransmonParams:
        t = self.require(name)
        return TransmonParams(e_j1=t["e_j1"], e_j2=t["e_j2"], e_c=t["e_c"], n_g=t["n_g"], m=t["m"],
                              levels=t["levels"], i_idle=t["i_idle"])

    def with_value(self, dotted: str, raw_value) -> "ExperimentConfig":
        """Copy with one parameter replaced; ``raw_value`` uses config syntax."""
        name, _, key = dotted.partition(".")
        if name not in SCHEMA or key not in SCHEMA[name]:
            raise ConfigError(f"sweep.parameter: unknown parameter path {dotted!r}")
        loc = _Locator(None)
        value = _coerce(SCHEMA[name][key], raw_value, dotted, loc)
        blocks = {k: dict(v) for k, v in self.blocks.items()}
        blocks.setdefault(name, self.block(name))[key] = value
        if name in ("transmon", "transmon2") and key == "e_j":
            blocks[name]["e_j1"] = blocks[name]["e_j2"] = value
        out = ExperimentConfig(blocks=blocks, sources=self.sources, source_decl=self.source_decl, path=self.path)
        out.validate()
        return out

    def validate(self) -> None:
        """Construct every domain object once so invariant violations surface as config errors."""
        from .errors import ParameterError

        try:
            if self.has("qet"):
                self.qet_params()
            self.junction()
            self.parasitics()
            self.transient_config()
            for name in ("transmon", "transmon2"):
                if self.has(name):
                    self.transmon(name)
        except ParameterError as exc:
            raise ConfigError(f"invalid parameter {exc}") from None


def _parse_sources(raw, loc: _Locator):
    if raw is None:
        return (), []
    if isinstance(raw, dict):
        spec = _block(raw, PATTERN_KEYS, "sources", loc)
        return tuple(reference_pattern(spec["spacing"], spec["sigma"])), spec
    if not isinstance(raw, list):
        raise loc.error("sources", "expected a list of events or a pattern object")
    events, spec = [], []
    for k, item in enumerate(raw):
        ev = _block(item, SOURCE_KEYS, f"sources[{k}]", loc)
        spec.append(ev)
        events.append(SourceEvent(ev["port"], ev["t0"], ev["sigma"]))
    return tuple(sorted(events, key=lambda e: e.t0)), spec


def parse_config(data: dict, text: str | None = None, path: str | None = None) -> ExperimentConfig:
    """Validate a decoded config dictionary.  ``text`` enables line numbers in errors."""
    loc = _Locator(text)
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    for key in data:
        if key not in TOP_LEVEL:
            raise loc.error(key, f"unknown block (allowed: {', '.join(TOP_LEVEL)})")
    blocks = {name: _block(data[name], SCHEMA[name], name, loc) for name in SCHEMA if name in data}
    for name in ("transmon", "transmon2"):
        if name in blocks:
            t = blocks[name]
            if t["e_j"] is not None:
                if t["e_j1"] is not None or t["e_j2"] is not None:
                    raise loc.error(f"{name}.e_j", "give either e_j or e_j1/e_j2, not both")
                t["e_j1"] = t["e_j2"] = t["e_j"]
            elif t["e_j1"] is None or t["e_j2"] is None:
                raise loc.error(f"{name}.e_j1", "missing junction energies (e_j or e_j1 and e_j2)")
            t["e_j"] = None
    if "analyze" in blocks:
        counts = blocks["analyze"]["counts"]
        if not isinstance(counts, list) or not all(
            isinstance(c, list) and len(c) == 2 and all(isinstance(n, int) and not isinstance(n, bool) for n in c)
            for c in counts
        ):
            raise loc.error("analyze.counts", "expected a list of integer pairs [n_c, n_f]")
    if "gate" in blocks:
        _check_gate(blocks["gate"], loc)
    if "sweep" in blocks:
        _check_sweep(blocks["sweep"], loc)
    sources, spec = _parse_sources(data.get("sources"), loc)
    cfg = ExperimentConfig(blocks=blocks, sources=sources, source_decl=spec, path=path)
    cfg.validate()
    return cfg


def _check_gate(g: dict, loc: _Locator) -> None:
    timing = g["timing"]
    if timing != "auto":
        g["timing"] = _coerce(_q("s"), timing, "gate.timing", loc)
        if not g["timing"] >= 0:
            raise loc.error("gate.timing", "gate time must be >= 0")
    br = g["bracket"]
    if not (isinstance(br, list) and len(br) == 2):
        raise loc.error("gate.bracket", "expected [t_lo, t_hi]")
    g["bracket"] = [b if isinstance(b, float) else _coerce(_q("s"), b, "gate.bracket", loc) for b in br]
    if not g["bracket"][0] < g["bracket"][1]:
        raise loc.error("gate.bracket", "require t_lo < t_hi")
    if g["type"] == "iswap" and g["profile"] != "ideal":
        raise loc.error("gate.profile", "iswap supports the ideal profile only")
    psi = g["psi0"]
    allowed = ("0", "1", "plus", "minus") if g["type"] == "z" else ("00", "01", "10", "11")
    if psi is not None and psi not in allowed:
        raise loc.error("gate.psi0", f"must be one of {list(allowed)}, got {psi!r}")


def _check_sweep(s: dict, loc: _Locator) -> None:
    name, _, key = s["parameter"].partition(".")
    if name not in SCHEMA or key not in SCHEMA[name] or name in ("sweep", "output", "analyze"):
        raise loc.error("sweep.parameter", f"unknown parameter path {s['parameter']!r}")
    if s["values"] is not None:
        if s["start"] is not None or s["stop"] is not None or s["num"] is not None:
            raise loc.error("sweep.values", "give either values or start/stop/num")
        if not isinstance(s["values"], list) or not s["values"]:
            raise loc.error("sweep.values", "expected a non-empty list")
    else:
        if s["start"] is None or s["stop"] is None or s["num"] is None:
            raise loc.error("sweep.start", "give values or all of start, stop and num")
        if s["num"] < 1:
            raise loc.error("sweep.num", "grid must be non-empty")


def sweep_values(s: dict) -> list:
    """Grid points in config syntax (strings keep their units)."""
    if s["values"] is not None:
        return list(s["values"])
    kind = _unit_of(s["parameter"])
    if kind in UNITS:
        a = parse_quantity(s["start"], kind, "sweep.start")
        b = parse_quantity(s["stop"], kind, "sweep.stop")
        return [_fmt(float(x), kind) for x in np.linspace(a, b, s["num"])]
    return [float(x) for x in np.linspace(float(s["start"]), float(s["stop"]), s["num"])]


def _unit_of(dotted: str) -> str:
    name, _, key = dotted.partition(".")
    return SCHEMA[name][key].kind


def _fmt(value: float, kind: str) -> str:
    return f"{value!r}{kind}"


def load_config(path) -> ExperimentConfig:
    """Read and validate a UTF-8 JSON config file.

    Raises:
        ConfigError: malformed JSON or schema violation.
        OSError: unreadable file.
    """
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(data, text, str(path))


def echo(cfg: ExperimentConfig) -> dict:
    """Resolved configuration in config syntax (re-parsable, full precision)."""
    out: dict = {}
    for name, values in cfg.blocks.items():
        block = {}
        for key, f in SCHEMA[name].items():
            v = values.get(key)
            if v is None:
                continue
            if f.kind in UNITS:
                block[key] = _fmt(v, f.kind)
            elif name == "gate" and key == "timing" and v != "auto":
                block[key] = _fmt(v, "s")
            elif name == "gate" and key == "bracket":
                block[key] = [_fmt(b, "s") for b in v]
            else:
                block[key] = v
        out[name] = block
    if isinstance(cfg.source_decl, dict):
        out["sources"] = {k: (_fmt(v, "s") if k != "pattern" else v) for k, v in cfg.source_decl.items()}
    elif cfg.source_decl:
        out["sources"] = [{"port": e["port"], "t0": _fmt(e["t0"], "s"), "sigma": _fmt(e["sigma"], "s")}
                          for e in cfg.source_decl]
    return out


def digest(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical resolved configuration."""
    return hashlib.sha256(json.dumps(echo(cfg), sort_keys=True).encode()).hexdigest()
