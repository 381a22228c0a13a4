"""Experiment configuration: INI-style sections of ``key = value`` pairs.

Vectors are comma separated (``q = 10, 35``); matrices separate rows with
``;``. Penalty terms live in sections named ``penalty.<label>``. Unknown
sections or keys are rejected, and every validation error names the
offending ``section.key`` plus its line when it appears in the file.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .direct import DirectConfig
from .dynamics import LotkaVolterraParams, SystemModel, make_linear, make_lotka_volterra
from .exceptions import ConfigurationError, NMPCError
from .hamiltonian import (
    CostWeights,
    InputBox,
    OcpSpec,
    PenaltySpec,
    ReferenceSignal,
    circle_reference,
    constant_reference,
    disk_exclusion,
)
from .loop import NmpcConfig
from .shooting import ShootingConfig

__all__ = ["ExperimentConfig", "load_config", "loads_config", "serialize", "config_hash", "default_config_path"]

_MODEL_KEYS = {
    "lotka_volterra": ("alpha", "beta", "gamma", "delta"),
    "linear": ("a", "b"),
}
_REFERENCE_KEYS = {
    "circle": {"center": True, "radius": True, "rate": False, "phase": False},
    "constant": {"value": True},
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list, np.ndarray)):
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 2:
            return "; ".join(", ".join(repr(float(v)) for v in row) for row in arr)
        return ", ".join(repr(float(v)) for v in arr.ravel())
    return str(value)


@dataclass(frozen=True)
class PenaltyEntry:
    label: str
    kind: str
    center: Tuple[float, ...]
    radius: float
    a: float
    b: float

    def build(self) -> PenaltySpec:
        return disk_exclusion(self.center, self.radius, self.a, self.b)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rebuild a run. Equality compares every field."""

    model_type: str
    model_params: Tuple[Tuple[str, object], ...]
    q: Tuple[float, ...]
    r: Tuple[float, ...]
    p: Tuple[float, ...]
    u_min: Tuple[float, ...]
    u_max: Tuple[float, ...]
    reference_form: str
    reference_params: Tuple[Tuple[str, object], ...]
    x0: Tuple[float, ...]
    nmpc: NmpcConfig
    solver: ShootingConfig = ShootingConfig()
    direct: DirectConfig = DirectConfig()
    penalties: Tuple[PenaltyEntry, ...] = ()
    seed: int = 0

    def build_model(self) -> SystemModel:
        params = dict(self.model_params)
        if self.model_type == "lotka_volterra":
            return make_lotka_volterra(LotkaVolterraParams(**params))
        return make_linear(params["a"], params["b"])

    def build_reference(self) -> ReferenceSignal:
        params = dict(self.reference_params)
        if self.reference_form == "circle":
            return circle_reference(params["center"], params["radius"], params.get("rate", 1.0), params.get("phase", 0.0))
        return constant_reference(params["value"])

    def build_spec(self, model: Optional[SystemModel] = None) -> OcpSpec:
        return OcpSpec(
            model=self.build_model() if model is None else model,
            weights=CostWeights(np.array(self.q), np.array(self.r), np.array(self.p)),
            box=InputBox(np.array(self.u_min), np.array(self.u_max)),
            reference=self.build_reference(),
            horizon=self.nmpc.horizon,
            penalties=tuple(p.build() for p in self.penalties),
        )

    def direct_config(self, nodes: int) -> DirectConfig:
        return replace(self.direct, nodes=nodes)

    def with_nmpc(self, **changes) -> "ExperimentConfig":
        return replace(self, nmpc=replace(self.nmpc, **changes))


class _Source:
    """Parsed sections plus key line numbers for error context."""

    def __init__(self, text: str, origin: str):
        self.origin = origin
        self.parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";;"))
        self.parser.optionxform = str
        try:
            self.parser.read_string(text, source=origin)
        except configparser.Error as exc:
            raise ConfigurationError(f"{origin}: parse error: {exc}") from None
        self.lines: Dict[str, int] = {}
        section = None
        for number, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            header = re.match(r"^\[(.+)\]$", stripped)
            if header:
                section = header.group(1).strip()
                self.lines.setdefault(section, number)
            elif section and "=" in stripped and not stripped.startswith(("#", ";")):
                key = stripped.split("=", 1)[0].strip()
                self.lines.setdefault(f"{section}.{key}", number)
        self.used: set = set()

    def error(self, key: str, message: str) -> ConfigurationError:
        line = self.lines.get(key) or self.lines.get(key.split(".", 1)[0])
        where = f"{self.origin}:{line}" if line else self.origin
        return ConfigurationError(f"{where}: {key}: {message}")

    def has(self, section, key) -> bool:
        return self.parser.has_option(section, key)

    def raw(self, section, key, required=True) -> Optional[str]:
        name = f"{section}.{key}"
        if not self.parser.has_option(section, key):
            if required:
                raise self.error(name, "missing required key")
            return None
        self.used.add(name)
        return self.parser.get(section, key).strip()

    def number(self, section, key, required=True, default=None, kind=float):
        text = self.raw(section, key, required)
        if text is None:
            return default
        try:
            value = kind(text) if kind is not int else int(text, 10)
        except ValueError:
            raise self.error(f"{section}.{key}", f"expected {kind.__name__}, got {text!r}") from None
        if kind is float and not np.isfinite(value):
            raise self.error(f"{section}.{key}", "must be finite")
        return value

    def flag(self, section, key, default):
        text = self.raw(section, key, required=False)
        if text is None:
            return default
        lowered = text.lower()
        if lowered in ("true", "yes", "on", "1"):
            return True
        if lowered in ("false", "no", "off", "0"):
            return False
        raise self.error(f"{section}.{key}", f"expected a boolean, got {text!r}")

    def vector(self, section, key, required=True, default=None) -> Optional[Tuple[float, ...]]:
        text = self.raw(section, key, required)
        if text is None:
            return default
        try:
            values = tuple(float(v) for v in text.split(",") if v.strip())
        except ValueError:
            raise self.error(f"{section}.{key}", f"expected comma-separated numbers, got {text!r}") from None
        if not values:
            raise self.error(f"{section}.{key}", "empty vector")
        return values

    def matrix(self, section, key) -> Tuple[Tuple[float, ...], ...]:
        text = self.raw(section, key)
        try:
            rows = tuple(tuple(float(v) for v in row.split(",")) for row in text.split(";"))
        except ValueError:
            raise self.error(f"{section}.{key}", f"expected rows of numbers, got {text!r}") from None
        if len({len(r) for r in rows}) != 1:
            raise self.error(f"{section}.{key}", "rows have different lengths")
        return rows

    def reject_unknown(self):
        for section in self.parser.sections():
            for key in self.parser.options(section):
                name = f"{section}.{key}"
                if name not in self.used:
                    raise self.error(name, "unknown key")


_KNOWN_SECTIONS = ("model", "cost", "bounds", "reference", "nmpc", "solver", "direct", "run")


def _wrap(src: _Source, key: str, build):
    try:
        return build()
    except (NMPCError, TypeError, ValueError) as exc:
        message = str(exc)
        # prefer the precise key when the owning type already named one
        named = re.search(r"\b([a-z_]+\.[a-z_]+)\b", message)
        if named and named.group(1).split(".")[0] in _KNOWN_SECTIONS:
            key = named.group(1)
            message = message.replace(key, "").strip(" :") or message
        raise src.error(key, message) from None


def _dataclass_section(src: _Source, section: str, cls, skip=()):
    kwargs = {}
    for f in fields(cls):
        if f.name in skip or not src.has(section, f.name):
            continue
        if f.type in ("bool", bool):
            kwargs[f.name] = src.flag(section, f.name, f.default)
        elif f.type in ("int", int):
            kwargs[f.name] = src.number(section, f.name, kind=int)
        else:
            kwargs[f.name] = src.number(section, f.name)
    return kwargs


def loads_config(text: str, origin: str = "<string>") -> ExperimentConfig:
    src = _Source(text, origin)
    for section in src.parser.sections():
        if section not in _KNOWN_SECTIONS and not section.startswith("penalty."):
            raise src.error(section, "unknown section")

    model_type = src.raw("model", "type")
    if model_type not in _MODEL_KEYS:
        raise src.error("model.type", f"unknown model {model_type!r}; expected one of {sorted(_MODEL_KEYS)}")
    if model_type == "lotka_volterra":
        params = tuple((k, src.number("model", k, required=False, default=getattr(LotkaVolterraParams, k)))
                       for k in _MODEL_KEYS[model_type])
    else:
        params = (("a", src.matrix("model", "a")), ("b", src.matrix("model", "b")))

    q = src.vector("cost", "q")
    r = src.vector("cost", "r")
    p = src.vector("cost", "p", required=False, default=q)
    u_min = src.vector("bounds", "u_min")
    u_max = src.vector("bounds", "u_max")

    form = src.raw("reference", "form")
    if form not in _REFERENCE_KEYS:
        raise src.error("reference.form", f"unknown reference form {form!r}; expected one of {sorted(_REFERENCE_KEYS)}")
    ref_params: List[Tuple[str, object]] = []
    for key, required in _REFERENCE_KEYS[form].items():
        if key in ("center", "value"):
            value = src.vector("reference", key, required)
        else:
            value = src.number("reference", key, required, default={"rate": 1.0, "phase": 0.0}.get(key))
        ref_params.append((key, value))

    penalties = []
    for section in src.parser.sections():
        if not section.startswith("penalty."):
            continue
        kind = src.raw(section, "kind", required=False) or "disk"
        if kind != "disk":
            raise src.error(f"{section}.kind", f"unknown penalty kind {kind!r}; expected 'disk'")
        entry = PenaltyEntry(
            label=section.split(".", 1)[1],
            kind=kind,
            center=src.vector(section, "center"),
            radius=src.number(section, "radius"),
            a=src.number(section, "a", required=False, default=1e6),
            b=src.number(section, "b", required=False, default=1.0),
        )
        _wrap(src, section, entry.build)
        penalties.append(entry)

    nmpc = _wrap(src, "nmpc", lambda: NmpcConfig(**_dataclass_section(src, "nmpc", NmpcConfig)))
    solver = _wrap(src, "solver", lambda: ShootingConfig(**_dataclass_section(src, "solver", ShootingConfig)))
    direct = _wrap(src, "direct", lambda: DirectConfig(**_dataclass_section(src, "direct", DirectConfig, skip=("nodes",))))
    x0 = src.vector("run", "x0")
    seed = src.number("run", "seed", required=False, default=0, kind=int)
    src.reject_unknown()

    cfg = ExperimentConfig(
        model_type=model_type,
        model_params=params,
        q=q, r=r, p=p,
        u_min=u_min, u_max=u_max,
        reference_form=form,
        reference_params=tuple(ref_params),
        x0=x0,
        nmpc=nmpc,
        solver=solver,
        direct=direct,
        penalties=tuple(penalties),
        seed=seed,
    )
    model = _wrap(src, "model", cfg.build_model)
    spec = _wrap(src, "cost", lambda: cfg.build_spec(model))
    if len(x0) != model.n_x:
        raise src.error("run.x0", f"expected {model.n_x} entries, got {len(x0)}")
    if len(u_max) != len(u_min):
        raise src.error("bounds.u_max", "u_min and u_max differ in length")
    for pen in penalties:
        if len(pen.center) != model.n_x:
            raise src.error(f"penalty.{pen.label}.center", f"expected {model.n_x} entries")
    if spec.reference.state(0.0).shape != (model.n_x,):
        raise src.error("reference.form", f"reference does not produce {model.n_x} states")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {path}: {exc.strerror}") from None
    return loads_config(text, origin=str(path))


def serialize(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``loads_config(serialize(cfg)) == cfg``."""
    out = ["[model]", f"type = {cfg.model_type}"]
    out += [f"{k} = {_fmt(v)}" for k, v in cfg.model_params]
    out += ["", "[cost]", f"q = {_fmt(cfg.q)}", f"r = {_fmt(cfg.r)}", f"p = {_fmt(cfg.p)}"]
    out += ["", "[bounds]", f"u_min = {_fmt(cfg.u_min)}", f"u_max = {_fmt(cfg.u_max)}"]
    out += ["", "[reference]", f"form = {cfg.reference_form}"]
    out += [f"{k} = {_fmt(v)}" for k, v in cfg.reference_params]
    for pen in cfg.penalties:
        out += ["", f"[penalty.{pen.label}]", f"kind = {pen.kind}", f"center = {_fmt(pen.center)}",
                f"radius = {_fmt(pen.radius)}", f"a = {_fmt(pen.a)}", f"b = {_fmt(pen.b)}"]
    for name, obj, skip in (("nmpc", cfg.nmpc, ()), ("solver", cfg.solver, ()), ("direct", cfg.direct, ("nodes",))):
        out += ["", f"[{name}]"]
        out += [f"{f.name} = {_fmt(getattr(obj, f.name))}" for f in fields(obj) if f.name not in skip]
    out += ["", "[run]", f"x0 = {_fmt(cfg.x0)}", f"seed = {cfg.seed}", ""]
    return "\n".join(out)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize(cfg).encode("utf-8")).hexdigest()[:16]


def default_config_path(name: str = "lotka_volterra.cfg") -> Path:
    """Location of a configuration shipped with the package."""
    return Path(__file__).parent / "data" / name
