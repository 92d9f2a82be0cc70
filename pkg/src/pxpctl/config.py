"""Experiment configuration and its flat INI-style text form.

A config file holds one ``[experiment]`` section and, for sweeps, an optional
``[sweep]`` section whose keys (``L``, ``p``, ``q``) list comma-separated
values or ``start:stop:step`` ranges that override the template::

    [experiment]
    mode = classical
    L = 300
    p = 0.0
    q = 0.2
    theta_rad = pi/2
    t_max_steps = 300
    n_samples = 1000
    master_seed = 1
    observables = h_zz

    [sweep]
    p = 0.40:0.60:0.05
"""
from __future__ import annotations

import configparser
import io
import math
import re
from dataclasses import asdict, dataclass, field, fields, replace
from itertools import product

__all__ = ["ConfigError", "ExperimentConfig", "SweepSpec", "parse_config", "dump_config", "load_config_file"]

MODES = ("quantum", "classical")
INITIAL_POLICIES = ("random_cb", "ancilla_joint", "explicit")
OBSERVABLES = ("h_zz", "z_profile", "entropy", "tmi", "s_anc", "norm")
CLASSICAL_OBSERVABLES = ("h_zz", "z_profile")
BACKENDS = ("direct", "ancilla")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists one message per offending field."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "quantum"
    L: int = 12
    p: float = 0.5
    q: float = 0.2
    theta: float = math.pi / 3
    t_max: int | None = None
    n_samples: int = 100
    master_seed: int = 0
    perturb: bool = False
    observables: tuple[str, ...] = ("h_zz",)
    record_every: int = 1
    initial_state: str = "random_cb"
    initial_config: str | None = None
    backend: str = "direct"

    def __post_init__(self):
        if self.t_max is None:
            object.__setattr__(self, "t_max", 3 * self.L)
        object.__setattr__(self, "observables", tuple(self.observables))
        problems = self.problems()
        if problems:
            raise ConfigError(problems)

    def problems(self) -> list[str]:
        out = []
        if self.mode not in MODES:
            out.append(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.L < 4 or self.L % 2:
            out.append(f"L: need an even ring size >= 4, got {self.L}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                out.append(f"{name}: must lie in [0, 1], got {v}")
        if not 0.0 < self.theta <= math.pi:
            out.append(f"theta: must lie in (0, pi], got {self.theta}")
        if self.t_max < 0:
            out.append(f"t_max: must be >= 0, got {self.t_max}")
        if self.n_samples < 1:
            out.append(f"n_samples: must be >= 1, got {self.n_samples}")
        if self.record_every < 1:
            out.append(f"record_every: must be >= 1, got {self.record_every}")
        bad = [o for o in self.observables if o not in OBSERVABLES]
        if bad:
            out.append(f"observables: unknown {bad}; choose from {OBSERVABLES}")
        if self.initial_state not in INITIAL_POLICIES:
            out.append(f"initial_state: expected one of {INITIAL_POLICIES}, got {self.initial_state!r}")
        if self.initial_state == "explicit":
            s = self.initial_config or ""
            if len(s) != self.L or set(s) - {"0", "1"}:
                out.append(f"initial_config: need a {self.L}-character 0/1 string, got {s!r}")
        if self.backend not in BACKENDS:
            out.append(f"backend: expected one of {BACKENDS}, got {self.backend!r}")
        if self.mode == "classical":
            if not math.isclose(self.theta, math.pi / 2, rel_tol=0, abs_tol=1e-12):
                out.append("theta: classical mode requires theta = pi/2")
            if self.initial_state == "ancilla_joint":
                out.append("initial_state: ancilla_joint requires quantum mode")
            extra = [o for o in self.observables if o not in CLASSICAL_OBSERVABLES]
            if extra:
                out.append(f"observables: {extra} are not defined in classical mode")
        if "tmi" in self.observables and self.L % 4:
            out.append("observables: tmi needs L divisible by 4")
        if "s_anc" in self.observables and self.initial_state != "ancilla_joint":
            out.append("observables: s_anc needs initial_state = ancilla_joint")
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        if "L" in changes and "t_max" not in changes:
            changes["t_max"] = None
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["observables"] = list(self.observables)
        return d


@dataclass(frozen=True)
class SweepSpec:
    template: ExperimentConfig
    L: tuple[int, ...] = ()
    p: tuple[float, ...] = ()
    q: tuple[float, ...] = ()
    t_max_rule: str | None = field(default=None)

    def points(self) -> list[ExperimentConfig]:
        Ls = self.L or (self.template.L,)
        ps = self.p or (self.template.p,)
        qs = self.q or (self.template.q,)
        out = []
        for L, p, q in product(Ls, ps, qs):
            changes = {"L": L, "p": p, "q": q}
            if self.t_max_rule is None and L == self.template.L:
                changes["t_max"] = self.template.t_max
            elif self.t_max_rule is not None:
                changes["t_max"] = _eval_t_rule(self.t_max_rule, L)
            out.append(self.template.replace(**changes))
        return out


# ----------------------------------------------------------------- text form

_KEYS = {
    "mode": "mode",
    "L": "L",
    "p": "p",
    "q": "q",
    "theta_rad": "theta",
    "t_max_steps": "t_max",
    "n_samples": "n_samples",
    "master_seed": "master_seed",
    "perturb": "perturb",
    "observables": "observables",
    "record_every_steps": "record_every",
    "initial_state": "initial_state",
    "initial_config": "initial_config",
    "measurement_backend": "backend",
}
_FIELD_TO_KEY = {v: k for k, v in _KEYS.items()}
_PI_EXPR = re.compile(r"^\s*(?:([0-9.eE+-]+)\s*\*?\s*)?pi\s*(?:/\s*([0-9.eE+-]+))?\s*$")


def _parse_angle(text: str) -> float:
    m = _PI_EXPR.match(text)
    if m:
        num = float(m.group(1)) if m.group(1) else 1.0
        den = float(m.group(2)) if m.group(2) else 1.0
        return num * math.pi / den
    return float(text)


def eval_rule(rule: str, L: int) -> float:
    """Evaluate a size rule such as ``"3*L"`` or ``"0.7*L^0.88"`` (``^`` is a power)."""
    expr = rule.replace("^", "**")
    names = {"L": L, "ceil": math.ceil, "floor": math.floor}
    return float(eval(expr, {"__builtins__": {}}, names))  # noqa: S307


def _eval_t_rule(rule: str, L: int) -> int:
    return int(math.ceil(eval_rule(rule, L) - 1e-9))


def _parse_list(text: str, conv) -> tuple:
    text = text.strip()
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        n = int(round((stop - start) / step)) + 1
        return tuple(conv(round(start + k * step, 12)) for k in range(n))
    return tuple(conv(x) for x in text.split(",") if x.strip())


def _parse_fields(section) -> tuple[dict, list[str]]:
    kwargs, problems = {}, []
    for key, raw in section.items():
        if key not in _KEYS:
            problems.append(f"{key}: unknown key")
            continue
        name = _KEYS[key]
        try:
            if name in ("L", "n_samples", "master_seed", "record_every"):
                kwargs[name] = int(raw)
            elif name == "t_max":
                kwargs[name] = None if raw.strip() in ("", "auto") else int(raw)
            elif name in ("p", "q"):
                kwargs[name] = float(raw)
            elif name == "theta":
                kwargs[name] = _parse_angle(raw)
            elif name == "perturb":
                kwargs[name] = section.getboolean(key)
            elif name == "observables":
                kwargs[name] = tuple(x.strip() for x in raw.split(",") if x.strip())
            elif name == "initial_config":
                kwargs[name] = raw.strip() or None
            else:
                kwargs[name] = raw.strip()
        except ValueError as exc:
            problems.append(f"{key}: {exc}")
    return kwargs, problems


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    return cp


def parse_config(text: str) -> ExperimentConfig | SweepSpec:
    """Parse config text; returns a :class:`SweepSpec` when a ``[sweep]`` section is present."""
    cp = _parser()
    cp.read_string(text)
    if "experiment" not in cp:
        raise ConfigError(["[experiment]: section missing"])
    kwargs, problems = _parse_fields(cp["experiment"])
    if problems:
        raise ConfigError(problems)
    template = ExperimentConfig(**kwargs)
    if "sweep" not in cp:
        return template
    sw = cp["sweep"]
    try:
        spec = SweepSpec(
            template,
            L=_parse_list(sw["L"], int) if "L" in sw else (),
            p=_parse_list(sw["p"], float) if "p" in sw else (),
            q=_parse_list(sw["q"], float) if "q" in sw else (),
            t_max_rule=sw.get("t_max_rule"),
        )
    except ValueError as exc:
        raise ConfigError([f"[sweep]: {exc}"]) from exc
    spec.points()  # validates every point
    return spec


def dump_config(cfg: ExperimentConfig | SweepSpec) -> str:
    template = cfg.template if isinstance(cfg, SweepSpec) else cfg
    cp = _parser()
    section = {}
    for f in fields(ExperimentConfig):
        value = getattr(template, f.name)
        key = _FIELD_TO_KEY[f.name]
        if f.name == "observables":
            section[key] = ",".join(value)
        elif f.name == "initial_config":
            section[key] = value or ""
        elif isinstance(value, float):
            section[key] = repr(value)
        else:
            section[key] = str(value)
    cp["experiment"] = section
    if isinstance(cfg, SweepSpec):
        sweep = {}
        for name in ("L", "p", "q"):
            values = getattr(cfg, name)
            if values:
                sweep[name] = ",".join(repr(v) for v in values)
        if cfg.t_max_rule is not None:
            sweep["t_max_rule"] = cfg.t_max_rule
        cp["sweep"] = sweep
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config_file(path) -> ExperimentConfig | SweepSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
