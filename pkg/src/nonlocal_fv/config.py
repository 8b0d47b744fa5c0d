"""
INI configuration for single runs and convergence studies.

Sections and keys (``*`` = required)::

    [model]    name*, g (ascending polynomial coefficients), v (exp | linear | power:<p>),
               interval (rho_min, rho_max; defaults to the initial-data bounds)
    [kernel]   name*, eta*
    [scheme]   name*, alpha
    [grid]     x_min*, x_max*, dx*, t_end*, lambda*, boundary, anchor, cfl_mode
    [initial]  pieces*, default, sampling
    [output]   csv, steps_csv, svg, entropy_spacing
    [study]    levels*, schemes*, reference_scheme*, reference_level*, comparison

``lambda`` is a number, ``cfl`` (the largest ratio the theory allows for
the scheme at hand) or ``lxf-classic:<alpha>`` (``1/(alpha + gamma0 ||g|| ||v'||)``
evaluated per grid).  ``pieces`` is a comma-separated list of
``<interval>:<value>`` with bracket notation for endpoint closedness, e.g.
``[0.75,1.25]:0.8, (0.2,inf):0.01``.  Scheme entries in ``[study] schemes``
and ``reference_scheme`` are ``name`` or ``name:alpha``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from nonlocal_fv.flux import SCHEMES
from nonlocal_fv.model import (
    KERNELS, MODELS, InitialData, ModelError, Piece, velocity_from_name,
)
from nonlocal_fv.solver import ANCHORS, BOUNDARIES, CLASSIC_LXF

ALL_SCHEMES = SCHEMES + (CLASSIC_LXF,)

SCHEMA: Dict[str, Dict[str, bool]] = {
    "model": {"name": True, "g": False, "v": False, "interval": False},
    "kernel": {"name": True, "eta": True},
    "scheme": {"name": True, "alpha": False},
    "grid": {"x_min": True, "x_max": True, "dx": True, "t_end": True, "lambda": True,
             "boundary": False, "anchor": False, "cfl_mode": False},
    "initial": {"pieces": True, "default": False, "sampling": False},
    "output": {"csv": False, "steps_csv": False, "svg": False, "entropy_spacing": False},
    "study": {"levels": True, "schemes": True, "reference_scheme": True,
              "reference_level": True, "comparison": False},
}
# sections needed by every config; [scheme] only for single runs
BASE_SECTIONS = ("model", "kernel", "grid", "initial")


class ConfigError(ValueError):
    def __init__(self, errors: List[str], source: str = "<config>"):
        self.errors = list(errors)
        self.source = source
        super().__init__(f"{source}: " + "; ".join(self.errors))


@dataclass(frozen=True)
class SchemeChoice:
    name: str
    alpha: Optional[float] = None

    @property
    def label(self) -> str:
        return self.name if self.alpha is None else f"{self.name}:{self.alpha:g}"


@dataclass(frozen=True)
class LambdaRule:
    """``kind`` is ``fixed``, ``cfl`` or ``lxf-classic``."""

    kind: str
    value: Optional[float] = None

    def describe(self) -> str:
        if self.kind == "fixed":
            return repr(self.value)
        if self.kind == "cfl":
            return "cfl"
        return f"lxf-classic:{self.value!r}"


@dataclass(frozen=True)
class RunConfig:
    model_name: str
    g_coeffs: Optional[Tuple[float, ...]]
    velocity: Optional[str]
    interval: Optional[Tuple[float, float]]
    kernel: str
    eta: float
    scheme: Optional[SchemeChoice]
    x_min: float
    x_max: float
    dx: float
    t_end: float
    lam: LambdaRule
    boundary: str
    anchor: str
    strict: bool
    initial: InitialData
    sampling: str
    csv: Optional[str] = None
    steps_csv: Optional[str] = None
    svg: Optional[str] = None
    entropy_spacing: Optional[float] = None
    source: str = "<config>"

    def with_scheme(self, choice: SchemeChoice) -> "RunConfig":
        return replace(self, scheme=choice)


@dataclass(frozen=True)
class StudyConfig:
    base: RunConfig
    levels: Tuple[int, ...]
    schemes: Tuple[SchemeChoice, ...]
    reference: SchemeChoice
    reference_level: int
    comparison: str = "point"

    def dx_at(self, n: int) -> float:
        return self.base.dx * 2.0 ** (-n)


# {{{ value parsers

_NUM = r"[-+]?(?:inf|\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
_PIECE = re.compile(
    rf"^\s*([\[(])\s*({_NUM})\s*,\s*({_NUM})\s*([\])])\s*:\s*({_NUM})\s*$")


def parse_pieces(text: str) -> Tuple[Piece, ...]:
    """Parse ``[a,b]:v, (c,d]:w`` into pieces."""
    chunks = re.findall(r"[\[(][^\])]*[\])]\s*:\s*[^,\s]+", text)
    rest = re.sub(r"[\[(][^\])]*[\])]\s*:\s*[^,\s]+", "", text).replace(",", "").strip()
    if rest or not chunks:
        raise ValueError(f"cannot parse initial pieces {text!r}")
    out = []
    for c in chunks:
        m = _PIECE.match(c)
        if not m:
            raise ValueError(f"cannot parse piece {c!r}")
        lb, a, b, rb, v = m.groups()
        out.append(Piece(float(a), float(b), float(v), (lb == "[", rb == "]")))
    return tuple(out)


def parse_scheme_choice(text: str) -> SchemeChoice:
    name, _, alpha = text.strip().partition(":")
    name = name.strip()
    if name not in ALL_SCHEMES:
        raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(ALL_SCHEMES)}")
    if alpha:
        return SchemeChoice(name, float(alpha))
    if name == CLASSIC_LXF:
        raise ValueError(f"{CLASSIC_LXF} needs an explicit alpha ({CLASSIC_LXF}:<alpha>)")
    return SchemeChoice(name)


def parse_lambda(text: str) -> LambdaRule:
    t = text.strip()
    if t == "cfl":
        return LambdaRule("cfl")
    if t.startswith("lxf-classic:"):
        return LambdaRule("lxf-classic", float(t.split(":", 1)[1]))
    val = float(t)
    if not val > 0:
        raise ValueError("lambda must be positive")
    return LambdaRule("fixed", val)


def parse_levels(text: str) -> Tuple[int, ...]:
    t = text.strip()
    if ".." in t:
        a, b = t.split("..")
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty level range {t!r}")
        return tuple(range(lo, hi + 1))
    return tuple(int(x) for x in t.split(","))


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))

# }}}


def _line_of(lines: List[str], section: str, key: Optional[str] = None) -> str:
    cur = None
    for i, line in enumerate(lines, 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            cur = s[1:-1].strip()
            if key is None and cur == section:
                return f"line {i}"
        elif key is not None and cur == section and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return f"line {i}"
    return "?"


def preset_path(name: str) -> Path:
    ref = resources.files("nonlocal_fv") / "presets" / f"{name}.ini"
    return Path(str(ref))


def list_presets() -> List[str]:
    d = resources.files("nonlocal_fv") / "presets"
    return sorted(p.name[:-4] for p in d.iterdir() if p.name.endswith(".ini"))


def resolve(path_or_preset: Union[str, Path]) -> Path:
    p = Path(path_or_preset)
    if p.exists():
        return p
    if p.suffix == "" and str(p) in list_presets():
        return preset_path(str(p))
    raise ConfigError([f"no such file or preset: {path_or_preset}"], str(path_or_preset))


def parse_config(path_or_preset: Union[str, Path]) -> Union[RunConfig, StudyConfig]:
    path = resolve(path_or_preset)
    return parse_config_text(path.read_text(), str(path))


def parse_config_text(text: str, source: str = "<config>") -> Union[RunConfig, StudyConfig]:
    """Parse and validate; every problem is collected into one :class:`ConfigError`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError([str(exc).replace("\n", " ")], source) from exc
    lines = text.splitlines()
    errors: List[str] = []

    for sec in cp.sections():
        if sec not in SCHEMA:
            errors.append(f"{_line_of(lines, sec)}: unknown section [{sec}]")
            continue
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                errors.append(f"{_line_of(lines, sec, key)}: unknown key {key!r} in [{sec}]")

    is_study = cp.has_section("study")
    required_secs = BASE_SECTIONS + (("study",) if is_study else ("scheme",))
    for sec in required_secs:
        missing = [k for k, req in SCHEMA[sec].items() if req]
        if not cp.has_section(sec):
            errors.append(f"missing section [{sec}] (required keys: {', '.join(missing)})")
            continue
        for k in missing:
            if k not in cp[sec]:
                errors.append(f"{_line_of(lines, sec)}: missing key {k!r} in [{sec}]")
    if errors:
        raise ConfigError(errors, source)

    def get(sec, key, conv, default=None):
        if not cp.has_section(sec) or key not in cp[sec]:
            return default
        raw = cp[sec][key]
        try:
            return conv(raw)
        except (ValueError, ModelError) as exc:
            errors.append(f"{_line_of(lines, sec, key)}: [{sec}] {key} = {raw!r}: {exc}")
            return default

    def name_in(registry, what):
        def conv(s):
            s = s.strip()
            if s not in registry:
                raise ValueError(f"unknown {what}; registered: {', '.join(sorted(registry))}")
            return s
        return conv

    g = get("model", "g", _floats)
    vname = get("model", "v", lambda s: (velocity_from_name(s.strip()), s.strip())[1])
    if (g is None) != (vname is None):
        errors.append(f"{_line_of(lines, 'model')}: custom models need both g and v")
    model_name = get("model", "name", (lambda s: s.strip()) if g is not None and vname is not None
                     else name_in(MODELS, "model"))
    interval = get("model", "interval", _floats)
    if interval is not None and (len(interval) != 2 or interval[1] < interval[0]):
        errors.append(f"{_line_of(lines, 'model', 'interval')}: interval must be 'lo, hi'")

    def positive(s):
        x = float(s)
        if not x > 0 or not math.isfinite(x):
            raise ValueError("must be positive and finite")
        return x

    def one_of(options):
        def conv(s):
            s = s.strip()
            if s not in options:
                raise ValueError(f"choose from {', '.join(options)}")
            return s
        return conv

    kernel = get("kernel", "name", name_in(KERNELS, "kernel"))
    eta = get("kernel", "eta", positive)
    scheme = None
    if not is_study:
        name = get("scheme", "name", one_of(ALL_SCHEMES))
        alpha = get("scheme", "alpha", positive)
        if name == CLASSIC_LXF and alpha is None:
            errors.append(f"{_line_of(lines, 'scheme')}: {CLASSIC_LXF} needs alpha")
        if name is not None:
            scheme = SchemeChoice(name, alpha)

    x_min = get("grid", "x_min", float)
    x_max = get("grid", "x_max", float)
    dx = get("grid", "dx", positive)
    t_end = get("grid", "t_end", float)
    if t_end is not None and t_end < 0:
        errors.append(f"{_line_of(lines, 'grid', 't_end')}: t_end must be nonnegative")
    lam = get("grid", "lambda", parse_lambda)
    boundary = get("grid", "boundary", one_of(BOUNDARIES), "outflow_constant")
    anchor = get("grid", "anchor", one_of(ANCHORS), "edges")
    strict = get("grid", "cfl_mode", one_of(("strict", "permissive")), "strict") == "strict"

    pieces = get("initial", "pieces", parse_pieces)
    default = get("initial", "default", float, 0.0)
    sampling = get("initial", "sampling", one_of(("average", "point")), "average")
    initial = None
    if pieces is not None:
        try:
            initial = InitialData(pieces, default)
        except ModelError as exc:
            errors.append(f"{_line_of(lines, 'initial', 'pieces')}: {exc}")

    out = dict(
        csv=get("output", "csv", str.strip),
        steps_csv=get("output", "steps_csv", str.strip),
        svg=get("output", "svg", str.strip),
        entropy_spacing=get("output", "entropy_spacing", positive),
    )

    if errors:
        raise ConfigError(errors, source)

    base = RunConfig(
        model_name=model_name, g_coeffs=g, velocity=vname,
        interval=tuple(interval) if interval is not None else None,
        kernel=kernel, eta=eta, scheme=scheme, x_min=x_min, x_max=x_max, dx=dx,
        t_end=t_end, lam=lam, boundary=boundary, anchor=anchor, strict=strict,
        initial=initial, sampling=sampling, source=source, **out)

    if not is_study:
        _validate_setup(base, errors, lines)
        if errors:
            raise ConfigError(errors, source)
        return base

    levels = get("study", "levels", parse_levels)
    schemes = get("study", "schemes",
                  lambda s: tuple(parse_scheme_choice(x) for x in s.split(",") if x.strip()))
    reference = get("study", "reference_scheme", parse_scheme_choice)
    ref_level = get("study", "reference_level", int)
    comparison = get("study", "comparison", one_of(("average", "point")), "point")
    if errors:
        raise ConfigError(errors, source)
    if ref_level <= max(levels):
        errors.append(f"{_line_of(lines, 'study', 'reference_level')}: reference level "
                      f"{ref_level} must be finer than every compared level")
    if comparison == "point" and anchor != "centers":
        errors.append(f"{_line_of(lines, 'study', 'comparison')}: point comparison needs "
                      "anchor = centers")
    if comparison == "average" and anchor != "edges":
        errors.append(f"{_line_of(lines, 'study', 'comparison')}: average comparison needs "
                      "anchor = edges")
    study = StudyConfig(base, levels, schemes, reference, ref_level, comparison)
    for choice in schemes:
        for n in levels:
            _validate_setup(replace(base, scheme=choice, dx=study.dx_at(n)), errors, lines)
    if errors:
        raise ConfigError(sorted(set(errors)), source)
    return study


def _validate_setup(cfg: RunConfig, errors: List[str], lines: List[str]) -> None:
    """Construct the run to surface model, scheme and CFL errors at parse time."""
    from nonlocal_fv.experiments import SetupError, build_setup

    try:
        build_setup(cfg)
    except (SetupError, ModelError, ValueError) as exc:
        errors.append(f"{_line_of(lines, 'scheme' if cfg.scheme else 'study')}: "
                      f"{cfg.scheme.label if cfg.scheme else ''} dx={cfg.dx:g}: {exc}")
