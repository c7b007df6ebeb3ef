"""Line-oriented ``key = value`` run configuration.

Example::

    [model]
    w0 = 20.5
    r = 0.079
    w_lo = 24
    w_hi = 123
    a = 1
    b = 2.5

    [problem]
    horizon = 120
    growth_offset = 61
    delta = 0.04
    h = 100
    eta = linear-decreasing 0.1
    terminal = step 50 0.5

    [grid]
    i_t = 24000
    i_n = 500

Section headers are optional, but a key placed under a header must belong to
it. Numbers are parsed with :func:`float`, so the decimal point is always ``.``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import ValidationError
from .growth import DEFAULT_QUAD_POINTS, MaxWeightDistribution, UncertainGrowthModel
from .hjb import GridSpec, HarvestProblem, TerminalReward
from .robust import UncertaintyAversion

SECTIONS = {
    "model": ("w0", "r", "w_lo", "w_hi", "a", "b", "quad_points"),
    "problem": ("horizon", "growth_offset", "delta", "h", "n_max", "alpha", "eta", "terminal"),
    "grid": ("i_t", "i_n"),
    "output": ("out_dir",),
}
KEY_SECTION = {k: s for s, keys in SECTIONS.items() for k in keys}
REQUIRED = ("w0", "r", "w_lo", "w_hi", "a", "b", "horizon", "growth_offset", "delta", "h", "eta",
            "i_t", "i_n")
DEFAULTS = {"quad_points": str(DEFAULT_QUAD_POINTS), "n_max": "1", "alpha": "0.5", "terminal": "zero"}
INT_KEYS = ("quad_points", "i_t", "i_n")
# keys a sensitivity variant may override
VARIANT_KEYS = ("delta", "h", "eta", "terminal", "horizon", "growth_offset")


# per-key range checks, so a bad scalar is reported on its own line
SCALAR_RULES = {
    "horizon": (lambda x: x > 0, "must be positive"),
    "delta": (lambda x: x >= 0, "must be nonnegative"),
    "h": (lambda x: x > 0, "must be positive"),
    "n_max": (lambda x: x > 0, "must be positive"),
    "alpha": (lambda x: x == 0.5, "must be 0.5 (the only exponent with a closed-form Hamiltonian)"),
    "i_t": (lambda x: x >= 2, "must be at least 2"),
    "i_n": (lambda x: x >= 2, "must be at least 2"),
    "quad_points": (lambda x: x >= 1, "must be positive"),
}


def _at(lineno: int) -> str:
    return f"line {lineno}: " if lineno else ""


def _lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _number(text: str, lineno: int, key: str, integer: bool = False):
    try:
        if integer:
            return int(text)
        value = float(text)
    except ValueError:
        kind = "an integer" if integer else "a number"
        raise ValidationError(f"{_at(lineno)}cannot parse {key} = {text!r} as {kind}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ValidationError(f"{_at(lineno)}{key} must be finite")
    return value


def _pairs(tokens, lineno, key):
    out = []
    for tok in tokens:
        left, sep, right = tok.partition(":")
        if not sep:
            raise ValidationError(f"{_at(lineno)}{key} table entries must look like n:value, got {tok!r}")
        out.append((_number(left, lineno, key), _number(right, lineno, key)))
    return tuple(out)


def parse_eta(text: str, lineno: int = 0, n_max: float = 1.0) -> UncertaintyAversion:
    """``constant MU``, ``linear-decreasing MU``, ``affine-increasing MU``,
    ``affine MU SLOPE`` or ``table n:eta n:eta ...``."""
    tokens = text.split()
    if not tokens:
        raise ValidationError(f"{_at(lineno)}empty eta")
    form, args = tokens[0], tokens[1:]
    arity = {"constant": 1, "linear-decreasing": 1, "affine-increasing": 1, "affine": 2}
    if form == "table":
        return UncertaintyAversion(0.0, "table", n_max=n_max, table=_pairs(args, lineno, "eta"))
    if form not in arity:
        raise ValidationError(f"{_at(lineno)}unknown eta form {form!r}")
    if len(args) != arity[form]:
        raise ValidationError(f"{_at(lineno)}eta form {form} takes {arity[form]} number(s)")
    nums = [_number(a, lineno, "eta") for a in args]
    slope = nums[1] if form == "affine" else 0.0
    return UncertaintyAversion(nums[0], form, n_max=n_max, slope=slope)


def parse_terminal(text: str, lineno: int = 0) -> TerminalReward:
    """``zero``, ``step HEIGHT THRESHOLD`` or ``table n:S n:S ...``."""
    tokens = text.split()
    form, args = (tokens[0], tokens[1:]) if tokens else ("", [])
    if form == "zero" and not args:
        return TerminalReward()
    if form == "step" and len(args) == 2:
        height, threshold = (_number(a, lineno, "terminal") for a in args)
        return TerminalReward("step", height=height, threshold=threshold)
    if form == "table" and args:
        return TerminalReward("table", breakpoints=_pairs(args, lineno, "terminal"))
    raise ValidationError(f"{_at(lineno)}terminal must be 'zero', 'step HEIGHT THRESHOLD' or 'table n:S ...'")


def _read_sections(text: str, allowed_section=None):
    """Yield ``(section, key, value, lineno)``; ``allowed_section(name)`` validates headers."""
    section = None
    for lineno, line in _lines(text):
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ValidationError(f"line {lineno}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if allowed_section is not None:
                allowed_section(section, lineno)
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {line!r}")
        if not value:
            raise ValidationError(f"line {lineno}: empty value for {key}")
        yield section, key, value, lineno


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values`` maps every known key to its text."""

    values: tuple[tuple[str, str], ...]
    source: str | None = None

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def __hash__(self):
        return hash(self.values)

    def __getitem__(self, key: str) -> str:
        return dict(self.values)[key]

    def get(self, key: str, default=None):
        return dict(self.values).get(key, default)

    @property
    def model(self) -> UncertainGrowthModel:
        v = dict(self.values)
        q = int(v["quad_points"])
        dist = MaxWeightDistribution(float(v["w_lo"]), float(v["w_hi"]), float(v["a"]), float(v["b"]),
                                     resolution=q)
        return UncertainGrowthModel(w0=float(v["w0"]), r=float(v["r"]), dist=dist, quad_points=q)

    @property
    def eta(self) -> UncertaintyAversion:
        return parse_eta(self["eta"], n_max=float(self["n_max"]))

    @property
    def terminal(self) -> TerminalReward:
        return parse_terminal(self["terminal"])

    @property
    def problem(self) -> HarvestProblem:
        return HarvestProblem(
            horizon=float(self["horizon"]), growth_offset=float(self["growth_offset"]),
            delta=float(self["delta"]), h=float(self["h"]), model=self.model, eta=self.eta,
            terminal=self.terminal, n_max=float(self["n_max"]), alpha=float(self["alpha"]),
        )

    @property
    def grid(self) -> GridSpec:
        return GridSpec(int(self["i_t"]), int(self["i_n"]))

    def echo(self) -> str:
        """Canonical text that :func:`parse_config_text` maps back to an equal config."""
        v = dict(self.values)
        out = []
        for section, keys in SECTIONS.items():
            present = [k for k in keys if k in v]
            if present:
                out.append(f"[{section}]")
                out.extend(f"{k} = {v[k]}" for k in present)
                out.append("")
        return "\n".join(out)

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        v = dict(self.values)
        for key, value in overrides.items():
            if key not in KEY_SECTION:
                raise ValidationError(f"unknown key {key}")
            v[key] = value
        cfg = RunConfig(tuple(sorted(v.items())), self.source)
        _validate(cfg, {})
        return cfg


def _validate(cfg: RunConfig, lines: dict[str, int]) -> None:
    """Decode every object once so bad values fail at parse time, naming the line."""
    v = dict(cfg.values)
    for key in v:
        if key == "out_dir" or key in ("eta", "terminal"):
            continue
        x = _number(v[key], lines.get(key, 0), key, integer=key in INT_KEYS)
        if key in SCALAR_RULES and not SCALAR_RULES[key][0](x):
            raise ValidationError(f"{_at(lines.get(key, 0))}{key} {SCALAR_RULES[key][1]}, got {v[key]}")
    checks = [
        (("eta", "n_max"), lambda: cfg.eta),
        (("terminal",), lambda: cfg.terminal),
        (("w0", "r", "w_lo", "w_hi", "a", "b", "quad_points"), lambda: cfg.model),
        (("i_t", "i_n"), lambda: cfg.grid),
        (("horizon", "delta", "h", "alpha", "n_max"), lambda: cfg.problem),
    ]
    for keys, build in checks:
        try:
            build()
        except ValidationError as exc:
            where = min((lines[k] for k in keys if k in lines), default=0)
            msg = str(exc)
            raise ValidationError(msg if msg.startswith("line ") else _at(where) + msg) from None


def parse_config_text(text: str, source: str | None = None) -> RunConfig:
    def check_section(name, lineno):
        if name not in SECTIONS:
            raise ValidationError(f"line {lineno}: unknown section [{name}]")

    values: dict[str, str] = {}
    lines: dict[str, int] = {}
    for section, key, value, lineno in _read_sections(text, check_section):
        if key not in KEY_SECTION:
            raise ValidationError(f"line {lineno}: unknown key {key}")
        if section is not None and KEY_SECTION[key] != section:
            raise ValidationError(f"line {lineno}: key {key} belongs in [{KEY_SECTION[key]}], not [{section}]")
        if key in values:
            raise ValidationError(f"line {lineno}: duplicate key {key} (first set on line {lines[key]})")
        values[key] = " ".join(value.split()) if key != "out_dir" else value
        lines[key] = lineno
    for key in REQUIRED:
        if key not in values:
            raise ValidationError(f"missing key {key}")
    for key, default in DEFAULTS.items():
        values.setdefault(key, default)
    cfg = RunConfig(tuple(sorted(values.items())), source)
    _validate(cfg, lines)
    return cfg


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, str(path))


def parse_variants_text(text: str) -> list[tuple[str, dict[str, str]]]:
    """Each ``[label]`` section lists overrides of the base config."""
    variants: list[tuple[str, dict[str, str]]] = []
    seen: dict[tuple[str, str], int] = {}
    labels: set[str] = set()

    def new_section(name, lineno):
        if name in labels:
            raise ValidationError(f"line {lineno}: duplicate variant [{name}]")
        labels.add(name)
        variants.append((name, {}))

    for section, key, value, lineno in _read_sections(text, new_section):
        if section is None:
            raise ValidationError(f"line {lineno}: override {key} appears before any [variant] header")
        if key not in VARIANT_KEYS:
            raise ValidationError(f"line {lineno}: unknown key {key} (variants may set {', '.join(VARIANT_KEYS)})")
        if (section, key) in seen:
            raise ValidationError(f"line {lineno}: duplicate key {key} in [{section}]")
        seen[(section, key)] = lineno
        variants[-1][1][key] = " ".join(value.split())
    if not variants:
        raise ValidationError("variants file defines no [variant] sections")
    return variants


def parse_variants(path) -> list[tuple[str, dict[str, str]]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ValidationError(f"cannot read variants file {path}: {exc}") from None
    return parse_variants_text(text)


def problem_overrides(base: RunConfig, overrides: dict[str, str]) -> dict:
    """Translate text overrides into :class:`HarvestProblem` field replacements."""
    problem = base.with_overrides(overrides).problem
    return {k: getattr(problem, k) for k in overrides}


__all__ = [
    "RunConfig", "parse_config", "parse_config_text", "parse_eta", "parse_terminal",
    "parse_variants", "parse_variants_text", "problem_overrides"
]
