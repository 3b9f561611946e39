"""Experiment configuration: a flat ``key = value`` text format.

Lines hold ``key = value`` pairs; ``#`` starts a comment; nested parameters use
dotted keys such as ``estimator.ace1.n``. Lists are comma separated. Parsing
collects every problem (with its line number) before failing, and a repeated
key keeps its last value with a warning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable

from .analytic import TruncationPolicy
from .estimators import AceParams, Tag
from .model import TWO_PI, ArrayGeometry, BeamParams, LinkBudget, scaled_intensity_from_power
from .optimize import GaConfig

KINDS = ("crlb_sweep", "mse_sweep", "bias_sweep", "ser_sweep", "landscape", "calibrate")
SWEEP_VARIABLES = ("none", "noise_power_uw", "signal_power_uw", "I0", "lambda_n", "rho",
                   "calibration_slots")
CENTER_MODES = ("fixed", "uniform")
CONSTANT_MODES = ("oracle", "calibrated")
_TAGS = {t.value.lower(): t.value for t in Tag}


class ConfigError(ValueError):
    """All problems found in a config; ``errors`` holds ``(line, message)`` pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(f"line {ln}: {msg}" if ln else msg for ln, msg in self.errors))


# value parsers -------------------------------------------------------------

def _float(s: str) -> float:
    v = float(s)
    if not math.isfinite(v):
        raise ValueError(f"not a finite number: {s!r}")
    return v


def _int(s: str) -> int:
    f = float(s)
    if not f.is_integer():
        raise ValueError(f"not an integer: {s!r}")
    return int(f)


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _list(item: Callable[[str], Any]) -> Callable[[str], tuple]:
    def parse(s: str) -> tuple:
        parts = [p.strip() for p in s.split(",")]
        return tuple(item(p) for p in parts if p)
    return parse


def _choice(options) -> Callable[[str], str]:
    def parse(s: str) -> str:
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}; got {s!r}")
        return s
    return parse


def _estimator(s: str) -> str:
    try:
        return _TAGS[s.lower()]
    except KeyError:
        raise ValueError(f"unknown estimator {s!r}; expected one of {', '.join(_TAGS.values())}") from None


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


# range checks: return an error message or None
def _positive(v):
    return None if v > 0 else "must be > 0"


def _nonneg(v):
    return None if v >= 0 else "must be >= 0"


def _each(check, nonempty=False):
    def run(vs):
        if nonempty and not vs:
            return "needs at least one value"
        for v in vs:
            msg = check(v)
            if msg:
                return f"every entry {msg}"
        return None
    return run


def _between(lo, hi):
    return lambda v: None if lo <= v <= hi else f"must lie in [{lo}, {hi}]"


def _opt(key, parse, default=None, check=None, required=False):
    return field(default=default, metadata=dict(key=key, parse=parse, check=check, required=required))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = _opt("kind", _choice(KINDS), required=True)
    seed: int = _opt("seed", _int, 1, _nonneg)
    trials: int = _opt("trials", _int, 10000, _positive)
    chunk_size: int = _opt("chunk_size", _int, 1000, _positive)
    output: str = _opt("output", str, "")

    a: float = _opt("geometry.a", _float, 1.0, _positive)
    cells_per_side: tuple = _opt("geometry.cells_per_side", _list(_int), (), _each(_positive, True), required=True)

    signal_power_uw: float | None = _opt("beam.signal_power_uw", _float, None, _nonneg)
    noise_power_uw: float | None = _opt("beam.noise_power_uw", _float, None, _nonneg)
    I0: float | None = _opt("beam.I0", _float, None, _positive)
    lambda_n: float | None = _opt("beam.lambda_n", _float, None, _nonneg)
    rho: float | None = _opt("beam.rho", _float, None, _positive)
    center: str = _opt("beam.center", _choice(CENTER_MODES), "fixed")
    x0: float = _opt("beam.x0", _float, 0.0)
    y0: float = _opt("beam.y0", _float, 0.0)

    link_rho0: float | None = _opt("link.rho0", _float, None, _positive)
    link_distance_m: float = _opt("link.distance_m", _float, 0.0, _nonneg)
    link_wavelength_m: float = _opt("link.wavelength_m", _float, 1550e-9, _positive)
    link_slot_s: float = _opt("link.slot_s", _float, 1e-6, _positive)
    link_eta: float = _opt("link.eta", _float, 0.5, lambda v: None if 0 < v <= 1 else "must lie in (0, 1]")

    sweep_variable: str = _opt("sweep.variable", _choice(SWEEP_VARIABLES), "none")
    sweep_values: tuple = _opt("sweep.values", _list(_float), ())

    estimators: tuple = _opt("estimators", _list(_estimator), ())
    ace1_n: float = _opt("estimator.ace1.n", _float, 2.0, lambda v: None if v >= 1 else "must be >= 1")
    ace2_n: float = _opt("estimator.ace2.n", _float, 2.0, lambda v: None if v >= 1 else "must be >= 1")
    ace2_n_top: int = _opt("estimator.ace2.n_top", _int, 3, _positive)

    ga_population: int = _opt("ga.population", _int, 50, lambda v: None if v >= 4 else "must be >= 4")
    ga_generations: int = _opt("ga.generations", _int, 400, _positive)
    ga_mutation_prob: float = _opt("ga.mutation_prob", _float, 0.1, _between(0, 1))
    ga_mutation_sigma: float | None = _opt("ga.mutation_sigma", _float, None, _positive)
    ga_crossover_alpha: float = _opt("ga.crossover_alpha", _float, 0.5, _nonneg)
    ga_elitism: int = _opt("ga.elitism", _int, 2, _nonneg)

    constants: str = _opt("constants", _choice(CONSTANT_MODES), "oracle")
    calibration_slots: int = _opt("calibration.slots", _int, 100, _positive)

    epsilon0: float = _opt("truncation.epsilon0", _float, 1e-5,
                           lambda v: None if 0 < v < 1 else "must lie in (0, 1)")
    k_max: int | None = _opt("truncation.k_max", _int, None, _positive)
    analytic: bool = _opt("analytic", _bool, True)

    ppm_order: int = _opt("ppm.order", _int, 2, lambda v: None if v >= 2 else "must be >= 2")
    tracking_slots: int = _opt("ppm.tracking_slots", _int, 1, _positive)
    landscape_grid: int = _opt("landscape.grid", _int, 41, lambda v: None if v >= 2 else "must be >= 2")

    warnings: tuple = field(default=(), compare=False)

    # derived views ---------------------------------------------------------

    @property
    def power_style(self) -> bool:
        return self.signal_power_uw is not None

    def link(self) -> LinkBudget:
        rho0 = self.link_rho0 if self.link_rho0 is not None else 1.0
        return LinkBudget(rho0, self.link_wavelength_m, self.link_distance_m, self.link_slot_s, self.link_eta)

    def beam_rho(self, override: float | None = None) -> float:
        if override is not None:
            return override
        return self.rho if self.rho is not None else self.link().rho

    def geometry(self, cells: int) -> ArrayGeometry:
        return ArrayGeometry(self.a, int(cells))

    def sweep_points(self) -> tuple:
        return (math.nan,) if self.sweep_variable == "none" else self.sweep_values

    def beam(self, geom: ArrayGeometry, sweep_value: float = math.nan) -> BeamParams:
        """Beam constants at one sweep point, centred at the configured (x0, y0)."""
        var = self.sweep_variable
        vals = dict(signal_power_uw=self.signal_power_uw, noise_power_uw=self.noise_power_uw,
                    I0=self.I0, lambda_n=self.lambda_n, rho=None)
        if var in vals:
            vals[var] = sweep_value
        if self.power_style:
            link = self.link()
            I0 = scaled_intensity_from_power(link, vals["signal_power_uw"] * 1e-6) / TWO_PI
            lam = scaled_intensity_from_power(link, vals["noise_power_uw"] * 1e-6) / geom.area
        else:
            I0, lam = vals["I0"], vals["lambda_n"]
        return BeamParams(I0, self.beam_rho(vals["rho"]), self.x0, self.y0, lam)

    def row_calibration_slots(self, sweep_value: float = math.nan) -> int:
        return int(sweep_value) if self.sweep_variable == "calibration_slots" else self.calibration_slots

    def ga_config(self) -> GaConfig:
        return GaConfig(self.ga_population, self.ga_generations, mutation_sigma=self.ga_mutation_sigma,
                        mutation_prob=self.ga_mutation_prob, crossover_alpha=self.ga_crossover_alpha,
                        elitism_count=self.ga_elitism)

    def ace1_params(self) -> AceParams:
        return AceParams(self.ace1_n, 1)

    def ace2_params(self) -> AceParams:
        return AceParams(self.ace2_n, self.ace2_n_top)

    def truncation(self) -> TruncationPolicy:
        return TruncationPolicy(self.epsilon0, self.k_max)


_FIELDS = {f.metadata["key"]: f for f in fields(ExperimentConfig) if "key" in f.metadata}


def _cross_checks(cfg: ExperimentConfig, line_of: dict) -> list:
    errs = []

    def err(key, msg):
        errs.append((line_of.get(key, 0), f"{key}: {msg}" if key else msg))

    power = [k for k in ("beam.signal_power_uw", "beam.noise_power_uw") if k in line_of]
    direct = [k for k in ("beam.I0", "beam.lambda_n") if k in line_of]
    if power and direct:
        err(direct[0], "give either signal/noise powers or I0/lambda_n, not both")
    elif power:
        for k in ("beam.signal_power_uw", "beam.noise_power_uw"):
            if k not in line_of:
                err(k, "missing required key (power style needs both powers)")
    elif direct:
        for k in ("beam.I0", "beam.lambda_n"):
            if k not in line_of:
                err(k, "missing required key (direct style needs both I0 and lambda_n)")
    else:
        err("", "beam: give beam.signal_power_uw and beam.noise_power_uw, or beam.I0 and beam.lambda_n")

    if "beam.rho" in line_of and "link.rho0" in line_of:
        err("link.rho0", "give either beam.rho or link.rho0, not both")
    elif "beam.rho" not in line_of and "link.rho0" not in line_of:
        err("beam.rho", "missing required key (or give link.rho0)")

    var = cfg.sweep_variable
    if var == "none" and cfg.sweep_values:
        err("sweep.values", "values given but sweep.variable = none")
    if var != "none" and not cfg.sweep_values:
        err("sweep.values", f"missing values for sweep variable {var}")
    if var in ("noise_power_uw", "signal_power_uw") and direct:
        err("sweep.variable", f"{var} needs the power style")
    if var in ("I0", "lambda_n") and power:
        err("sweep.variable", f"{var} needs the I0/lambda_n style")
    if var in ("rho", "I0", "signal_power_uw", "calibration_slots"):
        for v in cfg.sweep_values:
            if not v > 0:
                err("sweep.values", f"{var} values must be > 0")
                break
    if var in ("noise_power_uw", "lambda_n") and any(v < 0 for v in cfg.sweep_values):
        err("sweep.values", f"{var} values must be >= 0")
    if var == "calibration_slots" and any(not float(v).is_integer() for v in cfg.sweep_values):
        err("sweep.values", "calibration_slots values must be integers")

    if cfg.kind in ("crlb_sweep", "landscape") and cfg.center != "fixed":
        err("beam.center", f"{cfg.kind} needs a fixed beam centre")
    if cfg.center == "fixed":
        for k, v in (("beam.x0", cfg.x0), ("beam.y0", cfg.y0)):
            if abs(v) > cfg.a:
                err(k, f"centre must lie on the array [-{cfg.a}, {cfg.a}]")
    if cfg.ga_elitism >= cfg.ga_population:
        err("ga.elitism", "must be smaller than ga.population")
    if len(set(cfg.estimators)) != len(cfg.estimators):
        err("estimators", "duplicate estimator")
    return errs


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    errors, warnings = [], []
    values, line_of = {}, {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append((ln, f"expected 'key = value', got {line!r}"))
            continue
        key, _, val = (s.strip() for s in line.partition("="))
        f = _FIELDS.get(key)
        if f is None:
            errors.append((ln, f"unknown key {key!r}"))
            continue
        if key in line_of:
            warnings.append(f"line {ln}: duplicate key {key!r} overrides line {line_of[key]}")
        line_of[key] = ln
        try:
            v = f.metadata["parse"](val)
        except ValueError as exc:
            errors.append((ln, f"{key}: {exc}"))
            values.pop(f.name, None)
            continue
        check = f.metadata["check"]
        msg = check(v) if check else None
        if msg:
            errors.append((ln, f"{key}: {msg}"))
            values.pop(f.name, None)
            continue
        values[f.name] = v

    for key, f in _FIELDS.items():
        if f.metadata["required"] and key not in line_of:
            errors.append((0, f"{key}: missing required key"))
    if errors:
        raise ConfigError(errors)

    cfg = ExperimentConfig(**values, warnings=tuple(warnings))
    errors = _cross_checks(cfg, line_of)
    if errors:
        raise ConfigError(errors)
    return cfg


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    out = []
    for key, f in _FIELDS.items():
        v = getattr(cfg, f.name)
        if v is None or (isinstance(v, tuple) and not v and not f.metadata["required"]):
            continue
        out.append(f"{key} = {_fmt(v)}")
    return "\n".join(out) + "\n"


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy with fields replaced, re-validated through the text form."""
    return parse_config(serialize_config(replace(cfg, **changes)))
