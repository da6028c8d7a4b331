"""
Experiment specs and the sweep runner.

A spec file has three TOML sections, ``[physical]``, ``[numerics]`` and
``[experiment]``. Problems are reported as ConfigError with the file, line,
section and key they come from.
"""
import math
import re
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import tomli
from joblib import Parallel, delayed

from config import NumericsConfig, get_config
from emission.params import (
    PhysicalParams, DerivedScales, derive_scales, classify_markovianity, physics_warnings, with_xi, with_matched_laser,
)
from emission.single_site import (
    ANALYTIC, DIRECT, amplitude_for_params, population_markov, steady_population_finite_trap, steady_population_strong,
)
from emission.couplings import build_coupling_matrix, coupling_map, coupling_summary
from emission.collective import (
    SPIN, BOSON, KINDS, MOTT, SUPERFLUID, PHASES, initial_state, evolve_boson, evolve_spin_semiclassical,
    initial_rate_slope, decay_spectrum, spectral_number, emission_time_grid, evaporation_time, steady_remaining,
)
from emission.directional import (
    angular_distribution, diffraction_maxima, distribution_summary, validity_bound, cone_fraction,
)
from emission import outputs
from utils.errors import ConfigError, CriticalDetuning, EmissionError, InvalidParams, error_handler
from utils.logging import LoggingMixin

EXPERIMENTS = (
    "single_site_trace",
    "steady_state_scan",
    "coupling_map",
    "hardcore_superradiance",
    "boson_superradiance",
    "decay_spectrum",
    "directional",
    "validity_report",
)
DELIMITED = "delimited"
STRUCTURED_SUMMARY = "structured-summary"
FORMATS = (DELIMITED, STRUCTURED_SUMMARY)
METHODS = {"analytic": ANALYTIC, "direct": DIRECT}

SECTIONS = ("physical", "numerics", "experiment")
PARAM_FIELDS = tuple(f.name for f in fields(PhysicalParams))
PHYSICAL_KEYS = PARAM_FIELDS + ("xi", "laser_matched", "laser_direction")
SWEEPABLE = tuple(name for name in PARAM_FIELDS if name != "laser_wavevector") + ("xi",)
INTEGER_FIELDS = ("sites_per_axis", "reservoir_dim", "lattice_dim")
NUMERICS_EXTRA = ("t_max", "volterra_step")
EXPERIMENT_KEYS = (
    "name", "sweep_parameter", "sweep_values", "kind", "phases", "n_atoms", "output_prefix", "format",
    "detuning_range", "scan_points", "methods", "max_separation", "cutoff", "dispersive", "slope_xi", "slope_sites",
)
# single-site traces default to 20/Γ₀, spins to 0.5/Γ₀; bosons pick from their decay spectrum
DEFAULT_T_MAX = {"single_site_trace": 20.0, "hardcore_superradiance": 0.5}


@dataclass(frozen=True)
class SweepAxis:
    parameter: str
    values: Tuple[float, ...]


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment over an optional one-dimensional sweep"""
    experiment: str
    params: PhysicalParams
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    sweep: Optional[SweepAxis] = None
    xi: Optional[float] = None
    laser_direction: Optional[Tuple[float, float, float]] = None
    kind: Optional[str] = None
    phases: Tuple[str, ...] = (MOTT, SUPERFLUID)
    n_atoms: Optional[int] = None
    t_max: Optional[float] = None
    volterra_step: Optional[float] = None
    methods: Tuple[str, ...] = ("analytic",)
    detuning_range: Tuple[float, float] = (-0.05, 0.1)
    scan_points: int = 150
    max_separation: float = 5.0
    cutoff: Optional[int] = None
    dispersive: bool = True
    slope_xi: Optional[Tuple[float, float, int]] = None
    slope_sites: Tuple[int, ...] = ()
    output_prefix: str = "run"
    format: str = DELIMITED
    source: str = "<memory>"
    raw: Dict[str, Any] = field(default_factory=dict)

    def sweep_values(self) -> List[Optional[float]]:
        return list(self.sweep.values) if self.sweep else [None]

    def resolved(self) -> Dict[str, Any]:
        """Every experiment-level setting after defaulting, as recorded in the manifest.

        ``t_max`` is in units of 1/Γ₀; None means the grid follows the decay spectrum
        and the per-point value is recorded with the point.
        """
        skipped = ("params", "numerics", "raw", "source")
        values = {f.name: getattr(self, f.name) for f in fields(self) if f.name not in skipped}
        values["sweep"] = asdict(self.sweep) if self.sweep else None
        values["t_max"] = self.t_max if self.t_max is not None else DEFAULT_T_MAX.get(self.experiment)
        values["params"] = self.params.to_dict()
        if self.experiment == "hardcore_superradiance":
            values["spin_closure"] = self.numerics.spin_closure
        return values

    def point_params(self, value: Optional[float] = None) -> PhysicalParams:
        """Parameters of one sweep point with ξ and the matched laser re-derived"""
        p = self.params
        axis = self.sweep.parameter if self.sweep else None
        if value is not None and axis != "xi":
            if axis in INTEGER_FIELDS:
                if value != int(value):
                    raise InvalidParams(f"{axis} must be an integer, got {value}", field=axis)
                value = int(value)
            p = replace(p, **{axis: value})
        xi = value if axis == "xi" else self.xi
        if xi is not None:
            p = with_xi(p, xi)
        if self.laser_direction is not None:
            p = with_matched_laser(p, self.laser_direction, self.numerics)
        return p

    def with_numerics(self, numerics: NumericsConfig) -> "ExperimentSpec":
        return replace(self, numerics=numerics)


@dataclass
class PointResult:
    """Tables and summary of one sweep point"""
    value: Optional[float]
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    summary: Dict[str, Any] = field(default_factory=dict)
    derived: Dict[str, Any] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)


@dataclass
class RunResult:
    manifest: Dict[str, Any]
    files: List[Path]
    points: List[PointResult]
    manifest_path: Optional[Path] = None


# ---------------------------------------------------------------- spec files

class _SpecReader:
    """Typed access to a parsed spec with line-precise errors"""

    def __init__(self, data: Dict[str, Any], path: str, text: Optional[str]):
        self.data = data
        self.path = path
        self.lines = text.splitlines() if text is not None else []

    def line_of(self, section: str, key: Optional[str] = None) -> Optional[int]:
        current = None
        for number, line in enumerate(self.lines, start=1):
            stripped = line.split("#", 1)[0].strip()
            header = re.fullmatch(r"\[\s*([A-Za-z0-9_\-]+)\s*\]", stripped)
            if header:
                current = header.group(1)
                if key is None and current == section:
                    return number
            elif key is not None and current == section and re.match(rf"{re.escape(key)}\s*=", stripped):
                return number
        return None

    def error(self, section: str, key: Optional[str], message: str) -> ConfigError:
        return ConfigError(message, path=self.path, line=self.line_of(section, key), section=section, key=key)

    def section(self, name: str) -> Dict[str, Any]:
        value = self.data.get(name, {})
        if not isinstance(value, dict):
            raise self.error(name, None, "must be a table")
        return value

    def number(self, section: str, key: str, value: Any, positive: bool = False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise self.error(section, key, f"expected a finite number, got {value!r}")
        if positive and value <= 0:
            raise self.error(section, key, f"must be positive, got {value!r}")
        return float(value)

    def integer(self, section: str, key: str, value: Any, minimum: int = 1) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.error(section, key, f"expected an integer, got {value!r}")
        if value < minimum:
            raise self.error(section, key, f"must be at least {minimum}, got {value}")
        return value

    def numbers(self, section: str, key: str, value: Any, length: Optional[int] = None) -> Tuple[float, ...]:
        if not isinstance(value, list) or not value:
            raise self.error(section, key, f"expected a non-empty list of numbers, got {value!r}")
        if length is not None and len(value) != length:
            raise self.error(section, key, f"expected {length} numbers, got {len(value)}")
        return tuple(self.number(section, key, v) for v in value)

    def choice(self, section: str, key: str, value: Any, allowed: Sequence[str]) -> str:
        if value not in allowed:
            raise self.error(section, key, f"must be one of {', '.join(allowed)}, got {value!r}")
        return value

    def choices(self, section: str, key: str, value: Any, allowed: Sequence[str]) -> Tuple[str, ...]:
        if not isinstance(value, list) or not value:
            raise self.error(section, key, f"expected a non-empty list, got {value!r}")
        return tuple(self.choice(section, key, v, allowed) for v in value)

    def check_keys(self, section: str, allowed: Sequence[str]) -> None:
        for key in self.section(section):
            if key not in allowed:
                raise self.error(section, key, "unknown key")


def _parse_physical(reader: _SpecReader) -> Tuple[Dict[str, Any], Optional[float], Optional[Tuple[float, ...]]]:
    section = "physical"
    reader.check_keys(section, PHYSICAL_KEYS)
    data = reader.section(section)
    for key in ("rabi", "trap", "detuning"):
        if key not in data:
            raise reader.error(section, None, f"missing required key {key!r}")

    kwargs: Dict[str, Any] = {}
    for key in ("rabi", "trap", "detuning", "lattice_spacing", "ground_width"):
        if key in data:
            kwargs[key] = reader.number(section, key, data[key])
    for key in ("sites_per_axis", "reservoir_dim", "lattice_dim"):
        if key in data:
            kwargs[key] = reader.integer(section, key, data[key])
    if "laser_wavevector" in data:
        kwargs["laser_wavevector"] = reader.numbers(section, "laser_wavevector", data["laser_wavevector"], length=3)

    xi = reader.number(section, "xi", data["xi"], positive=True) if "xi" in data else None

    direction = None
    matched = data.get("laser_matched", False)
    if not isinstance(matched, bool):
        raise reader.error(section, "laser_matched", f"expected true or false, got {matched!r}")
    if matched:
        if "laser_wavevector" in data:
            raise reader.error(section, "laser_matched", "cannot be combined with laser_wavevector")
        direction = reader.numbers(section, "laser_direction", data.get("laser_direction", [0.0, 0.0, 1.0]), length=3)
        if not any(direction):
            raise reader.error(section, "laser_direction", "must be a non-zero vector")
    elif "laser_direction" in data:
        raise reader.error(section, "laser_direction", "only used with laser_matched = true")
    return kwargs, xi, direction


def _parse_numerics(reader: _SpecReader) -> Tuple[NumericsConfig, Dict[str, float]]:
    section = "numerics"
    known = NumericsConfig.field_names()
    reader.check_keys(section, tuple(known) + NUMERICS_EXTRA)
    data = reader.section(section)
    defaults = NumericsConfig()

    overrides: Dict[str, Any] = {}
    for key, value in data.items():
        if key in NUMERICS_EXTRA:
            continue
        default = getattr(defaults, key)
        if isinstance(default, tuple):
            overrides[key] = reader.numbers(section, key, value)
        elif isinstance(default, str):
            if not isinstance(value, str):
                raise reader.error(section, key, f"expected a string, got {value!r}")
            overrides[key] = value
        elif isinstance(default, int):
            overrides[key] = reader.integer(section, key, value)
        else:
            overrides[key] = reader.number(section, key, value)
    numerics = replace(defaults, **overrides)

    for problem in numerics.validate():
        key = problem.split(" ", 1)[0]
        raise reader.error(section, key if key in data else None, problem)

    extra = {key: reader.number(section, key, data[key], positive=True) for key in NUMERICS_EXTRA if key in data}
    return numerics, extra


def _parse_experiment(reader: _SpecReader) -> Dict[str, Any]:
    section = "experiment"
    reader.check_keys(section, EXPERIMENT_KEYS)
    data = reader.section(section)
    if "name" not in data:
        raise reader.error(section, None, "missing required key 'name'")

    options: Dict[str, Any] = {"experiment": reader.choice(section, "name", data["name"], EXPERIMENTS)}
    if ("sweep_parameter" in data) != ("sweep_values" in data):
        key = "sweep_values" if "sweep_parameter" in data else "sweep_parameter"
        raise reader.error(section, key, "sweep_parameter and sweep_values go together")
    if "sweep_parameter" in data:
        parameter = reader.choice(section, "sweep_parameter", data["sweep_parameter"], SWEEPABLE)
        options["sweep"] = SweepAxis(parameter, reader.numbers(section, "sweep_values", data["sweep_values"]))

    if "kind" in data:
        options["kind"] = reader.choice(section, "kind", data["kind"], KINDS)
    if "phases" in data:
        options["phases"] = reader.choices(section, "phases", data["phases"], PHASES)
    if "n_atoms" in data:
        options["n_atoms"] = reader.integer(section, "n_atoms", data["n_atoms"])
    if "output_prefix" in data:
        prefix = data["output_prefix"]
        if not isinstance(prefix, str) or not re.fullmatch(r"[A-Za-z0-9_.\-]+", prefix):
            raise reader.error(section, "output_prefix", f"must be a plain file-name prefix, got {prefix!r}")
        options["output_prefix"] = prefix
    if "format" in data:
        options["format"] = reader.choice(section, "format", data["format"], FORMATS)
    if "detuning_range" in data:
        low, high = reader.numbers(section, "detuning_range", data["detuning_range"], length=2)
        if low >= high:
            raise reader.error(section, "detuning_range", "lower bound must be below the upper bound")
        options["detuning_range"] = (low, high)
    if "scan_points" in data:
        options["scan_points"] = reader.integer(section, "scan_points", data["scan_points"], minimum=2)
    if "methods" in data:
        options["methods"] = reader.choices(section, "methods", data["methods"], tuple(METHODS))
    if "max_separation" in data:
        options["max_separation"] = reader.number(section, "max_separation", data["max_separation"], positive=True)
    if "cutoff" in data:
        options["cutoff"] = reader.integer(section, "cutoff", data["cutoff"])
    if "dispersive" in data:
        if not isinstance(data["dispersive"], bool):
            raise reader.error(section, "dispersive", f"expected true or false, got {data['dispersive']!r}")
        options["dispersive"] = data["dispersive"]
    if "slope_xi" in data:
        low, high, points = reader.numbers(section, "slope_xi", data["slope_xi"], length=3)
        if not 0 < low < high or points < 2 or points != int(points):
            raise reader.error(section, "slope_xi", "expected [xi_min, xi_max, points] with 0 < xi_min < xi_max")
        options["slope_xi"] = (low, high, int(points))
    if "slope_sites" in data:
        sites = data["slope_sites"]
        if not isinstance(sites, list) or not sites:
            raise reader.error(section, "slope_sites", f"expected a non-empty list of integers, got {sites!r}")
        options["slope_sites"] = tuple(reader.integer(section, "slope_sites", m) for m in sites)

    kind = options.get("kind")
    if options["experiment"] == "hardcore_superradiance" and kind == BOSON:
        raise reader.error(section, "kind", "hardcore_superradiance evolves hard-core (spin) atoms")
    if options["experiment"] == "boson_superradiance" and kind == SPIN:
        raise reader.error(section, "kind", "boson_superradiance evolves soft-core bosons")
    return options


def spec_from_dict(data: Dict[str, Any], source: str = "<memory>", text: Optional[str] = None) -> ExperimentSpec:
    """Validate a parsed spec; ``text`` lets errors carry line numbers"""
    reader = _SpecReader(data, source, text)
    for name in data:
        if name not in SECTIONS:
            raise reader.error(name, None, "unknown section")
    if "physical" not in data:
        raise ConfigError("missing [physical] section", path=source)
    if "experiment" not in data:
        raise ConfigError("missing [experiment] section", path=source)

    kwargs, xi, direction = _parse_physical(reader)
    numerics, extra = _parse_numerics(reader)
    options = _parse_experiment(reader)

    try:
        params = PhysicalParams(**kwargs)
    except InvalidParams as e:
        raise reader.error("physical", e.context.get("field"), e.message) from e

    spec = ExperimentSpec(
        params=params,
        numerics=numerics,
        xi=xi,
        laser_direction=direction,
        t_max=extra.get("t_max"),
        volterra_step=extra.get("volterra_step"),
        source=source,
        raw=data,
        **options,
    )
    if spec.experiment == "directional" and direction is None:
        raise reader.error("physical", "laser_matched", "directional emission needs laser_matched = true")

    for value in spec.sweep_values():
        try:
            spec.point_params(value)
        except (InvalidParams, CriticalDetuning) as e:
            if value is None:
                field_name = e.context.get("field", "detuning")
                raise reader.error("physical", field_name if field_name in PHYSICAL_KEYS else None, e.message) from e
            raise reader.error("experiment", "sweep_values", f"value {value!r}: {e.message}") from e
    return spec


def load_spec(path) -> ExperimentSpec:
    """Parse and validate a spec file"""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read spec file: {e.strerror or e}", path=str(path)) from e
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        match = re.search(r"line (\d+)", str(e))
        raise ConfigError(str(e), path=str(path), line=int(match.group(1)) if match else None) from e
    return spec_from_dict(data, source=str(path), text=text)


# ---------------------------------------------------------------- experiments

def _time_grid(spec: ExperimentSpec, s: DerivedScales, default_t_max: float) -> np.ndarray:
    t_max = (spec.t_max if spec.t_max is not None else default_t_max) / s.gamma0
    if spec.volterra_step is not None:
        points = int(math.ceil(t_max * s.trap / spec.volterra_step)) + 1
        return np.linspace(0.0, t_max, max(points, 2))
    return np.linspace(0.0, t_max, spec.numerics.time_points)


def _single_site_trace(spec: ExperimentSpec, p: PhysicalParams, s: DerivedScales) -> PointResult:
    times = _time_grid(spec, s, DEFAULT_T_MAX["single_site_trace"])
    result = PointResult(value=None)
    report = classify_markovianity(s, spec.numerics.markov_threshold)
    result.summary.update({"regime": s.regime, "markov_ratio": report.ratio, "markovian": report.markovian,
                           "steady_population_strong": steady_population_strong(s)})
    for method in spec.methods:
        trace = amplitude_for_params(p, times, METHODS[method], spec.numerics)
        frame = trace.to_frame()
        frame.insert(1, "gamma0_t", times * s.gamma0)
        frame["markov"] = population_markov(s, times)
        result.tables[method] = frame
        result.summary[f"{method}_final_population"] = float(trace.population[-1])
        result.summary[f"{method}_diagnostics"] = trace.diagnostics
    return result


def _steady_state_scan(spec: ExperimentSpec, p: PhysicalParams, s: DerivedScales) -> PointResult:
    detunings = np.linspace(spec.detuning_range[0], spec.detuning_range[1], spec.scan_points)
    finite, strong, poles = [], [], []
    for detuning in detunings:
        point = replace(p, detuning=float(detuning))
        steady = steady_population_finite_trap(point, spec.numerics)
        finite.append(steady.population)
        poles.append(len(steady.poles))
        try:
            strong.append(steady_population_strong(derive_scales(point, spec.numerics)))
        except CriticalDetuning:
            strong.append(math.nan)
    frame = pd.DataFrame({
        "detuning": detunings,
        "delta_tilde": detunings - p.level_shift,
        "population_finite": finite,
        "population_strong": strong,
        "poles": poles,
    })
    radiative = frame.loc[frame["population_finite"] < 1e-3, "detuning"]
    return PointResult(
        value=None,
        tables={"scan": frame},
        summary={
            "expected_transition": p.level_shift,
            "first_untrapped_detuning": float(radiative.iloc[0]) if len(radiative) else None,
        },
    )


def _coupling_map(spec: ExperimentSpec, p: PhysicalParams, s: DerivedScales) -> PointResult:
    frame = coupling_map(p, s, spec.max_separation)
    summary: Dict[str, Any] = {"xi": s.xi, "gamma0": s.gamma0}
    if p.sites_per_axis > 1:
        summary.update(coupling_summary(build_coupling_matrix(p, s, spec.numerics)))
    return PointResult(value=None, tables={"map": frame}, summary=summary)


def _hardcore_superradiance(spec: ExperimentSpec, p: PhysicalParams, s: DerivedScales) -> PointResult:
    m = build_coupling_matrix(p, s, spec.numerics)
    state = initial_state(SPIN, MOTT, sites_per_axis=p.sites_per_axis, lattice_dim=p.lattice_dim)
    times = _time_grid(spec, s, DEFAULT_T_MAX["hardcore_superradiance"])
    record = evolve_spin_semiclassical(state, m, times, dispersive=spec.dispersive, numerics=spec.numerics)
    slope = initial_rate_slope(m)
    peak = int(np.argmax(record.rate))
    return PointResult(
        value=None,
        tables={"rate": record.to_frame()},
        summary={
            "initial_slope": slope.slope,
            "initial_slope_normalized": slope.normalized,
            "superradiant": slope.superradiant,
            "rate_peak_time": float(times[peak]),
            "rate_peak_normalized": float(record.normalized_rate[peak]),
            "diagnostics": record.diagnostics,
        },
    )


def _boson_superradiance(spec: ExperimentSpec, p: PhysicalParams, s: DerivedScales) -> PointResult:
    m = build_coupling_matrix(p, s, spec.numerics)
    n_atoms = spec.n_atoms if spec.n_atoms is not None else p.n_sites
    t_max = spec.t_max / s.gamma0 if spec.t_max is not None else None
    times = emission_time_grid(2.0 * m.eigenvalues, t_max, spec.numerics.time_points)
    result = PointResult(value=None)
    result.derived["t_max_over_gamma0"] = float(times[-1] * s.gamma0)
    for phase in spec.phases:
        state = initial_state(BOSON, phase, n_atoms, p.sites_per_axis, p.lattice_dim)
        record = evolve_boson(state, m, times, dispersive=spec.dispersive, numerics=spec.numerics)
        result.tables[phase] = record.to_frame()
        result.summary[phase] = {
            "evaporation_time": evaporation_time(record),
            "remaining": steady_remaining(record),
            "diagnostics": record.diagnostics,
        }
    return result


def _decay_spectrum(spec: ExperimentSpec, p: PhysicalParams, s: DerivedScales) -> PointResult:
    m = build_coupling_matrix(p, s, spec.numerics)
    basis = decay_spectrum(m)
    n_atoms = spec.n_atoms if spec.n_atoms is not None else p.n_sites
    state = initial_state(BOSON, MOTT, n_atoms, p.sites_per_axis, p.lattice_dim)
    t_max = spec.t_max / s.gamma0 if spec.t_max is not None else None
    times = emission_time_grid(2.0 * np.clip(basis.rates, 0.0, None), t_max, spec.numerics.time_points)
    return PointResult(
        value=None,
        tables={
            "spectrum": pd.DataFrame({"mode": np.arange(basis.rates.size), "rate_over_gamma0": basis.rates / s.gamma0}),
            "number": pd.DataFrame({"t": times, "n_T": spectral_number(basis, state, times)}),
        },
        derived={"t_max_over_gamma0": float(times[-1] * s.gamma0)},
        summary={"max_rate_over_gamma0": float(basis.rates[0] / s.gamma0),
                 "min_rate_over_gamma0": float(basis.rates[-1] / s.gamma0)},
    )


def _directional(spec: ExperimentSpec, p: PhysicalParams, s: DerivedScales) -> PointResult:
    dist = angular_distribution(p, s, spec.numerics)
    maxima = diffraction_maxima(s, dist.k_hat, spec.cutoff)
    validity = validity_bound(p, s, spec.numerics)
    summary = distribution_summary(p, s, dist, spec.numerics)
    summary.update({
        "maxima": [list(map(float, u)) for u in maxima],
        "cone_fraction_3_widths": cone_fraction(dist, 3.0 * dist.width),
        "validity": asdict(validity),
        "note": dist.notes["superfluid"],
    })
    return PointResult(
        value=None,
        tables={"distribution": dist.to_frame(), "maxima": pd.DataFrame(np.array(maxima), columns=["ux", "uy", "uz"])},
        summary=summary,
    )


def _validity_report(spec: ExperimentSpec, p: PhysicalParams, s: DerivedScales) -> PointResult:
    report = classify_markovianity(s, spec.numerics.markov_threshold)
    summary: Dict[str, Any] = {"regime": s.regime, "markov_ratio": report.ratio, "markovian": report.markovian}
    if spec.laser_direction is not None:
        summary["validity"] = asdict(validity_bound(p, s, spec.numerics))
    return PointResult(value=None, summary=summary)


EXPERIMENT_RUNNERS: Dict[str, Callable[[ExperimentSpec, PhysicalParams, DerivedScales], PointResult]] = {
    "single_site_trace": _single_site_trace,
    "steady_state_scan": _steady_state_scan,
    "coupling_map": _coupling_map,
    "hardcore_superradiance": _hardcore_superradiance,
    "boson_superradiance": _boson_superradiance,
    "decay_spectrum": _decay_spectrum,
    "directional": _directional,
    "validity_report": _validity_report,
}


def slope_curve(spec: ExperimentSpec) -> pd.DataFrame:
    """Normalized initial rate slope against ξ for each lattice size in ``slope_sites``"""
    low, high, points = spec.slope_xi
    sites = spec.slope_sites or (spec.params.sites_per_axis,)
    rows = []
    for m in sites:
        base = replace(spec.params, sites_per_axis=m)
        for xi in np.geomspace(low, high, points):
            report = initial_rate_slope(build_coupling_matrix(with_xi(base, float(xi)), numerics=spec.numerics))
            rows.append({"sites_per_axis": m, "sites": base.n_sites, "xi": float(xi), "slope_normalized": report.normalized})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------- runner

class ExperimentRunner(LoggingMixin):
    """Runs every sweep point of a spec and writes data files plus a manifest"""

    def __init__(self, spec: ExperimentSpec, output_dir, threads: Optional[int] = None):
        self.spec = spec
        self.output_dir = Path(output_dir)
        self.threads = threads if threads is not None else get_config().run.threads

    def run_point(self, value: Optional[float]) -> PointResult:
        axis = self.spec.sweep.parameter if self.spec.sweep else None
        sweep_point = {axis: value} if axis else None
        self.log_method_call("run_point", experiment=self.spec.experiment, sweep_point=sweep_point)
        try:
            with self.timed("sweep point", experiment=self.spec.experiment, sweep_point=sweep_point) as record:
                p = self.spec.point_params(value)
                s = derive_scales(p, self.spec.numerics)
                record.update(xi=s.xi, regime=s.regime)
                result = EXPERIMENT_RUNNERS[self.spec.experiment](self.spec, p, s)
        except EmissionError as e:
            raise error_handler.handle_error(e, context={"experiment": self.spec.experiment}, sweep_point=sweep_point)
        result.value = value
        result.derived.update(params=p.to_dict(), scales=s.to_dict())
        result.warnings = physics_warnings(p, s, self.spec.numerics)
        return result

    def run(self) -> RunResult:
        spec = self.spec
        started = time.perf_counter()
        self.logger.info(
            f"Running {spec.experiment}",
            extra={"points": len(spec.sweep_values()), "threads": self.threads, "output_dir": str(self.output_dir)},
        )
        points = Parallel(n_jobs=self.threads, prefer="threads")(
            delayed(self.run_point)(value) for value in spec.sweep_values()
        )

        aggregate: Dict[str, pd.DataFrame] = {}
        if spec.experiment == "hardcore_superradiance" and spec.slope_xi is not None:
            aggregate["slope"] = slope_curve(spec)

        files = self._write_outputs(points, aggregate)
        manifest = self._manifest(points, files, time.perf_counter() - started)
        manifest_path = outputs.write_json(manifest, self.output_dir / f"{spec.output_prefix}_manifest.json")
        self.logger.info(f"Finished {spec.experiment}", extra={"files": len(files), "wall_time_s": manifest["wall_time_s"]})
        return RunResult(manifest=manifest, files=files, points=points, manifest_path=manifest_path)

    def _write_outputs(self, points: List[PointResult], aggregate: Dict[str, pd.DataFrame]) -> List[Path]:
        spec = self.spec
        axis = spec.sweep.parameter if spec.sweep else None
        files = []
        if spec.format == STRUCTURED_SUMMARY:
            summary = {
                "experiment": spec.experiment,
                "points": [{"sweep_value": point.value, "summary": point.summary} for point in points],
            }
            name = outputs.data_file_name(spec.output_prefix, spec.experiment, "summary", suffix="json")
            files.append(outputs.write_json(summary, self.output_dir / name))
            return files

        for point in points:
            for table, frame in point.tables.items():
                name = outputs.data_file_name(spec.output_prefix, spec.experiment, table, axis, point.value)
                files.append(outputs.write_frame(frame, self.output_dir / name))
        for table, frame in aggregate.items():
            name = outputs.data_file_name(spec.output_prefix, spec.experiment, table)
            files.append(outputs.write_frame(frame, self.output_dir / name))
        return files

    def _manifest(self, points: List[PointResult], files: List[Path], wall_time: float) -> Dict[str, Any]:
        config = get_config()
        spec = self.spec
        return {
            "app": {"name": config.app_name, "version": config.version},
            "experiment": spec.experiment,
            "source": spec.source,
            "spec": spec.raw,
            "resolved": spec.resolved(),
            "numerics": asdict(spec.numerics),
            "sweep": asdict(spec.sweep) if spec.sweep else None,
            "points": [
                {
                    "sweep_value": point.value,
                    "derived": point.derived,
                    "summary": point.summary,
                    "warnings": point.warnings,
                }
                for point in points
            ],
            "files": sorted(path.name for path in files),
            "wall_time_s": wall_time,
            "versions": outputs.package_versions(),
        }


@dataclass
class ValidationReport:
    errors: List[str] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors


def validate_spec(path) -> ValidationReport:
    """Parse a spec and collect physics warnings for every sweep point without running it"""
    report = ValidationReport()
    try:
        spec = load_spec(path)
    except ConfigError as e:
        report.errors.append(e.message)
        return report

    for value in spec.sweep_values():
        label = f"{spec.sweep.parameter}={value:g}: " if spec.sweep else ""
        try:
            p = spec.point_params(value)
            s = derive_scales(p, spec.numerics)
        except EmissionError as e:
            report.errors.append(label + e.message)
            continue
        report.warnings.extend(label + message for message in physics_warnings(p, s, spec.numerics))
        if spec.laser_direction is not None and s.delta_tilde > 0 and not validity_bound(p, s, spec.numerics).satisfied:
            report.warnings.append(label + "directional emission faster than the atoms leave the lattice (Γ ≪ v₀/L violated)")
    return report
