"""
Single-site emission: the amplitude A(t) of one trapped atom, its Laplace
transforms and the steady trapped population for a finite trap.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, List, Tuple, Any

import numpy as np
import pandas as pd
from scipy import integrate, optimize, special

from config import NumericsConfig
from emission.params import PhysicalParams, DerivedScales, derive_scales, _numerics
from utils.errors import InvalidParams, QuadratureFailure, StepTooLarge, RootSearchFailure, WrongRegime

logger = logging.getLogger(__name__)

ANALYTIC = "analytic_strong_confinement"
DIRECT = "direct_integrodifferential"


@dataclass(frozen=True)
class CorrelationKernel:
    """Reservoir correlation G(τ) = Ω² e^{iΔτ} / (1 + iω₀τ/2)^{d/2}"""
    dimension: int
    omega0: float
    rabi: float
    detuning: float

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise InvalidParams(f"kernel dimension must be 1, 2 or 3, got {self.dimension}", field="reservoir_dim")

    @classmethod
    def from_params(cls, p: PhysicalParams) -> "CorrelationKernel":
        return cls(dimension=p.reservoir_dim, omega0=p.trap, rabi=p.rabi, detuning=p.detuning)

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        return self.rabi ** 2 * np.exp(1j * self.detuning * tau) / (1.0 + 0.5j * self.omega0 * tau) ** (self.dimension / 2)


@dataclass
class AmplitudeTrace:
    """Sampled single-site amplitude"""
    times: np.ndarray
    amplitude: np.ndarray
    method: str
    emitted: Optional[np.ndarray] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def population(self) -> np.ndarray:
        return np.abs(self.amplitude) ** 2

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "t": self.times,
            "re_A": self.amplitude.real,
            "im_A": self.amplitude.imag,
            "population": self.population,
        })
        if self.emitted is not None:
            frame["emitted"] = self.emitted
        return frame


@dataclass
class SteadyState:
    """Finite-trap steady population and the poles it came from"""
    population: float
    poles: List[float]
    residues: List[complex]
    scan_trace: List[Tuple[float, float, float]] = field(default_factory=list)


def kernel_eval(k: CorrelationKernel, tau: float) -> complex:
    if tau < 0:
        raise InvalidParams(f"kernel argument must be non-negative, got {tau}", field="tau")
    return complex(k(tau))


def _uniform_step(times: np.ndarray) -> float:
    if times.ndim != 1 or len(times) < 2:
        raise InvalidParams("time grid needs at least two points", field="times")
    if times[0] != 0.0:
        raise InvalidParams(f"time grid must start at 0, got {times[0]}", field="times")
    steps = np.diff(times)
    h = float(steps.mean())
    if h <= 0 or not np.allclose(steps, h, rtol=1e-9, atol=0.0):
        raise InvalidParams("time grid must be uniform and increasing", field="times")
    return h


def _branch_integral(s: DerivedScales, t: float, abs_error: float) -> complex:
    """∫₀^∞ √x e^{-xt} / [(-x + iΔ̃)² + i4πα²x] dx on x = (u/(1-u))²"""
    delta_tilde = s.delta_tilde
    four_pi_alpha_sq = 4.0 * math.pi * s.alpha_sq

    def integrand(u: float) -> complex:
        v = u / (1.0 - u)
        x = v * v
        denominator = (-x + 1j * delta_tilde) ** 2 + 1j * four_pi_alpha_sq * x
        return 2.0 * v * v / (1.0 - u) ** 2 * math.exp(-x * t) / denominator

    scales = [abs(delta_tilde), four_pi_alpha_sq]
    if t > 0:
        scales.append(1.0 / t)
    points = sorted({math.sqrt(x) / (1.0 + math.sqrt(x)) for x in scales})

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        real, real_err = integrate.quad(lambda u: integrand(u).real, 0.0, 1.0, points=points,
                                        epsabs=abs_error * 1e-2, epsrel=1e-11, limit=200)
        imag, imag_err = integrate.quad(lambda u: integrand(u).imag, 0.0, 1.0, points=points,
                                        epsabs=abs_error * 1e-2, epsrel=1e-11, limit=200)
    return complex(real, imag), math.hypot(real_err, imag_err)


def solve_amplitude_analytic(
    s: DerivedScales,
    times,
    numerics: Optional[NumericsConfig] = None,
) -> AmplitudeTrace:
    """Strong-confinement amplitude: residue term plus the branch-cut integral.

    The error threshold applies to the branch-cut term of A(t), i.e. after
    the 2α/√π prefactor.
    """
    numerics = _numerics(numerics)
    if s.degenerate:
        raise WrongRegime("coalescing poles at Δ̃ = πα²; use the direct solver", regime="degenerate")

    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise InvalidParams("times must be non-negative", field="times")

    prefactor = 2.0 * s.alpha / math.sqrt(math.pi) * np.exp(1j * math.pi / 4)
    pole_exponent = 1j * (s.b ** 2 + s.detuning)
    amplitude = np.empty(len(times), dtype=complex)
    worst = 0.0
    for i, t in enumerate(times):
        value, error = _branch_integral(s, float(t), numerics.quad_abs_error)
        error *= abs(prefactor)
        worst = max(worst, error)
        if error > numerics.quad_abs_error:
            raise QuadratureFailure(
                f"branch-cut integral at t = {t:g} has estimated error {error:.3g}",
                error_estimate=error,
                context={"t": float(t), "regime": s.regime},
            )
        amplitude[i] = s.c_residue * np.exp(pole_exponent * t) + prefactor * np.exp(1j * s.detuning * t) * value

    logger.debug("analytic amplitude evaluated", extra={"points": len(times), "max_error": worst})
    return AmplitudeTrace(times=times, amplitude=amplitude, method=ANALYTIC, diagnostics={"max_error": worst})


def _volterra(k: CorrelationKernel, n_steps: int, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Product-trapezoid scheme for A' = -∫₀ᵗ G(t-τ)A(τ)dτ with A(0) = 1"""
    g = k(np.arange(n_steps + 1) * h)
    amplitude = np.zeros(n_steps + 1, dtype=complex)
    emitted = np.zeros(n_steps + 1)
    amplitude[0] = 1.0
    force = 0j
    implicit = 1.0 + 0.25 * h * h * g[0]

    for n in range(n_steps):
        history = -h * (0.5 * g[n + 1] * amplitude[0] + np.dot(g[n:0:-1], amplitude[1:n + 1]))
        amplitude[n + 1] = (amplitude[n] + 0.5 * h * (force + history)) / implicit
        next_force = history - 0.5 * h * g[0] * amplitude[n + 1]
        mean_amplitude = 0.5 * (amplitude[n] + amplitude[n + 1])
        mean_force = 0.5 * (force + next_force)
        emitted[n + 1] = emitted[n] - 2.0 * h * (np.conj(mean_amplitude) * mean_force).real
        force = next_force

    return amplitude, emitted


def solve_amplitude_direct(
    k: CorrelationKernel,
    times,
    numerics: Optional[NumericsConfig] = None,
    check_step: bool = True,
) -> AmplitudeTrace:
    """Integrate the amplitude equation directly on a uniform grid starting at 0.

    With ``check_step`` the run is repeated at half the step and the finer
    solution is returned; a final-population change above the tolerance
    raises StepTooLarge.
    """
    numerics = _numerics(numerics)
    times = np.asarray(times, dtype=float)
    h = _uniform_step(times)
    n_steps = len(times) - 1

    amplitude, emitted = _volterra(k, n_steps, h)
    diagnostics = {"step": h}
    if check_step:
        fine_amplitude, fine_emitted = _volterra(k, 2 * n_steps, 0.5 * h)
        change = abs(abs(fine_amplitude[-1]) ** 2 - abs(amplitude[-1]) ** 2)
        diagnostics["step_change"] = change
        if change > numerics.volterra_step_tolerance:
            raise StepTooLarge(
                f"halving the step changed the final population by {change:.3g}",
                change=change,
                step=h,
            )
        amplitude, emitted = fine_amplitude[::2], fine_emitted[::2]

    diagnostics["norm_defect"] = float(np.max(np.abs(np.abs(amplitude) ** 2 + emitted - 1.0)))
    logger.debug("direct amplitude integrated", extra=diagnostics)
    return AmplitudeTrace(times=times, amplitude=amplitude, method=DIRECT, emitted=emitted, diagnostics=diagnostics)


def population_markov(s: DerivedScales, times) -> np.ndarray:
    """Markovian reference |A|² = e^{-2Γ₀t}"""
    return np.exp(-2.0 * s.gamma0 * np.asarray(times, dtype=float))


def laplace_kernel_transform(
    p: PhysicalParams,
    s: complex,
    strong_confinement: bool = False,
    continuation: bool = False,
) -> complex:
    """Laplace transform of the 3D correlation function.

    The full form is evaluated through the Faddeeva function,
    e^{-z²}[1 + erf(iz)] = w(z) with z = √(2(Δ+is)/ω₀).
    """
    s = complex(s)
    if s.real < 0 and not continuation:
        raise InvalidParams(f"Re s must be non-negative without continuation, got {s}", field="s")

    if strong_confinement:
        alpha = math.sqrt(8.0 * p.rabi ** 4 / p.trap ** 3)
        return complex(-4j * p.rabi ** 2 / p.trap + alpha * (1 + 1j) * np.sqrt(2 * math.pi * (s - 1j * p.detuning)))

    z = np.sqrt(2.0 * (p.detuning + 1j * s) / p.trap)
    return complex(4.0 * p.rabi ** 2 / p.trap * (-1j + math.sqrt(math.pi) * z * special.wofz(z)))


def laplace_amplitude_transform(p: PhysicalParams, s: complex, **kwargs: Any) -> complex:
    """Ã(s) = 1 / (s + G̃(s))"""
    return 1.0 / (complex(s) + laplace_kernel_transform(p, s, **kwargs))


def pole_function(p: PhysicalParams, x) -> complex:
    """x + Δ̃ + (4√π Ω²/ω₀) y erfcx(y) with y = √(2x/ω₀) on the principal sheet.

    Real for x ≥ 0; for x < 0, y is imaginary and erfcx carries the erfi continuation.
    """
    delta_tilde = p.detuning - p.level_shift
    y = np.sqrt(2.0 * np.asarray(x, dtype=complex) / p.trap)
    return x + delta_tilde + 4.0 * math.sqrt(math.pi) * p.rabi ** 2 / p.trap * y * special.erfcx(y)


def _pole_derivative(p: PhysicalParams, x: float) -> float:
    """Complex-step derivative, checked against a central difference"""
    step = 1e-20
    derivative = complex(pole_function(p, complex(x, step))).imag / step
    h = 1e-6 * max(abs(x), 1e-12)
    central = (complex(pole_function(p, x + h)).real - complex(pole_function(p, x - h)).real) / (2 * h)
    if not math.isfinite(derivative) or abs(derivative - central) > 1e-5 * abs(central):
        logger.debug("complex step rejected", extra={"x": x, "complex_step": derivative, "central": central})
        return central
    return derivative


def steady_population_finite_trap(
    p: PhysicalParams,
    numerics: Optional[NumericsConfig] = None,
    scan_points: int = 400,
) -> SteadyState:
    """Trapped population left by the real poles of the finite-trap amplitude"""
    delta_tilde = p.detuning - p.level_shift
    # every real root satisfies |x| <= |Δ̃| + 4Ω²/ω₀
    reach = 2.0 * (abs(delta_tilde) + p.level_shift)
    grid = np.concatenate([-np.geomspace(reach, reach * 1e-9, scan_points), [0.0],
                           np.geomspace(reach * 1e-9, reach, scan_points)])
    values = np.array([complex(pole_function(p, x)) for x in grid])
    trace = [(float(x), float(v.real), float(v.imag)) for x, v in zip(grid, values)]

    poles, residues = [], []
    for i in range(len(grid) - 1):
        left, right = values[i], values[i + 1]
        if np.sign(left.real) == np.sign(right.real) and left.real != 0:
            continue
        if max(abs(left.imag), abs(right.imag)) > 1e-10:
            logger.debug("rejected continued candidate", extra={"x": float(grid[i]), "imag": float(left.imag)})
            continue
        try:
            root = optimize.brentq(lambda x: complex(pole_function(p, x)).real, grid[i], grid[i + 1],
                                   xtol=1e-15, rtol=1e-13, maxiter=200)
        except (ValueError, RuntimeError) as e:
            raise RootSearchFailure(f"pole polishing failed in [{grid[i]:g}, {grid[i + 1]:g}]: {e}",
                                    scan_trace=trace) from e
        if poles and abs(root - poles[-1]) <= 1e-12 * max(abs(root), 1.0):
            continue
        if abs(complex(pole_function(p, root))) > 1e-9 * max(reach, 1e-12):
            raise RootSearchFailure(f"bracketed sign change at x = {root:g} is not a root", scan_trace=trace)
        poles.append(float(root))
        residues.append(complex(1.0 / _pole_derivative(p, root)))

    population = float(abs(sum(residues)) ** 2) if residues else 0.0
    logger.debug("finite-trap poles", extra={"poles": poles, "population": population})
    return SteadyState(population=population, poles=poles, residues=residues, scan_trace=trace)


def steady_population_strong(s: DerivedScales) -> float:
    """Strong-confinement steady population |c|² (zero outside the bound region)"""
    return float(abs(s.c_residue) ** 2) if s.regime == "bound" else 0.0


def amplitude_for_params(
    p: PhysicalParams,
    times,
    method: str = ANALYTIC,
    numerics: Optional[NumericsConfig] = None,
    check_step: bool = True,
) -> AmplitudeTrace:
    """Dispatch to the analytic or the direct solver"""
    if method == ANALYTIC:
        if p.reservoir_dim != 3:
            raise WrongRegime("the analytic amplitude exists for the 3D reservoir only", regime=f"d={p.reservoir_dim}")
        return solve_amplitude_analytic(derive_scales(p, numerics), times, numerics)
    if method == DIRECT:
        return solve_amplitude_direct(CorrelationKernel.from_params(p), times, numerics, check_step=check_step)
    raise InvalidParams(f"unknown amplitude method {method!r}", field="method")
