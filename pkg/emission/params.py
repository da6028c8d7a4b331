"""
Physical parameters and the derived scales every solver consumes.

Units: ħ = m = 1 and frequencies are given in units of the trap frequency,
so the ground-state width defaults to X₀ = 1/√ω₀.
"""
import logging
import math
from dataclasses import dataclass, asdict, replace
from typing import Optional, Tuple, List, Dict, Any

import numpy as np

from config import NumericsConfig, get_config
from utils.errors import InvalidParams, CriticalDetuning

logger = logging.getLogger(__name__)

BOUND = "bound"
PURE_NON_MARKOVIAN = "pure_non_markovian"
RADIATIVE = "radiative"


def _numerics(numerics: Optional[NumericsConfig]) -> NumericsConfig:
    return numerics if numerics is not None else get_config().numerics


@dataclass(frozen=True)
class PhysicalParams:
    """Experimental knobs of one lattice"""
    rabi: float
    trap: float
    detuning: float
    lattice_spacing: float = 1.0
    ground_width: Optional[float] = None
    laser_wavevector: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    sites_per_axis: int = 1
    reservoir_dim: int = 3
    lattice_dim: int = 3

    def __post_init__(self):
        object.__setattr__(self, "laser_wavevector", tuple(float(k) for k in self.laser_wavevector))

        for name in ("rabi", "trap", "lattice_spacing"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidParams(f"{name} must be positive, got {value}", field=name)
        if not math.isfinite(self.detuning):
            raise InvalidParams(f"detuning must be finite, got {self.detuning}", field="detuning")
        if self.ground_width is not None and (not math.isfinite(self.ground_width) or self.ground_width <= 0):
            raise InvalidParams(f"ground_width must be positive, got {self.ground_width}", field="ground_width")
        if len(self.laser_wavevector) != 3 or not all(math.isfinite(k) for k in self.laser_wavevector):
            raise InvalidParams("laser_wavevector must be three finite numbers", field="laser_wavevector")
        if isinstance(self.sites_per_axis, bool) or int(self.sites_per_axis) != self.sites_per_axis or self.sites_per_axis < 1:
            raise InvalidParams(f"sites_per_axis must be an integer >= 1, got {self.sites_per_axis}", field="sites_per_axis")
        object.__setattr__(self, "sites_per_axis", int(self.sites_per_axis))
        if self.reservoir_dim not in (1, 2, 3):
            raise InvalidParams(f"reservoir_dim must be 1, 2 or 3, got {self.reservoir_dim}", field="reservoir_dim")
        if self.lattice_dim not in (1, 2, 3):
            raise InvalidParams(f"lattice_dim must be 1, 2 or 3, got {self.lattice_dim}", field="lattice_dim")

    @property
    def x0(self) -> float:
        """Ground-state width, X₀² = 1/ω₀ unless given explicitly"""
        return self.ground_width if self.ground_width is not None else 1.0 / math.sqrt(self.trap)

    @property
    def n_sites(self) -> int:
        return self.sites_per_axis ** self.lattice_dim

    @property
    def level_shift(self) -> float:
        """Single-site energy shift 4Ω²/ω₀"""
        return 4.0 * self.rabi ** 2 / self.trap

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["laser_wavevector"] = list(self.laser_wavevector)
        return data


@dataclass(frozen=True)
class DerivedScales:
    """Secondary quantities computed once from PhysicalParams"""
    delta_tilde: float
    alpha_sq: float
    gamma0: float
    k0: float
    xi: float
    nu: complex
    b_plus: complex
    b_minus: complex
    c_residue: complex
    b: complex
    regime: str
    degenerate: bool
    trap: float
    detuning: float

    @property
    def alpha(self) -> float:
        return math.sqrt(self.alpha_sq)

    @property
    def x_plus(self) -> complex:
        """Roots of x² + 2√πα x + Δ̃ = 0"""
        return self.b_plus

    @property
    def x_minus(self) -> complex:
        return self.b_minus

    @property
    def markov_decay_rate(self) -> Optional[float]:
        """Im{b₋²}, the amplitude decay rate of the radiative pole"""
        if self.regime != RADIATIVE:
            return None
        return float(np.imag(self.b_minus ** 2))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for name in ("nu", "b_plus", "b_minus", "c_residue", "b"):
            value = complex(data[name])
            data[name] = [value.real, value.imag]
        return data


@dataclass(frozen=True)
class MarkovReport:
    """Ratio |Δ̃|/(πα²) against the Markovianity threshold"""
    ratio: float
    markovian: bool
    threshold: float


def derive_scales(p: PhysicalParams, numerics: Optional[NumericsConfig] = None) -> DerivedScales:
    """Compute Δ̃, α², Γ₀, k₀, ξ, ν, b± and the residue prefactor"""
    rtol = _numerics(numerics).degenerate_rtol

    shift = p.level_shift
    delta_tilde = p.detuning - shift
    if abs(delta_tilde) <= rtol * max(abs(p.detuning), shift):
        raise CriticalDetuning(
            f"shifted detuning vanishes (Δ = {p.detuning!r}, 4Ω²/ω₀ = {shift!r})",
            delta_tilde=delta_tilde,
        )

    alpha_sq = 8.0 * p.rabi ** 4 / p.trap ** 3
    alpha = math.sqrt(alpha_sq)
    gamma0 = 4.0 * p.rabi ** 2 * math.sqrt(2.0 * math.pi * abs(delta_tilde) / p.trap ** 3)
    k0 = math.sqrt(2.0 * abs(delta_tilde) / p.trap) / p.x0
    xi = 1.0 / (p.lattice_spacing * k0)
    nu = complex(1.0) if delta_tilde < 0 else complex(0.0, -1.0)

    pi_alpha_sq = math.pi * alpha_sq
    discriminant = 1.0 - delta_tilde / pi_alpha_sq
    root = np.sqrt(complex(discriminant))
    scale = math.sqrt(math.pi) * alpha
    b_plus = complex(scale * (-1.0 + root))
    b_minus = complex(scale * (-1.0 - root))

    degenerate = abs(discriminant) <= rtol
    if delta_tilde < 0:
        regime = BOUND
        c_residue = 2.0 * b_plus / (b_plus - b_minus)
        b = b_plus
        if abs((b_plus ** 2).imag) > 1e-12 * max(abs(b_plus ** 2), 1e-300):
            logger.warning("bound pole b₊² is not real", extra={"b_plus": str(b_plus)})
    elif delta_tilde < pi_alpha_sq and not degenerate:
        regime = PURE_NON_MARKOVIAN
        c_residue = 0j
        b = b_minus
    else:
        regime = RADIATIVE
        b = b_minus
        if degenerate:
            # coalescing poles: the residue diverges and only the direct solver applies
            c_residue = complex(np.nan, np.nan)
        else:
            c_residue = 2.0 * b_minus / (b_minus - b_plus)

    return DerivedScales(
        delta_tilde=delta_tilde,
        alpha_sq=alpha_sq,
        gamma0=gamma0,
        k0=k0,
        xi=xi,
        nu=nu,
        b_plus=b_plus,
        b_minus=b_minus,
        c_residue=complex(c_residue),
        b=b,
        regime=regime,
        degenerate=degenerate,
        trap=p.trap,
        detuning=p.detuning,
    )


def classify_markovianity(s: DerivedScales, threshold: Optional[float] = None) -> MarkovReport:
    """Markovian when |Δ̃| exceeds πα² by more than the threshold"""
    if threshold is None:
        threshold = get_config().numerics.markov_threshold
    ratio = abs(s.delta_tilde) / (math.pi * s.alpha_sq)
    return MarkovReport(ratio=ratio, markovian=ratio > threshold, threshold=threshold)


def with_xi(p: PhysicalParams, xi: float, sign: Optional[int] = None) -> PhysicalParams:
    """Re-solve the detuning so that ξ takes the given value.

    The sign of Δ̃ is kept from ``p`` unless ``sign`` is passed.
    """
    if not math.isfinite(xi) or xi <= 0:
        raise InvalidParams(f"xi must be positive, got {xi}", field="xi")
    if sign is None:
        delta_tilde = p.detuning - p.level_shift
        if delta_tilde == 0:
            raise CriticalDetuning("cannot infer the sign of a vanishing shifted detuning", delta_tilde=0.0)
        sign = 1 if delta_tilde > 0 else -1
    k0 = 1.0 / (p.lattice_spacing * xi)
    magnitude = p.trap * (k0 * p.x0) ** 2 / 2.0
    return replace(p, detuning=p.level_shift + math.copysign(magnitude, sign))


def with_matched_laser(
    p: PhysicalParams,
    direction: Tuple[float, float, float] = (0.0, 0.0, 1.0),
    numerics: Optional[NumericsConfig] = None,
) -> PhysicalParams:
    """Set k_L = k₀·k̂ along ``direction``"""
    k_hat = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(k_hat)
    if k_hat.shape != (3,) or norm == 0 or not np.isfinite(norm):
        raise InvalidParams("laser direction must be a non-zero 3-vector", field="laser_direction")
    s = derive_scales(p, numerics)
    return replace(p, laser_wavevector=tuple(s.k0 * k_hat / norm))


def physics_warnings(
    p: PhysicalParams,
    s: Optional[DerivedScales] = None,
    numerics: Optional[NumericsConfig] = None,
) -> List[str]:
    """Advisory diagnostics; logged as warnings and returned, never raised"""
    numerics = _numerics(numerics)
    s = s if s is not None else derive_scales(p, numerics)
    warnings = []

    band_scale = max(abs(p.detuning), p.rabi)
    if p.trap < numerics.first_band_ratio * band_scale:
        warnings.append(
            f"first-band condition violated: ω₀/max(|Δ|, Ω) = {p.trap / band_scale:.3g} "
            f"< {numerics.first_band_ratio:g}"
        )

    report = classify_markovianity(s, numerics.markov_threshold)
    if not report.markovian:
        warnings.append(
            f"non-Markovian single-site dynamics: |Δ̃|/(πα²) = {report.ratio:.3g} <= {report.threshold:g}"
        )

    kl_x0 = float(np.linalg.norm(p.laser_wavevector)) * p.x0
    if kl_x0 > numerics.kl_x0_warning:
        warnings.append(f"k_L·X₀ = {kl_x0:.3g} exceeds {numerics.kl_x0_warning:g}; Markov couplings lose accuracy")

    if p.n_sites > 1 and abs(s.delta_tilde) < numerics.markov_threshold * p.n_sites * s.gamma0:
        warnings.append(
            f"collective Born-Markov condition weak: |Δ̃|/(N_sites·Γ₀) = "
            f"{abs(s.delta_tilde) / (p.n_sites * s.gamma0):.3g}"
        )

    for message in warnings:
        logger.warning(message, extra={"delta_tilde": s.delta_tilde, "regime": s.regime})
    return warnings
