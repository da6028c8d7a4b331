"""
Angular distribution of atoms emitted from a symmetric spin wave when the
laser wavevector is matched to the resonant momentum, k_L = k₀.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from config import NumericsConfig
from emission.params import PhysicalParams, DerivedScales, derive_scales, _numerics
from utils.errors import GridTooCoarse, InvalidParams, WrongRegime

logger = logging.getLogger(__name__)

# below this argument the per-axis factor is replaced by its Taylor value
TAYLOR_THRESHOLD = 1e-6

# N trapped atoms in the superfluid state emit N free atoms with this distribution
SUPERFLUID_NOTE = "superfluid lattice: every trapped atom is emitted with the single-excitation distribution"


@dataclass
class AngularDistribution:
    """I(Ω) on a product quadrature grid whose pole is the laser direction"""
    theta: np.ndarray
    phi: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    directions: np.ndarray
    enhancement: float
    total_rate: float
    width: float
    k_hat: np.ndarray
    peak_value: float
    maxima: List[np.ndarray] = field(default_factory=list)
    normalization_residual: float = 0.0
    nodes_across_peak: Optional[float] = None
    notes: Dict[str, Any] = field(default_factory=dict)

    @property
    def integral(self) -> float:
        return float(np.sum(self.weights * self.values))

    def to_frame(self) -> pd.DataFrame:
        """Lab-frame polar and azimuthal angles with the intensity"""
        u = self.directions.reshape(-1, 3)
        return pd.DataFrame({
            "theta": np.arccos(np.clip(u[:, 2], -1.0, 1.0)),
            "phi": np.mod(np.arctan2(u[:, 1], u[:, 0]), 2 * np.pi),
            "I": self.values.ravel(),
        })


@dataclass(frozen=True)
class ValidityReport:
    """Ω²/ω₀² against (X₀/d₀)/(M²π²ξ²)"""
    satisfied: bool
    lhs: float
    rhs: float
    margin: float

    @property
    def ratio(self) -> float:
        return self.rhs / self.lhs if self.lhs > 0 else math.inf


def axis_counts(p: PhysicalParams) -> np.ndarray:
    return np.array([p.sites_per_axis if axis < p.lattice_dim else 1 for axis in range(3)])


def fejer_factor(x, count: int) -> np.ndarray:
    """sin²(count·x)/sin²(x), periodic in π, with the removable singularities filled in"""
    x = np.asarray(x, dtype=float)
    reduced = np.mod(x + np.pi / 2, np.pi) - np.pi / 2
    small = np.abs(reduced) < TAYLOR_THRESHOLD
    safe = np.where(small, 1.0, reduced)
    value = np.sin(count * safe) ** 2 / np.sin(safe) ** 2
    taylor = count ** 2 * (1.0 - (count ** 2 - 1) * reduced ** 2 / 3.0)
    return np.where(small, taylor, value)


def interference_factor(u: np.ndarray, k_hat: np.ndarray, xi: float, counts: Sequence[int]) -> np.ndarray:
    """Π_α sin²[(u−k̂)_α M/2ξ] / sin²[(u−k̂)_α/2ξ]"""
    shifted = (np.asarray(u, dtype=float) - k_hat) / (2.0 * xi)
    result = np.ones(shifted.shape[:-1])
    for axis, count in enumerate(counts):
        if count > 1:
            result = result * fejer_factor(shifted[..., axis], int(count))
    return result


def _unit(vector: Sequence[float], name: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    norm = float(np.linalg.norm(vector))
    if vector.shape != (3,) or norm == 0 or not math.isfinite(norm):
        raise InvalidParams(f"{name} must be a non-zero 3-vector", field=name)
    return vector / norm


def diffraction_maxima(
    s: DerivedScales,
    k_hat: Sequence[float],
    cutoff: Optional[int] = None,
    tolerance: float = 1e-9,
) -> List[np.ndarray]:
    """Unit vectors u = k̂ + 2πξm on the sphere, m ∈ ℤ³ with |m| ≤ cutoff.

    The sphere condition is solved as πξ|m|² = −k̂·m; ``tolerance`` bounds its
    residual. m = 0 is always first.
    """
    k_hat = _unit(k_hat, "k_hat")
    xi = s.xi
    if cutoff is None:
        cutoff = int(math.floor(1.0 / (math.pi * xi))) + 1
    axis = np.arange(-cutoff, cutoff + 1)
    m = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    norm_sq = np.sum(m * m, axis=1)
    m, norm_sq = m[(norm_sq > 0) & (norm_sq <= cutoff ** 2)], norm_sq[(norm_sq > 0) & (norm_sq <= cutoff ** 2)]
    residual = np.abs(m @ k_hat + math.pi * xi * norm_sq)
    found = m[residual <= tolerance * np.maximum(1.0, math.pi * xi * norm_sq)]

    maxima = [k_hat]
    for vector in found:
        u = k_hat + 2.0 * math.pi * xi * vector
        maxima.append(u / np.linalg.norm(u))
    return maxima


def _frame(k_hat: np.ndarray) -> np.ndarray:
    """Rows e1, e2, e3 with e3 = k̂"""
    helper = np.array([1.0, 0.0, 0.0]) if abs(k_hat[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(helper, k_hat)
    e1 /= np.linalg.norm(e1)
    return np.stack([e1, np.cross(k_hat, e1), k_hat])


def _gauss(a: float, b: float, n: int):
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * nodes + 0.5 * (b + a), 0.5 * (b - a) * weights


def _polar_rule(peak_angles: List[float], half_width: float, numerics: NumericsConfig, refine: int):
    """Composite Gauss-Legendre rule in θ with a dedicated panel around every peak"""
    panels = []
    for angle in peak_angles:
        panels.append([max(0.0, angle - half_width), min(math.pi, angle + half_width)])
    panels.sort()
    merged: List[List[float]] = []
    for lo, hi in panels:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])

    pieces, cursor = [], 0.0
    for lo, hi in merged:
        if lo > cursor:
            pieces.append((cursor, lo, False))
        pieces.append((lo, hi, True))
        cursor = hi
    if cursor < math.pi:
        pieces.append((cursor, math.pi, False))

    nodes, weights, peak_density = [], [], math.inf
    for lo, hi, is_peak in pieces:
        length = hi - lo
        if is_peak:
            n = max(numerics.grid_peak_nodes, int(math.ceil(numerics.grid_peak_nodes * length / (2 * half_width))))
            peak_density = min(peak_density, n / length)
        else:
            n = max(4, int(math.ceil(numerics.grid_theta_nodes * length / math.pi)))
        x, w = _gauss(lo, hi, n * refine)
        nodes.append(x)
        weights.append(w * np.sin(x))
    return np.concatenate(nodes), np.concatenate(weights), peak_density * refine


def _evaluate(p: PhysicalParams, s: DerivedScales, k_hat: np.ndarray, numerics: NumericsConfig, refine: int = 1):
    counts = axis_counts(p)
    m = p.sites_per_axis
    frame = _frame(k_hat)
    maxima = diffraction_maxima(s, k_hat) if m > 1 else [k_hat]
    # near maxima also get a panel: the point k̂ + 2πξm lies within one peak width of the sphere
    near = diffraction_maxima(s, k_hat, tolerance=1.0 / m) if m > 1 else [k_hat]

    peak_width = 2.0 * math.pi * s.xi / m
    half_width = min(numerics.grid_peak_halfwidths * peak_width, math.pi)
    peak_angles = [float(np.arccos(np.clip(u @ k_hat, -1.0, 1.0))) for u in near] if m > 1 else []

    theta, theta_weights, density = _polar_rule(peak_angles, half_width, numerics, refine)
    n_phi = numerics.grid_phi_nodes * refine
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    phi_weights = np.full(n_phi, 2.0 * math.pi / n_phi)

    nodes_across = None
    if m > 1:
        nodes_across = density * peak_width
        for angle in peak_angles:
            ring = math.sin(angle)
            if ring > 0:
                nodes_across = min(nodes_across, n_phi * peak_width / (2.0 * math.pi * ring))

    sin_t, cos_t = np.sin(theta)[:, None], np.cos(theta)[:, None]
    local = np.stack([sin_t * np.cos(phi)[None, :], sin_t * np.sin(phi)[None, :], np.broadcast_to(cos_t, (theta.size, n_phi))], axis=-1)
    directions = local @ frame
    factor = interference_factor(directions, k_hat, s.xi, counts)
    weights = np.outer(theta_weights, phi_weights)
    return theta, phi, weights, directions, factor, maxima, nodes_across


def angular_distribution(
    p: PhysicalParams,
    s: Optional[DerivedScales] = None,
    numerics: Optional[NumericsConfig] = None,
) -> AngularDistribution:
    """I(Ω) = (1/4πN)(Γ₀/Γ)·Π_α F_α with Γ fixed by ∫dΩ I = 1"""
    numerics = _numerics(numerics)
    s = s if s is not None else derive_scales(p, numerics)
    if s.delta_tilde <= 0:
        raise WrongRegime("directional emission needs a positive shifted detuning", regime=s.regime)
    k_l = np.asarray(p.laser_wavevector, dtype=float)
    k_norm = float(np.linalg.norm(k_l))
    if k_norm == 0 or abs(k_norm - s.k0) > 1e-6 * s.k0:
        raise InvalidParams(f"laser wavevector |k_L| = {k_norm:.6g} must equal k₀ = {s.k0:.6g}", field="laser_wavevector")
    k_hat = k_l / k_norm
    n = p.n_sites

    theta, phi, weights, directions, factor, maxima, nodes_across = _evaluate(p, s, k_hat, numerics)
    if nodes_across is not None and nodes_across < numerics.min_nodes_per_peak:
        raise GridTooCoarse(
            f"only {nodes_across:.1f} nodes across a diffraction peak of width {2 * math.pi * s.xi / p.sites_per_axis:.3g}",
            nodes_across_peak=int(nodes_across),
        )
    chi = float(np.sum(weights * factor)) / (4.0 * math.pi * n)

    refined = _evaluate(p, s, k_hat, numerics, refine=2)
    chi_refined = float(np.sum(refined[2] * refined[4])) / (4.0 * math.pi * n)
    residual = abs(chi_refined / chi - 1.0)

    values = factor / (4.0 * math.pi * n * chi)
    peak_value = float(np.prod(axis_counts(p) ** 2.0)) / (4.0 * math.pi * n * chi)
    logger.debug(
        "angular distribution evaluated",
        extra={"enhancement": chi, "maxima": len(maxima), "residual": residual, "nodes": int(factor.size)},
    )
    return AngularDistribution(
        theta=theta,
        phi=phi,
        weights=weights,
        values=values,
        directions=directions,
        enhancement=chi,
        total_rate=chi * s.gamma0,
        width=s.xi / p.sites_per_axis,
        k_hat=k_hat,
        peak_value=peak_value,
        maxima=maxima,
        normalization_residual=residual,
        nodes_across_peak=nodes_across,
        notes={"superfluid": SUPERFLUID_NOTE},
    )


def lattice_sum_enhancement(p: PhysicalParams, s: DerivedScales, k_hat: Sequence[float]) -> float:
    """Γ/Γ₀ = (1/N)Σ_jl e^{−ik̂·(j−l)/ξ} sinc(|j−l|/ξ), the sphere average done analytically"""
    k_hat = _unit(k_hat, "k_hat")
    counts = axis_counts(p)
    axes = [np.arange(-(c - 1), c) for c in counts]
    offsets = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    multiplicity = np.prod(counts[None, :] - np.abs(offsets), axis=1)
    distance = np.linalg.norm(offsets, axis=1) / s.xi
    terms = multiplicity * np.cos(offsets @ k_hat / s.xi) * np.sinc(distance / math.pi)
    return float(terms.sum()) / p.n_sites


def gaussian_peak_estimates(
    p: PhysicalParams,
    s: Optional[DerivedScales] = None,
    numerics: Optional[NumericsConfig] = None,
) -> Dict[str, float]:
    """χ = π^{3/2}Mξ² and Δθ = ξ/M from Gaussian-shaped peaks"""
    numerics = _numerics(numerics)
    s = s if s is not None else derive_scales(p, numerics)
    m = p.sites_per_axis
    ratio = s.xi / m
    if ratio > numerics.narrow_peak_warning:
        logger.warning(
            f"peaks too wide for the Gaussian estimate: ξ/M = {ratio:.3g}",
            extra={"xi": s.xi, "sites_per_axis": m},
        )
    return {"chi": math.pi ** 1.5 * m * s.xi ** 2, "delta_theta": ratio}


def validity_bound(
    p: PhysicalParams,
    s: Optional[DerivedScales] = None,
    numerics: Optional[NumericsConfig] = None,
) -> ValidityReport:
    """Emission slower than the transit time: Ω²/ω₀² ≪ (X₀/d₀)/(M²π²ξ²)"""
    numerics = _numerics(numerics)
    s = s if s is not None else derive_scales(p, numerics)
    lhs = (p.rabi / p.trap) ** 2
    rhs = (p.x0 / p.lattice_spacing) / (p.sites_per_axis ** 2 * math.pi ** 2 * s.xi ** 2)
    satisfied = numerics.validity_margin * lhs < rhs
    if not satisfied:
        logger.warning(
            "directional emission faster than the atoms leave the lattice",
            extra={"lhs": lhs, "rhs": rhs, "margin": numerics.validity_margin},
        )
    return ValidityReport(satisfied=satisfied, lhs=lhs, rhs=rhs, margin=numerics.validity_margin)


def beam_half_width(dist: AngularDistribution) -> float:
    """Half width at half maximum of the azimuthally averaged peak around k̂_L"""
    profile = dist.values.mean(axis=1)
    half = dist.peak_value / 2.0
    below = np.nonzero(profile <= half)[0]
    if below.size == 0:
        return math.nan
    i = int(below[0])
    if i == 0:
        t0, v0 = 0.0, dist.peak_value
    else:
        t0, v0 = dist.theta[i - 1], profile[i - 1]
    t1, v1 = dist.theta[i], profile[i]
    return float(t0 + (v0 - half) * (t1 - t0) / (v0 - v1))


def cone_fraction(dist: AngularDistribution, half_angle: float) -> float:
    """Share of the emission within ``half_angle`` of k̂_L"""
    inside = dist.theta <= half_angle
    return float(np.sum(dist.weights[inside] * dist.values[inside]))


def distribution_summary(p: PhysicalParams, s: DerivedScales, dist: AngularDistribution,
                         numerics: Optional[NumericsConfig] = None) -> Dict[str, Any]:
    estimates = gaussian_peak_estimates(p, s, numerics)
    return {
        "enhancement": dist.enhancement,
        "total_rate": dist.total_rate,
        "gaussian_enhancement": estimates["chi"],
        "gaussian_width": estimates["delta_theta"],
        "half_width": beam_half_width(dist),
        "normalization_residual": dist.normalization_residual,
        "maxima": [list(map(float, u)) for u in dist.maxima],
    }
