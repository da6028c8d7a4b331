"""
Markov couplings Γ_{j−l} between lattice sites, their dissipative and
dispersive parts, and two quadrature oracles for the closed form.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Dict, Any, List

import numpy as np
import pandas as pd
from scipy import integrate, special

from config import NumericsConfig
from emission.params import PhysicalParams, DerivedScales, BOUND, derive_scales, _numerics
from emission.single_site import CorrelationKernel
from utils.errors import InvalidParams, NotPSD, WrongRegime, DimensionCap, ExtrapolationUnstable, QuadratureFailure

logger = logging.getLogger(__name__)

HAMILTONIAN_MODELS = {
    "boson": "extended Bose-Hubbard hopping",
    "spin": "extended ferromagnetic Ising-like exchange",
}


@dataclass(frozen=True)
class CouplingMatrix:
    """Γ_{j−l} over all site pairs, split into γ (Hermitian) and Λ (anti-Hermitian) parts"""
    matrix: np.ndarray
    gamma: np.ndarray
    lambda_: np.ndarray
    xi: float
    k_l: tuple
    diagonal_rate: float
    sites_per_axis: int
    lattice_dim: int
    regime: str
    eigenvalues: np.ndarray
    clipped: bool = False
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])


def site_coordinates(sites_per_axis: int, lattice_dim: int = 3) -> np.ndarray:
    """Integer coordinates in flattened order j = jx + M·jy + M²·jz"""
    m = sites_per_axis
    index = np.arange(m ** lattice_dim)
    coords = np.zeros((len(index), 3), dtype=int)
    for axis in range(lattice_dim):
        coords[:, axis] = (index // m ** axis) % m
    return coords


def _radial_coupling(s: DerivedScales, lattice_spacing: float, x0: float, distance) -> np.ndarray:
    """Phase-free closed form at lattice distance |Δj| > 0"""
    distance = np.asarray(distance, dtype=float)
    bracket = 1.0 - special.erf(lattice_spacing * distance / (2.0 * x0)) - np.exp(-s.nu * distance / s.xi)
    return 1j * (s.gamma0 * s.xi / distance) * bracket


def coupling_closed_form(p: PhysicalParams, s: DerivedScales, dj: Sequence[int]) -> complex:
    """Γ(Δj) = i e^{−ik_L·r} (Γ₀ξ/|Δj|) [1 − erf(d₀|Δj|/2X₀) − e^{−ν|Δj|/ξ}]"""
    dj = np.asarray(dj, dtype=float)
    distance = float(np.linalg.norm(dj))
    if dj.shape != (3,) or distance == 0:
        raise InvalidParams("closed form needs a non-zero integer 3-vector", field="dj")
    r = p.lattice_spacing * dj
    phase = np.exp(-1j * np.dot(p.laser_wavevector, r))
    return complex(phase * _radial_coupling(s, p.lattice_spacing, p.x0, distance))


def _offset_table(p: PhysicalParams, s: DerivedScales) -> np.ndarray:
    """Γ for every offset in [−(M−1), M−1]^dim, encoded with base 2M−1"""
    m = p.sites_per_axis
    span = np.arange(-(m - 1), m)
    axes = [span if axis < p.lattice_dim else np.zeros(1, dtype=int) for axis in range(3)]
    dz, dy, dx = np.meshgrid(axes[2], axes[1], axes[0], indexing="ij")
    offsets = np.stack([dx.ravel(), dy.ravel(), dz.ravel()], axis=1)

    distance = np.linalg.norm(offsets, axis=1)
    table = np.full(len(offsets), s.gamma0, dtype=complex)
    off = distance > 0
    phase = np.exp(-1j * (offsets[off] * p.lattice_spacing) @ np.asarray(p.laser_wavevector))
    table[off] = phase * _radial_coupling(s, p.lattice_spacing, p.x0, distance[off])
    return table


def build_coupling_matrix(
    p: PhysicalParams,
    s: Optional[DerivedScales] = None,
    numerics: Optional[NumericsConfig] = None,
) -> CouplingMatrix:
    """Dense Γ_{j−l} with a positive-semidefinite dissipative part"""
    numerics = _numerics(numerics)
    s = s if s is not None else derive_scales(p, numerics)
    n = p.n_sites
    if n > numerics.max_sites:
        raise DimensionCap(f"{n} sites exceed the cap of {numerics.max_sites}", requested=n, cap=numerics.max_sites)

    m = p.sites_per_axis
    table = _offset_table(p, s)
    # mixed-radix code of a site; code differences index the offset table
    span = [2 * m - 1 if axis < p.lattice_dim else 1 for axis in range(3)]
    weights = np.array([1, span[0], span[0] * span[1]])
    code = site_coordinates(m, p.lattice_dim) @ weights
    center = (m - 1) * int(weights[:p.lattice_dim].sum())
    matrix = table[code[:, None] - code[None, :] + center]

    gamma = 0.5 * (matrix + matrix.conj().T)
    lambda_ = (matrix - matrix.conj().T) / 2j
    eigenvalues = np.linalg.eigvalsh(gamma)[::-1]
    lowest = float(eigenvalues[-1])

    clipped = False
    if lowest < -numerics.psd_fail_tolerance * s.gamma0:
        raise NotPSD(
            f"smallest collective decay rate {lowest / s.gamma0:.3g}·Γ₀ is negative",
            min_eigenvalue=lowest,
            context={"xi": s.xi, "sites": n},
        )
    if lowest < -numerics.psd_clip_tolerance * s.gamma0:
        logger.warning(
            "clipping negative collective decay rates",
            extra={"min_eigenvalue": lowest, "gamma0": s.gamma0, "xi": s.xi},
        )
        values, vectors = np.linalg.eigh(gamma)
        gamma = (vectors * np.clip(values, 0.0, None)) @ vectors.conj().T
        matrix = gamma + 1j * lambda_
        eigenvalues = np.clip(values, 0.0, None)[::-1]
        clipped = True

    if not np.any(p.laser_wavevector):
        gamma = gamma.real
        lambda_ = lambda_.real

    logger.debug("coupling matrix built", extra={"sites": n, "xi": s.xi, "min_eigenvalue": lowest})
    return CouplingMatrix(
        matrix=matrix,
        gamma=gamma,
        lambda_=lambda_,
        xi=s.xi,
        k_l=tuple(p.laser_wavevector),
        diagonal_rate=s.gamma0,
        sites_per_axis=m,
        lattice_dim=p.lattice_dim,
        regime=s.regime,
        eigenvalues=eigenvalues,
        clipped=clipped,
        diagnostics={"raw_min_eigenvalue": lowest},
    )


def effective_hamiltonian(m: CouplingMatrix, premise_tolerance: float = 1e-9) -> np.ndarray:
    """Hopping matrix −|Γ_{j−l}| for the bound regime, zero on the diagonal"""
    if m.regime != BOUND:
        raise WrongRegime("the coherent hopping form needs Δ̃ < 0", regime=m.regime)
    if any(m.k_l):
        raise WrongRegime("the coherent hopping form needs k_L = 0", regime=m.regime)
    off_diagonal = ~np.eye(m.size, dtype=bool)
    leak = float(np.max(np.abs(m.matrix.real[off_diagonal]))) if m.size > 1 else 0.0
    if leak >= premise_tolerance * m.diagonal_rate:
        raise WrongRegime(f"off-diagonal couplings carry decay ({leak:.3g}); not purely coherent", regime=m.regime)
    hamiltonian = -np.abs(m.matrix)
    np.fill_diagonal(hamiltonian, 0.0)
    return hamiltonian


def export_hamiltonian(m: CouplingMatrix, model: str = "boson") -> pd.DataFrame:
    """Pair list of the effective Hamiltonian, labelled by model"""
    if model not in HAMILTONIAN_MODELS:
        raise InvalidParams(f"model must be one of {sorted(HAMILTONIAN_MODELS)}", field="model")
    hamiltonian = effective_hamiltonian(m)
    j, l = np.nonzero(~np.eye(m.size, dtype=bool))
    frame = _pair_frame(m, j, l)
    frame["coupling"] = hamiltonian[j, l]
    frame["model"] = model
    return frame


def _pair_frame(m: CouplingMatrix, j: np.ndarray, l: np.ndarray) -> pd.DataFrame:
    coords = site_coordinates(m.sites_per_axis, m.lattice_dim)
    return pd.DataFrame({
        "jx": coords[j, 0], "jy": coords[j, 1], "jz": coords[j, 2],
        "lx": coords[l, 0], "ly": coords[l, 1], "lz": coords[l, 2],
    })


def coupling_frame(m: CouplingMatrix) -> pd.DataFrame:
    """All pairs: jx, jy, jz, lx, ly, lz, Re Γ, Im Γ"""
    j, l = np.indices((m.size, m.size)).reshape(2, -1)
    frame = _pair_frame(m, j, l)
    frame["re_gamma"] = m.matrix.real[j, l]
    frame["im_gamma"] = m.matrix.imag[j, l]
    return frame


def coupling_summary(m: CouplingMatrix) -> Dict[str, Any]:
    range_sum = float((np.sum(np.abs(m.gamma)) - np.trace(np.abs(m.gamma))) / (m.size * m.diagonal_rate))
    return {
        "sites_per_axis": m.sites_per_axis,
        "sites": m.size,
        "xi": m.xi,
        "gamma0": m.diagonal_rate,
        "max_eigenvalue": float(m.eigenvalues[0]),
        "min_eigenvalue": float(m.eigenvalues[-1]),
        "range_sum": range_sum,
        "clipped": m.clipped,
    }


def coupling_map(p: PhysicalParams, s: DerivedScales, max_separation: float = 5.0, points: int = 200) -> pd.DataFrame:
    """γ/Γ₀ and Λ/Γ₀ against separation along a lattice axis"""
    separation = np.linspace(max_separation / points, max_separation, points)
    values = _radial_coupling(s, p.lattice_spacing, p.x0, separation)
    return pd.DataFrame({
        "separation": separation,
        "gamma": values.real / s.gamma0,
        "lambda": values.imag / s.gamma0,
        "xi": s.xi,
    })


def pair_correlation(p: PhysicalParams, dj: Sequence[int], tau, numerics: Optional[NumericsConfig] = None):
    """G_{Δj}(τ) = exp[(−r²/4X₀²)/(1 + iω₀τ/2) − ik_L·r] G(τ), with Δ̃ in G"""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise InvalidParams("pair correlation needs τ >= 0", field="tau")
    r = p.lattice_spacing * np.asarray(dj, dtype=float)
    kernel = CorrelationKernel(dimension=p.reservoir_dim, omega0=p.trap, rabi=p.rabi,
                               detuning=p.detuning - p.level_shift)
    envelope = np.exp(-np.dot(r, r) / (4.0 * p.x0 ** 2) / (1.0 + 0.5j * p.trap * tau)
                      - 1j * np.dot(p.laser_wavevector, r))
    return envelope * kernel(tau)


def time_domain_coupling(p: PhysicalParams, dj: Sequence[int], numerics: Optional[NumericsConfig] = None) -> complex:
    """∫₀^∞ G_{Δj}(τ) dτ; Fourier-weighted quadrature on the slowly decaying tail"""
    delta_tilde = p.detuning - p.level_shift
    r_sq = float(np.dot(dj, dj)) * p.lattice_spacing ** 2
    split = max(40.0, 10.0 * r_sq / p.x0 ** 2) / p.trap
    omega = abs(delta_tilde)
    sign = 1.0 if delta_tilde >= 0 else -1.0

    def envelope(tau: float) -> complex:
        return complex(pair_correlation(p, dj, tau) * np.exp(-1j * delta_tilde * tau))

    def head(tau: float) -> complex:
        return complex(pair_correlation(p, dj, tau))

    points = np.geomspace(1.0 / p.trap, split, 24)[:-1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        head_re, err1 = integrate.quad(lambda t: head(t).real, 0.0, split, points=points, limit=2000, epsabs=1e-14)
        head_im, err2 = integrate.quad(lambda t: head(t).imag, 0.0, split, points=points, limit=2000, epsabs=1e-14)
        tail = {}
        errors = [err1, err2]
        for weight in ("cos", "sin"):
            for part in ("real", "imag"):
                value, error = integrate.quad(lambda t: getattr(envelope(t), part), split, np.inf,
                                              weight=weight, wvar=omega, limlst=200, epsabs=1e-14)
                tail[weight, part] = value
                errors.append(error)

    # e^{iΔ̃τ} = cos(|Δ̃|τ) + i·sign·sin(|Δ̃|τ)
    tail_re = tail["cos", "real"] - sign * tail["sin", "imag"]
    tail_im = tail["cos", "imag"] + sign * tail["sin", "real"]
    result = complex(head_re + tail_re, head_im + tail_im)
    error = float(np.hypot.reduce(errors))
    if error > 1e-3 * abs(result):
        raise QuadratureFailure(f"time-domain coupling error {error:.3g} against {abs(result):.3g}", error_estimate=error)
    return result


def first_radial_integral(r: float, x0: float) -> float:
    """∫₀^∞ sinc(kr) e^{−X₀²k²} dk by quadrature"""
    value, _ = integrate.quad(lambda k: np.sinc(k * r / np.pi) * math.exp(-(x0 * k) ** 2), 0.0, 12.0 / x0,
                              limit=500, epsabs=1e-13, epsrel=1e-13)
    return value


def first_radial_closed_form(r: float, x0: float) -> float:
    """(π/2r) erf(r/2X₀)"""
    return math.pi / (2.0 * r) * special.erf(r / (2.0 * x0))


def _momentum_coupling(p: PhysicalParams, r: float, phase: complex, epsilon: float) -> complex:
    delta_tilde = p.detuning - p.level_shift
    x0 = p.x0
    k_max = 10.0 / x0
    a = delta_tilde + 1j * epsilon

    def integrand(k: float) -> complex:
        return np.sinc(k * r / np.pi) * math.exp(-(x0 * k) ** 2) / (a - 0.5 * k * k)

    points: List[float] = []
    if delta_tilde > 0:
        k0 = math.sqrt(2.0 * delta_tilde)
        width = epsilon / k0
        for exponent in range(0, 5):
            for sign in (-1, 1):
                point = k0 + sign * width * 10 ** exponent
                if 0 < point < k_max:
                    points.append(point)
        points.append(k0)
    points = sorted(set(points))

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        real, _ = integrate.quad(lambda k: integrand(k).real, 0.0, k_max, points=points or None,
                                 limit=1000, epsabs=1e-14, epsrel=1e-12)
        imag, _ = integrate.quad(lambda k: integrand(k).imag, 0.0, k_max, points=points or None,
                                 limit=1000, epsabs=1e-14, epsrel=1e-12)
    second = a * complex(real, imag)
    prefactor = 8.0 * x0 * p.rabi ** 2 / (1j * math.sqrt(math.pi) * p.trap)
    return prefactor * phase * (first_radial_closed_form(r, x0) - second)


def coupling_quadrature_oracle(
    p: PhysicalParams,
    dj: Sequence[int],
    epsilon: Optional[float] = None,
    numerics: Optional[NumericsConfig] = None,
) -> complex:
    """Momentum-space evaluation of Γ(Δj), extrapolated to vanishing regulator.

    With ``epsilon`` given, the regularized value at that ε is returned instead.
    """
    numerics = _numerics(numerics)
    dj = np.asarray(dj, dtype=float)
    r = p.lattice_spacing * float(np.linalg.norm(dj))
    if r == 0:
        raise InvalidParams("quadrature oracle needs Δj ≠ 0", field="dj")
    phase = complex(np.exp(-1j * np.dot(p.laser_wavevector, p.lattice_spacing * dj)))

    if epsilon is not None:
        if epsilon <= 0:
            raise InvalidParams(f"regulator must be positive, got {epsilon}", field="epsilon")
        return _momentum_coupling(p, r, phase, epsilon)

    gamma0 = derive_scales(p, numerics).gamma0
    epsilons = [factor * gamma0 for factor in numerics.epsilon_sequence]
    estimates = [_momentum_coupling(p, r, phase, eps) for eps in epsilons]
    differences = [abs(a - b) for a, b in zip(estimates, estimates[1:])]
    if any(later > earlier for earlier, later in zip(differences, differences[1:])):
        raise ExtrapolationUnstable("regularized couplings do not settle as ε → 0", estimates=estimates)

    slope = (estimates[-2] - estimates[-1]) / (epsilons[-2] - epsilons[-1])
    return complex(estimates[-1] - slope * epsilons[-1])
