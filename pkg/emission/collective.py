"""
Collective emission from the whole lattice under the Born-Markov master equation.

Two kinds of trapped atoms are handled. Hard-core bosons (spins) follow
semiclassical equations for the coherences c_jl = ⟨σ⁺_j σ⁻_l⟩ and the
populations s_j = ⟨σ³_j⟩. Non-interacting bosons follow closed, exact
equations for c_jl = ⟨a†_j a_l⟩. Both right-hand sides come from one
generator, ``expectation_evolution_rhs``.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import integrate, linalg

from config import NumericsConfig, SPIN_CLOSURES
from emission.couplings import CouplingMatrix, site_coordinates
from emission.params import _numerics
from utils.errors import EmissionError, InvalidParams, StateOutOfRange, UnsupportedState, WrongRegime

logger = logging.getLogger(__name__)

SPIN = "spin"
BOSON = "boson"
KINDS = (SPIN, BOSON)

MOTT = "mott"
SUPERFLUID = "superfluid"
COHERENT = "coherent"
PHASES = (MOTT, SUPERFLUID, COHERENT)

OPERATORS = ("coherences", "populations", "number")


@dataclass
class CoherenceState:
    """First-order coherences of the lattice at one instant"""
    coherences: np.ndarray
    kind: str
    phase: str
    n_atoms: float
    sites_per_axis: int
    lattice_dim: int = 3
    populations: Optional[np.ndarray] = None
    time: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.coherences.shape[0]

    @property
    def filling(self) -> float:
        return self.n_atoms / self.n_sites

    @property
    def total_number(self) -> float:
        if self.kind == SPIN:
            return float(np.sum(1.0 + self.populations) / 2.0)
        return float(np.trace(self.coherences).real)

    @property
    def hermiticity_defect(self) -> float:
        return float(np.max(np.abs(self.coherences - self.coherences.conj().T)))


@dataclass(frozen=True)
class DecayModeBasis:
    """Eigen-decomposition of γ: rows of ``modes`` are the decay modes"""
    rates: np.ndarray
    modes: np.ndarray
    gamma0: float

    def mode_occupations(self, state: CoherenceState) -> np.ndarray:
        """⟨c†_p c_p⟩ = Σ_jl S_pj S_pl c_jl"""
        return np.einsum("pj,jl,pl->p", self.modes, state.coherences, self.modes).real


@dataclass
class EmissionRecord:
    """Trapped number and emission rate on a time grid"""
    times: np.ndarray
    n_total: np.ndarray
    rate: np.ndarray
    n_atoms: float
    n_sites: int
    gamma0: float
    method: str
    kind: str = BOSON
    phase: str = MOTT
    diagnostics: Dict[str, Any] = field(default_factory=dict)
    states: Optional[List[np.ndarray]] = None

    @property
    def filling(self) -> float:
        return self.n_atoms / self.n_sites

    @property
    def normalized_number(self) -> np.ndarray:
        return self.n_total / self.n_atoms

    @property
    def normalized_rate(self) -> np.ndarray:
        """R scaled by the rate 2·N_sites·Γ₀·n̄ of independent emitters at t = 0"""
        return self.rate / (2.0 * self.n_sites * self.gamma0 * self.filling)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "n_T": self.n_total,
            "R": self.rate,
            "n_T_over_N": self.normalized_number,
            "R_normalized": self.normalized_rate,
        })


@dataclass(frozen=True)
class SlopeReport:
    """Initial slope of the emission rate from a fully inverted lattice"""
    slope: float
    normalized: float
    superradiant: bool


def initial_state(
    kind: str,
    phase: str,
    n_atoms: Optional[int] = None,
    sites_per_axis: int = 1,
    lattice_dim: int = 3,
) -> CoherenceState:
    """Coherences of a Mott, superfluid or coherent start.

    Mott: c = n̄·I (spins: c = I, s = +1). Superfluid and coherent bosons:
    c_jl = N/N_sites for all pairs. ``n_atoms`` defaults to one atom per site.
    """
    if kind not in KINDS:
        raise InvalidParams(f"kind must be one of {', '.join(KINDS)}, got {kind!r}", field="kind")
    if phase not in PHASES:
        raise InvalidParams(f"phase must be one of {', '.join(PHASES)}, got {phase!r}", field="phase")
    n_sites = sites_per_axis ** lattice_dim
    n_atoms = n_sites if n_atoms is None else n_atoms
    if isinstance(n_atoms, bool) or int(n_atoms) != n_atoms or n_atoms < 1:
        raise InvalidParams(f"n_atoms must be a positive integer, got {n_atoms}", field="n_atoms")
    n_atoms = int(n_atoms)

    if kind == SPIN:
        if phase != MOTT:
            raise UnsupportedState(f"{phase} initial states are not supported for hard-core atoms")
        if n_atoms != n_sites:
            raise InvalidParams(f"a hard-core Mott state holds exactly {n_sites} atoms, got {n_atoms}", field="n_atoms")
        return CoherenceState(
            coherences=np.eye(n_sites, dtype=complex),
            kind=SPIN,
            phase=MOTT,
            n_atoms=n_atoms,
            sites_per_axis=sites_per_axis,
            lattice_dim=lattice_dim,
            populations=np.ones(n_sites),
        )

    if phase == MOTT:
        if n_atoms % n_sites:
            raise InvalidParams(f"uniform filling needs a multiple of {n_sites} atoms, got {n_atoms}", field="n_atoms")
        coherences = np.eye(n_sites, dtype=complex) * (n_atoms // n_sites)
    else:
        # a product of identical coherent states has the superfluid first-order coherences
        coherences = np.full((n_sites, n_sites), n_atoms / n_sites, dtype=complex)
    return CoherenceState(
        coherences=coherences,
        kind=BOSON,
        phase=phase,
        n_atoms=n_atoms,
        sites_per_axis=sites_per_axis,
        lattice_dim=lattice_dim,
    )


def dft_mode_occupations(state: CoherenceState) -> np.ndarray:
    """⟨f†_q f_q⟩ for every lattice momentum q, in flattened site order"""
    m = state.sites_per_axis
    coords = site_coordinates(m, state.lattice_dim)
    phases = np.exp(-2j * np.pi * (coords @ coords.T) / m) / math.sqrt(state.n_sites)
    return np.einsum("qj,jl,ql->q", phases.conj(), state.coherences, phases).real


def _generator_matrix(m: CouplingMatrix, dispersive: bool) -> np.ndarray:
    return np.asarray(m.matrix if dispersive else m.gamma, dtype=complex)


@dataclass(frozen=True)
class ExpectationRhs:
    """Time derivative of one family of expectation values.

    Every family is built from the two transport terms of the master
    equation, (cΓᵀ)_jl = Σ_m Γ_{l−m} c_jm and (Γ*c)_jl = Σ_m Γ*_{j−m} c_ml.
    """
    operator: str
    kind: str
    closure: str
    generator: np.ndarray

    def __call__(self, coherences: np.ndarray, populations: Optional[np.ndarray] = None) -> np.ndarray:
        g = self.generator
        if self.operator == "number":
            return -2.0 * float(np.sum(g * coherences).real)
        if self.operator == "populations":
            # s_j = 2n_j - 1 for spins
            factor = 2.0 if self.kind == BOSON else 4.0
            return -factor * np.sum(g * coherences, axis=1).real

        left = coherences @ g.T
        right = g.conj() @ coherences
        if self.kind == BOSON:
            return -(left + right)

        s = populations
        diagonal = np.diag(g)
        if self.closure == "self_excluded":
            left = left - coherences * diagonal[None, :]
            right = right - coherences * diagonal.conj()[:, None]
            damping = 2.0
        else:
            damping = 4.0
        gamma0 = float(diagonal.real.mean())
        rates = -damping * gamma0 * coherences + left * s[None, :] + right * s[:, None]
        np.fill_diagonal(rates, -2.0 * np.sum(g * coherences, axis=1).real)
        return rates


def expectation_evolution_rhs(
    m: CouplingMatrix,
    which: str,
    kind: str = BOSON,
    closure: Optional[str] = None,
    dispersive: bool = True,
) -> ExpectationRhs:
    """Right-hand side for ``which`` ∈ {coherences, populations, number}"""
    if which not in OPERATORS:
        raise InvalidParams(f"operator must be one of {', '.join(OPERATORS)}, got {which!r}", field="which")
    if kind not in KINDS:
        raise InvalidParams(f"kind must be one of {', '.join(KINDS)}, got {kind!r}", field="kind")
    closure = closure or _numerics(None).spin_closure
    if closure not in SPIN_CLOSURES:
        raise InvalidParams(f"closure must be one of {', '.join(SPIN_CLOSURES)}, got {closure!r}", field="closure")
    return ExpectationRhs(operator=which, kind=kind, closure=closure, generator=_generator_matrix(m, dispersive))


def _check_kind(state: CoherenceState, kind: str, m: CouplingMatrix) -> None:
    if state.kind != kind:
        raise UnsupportedState(f"expected a {kind} state, got {state.kind}")
    if state.n_sites != m.size:
        raise InvalidParams(f"state has {state.n_sites} sites but the couplings have {m.size}", field="state")


def _times(times: Sequence[float]) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or times[0] < 0 or np.any(np.diff(times) <= 0):
        raise InvalidParams("times must be a non-empty increasing grid starting at t >= 0", field="times")
    return times


def evolve_boson(
    state: CoherenceState,
    m: CouplingMatrix,
    times: Sequence[float],
    dispersive: bool = True,
    keep_states: bool = False,
    numerics: Optional[NumericsConfig] = None,
) -> EmissionRecord:
    """Exact bosonic coherences c(t) = E†c(0)E with E = exp(−Γᵀt)"""
    _check_kind(state, BOSON, m)
    numerics = _numerics(numerics)
    times = _times(times)
    g = _generator_matrix(m, dispersive)
    number_rate = expectation_evolution_rhs(m, "number", BOSON, dispersive=dispersive)

    n_total = np.empty(times.size)
    rate = np.empty(times.size)
    lowest = np.inf
    snapshots = [] if keep_states else None
    for i, t in enumerate(times):
        propagator = linalg.expm(-g.T * (t - state.time))
        c = propagator.conj().T @ state.coherences @ propagator
        c = 0.5 * (c + c.conj().T)
        n_total[i] = np.trace(c).real
        rate[i] = -number_rate(c)
        lowest = min(lowest, float(np.linalg.eigvalsh(c)[0]))
        if keep_states:
            snapshots.append(c)

    if lowest < -numerics.positivity_tolerance * state.n_atoms:
        logger.warning("bosonic coherences lost positivity", extra={"min_eigenvalue": lowest})
    return EmissionRecord(
        times=times,
        n_total=n_total,
        rate=rate,
        n_atoms=state.n_atoms,
        n_sites=state.n_sites,
        gamma0=m.diagonal_rate,
        method="matrix_exponential",
        kind=BOSON,
        phase=state.phase,
        diagnostics={"min_eigenvalue": lowest, "dispersive": dispersive},
        states=snapshots,
    )


def _solve(rhs: Callable, y0: np.ndarray, t0: float, times: np.ndarray, numerics: NumericsConfig, what: str):
    if times[0] < t0:
        raise InvalidParams(f"output grid starts at {times[0]} before the state time {t0}", field="times")
    solution = integrate.solve_ivp(
        rhs,
        (t0, times[-1]),
        y0,
        method="DOP853",
        t_eval=times,
        rtol=numerics.ode_rtol,
        atol=numerics.ode_atol,
    )
    if not solution.success:
        raise EmissionError(
            f"{what} integration failed: {solution.message}",
            error_code="INTEGRATION_FAILURE",
            context={"t_reached": float(solution.t[-1]) if solution.t.size else float(times[0])},
            user_message="The ODE integrator could not complete the run.",
        )
    return solution


def evolve_boson_ode(
    state: CoherenceState,
    m: CouplingMatrix,
    times: Sequence[float],
    dispersive: bool = True,
    numerics: Optional[NumericsConfig] = None,
) -> EmissionRecord:
    """Step ċ = −(cΓᵀ + Γ*c) with an adaptive Runge-Kutta pair"""
    _check_kind(state, BOSON, m)
    numerics = _numerics(numerics)
    times = _times(times)
    n = state.n_sites
    coherence_rate = expectation_evolution_rhs(m, "coherences", BOSON, dispersive=dispersive)
    number_rate = expectation_evolution_rhs(m, "number", BOSON, dispersive=dispersive)

    def rhs(_t, y):
        c = (y[: n * n] + 1j * y[n * n:]).reshape(n, n)
        dc = coherence_rate(c).ravel()
        return np.concatenate([dc.real, dc.imag])

    y0 = np.concatenate([state.coherences.real.ravel(), state.coherences.imag.ravel()])
    solution = _solve(rhs, y0, state.time, times, numerics, "bosonic coherence")
    cs = (solution.y[: n * n] + 1j * solution.y[n * n:]).T.reshape(-1, n, n)
    return EmissionRecord(
        times=times,
        n_total=np.trace(cs, axis1=1, axis2=2).real,
        rate=np.array([-number_rate(c) for c in cs]),
        n_atoms=state.n_atoms,
        n_sites=n,
        gamma0=m.diagonal_rate,
        method="coherence_ode",
        kind=BOSON,
        phase=state.phase,
        diagnostics={"rhs_evaluations": int(solution.nfev), "dispersive": dispersive},
    )


def evolve_spin_semiclassical(
    state: CoherenceState,
    m: CouplingMatrix,
    times: Sequence[float],
    closure: Optional[str] = None,
    dispersive: bool = True,
    numerics: Optional[NumericsConfig] = None,
) -> EmissionRecord:
    """Semiclassical hard-core equations; the diagonal c_jj = (1+s_j)/2 is slaved to s"""
    _check_kind(state, SPIN, m)
    numerics = _numerics(numerics)
    closure = closure or numerics.spin_closure
    times = _times(times)
    n = state.n_sites
    coherence_rate = expectation_evolution_rhs(m, "coherences", SPIN, closure, dispersive)
    population_rate = expectation_evolution_rhs(m, "populations", SPIN, closure, dispersive)
    number_rate = expectation_evolution_rhs(m, "number", SPIN, closure, dispersive)

    def unpack(y):
        c = (y[: n * n] + 1j * y[n * n: 2 * n * n]).reshape(n, n)
        s = y[2 * n * n:]
        np.fill_diagonal(c, (1.0 + s) / 2.0)
        return c, s

    def rhs(_t, y):
        c, s = unpack(y)
        dc = coherence_rate(c, s).ravel()
        return np.concatenate([dc.real, dc.imag, population_rate(c, s)])

    y0 = np.concatenate([state.coherences.real.ravel(), state.coherences.imag.ravel(), state.populations])
    solution = _solve(rhs, y0, state.time, times, numerics, "semiclassical spin")

    populations = solution.y[2 * n * n:].T
    bound = 1.0 + numerics.spin_range_tolerance
    outside = np.argwhere(np.abs(populations) > bound)
    if outside.size:
        step, site = outside[0]
        raise StateOutOfRange(
            f"population of site {site} reached {populations[step, site]:.6g} at t = {times[step]:.6g}",
            site=int(site),
            value=float(populations[step, site]),
            time=float(times[step]),
        )

    rate = np.array([-number_rate(unpack(y)[0]) for y in solution.y.T])
    return EmissionRecord(
        times=times,
        n_total=np.sum(1.0 + populations, axis=1) / 2.0,
        rate=rate,
        n_atoms=state.n_atoms,
        n_sites=n,
        gamma0=m.diagonal_rate,
        method=f"semiclassical_{closure}",
        kind=SPIN,
        phase=state.phase,
        diagnostics={"rhs_evaluations": int(solution.nfev), "closure": closure, "dispersive": dispersive},
    )


def initial_rate_slope(m: CouplingMatrix) -> SlopeReport:
    """dR/dt at t = 0 from a fully inverted lattice: −4N_sitesΓ₀² + 4Σ_{j≠l}|γ_jl|².

    The sum runs over ordered pairs and ``normalized`` divides by 4N_sitesΓ₀², so
    it is −1 for independent emitters and N_sites − 2 as ξ → ∞ (+25 at M = 3).
    """
    gamma0 = m.diagonal_rate
    off_diagonal = np.abs(m.gamma) ** 2
    np.fill_diagonal(off_diagonal, 0.0)
    independent = 4.0 * m.size * gamma0 ** 2
    slope = -independent + 4.0 * float(off_diagonal.sum())
    return SlopeReport(slope=slope, normalized=slope / independent, superradiant=slope > 0)


def decay_spectrum(m: CouplingMatrix) -> DecayModeBasis:
    """Collective decay rates γ̄_p, descending, and the orthogonal modes S"""
    gamma = np.asarray(m.gamma)
    if np.iscomplexobj(gamma):
        if np.max(np.abs(gamma.imag)) > 1e-12 * m.diagonal_rate:
            raise WrongRegime("decay modes are real only for k_L = 0", regime="laser_wavevector")
        gamma = gamma.real
    rates, vectors = np.linalg.eigh(gamma)
    order = np.argsort(rates)[::-1]
    return DecayModeBasis(rates=rates[order], modes=vectors[:, order].T, gamma0=m.diagonal_rate)


def spectral_number(basis: DecayModeBasis, state: CoherenceState, times: Sequence[float]) -> np.ndarray:
    """n_T(t) = Σ_p ⟨c†_p c_p(0)⟩ exp(−2γ̄_p t), exact when Λ = 0"""
    times = np.asarray(times, dtype=float)
    occupations = basis.mode_occupations(state)
    return np.exp(-2.0 * np.outer(times, basis.rates)) @ occupations


def emission_time_grid(
    rates: Sequence[float],
    t_max: Optional[float] = None,
    n_points: int = 400,
) -> np.ndarray:
    """Geometric plus linear grid resolving both the fastest burst and the slowest tail"""
    rates = np.asarray(rates, dtype=float)
    fastest = float(rates.max())
    if fastest <= 0:
        raise InvalidParams("at least one decay rate must be positive", field="rates")
    if t_max is None:
        slow = rates[rates > 1e-3 * fastest]
        t_max = 5.0 / float(slow.min())
    t_min = min(1e-3 / fastest, t_max / n_points)
    geometric = np.geomspace(t_min, t_max, n_points // 2)
    linear = np.linspace(0.0, t_max, n_points - n_points // 2)
    grid = np.unique(np.concatenate([[0.0], geometric, linear]))
    return grid[grid <= t_max]


def evaporation_time(record: EmissionRecord, fraction: float = math.exp(-1.0)) -> Optional[float]:
    """First time n_T falls to ``fraction``·N, linearly interpolated; None if never"""
    target = fraction * record.n_atoms
    below = np.nonzero(record.n_total <= target)[0]
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(record.times[0])
    t0, t1 = record.times[i - 1], record.times[i]
    n0, n1 = record.n_total[i - 1], record.n_total[i]
    return float(t0 + (n0 - target) * (t1 - t0) / (n0 - n1))


def steady_remaining(record: EmissionRecord, settle_tolerance: float = 1e-3) -> float:
    """Atoms left at the end of the run"""
    remaining = float(record.n_total[-1])
    # what would still leave over one more run length at the final rate
    pending = float(record.rate[-1]) * float(record.times[-1] - record.times[0])
    if pending > settle_tolerance * record.n_atoms:
        logger.warning(
            "trapped number has not settled",
            extra={"remaining": remaining, "pending": pending, "method": record.method},
        )
    return remaining
