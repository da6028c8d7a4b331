"""
Brute-force density-matrix evolution for small lattices.

The master equation never raises the excitation number, so a
number-diagonal start stays block diagonal: the block of
sector k is fed only by sector k+1. All blocks are stacked into one
sparse Liouvillian and exponentiated between output times.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from config import NumericsConfig
from emission.collective import BOSON, SPIN, MOTT, SUPERFLUID, EmissionRecord, _generator_matrix, _times
from emission.couplings import CouplingMatrix
from emission.params import _numerics
from utils.errors import DensityMatrixInvalid, DimensionCap, InvalidParams, UnsupportedState

logger = logging.getLogger(__name__)

# blocks larger than this are skipped by the positivity monitor
POSITIVITY_CHECK_MAX_DIM = 2000


@dataclass(frozen=True)
class Sector:
    """Occupation-number basis with a fixed number of excitations"""
    excitations: int
    states: Tuple[Tuple[int, ...], ...]
    index: Dict[Tuple[int, ...], int]

    @property
    def dim(self) -> int:
        return len(self.states)


def sector_basis(kind: str, n_sites: int, excitations: int) -> Sector:
    """All occupations with ``excitations`` quanta; at most one per site for spins"""
    if kind == SPIN:
        choices = itertools.combinations(range(n_sites), excitations)
    else:
        choices = itertools.combinations_with_replacement(range(n_sites), excitations)
    states = []
    for chosen in choices:
        occupation = [0] * n_sites
        for site in chosen:
            occupation[site] += 1
        states.append(tuple(occupation))
    states.sort(reverse=True)
    return Sector(excitations=excitations, states=tuple(states), index={s: i for i, s in enumerate(states)})


def liouville_dimension(kind: str, n_sites: int, excitations: int) -> int:
    total = 0
    for k in range(excitations + 1):
        dim = math.comb(n_sites, k) if kind == SPIN else math.comb(n_sites + k - 1, k)
        total += dim * dim
    return total


def _annihilator(upper: Sector, lower: Sector, site: int, kind: str) -> sp.csr_matrix:
    rows, cols, values = [], [], []
    for col, occupation in enumerate(upper.states):
        count = occupation[site]
        if count == 0:
            continue
        lowered = list(occupation)
        lowered[site] -= 1
        rows.append(lower.index[tuple(lowered)])
        cols.append(col)
        values.append(1.0 if kind == SPIN else math.sqrt(count))
    return sp.csr_matrix((values, (rows, cols)), shape=(lower.dim, upper.dim))


def _liouvillian(kind: str, g: np.ndarray, sectors: List[Sector]) -> sp.csr_matrix:
    """Block upper-bidiagonal generator acting on row-major vec(ρ_k), k = 0..K"""
    n = g.shape[0]
    rates, vectors = np.linalg.eigh(g + g.conj().T)
    channels = [(rate, vectors[:, p].conj()) for p, rate in enumerate(rates) if rate > 1e-14 * max(rates.max(), 1e-300)]

    blocks: List[List[Optional[sp.spmatrix]]] = [[None] * len(sectors) for _ in sectors]
    blocks[0][0] = sp.csr_matrix((1, 1), dtype=complex)
    for k in range(1, len(sectors)):
        upper, lower = sectors[k], sectors[k - 1]
        lowering = [_annihilator(upper, lower, site, kind) for site in range(n)]
        stacked = sp.vstack(lowering).tocsr()
        # K = Σ_jl Γ_jl a†_j a_l
        hopping = (stacked.T @ sp.kron(sp.csr_matrix(g), sp.identity(lower.dim)) @ stacked).tocsr()
        identity = sp.identity(upper.dim, format="csr")
        blocks[k][k] = -(sp.kron(hopping, identity) + sp.kron(identity, hopping.conj()))

        jump = sp.csr_matrix((lower.dim ** 2, upper.dim ** 2), dtype=complex)
        for rate, weights in channels:
            channel = sum(a * w for w, a in zip(weights, lowering) if w != 0)
            jump = jump + sp.kron(channel, channel.conj()) * rate
        blocks[k - 1][k] = jump
    return sp.bmat(blocks, format="csr")


def _initial_vector(kind: str, phase: str, sectors: List[Sector], n_sites: int, n_atoms: int) -> np.ndarray:
    top = sectors[-1]
    psi = np.zeros(top.dim, dtype=complex)
    if phase == MOTT:
        psi[top.index[tuple([n_atoms // n_sites] * n_sites)]] = 1.0
    else:
        # |SF⟩_N = (N!)^{-1/2} f†_0^N |0⟩ in the occupation basis
        for i, occupation in enumerate(top.states):
            multinomial = math.factorial(n_atoms) / math.prod(math.factorial(c) for c in occupation)
            psi[i] = math.sqrt(multinomial) * n_sites ** (-n_atoms / 2.0)
    vector = np.zeros(sum(s.dim ** 2 for s in sectors), dtype=complex)
    vector[-top.dim ** 2:] = np.outer(psi, psi.conj()).ravel()
    return vector


def evolve_master_exact(
    m: CouplingMatrix,
    kind: str,
    times: Sequence[float],
    phase: str = MOTT,
    n_atoms: Optional[int] = None,
    dispersive: bool = True,
    numerics: Optional[NumericsConfig] = None,
) -> EmissionRecord:
    """Exact n_T(t) from the full density matrix; trace and positivity are monitored"""
    numerics = _numerics(numerics)
    times = _times(times)
    n_sites = m.size
    n_atoms = n_sites if n_atoms is None else int(n_atoms)

    if kind == SPIN:
        if phase != MOTT:
            raise UnsupportedState(f"{phase} initial states are not supported for hard-core atoms")
        if n_atoms != n_sites:
            raise InvalidParams(f"a hard-core Mott state holds exactly {n_sites} atoms, got {n_atoms}", field="n_atoms")
        if n_sites > numerics.exact_max_spin_sites:
            raise DimensionCap(
                f"{n_sites} spin sites exceed the exact-solver cap of {numerics.exact_max_spin_sites}",
                requested=n_sites,
                cap=numerics.exact_max_spin_sites,
            )
    elif kind == BOSON:
        if phase not in (MOTT, SUPERFLUID):
            raise UnsupportedState(f"the exact solver needs a number state, got {phase}")
        if n_atoms < 1 or (phase == MOTT and n_atoms % n_sites):
            raise InvalidParams(f"cannot place {n_atoms} atoms on {n_sites} sites with uniform filling", field="n_atoms")
        if n_atoms > numerics.exact_max_bosons:
            raise DimensionCap(
                f"{n_atoms} bosons exceed the exact-solver cap of {numerics.exact_max_bosons}",
                requested=n_atoms,
                cap=numerics.exact_max_bosons,
            )
    else:
        raise InvalidParams(f"kind must be spin or boson, got {kind!r}", field="kind")

    dimension = liouville_dimension(kind, n_sites, n_atoms)
    if dimension > numerics.exact_max_liouville_dim:
        raise DimensionCap(
            f"Liouville space of dimension {dimension} exceeds {numerics.exact_max_liouville_dim}",
            requested=dimension,
            cap=numerics.exact_max_liouville_dim,
        )

    sectors = [sector_basis(kind, n_sites, k) for k in range(n_atoms + 1)]
    generator = _liouvillian(kind, _generator_matrix(m, dispersive), sectors)
    vector = _initial_vector(kind, phase, sectors, n_sites, n_atoms)
    logger.debug("exact master equation assembled", extra={"kind": kind, "sites": n_sites, "dimension": dimension})

    offsets = np.cumsum([0] + [s.dim ** 2 for s in sectors])
    diagonals = [offsets[k] + np.arange(s.dim) * (s.dim + 1) for k, s in enumerate(sectors)]
    weights = np.concatenate([np.full(s.dim, s.excitations, dtype=float) for s in sectors])
    diagonal_index = np.concatenate(diagonals)

    n_total = np.empty(times.size)
    rate = np.empty(times.size)
    trace_defect = 0.0
    lowest = np.inf
    current = 0.0
    for i, t in enumerate(times):
        if t > current:
            vector = expm_multiply(generator * (t - current), vector)
            current = t
        populations = vector[diagonal_index].real
        n_total[i] = float(weights @ populations)
        rate[i] = -float(weights @ (generator @ vector)[diagonal_index].real)
        trace_defect = max(trace_defect, abs(populations.sum() - 1.0))
        for k, s in enumerate(sectors):
            if s.dim > POSITIVITY_CHECK_MAX_DIM:
                continue
            block = vector[offsets[k]:offsets[k + 1]].reshape(s.dim, s.dim)
            lowest = min(lowest, float(np.linalg.eigvalsh(0.5 * (block + block.conj().T))[0]))

    if trace_defect > numerics.trace_tolerance:
        raise DensityMatrixInvalid(
            f"density matrix trace drifted by {trace_defect:.3g} (tolerance {numerics.trace_tolerance:g})",
            trace_defect=trace_defect,
        )
    if lowest < -numerics.positivity_tolerance:
        raise DensityMatrixInvalid(
            f"density matrix eigenvalue {lowest:.3g} below −{numerics.positivity_tolerance:g}",
            min_eigenvalue=lowest,
        )

    return EmissionRecord(
        times=times,
        n_total=n_total,
        rate=rate,
        n_atoms=n_atoms,
        n_sites=n_sites,
        gamma0=m.diagonal_rate,
        method="master_exact",
        kind=kind,
        phase=phase,
        diagnostics={"liouville_dimension": dimension, "trace_defect": trace_defect, "min_eigenvalue": lowest},
    )
