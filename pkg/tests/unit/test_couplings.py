"""
Tests for the lattice coupling matrix and its oracles
"""
import logging
import math

import numpy as np
import pytest

from config import NumericsConfig
from emission.params import PhysicalParams, derive_scales, with_xi
from emission.couplings import (
    site_coordinates, coupling_closed_form, build_coupling_matrix, effective_hamiltonian, export_hamiltonian,
    coupling_frame, coupling_summary, coupling_map, pair_correlation, time_domain_coupling,
    first_radial_integral, first_radial_closed_form, coupling_quadrature_oracle,
)
from emission.single_site import CorrelationKernel
from utils.errors import InvalidParams, WrongRegime, DimensionCap, NotPSD

test_logger = logging.getLogger(__name__)


def lattice(xi, sign=1, spacing=10.0, sites=3, rabi=0.01, **kwargs):
    base = PhysicalParams(rabi=rabi, trap=1.0, detuning=4 * rabi ** 2 + sign * 0.01, lattice_spacing=spacing,
                          sites_per_axis=sites, **kwargs)
    return with_xi(base, xi)


class TestSiteCoordinates:
    """Flattened site ordering"""

    def test_flattened_order(self):
        coords = site_coordinates(3)
        assert coords.shape == (27, 3)
        assert list(coords[1]) == [1, 0, 0]
        assert list(coords[3]) == [0, 1, 0]
        assert list(coords[9]) == [0, 0, 1]

    def test_index_formula(self):
        coords = site_coordinates(4)
        index = coords[:, 0] + 4 * coords[:, 1] + 16 * coords[:, 2]
        assert np.array_equal(index, np.arange(64))

    def test_reduced_lattice(self):
        coords = site_coordinates(5, lattice_dim=1)
        assert coords.shape == (5, 3)
        assert np.all(coords[:, 1:] == 0)


class TestClosedForm:
    """Closed-form Markov couplings"""

    def setup_method(self):
        self.numerics = NumericsConfig()

    def test_sinc_zero(self):
        p = lattice(1 / math.pi)
        s = derive_scales(p, self.numerics)
        assert s.xi == pytest.approx(1 / math.pi)
        assert abs(coupling_closed_form(p, s, (1, 0, 0)).real) < 1e-12 * s.gamma0

    def test_reference_values(self):
        p = lattice(1.0)
        s = derive_scales(p, self.numerics)
        value = coupling_closed_form(p, s, (1, 0, 0))
        assert value.real == pytest.approx(s.gamma0 * math.sin(1.0), rel=1e-12)
        assert value.real / s.gamma0 == pytest.approx(0.8415, abs=1e-4)
        assert value.imag == pytest.approx(s.gamma0 * (1 - math.cos(1.0)), rel=1e-9)

    def test_yukawa_form(self):
        p = lattice(0.5, sign=-1)
        s = derive_scales(p, self.numerics)
        for distance in (2, 3, 4):
            value = coupling_closed_form(p, s, (distance, 0, 0))
            expected = s.gamma0 * s.xi / distance * math.exp(-distance / s.xi)
            assert abs(value) == pytest.approx(expected, rel=1e-9)
            assert value.imag < 0

    def test_sinc_property_on_random_offsets(self):
        p = lattice(0.7)
        s = derive_scales(p, self.numerics)
        rng = np.random.default_rng(7)
        offsets = rng.integers(-6, 7, size=(1000, 3))
        offsets = offsets[np.any(offsets != 0, axis=1)]
        for dj in offsets:
            distance = np.linalg.norm(dj)
            value = coupling_closed_form(p, s, dj)
            assert value.real == pytest.approx(s.gamma0 * np.sinc(distance / s.xi / np.pi), abs=1e-12 * s.gamma0)

    def test_laser_phase(self):
        p = lattice(1.0, laser_wavevector=(0.01, 0.0, 0.0))
        s = derive_scales(p, self.numerics)
        forward = coupling_closed_form(p, s, (1, 0, 0))
        backward = coupling_closed_form(p, s, (-1, 0, 0))
        assert forward == pytest.approx(backward * np.exp(-2j * 0.01 * p.lattice_spacing))

    def test_zero_offset_rejected(self):
        p = lattice(1.0)
        with pytest.raises(InvalidParams):
            coupling_closed_form(p, derive_scales(p, self.numerics), (0, 0, 0))


class TestCouplingMatrix:
    """Matrix assembly"""

    def setup_method(self):
        self.numerics = NumericsConfig()

    def test_short_range_is_independent(self):
        m = build_coupling_matrix(lattice(0.01, sites=3), numerics=self.numerics)
        off = ~np.eye(27, dtype=bool)
        assert np.allclose(np.diag(m.gamma), m.diagonal_rate)
        assert np.max(np.abs(m.gamma[off])) < 0.05 * m.diagonal_rate
        narrow = build_coupling_matrix(lattice(0.002, sites=3), numerics=self.numerics)
        assert coupling_summary(narrow)["range_sum"] < 0.1

    def test_long_range_is_homogeneous(self):
        m = build_coupling_matrix(lattice(100.0, sites=3), numerics=self.numerics)
        assert np.all(np.abs(m.gamma - m.diagonal_rate) <= 0.01 * m.diagonal_rate)

    def test_single_site(self):
        p = lattice(1.0, sites=1)
        m = build_coupling_matrix(p, numerics=self.numerics)
        assert m.matrix.shape == (1, 1)
        assert m.matrix[0, 0] == pytest.approx(derive_scales(p, self.numerics).gamma0)

    def test_matrix_matches_closed_form(self):
        p = lattice(0.8, sites=3)
        s = derive_scales(p, self.numerics)
        m = build_coupling_matrix(p, s, self.numerics)
        coords = site_coordinates(3)
        for j, l in [(0, 1), (4, 22), (26, 0), (13, 5)]:
            assert m.matrix[j, l] == pytest.approx(coupling_closed_form(p, s, coords[j] - coords[l]))

    def test_decay_part_is_psd_and_symmetric(self):
        m = build_coupling_matrix(lattice(2.0, sites=3), numerics=self.numerics)
        assert np.allclose(m.gamma, m.gamma.T)
        assert m.min_eigenvalue >= -1e-9 * m.diagonal_rate
        assert np.all(np.abs(m.gamma) <= m.diagonal_rate * (1 + 1e-12))

    def test_laser_phase_keeps_hermitian_decay(self):
        p = lattice(1.5, sites=2, laser_wavevector=(0.02, 0.01, 0.0))
        m = build_coupling_matrix(p, numerics=self.numerics)
        assert np.allclose(m.gamma, m.gamma.conj().T)
        assert np.allclose(m.gamma + 1j * m.lambda_, m.matrix)

    def test_reduced_lattice(self):
        p = lattice(1.0, sites=4, lattice_dim=2)
        m = build_coupling_matrix(p, numerics=self.numerics)
        assert m.size == 16
        s = derive_scales(p, self.numerics)
        assert m.matrix[0, 5] == pytest.approx(coupling_closed_form(p, s, (-1, -1, 0)))

    def test_range_grows_with_xi(self):
        sums = [coupling_summary(build_coupling_matrix(lattice(xi, sites=3), numerics=self.numerics))["range_sum"]
                for xi in (0.05, 0.2, 0.5)]
        assert sums == sorted(sums)

    def test_site_cap(self):
        with pytest.raises(DimensionCap):
            build_coupling_matrix(lattice(1.0, sites=3), numerics=NumericsConfig(max_sites=8))

    def test_negative_rates_rejected(self, mocker):
        p = lattice(1.0, sites=2)
        mocker.patch("emission.couplings.np.linalg.eigvalsh", return_value=np.array([-1.0, 1.0]))
        with pytest.raises(NotPSD):
            build_coupling_matrix(p, numerics=self.numerics)

    def test_small_negative_rates_clipped(self, mocker, caplog):
        p = lattice(1.0, sites=2)
        s = derive_scales(p, self.numerics)
        mocker.patch("emission.couplings.np.linalg.eigvalsh", return_value=np.array([-1e-8 * s.gamma0, 1.0]))
        with caplog.at_level(logging.WARNING):
            m = build_coupling_matrix(p, s, self.numerics)
        assert m.clipped
        assert "clipping" in caplog.text

    def test_exports(self):
        m = build_coupling_matrix(lattice(1.0, sites=2), numerics=self.numerics)
        frame = coupling_frame(m)
        assert list(frame.columns) == ["jx", "jy", "jz", "lx", "ly", "lz", "re_gamma", "im_gamma"]
        assert len(frame) == 64
        summary = coupling_summary(m)
        assert summary["sites"] == 8
        assert summary["max_eigenvalue"] >= summary["min_eigenvalue"]


class TestEffectiveHamiltonian:
    """Coherent hopping export"""

    def setup_method(self):
        self.numerics = NumericsConfig()

    def test_yukawa_entries(self):
        p = lattice(0.6, sign=-1, sites=3)
        s = derive_scales(p, self.numerics)
        hamiltonian = effective_hamiltonian(build_coupling_matrix(p, s, self.numerics))
        assert np.allclose(hamiltonian, hamiltonian.T)
        assert np.all(np.diag(hamiltonian) == 0)
        assert hamiltonian[0, 1] == pytest.approx(-s.gamma0 * s.xi * math.exp(-1 / s.xi), rel=1e-9)

    def test_coulomb_limit(self):
        p = lattice(200.0, sign=-1, sites=2)
        s = derive_scales(p, self.numerics)
        hamiltonian = effective_hamiltonian(build_coupling_matrix(p, s, self.numerics))
        assert hamiltonian[0, 1] == pytest.approx(-s.gamma0 * s.xi, rel=1e-2)

    def test_radiative_regime_refused(self):
        with pytest.raises(WrongRegime):
            effective_hamiltonian(build_coupling_matrix(lattice(1.0, sites=2), numerics=self.numerics))

    def test_export_labels(self):
        m = build_coupling_matrix(lattice(0.6, sign=-1, sites=2), numerics=self.numerics)
        frame = export_hamiltonian(m, "spin")
        assert len(frame) == 8 * 7
        assert set(frame["model"]) == {"spin"}
        with pytest.raises(InvalidParams):
            export_hamiltonian(m, "fermion")


class TestCouplingMap:
    """Separation profile"""

    def test_columns_and_limits(self):
        p = lattice(1.0)
        s = derive_scales(p, NumericsConfig())
        frame = coupling_map(p, s, max_separation=4.0, points=100)
        assert list(frame.columns) == ["separation", "gamma", "lambda", "xi"]
        assert frame["gamma"].iloc[0] == pytest.approx(1.0, abs=1e-3)
        assert np.all(np.abs(frame["gamma"]) <= 1 + 1e-12)


class TestPairCorrelation:
    """Two-point correlation between sites"""

    def test_zero_offset_is_local_kernel(self):
        p = lattice(1.0)
        kernel = CorrelationKernel(dimension=3, omega0=1.0, rabi=p.rabi, detuning=p.detuning - p.level_shift)
        taus = np.linspace(0, 30, 7)
        assert np.allclose(pair_correlation(p, (0, 0, 0), taus), kernel(taus))

    def test_origin_value(self):
        p = lattice(1.0, spacing=2.0, laser_wavevector=(0.1, 0.0, 0.0))
        value = pair_correlation(p, (1, 0, 0), 0.0)
        assert value == pytest.approx(p.rabi ** 2 * np.exp(-4 / (4 * p.x0 ** 2) - 0.2j))

    @pytest.mark.slow
    @pytest.mark.timeout(120)
    def test_time_domain_integral_matches_closed_form(self):
        numerics = NumericsConfig()
        p = lattice(0.5, spacing=20.0)
        s = derive_scales(p, numerics)
        for distance in (1, 2, 3):
            oracle = time_domain_coupling(p, (distance, 0, 0), numerics)
            closed = coupling_closed_form(p, s, (distance, 0, 0))
            assert abs(oracle - closed) / abs(closed) < 1e-2


class TestQuadratureOracle:
    """Momentum-space oracle"""

    def test_first_integral(self):
        for r, x0 in ((20.0, 1.0), (3.0, 0.5), (40.0, 1.0)):
            assert first_radial_integral(r, x0) == pytest.approx(first_radial_closed_form(r, x0), abs=1e-10)

    @pytest.mark.timeout(120)
    @pytest.mark.parametrize("xi", [0.5, 2.0])
    def test_matches_closed_form(self, xi):
        numerics = NumericsConfig()
        p = lattice(xi, spacing=20.0)
        s = derive_scales(p, numerics)
        for distance in (1, 2, 3):
            oracle = coupling_quadrature_oracle(p, (distance, 0, 0), numerics=numerics)
            closed = coupling_closed_form(p, s, (distance, 0, 0))
            assert abs(oracle - closed) / abs(closed) < 1e-2

    @pytest.mark.timeout(120)
    @pytest.mark.parametrize("xi", [0.5, 2.0])
    def test_residual_is_confinement_factor(self, xi):
        # the closed form drops e^{−k₀²X₀²}; nothing else separates it from the exact integral
        numerics = NumericsConfig()
        p = lattice(xi, spacing=20.0)
        s = derive_scales(p, numerics)
        confinement = math.exp(-(s.k0 * p.x0) ** 2)
        for distance in (1, 2, 3):
            oracle = coupling_quadrature_oracle(p, (distance, 0, 0), numerics=numerics)
            closed = coupling_closed_form(p, s, (distance, 0, 0))
            assert oracle / closed == pytest.approx(confinement, rel=1e-5)

    def test_bound_regime(self):
        numerics = NumericsConfig()
        p = lattice(2.0, sign=-1, spacing=20.0)
        s = derive_scales(p, numerics)
        oracle = coupling_quadrature_oracle(p, (1, 0, 0), numerics=numerics)
        closed = coupling_closed_form(p, s, (1, 0, 0))
        assert abs(oracle - closed) / abs(closed) < 1e-2

    def test_far_pairs_vanish(self):
        p = lattice(0.5, spacing=20.0)
        near = abs(coupling_quadrature_oracle(p, (1, 0, 0), epsilon=1e-6))
        far = abs(coupling_quadrature_oracle(p, (20, 0, 0), epsilon=1e-6))
        assert far < 0.1 * near

    def test_regulator_must_be_positive(self):
        with pytest.raises(InvalidParams):
            coupling_quadrature_oracle(lattice(1.0), (1, 0, 0), epsilon=0.0)
