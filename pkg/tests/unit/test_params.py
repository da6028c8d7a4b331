"""
Tests for physical parameters and derived scales
"""
import logging
import math

import numpy as np
import pytest

from config import NumericsConfig
from emission.params import (
    PhysicalParams, derive_scales, classify_markovianity, with_xi, with_matched_laser, physics_warnings,
    BOUND, PURE_NON_MARKOVIAN, RADIATIVE,
)
from utils.errors import InvalidParams, CriticalDetuning

test_logger = logging.getLogger(__name__)


class TestPhysicalParams:
    """Parameter invariants"""

    def test_ground_width_defaults_to_trap_length(self):
        p = PhysicalParams(rabi=0.1, trap=4.0, detuning=0.05)
        assert p.x0 == pytest.approx(0.5)

    def test_explicit_ground_width(self):
        p = PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05, ground_width=0.1)
        assert p.x0 == 0.1

    @pytest.mark.parametrize("field_name", ["rabi", "trap", "lattice_spacing"])
    def test_non_positive_rejected(self, field_name):
        kwargs = dict(rabi=0.1, trap=1.0, detuning=0.05, lattice_spacing=1.0)
        kwargs[field_name] = 0.0
        with pytest.raises(InvalidParams) as exc_info:
            PhysicalParams(**kwargs)
        assert exc_info.value.field == field_name

    def test_bad_dimensions_rejected(self):
        with pytest.raises(InvalidParams):
            PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05, reservoir_dim=4)
        with pytest.raises(InvalidParams):
            PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05, sites_per_axis=0)

    def test_site_count_follows_lattice_dim(self):
        assert PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05, sites_per_axis=3).n_sites == 27
        assert PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05, sites_per_axis=3, lattice_dim=1).n_sites == 3


class TestDeriveScales:
    """Derived scales and region classification"""

    def setup_method(self):
        self.numerics = NumericsConfig()

    def test_reference_point(self):
        s = derive_scales(PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05), self.numerics)
        assert s.delta_tilde == pytest.approx(0.01)
        assert s.alpha_sq == pytest.approx(8e-4)
        assert s.gamma0 == pytest.approx(4e-2 * math.sqrt(2 * math.pi * 1e-2), rel=1e-12)
        assert s.gamma0 == pytest.approx(1.0027e-2, rel=1e-4)
        assert s.regime == RADIATIVE
        assert s.nu == -1j

    def test_critical_detuning_rejected(self):
        with pytest.raises(CriticalDetuning):
            derive_scales(PhysicalParams(rabi=0.1, trap=1.0, detuning=0.04), self.numerics)

    def test_three_regions(self):
        rabi, trap = 0.1, 1.0
        shift = 4 * rabi ** 2 / trap
        pi_alpha_sq = math.pi * 8 * rabi ** 4 / trap ** 3

        bound = derive_scales(PhysicalParams(rabi=rabi, trap=trap, detuning=shift - 3 * pi_alpha_sq), self.numerics)
        middle = derive_scales(PhysicalParams(rabi=rabi, trap=trap, detuning=shift + 0.5 * pi_alpha_sq), self.numerics)
        radiative = derive_scales(PhysicalParams(rabi=rabi, trap=trap, detuning=shift + 4 * pi_alpha_sq), self.numerics)

        assert bound.regime == BOUND
        assert bound.nu == 1
        assert bound.c_residue.real == pytest.approx(0.5, rel=1e-9)
        assert abs((bound.b_plus ** 2).imag) < 1e-15
        assert middle.regime == PURE_NON_MARKOVIAN
        assert middle.c_residue == 0
        assert radiative.regime == RADIATIVE
        assert radiative.c_residue == pytest.approx(2 * radiative.b_minus / (radiative.b_minus - radiative.b_plus))

    def test_roots_solve_the_quadratic(self):
        for detuning in (-0.3, 0.041, 0.05, 0.4):
            s = derive_scales(PhysicalParams(rabi=0.1, trap=1.0, detuning=detuning), self.numerics)
            root_scale = 2 * math.sqrt(math.pi) * s.alpha
            for b in (s.x_plus, s.x_minus):
                residual = b ** 2 + root_scale * b + s.delta_tilde
                assert abs(residual) <= 1e-12 * max(abs(b) ** 2, abs(s.delta_tilde))

    def test_markov_rate_matches_gamma0_far_from_threshold(self):
        s = derive_scales(PhysicalParams(rabi=0.02, trap=1.0, detuning=0.0016 + 0.01), self.numerics)
        assert s.markov_decay_rate == pytest.approx(s.gamma0, rel=2e-2)

    def test_degenerate_boundary_flagged(self):
        rabi, trap = 0.1, 1.0
        detuning = 4 * rabi ** 2 / trap + math.pi * 8 * rabi ** 4 / trap ** 3
        s = derive_scales(PhysicalParams(rabi=rabi, trap=trap, detuning=detuning), NumericsConfig(degenerate_rtol=1e-9))
        assert s.regime == RADIATIVE
        assert s.degenerate
        assert s.b_plus == pytest.approx(s.b_minus)
        assert math.isnan(s.c_residue.real)

    def test_pure_function(self):
        p = PhysicalParams(rabi=0.07, trap=1.3, detuning=-0.02)
        assert derive_scales(p, self.numerics) == derive_scales(p, self.numerics)

    def test_range_parameter(self):
        p = PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05, lattice_spacing=10.0)
        s = derive_scales(p, self.numerics)
        assert s.k0 == pytest.approx(math.sqrt(0.02))
        assert s.xi == pytest.approx(1 / (10 * math.sqrt(0.02)))

    def test_frequency_rescaling(self):
        """Scaling Δ and Ω²/ω₀ together scales Δ̃ linearly"""
        s1 = derive_scales(PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05), self.numerics)
        s2 = derive_scales(PhysicalParams(rabi=0.1 * math.sqrt(2), trap=1.0, detuning=0.1), self.numerics)
        assert s2.delta_tilde == pytest.approx(2 * s1.delta_tilde)
        assert s2.gamma0 == pytest.approx(2 * math.sqrt(2) * s1.gamma0)


class TestMarkovianity:
    """Markovianity ratio"""

    def test_reference_point_is_not_markovian(self):
        s = derive_scales(PhysicalParams(rabi=0.1, trap=1.0, detuning=0.05), NumericsConfig())
        report = classify_markovianity(s, threshold=10.0)
        assert report.ratio == pytest.approx(0.01 / (math.pi * 8e-4))
        assert report.ratio == pytest.approx(3.98, abs=0.01)
        assert not report.markovian

    def test_far_detuned_is_markovian(self):
        rabi = 0.1
        detuning = 0.04 + 100 * math.pi * 8e-4
        s = derive_scales(PhysicalParams(rabi=rabi, trap=1.0, detuning=detuning), NumericsConfig())
        report = classify_markovianity(s, threshold=10.0)
        assert report.ratio == pytest.approx(100)
        assert report.markovian


class TestHelpers:
    """Detuning and laser helpers"""

    def test_with_xi_keeps_sign(self):
        numerics = NumericsConfig()
        p = PhysicalParams(rabi=0.01, trap=1.0, detuning=-0.01, lattice_spacing=10.0)
        q = with_xi(p, 0.5)
        s = derive_scales(q, numerics)
        assert s.xi == pytest.approx(0.5)
        assert s.delta_tilde < 0

    def test_with_matched_laser(self):
        numerics = NumericsConfig()
        p = PhysicalParams(rabi=0.01, trap=1.0, detuning=0.01, lattice_spacing=10.0)
        q = with_matched_laser(p, (0.0, 0.0, 2.0), numerics)
        assert np.linalg.norm(q.laser_wavevector) == pytest.approx(derive_scales(p, numerics).k0)
        assert q.laser_wavevector[2] > 0

    def test_first_band_warning(self, caplog):
        p = PhysicalParams(rabi=1.0, trap=1.0, detuning=10.0)
        with caplog.at_level(logging.WARNING):
            warnings = physics_warnings(p, numerics=NumericsConfig())
        assert any("first-band condition violated" in w for w in warnings)
        assert "first-band condition violated" in caplog.text

    def test_laser_width_warning(self):
        p = PhysicalParams(rabi=0.01, trap=1.0, detuning=0.01, laser_wavevector=(0.5, 0.0, 0.0))
        warnings = physics_warnings(p, numerics=NumericsConfig())
        assert any("k_L·X₀" in w for w in warnings)

    def test_quiet_point(self):
        p = PhysicalParams(rabi=0.02, trap=1.0, detuning=0.0116)
        assert physics_warnings(p, numerics=NumericsConfig()) == []
