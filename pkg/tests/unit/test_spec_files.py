"""
Tests for experiment spec parsing
"""
import math
import textwrap

import pytest

from emission.experiments import load_spec, spec_from_dict, validate_spec, ExperimentSpec
from emission.params import derive_scales
from utils.errors import ConfigError, InvalidParams

GOOD = """
# boson run
[physical]
rabi = 0.01
trap = 1.0
detuning = 0.0104
lattice_spacing = 10.0
sites_per_axis = 3
xi = 0.5

[numerics]
ode_rtol = 1e-9
t_max = 2.0

[experiment]
name = "boson_superradiance"
sweep_parameter = "xi"
sweep_values = [0.01, 1.0]
phases = ["mott"]
n_atoms = 27
output_prefix = "probe"
"""


def write(tmp_path, text, name="spec.toml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text), encoding="utf-8")
    return path


class TestLoadSpec:
    """Well-formed spec files"""

    def test_fields(self, tmp_path):
        spec = load_spec(write(tmp_path, GOOD))
        assert isinstance(spec, ExperimentSpec)
        assert spec.experiment == "boson_superradiance"
        assert spec.sweep.parameter == "xi"
        assert spec.sweep.values == (0.01, 1.0)
        assert spec.phases == ("mott",)
        assert spec.numerics.ode_rtol == 1e-9
        assert spec.t_max == 2.0
        assert spec.output_prefix == "probe"

    def test_point_params_resolve_xi(self, tmp_path):
        spec = load_spec(write(tmp_path, GOOD))
        assert derive_scales(spec.point_params(1.0)).xi == pytest.approx(1.0)
        assert derive_scales(spec.point_params(None)).xi == pytest.approx(0.5)

    def test_matched_laser(self):
        spec = spec_from_dict({
            "physical": {"rabi": 0.01, "trap": 1.0, "detuning": 0.0104, "lattice_spacing": 10.0, "sites_per_axis": 4,
                         "xi": 0.5, "laser_matched": True, "laser_direction": [0.0, 0.0, 2.0]},
            "experiment": {"name": "directional"},
        })
        p = spec.point_params()
        s = derive_scales(p)
        assert p.laser_wavevector[2] == pytest.approx(s.k0)
        assert math.hypot(p.laser_wavevector[0], p.laser_wavevector[1]) == 0.0

    def test_integer_sweep(self):
        spec = spec_from_dict({
            "physical": {"rabi": 0.01, "trap": 1.0, "detuning": 0.0104, "lattice_spacing": 10.0},
            "experiment": {"name": "coupling_map", "sweep_parameter": "sites_per_axis", "sweep_values": [2, 3]},
        })
        assert spec.point_params(3.0).sites_per_axis == 3
        with pytest.raises(InvalidParams):
            spec.point_params(2.5)


class TestSpecErrors:
    """Line-precise configuration errors"""

    def test_unknown_key(self, tmp_path):
        path = write(tmp_path, GOOD.replace("rabi = 0.01", "rabbi = 0.01"))
        with pytest.raises(ConfigError) as info:
            load_spec(path)
        assert info.value.line == 4
        assert info.value.key == "rabbi"
        assert info.value.message.startswith(f"{path}:4: [physical] rabbi: ")

    def test_syntax_error_line(self, tmp_path):
        path = write(tmp_path, GOOD.replace("trap = 1.0", "trap = = 1.0"))
        with pytest.raises(ConfigError) as info:
            load_spec(path)
        assert info.value.line == 5

    def test_unknown_sweep_key(self, tmp_path):
        path = write(tmp_path, GOOD.replace('sweep_parameter = "xi"', 'sweep_parameter = "colour"'))
        with pytest.raises(ConfigError) as info:
            load_spec(path)
        assert info.value.section == "experiment"
        assert info.value.key == "sweep_parameter"

    def test_sweep_value_violates_invariant(self, tmp_path):
        path = write(tmp_path, GOOD.replace("sweep_values = [0.01, 1.0]", "sweep_values = [0.01, -1.0]"))
        with pytest.raises(ConfigError) as info:
            load_spec(path)
        assert info.value.key == "sweep_values"
        assert "-1.0" in info.value.message

    def test_invalid_physical_value(self, tmp_path):
        path = write(tmp_path, GOOD.replace("trap = 1.0", "trap = -1.0"))
        with pytest.raises(ConfigError) as info:
            load_spec(path)
        assert info.value.key == "trap"
        assert info.value.line == 5

    def test_wrong_type(self, tmp_path):
        path = write(tmp_path, GOOD.replace("n_atoms = 27", 'n_atoms = "many"'))
        with pytest.raises(ConfigError) as info:
            load_spec(path)
        assert info.value.key == "n_atoms"

    def test_numerics_validation(self, tmp_path):
        path = write(tmp_path, GOOD.replace("ode_rtol = 1e-9", 'spin_closure = "exact"'))
        with pytest.raises(ConfigError) as info:
            load_spec(path)
        assert info.value.key == "spin_closure"

    def test_unknown_section(self, tmp_path):
        path = write(tmp_path, GOOD + "\n[plotting]\ncolour = 1\n")
        with pytest.raises(ConfigError) as info:
            load_spec(path)
        assert info.value.section == "plotting"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_spec(tmp_path / "absent.toml")

    def test_directional_needs_matched_laser(self):
        with pytest.raises(ConfigError):
            spec_from_dict({
                "physical": {"rabi": 0.01, "trap": 1.0, "detuning": 0.0104, "lattice_spacing": 10.0},
                "experiment": {"name": "directional"},
            })

    def test_kind_must_match_experiment(self):
        with pytest.raises(ConfigError):
            spec_from_dict({
                "physical": {"rabi": 0.01, "trap": 1.0, "detuning": 0.0104},
                "experiment": {"name": "hardcore_superradiance", "kind": "boson"},
            })


class TestValidateSpec:
    """Diagnostics without running"""

    def test_clean(self, tmp_path):
        report = validate_spec(write(tmp_path, GOOD))
        assert report.ok

    def test_first_band_warning(self, tmp_path):
        text = GOOD.replace("rabi = 0.01", "rabi = 1.0").replace("detuning = 0.0104", "detuning = 4.01")
        report = validate_spec(write(tmp_path, text))
        assert report.ok
        assert any("first-band condition violated" in w for w in report.warnings)

    def test_errors_reported(self, tmp_path):
        report = validate_spec(write(tmp_path, GOOD.replace('"xi"', '"colour"')))
        assert not report.ok
        assert "colour" in report.errors[0]
