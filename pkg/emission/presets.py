"""
Figure-reproduction presets.

Pinned: d₀/X₀ = 10, k_L = 0, M³ = 27 and the ξ lists. Everything else is a
representative choice, and every defaulted numeric ends up in the run
manifest.
"""
from typing import Any, Callable, Dict, List

from emission.experiments import ExperimentSpec, spec_from_dict
from utils.errors import UnknownPreset

# Δ̃ > 0 with Ω/ω₀ = 0.01; `xi` re-solves the detuning per sweep point
_LATTICE = {"rabi": 0.01, "trap": 1.0, "detuning": 0.0104, "lattice_spacing": 10.0}


def _fig2() -> Dict[str, Any]:
    return {
        "physical": {"rabi": 0.05, "trap": 1.0, "detuning": 0.0},
        "experiment": {
            "name": "steady_state_scan",
            "sweep_parameter": "rabi",
            "sweep_values": [0.02, 0.05, 0.1],
            "detuning_range": [-0.05, 0.1],
            "scan_points": 150,
            "output_prefix": "fig2",
        },
    }


def _fig2_traces() -> Dict[str, Any]:
    # Ω/ω₀ = 0.05 puts the transition at Δ = 0.01 and πα² ≈ 1.6e-4
    return {
        "physical": {"rabi": 0.05, "trap": 1.0, "detuning": 0.005},
        "numerics": {"t_max": 20.0, "time_points": 200},
        "experiment": {
            "name": "single_site_trace",
            "sweep_parameter": "detuning",
            "sweep_values": [0.005, 0.0101, 0.02],
            "methods": ["analytic"],
            "output_prefix": "fig2_traces",
        },
    }


def _fig3() -> Dict[str, Any]:
    return {
        "physical": dict(_LATTICE, xi=1.0),
        "experiment": {
            "name": "coupling_map",
            "sweep_parameter": "xi",
            "sweep_values": [0.1, 0.5, 1.0, 2.0],
            "max_separation": 5.0,
            "output_prefix": "fig3",
        },
    }


def _fig4() -> Dict[str, Any]:
    return {
        "physical": dict(_LATTICE, sites_per_axis=3),
        "numerics": {"t_max": 0.5, "time_points": 201},
        "experiment": {
            "name": "hardcore_superradiance",
            "sweep_parameter": "xi",
            "sweep_values": [0.01, 0.5, 1.0, 10.0],
            "slope_xi": [0.01, 100.0, 60],
            "slope_sites": [2, 3, 4, 5],
            "output_prefix": "fig4",
        },
    }


def _fig5() -> Dict[str, Any]:
    return {
        "physical": dict(_LATTICE, sites_per_axis=3),
        "experiment": {
            "name": "boson_superradiance",
            "sweep_parameter": "xi",
            "sweep_values": [0.01, 1.0, 100.0],
            "phases": ["superfluid", "mott"],
            "n_atoms": 27,
            "output_prefix": "fig5",
        },
    }


def _directional_demo() -> Dict[str, Any]:
    return {
        "physical": dict(_LATTICE, sites_per_axis=10, xi=0.5, laser_matched=True, laser_direction=[0.0, 0.0, 1.0]),
        "experiment": {"name": "directional", "output_prefix": "directional_demo"},
    }


PRESETS: Dict[str, Callable[[], Dict[str, Any]]] = {
    "fig2": _fig2,
    "fig2_traces": _fig2_traces,
    "fig3": _fig3,
    "fig4": _fig4,
    "fig5": _fig5,
    "directional_demo": _directional_demo,
}


def preset_names() -> List[str]:
    return sorted(PRESETS)


def preset_data(name: str) -> Dict[str, Any]:
    """Raw spec dictionary of a preset, in spec-file layout"""
    try:
        return PRESETS[name]()
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}", available=preset_names()) from None


def preset(name: str) -> ExperimentSpec:
    """Fully populated spec of a named preset"""
    return spec_from_dict(preset_data(name), source=f"preset:{name}")
