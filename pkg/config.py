"""
Configuration management for the lattice emission simulator
"""
import os
from dataclasses import dataclass, field, fields, replace
from typing import List, Optional, Tuple

from utils.errors import ConfigError


SPIN_CLOSURES = ("printed", "self_excluded")


@dataclass(frozen=True)
class NumericsConfig:
    """Tolerances, caps and grid sizes shared by every solver"""

    # single site
    quad_abs_error: float = 1e-8
    volterra_step_tolerance: float = 1e-6
    markov_threshold: float = 10.0
    first_band_ratio: float = 10.0
    kl_x0_warning: float = 0.1
    degenerate_rtol: float = 1e-12

    # couplings
    max_sites: int = 4096
    psd_clip_tolerance: float = 1e-9
    psd_fail_tolerance: float = 1e-6
    epsilon_sequence: Tuple[float, ...] = (1e-2, 1e-3, 1e-4)

    # collective
    ode_rtol: float = 1e-8
    ode_atol: float = 1e-10
    spin_range_tolerance: float = 1e-6
    spin_closure: str = "self_excluded"
    exact_max_spin_sites: int = 12
    exact_max_bosons: int = 6
    exact_max_liouville_dim: int = 3_000_000
    trace_tolerance: float = 1e-9
    positivity_tolerance: float = 1e-8

    # directional
    grid_theta_nodes: int = 256
    grid_phi_nodes: int = 256
    grid_peak_nodes: int = 96
    grid_peak_halfwidths: float = 3.0
    min_nodes_per_peak: int = 8
    narrow_peak_warning: float = 0.2
    validity_margin: float = 10.0

    time_points: int = 400
    tolerance_scale: float = 1.0

    _SCALED = (
        "quad_abs_error",
        "volterra_step_tolerance",
        "psd_clip_tolerance",
        "psd_fail_tolerance",
        "ode_rtol",
        "ode_atol",
        "spin_range_tolerance",
        "trace_tolerance",
        "positivity_tolerance",
    )

    def scaled(self, factor: float) -> "NumericsConfig":
        """Copy with every tolerance multiplied by ``factor``"""
        if factor <= 0:
            raise ConfigError(f"tolerance scale must be positive, got {factor}", key="tolerance_scale")
        changes = {name: getattr(self, name) * factor for name in self._SCALED}
        return replace(self, tolerance_scale=self.tolerance_scale * factor, **changes)

    def validate(self) -> List[str]:
        """Return a list of problems, empty when the numerics are usable"""
        errors = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (int, float)) and not isinstance(value, bool) and value <= 0:
                errors.append(f"{f.name} must be positive, got {value}")
        if self.spin_closure not in SPIN_CLOSURES:
            errors.append(f"spin_closure must be one of {', '.join(SPIN_CLOSURES)}, got {self.spin_closure!r}")
        if len(self.epsilon_sequence) < 3:
            errors.append("epsilon_sequence needs at least three values")
        elif any(b >= a for a, b in zip(self.epsilon_sequence, self.epsilon_sequence[1:])):
            errors.append("epsilon_sequence must be strictly decreasing")
        if self.psd_clip_tolerance > self.psd_fail_tolerance:
            errors.append("psd_clip_tolerance cannot exceed psd_fail_tolerance")
        if self.min_nodes_per_peak < 2:
            errors.append("min_nodes_per_peak must be at least 2")
        return errors

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls) if not f.name.startswith("_")]


@dataclass
class RunConfig:
    """Where results go and how many sweep points run at once"""
    output_dir: str = "results"
    threads: int = 1


@dataclass
class LoggingConfig:
    """Logging configuration"""
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file_path: Optional[str] = None
    max_bytes: int = 10 * 1024 * 1024  # 10MB
    backup_count: int = 5
    structured_logging: bool = False


@dataclass
class AppConfig:
    """Main application configuration"""
    environment: str = "development"
    debug: bool = False
    app_name: str = "lattice-emission"
    version: str = "1.0.0"

    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    run: RunConfig = field(default_factory=RunConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    def validate(self) -> None:
        """Validate configuration"""
        errors = list(self.numerics.validate())

        if self.run.threads < 1:
            errors.append("EMISSION_THREADS must be at least 1")
        if not self.run.output_dir:
            errors.append("EMISSION_OUTPUT_DIR cannot be empty")
        if self.logging.level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            errors.append(f"LOG_LEVEL {self.logging.level!r} is not a logging level")

        if errors:
            raise ConfigError("Configuration validation failed:\n" + "\n".join(f"- {err}" for err in errors))

    @classmethod
    def from_env(cls) -> "AppConfig":
        """Load configuration from environment variables"""
        config = cls()

        config.environment = os.getenv("ENVIRONMENT", "development")
        config.debug = os.getenv("DEBUG", "false").lower() == "true"

        # Numerics
        numerics = NumericsConfig()
        try:
            numerics = replace(
                numerics,
                max_sites=int(os.getenv("EMISSION_MAX_SITES", str(numerics.max_sites))),
                spin_closure=os.getenv("EMISSION_SPIN_CLOSURE", numerics.spin_closure),
            )
            scale = float(os.getenv("EMISSION_TOLERANCE_SCALE", "1.0"))
            config.run.threads = int(os.getenv("EMISSION_THREADS", "1"))
        except ValueError as e:
            raise ConfigError(f"Invalid numeric environment setting: {e}")
        config.numerics = numerics.scaled(scale) if scale != 1.0 else numerics

        # Run
        config.run.output_dir = os.getenv("EMISSION_OUTPUT_DIR", config.run.output_dir)

        # Logging
        config.logging.level = os.getenv("LOG_LEVEL", "INFO")
        config.logging.file_path = os.getenv("LOG_FILE_PATH")
        config.logging.structured_logging = os.getenv("STRUCTURED_LOGGING", "false").lower() == "true"

        return config


# Global configuration instance
config: Optional[AppConfig] = None


def get_config() -> AppConfig:
    """Get the global configuration instance"""
    global config
    if config is None:
        config = AppConfig.from_env()
        config.validate()
    return config


def init_config(config_override: Optional[AppConfig] = None) -> AppConfig:
    """Initialize configuration"""
    global config
    if config_override:
        config = config_override
    else:
        config = AppConfig.from_env()

    config.validate()
    return config
