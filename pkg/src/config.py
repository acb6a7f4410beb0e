"""
Configuration management for the PPSGDA simulator.
Loads run defaults from an optional .env file and provides numerical tolerances.
"""

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from dotenv import load_dotenv


def get_app_path() -> Path:
    """Get the application path, works both for dev and PyInstaller bundle."""
    if getattr(sys, 'frozen', False):
        # Running as compiled executable
        return Path(sys.executable).parent
    else:
        # Running as script
        return Path(__file__).parent.parent


# Load environment variables from .env file
_env_path = get_app_path() / ".env"
load_dotenv(_env_path)


@dataclass
class SolverDefaults:
    """Default experiment parameters (overridable from the environment)."""
    iterations: int = field(default_factory=lambda: int(os.getenv("PPSGDA_ITERATIONS", "4000")))
    trace_stride: int = field(default_factory=lambda: int(os.getenv("PPSGDA_TRACE_STRIDE", "10")))
    mu_box_upper: float = field(default_factory=lambda: float(os.getenv("PPSGDA_MU_MAX", "100.0")))  # Upper corner of every dual box M_i
    step_c: float = field(default_factory=lambda: float(os.getenv("PPSGDA_STEP_C", "15.0")))
    step_gamma: float = field(default_factory=lambda: float(os.getenv("PPSGDA_STEP_GAMMA", "0.60")))
    seed: int = field(default_factory=lambda: int(os.getenv("PPSGDA_SEED", "0")))
    output_dir: str = field(default_factory=lambda: os.getenv("PPSGDA_OUTPUT_DIR", "runs"))
    log_dir: str = field(default_factory=lambda: os.getenv("PPSGDA_LOG_DIR", "logs"))
    file_logging: bool = field(default_factory=lambda: os.getenv("PPSGDA_FILE_LOGGING", "false").lower() == "true")
    bound_samples: int = field(default_factory=lambda: int(os.getenv("PPSGDA_BOUND_SAMPLES", "2000")))  # Monte Carlo samples for gradient bounds


@dataclass
class ToleranceConfig:
    """Numerical tolerances shared by the algorithms and diagnostics."""
    power_iteration: float = 1e-12      # ||P w - w||_inf stopping rule
    power_iteration_max_steps: int = 1_000_000
    column_sum: float = 1e-12
    weight_consistency: float = 1e-10   # y_next == P y check in q_matrix
    feasibility: float = 1e-12          # projection outputs
    bisection: float = 1e-12            # lambda iteration bracket width
    mixing_floor: float = 1e-14         # residuals below are floating-point noise
    near_zero_optimum: float = 1e-9     # relative-error fallback threshold
    bound_slack: float = 1e-12          # slack on the disturbance bounds
    lyapunov_slack: float = 1e-9        # relative slack on the Lyapunov inequality


# Global config instances
solver_defaults = SolverDefaults()
tolerances = ToleranceConfig()
