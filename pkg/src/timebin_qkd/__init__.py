"""Simulator for unidirectional time-bin single-photon interference links:
faint-pulse source, cascaded asymmetric Mach-Zehnder interferometers, fiber,
balanced gated APDs and a BB84 layer on top."""

__version__ = "0.1.0"

from .channel import FiberParams, fiber_transmit
from .config import DriftParams, ScenarioConfig, load_config, parse_config, render_config
from .detection import ApdParams, ClickOutcome, ClockParams, click_probability
from .errors import (CapacityError, ConfigError, FringeFitError, InvalidParameterError,
                     UndefinedQberError)
from .experiments import (analytic_click_probability, analytic_visibility, calibrate_drift,
                          estimate_visibility, ideal_config, run_bb84_session,
                          run_distance_sweep, run_fringe_scan, visibility_ceiling)
from .optics import AmzParams, SourceParams, TimeBinState, apply_amz, source_pulse_pair
from .protocol import Basis, qber_from_visibility
