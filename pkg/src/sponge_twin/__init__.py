"""Deterministic digital twin of the SPONGE articulated soft robots.

Simulates both actuator variants (semi-modular with external proportional
valves, modular with integrated binary microvalves), the shared pneumatic
supply, PI joint control with anti-windup, the I2C bus capacity budget and
the fatigue/wear accounting, all at the 1 kHz rate of the physical test
bench.
"""

from .model import (
    ActuatorSpec,
    BaseOrientation,
    BellowsKind,
    BellowsSpec,
    BinaryValve,
    ConfigurationError,
    JointAxis,
    PiGains,
    ProportionalValve,
    RobotConfig,
    RobotState,
    SupplySpec,
    Variant,
    Violation,
    default_gains,
    default_supply,
    homogeneous_robot,
    initial_state,
    leaky_supply,
    preset,
    validate,
)
from .configfile import TrajectoryParams, TwinConfig, build, load, loads, save, serialize
from .dynamics import ChainModel, SimulationFault, bellows_torque, encoder_read
from .control import ControlStack, PiState, pi_step, pwm_sample, split_duties, split_pressures
from .bus import BusConfig, ScheduleReport, max_targets, schedule, wire_count
from .experiments import (
    ExperimentResult,
    format_duration,
    gravity_margin,
    run_airtightness,
    run_fatigue,
    run_sweep,
    run_tracking,
    valve_wear_hours,
)

__version__ = "0.1.0"
