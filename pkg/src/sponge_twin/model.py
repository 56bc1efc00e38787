"""Core domain types for the SPONGE digital twin.

Units are SI throughout, with the one conventional exception that pressures
are gauge pressures in bar (atmosphere = 0 bar) and pneumatic conductances
are volumetric flow per bar. Angles are radians internally; degrees appear
only at the CLI/CSV boundary.

Two actuator variants exist:

* semi-modular: external proportional valves, one tube pair per actuator,
  cables and tubes routed through the whole body.
* modular: two integrated 3/2-way binary microvalves per actuator, a single
  shared supply line and a serial data bus.

The bellows spring/damping coefficients and the pneumatic volumes are lumped
model parameters calibrated against qualitative behaviour, not measured
quantities; see the README before treating them as hardware data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

__all__ = [
    "Variant",
    "BellowsKind",
    "JointAxis",
    "BaseOrientation",
    "BellowsSpec",
    "ProportionalValve",
    "BinaryValve",
    "ActuatorSpec",
    "SupplySpec",
    "RobotConfig",
    "RobotState",
    "PiGains",
    "Violation",
    "ConfigurationError",
    "preset",
    "default_supply",
    "leaky_supply",
    "default_gains",
    "initial_state",
    "validate",
    "delta_p",
    "quantize",
    "P_REF",
]

# Reference pressure [bar] of the lumped isothermal capacitance model:
# d(p)/dt = q * P_REF / V for a volume V fed with volumetric flow q.
P_REF = 1.0

# Joint range is symmetric; the total range is twice this value [rad].
DEFAULT_MAX_ANGLE = math.radians(18.5)

# Lumped bellows coefficients, identical for both variants. k0 has to beat
# the worst-case gravity curvature of a vertical 3-stack of modular
# actuators (~0.68 N*m/rad at the base joint), otherwise no PI position
# loop can balance the robot through the valve lag.
BELLOWS_SPRING_RATE = 0.7  # k0 [N*m/rad]
BELLOWS_SPRING_RATE_PER_BAR = 0.5  # k1 [N*m/(rad*bar)]
BELLOWS_DAMPING = 0.05  # c [N*m*s/rad]

# Lumped pneumatic volumes [m^3]: bellows chamber plus its short feed.
SEMI_MODULAR_BELLOWS_VOLUME = 3.0e-5
MODULAR_BELLOWS_VOLUME = 2.0e-5

# Binary-valve sizing rule: the conductance fills an empty modular bellows
# to 95 % of max working pressure in this time at 1.0 bar supply.
VALVE_FILL_TIME = 0.15  # [s]
VALVE_FILL_FRACTION = 0.95
VALVE_FILL_SUPPLY = 1.0  # [bar]

ENCODER_RESOLUTION = math.radians(0.09)  # Hall encoder step [rad]


class Variant(Enum):
    SEMI_MODULAR = "semimodular"
    MODULAR = "modular"


class BellowsKind(Enum):
    PRINTED = "printed"
    CAST = "cast"


class JointAxis(Enum):
    """Joint axis orientation relative to the previous actuator."""

    ALIGNED = "aligned"
    ALTERNATING_ORTHOGONAL = "alternating"


class BaseOrientation(Enum):
    VERTICAL_UP = "vertical_up"
    HORIZONTAL = "horizontal"


class ConfigurationError(ValueError):
    """Raised for configurations that cannot be built at all."""


@dataclass(frozen=True)
class BellowsSpec:
    """One soft bellows chamber.

    torque_gain maps the antagonistic pressure difference to joint torque;
    spring_rate / spring_rate_per_bar form the pressure-dependent restoring
    spring k(p_mean) = spring_rate + spring_rate_per_bar * p_mean.
    fatigue_life counts 20 s load cycles to failure and may be fractional
    (failure mid-cycle).
    """

    kind: BellowsKind
    max_pressure: float  # p_max [bar]
    torque_gain: float  # [N*m/bar]
    spring_rate: float  # [N*m/rad]
    spring_rate_per_bar: float  # [N*m/(rad*bar)]
    damping: float  # [N*m*s/rad]
    volume: float  # [m^3]
    fatigue_life: float  # [cycles]


@dataclass(frozen=True)
class ProportionalValve:
    """External proportional valve with integrated pressure control.

    Modelled as a first-order lag towards the (quantized) commanded
    pressure plus a transport dead time that grows with the actuator's
    position in the stack (tube length grows per stage).
    """

    time_constant: float = 0.05  # [s]
    resolution: float = 0.005  # command quantization [bar]
    dead_time_per_stage: float = 0.01  # [s] per actuator index


@dataclass(frozen=True)
class BinaryValve:
    """Integrated 3/2-way solenoid microvalve.

    Open: supply -> bellows through a linear conductance. Closed: bellows
    vents to atmosphere through the same conductance. switching_life is the
    manufacturer-rated cycle count; degradation_threshold is where first
    internal leakages were observed.
    """

    conductance: float  # G_v [m^3/(s*bar)]
    pwm_frequency: float = 100.0  # [Hz]
    switching_life: float = 5.0e8  # [cycles]
    degradation_threshold: float = 1.0e8  # [cycles]


@dataclass(frozen=True)
class ActuatorSpec:
    """Geometry, mass and pneumatics of one actuator."""

    variant: Variant
    diameter: float  # [m]
    height: float  # [m]
    mass: float  # [kg]
    max_angle: float  # joint hard stop [rad], half of the total range
    bellows: BellowsSpec
    valve: ProportionalValve | BinaryValve
    joint_axis: JointAxis = JointAxis.ALIGNED


@dataclass(frozen=True)
class SupplySpec:
    """Central pressure supply and line.

    The source is a regulated flow: q_src = min(max_source_flow,
    (source_pressure - p_s) / regulation_tau * line_volume / P_REF).
    leak_conductance = 0 models the final airtight design; a positive value
    reproduces the leaky early design iteration.
    """

    source_pressure: float = 1.0  # commanded supply pressure [bar]
    max_source_flow: float = 1.0e-3  # [m^3/s]
    leak_conductance: float = 0.0  # [m^3/(s*bar)]
    line_volume: float = 1.0e-4  # [m^3]
    regulation_tau: float = 0.02  # [s]


@dataclass(frozen=True)
class PiGains:
    """Per-joint PI controller configuration.

    Output units are bar of pressure difference (semi-modular) or duty
    deviation from neutral (modular). The integrator is clamped to
    [integrator_min, integrator_max] and additionally frozen while the
    output saturates in the direction the error keeps pushing.
    """

    kp: float
    ki: float
    out_min: float
    out_max: float
    integrator_min: float
    integrator_max: float


@dataclass(frozen=True)
class RobotConfig:
    """A robot: n identical (by default) actuators on a common supply."""

    n: int
    actuators: tuple[ActuatorSpec, ...]
    supply: SupplySpec
    base_orientation: BaseOrientation = BaseOrientation.VERTICAL_UP
    dt: float = 0.001  # simulation/control step [s], 1 kHz test bench


@dataclass
class RobotState:
    """Full mutable simulation state.

    Bellows pressures are ordered [p11, p12, p21, p22, ...]: two entries
    per joint, first the positive-direction chamber. The commanded side is
    u (binary valve states, modular) or p_d (desired pressures,
    semi-modular); both arrays always exist, only the variant's one is
    driven.
    """

    t: float
    q: np.ndarray  # [rad], shape (n,)
    qdot: np.ndarray  # [rad/s], shape (n,)
    p: np.ndarray  # [bar], shape (2n,)
    p_s: float  # supply pressure [bar]
    u: np.ndarray  # binary valve states {0,1}, shape (2n,)
    p_d: np.ndarray  # desired bellows pressures [bar], shape (2n,)
    integ: np.ndarray  # PI integrator states, shape (n,)
    switch_count: np.ndarray  # cumulative valve transitions, shape (2n,)

    def copy(self) -> "RobotState":
        return RobotState(
            t=self.t,
            q=self.q.copy(),
            qdot=self.qdot.copy(),
            p=self.p.copy(),
            p_s=self.p_s,
            u=self.u.copy(),
            p_d=self.p_d.copy(),
            integ=self.integ.copy(),
            switch_count=self.switch_count.copy(),
        )


@dataclass(frozen=True)
class Violation:
    """One failed configuration rule (diagnostic, not an exception)."""

    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


# Stock working-pressure thresholds [bar] per (variant, bellows kind).
_MAX_PRESSURE = {
    (Variant.SEMI_MODULAR, BellowsKind.PRINTED): 0.35,
    (Variant.SEMI_MODULAR, BellowsKind.CAST): 0.5,
    (Variant.MODULAR, BellowsKind.PRINTED): 0.3,
    (Variant.MODULAR, BellowsKind.CAST): 0.3,
}

# Fatigue lives [cycles of 10 s load + 10 s vent], fractional = failure
# mid-cycle. Derived from measured lifetimes: 474 s, 72 h 36 min, 902 s,
# 630000 s at 20 s per cycle.
_FATIGUE_LIFE = {
    (Variant.SEMI_MODULAR, BellowsKind.PRINTED): 23.7,
    (Variant.SEMI_MODULAR, BellowsKind.CAST): 13068.0,
    (Variant.MODULAR, BellowsKind.PRINTED): 45.1,
    (Variant.MODULAR, BellowsKind.CAST): 31500.0,
}

_DIMENSIONS = {
    # variant: (diameter [m], height [m], mass [kg])
    Variant.SEMI_MODULAR: (0.082, 0.052, 0.150),
    Variant.MODULAR: (0.066, 0.094, 0.163),
}


def torque_gain_for(max_pressure: float, max_angle: float = DEFAULT_MAX_ANGLE) -> float:
    """Torque gain fixed by the full-range calibration identity.

    At the hard stop the actuation torque of a fully pressurized bellows
    pair (p_max, 0) balances the spring exactly:
    torque_gain * p_max = (k0 + k1 * p_max / 2) * max_angle.
    """
    spring = BELLOWS_SPRING_RATE + BELLOWS_SPRING_RATE_PER_BAR * max_pressure / 2.0
    return spring * max_angle / max_pressure


def binary_valve_conductance(volume: float, max_pressure: float) -> float:
    """Conductance sized by the fill-time rule (exponential fill law).

    Starting from 0 bar against a VALVE_FILL_SUPPLY source, the bellows
    reaches VALVE_FILL_FRACTION * max_pressure after VALVE_FILL_TIME:
    G_v = -V * ln(1 - f*p_max/p_supply) / (t_fill * P_REF).
    """
    frac = VALVE_FILL_FRACTION * max_pressure / VALVE_FILL_SUPPLY
    if not 0.0 < frac < 1.0:
        raise ConfigurationError(
            f"fill fraction {frac:.3f} outside (0, 1); cannot size valve conductance"
        )
    return -volume * math.log(1.0 - frac) / (VALVE_FILL_TIME * P_REF)


def preset(variant: Variant, bellows_kind: BellowsKind) -> ActuatorSpec:
    """Build one of the four stock actuator presets.

    Raises ConfigurationError for combinations outside the stock matrix.
    """
    key = (variant, bellows_kind)
    if key not in _MAX_PRESSURE:
        raise ConfigurationError(f"unknown actuator preset {variant!r}/{bellows_kind!r}")
    diameter, height, mass = _DIMENSIONS[variant]
    p_max = _MAX_PRESSURE[key]
    volume = (
        SEMI_MODULAR_BELLOWS_VOLUME
        if variant is Variant.SEMI_MODULAR
        else MODULAR_BELLOWS_VOLUME
    )
    bellows = BellowsSpec(
        kind=bellows_kind,
        max_pressure=p_max,
        torque_gain=torque_gain_for(p_max),
        spring_rate=BELLOWS_SPRING_RATE,
        spring_rate_per_bar=BELLOWS_SPRING_RATE_PER_BAR,
        damping=BELLOWS_DAMPING,
        volume=volume,
        fatigue_life=_FATIGUE_LIFE[key],
    )
    valve: ProportionalValve | BinaryValve
    if variant is Variant.SEMI_MODULAR:
        valve = ProportionalValve()
    else:
        valve = BinaryValve(conductance=binary_valve_conductance(volume, p_max))
    return ActuatorSpec(
        variant=variant,
        diameter=diameter,
        height=height,
        mass=mass,
        max_angle=DEFAULT_MAX_ANGLE,
        bellows=bellows,
        valve=valve,
    )


def default_supply(variant: Variant, max_pressure: float) -> SupplySpec:
    """Stock supply for a variant.

    The modular robot runs its line at the bellows working pressure, which
    makes the PWM duty map linearly onto steady-state pressure and caps the
    bellows at p_max by construction. The semi-modular bench regulator sits
    well above the valve commands.
    """
    if variant is Variant.MODULAR:
        return SupplySpec(source_pressure=max_pressure)
    return SupplySpec(source_pressure=1.0)


def leaky_supply(plateau: float = 0.3) -> SupplySpec:
    """Early design iteration: frame leakage limits the line pressure.

    Source flow saturates while the leak grows with pressure, so the line
    plateaus at max_source_flow / leak_conductance regardless of command.
    """
    leak = 1.0e-4
    return SupplySpec(
        source_pressure=1.0,
        max_source_flow=plateau * leak,
        leak_conductance=leak,
    )


def default_gains(variant: Variant, max_pressure: float, d_stiff: float = 1.0) -> PiGains:
    """Manually tuned stock PI gains per architecture.

    Semi-modular output is a desired pressure difference clamped to the
    physically meaningful +-p_max; modular output is a duty deviation from
    the neutral d_stiff/2, clamped so the final duty stays in [0, 1].
    """
    if variant is Variant.SEMI_MODULAR:
        lim = max_pressure
        return PiGains(
            kp=0.9, ki=1.8, out_min=-lim, out_max=lim, integrator_min=-lim, integrator_max=lim
        )
    lim = min(d_stiff, 2.0 - d_stiff) / 2.0 if 0.0 < d_stiff < 2.0 else 0.5
    return PiGains(
        kp=1.0, ki=1.0, out_min=-lim, out_max=lim, integrator_min=-lim, integrator_max=lim
    )


def homogeneous_robot(
    variant: Variant,
    bellows_kind: BellowsKind,
    n: int = 3,
    base_orientation: BaseOrientation = BaseOrientation.VERTICAL_UP,
    dt: float = 0.001,
) -> RobotConfig:
    """Convenience constructor: n copies of a stock preset."""
    act = preset(variant, bellows_kind)
    supply = default_supply(variant, act.bellows.max_pressure)
    return RobotConfig(
        n=n,
        actuators=(act,) * n,
        supply=supply,
        base_orientation=base_orientation,
        dt=dt,
    )


def initial_state(config: RobotConfig, p_s: float | None = None) -> RobotState:
    """Robot at rest: straight, depressurized, line pre-charged.

    Pass p_s=0.0 for experiments that start from an empty line.
    """
    n = config.n
    return RobotState(
        t=0.0,
        q=np.zeros(n),
        qdot=np.zeros(n),
        p=np.zeros(2 * n),
        p_s=config.supply.source_pressure if p_s is None else p_s,
        u=np.zeros(2 * n, dtype=np.int64),
        p_d=np.zeros(2 * n),
        integ=np.zeros(n),
        switch_count=np.zeros(2 * n, dtype=np.int64),
    )


def delta_p(p: np.ndarray) -> np.ndarray:
    """Antagonistic pressure differences [bar]: p_i1 - p_i2 per joint."""
    return p[0::2] - p[1::2]


def quantize(x: float, step: float) -> float:
    """Round to the nearest multiple of step, halves away from zero."""
    return math.copysign(math.floor(abs(x) / step + 0.5) * step, x)


def _check_positive(out: list[Violation], field_name: str, value: float) -> None:
    if not value > 0.0:
        out.append(Violation(field_name, "must be > 0"))


def validate(config: RobotConfig) -> list[Violation]:
    """Collect every violated invariant; empty list means the config is sound."""
    out: list[Violation] = []
    if config.n < 1:
        out.append(Violation("robot.n", "must be >= 1"))
    if not config.dt > 0.0:
        out.append(Violation("sim.dt", "must be > 0"))
    if len(config.actuators) != config.n:
        out.append(Violation("robot.actuators", f"expected {config.n} specs, got {len(config.actuators)}"))

    for i, act in enumerate(config.actuators):
        tag = f"actuator[{i}]"
        _check_positive(out, f"{tag}.diameter", act.diameter)
        _check_positive(out, f"{tag}.height", act.height)
        _check_positive(out, f"{tag}.mass", act.mass)
        _check_positive(out, f"{tag}.max_angle", act.max_angle)
        b = act.bellows
        _check_positive(out, f"{tag}.bellows.max_pressure", b.max_pressure)
        _check_positive(out, f"{tag}.bellows.torque_gain", b.torque_gain)
        _check_positive(out, f"{tag}.bellows.spring_rate", b.spring_rate)
        if b.spring_rate_per_bar < 0.0:
            out.append(Violation(f"{tag}.bellows.spring_rate_per_bar", "must be >= 0"))
        _check_positive(out, f"{tag}.bellows.damping", b.damping)
        _check_positive(out, f"{tag}.bellows.volume", b.volume)
        _check_positive(out, f"{tag}.bellows.fatigue_life", b.fatigue_life)
        v = act.valve
        if act.variant is Variant.SEMI_MODULAR and not isinstance(v, ProportionalValve):
            out.append(Violation(f"{tag}.valve", "semi-modular actuators use proportional valves"))
        if act.variant is Variant.MODULAR and not isinstance(v, BinaryValve):
            out.append(Violation(f"{tag}.valve", "modular actuators use binary microvalves"))
        if isinstance(v, ProportionalValve):
            _check_positive(out, f"{tag}.valve.time_constant", v.time_constant)
            _check_positive(out, f"{tag}.valve.resolution", v.resolution)
            if v.dead_time_per_stage < 0.0:
                out.append(Violation(f"{tag}.valve.dead_time_per_stage", "must be >= 0"))
        else:
            _check_positive(out, f"{tag}.valve.conductance", v.conductance)
            _check_positive(out, f"{tag}.valve.pwm_frequency", v.pwm_frequency)
            _check_positive(out, f"{tag}.valve.switching_life", v.switching_life)
            if not 0.0 < v.degradation_threshold <= v.switching_life:
                out.append(
                    Violation(
                        f"{tag}.valve.degradation_threshold",
                        "must be in (0, switching_life]",
                    )
                )

    s = config.supply
    if s.source_pressure < 0.0:
        out.append(Violation("supply.p_source_d", "must be >= 0"))
    if s.max_source_flow < 0.0:
        out.append(Violation("supply.q_src_max", "must be >= 0"))
    if s.leak_conductance < 0.0:
        out.append(Violation("supply.g_leak", "must be >= 0"))
    _check_positive(out, "supply.line_volume", s.line_volume)
    _check_positive(out, "supply.tau_src", s.regulation_tau)
    return out


def validate_gains(gains: PiGains) -> list[Violation]:
    out: list[Violation] = []
    if gains.kp < 0.0:
        out.append(Violation("control.kp", "must be >= 0"))
    if gains.ki < 0.0:
        out.append(Violation("control.ki", "must be >= 0"))
    if not gains.out_min < gains.out_max:
        out.append(Violation("control.out", "out_min must be < out_max"))
    if not gains.integrator_min < gains.integrator_max:
        out.append(Violation("control.integrator", "clamp bounds must be ordered"))
    return out


def with_gravity_worst_case(config: RobotConfig) -> RobotConfig:
    """Planar worst-case projection for alternating-axis chains.

    Gravity analysis treats every joint as if its axis were aligned with
    the worst-case bending plane, so alternating chains reuse the aligned
    math unchanged.
    """
    acts = tuple(replace(a, joint_axis=JointAxis.ALIGNED) for a in config.actuators)
    return replace(config, actuators=acts)
