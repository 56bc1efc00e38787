"""Flat key-value run configuration.

Format: one ``key = value`` per line, ``#`` starts a comment, blank lines
ignored. Unknown keys are configuration errors (they are usually typos).
Canonical serialization sorts the keys and prints floats with 9 significant
digits; every float is passed through that same 9-digit grid when a config
is built, so serialize -> parse -> serialize is bit-exact and a parsed
config compares equal to the one it was written from.

The file describes a homogeneous robot (one preset for all actuators);
heterogeneous chains can be built through the API directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

from .model import (
    ActuatorSpec,
    BaseOrientation,
    BellowsKind,
    BinaryValve,
    ConfigurationError,
    JointAxis,
    PiGains,
    ProportionalValve,
    RobotConfig,
    SupplySpec,
    Variant,
    Violation,
    binary_valve_conductance,
    default_gains,
    default_supply,
    preset,
    validate,
    validate_gains,
)

__all__ = [
    "TrajectoryParams",
    "TwinConfig",
    "canon9",
    "parse_kv",
    "build",
    "loads",
    "load",
    "serialize",
    "save",
    "validate_twin",
]


def canon9(x: float) -> float:
    """Snap a float to the canonical 9-significant-digit grid."""
    return float(f"{x:.9g}")


@dataclass(frozen=True)
class TrajectoryParams:
    """Default ramp suite (synthetic stand-in, not a recorded trajectory).

    Per joint: ramp to +amplitude, hold, ramp to -amplitude, hold, ramp
    back to zero, repeating; joint i starts its pattern i*phase_s later.
    """

    amplitude_deg: float = 15.0
    rate_deg_s: float = 5.0
    hold_s: float = 5.0
    phase_s: float = 5.0
    duration_s: float = 120.0

    @property
    def period_s(self) -> float:
        return 4.0 * self.amplitude_deg / self.rate_deg_s + 2.0 * self.hold_s


@dataclass(frozen=True)
class TwinConfig:
    """Everything one experiment needs: robot, controller, trajectory."""

    robot: RobotConfig
    gains: PiGains
    p_stiff: float  # stiffness set pressure [bar], semi-modular
    d_stiff: float  # duty sum, modular
    trajectory: TrajectoryParams

    @property
    def variant(self) -> Variant:
        return self.robot.actuators[0].variant

    @property
    def bellows_kind(self) -> BellowsKind:
        return self.robot.actuators[0].bellows.kind


_ENUM_KEYS = {
    "robot.variant": Variant,
    "robot.orientation": BaseOrientation,
    "robot.joint_axis": JointAxis,
    "bellows.kind": BellowsKind,
}
_INT_KEYS = {"robot.n"}
_FLOAT_KEYS = {
    "sim.dt",
    "supply.p_source_d",
    "supply.q_src_max",
    "supply.g_leak",
    "supply.line_volume",
    "supply.tau_src",
    "control.kp",
    "control.ki",
    "control.p_stiff",
    "control.d_stiff",
    "valve.tau_pv",
    "valve.resolution",
    "valve.dead_time_per_stage",
    "valve.f_pwm",
    "valve.conductance",
    "valve.switching_life",
    "valve.degradation_threshold",
    "traj.amplitude_deg",
    "traj.rate_deg_s",
    "traj.hold_s",
    "traj.phase_s",
    "traj.duration_s",
}
ALL_KEYS = set(_ENUM_KEYS) | _INT_KEYS | _FLOAT_KEYS


def parse_kv(text: str) -> dict[str, str]:
    """Raw key -> value strings; comments stripped, duplicates rejected."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigurationError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value: str):
    if key in _ENUM_KEYS:
        enum_type = _ENUM_KEYS[key]
        for member in enum_type:
            if member.value == value:
                return member
        allowed = ", ".join(m.value for m in enum_type)
        raise ConfigurationError(f"{key}: expected one of [{allowed}], got {value!r}")
    if key in _INT_KEYS:
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigurationError(f"{key}: expected integer, got {value!r}") from exc
    try:
        return canon9(float(value))
    except ValueError as exc:
        raise ConfigurationError(f"{key}: expected number, got {value!r}") from exc


def build(values: dict[str, str] | None = None) -> TwinConfig:
    """Resolve a key-value mapping (possibly empty) into a TwinConfig."""
    values = dict(values or {})
    unknown = set(values) - ALL_KEYS
    if unknown:
        raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    coerced = {k: _coerce(k, v) if isinstance(v, str) else v for k, v in values.items()}
    for k, v in coerced.items():
        if k in _FLOAT_KEYS:
            coerced[k] = canon9(float(v))

    variant: Variant = coerced.get("robot.variant", Variant.MODULAR)
    kind: BellowsKind = coerced.get("bellows.kind", BellowsKind.PRINTED)
    n: int = coerced.get("robot.n", 3)
    orientation: BaseOrientation = coerced.get("robot.orientation", BaseOrientation.VERTICAL_UP)
    joint_axis: JointAxis = coerced.get("robot.joint_axis", JointAxis.ALIGNED)

    act = replace(preset(variant, kind), joint_axis=joint_axis)
    p_max = act.bellows.max_pressure

    def f(key: str, default: float) -> float:
        return coerced.get(key, canon9(default))

    dt = f("sim.dt", 0.001)
    base_supply = default_supply(variant, p_max)
    supply = SupplySpec(
        source_pressure=f("supply.p_source_d", base_supply.source_pressure),
        max_source_flow=f("supply.q_src_max", base_supply.max_source_flow),
        leak_conductance=f("supply.g_leak", base_supply.leak_conductance),
        line_volume=f("supply.line_volume", base_supply.line_volume),
        regulation_tau=f("supply.tau_src", base_supply.regulation_tau),
    )

    if variant is Variant.SEMI_MODULAR:
        valve: ProportionalValve | BinaryValve = ProportionalValve(
            time_constant=f("valve.tau_pv", 0.05),
            resolution=f("valve.resolution", 0.005),
            dead_time_per_stage=f("valve.dead_time_per_stage", 0.01),
        )
    else:
        life = f("valve.switching_life", 5.0e8)
        valve = BinaryValve(
            conductance=f(
                "valve.conductance", binary_valve_conductance(act.bellows.volume, p_max)
            ),
            pwm_frequency=f("valve.f_pwm", 100.0),
            switching_life=life,
            degradation_threshold=f("valve.degradation_threshold", min(1.0e8, life)),
        )
    act = replace(act, valve=valve)

    d_stiff = f("control.d_stiff", 1.0)
    stock = default_gains(variant, p_max, d_stiff)
    kp = f("control.kp", stock.kp)
    ki = f("control.ki", stock.ki)
    gains = replace(stock, kp=kp, ki=ki)
    p_stiff = f("control.p_stiff", p_max / 2.0)

    trajectory = TrajectoryParams(
        amplitude_deg=f("traj.amplitude_deg", 15.0),
        rate_deg_s=f("traj.rate_deg_s", 5.0),
        hold_s=f("traj.hold_s", 5.0),
        phase_s=f("traj.phase_s", 5.0),
        duration_s=f("traj.duration_s", 120.0),
    )

    robot = RobotConfig(
        n=n,
        actuators=(act,) * n,
        supply=supply,
        base_orientation=orientation,
        dt=dt,
    )
    return TwinConfig(
        robot=robot, gains=gains, p_stiff=p_stiff, d_stiff=d_stiff, trajectory=trajectory
    )


def loads(text: str) -> TwinConfig:
    return build(parse_kv(text))


def load(path: str | Path) -> TwinConfig:
    return loads(Path(path).read_text())


def _fmt(value) -> str:
    if isinstance(value, bool):
        raise TypeError("no boolean config keys")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value.value if hasattr(value, "value") else value)


def to_mapping(cfg: TwinConfig) -> dict[str, object]:
    """Fully resolved key-value view of a TwinConfig (every key present)."""
    act = cfg.robot.actuators[0]
    s = cfg.robot.supply
    t = cfg.trajectory
    out: dict[str, object] = {
        "robot.variant": act.variant,
        "robot.n": cfg.robot.n,
        "robot.orientation": cfg.robot.base_orientation,
        "robot.joint_axis": act.joint_axis,
        "bellows.kind": act.bellows.kind,
        "sim.dt": cfg.robot.dt,
        "supply.p_source_d": s.source_pressure,
        "supply.q_src_max": s.max_source_flow,
        "supply.g_leak": s.leak_conductance,
        "supply.line_volume": s.line_volume,
        "supply.tau_src": s.regulation_tau,
        "control.kp": cfg.gains.kp,
        "control.ki": cfg.gains.ki,
        "control.p_stiff": cfg.p_stiff,
        "control.d_stiff": cfg.d_stiff,
        "traj.amplitude_deg": t.amplitude_deg,
        "traj.rate_deg_s": t.rate_deg_s,
        "traj.hold_s": t.hold_s,
        "traj.phase_s": t.phase_s,
        "traj.duration_s": t.duration_s,
    }
    valve = act.valve
    if isinstance(valve, ProportionalValve):
        out["valve.tau_pv"] = valve.time_constant
        out["valve.resolution"] = valve.resolution
        out["valve.dead_time_per_stage"] = valve.dead_time_per_stage
    else:
        out["valve.conductance"] = valve.conductance
        out["valve.f_pwm"] = valve.pwm_frequency
        out["valve.switching_life"] = valve.switching_life
        out["valve.degradation_threshold"] = valve.degradation_threshold
    return out


def serialize(cfg: TwinConfig) -> str:
    """Canonical text form: keys sorted, 9 significant digits."""
    mapping = to_mapping(cfg)
    lines = [f"{key} = {_fmt(mapping[key])}" for key in sorted(mapping)]
    return "\n".join(lines) + "\n"


def save(cfg: TwinConfig, path: str | Path) -> None:
    Path(path).write_text(serialize(cfg))


def validate_twin(cfg: TwinConfig) -> list[Violation]:
    """All rule violations across robot, controller and trajectory."""
    out = validate(cfg.robot)
    out.extend(validate_gains(cfg.gains))
    act = cfg.robot.actuators[0]
    if not 0.0 <= cfg.p_stiff <= act.bellows.max_pressure:
        out.append(Violation("control.p_stiff", "must be in [0, p_max]"))
    if not 0.0 <= cfg.d_stiff <= 2.0:
        out.append(Violation("control.d_stiff", "must be in [0, 2]"))
    t = cfg.trajectory
    for name, value in (
        ("traj.rate_deg_s", t.rate_deg_s),
        ("traj.duration_s", t.duration_s),
    ):
        if not value > 0.0:
            out.append(Violation(name, "must be > 0"))
    for name, value in (
        ("traj.amplitude_deg", t.amplitude_deg),
        ("traj.hold_s", t.hold_s),
        ("traj.phase_s", t.phase_s),
    ):
        if value < 0.0:
            out.append(Violation(name, "must be >= 0"))
    max_angle_deg = math.degrees(min(a.max_angle for a in cfg.robot.actuators))
    if t.amplitude_deg > max_angle_deg:
        out.append(
            Violation(
                "traj.amplitude_deg",
                f"exceeds the joint range of {max_angle_deg:.2f} deg",
            )
        )
    return out
