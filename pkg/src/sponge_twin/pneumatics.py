"""Pneumatic network simulation.

Linear conductance everywhere (flow proportional to pressure difference):
analytically verifiable and adequate below ~1.5 bar gauge. All volumes are
lumped isothermal capacitances, dp/dt = q * P_REF / V. Choked-orifice flow
(ISO 6358) could be swapped in behind the same step functions if anyone
needs the nonlinearity.

All step functions are pure: state in, state out, no hidden mutability, so
independent simulations can run in parallel freely.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .model import (
    P_REF,
    BinaryValve,
    ConfigurationError,
    ProportionalValve,
    RobotConfig,
    SupplySpec,
    quantize,
)

__all__ = [
    "FlowReport",
    "binary_valve_flow",
    "TransportDelay",
    "proportional_valve_step",
    "supply_step",
    "bellows_pressure_step",
    "ModularNetwork",
    "ProportionalBank",
]


@dataclass
class FlowReport:
    """All flows of one simulation step, for mass-conservation accounting.

    q_src/q_leak concern the supply line; q_in[j]/q_vent[j] the j-th
    bellows (ordering matches RobotState.p). line_storage_rate is the rate
    of change of air volume stored in the line, V/P_REF * dp_s/dt.
    """

    q_src: float  # [m^3/s]
    q_leak: float  # [m^3/s]
    q_in: np.ndarray  # [m^3/s], shape (2n,)
    q_vent: np.ndarray  # [m^3/s], shape (2n,)
    line_storage_rate: float  # [m^3/s]

    def residual(self) -> float:
        """Mass balance error: source minus leak, bellows inflow and storage."""
        return self.q_src - self.q_leak - float(np.sum(self.q_in)) - self.line_storage_rate


def binary_valve_flow(
    u: int, p_s: float, p_b: float, conductance: float
) -> tuple[float, float]:
    """Flows through one 3/2-way microvalve.

    Open (u=1): supply port feeds the bellows, q_in = G_v*(p_s - p_b),
    which reverses sign if the bellows sits above the line. Closed (u=0):
    the bellows vents to atmosphere (0 bar gauge), q_vent = G_v*p_b.

    Returns (q_in, q_vent).
    """
    if conductance < 0.0:
        raise ConfigurationError("valve conductance must be >= 0")
    if u:
        return conductance * (p_s - p_b), 0.0
    return 0.0, conductance * p_b


class TransportDelay:
    """Fixed-step transport delay (ring buffer of past commands).

    The buffer is pre-filled with the initial value, so queries are valid
    from the first step on.
    """

    def __init__(self, delay: float, dt: float, initial: float = 0.0):
        if dt <= 0.0:
            raise ConfigurationError("dt must be > 0")
        if delay < 0.0:
            raise ConfigurationError("dead time must be >= 0")
        self.steps = int(round(delay / dt))
        self._buf = deque([initial] * (self.steps + 1), maxlen=self.steps + 1)

    def step(self, value: float) -> float:
        """Push the current command, return the one from `delay` ago."""
        self._buf.append(value)
        return self._buf[0]


def proportional_valve_step(
    p_b: float,
    p_d: float,
    tau_pv: float,
    dead_time: float,
    dt: float,
    history: TransportDelay,
    resolution: float = 0.005,
) -> float:
    """One step of a proportional valve's integrated pressure loop.

    The commanded pressure is delayed by the transport dead time, quantized
    to the valve resolution, then tracked first-order:
    p_b' = p_b + dt/tau_pv * (quantize(p_d(t - dead_time)) - p_b).

    `history` must have been built with the same dead_time/dt pair.
    """
    if tau_pv <= 0.0:
        raise ConfigurationError("proportional valve time constant must be > 0")
    if history.steps != int(round(dead_time / dt)):
        raise ConfigurationError("history does not cover the requested dead time")
    cmd = history.step(p_d)
    if resolution > 0.0:
        cmd = quantize(cmd, resolution)
    return p_b + (dt / tau_pv) * (cmd - p_b)


def supply_step(
    p_s: float, draw: float, spec: SupplySpec, dt: float, source_pressure: float | None = None
) -> tuple[float, float, float]:
    """Advance the supply line by one step.

    The regulated source ramps the line towards source_pressure with time
    constant regulation_tau but can deliver at most max_source_flow;
    leakage drains leak_conductance * p_s; `draw` is the net flow taken by
    the valves. Returns (p_s', q_src, q_leak); q_leak uses the pre-step
    pressure so the caller's flow report matches the integration exactly.
    """
    target = spec.source_pressure if source_pressure is None else source_pressure
    q_src = min(
        spec.max_source_flow,
        (target - p_s) / spec.regulation_tau * spec.line_volume / P_REF,
    )
    q_leak = spec.leak_conductance * p_s
    p_next = p_s + dt * (q_src - q_leak - draw) * P_REF / spec.line_volume
    return max(p_next, 0.0), q_src, q_leak


def bellows_pressure_step(p_b: float, q_net: float, volume: float, dt: float) -> float:
    """Isothermal capacitance update: p' = max(p + dt*q_net*P_REF/V, 0)."""
    if volume <= 0.0:
        raise ConfigurationError("bellows volume must be > 0")
    return max(p_b + dt * q_net * P_REF / volume, 0.0)


class ModularNetwork:
    """Supply line plus 2n binary microvalves and their bellows."""

    def __init__(self, config: RobotConfig):
        self.supply = config.supply
        cond = []
        vols = []
        for act in config.actuators:
            valve = act.valve
            if not isinstance(valve, BinaryValve):
                raise ConfigurationError("modular network requires binary valves")
            cond += [valve.conductance, valve.conductance]
            vols += [act.bellows.volume, act.bellows.volume]
        self.conductance = np.asarray(cond)
        self.volume = np.asarray(vols)

    def step(
        self,
        p: np.ndarray,
        p_s: float,
        u: np.ndarray,
        dt: float,
        source_pressure: float | None = None,
    ) -> tuple[np.ndarray, float, FlowReport]:
        """One synchronous step of the whole network.

        All flows are evaluated at the pre-step pressures, then the line and
        every bellows integrate simultaneously. Returns (p', p_s', report).
        """
        open_mask = u != 0
        q_in = np.where(open_mask, self.conductance * (p_s - p), 0.0)
        q_vent = np.where(open_mask, 0.0, self.conductance * p)
        draw = float(np.sum(q_in))
        p_s_next, q_src, q_leak = supply_step(p_s, draw, self.supply, dt, source_pressure)
        p_next = np.maximum(p + dt * (q_in - q_vent) * P_REF / self.volume, 0.0)
        report = FlowReport(
            q_src=q_src,
            q_leak=q_leak,
            q_in=q_in,
            q_vent=q_vent,
            line_storage_rate=(p_s_next - p_s) / dt * self.supply.line_volume / P_REF,
        )
        return p_next, p_s_next, report


class ProportionalBank:
    """2n external proportional valves of a semi-modular robot.

    Dead time grows linearly with the actuator index (stage i adds
    i * dead_time_per_stage, the first actuator having the shortest tubes).
    """

    def __init__(self, config: RobotConfig, initial_p_d: float = 0.0):
        self.dt = config.dt
        self.volume = np.asarray(
            [act.bellows.volume for act in config.actuators for _ in range(2)]
        )
        self.tau = []
        self.resolution = []
        self.delays: list[TransportDelay] = []
        for i, act in enumerate(config.actuators):
            valve = act.valve
            if not isinstance(valve, ProportionalValve):
                raise ConfigurationError("proportional bank requires proportional valves")
            dead = i * valve.dead_time_per_stage
            for _ in range(2):
                self.tau.append(valve.time_constant)
                self.resolution.append(valve.resolution)
                self.delays.append(TransportDelay(dead, config.dt, initial_p_d))
        self.dead_time = np.asarray(
            [i * a.valve.dead_time_per_stage for i, a in enumerate(config.actuators) for _ in range(2)]
        )

    def step(self, p: np.ndarray, p_d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Track the commanded pressures; returns (p', fill_flows).

        fill_flows estimates the volumetric draw from the bench supply
        (only positive storage changes; vented air does not return).
        """
        p_next = np.empty_like(p)
        for j in range(p.shape[0]):
            p_next[j] = proportional_valve_step(
                float(p[j]),
                float(p_d[j]),
                self.tau[j],
                float(self.dead_time[j]),
                self.dt,
                self.delays[j],
                self.resolution[j],
            )
        fill = np.maximum(p_next - p, 0.0) * self.volume / (P_REF * self.dt)
        return p_next, fill
