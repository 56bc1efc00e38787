"""Joint-angle control for both actuator architectures.

Semi-modular: a PI controller per joint outputs a desired pressure
difference, which is split symmetrically around the stiffness set pressure
and handed to the proportional valves.

Modular: the PI controller outputs a duty deviation from neutral; the two
valve duties are complementary (d2 = d_stiff - d1) and are turned into
binary valve states by synchronous leading-edge PWM sampled at the control
rate.

Everything here is deterministic and per-joint independent: identical
inputs produce bit-identical command sequences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConfigurationError, PiGains, RobotState, Variant
from .dynamics import encoder_read

__all__ = [
    "PiState",
    "pi_step",
    "split_pressures",
    "split_duties",
    "pwm_sample",
    "ControlStack",
]


@dataclass
class PiState:
    """Integrator value plus the saturation flag of the last step."""

    integrator: float = 0.0
    saturated: bool = False


def pi_step(e: float, st: PiState, g: PiGains, dt: float) -> tuple[float, PiState]:
    """One PI update with conditional-integration anti-windup.

    command = clamp(kp*e + integrator', out_min, out_max)

    The integrator accumulates ki*e*dt, clamped to its own bounds, but is
    frozen whenever the unclamped command already saturates and the error
    would push it further into saturation. That makes the windup bound
    exact: |integrator| never exceeds its clamp.
    """
    if dt <= 0.0:
        raise ConfigurationError("dt must be > 0")
    integ = st.integrator + g.ki * e * dt
    integ = min(max(integ, g.integrator_min), g.integrator_max)
    raw = g.kp * e + integ
    if raw > g.out_max and e > 0.0:
        return g.out_max, PiState(integrator=st.integrator, saturated=True)
    if raw < g.out_min and e < 0.0:
        return g.out_min, PiState(integrator=st.integrator, saturated=True)
    command = min(max(raw, g.out_min), g.out_max)
    return command, PiState(integrator=integ, saturated=command != raw)


def split_pressures(dp_d: float, p_stiff: float, p_max: float) -> tuple[float, float]:
    """Split a desired pressure difference around the stiffness pressure.

    p1 = p_stiff + dp_d/2, p2 = p_stiff - dp_d/2, each clamped to
    [0, p_max]. Whenever neither side clamps, p1 + p2 == 2*p_stiff and
    p1 - p2 == dp_d.
    """
    p1 = p_stiff + dp_d / 2.0
    p2 = p_stiff - dp_d / 2.0
    clamp = lambda x: min(max(x, 0.0), p_max)  # noqa: E731
    return clamp(p1), clamp(p2)


def split_duties(d1: float, d_stiff: float = 1.0) -> tuple[float, float]:
    """Complementary PWM duties: d2 = d_stiff - d1, both clamped to [0, 1]."""
    d1c = min(max(d1, 0.0), 1.0)
    d2c = min(max(d_stiff - d1c, 0.0), 1.0)
    return d1c, d2c


def pwm_sample(d: float, t: float, f_pwm: float) -> int:
    """Leading-edge PWM: 1 iff the phase within the period is below d.

    Sampled synchronously by the controller; d=0 is always off, d=1 always
    on.
    """
    if f_pwm <= 0.0:
        raise ConfigurationError("PWM frequency must be > 0")
    phase = t * f_pwm
    return 1 if (phase - math.floor(phase)) < d else 0


class ControlStack:
    """The per-joint controllers of one robot, run in parallel each cycle.

    Reads the integrator states from, and writes commands/switch counts
    back into, the RobotState it is given, so controller state travels with
    the simulation state.
    """

    def __init__(
        self,
        variant: Variant,
        n: int,
        gains: PiGains,
        p_max: float,
        p_stiff: float,
        d_stiff: float = 1.0,
        f_pwm: float = 100.0,
        encoder_resolution: float | None = None,
    ):
        if not 0.0 <= d_stiff <= 2.0:
            raise ConfigurationError("d_stiff must be in [0, 2]")
        if not 0.0 <= p_stiff <= p_max:
            raise ConfigurationError("p_stiff must be in [0, p_max]")
        self.variant = variant
        self.n = n
        self.gains = gains
        self.p_max = p_max
        self.p_stiff = p_stiff
        self.d_stiff = d_stiff
        self.f_pwm = f_pwm
        self.encoder_resolution = encoder_resolution

    def _measure(self, q: float) -> float:
        if self.encoder_resolution is None:
            return encoder_read(q)
        return encoder_read(q, self.encoder_resolution)

    def cycle(self, t: float, q_d: np.ndarray, state: RobotState, dt: float) -> np.ndarray:
        """One control cycle for all joints.

        Returns the actuator commands (desired pressures for semi-modular,
        binary valve states for modular) and updates state.integ,
        state.p_d/state.u and state.switch_count in place.
        """
        if q_d.shape[0] != self.n or state.q.shape[0] != self.n:
            raise ConfigurationError(
                f"dimension mismatch: controller built for n={self.n}"
            )
        semi = self.variant is Variant.SEMI_MODULAR
        out = state.p_d if semi else np.empty(2 * self.n, dtype=np.int64)
        for i in range(self.n):
            e = float(q_d[i]) - self._measure(float(state.q[i]))
            st = PiState(integrator=float(state.integ[i]))
            command, st = pi_step(e, st, self.gains, dt)
            state.integ[i] = st.integrator
            if semi:
                p1, p2 = split_pressures(command, self.p_stiff, self.p_max)
                out[2 * i] = p1
                out[2 * i + 1] = p2
            else:
                d1, d2 = split_duties(self.d_stiff / 2.0 + command, self.d_stiff)
                out[2 * i] = pwm_sample(d1, t, self.f_pwm)
                out[2 * i + 1] = pwm_sample(d2, t, self.f_pwm)
        if not semi:
            state.switch_count += out != state.u
            state.u = out
        return out
