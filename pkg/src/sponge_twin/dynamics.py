"""Planar serial-chain dynamics of the actuator stack.

Each actuator contributes one revolute joint and one rigid link of length
equal to the actuator height, with its mass lumped at mid-height. Angles
are counterclockwise-positive in the vertical plane containing the chain;
gravity points along -y. Coriolis/centrifugal terms are omitted (joint
speeds stay far below where they would matter); the configuration-dependent
mass matrix and gravity loads are exact for the point-mass chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    ENCODER_RESOLUTION,
    BaseOrientation,
    BellowsSpec,
    RobotConfig,
    RobotState,
    quantize,
)

__all__ = [
    "SimulationFault",
    "ChainModel",
    "bellows_torque",
    "actuation_torques",
    "encoder_read",
    "step_dynamics",
]

GRAVITY = 9.81  # [m/s^2]


class SimulationFault(RuntimeError):
    """State became non-finite or otherwise unusable; carries a diagnostic."""


def bellows_torque(
    p1: float, p2: float, q: float, qdot: float, spec: BellowsSpec
) -> float:
    """Joint torque of one antagonistic bellows pair.

    torque = torque_gain * (p1 - p2)
             - (spring_rate + spring_rate_per_bar * (p1 + p2)/2) * q
             - damping * qdot

    The joint angle is driven by the pressure difference alone; the mean
    pressure only stiffens the restoring spring (stiffness-from-mean
    behaviour of antagonistic chambers).
    """
    spring = spec.spring_rate + spec.spring_rate_per_bar * (p1 + p2) / 2.0
    return spec.torque_gain * (p1 - p2) - spring * q - spec.damping * qdot


def spring_torques(p: np.ndarray, q: np.ndarray, config: RobotConfig) -> np.ndarray:
    """Velocity-independent part of the bellows torques (whole chain).

    The viscous part is handled implicitly inside the integrator (the mass
    matrix of a point-mass chain is near-singular, which makes explicit
    damping unconditionally unstable at any useful dt).
    """
    tau = np.empty(config.n)
    for i, act in enumerate(config.actuators):
        tau[i] = bellows_torque(
            float(p[2 * i]), float(p[2 * i + 1]), float(q[i]), 0.0, act.bellows
        )
    return tau


def damping_coefficients(config: RobotConfig) -> np.ndarray:
    """Per-joint viscous coefficients [N*m*s/rad] seen by the integrator."""
    return np.asarray([a.bellows.damping for a in config.actuators])


def actuation_torques(
    p: np.ndarray, q: np.ndarray, qdot: np.ndarray, config: RobotConfig
) -> np.ndarray:
    """Per-joint bellows torques for the whole chain."""
    tau = np.empty(config.n)
    for i, act in enumerate(config.actuators):
        tau[i] = bellows_torque(
            float(p[2 * i]), float(p[2 * i + 1]), float(q[i]), float(qdot[i]), act.bellows
        )
    return tau


def encoder_read(q: float, resolution: float = ENCODER_RESOLUTION) -> float:
    """Hall encoder model: quantize to the nearest resolution step.

    Halves round away from zero (0.045 deg reads as 0.09 deg at the stock
    0.09 deg resolution).
    """
    return quantize(q, resolution)


@dataclass
class ChainModel:
    """Lumped planar chain: masses, lengths and base orientation.

    viscous_friction is an extra joint-level term alongside the bellows
    damping; it defaults to zero because the bellows already dissipate.
    """

    masses: np.ndarray  # [kg], shape (n,)
    lengths: np.ndarray  # [m], shape (n,)
    com_offsets: np.ndarray  # [m] from the joint, shape (n,)
    base_orientation: BaseOrientation
    gravity: float = GRAVITY
    viscous_friction: float = 0.0  # [N*m*s/rad]

    @classmethod
    def from_config(cls, config: RobotConfig) -> "ChainModel":
        lengths = np.asarray([a.height for a in config.actuators], dtype=float)
        return cls(
            masses=np.asarray([a.mass for a in config.actuators], dtype=float),
            lengths=lengths,
            com_offsets=lengths / 2.0,
            base_orientation=config.base_orientation,
        )

    @property
    def n(self) -> int:
        return self.masses.shape[0]

    def _base_angle(self) -> float:
        return math.pi / 2.0 if self.base_orientation is BaseOrientation.VERTICAL_UP else 0.0

    def _geometry(self, q: np.ndarray):
        """Joint positions and link-mass positions for configuration q."""
        phi = self._base_angle() + np.cumsum(q)
        cos_phi, sin_phi = np.cos(phi), np.sin(phi)
        jx = np.concatenate(([0.0], np.cumsum(self.lengths * cos_phi)))[: self.n]
        jy = np.concatenate(([0.0], np.cumsum(self.lengths * sin_phi)))[: self.n]
        cx = jx + self.com_offsets * cos_phi
        cy = jy + self.com_offsets * sin_phi
        return jx, jy, cx, cy

    def mass_positions(self, q: np.ndarray) -> np.ndarray:
        """(n, 2) array of link-mass positions."""
        _, _, cx, cy = self._geometry(q)
        return np.stack([cx, cy], axis=1)

    def potential_energy(self, q: np.ndarray) -> float:
        """Gravitational potential, zero level at the base joint."""
        _, _, _, cy = self._geometry(q)
        return float(self.gravity * np.sum(self.masses * cy))

    def gravity_torques(self, q: np.ndarray) -> np.ndarray:
        """Gravity load per joint: the moment of all distal link masses.

        Positive entries oppose positive joint rotation (the load the
        actuators must deliver to hold the pose); equal to the gradient of
        the potential energy in these angle coordinates.
        """
        jx, _, cx, _ = self._geometry(q)
        # Suffix sums over distal masses: tau_i = g * sum_{k>=i} m_k (cx_k - jx_i).
        m = self.masses
        s_mx = np.cumsum((m * cx)[::-1])[::-1]
        s_m = np.cumsum(m[::-1])[::-1]
        return self.gravity * (s_mx - jx * s_m)

    def mass_matrix(self, q: np.ndarray) -> np.ndarray:
        """Configuration-dependent inertia of the point-mass chain."""
        jx, jy, cx, cy = self._geometry(q)
        n = self.n
        jac = np.zeros((n, n, 2))
        for k in range(n):
            jac[k, : k + 1, 0] = -(cy[k] - jy[: k + 1])
            jac[k, : k + 1, 1] = cx[k] - jx[: k + 1]
        return np.einsum("k,kim,kjm->ij", self.masses, jac, jac)

    def kinetic_energy(self, q: np.ndarray, qdot: np.ndarray) -> float:
        return float(0.5 * qdot @ self.mass_matrix(q) @ qdot)

    def step(
        self,
        q: np.ndarray,
        qdot: np.ndarray,
        tau_act: np.ndarray,
        max_angle: np.ndarray,
        dt: float,
        damping: np.ndarray | float = 0.0,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Semi-implicit Euler step with inelastic joint hard stops.

        qdot' = qdot + dt * M(q)^-1 (tau_act - tau_grav - c*qdot')
        q'    = q + dt * qdot'

        tau_act must not contain viscous terms; per-joint viscous damping
        (bellows plus joint friction) enters through `damping` and is
        integrated implicitly, (M + dt*C) qdot' = M qdot + dt*tau, because
        the point-mass mass matrix is near-singular and explicit damping
        would blow up the stiff mode. A joint that would pass its hard stop
        is clamped there with zero velocity (no bounce).
        """
        tau = tau_act - self.gravity_torques(q)
        mass = self.mass_matrix(q)
        c = np.asarray(damping) + self.viscous_friction
        lhs = mass + dt * np.diag(np.broadcast_to(c, (self.n,)))
        qdot_next = np.linalg.solve(lhs, mass @ qdot + dt * tau)
        q_next = q + dt * qdot_next
        over = q_next > max_angle
        under = q_next < -max_angle
        if over.any():
            q_next = np.where(over, max_angle, q_next)
            qdot_next = np.where(over, 0.0, qdot_next)
        if under.any():
            q_next = np.where(under, -max_angle, q_next)
            qdot_next = np.where(under, 0.0, qdot_next)
        if not (np.all(np.isfinite(q_next)) and np.all(np.isfinite(qdot_next))):
            raise SimulationFault(
                f"non-finite joint state: q={q_next!r}, qdot={qdot_next!r}"
            )
        return q_next, qdot_next


def step_dynamics(
    state: RobotState, torques: np.ndarray, model: ChainModel, config: RobotConfig
) -> RobotState:
    """Advance the mechanical part of a RobotState by one dt (new state).

    `torques` is the velocity-independent actuation (e.g. spring_torques);
    the bellows' viscous damping is applied implicitly by the integrator.
    """
    max_angle = np.asarray([a.max_angle for a in config.actuators])
    out = state.copy()
    out.q, out.qdot = model.step(
        state.q,
        state.qdot,
        torques,
        max_angle,
        config.dt,
        damping=damping_coefficients(config),
    )
    out.t = state.t + config.dt
    return out
