"""Capacity and scheduling of the daisy-chained I2C sensor/valve bus.

The controller polls every target once per sampling cycle over a shared
two-wire bus (fast mode, 400 kbit/s by default). One full read+write
transaction per target occupies bits_per_target bit times on the wire,
including addressing, acknowledge and framing overhead; the default of 33
bits makes twelve targets fit exactly into a 1 kHz cycle. The EtherCAT
gateway only contributes the fixed cycle boundary and is not modelled
further.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import ConfigurationError, Variant

__all__ = ["BusConfig", "ScheduleReport", "max_targets", "schedule", "wire_count"]


@dataclass(frozen=True)
class BusConfig:
    bit_rate: float = 400_000.0  # [bit/s], I2C fast mode
    bits_per_target: float = 33.0  # read+write transaction incl. overhead [bit]
    sample_rate: float = 1000.0  # controller sampling frequency f_s [Hz]

    def check(self) -> None:
        if self.bit_rate <= 0 or self.bits_per_target <= 0 or self.sample_rate <= 0:
            raise ConfigurationError("bus parameters must all be > 0")


@dataclass(frozen=True)
class ScheduleReport:
    """Round-robin schedule of n targets within one sampling cycle.

    If n exceeds the bus capacity the schedule is infeasible at the
    requested rate and effective_sample_rate holds the fastest feasible
    frequency instead; data ages are then computed at that reduced rate.
    """

    n: int
    feasible: bool
    max_targets: int
    utilization: float  # fraction of the cycle occupied at the requested f_s
    effective_sample_rate: float  # [Hz]
    data_age: tuple[float, ...] = field(default_factory=tuple)  # [s] per target


def max_targets(cfg: BusConfig) -> int:
    """How many targets fit into one sampling cycle: floor(rate budget)."""
    cfg.check()
    return math.floor(cfg.bit_rate / (cfg.bits_per_target * cfg.sample_rate))


def schedule(n: int, cfg: BusConfig) -> ScheduleReport:
    """Round-robin schedule for n targets (infeasibility reported, not raised)."""
    if n < 1:
        raise ConfigurationError("need at least one bus target")
    cfg.check()
    cap = max_targets(cfg)
    t_frame = cfg.bits_per_target / cfg.bit_rate
    utilization = n * cfg.bits_per_target * cfg.sample_rate / cfg.bit_rate
    feasible = n <= cap
    f_eff = cfg.sample_rate if feasible else cfg.bit_rate / (n * cfg.bits_per_target)
    ages = tuple(k * t_frame for k in range(n))
    return ScheduleReport(
        n=n,
        feasible=feasible,
        max_targets=cap,
        utilization=utilization,
        effective_sample_rate=f_eff,
        data_age=ages,
    )


def wire_count(n: int, variant: Variant) -> tuple[int, int]:
    """(wires, tubes) routed through the robot body for an n-stack.

    Modular: five wires (bus + power) and one supply tube, independent of n
    (the bus supports up to twelve targets at the stock rate). Semi-modular:
    three conductors per encoder and one tube per bellows, so the count
    grows linearly and caps the practical stack length.
    """
    if n < 1:
        raise ConfigurationError("need at least one actuator")
    if variant is Variant.MODULAR:
        return 5, 1
    return 3 * n, 2 * n
