"""Experiment harness: closed-loop runs, accounting tools, CSV logging.

Every run is single-threaded and deterministic: identical configs produce
bit-identical CSV logs and summaries. The trajectory and supply staircase
defaults are synthetic stand-ins shaped like the hardware campaigns (ramp
suite, 0.25 bar staircase); they are labelled as such in the result
metadata and are not recordings of any physical run.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field

import numpy as np

from .configfile import TrajectoryParams, TwinConfig, build, loads, serialize, to_mapping, validate_twin
from .control import ControlStack
from .dynamics import ChainModel, damping_coefficients, spring_torques
from .model import (
    BaseOrientation,
    BellowsSpec,
    BinaryValve,
    ConfigurationError,
    RobotConfig,
    Variant,
    initial_state,
    leaky_supply,
    with_gravity_worst_case,
)
from .pneumatics import ModularNetwork, ProportionalBank, supply_step

__all__ = [
    "ExperimentResult",
    "ramp_suite",
    "run_tracking",
    "run_airtightness",
    "run_fatigue",
    "format_duration",
    "valve_wear_hours",
    "wear_report",
    "GravityMarginReport",
    "gravity_margin",
    "run_sweep",
    "DEFAULT_STAIRCASE",
]

DEFAULT_STAIRCASE: tuple[tuple[float, float], ...] = tuple(
    (0.25 * k, 20.0) for k in range(1, 7)
)

# CI gate thresholds used by the CLI --check flags.
TRACKING_MEAN_LIMIT_DEG = 3.0
TRACKING_JOINT_LIMIT_DEG = 4.0
HOLD_TOLERANCE_BAR = 0.005  # = proportional valve resolution


def _fmt_value(value) -> str:
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


@dataclass
class ExperimentResult:
    """Columnar time-series log plus named summary metrics."""

    kind: str
    columns: list[str]
    data: np.ndarray  # shape (rows, len(columns))
    summary: dict[str, object] = field(default_factory=dict)
    meta: dict[str, str] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def check(self, dt: float | None = None) -> None:
        """Internal consistency: strictly increasing time, finite metrics."""
        if "t_s" in self.columns:
            t = self.column("t_s")
            if not np.all(np.diff(t) > 0.0):
                raise AssertionError("time column is not strictly increasing")
            if dt is not None and t.shape[0] > 1:
                if not np.allclose(np.diff(t), dt, rtol=0.0, atol=1e-12):
                    raise AssertionError("time column does not advance by dt")
        for key, value in self.summary.items():
            if isinstance(value, float) and not math.isfinite(value):
                raise AssertionError(f"summary metric {key} is not finite")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write(",".join(self.columns) + "\n")
            np.savetxt(f, self.data, fmt="%.9g", delimiter=",")

    def write_summary(self, path) -> None:
        lines = [f"{k} = {_fmt_value(self.summary[k])}" for k in sorted(self.summary)]
        lines += [f"meta.{k} = {self.meta[k]}" for k in sorted(self.meta)]
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")


def ramp_suite(traj: TrajectoryParams, n: int, dt: float) -> np.ndarray:
    """Desired joint angles [rad] for every control step, shape (steps, n).

    Per joint: 0 -> +A -> hold -> -A -> hold -> 0, repeating; joint i
    starts i*phase_s after the run begins and holds zero before that.
    """
    steps = int(round(traj.duration_s / dt))
    t = np.arange(steps) * dt
    amp = math.radians(traj.amplitude_deg)
    rate = math.radians(traj.rate_deg_s)
    out = np.zeros((steps, n))
    if amp == 0.0 or rate <= 0.0:
        return out
    t_ramp = amp / rate
    t1 = t_ramp  # reached +A
    t2 = t1 + traj.hold_s  # leaving +A
    t3 = t2 + 2.0 * t_ramp  # reached -A
    t4 = t3 + traj.hold_s  # leaving -A
    period = t4 + t_ramp  # back at 0
    for i in range(n):
        tau = t - i * traj.phase_s
        active = tau >= 0.0
        ph = np.mod(tau[active], period)
        y = np.zeros_like(ph)
        seg = ph < t1
        y[seg] = rate * ph[seg]
        seg = (ph >= t1) & (ph < t2)
        y[seg] = amp
        seg = (ph >= t2) & (ph < t3)
        y[seg] = amp - rate * (ph[seg] - t2)
        seg = (ph >= t3) & (ph < t4)
        y[seg] = -amp
        seg = ph >= t4
        y[seg] = -amp + rate * (ph[seg] - t4)
        out[active, i] = y
    return out


def _reject_invalid(cfg: TwinConfig) -> None:
    violations = validate_twin(cfg)
    if violations:
        raise ConfigurationError("; ".join(str(v) for v in violations))


def run_tracking(cfg: TwinConfig, trajectory: np.ndarray | None = None) -> ExperimentResult:
    """Closed-loop trajectory tracking with the variant's architecture.

    Logs one row per control step; the summary carries per-joint and mean
    RMS tracking errors in degrees. `trajectory` overrides the default ramp
    suite (shape (steps, n), radians).
    """
    _reject_invalid(cfg)
    robot = cfg.robot
    n, dt = robot.n, robot.dt
    act = robot.actuators[0]
    variant = act.variant
    semi = variant is Variant.SEMI_MODULAR

    q_d = ramp_suite(cfg.trajectory, n, dt) if trajectory is None else trajectory
    if q_d.ndim != 2 or q_d.shape[1] != n:
        raise ConfigurationError(f"trajectory must have shape (steps, {n})")
    max_angle = np.asarray([a.max_angle for a in robot.actuators])
    if np.any(np.abs(q_d) > max_angle[None, :]):
        raise ConfigurationError("trajectory exceeds the joint range q_max")
    steps = q_d.shape[0]

    f_pwm = act.valve.pwm_frequency if isinstance(act.valve, BinaryValve) else 100.0
    stack = ControlStack(
        variant,
        n,
        cfg.gains,
        p_max=act.bellows.max_pressure,
        p_stiff=cfg.p_stiff,
        d_stiff=cfg.d_stiff,
        f_pwm=f_pwm,
    )
    chain = ChainModel.from_config(robot)
    damping = damping_coefficients(robot)
    bank = ProportionalBank(robot) if semi else None
    net = None if semi else ModularNetwork(robot)
    state = initial_state(robot)

    cmd_names = (
        [f"pd{i + 1}{j}_bar" for i in range(n) for j in (1, 2)]
        if semi
        else [f"u{i + 1}{j}" for i in range(n) for j in (1, 2)]
    )
    columns = (
        ["t_s"]
        + [f"q{i + 1}_deg" for i in range(n)]
        + [f"qd{i + 1}_deg" for i in range(n)]
        + [f"p{i + 1}{j}_bar" for i in range(n) for j in (1, 2)]
        + ["ps_bar"]
        + cmd_names
    )
    log = np.empty((steps, len(columns)))

    deg = 180.0 / math.pi
    for k in range(steps):
        t = k * dt
        cmds = stack.cycle(t, q_d[k], state, dt)
        log[k, 0] = t
        log[k, 1 : n + 1] = state.q * deg
        log[k, n + 1 : 2 * n + 1] = q_d[k] * deg
        log[k, 2 * n + 1 : 4 * n + 1] = state.p
        log[k, 4 * n + 1] = state.p_s
        log[k, 4 * n + 2 :] = cmds
        if semi:
            p_next, fill = bank.step(state.p, cmds)
            ps_next, _, _ = supply_step(state.p_s, float(np.sum(fill)), robot.supply, dt)
        else:
            p_next, ps_next, _ = net.step(state.p, state.p_s, cmds, dt)
        torques = spring_torques(p_next, state.q, robot)
        state.q, state.qdot = chain.step(
            state.q, state.qdot, torques, max_angle, dt, damping=damping
        )
        state.p = p_next
        state.p_s = ps_next
        state.t = (k + 1) * dt

    err_deg = log[:, n + 1 : 2 * n + 1] - log[:, 1 : n + 1]
    rmse = np.sqrt(np.mean(err_deg**2, axis=0))
    summary: dict[str, object] = {
        f"rmse_q{i + 1}_deg": float(rmse[i]) for i in range(n)
    }
    summary["mean_rmse_deg"] = float(np.mean(rmse))
    summary["max_abs_error_deg"] = float(np.max(np.abs(err_deg)))
    summary["final_ps_bar"] = float(state.p_s)
    if not semi:
        summary["switch_count_total"] = int(np.sum(state.switch_count))
    result = ExperimentResult(
        kind="track",
        columns=columns,
        data=log,
        summary=summary,
        meta={
            "variant": variant.value,
            "profile": "default_ramp_suite" if trajectory is None else "custom",
            "profile_note": "synthetic stand-in profile, not a recorded hardware trajectory",
        },
    )
    result.check(dt)
    return result


def run_airtightness(
    cfg: TwinConfig,
    staircase: tuple[tuple[float, float], ...] | None = None,
    settle_fraction: float = 0.1,
) -> ExperimentResult:
    """Supply-line leak test: staircase the commanded pressure, valves shut.

    With every microvalve closed the bellows are decoupled from the line,
    so only the source, the line capacitance and the leakage act. The
    per-hold deviation metric skips the first settle_fraction of each hold
    (regulator settling), then records max |p_s - command|.
    """
    _reject_invalid(cfg)
    supply = cfg.robot.supply
    dt = cfg.robot.dt
    stairs = DEFAULT_STAIRCASE if staircase is None else tuple(staircase)
    rows = []
    summary: dict[str, object] = {}
    p_s = 0.0
    k = 0
    for idx, (target, hold_s) in enumerate(stairs, start=1):
        hold_steps = int(round(hold_s / dt))
        devs = []
        settle = int(settle_fraction * hold_steps)
        for j in range(hold_steps):
            rows.append((k * dt, target, p_s))
            if j >= settle:
                devs.append(abs(p_s - target))
            p_s, _, _ = supply_step(p_s, 0.0, supply, dt, source_pressure=target)
            k += 1
        if devs:
            summary[f"hold{idx}_p_source_d_bar"] = float(target)
            summary[f"hold{idx}_max_dev_bar"] = float(max(devs))
    data = np.asarray(rows) if rows else np.empty((0, 3))
    summary["final_pressure_bar"] = float(p_s)
    if stairs:
        summary["final_hold_max_dev_bar"] = summary[f"hold{len(stairs)}_max_dev_bar"]
        summary["final_p_source_d_bar"] = float(stairs[-1][0])
    result = ExperimentResult(
        kind="airtight",
        columns=["t_s", "psd_bar", "ps_bar"],
        data=data,
        summary=summary,
        meta={
            "profile": "default_staircase" if staircase is None else "custom",
            "profile_note": "synthetic staircase (0.25 bar steps, 20 s holds), not a recorded run",
            "settle_fraction": f"{settle_fraction:g}",
        },
    )
    result.check(dt if rows else None)
    return result


def format_duration(seconds: float) -> str:
    """Human-readable lifetime, e.g. '72 h 36 min', '7 min 54 s'."""
    total = int(round(seconds))
    h, rem = divmod(total, 3600)
    m, s = divmod(rem, 60)
    if h:
        return f"{h} h {m} min" if s == 0 else f"{h} h {m} min {s} s"
    if m:
        return f"{m} min {s} s"
    return f"{s} s"


def run_fatigue(
    bellows: BellowsSpec,
    pressurize_s: float = 10.0,
    vent_s: float = 10.0,
    trace_cycles: int = 0,
    dt: float = 0.001,
    fill_tau: float = 0.1,
) -> ExperimentResult:
    """Lifetime accounting for the periodic max-pressure load test.

    One cycle = pressurize_s at max pressure plus vent_s vented. The
    bellows' fatigue_life counts cycles to failure and may be fractional
    (failure mid-cycle); the lifetime is exactly fatigue_life * period with
    no per-cycle drift. Set trace_cycles > 0 for a short illustrative
    pressure trace (first-order fill/vent with time constant fill_tau).
    """
    if pressurize_s <= 0.0 or vent_s <= 0.0:
        raise ConfigurationError("cycle phase durations must be > 0")
    period = pressurize_s + vent_s
    cycles = bellows.fatigue_life
    lifetime_s = round(cycles * period * 1e6) / 1e6
    completed = int(math.floor(cycles + 1e-9))
    summary: dict[str, object] = {
        "cycles_to_failure": float(cycles),
        "completed_cycles": completed,
        "cycle_period_s": float(period),
        "lifetime_s": float(lifetime_s),
        "lifetime": format_duration(lifetime_s),
        "p_max_bar": bellows.max_pressure,
    }
    if trace_cycles > 0:
        steps = int(round(min(trace_cycles, cycles) * period / dt))
        rows = np.empty((steps, 3))
        p = 0.0
        for k in range(steps):
            t = k * dt
            pressurizing = (t % period) < pressurize_s
            rows[k] = (t, p, 1.0 if pressurizing else 0.0)
            target = bellows.max_pressure if pressurizing else 0.0
            p += dt / fill_tau * (target - p)
        data = rows
    else:
        data = np.empty((0, 3))
    result = ExperimentResult(
        kind="fatigue",
        columns=["t_s", "p_bar", "pressurizing"],
        data=data,
        summary=summary,
        meta={"bellows_kind": bellows.kind.value},
    )
    result.check(dt if trace_cycles > 0 else None)
    return result


def valve_wear_hours(cycles: float, f_pwm: float) -> float:
    """Operating hours to reach a switching-cycle count.

    Worst case: one switching cycle (open + close) per PWM period, so
    hours = cycles / (f_pwm * 3600).
    """
    if f_pwm <= 0.0:
        raise ConfigurationError("PWM frequency must be > 0")
    return cycles / (f_pwm * 3600.0)


def wear_report(valve: BinaryValve) -> dict[str, float]:
    """Hours until first degradation and until rated end of life."""
    return {
        "degradation_hours": valve_wear_hours(valve.degradation_threshold, valve.pwm_frequency),
        "rated_hours": valve_wear_hours(valve.switching_life, valve.pwm_frequency),
        "pwm_frequency_hz": valve.pwm_frequency,
    }


@dataclass
class GravityMarginReport:
    """Static torque budget at q = 0 for a given base orientation."""

    orientation: str
    available: np.ndarray  # torque_gain * p_max per joint [N*m]
    demand: np.ndarray  # worst-case gravity torque per joint [N*m]
    margin: np.ndarray  # available - demand [N*m]
    max_stackable: int | None  # None = unbounded at q = 0 (vertical)
    search_limit: int = 100


def gravity_margin(
    config: RobotConfig, orientation=None, search_limit: int = 100
) -> GravityMarginReport:
    """Compare available bellows torque against gravity load at q = 0.

    Horizontal is the worst-case pose (full cantilever moment); vertical
    has zero static load at q = 0, so the stack length is unbounded there.
    Alternating-axis chains are analysed with the planar worst-case
    projection. max_stackable is the largest homogeneous chain (of the
    first actuator) whose every joint keeps a positive margin.
    """
    config = with_gravity_worst_case(config)
    orient = config.base_orientation if orientation is None else orientation
    chain = ChainModel.from_config(config)
    chain.base_orientation = orient
    available = np.asarray(
        [a.bellows.torque_gain * a.bellows.max_pressure for a in config.actuators]
    )
    q0 = np.zeros(config.n)
    demand = np.abs(chain.gravity_torques(q0))
    report = GravityMarginReport(
        orientation=orient.value,
        available=available,
        demand=demand,
        margin=available - demand,
        max_stackable=None,
        search_limit=search_limit,
    )
    if orient is BaseOrientation.VERTICAL_UP:
        return report

    act = config.actuators[0]
    best = 0
    for m in range(1, search_limit + 1):
        sub = ChainModel(
            masses=np.full(m, act.mass),
            lengths=np.full(m, act.height),
            com_offsets=np.full(m, act.height / 2.0),
            base_orientation=orient,
        )
        avail = act.bellows.torque_gain * act.bellows.max_pressure
        if np.all(avail - np.abs(sub.gravity_torques(np.zeros(m))) > 0.0):
            best = m
        else:
            break
    report.max_stackable = best
    return report


def _sweep_one(args: tuple[int, str, str, str, str]) -> tuple[int, str, dict]:
    idx, cfg_text, param, value, experiment = args
    mapping = {k: _fmt_value(v) for k, v in to_mapping(loads(cfg_text)).items()}
    mapping[param] = value
    cfg = build(mapping)
    if experiment == "track":
        result = run_tracking(cfg)
    elif experiment == "airtight":
        result = run_airtightness(cfg)
    else:
        raise ConfigurationError(f"unknown sweep experiment {experiment!r}")
    return idx, value, result.summary


def run_sweep(
    cfg: TwinConfig,
    param: str,
    values: list[str],
    experiment: str = "track",
    jobs: int = 1,
) -> ExperimentResult:
    """Run one experiment per parameter value; aggregation is order-independent.

    Each run owns its state, so they can execute in parallel (jobs > 1).
    The aggregate table holds one row per value with every numeric summary
    metric shared by all runs.
    """
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    text = serialize(cfg)
    tasks = [(i, text, param, v, experiment) for i, v in enumerate(values)]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = sorted(pool.map(_sweep_one, tasks))
    else:
        results = [_sweep_one(task) for task in tasks]

    metric_sets = [
        {k for k, v in summary.items() if isinstance(v, (int, float))}
        for _, _, summary in results
    ]
    metrics = sorted(set.intersection(*metric_sets))
    data = np.asarray(
        [[float(value)] + [float(summary[m]) for m in metrics] for _, value, summary in results]
    )
    return ExperimentResult(
        kind="sweep",
        columns=[param] + metrics,
        data=data,
        summary={"runs": len(results), "experiment": experiment, "param": param},
        meta={},
    )


def leaky_variant(cfg: TwinConfig) -> TwinConfig:
    """Same robot with the early-design leaky supply preset."""
    leaky = leaky_supply()
    mapping = {k: _fmt_value(v) for k, v in to_mapping(cfg).items()}
    mapping["supply.q_src_max"] = _fmt_value(leaky.max_source_flow)
    mapping["supply.g_leak"] = _fmt_value(leaky.leak_conductance)
    return build(mapping)
