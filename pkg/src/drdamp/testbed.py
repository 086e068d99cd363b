"""Single-machine test plant with analytic linearization.

A Heffron-Phillips machine (flux-decay model plus fast static exciter)
behind an external reactance to an infinite bus.  The injected-power
error e shifts the operating point, so the critical-mode damping is a
genuinely nonlinear function of e -- the map the surrogate machinery
approximates.

The single input is the stabilizer signal entering the exciter summing
junction; its sign is chosen so that a positive-gain lead compensator
adds damping under the negative-feedback interconnection of
``sslin.close_loop``.  The single output is the rotor-speed deviation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import brentq

from .sslin import (
    SmallSignalError,
    StateSpaceModel,
    close_loop,
    eigendecompose,
    realize_controller,
)

__all__ = [
    "OperatingPointError",
    "TestbedConfig",
    "OperatingPoint",
    "ModeTracker",
    "default_config",
    "load_config",
    "save_config",
    "linearize",
    "damping_map",
    "scenario_generate",
    "write_scenarios",
    "read_scenarios",
]


class OperatingPointError(ValueError):
    """No valid equilibrium for the requested injected power."""


@dataclass(frozen=True)
class TestbedConfig:
    """Machine, exciter and disturbance data (all per unit except times).

    The default values (see ``default_config``) are calibrated so the
    open-loop critical mode is weakly damped at e = 0 and loses damping
    at heavy loading inside the disturbance bounds.
    """

    h: float = 4.0            # inertia constant, s
    d_damp: float = 1.0       # rotor damping torque coefficient
    x_d: float = 1.81
    x_d_tr: float = 0.3       # transient reactance
    x_q: float = 1.76
    x_e: float = 0.3          # external (line + transformer) reactance
    k_a: float = 30.0         # exciter gain
    t_a: float = 0.02         # exciter time constant, s
    t_d0_tr: float = 8.0      # open-circuit field time constant, s
    v_bus: float = 1.0        # infinite-bus voltage magnitude
    v_ref: float = 1.0        # terminal-voltage setpoint held by the AVR
    p_ref: float = 0.5        # reference injected power
    e_min: float = -1.0       # disturbance bounds on the power error
    e_max: float = 1.0
    f_hz: float = 60.0

    def __post_init__(self):
        for name in ("h", "t_a", "t_d0_tr", "x_d", "x_d_tr", "x_q", "x_e",
                     "v_bus", "v_ref", "f_hz"):
            if not getattr(self, name) > 0:
                raise ValueError(f"testbed config field {name} must be > 0")
        if self.x_d_tr >= self.x_d:
            raise ValueError("transient reactance must be below x_d")
        if self.e_min >= self.e_max:
            raise ValueError("disturbance bounds must satisfy e_min < e_max")

    @property
    def omega_s(self):
        return 2.0 * math.pi * self.f_hz


@dataclass(frozen=True)
class OperatingPoint:
    """Equilibrium and the Heffron-Phillips constants evaluated there."""

    delta: float       # rotor angle, rad
    e_q_tr: float      # internal (transient) voltage
    e_fd: float        # field voltage
    v_t: float         # terminal voltage magnitude
    i_d: float
    i_q: float
    p: float           # injected power p_ref + e
    k1: float
    k2: float
    k3: float
    k4: float
    k5: float
    k6: float
    residual: float    # power-angle equation residual at the solution


def default_config():
    return TestbedConfig()


def load_config(path):
    with open(path) as fh:
        data = json.load(fh)
    return TestbedConfig(**data)


def save_config(config, path):
    with open(path, "w") as fh:
        json.dump(asdict(config), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _point_quantities(config, delta):
    """Stator/network quantities as functions of the rotor angle.

    Holds the AVR steady state |V_t| = v_ref; returns None when the
    angle cannot support that terminal voltage.
    """
    xq_sum = config.x_q + config.x_e
    v = config.v_bus
    i_q = v * math.sin(delta) / xq_sum
    v_td = config.x_q * i_q
    rad = config.v_ref**2 - v_td**2
    if rad <= 0.0:
        return None
    v_tq = math.sqrt(rad)
    i_d = (v_tq - v * math.cos(delta)) / config.x_e
    e_q_tr = v_tq + config.x_d_tr * i_d
    p_e = e_q_tr * i_q + (config.x_q - config.x_d_tr) * i_d * i_q
    return i_d, i_q, v_td, v_tq, e_q_tr, p_e


def solve_equilibrium(config, e):
    """Operating point for injected power p_ref + e by 1-D root finding.

    The rotor angle solves the power-angle relation P_e(delta) = p on the
    principal branch |delta| < pi/2.
    """
    p = config.p_ref + e
    v = config.v_bus

    def power_residual(delta):
        quantities = _point_quantities(config, delta)
        if quantities is None:
            return math.nan
        return quantities[5] - p

    # restrict to angles with a real terminal voltage and |delta| < 90 deg
    xq_sum = config.x_q + config.x_e
    sin_lim = min(1.0, config.v_ref * xq_sum / (config.x_q * v))
    delta_lim = math.asin(sin_lim) * (1.0 - 1e-9)
    delta_lim = min(delta_lim, math.pi / 2 * (1.0 - 1e-9))
    f_lo = power_residual(-delta_lim)
    f_hi = power_residual(delta_lim)
    if not (math.isfinite(f_lo) and math.isfinite(f_hi)) or f_lo * f_hi > 0:
        raise OperatingPointError(
            f"operating point infeasible for e={e:g} (p={p:g} outside the "
            f"machine's power-angle range)"
        )
    delta0 = brentq(power_residual, -delta_lim, delta_lim, xtol=1e-13, rtol=1e-15)
    i_d, i_q, v_td, v_tq, e_q_tr, p_e = _point_quantities(config, delta0)
    residual = abs(p_e - p)
    if residual > 1e-10:
        raise OperatingPointError(
            f"equilibrium residual {residual:.3e} too large for e={e:g}"
        )

    xq_sum = config.x_q + config.x_e
    xd_tr_sum = config.x_d_tr + config.x_e
    xd_sum = config.x_d + config.x_e
    did_ddelta = v * math.sin(delta0) / xd_tr_sum
    diq_ddelta = v * math.cos(delta0) / xq_sum
    # terminal-voltage sensitivities use v_t = sqrt(v_td^2 + v_tq^2)
    v_t = math.hypot(v_td, v_tq)
    k1 = (e_q_tr + (config.x_q - config.x_d_tr) * i_d) * diq_ddelta \
        + (config.x_q - config.x_d_tr) * i_q * did_ddelta
    k2 = i_q * xq_sum / xd_tr_sum
    k3 = xd_tr_sum / xd_sum
    k4 = (config.x_d - config.x_d_tr) * did_ddelta
    k5 = (v_td / v_t) * config.x_q * diq_ddelta \
        - (v_tq / v_t) * config.x_d_tr * did_ddelta
    k6 = (v_tq / v_t) * (config.x_e / xd_tr_sum)
    if k1 <= 0.0:
        raise OperatingPointError(
            f"operating point infeasible for e={e:g}: synchronizing "
            f"coefficient K1={k1:.4g} is not positive"
        )
    e_fd = e_q_tr + (config.x_d - config.x_d_tr) * i_d
    return OperatingPoint(
        delta=delta0, e_q_tr=e_q_tr, e_fd=e_fd, v_t=v_t, i_d=i_d, i_q=i_q,
        p=p, k1=k1, k2=k2, k3=k3, k4=k4, k5=k5, k6=k6, residual=residual,
    )


def linearize(config, e=0.0):
    """4-state Heffron-Phillips model at injected power p_ref + e.

    States (d_delta, d_omega, d_eq_tr, d_efd); input is the stabilizer
    signal at the exciter summing junction (sign flipped so the
    negative-feedback loop closure realizes the classic additive
    stabilizer wiring); output is the rotor-speed deviation d_omega.
    """
    op = solve_equilibrium(config, e)
    h2 = 2.0 * config.h
    a = np.array(
        [
            [0.0, config.omega_s, 0.0, 0.0],
            [-op.k1 / h2, -config.d_damp / h2, -op.k2 / h2, 0.0],
            [-op.k4 / config.t_d0_tr, 0.0,
             -1.0 / (op.k3 * config.t_d0_tr), 1.0 / config.t_d0_tr],
            [-config.k_a * op.k5 / config.t_a, 0.0,
             -config.k_a * op.k6 / config.t_a, -1.0 / config.t_a],
        ]
    )
    b = np.array([[0.0], [0.0], [0.0], [-config.k_a / config.t_a]])
    c = np.array([[0.0, 1.0, 0.0, 0.0]])
    d = np.zeros((1, 1))
    return StateSpaceModel(
        a=a, b=b, c=c, d=d,
        state_names=("d_delta", "d_omega", "d_eq_tr", "d_efd"),
        input_names=("v_stab",),
        output_names=("d_omega",),
    )


@dataclass
class ModeTracker:
    """Caller-owned token carrying the tracked critical-mode eigenvector.

    A fresh tracker falls back to the lowest-damping oscillatory mode;
    afterwards the mode is followed by maximum eigenvector overlap, which
    stays stable across eigenvalue crossings.
    """

    vector: np.ndarray | None = None

    def pick(self, modes):
        osc = modes.oscillatory()
        if osc.size == 0:
            raise SmallSignalError("no oscillatory mode to track")
        if self.vector is None or len(self.vector) != modes.right_vectors.shape[0]:
            idx = int(osc[np.argmin(modes.damping_ratios[osc])])
        else:
            overlaps = np.abs(self.vector.conj() @ modes.right_vectors[:, osc])
            idx = int(osc[np.argmax(overlaps)])
        vec = modes.right_vectors[:, idx]
        self.vector = vec / np.linalg.norm(vec)
        return idx


def closed_loop_model(plant, params):
    """Plant with the realized controller attached at the designated channel."""
    return close_loop(plant, realize_controller(params), input_channel=0, output_channel=0)


def closed_loop_damping(plant, params, tracker=None):
    """Critical-mode damping ratio of the closed loop built on ``plant``."""
    modes = eigendecompose(closed_loop_model(plant, params))
    tracker = tracker if tracker is not None else ModeTracker()
    idx = tracker.pick(modes)
    return float(modes.damping_ratios[idx])


def damping_map(config, params, e, tracker=None):
    """Critical-mode damping of the closed loop at injected-power error e.

    This is the exact disturbance-to-damping map that the polynomial
    surrogate approximates.  Pass a ``ModeTracker`` to follow one mode
    through a sweep; without one the lowest-damping oscillatory mode of
    the closed loop is reported.
    """
    return closed_loop_damping(linearize(config, e), params, tracker)


def scenario_generate(config, n, mix=(0.6, (-0.3, 0.3), (-1.0, 1.0)), seed=0):
    """Stratified disturbance scenarios from a two-range uniform mixture.

    ``mix`` is (inner fraction, inner range, outer range); exactly
    round(fraction * n) draws come from the inner range and the rest from
    the outer range.  Deterministic for a given seed.
    """
    fraction, inner, outer = mix
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("mixture fraction must lie in [0, 1]")
    for lo, hi in (inner, outer):
        if lo >= hi:
            raise ValueError("scenario range must satisfy lo < hi")
        if lo < config.e_min - 1e-12 or hi > config.e_max + 1e-12:
            raise ValueError(
                f"scenario range [{lo:g}, {hi:g}] exceeds disturbance bounds "
                f"[{config.e_min:g}, {config.e_max:g}]"
            )
    rng = np.random.default_rng(seed)
    n_inner = int(round(fraction * n))
    inner_draws = rng.uniform(inner[0], inner[1], size=n_inner)
    outer_draws = rng.uniform(outer[0], outer[1], size=n - n_inner)
    return np.concatenate([inner_draws, outer_draws])


def write_scenarios(values, path):
    """Single-column CSV with header e_pu."""
    with open(path, "w") as fh:
        fh.write("e_pu\n")
        for v in np.asarray(values, dtype=float):
            fh.write(format(v, ".17g") + "\n")


def read_scenarios(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "e_pu":
            raise ValueError(f"scenario file {path} must start with header 'e_pu'")
        values = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed value {line!r}") from None
    return np.array(values)
