"""Torque controllers: the lane-tracking reference MPC (T_ref), the
two-phase haptic controller (T_hpt), torque blending, and the fade-out
strategy used as the comparison condition.

Before the takeover completes the automation torque T_A always closes the
gap T_ref - T_H - T_hpt, so the plant input u equals the required torque
T_ref identically; afterwards the automation and haptics are disengaged
and u is the driver torque alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import qp
from .vehicle import VehicleParams, linearize

FADE_SLOPE = 2.5  # N*m/s, fade-out condition


class ControllerFault(RuntimeError):
    """QP solver failed inside a controller; carries the solver status."""


@dataclass(frozen=True)
class RefMpcParams:
    """Lane-tracking MPC weights/limits (tabulated defaults).

    The prediction model advances dt_pred per horizon step, internally
    composed of n_sub Euler sub-steps so the stiff steering-column mode
    stays stable under the explicit discretization.
    """

    w_y: float = 2.5e3
    w_psi: float = 7.0e3
    q: float = 4.0e2
    t_bound: float = 10.0      # N*m box on T_ref
    t_rate: float = 10.0       # N*m/s slew on T_ref
    n_horizon: int = 10
    dt_pred: float = 0.1
    n_sub: int = 5

    def __post_init__(self) -> None:
        if min(self.w_y, self.w_psi) < 0.0 or self.q <= 0.0:
            raise ValueError("weights must be PSD, q > 0")
        if self.n_horizon < 1 or self.n_sub < 1:
            raise ValueError("horizon and substep count must be >= 1")


@dataclass(frozen=True)
class HapticMpcParams:
    """Predictive haptic-guidance MPC weights/limits (tabulated defaults)."""

    w: float = 1.0e2
    q: float = 1.0
    t_bound: float = 10.0      # N*m box on T_hpt
    t_rate: float = 10.0       # N*m/s slew on T_hpt
    tau_H: float = 0.5
    lam: float = 6.0
    n_horizon: int = 10
    dt: float = 0.02

    def __post_init__(self) -> None:
        if self.w <= 0.0 or self.q <= 0.0:
            raise ValueError("w and q must be > 0")


@dataclass(frozen=True)
class TorqueSplit:
    t_ref: float
    t_h: float
    t_hpt: float
    t_a: float
    u: float


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Road-frame (y, psi) reference samples over the prediction horizon."""

    y: np.ndarray
    psi: np.ndarray

    def __post_init__(self) -> None:
        if len(self.y) != len(self.psi):
            raise ValueError("y and psi must have equal length")


def rate_limit(value: float, prev: float, max_delta: float) -> float:
    return min(max(value, prev - max_delta), prev + max_delta)


class ReferenceMpc:
    """Receding-horizon lane-tracking controller producing T_ref."""

    def __init__(self, params: RefMpcParams, vparams: VehicleParams,
                 dt_ctrl: float):
        self.params = params
        self.dt_ctrl = dt_ctrl
        sub = linearize(vparams, params.dt_pred / params.n_sub)
        a_blk = np.eye(7)
        b_blk = np.zeros(7)
        for _ in range(params.n_sub):
            b_blk = sub.A @ b_blk + sub.B.ravel()
            a_blk = sub.A @ a_blk
        w = np.diag([params.w_y, params.w_psi])
        # The applied move is re-planned every control tick, so the first
        # rate window uses the control period; later steps use dt_pred.
        self.mpc = qp.CondensedMpc(
            a_blk, b_blk, sub.C, params.n_horizon, w, params.q,
            -params.t_bound, params.t_bound,
            -params.t_rate * params.dt_pred, params.t_rate * params.dt_pred,
            du_first=(-params.t_rate * dt_ctrl, params.t_rate * dt_ctrl),
        )
        self.t_prev = 0.0
        self._warm: np.ndarray | None = None
        self.last_kkt = 0.0
        self.solve_count = 0

    def compute(self, x0: np.ndarray, traj: ReferenceTrajectory) -> float:
        ref = np.column_stack([traj.y, traj.psi])
        problem = self.mpc.problem_for(x0, ref, self.t_prev)
        sol = qp.solve(problem, self._warm)
        if sol.status != qp.STATUS_OPTIMAL:
            raise ControllerFault(
                f"reference MPC solve failed: {sol.status} "
                f"(kkt={sol.kkt_residual:.3e})")
        self._warm = np.append(sol.x[1:], sol.x[-1])
        self.t_prev = float(sol.x[0])
        self.last_kkt = sol.kkt_residual
        self.solve_count += 1
        return self.t_prev


def compute_t_ref(state_rf: np.ndarray, traj: ReferenceTrajectory,
                  params: RefMpcParams, t_ref_prev: float,
                  vparams: VehicleParams, dt_ctrl: float = 0.02) -> float:
    """One-shot T_ref solve (the stateful ReferenceMpc is the loop form)."""
    ctrl = ReferenceMpc(params, vparams, dt_ctrl)
    ctrl.t_prev = t_ref_prev
    return ctrl.compute(np.asarray(state_rf, dtype=float), traj)


class HapticGuidanceMpc:
    """Phase-1 guidance: drive the intervention ratio toward alpha_ref.

    Prediction model is the Euler-discretized driver reaction
    T_H,i+1 = T_H,i + (dt/tau_H) (lam*T_hpt,i - T_H,i); the ratio
    alpha_i = T_H,i / T_ref is tracked with T_ref frozen at its
    current-tick value, which keeps the problem a QP.  Tracking alpha
    against alpha_ref with weight w equals tracking T_H against
    alpha_ref*T_ref with weight w/T_ref^2.
    """

    def __init__(self, params: HapticMpcParams, t_ref_epsilon: float = 0.2):
        self.params = params
        self.t_ref_epsilon = t_ref_epsilon
        a = 1.0 - params.dt / params.tau_H
        b = params.dt * params.lam / params.tau_H
        du = params.t_rate * params.dt
        self.mpc = qp.CondensedMpc(a, b, 1.0, params.n_horizon, 1.0,
                                   params.q, -params.t_bound, params.t_bound,
                                   -du, du)
        self.t_prev = 0.0
        self._warm: np.ndarray | None = None
        self.last_kkt = 0.0
        self.solve_count = 0

    def compute(self, t_h_now: float, t_ref_now: float,
                alpha_ref: float) -> float:
        if abs(t_ref_now) < self.t_ref_epsilon:
            # No meaningful ratio to guide toward on a straight road.
            self.t_prev = rate_limit(0.0, self.t_prev,
                                     self.params.t_rate * self.params.dt)
            return self.t_prev
        ref = np.full(self.params.n_horizon, alpha_ref * t_ref_now)
        w_scale = self.params.w / (t_ref_now * t_ref_now)
        problem = self.mpc.problem_for(np.array([t_h_now]), ref, self.t_prev,
                                       w_scale=w_scale)
        sol = qp.solve(problem, self._warm)
        if sol.status != qp.STATUS_OPTIMAL:
            raise ControllerFault(
                f"haptic MPC solve failed: {sol.status} "
                f"(kkt={sol.kkt_residual:.3e})")
        self._warm = np.append(sol.x[1:], sol.x[-1])
        self.t_prev = float(sol.x[0])
        self.last_kkt = sol.kkt_residual
        self.solve_count += 1
        return self.t_prev


def compute_t_hpt_guidance(t_h_now: float, t_ref_now: float,
                           alpha_ref: float, params: HapticMpcParams,
                           t_hpt_prev: float,
                           t_ref_epsilon: float = 0.2) -> float:
    """One-shot phase-1 guidance torque."""
    ctrl = HapticGuidanceMpc(params, t_ref_epsilon)
    ctrl.t_prev = t_hpt_prev
    return ctrl.compute(t_h_now, t_ref_now, alpha_ref)


def compute_t_hpt_assistance(alpha_ref: float, t_ref_now: float,
                             t_h_now: float, t_bound: float = 10.0) -> float:
    """Phase-2 assistance: compensate the driver toward alpha_ref*T_ref."""
    t = alpha_ref * t_ref_now - t_h_now
    return min(max(t, -t_bound), t_bound)


def blend(t_ref: float, t_h: float, t_hpt: float,
          completed: bool) -> TorqueSplit:
    """Torque split applied to the plant.

    Before completion the automation fills the remainder so u == t_ref;
    after completion automation and haptics are off and u is the driver
    torque alone.
    """
    for v in (t_ref, t_h, t_hpt):
        if not math.isfinite(v):
            raise ValueError("torques must be finite")
    if completed:
        return TorqueSplit(t_ref=t_ref, t_h=t_h, t_hpt=0.0, t_a=0.0, u=t_h)
    t_a = t_ref - t_h - t_hpt
    return TorqueSplit(t_ref=t_ref, t_h=t_h, t_hpt=t_hpt, t_a=t_a,
                       u=t_h + t_a + t_hpt)


def baseline_fade(t_a_at_intervention: float,
                  t_since_intervention: float) -> float:
    """Automation torque under the fixed-slope fade-out strategy."""
    if t_since_intervention < 0.0:
        raise ValueError("t_since_intervention must be >= 0")
    mag = abs(t_a_at_intervention) - FADE_SLOPE * t_since_intervention
    return math.copysign(max(0.0, mag), t_a_at_intervention)
