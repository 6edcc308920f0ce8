"""Synthetic driver: neuromuscular admittance, reaction dynamics, scripted
recovery timelines, and online arm-stiffness estimation.

The driver's applied steering torque T_H follows a first-order lag

    tau_H * dT_H/dt + T_H = lam * T_hpt + awareness(t) * gain * T_perceived

plus a low-pass (OU) noise term.  With T_hpt = 0 this is the unassisted
tracking behaviour used in the fade-out condition; with the tracking term
zero it reduces to the pure haptic-following law used by the guidance
controller's prediction model.  Awareness ramps from zero after hands-on;
haptic guidance shortens the ramp (``recovery_scale_guided`` vs.
``recovery_scale_unassisted``), which is the mechanism that speeds up
state recovery in the assisted condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

ATTENTION_LOW = "Low"
ATTENTION_HIGH = "High"

# Correlation time of the torque noise process (s).
NOISE_TAU = 0.5


@dataclass(frozen=True)
class NeuromuscularParams:
    """Coupled driver-arm + steering column second-order admittance."""

    J_dr: float = 0.05   # kg*m^2
    B_dr: float = 0.4    # N*m*s/rad
    K_dr: float = 2.5    # N*m/rad
    J_st: float = 0.1    # steering-side values; defaults mirror the column
    B_st: float = 0.5
    K_st: float = 12.0

    def __post_init__(self) -> None:
        if self.J_dr + self.J_st <= 0.0:
            raise ValueError("total inertia must be > 0")
        if self.K_dr < 0.0:
            raise ValueError("K_dr must be >= 0")

    @property
    def inertia(self) -> float:
        return self.J_dr + self.J_st

    @property
    def damping(self) -> float:
        return self.B_dr + self.B_st

    @property
    def stiffness(self) -> float:
        return self.K_st + self.K_dr


@dataclass(frozen=True)
class DriverProfile:
    """Per-participant reaction parameters.

    reaction_delay and attention_recovery_delay are measured from the
    takeover request; k_* describe the grip-stiffness ramp that starts at
    hands-on.  recovery_scale_* multiply attention_recovery_delay to give
    the awareness ramp duration with and without haptic guidance.
    """

    tau_H: float = 0.5
    lam: float = 6.0
    reaction_delay: float = 1.2
    attention_recovery_delay: float = 2.2
    k_relaxed: float = 0.5
    k_engaged: float = 4.0
    k_ramp_time: float = 1.75
    baseline_gain: float = 1.05
    baseline_noise_sd: float = 0.25
    recovery_scale_unassisted: float = 2.75
    recovery_scale_guided: float = 1.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.tau_H <= 0.0 or self.lam <= 0.0:
            raise ValueError("tau_H and lam must be > 0")
        if min(self.reaction_delay, self.attention_recovery_delay) < 0.0:
            raise ValueError("delays must be >= 0")
        if self.k_relaxed >= self.k_engaged:
            raise ValueError("k_relaxed must be < k_engaged")


@dataclass
class DriverState:
    t: float = 0.0                  # time since the takeover request
    T_H: float = 0.0                # applied torque, lag + noise
    K_current: float = 0.5
    attention: str = ATTENTION_LOW
    hands_on: bool = False
    T_H_lag: float = 0.0            # internal lag state
    noise: float = 0.0              # internal OU noise state


@dataclass
class StiffnessEstimate:
    k_hat: float = 0.0
    covariance: float = 100.0
    sample_count: int = 0


def admittance_response(params: NeuromuscularParams,
                        torque: np.ndarray, dt: float) -> np.ndarray:
    """Steering-wheel angle trace for a driver-torque trace (Euler)."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    torque = np.asarray(torque, dtype=float)
    theta = np.zeros_like(torque)
    th, om = 0.0, 0.0
    inv_j = 1.0 / params.inertia
    for i, u in enumerate(torque):
        theta[i] = th
        acc = (u - params.damping * om - params.stiffness * th) * inv_j
        th += dt * om
        om += dt * acc
    return theta


def scripted_state(profile: DriverProfile, t_since_tor: float) -> DriverState:
    """Scripted recovery timeline standing in for driver monitoring."""
    if t_since_tor < 0.0:
        raise ValueError("t_since_tor must be >= 0")
    hands_on = t_since_tor >= profile.reaction_delay
    attention = (ATTENTION_HIGH
                 if t_since_tor >= profile.attention_recovery_delay
                 else ATTENTION_LOW)
    if hands_on:
        frac = min(1.0, (t_since_tor - profile.reaction_delay)
                   / profile.k_ramp_time)
        k = profile.k_relaxed + frac * (profile.k_engaged - profile.k_relaxed)
    else:
        k = profile.k_relaxed
    return DriverState(t=t_since_tor, K_current=k, attention=attention,
                       hands_on=hands_on)


def awareness(profile: DriverProfile, t_since_tor: float,
              recovery_scale: float = 1.0) -> float:
    """0 -> 1 task re-engagement ramp starting at hands-on."""
    if t_since_tor < profile.reaction_delay:
        return 0.0
    ramp = profile.attention_recovery_delay * recovery_scale
    if ramp <= 0.0:
        return 1.0
    return min(1.0, (t_since_tor - profile.reaction_delay) / ramp)


def guided_reaction_step(state: DriverState, t_hpt: float,
                         profile: DriverProfile, dt: float) -> DriverState:
    """Pure haptic-following step: tau_H*dT_H/dt + T_H = lam*T_hpt."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if not state.hands_on:
        return replace(state, t=state.t + dt)
    t_h = state.T_H + (dt / profile.tau_H) * (profile.lam * t_hpt - state.T_H)
    return replace(state, t=state.t + dt, T_H=t_h, T_H_lag=t_h)


def _ou_step(noise: float, sd: float, dt: float,
             rng: np.random.Generator) -> float:
    if sd <= 0.0:
        return 0.0
    decay = 1.0 - dt / NOISE_TAU
    return decay * noise + sd * math.sqrt(2.0 * dt / NOISE_TAU) * rng.standard_normal()


def baseline_reaction_step(state: DriverState, t_ref_perceived: float,
                           profile: DriverProfile, dt: float,
                           rng: np.random.Generator,
                           recovery_scale: float = 1.0) -> DriverState:
    """Unassisted tracking step toward gain * awareness * T_ref_perceived."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    t_next = state.t + dt
    if not state.hands_on:
        return replace(state, t=t_next)
    w = awareness(profile, state.t, recovery_scale)
    target = profile.baseline_gain * w * t_ref_perceived
    lag = state.T_H_lag + (dt / profile.tau_H) * (target - state.T_H_lag)
    nu = _ou_step(state.noise, profile.baseline_noise_sd, dt, rng)
    return replace(state, t=t_next, T_H=lag + nu, T_H_lag=lag, noise=nu)


def driver_step(state: DriverState, t_hpt: float, t_ref_perceived: float,
                profile: DriverProfile, dt: float, rng: np.random.Generator,
                guided: bool) -> DriverState:
    """Combined step: haptic following plus own tracking plus noise.

    ``guided`` selects the awareness ramp duration; the haptic term is
    whatever torque is currently rendered on the wheel (zero in the
    fade-out condition).
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    t_next = state.t + dt
    if not state.hands_on:
        return replace(state, t=t_next)
    scale = (profile.recovery_scale_guided if guided
             else profile.recovery_scale_unassisted)
    w = awareness(profile, state.t, scale)
    target = (profile.lam * t_hpt
              + profile.baseline_gain * w * t_ref_perceived)
    lag = state.T_H_lag + (dt / profile.tau_H) * (target - state.T_H_lag)
    nu = _ou_step(state.noise, profile.baseline_noise_sd, dt, rng)
    return replace(state, t=t_next, T_H=lag + nu, T_H_lag=lag, noise=nu)


# Below |theta| the stiffness regression is unobservable and skipped.
_THETA_MIN = 1e-4


def stiffness_estimate_update(est: StiffnessEstimate, theta: float,
                              theta_dot: float, theta_ddot: float,
                              t_h: float, inertia: float, damping: float,
                              forgetting: float = 0.995) -> StiffnessEstimate:
    """One recursive-least-squares update of the total stiffness K.

    Model: T_H - J*theta_ddot - B*theta_dot = K * theta with J, B known.
    """
    for v in (theta, theta_dot, theta_ddot, t_h):
        if not math.isfinite(v):
            raise ValueError("regressors must be finite")
    if abs(theta) < _THETA_MIN:
        return est
    z = t_h - inertia * theta_ddot - damping * theta_dot
    phi = theta
    denom = forgetting + phi * est.covariance * phi
    gain = est.covariance * phi / denom
    k_hat = est.k_hat + gain * (z - est.k_hat * phi)
    cov = (est.covariance - gain * phi * est.covariance) / forgetting
    return StiffnessEstimate(k_hat=k_hat, covariance=cov,
                             sample_count=est.sample_count + 1)


def estimate_from_traces(theta: np.ndarray, t_h: np.ndarray, dt: float,
                         inertia: float, damping: float,
                         est: StiffnessEstimate | None = None,
                         smooth_window: int = 5) -> StiffnessEstimate:
    """Run the RLS over sampled traces.

    Derivatives come from central differences smoothed with a centered
    moving average (the same filter the metrics pipeline uses).
    """
    from .metrics import moving_average

    theta = np.asarray(theta, dtype=float)
    t_h = np.asarray(t_h, dtype=float)
    if est is None:
        est = StiffnessEstimate()
    if theta.size < 3:
        return est
    d1 = np.gradient(theta, dt)
    d2 = np.gradient(d1, dt)
    d1 = moving_average(d1, smooth_window)
    d2 = moving_average(d2, smooth_window)
    for i in range(theta.size):
        est = stiffness_estimate_update(est, theta[i], d1[i], d2[i],
                                        t_h[i], inertia, damping)
    return est


@dataclass(frozen=True)
class CohortDistributions:
    """Uniform sampling ranges for the virtual cohort (calibration knobs)."""

    reaction_delay: tuple[float, float] = (0.8, 1.6)
    attention_recovery_delay: tuple[float, float] = (1.5, 3.0)
    tau_H: tuple[float, float] = (0.4, 0.6)
    lam: float = 6.0
    k_relaxed: float = 0.5
    k_engaged: float = 4.0
    k_ramp_time: tuple[float, float] = (1.0, 2.5)
    baseline_gain: tuple[float, float] = (1.0, 1.2)
    baseline_noise_sd: tuple[float, float] = (0.15, 0.35)
    recovery_scale_unassisted: tuple[float, float] = (2.4, 3.1)
    recovery_scale_guided: tuple[float, float] = (0.9, 1.3)


def sample_profile(rng: np.random.Generator, dist: CohortDistributions,
                   rng_seed: int) -> DriverProfile:
    """Draw one participant. Draw order is fixed; do not reorder."""
    u = lambda lohi: float(rng.uniform(*lohi))
    return DriverProfile(
        tau_H=u(dist.tau_H),
        lam=dist.lam,
        reaction_delay=u(dist.reaction_delay),
        attention_recovery_delay=u(dist.attention_recovery_delay),
        k_relaxed=dist.k_relaxed,
        k_engaged=dist.k_engaged,
        k_ramp_time=u(dist.k_ramp_time),
        baseline_gain=u(dist.baseline_gain),
        baseline_noise_sd=u(dist.baseline_noise_sd),
        recovery_scale_unassisted=u(dist.recovery_scale_unassisted),
        recovery_scale_guided=u(dist.recovery_scale_guided),
        rng_seed=rng_seed,
    )
