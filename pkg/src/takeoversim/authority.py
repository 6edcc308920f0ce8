"""Driver control-ability assessment, authority allocation, and
takeover-completion detection.

The degree of intervention alpha is the fraction of the required optimal
torque currently supplied by the driver, clamped by the allowed authority
alpha_ref.  When the required torque is too close to zero the ratio is
undefined (returned as ``None``) and completion falls back to holding the
steering wheel near the neutral angle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .driver import ATTENTION_HIGH

ABILITY_LOW = "Low"
ABILITY_MEDIUM = "Medium"
ABILITY_HIGH = "High"

PHASE_AUTOMATION = "AutomationDominant"
PHASE_HUMAN = "HumanDominant"
PHASE_COMPLETED = "Completed"


@dataclass(frozen=True)
class Thresholds:
    alpha1: float = 0.30
    alpha2: float = 0.60
    alpha3: float = 0.90
    hold_duration: float = 1.5          # s the stabilized band must hold
    k_l: float = 2.5                    # N*m/rad muscle-state threshold
    t_ref_epsilon: float = 0.2          # N*m below which alpha is undefined
    theta_hold: float = 2.0 * math.pi / 180.0  # rad, straight-road fallback

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha1 < self.alpha2 < self.alpha3 < 1.0):
            raise ValueError("need 0 < alpha1 < alpha2 < alpha3 < 1")


@dataclass
class AuthorityStatus:
    alpha: float | None = 0.0
    alpha_ref: float = 0.30
    ability: str = ABILITY_LOW
    phase: str = PHASE_AUTOMATION
    hold_timer: float = 0.0
    hold_entry: float | None = None
    completion_entry: float | None = None   # reported takeover instant
    completion_confirm: float | None = None # entry + hold_duration

    @property
    def completed(self) -> bool:
        return self.phase == PHASE_COMPLETED


def classify_ability(attention: str, k_current: float,
                     thr: Thresholds) -> str:
    """2x2 table over (attention, muscle state)."""
    if not math.isfinite(k_current):
        raise ValueError("k_current must be finite")
    attention_high = attention == ATTENTION_HIGH
    muscle_high = k_current > thr.k_l
    if attention_high and muscle_high:
        return ABILITY_HIGH
    if attention_high or muscle_high:
        return ABILITY_MEDIUM
    return ABILITY_LOW


def allowed_authority(ability: str, alpha_current: float) -> float:
    """Authority ceiling for the assessed ability level."""
    if ability == ABILITY_LOW:
        return 0.30
    if ability == ABILITY_MEDIUM:
        return 0.60
    if ability == ABILITY_HIGH:
        return 0.90 if alpha_current < 0.90 else 1.00
    raise ValueError(f"unknown ability level {ability!r}")


def degree_of_intervention(t_h: float, t_ref: float, alpha_ref: float,
                           thr: Thresholds) -> float | None:
    """alpha = min(alpha_ref, T_H / T_ref), clamped into [0, 1].

    Opposite-sign driver torque counts as zero; a near-zero T_ref makes
    the ratio meaningless and returns None (the caller falls back to the
    steering-angle hold criterion).
    """
    if not (math.isfinite(t_h) and math.isfinite(t_ref)):
        raise ValueError("torques must be finite")
    if abs(t_ref) < thr.t_ref_epsilon:
        return None
    ratio = t_h / t_ref
    if ratio < 0.0:
        ratio = 0.0
    elif ratio > 1.0:
        ratio = 1.0
    return min(alpha_ref, ratio)


def select_phase(status: AuthorityStatus, alpha: float | None,
                 thr: Thresholds) -> str:
    """Dominance phase from alpha; undefined alpha keeps the last phase."""
    if status.completed:
        return PHASE_COMPLETED
    if alpha is None:
        return status.phase
    return PHASE_AUTOMATION if alpha < thr.alpha2 else PHASE_HUMAN


def update_completion(status: AuthorityStatus, alpha: float | None,
                      theta_sw: float, theta_neutral: float,
                      hands_on: bool, t: float, thr: Thresholds
                      ) -> AuthorityStatus:
    """Advance the stabilization detector by one control tick.

    The takeover is complete once alpha holds inside [alpha3, 1] for
    hold_duration; with alpha undefined the criterion is the wheel held
    within theta_hold of the neutral angle (hands on the wheel required
    either way).  The reported takeover instant is the entry into the
    band, confirmed retroactively.  Completion never reverts.
    """
    if status.completed:
        return status
    if alpha is not None:
        in_band = thr.alpha3 <= alpha <= 1.0
    else:
        in_band = abs(theta_sw - theta_neutral) < thr.theta_hold
    if not (hands_on and in_band):
        status.hold_entry = None
        status.hold_timer = 0.0
        return status
    if status.hold_entry is None:
        status.hold_entry = t
    status.hold_timer = t - status.hold_entry
    if status.hold_timer >= thr.hold_duration - 1e-9:
        status.phase = PHASE_COMPLETED
        status.completion_entry = status.hold_entry
        status.completion_confirm = t
    return status
