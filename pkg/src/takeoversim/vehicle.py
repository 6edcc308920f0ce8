"""Lateral vehicle + steering-column dynamics (single-track model).

State vector (7 components):

    x = [Y, y, y_dot, psi, psi_dot, theta_sw, theta_sw_dot]

Y is the lateral position of the CoG in the ground frame, y/y_dot the
body-frame lateral position/velocity, psi the yaw angle, theta_sw the
steering-wheel angle.  The single input u is the total torque applied to
the steering column (N*m).  Cornering stiffnesses are carried as negative
numbers; the sign convention of the cross-coupling coefficient a2 is
checked at construction (see ``coefficients``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

DEG = math.pi / 180.0


class IntegrationBlowup(RuntimeError):
    """Raised when an Euler step produces a non-finite state component."""


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the vehicle and steering column.

    Units: m [kg], l_f/l_r [m], K_f/K_r [N/rad, negative], I_z [kg*m^2],
    i_sw [-], I_sw [kg*m^2], B_sw [N*s/m as tabulated], K_sw [N/rad as
    tabulated], K_align [N*m/rad of front drift angle], v_x [m/s],
    delta_max [rad at the front wheels].
    """

    m: float = 1830.0
    l_f: float = 1.26
    l_r: float = 1.45
    K_f: float = -125454.0
    K_r: float = -125454.0
    I_z: float = 3200.0
    i_sw: float = 16.0
    I_sw: float = 0.1
    B_sw: float = 0.5
    K_sw: float = 12.0
    K_align: float = 60.0
    v_x: float = 10.0
    delta_max: float = 20.0 * DEG

    def __post_init__(self) -> None:
        for name in ("m", "I_z", "I_sw", "i_sw", "v_x"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"vehicle parameter {name} must be > 0")
        if self.delta_max <= 0.0:
            raise ValueError("delta_max must be > 0")

    @property
    def theta_sw_max(self) -> float:
        """Steering-wheel angle limit implied by the front-wheel limit."""
        return self.i_sw * self.delta_max


@dataclass
class VehicleState:
    Y: float = 0.0
    y: float = 0.0
    y_dot: float = 0.0
    psi: float = 0.0
    psi_dot: float = 0.0
    theta_sw: float = 0.0
    theta_sw_dot: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.Y, self.y, self.y_dot, self.psi, self.psi_dot,
             self.theta_sw, self.theta_sw_dot]
        )

    def copy(self) -> "VehicleState":
        return replace(self)


@dataclass(frozen=True)
class Coefficients:
    """Continuous-time model coefficients a1..a10 (see module docstring).

    a1 [1/s], a2 [m/s], a3 [m/s^2 per rad], a4 [1/(m*s)], a5 [1/s],
    a6 [1/s^2], a7 [rad/(m*s)], a8 [1/s], a9 [1/s^2], a10 [1/s].
    sign_convention records whether the cross-coupling term a2 kept the
    tabulated "+v_x" form or was switched to the conventional "-v_x".
    """

    a1: float
    a2: float
    a3: float
    a4: float
    a5: float
    a6: float
    a7: float
    a8: float
    a9: float
    a10: float
    sign_convention: str = "plus_vx"


@dataclass(frozen=True)
class LinearModel:
    """Euler-discretized linear model x+ = A_d x + B_d u, r = C x."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dt: float
    coeffs: Coefficients = field(repr=False, default=None)


# Output matrix selecting (Y, psi).
C_OUTPUT = np.zeros((2, 7))
C_OUTPUT[0, 0] = 1.0
C_OUTPUT[1, 3] = 1.0

# Real-part threshold of the (y_dot, psi_dot) sub-block above which the
# tabulated "+v_x" convention is treated as non-physical and switched.
_EIG_GATE = 0.5


def coefficients(p: VehicleParams) -> Coefficients:
    """Model coefficients from physical constants.

    The tabulated form of a2 carries "+v_x"; if that choice makes the
    (y_dot, psi_dot) sub-block diverge (real eigenvalue part above
    +0.5 1/s) the conventional "-v_x" is used instead and recorded in
    ``sign_convention``.
    """
    if p.v_x == 0.0:
        raise ValueError("v_x must be nonzero: coefficients divide by v_x")
    a1 = (p.K_f + p.K_r) / (p.m * p.v_x)
    cross = p.l_f * p.K_f - p.l_r * p.K_r
    a2 = cross / (p.m * p.v_x) + p.v_x
    a3 = -p.K_f / (p.m * p.i_sw)
    a4 = cross / (p.I_z * p.v_x)
    a5 = (p.l_f**2 * p.K_f + p.l_r**2 * p.K_r) / (p.I_z * p.v_x)
    a6 = -p.l_f * p.K_f / (p.I_z * p.i_sw)
    a7 = p.K_align / (p.I_sw * p.v_x)
    a8 = p.K_align * p.l_f / (p.I_sw * p.v_x)
    a9 = -p.K_sw / p.I_sw
    a10 = -p.B_sw / p.I_sw

    convention = "plus_vx"
    eigs = np.linalg.eigvals(np.array([[a1, a2], [a4, a5]]))
    if np.max(eigs.real) > _EIG_GATE:
        a2 = cross / (p.m * p.v_x) - p.v_x
        convention = "minus_vx"
    return Coefficients(a1, a2, a3, a4, a5, a6, a7, a8, a9, a10, convention)


def derivative(s: VehicleState, u: float, p: VehicleParams,
               c: Coefficients | None = None) -> VehicleState:
    """Time derivative g(x, u); the Y row keeps sin/cos exact."""
    if c is None:
        c = coefficients(p)
    return VehicleState(
        Y=p.v_x * math.sin(s.psi) + s.y_dot * math.cos(s.psi),
        y=s.y_dot,
        y_dot=c.a1 * s.y_dot + c.a2 * s.psi_dot + c.a3 * s.theta_sw,
        psi=s.psi_dot,
        psi_dot=c.a4 * s.y_dot + c.a5 * s.psi_dot + c.a6 * s.theta_sw,
        theta_sw=s.theta_sw_dot,
        theta_sw_dot=(c.a7 * s.y_dot + c.a8 * s.psi_dot + c.a9 * s.theta_sw
                      + c.a10 * s.theta_sw_dot + u / p.I_sw),
    )


def step_euler(s: VehicleState, u: float, dt: float, p: VehicleParams,
               c: Coefficients | None = None) -> VehicleState:
    """One explicit Euler step with steering-angle saturation."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    if c is None:
        c = coefficients(p)
    d = derivative(s, u, p, c)
    nxt = VehicleState(
        Y=s.Y + dt * d.Y,
        y=s.y + dt * d.y,
        y_dot=s.y_dot + dt * d.y_dot,
        psi=s.psi + dt * d.psi,
        psi_dot=s.psi_dot + dt * d.psi_dot,
        theta_sw=s.theta_sw + dt * d.theta_sw,
        theta_sw_dot=s.theta_sw_dot + dt * d.theta_sw_dot,
    )
    lim = p.theta_sw_max
    if nxt.theta_sw > lim:
        nxt.theta_sw = lim
        nxt.theta_sw_dot = min(nxt.theta_sw_dot, 0.0)
    elif nxt.theta_sw < -lim:
        nxt.theta_sw = -lim
        nxt.theta_sw_dot = max(nxt.theta_sw_dot, 0.0)
    for name in ("Y", "y", "y_dot", "psi", "psi_dot", "theta_sw",
                 "theta_sw_dot"):
        if not math.isfinite(getattr(nxt, name)):
            raise IntegrationBlowup(
                f"state component {name!r} became non-finite at dt={dt}"
            )
    return nxt


def continuous_matrices(p: VehicleParams,
                        c: Coefficients | None = None
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Continuous (A, B) under the small-angle substitution sin psi -> psi."""
    if c is None:
        c = coefficients(p)
    A = np.zeros((7, 7))
    A[0, 2] = 1.0          # Y_dot = y_dot + v_x * psi (small angle)
    A[0, 3] = p.v_x
    A[1, 2] = 1.0
    A[2, 2], A[2, 4], A[2, 5] = c.a1, c.a2, c.a3
    A[3, 4] = 1.0
    A[4, 2], A[4, 4], A[4, 5] = c.a4, c.a5, c.a6
    A[5, 6] = 1.0
    A[6, 2], A[6, 4] = c.a7, c.a8
    A[6, 5], A[6, 6] = c.a9, c.a10
    B = np.zeros((7, 1))
    B[6, 0] = 1.0 / p.I_sw
    return A, B


def linearize(p: VehicleParams, dt: float) -> LinearModel:
    """Euler-discretized prediction model: A_d = I + dt*A, B_d = dt*B."""
    if dt < 0.0:
        raise ValueError("dt must be >= 0")
    c = coefficients(p)
    A, B = continuous_matrices(p, c)
    return LinearModel(A=np.eye(7) + dt * A, B=dt * B, C=C_OUTPUT.copy(),
                       dt=dt, coeffs=c)
