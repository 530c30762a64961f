"""Vehicle state, actions and the kinematic bicycle integrator."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class Action:
    steer: float = 0.0
    throttle: float = 0.0

    def clamped(self) -> "Action":
        return Action(min(max(float(self.steer), -1.0), 1.0), min(max(float(self.throttle), -1.0), 1.0))

    @classmethod
    def coerce(cls, value) -> "Action":
        if isinstance(value, Action):
            return value.clamped()
        steer, throttle = value
        return cls(steer, throttle).clamped()


@dataclass(frozen=True)
class Dynamics:
    wheelbase: float = 2.5
    max_steer: float = 0.7
    max_accel: float = 2.0
    max_brake: float = 4.0
    max_speed: float = 10.0
    max_reverse_speed: float = 2.0
    length: float = 4.5
    width: float = 2.0


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float = 0.0
    route_progress: float = 0.0
    last_action: Action = Action()
    in_contact: bool = False
    off_road: bool = False
    arrived: bool = False
    active: bool = True

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


def bicycle_step(state: VehicleState, action: Action, dt: float = 0.1, dyn: Dynamics = Dynamics()) -> VehicleState:
    """Advance one vehicle by ``dt`` seconds with semi-implicit Euler.

    Speed is updated first and the new speed drives both the yaw change and
    the displacement. Braking never carries a forward-moving vehicle into
    reverse within a single step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    a = action.clamped()
    v = state.speed
    if a.throttle < 0 and v > 0:
        v_new = max(v + a.throttle * dyn.max_brake * dt, 0.0)
    else:
        v_new = v + a.throttle * dyn.max_accel * dt
    v_new = min(max(v_new, -dyn.max_reverse_speed), dyn.max_speed)
    theta = state.heading + (v_new / dyn.wheelbase) * math.tan(a.steer * dyn.max_steer) * dt
    return replace(
        state,
        x=state.x + v_new * dt * math.cos(theta),
        y=state.y + v_new * dt * math.sin(theta),
        heading=theta,
        speed=v_new,
        last_action=a,
    )
