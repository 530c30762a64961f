"""Self-contained 2-D intersection simulator."""
from .geometry import MapGeometry, Route, RouteSpec
from .vehicle import Action, Dynamics, VehicleState, bicycle_step
from .world import (
    CollisionEvent,
    SimConfig,
    StepOutcome,
    World,
    detect_collisions,
    front_sector,
    in_conflict_zone,
    lidar_scan,
    observe,
    reset,
    step,
)

__all__ = [
    "Action", "CollisionEvent", "Dynamics", "MapGeometry", "Route", "RouteSpec", "SimConfig",
    "StepOutcome", "VehicleState", "World", "bicycle_step", "detect_collisions", "front_sector",
    "in_conflict_zone", "lidar_scan", "observe", "reset", "step",
]
