"""Dead reckoning from per-window odometry outputs."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import PolarOdometry
from .lie import Pose, check_rotation, se3_exp, wrap_angle


@dataclass(frozen=True)
class PlanarState:
    heading: float = 0.0
    x: float = 0.0
    y: float = 0.0


def polar_integrate(initial: PlanarState, steps: Sequence[PolarOdometry]) -> list[PlanarState]:
    """Heading is updated first; the new heading then directs the step of length dL."""
    states = [PlanarState(wrap_angle(initial.heading), initial.x, initial.y)]
    for s in steps:
        prev = states[-1]
        heading = wrap_angle(prev.heading + s.delta_phi)
        states.append(
            PlanarState(heading, prev.x + s.delta_l * math.cos(heading), prev.y + s.delta_l * math.sin(heading))
        )
    return states


def se3_chain(initial: Pose, deltas) -> list[Pose]:
    """``T_{k+1} = T_k exp(xi_k)``, re-orthonormalizing if rotation drift builds up."""
    check_rotation(initial.rotation)
    poses = [initial]
    for xi in np.asarray(deltas, dtype=np.float64).reshape(-1, 6):
        nxt = (poses[-1] @ se3_exp(xi)).renormalized()
        poses.append(nxt.validated())
    return poses
