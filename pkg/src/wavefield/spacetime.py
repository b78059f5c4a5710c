"""Spacetime analysis of recorded fields: separability and causal cones."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateField, NonPositiveParameter
from .lattice import TopographicLattice, lattice_steps


@dataclass
class SpacetimeField:
    values: np.ndarray  # (T, H, W)
    dt: float = 1.0
    spacing: float = 1.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 2:
            self.values = self.values[:, :, None]
        if not np.all(np.isfinite(self.values)):
            raise DegenerateField("field contains non-finite values")

    @classmethod
    def from_recording(cls, recording, window=None):
        lo, hi = window if window is not None else (0, recording.n_steps)
        return cls(recording.activity()[lo:hi], recording.dt, recording.lattice.spacing)

    def matrix(self) -> np.ndarray:
        """The field as a (space x time) matrix."""
        t = self.values.shape[0]
        return self.values.reshape(t, -1).T


def separability_index(field) -> float:
    """Share of the field's energy in its leading singular component.

    Exactly 1 for an outer product ``F(x) G(t)``; a traveling pattern
    ``G(x - v t)`` spreads its energy over many components.
    """
    if not isinstance(field, SpacetimeField):
        field = SpacetimeField(field)
    m = field.matrix()
    if not np.any(m):
        raise DegenerateField("separability of an all-zero field is undefined")
    s = np.linalg.svd(m, compute_uv=False)
    energy = s**2
    return float(energy[0] / energy.sum())


class Direction(str, Enum):
    BACKWARD = "backward"
    FORWARD = "forward"


@dataclass(frozen=True)
class CausalCone:
    """Set of (unit, step) points within conduction reach of an apex.

    ``lag_mask[m]`` marks the units at lag ``m`` (step ``apex_step - m`` for a
    backward cone, ``apex_step + m`` for a forward one).
    """

    lattice: TopographicLattice
    apex: tuple[int, int]  # (unit index, step)
    direction: Direction
    depth: int
    delays: np.ndarray  # (H, W) delay in steps from the apex unit

    def lag_mask(self, lag: int) -> np.ndarray:
        if lag < 0 or lag > self.depth:
            return np.zeros(self.lattice.shape, dtype=bool)
        return self.delays <= lag

    def step_of(self, lag: int) -> int:
        return self.apex[1] - lag if self.direction is Direction.BACKWARD else self.apex[1] + lag

    def lag_of(self, step: int) -> int:
        return self.apex[1] - step if self.direction is Direction.BACKWARD else step - self.apex[1]

    def contains(self, unit, step: int) -> bool:
        lag = self.lag_of(step)
        if lag < 0 or lag > self.depth:
            return False
        x, y = self.lattice.coords(unit)
        return bool(self.delays[y, x] <= lag)

    def __contains__(self, item) -> bool:
        unit, step = item
        return self.contains(unit, step)

    @property
    def members(self) -> frozenset:
        out = []
        for lag in range(self.depth + 1):
            s = self.step_of(lag)
            for idx in np.flatnonzero(self.lag_mask(lag).ravel()):
                out.append((int(idx), s))
        return frozenset(out)

    def mask(self) -> np.ndarray:
        """Boolean array (depth + 1, H, W) indexed by lag."""
        lags = np.arange(self.depth + 1)[:, None, None]
        return self.delays[None] <= lags


def causal_cone(lattice: TopographicLattice, dt: float, apex, depth_steps: int,
                direction="backward") -> CausalCone:
    """Cone of points that can influence (backward) or be influenced by (forward) the apex.

    ``apex`` is ``(unit, step)`` where unit is a flat index or ``(x, y)``.
    """
    if depth_steps < 0:
        raise NonPositiveParameter("depth_steps must be >= 0")
    if not dt > 0:
        raise NonPositiveParameter("dt must be > 0")
    unit, s = apex
    x, y = lattice.coords(unit)
    d = lattice.distance_map((x, y))
    delays = lattice_steps(lattice, d, dt)
    return CausalCone(lattice, (lattice.index((x, y)), int(s)), Direction(direction),
                      int(depth_steps), delays)


def difference_set(rec_a, rec_b, atol: float = 0.0) -> np.ndarray:
    """Boolean (T, H, W) mask of frames/units where two recordings differ."""
    return np.abs(rec_a.frames - rec_b.frames) > atol
