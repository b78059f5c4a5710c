"""Topographic map geometry and distance-dependent conduction delays.

Units live on a ``width x height`` grid. A unit is addressed either by its
``(x, y)`` coordinates or by its flat index ``y * width + x``; field arrays
are always shaped ``(height, width)`` and indexed ``[y, x]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np

from .errors import NonPositiveParameter

DEFAULT_CONDUCTION_VELOCITY = 0.3  # mm/ms, horizontal-fiber range; configurable


class Boundary(str, Enum):
    OPEN = "open"
    PERIODIC = "periodic"


class DelayRounding(str, Enum):
    """How a fractional travel time becomes whole steps.

    ``up`` never lets a relayed multi-hop path arrive before the straight
    path (the per-hop ceilings sum to at least the ceiling of the total), so
    causal cones hold for any activity. ``nearest`` rounds half up.
    """

    UP = "up"
    NEAREST = "nearest"


# travel times within this many steps of an integer count as that integer
_ROUNDING_SLACK = 1e-9


def _round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


def _round_up(x):
    return np.ceil(np.asarray(x, dtype=float) - _ROUNDING_SLACK).astype(np.int64)


@dataclass(frozen=True)
class TopographicLattice:
    width: int
    height: int
    spacing: float = 0.2
    conduction_velocity: float = DEFAULT_CONDUCTION_VELOCITY
    boundary: Boundary = Boundary.OPEN
    delay_rounding: DelayRounding = DelayRounding.UP

    def __post_init__(self):
        for name in ("width", "height", "spacing", "conduction_velocity"):
            value = getattr(self, name)
            if not value > 0:
                raise NonPositiveParameter(f"{name} must be > 0, got {value!r}")
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "delay_rounding", DelayRounding(self.delay_rounding))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def n_units(self) -> int:
        return self.width * self.height

    @property
    def periodic(self) -> bool:
        return self.boundary is Boundary.PERIODIC

    def coords(self, unit) -> tuple[int, int]:
        """Return ``(x, y)`` for a flat index or pass a coordinate pair through."""
        if isinstance(unit, (tuple, list, np.ndarray)):
            x, y = int(unit[0]), int(unit[1])
        else:
            y, x = divmod(int(unit), self.width)
        if not (0 <= x < self.width and 0 <= y < self.height):
            raise IndexError(f"unit {unit!r} outside {self.width}x{self.height} lattice")
        return x, y

    def index(self, unit) -> int:
        x, y = self.coords(unit)
        return y * self.width + x

    def contains(self, x: float, y: float) -> bool:
        return 0 <= x <= self.width - 1 and 0 <= y <= self.height - 1

    def _axis_separation(self, d, n):
        d = np.abs(np.asarray(d, dtype=float))
        if self.periodic:
            d = np.mod(d, n)
            d = np.minimum(d, n - d)
        return d

    def distance(self, a, b) -> float:
        """Euclidean distance in millimeters (shortest wrap on periodic lattices)."""
        xa, ya = self.coords(a)
        xb, yb = self.coords(b)
        dx = self._axis_separation(xb - xa, self.width)
        dy = self._axis_separation(yb - ya, self.height)
        return float(self.spacing * math.hypot(dx, dy))

    def distance_map(self, center) -> np.ndarray:
        """Distances (mm) from a possibly fractional ``(x, y)`` point to every unit."""
        cx, cy = float(center[0]), float(center[1])
        ys, xs = np.mgrid[0 : self.height, 0 : self.width]
        dx = self._axis_separation(xs - cx, self.width)
        dy = self._axis_separation(ys - cy, self.height)
        return self.spacing * np.hypot(dx, dy)

    def delay_steps(self, a, b, dt: float) -> int:
        return delay_steps(self, a, b, dt)

    def delay_table(self, dt: float, cutoff_radius: float | None = None) -> "DelayTable":
        return DelayTable.build(self, dt, cutoff_radius)


def build_lattice(width, height, spacing=0.2, conduction_velocity=DEFAULT_CONDUCTION_VELOCITY,
                  boundary="open", delay_rounding="up") -> TopographicLattice:
    return TopographicLattice(width, height, spacing, conduction_velocity, Boundary(boundary),
                              DelayRounding(delay_rounding))


def steps_for_distance(distance_mm, velocity, dt, rounding=DelayRounding.UP):
    """Travel time distance/velocity/dt in whole steps, at least 1 for nonzero distance."""
    raw = np.asarray(distance_mm, dtype=float) / velocity / dt
    steps = _round_up(raw) if DelayRounding(rounding) is DelayRounding.UP else _round_half_up(raw)
    return np.where(np.asarray(distance_mm) > 0, np.maximum(steps, 1), 0)


def lattice_steps(lattice: TopographicLattice, distance_mm, dt):
    """:func:`steps_for_distance` with the lattice's velocity and rounding rule."""
    return steps_for_distance(distance_mm, lattice.conduction_velocity, dt, lattice.delay_rounding)


def delay_steps(lattice: TopographicLattice, unit_a, unit_b, dt: float) -> int:
    if not dt > 0:
        raise NonPositiveParameter(f"dt must be > 0, got {dt!r}")
    return int(lattice_steps(lattice, lattice.distance(unit_a, unit_b), dt))


@dataclass(frozen=True)
class DelayTable:
    """Per-displacement delay lookup for a homogeneous lattice.

    ``offsets`` holds every displacement ``(dy, dx)`` within the cutoff; the
    matching entries of ``distances`` (mm) and ``steps`` give its conduction
    delay. On open lattices displacements span ``-(n-1)..n-1`` per axis; on
    periodic lattices they are taken modulo the lattice shape.
    """

    lattice: TopographicLattice
    dt: float
    offsets: np.ndarray = field(repr=False)  # (K, 2) int, columns dy, dx
    distances: np.ndarray = field(repr=False)
    steps: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, lattice: TopographicLattice, dt: float, cutoff_radius: float | None = None):
        if not dt > 0:
            raise NonPositiveParameter(f"dt must be > 0, got {dt!r}")
        h, w = lattice.height, lattice.width
        if lattice.periodic:
            dy, dx = np.mgrid[0:h, 0:w]
        else:
            dy, dx = np.mgrid[-(h - 1) : h, -(w - 1) : w]
        dy, dx = dy.ravel(), dx.ravel()
        sep_y = lattice._axis_separation(dy, h)
        sep_x = lattice._axis_separation(dx, w)
        units = np.hypot(sep_x, sep_y)
        if cutoff_radius is not None:
            keep = units <= cutoff_radius + 1e-12
            dy, dx, units = dy[keep], dx[keep], units[keep]
        distances = units * lattice.spacing
        steps = lattice_steps(lattice, distances, dt)
        offsets = np.stack([dy, dx], axis=1).astype(np.int64)
        return cls(lattice, float(dt), offsets, distances, steps.astype(np.int64))

    @cached_property
    def max_delay_steps(self) -> int:
        return int(self.steps.max()) if self.steps.size else 0

    @cached_property
    def _lookup(self) -> dict:
        return {(int(a), int(b)): int(s) for (a, b), s in zip(self.offsets, self.steps)}

    def delay(self, unit_a, unit_b) -> int:
        """Delay in steps from ``unit_a`` to ``unit_b``; falls back to geometry beyond the cutoff."""
        xa, ya = self.lattice.coords(unit_a)
        xb, yb = self.lattice.coords(unit_b)
        key = (yb - ya, xb - xa)
        if self.lattice.periodic:
            key = (key[0] % self.lattice.height, key[1] % self.lattice.width)
        if key in self._lookup:
            return self._lookup[key]
        return delay_steps(self.lattice, unit_a, unit_b, self.dt)

    def delay_map(self, center) -> np.ndarray:
        """Delay in steps from ``center`` to every unit, shaped like the lattice."""
        d = self.lattice.distance_map(self.lattice.coords(center))
        return lattice_steps(self.lattice, d, self.dt)
