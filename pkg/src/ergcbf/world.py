"""Circular / spherical obstacle environments with signed distance queries."""

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    pass


class DegenerateGradientError(ValueError):
    pass


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float


@dataclass(frozen=True)
class Environment:
    """Obstacles are excluded balls; the optional arena is a containing ball."""

    obstacles: tuple = ()
    arena_center: tuple = None
    arena_radius: float = None
    dimension: int = 2

    def __post_init__(self):
        obs = tuple(Obstacle(tuple(float(c) for c in o.center), float(o.radius)) for o in self.obstacles)
        object.__setattr__(self, "obstacles", obs)
        if self.dimension not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.dimension}")
        for i, o in enumerate(obs):
            if len(o.center) != self.dimension:
                raise ConfigurationError(f"obstacle {i} center has dimension {len(o.center)}")
            if not o.radius > 0:
                raise ConfigurationError(f"obstacle {i} radius must be positive")
        if self.has_arena:
            object.__setattr__(self, "arena_center", tuple(float(c) for c in self.arena_center))
            if len(self.arena_center) != self.dimension:
                raise ConfigurationError("arena center dimension mismatch")
            if not self.arena_radius > 0:
                raise ConfigurationError("arena radius must be positive")
            c = np.array(self.arena_center)
            for i, o in enumerate(obs):
                if np.linalg.norm(np.array(o.center) - c) > self.arena_radius:
                    raise ConfigurationError(f"obstacle {i} center lies outside the arena")

    @property
    def has_arena(self):
        return self.arena_center is not None and self.arena_radius is not None

    @property
    def centers(self):
        return np.array([o.center for o in self.obstacles], dtype=float).reshape(-1, self.dimension)

    @property
    def radii(self):
        return np.array([o.radius for o in self.obstacles], dtype=float)

    def barrier_terms(self, g):
        """Per-constraint clearances: one per obstacle, then the arena (if any)."""
        g = np.asarray(g, dtype=float)
        terms = np.linalg.norm(self.centers - g, axis=1) - self.radii
        if self.has_arena:
            arena = self.arena_radius - np.linalg.norm(g - np.asarray(self.arena_center))
            terms = np.append(terms, arena)
        return terms

    def barrier_gradients(self, g):
        """Gradients of :meth:`barrier_terms`, one row per term."""
        g = np.asarray(g, dtype=float)
        rows = []
        for o in self.obstacles:
            rows.append(_unit(g - np.asarray(o.center), "obstacle center"))
        if self.has_arena:
            d = g - np.asarray(self.arena_center)
            # the arena term peaks at its center, where zero is a valid supergradient
            rows.append(np.zeros_like(d) if not d.any() else -_unit(d, "arena center"))
        return np.array(rows, dtype=float).reshape(-1, self.dimension)


def _unit(v, what):
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DegenerateGradientError(f"distance gradient undefined at the {what}")
    return v / n


def distance_to_unsafe(g, env):
    """Signed clearance of ``g``: negative inside an obstacle or outside the arena."""
    terms = env.barrier_terms(g)
    return float(np.min(terms)) if terms.size else np.inf


def unsafe_gradient(g, env):
    """Gradient of :func:`distance_to_unsafe`; ties go to the lowest index."""
    terms = env.barrier_terms(g)
    if terms.size == 0:
        return np.zeros(env.dimension)
    i = int(np.argmin(terms))
    return env.barrier_gradients(g)[i]


def inflate(env, margin):
    if margin < 0:
        raise ConfigurationError("inflation margin must be nonnegative")
    obstacles = tuple(Obstacle(o.center, o.radius + margin) for o in env.obstacles)
    arena_radius = env.arena_radius
    if env.has_arena:
        arena_radius = env.arena_radius - margin
        if arena_radius <= 0:
            raise ConfigurationError(f"inflation by {margin} m collapses the arena")
    return Environment(obstacles, env.arena_center, arena_radius, env.dimension)
