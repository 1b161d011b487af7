"""Hand-written fallback policies: a proportional goal chaser, a
potential-field dodger, and a proximity blend of the two.

These let the full hierarchical stack and every upper-layer test run
without any training.  The blend also carries a clearance-based stand-in
for the learned critic so exploration scoring has a safety signal.
"""

from __future__ import annotations

import math

import numpy as np

from .policy import Observation
from .world import ACTION_HIGH, ACTION_LOW


def _clip(a: np.ndarray) -> np.ndarray:
    return np.clip(a, ACTION_LOW, ACTION_HIGH)


def _beam_angles(n: int) -> np.ndarray:
    return 2.0 * math.pi * np.arange(n) / n


class ScriptedGoStraight:
    """Drive straight at the goal feature, turning the nose toward it."""

    def __init__(self, gain: float = 1.4, turn_gain: float = 1.8):
        self.gain = gain
        self.turn_gain = turn_gain

    def action(self, obs: Observation, noise_std: float = 0.0, rng=None) -> np.ndarray:
        gx, gy = obs.goal
        dist = math.hypot(gx, gy)
        if dist < 1e-9:
            return np.zeros(3)
        scale = min(1.0, dist)  # slow into the goal
        a = np.array([
            self.gain * scale * gx / dist,
            self.gain * scale * gy / dist,
            self.turn_gain * math.atan2(gy, gx),
        ])
        return _clip(a)

    def alpha(self, obs):
        return None


class ScriptedAvoid:
    """Potential-field repulsion from near beams with a slow forward drift."""

    def __init__(self, influence: float = 1.2, push: float = 1.5):
        self.influence = influence
        self.push = push

    def action(self, obs: Observation, noise_std: float = 0.0, rng=None) -> np.ndarray:
        angles = _beam_angles(len(obs.ranges))
        weight = np.maximum(0.0, (self.influence - obs.ranges) / self.influence) ** 2
        rx = -np.sum(weight * np.cos(angles))
        ry = -np.sum(weight * np.sin(angles))
        a = np.array([0.25 + self.push * rx, self.push * ry, 1.5 * ry])
        return _clip(a)

    def alpha(self, obs):
        return None


class ScriptedBlend:
    """Goal chase blended with repulsion as clearance shrinks.

    value() reports clearance in the goal direction (a 90 degree cone, or
    all beams when the goal feature is degenerate) so the exploration
    heuristic can rank candidates without a learned critic.
    """

    def __init__(self, caution_range: float = 1.0):
        self.caution_range = caution_range
        self._go = ScriptedGoStraight()
        self._avoid = ScriptedAvoid()

    def action(self, obs: Observation, noise_std: float = 0.0, rng=None) -> np.ndarray:
        min_range = float(np.min(obs.ranges))
        w = min(1.0, max(0.0, (self.caution_range - min_range) / self.caution_range))
        a = (1.0 - w) * self._go.action(obs) + w * self._avoid.action(obs)
        return _clip(a)

    def value(self, obs: Observation) -> float:
        gx, gy = obs.goal
        angles = _beam_angles(len(obs.ranges))
        if math.hypot(gx, gy) < 1e-9:
            return float(np.min(obs.ranges))
        heading = math.atan2(gy, gx)
        delta = np.abs(np.angle(np.exp(1j * (angles - heading))))
        cone = obs.ranges[delta <= math.pi / 4]
        if cone.size == 0:
            cone = obs.ranges
        return float(np.min(cone))

    def alpha(self, obs):
        return None


class CompositePolicy:
    """Action from one source, critic value from another (used to pair the
    scripted controller with a trained critic)."""

    def __init__(self, action_source, value_source):
        self._action = action_source
        self._value = value_source

    def action(self, obs, noise_std: float = 0.0, rng=None) -> np.ndarray:
        return self._action.action(obs, noise_std, rng)

    def value(self, obs) -> float:
        return self._value.value(obs)

    def alpha(self, obs):
        return getattr(self._action, "alpha", lambda _o: None)(obs)


def scripted_bundle() -> ScriptedBlend:
    return ScriptedBlend()
