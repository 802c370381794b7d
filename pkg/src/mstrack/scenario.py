"""Synthetic ground truth and cluttered measurement frames."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import MeasurementId
from .exceptions import InvalidSpec
from .kinematics import Measurement, MotionModel, SensorModel


@dataclass(frozen=True)
class TargetSpec:
    birth_frame: int
    death_frame: int  # last frame the target is alive
    state: tuple


@dataclass(eq=False)
class ScenarioSpec:
    num_frames: int
    motion: MotionModel
    sensor: SensorModel
    clutter_rate: float = 0.0
    targets: Sequence[TargetSpec] = field(default_factory=list)
    process_noise: bool = False
    dt: float = 1.0

    @property
    def clutter_density(self) -> float:
        """Clutter intensity per unit measurement volume, as the tracker expects."""
        return self.clutter_rate / self.sensor.fov_volume


@dataclass(eq=False)
class GroundTruthTrack:
    birth_frame: int
    death_frame: int
    states: np.ndarray  # one row per alive frame

    def alive(self, frame: int) -> bool:
        return self.birth_frame <= frame <= self.death_frame

    def state_at(self, frame: int) -> np.ndarray:
        return self.states[frame - self.birth_frame]


class Frame(NamedTuple):
    frame: int
    measurements: list
    time: float = 0.0


def generate_truth(spec: ScenarioSpec, seed: int = 0) -> list:
    """Propagate every target through the motion model, deterministically per seed."""
    if spec.num_frames < 0:
        raise InvalidSpec("num_frames must be non-negative")
    rng = np.random.default_rng(seed)
    dim = spec.motion.transition.shape[0]
    truth = []
    for k, t in enumerate(spec.targets):
        if t.death_frame < t.birth_frame:
            raise InvalidSpec(f"target {k}: death_frame {t.death_frame} precedes "
                              f"birth_frame {t.birth_frame}")
        if t.birth_frame < 0:
            raise InvalidSpec(f"target {k}: negative birth_frame")
        x = np.asarray(t.state, dtype=float).reshape(-1)
        if x.size != dim:
            raise InvalidSpec(f"target {k}: state has {x.size} entries, expected {dim}")
        states = [x]
        for _ in range(t.death_frame - t.birth_frame):
            x = spec.motion.transition @ x
            if spec.process_noise:
                x = x + rng.multivariate_normal(np.zeros(dim), spec.motion.process_noise)
            states.append(x)
        truth.append(GroundTruthTrack(t.birth_frame, t.death_frame, np.array(states)))
    return truth


def generate_frame(truth: Sequence[GroundTruthTrack], frame: int, sensor: SensorModel,
                   clutter_rate: float, seed: int = 0, time: float = 0.0) -> Frame:
    """Detections of alive in-view targets plus Poisson clutter, shuffled."""
    rng = np.random.default_rng([seed, frame])
    lo, hi = sensor.fov
    zs = []
    L = np.linalg.cholesky(sensor.noise)
    for tr in truth:
        if not tr.alive(frame):
            continue
        z_true = sensor.observation @ tr.state_at(frame)
        inside = np.all(z_true >= lo) and np.all(z_true <= hi)
        if inside and rng.random() < sensor.detect_prob:
            zs.append(z_true + L @ rng.standard_normal(z_true.size))
    n_clutter = rng.poisson(clutter_rate) if clutter_rate > 0 else 0
    for _ in range(n_clutter):
        zs.append(lo + (hi - lo) * rng.random(lo.size))
    order = rng.permutation(len(zs))
    meas = [Measurement(MeasurementId(frame, i), np.asarray(zs[k])) for i, k in enumerate(order)]
    return Frame(frame, meas, time)


def generate_frames(spec: ScenarioSpec, seed: int = 0) -> list:
    truth = generate_truth(spec, seed)
    return [generate_frame(truth, k, spec.sensor, spec.clutter_rate, seed, time=k * spec.dt)
            for k in range(spec.num_frames)]
