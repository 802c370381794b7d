"""Builders shared by the test modules."""
import itertools

import numpy as np

from mstrack.assignment import Assignment, Selection, assignment_cost
from mstrack.glmb import TrackerConfig
from mstrack.kinematics import MotionModel, SensorModel


def cv_config(fov=1000.0, clutter_rate=1.0, detect_prob=0.95, survival_prob=0.99,
              meas_std=1.0, accel_psd=0.01, birth_prob=1e-4, modes=None, **kw):
    """Planar constant-velocity tracker over a square field of view."""
    motion = MotionModel.constant_velocity(1.0, accel_psd, survival_prob)
    sensor = SensorModel(np.eye(2, 4), meas_std ** 2 * np.eye(2), detect_prob,
                         clutter_rate / fov ** 2, ((0.0, 0.0), (fov, fov)), modes)
    birth_cov = np.diag([meas_std ** 2, meas_std ** 2, 25.0, 25.0])
    return TrackerConfig(motion, sensor, birth_cov, birth_prob=birth_prob, **kw)


def tracker_cost(rng, n_tracks, n_meas, gate_prob=0.6):
    """Random cost matrix laid out as measurements | missed | died.

    Gated-out measurement entries and off-diagonal missed/died entries are
    ``inf``.
    """
    c = np.full((n_tracks, n_meas + 2 * n_tracks), np.inf)
    meas = rng.uniform(-3.0, 6.0, (n_tracks, n_meas))
    meas[rng.random((n_tracks, n_meas)) > gate_prob] = np.inf
    c[:, :n_meas] = meas
    for i in range(n_tracks):
        c[i, n_meas + i] = rng.uniform(0.0, 4.0)
        c[i, n_meas + n_tracks + i] = rng.uniform(2.0, 6.0)
    return c


def all_assignments(cost) -> list:
    """Every finite-cost valid assignment, sorted by (cost, row_to_col).

    Enumerates only the finite entries of each row, which keeps
    tracker-shaped matrices (two diagonal blocks) tractable.
    """
    c = np.asarray(cost, dtype=float)
    if c.size == 0:
        return [Assignment((), 0.0)]
    options = [np.flatnonzero(np.isfinite(row)).tolist() for row in c]
    out = []
    for combo in itertools.product(*options):
        if len(set(combo)) == len(combo):
            out.append(Assignment(tuple(combo), assignment_cost(c, combo)))
    out.sort(key=lambda a: (a.cost, a.row_to_col))
    return out


def all_selections(arrays) -> list:
    """Every selection with its left-to-right sum, sorted by (sum, indices)."""
    arrs = [list(map(float, a)) for a in arrays]
    out = []
    for idx in itertools.product(*(range(len(a)) for a in arrs)):
        s = 0.0
        for a, j in zip(arrs, idx):
            s += a[j]
        out.append(Selection(idx, s))
    out.sort(key=lambda x: (x.sum, x.indices))
    return out
