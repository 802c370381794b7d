"""Gaussian track densities, linear motion/sensor models and Kalman algebra.

All functions are pure; densities are treated as immutable once built.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.stats import chi2

from .exceptions import SingularInnovation

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class GaussianDensity:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
        if np.any(np.abs(cov - cov.T) > 1e-12 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance is not symmetric")
        try:
            np.linalg.cholesky(cov)
        except LinAlgError:
            raise ValueError("covariance is not positive-definite") from None
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class ModeMixture:
    """Posterior left by a multi-mode measurement, pending expansion.

    ``components`` holds ``(mode, log_weight, density)`` with weights
    normalized to sum to one.
    """

    components: tuple


@dataclass(frozen=True, eq=False)
class MotionModel:
    transition: np.ndarray
    process_noise: np.ndarray
    survival_prob: float

    def __post_init__(self):
        object.__setattr__(self, "transition", np.asarray(self.transition, dtype=float))
        object.__setattr__(self, "process_noise", np.asarray(self.process_noise, dtype=float))
        if not 0.0 <= self.survival_prob <= 1.0:
            raise ValueError("survival_prob must lie in [0, 1]")

    @classmethod
    def constant_velocity(cls, dt: float, accel_psd: float, survival_prob: float,
                          ndim: int = 2) -> "MotionModel":
        """Nearly-constant-velocity model on a ``[pos..., vel...]`` state."""
        eye = np.eye(ndim)
        F = np.block([[eye, dt * eye], [np.zeros((ndim, ndim)), eye]])
        Q = accel_psd * np.block([[dt**3 / 3 * eye, dt**2 / 2 * eye],
                                  [dt**2 / 2 * eye, dt * eye]])
        return cls(F, Q, survival_prob)


@dataclass(frozen=True, eq=False)
class SensorModel:
    observation: np.ndarray
    noise: np.ndarray
    detect_prob: float
    clutter_density: float
    fov: tuple  # (low, high) corners in measurement space
    modes: Optional[tuple] = None  # ((offset, weight), ...) for mixture likelihoods
    _mode_table: tuple = field(init=False, repr=False)

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.observation, dtype=float))
        R = np.atleast_2d(np.asarray(self.noise, dtype=float))
        lo, hi = (np.asarray(v, dtype=float).reshape(-1) for v in self.fov)
        object.__setattr__(self, "observation", H)
        object.__setattr__(self, "noise", R)
        object.__setattr__(self, "fov", (lo, hi))
        if not 0.0 <= self.detect_prob <= 1.0:
            raise ValueError("detect_prob must lie in [0, 1]")
        if self.clutter_density <= 0.0:
            raise ValueError("clutter_density must be positive")
        if self.modes:
            offsets = tuple(np.asarray(o, dtype=float).reshape(-1) for o, _ in self.modes)
            weights = np.array([w for _, w in self.modes], dtype=float)
            if abs(weights.sum() - 1.0) > 1e-12 or np.any(weights < 0):
                raise ValueError("mode weights must be non-negative and sum to 1")
            table = tuple(zip(offsets, np.log(weights)))
        else:
            table = ((np.zeros(H.shape[0]), 0.0),)
        object.__setattr__(self, "_mode_table", table)

    @property
    def meas_dim(self) -> int:
        return self.observation.shape[0]

    @property
    def num_modes(self) -> int:
        return len(self._mode_table)

    @property
    def fov_volume(self) -> float:
        lo, hi = self.fov
        return float(np.prod(hi - lo))

    def mode_offset(self, mode: int) -> np.ndarray:
        return self._mode_table[mode][0]

    def mode_log_weight(self, mode: int) -> float:
        return self._mode_table[mode][1]

    def in_fov(self, g: GaussianDensity) -> bool:
        lo, hi = self.fov
        z = self.observation @ g.mean
        return bool(np.all(z >= lo) and np.all(z <= hi))


class Measurement(NamedTuple):
    id: "object"  # MeasurementId; typed loosely to avoid an import cycle
    z: np.ndarray


def default_gate(meas_dim: int, prob: float = 0.9999) -> float:
    """Chi-square gate threshold for a ``meas_dim``-dimensional innovation."""
    return float(chi2.ppf(prob, meas_dim))


def predict(g: GaussianDensity, m: MotionModel) -> GaussianDensity:
    F = m.transition
    cov = F @ g.cov @ F.T + m.process_noise
    return GaussianDensity(F @ g.mean, 0.5 * (cov + cov.T))


class _Innovation(NamedTuple):
    z_hat: np.ndarray
    S: np.ndarray
    chol: tuple
    PHt: np.ndarray
    log_det: float


def _innovation(g: GaussianDensity, s: SensorModel) -> _Innovation:
    H = s.observation
    PHt = g.cov @ H.T
    S = H @ PHt + s.noise
    S = 0.5 * (S + S.T)
    try:
        c = cho_factor(S, lower=True, check_finite=True)
    except (LinAlgError, ValueError) as exc:
        raise SingularInnovation(str(exc)) from None
    diag = np.diag(c[0])
    if np.any(diag <= 0):
        raise SingularInnovation("innovation covariance is not positive-definite")
    return _Innovation(H @ g.mean, S, c, PHt, 2.0 * float(np.sum(np.log(diag))))


def _mahalanobis_sq(inn: _Innovation, nu: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distance; ``nu`` may be one vector or a row-stack."""
    L = np.tril(inn.chol[0])
    w = solve_triangular(L, np.atleast_2d(nu).T, lower=True, check_finite=False)
    return np.sum(w * w, axis=0)


def _kalman_step(g: GaussianDensity, s: SensorModel, inn: _Innovation,
                 nu: np.ndarray) -> GaussianDensity:
    K = cho_solve(inn.chol, inn.PHt.T, check_finite=False).T
    mean = g.mean + K @ nu
    I_KH = np.eye(g.dim) - K @ s.observation
    # Joseph form keeps the posterior symmetric positive-definite.
    cov = I_KH @ g.cov @ I_KH.T + K @ s.noise @ K.T
    return GaussianDensity(mean, 0.5 * (cov + cov.T))


def log_update(g: GaussianDensity, s: SensorModel, z: np.ndarray,
               mode: int = 0, inn: Optional[_Innovation] = None):
    """Kalman update returning ``(posterior, log_likelihood)``."""
    if not 0 <= mode < s.num_modes:
        raise ValueError(f"mode {mode} not declared by sensor")
    inn = inn if inn is not None else _innovation(g, s)
    nu = np.asarray(z, dtype=float).reshape(-1) - inn.z_hat - s.mode_offset(mode)
    d2 = float(_mahalanobis_sq(inn, nu)[0])
    loglik = -0.5 * (nu.size * _LOG_2PI + inn.log_det + d2) + s.mode_log_weight(mode)
    return _kalman_step(g, s, inn, nu), loglik


def update(g: GaussianDensity, s: SensorModel, z: np.ndarray, mode: int = 0):
    """Kalman update with the given measurement mode.

    Returns the posterior density and the predictive likelihood of ``z``
    (Gaussian density value times the mode weight).
    """
    post, loglik = log_update(g, s, z, mode)
    return post, float(np.exp(loglik))


def gate_distances(g: GaussianDensity, s: SensorModel, zs: np.ndarray,
                   inn: Optional[_Innovation] = None) -> np.ndarray:
    """Squared Mahalanobis distances, shape ``(num_meas, num_modes)``."""
    inn = inn if inn is not None else _innovation(g, s)
    zs = np.atleast_2d(np.asarray(zs, dtype=float))
    out = np.empty((zs.shape[0], s.num_modes))
    for k in range(s.num_modes):
        out[:, k] = _mahalanobis_sq(inn, zs - inn.z_hat - s.mode_offset(k))
    return out


def gate(g: GaussianDensity, s: SensorModel, z: np.ndarray, gamma: float) -> bool:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return bool(gate_distances(g, s, z).min() <= gamma)


def eta_detected(g: GaussianDensity, s: SensorModel, m: MotionModel,
                 z: np.ndarray, mode: int = 0) -> float:
    """Clutter-normalized likelihood that the track survived and produced ``z``."""
    if s.detect_prob == 0.0 or m.survival_prob == 0.0:
        return 0.0
    _, lik = update(g, s, z, mode)
    return m.survival_prob * s.detect_prob * lik / s.clutter_density


def eta_missed(m: MotionModel, s: SensorModel, in_fov: bool) -> float:
    if not in_fov:
        return m.survival_prob
    return m.survival_prob * (1.0 - s.detect_prob)


def eta_died(m: MotionModel) -> float:
    return 1.0 - m.survival_prob


def lift_measurement(s: SensorModel, z: np.ndarray, cov: np.ndarray) -> GaussianDensity:
    """Density whose observed components equal ``z``, unobserved ones zero."""
    mean = np.linalg.pinv(s.observation) @ np.asarray(z, dtype=float).reshape(-1)
    return GaussianDensity(mean, cov)


def pairwise_within(zs: Sequence[np.ndarray], radius: float) -> np.ndarray:
    """Boolean matrix of measurement pairs no farther apart than ``radius``."""
    Z = np.atleast_2d(np.asarray(zs, dtype=float))
    if Z.shape[0] == 0:
        return np.zeros((0, 0), dtype=bool)
    d = np.linalg.norm(Z[:, None, :] - Z[None, :, :], axis=-1)
    return d <= radius
