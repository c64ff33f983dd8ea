"""Constant-velocity Kalman filter over the box state (x, y, s, r, vx, vy, vs).

``s`` is box area and ``r`` the aspect ratio w/h; ``r`` has no velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ingest import BoundingBox

DIM_X = 7
DIM_Z = 4

F = np.eye(DIM_X)
F[0, 4] = F[1, 5] = F[2, 6] = 1.0

H = np.zeros((DIM_Z, DIM_X))
H[0, 0] = H[1, 1] = H[2, 2] = H[3, 3] = 1.0

EPS_S = 1e-3
EPS_R = 1e-4


@dataclass(frozen=True)
class KalmanNoise:
    meas_var: tuple = (1.0, 1.0, 10.0, 0.01)
    process_var_velocity: tuple = (0.25, 0.25, 2.5)
    process_var_observed: float = 1e-4
    initial_velocity_var: float = 1e3

    def __post_init__(self):
        if len(self.meas_var) != 4 or len(self.process_var_velocity) != 3:
            raise ValueError("meas_var needs 4 entries and process_var_velocity 3")
        if min(self.meas_var) <= 0 or min(self.process_var_velocity) < 0:
            raise ValueError("noise variances must be positive")
        if self.process_var_observed < 0 or self.initial_velocity_var <= 0:
            raise ValueError("noise variances must be positive")

    @property
    def R(self) -> np.ndarray:
        return np.diag(np.asarray(self.meas_var, dtype=float))

    @property
    def Q(self) -> np.ndarray:
        return np.diag([self.process_var_observed] * 4 + list(self.process_var_velocity))


DEFAULT_NOISE = KalmanNoise()


@dataclass
class KalmanState:
    mean: np.ndarray
    cov: np.ndarray = field(repr=False)

    @property
    def x(self) -> float:
        return float(self.mean[0])

    @property
    def y(self) -> float:
        return float(self.mean[1])

    @property
    def s(self) -> float:
        return float(self.mean[2])

    @property
    def r(self) -> float:
        return float(self.mean[3])

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[4:7]

    def box(self) -> BoundingBox:
        s = max(self.s, EPS_S)
        r = max(self.r, EPS_R)
        w = math.sqrt(s * r)
        return BoundingBox(self.x, self.y, w, s / w)

    def copy(self) -> "KalmanState":
        return KalmanState(self.mean.copy(), self.cov.copy())


def measurement(box: BoundingBox) -> np.ndarray:
    return np.array([box.x, box.y, box.w * box.h, box.w / box.h])


def initiate(box: BoundingBox, noise: KalmanNoise = DEFAULT_NOISE) -> KalmanState:
    """New state at ``box`` with zero velocity and a wide velocity prior."""
    mean = np.zeros(DIM_X)
    mean[:4] = measurement(box)
    cov = np.diag(list(noise.meas_var) + [noise.initial_velocity_var] * 3)
    return KalmanState(mean, cov)


def predict_many(means: np.ndarray, covs: np.ndarray, Q: np.ndarray):
    """Predict (N, 7) means and (N, 7, 7) covariances one frame ahead."""
    means = means @ F.T
    np.maximum(means[:, 2], EPS_S, out=means[:, 2])
    covs = F @ covs @ F.T + Q
    return means, covs


def update_many(means: np.ndarray, covs: np.ndarray, z: np.ndarray, R: np.ndarray):
    """Correct (N, 7) states with (N, 4) measurements of (x, y, s, r)."""
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite measurement")
    PHt = covs[:, :, :DIM_Z]  # P @ H.T, H selects the first four components
    S = covs[:, :DIM_Z, :DIM_Z] + R
    K = np.linalg.solve(S, PHt.transpose(0, 2, 1)).transpose(0, 2, 1)
    innovation = z - means[:, :DIM_Z]
    means = means + np.einsum("nij,nj->ni", K, innovation)
    # Joseph form keeps the covariance symmetric PSD
    IKH = np.eye(DIM_X) - K @ H
    covs = IKH @ covs @ IKH.transpose(0, 2, 1) + K @ R @ K.transpose(0, 2, 1)
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    np.maximum(means[:, 2], EPS_S, out=means[:, 2])
    np.maximum(means[:, 3], EPS_R, out=means[:, 3])
    return means, covs


def predict(state: KalmanState, noise: KalmanNoise = DEFAULT_NOISE) -> KalmanState:
    """One linear step. Area is floored at ``EPS_S`` so it never goes negative."""
    m, c = predict_many(state.mean[None], state.cov[None], noise.Q)
    return KalmanState(m[0], c[0])


def update(state: KalmanState, box: BoundingBox, noise: KalmanNoise = DEFAULT_NOISE) -> KalmanState:
    z = measurement(box)
    if not np.all(np.isfinite(z)):
        raise ValueError(f"non-finite measurement {z}")
    m, c = update_many(state.mean[None], state.cov[None], z[None], noise.R)
    return KalmanState(m[0], c[0])


def boxes_from_means(means: np.ndarray) -> np.ndarray:
    """(N, 4) array of (x, y, w, h) from (N, 7) states."""
    s = np.maximum(means[:, 2], EPS_S)
    r = np.maximum(means[:, 3], EPS_R)
    w = np.sqrt(s * r)
    return np.column_stack((means[:, 0], means[:, 1], w, s / w))
