"""Evaluation metrics: per-step RMSE, error ECDF, and a recursive
posterior lower bound on the position error of a direct-path tracker.

The bound propagates a 4x4 Fisher information over (position, velocity)
through the constant-velocity motion model and adds, per step, the range
information of every visible anchor evaluated at the true device position
with the expected amplitude at that range. The reported quantity is the
trace of the position block of the inverse information [m^2].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class LengthMismatch(ValueError):
    """Run records disagree on the number of steps."""


class SingularInformation(RuntimeError):
    """The information matrix cannot be inverted yet (uninformative prior)."""


@dataclass
class RunRecord:
    """Per-step estimates of one realization, aligned with the truth."""

    true_m: np.ndarray
    est_m: np.ndarray
    b_rho: np.ndarray
    b_phi: np.ndarray
    extent: np.ndarray  # (N, 3); third column NaN for two-parameter extents
    diverged: bool = False

    def __post_init__(self):
        n = self.true_m.shape[0]
        if not (self.est_m.shape[0] == self.b_rho.shape[0] == self.b_phi.shape[0] == self.extent.shape[0] == n):
            raise LengthMismatch("record arrays must share the step count")

    @property
    def errors(self) -> np.ndarray:
        return np.linalg.norm(self.est_m - self.true_m, axis=1)


def rmse(records) -> np.ndarray:
    """Per-step root mean square position error across realizations."""
    if not records:
        raise LengthMismatch("need at least one run record")
    n = records[0].true_m.shape[0]
    for rec in records:
        if rec.true_m.shape[0] != n:
            raise LengthMismatch("run records have differing step counts")
    sq = np.stack([rec.errors**2 for rec in records])
    return np.sqrt(sq.mean(axis=0))


def ecdf(errors):
    """Right-continuous empirical CDF: (sorted support, cumulative fractions)."""
    values = np.sort(np.asarray(errors, dtype=float).ravel())
    if values.size == 0:
        raise ValueError("need at least one value")
    fractions = np.arange(1, values.size + 1) / values.size
    return values, fractions


def ecdf_at(support, fractions, x):
    """Evaluate the ECDF at points x (elementwise)."""
    idx = np.searchsorted(support, np.asarray(x, dtype=float), side="right")
    padded = np.concatenate([[0.0], fractions])
    return padded[idx]


@dataclass
class PcrlbState:
    """Fisher information over (px, py, vx, vy) and the current bound [m^2]."""

    J: np.ndarray
    bound: float

    def copy(self):
        return PcrlbState(self.J.copy(), self.bound)


def cv_matrices(dt: float, sigma_a: float):
    """Transition matrix and process noise of the discretized CV model."""
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    q = sigma_a**2
    Q = np.zeros((4, 4))
    Q[0, 0] = Q[1, 1] = q * dt**4 / 4.0
    Q[2, 2] = Q[3, 3] = q * dt**2
    Q[0, 2] = Q[2, 0] = Q[1, 3] = Q[3, 1] = q * dt**3 / 2.0
    return A, Q


def pcrlb_init(prior_cov: np.ndarray) -> PcrlbState:
    """Initial information state from a (4, 4) prior covariance."""
    prior_cov = np.asarray(prior_cov, dtype=float)
    try:
        J0 = np.linalg.inv(prior_cov)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation("prior covariance is singular") from exc
    return PcrlbState(J0, float(np.trace(prior_cov[:2, :2])))


def pcrlb_step(
    state: PcrlbState,
    visible_anchors: np.ndarray,
    true_m: np.ndarray,
    sigma2: np.ndarray,
    dt: float,
    sigma_a: float,
) -> PcrlbState:
    """One information recursion step.

    ``visible_anchors`` is a (K, 2) array (possibly empty) of anchors whose
    direct path is observable this step; ``sigma2`` holds the matching
    expected range variances [m^2].
    """
    A, Q = cv_matrices(dt, sigma_a)
    try:
        J_prev_inv = np.linalg.inv(state.J)
    except np.linalg.LinAlgError as exc:
        raise SingularInformation("information matrix is singular") from exc
    J = np.linalg.inv(Q + A @ J_prev_inv @ A.T)
    visible_anchors = np.asarray(visible_anchors, dtype=float).reshape(-1, 2)
    sigma2 = np.asarray(sigma2, dtype=float).ravel()
    for anchor, var in zip(visible_anchors, sigma2):
        delta = np.asarray(true_m, dtype=float) - anchor
        dist = np.linalg.norm(delta)
        if dist <= 0:
            continue
        e = delta / dist
        H = np.array([e[0], e[1], 0.0, 0.0])
        J = J + np.outer(H, H) / var
    bound = float(np.trace(np.linalg.inv(J)[:2, :2]))
    return PcrlbState(J, bound)


def pcrlb_curve(true_ms, anchors, sigma2, visible, prior_cov, dt, sigma_a) -> np.ndarray:
    """Bound trace [m^2] per step.

    true_ms: (N, 2) true device positions; sigma2: (N, J) expected range
    variances; visible: (N, J) boolean visibility mask.
    """
    true_ms = np.asarray(true_ms, dtype=float)
    anchors = np.asarray(anchors, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    visible = np.asarray(visible, dtype=bool)
    state = pcrlb_init(prior_cov)
    bounds = np.empty(true_ms.shape[0])
    for n in range(true_ms.shape[0]):
        mask = visible[n]
        state = pcrlb_step(state, anchors[mask], true_ms[n], sigma2[n, mask], dt, sigma_a)
        bounds[n] = state.bound
    return bounds
