"""Point-object reference trackers.

These baselines reuse the particle filter machinery but replace the
surface-scatter likelihoods with point likelihoods centered on the device:
every detection, active or passive, is explained as if it originated at
the device position, with an optional extra range standard deviation
sigma_r absorbing the unmodeled object extent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import KinematicState, MotionParams
from .geometry import device_position_batch
from .likelihood import DENSITY_FLOOR, ClutterModel, NoiseModel, _device_of, _measurement_arrays, _normpdf, fisher_variance
from .state import FrameMeasurements, Measurement, ParticleSet
from . import spa_filter


@dataclass(frozen=True)
class PdaConfig:
    """Extra range std sigma_r [m] and whether passive links are used."""

    sigma_r: float = 0.0
    use_passive: bool = True

    def __post_init__(self):
        if self.sigma_r < 0:
            raise ValueError(f"sigma_r must be non-negative, got {self.sigma_r}")


def point_lhf(
    z: Measurement,
    kin: KinematicState,
    anchors,
    noise: NoiseModel,
    config: PdaConfig,
    prev_theta: float = 0.0,
) -> float:
    """Point-object density of one measurement.

    Active: Gaussian around the device-anchor range. Passive: Gaussian
    around the transmitter-device-receiver path with the device acting as
    the point scatterer. The variance is the amplitude-implied measurement
    variance plus sigma_r squared.
    """
    anchors = np.asarray(anchors, dtype=float)
    m = _device_of(kin, prev_theta)
    if z.is_active:
        h = float(np.linalg.norm(m - anchors[z.anchor]))
    else:
        h = float(np.linalg.norm(m - anchors[z.tx]) + np.linalg.norm(m - anchors[z.anchor]))
    var = fisher_variance(z.u, noise) + config.sigma_r**2
    return float(_normpdf(z.d, h, var))


class PointLikelihood:
    """Batched point-object association factors sharing the xi structure."""

    def __init__(self, anchors, clutter: ClutterModel, noise: NoiseModel, config: PdaConfig):
        self.anchors = np.asarray(anchors, dtype=float)
        self.clutter = clutter
        self.noise = noise
        self.config = config

    def log_xi_products(self, ps: ParticleSet, frame: FrameMeasurements, rng=None):
        logw = np.zeros(ps.size)
        m = device_position_batch(ps.p, ps.theta, ps.b_rho, ps.b_phi)
        ratio = self.clutter.mu_m / self.clutter.mu_fp
        d_max = self.clutter.d_max
        extra = self.config.sigma_r**2

        for j, zs in enumerate(frame.active):
            if not zs:
                continue
            z_d, var = _measurement_arrays(zs, self.noise)
            h = np.linalg.norm(m - self.anchors[j], axis=1)
            f = _normpdf(z_d[:, None], h[None, :], var[:, None] + extra)
            logw += np.log1p(ratio * np.maximum(f, DENSITY_FLOOR) * d_max).sum(axis=0)

        if self.config.use_passive:
            for (j, t) in sorted(frame.passive):
                zs = frame.passive[(j, t)]
                if not zs:
                    continue
                z_d, var = _measurement_arrays(zs, self.noise)
                h = np.linalg.norm(m - self.anchors[t], axis=1) + np.linalg.norm(
                    m - self.anchors[j], axis=1
                )
                f = _normpdf(z_d[:, None], h[None, :], var[:, None] + extra)
                logw += np.log1p(ratio * np.maximum(f, DENSITY_FLOOR) * d_max).sum(axis=0)
        return logw


def pda_step(
    ps: ParticleSet,
    frame: FrameMeasurements,
    params: MotionParams,
    model: PointLikelihood,
    rng: np.random.Generator,
):
    """One reference-tracker cycle; identical schedule to the main filter."""
    return spa_filter.step(ps, frame, params, model, rng)
