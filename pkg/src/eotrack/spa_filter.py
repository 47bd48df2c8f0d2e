"""Sum-product particle filter over the augmented object state.

Each step runs a bootstrap cycle: particles are propagated through the
state-transition kernels, reweighted by the product of per-measurement
association factors (accumulated in the log domain), summarized by a
posterior-mean estimate, and systematically resampled. Messages flow
forward only; sensors contribute independent factors, so the update is
invariant to the order of measurements within a frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    AugmentedState,
    KinematicState,
    MotionParams,
    predict_kinematic_batch,
    transition_annulus_batch,
    transition_bias,
    transition_patch_batch,
)
from .geometry import ApproxExtent, EoExtent, circular_mean, device_position_batch, wrap_angle
from .state import AnnulusArrays, FrameMeasurements, ParticleSet, PatchArrays

logger = logging.getLogger(__name__)

SPEED_EPS = 1e-6


class AllWeightsZero(RuntimeError):
    """Every particle weight underflowed; the filter has diverged."""


@dataclass(frozen=True)
class InitialBelief:
    """Sampling description of the prior belief at the first step.

    ``pos_mean``/``pos_std`` describe the approximate initial position of
    the radio device (the directly observable point); each particle's
    object center is placed behind its own offset draw, which keeps the
    initial cloud consistent with the first direct-path fixes. Velocities
    are Gaussian; the offset length and every extent component are Gamma
    with the given means and concentrations; the offset angle is uniform
    on the circle.
    """

    pos_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    pos_std: float = 0.5
    vel_mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    vel_std: float = 0.5
    b_rho_mean: float = 0.4
    b_rho_kappa: float = 10.0
    b_rho_max: float = 1.0
    extent_mean: tuple = (0.4, 0.25, 0.06)
    extent_kappa: float = 20.0
    extent_max: float = 1.0
    patch_mean: tuple = (0.3, 0.1)
    patch_kappa: float = 20.0
    omega: float = np.pi / 2


def init_particles(
    prior: InitialBelief, count: int, extent_kind: str, rng: np.random.Generator
) -> ParticleSet:
    """Draw the initial particle set; ``extent_kind`` is 'annulus' or 'patch'."""
    device = np.asarray(prior.pos_mean, dtype=float) + prior.pos_std * rng.standard_normal((count, 2))
    v = np.asarray(prior.vel_mean, dtype=float) + prior.vel_std * rng.standard_normal((count, 2))
    theta = np.where(
        np.hypot(v[:, 0], v[:, 1]) < SPEED_EPS, 0.0, np.arctan2(v[:, 1], v[:, 0])
    )
    b_rho = rng.gamma(prior.b_rho_kappa, prior.b_rho_mean / prior.b_rho_kappa, size=count)
    b_rho = np.clip(b_rho, 1e-6, prior.b_rho_max)
    b_phi = rng.uniform(-np.pi, np.pi, size=count)
    ang = b_phi + theta
    p = device - b_rho[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if extent_kind == "annulus":
        a0, b0, w0 = prior.extent_mean
        a = rng.gamma(prior.extent_kappa, a0 / prior.extent_kappa, size=count)
        b = rng.gamma(prior.extent_kappa, b0 / prior.extent_kappa, size=count)
        w = rng.gamma(prior.extent_kappa, w0 / prior.extent_kappa, size=count)
        lo = np.minimum(a, b)
        hi = np.minimum(np.maximum(a, b), prior.extent_max)
        lo = np.minimum(lo, hi)
        extent = AnnulusArrays(hi, lo, np.minimum(w, 0.99 * lo))
    elif extent_kind == "patch":
        r0, ws0 = prior.patch_mean
        r = rng.gamma(prior.patch_kappa, r0 / prior.patch_kappa, size=count)
        w_s = rng.gamma(prior.patch_kappa, ws0 / prior.patch_kappa, size=count)
        extent = PatchArrays(
            np.clip(r, 1e-6, prior.extent_max), np.clip(w_s, 1e-6, prior.extent_max), prior.omega
        )
    else:
        raise ValueError(f"unknown extent kind {extent_kind!r}")
    weights = np.full(count, 1.0 / count)
    return ParticleSet(p, v, theta, b_rho, b_phi, extent, weights)


def predict(ps: ParticleSet, params: MotionParams, rng: np.random.Generator, noise_scale: float = 1.0) -> ParticleSet:
    """Propagate every particle through the transition kernels.

    Weights are carried over unchanged (bootstrap proposal). ``noise_scale``
    inflates the kinematic noise and is used only by divergence recovery.
    """
    scaled = params if noise_scale == 1.0 else MotionParams(
        dt=params.dt,
        sigma_a=params.sigma_a * noise_scale,
        kappa_rho=max(params.kappa_rho / noise_scale**2, 1.0),
        sigma_phi=params.sigma_phi * noise_scale,
        kappa_a=params.kappa_a,
        kappa_b=params.kappa_b,
        kappa_w=params.kappa_w,
        kappa_r=params.kappa_r,
        kappa_ws=params.kappa_ws,
    )
    p, v = predict_kinematic_batch(ps.p, ps.v, scaled, rng)
    theta = np.where(np.hypot(v[:, 0], v[:, 1]) < SPEED_EPS, ps.theta, np.arctan2(v[:, 1], v[:, 0]))
    b_rho, b_phi = transition_bias(ps.b_rho, ps.b_phi, scaled, rng)
    b_rho = np.maximum(b_rho, 1e-9)
    if isinstance(ps.extent, AnnulusArrays):
        a, b, w = transition_annulus_batch(ps.extent.a, ps.extent.b, ps.extent.w, scaled, rng)
        extent = AnnulusArrays(a, b, w)
    else:
        r, w_s = transition_patch_batch(ps.extent.r, ps.extent.w_s, scaled, rng)
        extent = PatchArrays(np.maximum(r, 1e-9), np.maximum(w_s, 1e-9), ps.extent.omega)
    return ParticleSet(p, v, theta, b_rho, b_phi, extent, ps.weights.copy())


def update(ps: ParticleSet, frame: FrameMeasurements, model, rng: np.random.Generator = None) -> ParticleSet:
    """Multiply association factors of every measurement into the weights.

    The accumulation happens in the log domain with max-subtraction
    normalization; measurement lists are iterated in a canonical sorted
    order, so permuting a frame leaves the result bit-identical.

    Raises AllWeightsZero when no particle retains usable mass.
    """
    out = ps.copy()
    if frame.count() == 0:
        return out
    log_xi = model.log_xi_products(ps, frame, rng)
    logw = np.log(np.maximum(ps.weights, 1e-300)) + log_xi
    peak = np.max(logw)
    if not np.isfinite(peak):
        raise AllWeightsZero("no particle retained finite weight in the update")
    w = np.exp(logw - peak)
    total = w.sum()
    if total <= 0 or not np.isfinite(total):
        raise AllWeightsZero("particle weights summed to zero after the update")
    out.weights = w / total
    return out


def resample(ps: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Systematic resampling from a single uniform offset; output weights uniform."""
    P = ps.size
    positions = (np.arange(P) + rng.uniform()) / P
    idx = np.searchsorted(np.cumsum(ps.weights), positions, side="left")
    idx = np.minimum(idx, P - 1)
    return ps.take(idx)


def mmse_estimate(ps: ParticleSet) -> AugmentedState:
    """Posterior-mean state: linear components averaged, angles on the circle."""
    w = ps.weights
    p = w @ ps.p
    v = w @ ps.v
    b_rho = float(np.dot(w, ps.b_rho))
    b_phi = circular_mean(ps.b_phi, w)
    kin = KinematicState(p, v, max(b_rho, 1e-12), b_phi)
    return AugmentedState(kin, ps.extent.mean(w))


def device_position_mmse(ps: ParticleSet) -> np.ndarray:
    """Posterior-mean device position (the mean of the derived positions)."""
    return ps.weights @ device_position_batch(ps.p, ps.theta, ps.b_rho, ps.b_phi)


def step(
    ps: ParticleSet,
    frame: FrameMeasurements,
    params: MotionParams,
    model,
    rng: np.random.Generator,
):
    """One filtering cycle: predict, update, estimate, resample.

    Returns (resampled particles, posterior-mean state, posterior-mean
    device position); the estimates are taken before resampling. A single
    divergence is recovered by repeating the prediction with inflated
    noise; a second failure propagates AllWeightsZero.
    """
    predicted = predict(ps, params, rng)
    try:
        updated = update(predicted, frame, model, rng)
    except AllWeightsZero:
        logger.warning("all particle weights vanished; retrying with inflated prediction noise")
        predicted = predict(ps, params, rng, noise_scale=3.0)
        updated = update(predicted, frame, model, rng)
    est = mmse_estimate(updated)
    m_hat = device_position_mmse(updated)
    return resample(updated, rng), est, m_hat
