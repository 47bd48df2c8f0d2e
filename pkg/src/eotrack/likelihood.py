"""Measurement likelihoods and association-marginalized update factors.

The range variance of every detection follows from its normalized
amplitude u through the Fisher information of a pulse with root mean
square bandwidth beta_bw: sigma^2(u) = c^2 / (8 pi^2 beta_bw^2 u^2).

Surface-scatter likelihoods come in two flavors matching the two object
models: Monte Carlo integration over scatter points drawn area-uniformly
on the elliptic annulus sector, and an unscented-transform propagation of
the Gaussian patch of the circular model. Every measurement contributes a
data-association factor xi = 1 + (mu_m / mu_fp) * f(z | y) / f_fp(z) >= 1
that marginalizes the object-vs-false-positive origin of the detection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import AugmentedState, KinematicState
from .geometry import (
    AnchorInsideObject,
    AngularSector,
    ApproxExtent,
    EoExtent,
    EoPose,
    common_fov,
    common_fov_batch,
    device_position_batch,
    ellipse_fov,
    ellipse_fov_batch,
    orientation_from_velocity,
    sample_annulus_sector,
    sample_annulus_sector_batch,
    scattering_ellipse,
    scattering_ellipse_batch,
    sigma_points,
    sigma_points_batch,
)
from .state import FrameMeasurements, Measurement, ParticleSet

SPEED_OF_LIGHT = 299792458.0

# densities are floored before entering likelihood ratios so a hard zero
# cannot annihilate a particle weight
DENSITY_FLOOR = 1e-300


def rms_bandwidth(two_sided_bandwidth: float) -> float:
    """Root mean square bandwidth of a flat spectrum of the given width.

    beta_rms = B / (2 sqrt(3)); used to convert a nominal signal bandwidth
    into the beta_bw entering the Fisher-information range variance.
    """
    return two_sided_bandwidth / (2.0 * np.sqrt(3.0))


DEFAULT_BETA_BW = rms_bandwidth(500e6)


class NonPositiveAmplitude(ValueError):
    """Amplitude-dependent variance requested for a non-positive amplitude."""


@dataclass(frozen=True)
class ClutterModel:
    """Mean object-related (mu_m) and false-positive (mu_fp) counts per sensor.

    ``d_max`` bounds the measurable distance; false positives are uniform
    over it. ``p_mix`` is the probability that an active detection stems
    from the direct path rather than the object surface.
    """

    mu_m: float = 5.0
    mu_fp: float = 5.0
    d_max: float = 30.0
    p_mix: float = 0.5

    def __post_init__(self):
        if self.mu_m <= 0 or self.mu_fp <= 0:
            raise ValueError("mean measurement counts must be positive")
        if not (0.0 <= self.p_mix <= 1.0):
            raise ValueError(f"mixture weight must lie in [0, 1], got {self.p_mix}")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """Root mean square bandwidth [Hz] and propagation speed [m/s]."""

    beta_bw: float = DEFAULT_BETA_BW
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if self.beta_bw <= 0:
            raise ValueError("beta_bw must be positive")


def fisher_variance(u, noise: NoiseModel):
    """Range variance [m^2] implied by a normalized amplitude (elementwise)."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise NonPositiveAmplitude("normalized amplitude must be positive")
    var = noise.c**2 / (8.0 * np.pi**2 * noise.beta_bw**2 * u**2)
    return float(var) if var.ndim == 0 else var


def _normpdf(x, mean, var):
    return np.exp(-0.5 * (x - mean) ** 2 / var) / np.sqrt(2.0 * np.pi * var)


def _pose_of(kin: KinematicState, prev_theta: float = 0.0) -> EoPose:
    return EoPose(kin.p, orientation_from_velocity(kin.v, prev_theta))


def _device_of(kin: KinematicState, prev_theta: float = 0.0) -> np.ndarray:
    theta = orientation_from_velocity(kin.v, prev_theta)
    ang = kin.b_phi + theta
    return kin.p + kin.b_rho * np.array([np.cos(ang), np.sin(ang)])


def los_lhf(z: Measurement, kin: KinematicState, anchors, noise: NoiseModel, prev_theta: float = 0.0) -> float:
    """Direct-path density: Gaussian in distance around the device-anchor range."""
    if not z.is_active:
        raise ValueError("direct-path likelihood applies to active measurements only")
    m = _device_of(kin, prev_theta)
    h = float(np.linalg.norm(m - np.asarray(anchors)[z.anchor]))
    return float(_normpdf(z.d, h, fisher_variance(z.u, noise)))


def path_length_active(points, m, anchor):
    """Bistatic device-to-surface-to-anchor path length, elementwise over points."""
    points = np.asarray(points, dtype=float)
    return np.linalg.norm(points - m, axis=-1) + np.linalg.norm(points - np.asarray(anchor), axis=-1)


def path_length_passive(points, anchor_tx, anchor_rx):
    """Bistatic anchor-to-surface-to-anchor path length, elementwise over points."""
    points = np.asarray(points, dtype=float)
    return np.linalg.norm(points - np.asarray(anchor_tx), axis=-1) + np.linalg.norm(
        points - np.asarray(anchor_rx), axis=-1
    )


def scatter_lhf_is(
    z: Measurement,
    kin: KinematicState,
    extent: EoExtent,
    sector: AngularSector,
    count: int,
    rng: np.random.Generator,
    anchors,
    noise: NoiseModel,
    prev_theta: float = 0.0,
) -> float:
    """Monte Carlo surface-scatter density on the annulus model.

    Averages the range density over ``count`` scatter points drawn
    area-uniformly from the sector; unbiased for the marginal density with
    standard error proportional to 1/sqrt(count).
    """
    pose = _pose_of(kin, prev_theta)
    samples = sample_annulus_sector(extent, pose, sector, count, rng)
    anchors = np.asarray(anchors, dtype=float)
    if z.is_active:
        h = path_length_active(samples, _device_of(kin, prev_theta), anchors[z.anchor])
    else:
        h = path_length_passive(samples, anchors[z.tx], anchors[z.anchor])
    var = fisher_variance(z.u, noise)
    return float(np.mean(_normpdf(z.d, h, var)))


def ut_moments(h_values, weights):
    """Weighted mean and variance of sigma points pushed through a scalar map."""
    mu = np.sum(weights * h_values, axis=-1)
    var = np.sum(weights * (h_values - mu[..., None]) ** 2, axis=-1)
    return mu, var


def scatter_lhf_ut(
    z: Measurement,
    kin: KinematicState,
    extent: ApproxExtent,
    anchors,
    noise: NoiseModel,
    kappa_ut: float = 1.0,
    prev_theta: float = 0.0,
) -> float:
    """Unscented-transform surface-scatter density on the circular patch model.

    Sigma points of the patch facing the receiving anchor are pushed
    through the bistatic range map; the result is a Gaussian in distance
    whose variance adds the transform spread to the measurement variance.
    The same patch serves active and passive paths of that receiving anchor.
    """
    anchors = np.asarray(anchors, dtype=float)
    ellipse = scattering_ellipse(extent, kin.p, anchors[z.anchor])
    sp = sigma_points(ellipse.chi, ellipse.R, kappa_ut)
    if z.is_active:
        h = path_length_active(sp.points, _device_of(kin, prev_theta), anchors[z.anchor])
    else:
        h = path_length_passive(sp.points, anchors[z.tx], anchors[z.anchor])
    mu, var_ut = ut_moments(h, sp.weights)
    return float(_normpdf(z.d, mu, var_ut + fisher_variance(z.u, noise)))


def active_lhf(
    z: Measurement,
    kin: KinematicState,
    extent,
    anchors,
    clutter: ClutterModel,
    noise: NoiseModel,
    rng: np.random.Generator = None,
    is_samples: int = 100,
    kappa_ut: float = 1.0,
    prev_theta: float = 0.0,
) -> float:
    """Active-measurement density: direct path and surface scatter mixture."""
    f_d = los_lhf(z, kin, anchors, noise, prev_theta)
    if isinstance(extent, EoExtent):
        if rng is None:
            raise ValueError("Monte Carlo scatter density requires a random generator")
        try:
            sector = ellipse_fov(extent, _pose_of(kin, prev_theta), np.asarray(anchors)[z.anchor])
        except AnchorInsideObject:
            f_s = 0.0
        else:
            f_s = scatter_lhf_is(z, kin, extent, sector, is_samples, rng, anchors, noise, prev_theta)
    else:
        f_s = scatter_lhf_ut(z, kin, extent, anchors, noise, kappa_ut, prev_theta)
    return clutter.p_mix * f_d + (1.0 - clutter.p_mix) * f_s


def false_positive_density(z: Measurement, clutter: ClutterModel) -> float:
    """Uniform false-positive density over the measurable distance range."""
    return 1.0 / clutter.d_max


def xi_factor(
    z: Measurement,
    y: AugmentedState,
    anchors,
    clutter: ClutterModel,
    noise: NoiseModel,
    rng: np.random.Generator = None,
    is_samples: int = 100,
    kappa_ut: float = 1.0,
    prev_theta: float = 0.0,
) -> float:
    """Association-marginalized per-measurement factor, always >= 1.

    Sums the object-origin and false-positive-origin hypotheses of one
    detection: xi = 1 + (mu_m / mu_fp) * f(z | y) / f_fp(z).
    """
    kin, extent = y.kin, y.extent
    if z.is_active:
        f = active_lhf(z, kin, extent, anchors, clutter, noise, rng, is_samples, kappa_ut, prev_theta)
    elif isinstance(extent, EoExtent):
        pose = _pose_of(kin, prev_theta)
        anchors_arr = np.asarray(anchors)
        try:
            sector = common_fov(
                ellipse_fov(extent, pose, anchors_arr[z.anchor]),
                ellipse_fov(extent, pose, anchors_arr[z.tx]),
            )
        except AnchorInsideObject:
            sector = None
        if sector is None:
            f = 0.0
        else:
            if rng is None:
                raise ValueError("Monte Carlo scatter density requires a random generator")
            f = scatter_lhf_is(z, kin, extent, sector, is_samples, rng, anchors, noise, prev_theta)
    else:
        f = scatter_lhf_ut(z, kin, extent, anchors, noise, kappa_ut, prev_theta)
    ratio = clutter.mu_m / clutter.mu_fp
    return 1.0 + ratio * max(f, DENSITY_FLOOR) / false_positive_density(z, clutter)


def _measurement_arrays(measurements, noise: NoiseModel):
    """Sorted measurement list -> (z_d (M,), variance (M,)) arrays."""
    zs = sorted(measurements, key=Measurement.sort_key)
    z_d = np.array([z.d for z in zs])
    var = fisher_variance(np.array([z.u for z in zs]), noise)
    return z_d, np.atleast_1d(var)


class SurfaceSamplingLikelihood:
    """Batched update factors for the annulus model via scatter-point sampling.

    One scatter-point cloud of ``is_samples`` draws is shared by all
    measurements of a sensor (or sensor pair), per particle and per frame.
    """

    def __init__(self, anchors, clutter: ClutterModel, noise: NoiseModel, is_samples: int = 100, use_passive: bool = True):
        self.anchors = np.asarray(anchors, dtype=float)
        self.clutter = clutter
        self.noise = noise
        self.is_samples = is_samples
        self.use_passive = use_passive

    def log_xi_products(self, ps: ParticleSet, frame: FrameMeasurements, rng: np.random.Generator):
        ext = ps.extent
        P = ps.size
        logw = np.zeros(P)
        m = device_position_batch(ps.p, ps.theta, ps.b_rho, ps.b_phi)
        ratio = self.clutter.mu_m / self.clutter.mu_fp
        d_max = self.clutter.d_max

        sectors = {}

        def fov(j):
            if j not in sectors:
                sectors[j] = ellipse_fov_batch(ext.a, ext.b, ext.w, ps.theta, ps.p, self.anchors[j])
            return sectors[j]

        # a particle whose surface band reaches an anchor is geometrically
        # inadmissible (the sensors stand in free space); rejecting these
        # states outright closes the escape hatch where an inflated object
        # swallows the anchors and thereby ducks every surface factor
        admissible = np.ones(P, dtype=bool)
        for j in range(self.anchors.shape[0]):
            admissible &= fov(j)[2]

        for j, zs in enumerate(frame.active):
            if not zs:
                continue
            z_d, var = _measurement_arrays(zs, self.noise)
            start, span, valid = fov(j)
            samples = sample_annulus_sector_batch(
                ext.a, ext.b, ext.w, ps.theta, ps.p, start, span, self.is_samples, rng
            )
            h_s = path_length_active(samples, m[:, None, :], self.anchors[j])  # (P, I)
            f_s = _normpdf(z_d[:, None, None], h_s[None, :, :], var[:, None, None]).mean(axis=2)
            f_s[:, ~valid] = 0.0
            h_d = np.linalg.norm(m - self.anchors[j], axis=1)  # (P,)
            f_d = _normpdf(z_d[:, None], h_d[None, :], var[:, None])
            f = self.clutter.p_mix * f_d + (1.0 - self.clutter.p_mix) * f_s
            logw += np.log1p(ratio * np.maximum(f, DENSITY_FLOOR) * d_max).sum(axis=0)

        if self.use_passive:
            for (j, t) in sorted(frame.passive):
                zs = frame.passive[(j, t)]
                if not zs:
                    continue
                z_d, var = _measurement_arrays(zs, self.noise)
                s1, p1, v1 = fov(j)
                s2, p2, v2 = fov(t)
                start, span = common_fov_batch(s1, p1, s2, p2, v1, v2)
                nonempty = span > 0.0
                samples = sample_annulus_sector_batch(
                    ext.a, ext.b, ext.w, ps.theta, ps.p, start, span, self.is_samples, rng
                )
                h_s = path_length_passive(samples, self.anchors[t], self.anchors[j])
                f = _normpdf(z_d[:, None, None], h_s[None, :, :], var[:, None, None]).mean(axis=2)
                f[:, ~nonempty] = 0.0
                logw += np.log1p(ratio * np.maximum(f, DENSITY_FLOOR) * d_max).sum(axis=0)
        logw[~admissible] = -np.inf
        return logw


class PatchUtLikelihood:
    """Batched update factors for the circular patch model via the UT.

    The sigma points of a receiving anchor's patch are computed once per
    frame and reused for its active and passive measurements.
    """

    def __init__(self, anchors, clutter: ClutterModel, noise: NoiseModel, kappa_ut: float = 1.0, use_passive: bool = True):
        self.anchors = np.asarray(anchors, dtype=float)
        self.clutter = clutter
        self.noise = noise
        self.kappa_ut = kappa_ut
        self.use_passive = use_passive

    def log_xi_products(self, ps: ParticleSet, frame: FrameMeasurements, rng: np.random.Generator = None):
        ext = ps.extent
        P = ps.size
        logw = np.zeros(P)
        m = device_position_batch(ps.p, ps.theta, ps.b_rho, ps.b_phi)
        ratio = self.clutter.mu_m / self.clutter.mu_fp
        d_max = self.clutter.d_max

        cache = {}

        def patch(j):
            if j not in cache:
                chi, sqrt_R, valid = scattering_ellipse_batch(
                    ext.r, ext.w_s, ext.omega, ps.p, self.anchors[j]
                )
                pts, wts = sigma_points_batch(chi, sqrt_R, self.kappa_ut)
                cache[j] = (pts, wts, valid)
            return cache[j]

        for j, zs in enumerate(frame.active):
            if not zs:
                continue
            z_d, var = _measurement_arrays(zs, self.noise)
            pts, wts, valid = patch(j)
            h = path_length_active(pts, m[:, None, :], self.anchors[j])  # (P, 5)
            mu = h @ wts
            var_ut = ((h - mu[:, None]) ** 2) @ wts
            f_s = _normpdf(z_d[:, None], mu[None, :], var_ut[None, :] + var[:, None])
            f_s[:, ~valid] = 0.0
            h_d = np.linalg.norm(m - self.anchors[j], axis=1)
            f_d = _normpdf(z_d[:, None], h_d[None, :], var[:, None])
            f = self.clutter.p_mix * f_d + (1.0 - self.clutter.p_mix) * f_s
            logw += np.log1p(ratio * np.maximum(f, DENSITY_FLOOR) * d_max).sum(axis=0)

        if self.use_passive:
            for (j, t) in sorted(frame.passive):
                zs = frame.passive[(j, t)]
                if not zs:
                    continue
                z_d, var = _measurement_arrays(zs, self.noise)
                pts, wts, valid = patch(j)
                h = path_length_passive(pts, self.anchors[t], self.anchors[j])
                mu = h @ wts
                var_ut = ((h - mu[:, None]) ** 2) @ wts
                f = _normpdf(z_d[:, None], mu[None, :], var_ut[None, :] + var[:, None])
                f[:, ~valid] = 0.0
                logw += np.log1p(ratio * np.maximum(f, DENSITY_FLOOR) * d_max).sum(axis=0)
        return logw
