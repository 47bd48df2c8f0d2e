"""Measurement-level synthetic scenario generation.

Frames are drawn directly from the statistical measurement model: direct
paths when unobstructed, Poisson numbers of surface-scatter detections
drawn from the annulus-sector geometry, and Poisson clutter uniform in
distance. Normalized amplitudes follow free-space decay from a configured
reference SNR at one meter and are drawn from a Rician law before
thresholding; each detection's range noise follows the variance implied by
its drawn amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import KinematicState
from .geometry import (
    AnchorInsideObject,
    EoExtent,
    EoPose,
    common_fov,
    device_position,
    ellipse_fov,
    orientation_from_velocity,
    sample_annulus_sector,
)
from .likelihood import DEFAULT_BETA_BW, SPEED_OF_LIGHT, ClutterModel, NoiseModel, fisher_variance
from .state import FrameMeasurements, Measurement


class DegenerateSpec(ValueError):
    """Trajectory specification cannot produce a valid path."""


@dataclass(frozen=True)
class RadioParams:
    """Amplitude synthesis parameters.

    ``snr_1m_db`` anchors the amplitude scale: a direct path of one meter
    total length has mean normalized amplitude 10**(snr_1m_db / 20).
    Scattered paths are additionally attenuated by the scattering
    coefficient ``beta``. ``gamma`` is the detection threshold on the
    normalized amplitude. ``beta_bw`` is the root mean square bandwidth;
    the default corresponds to a flat 500 MHz two-sided spectrum.
    """

    f_c: float = 6.95e9
    snr_1m_db: float = 30.0
    beta: float = 0.5
    alpha_mag_active: float = 1.0
    alpha_mag_passive: float = 1.0
    gamma: float = 2.0
    beta_bw: float = DEFAULT_BETA_BW
    d_max: float = 30.0
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if min(self.f_c, self.beta, self.alpha_mag_active, self.alpha_mag_passive, self.beta_bw, self.d_max) <= 0:
            raise ValueError("radio parameters must be positive")
        if self.gamma < 0:
            raise ValueError("detection threshold must be non-negative")

    def noise_model(self) -> NoiseModel:
        return NoiseModel(beta_bw=self.beta_bw, c=self.c)


@dataclass
class Scenario:
    """Anchors, ground-truth motion, blockage schedule, and noise models.

    ``blockage`` maps an anchor index to inclusive 1-based step intervals
    during which that anchor's device link is obstructed: neither the
    direct path nor device-to-surface scatter reaches it (the device sits
    behind the object), only receiver clutter remains. Passive links are
    never blocked.
    """

    anchors: np.ndarray
    tx_set: tuple = (0,)
    waypoints: np.ndarray = None
    trajectory: list = None
    dt: float = 0.1
    steps: int = 180
    true_extent: EoExtent = field(default_factory=lambda: EoExtent(0.3, 0.2, 0.05))
    true_bias: tuple = (0.32, -np.pi / 3)
    blockage: dict = field(default_factory=dict)
    clutter: ClutterModel = field(default_factory=ClutterModel)
    radio: RadioParams = field(default_factory=RadioParams)

    def __post_init__(self):
        self.anchors = np.asarray(self.anchors, dtype=float)
        if self.anchors.ndim != 2 or self.anchors.shape[0] < 1 or self.anchors.shape[1] != 2:
            raise ValueError("anchors must be a (J, 2) array with J >= 1")
        if not self.tx_set:
            raise ValueError("tx_set must name at least one transmitting anchor")
        J = self.anchors.shape[0]
        if any(not (0 <= t < J) for t in self.tx_set):
            raise ValueError(f"tx_set entries must be valid anchor indices, got {self.tx_set}")
        for j, intervals in self.blockage.items():
            if not (0 <= j < J):
                raise ValueError(f"blockage references unknown anchor {j}")
            for lo, hi in intervals:
                if not (1 <= lo <= hi <= self.steps):
                    raise ValueError(f"blockage interval [{lo}, {hi}] outside [1, {self.steps}]")

    @property
    def n_anchors(self) -> int:
        return self.anchors.shape[0]

    @property
    def pairs(self):
        return [(j, t) for j in range(self.n_anchors) for t in self.tx_set]

    def is_blocked(self, anchor: int, step: int) -> bool:
        return any(lo <= step <= hi for lo, hi in self.blockage.get(anchor, ()))

    def ground_truth(self):
        """Per-step true kinematic states (built from waypoints if needed)."""
        if self.trajectory is not None:
            if len(self.trajectory) != self.steps:
                raise DegenerateSpec(
                    f"explicit trajectory has {len(self.trajectory)} steps, expected {self.steps}"
                )
            return list(self.trajectory)
        if self.waypoints is None:
            raise DegenerateSpec("scenario defines neither waypoints nor an explicit trajectory")
        b_rho, b_phi = self.true_bias
        return build_trajectory(self.waypoints, self.steps, self.dt, b_rho, b_phi)


def build_trajectory(waypoints, steps: int, dt: float, b_rho: float, b_phi: float):
    """Smooth C2 path through the waypoints at constant nominal speed.

    Knot times are proportional to cumulative chord length, so the
    interpolant passes every waypoint and its analytic derivative provides
    the velocities. Two waypoints degenerate to a straight constant-speed
    leg.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
        raise DegenerateSpec("need at least two 2D waypoints")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(seg <= 0):
        raise DegenerateSpec("consecutive waypoints must be distinct")
    total = float(seg.sum())
    if total <= 0:
        raise DegenerateSpec("trajectory has zero length")
    duration = (steps - 1) * dt
    knot_t = np.concatenate([[0.0], np.cumsum(seg)]) / total * duration
    spline = CubicSpline(knot_t, pts, axis=0, bc_type="natural")
    deriv = spline.derivative()
    states = []
    for n in range(steps):
        t = n * dt
        states.append(KinematicState(spline(t), deriv(t), b_rho, b_phi))
    return states


def trajectory_headings(states) -> np.ndarray:
    """Object heading per step, holding the previous value at near-zero speed."""
    thetas = np.empty(len(states))
    prev = 0.0
    for i, kin in enumerate(states):
        prev = orientation_from_velocity(kin.v, prev)
        thetas[i] = prev
    return thetas


def amplitude_mean(tau: float, kind: str, radio: RadioParams) -> float:
    """Mean normalized amplitude of a path with delay ``tau`` [s].

    Free-space decay relative to the 1 m reference: u = u_ref / d with
    d = c * tau, times the scattering coefficient for surface paths.
    """
    if tau <= 0:
        raise ValueError(f"path delay must be positive, got {tau}")
    d = radio.c * tau
    u_ref = 10.0 ** (radio.snr_1m_db / 20.0)
    if kind == "los":
        return radio.alpha_mag_active * u_ref / d
    if kind == "active_scatter":
        return radio.alpha_mag_active * radio.beta * u_ref / d
    if kind == "passive_scatter":
        return radio.alpha_mag_passive * radio.beta * u_ref / d
    raise ValueError(f"unknown path kind {kind!r}")


def draw_amplitude(u_mean: float, rng: np.random.Generator) -> float:
    """Rician amplitude draw with noncentrality u_mean and squared scale 1/2."""
    if u_mean <= 0:
        raise ValueError(f"mean amplitude must be positive, got {u_mean}")
    s = np.sqrt(0.5)
    return float(np.hypot(u_mean + s * rng.standard_normal(), s * rng.standard_normal()))


@dataclass(frozen=True)
class MeasurementOrigin:
    """Ground-truth provenance of one emitted measurement."""

    kind: str  # "los" | "scatter" | "clutter"
    scatter_point: np.ndarray = None
    true_distance: float = None


@dataclass
class FrameTruth:
    """Ground truth snapshot accompanying one generated frame."""

    m: np.ndarray
    p: np.ndarray
    theta: float
    active_origins: list = field(default_factory=list)
    passive_origins: dict = field(default_factory=dict)


def _noisy_distance(h: float, sigma: float, d_max: float, rng, max_tries: int = 100):
    """Truth plus Gaussian noise, redrawn into [0, d_max]; None when exhausted."""
    for _ in range(max_tries):
        d = h + sigma * rng.standard_normal()
        if 0.0 <= d <= d_max:
            return float(d)
    return None


def _clutter_amplitude(gamma: float, rng, max_tries: int = 100) -> float:
    """Near-threshold clutter amplitude: Rician tail conditioned above gamma."""
    s = np.sqrt(0.5)
    nu = max(gamma, 1e-9)
    for _ in range(max_tries):
        u = float(np.hypot(nu + s * rng.standard_normal(), s * rng.standard_normal()))
        if u >= gamma:
            return u
    return float(nu)


def generate_frame(step: int, scenario: Scenario, kin: KinematicState, theta: float, rng: np.random.Generator):
    """Draw all measurements of one time step.

    Returns (FrameMeasurements, FrameTruth); origin lists are index-aligned
    with the shuffled measurement lists. ``step`` is 1-based to match the
    blockage schedule convention.
    """
    radio = scenario.radio
    clutter = scenario.clutter
    noise = radio.noise_model()
    extent = scenario.true_extent
    pose = EoPose(kin.p, theta)
    m = device_position(kin.p, kin.v, kin.b_rho, kin.b_phi, prev_theta=theta)
    anchors = scenario.anchors

    def fov(j):
        try:
            return ellipse_fov(extent, pose, anchors[j])
        except AnchorInsideObject:
            return None

    def emit(h: float, kind: str, scatter_point=None):
        """Amplitude draw, threshold, and range noise for one candidate path."""
        u_mean = amplitude_mean(h / radio.c, kind, radio)
        u = draw_amplitude(u_mean, rng)
        if u < radio.gamma:
            return None
        sigma = float(np.sqrt(fisher_variance(u, noise)))
        d = _noisy_distance(h, sigma, radio.d_max, rng)
        if d is None:
            return None
        origin_kind = "los" if kind == "los" else "scatter"
        return d, u, MeasurementOrigin(origin_kind, scatter_point, h)

    def shuffled(measurements, origins):
        if len(measurements) <= 1:
            return measurements, origins
        perm = rng.permutation(len(measurements))
        return [measurements[i] for i in perm], [origins[i] for i in perm]

    frame = FrameMeasurements.empty(scenario.n_anchors, scenario.pairs)
    truth = FrameTruth(m=m, p=kin.p.copy(), theta=theta)

    for j in range(scenario.n_anchors):
        meas, origins = [], []
        if not scenario.is_blocked(j, step):
            h_los = float(np.linalg.norm(m - anchors[j]))
            hit = emit(h_los, "los")
            if hit is not None:
                d, u, origin = hit
                meas.append(Measurement(d, u, j))
                origins.append(origin)
            n_scatter = rng.poisson(clutter.mu_m)
            sector = fov(j)
            if n_scatter > 0 and sector is not None:
                points = sample_annulus_sector(extent, pose, sector, n_scatter, rng)
                for q in points:
                    h = float(np.linalg.norm(q - m) + np.linalg.norm(q - anchors[j]))
                    hit = emit(h, "active_scatter", q.copy())
                    if hit is not None:
                        d, u, origin = hit
                        meas.append(Measurement(d, u, j))
                        origins.append(origin)
        for _ in range(rng.poisson(clutter.mu_fp)):
            d = float(rng.uniform(0.0, radio.d_max))
            u = _clutter_amplitude(radio.gamma, rng)
            meas.append(Measurement(d, u, j))
            origins.append(MeasurementOrigin("clutter"))
        meas, origins = shuffled(meas, origins)
        frame.active[j] = meas
        truth.active_origins.append(origins)

    for (j, t) in scenario.pairs:
        meas, origins = [], []
        n_scatter = rng.poisson(clutter.mu_m)
        sector_j, sector_t = fov(j), fov(t)
        sector = common_fov(sector_j, sector_t) if (sector_j and sector_t) else None
        if n_scatter > 0 and sector is not None:
            points = sample_annulus_sector(extent, pose, sector, n_scatter, rng)
            for q in points:
                h = float(np.linalg.norm(q - anchors[t]) + np.linalg.norm(q - anchors[j]))
                hit = emit(h, "passive_scatter", q.copy())
                if hit is not None:
                    d, u, origin = hit
                    meas.append(Measurement(d, u, j, tx=t))
                    origins.append(origin)
        for _ in range(rng.poisson(clutter.mu_fp)):
            d = float(rng.uniform(0.0, radio.d_max))
            u = _clutter_amplitude(radio.gamma, rng)
            meas.append(Measurement(d, u, j, tx=t))
            origins.append(MeasurementOrigin("clutter"))
        meas, origins = shuffled(meas, origins)
        frame.passive[(j, t)] = meas
        truth.passive_origins[(j, t)] = origins

    return frame, truth


def default_scenario(**overrides) -> Scenario:
    """Room-scale scenario: three anchors, one passive transmitter, a smooth
    trajectory with two direction changes, and the standard blockage windows."""
    base = dict(
        anchors=np.array([[0.0, 0.0], [5.0, 0.0], [2.5, 4.0]]),
        tx_set=(0,),
        waypoints=np.array([[0.8, 0.8], [3.8, 1.0], [4.2, 3.2], [1.2, 3.4]]),
        dt=0.1,
        steps=180,
        true_extent=EoExtent(0.3, 0.2, 0.05),
        true_bias=(0.32, -np.pi / 3),
        blockage={0: [(31, 80), (111, 130)], 1: [(31, 130)], 2: [(31, 60), (111, 130)]},
        clutter=ClutterModel(),
        radio=RadioParams(),
    )
    base.update(overrides)
    return Scenario(**base)
