"""Planar geometry for surface-scattering object models.

Two object representations are used throughout the package:

* an elliptic annulus sector model: the object is an ellipse with semi-axes
  (a, b) whose scatter points lie in an annular band of half-width w around
  the surface, restricted to the angular arc visible from a sensor;
* a circular patch model: the object is a circle of radius r and the
  scattering toward a sensor is summarized by a Gaussian patch centered on
  the sensor-facing point of the circle.

Positions are in meters in a fixed world frame, angles in radians. All
functions are pure; random sampling takes an explicit ``numpy`` Generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

# Regularization added to squared patch half-axes so that degenerate
# geometry (zero opening angle or width) still yields a factorizable matrix.
PATCH_EPS = 1e-12


class GeometryError(ValueError):
    """Base class for geometric precondition violations."""


class AnchorInsideObject(GeometryError):
    """Sensor position lies inside or on the outer object boundary."""


class EmptySector(GeometryError):
    """An operation requiring a non-empty angular sector received none."""


class DegenerateGeometry(GeometryError):
    """Geometry is degenerate (e.g. sensor coincides with the object center)."""


class NotPSD(GeometryError):
    """Matrix square root failed because the input is not PSD."""


def wrap_angle(angle):
    """Wrap angle(s) into [-pi, pi)."""
    return np.mod(np.asarray(angle) + np.pi, TWO_PI) - np.pi


def circular_mean(angles, weights=None):
    """Weighted mean direction of angles, in [-pi, pi)."""
    angles = np.asarray(angles, dtype=float)
    if weights is None:
        weights = np.full(angles.shape, 1.0 / angles.size)
    s = np.sum(weights * np.sin(angles))
    c = np.sum(weights * np.cos(angles))
    return float(wrap_angle(np.arctan2(s, c)))


def orientation_from_velocity(v, prev_theta: float = 0.0, speed_eps: float = 1e-6) -> float:
    """Heading angle of a velocity vector; holds ``prev_theta`` when nearly at rest."""
    v = np.asarray(v, dtype=float)
    if np.hypot(v[0], v[1]) < speed_eps:
        return float(wrap_angle(prev_theta))
    return float(np.arctan2(v[1], v[0]))


@dataclass(frozen=True)
class EoPose:
    """Center position [m] and heading [rad] of the object."""

    center: np.ndarray
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))


@dataclass(frozen=True)
class EoExtent:
    """Elliptic annulus extent: semi-axes a >= b > 0 [m], band half-width 0 <= w < b."""

    a: float
    b: float
    w: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"semi-axes must be positive, got a={self.a}, b={self.b}")
        if self.a < self.b:
            raise ValueError(f"semi-major axis must dominate: a={self.a} < b={self.b}")
        if not (0 <= self.w < self.b):
            raise ValueError(f"band half-width must satisfy 0 <= w < b, got w={self.w}")


@dataclass(frozen=True)
class ApproxExtent:
    """Circular patch extent: radius r > 0 [m], patch width w_s > 0 [m].

    ``omega`` is the fixed symmetric opening angle (rad) subtending the
    sensor-facing surface patch; it is a model constant, not an estimated
    state variable.
    """

    r: float
    w_s: float
    omega: float

    def __post_init__(self):
        if self.r <= 0 or self.w_s <= 0:
            raise ValueError(f"patch extent must be positive, got r={self.r}, w_s={self.w_s}")
        if not (0 < self.omega < np.pi):
            raise ValueError(f"opening angle must lie in (0, pi), got {self.omega}")


@dataclass(frozen=True)
class AngularSector:
    """Angular interval on the object surface, stored as (start, signed span).

    ``start`` is wrapped into [-pi, pi); ``span`` lies in (0, 2*pi]. A span
    of exactly 2*pi denotes the full circle. Empty intersections are
    represented by ``None`` at call sites, never by a zero-span sector.
    """

    start: float
    span: float

    def __post_init__(self):
        if not (0 < self.span <= TWO_PI):
            raise ValueError(f"sector span must lie in (0, 2*pi], got {self.span}")
        object.__setattr__(self, "start", float(wrap_angle(self.start)))
        object.__setattr__(self, "span", float(self.span))

    @classmethod
    def from_endpoints(cls, phi_s: float, phi_e: float) -> "AngularSector":
        """Sector running counterclockwise from phi_s to phi_e."""
        span = float(np.mod(phi_e - phi_s, TWO_PI))
        if span == 0.0:
            span = TWO_PI
        return cls(phi_s, span)

    @property
    def phi_s(self) -> float:
        return self.start

    @property
    def phi_e(self) -> float:
        return float(wrap_angle(self.start + self.span))

    def contains(self, angle, tol: float = 1e-12):
        """Membership test with wrap-around, elementwise over ``angle``."""
        rel = np.mod(np.asarray(angle) - self.start, TWO_PI)
        return (rel <= self.span + tol) | (rel >= TWO_PI - tol)


@dataclass(frozen=True)
class ScatteringEllipse:
    """Gaussian surface patch: center chi [m] and 2x2 scattering matrix R [m^2]."""

    chi: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "chi", np.asarray(self.chi, dtype=float))
        object.__setattr__(self, "R", np.asarray(self.R, dtype=float))


@dataclass(frozen=True)
class SigmaPointSet:
    """Deterministic 2D sigma points (5, 2) with weights (5,) summing to one."""

    points: np.ndarray
    weights: np.ndarray


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def device_position(p, v, b_rho: float, b_phi: float, prev_theta: float = 0.0) -> np.ndarray:
    """World position of the radio device mounted at polar offset (b_rho, b_phi).

    The offset angle is measured in the object frame, whose orientation is
    the heading of the velocity vector ``v``.
    """
    theta = orientation_from_velocity(v, prev_theta)
    ang = b_phi + theta
    return np.asarray(p, dtype=float) + b_rho * np.array([np.cos(ang), np.sin(ang)])


def device_position_batch(p, theta, b_rho, b_phi) -> np.ndarray:
    """Vectorized device position for particle arrays.

    p: (P, 2); theta, b_rho, b_phi: (P,). Returns (P, 2).
    """
    ang = b_phi + theta
    return p + b_rho[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def _anchor_in_unit_frame(extent_a, extent_b, theta, center, anchor):
    """Map an anchor into the frame where the object ellipse is the unit circle."""
    d = np.asarray(anchor, dtype=float) - center
    c, s = np.cos(theta), np.sin(theta)
    # rotate by -theta, then scale axes by (1/a, 1/b)
    tx = (c * d[..., 0] + s * d[..., 1]) / extent_a
    ty = (-s * d[..., 0] + c * d[..., 1]) / extent_b
    return tx, ty


def ellipse_fov(extent: EoExtent, pose: EoPose, anchor) -> AngularSector:
    """Angular arc of the ellipse surface visible from ``anchor``.

    The arc is bounded by the two tangency points of the tangents drawn
    from the anchor, computed exactly in the frame where the ellipse is a
    unit circle. Returned angles are parametric ellipse angles, i.e. the
    angles used by :func:`sample_annulus_sector` before the affine map.

    Raises AnchorInsideObject if the anchor is not strictly outside the
    outer annulus boundary.
    """
    tx, ty = _anchor_in_unit_frame(extent.a, extent.b, pose.theta, pose.center, anchor)
    d = float(np.hypot(tx, ty))
    r_out = 1.0 + extent.w / extent.a
    if d <= r_out:
        raise AnchorInsideObject(
            f"anchor at unit-frame distance {d:.6g} is inside the outer boundary {r_out:.6g}"
        )
    beta = float(np.arctan2(ty, tx))
    alpha = float(np.arccos(1.0 / d))
    return AngularSector(beta - alpha, 2.0 * alpha)


def ellipse_fov_batch(a, b, w, theta, centers, anchor):
    """Vectorized :func:`ellipse_fov` over particle arrays.

    Returns (start, span, valid) with shape (P,); entries with
    ``valid == False`` have no usable field of view (anchor not strictly
    outside the outer boundary) and carry unspecified start/span values.
    """
    anchor = np.asarray(anchor, dtype=float)
    d = anchor[None, :] - centers
    c, s = np.cos(theta), np.sin(theta)
    tx = (c * d[:, 0] + s * d[:, 1]) / a
    ty = (-s * d[:, 0] + c * d[:, 1]) / b
    dist = np.hypot(tx, ty)
    valid = dist > 1.0 + w / a
    safe = np.where(valid, dist, 2.0)
    beta = np.arctan2(ty, tx)
    alpha = np.arccos(1.0 / safe)
    return beta - alpha, 2.0 * alpha, valid


def _intersect_spans(s1, p1, s2, p2):
    """Core sector intersection on (start, span) arrays.

    Returns (start, span); span <= 0 marks an empty intersection. When the
    intersection splits into two disjoint pieces, the larger piece is kept.
    """
    delta = np.mod(s2 - s1, TWO_PI)
    # piece with sector 2 unwrapped to start at delta >= 0
    lo_a = np.maximum(0.0, delta)
    hi_a = np.minimum(p1, delta + p2)
    len_a = hi_a - lo_a
    # piece with sector 2 shifted one turn down
    hi_b = np.minimum(p1, delta - TWO_PI + p2)
    len_b = hi_b  # lower edge clamps to 0
    use_b = len_b > len_a
    start = np.where(use_b, s1, s1 + lo_a)
    span = np.where(use_b, len_b, len_a)
    return start, span


def common_fov(s1: AngularSector, s2: AngularSector):
    """Intersection of two surface arcs, or ``None`` if they are disjoint.

    If the arcs overlap in two disjoint pieces (possible only for nearly
    antipodal sensors whose spans sum past a full turn), the larger piece
    is returned so that downstream sampling has contiguous support.
    """
    start, span = _intersect_spans(
        np.array(s1.start), np.array(s1.span), np.array(s2.start), np.array(s2.span)
    )
    if span <= 0:
        return None
    return AngularSector(float(start), min(float(span), TWO_PI))


def common_fov_batch(start1, span1, start2, span2, valid1, valid2):
    """Vectorized :func:`common_fov`; span <= 0 or invalid inputs mark empty."""
    start, span = _intersect_spans(start1, span1, start2, span2)
    span = np.where(valid1 & valid2, span, 0.0)
    return start, span


def sample_annulus_sector(
    extent: EoExtent, pose: EoPose, sector: AngularSector, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``count`` scatter points, area-uniform on the annulus sector.

    Sampling happens in the pre-image frame where the ellipse is a unit
    circle: squared radius uniform on [r_in^2, r_out^2] with
    r_in = 1 - w/a and r_out = 1 + w/a, angle uniform on the sector. The
    points are then scaled by diag(a, b), rotated by the heading and
    translated to the object center, which preserves area uniformity.

    Returns world-frame points of shape (count, 2).
    """
    if sector is None:
        raise EmptySector("cannot sample scatter points from an empty sector")
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    r_in = 1.0 - extent.w / extent.a
    r_out = 1.0 + extent.w / extent.a
    rho = rng.uniform(r_in**2, r_out**2, size=count)
    phi = sector.start + sector.span * rng.uniform(0.0, 1.0, size=count)
    radius = np.sqrt(rho)
    qx = extent.a * radius * np.cos(phi)
    qy = extent.b * radius * np.sin(phi)
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    return pose.center + np.stack([c * qx - s * qy, s * qx + c * qy], axis=1)


def sample_annulus_sector_batch(a, b, w, theta, centers, start, span, count, rng):
    """Vectorized sampler over particles: returns (P, count, 2) world points.

    Serves the Monte Carlo likelihood integrals: one stratified quantile
    grid (a Latin-hypercube pairing of angle and radius strata) is shared
    by all particles of a call. Each particle's draws remain area-uniform
    on its own sector, so the integral estimates stay unbiased, while the
    shared quantiles cancel sampling noise out of particle weight ratios
    and the strata cut the estimator variance.

    Rows with span <= 0 still produce draws (from a zero-width angle
    interval); callers must mask their contribution.
    """
    P = a.shape[0]
    r_in = 1.0 - w / a
    r_out = 1.0 + w / a
    u_phi = (np.arange(count) + rng.uniform()) / count
    u_rho = rng.permutation(count) / count + rng.uniform() / count
    rho = u_rho[None, :] * (r_out**2 - r_in**2)[:, None] + (r_in**2)[:, None]
    phi = start[:, None] + np.maximum(span, 0.0)[:, None] * u_phi[None, :]
    radius = np.sqrt(rho)
    qx = a[:, None] * radius * np.cos(phi)
    qy = b[:, None] * radius * np.sin(phi)
    c, s = np.cos(theta)[:, None], np.sin(theta)[:, None]
    out = np.empty((P, count, 2))
    out[:, :, 0] = centers[:, 0:1] + c * qx - s * qy
    out[:, :, 1] = centers[:, 1:2] + s * qx + c * qy
    return out


def annulus_preimage(extent: EoExtent, pose: EoPose, points: np.ndarray):
    """Map world points back to the unit-circle pre-image frame.

    Returns (radius, angle) arrays; a point belongs to the annulus band iff
    radius lies in [1 - w/a, 1 + w/a] and angle falls in the sector.
    """
    d = np.asarray(points, dtype=float) - pose.center
    c, s = np.cos(pose.theta), np.sin(pose.theta)
    qx = (c * d[:, 0] + s * d[:, 1]) / extent.a
    qy = (-s * d[:, 0] + c * d[:, 1]) / extent.b
    return np.hypot(qx, qy), np.arctan2(qy, qx)


def scattering_ellipse(extent: ApproxExtent, p, anchor) -> ScatteringEllipse:
    """Gaussian surface patch of the circular object facing ``anchor``.

    The patch center chi sits on the circle of radius r around ``p`` on the
    anchor-facing side. Its long axis is the chord subtended by the opening
    angle, l_s = 2 r sin(omega / 2), oriented along the circle tangent
    (perpendicular to the anchor direction); the short axis is w_s. The
    scattering matrix is R = rot(t) diag((l_s/2)^2, (w_s/2)^2) rot(t)^T
    with t the tangent direction.
    """
    p = np.asarray(p, dtype=float)
    delta = np.asarray(anchor, dtype=float) - p
    dist = float(np.hypot(delta[0], delta[1]))
    if dist < 1e-12:
        raise DegenerateGeometry("anchor coincides with the object center")
    phi = float(np.arctan2(delta[1], delta[0]))
    chi = p + extent.r * np.array([np.cos(phi), np.sin(phi)])
    theta_s = phi + np.pi / 2.0
    l_s = 2.0 * extent.r * np.sin(extent.omega / 2.0)
    E = np.diag([(l_s / 2.0) ** 2 + PATCH_EPS, (extent.w_s / 2.0) ** 2 + PATCH_EPS])
    A = rotation_matrix(theta_s)
    return ScatteringEllipse(chi, A @ E @ A.T)


def scattering_ellipse_batch(r, w_s, omega, p, anchor):
    """Vectorized patch construction over particles.

    Returns (chi, sqrt_R, valid): chi is (P, 2); sqrt_R is the symmetric
    square root of the scattering matrix, shape (P, 2, 2); ``valid`` flags
    particles whose center does not coincide with the anchor.
    """
    anchor = np.asarray(anchor, dtype=float)
    delta = anchor[None, :] - p
    dist = np.hypot(delta[:, 0], delta[:, 1])
    valid = dist > 1e-12
    phi = np.arctan2(delta[:, 1], delta[:, 0])
    chi = p + r[:, None] * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    # symmetric sqrt of R shares R's eigenvectors; its semi-axes are the
    # patch half-axes (regularized in the squared domain)
    sig1 = np.sqrt((r * np.sin(omega / 2.0)) ** 2 + PATCH_EPS)
    sig2 = np.sqrt((w_s / 2.0) ** 2 + PATCH_EPS)
    c, s = np.cos(phi + np.pi / 2.0), np.sin(phi + np.pi / 2.0)
    sqrt_R = np.empty((r.shape[0], 2, 2))
    sqrt_R[:, 0, 0] = c * c * sig1 + s * s * sig2
    sqrt_R[:, 1, 1] = s * s * sig1 + c * c * sig2
    sqrt_R[:, 0, 1] = sqrt_R[:, 1, 0] = c * s * (sig1 - sig2)
    return chi, sqrt_R, valid


def sigma_points(chi, R, kappa_ut: float) -> SigmaPointSet:
    """2D unscented-transform sigma points for a Gaussian N(chi, R).

    Five points: the mean, plus +/- sqrt(D + kappa) times each column of
    the symmetric matrix square root of R (D = 2). Weights are
    kappa/(D + kappa) for the mean and 1/(2 (D + kappa)) for the rest.
    """
    D = 2
    if D + kappa_ut <= 0:
        raise ValueError(f"D + kappa must be positive, got kappa={kappa_ut}")
    chi = np.asarray(chi, dtype=float)
    R = np.asarray(R, dtype=float)
    lam, V = np.linalg.eigh(0.5 * (R + R.T))
    if np.min(lam) < -1e-10 * max(1.0, float(np.max(np.abs(lam)))):
        raise NotPSD(f"scattering matrix has negative eigenvalue {np.min(lam):.3e}")
    root = V @ np.diag(np.sqrt(np.clip(lam, 0.0, None))) @ V.T
    scale = np.sqrt(D + kappa_ut)
    points = np.empty((2 * D + 1, 2))
    points[0] = chi
    for d in range(D):
        points[1 + d] = chi + scale * root[:, d]
        points[1 + D + d] = chi - scale * root[:, d]
    weights = np.full(2 * D + 1, 1.0 / (2.0 * (D + kappa_ut)))
    weights[0] = kappa_ut / (D + kappa_ut)
    return SigmaPointSet(points, weights)


def sigma_points_batch(chi, sqrt_R, kappa_ut: float):
    """Vectorized sigma points from precomputed symmetric roots.

    chi: (P, 2); sqrt_R: (P, 2, 2). Returns (points (P, 5, 2), weights (5,)).
    """
    D = 2
    scale = np.sqrt(D + kappa_ut)
    P = chi.shape[0]
    points = np.empty((P, 2 * D + 1, 2))
    points[:, 0, :] = chi
    points[:, 1, :] = chi + scale * sqrt_R[:, :, 0]
    points[:, 2, :] = chi + scale * sqrt_R[:, :, 1]
    points[:, 3, :] = chi - scale * sqrt_R[:, :, 0]
    points[:, 4, :] = chi - scale * sqrt_R[:, :, 1]
    weights = np.full(2 * D + 1, 1.0 / (2.0 * (D + kappa_ut)))
    weights[0] = kappa_ut / (D + kappa_ut)
    return points, weights
