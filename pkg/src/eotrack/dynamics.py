"""State-transition models for the tracked object.

The motion follows a discretized constant-velocity model driven by white
acceleration noise. Strictly positive state variables (device offset length
and all extent components) evolve through mean-preserving Gamma kernels
with relative variance 1/kappa; the device offset angle follows a wrapped
normal random walk on the circle.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .geometry import ApproxExtent, EoExtent, wrap_angle


@dataclass(frozen=True)
class KinematicState:
    """Object center p [m], velocity v [m/s], device offset (b_rho [m], b_phi [rad])."""

    p: np.ndarray
    v: np.ndarray
    b_rho: float
    b_phi: float

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.b_rho <= 0:
            raise ValueError(f"device offset length must be positive, got {self.b_rho}")
        object.__setattr__(self, "b_phi", float(wrap_angle(self.b_phi)))


@dataclass(frozen=True)
class MotionParams:
    """Transition noise parameters; kappas are Gamma concentration values.

    ``b_rho_max`` bounds the support of the device offset length: the
    device is mounted on (or held by) the object, so its distance from the
    object center cannot exceed a body-scale reach. Draws beyond the bound
    are redrawn, then clamped.
    """

    dt: float = 0.1
    sigma_a: float = 2.0
    kappa_rho: float = 100.0
    sigma_phi: float = 0.5
    kappa_a: float = 400.0
    kappa_b: float = 400.0
    kappa_w: float = 400.0
    kappa_r: float = 400.0
    kappa_ws: float = 400.0
    b_rho_max: float = 1.0
    extent_max: float = 1.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        for name in ("kappa_rho", "kappa_a", "kappa_b", "kappa_w", "kappa_r", "kappa_ws"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma_a < 0 or self.sigma_phi <= 0:
            raise ValueError("noise scales must be positive (sigma_a may be zero)")
        if self.b_rho_max <= 0 or self.extent_max <= 0:
            raise ValueError("support bounds must be positive")


Extent = Union[EoExtent, ApproxExtent]


@dataclass(frozen=True)
class AugmentedState:
    """Kinematic state plus the extent of whichever surface model is active."""

    kin: KinematicState
    extent: Extent


def predict_kinematic(kin: KinematicState, params: MotionParams, rng: np.random.Generator) -> KinematicState:
    """One constant-velocity step with a single shared acceleration draw per axis."""
    p, v = predict_kinematic_batch(kin.p[None, :], kin.v[None, :], params, rng)
    b_rho, b_phi = transition_bias(kin.b_rho, kin.b_phi, params, rng)
    return KinematicState(p[0], v[0], b_rho, b_phi)


def predict_kinematic_batch(p, v, params: MotionParams, rng: np.random.Generator):
    """Vectorized CV step: p, v are (P, 2); returns advanced copies.

    The same acceleration sample drives both the position and velocity
    increments of a particle, matching the white-acceleration discretization
    [p v] <- A [p v] + B w with B = [dt^2/2, dt]^T per axis.
    """
    dt = params.dt
    accel = params.sigma_a * rng.standard_normal(size=p.shape)
    p_next = p + dt * v + 0.5 * dt * dt * accel
    v_next = v + dt * accel
    return p_next, v_next


def transition_bias(b_rho, b_phi, params: MotionParams, rng: np.random.Generator, max_tries: int = 20):
    """Mean-preserving Gamma step for the offset length, wrapped-normal step for the angle.

    Offset lengths are kept within (0, b_rho_max] by redrawing out-of-range
    samples, then clamping stragglers.
    """
    b_rho = np.asarray(b_rho, dtype=float)
    rho_next = np.asarray(rng.gamma(shape=params.kappa_rho, scale=b_rho / params.kappa_rho))
    tries = 0
    over = rho_next > params.b_rho_max
    while np.any(over) and tries < max_tries:
        redraw = rng.gamma(
            shape=params.kappa_rho,
            scale=np.minimum(b_rho, params.b_rho_max) / params.kappa_rho,
            size=rho_next.shape,
        )
        rho_next = np.where(over, redraw, rho_next)
        over = rho_next > params.b_rho_max
        tries += 1
    rho_next = np.minimum(rho_next, params.b_rho_max)
    phi_next = wrap_angle(np.asarray(b_phi) + params.sigma_phi * rng.standard_normal(size=np.shape(b_phi)))
    if rho_next.ndim == 0:
        return float(rho_next), float(phi_next)
    return rho_next, phi_next


def _gamma_step(x, kappa, rng):
    return rng.gamma(shape=kappa, scale=np.asarray(x, dtype=float) / kappa)


def transition_extent(extent: Extent, params: MotionParams, rng: np.random.Generator) -> Extent:
    """Advance the extent state; each component is an independent Gamma step."""
    if isinstance(extent, EoExtent):
        a, b, w = transition_annulus_batch(
            np.array([extent.a]), np.array([extent.b]), np.array([extent.w]), params, rng
        )
        return EoExtent(float(a[0]), float(b[0]), float(w[0]))
    r, w_s = transition_patch_batch(np.array([extent.r]), np.array([extent.w_s]), params, rng)
    return ApproxExtent(float(r[0]), float(w_s[0]), extent.omega)


def transition_annulus_batch(a, b, w, params: MotionParams, rng: np.random.Generator, max_tries: int = 100):
    """Vectorized annulus-extent step enforcing a >= b and w < b.

    Rows violating the ordering constraints are redrawn up to ``max_tries``
    times; stragglers are repaired by swapping the axes and clamping the
    band width just below b. This keeps marginals intact almost everywhere.
    """
    a_next = _gamma_step(a, params.kappa_a, rng)
    b_next = _gamma_step(b, params.kappa_b, rng)
    w_next = _gamma_step(w, params.kappa_w, rng)
    bad = (a_next < b_next) | (w_next >= b_next) | (a_next > params.extent_max)
    tries = 0
    while np.any(bad) and tries < max_tries:
        idx = np.flatnonzero(bad)
        a_next[idx] = _gamma_step(np.minimum(a[idx], params.extent_max), params.kappa_a, rng)
        b_next[idx] = _gamma_step(b[idx], params.kappa_b, rng)
        w_next[idx] = _gamma_step(w[idx], params.kappa_w, rng)
        bad = (a_next < b_next) | (w_next >= b_next) | (a_next > params.extent_max)
        tries += 1
    if np.any(bad):
        idx = np.flatnonzero(bad)
        swap = a_next[idx] < b_next[idx]
        hi = np.where(swap, b_next[idx], a_next[idx])
        lo = np.where(swap, a_next[idx], b_next[idx])
        a_next[idx], b_next[idx] = hi, lo
        a_next[idx] = np.minimum(a_next[idx], params.extent_max)
        b_next[idx] = np.minimum(b_next[idx], a_next[idx])
        w_next[idx] = np.minimum(w_next[idx], 0.99 * b_next[idx])
    return a_next, b_next, w_next


def transition_patch_batch(r, w_s, params: MotionParams, rng: np.random.Generator):
    """Vectorized patch-extent step; positivity is automatic for Gamma draws."""
    r_next = np.minimum(_gamma_step(r, params.kappa_r, rng), params.extent_max)
    ws_next = np.minimum(_gamma_step(w_s, params.kappa_ws, rng), params.extent_max)
    return r_next, ws_next


def wrapped_normal_pdf(x, mu: float, sigma: float, K: int = 3):
    """Density of the wrapped normal on [-pi, pi), truncated to |k| <= K turns.

    K = 3 keeps the truncation error below 1e-12 for sigma <= 1.
    """
    if K < 1:
        raise ValueError("truncation half-width K must be >= 1")
    x = np.asarray(x, dtype=float)
    ks = np.arange(-K, K + 1)
    args = x[..., None] + 2.0 * np.pi * ks - mu
    dens = np.exp(-0.5 * (args / sigma) ** 2).sum(axis=-1) / (np.sqrt(2.0 * np.pi) * sigma)
    if dens.ndim == 0:
        return float(dens)
    return dens
