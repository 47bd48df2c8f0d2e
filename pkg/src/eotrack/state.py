"""Shared data containers: measurements, frames, and particle arrays."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .dynamics import AugmentedState, KinematicState
from .geometry import ApproxExtent, EoExtent


@dataclass(frozen=True)
class Measurement:
    """One range/amplitude detection.

    ``anchor`` is the receiving anchor index. Active measurements (device
    to anchor) leave ``tx`` as None; passive ones (anchor-to-anchor paths
    reflected off the object) carry the transmitting anchor index.
    """

    d: float
    u: float
    anchor: int
    tx: Optional[int] = None

    def __post_init__(self):
        if self.d < 0:
            raise ValueError(f"distance must be non-negative, got {self.d}")
        if self.u <= 0:
            raise ValueError(f"normalized amplitude must be positive, got {self.u}")

    @property
    def is_active(self) -> bool:
        return self.tx is None

    def sort_key(self):
        return (self.d, self.u)


@dataclass
class FrameMeasurements:
    """All measurements of one time step.

    ``active[j]`` lists the detections received at anchor j from the device
    link; ``passive[(j, t)]`` lists detections received at anchor j on the
    link transmitted by anchor t.
    """

    active: list
    passive: dict = field(default_factory=dict)

    @classmethod
    def empty(cls, n_anchors: int, pairs=()) -> "FrameMeasurements":
        return cls(active=[[] for _ in range(n_anchors)], passive={pair: [] for pair in pairs})

    def count(self) -> int:
        return sum(len(zs) for zs in self.active) + sum(len(zs) for zs in self.passive.values())


@dataclass
class AnnulusArrays:
    """Per-particle elliptic annulus extents: arrays a, b, w of shape (P,)."""

    a: np.ndarray
    b: np.ndarray
    w: np.ndarray

    def copy(self):
        return AnnulusArrays(self.a.copy(), self.b.copy(), self.w.copy())

    def take(self, idx):
        return AnnulusArrays(self.a[idx], self.b[idx], self.w[idx])

    def mean(self, weights) -> EoExtent:
        a = float(np.dot(weights, self.a))
        b = float(np.dot(weights, self.b))
        w = float(np.dot(weights, self.w))
        # the weighted mean of valid extents can still break the ordering
        a, b = max(a, b), min(a, b)
        return EoExtent(a, b, min(w, 0.999 * b))

    def at(self, i) -> EoExtent:
        return EoExtent(float(self.a[i]), float(self.b[i]), float(self.w[i]))


@dataclass
class PatchArrays:
    """Per-particle circular patch extents: arrays r, w_s of shape (P,); omega shared."""

    r: np.ndarray
    w_s: np.ndarray
    omega: float

    def copy(self):
        return PatchArrays(self.r.copy(), self.w_s.copy(), self.omega)

    def take(self, idx):
        return PatchArrays(self.r[idx], self.w_s[idx], self.omega)

    def mean(self, weights) -> ApproxExtent:
        return ApproxExtent(
            float(np.dot(weights, self.r)), float(np.dot(weights, self.w_s)), self.omega
        )

    def at(self, i) -> ApproxExtent:
        return ApproxExtent(float(self.r[i]), float(self.w_s[i]), self.omega)


ExtentArrays = Union[AnnulusArrays, PatchArrays]


@dataclass
class ParticleSet:
    """Weighted particle representation of the posterior belief.

    ``theta`` caches each particle's heading so that orientation can be
    held over near-zero-speed transitions.
    """

    p: np.ndarray
    v: np.ndarray
    theta: np.ndarray
    b_rho: np.ndarray
    b_phi: np.ndarray
    extent: ExtentArrays
    weights: np.ndarray

    @property
    def size(self) -> int:
        return self.p.shape[0]

    def copy(self) -> "ParticleSet":
        return ParticleSet(
            self.p.copy(),
            self.v.copy(),
            self.theta.copy(),
            self.b_rho.copy(),
            self.b_phi.copy(),
            self.extent.copy(),
            self.weights.copy(),
        )

    def take(self, idx) -> "ParticleSet":
        n = len(idx)
        return ParticleSet(
            self.p[idx],
            self.v[idx],
            self.theta[idx],
            self.b_rho[idx],
            self.b_phi[idx],
            self.extent.take(idx),
            np.full(n, 1.0 / n),
        )

    def state_at(self, i: int) -> AugmentedState:
        kin = KinematicState(self.p[i], self.v[i], float(self.b_rho[i]), float(self.b_phi[i]))
        return AugmentedState(kin, self.extent.at(i))
