"""Expansion shapes as polar radial functions over a shared angle grid.

Angles follow the convention of :mod:`roadspread.dispersion`: the point at
angle ``theta`` and radius ``r`` is ``r (sin theta, cos theta)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from . import dispersion as ds
from .model import ModelParams, kpp_speed

log = logging.getLogger(__name__)

Label = Literal["W", "W_lower", "strip_envelope"]

DEFAULT_NODES = 721


@dataclass
class ShapeSample:
    thetas: np.ndarray
    radii: np.ndarray
    label: Label
    normals: np.ndarray | None = None
    contacts: list[ds.SpectralContact | None] | None = field(default=None, repr=False)
    failed: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float)
        if self.thetas.shape != self.radii.shape:
            raise ValueError("thetas and radii must have the same shape")
        if np.any(np.diff(self.thetas) <= 0):
            raise ValueError("thetas must be strictly increasing")

    def points(self) -> np.ndarray:
        return np.column_stack([self.radii * np.sin(self.thetas), self.radii * np.cos(self.thetas)])

    def rows(self) -> list[dict]:
        """Table rows with columns theta_rad, r, n_x, n_y, label."""
        out = []
        for k, (t, r) in enumerate(zip(self.thetas, self.radii)):
            nx, ny = (self.normals[k] if self.normals is not None else (math.nan, math.nan))
            out.append({"theta_rad": float(t), "r": float(r), "n_x": float(nx), "n_y": float(ny),
                        "label": self.label})
        return out


@dataclass(frozen=True)
class GapReport:
    thetas: np.ndarray
    gaps: np.ndarray
    min: float
    max: float
    theta_at_max: float


def theta_grid(n: int = DEFAULT_NODES) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least two nodes")
    grid = np.linspace(-0.5 * math.pi, 0.5 * math.pi, n)
    # exact mirror symmetry of the grid
    return 0.5 * (grid - grid[::-1])


def expansion_shape(params: ModelParams, n: int = DEFAULT_NODES, tol: float = 1e-10) -> ShapeSample:
    """Sample the spreading speed on ``n`` uniform angles with outward normals.

    The outward normal at angle ``theta`` is parallel to ``(alpha*, beta*)``;
    inside the c_K cone the contact is the circle centre, which gives the
    radial normal.  Nodes whose solve fails are flagged and set to NaN.
    """
    if n < 16:
        raise ValueError("expansion_shape needs n >= 16")
    thetas = theta_grid(n)
    radii = np.empty(n)
    normals = np.empty((n, 2))
    failed = np.zeros(n, dtype=bool)
    contacts: list[ds.SpectralContact | None] = []
    for k, t in enumerate(thetas):
        try:
            c = ds.w_star(params, float(t), tol)
        except (ds.SolverError, ValueError) as exc:
            log.warning("w_star failed at theta=%.6f: %s", t, exc)
            radii[k] = math.nan
            normals[k] = math.nan
            failed[k] = True
            contacts.append(None)
            continue
        radii[k] = c.w_star
        normals[k] = np.array([c.alpha_star, c.beta_star]) / c.norm
        contacts.append(c)
    return ShapeSample(thetas, radii, "W", normals, contacts, failed)


def lower_shape(params: ModelParams, n: int = DEFAULT_NODES, c_star: float | None = None,
                thetas: np.ndarray | None = None) -> ShapeSample:
    """Convex hull of the c_K half-disc and the road segment ``[-c*, c*]``.

    With transport on the road the two road speeds differ and each side of
    the hull uses its own endpoint.
    """
    if c_star is None:
        c_star = ds.w_star(params, 0.5 * math.pi).w_star
    c_minus = c_star if params.q == 0 else ds.w_star(params, -0.5 * math.pi).w_star
    thetas = theta_grid(n) if thetas is None else np.asarray(thetas, dtype=float)
    c_K = kpp_speed(params)
    radii = np.where(thetas >= 0, lower_radius(c_K, c_star, thetas), lower_radius(c_K, c_minus, thetas))
    return ShapeSample(thetas, radii, "W_lower")


def lower_radius(c_K: float, c_star: float, thetas) -> np.ndarray:
    """Radial function of the Huygens lower shape."""
    if c_star < c_K:
        raise ValueError("road speed must be at least c_K")
    thetas = np.asarray(thetas, dtype=float)
    theta1 = math.asin(min(c_K / c_star, 1.0))
    a = np.abs(thetas)
    radii = np.full(thetas.shape, c_K, dtype=float)
    outer = a > theta1
    radii[outer] = c_K * c_star / (c_K * np.sin(a[outer]) + math.sqrt(c_star**2 - c_K**2) * np.cos(a[outer]))
    return radii


def strip_envelope(params: ModelParams, theta):
    """Limit of the spreading speed as D -> infinity: ``c_K / cos theta``.

    Returns ``inf`` at ``theta = +-pi/2``.
    """
    theta = np.asarray(theta, dtype=float)
    cos = np.cos(theta)
    with np.errstate(divide="ignore"):
        out = np.where(np.abs(np.abs(theta) - 0.5 * math.pi) < 1e-14, np.inf, kpp_speed(params) / cos)
    return float(out) if out.ndim == 0 else out


def strip_shape(params: ModelParams, n: int = DEFAULT_NODES, thetas: np.ndarray | None = None) -> ShapeSample:
    thetas = theta_grid(n) if thetas is None else np.asarray(thetas, dtype=float)
    return ShapeSample(thetas, strip_envelope(params, thetas), "strip_envelope")


def _closed_polygon(shape: ShapeSample) -> np.ndarray:
    upper = shape.points()
    # reflect across the road, dropping the shared endpoints on y = 0
    lower = upper[-2:0:-1] * np.array([1.0, -1.0])
    return np.vstack([upper, lower])


def is_convex(shape: ShapeSample, strict: bool = True) -> bool:
    """Convexity of the shape closed by reflection across the road.

    Every consecutive triple must turn the same way and the boundary must wind
    exactly once.  With ``strict=False`` collinear triples (up to roundoff)
    are accepted, which the straight segments of the lower shape need.
    """
    if shape.radii.size < 16:
        raise ValueError("convexity test needs at least 16 nodes")
    if not np.all(np.isfinite(shape.radii)):
        raise ValueError("shape has non-finite radii")
    pts = _closed_polygon(shape)
    e = np.roll(pts, -1, axis=0) - pts
    cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
    scale = float(np.max(np.abs(cross)))
    if scale == 0.0:
        raise ValueError("degenerate boundary: all nodes collinear")
    thresh = 0.0 if strict else -1e-9 * scale
    if not (np.all(cross > thresh) or np.all(cross < -thresh)):
        return False
    angles = np.arctan2(e[:, 1], e[:, 0])
    turn = np.diff(np.concatenate([angles, angles[:1]]))
    turn = (turn + math.pi) % (2 * math.pi) - math.pi
    return bool(abs(abs(turn.sum()) - 2 * math.pi) < 1e-6)


def containment_gap(outer: ShapeSample, inner: ShapeSample) -> GapReport:
    """Per-angle radial gap ``r_outer - r_inner`` on a shared grid."""
    if outer.thetas.shape != inner.thetas.shape or not np.allclose(outer.thetas, inner.thetas, rtol=0, atol=1e-12):
        raise ValueError("shapes are sampled on different angle grids")
    gaps = outer.radii - inner.radii
    finite = np.isfinite(gaps)
    k = int(np.argmax(np.where(finite, gaps, -np.inf)))
    return GapReport(outer.thetas, gaps, float(np.min(gaps[finite])), float(gaps[k]), float(outer.thetas[k]))


def angle_with_road(shape: ShapeSample, params: ModelParams | None = None) -> float:
    """Angle between the boundary of W and the road at the road endpoint.

    Requires contact data at ``theta = pi/2`` (the last node).  Checks that
    it is not smaller than the Huygens angle ``arcsin(c_K / c*)``, strictly
    so when the road enhances the speed.
    """
    if shape.contacts is None or shape.contacts[-1] is None:
        raise ValueError("shape carries no contact data at theta = pi/2")
    contact = shape.contacts[-1]
    if abs(contact.theta.theta - 0.5 * math.pi) > 1e-12:
        raise ValueError("last node is not theta = pi/2")
    params = contact.params if params is None else params
    phi = math.atan2(contact.alpha_star, contact.beta_star)
    c_K = kpp_speed(params)
    theta1 = math.asin(min(c_K / contact.w_star, 1.0))
    if contact.degenerate:
        if phi < theta1 - 1e-12:
            raise AssertionError(f"phi*={phi} below theta1={theta1}")
    elif not phi > theta1:
        raise AssertionError(f"phi*={phi} not above theta1={theta1}")
    return phi


def summary(params: ModelParams, shape: ShapeSample) -> dict[str, float]:
    """theta0, theta1 and phi* for a computed shape."""
    c_star = float(shape.radii[-1])
    c_K = kpp_speed(params)
    angles = ds.critical_angles(params)
    return {
        "c_K": c_K,
        "c_star": c_star,
        "theta0": angles.theta_plus,
        "theta_minus": angles.theta_minus,
        "theta1": math.asin(min(c_K / c_star, 1.0)),
        "phi_star": angle_with_road(shape, params),
    }
