"""Named invariant checks on the spreading speed, each with a measured margin.

A check passes when its margin is on the right side of its threshold; the
margin is reported either way so that near misses are visible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import dispersion as ds
from . import geometry as geo
from .model import ModelParams, kpp_speed

# Offset used to probe both sides of the computed threshold.  It is fixed so
# that a solver run with a loose tolerance is caught rather than excused.
THRESHOLD_PROBE = 1e-7
D_SWEEP = (3.0, 5.0, 10.0, 30.0, 100.0)
SWEEP_THETA = 1.0
COMPLEX_THETAS = (1.1, 1.3, 1.5)
COMPLEX_DELTAS = (1e-2, 1e-3)
FD_STEP = 1e-4


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    margin: float
    detail: str = ""

    def as_row(self) -> dict:
        return asdict(self)


@dataclass
class _Sweep:
    params: ModelParams
    thetas: np.ndarray
    contacts: list[ds.SpectralContact]
    theta_minus: float
    theta_plus: float

    @property
    def speeds(self) -> np.ndarray:
        return np.array([c.w_star for c in self.contacts])

    def enhanced(self, theta: float) -> bool:
        return theta > self.theta_plus or theta < self.theta_minus


def _sweep(params: ModelParams, n: int, tol: float) -> _Sweep:
    thetas = geo.theta_grid(n)
    contacts = [ds.w_star(params, float(t), tol) for t in thetas]
    angles = ds.critical_angles(params)
    return _Sweep(params, thetas, contacts, angles.theta_minus, angles.theta_plus)


def check_threshold(params: ModelParams, tol: float) -> Check:
    """The disc and road region are disjoint just below w* and meet just above."""
    margin = math.inf
    worst = ""
    c_K = kpp_speed(params)
    thetas = [0.3, 0.8, 1.2, 0.5 * math.pi]
    if params.q != 0:
        thetas += [-t for t in thetas]
    for th in thetas:
        w = ds.w_star(params, th, tol).w_star
        above = ds.overlap_margin(params, th, w + THRESHOLD_PROBE)
        below = -ds.overlap_margin(params, th, w - THRESHOLD_PROBE) if w - THRESHOLD_PROBE >= c_K else math.inf
        m = min(above, below)
        if m < margin:
            margin, worst = m, f"theta={th:.6g}"
    return Check("threshold_property", margin >= 0.0, margin, worst)


def check_sandwich(sw: _Sweep) -> Check:
    c_K = kpp_speed(sw.params)
    w = sw.speeds
    interior = np.abs(np.abs(sw.thetas) - 0.5 * math.pi) > 1e-12
    lower = float(np.min(w - c_K))
    upper = float(np.min(c_K / np.cos(sw.thetas[interior]) - w[interior]))
    return Check("sandwich_bounds", lower >= -1e-12 and upper >= -1e-12, min(lower, upper),
                 f"w - c_K >= {lower:.3e}, c_K/cos - w >= {upper:.3e}")


def check_lower_shape(sw: _Sweep) -> Check:
    w = sw.speeds
    c_plus, c_minus = w[-1], w[0]
    lower = geo.lower_shape(sw.params, thetas=sw.thetas, c_star=c_plus).radii
    if sw.params.q == 0:
        c_minus = c_plus
    c_K = kpp_speed(sw.params)
    theta1 = np.where(sw.thetas >= 0, math.asin(min(c_K / c_plus, 1.0)), math.asin(min(c_K / c_minus, 1.0)))
    mask = np.abs(sw.thetas) >= theta1
    margin = float(np.min(w[mask] - lower[mask]))
    return Check("lower_shape_bound", margin >= -1e-9, margin)


def check_monotone_in_D(params: ModelParams, tol: float) -> Check:
    speeds = [ds.w_star(params.replace(D=D), SWEEP_THETA, tol).w_star for D in D_SWEEP]
    diffs = np.diff(speeds)
    margin = float(np.min(diffs))
    return Check("monotone_in_D", margin > 0.0, margin,
                 "w*(1.0) = " + ", ".join(f"{s:.8f}" for s in speeds))


def check_derivative(sw: _Sweep, tol: float, n: int = 10) -> Check:
    """The closed-form derivative matches a central difference on enhanced angles."""
    lo = sw.theta_plus + 0.05
    hi = 0.5 * math.pi - 2 * FD_STEP
    if lo >= hi:
        return Check("derivative_identity", True, math.inf, "no enhanced angles")
    worst = 0.0
    for th in np.linspace(lo, hi, n):
        exact = ds.w_star_derivative(ds.w_star(sw.params, th, tol))
        fd = (ds.w_star(sw.params, th + FD_STEP, tol).w_star
              - ds.w_star(sw.params, th - FD_STEP, tol).w_star) / (2 * FD_STEP)
        worst = max(worst, abs(exact - fd) / abs(exact) if exact != 0.0 else math.inf)
    return Check("derivative_identity", worst < 1e-3, 1e-3 - worst, f"max relative error {worst:.3e}")


def check_complex_slopes(params: ModelParams) -> Check:
    theta0 = ds.critical_angles(params).theta_plus
    margin = math.inf
    cases = 0
    for th in COMPLEX_THETAS:
        if th <= theta0:
            continue
        w = ds.w_star(params, th, 1e-12).w_star
        for delta in COMPLEX_DELTAS:
            try:
                roots = ds.complex_roots(params, th, w - delta, eps=delta / 10, check=False)
            except ds.SolverError as exc:
                return Check("complex_root_slopes", False, -math.inf, f"theta={th}, delta={delta}: {exc}")
            margin = min(margin, min(roots.slope_margins().values()))
            cases += 1
    if cases == 0:
        return Check("complex_root_slopes", True, math.inf, "no enhanced angles")
    return Check("complex_root_slopes", margin > 0.0, margin, f"{cases} cases")


def check_tangent_bound(sw: _Sweep) -> Check:
    """Plane waves at one contact bound the speed in every other direction."""
    w = sw.speeds
    margin = math.inf
    for k in range(0, sw.thetas.size, max(1, sw.thetas.size // 12)):
        contact = sw.contacts[k]
        if contact.degenerate:
            continue
        cos = np.cos(sw.thetas - contact.phi_star)
        ok = cos > 0.05
        bound = math.cos(contact.theta.theta - contact.phi_star) * contact.w_star / cos[ok]
        margin = min(margin, float(np.min(bound - w[ok])))
    return Check("tangent_bound", margin >= -1e-9, margin)


def check_normal_speed(sw: _Sweep) -> Check:
    c_K = kpp_speed(sw.params)
    limit = math.sqrt(sw.params.f0p / sw.params.d)
    inside, outside, norm_gap = 0.0, math.inf, math.inf
    for th, contact in zip(sw.thetas, sw.contacts):
        cn = ds.normal_speed(contact)
        if sw.enhanced(float(th)):
            outside = min(outside, cn - c_K)
            if sw.params.classic:
                norm_gap = min(norm_gap, limit - contact.norm)
        else:
            inside = max(inside, abs(cn - c_K))
    # outside the cone c_n - c_K grows quadratically in the angle, so only
    # strict positivity is grid independent
    passed = inside <= 1e-6 and outside > 0.0 and norm_gap > 0.0
    return Check("normal_speed", passed, min(1e-6 - inside, outside, norm_gap),
                 f"|c_n - c_K| <= {inside:.2e} inside the cone, c_n - c_K >= {outside:.3e} outside")


def check_residuals(sw: _Sweep, tol: float) -> Check:
    tangencies = [c for c in sw.contacts if not c.degenerate]
    if not tangencies:
        return Check("contact_residuals", True, math.inf, "no tangency contacts")
    worst = max(max(abs(r) for r in ds.residuals(sw.params, c)) for c in tangencies)
    return Check("contact_residuals", worst < tol, tol - worst, f"max residual {worst:.3e}")


def check_evenness(sw: _Sweep) -> Check:
    if sw.params.q != 0:
        return Check("evenness", True, math.inf, "not applicable with transport")
    w = sw.speeds
    worst = float(np.max(np.abs(w - w[::-1]) / w))
    return Check("evenness", worst <= 1e-10, 1e-10 - worst)


def run_suite(params: ModelParams, tol: float = 1e-8, n_theta: int = 181) -> list[Check]:
    sw = _sweep(params, n_theta, tol)
    return [
        check_threshold(params, tol),
        check_sandwich(sw),
        check_lower_shape(sw),
        check_monotone_in_D(params, tol),
        check_derivative(sw, tol),
        check_complex_slopes(params),
        check_tangent_bound(sw),
        check_normal_speed(sw),
        check_residuals(sw, tol),
        check_evenness(sw),
    ]
