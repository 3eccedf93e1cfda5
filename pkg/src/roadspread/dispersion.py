"""Exponential solutions of the linearised road-field system.

A pair ``(U, V) = (exp(-(a, b).((x, 0) - c t xi)), g exp(-(a, b).((x, y) - c t xi)))``
solves the linearisation around zero when ``(b, a)`` lies on the road curve
(two branches ``alpha_branch(+/-)``) and on the field circle at the same
speed ``c``.  Supersolutions correspond to the intersection of the region
between the two road branches with the closed disc; the spreading speed in
direction ``xi`` is the least ``c`` for which that intersection is non-empty.

Everything here is computed in the ``(beta, alpha)`` plane: ``beta`` is the
decay rate in ``y`` and ``alpha`` the decay rate in ``x``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .model import ModelParams, PoleError, kpp_speed

HALF_PI = 0.5 * math.pi


class SolverError(RuntimeError):
    """A root finder or Newton iteration failed to converge."""

    def __init__(self, message: str, bracket: tuple[float, float] | None = None):
        super().__init__(message)
        self.bracket = bracket


class RealRootsError(SolverError):
    """The complex Newton iteration collapsed onto a real solution."""


@dataclass(frozen=True)
class Direction:
    """Unit direction ``(sin theta, cos theta)``; ``theta`` is measured from the vertical."""

    theta: float

    def __post_init__(self) -> None:
        if not (-HALF_PI - 1e-12 <= self.theta <= HALF_PI + 1e-12):
            raise ValueError(f"theta must lie in [-pi/2, pi/2], got {self.theta!r}")

    @property
    def xi1(self) -> float:
        if abs(abs(self.theta) - HALF_PI) < 1e-14:
            return math.copysign(1.0, self.theta)
        return math.sin(self.theta)

    @property
    def xi2(self) -> float:
        if abs(abs(self.theta) - HALF_PI) < 1e-14:
            return 0.0
        return max(math.cos(self.theta), 0.0)


def as_direction(direction: Direction | float) -> Direction:
    if isinstance(direction, Direction):
        return direction
    return Direction(float(direction))


class _Relation:
    """Road curve and field circle for one direction, optionally penalised by ``eps``.

    The penalised system lowers the growth rate to ``f'(0) - eps`` and adds
    ``-eps (u + v)`` to the road equation and the exchange condition.  With
    ``eps = 0`` this is the plain linearisation.  All formulas accept complex
    arguments.
    """

    def __init__(self, params: ModelParams, direction: Direction, eps: float = 0.0):
        if eps < 0 or eps >= min(params.mu, params.nu, params.f0p):
            raise ValueError(f"eps must lie in [0, min(mu, nu, f0p)), got {eps!r}")
        self.p = params
        self.xi1 = direction.xi1
        self.xi2 = direction.xi2
        self.eps = eps
        self.growth = params.f0p - eps
        self.c_K = 2.0 * math.sqrt(params.d * self.growth)
        self.pole = -(params.nu + eps) / params.d
        self._k = (params.nu - eps) * (params.mu - eps)

    # exchange term chi(d beta), penalised
    def exchange(self, beta):
        p, e = self.p, self.eps
        denom = p.nu + e + p.d * beta
        if not isinstance(beta, complex) and denom <= 0:
            raise PoleError(f"beta={beta!r} is at or below the pole {self.pole!r}")
        return p.mu + e - self._k / denom

    def exchange_prime(self, beta):
        p = self.p
        denom = p.nu + self.eps + p.d * beta
        return self._k * p.d / (denom * denom)

    def exchange_second(self, beta):
        p = self.p
        denom = p.nu + self.eps + p.d * beta
        return -2.0 * self._k * p.d * p.d / (denom * denom * denom)

    def gamma(self, beta):
        p = self.p
        return (p.mu - self.eps) / (p.nu + self.eps + p.d * beta)

    def discriminant(self, c: float, beta: float) -> float:
        p = self.p
        a = c * self.xi1 - p.q
        return a * a + 4.0 * p.D * (c * self.xi2 * beta + self.exchange(beta) + p.rho)

    def alpha(self, c: float, beta: float, sign: int) -> float | None:
        disc = self.discriminant(c, beta)
        if disc < 0:
            return None
        p = self.p
        a = c * self.xi1 - p.q
        # the root of the same sign as ``a`` has no cancellation; the other
        # follows from the product of the roots
        s = 1 if a >= 0 else -1
        big = (a + s * math.sqrt(disc)) / (2.0 * p.D)
        if sign == s:
            return big
        if big == 0.0:
            return 0.0
        return -(c * self.xi2 * beta + self.exchange(beta) + p.rho) / (p.D * big)

    def beta_min(self, c: float) -> float:
        if self.discriminant(c, 0.0) <= 0.0:
            return 0.0
        lo = self.pole + 1e-13 * max(1.0, abs(self.pole))
        if self.discriminant(c, lo) >= 0.0:
            return lo
        return brentq(lambda b: self.discriminant(c, b), lo, 0.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)

    def center(self, c: float) -> tuple[float, float]:
        s = c / (2.0 * self.p.d)
        return s * self.xi2, s * self.xi1

    def radius(self, c: float) -> float:
        r2 = c * c - self.c_K * self.c_K
        if r2 < 0:
            raise ValueError(f"no real field decay for c={c!r} < c_K={self.c_K!r}")
        return math.sqrt(r2) / (2.0 * self.p.d)

    # residuals of the two dispersion relations
    def road(self, c, beta, alpha):
        p = self.p
        return p.D * alpha * alpha - (c * self.xi1 - p.q) * alpha - c * self.xi2 * beta - self.exchange(beta) - p.rho

    def field(self, c, beta, alpha):
        p = self.p
        return c * (self.xi1 * alpha + self.xi2 * beta) - p.d * (alpha * alpha + beta * beta) - self.growth

    def road_grad(self, c, beta, alpha):
        """Partial derivatives of ``road`` w.r.t. (c, beta, alpha)."""
        p = self.p
        return (
            -self.xi1 * alpha - self.xi2 * beta,
            -c * self.xi2 - self.exchange_prime(beta),
            2.0 * p.D * alpha - (c * self.xi1 - p.q),
        )

    def field_grad(self, c, beta, alpha):
        p = self.p
        return (
            self.xi1 * alpha + self.xi2 * beta,
            c * self.xi2 - 2.0 * p.d * beta,
            c * self.xi1 - 2.0 * p.d * alpha,
        )

    def tangency(self, c, beta, alpha):
        """Residual vector and Jacobian of the tangency system in (c, beta, alpha)."""
        p = self.p
        r1 = self.road(c, beta, alpha)
        r2 = self.field(c, beta, alpha)
        g1 = self.road_grad(c, beta, alpha)
        g2 = self.field_grad(c, beta, alpha)
        r3 = g1[1] * g2[2] - g1[2] * g2[1]
        dr3_dc = -self.xi2 * g2[2] + g1[1] * self.xi1 + self.xi1 * g2[1] - g1[2] * self.xi2
        dr3_db = -self.exchange_second(beta) * g2[2] + 2.0 * p.d * g1[2]
        dr3_da = -2.0 * p.d * g1[1] - 2.0 * p.D * g2[1]
        F = np.array([r1, r2, r3])
        J = np.array([g1, g2, (dr3_dc, dr3_db, dr3_da)])
        return F, J

    # overlap of the road region and the disc
    def overlap_at(self, c: float, beta: float, cb: float, ca: float, r: float) -> tuple[float, float, float]:
        """Vertical chord overlap at ``beta``: (overlap length, lower end, upper end)."""
        disc = max(self.discriminant(c, beta), 0.0)
        a = c * self.xi1 - self.p.q
        root = math.sqrt(disc)
        lo_s = (a - root) / (2.0 * self.p.D)
        hi_s = (a + root) / (2.0 * self.p.D)
        h = math.sqrt(max(r * r - (beta - cb) ** 2, 0.0))
        lo = max(lo_s, ca - h)
        hi = min(hi_s, ca + h)
        return hi - lo, lo, hi

    def max_overlap(self, c: float, n_scan: int = 33, levels: int = 3) -> tuple[float, float | None, float | None]:
        """Largest vertical overlap between road region and disc at speed ``c``.

        The overlap is concave in ``beta``, so a coarse scan followed by nested
        refinement around the best node locates the maximum.  A negative value
        means the sets are disjoint.  Returns (value, beta, alpha).
        """
        cb, ca = self.center(c)
        r = self.radius(c)
        bmin = self.beta_min(c)
        lo = max(bmin, cb - r)
        hi = cb + r
        if lo > hi:
            return hi - lo, None, None
        if hi - lo == 0.0:
            val, a_lo, a_hi = self.overlap_at(c, lo, cb, ca, r)
            return val, lo, 0.5 * (a_lo + a_hi)

        def f(b):
            return self.overlap_at(c, b, cb, ca, r)[0]

        a, b = lo, hi
        best_b, best_v = lo, -math.inf
        for _ in range(levels):
            grid = np.linspace(a, b, n_scan)
            vals = [f(x) for x in grid]
            k = int(np.argmax(vals))
            if vals[k] > best_v:
                best_v, best_b = vals[k], float(grid[k])
            a = float(grid[max(k - 1, 0)])
            b = float(grid[min(k + 1, n_scan - 1)])
        res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-14 * max(1.0, abs(best_b)), "maxiter": 500})
        if res.success and -res.fun > best_v:
            best_v, best_b = float(-res.fun), float(res.x)
        val, a_lo, a_hi = self.overlap_at(c, best_b, cb, ca, r)
        return val, best_b, 0.5 * (a_lo + a_hi)


# ---------------------------------------------------------------------------
# Public data types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralContact:
    """Spreading speed in one direction with the critical decay rates."""

    params: ModelParams = field(repr=False)
    theta: Direction
    w_star: float
    alpha_star: float
    beta_star: float
    gamma: float
    phi_star: float
    degenerate: bool = False
    residual: float = 0.0
    bracket: tuple[float, float] | None = None
    eps: float = 0.0

    @property
    def norm(self) -> float:
        return math.hypot(self.alpha_star, self.beta_star)


@dataclass(frozen=True)
class ComplexWaveRoots:
    """Complex decay rates of an oscillating exponential solution at speed ``c``."""

    c: float
    eps: float
    alpha: complex
    beta: complex
    gamma: complex
    residual: float
    theta: Direction

    def slope_margins(self) -> dict[str, float]:
        """Margins of the slope chain; all must be positive."""
        ar, ai = self.alpha.real, self.alpha.imag
        br, bi = self.beta.real, self.beta.imag
        xi1, xi2 = self.theta.xi1, self.theta.xi2
        arg_inv = cmath.phase(1.0 / self.gamma)
        return {
            "alpha_r": ar,
            "alpha_i": ai,
            "beta_r": br,
            "beta_i": bi,
            "imag_below_real": ar / br - ai / bi,
            "real_below_direction": (xi1 / xi2 if xi2 > 0 else math.inf) - ar / br,
            "arg_inv_gamma_low": arg_inv,
            "arg_inv_gamma_high": HALF_PI - arg_inv,
        }

    def slopes_hold(self) -> bool:
        return all(v > 0 for v in self.slope_margins().values())


@dataclass(frozen=True)
class CriticalAngles:
    """Angles bounding the cone where the spreading speed equals c_K."""

    theta_minus: float
    theta_plus: float

    @property
    def theta0(self) -> float:
        return self.theta_plus


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def alpha_branch(params: ModelParams, direction: Direction | float, c: float, beta: float,
                 sign: int = 1) -> float | None:
    """Root ``alpha_D^{sign}(c, beta)`` of the road relation, or None if complex."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return _Relation(params, as_direction(direction)).alpha(c, beta, sign)


def beta_min(params: ModelParams, direction: Direction | float, c: float) -> float:
    """Leftmost ``beta`` of the road curve, i.e. where its discriminant vanishes."""
    if c < 0:
        raise ValueError("c must be nonnegative")
    return _Relation(params, as_direction(direction)).beta_min(c)


def field_circle(params: ModelParams, direction: Direction | float, c: float
                 ) -> tuple[tuple[float, float], float]:
    """Centre ``(beta, alpha)`` and radius of the field dispersion circle."""
    rel = _Relation(params, as_direction(direction))
    radius = rel.radius(c)
    return rel.center(c), radius


def intersects(params: ModelParams, direction: Direction | float, c: float) -> bool:
    """Whether the road region and the field disc at speed ``c`` meet."""
    return overlap_margin(params, direction, c) >= 0.0


def overlap_margin(params: ModelParams, direction: Direction | float, c: float) -> float:
    """Largest vertical overlap of the road region and the disc; negative when disjoint."""
    return _Relation(params, as_direction(direction)).max_overlap(c)[0]


def _newton_tangency(rel: _Relation, c: float, beta: float, alpha: float, tol: float,
                     max_iter: int = 60) -> tuple[float, float, float, float]:
    x = np.array([c, beta, alpha], dtype=float)
    F, J = rel.tangency(*x)
    norm = float(np.max(np.abs(F)))
    for _ in range(max_iter):
        if norm < 1e-3 * tol:
            break
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-6:
            trial = x + lam * step
            if trial[1] > rel.pole and trial[0] >= rel.c_K:
                F_t, J_t = rel.tangency(*trial)
                n_t = float(np.max(np.abs(F_t)))
                if n_t < norm:
                    x, F, J, norm = trial, F_t, J_t, n_t
                    break
            lam *= 0.5
        else:
            break
    return float(x[0]), float(x[1]), float(x[2]), norm


def _contact(rel: _Relation, params: ModelParams, direction: Direction, tol: float) -> SpectralContact:
    c_K = rel.c_K
    val, _, _ = rel.max_overlap(c_K)
    if val >= 0.0:
        return _degenerate_contact(rel, params, direction)

    c_lo, c_hi = c_K, 2.0 * c_K
    for _ in range(80):
        if rel.max_overlap(c_hi)[0] >= 0.0:
            break
        c_lo, c_hi = c_hi, 2.0 * c_hi
    else:
        raise SolverError("could not bracket the spreading speed", (c_lo, c_hi))

    def gap(c):
        return rel.max_overlap(c)[0]

    c_b = brentq(gap, c_lo, c_hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=300)
    if c_b - c_K <= 1e-9 * c_K:
        return _degenerate_contact(rel, params, direction)
    _, beta_b, alpha_b = rel.max_overlap(c_b)
    c, beta, alpha, res = _newton_tangency(rel, c_b, beta_b, alpha_b, tol)
    if res > tol or abs(c - c_b) > max(1e3 * tol, 1e-6 * c_b):
        raise SolverError(f"tangency refinement did not converge (residual {res:.3e})",
                          (c_b - tol, c_b + tol))
    res = max(abs(rel.road(c, beta, alpha)), abs(rel.field(c, beta, alpha)))
    return SpectralContact(
        params=params,
        theta=direction,
        w_star=c,
        alpha_star=alpha,
        beta_star=beta,
        gamma=rel.gamma(beta),
        phi_star=math.atan2(alpha, beta),
        degenerate=False,
        residual=res,
        bracket=(c_lo, c_hi),
        eps=rel.eps,
    )


def _degenerate_contact(rel: _Relation, params: ModelParams, direction: Direction) -> SpectralContact:
    beta, alpha = rel.center(rel.c_K)
    res = max(abs(rel.field(rel.c_K, beta, alpha)), 0.0)
    return SpectralContact(
        params=params,
        theta=direction,
        w_star=rel.c_K,
        alpha_star=alpha,
        beta_star=beta,
        gamma=rel.gamma(beta),
        phi_star=math.atan2(alpha, beta),
        degenerate=True,
        residual=res,
        eps=rel.eps,
    )


def w_star(params: ModelParams, direction: Direction | float, tol: float = 1e-8,
           eps: float = 0.0) -> SpectralContact:
    """Asymptotic spreading speed in ``direction`` and its contact point.

    ``eps > 0`` computes the speed of the penalised system instead.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    direction = as_direction(direction)
    return _contact(_Relation(params, direction, eps), params, direction, tol)


def w_star_value(params: ModelParams, theta: float, tol: float = 1e-8) -> float:
    return w_star(params, theta, tol).w_star


def phi_cutoff(params: ModelParams, s: float,
               variant: Literal["classic", "transport"] | None = None) -> float:
    """Sign function whose nonnegativity means the road does not enhance the speed.

    The classic variant takes ``s = xi2`` (requires no transport and no
    mortality to be meaningful); the transport variant takes ``s = xi1``.
    """
    if variant is None:
        variant = "classic" if params.classic else "transport"
    d, D, mu, nu = params.d, params.D, params.mu, params.nu
    cK = kpp_speed(params)
    if variant == "classic":
        if s < 0:
            raise ValueError("classic cutoff is defined for s >= 0")
        return 2 * d + D * (s * s - 1) + 4 * d * d * mu * s / (2 * nu * cK + cK * cK * s)
    if variant == "transport":
        if abs(s) > 1:
            raise ValueError("transport cutoff is defined for |s| <= 1")
        root = math.sqrt(max(1.0 - s * s, 0.0))
        return (2.0 - (D / d) * s * s - (2.0 * params.q / cK) * s + 4.0 * d * params.rho / (cK * cK)
                + 4.0 * d * mu * root / (2.0 * nu * cK + cK * cK * root))
    raise ValueError(f"unknown variant {variant!r}")


def critical_angles(params: ModelParams) -> CriticalAngles:
    """Angles ``theta_-`` <= 0 <= ``theta_+`` outside of which the road enhances the speed."""
    if params.classic:
        if params.D <= 2 * params.d:
            return CriticalAngles(-HALF_PI, HALF_PI)
        s0 = brentq(lambda s: phi_cutoff(params, s, "classic"), 0.0, 1.0, xtol=1e-15, maxiter=200)
        theta0 = math.acos(s0)
        return CriticalAngles(-theta0, theta0)

    def phi(s):
        return phi_cutoff(params, s, "transport")

    if phi(1.0) >= 0:
        s_plus = 1.0
    else:
        s_plus = brentq(phi, 0.0, 1.0, xtol=1e-15, maxiter=200)
    if phi(-1.0) >= 0:
        s_minus = -1.0
    else:
        s_minus = brentq(phi, -1.0, 0.0, xtol=1e-15, maxiter=200)
    return CriticalAngles(math.asin(s_minus), math.asin(s_plus))


def enhancement_holds(params: ModelParams, side: int) -> bool:
    """Whether the road speed in direction ``side * (1, 0)`` exceeds c_K."""
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    threshold = 2.0 + params.rho / params.f0p - side * params.q / math.sqrt(params.d * params.f0p)
    return params.D / params.d > threshold


def normal_speed(contact: SpectralContact) -> float:
    """Normal speed of the expanding boundary at the point in direction ``theta``."""
    p = contact.params
    if contact.degenerate:
        return kpp_speed(p)
    lam = contact.norm
    if lam == 0.0:
        raise ValueError("contact point has zero norm")
    return p.f0p / lam + p.d * lam


def w_star_derivative(contact: SpectralContact) -> float:
    """``dw*/dtheta = tan(theta - phi*) w*``; zero inside the c_K cone."""
    if contact.degenerate:
        return 0.0
    return math.tan(contact.theta.theta - contact.phi_star) * contact.w_star


def tangent_bound(contact: SpectralContact, theta_tilde: float) -> float:
    """Upper bound on ``w*(theta_tilde)`` obtained from the plane wave at ``contact``."""
    denom = math.cos(theta_tilde - contact.phi_star)
    if denom <= 1e-14:
        raise ValueError(f"degenerate cosine for theta_tilde={theta_tilde!r}")
    return math.cos(contact.theta.theta - contact.phi_star) / denom * contact.w_star


def _complex_seed(rel: _Relation, contact: SpectralContact, c: float) -> tuple[complex, complex]:
    """Seed from the quadratic model of the two curves near their tangency."""
    w, b0, a0 = contact.w_star, contact.beta_star, contact.alpha_star
    g1 = rel.road_grad(w, b0, a0)
    g2 = rel.field_grad(w, b0, a0)
    n2 = g2[1] ** 2 + g2[2] ** 2
    lam = (g1[1] * g2[1] + g1[2] * g2[2]) / n2
    norm = math.sqrt(n2)
    tb, ta = -g2[2] / norm, g2[1] / norm
    curv = (-rel.exchange_second(b0) + lam * 2 * rel.p.d) * tb * tb + (2 * rel.p.D + lam * 2 * rel.p.d) * ta * ta
    dc = g1[0] - lam * g2[0]
    s2 = -2.0 * dc * (c - w) / curv
    s = cmath.sqrt(s2)
    return complex(a0) + s * ta, complex(b0) + s * tb


def _complex_newton(rel: _Relation, c: float, alpha: complex, beta: complex, tol: float,
                    max_iter: int = 100) -> tuple[complex, complex, float]:
    def residual(a, b):
        return np.array([rel.road(c, b, a), rel.field(c, b, a)], dtype=complex)

    def jac(a, b):
        g1 = rel.road_grad(c, b, a)
        g2 = rel.field_grad(c, b, a)
        return np.array([[g1[2], g1[1]], [g2[2], g2[1]]], dtype=complex)

    x = np.array([alpha, beta], dtype=complex)
    F = residual(*x)
    norm = float(np.max(np.abs(F)))
    for _ in range(max_iter):
        if norm < tol:
            break
        try:
            step = np.linalg.solve(jac(*x), -F)
        except np.linalg.LinAlgError as exc:
            raise SolverError("singular Jacobian in complex Newton") from exc
        lam = 1.0
        while lam > 1e-8:
            trial = x + lam * step
            F_t = residual(*trial)
            n_t = float(np.max(np.abs(F_t)))
            if n_t < norm:
                x, F, norm = trial, F_t, n_t
                break
            lam *= 0.5
        else:
            break
    return complex(x[0]), complex(x[1]), norm


def complex_roots(params: ModelParams, direction: Direction | float, c: float, eps: float = 0.0,
                  tol: float = 1e-12, check: bool = True) -> ComplexWaveRoots:
    """Non-real decay rates at a speed ``c`` slightly below the (penalised) spreading speed.

    The penalised real contact is computed first; the complex Newton iteration
    is seeded from the quadratic model of the two dispersion curves around it
    and normalised to ``Im beta > 0``.
    """
    direction = as_direction(direction)
    rel = _Relation(params, direction, eps)
    contact = _contact(rel, params, direction, 1e-12)
    if contact.degenerate:
        raise ValueError("direction lies inside the c_K cone; no tangency to perturb")
    if not c < contact.w_star:
        raise RealRootsError(f"c={c!r} is not below the penalised speed {contact.w_star!r}")
    alpha0, beta0 = _complex_seed(rel, contact, c)
    alpha, beta, res = _complex_newton(rel, c, alpha0, beta0, tol)
    if not res < tol:
        raise SolverError(f"complex Newton did not converge (residual {res:.3e})")
    if beta.imag < 0:
        alpha, beta = alpha.conjugate(), beta.conjugate()
    if beta.imag < 1e-12 * max(1.0, abs(beta)):
        raise RealRootsError("Newton converged to a real root")
    roots = ComplexWaveRoots(c=c, eps=eps, alpha=alpha, beta=beta, gamma=complex(rel.gamma(beta)),
                             residual=res, theta=direction)
    if check and not roots.slopes_hold():
        raise SolverError(f"slope conditions fail: {roots.slope_margins()}")
    return roots


def residuals(params: ModelParams, contact: SpectralContact) -> tuple[float, float]:
    """Residuals of the road and field relations at the contact point."""
    rel = _Relation(params, contact.theta, contact.eps)
    return (rel.road(contact.w_star, contact.beta_star, contact.alpha_star),
            rel.field(contact.w_star, contact.beta_star, contact.alpha_star))
