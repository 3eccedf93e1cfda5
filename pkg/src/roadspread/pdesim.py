"""Explicit finite-difference simulation of the road-field system.

The field occupies ``[-Lx, Lx] x [0, Ly]`` and the road is the bottom row
``y = 0``.  Field diffusion uses the 5-point Laplacian; the exchange
condition ``-d v_y = mu u - nu v`` at ``y = 0`` enters through a ghost row.
Outer boundaries are homogeneous Neumann.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp

from .model import ModelParams, Reaction

log = logging.getLogger(__name__)

TRUSTED_FRACTION = 0.9


class InstabilityError(RuntimeError):
    """Non-finite or runaway values; ``last_stable`` is the last time that passed the check."""

    def __init__(self, message: str, t: float, last_stable: float | None = None):
        super().__init__(message)
        self.t = t
        self.last_stable = last_stable


class InsufficientSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    Lx: float
    Ly: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        if self.Lx <= 0 or self.Ly <= 0:
            raise ValueError("domain sizes must be positive")
        if self.nx < 3 or self.ny < 3:
            raise ValueError("need at least 3 nodes per direction")
        if self.nx % 2 == 0:
            raise ValueError("nx must be odd so that x = 0 is a node")

    @classmethod
    def from_spacing(cls, Lx: float, Ly: float, dx: float, dy: float | None = None) -> "Grid":
        dy = dx if dy is None else dy
        nx = int(round(2 * Lx / dx)) + 1
        ny = int(round(Ly / dy)) + 1
        if nx % 2 == 0:
            nx += 1
        return cls(Lx, Ly, nx, ny)

    @property
    def dx(self) -> float:
        return 2.0 * self.Lx / (self.nx - 1)

    @property
    def dy(self) -> float:
        return self.Ly / (self.ny - 1)

    @property
    def x(self) -> np.ndarray:
        x = np.linspace(-self.Lx, self.Lx, self.nx)
        return 0.5 * (x - x[::-1])

    @property
    def y(self) -> np.ndarray:
        return np.linspace(0.0, self.Ly, self.ny)

    def edge_distance(self, theta: float) -> float:
        """Distance from the origin to the domain boundary along the ray."""
        s, c = math.sin(theta), math.cos(theta)
        rx = self.Lx / abs(s) if abs(s) > 1e-15 else math.inf
        ry = self.Ly / c if c > 1e-15 else math.inf
        return min(rx, ry)


@dataclass
class SimState:
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> "SimState":
        return SimState(self.grid, self.u.copy(), self.v.copy(), self.t)


@dataclass
class FrontTrace:
    theta: float
    times: list[float] = field(default_factory=list)
    radii: list[float] = field(default_factory=list)
    trusted: list[bool] = field(default_factory=list)

    def append(self, t: float, r: float, trusted: bool) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("trace times must increase")
        self.times.append(t)
        self.radii.append(r)
        self.trusted.append(trusted)


@dataclass(frozen=True)
class SpeedFit:
    speed: float
    quality: float
    n: int
    t_start: float
    t_end: float

    @property
    def flagged(self) -> bool:
        return self.quality < 0.99


@dataclass
class StationaryState:
    y: np.ndarray
    V: np.ndarray
    U: float


@dataclass
class RunResult:
    traces: list[FrontTrace]
    state: SimState
    dt: float
    snapshots: list[SimState] = field(default_factory=list)
    bound_violations: int = 0
    exit_time: float | None = None


# ---------------------------------------------------------------------------


def init_compact(grid: Grid, r0: float = 2.0, amp: float = 1.0) -> SimState:
    """Field bump ``amp * max(0, 1 - |x|^2 / r0^2)`` at the origin, empty road."""
    if not 0 < amp <= 1:
        raise ValueError("amp must lie in (0, 1]")
    if not 0 < r0 < min(grid.Lx, grid.Ly):
        raise ValueError("support radius must be positive and smaller than the domain")
    X, Y = np.meshgrid(grid.x, grid.y)
    v = amp * np.maximum(0.0, 1.0 - (X * X + Y * Y) / (r0 * r0))
    u = np.zeros(grid.nx)
    return SimState(grid, u, v, 0.0)


def stable_dt(params: ModelParams, grid: Grid, safety: float = 0.9) -> float:
    """Largest explicit Euler step allowed by diffusion, transport and reaction."""
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    dx, dy = grid.dx, grid.dy
    field_diff = dx * dx * dy * dy / (2.0 * params.d * (dx * dx + dy * dy))
    road_diff = dx * dx / (2.0 * params.D)
    transport = dx / (abs(params.q) + 1e-300)
    rates = 1.0 / (params.f0p + params.mu + params.nu + params.rho)
    return safety * min(field_diff, road_diff, transport, rates)


@njit(cache=True)
def _advance(u, v, fv, un, vn, dt, dx, dy, d, D, mu, nu, q, rho):
    ny, nx = v.shape
    idx2 = 1.0 / (dx * dx)
    idy2 = 1.0 / (dy * dy)
    ghost = 2.0 * dy / d
    for j in range(ny):
        for i in range(nx):
            vc = v[j, i]
            il = i - 1 if i > 0 else 1
            ir = i + 1 if i < nx - 1 else nx - 2
            if j == 0:
                vup = v[1, i]
                vdn = v[1, i] + ghost * (mu * u[i] - nu * vc)
            elif j == ny - 1:
                vup = v[j - 1, i]
                vdn = v[j - 1, i]
            else:
                vup = v[j + 1, i]
                vdn = v[j - 1, i]
            lap = ((v[j, il] + v[j, ir]) - 2.0 * vc) * idx2 + ((vdn + vup) - 2.0 * vc) * idy2
            vn[j, i] = vc + dt * (d * lap + fv[j, i])
    for i in range(nx):
        uc = u[i]
        il = i - 1 if i > 0 else 1
        ir = i + 1 if i < nx - 1 else nx - 2
        uxx = ((u[il] + u[ir]) - 2.0 * uc) * idx2
        if q > 0:
            adv = q * (uc - u[il]) / dx
        elif q < 0:
            adv = q * (u[ir] - uc) / dx
        else:
            adv = 0.0
        un[i] = uc + dt * (D * uxx - adv + nu * v[0, i] - (mu + rho) * uc)


def _check_finite(params: ModelParams, u: np.ndarray, v: np.ndarray, t: float) -> None:
    limit = 10.0 * max(1.0, params.nu / params.mu)
    umax = float(np.max(np.abs(u)))
    vmax = float(np.max(np.abs(v)))
    if not (math.isfinite(umax) and math.isfinite(vmax)) or umax > limit or vmax > limit:
        raise InstabilityError(f"unstable solution at t={t:.6g}: max|u|={umax:.3g}, max|v|={vmax:.3g}", t)


def step(params: ModelParams, reaction: Reaction, state: SimState, dt: float) -> SimState:
    """One explicit Euler step of the coupled system."""
    un = np.empty_like(state.u)
    vn = np.empty_like(state.v)
    g = state.grid
    _advance(state.u, state.v, np.asarray(reaction(state.v), dtype=float), un, vn, dt, g.dx, g.dy,
             params.d, params.D, params.mu, params.nu, params.q, params.rho)
    t = state.t + dt
    _check_finite(params, un, vn, t)
    return SimState(g, un, vn, t)


def _bilinear(grid: Grid, v: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    fi = np.clip((x + grid.Lx) / grid.dx, 0.0, grid.nx - 1.0)
    fj = np.clip(y / grid.dy, 0.0, grid.ny - 1.0)
    i0 = np.minimum(np.floor(fi).astype(int), grid.nx - 2)
    j0 = np.minimum(np.floor(fj).astype(int), grid.ny - 2)
    sx = fi - i0
    sy = fj - j0
    return ((1 - sx) * (1 - sy) * v[j0, i0] + sx * (1 - sy) * v[j0, i0 + 1]
            + (1 - sx) * sy * v[j0 + 1, i0] + sx * sy * v[j0 + 1, i0 + 1])


def front_radius(state: SimState, theta: float, level: float = 0.5) -> float:
    """Largest radius along the ray where the interpolated field is at least ``level``.

    The scan covers the trusted part of the ray (90% of the distance to the
    boundary) and is refined by bisection.
    """
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    g = state.grid
    s, c = math.sin(theta), max(math.cos(theta), 0.0)
    r_max = TRUSTED_FRACTION * g.edge_distance(theta)
    h = 0.5 * min(g.dx, g.dy)
    r = np.append(np.arange(0.0, r_max, h), r_max)
    vals = _bilinear(g, state.v, r * s, r * c)
    above = np.nonzero(vals >= level)[0]
    if above.size == 0:
        return 0.0
    k = int(above[-1])
    if k == r.size - 1:
        return float(r_max)
    lo, hi = float(r[k]), float(r[k + 1])
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _bilinear(g, state.v, np.array([mid * s]), np.array([mid * c]))[0] >= level:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


def run(params: ModelParams, reaction: Reaction, grid: Grid, T: float, rays: list[float],
        cadence: float = 0.5, *, r0: float = 2.0, amp: float = 1.0, safety: float = 0.9,
        level: float = 0.5, snapshot_every: float | None = None, stop_when_untrusted: bool = False,
        state: SimState | None = None) -> RunResult:
    """Integrate to time ``T`` and record front radii on each ray every ``cadence``.

    A ray's samples are marked untrusted once its front reaches 90% of the
    distance to the boundary along that ray.  With ``stop_when_untrusted``
    the run ends as soon as every ray is untrusted.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    for th in rays:
        if not -0.5 * math.pi - 1e-12 <= th <= 0.5 * math.pi + 1e-12:
            raise ValueError(f"ray angle {th} outside [-pi/2, pi/2]")
    dt_max = stable_dt(params, grid, safety)
    per_sample = max(1, math.ceil(cadence / dt_max))
    dt = cadence / per_sample
    n_samples = math.ceil(T / cadence - 1e-9)
    snap_stride = None if snapshot_every is None else max(1, int(round(snapshot_every / cadence)))

    st = init_compact(grid, r0, amp) if state is None else state.copy()
    u, v = st.u.copy(), st.v.copy()
    un, vn = np.empty_like(u), np.empty_like(v)
    u_bound = max(params.nu / params.mu * max(1.0, float(v.max())), float(u.max()))
    v_bound = max(1.0, float(v.max()))
    traces = [FrontTrace(float(th)) for th in rays]
    untrusted = [False] * len(rays)
    snapshots: list[SimState] = []
    violations = 0
    exit_time = None
    min_half = TRUSTED_FRACTION * min(grid.Lx, grid.Ly)
    t0 = st.t
    args = (grid.dx, grid.dy, params.d, params.D, params.mu, params.nu, params.q, params.rho)

    for k in range(1, n_samples + 1):
        for _ in range(per_sample):
            _advance(u, v, reaction(v), un, vn, dt, *args)
            u, un = un, u
            v, vn = vn, v
        t = t0 + k * cadence
        try:
            _check_finite(params, u, v, t)
        except InstabilityError as exc:
            raise InstabilityError(str(exc), t, t - cadence) from None
        if u.min() < -1e-12 or v.min() < -1e-12 or u.max() > u_bound + 1e-9 or v.max() > v_bound + 1e-9:
            violations += 1
        snap = SimState(grid, u, v, t)
        for n, th in enumerate(rays):
            r = front_radius(snap, th, level)
            if r >= TRUSTED_FRACTION * grid.edge_distance(th) - 1e-12:
                untrusted[n] = True
            traces[n].append(t, r, not untrusted[n])
            if r >= min_half - 1e-12 and exit_time is None:
                exit_time = t
                log.warning("front left the trusted region (r=%.3g >= %.3g) at t=%.3g", r, min_half, t)
        if snap_stride is not None and k % snap_stride == 0:
            snapshots.append(snap.copy())
        if stop_when_untrusted and all(untrusted):
            break

    if violations:
        log.warning("discrete bounds violated at %d output times", violations)
    return RunResult(traces, SimState(grid, u.copy(), v.copy(), t), dt, snapshots, violations, exit_time)


def measure_speed(trace: FrontTrace, window: float = 0.5, r_min: float = 0.0) -> SpeedFit:
    """Least-squares front speed over the last ``window`` fraction of trusted samples."""
    t = np.asarray(trace.times, dtype=float)
    r = np.asarray(trace.radii, dtype=float)
    ok = np.asarray(trace.trusted, dtype=bool) & (r > r_min)
    t, r = t[ok], r[ok]
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    start = int(math.floor((1.0 - window) * t.size))
    t, r = t[start:], r[start:]
    if t.size < 10:
        raise InsufficientSamplesError(f"only {t.size} samples in the fit window")
    slope, intercept = np.polyfit(t, r, 1)
    resid = r - (slope * t + intercept)
    ss_tot = float(np.sum((r - r.mean()) ** 2))
    quality = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return SpeedFit(float(slope), quality, int(t.size), float(t[0]), float(t[-1]))


def stationary_state(params: ModelParams, reaction: Reaction, y: np.ndarray,
                     tol: float = 1e-13) -> StationaryState:
    """Positive bounded steady state with constant road density.

    Shoots on ``V(0)``: the exchange condition fixes ``V'(0)`` and the
    trajectory must approach 1 without overshooting it or turning back.
    """
    y = np.asarray(y, dtype=float)
    if params.rho == 0:
        return StationaryState(y, np.ones_like(y), params.nu / params.mu)
    d = params.d
    k = params.nu * params.rho / (d * (params.mu + params.rho))
    y_max = float(y[-1])

    def rhs(_, z):
        return [z[1], -float(reaction(np.array([z[0]]))[0]) / d]

    def over(_, z):
        return z[0] - 1.0
    over.terminal = True
    over.direction = 1

    def turn(_, z):
        return z[1]
    turn.terminal = True
    turn.direction = -1

    def shoot(v0):
        return solve_ivp(rhs, (0.0, y_max), [v0, k * v0], events=(over, turn), rtol=1e-12,
                         atol=1e-14, dense_output=True)

    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        sol = shoot(mid)
        if sol.t_events[0].size:
            hi = mid
        elif sol.t_events[1].size:
            lo = mid
        else:
            lo = hi = mid
            break
        if hi - lo < tol:
            break
    v0 = 0.5 * (lo + hi)
    sol = shoot(v0)
    y_end = float(sol.t[-1])
    inside = y <= y_end
    V = np.empty_like(y)
    V[inside] = sol.sol(y[inside])[0]
    if not np.all(inside):
        # past the point where the shot trajectory leaves the separatrix the
        # profile follows the linearisation around V = 1
        h = 1e-6
        slope = float((reaction(np.array([1.0 + h])) - reaction(np.array([1.0 - h])))[0]) / (2 * h)
        rate = math.sqrt(max(-slope, 1e-300) / d)
        v_end = min(float(sol.sol(y_end)[0]), 1.0)
        V[~inside] = 1.0 - (1.0 - v_end) * np.exp(-rate * (y[~inside] - y_end))
    U = params.nu * v0 / (params.mu + params.rho)
    return StationaryState(y, V, U)
