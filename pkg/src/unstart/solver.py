"""Finite-volume integrator for the quasi-1D Euler system with heat forcing.

The conserved state is w = (rho, rho*u, E) on K uniform cells spanning
[-L_I, L_C + L_E] plus one extrapolation cell on the right.  The scheme is
the component-wise first-order local Lax-Friedrichs (LLF) flux with forward
Euler in time:

    w_k^{n+1} = w_k^n - (h/dx) (F_{k+1/2} - F_{k-1/2})
                + h (A'/A)(x_{k+1/2}) [(0, P_k, 0) - f(w_k)]
                + h (0, 0, q(x_{k+1/2}, t_n))

    F_{k+1/2} = 1/2 [f(w_k) + f(w_{k+1})]
                - 1/2 max(|c_k + u_k|, |c_{k+1} + u_{k+1}|) (w_{k+1} - w_k)

with f(w) = (rho*u, rho*u^2 + P, (E + P)*u) and c = sqrt(gamma*P/rho).

Boundary handling: cell 0 is held at the prescribed inflow state
(rho0, rho0*u_in(t), E(rho0, u_in(t), P0)); cell K copies cell K-1 from the
previous time level.  Time stepping is either uniform (fixed dt) or CFL
adaptive with h = 0.8*dx/max|c+u|.

All stepping routines operate on a leading batch axis, so a finite-difference
gradient stencil or a chunk of Monte Carlo samples integrates as one array
program; per-sample results are bitwise independent of the batch layout.
"""

import os
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .engine import EngineGeometry, FreeStream, FuelSchedule, GasModel, heat_profile
from . import _kernels

__all__ = [
    "Discretization",
    "ScramjetModel",
    "ConservedField",
    "TrajectoryRecord",
    "SolverError",
    "InvalidStateError",
    "SpinUpError",
    "CflInstabilityError",
    "pressure",
    "sound_speed",
    "mach",
    "physical_flux",
    "llf_flux",
    "adaptive_dt",
    "step",
    "spin_up",
    "simulate",
    "simulate_paths",
    "shock_location",
    "thrust",
    "ConstantInflow",
    "CoarsePathInflow",
    "TabulatedInflow",
]

CFL_NUMBER = 0.8
SPIN_UP_TOL = 1e-10
SPIN_UP_MAX_TIME = 0.1


class SolverError(Exception):
    """Base class for solver failures."""


class InvalidStateError(SolverError):
    """State with nonpositive density or pressure (or non-finite entries)."""

    def __init__(self, message, cell=None, time=None):
        super().__init__(message)
        self.cell = cell
        self.time = time


class SpinUpError(SolverError):
    """Equilibrium iteration did not converge within the time budget."""


class CflInstabilityError(SolverError):
    """Uniform-step run exceeded CFL 1; declared infeasible by instability."""


@dataclass(frozen=True)
class Discretization:
    """Uniform space/time grids.

    K cells of width dx between x0 and x0 + K*dx, plus one extrapolation
    cell; N uniform time steps of dt_uniform cover the horizon T = N*dt.
    """

    k_cells: int
    dx: float
    dt_uniform: float
    n_steps: int
    x0: float

    def __post_init__(self):
        if self.k_cells < 3:
            raise ValueError(f"need at least 3 cells, got {self.k_cells}")
        if self.dx <= 0.0 or self.dt_uniform <= 0.0 or self.n_steps < 1:
            raise ValueError("dx, dt_uniform and n_steps must be positive")

    @classmethod
    def for_geometry(cls, geom: EngineGeometry, k_cells: int = 100,
                     dt_uniform: float = 1e-6, n_steps: int = 10_000):
        return cls(k_cells=k_cells, dx=geom.length / k_cells,
                   dt_uniform=dt_uniform, n_steps=n_steps, x0=geom.x_min)

    @property
    def horizon(self) -> float:
        return self.n_steps * self.dt_uniform

    @property
    def x_edges(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.k_cells + 1)

    @property
    def midpoints(self) -> np.ndarray:
        """Midpoints of the K physical cells (the outflow cell has none)."""
        return self.x0 + self.dx * (np.arange(self.k_cells) + 0.5)


@dataclass(frozen=True)
class ScramjetModel:
    """Immutable bundle of everything a run needs.

    Safe to share across concurrent runs; all mutable buffers are private
    to a single integration.
    """

    gas: GasModel
    geom: EngineGeometry
    sched: FuelSchedule
    flow: FreeStream
    disc: Discretization

    def __post_init__(self):
        if (self.sched.rho0, self.sched.u0) != (self.flow.rho0, self.flow.u0):
            raise ValueError("fuel schedule and free stream disagree on rho0/u0")

    @cached_property
    def _geo_ratio(self) -> np.ndarray:
        """A'(x)/A(x) at the K physical cell midpoints."""
        xm = self.disc.midpoints
        return self.geom.area_slope(xm) / self.geom.area(xm)

    @cached_property
    def _heat_profile(self) -> np.ndarray:
        """Spatial heat-source factor at the K physical cell midpoints."""
        return heat_profile(self.sched, self.geom, self.disc.midpoints)

    def inflow_state(self, u_in):
        """Conserved inflow-cell state for inflow speed(s) u_in."""
        u_in = np.asarray(u_in, dtype=float)
        rho0, p0 = self.flow.rho0, self.flow.p0
        e = p0 / (self.gas.gamma - 1.0) + 0.5 * rho0 * u_in**2
        return np.stack(
            [np.broadcast_to(rho0, u_in.shape), rho0 * u_in, e], axis=-2 if u_in.ndim else 0
        )

    def uniform_field(self, u_in: float) -> "ConservedField":
        """Spatially uniform field at the inflow state (spin-up seed)."""
        kk = self.disc.k_cells + 1
        w = np.repeat(self.inflow_state(float(u_in))[:, None], kk, axis=1)
        return ConservedField(w)


@dataclass(frozen=True, eq=False)
class ConservedField:
    """Cell-averaged conserved state over cells 0..K.

    Cell 0 is the prescribed inflow cell; cell K is the outflow
    extrapolation cell.
    """

    w: np.ndarray  # shape (3, K+1): rows rho, rho*u, E

    def __post_init__(self):
        if self.w.ndim != 2 or self.w.shape[0] != 3:
            raise ValueError(f"expected shape (3, K+1), got {self.w.shape}")

    @property
    def rho(self) -> np.ndarray:
        return self.w[0]

    @property
    def mom(self) -> np.ndarray:
        return self.w[1]

    @property
    def ener(self) -> np.ndarray:
        return self.w[2]

    def velocity(self) -> np.ndarray:
        return self.mom / self.rho

    def pressure(self, gas: GasModel) -> np.ndarray:
        return pressure(self.rho, self.mom, self.ener, gas)

    def sound_speed(self, gas: GasModel) -> np.ndarray:
        return sound_speed(self.rho, self.mom, self.ener, gas)

    def mach(self, gas: GasModel) -> np.ndarray:
        return mach(self.rho, self.mom, self.ener, gas)

    def copy(self) -> "ConservedField":
        return ConservedField(self.w.copy())


def pressure(rho, mom, ener, gas: GasModel):
    """Pressure P = (gamma-1)(E - (rho u)^2 / (2 rho)) [Pa]."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise InvalidStateError("nonpositive density")
    out = (gas.gamma - 1.0) * (np.asarray(ener, float) - 0.5 * np.asarray(mom, float) ** 2 / rho)
    return out if out.ndim else float(out)


def sound_speed(rho, mom, ener, gas: GasModel):
    """Speed of sound c = sqrt(gamma P / rho) [m/s]."""
    p = pressure(rho, mom, ener, gas)
    if np.any(np.asarray(p) <= 0.0):
        raise InvalidStateError("nonpositive pressure")
    out = np.sqrt(gas.gamma * p / np.asarray(rho, float))
    return out if np.ndim(out) else float(out)


def mach(rho, mom, ener, gas: GasModel):
    """Mach number M = u / sqrt(gamma P / rho) (dimensionless)."""
    out = np.asarray(mom, float) / np.asarray(rho, float) / sound_speed(rho, mom, ener, gas)
    return out if out.ndim else float(out)


def physical_flux(w, gas: GasModel):
    """Euler flux f(w) = (rho u, rho u^2 + P, (E + P) u); components first."""
    w = np.asarray(w, dtype=float)
    rho, mom, ener = w[..., 0, :], w[..., 1, :], w[..., 2, :]
    u = mom / rho
    p = (gas.gamma - 1.0) * (ener - 0.5 * mom * u)
    return np.stack([mom, mom * u + p, (ener + p) * u], axis=-2)


def llf_flux(left, right, gas: GasModel):
    """Component-wise local Lax-Friedrichs numerical flux.

    F = 1/2 [f(left) + f(right)] - 1/2 max(|c_L+u_L|, |c_R+u_R|) (right-left)

    `left` and `right` carry the three components on axis -2; a bare (3,)
    triple is also accepted.  Both states must be valid.
    """
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    squeeze = left.ndim == 1 and right.ndim == 1
    if squeeze:
        left = left[:, None]
        right = right[:, None]
    speeds = []
    fluxes = []
    for w in (left, right):
        rho, mom, ener = w[..., 0, :], w[..., 1, :], w[..., 2, :]
        if np.any(rho <= 0.0):
            raise InvalidStateError("nonpositive density")
        u = mom / rho
        p = (gas.gamma - 1.0) * (ener - 0.5 * mom * u)
        if np.any(p <= 0.0):
            raise InvalidStateError("nonpositive pressure")
        speeds.append(np.abs(np.sqrt(gas.gamma * p / rho) + u))
        fluxes.append(np.stack([mom, mom * u + p, (ener + p) * u], axis=-2))
    a = np.maximum(speeds[0], speeds[1])[..., None, :]
    out = 0.5 * (fluxes[0] + fluxes[1]) - 0.5 * a * (right - left)
    return out[..., 0] if squeeze else out


def adaptive_dt(fld: ConservedField, dx: float, gas: GasModel) -> float:
    """CFL time increment h = 0.8 dx / max_k |c_k + u_k| [s]."""
    c = fld.sound_speed(gas)
    u = fld.velocity()
    return CFL_NUMBER * dx / float(np.max(np.abs(c + u)))


# ---------------------------------------------------------------------------
# inflow evaluators


class ConstantInflow:
    """Time-constant inflow speed."""

    def __init__(self, u: float, n_rows: int = 1):
        self.u = float(u)
        self.n_rows = n_rows

    def at_index(self, n: int) -> np.ndarray:
        return np.full(self.n_rows, self.u)

    def at_times(self, t: np.ndarray) -> np.ndarray:
        return np.full(np.shape(t), self.u)


class CoarsePathInflow:
    """Piecewise-linear interpolant of coarse control values.

    `coarse` has shape (B, n_tilde+1); knot j sits at time j*m*dt.  Index
    lookups use exact integer arithmetic on the fine grid (n = j*m + k maps
    to weight k/m); time lookups interpolate the same polyline.
    """

    def __init__(self, coarse: np.ndarray, m: int, dt: float):
        self.coarse = np.atleast_2d(np.asarray(coarse, dtype=float))
        self.m = int(m)
        self.dt = float(dt)
        self.n_tilde = self.coarse.shape[1] - 1
        self.n_fine = self.n_tilde * self.m
        self._rows = np.arange(self.coarse.shape[0])

    @property
    def n_rows(self) -> int:
        return self.coarse.shape[0]

    def at_index(self, n: int) -> np.ndarray:
        n = min(int(n), self.n_fine)
        j, k = divmod(n, self.m)
        if j >= self.n_tilde:
            return self.coarse[:, -1].copy()
        lam = k / self.m
        return (1.0 - lam) * self.coarse[:, j] + lam * self.coarse[:, j + 1]

    def at_times(self, t: np.ndarray) -> np.ndarray:
        s = np.clip(np.asarray(t, dtype=float) / (self.m * self.dt), 0.0, self.n_tilde)
        j = np.minimum(s.astype(int), self.n_tilde - 1)
        lam = s - j
        return (1.0 - lam) * self.coarse[self._rows, j] + lam * self.coarse[self._rows, j + 1]


class TabulatedInflow:
    """Inflow speed tabulated at arbitrary (t, u) knots, linearly interpolated."""

    def __init__(self, t_knots, u_knots, dt: float):
        self.t_knots = np.asarray(t_knots, dtype=float)
        self.u_knots = np.asarray(u_knots, dtype=float)
        self.dt = float(dt)
        if self.t_knots.ndim != 1 or self.t_knots.shape != self.u_knots.shape:
            raise ValueError("t and u knots must be matching 1-D arrays")
        if np.any(np.diff(self.t_knots) <= 0.0):
            raise ValueError("t knots must be strictly increasing")
        self.n_rows = 1

    def at_index(self, n: int) -> np.ndarray:
        return np.atleast_1d(np.interp(n * self.dt, self.t_knots, self.u_knots))

    def at_times(self, t: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=float), self.t_knots, self.u_knots)


# ---------------------------------------------------------------------------
# batched integration core


@dataclass
class _BatchResult:
    min_m1: np.ndarray          # (B,) min over levels n>=1 of monitor-cell Mach
    crossed: np.ndarray         # (B,) bool: min_m1 dipped to/below the threshold
    cross_time: np.ndarray      # (B,) first crossing time, nan if none
    invalid: np.ndarray         # (B,) bool: state went invalid
    invalid_time: np.ndarray    # (B,) time of first invalid state, nan if none
    max_cfl: np.ndarray         # (B,) max over steps of h*max|c+u|/dx
    n_steps: np.ndarray         # (B,) accepted steps
    final_w: np.ndarray         # (B, 3, K+1) final states
    m1_series: np.ndarray | None = None  # (B, N+1) monitored Mach per level


@dataclass
class TrajectoryRecord:
    """Outcome of a single simulation run."""

    min_m1: float
    unstart_time: float | None
    n_steps: int
    max_cfl: float
    threshold: float
    final: ConservedField
    times: np.ndarray | None = None           # recorded levels
    mach_history: np.ndarray | None = None    # (n_rec, K) Mach at midpoints
    shock_history: np.ndarray | None = None   # (n_rec,) shock position
    thrust_history: np.ndarray | None = None  # (n_rec,) instantaneous thrust
    step_sizes: np.ndarray | None = None      # (n_steps,) accepted h
    step_speeds: np.ndarray | None = None     # (n_steps,) max|c+u| before step

    @property
    def unstarted(self) -> bool:
        return self.unstart_time is not None


class _Scratch:
    """Preallocated work arrays for one batch shape (hot-loop buffers)."""

    def __init__(self, b, kk):
        shape = (b, 3, kk + 1)
        self.u = np.empty((b, kk + 1))
        self.p = np.empty((b, kk + 1))
        self.c = np.empty((b, kk + 1))
        self.s = np.empty((b, kk + 1))
        self.t1 = np.empty((b, kk + 1))
        self.flux = np.empty(shape)
        self.a_edge = np.empty((b, kk))
        self.dw = np.empty((b, 3, kk))
        self.f_edge = np.empty((b, 3, kk))
        self.src = np.empty((b, 3, kk - 1))


def _primitives(w, gas, sc: _Scratch):
    """Fill scratch u, P, c, |c+u| for a (B, 3, K+1) state; NaN where invalid."""
    rho, mom, ener = w[:, 0, :], w[:, 1, :], w[:, 2, :]
    u, p, c, s, t1 = sc.u, sc.p, sc.c, sc.s, sc.t1
    np.divide(mom, rho, out=u)
    np.multiply(mom, u, out=t1)
    t1 *= 0.5
    np.subtract(ener, t1, out=p)
    p *= gas.gamma - 1.0
    np.divide(p, rho, out=c)
    c *= gas.gamma
    np.sqrt(c, out=c)
    np.add(c, u, out=s)
    np.abs(s, out=s)


def _rows_valid(w, p):
    ok = (np.min(w[:, 0, :], axis=1) > 0.0) & (np.min(p, axis=1) > 0.0)
    return ok & np.isfinite(p).all(axis=1)


def _kernel_usable(inflow, record) -> bool:
    if record is not None or not _kernels.HAVE_NUMBA:
        return False
    if os.environ.get("UNSTART_NO_NUMBA"):
        return False
    return isinstance(inflow, (CoarsePathInflow, ConstantInflow))


def _integrate(model: ScramjetModel, w0: np.ndarray, inflow, *,
               stepping: str, threshold: float, monitor_cell: int = 1,
               fuel_on: bool = True, stop_on_cross: bool = False,
               record_m1: bool = False, record=None) -> _BatchResult:
    """Advance a batch of states over the horizon; see module docstring.

    Dispatches to the compiled kernel when available; the numpy reference
    path below also serves runs that record per-level diagnostics
    (`record` is a dict populated with them; single-row runs only).
    """
    if stepping not in ("uniform", "adaptive"):
        raise ValueError(f"unknown stepping mode {stepping!r}")
    if record_m1 and stepping != "uniform":
        raise ValueError("the per-level Mach series is only defined for uniform stepping")
    if _kernel_usable(inflow, record):
        return _integrate_kernel(model, w0, inflow, stepping=stepping,
                                 threshold=threshold, monitor_cell=monitor_cell,
                                 fuel_on=fuel_on, stop_on_cross=stop_on_cross,
                                 record_m1=record_m1)
    return _integrate_numpy(model, w0, inflow, stepping=stepping,
                            threshold=threshold, monitor_cell=monitor_cell,
                            fuel_on=fuel_on, stop_on_cross=stop_on_cross,
                            record_m1=record_m1, record=record)


def _integrate_kernel(model: ScramjetModel, w0: np.ndarray, inflow, *,
                      stepping: str, threshold: float, monitor_cell: int,
                      fuel_on: bool, stop_on_cross: bool,
                      record_m1: bool = False) -> _BatchResult:
    disc = model.disc
    w = np.array(w0, dtype=float, copy=True)
    if w.ndim == 2:
        w = w[None]
    b = w.shape[0]
    if isinstance(inflow, ConstantInflow):
        coarse = np.full((b, 2), inflow.u)
        m = disc.n_steps
    else:
        coarse = np.ascontiguousarray(inflow.coarse, dtype=float)
        m = inflow.m
        if coarse.shape[0] == 1 and b > 1:
            coarse = np.repeat(coarse, b, axis=0)
        if coarse.shape[0] != b:
            raise ValueError("inflow batch does not match the state batch")
    kk = disc.k_cells
    profile = model._heat_profile[1:kk] if fuel_on else np.zeros(kk - 1)
    m1_out = np.full((b, disc.n_steps + 1 if record_m1 else 1), np.nan)
    out = _kernels.integrate_batch(
        np.ascontiguousarray(w),
        coarse,
        int(m),
        disc.dt_uniform,
        disc.n_steps,
        disc.horizon,
        disc.dx,
        model.gas.gamma,
        model.flow.rho0,
        model.flow.p0,
        np.ascontiguousarray(model._geo_ratio[1:kk]),
        np.ascontiguousarray(profile),
        model.sched.tau,
        model.sched.burst,
        stepping == "uniform",
        float(threshold),
        int(monitor_cell),
        bool(stop_on_cross),
        bool(record_m1),
        m1_out,
    )
    return _BatchResult(*out, m1_series=m1_out if record_m1 else None)


def _integrate_numpy(model: ScramjetModel, w0: np.ndarray, inflow, *,
                     stepping: str, threshold: float, monitor_cell: int = 1,
                     fuel_on: bool = True, stop_on_cross: bool = False,
                     record_m1: bool = False, record=None) -> _BatchResult:
    gas, disc, sched = model.gas, model.disc, model.sched
    dx, dt, n_max, t_end = disc.dx, disc.dt_uniform, disc.n_steps, disc.horizon
    kk = disc.k_cells
    ratio_int = model._geo_ratio[1:kk]
    profile_int = model._heat_profile[1:kk] if fuel_on else np.zeros(kk - 1)
    uniform = stepping == "uniform"
    if stepping not in ("uniform", "adaptive"):
        raise ValueError(f"unknown stepping mode {stepping!r}")

    w = np.array(w0, dtype=float, copy=True)
    if w.ndim == 2:
        w = w[None]
    b = w.shape[0]
    w_buf = np.empty_like(w)
    sc = _Scratch(b, kk)
    rho0, p0 = model.flow.rho0, model.flow.p0
    e_coeff = p0 / (gas.gamma - 1.0)

    t = np.zeros(b)
    run_min = np.full(b, np.inf)
    crossed = np.zeros(b, dtype=bool)
    cross_time = np.full(b, np.nan)
    invalid = np.zeros(b, dtype=bool)
    invalid_time = np.full(b, np.nan)
    max_cfl = np.zeros(b)
    n_taken = np.zeros(b, dtype=np.int64)
    done = np.zeros(b, dtype=bool)
    safe_state = model.inflow_state(model.flow.u0)[:, None]
    m1_series = np.full((b, n_max + 1), np.nan) if record_m1 else None

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        _primitives(w, gas, sc)
        ok = _rows_valid(w, sc.p)
        if not ok.all():
            invalid |= ~ok
            invalid_time[~ok] = 0.0
            done |= ~ok
            w[~ok] = safe_state
            _primitives(w, gas, sc)

        if record is not None:
            if b != 1:
                raise ValueError("per-level recording requires a single-row batch")
            record.setdefault("times", []).append(0.0)
            record.setdefault("w_levels", []).append(w[0].copy())
            record.setdefault("h", [])
            record.setdefault("smax", [])

        n = 0
        tiny = 1e-15 * max(t_end, dt)
        while True:
            active = ~done
            if not active.any():
                break
            smax = np.nanmax(sc.s, axis=1)
            if uniform:
                if n >= n_max:
                    break
                h = np.where(active, dt, 0.0)
                u_next = inflow.at_index(n + 1)
            else:
                h = CFL_NUMBER * dx / smax
                h = np.minimum(h, t_end - t, out=h)
                h[~active] = 0.0
                np.maximum(h, 0.0, out=h)
                u_next = inflow.at_times(t + h)
            np.maximum(max_cfl, np.where(active, h * smax / dx, 0.0), out=max_cfl)

            # physical flux, edge flux, sources
            flux, f_edge, dw, a_edge, src = sc.flux, sc.f_edge, sc.dw, sc.a_edge, sc.src
            u, p = sc.u, sc.p
            flux[:, 0, :] = w[:, 1, :]
            np.multiply(w[:, 1, :], u, out=flux[:, 1, :])
            flux[:, 1, :] += p
            np.add(w[:, 2, :], p, out=flux[:, 2, :])
            flux[:, 2, :] *= u
            np.maximum(sc.s[:, :-1], sc.s[:, 1:], out=a_edge)
            np.subtract(w[:, :, 1:], w[:, :, :-1], out=dw)
            dw *= a_edge[:, None, :]
            np.add(flux[:, :, :-1], flux[:, :, 1:], out=f_edge)
            f_edge -= dw
            f_edge *= 0.5
            np.multiply(flux[:, :, 1:kk], ratio_int, out=src)
            src *= -1.0
            src[:, 1, :] += ratio_int * p[:, 1:kk]
            ind = np.asarray(sched.indicator(t), dtype=float)
            if fuel_on:
                src[:, 2, :] += profile_int * (ind if ind.ndim == 0 else ind[:, None])

            # forward Euler update into the spare buffer
            hb = h[:, None, None]
            np.subtract(f_edge[:, :, 1:], f_edge[:, :, :-1], out=w_buf[:, :, 1:kk])
            w_buf[:, :, 1:kk] *= -hb / dx
            src *= hb
            w_buf[:, :, 1:kk] += src
            w_buf[:, :, 1:kk] += w[:, :, 1:kk]
            w_buf[:, :, kk] = w[:, :, kk - 1]
            w_buf[:, 0, 0] = rho0
            w_buf[:, 1, 0] = rho0 * u_next
            w_buf[:, 2, 0] = e_coeff + (0.5 * rho0) * u_next**2

            stepped = h > 0.0
            if not stepped.all():
                frozen = ~stepped
                w_buf[frozen] = w[frozen]
            w, w_buf = w_buf, w
            t = t + h
            n += 1
            n_taken += stepped

            _primitives(w, gas, sc)
            ok = _rows_valid(w, sc.p)
            newly_bad = stepped & ~ok & ~invalid
            if newly_bad.any():
                invalid |= newly_bad
                invalid_time[newly_bad] = t[newly_bad]
                done |= newly_bad
                w[newly_bad] = safe_state
                _primitives(w, gas, sc)

            m1 = sc.u[:, monitor_cell] / sc.c[:, monitor_cell]
            track = stepped & ~invalid
            if m1_series is not None and n <= n_max:
                m1_series[track, n] = m1[track]
            run_min = np.where(track, np.minimum(run_min, m1), run_min)
            newly_crossed = track & ~crossed & (m1 <= threshold)
            crossed |= newly_crossed
            cross_time[newly_crossed] = t[newly_crossed]

            if record is not None:
                record["times"].append(float(t[0]))
                record["w_levels"].append(w[0].copy())
                record["h"].append(float(h[0]))
                record["smax"].append(float(smax[0]))

            done |= t >= t_end - tiny
            if stop_on_cross:
                done |= crossed

    return _BatchResult(
        min_m1=run_min, crossed=crossed, cross_time=cross_time,
        invalid=invalid, invalid_time=invalid_time, max_cfl=max_cfl,
        n_steps=n_taken, final_w=w, m1_series=m1_series,
    )


def step(fld: ConservedField, u_inflow: float, h: float, t: float,
         model: ScramjetModel, fuel_on: bool = True) -> ConservedField:
    """One forward-Euler LLF step of `h` seconds from time `t`.

    `u_inflow` is the inflow speed at the new time level.  Raises
    InvalidStateError if the produced state has nonpositive density or
    pressure, reporting the first offending cell.
    """
    gas = model.gas
    kk = model.disc.k_cells
    w = fld.w[None].astype(float, copy=True)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        u = w[:, 1] / w[:, 0]
        p = (gas.gamma - 1.0) * (w[:, 2] - 0.5 * w[:, 1] * u)
        s = np.abs(np.sqrt(gas.gamma * p / w[:, 0]) + u)
    if not _rows_valid(w, p)[0]:
        raise InvalidStateError("invalid input state", time=t)

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        flux = np.empty_like(w)
        flux[:, 0] = w[:, 1]
        flux[:, 1] = w[:, 1] * u + p
        flux[:, 2] = (w[:, 2] + p) * u
        a_edge = np.maximum(s[:, :-1], s[:, 1:])[:, None, :]
        f_edge = 0.5 * ((flux[:, :, :-1] + flux[:, :, 1:])
                        - a_edge * (w[:, :, 1:] - w[:, :, :-1]))
        src = -flux[:, :, 1:kk]
        src[:, 1, :] += p[:, 1:kk]
        src *= model._geo_ratio[1:kk]
        w_new = w.copy()
        w_new[:, :, 1:kk] = w[:, :, 1:kk] + h * (
            src - (f_edge[:, :, 1:] - f_edge[:, :, :-1]) / model.disc.dx
        )
        if fuel_on:
            w_new[:, 2, 1:kk] += h * float(model.sched.indicator(t)) * model._heat_profile[1:kk]
        w_new[:, :, kk] = w[:, :, kk - 1]
        w_new[0, :, 0] = model.inflow_state(float(u_inflow))

    rho_new = w_new[0, 0]
    p_new = (gas.gamma - 1.0) * (w_new[0, 2] - 0.5 * w_new[0, 1] ** 2 / rho_new)
    bad = ~((rho_new > 0.0) & (p_new > 0.0) & np.isfinite(p_new))
    if bad.any():
        cell = int(np.argmax(bad))
        raise InvalidStateError(
            f"invalid state in cell {cell} at t={t + h:.6e}", cell=cell, time=t + h
        )
    return ConservedField(w_new[0])


@lru_cache(maxsize=32)
def _spin_up_cached(model: ScramjetModel, u_const: float):
    seed = model.uniform_field(u_const)
    res = None
    w = seed.w.copy()
    gas, disc = model.gas, model.disc
    t = 0.0
    while t < SPIN_UP_MAX_TIME:
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            u = w[1] / w[0]
            p = (gas.gamma - 1.0) * (w[2] - 0.5 * w[1] * u)
            s = np.abs(np.sqrt(gas.gamma * p / w[0]) + u)
        if not _rows_valid(w[None], p[None])[0]:
            raise SpinUpError("state went invalid during spin-up")
        h = CFL_NUMBER * disc.dx / float(np.nanmax(s))
        new = step(ConservedField(w), u_const, h, t, model, fuel_on=False)
        rel = float(np.max(np.abs(new.w - w) / (np.abs(w) + 1e-300)))
        w = new.w
        t += h
        if rel < SPIN_UP_TOL:
            res = ConservedField(w)
            break
    if res is None:
        raise SpinUpError(
            f"no equilibrium within {SPIN_UP_MAX_TIME}s of model time"
        )
    res.w.setflags(write=False)
    return res


def spin_up(model: ScramjetModel, u_const: float | None = None) -> ConservedField:
    """Steady flow under constant inflow with fuel off.

    Integrates with adaptive CFL steps from a uniform free-stream seed until
    one further step changes every conserved quantity by a relative amount
    below 1e-10 (sup norm).  The result is the initial condition for every
    simulation.  Results are cached per (model, u_const); the returned array
    is read-only, so callers copy before mutating.
    """
    if u_const is None:
        u_const = model.flow.u0
    return _spin_up_cached(model, float(u_const))


def _as_inflow(inflow, model: ScramjetModel):
    if isinstance(inflow, (int, float)):
        return ConstantInflow(float(inflow))
    if hasattr(inflow, "at_index") and hasattr(inflow, "at_times"):
        return inflow
    if hasattr(inflow, "solver_inflow"):
        return inflow.solver_inflow(model.disc)
    raise TypeError(f"cannot interpret {inflow!r} as an inflow")


def simulate(model: ScramjetModel, inflow, *, stepping: str = "uniform",
             mach_threshold: float = 1.0, monitor_cell: int = 1,
             record_history: bool = False, history_stride: int = 10,
             record_steps: bool = False, initial: ConservedField | None = None,
             check_cfl: bool = True) -> TrajectoryRecord:
    """Integrate one inflow realization from the spin-up equilibrium.

    `inflow` may be a constant speed, a CoarsePathInflow/TabulatedInflow, or
    any object exposing `at_index`/`at_times`.  Uniform stepping evaluates
    the inflow at grid times; adaptive stepping evaluates the piecewise
    linear inflow at each accepted time.  Raises InvalidStateError if the
    state goes invalid and CflInstabilityError if a uniform run exceeds
    CFL 1.
    """
    ev = _as_inflow(inflow, model)
    if getattr(ev, "n_rows", 1) != 1:
        raise ValueError("simulate takes a single inflow realization")
    w0 = (initial if initial is not None else spin_up(model)).w
    rec = {} if (record_history or record_steps) else None
    res = _integrate(model, w0[None], ev, stepping=stepping,
                     threshold=mach_threshold, monitor_cell=monitor_cell,
                     record=rec)
    if res.invalid[0]:
        raise InvalidStateError(
            f"state went invalid at t={res.invalid_time[0]:.6e}",
            time=float(res.invalid_time[0]),
        )
    if check_cfl and stepping == "uniform" and res.max_cfl[0] > 1.0:
        raise CflInstabilityError(
            f"CFL number reached {res.max_cfl[0]:.3f} > 1; run is "
            "infeasible by instability"
        )

    times = mach_hist = shock_hist = thrust_hist = None
    step_sizes = step_speeds = None
    if rec is not None:
        gas = model.gas
        levels = rec["w_levels"]
        if record_history:
            sel = list(range(0, len(levels), history_stride))
            if sel[-1] != len(levels) - 1:
                sel.append(len(levels) - 1)
            times = np.asarray([rec["times"][i] for i in sel])
            kk = model.disc.k_cells
            mach_hist = np.empty((len(sel), kk))
            shock_hist = np.empty(len(sel))
            thrust_hist = np.empty(len(sel))
            for row, i in enumerate(sel):
                fld = ConservedField(levels[i])
                m_full = fld.mach(gas)
                mach_hist[row] = m_full[:kk]
                shock_hist[row] = shock_location(m_full, model)
                thrust_hist[row] = thrust(fld, model)
        if record_steps:
            step_sizes = np.asarray(rec["h"])
            step_speeds = np.asarray(rec["smax"])

    return TrajectoryRecord(
        min_m1=float(res.min_m1[0]),
        unstart_time=float(res.cross_time[0]) if res.crossed[0] else None,
        n_steps=int(res.n_steps[0]),
        max_cfl=float(res.max_cfl[0]),
        threshold=mach_threshold,
        final=ConservedField(res.final_w[0]),
        times=times,
        mach_history=mach_hist,
        shock_history=shock_hist,
        thrust_history=thrust_hist,
        step_sizes=step_sizes,
        step_speeds=step_speeds,
    )


def simulate_paths(model: ScramjetModel, coarse: np.ndarray, m: int, *,
                   stepping: str = "adaptive", mach_threshold: float = 1.0,
                   monitor_cell: int = 1, stop_on_cross: bool = False,
                   record_m1: bool = False,
                   initial: ConservedField | None = None) -> _BatchResult:
    """Integrate a batch of coarse inflow paths (rows of `coarse`).

    Returns per-row outcome arrays; rows whose state goes invalid are
    reported in `invalid` rather than raising, so samplers can count them.
    """
    ev = CoarsePathInflow(coarse, m, model.disc.dt_uniform)
    w0 = (initial if initial is not None else spin_up(model)).w
    w0 = np.broadcast_to(w0, (ev.n_rows,) + w0.shape)
    return _integrate(model, w0, ev, stepping=stepping,
                      threshold=mach_threshold, monitor_cell=monitor_cell,
                      stop_on_cross=stop_on_cross, record_m1=record_m1)


def shock_location(mach_field: np.ndarray, model: ScramjetModel) -> float:
    """Rightmost isolator midpoint with M >= 1 [m].

    Returns 0 when the whole isolator is supersonic (idle engine) and -L_I
    when it is entirely subsonic (failed engine).
    """
    kk = model.disc.k_cells
    mid = model.disc.midpoints
    iso = mid <= 0.0
    m_iso = np.asarray(mach_field)[:kk][iso]
    sup = m_iso >= 1.0
    if sup.all():
        return 0.0
    if not sup.any():
        return -model.geom.l_i
    return float(mid[iso][sup].max())


def thrust(fld: ConservedField, model: ScramjetModel) -> float:
    """Instantaneous thrust (A rho u^2)_e - (A rho u^2)_i + (P_e - P_i) A_e [N].

    The inflow cell provides the inlet state, the outflow cell the exit
    state; areas are evaluated at the duct end planes.
    """
    gas, geom = model.gas, model.geom
    a_i = geom.area(geom.x_min)
    a_e = geom.area(geom.x_max)
    p = fld.pressure(gas)
    ru2 = fld.mom**2 / fld.rho
    return float(a_e * ru2[-1] - a_i * ru2[0] + (p[-1] - p[0]) * a_e)
