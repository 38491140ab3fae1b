"""Discrete rate function over coarse inflow paths and the minimum-action search.

The inflow speed is reduced to n_tilde Gaussian-random-walk control values
on a coarse time grid (knot j at time j*m*dt) with linear interpolation in
between.  Its large-deviation rate function is the quadratic form

    I(u~) = (m dt / (2 sigma_u^2)) sum_n [ (u~((n+1)m) - u~(nm)) / (m dt) ]^2

and the probability that the coarse path drives the monitored Mach number
to or below a threshold decays like exp(-I*/eps^2), where I* is the minimum
of I over that event set.  `minimize_action` computes I* and its minimizing
path with a constrained quasi-Newton search around the flow solver.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .engine import FreeStream
from .solver import (
    CflInstabilityError,
    CoarsePathInflow,
    InvalidStateError,
    ScramjetModel,
    simulate_paths,
)

__all__ = [
    "InflowPath",
    "NoiseModel",
    "EventSpec",
    "ActionResult",
    "MinimizeOptions",
    "InfeasibilityError",
    "rate_discrete",
    "asymptotic_probability",
    "sonic_speed",
    "subsonic_bound",
    "is_unstart",
    "minimize_action",
]


class InfeasibilityError(Exception):
    """No inflow path triggering the event was found."""


@dataclass(frozen=True)
class NoiseModel:
    """Stochastic inflow description.

    The inflow speed is u0 + eps*sigma_u*W_t.  `sigma_m` is the equivalent
    Mach-number volatility; it is carried for reporting only and all
    computations use `sigma_u`.  `mach_in0` is the nominal inflow Mach
    number, which fixes the speed corresponding to a Mach level
    (u = level*u0/mach_in0).

    sigma_u  : inflow-speed volatility [m s^-3/2]
    sigma_m  : inflow-Mach volatility [s^-1/2] (informational)
    epsilon  : noise scale (dimensionless)
    mach_in0 : nominal inflow Mach number (dimensionless)
    """

    sigma_u: float = 1.0e4
    sigma_m: float = 96.9020
    epsilon: float = 0.2
    mach_in0: float = 2.0

    def __post_init__(self):
        if self.sigma_u <= 0.0 or self.epsilon <= 0.0 or self.mach_in0 <= 0.0:
            raise ValueError("sigma_u, epsilon and mach_in0 must be positive")


@dataclass(frozen=True)
class EventSpec:
    """Threshold event: min over time levels of the monitored Mach <= level.

    `horizon`, when given, must equal the discretization horizon of the run
    evaluating the event (None defers to it).
    """

    mach_threshold: float = 1.0
    monitor_cell: int = 1
    horizon: float | None = None

    def __post_init__(self):
        if self.mach_threshold <= 0.0:
            raise ValueError("mach_threshold must be positive")
        if self.monitor_cell < 1:
            raise ValueError("monitor_cell must be >= 1")
        if self.horizon is not None and self.horizon <= 0.0:
            raise ValueError("horizon must be positive")

    def check_horizon(self, disc) -> None:
        if self.horizon is not None and not math.isclose(self.horizon,
                                                         disc.horizon):
            raise ValueError(
                f"event horizon {self.horizon} does not match the "
                f"discretization horizon {disc.horizon}")


@dataclass(frozen=True, eq=False)
class InflowPath:
    """Coarse inflow-speed control points with linear fine-grid interpolation.

    coarse : (n_tilde + 1,) control values, coarse[j] at time j*m*dt
    m      : fine steps per coarse interval
    dt     : fine time increment [s]
    """

    coarse: np.ndarray
    m: int
    dt: float

    def __post_init__(self):
        c = np.asarray(self.coarse, dtype=float)
        if c.ndim != 1 or c.size < 2:
            raise ValueError("coarse must be a 1-D array with at least 2 knots")
        object.__setattr__(self, "coarse", c)
        if self.m < 1 or self.dt <= 0.0:
            raise ValueError("need m >= 1 and dt > 0")

    @property
    def n_tilde(self) -> int:
        return self.coarse.size - 1

    @property
    def n_fine(self) -> int:
        return self.n_tilde * self.m

    @property
    def horizon(self) -> float:
        return self.n_fine * self.dt

    @property
    def knot_times(self) -> np.ndarray:
        return self.m * self.dt * np.arange(self.n_tilde + 1)

    def fine_values(self) -> np.ndarray:
        """Values on the fine grid, u(nm + k) = (1-k/m) u(nm) + (k/m) u((n+1)m)."""
        n = np.arange(self.n_fine + 1)
        j = np.minimum(n // self.m, self.n_tilde - 1)
        lam = (n - j * self.m) / self.m
        return (1.0 - lam) * self.coarse[j] + lam * self.coarse[j + 1]

    def at(self, t) -> np.ndarray:
        """Piecewise-linear interpolant at arbitrary times in [0, horizon]."""
        s = np.clip(np.asarray(t, dtype=float) / (self.m * self.dt), 0.0, self.n_tilde)
        j = np.minimum(s.astype(int), self.n_tilde - 1)
        lam = s - j
        out = (1.0 - lam) * self.coarse[j] + lam * self.coarse[j + 1]
        return out if out.ndim else float(out)

    def solver_inflow(self, disc) -> CoarsePathInflow:
        if self.n_fine != disc.n_steps or self.dt != disc.dt_uniform:
            raise ValueError("path grid does not match the solver discretization")
        return CoarsePathInflow(self.coarse[None], self.m, self.dt)

    def with_coarse(self, coarse) -> "InflowPath":
        return InflowPath(np.asarray(coarse, dtype=float), self.m, self.dt)

    @classmethod
    def constant(cls, u0: float, n_tilde: int, m: int, dt: float) -> "InflowPath":
        return cls(np.full(n_tilde + 1, float(u0)), m, dt)

    @classmethod
    def ramp(cls, u0: float, u_end: float, n_tilde: int, m: int, dt: float) -> "InflowPath":
        return cls(np.linspace(float(u0), float(u_end), n_tilde + 1), m, dt)


def rate_discrete(path: InflowPath, noise: NoiseModel) -> float:
    """Rate-function value of a coarse path (dimensionless, >= 0)."""
    md = path.m * path.dt
    d = np.diff(path.coarse)
    return float(np.sum(d * d) / (2.0 * noise.sigma_u**2 * md))


def asymptotic_probability(value: float, epsilon: float) -> float:
    """Log-asymptotic (prefactor-free) event probability exp(-value/eps^2).

    This is the exponential decay scale of the probability, not the
    probability itself; label it accordingly wherever it is reported.
    """
    if value < 0.0 or epsilon <= 0.0:
        raise ValueError("need value >= 0 and epsilon > 0")
    return math.exp(-value / epsilon**2)


def sonic_speed(noise: NoiseModel, flow: FreeStream) -> float:
    """Inflow speed corresponding to Mach 1 under the nominal inflow Mach."""
    return flow.u0 / noise.mach_in0


def subsonic_bound(noise: NoiseModel, flow: FreeStream, *, n_tilde: int, m: int,
                   dt: float, level: float = 1.0) -> tuple[InflowPath, float]:
    """Closed-form action bound from the subsonic-inflow event.

    The cheapest inflow path reaching Mach `level` at the entrance is the
    straight ramp from u0 to u_target = level*u0/mach_in0, with action
    (u0 - u_target)^2 / (2 sigma_u^2 T).  Any path driving the monitored
    cell to `level` at most beats this, so it upper-bounds the minimum
    action of the unstart event at the same level.
    """
    if level > noise.mach_in0:
        raise ValueError(
            f"level {level} above the initial inflow Mach {noise.mach_in0}; "
            "the event is certain and the bound is 0 with the constant path"
        )
    u_target = level * sonic_speed(noise, flow)
    path = InflowPath.ramp(flow.u0, u_target, n_tilde, m, dt)
    horizon = n_tilde * m * dt
    value = (flow.u0 - u_target) ** 2 / (2.0 * noise.sigma_u**2 * horizon)
    return path, value


def is_unstart(path: InflowPath, event: EventSpec, model: ScramjetModel) -> bool:
    """Whether the path drives the monitored Mach to/below the threshold.

    Integrates with uniform stepping on the optimization grid; solver
    failures propagate as exceptions.
    """
    event.check_horizon(model.disc)
    res = simulate_paths(model, path.coarse[None], path.m, stepping="uniform",
                         mach_threshold=event.mach_threshold,
                         monitor_cell=event.monitor_cell)
    if res.invalid[0]:
        raise InvalidStateError("state went invalid while testing the event",
                                time=float(res.invalid_time[0]))
    if res.max_cfl[0] > 1.0:
        raise CflInstabilityError(
            f"CFL reached {res.max_cfl[0]:.3f} > 1 while testing the event")
    return bool(res.crossed[0])


@dataclass
class MinimizeOptions:
    """Tuning knobs of the constrained search (defaults follow the build spec)."""

    beta: float = 200.0              # soft-min sharpness of the smoothed phase
    fd_step: float = 1e-3            # forward-difference step, units of u0
    bracket: tuple = (0.3, 1.0)      # ramp-terminal bisection bracket, units of u0
    bisect_iters: int = 40
    maxiter_smooth: int = 60
    maxiter_polish: int = 40
    ftol: float = 1e-10              # SLSQP objective precision goal
    stall_rel: float = 1e-6          # declared converged when the objective
    stall_span: int = 3              # moves < stall_rel over this many iterates
    residual_tol: float = 1e-6       # and the constraint residual is below this
    bounds: tuple = (0.05, 1.3)      # knot bounds, units of u0


@dataclass
class ActionResult:
    """Outcome of `minimize_action`."""

    minimizer: InflowPath
    value: float
    iterations: int
    feasible: bool
    residual: float        # min-monitored-Mach minus threshold (<= 0 when feasible)
    trace: list = field(default_factory=list)
    message: str = ""
    n_pde_runs: int = 0
    failed_runs: int = 0

    def to_json_dict(self) -> dict:
        return {
            "value": self.value,
            "coarse_path": [float(v) for v in self.minimizer.coarse],
            "iterations": self.iterations,
            "feasible": self.feasible,
            "residual": self.residual,
        }


class _MinMachEvaluator:
    """Batched PDE evaluations of the time-minimum monitored Mach number.

    Evaluates stencils of coarse paths in one solver batch and caches by the
    free-knot vector.  Rows whose run fails (invalid state or CFL above 1)
    get a large sentinel so the search is pushed away from them; every
    successful row is screened against the exact event so the best truly
    feasible iterate is never lost.
    """

    PENALTY = 50.0

    def __init__(self, model: ScramjetModel, event: EventSpec, noise: NoiseModel,
                 m: int, beta: float):
        self.model = model
        self.event = event
        self.noise = noise
        self.m = m
        self.beta = beta
        self.u0 = model.flow.u0
        self.cache = {}
        self.n_runs = 0
        self.failed = 0
        self.best_feasible = None  # (rate value, free-knot vector)

    def _rate_of(self, x: np.ndarray) -> float:
        md = self.m * self.model.disc.dt_uniform
        d = np.diff(np.concatenate(([self.u0], x)))
        return float(np.sum(d * d) / (2.0 * self.noise.sigma_u**2 * md))

    def _evaluate_batch(self, xs: np.ndarray) -> np.ndarray:
        """xs: (B, n_tilde) free knots -> rows (min_m, soft_m)."""
        b = xs.shape[0]
        coarse = np.concatenate([np.full((b, 1), self.u0), xs], axis=1)
        res = simulate_paths(self.model, coarse, self.m, stepping="uniform",
                             mach_threshold=self.event.mach_threshold,
                             monitor_cell=self.event.monitor_cell,
                             record_m1=True)
        self.n_runs += b
        series = res.m1_series[:, 1:]
        out = np.empty((b, 2))
        for i in range(b):
            bad = res.invalid[i] or res.max_cfl[i] > 1.0
            if bad:
                self.failed += 1
                out[i] = self.PENALTY, self.PENALTY
                continue
            row = series[i]
            mn = row.min()
            soft = mn - math.log(np.exp(-self.beta * (row - mn)).sum()) / self.beta
            out[i] = mn, soft
            if mn <= self.event.mach_threshold:
                val = self._rate_of(xs[i])
                if self.best_feasible is None or val < self.best_feasible[0]:
                    self.best_feasible = (val, xs[i].copy())
        return out

    def lookup(self, x: np.ndarray) -> np.ndarray:
        key = x.tobytes()
        if key not in self.cache:
            self.cache[key] = self._evaluate_batch(x[None])[0]
        return self.cache[key]

    def min_mach(self, x: np.ndarray) -> float:
        return float(self.lookup(x)[0])

    def soft_min_mach(self, x: np.ndarray) -> float:
        return float(self.lookup(x)[1])

    def fd_gradient(self, x: np.ndarray, step: float, smooth: bool) -> np.ndarray:
        """Forward differences over the free knots, one solver batch."""
        base = self.lookup(x)
        stencil = x[None] + step * np.eye(x.size)
        vals = self._evaluate_batch(stencil)
        col = 1 if smooth else 0
        return (vals[:, col] - base[col]) / step


def _bisect_ramp_terminal(ev: _MinMachEvaluator, options: MinimizeOptions) -> np.ndarray:
    """Largest ramp terminal value (least severe dip) still triggering the event.

    Returns the free knots of that ramp.  Ramps so severe that the run is
    declared infeasible by instability sit below the trigger zone and are
    bisected past; raises InfeasibilityError when no stable triggering ramp
    exists in the bracket.
    """
    u0 = ev.u0
    n_tilde = ev.model.disc.n_steps // ev.m

    def ramp_knots(u_end):
        return np.linspace(u0, u_end, n_tilde + 1)[1:]

    lo, hi = options.bracket[0] * u0, options.bracket[1] * u0
    th = ev.event.mach_threshold
    if ev.min_mach(ramp_knots(hi)) <= th:
        return ramp_knots(hi)
    v_lo = ev.min_mach(ramp_knots(lo))
    if th < v_lo < ev.PENALTY:
        raise InfeasibilityError(
            f"no ramp terminal in [{lo:.1f}, {hi:.1f}] m/s triggers the event")
    best = None
    for _ in range(options.bisect_iters):
        mid = 0.5 * (lo + hi)
        v = ev.min_mach(ramp_knots(mid))
        if v <= th:
            lo = mid
            best = mid if best is None else max(best, mid)
        elif v >= ev.PENALTY:
            lo = mid  # unstable: more severe than any trigger, go milder
        else:
            hi = mid
    if best is None:
        raise InfeasibilityError(
            "every triggering ramp in the bracket is unstable at the uniform step")
    return ramp_knots(best)


def _restore_feasibility(ev: _MinMachEvaluator, x: np.ndarray,
                         iters: int = 60) -> np.ndarray:
    """Scale the deviation from u0 up until the exact event holds."""
    th = ev.event.mach_threshold
    if ev.min_mach(x) <= th:
        return x
    dev = x - ev.u0
    hi = 1.0
    for _ in range(20):
        hi *= 1.05
        if ev.min_mach(ev.u0 + hi * dev) <= th:
            break
    else:
        raise InfeasibilityError("could not restore feasibility by scaling")
    lo = 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ev.min_mach(ev.u0 + mid * dev) <= th:
            hi = mid
        else:
            lo = mid
    return ev.u0 + hi * dev


def minimize_action(event: EventSpec, model: ScramjetModel, noise: NoiseModel, *,
                    n_tilde: int = 20, init: InflowPath | None = None,
                    options: MinimizeOptions | None = None) -> ActionResult:
    """Minimize the rate function over coarse paths triggering the event.

    Pipeline: (1) bisection for the least severe linear ramp that triggers
    the event, used as the initial guess unless `init` is given; (2) a
    quasi-Newton SQP pass on a soft-min smoothed constraint; (3) a polishing
    pass on the exact nonsmooth constraint; (4) feasibility restoration, so
    the returned minimizer always satisfies the event exactly.  Constraint
    gradients are forward differences over the coarse knots, evaluated as
    one concurrent solver batch per stencil.
    """
    options = options or MinimizeOptions()
    event.check_horizon(model.disc)
    if model.disc.n_steps % n_tilde != 0:
        raise ValueError("n_tilde must divide the number of uniform steps")
    m = model.disc.n_steps // n_tilde
    dt = model.disc.dt_uniform
    u0 = model.flow.u0
    md = m * dt
    c_i = 1.0 / (2.0 * noise.sigma_u**2 * md)
    ev = _MinMachEvaluator(model, event, noise, m, options.beta)
    th = event.mach_threshold

    def rate(x):
        d = np.diff(np.concatenate(([u0], x)))
        return c_i * float(np.sum(d * d))

    def rate_grad(x):
        d = np.diff(np.concatenate(([u0], x)))
        g = np.empty_like(x)
        g[:-1] = 2.0 * c_i * (d[:-1] - d[1:])
        g[-1] = 2.0 * c_i * d[-1]
        return g

    # scaled variables y = x / u0
    y_bounds = [(options.bounds[0], options.bounds[1])] * n_tilde
    fd_step_y = options.fd_step  # equals options.fd_step * u0 in speed units

    def obj(y):
        return rate(y * u0)

    def obj_grad(y):
        return rate_grad(y * u0) * u0

    trace = []
    iterations = 0

    def run_slsqp(y_start, smooth, maxiter):
        nonlocal iterations
        col = "soft" if smooth else "exact"

        def cons(y):
            v = ev.soft_min_mach(y * u0) if smooth else ev.min_mach(y * u0)
            return np.array([th - v])

        def cons_jac(y):
            g = ev.fd_gradient(y * u0, fd_step_y * u0, smooth) * u0
            return -g[None, :]

        res = optimize.minimize(
            obj, y_start, jac=obj_grad, method="SLSQP",
            bounds=y_bounds,
            constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
            callback=lambda y: trace.append(obj(y)),
            options={"maxiter": maxiter, "ftol": options.ftol},
        )
        iterations += res.nit
        return res.x

    if init is not None:
        if init.n_tilde != n_tilde or init.m != m or init.dt != dt:
            raise ValueError("init path grid mismatch")
        if init.coarse[0] != u0:
            raise ValueError("init path must start at u0")
        x0 = init.coarse[1:].copy()
        if ev.min_mach(x0) > th:
            raise InfeasibilityError("supplied init does not trigger the event")
    else:
        x0 = _bisect_ramp_terminal(ev, options)

    y_smooth = run_slsqp(x0 / u0, smooth=True, maxiter=options.maxiter_smooth)
    y_polish = run_slsqp(y_smooth, smooth=False, maxiter=options.maxiter_polish)

    # candidates: the polished point (restored to exact feasibility if it
    # drifted out) and the best exactly feasible iterate seen anywhere
    candidates = []
    x_p = y_polish * u0
    if ev.min_mach(x_p) <= th:
        candidates.append(x_p)
    else:
        try:
            candidates.append(_restore_feasibility(ev, x_p))
        except InfeasibilityError:
            pass
    if ev.best_feasible is not None:
        candidates.append(ev.best_feasible[1])
    if not candidates:
        raise InfeasibilityError("search produced no feasible iterate")
    x_cand = min(candidates, key=rate)

    residual = ev.min_mach(x_cand) - th
    value = rate(x_cand)
    feasible = residual <= 0.0

    stalled = (
        len(trace) >= options.stall_span + 1
        and abs(trace[-1] - trace[-1 - options.stall_span])
        <= options.stall_rel * max(abs(trace[-1]), 1e-30)
    )
    if feasible and (stalled or abs(residual) <= options.residual_tol):
        message = "converged"
    elif feasible:
        message = "stagnation: returning best feasible iterate"
    else:
        message = "failed to restore feasibility"

    path = InflowPath(np.concatenate(([u0], x_cand)), m, dt)
    return ActionResult(
        minimizer=path, value=value, iterations=iterations,
        feasible=feasible, residual=float(residual), trace=trace,
        message=message, n_pde_runs=ev.n_runs, failed_runs=ev.failed,
    )
