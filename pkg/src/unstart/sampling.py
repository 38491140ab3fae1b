"""Monte Carlo estimation of the event probability, basic and tilted.

Coarse inflow paths are Gaussian random walks; under the physical measure
they start at u0 with independent increments of standard deviation
eps*sigma_u*sqrt(m*dt).  The importance-sampling measure recenters the walk
on a given path (normally the minimum-action minimizer) and reweights each
sample by the exact density ratio of the two Gaussian path laws, written in
increment form:

    weight = exp( -(1/(2 eps^2 sigma_u^2 m dt))
                  * sum_n [ du_n^2 - (du_n - dc_n)^2 ] )

with du_n the sampled and dc_n the center increments.  Every sample owns a
counter-derived RNG stream, so estimates are bit-identical however the work
is chunked.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .ldp import EventSpec, InflowPath, NoiseModel
from .solver import ScramjetModel, simulate_paths

__all__ = [
    "SubsonicInflowEvent",
    "UnstartEvent",
    "SampleBatchSpec",
    "EstimatorReport",
    "sample_path_p",
    "sample_path_q",
    "likelihood_ratio",
    "estimate_mc",
    "estimate_is",
    "oracle_subsonic_event",
    "CI_MULTIPLIER",
]

CI_MULTIPLIER = 2.58  # numerical 99% confidence interval


@dataclass(frozen=True)
class UnstartEvent:
    """PDE event: monitored Mach dips to/below the threshold over the horizon."""

    model: ScramjetModel
    spec: EventSpec
    stepping: str = "adaptive"

    def evaluate(self, coarse: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows of `coarse` -> (indicator, indeterminate).

        A sample whose run fails after the threshold crossing keeps its
        (already established) indicator; one failing before any crossing is
        flagged indeterminate and never counted as an event.
        """
        self.spec.check_horizon(self.model.disc)
        res = simulate_paths(self.model, coarse, m, stepping=self.stepping,
                             mach_threshold=self.spec.mach_threshold,
                             monitor_cell=self.spec.monitor_cell,
                             stop_on_cross=True)
        indicator = res.crossed
        indeterminate = res.invalid & ~res.crossed
        return indicator, indeterminate


@dataclass(frozen=True)
class SubsonicInflowEvent:
    """Solver-free event on the walk itself: min over knots <= the target speed.

    Used as an analytically tractable validation target for the estimators.
    """

    u_target: float

    def evaluate(self, coarse: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
        indicator = coarse.min(axis=1) <= self.u_target
        return indicator, np.zeros(coarse.shape[0], dtype=bool)


@dataclass(frozen=True)
class SampleBatchSpec:
    """One estimation run.

    event     : UnstartEvent or SubsonicInflowEvent
    noise     : NoiseModel (epsilon is taken from here)
    n_tilde,m : coarse-path resolution; dt is the fine increment
    n_samples : J
    base_seed : root of the per-sample RNG streams
    estimator : "mc" | "is"
    center    : tilting center, required for "is"
    u0        : inflow starting value
    chunk     : solver batch width (performance only; results are identical)
    """

    event: object
    noise: NoiseModel
    n_tilde: int
    m: int
    dt: float
    n_samples: int
    base_seed: int
    estimator: str = "mc"
    center: InflowPath | None = None
    u0: float = 1300.0
    chunk: int = 1024

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("need at least one sample")
        if self.estimator not in ("mc", "is"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.estimator == "is":
            if self.center is None:
                raise ValueError("importance sampling requires a center path")
            if self.center.coarse[0] != self.u0:
                raise ValueError("center path must start at u0")
            if (self.center.n_tilde, self.center.m) != (self.n_tilde, self.m):
                raise ValueError("center path grid mismatch")
        model = getattr(self.event, "model", None)
        if model is not None and model.flow.u0 != self.u0:
            raise ValueError("spec.u0 disagrees with the event model free stream")


@dataclass
class EstimatorReport:
    """Estimate with its numerical error measures.

    ci99 is p_hat +- 2.58 std_j / sqrt(J); rel_err is std_j / p_hat.
    `suspect` marks runs with indeterminate (solver-failure) samples.
    """

    p_hat: float
    std_j: float
    ci99: tuple
    rel_err: float
    hits: int
    invalid: int
    n_samples: int
    epsilon: float
    estimator: str
    base_seed: int
    wall_time: float
    suspect: bool = False

    def to_json_dict(self) -> dict:
        """Numeric payload only (wall time stays out so reruns match bitwise)."""
        return {
            "p_hat": self.p_hat,
            "std_j": self.std_j,
            "ci99_lo": self.ci99[0],
            "ci99_hi": self.ci99[1],
            "rel_err": self.rel_err,
            "hits": self.hits,
            "invalid": self.invalid,
            "J": self.n_samples,
            "epsilon": self.epsilon,
            "estimator": self.estimator,
            "seed": self.base_seed,
            "suspect": self.suspect,
        }


def _stream(base_seed: int, j: int) -> np.random.Generator:
    """Per-sample generator; independent of scheduling by construction."""
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(j,)))


def _increments(base_seed: int, j0: int, count: int, n_tilde: int,
                step_std: float) -> np.ndarray:
    """Noise increments for samples j0..j0+count-1, one stream per sample."""
    out = np.empty((count, n_tilde))
    for i in range(count):
        out[i] = _stream(base_seed, j0 + i).standard_normal(n_tilde)
    out *= step_std
    return out


def _walk_from(start_values: np.ndarray, increments: np.ndarray) -> np.ndarray:
    coarse = np.empty((increments.shape[0], increments.shape[1] + 1))
    coarse[:, 0] = 0.0
    np.cumsum(increments, axis=1, out=coarse[:, 1:])
    coarse += start_values
    return coarse


def sample_path_p(rng: np.random.Generator, noise: NoiseModel, *, u0: float,
                  n_tilde: int, m: int, dt: float) -> InflowPath:
    """One coarse walk under the physical measure."""
    std = noise.epsilon * noise.sigma_u * np.sqrt(m * dt)
    z = rng.standard_normal(n_tilde) * std
    return InflowPath(_walk_from(np.full(n_tilde + 1, u0), z[None])[0], m, dt)


def sample_path_q(rng: np.random.Generator, noise: NoiseModel,
                  center: InflowPath) -> InflowPath:
    """One coarse walk under the tilted measure (recentered on `center`)."""
    std = noise.epsilon * noise.sigma_u * np.sqrt(center.m * center.dt)
    z = rng.standard_normal(center.n_tilde) * std
    coarse = _walk_from(center.coarse[None], z[None])[0]
    return InflowPath(coarse, center.m, center.dt)


def likelihood_ratio(path: InflowPath, center: InflowPath,
                     noise: NoiseModel) -> float:
    """Exact density ratio dP/dQ of the two Gaussian walk laws at `path`."""
    if (path.n_tilde, path.m, path.dt) != (center.n_tilde, center.m, center.dt):
        raise ValueError("path and center must share the coarse grid")
    if path.coarse[0] != center.coarse[0]:
        raise ValueError("path and center must share the starting value")
    return float(
        _weights(path.coarse[None], center.coarse,
                 noise.epsilon, noise.sigma_u, path.m * path.dt)[0]
    )


def _weights(coarse: np.ndarray, center: np.ndarray, epsilon: float,
             sigma_u: float, m_dt: float) -> np.ndarray:
    du = np.diff(coarse, axis=1)
    dc = np.diff(center)
    expo = (du * du - (du - dc) ** 2).sum(axis=1)
    expo /= -2.0 * epsilon**2 * sigma_u**2 * m_dt
    return np.exp(expo)


def _report(values: np.ndarray, hits: int, invalid: int, spec: SampleBatchSpec,
            wall: float) -> EstimatorReport:
    j = spec.n_samples
    p_hat = float(values.mean())
    std_j = float(values.std(ddof=1)) if j > 1 else 0.0
    half = CI_MULTIPLIER * std_j / np.sqrt(j)
    rel = std_j / p_hat if p_hat > 0 else np.inf
    return EstimatorReport(
        p_hat=p_hat, std_j=std_j, ci99=(p_hat - half, p_hat + half),
        rel_err=float(rel), hits=int(hits), invalid=int(invalid),
        n_samples=j, epsilon=spec.noise.epsilon, estimator=spec.estimator,
        base_seed=spec.base_seed, wall_time=wall, suspect=invalid > 0,
    )


def _run_batches(spec: SampleBatchSpec, center_values: np.ndarray):
    """Sample, evaluate and (for IS) weight all J paths, chunked."""
    noise = spec.noise
    step_std = noise.epsilon * noise.sigma_u * np.sqrt(spec.m * spec.dt)
    indicator = np.empty(spec.n_samples, dtype=bool)
    indeterminate = np.empty(spec.n_samples, dtype=bool)
    weights = np.empty(spec.n_samples)
    for j0 in range(0, spec.n_samples, spec.chunk):
        count = min(spec.chunk, spec.n_samples - j0)
        z = _increments(spec.base_seed, j0, count, spec.n_tilde, step_std)
        coarse = _walk_from(center_values, z)
        ind, bad = spec.event.evaluate(coarse, spec.m)
        sl = slice(j0, j0 + count)
        indicator[sl] = ind
        indeterminate[sl] = bad
        weights[sl] = _weights(coarse, center_values, noise.epsilon,
                               noise.sigma_u, spec.m * spec.dt)
    return indicator, indeterminate, weights


def estimate_mc(spec: SampleBatchSpec) -> EstimatorReport:
    """Basic Monte Carlo estimate P_hat = (1/J) sum 1_A(u~^j) under P.

    Indeterminate (solver-failure) samples contribute zero to the estimate,
    are excluded from `hits`, and mark the report as suspect.
    """
    if spec.estimator != "mc":
        raise ValueError("spec.estimator must be 'mc'")
    t0 = time.perf_counter()
    start = np.full(spec.n_tilde + 1, spec.u0)
    indicator, indeterminate, _ = _run_batches(spec, start)
    indicator &= ~indeterminate
    values = indicator.astype(float)
    return _report(values, indicator.sum(), indeterminate.sum(), spec,
                   time.perf_counter() - t0)


def estimate_is(spec: SampleBatchSpec) -> EstimatorReport:
    """Importance-sampling estimate P_hat = (1/J) sum 1_A(u~^j) w(u~^j) under Q."""
    if spec.estimator != "is":
        raise ValueError("spec.estimator must be 'is'")
    t0 = time.perf_counter()
    indicator, indeterminate, weights = _run_batches(spec, spec.center.coarse)
    indicator &= ~indeterminate
    values = np.where(indicator, weights, 0.0)
    return _report(values, indicator.sum(), indeterminate.sum(), spec,
                   time.perf_counter() - t0)


def oracle_subsonic_event(noise: NoiseModel, disc, *, u0: float,
                          level: float = 1.0, n_points: int | None = None,
                          n_samples: int = 10_000_000, seed: int = 2024,
                          chunk: int = 100_000) -> float:
    """Brute-force probability that the walk's running minimum reaches a level.

    The inflow walk is monitored at `n_points` uniform knots over the
    horizon (default: every solver step, the finest walk the model uses);
    pass the coarse resolution instead to match the sampled estimators.
    The continuous-time reflection bound 2*Phi((u_target-u0)/(eps sigma_u
    sqrt(T))) upper-bounds the result for any monitoring resolution.
    """
    if level > noise.mach_in0:
        return 1.0
    u_target = level * u0 / noise.mach_in0
    n_points = n_points or disc.n_steps
    step_std = noise.epsilon * noise.sigma_u * np.sqrt(disc.horizon / n_points)
    rng = np.random.default_rng(seed)
    block = max(1, min(n_points, 4_000_000 // chunk))
    hits = 0
    for j0 in range(0, n_samples, chunk):
        count = min(chunk, n_samples - j0)
        if u0 <= u_target:
            hits += count
            continue
        pos = np.zeros(count)  # walk relative to u0
        barrier = u_target - u0
        taken = 0
        while taken < n_points and pos.size:
            nb = min(block, n_points - taken)
            steps = rng.standard_normal((pos.size, nb))
            steps *= step_std
            np.cumsum(steps, axis=1, out=steps)
            steps += pos[:, None]
            below = steps.min(axis=1) <= barrier
            hits += below.sum()
            pos = steps[~below, -1]
            taken += nb
    return hits / n_samples


def reflection_bound(noise: NoiseModel, horizon: float, *, u0: float,
                     level: float = 1.0) -> float:
    """Continuous-monitoring crossing probability 2*Phi((u_t - u0)/(eps su sqrt(T)))."""
    u_target = level * u0 / noise.mach_in0
    return float(2.0 * ndtr((u_target - u0) / (noise.epsilon * noise.sigma_u
                                               * np.sqrt(horizon))))
