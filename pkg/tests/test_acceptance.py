"""End-to-end acceptance criteria.

Each test prints one `ACCEPTANCE <n> <PASS|FAIL>` line (run with `-s` to see
them live) and asserts the criterion at its stated tolerance.  Optimization
results are cached and shared across criteria, so the module costs roughly
a dozen full-scale optimizations plus the Monte Carlo batches.
"""

import math

import numpy as np
import pytest

from conftest import PAPER_SEED, make_model
from unstart.engine import EngineGeometry, FreeStream, FuelSchedule, GasModel
from unstart.ldp import (
    EventSpec,
    InflowPath,
    NoiseModel,
    is_unstart,
    minimize_action,
    rate_discrete,
    subsonic_bound,
)
from unstart.sampling import (
    SampleBatchSpec,
    UnstartEvent,
    estimate_is,
    estimate_mc,
    likelihood_ratio,
    oracle_subsonic_event,
    sample_path_p,
    sample_path_q,
)
from unstart.solver import (
    Discretization,
    ScramjetModel,
    llf_flux,
    physical_flux,
    simulate,
    simulate_paths,
    spin_up,
    step,
)

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

U0 = 1300.0
FLOW = FreeStream()
NOISE = NoiseModel()
GRID = dict(n_tilde=20, m=500, dt=1e-6)

_CACHE = {}


def optimum(cycle="short", threshold=1.0, theta_c=7.5, n_tilde=20):
    key = (cycle, threshold, theta_c, n_tilde)
    if key not in _CACHE:
        model = make_model(cycle, theta_c=theta_c)
        res = minimize_action(EventSpec(threshold), model, NOISE,
                              n_tilde=n_tilde)
        _CACHE[key] = res
    return _CACHE[key]


def report(n, ok, detail):
    print(f"\nACCEPTANCE {n} {'PASS' if ok else 'FAIL'} - {detail}")
    return ok


def bound_value(level=1.0, n_tilde=20):
    _, value = subsonic_bound(NOISE, FLOW, n_tilde=n_tilde,
                              m=10_000 // n_tilde, dt=1e-6, level=level)
    return value


class TestAcceptance:
    def test_1_continuum_bound_exact(self):
        path = InflowPath.ramp(U0, 650.0, **GRID)
        got = rate_discrete(path, NOISE)
        expected = U0**2 / (8.0 * NOISE.sigma_u**2 * path.horizon)
        rel = abs(got - expected) / expected
        ok = rel < 1e-10 and abs(expected - 0.21125) < 1e-10
        assert report(1, ok, f"ramp action {got:.12f} vs u0^2/(8 su^2 T) "
                             f"= {expected:.12f} (rel {rel:.2e})")

    def test_2_fuel_cycle_optima(self):
        targets = {"short": 0.21504, "long": 0.15603}
        msgs, ok = [], True
        for cycle, ref in targets.items():
            res = optimum(cycle)
            dev = (res.value - ref) / ref
            ok &= abs(dev) <= 0.05 and res.feasible
            msgs.append(f"{cycle}={res.value:.5f} (ref {ref}, {dev:+.2%})")
        assert report(2, ok, "; ".join(msgs))

    def test_3_threshold_study(self):
        short = [optimum("short", th).value for th in (0.8, 1.0, 1.2)]
        long_ = [optimum("long", th).value for th in (0.8, 1.0, 1.2)]
        decreasing = all(a > b for a, b in zip(short, short[1:])) and all(
            a > b for a, b in zip(long_, long_[1:]))
        refs = (0.26547, 0.21504, 0.13667)
        short_ok = all(abs(v - r) / r <= 0.05 for v, r in zip(short, refs))
        bounds = [bound_value(level) for level in (0.8, 1.0, 1.2)]
        bound_ok = all(abs(b - r) <= 1e-4
                       for b, r in zip(bounds, (0.3042, 0.21125, 0.1352)))
        ok = decreasing and short_ok and bound_ok
        assert report(
            3, ok,
            f"short={['%.5f' % v for v in short]} long={['%.5f' % v for v in long_]} "
            f"decreasing={decreasing} short_in_5pct={short_ok} "
            f"bounds={['%.5f' % b for b in bounds]} bounds_1e-4={bound_ok}")

    def test_4_geometry_study(self):
        refs = {
            ("short", 2.5): 0.088937, ("short", 7.5): 0.21504,
            ("short", 12.0): 0.21505,
            ("long", 2.5): 0.046034, ("long", 7.5): 0.15603,
            ("long", 12.0): 0.2147,
        }
        values, msgs, ok = {}, [], True
        for (cycle, tc), ref in refs.items():
            v = optimum(cycle, theta_c=tc).value
            values[(cycle, tc)] = v
            dev = (v - ref) / ref
            inside = abs(dev) <= 0.10
            ok &= inside
            msgs.append(f"{cycle}/tc{tc}={v:.5f} ({dev:+.1%}{'' if inside else ' OUT'})")
        for cycle in ("short", "long"):
            seq = [values[(cycle, tc)] for tc in (2.5, 7.5, 12.0)]
            mono = seq[0] <= seq[1] <= seq[2]
            ok &= mono
            msgs.append(f"{cycle} monotone={mono}")
        assert report(4, ok, "; ".join(msgs))

    def test_5_resolution_study(self):
        msgs, ok = [], True
        for cycle in ("short", "long"):
            v20 = optimum(cycle, n_tilde=20).value
            v40 = optimum(cycle, n_tilde=40).value
            rel = abs(v40 - v20) / v20
            ok &= rel < 0.01
            msgs.append(f"{cycle}: N20={v20:.5f} N40={v40:.5f} rel={rel:.4%}")
        assert report(5, ok, "; ".join(msgs))

    def test_6_deterministic_operability(self):
        msgs, ok = [], True
        for cycle in ("short", "long"):
            rec = simulate(make_model(cycle), U0, stepping="uniform")
            fine = rec.unstart_time is None and rec.min_m1 > 1.0
            ok &= fine
            msgs.append(f"{cycle} constant-inflow min_M1={rec.min_m1:.3f}")

        # steady-fueling operability threshold by bisection
        geom = EngineGeometry()

        def unstarts(phi):
            sched = FuelSchedule(phi=phi, tau=1.0, burst=1.0)
            model = ScramjetModel(GasModel(), geom, sched, FLOW,
                                  Discretization.for_geometry(geom, 100, 1e-6,
                                                              10_000))
            return simulate(model, U0, stepping="adaptive").unstart_time is not None

        lo, hi = 0.05, 3.0
        if unstarts(lo) or not unstarts(hi):
            phi_star = float("nan")
        else:
            for _ in range(14):
                mid = 0.5 * (lo + hi)
                if unstarts(mid):
                    hi = mid
                else:
                    lo = mid
            phi_star = 0.5 * (lo + hi)
        in_band = 0.15 <= phi_star <= 0.35
        ok &= in_band
        msgs.append(f"steady-fueling phi*={phi_star:.3f} in [0.15,0.35]={in_band}")
        assert report(6, ok, "; ".join(msgs))

    def test_7_estimator_scales(self):
        model = make_model("short")
        center = optimum("short").minimizer
        event = UnstartEvent(model, EventSpec(1.0))

        def run(kind, epsilon, n):
            spec = SampleBatchSpec(
                event=event, noise=NoiseModel(epsilon=epsilon), n_samples=n,
                base_seed=PAPER_SEED, estimator=kind,
                center=center if kind == "is" else None, u0=U0, **GRID)
            return estimate_mc(spec) if kind == "mc" else estimate_is(spec)

        msgs, ok = [], True
        reports = {(k, e): run(k, e, 10_000)
                   for e in (0.4, 0.3, 0.2) for k in ("mc", "is")}

        mc04 = reports[("mc", 0.4)].p_hat
        is02 = reports[("is", 0.2)].p_hat
        mc_ok = 10**-1.5 <= mc04 <= 10**-0.5
        is_ok = 10**-3.5 <= is02 <= 10**-2.5
        ok &= mc_ok and is_ok
        msgs.append(f"MC(eps=.4,J=1e4)={mc04:.3e} O(1e-1)={mc_ok}")
        msgs.append(f"IS(eps=.2,J=1e4)={is02:.3e} O(1e-3)={is_ok}")

        factors = []
        for eps in (0.4, 0.3, 0.2):
            mc, is_ = reports[("mc", eps)], reports[("is", eps)]
            factors.append((mc.std_j / is_.std_j) ** 2)
        mono = factors[0] < factors[1] < factors[2]
        big = factors[2] > 20.0
        ok &= mono and big
        msgs.append("variance-reduction factors "
                    + "/".join(f"{f:.1f}" for f in factors)
                    + f" monotone={mono} >20@0.2={big}")

        for eps in (0.4, 0.3):
            mc = run("mc", eps, 1000)
            is_ = run("is", eps, 1000)
            overlap = mc.ci99[0] <= is_.ci99[1] and is_.ci99[0] <= mc.ci99[1]
            ordered = is_.std_j <= mc.std_j
            ok &= overlap and ordered
            msgs.append(f"desk eps={eps}: overlap={overlap} StdIS<=StdMC={ordered}")
        assert report(7, ok, "; ".join(msgs))

    def test_8_property_suite(self):
        msgs, ok = [], True

        # flux consistency on randomized valid states
        rng = np.random.default_rng(10)
        rho = rng.uniform(0.05, 2.0, 64)
        u = rng.uniform(-700, 1800, 64)
        p = rng.uniform(1e3, 3e5, 64)
        w = np.stack([rho, rho * u, p / 0.4 + 0.5 * rho * u**2])
        gas = GasModel()
        consistent = np.array_equal(llf_flux(w, w, gas), physical_flux(w, gas))
        ok &= consistent
        msgs.append(f"flux-consistency={consistent}")

        # uniform state is an exact fixed point in a flat duct
        geom = EngineGeometry(theta_i_deg=0, theta_c_deg=0, theta_e_deg=0)
        model = ScramjetModel(gas, geom, FuelSchedule(), FLOW,
                              Discretization.for_geometry(geom, 100, 1e-6, 100))
        fld = model.uniform_field(U0)
        stepped = step(fld, U0, 1e-6, 0.7e-3, model)
        fixed = np.array_equal(stepped.w, fld.w)
        ok &= fixed
        msgs.append(f"uniform-fixed-point={fixed}")

        # CFL defining identity on an adaptive run
        rec = simulate(make_model("short"), U0, stepping="adaptive",
                       record_steps=True)
        ratio = rec.step_sizes[:-1] * rec.step_speeds[:-1] / 0.007
        cfl_ok = np.allclose(ratio, 0.8, rtol=1e-12)
        ok &= cfl_ok
        msgs.append(f"cfl-identity={cfl_ok}")

        # rate-function quadratic scaling
        base = InflowPath(U0 + np.concatenate([[0], rng.normal(0, 90, 20)]),
                          500, 1e-6)
        scaled = InflowPath(U0 + 1.7 * (base.coarse - U0), 500, 1e-6)
        s2 = math.isclose(rate_discrete(scaled, NOISE),
                          1.7**2 * rate_discrete(base, NOISE), rel_tol=1e-12)
        ok &= s2
        msgs.append(f"rate-s2-scaling={s2}")

        # weight normalization: two-knot quadrature oracle ...
        from scipy import integrate
        from scipy.stats import norm
        n_tilde, m, dt = 2, 5000, 1e-6
        noise = NoiseModel(epsilon=0.4)
        s = noise.epsilon * noise.sigma_u * math.sqrt(m * dt)
        a = 650.0
        center = InflowPath.ramp(U0, a, n_tilde, m, dt)
        c1, c2 = center.coarse[1], center.coarse[2]
        p_first = norm.cdf((a - U0) / s)
        tail, _ = integrate.quad(
            lambda z1: norm.pdf(z1, scale=s) * norm.cdf((a - U0 - z1) / s),
            a - U0, 14 * s, epsabs=1e-13, epsrel=1e-12)
        e_p = p_first + tail

        def integrand(z2, z1):
            coarse = np.array([U0, c1 + z1, c2 + z1 + z2])
            w = likelihood_ratio(InflowPath(coarse, m, dt), center, noise)
            return w * norm.pdf(z1, scale=s) * norm.pdf(z2, scale=s)

        lo, hi = -14 * s, 14 * s
        part1, _ = integrate.dblquad(integrand, lo, a - c1, lo, hi,
                                     epsabs=1e-11, epsrel=1e-11)
        part2, _ = integrate.dblquad(integrand, a - c1, hi, lo,
                                     lambda z1: a - c2 - z1,
                                     epsabs=1e-11, epsrel=1e-11)
        quad_ok = abs((part1 + part2) - e_p) < 1e-8
        ok &= quad_ok
        msgs.append(f"weight-quadrature-1e-8={quad_ok}")

        # ... and the 20-knot sampled normalization within 4 standard errors
        noise20 = NoiseModel(epsilon=0.4)
        center20 = InflowPath.ramp(U0, 1100.0, **GRID)
        rng2 = np.random.default_rng(123)
        du_c = np.diff(center20.coarse)
        z = rng2.standard_normal((1_000_000, 20)) * (
            noise20.epsilon * noise20.sigma_u * math.sqrt(0.0005))
        expo = ((z + du_c) ** 2 - z**2).sum(axis=1) / (
            -2 * noise20.epsilon**2 * noise20.sigma_u**2 * 0.0005)
        wts = np.exp(expo)
        var = math.exp(2 * rate_discrete(center20, noise20)
                       / noise20.epsilon**2) - 1
        norm_ok = abs(wts.mean() - 1) < 4 * math.sqrt(var / wts.size)
        ok &= norm_ok
        msgs.append(f"weight-normalization-4se={norm_ok}")

        # Q = P degeneracy, bitwise
        const = InflowPath.constant(U0, **GRID)
        p_path = sample_path_p(np.random.default_rng(5), noise20, u0=U0, **GRID)
        q_path = sample_path_q(np.random.default_rng(5), noise20, const)
        degen = np.array_equal(p_path.coarse, q_path.coarse)
        ok &= degen
        msgs.append(f"QP-degeneracy={degen}")

        # seed reproducibility across chunk widths
        event = UnstartEvent(make_model("short"), EventSpec(1.0))
        reps = []
        for chunk in (5, 40):
            spec = SampleBatchSpec(event=event, noise=NoiseModel(epsilon=0.35),
                                   n_samples=40, base_seed=PAPER_SEED,
                                   estimator="mc", u0=U0, chunk=chunk, **GRID)
            reps.append(estimate_mc(spec))
        seeds_ok = (reps[0].p_hat == reps[1].p_hat
                    and reps[0].std_j == reps[1].std_j
                    and reps[0].hits == reps[1].hits)
        ok &= seeds_ok
        msgs.append(f"seed-bit-exact={seeds_ok}")

        # feasibility of every minimizer produced so far
        feas = all(r.feasible and r.residual <= 0.0 for r in _CACHE.values())
        feas &= all(
            is_unstart(r.minimizer, EventSpec(key[1]),
                       make_model(key[0], theta_c=key[2]))
            for key, r in list(_CACHE.items())[:3])
        ok &= feas
        msgs.append(f"minimizer-feasibility={feas}")

        assert report(8, ok, "; ".join(msgs))

    def test_9_laplace_trend(self):
        disc = Discretization.for_geometry(EngineGeometry(), 100, 1e-6, 10_000)
        target = U0**2 / (8.0 * NOISE.sigma_u**2 * disc.horizon)
        metrics = []
        for eps, n in ((0.4, 100_000), (0.3, 200_000), (0.2, 400_000)):
            p = oracle_subsonic_event(NoiseModel(epsilon=eps), disc, u0=U0,
                                      n_samples=n, seed=PAPER_SEED)
            metrics.append(-eps**2 * math.log(p))
        mono = metrics[0] > metrics[1] > metrics[2] > target
        close = abs(metrics[2] - target) / target <= 0.35
        ok = mono and close
        assert report(
            9, ok,
            f"-eps^2 log P = {['%.4f' % v for v in metrics]} toward {target}; "
            f"monotone={mono} within35pct@0.2={close}")
