import math
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_model
from unstart.engine import EngineGeometry, FreeStream, FuelSchedule, GasModel
from unstart.solver import (
    CflInstabilityError,
    ConservedField,
    Discretization,
    InvalidStateError,
    ScramjetModel,
    adaptive_dt,
    llf_flux,
    mach,
    physical_flux,
    pressure,
    shock_location,
    simulate,
    simulate_paths,
    sound_speed,
    spin_up,
    step,
    thrust,
)

GAS = GasModel()
RHO0, U0, P0 = 0.159, 1300.0, 47842.0
E0 = P0 / 0.4 + 0.5 * RHO0 * U0**2  # 253960.0


def free_stream_state():
    return np.array([RHO0, RHO0 * U0, E0])


valid_states = st.tuples(
    st.floats(0.01, 5.0),      # rho
    st.floats(-800.0, 2000.0),  # u
    st.floats(1e3, 5e5),        # P
).map(lambda t: np.array([t[0], t[0] * t[1], t[2] / 0.4 + 0.5 * t[0] * t[1] ** 2]))


class TestStateFunctions:
    def test_pressure_roundtrip(self):
        assert E0 == pytest.approx(253960.0, abs=1e-9)
        assert pressure(RHO0, RHO0 * U0, E0, GAS) == pytest.approx(P0, rel=1e-13)

    def test_pressure_at_rest(self):
        assert pressure(1.0, 0.0, 1.0 / 0.4, GAS) == pytest.approx(1.0, rel=1e-14)

    def test_pressure_rejects_nonpositive_density(self):
        with pytest.raises(InvalidStateError):
            pressure(0.0, 1.0, 1.0, GAS)

    def test_zero_internal_energy_flagged(self):
        # P = 0 sits on the admissibility boundary
        w = np.array([1.0, 2.0, 2.0])  # E = rho u^2 / 2
        assert pressure(*w, GAS) == pytest.approx(0.0, abs=1e-14)
        with pytest.raises(InvalidStateError):
            sound_speed(*w, GAS)

    def test_mach_free_stream(self):
        m = mach(RHO0, RHO0 * U0, E0, GAS)
        assert m == pytest.approx(2.0030, abs=5e-5)
        assert m == pytest.approx(U0 / math.sqrt(1.4 * P0 / RHO0), rel=1e-13)

    def test_mach_trivial_points(self):
        assert mach(1.0, 0.0, 10.0, GAS) == 0.0
        c = math.sqrt(1.4 * 1.0 / 1.0)
        w = np.array([1.0, c, 1.0 / 0.4 + 0.5 * c**2])
        assert mach(*w, GAS) == pytest.approx(1.0, rel=1e-14)


class TestLlfFlux:
    def test_free_stream_flux(self):
        w = free_stream_state()
        f = llf_flux(w, w, GAS)
        np.testing.assert_allclose(
            f, [206.7, 316552.0, 392342600.0], rtol=1e-12)

    @given(valid_states)
    @settings(max_examples=200, deadline=None)
    def test_consistency(self, w):
        # equal states: the dissipation vanishes and F = f(w) exactly
        np.testing.assert_array_equal(llf_flux(w, w, GAS),
                                      physical_flux(w[:, None], GAS)[:, 0])

    def test_asymmetric_regression_value(self):
        # hand-evaluated fixture: right state differs in density only
        left = np.array([1.0, 500.0, 5.0e5])
        right = np.array([1.2, 500.0, 5.0e5])
        p_l = 0.4 * (5.0e5 - 0.5 * 500.0**2 / 1.0)
        p_r = 0.4 * (5.0e5 - 0.5 * 500.0**2 / 1.2)
        u_l, u_r = 500.0, 500.0 / 1.2
        a = max(abs(math.sqrt(1.4 * p_l / 1.0) + u_l),
                abs(math.sqrt(1.4 * p_r / 1.2) + u_r))
        f_l = np.array([500.0, 500.0 * u_l + p_l, (5.0e5 + p_l) * u_l])
        f_r = np.array([500.0, 500.0 * u_r + p_r, (5.0e5 + p_r) * u_r])
        expected = 0.5 * (f_l + f_r) - 0.5 * a * (right - left)
        np.testing.assert_allclose(llf_flux(left, right, GAS), expected, rtol=1e-14)

    def test_rejects_invalid(self):
        good = free_stream_state()
        bad = np.array([-0.1, 1.0, 1.0])
        with pytest.raises(InvalidStateError):
            llf_flux(good, bad, GAS)


class TestAdaptiveDt:
    def test_free_stream_value(self):
        kk = 101
        fld = ConservedField(np.repeat(free_stream_state()[:, None], kk, axis=1))
        h = adaptive_dt(fld, 0.007, GAS)
        c0 = math.sqrt(1.4 * P0 / RHO0)
        assert h == pytest.approx(0.8 * 0.007 / (c0 + U0), rel=1e-13)
        assert h == pytest.approx(2.873e-6, rel=1e-3)

    def test_linear_in_dx(self):
        fld = ConservedField(np.repeat(free_stream_state()[:, None], 7, axis=1))
        assert adaptive_dt(fld, 0.014, GAS) == pytest.approx(
            2 * adaptive_dt(fld, 0.007, GAS), rel=1e-14)

    def test_defining_identity(self):
        rng = np.random.default_rng(3)
        w = np.repeat(free_stream_state()[:, None], 9, axis=1)
        w[0] *= rng.uniform(0.8, 1.2, 9)
        fld = ConservedField(w)
        h = adaptive_dt(fld, 0.007, GAS)
        smax = np.max(np.abs(fld.sound_speed(GAS) + fld.velocity()))
        assert h * smax / 0.007 == pytest.approx(0.8, rel=1e-13)


@pytest.fixture(scope="module")
def flat_model():
    """All angles zero, so the uniform free stream is an exact equilibrium."""
    gas = GasModel()
    geom = EngineGeometry(theta_i_deg=0.0, theta_c_deg=0.0, theta_e_deg=0.0)
    disc = Discretization.for_geometry(geom, 100, 1e-6, 10_000)
    return ScramjetModel(gas, geom, FuelSchedule(), FreeStream(), disc)


class TestStep:
    def test_uniform_state_is_fixed_point_in_flat_duct(self, flat_model):
        fld = flat_model.uniform_field(U0)
        new = step(fld, U0, 1e-6, 0.7e-3, flat_model)  # off-phase instant
        np.testing.assert_array_equal(new.w, fld.w)

    def test_fuel_touches_only_combustor_energy(self, flat_model):
        fld = flat_model.uniform_field(U0)
        new = step(fld, U0, 1e-6, 0.0, flat_model)  # burst instant
        np.testing.assert_array_equal(new.w[0], fld.w[0])
        np.testing.assert_array_equal(new.w[1], fld.w[1])
        kk = flat_model.disc.k_cells
        mid = flat_model.disc.midpoints
        heated = (mid > 0.0) & (mid <= flat_model.geom.l_c)
        de = new.w[2, :kk] - fld.w[2, :kk]
        assert np.all(de[heated & (np.arange(kk) >= 1)] > 0.0)
        assert np.all(de[~heated] == 0.0)

    def test_invalid_state_error_carries_cell_and_time(self, model_short):
        # valid input whose update collapses: a thin counterflowing jet
        # drains its downstream neighbor in one step
        fld = spin_up(model_short).copy()
        fld.w[0, 50] = 0.02
        fld.w[1, 50] = -0.02 * 2500.0
        fld.w[2, 50] = P0 / 0.4 + 0.5 * 0.02 * 2500.0**2
        assert pressure(*fld.w[:, 50], GAS) > 0.0
        with pytest.raises(InvalidStateError) as err:
            step(fld, U0, 2.8e-6, 0.0, model_short)
        assert err.value.cell is not None
        assert err.value.time == pytest.approx(2.8e-6)


class TestSpinUp:
    def test_flat_duct_equilibrium_is_free_stream(self, flat_model):
        eq = spin_up(flat_model)
        np.testing.assert_allclose(eq.w, flat_model.uniform_field(U0).w, rtol=1e-9)

    def test_default_equilibrium_supersonic(self, model_short):
        eq = spin_up(model_short)
        assert eq.mach(GAS).min() > 1.0

    def test_stationarity_under_one_step(self, model_short):
        eq = spin_up(model_short)
        h = adaptive_dt(eq, model_short.disc.dx, GAS)
        new = step(ConservedField(eq.w.copy()), U0, h, 0.0, model_short,
                   fuel_on=False)
        rel = np.max(np.abs(new.w - eq.w) / np.abs(eq.w))
        assert rel < 1e-10

    def test_idempotent(self, model_short):
        eq = spin_up(model_short)
        eq2 = spin_up(model_short)
        assert eq2 is eq  # cached fixed point


class TestSimulate:
    def test_constant_inflow_no_unstart_short(self, model_short):
        rec = simulate(model_short, U0, stepping="uniform")
        assert rec.min_m1 > 1.0
        assert rec.unstart_time is None
        assert rec.max_cfl < 1.0

    def test_constant_inflow_no_unstart_long(self, model_long):
        rec = simulate(model_long, U0, stepping="uniform")
        assert rec.min_m1 > 1.0
        assert rec.unstart_time is None

    def test_subsonic_inflow_unstarts_quickly(self, model_short):
        # the step jump at t=0 drives fast transients, so CFL-adaptive
        u_sub = 0.99 * math.sqrt(1.4 * P0 / RHO0)
        rec = simulate(model_short, u_sub, stepping="adaptive")
        assert rec.min_m1 <= 1.0
        assert rec.unstart_time is not None and rec.unstart_time < 0.002

    def test_determinism(self, model_short):
        ramp = np.linspace(U0, 700.0, 21)
        r1 = simulate_paths(model_short, ramp[None], 500, stepping="adaptive")
        r2 = simulate_paths(model_short, ramp[None], 500, stepping="adaptive")
        assert r1.min_m1[0] == r2.min_m1[0]
        np.testing.assert_array_equal(r1.final_w, r2.final_w)

    def test_batch_layout_independence(self, model_short):
        ramps = np.linspace(np.full(5, U0), [640, 660, 680, 700, 720], 21).T.copy()
        whole = simulate_paths(model_short, ramps, 500, stepping="adaptive")
        singles = [simulate_paths(model_short, ramps[i][None], 500,
                                  stepping="adaptive") for i in range(5)]
        for i, single in enumerate(singles):
            assert whole.min_m1[i] == single.min_m1[0]
            assert whole.crossed[i] == single.crossed[0]

    def test_no_nan_in_records(self, model_short):
        rec = simulate(model_short, U0, stepping="adaptive",
                       record_history=True, history_stride=50)
        assert np.isfinite(rec.min_m1)
        assert np.isfinite(rec.mach_history).all()
        assert np.isfinite(rec.thrust_history).all()

    def test_adaptive_cfl_identity(self, model_short):
        # every accepted step satisfies h max|c+u|/dx = 0.8 exactly, except
        # the final step clamped to land on the horizon
        rec = simulate(model_short, U0, stepping="adaptive", record_steps=True)
        ratio = rec.step_sizes * rec.step_speeds / model_short.disc.dx
        full = ratio[:-1]
        np.testing.assert_allclose(full, 0.8, rtol=1e-12)
        assert ratio[-1] <= 0.8 * (1 + 1e-12)

    def test_uniform_cfl_monitor(self, model_short):
        rec = simulate(model_short, U0, stepping="uniform", record_steps=True)
        assert rec.n_steps == model_short.disc.n_steps
        expected = model_short.disc.dt_uniform * rec.step_speeds.max() / model_short.disc.dx
        assert rec.max_cfl == pytest.approx(expected, rel=1e-12)

    def test_backend_agreement(self, model_short):
        # compiled kernel vs numpy reference on a short horizon
        model = make_model("short", n_steps=800)
        ramp = np.linspace(U0, 900.0, 21)[None]
        fast = simulate_paths(model, ramp, 40, stepping="uniform")
        os.environ["UNSTART_NO_NUMBA"] = "1"
        try:
            ref = simulate_paths(model, ramp, 40, stepping="uniform")
        finally:
            del os.environ["UNSTART_NO_NUMBA"]
        assert fast.min_m1[0] == pytest.approx(ref.min_m1[0], rel=1e-12)
        np.testing.assert_allclose(fast.final_w, ref.final_w, rtol=1e-10)


class TestShockLocation:
    def test_idle_engine(self, model_short):
        m = np.full(101, 2.0)
        assert shock_location(m, model_short) == 0.0

    def test_failed_engine(self, model_short):
        m = np.full(101, 2.0)
        mid = model_short.disc.midpoints
        m[:100][mid <= 0.0] = 0.5
        assert shock_location(m, model_short) == -0.5

    def test_partial_shock(self, model_short):
        m = np.full(101, 0.5)
        mid = model_short.disc.midpoints
        m[:100][mid <= -0.25] = 2.0
        got = shock_location(m, model_short)
        assert abs(got - (-0.25)) <= model_short.disc.dx / 2
        assert got == mid[mid <= -0.25].max()


class TestThrust:
    def test_symmetric_cancellation(self):
        # equal end areas and identical states cancel exactly
        gas = GasModel()
        geom = EngineGeometry(theta_i_deg=0.0, theta_c_deg=0.0, theta_e_deg=0.0)
        disc = Discretization.for_geometry(geom, 100, 1e-6, 100)
        model = ScramjetModel(gas, geom, FuelSchedule(), FreeStream(), disc)
        fld = model.uniform_field(U0)
        assert thrust(fld, model) == pytest.approx(0.0, abs=1e-12)

    def test_free_stream_area_difference(self, model_short):
        fld = model_short.uniform_field(U0)
        geom = model_short.geom
        a_i = geom.area(geom.x_min)
        a_e = geom.area(geom.x_max)
        assert thrust(fld, model_short) == pytest.approx(
            (a_e - a_i) * RHO0 * U0**2, rel=1e-13)

    def test_linear_in_exit_pressure(self, model_short):
        fld = model_short.uniform_field(U0)
        w = fld.w.copy()
        w[2, -1] += 1000.0 / 0.4  # +1000 Pa at the exit
        bumped = ConservedField(w)
        a_e = model_short.geom.area(model_short.geom.x_max)
        assert thrust(bumped, model_short) - thrust(fld, model_short) == pytest.approx(
            1000.0 * a_e, rel=1e-10)
