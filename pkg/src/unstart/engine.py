"""Physical model inputs: gas law, engine geometry, fueling schedule.

The engine is a straight duct of piecewise-linearly varying cross section
(isolator / combustor / expansion region).  Heat release from fueling is a
volumetric energy source confined to the combustor and pulsed in time.
All quantities are SI.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GasModel",
    "EngineGeometry",
    "FuelSchedule",
    "FreeStream",
    "area",
    "area_slope",
    "fuel_indicator",
    "heat_source",
]


@dataclass(frozen=True)
class GasModel:
    """Calorically perfect gas.

    Attributes
    ----------
    gamma : ratio of specific heats (dimensionless, > 1)
    """

    gamma: float = 1.4

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise ValueError(f"gamma must be > 1, got {self.gamma}")


@dataclass(frozen=True)
class FreeStream:
    """Inflow (free-stream) state held fixed at the duct entrance.

    Attributes
    ----------
    rho0 : density [kg/m^3]
    u0   : velocity [m/s]
    p0   : pressure [Pa]
    """

    rho0: float = 0.159
    u0: float = 1300.0
    p0: float = 47842.0

    def __post_init__(self):
        if self.rho0 <= 0.0 or self.p0 <= 0.0:
            raise ValueError("free-stream density and pressure must be positive")

    def sound_speed(self, gas: GasModel) -> float:
        return math.sqrt(gas.gamma * self.p0 / self.rho0)

    def energy(self, gas: GasModel) -> float:
        """Total energy density E0 [J/m^3] of the free-stream state."""
        return self.p0 / (gas.gamma - 1.0) + 0.5 * self.rho0 * self.u0**2


@dataclass(frozen=True)
class EngineGeometry:
    """Piecewise-linear duct cross section.

    The axial coordinate runs over [-L_I, L_C + L_E]: the isolator occupies
    x < 0, the combustor [0, L_C], the expansion region x > L_C.  The area is

        A(x) = A0 - x sin(theta_I)                                x < 0
        A(x) = A0 + x sin(theta_C)                                0 <= x <= L_C
        A(x) = A0 + L_C sin(theta_C) + (x - L_C) sin(theta_E)     x > L_C

    which is continuous at x = 0 and x = L_C by construction.  Angles are
    stored in degrees (as configured) and converted to radians once here.

    Attributes
    ----------
    a0        : minimum (throat) cross-sectional area [m^2]
    l_i, l_c, l_e             : region lengths [m]
    theta_i_deg, theta_c_deg, theta_e_deg : region wall angles [degrees]
    """

    a0: float = 0.008
    l_i: float = 0.5
    l_c: float = 0.1
    l_e: float = 0.1
    theta_i_deg: float = 0.0
    theta_c_deg: float = 7.5
    theta_e_deg: float = 15.0

    def __post_init__(self):
        if self.a0 <= 0.0:
            raise ValueError(f"a0 must be positive, got {self.a0}")
        if min(self.l_i, self.l_c, self.l_e) <= 0.0:
            raise ValueError("all region lengths must be positive")
        # piecewise linear, so positivity at region endpoints is positivity
        # everywhere
        ends = [self.x_min, 0.0, self.l_c, self.x_max]
        if min(area(self, x) for x in ends) <= 0.0:
            raise ValueError("cross section is not positive over the duct")

    @property
    def sin_i(self) -> float:
        return math.sin(math.radians(self.theta_i_deg))

    @property
    def sin_c(self) -> float:
        return math.sin(math.radians(self.theta_c_deg))

    @property
    def sin_e(self) -> float:
        return math.sin(math.radians(self.theta_e_deg))

    @property
    def x_min(self) -> float:
        return -self.l_i

    @property
    def x_max(self) -> float:
        return self.l_c + self.l_e

    @property
    def length(self) -> float:
        return self.l_i + self.l_c + self.l_e

    def area(self, x):
        """Cross-sectional area A(x) [m^2]; `x` may be a scalar or array."""
        return area(self, x)

    def area_slope(self, x):
        """dA/dx [m] by region; `x` may be a scalar or array."""
        return area_slope(self, x)


def _check_domain(geom: EngineGeometry, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < geom.x_min) or np.any(x > geom.x_max):
        raise ValueError(
            f"position out of duct domain [{geom.x_min}, {geom.x_max}]: {x!r}"
        )
    return x


def area(geom: EngineGeometry, x):
    """Piecewise-linear cross-sectional area A(x) [m^2].

    Raises ValueError for x outside [-L_I, L_C + L_E].
    """
    x = _check_domain(geom, x)
    combustor = geom.a0 + x * geom.sin_c
    isolator = geom.a0 - x * geom.sin_i
    expansion = geom.a0 + geom.l_c * geom.sin_c + (x - geom.l_c) * geom.sin_e
    out = np.where(x < 0.0, isolator, np.where(x <= geom.l_c, combustor, expansion))
    return out if out.ndim else float(out)


def area_slope(geom: EngineGeometry, x):
    """dA/dx [m]: -sin(theta_I), +sin(theta_C) or +sin(theta_E) by region.

    At the region boundaries x = 0 and x = L_C the combustor value is
    returned, matching the closed combustor branch of `area`.  Evaluation
    points in the solver are cell midpoints, which never coincide with the
    boundaries on the default grid.
    """
    x = _check_domain(geom, x)
    out = np.where(x < 0.0, -geom.sin_i, np.where(x <= geom.l_c, geom.sin_c, geom.sin_e))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FuelSchedule:
    """Pulsed heat-release model.

    Fuel is injected during the first `burst` seconds of every cycle of
    length `tau`.  While fueling is on, the volumetric heat rate deposited
    in the combustor is

        q(x, t) = f(t) x^{1/3} phi f_stoch H_prop A0 rho0 u0 / (L_C^2 A(x))

    and zero elsewhere.  `phi` scales the heat released per unit time.

    Attributes
    ----------
    phi     : equivalence ratio (dimensionless, >= 0)
    tau     : fuel cycle length [s]
    burst   : fuel burst length [s], 0 < burst <= tau
    f_stoch : stoichiometric fuel/air ratio (dimensionless)
    h_prop  : fuel heating value [J/kg]
    rho0    : free-stream density [kg/m^3]
    u0      : free-stream velocity [m/s]
    """

    phi: float = 0.78
    tau: float = 0.5e-3
    burst: float = 0.1e-3
    f_stoch: float = 0.029
    h_prop: float = 1.2e8
    rho0: float = 0.159
    u0: float = 1300.0

    def __post_init__(self):
        if self.phi < 0.0:
            raise ValueError(f"phi must be nonnegative, got {self.phi}")
        if not 0.0 < self.burst <= self.tau:
            raise ValueError(f"need 0 < burst <= tau, got burst={self.burst}, tau={self.tau}")

    def indicator(self, t):
        return fuel_indicator(self, t)


def fuel_indicator(sched: FuelSchedule, t):
    """1 while fuel is being injected (t mod tau < burst), else 0."""
    t = np.asarray(t, dtype=float)
    out = (np.mod(t, sched.tau) < sched.burst).astype(float)
    return out if out.ndim else float(out)


def heat_source(sched: FuelSchedule, geom: EngineGeometry, x, t):
    """Volumetric heat rate q(x, t) [W/m^3].

    Nonzero only for x in [0, L_C] while the fuel indicator is on.  The
    spatial shape x^{1/3} vanishes at the combustor inlet, so x = 0
    contributes nothing.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    in_combustor = (x >= 0.0) & (x <= geom.l_c)
    xs = np.where(in_combustor, x, 0.0)
    spatial = np.where(
        in_combustor,
        np.cbrt(xs)
        * sched.phi
        * sched.f_stoch
        * sched.h_prop
        * geom.a0
        * sched.rho0
        * sched.u0
        / (geom.l_c**2 * area(geom, np.clip(x, geom.x_min, geom.x_max))),
        0.0,
    )
    out = fuel_indicator(sched, t) * spatial
    return out if out.ndim else float(out)


def heat_profile(sched: FuelSchedule, geom: EngineGeometry, x: np.ndarray) -> np.ndarray:
    """Spatial factor of the heat source at fixed positions (fuel on).

    Precomputed once per run; the time dependence is the scalar indicator.
    """
    return heat_source(sched, geom, x, 0.0)
