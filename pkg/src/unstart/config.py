"""Run configuration: strict flat key=value files, presets, hashing.

The configuration format is a plain text file of dotted keys:

    # comment
    gas.gamma = 1.4
    fuel.tau = 5e-4
    ...

Unknown keys, malformed lines and type errors are rejected with the line
number.  Serialization is canonical (fixed key order, repr of values), so
parse -> serialize -> parse is the identity and the SHA-256 of the
serialized text identifies a run configuration.
"""

import hashlib
from dataclasses import dataclass, fields, replace

from .engine import EngineGeometry, FreeStream, FuelSchedule, GasModel
from .ldp import EventSpec, NoiseModel
from .solver import Discretization, ScramjetModel

__all__ = ["RunConfig", "ConfigError", "parse_config", "parse_config_text"]


class ConfigError(ValueError):
    """Configuration file rejected; message carries line/key diagnostics."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs, as plain scalars."""

    gas_gamma: float = 1.4
    geometry_a0: float = 0.008
    geometry_l_i: float = 0.5
    geometry_l_c: float = 0.1
    geometry_l_e: float = 0.1
    geometry_theta_i_deg: float = 0.0
    geometry_theta_c_deg: float = 7.5
    geometry_theta_e_deg: float = 15.0
    fuel_phi: float = 0.78
    fuel_tau: float = 0.5e-3
    fuel_burst: float = 0.1e-3
    fuel_f_stoch: float = 0.029
    fuel_h_prop: float = 1.2e8
    freestream_rho0: float = 0.159
    freestream_u0: float = 1300.0
    freestream_p0: float = 47842.0
    disc_cells: int = 100
    disc_dt: float = 1e-6
    disc_steps: int = 10_000
    noise_sigma_u: float = 1.0e4
    noise_sigma_m: float = 96.9020
    noise_epsilon: float = 0.2
    noise_mach_in0: float = 2.0
    event_mach_threshold: float = 1.0
    event_monitor_cell: int = 1
    path_n_tilde: int = 20
    sampling_samples: int = 10_000
    sampling_estimator: str = "mc"
    sampling_stepping: str = "adaptive"
    run_seed: int = 0
    run_out_dir: str = "runs"

    # --- construction of domain objects -------------------------------

    def gas(self) -> GasModel:
        return GasModel(gamma=self.gas_gamma)

    def geometry(self) -> EngineGeometry:
        return EngineGeometry(
            a0=self.geometry_a0, l_i=self.geometry_l_i, l_c=self.geometry_l_c,
            l_e=self.geometry_l_e, theta_i_deg=self.geometry_theta_i_deg,
            theta_c_deg=self.geometry_theta_c_deg,
            theta_e_deg=self.geometry_theta_e_deg,
        )

    def fuel(self) -> FuelSchedule:
        return FuelSchedule(
            phi=self.fuel_phi, tau=self.fuel_tau, burst=self.fuel_burst,
            f_stoch=self.fuel_f_stoch, h_prop=self.fuel_h_prop,
            rho0=self.freestream_rho0, u0=self.freestream_u0,
        )

    def free_stream(self) -> FreeStream:
        return FreeStream(rho0=self.freestream_rho0, u0=self.freestream_u0,
                          p0=self.freestream_p0)

    def discretization(self) -> Discretization:
        return Discretization.for_geometry(
            self.geometry(), k_cells=self.disc_cells,
            dt_uniform=self.disc_dt, n_steps=self.disc_steps)

    def model(self) -> ScramjetModel:
        return ScramjetModel(self.gas(), self.geometry(), self.fuel(),
                             self.free_stream(), self.discretization())

    def noise(self) -> NoiseModel:
        return NoiseModel(sigma_u=self.noise_sigma_u, sigma_m=self.noise_sigma_m,
                          epsilon=self.noise_epsilon, mach_in0=self.noise_mach_in0)

    def event(self) -> EventSpec:
        return EventSpec(mach_threshold=self.event_mach_threshold,
                         monitor_cell=self.event_monitor_cell)

    # --- text format ---------------------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            key = f.name.replace("_", ".", 1)
            val = getattr(self, f.name)
            lines.append(f"{key} = {val!r}" if isinstance(val, str) else f"{key} = {val}")
        return "\n".join(lines) + "\n"

    def sha256(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def with_updates(self, **updates) -> "RunConfig":
        return replace(self, **updates)


_FIELD_BY_KEY = {f.name.replace("_", ".", 1): f for f in fields(RunConfig)}


def _convert(f, raw: str, where: str):
    raw = raw.strip()
    try:
        if f.type is int or f.type == "int":
            v = int(raw)
        elif f.type is float or f.type == "float":
            v = float(raw)
        else:
            v = raw.strip("'\"")
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse value {raw!r} for key "
                          f"{f.name.replace('_', '.', 1)!r}") from exc
    return v


def parse_config_text(text: str, base: RunConfig | None = None,
                      source: str = "<config>") -> RunConfig:
    """Parse a key=value config on top of `base` (defaults if omitted)."""
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        f = _FIELD_BY_KEY.get(key)
        if f is None:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if f.name in updates:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        updates[f.name] = _convert(f, raw, f"{source}:{lineno}")
    cfg = (base or RunConfig()).with_updates(**updates)
    _validate(cfg)
    return cfg


def parse_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read(), base=base, source=str(path))


def apply_overrides(cfg: RunConfig, pairs, source: str = "--set") -> RunConfig:
    """Apply KEY=VALUE overrides (same keys as the config file)."""
    updates = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"{source}: expected KEY=VALUE, got {pair!r}")
        key, _, raw = pair.partition("=")
        f = _FIELD_BY_KEY.get(key.strip())
        if f is None:
            raise ConfigError(f"{source}: unknown key {key.strip()!r}")
        updates[f.name] = _convert(f, raw, source)
    cfg = cfg.with_updates(**updates)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.sampling_estimator not in ("mc", "is"):
        raise ConfigError(f"sampling.estimator must be 'mc' or 'is', "
                          f"got {cfg.sampling_estimator!r}")
    if cfg.sampling_stepping not in ("adaptive", "uniform"):
        raise ConfigError(f"sampling.stepping must be 'adaptive' or 'uniform', "
                          f"got {cfg.sampling_stepping!r}")
    if cfg.disc_steps % cfg.path_n_tilde != 0:
        raise ConfigError("path.n_tilde must divide disc.steps")
    try:
        cfg.model()
        cfg.noise()
        cfg.event()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
