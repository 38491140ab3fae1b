"""Named run presets and the study definitions behind `unstart reproduce`.

Every preset starts from the default parameter set (the published table of
numerical values) and applies the study's deltas, so reproducing a study
requires no manual parameter entry.  Reference values are the published
optimal rate-function values used in the comparison artifacts.
"""

from .config import RunConfig, apply_overrides

__all__ = ["PRESETS", "load_preset", "STUDIES"]

_SHORT = {}  # the defaults are the short fuel cycle
_LONG = {"fuel.tau": "2e-3", "fuel.burst": "0.4e-3"}


def _mk(*dicts):
    out = {}
    for d in dicts:
        out.update(d)
    return out


PRESETS = {
    "paper-defaults": _mk(_SHORT),
    "paper-defaults-long": _mk(_LONG),
    "table-5.1-short": _mk(_SHORT),
    "table-5.1-long": _mk(_LONG),
    "table-5.2-m08-short": _mk(_SHORT, {"event.mach_threshold": "0.8"}),
    "table-5.2-m08-long": _mk(_LONG, {"event.mach_threshold": "0.8"}),
    "table-5.2-m12-short": _mk(_SHORT, {"event.mach_threshold": "1.2"}),
    "table-5.2-m12-long": _mk(_LONG, {"event.mach_threshold": "1.2"}),
    "table-5.4-tc2.5-short": _mk(_SHORT, {"geometry.theta_c_deg": "2.5"}),
    "table-5.4-tc2.5-long": _mk(_LONG, {"geometry.theta_c_deg": "2.5"}),
    "table-5.4-tc12-short": _mk(_SHORT, {"geometry.theta_c_deg": "12.0"}),
    "table-5.4-tc12-long": _mk(_LONG, {"geometry.theta_c_deg": "12.0"}),
    "table-5.5-short-N40": _mk(_SHORT, {"path.n_tilde": "40"}),
    "table-5.5-long-N40": _mk(_LONG, {"path.n_tilde": "40"}),
}


def load_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        known = ", ".join(sorted(PRESETS))
        raise KeyError(f"unknown preset {name!r}; known presets: {known}")
    pairs = [f"{k}={v}" for k, v in PRESETS[name].items()]
    return apply_overrides(RunConfig(), pairs, source=f"preset {name}")


# --- reproduction studies --------------------------------------------------
# rows: (label, preset, reference optimal value); `bound` rows carry the
# closed-form ramp value for the same threshold.

STUDIES = {
    "table-5.1": {
        "kind": "optimize",
        "rows": [
            ("short-cycle", "table-5.1-short", 0.21504),
            ("long-cycle", "table-5.1-long", 0.15603),
        ],
        "bound_levels": {1.0: 0.21125},
    },
    "table-5.2": {
        "kind": "optimize",
        "rows": [
            ("m0.8-short", "table-5.2-m08-short", 0.26547),
            ("m0.8-long", "table-5.2-m08-long", 0.18143),
            ("m1.0-short", "table-5.1-short", 0.21504),
            ("m1.0-long", "table-5.1-long", 0.15603),
            ("m1.2-short", "table-5.2-m12-short", 0.13667),
            ("m1.2-long", "table-5.2-m12-long", 0.13532),
        ],
        "bound_levels": {0.8: 0.3042, 1.0: 0.21125, 1.2: 0.1352},
    },
    "table-5.4": {
        "kind": "optimize",
        "rows": [
            ("tc2.5-short", "table-5.4-tc2.5-short", 0.088937),
            ("tc2.5-long", "table-5.4-tc2.5-long", 0.046034),
            ("tc7.5-short", "table-5.1-short", 0.21504),
            ("tc7.5-long", "table-5.1-long", 0.15603),
            ("tc12-short", "table-5.4-tc12-short", 0.21505),
            ("tc12-long", "table-5.4-tc12-long", 0.2147),
        ],
        "bound_levels": {1.0: 0.21125},
    },
    "table-5.5": {
        "kind": "optimize",
        "rows": [
            ("N20-short", "table-5.1-short", 0.21504),
            ("N20-long", "table-5.1-long", 0.15603),
            ("N40-short", "table-5.5-short-N40", 0.21503),
            ("N40-long", "table-5.5-long-N40", 0.15587),
        ],
        "bound_levels": {1.0: 0.21125},
    },
    "mc-vs-is": {
        "kind": "estimate",
        "preset": "table-5.1-short",
        # desk-scale defaults; raise via --samples / --epsilon-grid
        "epsilons": (0.4, 0.3),
        "samples": 1000,
    },
}
