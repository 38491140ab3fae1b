"""Command-line driver: simulate | spin-up | optimize | estimate | reproduce.

Every invocation resolves one RunConfig (preset, then optional config file,
then --set overrides, then dedicated flags), stamps every artifact with the
config hash and seed, and exits nonzero if any sub-run fails.  Outputs are
CSV (dot decimal separator, no grouping) and JSON, UTF-8.

The solver batch width (a pure performance knob) can be set with the
UNSTART_WORKERS environment variable.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import ldp
from . import sampling
from .config import ConfigError, RunConfig, apply_overrides, parse_config
from .ldp import (
    InflowPath,
    asymptotic_probability,
    minimize_action,
    subsonic_bound,
)
from .presets import PRESETS, STUDIES, load_preset
from .sampling import (
    SampleBatchSpec,
    UnstartEvent,
    estimate_is,
    estimate_mc,
)
from .solver import (
    SolverError,
    TabulatedInflow,
    simulate,
    spin_up,
)

EPSILON_GRID = tuple(round(0.2 + 0.02 * i, 2) for i in range(11))


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("UNSTART_WORKERS", "1024")))
    except ValueError:
        return 1024


def _stamp(cfg: RunConfig) -> dict:
    return {"config_sha256": cfg.sha256(), "seed": cfg.run_seed}


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _write_csv(path, header, rows, stamp: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_sha256={stamp['config_sha256']} seed={stamp['seed']}\n")
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fresh_dir(base, name) -> str:
    """Never overwrite prior outputs: pick the first free run-NNN directory."""
    root = os.path.join(base, name)
    os.makedirs(base, exist_ok=True)
    n = 0
    while True:
        path = os.path.join(root, f"run-{n:03d}") if name else root
        try:
            os.makedirs(path)
            return path
        except FileExistsError:
            n += 1


def _resolve_config(args) -> RunConfig:
    cfg = load_preset(args.preset)
    if args.config:
        cfg = parse_config(args.config, base=cfg)
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    updates = {}
    if args.seed is not None:
        updates["run_seed"] = args.seed
    if args.out is not None:
        updates["run_out_dir"] = args.out
    if getattr(args, "epsilon", None) is not None:
        updates["noise_epsilon"] = args.epsilon
    if getattr(args, "samples", None) is not None:
        updates["sampling_samples"] = args.samples
    if getattr(args, "estimator", None) is not None:
        updates["sampling_estimator"] = args.estimator
    if getattr(args, "stepping", None) is not None:
        updates["sampling_stepping"] = args.stepping
    if getattr(args, "ntilde", None) is not None:
        updates["path_n_tilde"] = args.ntilde
    return cfg.with_updates(**updates) if updates else cfg


def _inflow_for(cfg: RunConfig, spec: str, model):
    """Inflow selector: 'constant', 'sampled', or a two-column (t, u) CSV."""
    if spec == "constant":
        return float(cfg.freestream_u0), "constant"
    if spec == "sampled":
        rng = np.random.default_rng(
            np.random.SeedSequence(cfg.run_seed, spawn_key=(0,)))
        m = cfg.disc_steps // cfg.path_n_tilde
        path = sampling.sample_path_p(rng, cfg.noise(), u0=cfg.freestream_u0,
                                      n_tilde=cfg.path_n_tilde, m=m, dt=cfg.disc_dt)
        return path.solver_inflow(model.disc), "sampled"
    t_knots, u_knots = [], []
    with open(spec, "r", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#") or row[0] == "t":
                continue
            t_knots.append(float(row[0]))
            u_knots.append(float(row[1]))
    return TabulatedInflow(t_knots, u_knots, cfg.disc_dt), f"file:{spec}"


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    model = cfg.model()
    inflow, label = _inflow_for(cfg, args.inflow, model)
    out = _fresh_dir(cfg.run_out_dir, "simulate")
    rec = simulate(model, inflow, stepping=cfg.sampling_stepping,
                   mach_threshold=cfg.event_mach_threshold,
                   monitor_cell=cfg.event_monitor_cell,
                   record_history=True, history_stride=args.history_stride)
    stamp = _stamp(cfg)
    mid = model.disc.midpoints
    rows = [(t, x, m) for t, machs in zip(rec.times, rec.mach_history)
            for x, m in zip(mid, machs)]
    _write_csv(os.path.join(out, "mach.csv"), ("t", "x", "M"), rows, stamp)
    _write_csv(os.path.join(out, "shock.csv"), ("t", "x_shock"),
               list(zip(rec.times, rec.shock_history)), stamp)
    _write_csv(os.path.join(out, "thrust.csv"), ("t", "thrust"),
               list(zip(rec.times, rec.thrust_history)), stamp)
    summary = {
        **stamp,
        "inflow": label,
        "stepping": cfg.sampling_stepping,
        "min_M1": rec.min_m1,
        "unstart_time": rec.unstart_time,
        "mach_threshold": cfg.event_mach_threshold,
        "n_steps": rec.n_steps,
        "max_cfl": rec.max_cfl,
    }
    _write_json(os.path.join(out, "summary.json"), summary)
    verdict = (f"unstart at t={rec.unstart_time:.6f}s" if rec.unstarted
               else "no unstart")
    print(f"simulate: min_M1={rec.min_m1:.4f} ({verdict}); artifacts in {out}")
    return 0


def cmd_spin_up(args) -> int:
    cfg = _resolve_config(args)
    model = cfg.model()
    out = _fresh_dir(cfg.run_out_dir, "spin-up")
    field = spin_up(model)
    gas = cfg.gas()
    mid = model.disc.midpoints
    kk = model.disc.k_cells
    rows = zip(mid, field.rho[:kk], field.velocity()[:kk],
               field.pressure(gas)[:kk], field.mach(gas)[:kk])
    _write_csv(os.path.join(out, "equilibrium.csv"),
               ("x", "rho", "u", "P", "M"), rows, _stamp(cfg))
    machs = field.mach(gas)
    _write_json(os.path.join(out, "summary.json"),
                {**_stamp(cfg), "min_M": float(machs.min()),
                 "max_M": float(machs.max())})
    print(f"spin-up: min Mach {machs.min():.4f}, artifacts in {out}")
    return 0


def _run_optimize(cfg: RunConfig, out_dir=None):
    model = cfg.model()
    noise = cfg.noise()
    event = cfg.event()
    res = minimize_action(event, model, noise, n_tilde=cfg.path_n_tilde)
    _, bound = subsonic_bound(
        noise, cfg.free_stream(), n_tilde=cfg.path_n_tilde,
        m=cfg.disc_steps // cfg.path_n_tilde, dt=cfg.disc_dt,
        level=min(cfg.event_mach_threshold, noise.mach_in0))
    if out_dir is not None:
        stamp = _stamp(cfg)
        payload = {**res.to_json_dict(), **stamp, "bound": bound,
                   "value_over_bound": res.value / bound if bound else None,
                   "message": res.message}
        _write_json(os.path.join(out_dir, "action.json"), payload)
        t = res.minimizer.knot_times
        _write_csv(os.path.join(out_dir, "minimizer.csv"), ("t", "u"),
                   zip(t, res.minimizer.coarse), stamp)
        c_ref = np.sqrt(cfg.gas_gamma * cfg.freestream_p0 / cfg.freestream_rho0)
        _write_csv(os.path.join(out_dir, "minimizer_mach.csv"), ("t", "M"),
                   zip(t, res.minimizer.coarse / c_ref), stamp)
    return res, bound


def cmd_optimize(args) -> int:
    cfg = _resolve_config(args)
    out = _fresh_dir(cfg.run_out_dir, "optimize")
    res, bound = _run_optimize(cfg, out)
    eps = cfg.noise_epsilon
    print(f"optimize: value={res.value:.6f} bound={bound:.6f} "
          f"ratio={res.value / bound:.4f} feasible={res.feasible} "
          f"iterations={res.iterations} [{res.message}]")
    print(f"log-asymptotic probability scale at epsilon={eps}: "
          f"exp(-value/eps^2)={asymptotic_probability(res.value, eps):.3e} "
          "(exponential decay scale, not the probability itself)")
    print(f"artifacts in {out}")
    return 0 if res.feasible else 1


def _center_path(cfg: RunConfig, args, out_dir) -> InflowPath:
    m = cfg.disc_steps // cfg.path_n_tilde
    if getattr(args, "center", None):
        with open(args.center, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        return InflowPath(np.asarray(payload["coarse_path"]), m, cfg.disc_dt)
    res, _ = _run_optimize(cfg, out_dir)
    return res.minimizer


def _estimate_one(cfg: RunConfig, estimator: str, center) -> sampling.EstimatorReport:
    model = cfg.model()
    event = UnstartEvent(model, cfg.event(), stepping=cfg.sampling_stepping)
    spec = SampleBatchSpec(
        event=event, noise=cfg.noise(), n_tilde=cfg.path_n_tilde,
        m=cfg.disc_steps // cfg.path_n_tilde, dt=cfg.disc_dt,
        n_samples=cfg.sampling_samples, base_seed=cfg.run_seed,
        estimator=estimator, center=center if estimator == "is" else None,
        u0=cfg.freestream_u0, chunk=_workers(),
    )
    return estimate_mc(spec) if estimator == "mc" else estimate_is(spec)


def _append_sweep(path, report, stamp) -> None:
    new = not os.path.exists(path)
    with open(path, "a", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            fh.write(f"# config_sha256={stamp['config_sha256']} seed={stamp['seed']}\n")
            writer.writerow(("epsilon", "estimator", "p_hat", "std_j", "ci99_lo",
                             "ci99_hi", "rel_err", "hits", "invalid", "J", "seed"))
        d = report.to_json_dict()
        writer.writerow((d["epsilon"], d["estimator"], d["p_hat"], d["std_j"],
                         d["ci99_lo"], d["ci99_hi"], d["rel_err"], d["hits"],
                         d["invalid"], d["J"], d["seed"]))


def cmd_estimate(args) -> int:
    cfg = _resolve_config(args)
    out = _fresh_dir(cfg.run_out_dir, "estimate")
    stamp = _stamp(cfg)
    epsilons = list(EPSILON_GRID) if args.sweep else [cfg.noise_epsilon]
    estimators = ["mc", "is"] if args.sweep else [cfg.sampling_estimator]
    center = None
    if "is" in estimators:
        center = _center_path(cfg, args, out)
    sweep_path = os.path.join(out, "sweep.csv")
    by_eps = {}
    for eps in epsilons:
        cfg_eps = cfg.with_updates(noise_epsilon=eps)
        for estimator in estimators:
            rep = _estimate_one(cfg_eps, estimator, center)
            _write_json(os.path.join(out, f"report-{estimator}-eps{eps}.json"),
                        {**rep.to_json_dict(), **_stamp(cfg_eps)})
            _append_sweep(sweep_path, rep, stamp)
            by_eps.setdefault(eps, {})[estimator] = rep
            print(f"estimate[{estimator}] eps={eps}: p_hat={rep.p_hat:.4e} "
                  f"std={rep.std_j:.3e} rel_err={rep.rel_err:.3f} "
                  f"hits={rep.hits} invalid={rep.invalid}")
    if args.sweep:
        rows = []
        for eps in epsilons:
            mc, is_ = by_eps[eps]["mc"], by_eps[eps]["is"]
            ratio = mc.std_j / is_.std_j if is_.std_j > 0 else float("inf")
            rows.append((eps, mc.p_hat, mc.std_j, is_.p_hat, is_.std_j, ratio))
        _write_csv(os.path.join(out, "comparison.csv"),
                   ("epsilon", "p_mc", "std_mc", "p_is", "std_is", "std_ratio"),
                   rows, stamp)
    print(f"artifacts in {out}")
    return 0


def _reproduce_optimize_study(study: dict, args, out) -> bool:
    rows = []
    ok = True
    texts = []
    for label, preset_name, reference in study["rows"]:
        cfg = load_preset(preset_name)
        if args.set:
            cfg = apply_overrides(cfg, args.set)
        texts.append(cfg.to_text())
        try:
            res, bound = _run_optimize(cfg)
        except (SolverError, ldp.InfeasibilityError) as exc:
            print(f"reproduce: {label} ({preset_name}) failed: {exc}",
                  file=sys.stderr)
            ok = False
            break
        dev = (res.value - reference) / reference
        rows.append((label, cfg.sha256()[:12], res.value, reference, dev,
             bound, res.feasible))
        print(f"  {label}: computed {res.value:.6f}  reference {reference}  "
              f"rel dev {dev:+.2%}")
    if rows:
        stamp = {
            "config_sha256": hashlib.sha256("".join(texts).encode()).hexdigest(),
            "seed": args.seed if args.seed is not None else 0,
        }
        _write_csv(os.path.join(out, "comparison.csv"),
                   ("case", "config", "computed", "reference", "rel_deviation",
                    "ramp_bound", "feasible"), rows, stamp)
        with open(os.path.join(out, "comparison.md"), "w", encoding="utf-8") as fh:
            fh.write("| case | computed | reference | rel dev | ramp bound |\n")
            fh.write("|---|---|---|---|---|\n")
            for label, _, v, ref, dev, bound, _feas in rows:
                fh.write(f"| {label} | {v:.6f} | {ref} | {dev:+.2%} | {bound:.6f} |\n")
    return ok


def _reproduce_mc_vs_is(study: dict, args, out) -> bool:
    cfg = load_preset(study["preset"])
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    cfg = cfg.with_updates(
        sampling_samples=args.samples or study["samples"],
        run_seed=args.seed if args.seed is not None else cfg.run_seed,
    )
    epsilons = args.epsilon_grid or study["epsilons"]
    center = _center_path(cfg, args, out)
    stamp = _stamp(cfg)
    rows = []
    ok = True
    for eps in epsilons:
        cfg_eps = cfg.with_updates(noise_epsilon=float(eps))
        mc = _estimate_one(cfg_eps, "mc", None)
        is_ = _estimate_one(cfg_eps, "is", center)
        ratio = mc.std_j / is_.std_j if is_.std_j > 0 else float("inf")
        rows.append((eps, mc.p_hat, mc.std_j, is_.p_hat, is_.std_j, ratio))
        print(f"  eps={eps}: MC p={mc.p_hat:.4e} std={mc.std_j:.3e} | "
              f"IS p={is_.p_hat:.4e} std={is_.std_j:.3e} | std ratio {ratio:.2f}")
        if is_.std_j > mc.std_j:
            ok = False
    _write_csv(os.path.join(out, "comparison.csv"),
               ("epsilon", "p_mc", "std_mc", "p_is", "std_is", "std_ratio"),
               rows, stamp)
    return ok


def cmd_reproduce(args) -> int:
    study = STUDIES[args.study]
    base_out = args.out or "runs"
    out = _fresh_dir(os.path.join(base_out, "reproduce"), args.study)
    print(f"reproduce {args.study} -> {out}")
    if study["kind"] == "optimize":
        ok = _reproduce_optimize_study(study, args, out)
    else:
        ok = _reproduce_mc_vs_is(study, args, out)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unstart",
        description="Rare-event analysis of inflow-driven scramjet unstart",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sampling_flags=True):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--preset", default="paper-defaults",
                       choices=sorted(PRESETS), help="named parameter preset")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE", help="single-key override")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory root")
        if sampling_flags:
            p.add_argument("--epsilon", type=float, default=None)
            p.add_argument("--samples", type=int, default=None)
            p.add_argument("--estimator", choices=("mc", "is"), default=None)
            p.add_argument("--stepping", choices=("uniform", "adaptive"),
                           default=None)
            p.add_argument("--ntilde", type=int, default=None)

    p = sub.add_parser("simulate", help="integrate one inflow realization")
    common(p)
    p.add_argument("--inflow", default="constant",
                   help="'constant', 'sampled', or a two-column (t,u) CSV file")
    p.add_argument("--history-stride", type=int, default=20)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("spin-up", help="compute the no-fuel equilibrium state")
    common(p)
    p.set_defaults(func=cmd_spin_up)

    p = sub.add_parser("optimize", help="most probable unstart-causing inflow")
    common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("estimate", help="Monte Carlo unstart probability")
    common(p)
    p.add_argument("--sweep", action="store_true",
                   help="run both estimators over the epsilon grid "
                        f"{EPSILON_GRID[0]}..{EPSILON_GRID[-1]}")
    p.add_argument("--center", help="JSON file with the tilting center path")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("reproduce", help="run a named reproduction study")
    p.add_argument("study", choices=sorted(STUDIES))
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--ntilde", type=int, default=None)
    p.add_argument("--center", default=None)
    p.add_argument("--epsilon-grid", type=float, nargs="*", default=None)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, ldp.InfeasibilityError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
