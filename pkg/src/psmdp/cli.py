"""Command-line front-end: ``psmdp front|rollout|sweep|gen-env``.

Exit codes: 0 success, 2 configuration error, 3 domain error (unknown
schedule or policy), 4 internal or non-convergence error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

from . import plotting, report
from .config import GENERATORS, RunConfig, dist_name, load_config
from .envs import build_world, render_ascii
from .errors import CapacityError, ConvergenceError, DomainError, InputError, PsmdpError
from .schedule import parse_schedule
from .search import SearchReport, pareto_front_schedules, quality_metric
from .sim import DEFAULT_HORIZON, rollout
from .solver import solve_schedule

log = logging.getLogger("psmdp")

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_INTERNAL = 0, 2, 3, 4


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "no_filter", False):
        cfg.filter_enabled = False
    if getattr(args, "margin", None) is not None:
        cfg.margin = args.margin
    if getattr(args, "alphas", None) is not None:
        cfg.alphas = args.alphas
    if getattr(args, "length", None) is not None:
        cfg.length = args.length
    if getattr(args, "strides", None) is not None:
        cfg.strides = args.strides
    if getattr(args, "out", None) is not None:
        cfg.outputs = Path(args.out)
    cfg.search_config()  # re-validate after overrides
    return cfg


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def cmd_front(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    result = pareto_front_schedules(cfg.mdp, cfg.search_config())
    out = cfg.outputs
    extra = cfg.named_distributions() if cfg.filter_enabled else []
    _write(out / "report.json", report.dumps(report.report_json(result)))
    _write(out / "timing.json", report.dumps(report.timing_json(result)))
    _write(out / "front.csv", report.front_csv(result, extra))
    if args.dump_policies:
        dump = [report.policy_dump(result.solved[k], cfg.mdp.n_actions) for k in result.final]
        _write(out / "policies.json", report.dumps(dump))
    if cfg.plot:
        plotting.plot_fronts(result.final_fronts(), out / "front.svg",
                             title=f"strides {list(cfg.strides)}, length {cfg.length}")
    print(f"visited {result.visited}/{cfg.search_config().unfiltered_total} schedules, "
          f"f={report.fmt(result.filtered_fraction)}, final front: {len(result.final)} schedules")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_rollout(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    sched = parse_schedule(args.schedule)
    bad = [k for k in sched.strides if k not in cfg.strides]
    if bad:
        raise DomainError(f"schedule {sched} uses strides {bad} outside the configured set {list(cfg.strides)}")
    alphas = cfg.alphas
    solved = solve_schedule(cfg.mdp, sched, alphas, cfg.eps)
    if args.policy not in solved.policies:
        raise DomainError(f"unknown policy {args.policy!r}; available: {sorted(solved.policies)}")
    defaults = cfg.rollout
    n = args.n if args.n is not None else int(defaults.get("n", 100_000))
    horizon = args.horizon if args.horizon is not None else int(defaults.get("horizon", DEFAULT_HORIZON))
    seed = args.seed if args.seed is not None else int(defaults.get("seed", 0))
    dist = cfg.resolve(args.distribution)
    stats = rollout(cfg.mdp, sched, solved.policies[args.policy], dist, n, horizon, seed)
    rec = solved.policies[args.policy]
    payload = {"schedule": str(sched), "policy": args.policy, "distribution": args.distribution,
               "analytic_exec": float(rec.values.v_exec @ dist),
               "analytic_checkin": float(rec.values.v_checkin @ dist),
               **stats.to_json()}
    text = report.dumps(payload)
    if args.out:
        _write(Path(args.out) / "rollout.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def _dist_label(specs) -> str:
    return "+".join(dist_name(s, i) for i, s in enumerate(specs))


def _alpha_label(alphas) -> str:
    return ";".join(report.fmt(a) for a in alphas)


def run_sweep(cfg: RunConfig) -> list[dict]:
    sweep = cfg.sweep or {}
    margins = [float(m) for m in sweep.get("margins", [cfg.margin])]
    dist_sets = [tuple(d) for d in sweep.get("distributions", [list(cfg.distributions)])]
    alpha_sets = [tuple(float(a) for a in s) for s in sweep.get("alphas", [list(cfg.alphas)])]
    lengths = [int(n) for n in sweep.get("lengths", [cfg.length])]
    rows = []
    for length in lengths:
        for alphas in alpha_sets:
            truth_cfg = cfg.search_config(filter_enabled=False, length=length, alphas=alphas)
            t0 = time.perf_counter()
            truth = pareto_front_schedules(cfg.mdp, truth_cfg)
            rows.append({"margin": None, "distributions": "none", "alphas": _alpha_label(alphas),
                         "length": length, "runtime_s": time.perf_counter() - t0, "f": 0.0,
                         "quality": 1.0})
            for dists in dist_sets:
                for margin in margins:
                    run_cfg = cfg.search_config(filter_enabled=True, length=length, alphas=alphas,
                                                margin=margin, distributions=dists)
                    t0 = time.perf_counter()
                    res = pareto_front_schedules(cfg.mdp, run_cfg)
                    rows.append({"margin": margin, "distributions": _dist_label(dists),
                                 "alphas": _alpha_label(alphas), "length": length,
                                 "runtime_s": time.perf_counter() - t0,
                                 "f": res.filtered_fraction, "quality": quality_metric(res, truth)})
    _soft_checks(rows)
    return rows


def _soft_checks(rows: list[dict]) -> None:
    """Log (never fail on) quality dropping as the margin grows."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        if r["margin"] is not None:
            groups.setdefault((r["distributions"], r["alphas"], r["length"]), []).append(r)
    for key, g in groups.items():
        g = sorted(g, key=lambda r: r["margin"])
        for a, b in zip(g, g[1:]):
            if b["quality"] < a["quality"]:
                log.warning("quality fell from %s to %s between margins %s and %s for %s",
                            report.fmt(a["quality"]), report.fmt(b["quality"]),
                            report.fmt(a["margin"]), report.fmt(b["margin"]), key)


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    rows = run_sweep(cfg)
    out = cfg.outputs
    _write(out / "sweep.csv", report.sweep_csv(rows))
    if cfg.plot:
        plotting.plot_sweep(rows, out / "sweep.svg")
    print(f"{len(rows)} sweep rows written to {out / 'sweep.csv'}")
    return EXIT_OK


def _parse_param(text: str):
    if "=" not in text:
        raise InputError(f"expected key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def cmd_gen_env(args) -> int:
    params = dict(_parse_param(p) for p in args.param or [])
    try:
        spec = GENERATORS[args.kind](**params)
    except TypeError as exc:
        raise InputError(f"bad {args.kind} parameters: {exc}") from exc
    build_world(spec)  # validates the resulting MDP
    out = Path(args.out or ".")
    _write(out / f"{args.kind}.json", report.dumps(spec.to_json()))
    _write(out / f"{args.kind}.txt", render_ascii(spec))
    sys.stdout.write(render_ascii(spec))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="psmdp", description="Pareto fronts of check-in schedules")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def search_flags(sp):
        sp.add_argument("--config", required=True, help="run configuration JSON")
        sp.add_argument("--margin", type=float, help="filter margin (fraction of range)")
        sp.add_argument("--alphas", type=_floats, help="comma-separated alpha values")
        sp.add_argument("--length", type=int, help="maximum schedule length")
        sp.add_argument("--strides", type=_ints, help="comma-separated strides")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("front", help="compute the schedule Pareto front")
    search_flags(sp)
    sp.add_argument("--no-filter", action="store_true", help="disable filtering")
    sp.add_argument("--dump-policies", action="store_true", help="write policies.json for the final front")
    sp.set_defaults(func=cmd_front)

    sp = sub.add_parser("rollout", help="Monte Carlo check of one schedule/policy")
    search_flags(sp)
    sp.add_argument("--schedule", required=True, help="schedule text, e.g. 22(3)")
    sp.add_argument("--policy", default="exec-opt", help="exec-opt, checkin-opt or alpha=<a>")
    sp.add_argument("--n", type=int, help="number of rollouts")
    sp.add_argument("--horizon", type=int, help="horizon in check-ins")
    sp.add_argument("--seed", type=int, help="random seed")
    sp.add_argument("--distribution", default="initial", help="initial or uniform")
    sp.set_defaults(func=cmd_rollout)

    sp = sub.add_parser("sweep", help="margin/distribution/alpha sweep against an unfiltered run")
    search_flags(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("gen-env", help="write a generated grid world as JSON and ASCII")
    sp.add_argument("kind", choices=sorted(GENERATORS))
    sp.add_argument("--param", action="append", help="generator parameter key=value (JSON value)")
    sp.add_argument("--out", help="output directory")
    sp.set_defaults(func=cmd_gen_env)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, CapacityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except PsmdpError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - last-resort exit-code mapping
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
