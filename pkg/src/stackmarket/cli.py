"""Command-line driver: generate instances, run sweeps, equilibrium checks and reports.

Exit codes: 0 success, 1 invalid input or usage, 2 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import equilibrium as eq
from . import experiment as ex
from .datagen import ScenarioConfig, gen_instance, load_cities, scenario_preset
from .allocation import allocate
from .follower import MonteCarloDisallowed, OfferModel, TeamFormation
from .leader import LeaderProfile, cluster_tasks, tasks_from_profile
from .model import ValidationError, validate_instance
from .serialize import dumps, load_instance, save_instance

log = logging.getLogger("stackmarket")

OUT_ENV = "STACKMARKET_OUT"
DEFAULT_OUT = "out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _global_options(parser: argparse.ArgumentParser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=int, default=d(0), help="base random seed")
    parser.add_argument("--config", type=Path, default=d(None), help="JSON file with 'scenario' and 'sweep' keys")
    parser.add_argument("--threads", type=int, default=d(1), help="worker processes for sweeps")
    parser.add_argument("--offer-mode", choices=("det", "mc"), default=d("det"))
    parser.add_argument("--semantics", choices=eq.SEMANTICS, default=d(eq.PERMISSIVE))
    parser.add_argument("--out", type=Path, default=d(None), help=f"output directory (else ${OUT_ENV}, else ./out)")
    parser.add_argument("-v", "--verbose", action="store_true", default=d(False))


def _task_options(p: argparse.ArgumentParser):
    p.add_argument("--instance", type=Path, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--task", action="append", metavar="X1,X2,...",
                   help="customer ids forming one task; repeat per task, unlisted customers go alone")
    g.add_argument("--n-tasks", type=int, help="cluster customers into this many tasks")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stackmarket", description=__doc__.splitlines()[0])
    _global_options(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_options(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="generate a scenario instance file")
    p.add_argument("--scenario", type=int, default=1)
    p.add_argument("--customers", type=int, help="override the scenario's customer count")
    p.add_argument("--companies", type=int, help="override the scenario's company count")
    p.add_argument("--cities", type=Path, help="city CSV (default: bundled catalog)")
    p.add_argument("--output", type=Path, help="instance path (default: <out>/instance.json)")

    p = sub.add_parser("baseline", parents=[common], help="company-led baseline metrics")
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--payment-basis", choices=ex.PAYMENT_BASES, default="all")

    p = sub.add_parser("sweep", parents=[common], help="similarity-threshold sweep with NE detection")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", type=Path, help="reuse one instance for every replica")
    src.add_argument("--scenario", type=int, help="generate one instance per replica (seed + replica)")
    p.add_argument("--customers", type=int)
    p.add_argument("--companies", type=int)
    p.add_argument("--n-tasks", type=int)
    p.add_argument("--steps", type=int, help="threshold intervals; rows = steps + 1")
    p.add_argument("--lo", type=float)
    p.add_argument("--hi", type=float)
    p.add_argument("--replicas", type=int)
    p.add_argument("--payment-basis", choices=ex.PAYMENT_BASES)

    p = sub.add_parser("equilibrium", parents=[common], help="small-market equilibrium analysis")
    _task_options(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--brute-force", dest="mode", action="store_const", const="brute")
    mode.add_argument("--dynamics", dest="mode", action="store_const", const="dynamics")
    mode.add_argument("--stackelberg", dest="mode", action="store_const", const="stackelberg")
    p.add_argument("--max-moves", type=int, default=500)

    p = sub.add_parser("verify", parents=[common], help="stable-team property checks and potential sign consistency")
    _task_options(p)
    p.add_argument("--profiles", type=int, default=5, help="random profiles sampled for the sign check")

    p = sub.add_parser("report", parents=[common], help="render CSV and SVG from a saved sweep")
    p.add_argument("--sweep-json", type=Path, required=True)
    return parser


def _out_dir(args) -> Path:
    if args.out is not None:
        return args.out
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict) or set(data) - {"scenario", "sweep"}:
        raise ValidationError(f"{path}: expected an object with optional 'scenario' and 'sweep' keys")
    return data


def _scenario(args, config: dict) -> ScenarioConfig:
    base = scenario_preset(getattr(args, "scenario", None) or 1).to_dict()
    base.update(config.get("scenario", {}))
    cfg = ScenarioConfig.from_dict(base)
    if getattr(args, "customers", None):
        cfg = cfg.replace(n_customers=args.customers)
    if getattr(args, "companies", None):
        cfg = cfg.replace(n_companies=args.companies)
    return cfg.replace(seed=args.seed)


def _load(path: Path):
    if not path.exists():
        raise ValidationError(f"instance file not found: {path}")
    inst = load_instance(path)
    problems = validate_instance(inst)
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(map(str, problems[:5])))
    return inst


def _offer_model(args) -> OfferModel:
    return OfferModel.deterministic() if args.offer_mode == "det" else OfferModel.uniform(seed=args.seed)


def _tasks(args, inst):
    if args.n_tasks:
        if not 1 <= args.n_tasks <= len(inst.customers):
            raise ValidationError(f"--n-tasks must be between 1 and {len(inst.customers)}")
        spl = cluster_tasks(inst.customers, args.n_tasks, seed=args.seed)
        return tasks_from_profile(spl, inst), spl
    blocks, listed = [], set()
    for spec in args.task or []:
        ids = [x.strip() for x in spec.split(",") if x.strip()]
        for x in ids:
            inst.customer(x)
            if x in listed:
                raise ValidationError(f"customer {x} listed in two tasks")
            listed.add(x)
        blocks.append(frozenset(ids))
    blocks += [frozenset({x}) for x in inst.customer_ids if x not in listed]
    spl = LeaderProfile.canonical(blocks)
    return tasks_from_profile(spl, inst), spl


def _emit(out: Path, name: str, payload) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(dumps(payload), encoding="utf-8")
    return path


def cmd_gen(args, config):
    cfg = _scenario(args, config)
    cities = load_cities(args.cities) if args.cities else load_cities()
    inst = gen_instance(cfg, cities, seed=args.seed)
    path = save_instance(inst, args.output or _out_dir(args) / "instance.json")
    print(f"wrote {path} ({len(inst.customers)} customers, {len(inst.companies)} companies, "
          f"{len(inst.catalog)} services)")


def cmd_baseline(args, config):
    inst = _load(args.instance)
    metrics = ex.run_company_led_baseline(inst, payment_basis=args.payment_basis)
    path = _emit(_out_dir(args), "baseline.json", metrics.to_dict())
    print(dumps(metrics.to_dict()), end="")
    log.info("wrote %s", path)


def _sweep_config(args, config) -> ex.SweepConfig:
    values = dict(config.get("sweep", {}))
    overrides = {"n_tasks": args.n_tasks, "steps": args.steps, "threshold_lo": args.lo, "threshold_hi": args.hi,
                 "replicas": args.replicas, "payment_basis": args.payment_basis}
    values.update({k: v for k, v in overrides.items() if v is not None})
    values.update(seed=args.seed, threads=args.threads, semantics=args.semantics, offer_mode=args.offer_mode)
    known = {f for f in ex.SweepConfig.__dataclass_fields__}
    unknown = set(values) - known
    if unknown:
        raise ValidationError(f"unknown sweep keys: {', '.join(sorted(unknown))}")
    try:
        return ex.SweepConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"sweep configuration: {exc}") from None


def cmd_sweep(args, config):
    cfg = _sweep_config(args, config)
    if args.instance:
        instances = _load(args.instance)
    else:
        scen = _scenario(args, config)
        cities = load_cities()
        instances = [gen_instance(scen, cities, seed=args.seed + r) for r in range(cfg.replicas)]
    report = ex.run_sweep(instances, cfg)
    out = _out_dir(args)
    ex.emit_csv(report, out / "sweep.csv")
    ex.emit_svg(report, out / "sweep.svg")
    ex.emit_json(report, out / "sweep.json")
    ne = "none" if report.ne_threshold is None else f"{float(report.ne_threshold):.4f}"
    print(f"wrote {out / 'sweep.csv'}, sweep.svg, sweep.json; ne_threshold={ne}")
    for k, v in report.prf.items():
        print(f"prf {k}: {v:+.2f}%")


def cmd_equilibrium(args, config):
    inst = _load(args.instance)
    tasks, spl = _tasks(args, inst)
    model = _offer_model(args)
    mode = args.mode or "brute"
    if mode == "brute":
        entries = eq.brute_force_follower_ne(tasks, inst, model, args.semantics)
        payload = {"mode": mode, "semantics": args.semantics, "partitions": [
            {"partition": [sorted(b) for b in e.partition], "is_ne": e.is_ne, "phi": e.phi} for e in entries]}
        for e in entries:
            if e.is_ne:
                print("NE", " | ".join(",".join(sorted(b)) for b in e.partition), f"phi={e.phi}")
        if not any(e.is_ne for e in entries):
            print("no follower equilibrium among", len(entries), "partitions")
    elif mode == "dynamics":
        start = [frozenset({y}) for y in inst.company_ids]
        rep = eq.best_response_dynamics(start, tasks, inst, model, args.semantics, args.max_moves)
        payload = {"mode": mode, "semantics": args.semantics, **rep.to_dict()}
        print(f"{rep.reason}: is_ne={rep.is_ne} after {len(rep.steps)} moves;",
              " | ".join(",".join(b) for b in payload["partition"]))
    else:
        res = eq.solve_stackelberg_small(inst, model, args.semantics)
        payload = {"mode": mode, "semantics": args.semantics, **res.to_dict()}
        if res.found:
            print("SE leaders:", " | ".join(",".join(b) for b in payload["spl"]),
                  "; followers:", " | ".join(",".join(b) for b in payload["spf"]))
        else:
            print("no Stackelberg equilibrium found; witnesses written")
    path = _emit(_out_dir(args), "equilibrium.json", payload)
    log.info("wrote %s", path)


def cmd_verify(args, config):
    inst = _load(args.instance)
    tasks, spl = _tasks(args, inst)
    model = _offer_model(args)
    profile, is_ne = eq.follower_response(tasks, inst, model, args.semantics, seed=args.seed)
    formation = TeamFormation.from_blocks(profile.partition(inst.company_ids), inst)
    result = allocate(tasks, formation, inst)
    payload = {
        "semantics": args.semantics,
        "follower_profile": [sorted(b) for b in profile.partition(inst.company_ids)],
        "follower_is_ne": is_ne,
        "prop1": eq.check_prop1(profile, tasks, inst, formation),
        "prop2": eq.check_prop2(result, tasks, inst),
        "prop3": (eq.check_prop3(spl, inst, model,
                                 args.semantics) if len(inst.companies) <= eq.FOLLOWER_CAP else None),
        "potential_sign_consistency": eq.potential_sign_consistency(
            [(tasks, inst)], model, args.semantics, args.profiles, seed=args.seed).to_dict(),
    }
    _emit(_out_dir(args), "verify.json", payload)
    sign = payload["potential_sign_consistency"]
    print(f"follower NE: {is_ne}")
    print(f"prop1 violations: {len(payload['prop1'])}")
    print(f"prop2 violations: {len(payload['prop2'])}")
    if payload["prop3"] is not None:
        print(f"prop3 equal welfare: {payload['prop3']['equal']}")
    print(f"potential sign agreement: {sign['agreeing']}/{sign['checked']}")


def cmd_report(args, config):
    if not args.sweep_json.exists():
        raise ValidationError(f"sweep report not found: {args.sweep_json}")
    try:
        report = ex.load_report(args.sweep_json)
    except (KeyError, ValueError, TypeError) as exc:
        raise ValidationError(f"{args.sweep_json}: malformed sweep report ({exc})") from None
    out = _out_dir(args)
    ex.emit_csv(report, out / "sweep.csv")
    ex.emit_svg(report, out / "sweep.svg")
    print(f"wrote {out / 'sweep.csv'} and {out / 'sweep.svg'}")


COMMANDS = {"gen": cmd_gen, "baseline": cmd_baseline, "sweep": cmd_sweep, "equilibrium": cmd_equilibrium,
            "verify": cmd_verify, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        COMMANDS[args.command](args, _load_config(args.config))
    except (ValidationError, KeyError, MonteCarloDisallowed) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as an internal error
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
