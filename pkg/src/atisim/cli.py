"""Command-line entry point: ``atisim <subcommand> [options]``.

Exit codes: 0 success, 1 configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .calibrator import BanditTable, ConsolidatedPolicy, consolidate
from .errors import ConfigError, DataError
from .harness import ExperimentConfig, load_config, run_experiment
from .harness.experiments import run_dynamic_lighting, run_grid, run_threshold_ablation, tradeoff_scores, train
from .harness.metrics import summarize
from .harness.presets import PRESETS
from .harness.replay import replay

logger = logging.getLogger("atisim")

# flag -> (config key, type)
_SCALAR_FLAGS = {
    "seed": ("seed", int),
    "laps": ("laps", int),
    "sensing_mode": ("sensing_mode", str),
    "inference_mode": ("inference_mode", str),
    "policy": ("policy_path", str),
    "remote_extra_delay_ms": ("remote_extra_delay_ms", float),
    "tau_conf": ("thresholds.tau_conf", float),
    "tau_valid": ("thresholds.tau_valid", float),
    "lux": ("scenario.lux", float),
    "scenario": ("scenario.scenario", str),
    "rtt_ms": ("network.rtt_ms", float),
}


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set {item!r}: expected KEY=VALUE")
        key, raw = item.split("=", 1)
        try:
            out[key.strip()] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(f"--set {item!r}: {exc}") from exc
    return out


def _config(args) -> ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = PRESETS[args.preset]()
    else:
        cfg = ExperimentConfig()
    overrides = {}
    for flag, (key, _) in _SCALAR_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    overrides.update(_parse_set(args.set))
    return cfg.with_overrides(**overrides) if overrides else cfg


def _load_policy(cfg: ExperimentConfig):
    return ConsolidatedPolicy.from_csv(cfg.policy_path) if cfg.policy_path else None


def _cmd_train(args) -> None:
    cfg = _config(args)
    levels = [float(v) for v in args.light_levels.split(",")] if args.light_levels else None
    res = train(cfg, light_levels=levels, out_dir=args.out)
    r = res.rewards
    print(f"trained {len(r)} laps; consolidated {len(res.policy.entries)} contexts -> {Path(args.out) / 'policy.csv'}")


def _cmd_eval(args) -> None:
    cfg = _config(args)
    res = run_experiment(cfg, out_dir=args.out, policy=_load_policy(cfg))
    print(summarize(res.metrics, f"{cfg.sensing_mode}-{cfg.inference_mode}"))


def _cmd_grid(args) -> None:
    cfg = _config(args)
    rows = run_grid(cfg, policy=_load_policy(cfg), out_dir=args.out)
    for r in rows:
        print(summarize(r.metrics, r.label))


def _cmd_ablate(args) -> None:
    cfg = _config(args)
    taus = [float(v) for v in args.taus.split(",")]
    rows = run_threshold_ablation(cfg, taus, policy=_load_policy(cfg), out_dir=args.out)
    for r, s in zip(rows, tradeoff_scores(rows, args.lam)):
        print(f"tau_conf={r.tau_conf:.2f} accuracy={r.accuracy:.3f} escalation_rate={r.escalation_rate:.3f} "
              f"score={s:.3f}")


def _cmd_dynamic(args) -> None:
    cfg = _config(args)
    policy = _load_policy(cfg)
    if policy is None:
        raise ConfigError("policy_path: the dynamic comparison needs a consolidated policy (--policy)")
    res = run_dynamic_lighting(cfg, policy, out_dir=args.out)
    for name, run in (("AE", res.ae), ("ATI", res.ati)):
        settle = res.settle_frames(name.lower())
        print(f"{summarize(run.metrics, name)} l3_accuracy={res.l3_accuracy(name.lower()):.3f} "
              f"max_settle_frames={max(settle, default=0)}")


def _cmd_replay(args) -> None:
    cfg = _config(args)
    print(summarize(replay(args.log, cfg.thresholds), "replay"))


def _cmd_consolidate(args) -> None:
    cfg = _config(args)
    b = cfg.bandit
    table = BanditTable.from_csv(args.table, eps0=b.eps0, eps_tau=b.eps_tau, history_len=b.history_len)
    # the greedy history is not persisted, so stability is judged on the final argmax only
    policy = consolidate(table, args.min_visits if args.min_visits is not None else b.min_visits, 0)
    path = policy.to_csv(args.output)
    print(f"consolidated {len(policy.entries)} contexts -> {path}")


class _Parser(argparse.ArgumentParser):
    # bad flags are configuration errors (exit 1); argparse would use 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="atisim", description="Layered sensing/inference simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="YAML config file")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="named scenario preset")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any field, e.g. thresholds.tau_conf=0.6 (repeatable)")
        for flag, (_, typ) in _SCALAR_FLAGS.items():
            sp.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
        if out:
            sp.add_argument("--out", default="runs", help="output directory for CSV logs")
        return sp

    sp = common(sub.add_parser("train", help="learn an L2 policy; writes policy.csv, table.csv and lap logs"))
    sp.add_argument("--light-levels", help="comma-separated lux values, one stationary run each")
    sp.set_defaults(func=_cmd_train)

    common(sub.add_parser("eval", help="run one configuration")).set_defaults(func=_cmd_eval)
    common(sub.add_parser("grid", help="sensing x inference sweep")).set_defaults(func=_cmd_grid)

    sp = common(sub.add_parser("ablate", help="tau_conf sweep over one recorded run"))
    sp.add_argument("--taus", default="0.3,0.4,0.5,0.6,0.7,0.8,0.9")
    sp.add_argument("--lam", type=float, default=0.5, help="escalation penalty in the trade-off score")
    sp.set_defaults(func=_cmd_ablate)

    common(sub.add_parser("dynamic", help="AE vs ATI under alternating light")).set_defaults(func=_cmd_dynamic)

    sp = common(sub.add_parser("replay", help="re-route a lap log under new thresholds"), out=False)
    sp.add_argument("log", help="lap log CSV")
    sp.set_defaults(func=_cmd_replay)

    sp = common(sub.add_parser("consolidate", help="freeze a saved bandit table into a policy file"), out=False)
    sp.add_argument("table", help="table CSV written by train")
    sp.add_argument("-o", "--output", default="policy.csv")
    sp.add_argument("--min-visits", type=int, default=None)
    sp.set_defaults(func=_cmd_consolidate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "out", None):
            Path(args.out).mkdir(parents=True, exist_ok=True)
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
