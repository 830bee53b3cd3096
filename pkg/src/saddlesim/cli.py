"""Command-line interface.

Verbs:
  run          execute one experiment config, write CSV traces + manifest
  sweep        grid of experiments over noise amplitudes / agent counts
  constants    print the measured constants for a config
  gossip-check verify the accelerated-gossip contraction bound empirically
  lb-check     zero-propagation certificate on the worst-case chain instance

Exit codes: 0 success, 2 configuration error, 3 numerical failure or
failed check.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .harness import ConfigError, compute_constants, load_config, run_experiment, run_sweep
from .metrics import support_size
from .network import acc_gossip, build_gossip_matrix, build_topology
from .problems import build_hard_instance, hard_instance_min_dimension
from .solvers import DivergenceError, run_baseline


class CheckFailure(RuntimeError):
    """An empirical verification did not hold."""


def _apply_overrides(cfg: dict, pairs):
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        key, raw = pair.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} walks through a non-object")
        node[parts[-1]] = value
    return cfg


def _cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.set)
    out = args.output or cfg.get("output", "out")
    result = run_experiment(cfg, out)
    for label, path in result.trace_paths.items():
        print(f"{label}: {path}")
    print(f"manifest: {result.output_dir / 'manifest.json'}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.set)
    out = args.output or cfg.get("output", "out")
    amplitudes = [float(a) for a in args.amplitudes.split(",")]
    agents = [int(a) for a in args.agents.split(",")] if args.agents else None
    results = run_sweep(cfg, out, amplitudes, agents)
    for res in results:
        print(f"{res.output_dir}: delta={res.manifest['delta']:.6g}")
    return 0


def _cmd_constants(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args.set)
    table = compute_constants(cfg)
    print(json.dumps(table, indent=2, sort_keys=True))
    return 0


def _cmd_gossip_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    budgets = [int(h) for h in args.budgets.split(",")]
    sizes = [int(m) for m in args.agents.split(",")]
    failures = 0
    for kind in args.topologies.split(","):
        for m in sizes:
            if kind == "ring" and m < 3:
                continue
            gossip = build_gossip_matrix(build_topology(kind, m), lazy=args.lazy)
            for budget in budgets:
                x = rng.standard_normal((m, args.width))
                y = acc_gossip(x, gossip, budget)
                xbar = x.mean(axis=0)
                before = float(np.sum((x - xbar) ** 2))
                after = float(np.sum((y - y.mean(axis=0)) ** 2))
                bound = (1.0 - np.sqrt(gossip.rho)) ** (2 * budget) * before
                mean_drift = float(np.linalg.norm(y.mean(axis=0) - xbar))
                ok = after <= args.slack * bound and mean_drift <= 1e-10
                status = "ok  " if ok else "FAIL"
                print(f"{status} {kind:8s} M={m:<3d} H={budget:<3d} "
                      f"rho={gossip.rho:.4f} error/bound="
                      f"{after / bound if bound > 0 else 0.0:.4f} mean_drift={mean_drift:.2e}")
                failures += not ok
    if failures:
        raise CheckFailure(f"{failures} gossip contraction case(s) exceeded the bound")
    return 0


def _cmd_lb_check(args) -> int:
    multiples = [int(k) for k in args.multiples.split(",")]
    delta = args.mu * args.delta_over_mu
    # dimension must be large enough for the largest budget tested
    probe = build_hard_instance(args.agents, args.mu, delta, dim=2)
    comm_budget = max(multiples) * probe.l
    dim = args.dim or hard_instance_min_dimension(comm_budget, args.mu, delta)
    instance = build_hard_instance(args.agents, args.mu, delta, dim=dim)
    gossip = build_gossip_matrix(instance.topology)
    step = 1.0 / (2.0 * max(delta, args.mu))
    failures = 0
    for mult in multiples:
        comm = mult * instance.l
        if comm % 2:
            raise ConfigError("communication budgets must be even (2 exchanges per iteration)")
        trace = run_baseline("egd_decentralized", instance.network, step, comm // 2,
                             gossip=gossip)
        support = max(support_size(node, args.tol) for node in trace.final_nodes)
        ok = support <= mult
        status = "ok  " if ok else "FAIL"
        print(f"{status} comm_rounds={comm:<5d} allowed_support={mult} measured={support}")
        failures += not ok
    if failures:
        raise CheckFailure(f"{failures} zero-propagation case(s) exceeded the support bound")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saddlesim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("-c", "--config", required=True)
    p_run.add_argument("-o", "--output", default=None)
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry (dotted keys)")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid over noise amplitudes / agent counts")
    p_sweep.add_argument("-c", "--config", required=True)
    p_sweep.add_argument("-o", "--output", default=None)
    p_sweep.add_argument("--amplitudes", default="0.1,1.0,10.0")
    p_sweep.add_argument("--agents", default=None)
    p_sweep.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_const = sub.add_parser("constants", help="print measured constants for a config")
    p_const.add_argument("-c", "--config", required=True)
    p_const.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_const.set_defaults(func=_cmd_constants)

    p_gossip = sub.add_parser("gossip-check", help="verify gossip contraction empirically")
    p_gossip.add_argument("--topologies", default="ring,star,grid,line")
    p_gossip.add_argument("--agents", default="8,16,64")
    p_gossip.add_argument("--budgets", default="1,5,10,20")
    p_gossip.add_argument("--width", type=int, default=8)
    p_gossip.add_argument("--seed", type=int, default=0)
    p_gossip.add_argument("--slack", type=float, default=1.05)
    p_gossip.add_argument("--lazy", action="store_true")
    p_gossip.set_defaults(func=_cmd_gossip_check)

    p_lb = sub.add_parser("lb-check", help="zero-propagation certificate")
    p_lb.add_argument("--agents", type=int, default=33)
    p_lb.add_argument("--mu", type=float, default=1.0)
    p_lb.add_argument("--delta-over-mu", type=float, default=64.0)
    p_lb.add_argument("--multiples", default="1,2,3")
    p_lb.add_argument("--dim", type=int, default=None)
    p_lb.add_argument("--tol", type=float, default=1e-14)
    p_lb.set_defaults(func=_cmd_lb_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CheckFailure, DivergenceError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
