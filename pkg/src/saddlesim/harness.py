"""Experiment orchestration: configs, data, execution, CSV/manifest output.

An experiment is described by a single JSON document (see README for the
schema).  ``run_experiment`` builds the problem family and the network,
measures the relevant constants, derives each method's tuning, runs the
methods, and writes one CSV trace per method plus a manifest with the
measured quantities.  Runs are bit-deterministic for a fixed config.
"""

from __future__ import annotations

import copy
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .core import NetworkProblem, ProblemConstants, SplitPoint
from .metrics import (
    ReferenceSolution,
    consensus_error,
    distance_sq,
    operator_bound_at,
    reference_solution,
    saddle_gap,
)
from .network import (
    GossipMatrix,
    Topology,
    build_gossip_matrix,
    build_topology,
    diameter,
    load_edge_list,
)
from .problems import (
    build_hard_instance,
    build_quadratic_network,
    build_robust_regression,
    estimate_regression_constants,
    estimate_similarity,
    measure_quadratic_constants,
)
from .solvers import (
    BASELINE_KINDS,
    run_baseline,
    run_gossip_sliding,
    run_master_sliding,
    tune,
)
from .trace import RunTrace, load_trace, write_trace

__all__ = [
    "ConfigError",
    "ExperimentResult",
    "load_config",
    "generate_synthetic",
    "parse_libsvm",
    "partition_data",
    "run_experiment",
    "run_sweep",
    "compute_constants",
    "write_trace",
    "load_trace",
]

METHOD_NAMES = ("sliding_master", "sliding_gossip") + BASELINE_KINDS

_DEFAULTS = {
    "rounds": 200,
    "metric_cadence": 1,
    "epsilon": 1e-6,
    "reference_tol": 1e-10,
    "record_wall_time": False,
    "stop_dist_sq": None,
    "compute_gap": False,
    "omega_hint": None,
    "inner_iter_scale": 4.0,
    "gossip_scale": 1.0,
}


class ConfigError(ValueError):
    """The experiment configuration is invalid."""


class ExperimentResult:
    def __init__(self, output_dir: Path, trace_paths: Dict[str, Path], manifest: dict):
        self.output_dir = output_dir
        self.trace_paths = trace_paths
        self.manifest = manifest


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _validated(cfg: dict) -> dict:
    cfg = copy.deepcopy(cfg)
    for key, default in _DEFAULTS.items():
        cfg.setdefault(key, default)
    if "seed" not in cfg:
        raise ConfigError("config needs an explicit seed")
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    if cfg["rounds"] < 1:
        raise ConfigError("rounds must be at least 1")
    if cfg["metric_cadence"] < 1:
        raise ConfigError("metric_cadence must be at least 1")
    if "problem" not in cfg or "family" not in cfg["problem"]:
        raise ConfigError("config needs problem.family")
    if "network" not in cfg or "agents" not in cfg["network"]:
        raise ConfigError("config needs network.agents")
    methods = cfg.get("methods")
    if not methods:
        raise ConfigError("config needs a nonempty method list")
    for m in methods:
        if "name" not in m or m["name"] not in METHOD_NAMES:
            raise ConfigError(f"each method needs a name from {METHOD_NAMES}")
    return cfg


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


def generate_synthetic(n_local: int, dim: int, n_agents: int,
                       noise_amplitude: float, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Per-agent datasets: a shared standard-normal core plus feature noise.

    Agent 0 holds the unperturbed dataset; every other agent sees the same
    rows with i.i.d. Gaussian noise of standard deviation
    ``noise_amplitude`` added to the features.  Labels are shared
    unperturbed, so the noise amplitude is the only similarity knob.
    """
    if min(n_local, dim, n_agents) < 1:
        raise ValueError("n_local, dim and n_agents must be positive")
    if noise_amplitude < 0:
        raise ValueError("noise_amplitude must be nonnegative")
    rng = np.random.default_rng(seed)
    base_x = rng.standard_normal((n_local, dim))
    base_y = rng.standard_normal(n_local)
    datasets = [(base_x.copy(), base_y.copy())]
    for _ in range(1, n_agents):
        noise = rng.standard_normal((n_local, dim)) * noise_amplitude
        datasets.append((base_x + noise, base_y.copy()))
    return datasets


def parse_libsvm(path, n_features: Optional[int] = None):
    """Read a sparse "label idx:val" file into (csr_matrix, labels).

    Feature indices are 1-based in the file and shifted to 0-based columns;
    missing indices are zeros.  The feature count is the largest index seen
    unless ``n_features`` overrides it.  Malformed tokens raise ValueError
    with the offending line number.
    """
    rows, cols, vals, labels = [], [], [], []
    max_index = 0
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                labels.append(float(parts[0]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad label {parts[0]!r}") from exc
            row = len(labels) - 1
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ValueError(f"{path}:{lineno}: bad feature token {tok!r}")
                try:
                    j = int(idx)
                    v = float(val)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad feature token {tok!r}") from exc
                if j < 1:
                    raise ValueError(f"{path}:{lineno}: feature index {j} must be >= 1")
                rows.append(row)
                cols.append(j - 1)
                vals.append(v)
                max_index = max(max_index, j)
    if not labels:
        raise ValueError(f"{path}: empty file")
    d = n_features if n_features is not None else max_index
    if d < max_index:
        raise ValueError(f"{path}: n_features={d} below max index {max_index}")
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(len(labels), d))
    return matrix, np.asarray(labels)


def partition_data(matrix, labels, n_agents: int, scheme: str = "contiguous",
                   seed: Optional[int] = None) -> List[Tuple[object, np.ndarray]]:
    """Split rows into near-equal shards (sizes differ by at most one)."""
    n = matrix.shape[0]
    labels = np.asarray(labels)
    if n_agents > n:
        raise ValueError(f"cannot split {n} rows across {n_agents} agents")
    if scheme == "contiguous":
        order = np.arange(n)
    elif scheme == "shuffled":
        if seed is None:
            raise ValueError("shuffled partitioning needs a seed")
        order = np.random.default_rng(seed).permutation(n)
    else:
        raise ValueError(f"unknown partition scheme {scheme!r}")
    shards = []
    for idx in np.array_split(order, n_agents):
        shards.append((matrix[idx], labels[idx]))
    return shards


# ---------------------------------------------------------------------------
# Problem construction and constant measurement
# ---------------------------------------------------------------------------


def _build_regression_network(datasets, prob_cfg) -> NetworkProblem:
    lam = prob_cfg.get("reg_lambda", 0.2)
    beta = prob_cfg.get("reg_beta", 0.2)
    rw = prob_cfg.get("radius_w", 1.0)
    rr = prob_cfg.get("radius_r", 0.5)
    agents = [build_robust_regression(x, y, lam, beta, rw, rr) for x, y in datasets]
    set_x, set_y = agents[0].constraint_sets()
    return NetworkProblem(agents, set_x, set_y)


def _regression_constants(problem: NetworkProblem, datasets, mu_convention: str) -> ProblemConstants:
    per_agent = [estimate_regression_constants(a) for a in problem.agents]
    big_l = max(c.L for c in per_agent)
    mu_paper = per_agent[0].mu
    mu_safe = per_agent[0].mu_safe
    if sp.issparse(datasets[0][0]):
        pooled_x = sp.vstack([x for x, _ in datasets])
    else:
        pooled_x = np.vstack([x for x, _ in datasets])
    pooled_y = np.concatenate([y for _, y in datasets])
    ref = problem.agents[0]
    pooled = build_robust_regression(pooled_x, pooled_y, ref.lam, ref.beta,
                                     ref.radius_w, ref.radius_r)
    delta = max(estimate_similarity(a, pooled) for a in problem.agents)
    mu = mu_safe if mu_convention == "safe" else mu_paper
    # a Lipschitz bound may be enlarged freely; delta may not be shrunk
    big_l = max(big_l, delta)
    return ProblemConstants(
        L=big_l, mu=mu, delta=delta, omega=per_agent[0].omega, mu_safe=mu_safe,
    )


def _build_problem(cfg: dict):
    """Return (problem, constants, info) for the configured family."""
    prob_cfg = cfg["problem"]
    family = prob_cfg["family"]
    n_agents = cfg["network"]["agents"]
    seed = cfg["seed"]
    info = {"family": family}
    if family == "synthetic_regression":
        datasets = generate_synthetic(
            prob_cfg.get("n_local", 100), prob_cfg.get("dim", 40), n_agents,
            prob_cfg.get("noise_amplitude", 0.1), seed,
        )
        problem = _build_regression_network(datasets, prob_cfg)
        constants = _regression_constants(problem, datasets,
                                          prob_cfg.get("mu_convention", "safe"))
        info["noise_amplitude"] = prob_cfg.get("noise_amplitude", 0.1)
    elif family == "libsvm_regression":
        if "path" not in prob_cfg:
            raise ConfigError("libsvm_regression needs problem.path")
        matrix, labels = parse_libsvm(prob_cfg["path"], prob_cfg.get("n_features"))
        datasets = partition_data(matrix, labels, n_agents,
                                  prob_cfg.get("partition", "contiguous"), seed)
        problem = _build_regression_network(datasets, prob_cfg)
        constants = _regression_constants(problem, datasets,
                                          prob_cfg.get("mu_convention", "safe"))
        info["path"] = prob_cfg["path"]
    elif family == "quadratic":
        problem = build_quadratic_network(
            n_agents, prob_cfg.get("dim", 20), prob_cfg.get("mu", 1.0),
            prob_cfg.get("smoothness", 8.0), prob_cfg.get("coupling", 3.0),
            prob_cfg.get("heterogeneity", 0.5), seed,
        )
        constants = measure_quadratic_constants(problem)
    elif family == "hard_instance":
        if "dim" not in prob_cfg:
            raise ConfigError("hard_instance needs problem.dim")
        inst = build_hard_instance(n_agents, prob_cfg.get("mu", 1.0),
                                   prob_cfg.get("delta", 64.0), prob_cfg["dim"])
        problem = inst.network
        constants = measure_quadratic_constants(problem)
        info["role_distance"] = inst.l
    else:
        raise ConfigError(f"unknown problem family {family!r}")
    return problem, constants, info


def _build_network(cfg: dict) -> Tuple[Topology, GossipMatrix]:
    net_cfg = cfg["network"]
    kind = net_cfg.get("topology", "star")
    if net_cfg.get("edge_list"):
        topology = load_edge_list(net_cfg["edge_list"])
        if topology.n_agents != net_cfg["agents"]:
            raise ConfigError("edge list and network.agents disagree")
    else:
        try:
            topology = build_topology(kind, net_cfg["agents"], rows=net_cfg.get("rows"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    gossip = build_gossip_matrix(topology, lazy=net_cfg.get("lazy_gossip", False))
    return topology, gossip


def compute_constants(cfg: dict) -> dict:
    """Measured constants for a config, as a manifest-style dict."""
    cfg = _validated(cfg)
    problem, constants, info = _build_problem(cfg)
    topology, gossip = _build_network(cfg)
    out = {
        "family": info.get("family"),
        "agents": problem.n_agents,
        "dim_x": problem.dim_x,
        "dim_y": problem.dim_y,
        "topology": topology.kind,
        "diameter": diameter(topology),
        "rho": gossip.rho,
        "lambda2": gossip.lambda2,
        "L": constants.L,
        "mu": constants.mu,
        "mu_safe": constants.mu_safe,
        "delta": constants.delta,
        "omega": constants.omega,
    }
    return out


# ---------------------------------------------------------------------------
# Experiment execution
# ---------------------------------------------------------------------------


def _expand_methods(cfg: dict) -> List[dict]:
    expanded = []
    for entry in cfg["methods"]:
        scales = entry.get("step_scales")
        if scales and entry["name"] in BASELINE_KINDS:
            for s in scales:
                sub = copy.deepcopy(entry)
                sub.pop("step_scales")
                sub["step_scale"] = s
                sub["label"] = f"{entry.get('label', entry['name'])}_s{s:g}"
                expanded.append(sub)
        else:
            expanded.append(copy.deepcopy(entry))
    labels = [m.get("label", m["name"]) for m in expanded]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"method labels must be unique, got {labels}")
    return expanded


def _method_tuning(cfg, entry, constants, gossip, omega_hint):
    """Tuning parameters (or baseline step) plus manifest info for one method."""
    name = entry["name"]
    info = {"kind": name}
    if name in BASELINE_KINDS:
        step = entry.get("step")
        if step is None:
            step = entry.get("step_scale", 1.0) / (2.0 * constants.L)
        info["step"] = step
        return ("baseline", step), info
    mode_prefix = entry.get("mode", "sc")
    if mode_prefix not in ("sc", "cc"):
        raise ConfigError("method mode must be 'sc' or 'cc'")
    if name == "sliding_master":
        tuning = tune(f"{mode_prefix}-centralized", constants,
                      omega=omega_hint, epsilon=cfg["epsilon"],
                      inner_iter_scale=cfg["inner_iter_scale"])
    else:
        tuning = tune(f"{mode_prefix}-decentralized", constants,
                      rho=gossip.rho, n_agents=gossip.n_agents,
                      omega=omega_hint, epsilon=cfg["epsilon"],
                      inner_iter_scale=cfg["inner_iter_scale"],
                      gossip_scale=cfg["gossip_scale"])
    overrides = {}
    if entry.get("gamma") is not None:
        overrides["gamma"] = float(entry["gamma"])
    if entry.get("inner_iters") is not None:
        overrides["inner_iters"] = int(entry["inner_iters"])
    if entry.get("h0") is not None:
        overrides["gossip_h0"] = int(entry["h0"])
    if entry.get("h1") is not None:
        overrides["gossip_h1"] = int(entry["h1"])
    if overrides:
        tuning = replace(tuning, **overrides)
    info.update({
        "mode": tuning.mode, "gamma": tuning.gamma,
        "inner_precision": tuning.inner_precision,
        "inner_iters": tuning.inner_iters,
        "h0": tuning.gossip_h0, "h1": tuning.gossip_h1,
    })
    return ("tuned", tuning), info


def _metric_callback(cfg, entry, problem, constants, ref: ReferenceSolution, rounds: int):
    cadence = cfg["metric_cadence"]
    stop_level = entry.get("stop_dist_sq", cfg["stop_dist_sq"])
    want_gap = entry.get("compute_gap", cfg["compute_gap"])

    def callback(round_index, comm, local_iters, z_mean, z_nodes):
        if round_index % cadence and round_index != rounds:
            return None
        out = {"dist_sq": distance_sq(z_mean, ref)}
        if z_nodes is not None:
            out["consensus_err"] = consensus_error(z_nodes)
        if want_gap:
            out["gap"] = saddle_gap(problem, z_mean, constants)
        if stop_level is not None and out["dist_sq"] <= stop_level:
            out["stop"] = True
        return out

    return callback


def _run_method(cfg, entry, problem, constants, gossip, ref, omega_hint) -> Tuple[RunTrace, dict]:
    label = entry.get("label", entry["name"])
    name = entry["name"]
    rounds = entry.get("rounds", cfg["rounds"])
    (kind, param), info = _method_tuning(cfg, entry, constants, gossip, omega_hint)
    callback = _metric_callback(cfg, entry, problem, constants, ref, rounds)
    wall = cfg["record_wall_time"]
    if name == "sliding_master":
        trace = run_master_sliding(problem, param, rounds, callback=callback,
                                   keep_u_history=False, record_wall_time=wall)
    elif name == "sliding_gossip":
        seed = entry.get("seed", cfg["seed"] * 1000 + 17)
        info["seed"] = seed
        trace = run_gossip_sliding(problem, gossip, param, rounds, seed,
                                   callback=callback, record_wall_time=wall)
    else:
        trace = run_baseline(name, problem, param, rounds,
                             gossip=None if name == "egd_centralized" else gossip,
                             callback=callback, record_wall_time=wall)
    trace.method = label
    info["rounds"] = rounds
    return trace, info


def run_experiment(cfg: dict, output_dir) -> ExperimentResult:
    """Run every configured method and write CSV traces plus a manifest.

    Partial outputs are removed if any method fails.  Independent method
    runs may execute in parallel when the SADDLESIM_THREADS environment
    variable is set above 1; results are identical either way.
    """
    cfg = _validated(cfg)
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    problem, constants, info = _build_problem(cfg)
    topology, gossip = _build_network(cfg)
    ref = reference_solution(problem, cfg["reference_tol"], constants=constants)
    g_bound = operator_bound_at(problem, ref.z_star)
    constants = replace(constants, G=g_bound)

    omega_hint = cfg["omega_hint"]
    if omega_hint is None:
        try:
            omega_hint = problem.domain_diameter()
        except Exception:
            start_gap = math.sqrt(distance_sq(problem.initial_point(), ref))
            omega_hint = 4.0 * max(1.0, start_gap)

    methods = _expand_methods(cfg)
    jobs = [(entry.get("label", entry["name"]), entry) for entry in methods]

    def work(entry):
        label = entry.get("label", entry["name"])
        try:
            return _run_method(cfg, entry, problem, constants, gossip, ref, omega_hint)
        except Exception as exc:
            raise RuntimeError(f"method {label!r} failed: {exc}") from exc

    threads = int(os.environ.get("SADDLESIM_THREADS", "1"))
    written: List[Path] = []
    try:
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(work, [e for _, e in jobs]))
        else:
            results = [work(e) for _, e in jobs]
        trace_paths: Dict[str, Path] = {}
        method_infos: Dict[str, dict] = {}
        for (label, _), (trace, minfo) in zip(jobs, results):
            path = output_dir / f"{label}.csv"
            write_trace(trace, path)
            written.append(path)
            trace_paths[label] = path
            method_infos[label] = minfo
        manifest = {
            "seed": cfg["seed"],
            "epsilon": cfg["epsilon"],
            "agents": problem.n_agents,
            "dim_x": problem.dim_x,
            "dim_y": problem.dim_y,
            "family": info.get("family"),
            "topology": topology.kind,
            "diameter": diameter(topology),
            "rho": gossip.rho,
            "lambda2": gossip.lambda2,
            "L": constants.L,
            "mu": constants.mu,
            "mu_safe": constants.mu_safe,
            "delta": constants.delta,
            "G": constants.G,
            "omega": constants.omega,
            "omega_hint": omega_hint,
            "reference": {"method": ref.method, "residual": ref.achieved_residual,
                          "tol": cfg["reference_tol"]},
            "methods": method_infos,
        }
        manifest_path = output_dir / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        written.append(manifest_path)
        return ExperimentResult(output_dir, trace_paths, manifest)
    except Exception:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise


def run_sweep(cfg: dict, output_dir, amplitudes: Sequence[float],
              agent_counts: Optional[Sequence[int]] = None) -> List[ExperimentResult]:
    """Grid of experiments over noise amplitudes (and optionally agent counts)."""
    cfg = _validated(cfg)
    if cfg["problem"]["family"] not in ("synthetic_regression",):
        raise ConfigError("sweep over amplitudes needs the synthetic_regression family")
    output_dir = Path(output_dir)
    results = []
    counts = list(agent_counts) if agent_counts else [cfg["network"]["agents"]]
    for m in counts:
        for amp in amplitudes:
            sub = copy.deepcopy(cfg)
            sub["problem"]["noise_amplitude"] = amp
            sub["network"]["agents"] = m
            cell = output_dir / f"agents_{m}_amp_{amp:g}"
            results.append(run_experiment(sub, cell))
    return results
