"""End-to-end simulation: scenario generation, per-round control, training
execution, baselines, and trace persistence.

Latency is accounted analytically from the cost formulas (no wall-clock
sleeping). All randomness derives from the scenario seed through named
sub-streams, and the environment stream is consumed in a fixed order
independent of the control method, so paired-seed method comparisons see
identical channels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import cost, graphs, training
from .alloc import (Allocation, EnergyLedger, InfeasibleAllocationError,
                    allocation_energies, allocation_round_time,
                    best_frequency_for_energy, energy_cap, solve_with_caps)
from .config import ScenarioConfig
from .cost import ChannelState, DeviceProfile, Hyperparams, db_to_linear
from .data import Dataset, make_synthetic_dataset, partition
from .topology import ConsensusMatrix, consensus_constraint_lhs, design_topology
from .training import ModelState

__all__ = [
    "World",
    "RoundTrace",
    "RunResult",
    "build_world",
    "draw_round_environment",
    "run",
    "write_trace_csv",
    "read_trace_csv",
    "traces_equal",
    "summary_row",
    "emit_outputs",
]

TRACE_SCHEMA_VERSION = 1


@dataclass
class World:
    """Deterministic materialization of a scenario: data, devices, graph."""

    config: ScenarioConfig
    hyper: Hyperparams
    profiles: list
    clusters: list
    shards: list
    train_aug: np.ndarray
    train_labels: np.ndarray
    test_aug: np.ndarray
    test_labels: np.ndarray
    base_adjacency: np.ndarray
    initial_model: ModelState
    env_seed: np.random.SeedSequence
    device_seeds: list
    mll_iters: np.ndarray


@dataclass
class RoundTrace:
    """Everything logged for one (global round, edge round) pair.

    Device-indexed arrays have length N, cluster-indexed length C.
    ``sync_time``, ``global_round_time`` and the consensus fields are only
    populated on the last edge round of each global round; ``cum_time``
    and the learner metrics carry the latest known value on other rows.
    """

    t: int
    r: int
    snr: np.ndarray
    bandwidth: np.ndarray
    frequency: np.ndarray
    local_iters: np.ndarray
    energy: np.ndarray
    cum_energy: np.ndarray
    cluster_time: np.ndarray
    sync_time: np.ndarray
    global_round_time: float
    cum_time: float
    active: np.ndarray
    link_bandwidth: np.ndarray
    consensus_avg: float
    consensus_bound: float
    consensus_limit: float
    train_loss: float
    test_accuracy: float


@dataclass
class RunResult:
    config: ScenarioConfig
    traces: list
    final_models: list
    world: World
    predicted_times: list = field(default_factory=list)
    model_history: list = field(default_factory=list)


def _augment(x):
    return np.hstack([x, np.ones((len(x), 1))])


def build_world(config: ScenarioConfig) -> World:
    """Materialize dataset, shards, device profiles, and the base graph."""
    n = config.num_devices
    root = np.random.SeedSequence(config.seed)
    env_s, data_s, profile_s, graph_s, init_s, *device_s = root.spawn(5 + n)

    ds_cfg = config.dataset
    tf = ds_cfg.test_fraction
    test_pc = max(1, round(ds_cfg.samples_per_class * tf / (1.0 - tf)))
    full = make_synthetic_dataset(
        ds_cfg.num_classes, ds_cfg.dim,
        ds_cfg.samples_per_class + test_pc, ds_cfg.separation,
        int(data_s.generate_state(1)[0]))
    n_train = ds_cfg.samples_per_class * ds_cfg.num_classes
    train = Dataset(full.features[:n_train], full.labels[:n_train],
                    full.num_classes)
    test_x, test_y = full.features[n_train:], full.labels[n_train:]

    data_rng = np.random.default_rng(data_s.spawn(1)[0])
    shards = partition(train, config.partition.spec(), config.num_clusters,
                       config.devices_per_cluster, data_rng)

    prof_rng = np.random.default_rng(profile_s)
    dev = config.devices
    profiles = []
    for _ in range(n):
        mu = prof_rng.uniform(*dev.mu_range)
        alpha = dev.alpha_base * prof_rng.uniform(*dev.alpha_scale_range)
        profiles.append(DeviceProfile(mu, alpha, dev.power, dev.f_min,
                                      dev.f_max, dev.energy_budget))

    g = config.graph
    c = config.num_clusters
    if g.type == "complete" or c == 1:
        base = graphs.complete_graph(c)
    elif g.type == "erdos_renyi":
        base = graphs.erdos_renyi_connected(
            c, g.edge_prob, np.random.default_rng(graph_s))
    else:
        base = np.asarray(g.adjacency, dtype=np.int64)
        if c > 1 and not graphs.is_connected(base):
            raise ValueError("explicit base graph must be connected")

    init_rng = np.random.default_rng(init_s)
    model = training.init_model(ds_cfg.dim, ds_cfg.num_classes, init_rng)

    hyper = config.schedule.hyperparams()
    comp = np.array([hyper.local_iters * hyper.batch_size * p.mu / p.f_max
                     for p in profiles])
    t_slow = comp.max()
    mll_iters = np.maximum(1, np.floor(
        t_slow * np.array([p.f_max for p in profiles])
        / (hyper.batch_size * np.array([p.mu for p in profiles])))
    ).astype(np.int64)

    clusters = [list(range(i * config.devices_per_cluster,
                           (i + 1) * config.devices_per_cluster))
                for i in range(c)]
    return World(config, hyper, profiles, clusters, shards,
                 _augment(train.features), train.labels,
                 _augment(test_x), test_y,
                 base, model, env_s, list(device_s), mll_iters)


def draw_round_environment(config: ScenarioConfig, base_adjacency: np.ndarray,
                           t: int, r: int, rng: np.random.Generator):
    """Draw (linear per-device SNR, backhaul matrix) for an edge round.

    The backhaul matrix is redrawn only at the first edge round of each
    global round; later rounds return None for it and reuse the current
    one. Draw order is fixed so every method consumes the same stream.
    """
    ch = config.channel
    backhaul = None
    if r == 0:
        c = base_adjacency.shape[0]
        backhaul = np.zeros((c, c))
        for i in range(c):
            for j in range(i + 1, c):
                if base_adjacency[i, j]:
                    bw = rng.uniform(*ch.backhaul_mbps_range) * 1e6
                    backhaul[i, j] = backhaul[j, i] = bw
    snr = db_to_linear(rng.uniform(*ch.snr_db_range,
                                   size=config.num_devices))
    return snr, backhaul


def _uniform_frequency_alloc(profiles, hyper, snr_c, budget, caps_c,
                             iters_c, device_ids):
    """Even bandwidth split; per-device max energy-feasible frequency."""
    n = len(profiles)
    b = np.full(n, budget / n)
    f = np.empty(n)
    for i, p in enumerate(profiles):
        try:
            f[i] = best_frequency_for_energy(p, hyper, b[i], snr_c[i],
                                             caps_c[i], int(iters_c[i]))
        except InfeasibleAllocationError as exc:
            raise InfeasibleAllocationError(device_ids[i], exc.reason) from exc
    return Allocation(b, f)


def _consensus_limit(config, t, anchor):
    sched = config.consensus_limit
    if sched.schedule == "constant":
        return sched.value
    if anchor is None:
        return math.inf
    if sched.schedule == "proportional":
        return sched.gamma * anchor
    # linear_decay
    frac = 1.0 - t / config.schedule.global_rounds
    return sched.gamma * anchor * max(frac, 0.0)


def run(config: ScenarioConfig, world: World | None = None,
        record_models: bool = False) -> RunResult:
    """Execute one scenario end to end and return its trace."""
    if world is None:
        world = build_world(config)
    hyper = world.hyper
    method = config.method
    C = config.num_clusters
    N = config.num_devices
    R = hyper.edge_rounds
    uses_designer = method in ("fedrt", "static_r") and C > 1
    per_device_iters = (world.mll_iters if method == "mll_sgd"
                        else np.full(N, hyper.local_iters, dtype=np.int64))

    env_rng = np.random.default_rng(world.env_seed)
    device_rngs = [np.random.default_rng(s) for s in world.device_seeds]
    ledger = EnergyLedger(np.array([p.energy_budget for p in world.profiles]))
    server_models = [world.initial_model for _ in range(C)]
    upsilon = ConsensusMatrix.zeros(C)
    prev_active = world.base_adjacency.copy()
    anchor = None

    cum_time = 0.0
    cum_energy = np.zeros(N)
    avg0 = training.edge_aggregate(server_models)
    train_loss = training.softmax_loss(avg0, world.train_aug,
                                       world.train_labels)
    test_acc = training.accuracy(avg0, world.test_aug, world.test_labels)

    traces = []
    predicted_times = []
    model_history = []
    backhaul = np.zeros((C, C))

    for t in range(hyper.global_rounds):
        cluster_past = np.zeros(C)
        cluster_rows = np.zeros((C, R))
        for r in range(R):
            snr, drawn = draw_round_environment(
                config, world.base_adjacency, t, r, env_rng)
            if drawn is not None:
                backhaul = drawn
            last = r == R - 1
            caps = energy_cap(ledger, t, r, hyper.global_rounds, R, last)

            active = world.base_adjacency
            cons_bound = np.nan
            cons_limit = np.nan
            decision = None
            if last and C > 1:
                dist = np.zeros((C, C))
                for i in range(C):
                    for j in range(i + 1, C):
                        d = training.consensus_pairwise(server_models[i],
                                                        server_models[j])
                        dist[i, j] = dist[j, i] = d
                upsilon.refresh(prev_active.astype(bool), dist)
                if anchor is None and upsilon.mean_pairwise() > 0:
                    anchor = upsilon.mean_pairwise()
                cons_limit = _consensus_limit(config, t, anchor)

            allocations = []
            for c in range(C):
                ids = world.clusters[c]
                cluster_profiles = [world.profiles[i] for i in ids]
                snr_c = snr[ids]
                caps_c = caps[ids]
                iters_c = per_device_iters[ids]
                budget = config.channel.server_bandwidth_hz
                if method in ("fedrt", "static_t"):
                    channel = ChannelState(snr_c, budget)
                    allocations.append(
                        solve_with_caps(cluster_profiles, hyper, channel,
                                        caps_c))
                else:
                    allocations.append(_uniform_frequency_alloc(
                        cluster_profiles, hyper, snr_c, budget, caps_c,
                        iters_c, ids))

            cluster_times = np.array([
                allocation_round_time(
                    [world.profiles[i] for i in world.clusters[c]], hyper,
                    allocations[c], snr[world.clusters[c]],
                    per_device_iters[world.clusters[c]])
                for c in range(C)])

            if last and uses_designer:
                graph = graphs.BackhaulGraph(world.base_adjacency,
                                             world.base_adjacency, backhaul)
                decision = design_topology(
                    graph, upsilon.values, cons_limit, cluster_past,
                    cluster_times, allocations, hyper)
                active = decision.active_adjacency
                predicted_times.append(decision.predicted_time)
            if last and C > 1:
                cons_bound = consensus_constraint_lhs(active, upsilon.values)

            energies = np.zeros(N)
            bw_row = np.zeros(N)
            f_row = np.zeros(N)
            for c in range(C):
                ids = world.clusters[c]
                e = allocation_energies(
                    [world.profiles[i] for i in ids], hyper, allocations[c],
                    snr[ids], per_device_iters[ids])
                energies[ids] = e
                bw_row[ids] = allocations[c].bandwidth
                f_row[ids] = allocations[c].frequency
            ledger.charge(energies)
            cum_energy = cum_energy + energies
            cluster_rows[:, r] = cluster_times

            # run the edge round: broadcast, local SGD, aggregate
            for c in range(C):
                locals_ = []
                for i in world.clusters[c]:
                    locals_.append(training.local_sgd(
                        server_models[c], world.shards[i],
                        int(per_device_iters[i]), hyper.batch_size,
                        hyper.lr, config.schedule.momentum, device_rngs[i]))
                server_models[c] = training.edge_aggregate(locals_)

            sync_times = np.zeros(C)
            grt = 0.0
            cons_avg = np.nan
            if last:
                if C > 1:
                    cons_avg = training.consensus_average(server_models)
                    mixing = graphs.metropolis_mixing(active)
                    server_models = training.inter_server_mix(
                        server_models, mixing, hyper.gossip_steps)
                    for c in range(C):
                        nbrs = np.flatnonzero(active[c])
                        sync_times[c] = cost.server_sync_time(
                            hyper.gossip_steps, hyper.model_bits,
                            backhaul[c, nbrs])
                    grt = cost.global_round_time(
                        np.column_stack([cluster_past, cluster_times]),
                        sync_times)
                else:
                    cons_avg = 0.0
                    grt = float(cluster_past[0] + cluster_times[0])
                if decision is not None:
                    assert grt == decision.predicted_time, \
                        "designer prediction drifted from realized time"
                cum_time += grt
                avg = training.edge_aggregate(server_models)
                train_loss = training.softmax_loss(avg, world.train_aug,
                                                   world.train_labels)
                test_acc = training.accuracy(avg, world.test_aug,
                                             world.test_labels)
                prev_active = active
                if record_models:
                    model_history.append([m.params.copy()
                                          for m in server_models])
            cluster_past = cluster_past + cluster_times

            traces.append(RoundTrace(
                t=t, r=r, snr=snr.copy(), bandwidth=bw_row,
                frequency=f_row, local_iters=per_device_iters.copy(),
                energy=energies, cum_energy=cum_energy.copy(),
                cluster_time=cluster_times, sync_time=sync_times,
                global_round_time=grt, cum_time=cum_time,
                active=active.copy(), link_bandwidth=backhaul.copy(),
                consensus_avg=cons_avg, consensus_bound=cons_bound,
                consensus_limit=cons_limit, train_loss=train_loss,
                test_accuracy=test_acc))

    result = RunResult(config, traces, server_models, world, predicted_times)
    if record_models:
        result.model_history = model_history
    return result


# --- trace serialization ---------------------------------------------------

def _upper_pairs(c):
    return [(i, j) for i in range(c) for j in range(i + 1, c)]


def _trace_header(num_devices, num_clusters):
    cols = ["schema_version", "t", "r"]
    for name in ("snr", "bw", "freq", "iters", "energy", "cum_energy"):
        cols += [f"{name}_d{i}" for i in range(num_devices)]
    cols += [f"cluster_time_c{c}" for c in range(num_clusters)]
    cols += [f"sync_time_c{c}" for c in range(num_clusters)]
    cols += ["global_round_time", "cum_time", "topology"]
    cols += [f"link_bw_{i}_{j}" for i, j in _upper_pairs(num_clusters)]
    cols += ["consensus_avg", "consensus_bound", "consensus_limit",
             "train_loss", "test_accuracy"]
    return cols


def _fmt(x):
    return format(float(x), ".17g")


def write_trace_csv(traces, path):
    n = len(traces[0].snr)
    c = len(traces[0].cluster_time)
    pairs = _upper_pairs(c)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_trace_header(n, c))
        for tr in traces:
            row = [TRACE_SCHEMA_VERSION, tr.t, tr.r]
            for arr in (tr.snr, tr.bandwidth, tr.frequency):
                row += [_fmt(v) for v in arr]
            row += [int(v) for v in tr.local_iters]
            for arr in (tr.energy, tr.cum_energy):
                row += [_fmt(v) for v in arr]
            row += [_fmt(v) for v in tr.cluster_time]
            row += [_fmt(v) for v in tr.sync_time]
            row += [_fmt(tr.global_round_time), _fmt(tr.cum_time)]
            row += ["".join(str(int(tr.active[i, j])) for i, j in pairs)]
            row += [_fmt(tr.link_bandwidth[i, j]) for i, j in pairs]
            row += [_fmt(tr.consensus_avg), _fmt(tr.consensus_bound),
                    _fmt(tr.consensus_limit), _fmt(tr.train_loss),
                    _fmt(tr.test_accuracy)]
            writer.writerow(row)


def read_trace_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = sum(1 for h in header if h.startswith("snr_d"))
        c = sum(1 for h in header if h.startswith("cluster_time_c"))
        pairs = _upper_pairs(c)
        traces = []
        for row in reader:
            vals = dict(zip(header, row))
            if int(vals["schema_version"]) != TRACE_SCHEMA_VERSION:
                raise ValueError("unsupported trace schema version")

            def dev(name, cast=float):
                return np.array([cast(vals[f"{name}_d{i}"])
                                 for i in range(n)])

            active = np.zeros((c, c), dtype=np.int64)
            link = np.zeros((c, c))
            for bit, (i, j) in zip(vals["topology"], pairs):
                active[i, j] = active[j, i] = int(bit)
            for i, j in pairs:
                link[i, j] = link[j, i] = float(vals[f"link_bw_{i}_{j}"])
            traces.append(RoundTrace(
                t=int(vals["t"]), r=int(vals["r"]),
                snr=dev("snr"), bandwidth=dev("bw"), frequency=dev("freq"),
                local_iters=dev("iters", int).astype(np.int64),
                energy=dev("energy"), cum_energy=dev("cum_energy"),
                cluster_time=np.array([float(vals[f"cluster_time_c{i}"])
                                       for i in range(c)]),
                sync_time=np.array([float(vals[f"sync_time_c{i}"])
                                    for i in range(c)]),
                global_round_time=float(vals["global_round_time"]),
                cum_time=float(vals["cum_time"]),
                active=active, link_bandwidth=link,
                consensus_avg=float(vals["consensus_avg"]),
                consensus_bound=float(vals["consensus_bound"]),
                consensus_limit=float(vals["consensus_limit"]),
                train_loss=float(vals["train_loss"]),
                test_accuracy=float(vals["test_accuracy"])))
    return traces


def traces_equal(a, b) -> bool:
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        for name in ("t", "r"):
            if getattr(x, name) != getattr(y, name):
                return False
        for name in ("snr", "bandwidth", "frequency", "local_iters",
                     "energy", "cum_energy", "cluster_time", "sync_time",
                     "active", "link_bandwidth"):
            if not np.array_equal(getattr(x, name), getattr(y, name)):
                return False
        for name in ("global_round_time", "cum_time", "consensus_avg",
                     "consensus_bound", "consensus_limit", "train_loss",
                     "test_accuracy"):
            xv, yv = getattr(x, name), getattr(y, name)
            if not (xv == yv or (math.isnan(xv) and math.isnan(yv))):
                return False
    return True


def summary_row(config: ScenarioConfig, traces) -> dict:
    last = traces[-1]
    return {
        "method": config.method,
        "seed": config.seed,
        "total_time": last.cum_time,
        "total_energy": float(last.cum_energy.sum()),
        "best_accuracy": max(tr.test_accuracy for tr in traces),
        "final_accuracy": last.test_accuracy,
    }


def emit_outputs(runs, out_dir):
    """Persist per-run trace CSVs, a summary table, and static plots.

    ``runs`` is a sequence of (config, traces) pairs.
    """
    import os

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    summaries = []
    for cfg, traces in runs:
        name = f"trace_{cfg.method}_seed{cfg.seed}.csv"
        write_trace_csv(traces, os.path.join(out_dir, name))
        summaries.append(summary_row(cfg, traces))

    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(summaries[0].keys()))
        writer.writeheader()
        for row in summaries:
            writer.writerow(row)

    specs = [("test_accuracy", "accuracy_vs_time.png", "test accuracy"),
             ("train_loss", "loss_vs_time.png", "train loss")]
    for attr, fname, label in specs:
        fig, ax = plt.subplots(figsize=(6, 4))
        for cfg, traces in runs:
            xs = [tr.cum_time for tr in traces]
            ys = [getattr(tr, attr) for tr in traces]
            ax.plot(xs, ys, label=f"{cfg.method}/s{cfg.seed}")
        ax.set_xlabel("simulated time (s)")
        ax.set_ylabel(label)
        ax.legend(fontsize=6)
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, fname), dpi=120)
        plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    for cfg, traces in runs:
        ys = [tr.cum_energy.sum() for tr in traces]
        ax.plot(range(len(ys)), ys, label=f"{cfg.method}/s{cfg.seed}")
    ax.set_xlabel("edge round")
    ax.set_ylabel("cumulative energy (J)")
    ax.legend(fontsize=6)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "energy_vs_round.png"), dpi=120)
    plt.close(fig)

    return summaries
