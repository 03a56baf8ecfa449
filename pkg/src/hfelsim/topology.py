"""Backhaul topology design by greedy removal of slow links.

At the last edge round of each global round the controller jointly fixes
the device allocation and the active server graph. The allocation is
topology-invariant (the gossip time enters the objective as a per-cluster
additive term), so it is solved once per cluster and the search only
re-evaluates the predicted completion time as links are dropped. A batch
of the slowest links is removed per iteration; the batch size starts at
the square root of the (doubly counted) link total and halves whenever an
iteration fails to strictly improve the predicted time. Removals must
keep the graph connected and keep the consensus-disagreement bound under
the configured ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import cost, graphs
from .alloc import Allocation
from .cost import Hyperparams

__all__ = [
    "ConsensusMatrix",
    "TopologyDecision",
    "consensus_constraint_lhs",
    "predicted_global_time",
    "select_slowest_links",
    "design_topology",
]

CONSENSUS_TOL = 1e-12


@dataclass
class ConsensusMatrix:
    """Pairwise model-disagreement estimates with staleness tags.

    values    symmetric nonnegative matrix of pairwise model distances
    staleness rounds since each entry was last refreshed (0 = fresh)
    """

    values: np.ndarray
    staleness: np.ndarray = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.allclose(v, v.T) or np.any(np.diag(v) != 0) or np.any(v < 0):
            raise ValueError(
                "consensus matrix must be symmetric, nonnegative, zero-diagonal")
        self.values = v
        if self.staleness is None:
            self.staleness = np.zeros_like(v, dtype=np.int64)

    @classmethod
    def zeros(cls, num_servers: int) -> "ConsensusMatrix":
        return cls(np.zeros((num_servers, num_servers)))

    def refresh(self, pairs: np.ndarray, distances: np.ndarray) -> None:
        """Update entries for currently measurable pairs, age the rest.

        ``pairs`` is a 0/1 adjacency of pairs whose distance is known this
        round; other off-diagonal entries keep their last value with
        staleness incremented.
        """
        pairs = np.asarray(pairs, dtype=bool)
        self.staleness = self.staleness + 1
        self.values = np.where(pairs, distances, self.values)
        self.staleness[pairs] = 0
        np.fill_diagonal(self.staleness, 0)

    def mean_pairwise(self) -> float:
        n = self.values.shape[0]
        if n < 2:
            return 0.0
        return float(self.values.sum() / (n * (n - 1)))


@dataclass(frozen=True)
class TopologyDecision:
    """Outcome of one joint allocation/topology solve."""

    active_adjacency: np.ndarray
    allocations: tuple[Allocation, ...]
    cluster_times: np.ndarray
    predicted_time: float


def consensus_constraint_lhs(active: np.ndarray, upsilon: np.ndarray) -> float:
    """Disagreement mass left unmixed by the active graph.

    (1/C^2) * sum over all ordered pairs of (1 - A) * distance; directly
    linked pairs contribute nothing, the diagonal is zero by construction.
    """
    a = np.asarray(active)
    u = np.asarray(upsilon, dtype=float)
    c = a.shape[0]
    return float(((1 - a) * u).sum() / (c * c))


def predicted_global_time(cluster_past: np.ndarray,
                          cluster_last_times: np.ndarray,
                          active: np.ndarray, bandwidth: np.ndarray,
                          hyper: Hyperparams) -> float:
    """Completion time of the current global round under a topology.

    cluster_past        per-cluster sum of the already-run edge rounds
    cluster_last_times  per-cluster last-round time from the allocation
    """
    syncs = []
    for c in range(active.shape[0]):
        nbrs = np.flatnonzero(active[c])
        syncs.append(cost.server_sync_time(
            hyper.gossip_steps, hyper.model_bits, bandwidth[c, nbrs]))
    edge = np.column_stack([np.asarray(cluster_past, dtype=float),
                            np.asarray(cluster_last_times, dtype=float)])
    return cost.global_round_time(edge, syncs)


def select_slowest_links(active: np.ndarray, bandwidth: np.ndarray, e: int,
                         upsilon: np.ndarray, upsilon_max: float) -> list:
    """Up to ``e`` slowest active links whose joint removal keeps the
    consensus bound under the ceiling, slowest first.

    Eligibility is cumulative in selection order: each candidate is tested
    with all previously selected links already removed, so the returned
    batch is jointly feasible. Bandwidth ties break lexicographically.
    """
    if e <= 0:
        return []
    a = np.asarray(active).copy()
    edges = [(bandwidth[i, j], i, j)
             for i in range(a.shape[0]) for j in range(i + 1, a.shape[0])
             if a[i, j]]
    edges.sort()
    selected = []
    for _, i, j in edges:
        if len(selected) >= e:
            break
        a[i, j] = a[j, i] = 0
        if consensus_constraint_lhs(a, upsilon) <= upsilon_max + CONSENSUS_TOL:
            selected.append((i, j))
        else:
            a[i, j] = a[j, i] = 1
    return selected


def design_topology(graph: graphs.BackhaulGraph,
                    upsilon: np.ndarray, upsilon_max: float,
                    cluster_past: np.ndarray,
                    cluster_last_times: Sequence[float],
                    allocations: Sequence[Allocation],
                    hyper: Hyperparams) -> TopologyDecision:
    """Greedy slow-link pruning starting from the base graph.

    ``cluster_last_times`` and ``allocations`` are the per-cluster
    last-round solve results; they do not depend on the server graph, so
    the search only re-prices the gossip term.
    """
    base = graph.base_adjacency
    bw = graph.bandwidth
    if consensus_constraint_lhs(base, upsilon) > upsilon_max + CONSENSUS_TOL:
        raise ValueError("base graph already violates the consensus ceiling")

    last = np.asarray(cluster_last_times, dtype=float)

    def predicted(a):
        return predicted_global_time(cluster_past, last, a, bw, hyper)

    a_star = base.copy()
    t_star = predicted(a_star)
    flag = True
    e = 0
    num_edges = int(base.sum()) // 2
    max_iters = 4 * (num_edges + 1) * (int(math.log2(num_edges + 1)) + 2)
    iters = 0
    while True:
        iters += 1
        if iters > max_iters:
            raise RuntimeError("topology search failed to terminate")
        e = math.isqrt(int(a_star.sum())) if flag else e // 2
        if e < 1:
            break
        candidate = a_star.copy()
        for i, j in select_slowest_links(candidate, bw, e, upsilon,
                                         upsilon_max):
            candidate[i, j] = candidate[j, i] = 0
            if not graphs.is_connected(candidate):
                candidate[i, j] = candidate[j, i] = 1
        t_new = predicted(candidate)
        if t_new < t_star:
            a_star, t_star = candidate, t_new
            flag = True
        else:
            flag = False
        if not flag and e == 1:
            break

    assert graphs.is_connected(a_star)
    return TopologyDecision(
        active_adjacency=a_star,
        allocations=tuple(allocations),
        cluster_times=last,
        predicted_time=t_star,
    )
