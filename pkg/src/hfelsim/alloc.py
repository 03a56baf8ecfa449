"""Per-edge-round device resource allocation.

Chooses each device's uplink bandwidth share and CPU frequency so the
cluster's round time (slowest device) is minimized, subject to the shared
bandwidth budget, DVFS frequency bounds, and a per-round energy cap
derived from the remaining budget via the pre-commitment multipliers.

The round-time minimization is solved by bisection on a target deadline:
for a fixed deadline each device independently picks the largest
energy-feasible frequency, which minimizes its bandwidth demand, and the
deadline is feasible iff the summed demands fit the budget. Demands are
strictly decreasing in the deadline, so feasibility is monotone and the
boundary is found by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import cost
from .cost import ChannelState, DeviceProfile, Hyperparams
from .kernels import alloc_at_deadline

__all__ = [
    "InfeasibleAllocationError",
    "Allocation",
    "EnergyLedger",
    "commitment_multiplier",
    "energy_cap",
    "min_bandwidth_for_deadline",
    "best_frequency_for_deadline",
    "best_frequency_for_energy",
    "solve_round_allocation",
    "solve_with_caps",
    "allocation_round_time",
    "allocation_energies",
    "brute_force_allocation_oracle",
]

BUDGET_RTOL = 1e-9
DEADLINE_RTOL = 1e-5


class InfeasibleAllocationError(RuntimeError):
    """No feasible allocation exists; carries the binding device index."""

    def __init__(self, device: int, reason: str):
        self.device = device
        self.reason = reason
        super().__init__(f"device {device}: {reason}")


@dataclass(frozen=True)
class Allocation:
    """Per-device bandwidth (Hz) and CPU frequency (Hz) for one round."""

    bandwidth: np.ndarray
    frequency: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bandwidth, dtype=float)
        f = np.asarray(self.frequency, dtype=float)
        if b.shape != f.shape or b.ndim != 1:
            raise ValueError("bandwidth and frequency must be 1-D, same shape")
        if np.any(b <= 0):
            raise ValueError("every bandwidth share must be positive")
        object.__setattr__(self, "bandwidth", b)
        object.__setattr__(self, "frequency", f)


@dataclass
class EnergyLedger:
    """Realized energy spend against per-device budgets, in joules."""

    budget: np.ndarray
    spent: np.ndarray = field(default=None)

    def __post_init__(self):
        self.budget = np.asarray(self.budget, dtype=float)
        if self.spent is None:
            self.spent = np.zeros_like(self.budget)
        else:
            self.spent = np.asarray(self.spent, dtype=float)

    def charge(self, energies: np.ndarray) -> None:
        self.spent = self.spent + np.asarray(energies, dtype=float)
        over = self.spent > self.budget * (1.0 + BUDGET_RTOL)
        if np.any(over):
            dev = int(np.argmax(over))
            raise InfeasibleAllocationError(
                dev, f"energy budget exceeded: {self.spent[dev]} > {self.budget[dev]}")

    def remaining(self) -> np.ndarray:
        return self.budget - self.spent


def commitment_multiplier(t: int, r: int, num_global: int, num_edge: int,
                          last_round: bool) -> int:
    """Rounds the current spend rate is committed for.

    Mid-round decisions charge the current round's energy for
    (T - t) * R + R - r rounds; the last edge round of a global round
    commits for (T - t) * R + 1.
    """
    if last_round:
        return (num_global - t) * num_edge + 1
    return (num_global - t) * num_edge + num_edge - r


def energy_cap(ledger: EnergyLedger, t: int, r: int, num_global: int,
               num_edge: int, last_round: bool) -> np.ndarray:
    """Per-device energy allowance for the round being planned."""
    remaining = ledger.remaining()
    if np.any(remaining < -ledger.budget * BUDGET_RTOL):
        dev = int(np.argmin(remaining))
        raise InfeasibleAllocationError(dev, "energy budget already violated")
    m = commitment_multiplier(t, r, num_global, num_edge, last_round)
    return np.maximum(remaining, 0.0) / m


def min_bandwidth_for_deadline(profile: DeviceProfile, hyper: Hyperparams,
                               snr: float, tau: float, f: float) -> float:
    """Smallest bandwidth letting the device finish compute+upload by tau."""
    t_cmp = cost.device_comp_time(hyper.local_iters, hyper.batch_size,
                                  profile.mu, f)
    if tau <= t_cmp:
        raise InfeasibleAllocationError(
            -1, f"deadline {tau} not above compute time {t_cmp}")
    return hyper.model_bits / ((tau - t_cmp) * math.log2(1.0 + snr))


def _device_arrays(profiles: Sequence[DeviceProfile], hyper: Hyperparams,
                   snr: np.ndarray, local_iters: np.ndarray | None = None):
    iters = (np.full(len(profiles), hyper.local_iters, dtype=float)
             if local_iters is None else np.asarray(local_iters, dtype=float))
    cycles = iters * hyper.batch_size * np.array([p.mu for p in profiles])
    alpha = np.array([p.alpha for p in profiles])
    power = np.array([p.power for p in profiles])
    fmin = np.array([p.f_min for p in profiles])
    fmax = np.array([p.f_max for p in profiles])
    log_rate = np.log2(1.0 + np.asarray(snr, dtype=float))
    return cycles, alpha, power, fmin, fmax, log_rate


def best_frequency_for_deadline(profile: DeviceProfile, hyper: Hyperparams,
                                snr: float, tau: float,
                                cap: float) -> tuple[float, float] | None:
    """Largest energy-feasible frequency for a deadline, with its bandwidth.

    Returns None when the deadline is tighter than the compute time at
    f_max or the window energy exceeds the cap even at the slowest
    admissible frequency.
    """
    cycles, alpha, power, fmin, fmax, log_rate = _device_arrays(
        [profile], hyper, np.array([snr]))
    status, _, b, f = alloc_at_deadline(
        tau, cycles, alpha, power, fmin, fmax,
        np.array([cap], dtype=float), log_rate, float(hyper.model_bits))
    if status != 0:
        return None
    return float(f[0]), float(b[0])


def best_frequency_for_energy(profile: DeviceProfile, hyper: Hyperparams,
                              bandwidth: float, snr: float, cap: float,
                              local_iters: int | None = None) -> float:
    """Largest frequency whose realized round energy fits the cap, for a
    fixed bandwidth share. Used by the uniform-bandwidth baselines."""
    iters = hyper.local_iters if local_iters is None else local_iters
    t_com = cost.device_comm_time(hyper.model_bits, bandwidth, snr)
    avail = cap - profile.power * t_com
    e_min = cost.comp_energy(profile.alpha, iters, hyper.batch_size,
                             profile.mu, profile.f_min)
    if avail < e_min * (1.0 - BUDGET_RTOL):
        raise InfeasibleAllocationError(
            -1, f"energy cap {cap} below round energy at f_min")
    f = math.sqrt(2.0 * max(avail, e_min)
                  / (profile.alpha * iters * hyper.batch_size * profile.mu))
    return min(max(f, profile.f_min), profile.f_max)


def solve_with_caps(profiles: Sequence[DeviceProfile], hyper: Hyperparams,
                    channel: ChannelState, caps: np.ndarray) -> Allocation:
    """Minimize the cluster round time under explicit energy caps."""
    snr = channel.snr
    budget = channel.server_bandwidth
    caps = np.asarray(caps, dtype=float)
    cycles, alpha, power, fmin, fmax, log_rate = _device_arrays(
        profiles, hyper, snr)

    for i, p in enumerate(profiles):
        floor_energy = cost.comp_energy(p.alpha, hyper.local_iters,
                                        hyper.batch_size, p.mu, p.f_min)
        if caps[i] < floor_energy * (1.0 - BUDGET_RTOL):
            raise InfeasibleAllocationError(
                i, f"energy cap {caps[i]} below compute energy "
                   f"{floor_energy} at f_min")

    model_bits = float(hyper.model_bits)
    tau_lo = float(np.max(cycles / fmax))  # compute alone; infeasible boundary

    def probe(tau):
        status, dev, b, f = alloc_at_deadline(
            tau, cycles, alpha, power, fmin, fmax, caps, log_rate, model_bits)
        ok = status == 0 and b.sum() <= budget
        return ok, status, dev, b, f

    tau_hi = None
    last = None
    growth = 1e-3
    for _ in range(64):
        tau = tau_lo * (1.0 + growth)
        ok, status, dev, b, f = probe(tau)
        if ok:
            tau_hi = tau
            best = (b, f)
            break
        last = (status, dev, b)
        growth *= 2.0
    if tau_hi is None:
        status, dev, b = last
        if status == 2:
            raise InfeasibleAllocationError(dev, "energy cap cannot be met")
        dev = int(np.argmax(b)) if status == 0 else dev
        raise InfeasibleAllocationError(dev, "bandwidth budget cannot be met")

    lo, hi = tau_lo, tau_hi
    while (hi - lo) > DEADLINE_RTOL * hi:
        mid = 0.5 * (lo + hi)
        ok, _, _, b, f = probe(mid)
        if ok:
            hi = mid
            best = (b, f)
        else:
            lo = mid

    b, f = best
    # hand leftover budget out proportionally; this only shortens uploads
    b = b * (budget / b.sum())
    return Allocation(b, f)


def solve_round_allocation(profiles: Sequence[DeviceProfile],
                           hyper: Hyperparams, channel: ChannelState,
                           ledger: EnergyLedger, t: int, r: int,
                           last_round: bool | None = None) -> Allocation:
    """Solve the per-round allocation with caps drawn from the ledger."""
    if last_round is None:
        last_round = r == hyper.edge_rounds - 1
    caps = energy_cap(ledger, t, r, hyper.global_rounds, hyper.edge_rounds,
                      last_round)
    return solve_with_caps(profiles, hyper, channel, caps)


def allocation_round_time(profiles: Sequence[DeviceProfile],
                          hyper: Hyperparams, alloc: Allocation,
                          snr: np.ndarray,
                          local_iters: Sequence[int] | None = None) -> float:
    """Cluster round time of an allocation, recomputed from cost formulas."""
    times = []
    for i, p in enumerate(profiles):
        iters = hyper.local_iters if local_iters is None else local_iters[i]
        times.append(
            cost.device_comp_time(iters, hyper.batch_size, p.mu,
                                  alloc.frequency[i])
            + cost.device_comm_time(hyper.model_bits, alloc.bandwidth[i],
                                    snr[i]))
    return cost.cluster_round_time(times)


def allocation_energies(profiles: Sequence[DeviceProfile],
                        hyper: Hyperparams, alloc: Allocation,
                        snr: np.ndarray,
                        local_iters: Sequence[int] | None = None) -> np.ndarray:
    """Realized per-device round energies of an allocation."""
    out = np.empty(len(profiles))
    for i, p in enumerate(profiles):
        iters = hyper.local_iters if local_iters is None else local_iters[i]
        out[i] = cost.device_round_energy(
            p, hyper, alloc.bandwidth[i], alloc.frequency[i], snr[i],
            local_iters=iters)
    return out


def _compositions(total: int, parts: int):
    """All positive integer splits of ``total`` into ``parts`` parts."""
    if parts == 1:
        yield (total,)
        return
    for head in range(1, total - parts + 2):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def brute_force_allocation_oracle(profiles: Sequence[DeviceProfile],
                                  hyper: Hyperparams, channel: ChannelState,
                                  caps: np.ndarray,
                                  grid_points: int = 50) -> Allocation:
    """Grid-search reference for the round-time minimization (tests only).

    Bandwidth is discretized as positive multiples of budget/grid_points
    across the simplex; frequencies on a uniform grid per device. Energy
    feasibility uses the realized upload energy at each bandwidth point.
    """
    n = len(profiles)
    snr = channel.snr
    budget = channel.server_bandwidth
    unit = budget / grid_points
    caps = np.asarray(caps, dtype=float)

    # per device: best achievable time as a function of its bandwidth units
    best_time = np.full((n, grid_points), np.inf)
    best_freq = np.zeros((n, grid_points))
    for i, p in enumerate(profiles):
        fgrid = np.linspace(p.f_min, p.f_max, grid_points)
        comp_t = hyper.local_iters * hyper.batch_size * p.mu / fgrid
        comp_e = 0.5 * p.alpha * hyper.local_iters * hyper.batch_size \
            * p.mu * fgrid ** 2
        for k in range(1, grid_points + 1):
            b = k * unit
            t_com = cost.device_comm_time(hyper.model_bits, b, snr[i])
            avail = caps[i] - p.power * t_com
            # comp_e ascends with fgrid, so feasible entries form a prefix
            idx = int(np.searchsorted(comp_e, avail, side="right")) - 1
            if idx < 0:
                continue
            best_time[i, k - 1] = comp_t[idx] + t_com
            best_freq[i, k - 1] = fgrid[idx]

    best = None
    for units in _compositions(grid_points, n):
        tmax = max(best_time[i, units[i] - 1] for i in range(n))
        if not math.isinf(tmax) and (best is None or tmax < best[0]):
            best = (tmax, units)
    if best is None:
        raise InfeasibleAllocationError(
            int(np.argmin(caps)), "no feasible grid point")
    _, units = best
    b = np.array([u * unit for u in units])
    f = np.array([best_freq[i, units[i] - 1] for i in range(n)])
    return Allocation(b, f)
