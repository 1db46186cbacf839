"""Discrete-time simulation of an edge server deciding, slot by slot, whether
the task at the head of its request queue is computed locally or shipped to
the cloud over one of a small pool of uplink channels.

Two FIFO buffers live on the server: the task request queue (TRQ) holds
freshly arrived tasks, the local computing queue (LCQ) holds tasks awaiting
the local CPU.  Arrivals are Poisson per device; task sizes (MB) and CPU
demands (cycles) are uniform.  The per-slot cost combines the latency and
energy of the dispatched head task, inflated by the episode's cumulative
drop rate; the reward is its negative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class IllegalActionError(Exception):
    """Offload requested while no uplink channel is free."""


class AllDroppedError(Exception):
    """Every arrived task has been dropped; the drop-rate denominator is zero."""


@dataclass(frozen=True)
class TaskSpec:
    """One offloading task: payload size in MB and CPU cycles to finish it."""

    size: float
    cycles: float
    arrival_slot: int


@dataclass(frozen=True)
class EnvConfig:
    """Static parameters of the edge system.

    Units: sizes/capacities in MB, frequencies in cycles/s, rates in MB/s,
    power in W, slot length in seconds.  ``psi_weight`` trades energy against
    latency inside the execution cost; with the default capacitance and CPU
    frequency the energy term lands in the same few-seconds range as latency.
    """

    n_devices: int = 5
    slot_seconds: float = 1.0
    arrival_rate: float = 0.2          # per-device Poisson rate, tasks/slot
    trq_capacity: float = 5000.0       # 5 GB request buffer
    lcq_capacity: float = 2000.0       # 2 GB local-compute buffer
    edge_freq: float = 5e10            # local CPU speed, cycles/s
    kappa1: float = 1e-11              # effective capacitance coefficient
    tx_rate: float = 5.0               # uplink rate to the cloud, MB/s
    tx_power: float = 0.5              # uplink transmission power, W
    n_channels: int = 2
    psi_weight: float = 1e-21
    horizon: int = 100                 # slots per episode
    size_min: float = 5.0
    size_max: float = 50.0
    cycles_min: float = 0.5e11
    cycles_max: float = 2.0e11

    def __post_init__(self):
        if self.n_devices < 1 or self.n_channels < 1 or self.horizon < 1:
            raise ValueError("n_devices, n_channels, horizon must be >= 1")
        for name in ("slot_seconds", "trq_capacity", "lcq_capacity",
                     "edge_freq", "tx_rate"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.arrival_rate < 0 or self.psi_weight < 0 or self.tx_power < 0:
            raise ValueError("arrival_rate, psi_weight, tx_power must be >= 0")
        if not (0 < self.size_min <= self.size_max):
            raise ValueError("need 0 < size_min <= size_max")
        if not (0 < self.cycles_min <= self.cycles_max):
            raise ValueError("need 0 < cycles_min <= cycles_max")

    @property
    def cycles_ref(self) -> float:
        """Worst-case pending cycles of a full LCQ; observation scale."""
        return self.lcq_capacity * self.cycles_max / self.size_min


@dataclass(frozen=True)
class EnvState:
    """Full simulator state at the start of a slot.

    ``trq``/``lcq`` are FIFO snapshots; LCQ entries carry the cycles still
    owed (the head may be partially processed).  ``channel_busy`` counts the
    slots each uplink channel remains occupied.  Byte/cycle totals are kept
    denormalized for speed and must always equal the queue contents.
    """

    trq: tuple[TaskSpec, ...] = ()
    lcq: tuple[tuple[TaskSpec, float], ...] = ()
    channel_busy: tuple[int, ...] = (0, 0)
    slot: int = 0
    arrived: int = 0
    dropped: int = 0
    completed: int = 0
    offloaded: int = 0
    trq_bytes: float = 0.0
    lcq_bytes: float = 0.0
    lcq_cycles: float = 0.0

    @property
    def free_channels(self) -> int:
        return sum(1 for b in self.channel_busy if b == 0)


@dataclass(frozen=True)
class CostBreakdown:
    latency: float       # seconds, of the dispatched head task
    energy: float        # joules
    exec_cost: float     # latency + psi * energy
    drop_rate: float     # cumulative dropped / arrived, this episode
    total_cost: float    # exec_cost / (1 - drop_rate)


def reset(cfg: EnvConfig) -> EnvState:
    """Empty queues, all channels free, counters zeroed."""
    return EnvState(channel_busy=(0,) * cfg.n_channels)


def sample_arrivals(rng: np.random.Generator, cfg: EnvConfig,
                    slot: int = 0) -> list[TaskSpec]:
    """Draw one slot of task arrivals across all devices.

    Each device contributes a Poisson(rate * slot_seconds) number of tasks;
    sizes and cycle counts are independent uniforms.  Devices are visited in
    index order and tasks keep their draw order, which fixes the admission
    tie-break for simultaneous arrivals.
    """
    lam = cfg.arrival_rate * cfg.slot_seconds
    tasks = []
    for _ in range(cfg.n_devices):
        for _ in range(rng.poisson(lam)):
            size = rng.uniform(cfg.size_min, cfg.size_max)
            cycles = rng.uniform(cfg.cycles_min, cfg.cycles_max)
            tasks.append(TaskSpec(size=size, cycles=cycles, arrival_slot=slot))
    return tasks


def local_cost(lcq_cycles: float, task: TaskSpec,
               cfg: EnvConfig) -> tuple[float, float]:
    """Latency and energy of computing ``task`` on the edge CPU.

    Latency is queueing (pending cycles ahead of it) plus execution; energy
    is per-cycle chip energy times the task's cycle count.
    """
    latency = (lcq_cycles + task.cycles) / cfg.edge_freq
    energy = cfg.kappa1 * cfg.edge_freq ** 2 * task.cycles
    return latency, energy


def offload_cost(task: TaskSpec, cfg: EnvConfig) -> tuple[float, float]:
    """Latency and edge-side energy of shipping ``task`` to the cloud.

    Transmission dominates, so cloud compute time is ignored; energy is the
    uplink power held for the transmission time.
    """
    latency = task.size / cfg.tx_rate
    return latency, cfg.tx_power * latency


def execution_cost(action: int, local: tuple[float, float],
                   offload: tuple[float, float], psi_weight: float) -> float:
    """Latency/energy blend of the branch selected by ``action`` (0=local)."""
    latency, energy = local if action == 0 else offload
    return latency + psi_weight * energy


def overall_cost(exec_cost: float, arrived: int, dropped: int) -> float:
    """Inflate the execution cost by the episode's cumulative drop rate.

    With no arrivals yet the drop rate is defined as zero.  Raises
    :class:`AllDroppedError` when every arrived task was dropped, since the
    denominator 1 - dropped/arrived vanishes.
    """
    if dropped > arrived:
        raise ValueError("dropped exceeds arrived")
    if arrived == 0:
        return exec_cost
    if dropped == arrived:
        raise AllDroppedError(f"all {arrived} arrived tasks were dropped")
    return exec_cost / (1.0 - dropped / arrived)


def observe(state: EnvState, cfg: EnvConfig) -> np.ndarray:
    """Normalized 4-vector observation: buffered MB in the TRQ and LCQ over
    their capacities, pending LCQ cycles over the worst-case full-buffer
    cycle load, and the fraction of free channels.  Each component sits in
    [0, 1] and is strictly monotone in the raw quantity."""
    return np.array([
        state.trq_bytes / cfg.trq_capacity,
        state.lcq_bytes / cfg.lcq_capacity,
        state.lcq_cycles / cfg.cycles_ref,
        state.free_channels / cfg.n_channels,
    ])


def step(cfg: EnvConfig, state: EnvState, action: int,
         rng: np.random.Generator) -> tuple[EnvState, float, CostBreakdown, dict]:
    """Advance one slot.

    Order of events: (a) arrivals are admitted to the TRQ or dropped on
    overflow; (b) the TRQ head, if any, is dispatched per ``action`` --
    locally it joins the LCQ (dropped if the LCQ would overflow), offloaded
    it occupies one free channel for ceil(latency / slot) slots; (c) the
    local CPU drains one slot of cycles FCFS, tasks may finish mid-slot and
    a partially processed head carries its remainder; (d) channel timers
    tick down; (e) the reward is the negative drop-inflated cost of the
    dispatch (zero if the TRQ was empty -- the action is then ignored).

    The cost of a local dispatch that overflows the LCQ is still the local
    branch's cost: the decision was taken, and the drop additionally feeds
    the drop-rate multiplier from this slot on.
    """
    if action not in (0, 1):
        raise ValueError(f"action must be 0 or 1, got {action}")
    if action == 1 and state.free_channels == 0:
        raise IllegalActionError("offload requested with no free channel")

    trq = list(state.trq)
    lcq = list(state.lcq)
    busy = list(state.channel_busy)
    arrived = state.arrived
    dropped = state.dropped
    completed = state.completed
    offloaded = state.offloaded
    trq_bytes = state.trq_bytes
    lcq_bytes = state.lcq_bytes
    lcq_cycles = state.lcq_cycles

    # (a) arrivals
    new_tasks = sample_arrivals(rng, cfg, state.slot)
    admitted = 0
    for task in new_tasks:
        arrived += 1
        if trq_bytes + task.size <= cfg.trq_capacity:
            trq.append(task)
            trq_bytes += task.size
            admitted += 1
        else:
            dropped += 1

    # (b) dispatch the head task
    dispatched = None
    latency = energy = exec_c = 0.0
    if trq:
        head = trq.pop(0)
        trq_bytes -= head.size
        dispatched = head
        if action == 0:
            latency, energy = local_cost(lcq_cycles, head, cfg)
            if lcq_bytes + head.size <= cfg.lcq_capacity:
                lcq.append((head, head.cycles))
                lcq_bytes += head.size
                lcq_cycles += head.cycles
            else:
                dropped += 1
        else:
            latency, energy = offload_cost(head, cfg)
            slots = math.ceil(latency / cfg.slot_seconds)
            busy[busy.index(0)] = slots
            offloaded += 1
        exec_c = latency + cfg.psi_weight * energy

    # (c) local CPU drains this slot's cycle budget
    budget = cfg.edge_freq * cfg.slot_seconds
    finished = 0
    while budget > 0.0 and lcq:
        task, remaining = lcq[0]
        take = min(budget, remaining)
        budget -= take
        lcq_cycles -= take
        if take == remaining:
            lcq.pop(0)
            lcq_bytes -= task.size
            completed += 1
            finished += 1
        else:
            lcq[0] = (task, remaining - take)

    # (d) channel timers
    busy = [b - 1 if b > 0 else 0 for b in busy]

    # (e) cost and reward
    total = overall_cost(exec_c, arrived, dropped) if dispatched else 0.0
    drop_rate = dropped / arrived if arrived else 0.0
    cost = CostBreakdown(latency=latency, energy=energy, exec_cost=exec_c,
                         drop_rate=drop_rate, total_cost=total)

    next_state = EnvState(
        trq=tuple(trq), lcq=tuple(lcq), channel_busy=tuple(busy),
        slot=state.slot + 1, arrived=arrived, dropped=dropped,
        completed=completed, offloaded=offloaded, trq_bytes=trq_bytes,
        lcq_bytes=lcq_bytes, lcq_cycles=lcq_cycles,
    )
    info = {
        "arrivals": len(new_tasks),
        "admitted": admitted,
        "dispatched": dispatched,
        "completed_this_slot": finished,
    }
    return next_state, -total, cost, info
