"""Randomized cross-checks of the scheduler against exhaustive enumeration.

Instances draw continuous gains (so argmax ties are measure-zero), a
two-class QoS profile, and a budget spanning slack and binding regimes.
The enumeration oracle filters the budget and a per-user ratio band of
one rate quantum; the subgradient scheduler is graded on how often its
sum rate lands exactly on, or within one quantum of, the enumerated
optimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocator import (AllocatorConfig, exhaustive_oracle, solve_allocation,
                        summarize)
from .linkmodel import EffectiveLinkTable, ModulationTable, QosProfile

__all__ = ["OracleCheckStats", "random_instance", "run_oracle_check",
           "CHECK_CONFIG"]

# more dual iterations than the training default: validation favors
# solution quality over per-block latency
CHECK_CONFIG = AllocatorConfig(max_outer=300, max_inner=10, step_size=0.02,
                               tolerance=1e-6)


@dataclass(frozen=True)
class InstanceRecord:
    users: int
    subchannels: int
    chi: float
    p_max: float
    psd_rate: float
    oracle_rate: float
    converged: bool


@dataclass(frozen=True)
class OracleCheckStats:
    records: tuple
    exact_fraction: float
    within_quantum_fraction: float
    quantum: float

    def summary_lines(self):
        n = len(self.records)
        yield (f"oracle-check: {n} instances, "
               f"{self.exact_fraction * 100:.1f}% exact, "
               f"{self.within_quantum_fraction * 100:.1f}% within one quantum "
               f"({self.quantum:g} bits/symbol)")


def random_instance(rng: np.random.Generator, kmax: int = 4, mmax: int = 3):
    """One random scheduling instance: (table, mods, qos, p_max).

    Gains are exponential so class-2 mode-1 powers land around
    0.1..1 W; the budget is drawn across tiny, binding, and slack
    regimes. A dead link is planted occasionally.
    """
    m = int(rng.integers(1, mmax + 1))
    k = int(rng.integers(2, kmax + 1))
    mods = ModulationTable()
    chi = float(rng.choice([0.5, 1.0, 2.0]))
    qos = QosProfile(chi=chi)
    g = rng.exponential(1.0, size=(m, k))
    gj = rng.exponential(1.0, size=(m, k))
    if rng.random() < 0.05:
        g[rng.integers(m), rng.integers(k)] = 0.0
    jam = rng.uniform(0.0, 0.05, size=k)
    table = EffectiveLinkTable(g=g, gj=gj, noise_power=1e-2, jam_power=jam)
    u = rng.random()
    if u < 0.15:
        p_max = float(rng.uniform(0.05, 0.3))
    elif u < 0.65:
        p_max = float(np.exp(rng.uniform(np.log(0.3), np.log(5.0))))
    elif u < 0.9:
        p_max = float(np.exp(rng.uniform(np.log(5.0), np.log(50.0))))
    else:
        p_max = 1e3
    return table, mods, qos, p_max


def run_oracle_check(n_instances: int = 200, kmax: int = 4, seed: int = 0,
                     cfg: AllocatorConfig = CHECK_CONFIG) -> OracleCheckStats:
    rng = np.random.default_rng(seed)
    records = []
    quantum = None
    for _ in range(n_instances):
        table, mods, qos, p_max = random_instance(rng, kmax=kmax)
        quantum = mods.rate_quantum
        result = solve_allocation(table, mods, qos, p_max, cfg)
        oracle_dec = exhaustive_oracle(table, mods, qos, p_max,
                                       ratio_tolerance=quantum)
        oracle_sum = summarize(oracle_dec, mods, qos, num_users=table.num_users)
        records.append(InstanceRecord(
            users=table.num_users, subchannels=table.num_subchannels,
            chi=qos.chi, p_max=p_max, psd_rate=result.summary.total_rate,
            oracle_rate=oracle_sum.total_rate, converged=result.converged))
    diffs = np.array([abs(r.psd_rate - r.oracle_rate) for r in records])
    return OracleCheckStats(
        records=tuple(records),
        exact_fraction=float(np.mean(diffs == 0.0)),
        within_quantum_fraction=float(np.mean(diffs <= quantum + 1e-9)),
        quantum=quantum)
