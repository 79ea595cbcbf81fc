"""Per-block user/subchannel/mode/stream scheduling by primal-dual descent.

The scheduler maximizes the sum rate subject to a base-station power
budget (priced by the multiplier lambda) and a per-user class-1/class-2
rate-ratio constraint (priced by nu_m). Given multipliers, the primal
step is a winner-takes-all argmax of the net reward

    w = (1 - nu_m) * r_l - lambda * p      (class q = 1)
    w = (1 + nu_m * chi) * r_l - lambda * p (class q = 2)

independently per subchannel; multipliers then move along the
constraint residuals. Because the budget prices power and the ratio
prices class imbalance, the argmax winners trace the efficient frontier
as the multipliers travel, and the best feasible iterate seen is kept.

lambda is projected onto [0, inf). The ratio constraint is an equality,
so by default nu is left free-signed after updates (a nonnegative nu
can only discourage class-1 traffic and would never schedule the
expensive class on a tight budget); `project_nu=True` restores the
clamped update.

`exhaustive_oracle` enumerates every per-subchannel assignment and is
the reference optimum for small instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .linkmodel import EffectiveLinkTable, ModulationTable, QosProfile, min_power

__all__ = [
    "Assignment",
    "AllocationDecision",
    "AllocationSummary",
    "DualState",
    "AllocatorConfig",
    "SolveResult",
    "net_reward",
    "select_winners",
    "winner_takes_all",
    "dual_update",
    "summarize",
    "solve_allocation",
    "exhaustive_oracle",
]

_FEAS_SLACK = 1e-9   # absolute slack for feasibility comparisons on float sums


def select_winners(net_rewards: np.ndarray):
    """Per-column argmax with idle fallback.

    `net_rewards` has one row per candidate tuple (rows ordered
    lexicographically) and one column per subchannel. Returns
    (winner_row, winner_value, assigned_mask); a column whose maximum is
    not strictly positive stays unassigned, and ties go to the first
    (lexicographically lowest) row. Selection depends only on the
    within-column ordering, so any positive per-column rescaling picks
    the same winners.
    """
    idx = np.argmax(net_rewards, axis=0)
    val = net_rewards[idx, np.arange(net_rewards.shape[1])]
    return idx, val, val > 0.0


@dataclass(frozen=True)
class Assignment:
    """One scheduled subchannel: user, mode index >= 1, stream class, watts."""

    user: int
    mode: int
    stream: int          # 1 = high-quality class, 2 = low-quality class
    power: float


@dataclass(frozen=True)
class AllocationDecision:
    """Per-subchannel assignment; None marks an idle subchannel."""

    assignments: tuple

    @property
    def num_subchannels(self) -> int:
        return len(self.assignments)

    def __iter__(self):
        return iter(self.assignments)


@dataclass(frozen=True)
class AllocationSummary:
    per_user_rate: np.ndarray      # R_m, bits/symbol
    per_user_rate_q1: np.ndarray   # class-1 share
    per_user_rate_q2: np.ndarray
    total_rate: float
    total_power: float             # W
    ratio_residual: np.ndarray     # R1_m - chi * R2_m


@dataclass(frozen=True)
class DualState:
    """Multipliers plus the subgradient step bookkeeping."""

    lam: float
    nu: np.ndarray
    step_size: float = 0.01
    tau: int = 0                   # dual updates applied so far

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.step_size <= 0:
            raise ValueError("step_size must be > 0")
        object.__setattr__(self, "nu", np.asarray(self.nu, dtype=float).reshape(-1))


@dataclass(frozen=True)
class AllocatorConfig:
    max_outer: int = 100           # Lagrangian-convergence loop cap
    max_inner: int = 50            # power-convergence loop cap per outer pass
    step_size: float = 0.01
    tolerance: float = 1e-4        # relative, on the Lagrangian / power trace
    repair: bool = True            # drop cheapest winners until within budget
    project_nu: bool = False       # clamp nu at zero after each update
    freeze_nu: bool = False        # keep nu fixed (budget-only analyses)
    step_schedule: str = "constant"   # "constant" | "sqrt" (eps / sqrt(tau))
    lambda0: float = 0.0
    nu0: float = 0.0
    ratio_tolerance: float | None = None   # None -> one rate quantum

    def __post_init__(self):
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")
        if self.step_size <= 0 or self.tolerance <= 0:
            raise ValueError("step_size and tolerance must be > 0")
        if self.step_schedule not in ("constant", "sqrt"):
            raise ValueError("step_schedule must be 'constant' or 'sqrt'")


@dataclass(frozen=True)
class SolveResult:
    decision: AllocationDecision
    summary: AllocationSummary
    duals: DualState
    converged: bool
    outer_iterations: int
    dual_updates: int
    ratio_feasible: bool


def net_reward(lam, nu_m, g, gj, jam_k, noise, rate, stream, qos: QosProfile,
               mods: ModulationTable) -> float:
    """Net reward of one (gain, rate, stream) tuple under the multipliers.

    Zero for the no-transmission mode; -inf for a dead link asked to
    carry traffic.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if stream not in (1, 2):
        raise ValueError("stream class must be 1 or 2")
    if rate == 0:
        return 0.0
    p = min_power(g, gj, jam_k, noise, rate, qos.ber_targets[stream - 1], mods)
    if not math.isfinite(p):
        return -math.inf
    coeff = (1.0 - nu_m) if stream == 1 else (1.0 + nu_m * qos.chi)
    return coeff * rate - lam * p


class _Workspace:
    """Per-instance tables reused across dual iterations."""

    def __init__(self, table: EffectiveLinkTable, mods: ModulationTable,
                 qos: QosProfile):
        if qos.num_streams != 2:
            raise ValueError("the scheduler handles exactly two stream classes")
        m, k = table.g.shape
        rates = np.asarray(mods.rates, dtype=float)
        l1 = rates.shape[0]
        denom = table.jam_power[None, :] * table.gj + table.noise_power  # (M, K)
        ln_terms = np.array([np.log(mods.beta1 / t) for t in qos.ber_targets])
        # power[m, l, q, k]; mode 0 is free, dead links are +inf
        factor = (2.0 ** rates - 1.0)[:, None] * ln_terms[None, :]  # (L1, Q)
        with np.errstate(divide="ignore", invalid="ignore"):
            per_gain = denom / (mods.beta2_mag * table.g)          # (M, K), inf on g=0
            power = factor[None, :, :, None] * per_gain[:, None, None, :]
        power[:, 0, :, :] = 0.0                                    # mode 0
        self.power = power                                         # (M, L1, Q, K)
        self.rates = rates
        self.chi = qos.chi
        self.m, self.k, self.l1, self.q = m, k, l1, 2
        self.mods = mods
        self.qos = qos
        self.table = table
        self._frontier_cache = {}
        # flat-index lookup tables for the hot loop
        self._ks = np.arange(k)
        n_flat = m * l1 * 2
        flat_ids = np.arange(n_flat)
        self._q_of = flat_ids % 2
        self._l_of = (flat_ids // 2) % l1
        self._m_of = flat_ids // (2 * l1)
        self._r_of = rates[self._l_of]
        self._power_flat = power.reshape(n_flat, k)
        self._dead = ~np.isfinite(self._power_flat)
        self._has_dead = bool(self._dead.any())

    def wta(self, lam: float, nu: np.ndarray):
        """Winner index (flat over m,l,q in lexicographic order) per subchannel."""
        nu_of = nu[self._m_of]
        coeff = np.where(self._q_of == 0, 1.0 - nu_of, 1.0 + nu_of * self.chi)
        if self._has_dead:
            with np.errstate(invalid="ignore"):
                flat = (coeff * self._r_of)[:, None] - lam * self._power_flat
            flat[self._dead] = -np.inf
        else:
            flat = (coeff * self._r_of)[:, None] - lam * self._power_flat
        return select_winners(flat)

    def decode(self, idx):
        return self._m_of[idx], self._l_of[idx], self._q_of[idx]

    def raw_summary(self, idx, mask):
        """(total power, total rate, per-user class-1 rates, class-2 rates)."""
        m_sel = self._m_of[idx]
        p_sel = np.where(mask, self._power_flat[idx, self._ks], 0.0)
        r_sel = np.where(mask, self._r_of[idx], 0.0)
        mm = np.where(mask, m_sel, 0)
        r1 = np.bincount(mm, weights=np.where(self._q_of[idx] == 0, r_sel, 0.0),
                         minlength=self.m)
        r2 = np.bincount(mm, weights=np.where(self._q_of[idx] == 1, r_sel, 0.0),
                         minlength=self.m)
        return float(p_sel.sum()), float(r_sel.sum()), r1, r2

    def repair(self, idx, val, mask, p_max, p_total=None):
        """Drop winners in ascending net-reward order until within budget."""
        if p_total is None:
            p_total = self.raw_summary(idx, mask)[0]
        if p_total <= p_max + _FEAS_SLACK:
            return mask, p_total
        mask = mask.copy()
        powers = self._power_flat[idx, self._ks]
        order = np.argsort(np.where(mask, val, np.inf), kind="stable")
        for k in order:
            if not mask[k]:
                continue
            mask[k] = False
            p_total -= powers[k]
            if p_total <= p_max + _FEAS_SLACK:
                break
        return mask, p_total

    def encode(self, m_sel, l_sel, q_sel):
        return (m_sel * self.l1 + l_sel) * self.q + q_sel

    _EXACT_USER_CAP = 4        # assignments per user solved by enumeration
    _COMBINE_CAP = 20000       # cartesian size cap for the cross-user step

    def _channel_options(self, u, k, l_cap):
        """(l, q, rate, power) rows for one held subchannel: drop, or any
        not-higher mode under either stream class."""
        rows = [(0, 0, 0.0, 0.0)]
        for l_new in range(1, l_cap + 1):
            for q_new in (0, 1):
                rows.append((l_new, q_new, self.rates[l_new],
                             float(self.power[u, l_new, q_new, k])))
        return rows

    def user_frontier(self, u, owned, l_caps, tol):
        """In-band (rate, power) Pareto frontier of one user's holdings.

        Enumerates all per-channel downgrade/reclass/drop combinations,
        keeps those whose ratio residual sits inside the band, and prunes
        power-dominated points. Returns (rates, powers, choices) with
        choices[i] a list of (l, q) per owned channel, sorted by
        descending rate.
        """
        key = (u, tuple(owned), tuple(l_caps))
        cached = self._frontier_cache.get(key)
        if cached is not None:
            return cached
        opts = [self._channel_options(u, k, lc) for k, lc in zip(owned, l_caps)]
        grids = np.meshgrid(*[np.arange(len(o)) for o in opts], indexing="ij")
        combo = np.stack([g.ravel() for g in grids], axis=1)      # (C, n_u)
        r1 = np.zeros(combo.shape[0])
        r2 = np.zeros(combo.shape[0])
        pw = np.zeros(combo.shape[0])
        for j, rows in enumerate(opts):
            arr = np.array(rows, dtype=float)                     # (n_opt, 4)
            sel = arr[combo[:, j]]
            live = sel[:, 0] > 0
            r1 += np.where(live & (sel[:, 1] == 0), sel[:, 2], 0.0)
            r2 += np.where(live & (sel[:, 1] == 1), sel[:, 2], 0.0)
            pw += sel[:, 3]
        ok = np.abs(r1 - self.chi * r2) <= tol + _FEAS_SLACK
        rates = r1 + r2
        # min power per achievable in-band rate, then drop dominated points
        points = {}
        for i in np.flatnonzero(ok):
            r = rates[i]
            cur = points.get(r)
            if cur is None or pw[i] < cur[0] - 1e-15:
                points[r] = (pw[i], i)
        frontier = []
        best_p = math.inf
        for r in sorted(points, reverse=True):
            p, i = points[r]
            if p < best_p - 1e-15:
                frontier.append((r, p, [tuple(opts[j][combo[i, j]][:2])
                                        for j in range(len(owned))]))
                best_p = p
        if not frontier:
            frontier = [(0.0, 0.0, [(0, 0)] * len(owned))]
        result = frontier
        self._frontier_cache[key] = result
        return result

    def _user_greedy_point(self, u, owned, l_sel, q_sel, tol):
        """Single in-band point for a user with too many holdings to
        enumerate: best single move (reclass, downgrade, drop) per round."""
        state = {k: (int(l_sel[k]), int(q_sel[k])) for k in owned}

        def resid_of():
            r1 = sum(self.rates[l] for l, q in state.values() if l > 0 and q == 0)
            r2 = sum(self.rates[l] for l, q in state.values() if l > 0 and q == 1)
            return r1 - self.chi * r2

        for _ in range(4 * len(owned) * self.l1):
            cur = resid_of()
            if abs(cur) <= tol + _FEAS_SLACK:
                break
            best_move = None
            for k, (l, q) in state.items():
                if l == 0:
                    continue
                r_old = self.rates[l]
                for l_new, q_new, r_new, _ in self._channel_options(u, k, l):
                    if (l_new, q_new) == (l, q):
                        continue
                    contrib_old = r_old if q == 0 else -self.chi * r_old
                    contrib_new = 0.0
                    if l_new:
                        contrib_new = r_new if q_new == 0 else -self.chi * r_new
                    nxt = cur - contrib_old + contrib_new
                    if abs(nxt) >= abs(cur) - _FEAS_SLACK:
                        continue
                    loss = r_old - (r_new if l_new else 0.0)
                    keyt = (loss, abs(nxt), k, l_new, q_new)
                    if best_move is None or keyt < best_move[0]:
                        best_move = (keyt, k, (l_new, q_new))
            if best_move is None:
                break
            _, k, new = best_move
            state[k] = new
        if abs(resid_of()) > tol + _FEAS_SLACK:
            state = {k: (0, 0) for k in owned}
        rate = sum(self.rates[l] for l, q in state.values() if l > 0)
        power = sum(float(self.power[u, l, q, k]) if l else 0.0
                    for k, (l, q) in state.items())
        return [(rate, power, [state[k] for k in owned])]

    def band_repair(self, idx, mask, p_max, tol):
        """Budget-aware ratio repair of a raw winner iterate.

        Each user contributes a frontier of in-band alternatives built
        from downgrades/reclassifications of its current holdings; one
        point per user is then chosen to maximize the total rate inside
        the power budget (ties to lower power, then user order).
        """
        mask = mask.copy()
        m_sel, l_sel, q_sel = (a.copy() for a in self.decode(idx))
        owned_by = {}
        for k in range(self.k):
            if mask[k]:
                owned_by.setdefault(int(m_sel[k]), []).append(k)
        if not owned_by:
            return self.encode(m_sel, l_sel, q_sel), mask

        frontiers = []
        for u in sorted(owned_by):
            owned = owned_by[u]
            if len(owned) <= self._EXACT_USER_CAP:
                pts = self.user_frontier(u, owned,
                                         [int(l_sel[k]) for k in owned], tol)
            else:
                pts = self._user_greedy_point(u, owned, l_sel, q_sel, tol)
            frontiers.append((u, owned, pts))

        sizes = [len(pts) for _, _, pts in frontiers]
        prod = math.prod(sizes)
        if prod > self._COMBINE_CAP:
            # too many combinations: pin the cheapest point per user except
            # where the budget allows the best one (greedy by user order)
            chosen = [min(range(len(pts)), key=lambda i: pts[i][1])
                      for _, _, pts in frontiers]
            budget = p_max - sum(pts[c][1] for (_, _, pts), c in zip(frontiers, chosen))
            for fi, (_, _, pts) in enumerate(frontiers):
                cur = chosen[fi]
                for i, (r, p, _) in enumerate(pts):
                    extra = p - pts[cur][1]
                    if r > pts[cur][0] and extra <= budget + _FEAS_SLACK:
                        budget -= extra
                        chosen[fi] = i
                        break
        else:
            grids = np.meshgrid(*[np.arange(s) for s in sizes], indexing="ij")
            combo = np.stack([g.ravel() for g in grids], axis=1)
            tot_r = np.zeros(combo.shape[0])
            tot_p = np.zeros(combo.shape[0])
            for j, (_, _, pts) in enumerate(frontiers):
                arr = np.array([(r, p) for r, p, _ in pts])
                tot_r += arr[combo[:, j], 0]
                tot_p += arr[combo[:, j], 1]
            feas = tot_p <= p_max + _FEAS_SLACK
            if not feas.any():
                chosen = None
            else:
                cand = np.where(feas, tot_r, -1.0)
                top = cand == cand.max()
                picks = np.flatnonzero(top)
                best = picks[np.argmin(tot_p[picks])]
                chosen = list(combo[best])
        if chosen is None:
            for k in range(self.k):
                mask[k] = False
            return self.encode(m_sel, l_sel, q_sel), mask
        for (u, owned, pts), ci in zip(frontiers, chosen):
            for k, (l_new, q_new) in zip(owned, pts[ci][2]):
                if l_new == 0:
                    mask[k] = False
                else:
                    l_sel[k], q_sel[k] = l_new, q_new
        return self.encode(m_sel, l_sel, q_sel), mask

    def build_decision(self, idx, mask) -> AllocationDecision:
        m_sel, l_sel, q_sel = self.decode(idx)
        out = []
        for k in range(self.k):
            if mask[k]:
                out.append(Assignment(user=int(m_sel[k]), mode=int(l_sel[k]),
                                      stream=int(q_sel[k]) + 1,
                                      power=float(self.power[m_sel[k], l_sel[k],
                                                             q_sel[k], k])))
            else:
                out.append(None)
        return AllocationDecision(assignments=tuple(out))


def winner_takes_all(duals: DualState, table: EffectiveLinkTable,
                     mods: ModulationTable, qos: QosProfile) -> AllocationDecision:
    """Argmax of the net reward per subchannel; ties go to the lexicographically
    lowest (user, mode, stream) triple and a nonpositive maximum leaves the
    subchannel unassigned."""
    work = _Workspace(table, mods, qos)
    idx, _, mask = work.wta(duals.lam, duals.nu)
    return work.build_decision(idx, mask)


def summarize(decision: AllocationDecision, mods: ModulationTable,
              qos: QosProfile, num_users: int | None = None) -> AllocationSummary:
    """Fold a decision into per-user / per-class rates and total power."""
    if num_users is None:
        num_users = 1 + max((a.user for a in decision if a is not None), default=-1)
    r1 = np.zeros(num_users)
    r2 = np.zeros(num_users)
    p_total = 0.0
    for a in decision:
        if a is None:
            continue
        rate = mods.rates[a.mode]
        if a.stream == 1:
            r1[a.user] += rate
        else:
            r2[a.user] += rate
        p_total += a.power
    per_user = r1 + r2
    return AllocationSummary(per_user_rate=per_user, per_user_rate_q1=r1,
                             per_user_rate_q2=r2, total_rate=float(per_user.sum()),
                             total_power=p_total,
                             ratio_residual=r1 - qos.chi * r2)


def dual_update(duals: DualState, summary: AllocationSummary, p_max: float,
                chi: float, *, project_nu: bool = False, freeze_nu: bool = False,
                step_schedule: str = "constant") -> DualState:
    """One subgradient step on the multipliers.

    lambda moves along the power-budget residual and is clamped at zero.
    nu moves along the per-user ratio residual; see the module docstring
    for the sign treatment.
    """
    eps = duals.step_size
    if step_schedule == "sqrt":
        eps = duals.step_size / math.sqrt(duals.tau + 1)
    lam = max(0.0, duals.lam + eps * (summary.total_power - p_max))
    if freeze_nu:
        nu = duals.nu
    else:
        nu = duals.nu + eps * summary.ratio_residual
        if project_nu:
            nu = np.maximum(0.0, nu)
    return DualState(lam=lam, nu=nu, step_size=duals.step_size, tau=duals.tau + 1)


def _lagrangian(lam: float, val: np.ndarray, p_max: float) -> float:
    const = 0.0 if lam == 0.0 else lam * p_max
    return const + float(np.maximum(val, 0.0).sum())


class _BestTracker:
    """Best budget-feasible iterates: the in-band one that will be returned,
    plus the best band-violating one as a repair source / fallback."""

    def __init__(self, work: _Workspace, p_max: float, ratio_tol: float,
                 band_repair: bool):
        self.work = work
        self.p_max = p_max
        self.ratio_tol = ratio_tol
        self.band_repair = band_repair
        self.rate0 = -1.0          # in-band candidate
        self.best0 = None
        self.rate1 = -1.0          # out-of-band candidate
        self.best1 = None
        self._repaired = set()

    def _in_band(self, idx, mask, stats=None) -> tuple[bool, float]:
        _, r_tot, r1, r2 = stats if stats is not None else self.work.raw_summary(idx, mask)
        resid = r1 - self.work.chi * r2
        ok = bool(np.max(np.abs(resid), initial=0.0) <= self.ratio_tol + _FEAS_SLACK)
        return ok, r_tot

    def consider(self, idx, mask, stats=None, raw_idx=None, raw_mask=None,
                 raw_rate=None):
        ok, r_tot = self._in_band(idx, mask, stats)
        if ok:
            if r_tot > self.rate0:
                self.rate0, self.best0 = r_tot, (idx.copy(), mask.copy())
        elif r_tot > self.rate1:
            self.rate1, self.best1 = r_tot, (idx.copy(), mask.copy())
        if not self.band_repair or raw_idx is None:
            return
        # rebalancing only loses rate, so skip raw iterates that cannot
        # beat the in-band incumbent even untouched
        if raw_rate is None:
            raw_rate = self.work.raw_summary(raw_idx, raw_mask)[1]
        if raw_rate > self.rate0:
            key = (raw_idx.tobytes(), raw_mask.tobytes())
            if key not in self._repaired:
                self._repaired.add(key)
                ridx, rmask = self.work.band_repair(raw_idx, raw_mask, self.p_max,
                                                    self.ratio_tol)
                rok, rr = self._in_band(ridx, rmask)
                if rok and rr > self.rate0:
                    self.rate0, self.best0 = rr, (ridx, rmask)


def solve_allocation(table: EffectiveLinkTable, mods: ModulationTable,
                     qos: QosProfile, p_max: float, cfg: AllocatorConfig,
                     duals0: DualState | None = None) -> SolveResult:
    """Alternate winner-takes-all selection with subgradient dual updates.

    Stops when the Lagrangian settles (relative `cfg.tolerance`) or the
    iteration caps run out, and returns the best budget-feasible iterate
    seen (ratio-feasible ones preferred). `duals0` warm-starts the
    multipliers, e.g. from the previous fading block.
    """
    if p_max < 0:
        raise ValueError("p_max must be >= 0")
    work = _Workspace(table, mods, qos)
    ratio_tol = cfg.ratio_tolerance if cfg.ratio_tolerance is not None else mods.rate_quantum
    duals = duals0 if duals0 is not None else DualState(
        lam=cfg.lambda0, nu=np.full(work.m, cfg.nu0), step_size=cfg.step_size)
    if duals.nu.shape[0] != work.m:
        raise ValueError("warm-start nu length does not match the user count")

    best = _BestTracker(work, p_max, ratio_tol, band_repair=cfg.repair)
    converged = False
    outer_done = 0
    l_prev = None

    def track(idx, val, mask, stats):
        if cfg.repair:
            fmask, p_tot = work.repair(idx, val, mask, p_max, p_total=stats[0])
            repaired_stats = stats if fmask is mask else None
            best.consider(idx, fmask, stats=repaired_stats, raw_idx=idx,
                          raw_mask=mask, raw_rate=stats[1])
        elif stats[0] <= p_max + _FEAS_SLACK:
            best.consider(idx, mask, stats=stats)

    # hot loop keeps the multipliers as locals; the update arithmetic
    # mirrors dual_update() exactly
    lam, nu, tau = duals.lam, duals.nu.copy(), duals.tau
    base_step = duals.step_size

    idx, val, mask = work.wta(lam, nu)
    stats = work.raw_summary(idx, mask)
    for _ in range(cfg.max_outer):
        outer_done += 1
        l_now = _lagrangian(lam, val, p_max)
        track(idx, val, mask, stats)
        if l_prev is not None and abs(l_now - l_prev) <= cfg.tolerance * max(1.0, abs(l_prev)):
            converged = True
            break
        l_prev = l_now

        p_prev = None
        for _ in range(cfg.max_inner):
            p_raw, _, r1, r2 = stats
            eps = base_step if cfg.step_schedule == "constant" else base_step / math.sqrt(tau + 1)
            lam = max(0.0, lam + eps * (p_raw - p_max))
            if not cfg.freeze_nu:
                nu = nu + eps * (r1 - work.chi * r2)
                if cfg.project_nu:
                    nu = np.maximum(0.0, nu)
            tau += 1
            idx, val, mask = work.wta(lam, nu)
            stats = work.raw_summary(idx, mask)
            track(idx, val, mask, stats)
            p_now = stats[0]
            if p_prev is not None and abs(p_now - p_prev) <= cfg.tolerance * max(1.0, abs(p_prev)):
                break
            p_prev = p_now
    duals = DualState(lam=lam, nu=nu, step_size=base_step, tau=tau)

    if best.best0 is not None:
        decision = work.build_decision(*best.best0)
        ratio_feasible = True
    elif best.best1 is not None:
        decision = work.build_decision(*best.best1)
        ratio_feasible = False
    else:
        # repair disabled and nothing feasible: surface the final raw iterate
        decision = work.build_decision(idx, mask)
        ratio_feasible = False
    summary = summarize(decision, mods, qos, num_users=work.m)
    return SolveResult(decision=decision, summary=summary, duals=duals,
                       converged=converged, outer_iterations=outer_done,
                       dual_updates=duals.tau - (duals0.tau if duals0 is not None else 0),
                       ratio_feasible=ratio_feasible)


def exhaustive_oracle(table: EffectiveLinkTable, mods: ModulationTable,
                      qos: QosProfile, p_max: float, ratio_tolerance: float,
                      size_guard: int = 10 ** 7) -> AllocationDecision:
    """Enumerate every per-subchannel assignment and return the feasible
    rate maximizer (deterministic: lowest lexicographic assignment wins ties).

    Choice encoding per subchannel: 0 = idle, then (user, mode, stream)
    triples in lexicographic order. Combos are scanned in big-endian
    digit order so the flat combo id orders identically to the tuple of
    per-subchannel choices.
    """
    work = _Workspace(table, mods, qos)
    m, k, l, q = work.m, work.k, work.l1 - 1, work.q
    n_choices = 1 + m * l * q
    total = n_choices ** k
    if total > size_guard:
        raise ValueError(f"instance too large to enumerate: {total} > {size_guard}")

    # per-(subchannel, choice) lookup tables
    rate_c = np.zeros(n_choices)
    power_kc = np.zeros((k, n_choices))
    r1_kcm = np.zeros((k, n_choices, m))
    r2_kcm = np.zeros((k, n_choices, m))
    for mi in range(m):
        for li in range(1, l + 1):
            for qi in range(q):
                c = 1 + (mi * l + (li - 1)) * q + qi
                rate_c[c] = work.rates[li]
                power_kc[:, c] = work.power[mi, li, qi, :]
                (r1_kcm if qi == 0 else r2_kcm)[:, c, mi] = work.rates[li]

    radix = n_choices ** np.arange(k - 1, -1, -1, dtype=np.int64)
    best_rate, best_id = -1.0, -1
    chunk = 1 << 19
    for start in range(0, total, chunk):
        ids = np.arange(start, min(start + chunk, total), dtype=np.int64)
        digits = (ids[:, None] // radix[None, :]) % n_choices   # (B, K)
        p_tot = np.zeros(ids.shape[0])
        r1 = np.zeros((ids.shape[0], m))
        r2 = np.zeros((ids.shape[0], m))
        rate = np.zeros(ids.shape[0])
        for kk in range(k):
            d = digits[:, kk]
            p_tot += power_kc[kk, d]
            r1 += r1_kcm[kk, d]
            r2 += r2_kcm[kk, d]
            rate += rate_c[d]
        feasible = (p_tot <= p_max + _FEAS_SLACK)
        feasible &= np.all(np.abs(r1 - qos.chi * r2) <= ratio_tolerance + _FEAS_SLACK, axis=1)
        if not feasible.any():
            continue
        cand = np.where(feasible, rate, -1.0)
        j = int(np.argmax(cand))                # first max = lowest combo id
        if cand[j] > best_rate:
            best_rate, best_id = float(cand[j]), int(ids[j])

    assignments = []
    if best_id < 0:
        best_id = 0   # only possible when even the empty combo is infeasible
    digits = (best_id // radix) % n_choices
    for kk in range(k):
        c = int(digits[kk])
        if c == 0:
            assignments.append(None)
            continue
        c0 = c - 1
        qi = c0 % q
        li = (c0 // q) % l + 1
        mi = c0 // (q * l)
        assignments.append(Assignment(user=mi, mode=li, stream=qi + 1,
                                      power=float(work.power[mi, li, qi, kk])))
    return AllocationDecision(assignments=tuple(assignments))
