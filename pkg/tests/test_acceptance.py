"""Acceptance gate: one test per criterion, each printing a PASS line.

The learning and sweep criteria train real models and take tens of
minutes combined on one CPU core; everything else is fast. Sweep tests
share one checkpoint cache directory, so trend figures that only vary a
test-time parameter reuse the same five reference models.
"""

import csv
import math
import time
from dataclasses import replace

import numpy as np
import pytest

import risjam.nn as nn
from risjam.agent import (AgentParams, Batch, Td3Agent, Td3Config, actor_update,
                          critic_update, td_targets)
from risjam.config import load_scenario
from risjam.harness import run_baseline, run_training
from risjam.linkmodel import ModulationTable, ber, min_power, sinr
from risjam.sweeps import load_grid, sweep
from risjam.validation import run_oracle_check

EPS = 1e-9


def report(criterion, passed, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} ({detail})"
    print(line, flush=True)
    assert passed, line


# ---------------------------------------------------------------------------
# 1. scheduler optimality against exhaustive enumeration


def test_criterion_1_allocator_optimality():
    t0 = time.perf_counter()
    stats = run_oracle_check(n_instances=200, kmax=4, seed=2026)
    elapsed = time.perf_counter() - t0
    ok = (stats.within_quantum_fraction >= 0.95
          and stats.exact_fraction >= 0.80
          and elapsed < 60.0)
    report(1, ok,
           f"exact {stats.exact_fraction * 100:.1f}% (>=80), "
           f"within one quantum {stats.within_quantum_fraction * 100:.1f}% (>=95), "
           f"{elapsed:.1f}s (<60)")


# ---------------------------------------------------------------------------
# 2. BER / power round trip


def test_criterion_2_ber_power_round_trip():
    mods = ModulationTable()
    rng = np.random.default_rng(2026)
    n = 10_000
    g = rng.uniform(1e-12, 1e-6, n)
    gj = rng.uniform(0.0, 1e-6, n)
    jam = rng.uniform(0.0, 1.0, n)
    noise = rng.uniform(1e-14, 1e-9, n)
    rate = rng.choice([2.0, 4.0, 6.0], n)
    target = rng.uniform(1e-8, 0.19, n)
    p = min_power(g, gj, jam, noise, rate, target, mods)
    achieved = ber(sinr(p, g, gj, jam, noise), rate, mods)
    rel = np.abs(achieved - target) / target
    report(2, float(np.max(rel)) < 1e-10,
           f"max relative error {np.max(rel):.2e} over {n} samples (<1e-10)")


# ---------------------------------------------------------------------------
# 3. gradient correctness by central finite differences


def _fd_check(net, x, upstream, h=1e-5, rel=1e-4):
    g = nn.backward(net, x, upstream)

    def value():
        return float(np.sum(nn.forward(net, x) * upstream))

    worst = 0.0
    for analytic, params in ((g.d_weights, net.weights), (g.d_biases, net.biases)):
        for a, p in zip(analytic, params):
            for idx in np.ndindex(p.shape):
                orig = p[idx]
                p[idx] = orig + h
                up = value()
                p[idx] = orig - h
                down = value()
                p[idx] = orig
                num = (up - down) / (2 * h)
                err = abs(a[idx] - num) / max(1.0, abs(num))
                worst = max(worst, err)
    return worst


def test_criterion_3_gradient_correctness():
    rng = np.random.default_rng(33)
    worst = 0.0
    checked = 0
    while checked < 100:
        acts = [("relu", "identity"), ("relu", "sigmoid_scaled"),
                ("sigmoid_scaled", "identity"),
                ("sigmoid_scaled", "sigmoid_scaled")][checked % 4]
        sizes = (int(rng.integers(2, 5)), int(rng.integers(2, 7)),
                 int(rng.integers(1, 4)))
        net = nn.init_dense_net(sizes, acts, rng, sigmoid_scale=2 * math.pi)
        x = rng.standard_normal(sizes[0])
        if "relu" in acts:
            # keep pre-activations away from the kink
            z = x @ net.weights[0].T + net.biases[0]
            if np.min(np.abs(z)) < 1e-3:
                continue
        upstream = rng.standard_normal(sizes[-1])
        worst = max(worst, _fd_check(net, x, upstream))
        checked += 1
    report(3, worst < 1e-4,
           f"worst relative gradient error {worst:.2e} over 100 nets (<1e-4)")


# ---------------------------------------------------------------------------
# 4. TD3 update mechanics on hand-computed scalar traces


def _scalar_net(w, b=0.0, in_dim=1):
    weights = np.zeros((1, in_dim))
    weights[0, :] = w
    return nn.DenseNet(sizes=(in_dim, 1), weights=[weights],
                       biases=[np.array([float(b)])], activations=("identity",))


def _scalar_params(cfg, wa, w1, w2):
    actor = _scalar_net(wa)
    critic1 = _scalar_net(w1, in_dim=2)
    critic2 = _scalar_net(w2, in_dim=2)
    return AgentParams(actor=actor, critic1=critic1, critic2=critic2,
                       target_actor=actor.copy(), target_critic1=critic1.copy(),
                       target_critic2=critic2.copy(),
                       actor_opt=nn.AdamState.for_net(actor, cfg.actor_lr),
                       critic1_opt=nn.AdamState.for_net(critic1, cfg.critic_lr),
                       critic2_opt=nn.AdamState.for_net(critic2, cfg.critic_lr))


def _adam_ref(p0, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = [0.0] * len(p0)
    v = [0.0] * len(p0)
    p = list(p0)
    for t, g_t in enumerate(grads, start=1):
        for i, g in enumerate(g_t):
            m[i] = b1 * m[i] + (1 - b1) * g
            v[i] = b2 * v[i] + (1 - b2) * g * g
            p[i] -= lr * (m[i] / (1 - b1 ** t)) / (math.sqrt(v[i] / (1 - b2 ** t)) + eps)
    return p


def test_criterion_4_td3_mechanics(monkeypatch):
    tol = 1e-12
    cfg = Td3Config(policy_noise_var=0.0, discount=0.9, polyak=5e-3)
    wa, w1, w2 = 0.5, (0.3, 0.4), (0.2, -0.1)
    s, a, r, s2 = 1.0, 0.25, 2.0, 1.5
    params = _scalar_params(cfg, wa, w1, w2)
    batch = Batch(states=np.array([[s]]), actions=np.array([[a]]),
                  rewards=np.array([r]), next_states=np.array([[s2]]))

    # hand-computed critic step
    a2 = min(max(wa * s2, 0.0), cfg.a_max)
    y = r + cfg.discount * min(w1[0] * s2 + w1[1] * a2, w2[0] * s2 + w2[1] * a2)
    res = critic_update(params, batch, cfg, np.random.default_rng(0))
    errs = [abs(res.targets[0] - y)]
    for w, net in ((w1, params.critic1), (w2, params.critic2)):
        q = w[0] * s + w[1] * a
        d = 2.0 * (q - y)
        ref = _adam_ref(list(w) + [0.0], [[d * s, d * a, d]], cfg.critic_lr)
        errs += [abs(net.weights[0][0, 0] - ref[0]),
                 abs(net.weights[0][0, 1] - ref[1]),
                 abs(net.biases[0][0] - ref[2])]

    # hand-computed actor step + target blends
    w1_now = (params.critic1.weights[0][0, 0], params.critic1.weights[0][0, 1])
    b1_now = params.critic1.biases[0][0]
    actor_update(params, batch, cfg)
    dj_dwa = w1_now[1] * s                     # d/dwa of Q1(s, wa*s)
    ref_wa = _adam_ref([wa], [[-dj_dwa]], cfg.actor_lr)[0]
    errs.append(abs(params.actor.weights[0][0, 0] - ref_wa))
    # targets: rho * online + (1 - rho) * target, starting from exact copies
    rho = cfg.polyak
    ref_target_w1 = rho * w1_now[0] + (1 - rho) * w1[0]
    errs.append(abs(params.target_critic1.weights[0][0, 0] - ref_target_w1))
    ref_target_wa = rho * params.actor.weights[0][0, 0] + (1 - rho) * wa
    errs.append(abs(params.target_actor.weights[0][0, 0] - ref_target_wa))

    # policy-delay schedule
    agent = Td3Agent(1, 1, Td3Config(batch_size=1, policy_delay=2), seed=0)
    for _ in range(7):
        agent.observe([0.1], [0.2], 1.0, [0.1])
        agent.train_step()
    schedule_ok = (agent.critic_updates == 7 and agent.actor_updates == 3)

    # instrumentation: the TD target only ever consults target networks
    seen = []
    real_forward = nn.forward

    def spy(net, x):
        seen.append(id(net))
        return real_forward(net, x)

    monkeypatch.setattr("risjam.agent.nn.forward", spy)
    params2 = _scalar_params(cfg, wa, w1, w2)
    td_targets(params2, np.array([1.0]), np.array([[1.0]]), cfg,
               np.random.default_rng(0))
    target_only = set(seen) <= {id(params2.target_actor),
                                id(params2.target_critic1),
                                id(params2.target_critic2)}
    monkeypatch.undo()

    worst = max(errs)
    ok = worst < tol and schedule_ok and target_only
    report(4, ok, f"max trace error {worst:.2e} (<1e-12), "
                  f"delay schedule {'ok' if schedule_ok else 'BROKEN'}, "
                  f"targets isolated {'yes' if target_only else 'NO'}")


# ---------------------------------------------------------------------------
# 5. learning beats the matched-seed random-phase baseline


SEEDS = (1, 2, 3, 4, 5)


def test_criterion_5_learning_beats_random():
    t0 = time.perf_counter()
    desk = load_scenario("configs/desk.toml")
    wins = []
    details = []
    for seed in SEEDS:
        trained_log, _ = run_training(replace(desk, seed=seed))
        base_log = run_baseline(replace(desk, kind="random-ris", seed=seed))
        learned = trained_log.mean_reward(last_episodes=50)
        random_ris = base_log.mean_reward(last_episodes=50)
        margin = learned / random_ris - 1.0 if random_ris > 0 else math.inf
        wins.append(margin >= 0.10)
        details.append(f"s{seed}: {learned:.1f} vs {random_ris:.1f} "
                       f"({margin * 100:+.0f}%)")
    elapsed = time.perf_counter() - t0
    ok = sum(wins) >= 4 and elapsed <= 30 * 60
    report(5, ok, f"{sum(wins)}/5 seeds >= +10% [{'; '.join(details)}], "
                  f"{elapsed / 60:.1f} min (<=30)")


# ---------------------------------------------------------------------------
# 6. trend reproduction through the sweep machinery


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance_sweeps")


def _series_means(csv_path, algorithm="psd-td3"):
    by_value = {}
    with open(csv_path, newline="") as f:
        for row in csv.DictReader(f):
            if row["algorithm"] != algorithm:
                continue
            assert row["error"] == "", f"sweep point failed: {row['error']}"
            by_value.setdefault(float(row["value"]), []).append(
                float(row["mean_rate"]))
    values = sorted(by_value)
    return values, [float(np.mean(by_value[v])) for v in values]


def _run_sweep(grid_path, sweep_dir):
    t0 = time.perf_counter()
    grid = load_grid(grid_path)
    csv_path = sweep(grid, sweep_dir)
    return csv_path, time.perf_counter() - t0


def test_criterion_6a_rate_grows_with_elements(sweep_dir):
    csv_path, elapsed = _run_sweep("configs/grid_N.toml", sweep_dir)
    values, means = _series_means(csv_path)
    assert values == [0.0, 40.0, 60.0, 80.0]
    monotone = all(b >= a - EPS for a, b in zip(means, means[1:]))
    ok = monotone and elapsed <= 20 * 60
    report("6a (sum rate vs N)", ok,
           f"means {[f'{m:.1f}' for m in means]}, "
           f"{elapsed / 60:.1f} min (<=20)")


def test_criterion_6b_rate_grows_with_budget(sweep_dir):
    csv_path, elapsed = _run_sweep("configs/grid_pmax.toml", sweep_dir)
    values, means = _series_means(csv_path)
    monotone = all(b >= a - EPS for a, b in zip(means, means[1:]))
    ok = monotone and elapsed <= 20 * 60
    report("6b (sum rate vs P_max)", ok,
           f"means {[f'{m:.1f}' for m in means]}, "
           f"{elapsed / 60:.1f} min (<=20)")


def test_criterion_6c_jamming_kills_rate(sweep_dir):
    csv_path, elapsed = _run_sweep("configs/grid_pj.toml", sweep_dir)
    values, means = _series_means(csv_path)
    monotone = all(b <= a + EPS for a, b in zip(means, means[1:]))
    strong_jam = means[values.index(35.0)]
    weak_jam = means[values.index(10.0)]
    collapsed = strong_jam < 0.05 * weak_jam
    ok = monotone and collapsed and elapsed <= 20 * 60
    report("6c (sum rate vs P_J)", ok,
           f"means {[f'{m:.1f}' for m in means]}, "
           f"rate(35dBm)={strong_jam:.2f} < 5% of rate(10dBm)={weak_jam:.2f}: "
           f"{collapsed}, {elapsed / 60:.1f} min (<=20)")


def test_criterion_6d_flat_jamming_hurts(sweep_dir):
    csv_path, elapsed = _run_sweep("configs/grid_alpha.toml", sweep_dir)
    values, means = _series_means(csv_path)
    assert values == [0.5, 1.0, 2.0, 5.0]
    monotone = all(b <= a + EPS for a, b in zip(means, means[1:]))
    ok = monotone and elapsed <= 20 * 60
    report("6d (sum rate vs jamming shape)", ok,
           f"means {[f'{m:.1f}' for m in means]}, "
           f"{elapsed / 60:.1f} min (<=20)")


# ---------------------------------------------------------------------------
# 7. byte-identical reruns


def test_criterion_7_determinism(tmp_path):
    sc = load_scenario("configs/desk.toml")
    tiny = replace(
        sc, users=2, seed=17,
        geometry=replace(sc.geometry, ris_cols=2, ris_rows=2),
        propagation=replace(sc.propagation, subchannels=4),
        td3=replace(sc.td3, episodes=2, steps_per_episode=6, batch_size=4,
                    hidden=(8, 8)),
    )
    run_training(tiny, out_dir=tmp_path / "a")
    run_training(tiny, out_dir=tmp_path / "b")
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in ("steps.csv", "episodes.csv"))

    grid = load_grid("configs/grid_pmax.toml")
    grid = replace(grid, values=(25.0,), seeds=(1,), algorithms=("no-ris",),
                   base=replace(grid.base, users=2,
                                geometry=replace(grid.base.geometry,
                                                 ris_cols=2, ris_rows=2),
                                propagation=replace(grid.base.propagation,
                                                    subchannels=4)))
    p1 = sweep(grid, tmp_path / "s1")
    p2 = sweep(grid, tmp_path / "s2")
    same_sweep = open(p1, "rb").read() == open(p2, "rb").read()
    report(7, same and same_sweep,
           f"training CSVs identical: {same}, sweep CSV identical: {same_sweep}")
