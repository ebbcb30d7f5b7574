"""Per-run inequality suites: every theorem and lemma checked at desk scale.

Each suite returns CheckResult rows; the CLI prints one PASS/FAIL line per
row and exits nonzero on any failure. The test suite runs the same functions
at full scale, so CLI verification and pytest acceptance share one
implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import build_grid, ceil_log2_sqrt, kl_divergence
from .covering import (
    CoveringInterval,
    active_intervals,
    enumerate_boxes,
    partition,
    partition_count_bound,
)
from .algorithms import Squint, bound_A, hedge_bound, squint_bound
from .envsim import EnvironmentSpec, Segment, builtin_scenarios
from .meta import jun_prior
from .harness import ExperimentConfig, RunRecord, run

TOL = 1e-9
EXACT_TOL = 1e-12


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.detail}"


def _coin_env(rng, horizon: int, n_experts: int, allow_switch: bool = True) -> EnvironmentSpec:
    seed = int(rng.integers(0, 2**63 - 1))
    means = tuple(float(m) for m in rng.random(n_experts))
    segments = [Segment(1, "coin", means)]
    if allow_switch and horizon >= 4 and rng.random() < 0.5:
        cut = int(rng.integers(2, horizon + 1))
        segments.append(Segment(cut, "coin", tuple(float(m) for m in rng.random(n_experts))))
    return EnvironmentSpec(n_experts, horizon, tuple(segments), seed)


# ---------------------------------------------------------------------------
# structural suite (criterion 7)


def structural_suite(partition_limit: int = 512, active_limit: int = 2**16,
                     event_horizon: int = 127) -> list[CheckResult]:
    results = []

    bad = 0
    checked = 0
    for a in range(1, partition_limit + 1):
        for b in range(a, partition_limit + 1):
            part = partition(a, b)
            checked += 1
            pieces = part.pieces
            try:
                for p in pieces:
                    CoveringInterval.from_bounds(p.start, p.end)
            except ValueError:
                bad += 1
                continue
            if pieces[0].start != a or pieces[-1].end != b:
                bad += 1
                continue
            if any(q.start != p.end + 1 for p, q in zip(pieces, pieces[1:])):
                bad += 1
                continue
            lengths = [p.length for p in pieces]
            c, d = part.c, part.d
            if c + d + 1 != len(pieces):
                bad += 1
                continue
            if any(lengths[i] * 2 > lengths[i + 1] for i in range(c)):
                bad += 1
                continue
            if any(lengths[i + 1] * 2 > lengths[i] for i in range(c + 1, len(pieces) - 1)):
                bad += 1
                continue
            if len(pieces) > partition_count_bound(b - a + 1) + EXACT_TOL:
                bad += 1
    results.append(CheckResult(
        "partition-invariants",
        bad == 0,
        f"{checked} intervals within [1,{partition_limit}], {bad} violations"))

    bad_active = sum(
        1 for t in range(1, active_limit + 1)
        if len(active_intervals(t)) != 1 + (t.bit_length() - 1)
    )
    results.append(CheckResult(
        "active-count",
        bad_active == 0,
        f"|active(t)| = 1 + floor(log2 t) for t <= {active_limit}, {bad_active} violations"))

    sizes_ok = True
    worst = ""
    horizons = sorted({1, 2, 3} | {2**m + d for m in range(1, 17) for d in (-1, 0, 1)})
    for horizon in horizons:
        sched = enumerate_boxes(horizon)
        by_formula = sum(
            max((horizon + 1) // 2**i - 1, 0)
            for i in range(int(math.log2(horizon + 1)) + 1)
        )
        if sched.size > 2 * horizon or sched.size != by_formula:
            sizes_ok = False
            worst = f"T={horizon}: |B|={sched.size}, formula={by_formula}"
            break
    results.append(CheckResult(
        "box-count",
        sizes_ok,
        worst or f"|B| <= 2T and matches the level-sum formula for {len(horizons)} horizons"))

    # the exact work identity holds when every active interval ends within the
    # horizon, i.e. at T = 2^m - 1; elsewhere the schedule count is smaller
    rng = np.random.default_rng(907)
    env = _coin_env(rng, event_horizon, 3, allow_switch=False)
    rec = run(ExperimentConfig("squint-ce-uniform", env))
    expected = sum(1 + (t.bit_length() - 1) for t in range(1, event_horizon + 1))
    sched_total = rec.schedule.total_active()
    ok = rec.box_update_events == expected == sched_total
    extra_T = 100
    env2 = _coin_env(rng, extra_T, 3, allow_switch=False)
    rec2 = run(ExperimentConfig("squint-ce-uniform", env2))
    bound_events = sum(1 + (t.bit_length() - 1) for t in range(1, extra_T + 1))
    ok = ok and rec2.box_update_events == rec2.schedule.total_active() <= bound_events
    results.append(CheckResult(
        "box-update-events",
        ok,
        f"T={event_horizon}: events={rec.box_update_events}, sum(1+log2 t)={expected}; "
        f"T={extra_T}: events={rec2.box_update_events} <= {bound_events}"))
    return results


# ---------------------------------------------------------------------------
# Hedge (criterion 1)


def hedge_suite(n_runs: int = 500, seed: int = 11) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(n_runs):
        horizon = int(rng.integers(1, 257))
        n_experts = int(rng.choice([2, 4, 8]))
        rec = run(ExperimentConfig("hedge", _coin_env(rng, horizon, n_experts)))
        regret = rec.ledger.regret((1, horizon))
        worst = min(worst, hedge_bound(horizon, n_experts) - float(regret.max()))
    return [CheckResult(
        "hedge-total",
        worst >= -TOL,
        f"{n_runs} runs, min slack of sqrt((T/2) ln K) vs max_k R_T^k = {worst:.6f}")]


# ---------------------------------------------------------------------------
# Squint, fixed interval (criteria 2, 5, 6, part of 9)


def _comparator_sets(record: RunRecord) -> list[tuple[int, ...]]:
    n = record.n_experts
    sets = [(k,) for k in range(n)]
    if n >= 2:
        totals = record.losses.sum(axis=0)
        order = np.lexsort((np.arange(n), totals))
        sets.append(tuple(sorted(int(k) for k in order[: (n + 1) // 2])))
    return sets


def squint_suite(n_runs: int = 500, seed: int = 23) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst_bound = math.inf
    worst_sur_total = math.inf
    worst_sur_kl = math.inf
    min_mix = math.inf
    for _ in range(n_runs):
        horizon = int(rng.integers(1, 257))
        n_experts = int(rng.choice([2, 4, 8]))
        rec = run(ExperimentConfig("squint", _coin_env(rng, horizon, n_experts)))
        prior = rec.config.expert_prior()
        grid = build_grid(horizon)
        rates = grid.array
        ledger = rec.ledger
        total_mix = float(rec.ghat.sum())
        min_mix = min(min_mix, float(rec.ghat.min()))
        r_full = ledger.regret((1, horizon))
        v_full = ledger.variance((1, horizon))
        log_joint = grid.log_gamma[:, None] + np.log(prior.dist.p)[None, :]
        joint_prior = np.exp(log_joint)
        for kset in _comparator_sets(rec):
            mass = prior.mass(kset)
            cond = prior.conditional(kset)
            r_set = float(cond @ r_full[list(kset)])
            v_set = float(cond @ v_full[list(kset)])
            worst_bound = min(
                worst_bound, squint_bound(v_set, bound_A(horizon, mass)) - r_set)
            for i, eta in enumerate(rates):
                # E_Q[sum fhat] for Q = delta_eta x pi(.|K), via F = -eta R + eta^2 V
                expected_f = -eta * r_set + eta * eta * v_set
                s_q = total_mix - expected_f
                worst_sur_total = min(worst_sur_total, eta * eta * v_set + s_q - eta * r_set)
                q_joint = np.zeros_like(joint_prior)
                q_joint[i, list(kset)] = cond
                kl = kl_divergence(q_joint.ravel(), joint_prior.ravel())
                worst_sur_kl = min(worst_sur_kl, kl - s_q)
    return [
        CheckResult("squint-total", worst_bound >= -TOL,
                    f"{n_runs} runs, singletons and top-half, min slack = {worst_bound:.6f}"),
        CheckResult("surrogate-total", worst_sur_total >= -TOL,
                    f"E_Q[eta R] <= E_Q[eta^2 V] + S_T^Q, min slack = {worst_sur_total:.6f}"),
        CheckResult("surrogate-kl", worst_sur_kl >= -TOL,
                    f"S_T^Q <= KL(Q || gamma x pi), min slack = {worst_sur_kl:.6f}"),
        CheckResult("squint-mixloss-nonneg", min_mix >= -EXACT_TOL,
                    f"per-round mix loss >= 0, min = {min_mix:.3e}"),
    ]


# ---------------------------------------------------------------------------
# Squint-CE (criteria 3, 4, 5, 6, parts of 9)


def _interval_min_slack(cum_r, cum_v, horizon, a_of_length, bound_fn):
    """Minimum over all intervals and all columns of bound - measured."""
    lengths = np.arange(1, horizon + 1)
    a_terms = a_of_length(lengths)
    worst = math.inf
    for start in range(1, horizon + 1):
        r_block = cum_r[start:] - cum_r[start - 1]
        v_block = cum_v[start:] - cum_v[start - 1]
        a_block = a_terms[: horizon - start + 1]
        bound = bound_fn(v_block, a_block[:, None] if r_block.ndim == 2 else a_block)
        worst = min(worst, float((bound - r_block).min()))
    return worst


def squintce_suite(prior_name: str = "uniform", horizons=(32, 64, 128),
                   runs_each: int = 100, seed: int = 37,
                   deco_samples: int = 10) -> list[CheckResult]:
    algo = "squint-ce-uniform" if prior_name == "uniform" else "squint-ce-jun"
    bound_name = "squintce-interval" if prior_name == "uniform" else "squintce-interval-jun"
    rng = np.random.default_rng(seed)
    worst_bound = math.inf
    worst_sur_interval = math.inf
    worst_box = math.inf
    worst_meta = math.inf
    worst_deco = 0.0
    min_ghat = math.inf
    max_route = 0.0
    max_equiv = 0.0
    max_z = 0.0
    n_runs = 0
    for horizon in horizons:
        sched = enumerate_boxes(horizon)
        jun = jun_prior(sched)
        max_z = max(max_z, jun.normalizer)
        m = ceil_log2_sqrt(horizon)
        grid = build_grid(horizon)
        rates = grid.array
        ln_grid = math.log(m) if m >= 1 else -math.inf
        if prior_name == "uniform":
            neg_ln_tau = {j: math.log(sched.size) for j in range(sched.size)}
        else:
            neg_ln_tau = {j: -math.log(jun.weights[j]) for j in range(sched.size)}
        for _ in range(runs_each):
            n_experts = int(rng.choice([2, 3, 4]))
            rec = run(ExperimentConfig(algo, _coin_env(rng, horizon, n_experts)))
            n_runs += 1
            min_ghat = min(min_ghat, float(rec.ghat.min()))
            max_route = max(max_route, rec.route_gap)
            max_equiv = max(max_equiv, rec.equiv_gap)
            cum_r, cum_v = rec.ledger.prefix_arrays()
            cum_g = np.concatenate([[0.0], np.cumsum(rec.ghat)])
            mass = 1.0 / n_experts

            if prior_name == "uniform":
                def a_of(lengths, _m=mass, _t=horizon):
                    bracket = math.log(2 * _t) + ln_grid - math.log(_m)
                    return np.maximum(2.0 * np.log2(lengths + 2) * bracket, 1.0)

                worst_bound = min(worst_bound, _interval_min_slack(
                    cum_r, cum_v, horizon, a_of,
                    lambda v, a: 2.0 * np.sqrt(2.0 * v * a) + 4.0 * a))
            else:
                for start in range(1, horizon + 1):
                    ends = np.arange(start, horizon + 1)
                    lengths = ends - start + 1
                    bracket = 0.5 + 3.0 * np.log(ends) + ln_grid - math.log(mass)
                    a_block = np.maximum(2.0 * np.log2(lengths + 2) * bracket, 1.0)
                    r_block = cum_r[start:] - cum_r[start - 1]
                    v_block = cum_v[start:] - cum_v[start - 1]
                    bound = 2.0 * np.sqrt(2.0 * v_block * a_block[:, None]) + 4.0 * a_block[:, None]
                    worst_bound = min(worst_bound, float((bound - r_block).min()))

            # interval surrogate inequality on every run: all intervals, all rates,
            # sampled comparator sets
            prior = rec.config.expert_prior()
            for kset in _comparator_sets(rec):
                cond = prior.conditional(kset)
                cols = list(kset)
                rw = cum_r[:, cols] @ cond
                vw = cum_v[:, cols] @ cond
                for eta in rates:
                    for start in range(1, horizon + 1):
                        r_i = rw[start:] - rw[start - 1]
                        v_i = vw[start:] - vw[start - 1]
                        g_i = cum_g[start:] - cum_g[start - 1]
                        s_q = g_i - (-eta * r_i + eta * eta * v_i)
                        worst_sur_interval = min(worst_sur_interval, float(
                            (eta * eta * v_i + s_q - eta * r_i).min()))

            # per-box surrogate regret vs ln|Gamma| - ln pi(K), and the meta
            # surrogate regret vs -ln tau(b)
            for j, trace in rec.box_losses.items():
                box = rec.schedule.boxes[j]
                a, b = box.start, box.end
                g_sum = math.fsum(g for _, g in trace)
                ghat_sum = float(cum_g[b] - cum_g[a - 1])
                meta_s = ghat_sum - g_sum
                worst_meta = min(worst_meta, neg_ln_tau[j] - meta_s)
                if prior_name == "jun":
                    worst_meta = min(worst_meta, 0.5 + 3.0 * math.log(b) - meta_s)
                for kset in [(k,) for k in range(n_experts)]:
                    cond = prior.conditional(kset)
                    cols = list(kset)
                    r_j = float((cum_r[b, cols] - cum_r[a - 1, cols]) @ cond)
                    v_j = float((cum_v[b, cols] - cum_v[a - 1, cols]) @ cond)
                    for eta in rates:
                        s_box = g_sum - (-eta * r_j + eta * eta * v_j)
                        worst_box = min(worst_box,
                                        ln_grid - math.log(mass) - s_box)

            # surrogate regret decomposition over the covering partition
            for _ in range(deco_samples):
                a = int(rng.integers(1, horizon + 1))
                b = int(rng.integers(a, horizon + 1))
                eta = float(rng.choice(rates))
                k = int(rng.integers(0, n_experts))
                direct = float(cum_g[b] - cum_g[a - 1]) - (
                    -eta * float(cum_r[b, k] - cum_r[a - 1, k])
                    + eta * eta * float(cum_v[b, k] - cum_v[a - 1, k]))
                total = 0.0
                for piece in partition(a, b).pieces:
                    j = rec.schedule.index_of(piece.bounds)
                    g_sum = math.fsum(g for _, g in rec.box_losses[j])
                    ghat_sum = float(cum_g[piece.end] - cum_g[piece.start - 1])
                    s_meta = ghat_sum - g_sum
                    s_box = g_sum - (
                        -eta * float(cum_r[piece.end, k] - cum_r[piece.start - 1, k])
                        + eta * eta * float(cum_v[piece.end, k] - cum_v[piece.start - 1, k]))
                    total += s_meta + s_box
                worst_deco = max(worst_deco, abs(direct - total))

    label = f"{n_runs} runs, T in {tuple(horizons)}"
    results = [
        CheckResult(bound_name, worst_bound >= -TOL,
                    f"{label}, exhaustive intervals, singletons, min slack = {worst_bound:.6f}"),
        CheckResult(f"surrogate-interval[{prior_name}]", worst_sur_interval >= -TOL,
                    f"interval surrogate inequality, min slack = {worst_sur_interval:.6f}"),
        CheckResult(f"blackbox-surrogate[{prior_name}]", worst_box >= -TOL,
                    f"S_J^Q(b_J) <= ln|Gamma| - ln pi(K), min slack = {worst_box:.6f}"),
        CheckResult(f"meta-surrogate[{prior_name}]", worst_meta >= -TOL,
                    f"S_J^b(M) <= -ln tau(b), min slack = {worst_meta:.6f}"),
        CheckResult(f"surrogate-decomposition[{prior_name}]", worst_deco <= TOL,
                    f"direct vs partition sum, max gap = {worst_deco:.3e}"),
        CheckResult(f"ghat-nonneg[{prior_name}]", min_ghat >= -EXACT_TOL,
                    f"min learner loss = {min_ghat:.3e}"),
        CheckResult(f"weight-routes[{prior_name}]", max_route <= TOL,
                    f"closed form vs two-stage mixture, max gap = {max_route:.3e}"),
        CheckResult(f"mixloss-equivalence[{prior_name}]", max_equiv <= TOL,
                    f"learner loss under q vs q-tilde, max gap = {max_equiv:.3e}"),
    ]
    if prior_name == "jun":
        results.append(CheckResult(
            "jun-normalizer", max_z <= math.pi**2 / 6.0 + TOL,
            f"max Z over schedules = {max_z:.6f} <= pi^2/6 = {math.pi**2 / 6.0:.6f}"))
    return results


# ---------------------------------------------------------------------------
# Squint routes (part of criterion 9)


def squint_route_suite(n_runs: int = 25, seed: int = 67) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_runs):
        horizon = int(rng.integers(1, 65))
        n_experts = int(rng.integers(2, 6))
        losses = rng.random((horizon, n_experts))
        learner = Squint(n_experts, build_grid(horizon))
        for t in range(horizon):
            w_marginal = learner.weights()
            w_direct = learner.weights_from_moments()
            worst = max(worst, float(np.max(np.abs(w_marginal.p - w_direct.p))))
            learner.update(w_marginal, losses[t])
    return [CheckResult(
        "squint-routes", worst <= TOL,
        f"{n_runs} runs, direct weights vs posterior marginalization, max gap = {worst:.3e}")]


# ---------------------------------------------------------------------------
# adaptivity demonstration (criterion 8)


def adaptivity_suite(n_seeds: int = 20, horizon: int = 512, n_experts: int = 4,
                     seed: int = 404) -> list[CheckResult]:
    post = (horizon // 2 + 1, horizon)
    sce_regret, static_regret = [], []
    for s in range(n_seeds):
        env = builtin_scenarios(horizon, n_experts, seed + s)["single-switch"]
        rec_sce = run(ExperimentConfig("squint-ce-uniform", env))
        rec_sq = run(ExperimentConfig("squint", env))
        best = rec_sce.best_expert(post)
        sce_regret.append(float(rec_sce.ledger.regret(post)[best]))
        best_sq = rec_sq.best_expert(post)
        static_regret.append(float(rec_sq.ledger.regret(post)[best_sq]))
    mean_sce = float(np.mean(sce_regret))
    mean_static = float(np.mean(static_regret))
    return [CheckResult(
        "adaptivity",
        mean_sce <= mean_static,
        f"{n_seeds} seeds, post-switch interval {post}: mean Squint-CE regret "
        f"{mean_sce:.3f} vs static Squint {mean_static:.3f}")]


# ---------------------------------------------------------------------------


def run_all(quick: bool = False) -> list[CheckResult]:
    if quick:
        results = structural_suite(partition_limit=128, active_limit=2**12)
        results += hedge_suite(n_runs=60)
        results += squint_suite(n_runs=60)
        results += squintce_suite("uniform", horizons=(16, 32), runs_each=15)
        results += squintce_suite("jun", horizons=(16, 32), runs_each=15)
        results += squint_route_suite(n_runs=8)
        results += adaptivity_suite(n_seeds=5, horizon=128)
    else:
        results = structural_suite()
        results += hedge_suite()
        results += squint_suite()
        results += squintce_suite("uniform")
        results += squintce_suite("jun")
        results += squint_route_suite()
        results += adaptivity_suite()
    return results
