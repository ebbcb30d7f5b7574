"""Experiment runner, bound verifier and report emission.

A run is a pure function of its config (the environment seed included), so
identical configs produce byte-identical CSV output. Bound evaluation walks a
recorded trace and checks every applicable theorem as a per-run inequality,
reporting the slack (bound minus measured regret) row by row.

CSV formats (stable, documented here and in the README):

* run CSV:    t, l_1..l_K, w_1..w_K, r_1..r_K, ghat
              (ghat is the learner's per-round mix loss; empty for algorithms
              that do not define one)
* bound CSV:  I1, I2, Kset, R, V, bound_name, bound, slack
              (Kset renders 1-based expert indices, joined by '|')
* compare CSV: I1, I2, algorithm, seeds, R_mean, V_mean, bound_name, bound_mean
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ExpertPrior,
    Interval,
    ProbabilityVector,
    RegretLedger,
    build_grid,
    instantaneous_regret,
    mix_loss,
    surrogate_loss_grid,
    validate_interval,
)
from .covering import CoveringSchedule, enumerate_boxes
from .algorithms import Hedge, Squint, bound_A, hedge_bound, squint_bound
from .envsim import EnvironmentSpec, builtin_scenarios, generate
from .meta import (
    CbceLearner,
    SquintCe,
    bound_A_hat,
    bound_A_tilde,
    cbce_meta_bound,
    jun_prior,
    uniform_box_prior,
)

ALGORITHMS = (
    "hedge",
    "squint",
    "cbce+hedge",
    "cbce+squint",
    "squint-ce-uniform",
    "squint-ce-jun",
)

THREADS_ENV = "DRIFTSQUINT_THREADS"


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    env: EnvironmentSpec
    prior: tuple[float, ...] | None = None
    intervals: str = "exhaustive"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; pick one of {ALGORITHMS}")
        parse_interval_policy(self.intervals)
        if self.prior is not None and len(self.prior) != self.env.n_experts:
            raise ValueError("prior length does not match the expert count")

    def expert_prior(self) -> ExpertPrior:
        if self.prior is None:
            return ExpertPrior.uniform(self.env.n_experts)
        return ExpertPrior(ProbabilityVector.from_weights(np.asarray(self.prior)))

    def to_json(self) -> dict:
        doc = {"algorithm": self.algorithm, "intervals": self.intervals,
               "env": self.env.to_json()}
        if self.prior is not None:
            doc["prior"] = list(self.prior)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        prior = doc.get("prior")
        return cls(
            algorithm=str(doc["algorithm"]),
            env=EnvironmentSpec.from_json(doc["env"]),
            prior=tuple(float(x) for x in prior) if prior is not None else None,
            intervals=str(doc.get("intervals", "exhaustive")),
        )


@dataclass
class RunRecord:
    """Full trace of one run; everything any bound needs is recoverable here."""

    config: ExperimentConfig
    losses: np.ndarray
    weights: np.ndarray
    regrets: np.ndarray
    ghat: np.ndarray | None = None
    q_summary: list[tuple[int, int, int, float]] | None = None
    box_losses: dict[int, list[tuple[int, float]]] | None = None
    box_meta_regret: dict[int, float] | None = None
    box_update_events: int = 0
    schedule: CoveringSchedule | None = None
    route_gap: float = 0.0
    equiv_gap: float = 0.0
    _ledger: RegretLedger | None = field(default=None, repr=False)

    @property
    def algorithm(self) -> str:
        return self.config.algorithm

    @property
    def horizon(self) -> int:
        return self.losses.shape[0]

    @property
    def n_experts(self) -> int:
        return self.losses.shape[1]

    @property
    def ledger(self) -> RegretLedger:
        if self._ledger is None:
            self._ledger = RegretLedger.from_matrix(self.regrets)
        return self._ledger

    def best_expert(self, interval: Interval) -> int:
        """Realized-best expert on an interval: argmin of summed losses, lowest
        index on ties (chosen post hoc from the loss matrix)."""
        a, b = validate_interval(interval, self.horizon)
        return int(np.argmin(self.losses[a - 1:b].sum(axis=0)))


class RoundError(RuntimeError):
    """A module error surfaced mid-run; carries the offending round index."""

    def __init__(self, round_index: int, err: Exception):
        super().__init__(f"round {round_index}: {err}")
        self.round_index = round_index


def run(config: ExperimentConfig) -> RunRecord:
    losses = generate(config.env)
    horizon, n_experts = losses.shape
    prior = config.expert_prior()
    algo = config.algorithm
    try:
        if algo == "hedge":
            return _run_hedge(config, losses, prior)
        if algo == "squint":
            return _run_squint(config, losses, prior)
        if algo in ("cbce+hedge", "cbce+squint"):
            return _run_cbce(config, losses, prior, base=algo.split("+")[1])
        return _run_squintce(config, losses, prior,
                             uniform=(algo == "squint-ce-uniform"))
    except RoundError as err:
        raise RuntimeError(
            f"run failed ({algo}, T={horizon}, K={n_experts}): {err}") from err


def _run_hedge(config, losses, prior) -> RunRecord:
    horizon, n_experts = losses.shape
    learner = Hedge(n_experts, horizon=horizon, prior=prior)
    w_rows, r_rows = [], []
    for t in range(1, horizon + 1):
        try:
            w = learner.weights()
            r = instantaneous_regret(w, losses[t - 1])
            learner.update(losses[t - 1])
        except Exception as err:
            raise RoundError(t, err) from err
        w_rows.append(w.p)
        r_rows.append(r)
    return RunRecord(config, losses, np.array(w_rows), np.array(r_rows))


def _run_squint(config, losses, prior) -> RunRecord:
    horizon, n_experts = losses.shape
    learner = Squint(n_experts, build_grid(horizon), prior=prior)
    w_rows, r_rows, mix_rows = [], [], []
    rates = learner.grid.array
    for t in range(1, horizon + 1):
        try:
            posterior = np.exp(learner.log_posterior())
            w = learner.weights()
            r = learner.update(w, losses[t - 1])
            fhat = surrogate_loss_grid(rates, r)
        except Exception as err:
            raise RoundError(t, err) from err
        mix_rows.append(mix_loss(fhat.ravel(), posterior.ravel()))
        w_rows.append(w.p)
        r_rows.append(r)
    return RunRecord(config, losses, np.array(w_rows), np.array(r_rows),
                     ghat=np.array(mix_rows))


def _run_cbce(config, losses, prior, base: str) -> RunRecord:
    horizon, n_experts = losses.shape
    schedule = enumerate_boxes(horizon)
    learner = CbceLearner(schedule, n_experts, base=base, prior=prior)
    w_rows, r_rows, q_rows = [], [], []
    meta_regret: dict[int, float] = {}
    for t in range(1, horizon + 1):
        try:
            w, out = learner.round(losses[t - 1])
        except Exception as err:
            raise RoundError(t, err) from err
        r_rows.append(instantaneous_regret(w, losses[t - 1]))
        w_rows.append(w)
        top = int(np.argmax(out.q))
        box = schedule.boxes[out.active[top]]
        q_rows.append((len(out.active), box.start, box.end, float(out.q[top])))
        for j, rm in zip(out.active, out.meta_regret):
            meta_regret[j] = meta_regret.get(j, 0.0) + float(rm)
    return RunRecord(config, losses, np.array(w_rows), np.array(r_rows),
                     q_summary=q_rows, box_meta_regret=meta_regret,
                     box_update_events=learner.box_update_events,
                     schedule=schedule)


def _run_squintce(config, losses, prior, uniform: bool) -> RunRecord:
    horizon, n_experts = losses.shape
    schedule = enumerate_boxes(horizon)
    tau = uniform_box_prior(schedule) if uniform else jun_prior(schedule).weights
    learner = SquintCe(schedule, n_experts, grid=build_grid(horizon),
                       prior=prior, tau=tau)
    w_rows, r_rows, g_rows, q_rows = [], [], [], []
    box_losses: dict[int, list[tuple[int, float]]] = {}
    route_gap = equiv_gap = 0.0
    for t in range(1, horizon + 1):
        try:
            out = learner.round(losses[t - 1])
        except Exception as err:
            raise RoundError(t, err) from err
        w_rows.append(out.weights)
        r_rows.append(out.r)
        g_rows.append(out.ghat)
        route_gap = max(route_gap, float(np.max(np.abs(out.weights - out.weights_closed))))
        equiv_gap = max(equiv_gap, abs(out.ghat - out.ghat_unconditioned))
        top = int(np.argmax(out.q_active))
        box = schedule.boxes[out.active[top]]
        q_rows.append((len(out.active), box.start, box.end, float(out.q_active[top])))
        for j, g in zip(out.active, out.g_active):
            box_losses.setdefault(j, []).append((t, float(g)))
    return RunRecord(config, losses, np.array(w_rows), np.array(r_rows),
                     ghat=np.array(g_rows), q_summary=q_rows,
                     box_losses=box_losses,
                     box_update_events=learner.box_update_events,
                     schedule=schedule, route_gap=route_gap, equiv_gap=equiv_gap)


# ---------------------------------------------------------------------------
# interval enumeration


def parse_interval_policy(policy: str) -> tuple[str, int]:
    if policy in ("exhaustive", "dyadic"):
        return policy, 0
    if policy.startswith("sampled:"):
        n = int(policy.split(":", 1)[1])
        if n < 1:
            raise ValueError("sampled:<n> needs n >= 1")
        return "sampled", n
    raise ValueError(f"unknown interval policy {policy!r}")


def intervals_for(policy: str, horizon: int, seed: int = 0) -> list[Interval]:
    kind, n = parse_interval_policy(policy)
    if kind == "exhaustive":
        return [(a, b) for a in range(1, horizon + 1) for b in range(a, horizon + 1)]
    dyadic = [b.bounds for b in enumerate_boxes(horizon).boxes]
    if (1, horizon) not in dyadic:
        dyadic.append((1, horizon))
    if kind == "dyadic":
        return dyadic
    rng = np.random.Generator(np.random.Philox(key=seed))
    extra = set()
    while len(extra) < min(n, horizon * (horizon + 1) // 2):
        a = int(rng.integers(1, horizon + 1))
        b = int(rng.integers(a, horizon + 1))
        extra.add((a, b))
    return sorted(set(dyadic) | extra)


# ---------------------------------------------------------------------------
# bound evaluation


@dataclass(frozen=True)
class BoundRow:
    i1: int
    i2: int
    kset: tuple[int, ...]       # 0-based internally; rendered 1-based
    measured: float
    variance: float
    bound_name: str
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.measured

    def kset_label(self) -> str:
        return "|".join(str(k + 1) for k in self.kset)


@dataclass
class BoundReport:
    rows: list[BoundRow]

    @property
    def min_slack(self) -> float:
        return min((r.slack for r in self.rows), default=math.inf)

    def violations(self, tol: float = 1e-9) -> list[BoundRow]:
        return [r for r in self.rows if r.slack < -tol]


def _top_half(record: RunRecord) -> tuple[int, ...]:
    """The ceil(K/2) experts with the lowest total loss, ties by index."""
    totals = record.losses.sum(axis=0)
    order = np.lexsort((np.arange(record.n_experts), totals))
    return tuple(sorted(int(k) for k in order[: (record.n_experts + 1) // 2]))


def evaluate_bounds(record: RunRecord, intervals: str | None = None) -> BoundReport:
    """Every applicable theorem, one row per (interval, comparator set)."""
    cfg = record.config
    policy = intervals if intervals is not None else cfg.intervals
    horizon, n_experts = record.horizon, record.n_experts
    prior = cfg.expert_prior()
    ledger = record.ledger
    rows: list[BoundRow] = []
    algo = cfg.algorithm

    uniform_prior = cfg.prior is None
    if algo == "hedge":
        # stated for the default rate and uniform prior only
        if uniform_prior and n_experts >= 2:
            full = (1, horizon)
            r_full, v_full = ledger.regret(full), ledger.variance(full)
            bound = hedge_bound(horizon, n_experts)
            for k in range(n_experts):
                rows.append(BoundRow(1, horizon, (k,), float(r_full[k]),
                                     float(v_full[k]), "hedge-total", bound))
    elif algo == "squint":
        full = (1, horizon)
        sets = [(k,) for k in range(n_experts)]
        if n_experts >= 2:
            sets.append(_top_half(record))
        for kset in sets:
            r, v = _set_stats(ledger, prior, kset, full)
            a = bound_A(horizon, prior.mass(kset))
            rows.append(BoundRow(1, horizon, tuple(kset), r, v,
                                 "squint-total", squint_bound(v, a)))
    elif algo in ("squint-ce-uniform", "squint-ce-jun"):
        seed = cfg.env.seed
        for i1, i2 in intervals_for(policy, horizon, seed=seed):
            length = i2 - i1 + 1
            for k in range(n_experts):
                r, v = _set_stats(ledger, prior, (k,), (i1, i2))
                mass = prior.mass((k,))
                if algo == "squint-ce-uniform":
                    a = bound_A_hat(length, horizon, mass)
                    rows.append(BoundRow(i1, i2, (k,), r, v, "squintce-interval",
                                         squint_bound(v, a)))
                    a_exact = bound_A_hat(length, horizon, mass,
                                          box_count=record.schedule.size)
                    rows.append(BoundRow(i1, i2, (k,), r, v, "squintce-interval-exactB",
                                         squint_bound(v, a_exact)))
                else:
                    a = bound_A_tilde(length, i2, horizon, mass)
                    rows.append(BoundRow(i1, i2, (k,), r, v, "squintce-interval-jun",
                                         squint_bound(v, a)))
    elif algo in ("cbce+hedge", "cbce+squint"):
        # meta regret against each box, proven for the coin-betting prior
        for j, total in sorted((record.box_meta_regret or {}).items()):
            box = record.schedule.boxes[j]
            rows.append(BoundRow(box.start, box.end, tuple(range(n_experts)),
                                 total, math.nan, "cbce-meta",
                                 cbce_meta_bound(box.bounds)))
    return BoundReport(rows)


def _set_stats(ledger, prior, kset, interval) -> tuple[float, float]:
    from .core import regret_over_set

    return regret_over_set(ledger, prior, kset, interval)


# ---------------------------------------------------------------------------
# comparison across algorithms


def compare(records: list[RunRecord], intervals: list[Interval]) -> list[dict]:
    """Measured interval regret against the realized-best expert, averaged over
    seeds per algorithm, with each algorithm's applicable bound value."""
    if not records:
        raise ValueError("nothing to compare")
    shape = (records[0].horizon, records[0].n_experts)
    if any((r.horizon, r.n_experts) != shape for r in records):
        raise ValueError("records do not share an environment shape")
    by_algo: dict[str, list[RunRecord]] = {}
    for r in records:
        by_algo.setdefault(r.algorithm, []).append(r)
    rows = []
    for i1, i2 in intervals:
        for algo in sorted(by_algo):
            group = by_algo[algo]
            regs, variances, bounds = [], [], []
            name = ""
            for rec in group:
                best = rec.best_expert((i1, i2))
                prior = rec.config.expert_prior()
                r_val, v_val = _set_stats(rec.ledger, prior, (best,), (i1, i2))
                regs.append(r_val)
                variances.append(v_val)
                name, b_val = _comparison_bound(rec, (i1, i2), v_val, prior.mass((best,)))
                bounds.append(b_val)
            rows.append({
                "i1": i1, "i2": i2, "algorithm": algo, "seeds": len(group),
                "regret_mean": float(np.mean(regs)),
                "variance_mean": float(np.mean(variances)),
                "bound_name": name,
                "bound_mean": float(np.mean(bounds)) if not np.isnan(bounds).any() else math.nan,
            })
    return rows


def _comparison_bound(rec: RunRecord, interval: Interval, variance: float,
                      mass: float) -> tuple[str, float]:
    i1, i2 = interval
    horizon = rec.horizon
    length = i2 - i1 + 1
    algo = rec.algorithm
    if algo == "squint-ce-uniform":
        return "squintce-interval", squint_bound(variance, bound_A_hat(length, horizon, mass))
    if algo == "squint-ce-jun":
        return "squintce-interval-jun", squint_bound(variance, bound_A_tilde(length, i2, horizon, mass))
    if algo == "hedge" and (i1, i2) == (1, horizon) and rec.n_experts >= 2:
        return "hedge-total", hedge_bound(horizon, rec.n_experts)
    if algo == "squint" and (i1, i2) == (1, horizon):
        return "squint-total", squint_bound(variance, bound_A(horizon, mass))
    return "", math.nan


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return repr(float(x) + 0.0)  # + 0.0 folds -0.0 into 0.0


def write_run_csv(record: RunRecord, path) -> None:
    k = record.n_experts
    header = (["t"]
              + [f"l_{i+1}" for i in range(k)]
              + [f"w_{i+1}" for i in range(k)]
              + [f"r_{i+1}" for i in range(k)]
              + ["ghat"])
    lines = [",".join(header)]
    for t in range(record.horizon):
        cells = [str(t + 1)]
        cells += [_fmt(x) for x in record.losses[t]]
        cells += [_fmt(x) for x in record.weights[t]]
        cells += [_fmt(x) for x in record.regrets[t]]
        cells.append(_fmt(record.ghat[t]) if record.ghat is not None else "")
        lines.append(",".join(cells))
    _write_text(path, "\n".join(lines) + "\n")


def write_bound_csv(report: BoundReport, path) -> None:
    lines = ["I1,I2,Kset,R,V,bound_name,bound,slack"]
    for row in report.rows:
        lines.append(",".join([
            str(row.i1), str(row.i2), row.kset_label(),
            _fmt(row.measured), _fmt(row.variance),
            row.bound_name, _fmt(row.bound), _fmt(row.slack),
        ]))
    _write_text(path, "\n".join(lines) + "\n")


def write_compare_csv(rows: list[dict], path) -> None:
    lines = ["I1,I2,algorithm,seeds,R_mean,V_mean,bound_name,bound_mean"]
    for row in rows:
        lines.append(",".join([
            str(row["i1"]), str(row["i2"]), row["algorithm"], str(row["seeds"]),
            _fmt(row["regret_mean"]), _fmt(row["variance_mean"]),
            row["bound_name"], _fmt(row["bound_mean"]),
        ]))
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text: str) -> None:
    path = os.fspath(path)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def write_config(config: ExperimentConfig, path) -> None:
    _write_text(path, json.dumps(config.to_json(), indent=2) + "\n")


def read_config(path) -> ExperimentConfig:
    with open(os.fspath(path), encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as err:
            raise ValueError(f"{path}: line {err.lineno}: {err.msg}") from err
    try:
        return ExperimentConfig.from_json(doc)
    except (KeyError, TypeError, ValueError) as err:
        raise ValueError(f"{path}: bad config: {err}") from err


# ---------------------------------------------------------------------------
# worker pool


def worker_count(n_jobs: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


def run_many(configs: list[ExperimentConfig]) -> list[RunRecord]:
    """Run configs across a worker pool (capped by DRIFTSQUINT_THREADS), in a
    deterministic order."""
    workers = worker_count(len(configs))
    if workers == 1:
        return [run(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, configs))


def scenario_config(algorithm: str, scenario: str, horizon: int = 256,
                    n_experts: int = 4, seed: int = 0,
                    intervals: str = "exhaustive") -> ExperimentConfig:
    presets = builtin_scenarios(horizon, n_experts, seed)
    if scenario not in presets:
        raise ValueError(f"unknown scenario {scenario!r}; pick one of {sorted(presets)}")
    return ExperimentConfig(algorithm, presets[scenario], intervals=intervals)
