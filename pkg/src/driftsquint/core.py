"""Shared domain types and probability utilities for expert-advice learners.

Conventions used throughout the package:

* losses live in [0, 1] and are validated on ingestion, never clamped;
* distributions are built in log domain (max-shifted log-sum-exp) so that
  products of exponentials over long horizons cannot overflow;
* rounds and intervals are 1-based, intervals ``(a, b)`` are inclusive;
* expert indices are 0-based internally and rendered 1-based in reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Absolute tolerance for probability normalization checks.
PROB_ATOL = 1e-12
# Slack allowed when asserting theorem bounds (double accumulation over T <= 2^16).
BOUND_SLACK = 1e-9

Interval = tuple[int, int]


def log_sum_exp(x, axis=None):
    """Max-shifted log-sum-exp; tolerates -inf entries in the input."""
    x = np.asarray(x, dtype=float)
    m = np.max(x, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = shift + np.log(np.sum(np.exp(x - shift), axis=axis, keepdims=True))
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def as_losses(values, n_experts: int | None = None) -> np.ndarray:
    """Validate a per-expert loss vector: 1-D, length K, entries in [0, 1]."""
    l = np.asarray(values, dtype=float)
    if l.ndim != 1 or l.size < 1:
        raise ValueError(f"loss vector must be 1-D and nonempty, got shape {l.shape}")
    if n_experts is not None and l.size != n_experts:
        raise ValueError(f"expected {n_experts} losses, got {l.size}")
    if not np.all(np.isfinite(l)) or l.min() < 0.0 or l.max() > 1.0:
        raise ValueError("losses must be finite and lie in [0, 1]")
    return l


def validate_interval(interval: Interval, horizon: int | None = None) -> Interval:
    a, b = int(interval[0]), int(interval[1])
    if a < 1 or b < a:
        raise ValueError(f"invalid interval [{a}, {b}]")
    if horizon is not None and b > horizon:
        raise ValueError(f"interval [{a}, {b}] exceeds horizon {horizon}")
    return a, b


class ProbabilityVector:
    """A normalized distribution over a finite index set.

    Construction from weights happens in log domain; the stored linear
    probabilities sum to 1 within ``PROB_ATOL``.
    """

    __slots__ = ("p",)

    def __init__(self, p):
        p = np.asarray(p, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("probability vector must be 1-D and nonempty")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("probabilities must be finite and nonnegative")
        s = p.sum()
        if abs(s - 1.0) > 1e-6:
            raise ValueError(f"probabilities sum to {s}, not 1")
        if abs(s - 1.0) > PROB_ATOL:
            p = p / s
        self.p = p

    @classmethod
    def from_log_weights(cls, logw) -> "ProbabilityVector":
        logw = np.asarray(logw, dtype=float)
        return cls(np.exp(logw - log_sum_exp(logw)))

    @classmethod
    def from_weights(cls, w) -> "ProbabilityVector":
        w = np.asarray(w, dtype=float)
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        s = w.sum()
        if s <= 0:
            raise ValueError("weights must have positive total mass")
        return cls(w / s)

    @classmethod
    def uniform(cls, n: int) -> "ProbabilityVector":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, index: int) -> "ProbabilityVector":
        p = np.zeros(n)
        p[index] = 1.0
        return cls(p)

    def expect(self, values) -> float:
        return float(self.p @ np.asarray(values, dtype=float))

    def __len__(self):
        return self.p.size

    def __getitem__(self, i):
        return self.p[i]

    def __repr__(self):
        return f"ProbabilityVector({self.p!r})"


@dataclass(frozen=True)
class ExpertPrior:
    """Prior pi over experts with conditioning on subsets."""

    dist: ProbabilityVector

    @classmethod
    def uniform(cls, n_experts: int) -> "ExpertPrior":
        return cls(ProbabilityVector.uniform(n_experts))

    @property
    def n_experts(self) -> int:
        return len(self.dist)

    def mass(self, subset) -> float:
        subset = _as_subset(subset, self.n_experts)
        return float(self.dist.p[subset].sum())

    def conditional(self, subset) -> np.ndarray:
        """pi(k | subset) over the subset's own order; requires positive mass."""
        subset = _as_subset(subset, self.n_experts)
        m = self.dist.p[subset].sum()
        if m <= 0.0:
            raise ValueError("conditioning on a zero-mass subset")
        return self.dist.p[subset] / m


def _as_subset(subset, n_experts: int) -> np.ndarray:
    idx = np.asarray(list(subset), dtype=int)
    if idx.size == 0:
        raise ValueError("expert subset must be nonempty")
    if idx.min() < 0 or idx.max() >= n_experts:
        raise ValueError("expert subset index out of range")
    if np.unique(idx).size != idx.size:
        raise ValueError("expert subset has repeated indices")
    return idx


class RegretLedger:
    """Per-round instantaneous regrets with O(1) interval aggregation.

    Maintains prefix sums of r and r^2 so that R_I^k and V_I^k over any
    contiguous interval come out of two subtractions.
    """

    def __init__(self, n_experts: int):
        self.n_experts = n_experts
        self._rows: list[np.ndarray] = []
        self._cum_r = [np.zeros(n_experts)]
        self._cum_v = [np.zeros(n_experts)]

    @classmethod
    def from_matrix(cls, r) -> "RegretLedger":
        r = np.asarray(r, dtype=float)
        ledger = cls(r.shape[1])
        for row in r:
            ledger.append(row)
        return ledger

    def append(self, r) -> None:
        r = np.asarray(r, dtype=float)
        if r.shape != (self.n_experts,):
            raise ValueError("regret row has wrong shape")
        if np.max(np.abs(r)) > 1.0 + 1e-12:
            raise ValueError("instantaneous regrets must lie in [-1, 1]")
        self._rows.append(r)
        self._cum_r.append(self._cum_r[-1] + r)
        self._cum_v.append(self._cum_v[-1] + r * r)

    @property
    def horizon(self) -> int:
        return len(self._rows)

    @property
    def rows(self) -> np.ndarray:
        return np.array(self._rows) if self._rows else np.zeros((0, self.n_experts))

    def regret(self, interval: Interval) -> np.ndarray:
        a, b = validate_interval(interval, self.horizon)
        return self._cum_r[b] - self._cum_r[a - 1]

    def variance(self, interval: Interval) -> np.ndarray:
        a, b = validate_interval(interval, self.horizon)
        return self._cum_v[b] - self._cum_v[a - 1]

    def prefix_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(T+1, K) prefix sums of r and r^2, row 0 all zeros."""
        return np.array(self._cum_r), np.array(self._cum_v)


def instantaneous_regret(w: ProbabilityVector | np.ndarray, losses) -> np.ndarray:
    """r^k = w . l - l^k for each expert k; every entry lies in [-1, 1]."""
    p = w.p if isinstance(w, ProbabilityVector) else np.asarray(w, dtype=float)
    l = as_losses(losses, p.size)
    return float(p @ l) - l


def surrogate_loss(eta: float, r):
    """-eta r + eta^2 r^2; in [-1/4, 3/4] for eta in [0, 1/2], r in [-1, 1]."""
    if eta < 0.0 or eta > 0.5:
        raise ValueError("learning rate must lie in [0, 1/2]")
    r = np.asarray(r, dtype=float)
    if np.max(np.abs(r)) > 1.0 + 1e-12:
        raise ValueError("instantaneous regret must lie in [-1, 1]")
    out = -eta * r + (eta * eta) * (r * r)
    return float(out) if out.ndim == 0 else out


def surrogate_loss_grid(rates: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Surrogate losses on the full (rate, expert) grid, shape (|G|, K)."""
    rates = np.asarray(rates, dtype=float)
    r = np.asarray(r, dtype=float)
    return -rates[:, None] * r[None, :] + (rates * rates)[:, None] * (r * r)[None, :]


def mix_loss(losses, dist: ProbabilityVector | np.ndarray) -> float:
    """-ln E_dist[exp(-loss)], computed max-shifted so nothing overflows.

    Always lies between min(losses) and max(losses).
    """
    p = dist.p if isinstance(dist, ProbabilityVector) else np.asarray(dist, dtype=float)
    g = np.asarray(losses, dtype=float)
    if p.size == 0:
        raise ValueError("mix loss over empty support")
    if p.shape != g.shape:
        raise ValueError("losses and distribution shapes differ")
    if not np.all(np.isfinite(g)):
        raise ValueError("losses must be finite")
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    return -log_sum_exp(logp - g)


def kl_divergence(q, p) -> float:
    """KL(q || p) with the 0 ln 0 = 0 convention; q must be dominated by p."""
    qp = q.p if isinstance(q, ProbabilityVector) else np.asarray(q, dtype=float)
    pp = p.p if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    if qp.shape != pp.shape:
        raise ValueError("distributions live on different supports")
    support = qp > 0.0
    if np.any(pp[support] <= 0.0):
        raise ValueError("KL undefined: q puts mass where p has none")
    return float(np.sum(qp[support] * np.log(qp[support] / pp[support])))


@dataclass(frozen=True)
class LearningRateGrid:
    """Discrete grid of learning rates with a uniform prior over it.

    Rates are the powers of 1/2 down to roughly 1/(2 sqrt(T)), strictly
    decreasing, all in (0, 1/2].
    """

    rates: tuple[float, ...]

    def __post_init__(self):
        if len(self.rates) == 0:
            raise ValueError("empty learning-rate grid")
        for r in self.rates:
            if not (0.0 < r <= 0.5):
                raise ValueError("grid rates must lie in (0, 1/2]")
        if any(nxt >= prev for prev, nxt in zip(self.rates, self.rates[1:])):
            raise ValueError("grid rates must be strictly decreasing")

    @property
    def size(self) -> int:
        return len(self.rates)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float)

    @property
    def log_gamma(self) -> np.ndarray:
        return np.full(len(self.rates), -math.log(len(self.rates)))

    def gamma(self) -> ProbabilityVector:
        return ProbabilityVector.uniform(len(self.rates))


def ceil_log2_sqrt(horizon: int) -> int:
    """Smallest integer m with 4^m >= T (that is, ceil(log2 sqrt(T)))."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    m = 0
    while 4**m < horizon:
        m += 1
    return m


def build_grid(horizon: int) -> LearningRateGrid:
    """The rate grid {1/2} union {2^-i : i = 1..ceil(log2 sqrt(T))}.

    For T >= 2 the union collapses to the plain dyadic list of length
    ceil(log2 sqrt(T)); for T = 1 it is just {1/2}.
    """
    m = ceil_log2_sqrt(horizon)
    rates = sorted({0.5} | {2.0**-i for i in range(1, m + 1)}, reverse=True)
    return LearningRateGrid(tuple(rates))


def regret_over_set(
    ledger: RegretLedger, prior: ExpertPrior, subset, interval: Interval
) -> tuple[float, float]:
    """(R_I^K, V_I^K): prior-conditional averages of R_I^k and V_I^k over K."""
    idx = _as_subset(subset, prior.n_experts)
    cond = prior.conditional(idx)
    r = ledger.regret(interval)[idx]
    v = ledger.variance(interval)[idx]
    return float(cond @ r), float(cond @ v)
