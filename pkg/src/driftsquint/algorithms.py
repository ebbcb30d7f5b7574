"""Single-interval learners: Hedge, Squint over a rate grid, and the generic
exponential-weights posterior they both reduce to.

Squint keeps two redundant state representations, the per-expert moment pair
(R, V) and the cumulative surrogate losses F on the (rate, expert) grid; F is
authoritative for the played weights and the pair is cross-checked against it
on every update to catch drift.
"""

from __future__ import annotations

import math

import numpy as np

from .core import (
    ExpertPrior,
    LearningRateGrid,
    ProbabilityVector,
    as_losses,
    ceil_log2_sqrt,
    instantaneous_regret,
    log_sum_exp,
    mix_loss,
    surrogate_loss_grid,
)

STATE_ATOL = 1e-9


def hedge_default_rate(horizon: float, n_experts: int) -> float:
    """sqrt((8/T) ln K), the fixed rate under which the Hedge bound is proven."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if n_experts < 2:
        raise ValueError("Hedge rate needs K >= 2 (ln K = 0 degenerates)")
    return math.sqrt(8.0 / horizon * math.log(n_experts))


def hedge_bound(horizon: float, n_experts: int) -> float:
    """sqrt((T/2) ln K) on the total regret of Hedge at the default rate."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if n_experts < 2:
        raise ValueError("bound stated for K >= 2")
    return math.sqrt(horizon / 2.0 * math.log(n_experts))


class Hedge:
    """Exponential weights on cumulative expert losses at a fixed rate."""

    def __init__(self, n_experts: int, rate: float | None = None,
                 prior: ExpertPrior | None = None, horizon: int | None = None):
        if n_experts < 1:
            raise ValueError("need at least one expert")
        self.n_experts = n_experts
        self.prior = prior if prior is not None else ExpertPrior.uniform(n_experts)
        if rate is None:
            # K = 1 is degenerate: the only weight vector is (1), rate unused
            rate = hedge_default_rate(horizon, n_experts) if n_experts >= 2 else 0.0
        if rate < 0:
            raise ValueError("rate must be nonnegative")
        self.rate = rate
        self._log_prior = np.log(self.prior.dist.p)
        self._cum_losses = np.zeros(n_experts)
        self.t = 0

    def weights(self) -> ProbabilityVector:
        # shifting by the minimum is a no-op mathematically but keeps states
        # with equal per-expert totals bit-identical regardless of the rate
        shifted = self._cum_losses - self._cum_losses.min()
        return ProbabilityVector.from_log_weights(self._log_prior - self.rate * shifted)

    def update(self, losses) -> None:
        self._cum_losses += as_losses(losses, self.n_experts)
        self.t += 1


class EwPosterior:
    """Exponential Weights over an arbitrary finite support.

    Posterior mass is proportional to prior * exp(-rate * cumulative loss),
    recomputed lazily in log domain.
    """

    def __init__(self, log_prior, rate: float = 1.0):
        self._log_prior = np.asarray(log_prior, dtype=float)
        self.rate = rate
        self._cum = np.zeros(self._log_prior.shape)
        self.t = 0

    @classmethod
    def with_uniform_prior(cls, n: int, rate: float = 1.0) -> "EwPosterior":
        return cls(np.full(n, -math.log(n)), rate)

    def log_posterior(self) -> np.ndarray:
        logw = self._log_prior - self.rate * self._cum
        return logw - log_sum_exp(logw)

    def posterior(self) -> ProbabilityVector:
        return ProbabilityVector.from_log_weights(self._log_prior - self.rate * self._cum)

    def update(self, losses) -> None:
        g = np.asarray(losses, dtype=float)
        if g.shape != self._cum.shape:
            raise ValueError("loss shape does not match support")
        if not np.all(np.isfinite(g)):
            raise ValueError("losses must be finite")
        self._cum += g
        self.t += 1


class Squint:
    """Second-order learner mixing over a discrete rate grid.

    Weight of expert k is proportional to
    E_{gamma pi}[exp(eta R^k - eta^2 V^k) eta], realized by marginalizing the
    eta = 1 exponential-weights posterior on (rate, expert) over the rates.
    """

    def __init__(self, n_experts: int, grid: LearningRateGrid,
                 prior: ExpertPrior | None = None):
        if n_experts < 1:
            raise ValueError("need at least one expert")
        self.n_experts = n_experts
        self.grid = grid
        self.prior = prior if prior is not None else ExpertPrior.uniform(n_experts)
        self._rates = grid.array
        self._log_joint_prior = grid.log_gamma[:, None] + np.log(self.prior.dist.p)[None, :]
        self._log_rates = np.log(self._rates)
        self.R = np.zeros(n_experts)
        self.V = np.zeros(n_experts)
        self.F = np.zeros((grid.size, n_experts))
        self.t = 0

    def log_posterior(self) -> np.ndarray:
        """Log of the EW posterior P_t on the (rate, expert) grid."""
        logw = self._log_joint_prior - self.F
        return logw - log_sum_exp(logw)

    def posterior(self) -> np.ndarray:
        return np.exp(self.log_posterior())

    def weights(self) -> ProbabilityVector:
        """Marginalize the posterior against the rate: w = E_P[eta e_k] / E_P[eta]."""
        logits = self._log_joint_prior - self.F + self._log_rates[:, None]
        return ProbabilityVector.from_log_weights(log_sum_exp(logits, axis=0))

    def weights_from_moments(self) -> ProbabilityVector:
        """Same weights from the (R, V) representation; used as a drift check."""
        expo = (self._rates[:, None] * self.R[None, :]
                - (self._rates**2)[:, None] * self.V[None, :])
        logits = self._log_joint_prior + expo + self._log_rates[:, None]
        return ProbabilityVector.from_log_weights(log_sum_exp(logits, axis=0))

    def round_mix_loss(self, fhat: np.ndarray) -> float:
        """Mix loss of the surrogate grid losses under the current posterior."""
        return mix_loss(fhat.ravel(), np.exp(self.log_posterior()).ravel())

    def update(self, w: ProbabilityVector | np.ndarray, losses) -> np.ndarray:
        """Fold in one round; w must be the weights this state produced."""
        r = instantaneous_regret(w, losses)
        fhat = surrogate_loss_grid(self._rates, r)
        self.R += r
        self.V += r * r
        self.F += fhat
        self.t += 1
        err = np.max(np.abs(
            self.F + self._rates[:, None] * self.R[None, :]
            - (self._rates**2)[:, None] * self.V[None, :]))
        if err > STATE_ATOL:
            raise AssertionError(f"Squint state drift: F vs (R, V) differ by {err}")
        return r


def bound_A(horizon: int, prior_mass: float) -> float:
    """max(ln ceil(log2 sqrt(T)) - ln pi(K), 1); the T = 1 grid-size term is
    treated as -inf so the clamp takes over (the bound is trivial there)."""
    if prior_mass <= 0.0 or prior_mass > 1.0:
        raise ValueError("prior mass must lie in (0, 1]")
    m = ceil_log2_sqrt(horizon)
    if m == 0:
        return 1.0
    return max(math.log(m) - math.log(prior_mass), 1.0)


def squint_bound(variance: float, a_term: float) -> float:
    """2 sqrt(2 V A) + 4 A."""
    if variance < 0.0:
        raise ValueError("variance must be nonnegative")
    return 2.0 * math.sqrt(2.0 * variance * a_term) + 4.0 * a_term


def surrogate_regret(posteriors, losses, q) -> float:
    """sum_t [mix loss of losses[t] under posteriors[t]] - E_q[sum_t losses[t]].

    posteriors and losses are per-round arrays over the same flat support; q
    is a distribution on that support.
    """
    qp = q.p if isinstance(q, ProbabilityVector) else np.asarray(q, dtype=float)
    total = 0.0
    cum = np.zeros(qp.shape)
    for p_t, g_t in zip(posteriors, losses):
        g_t = np.asarray(g_t, dtype=float).ravel()
        if g_t.shape != qp.shape:
            raise ValueError("loss support does not match q")
        total += mix_loss(g_t, np.asarray(p_t, dtype=float).ravel())
        cum += g_t
    return total - float(qp @ cum)
