"""Meta-learners over covering-interval black boxes.

Two schemes are implemented on top of a box schedule:

* coin-betting (CBCE): a potential-based vote over the active boxes, with the
  convention that a box's bets, coins and losses are all zero outside its
  interval;
* the mix-loss exponential-weights scheme (Squint-CE): every box runs
  rate-grid exponential weights on the shared surrogate losses, the meta level
  runs rate-1 exponential weights on the boxes' mix losses, and inactive boxes
  are charged the learner's own mix loss so the unconditioned posterior stays
  well defined.

The played weight vector of the mix-loss scheme is the marginalization of the
q-mixture of the normalized per-box posteriors. An equivalent single-pass
closed form exists: box b enters with offset exp(-sum of learner losses before
b's start) rather than exp(-G^b); the two agree to machine precision and the
round step asserts their agreement, which would catch state corruption in
either route. (exp(-G^b) itself differs from the correct offset by the box's
own accumulated normalizers and does not reproduce the mixture.)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    ExpertPrior,
    Interval,
    LearningRateGrid,
    as_losses,
    build_grid,
    ceil_log2_sqrt,
    log_sum_exp,
    surrogate_loss_grid,
    validate_interval,
)
from .covering import CoveringSchedule
from .algorithms import Hedge, Squint, squint_bound

ROUTE_ATOL = 1e-9


class RouteMismatchError(RuntimeError):
    """The closed-form and mixture weight routes disagreed beyond tolerance."""


# ---------------------------------------------------------------------------
# priors over boxes


@dataclass(frozen=True)
class JunPrior:
    """tau(b_J) proportional to 1 / (J1^2 (1 + floor(log2 J1))), normalized
    exactly over the schedule's boxes. The normalizer never exceeds pi^2/6."""

    weights: np.ndarray
    normalizer: float

    def __post_init__(self):
        if self.normalizer > math.pi**2 / 6.0 + 1e-9:
            raise AssertionError(f"Jun prior normalizer {self.normalizer} exceeds pi^2/6")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise AssertionError("Jun prior does not normalize")


def jun_prior(schedule: CoveringSchedule) -> JunPrior:
    starts = np.array([b.start for b in schedule.boxes], dtype=float)
    levels = np.array([b.start.bit_length() - 1 for b in schedule.boxes], dtype=float)
    raw = 1.0 / (starts**2 * (1.0 + levels))
    z = float(raw.sum())
    return JunPrior(raw / z, z)


def uniform_box_prior(schedule: CoveringSchedule) -> np.ndarray:
    return np.full(schedule.size, 1.0 / schedule.size)


# ---------------------------------------------------------------------------
# bound evaluators


def cbce_meta_bound(interval: Interval) -> float:
    """sqrt(|J| (7 ln J2 + 5)) on the coin-betting meta regret against box b_J."""
    a, b = validate_interval(interval)
    return math.sqrt((b - a + 1) * (7.0 * math.log(b) + 5.0))


def bound_A_hat(length: int, horizon: int, prior_mass: float,
                box_count: int | None = None) -> float:
    """max(2 log2(|I|+2) (ln|B| + ln ceil(log2 sqrt T) - ln pi(K)), 1).

    With box_count omitted the stated ln(2T) form is used; passing the exact
    schedule size gives the tighter variant.
    """
    if prior_mass <= 0.0 or prior_mass > 1.0:
        raise ValueError("prior mass must lie in (0, 1]")
    if length < 1 or horizon < 1:
        raise ValueError("invalid interval or horizon")
    m = ceil_log2_sqrt(horizon)
    if m == 0:
        return 1.0
    b_term = math.log(box_count) if box_count is not None else math.log(2.0 * horizon)
    bracket = b_term + math.log(m) - math.log(prior_mass)
    return max(2.0 * math.log2(length + 2) * bracket, 1.0)


def bound_A_tilde(length: int, end: int, horizon: int, prior_mass: float) -> float:
    """max(2 log2(|I|+2) (1/2 + 3 ln I2 + ln ceil(log2 sqrt T) - ln pi(K)), 1)."""
    if prior_mass <= 0.0 or prior_mass > 1.0:
        raise ValueError("prior mass must lie in (0, 1]")
    if length < 1 or end < length or horizon < end:
        raise ValueError("invalid interval or horizon")
    m = ceil_log2_sqrt(horizon)
    if m == 0:
        return 1.0
    bracket = 0.5 + 3.0 * math.log(end) + math.log(m) - math.log(prior_mass)
    return max(2.0 * math.log2(length + 2) * bracket, 1.0)


def squintce_bound(variance: float, a_term: float) -> float:
    """2 sqrt(2 V A) + 4 A, same shape as the fixed-interval bound."""
    return squint_bound(variance, a_term)


# ---------------------------------------------------------------------------
# CBCE


@dataclass
class CbceRound:
    q: np.ndarray               # over active boxes, in active order
    weights: np.ndarray         # learner weight vector on experts
    active: list[int]           # schedule indices of active boxes
    meta_regret: np.ndarray     # r_t^{b}(M) per active box
    v: np.ndarray               # betting values per active box
    g: np.ndarray               # masked coins per active box


class Cbce:
    """Coin-betting meta state over a box schedule.

    Per box only two running sums are kept: the coin total over the box's own
    rounds and the wealth increment total. Sums over rounds where the box is
    inactive contribute zero.
    """

    def __init__(self, schedule: CoveringSchedule, tau: np.ndarray | None = None):
        self.schedule = schedule
        if tau is None:
            tau = jun_prior(schedule).weights
        tau = np.asarray(tau, dtype=float)
        if tau.shape != (schedule.size,) or abs(tau.sum() - 1.0) > 1e-9:
            raise ValueError("tau must be a distribution over the schedule's boxes")
        self.tau = tau
        self._sum_g = np.zeros(schedule.size)
        self._sum_zv = np.zeros(schedule.size)
        self.t = 0

    def step(self, box_weights: list[np.ndarray], losses) -> CbceRound:
        """One round: vote, play, observe, settle bets.

        box_weights must hold the active boxes' expert distributions in the
        order of schedule.active_at(t).
        """
        self.t += 1
        t = self.t
        active = self.schedule.active_at(t)
        if len(box_weights) != len(active):
            raise ValueError(f"round {t}: expected {len(active)} box weight vectors")
        l = as_losses(losses)
        starts = np.array([self.schedule.boxes[j].start for j in active])
        sum_g = self._sum_g[active]
        v = sum_g * (1.0 + self._sum_zv[active]) / (t - starts + 1)
        q_hat = self.tau[active] * np.maximum(v, 0.0)
        norm = q_hat.sum()
        if norm > 0.0:
            q = q_hat / norm
        else:
            q = self.tau[active] / self.tau[active].sum()
        w_boxes = np.array([np.asarray(w, dtype=float) for w in box_weights])
        w = q @ w_boxes
        # shifted/difference forms keep indistinguishable boxes at exactly
        # zero coin, so the max(v, 0) gate cannot be flipped by rounding noise
        box_losses = l[0] + w_boxes @ (l - l[0])
        r_meta = (box_losses[None, :] - box_losses[:, None]) @ q
        g = np.where(v > 0.0, r_meta, np.maximum(r_meta, 0.0))
        # z_t is the coin total before this round; settle before accumulating
        self._sum_zv[active] += sum_g * v
        self._sum_g[active] += g
        return CbceRound(q, w, active, r_meta, v, g)


class CbceLearner:
    """CBCE composed with per-box base learners (hedge or squint).

    Each box runs an independent copy of the base algorithm on its own
    interval, parameterized for horizon |J|.
    """

    def __init__(self, schedule: CoveringSchedule, n_experts: int,
                 base: str = "squint", prior: ExpertPrior | None = None,
                 tau: np.ndarray | None = None):
        if base not in ("hedge", "squint"):
            raise ValueError(f"unknown base learner {base!r}")
        self.schedule = schedule
        self.n_experts = n_experts
        self.base = base
        self.prior = prior if prior is not None else ExpertPrior.uniform(n_experts)
        self.meta = Cbce(schedule, tau)
        self._boxes: dict[int, Hedge | Squint] = {}
        self.box_update_events = 0

    def _spawn(self, idx: int):
        length = self.schedule.boxes[idx].length
        if self.base == "hedge":
            return Hedge(self.n_experts, horizon=length, prior=self.prior)
        return Squint(self.n_experts, build_grid(length), prior=self.prior)

    def round(self, losses) -> tuple[np.ndarray, CbceRound]:
        t = self.meta.t + 1
        active = self.schedule.active_at(t)
        for j in active:
            if j not in self._boxes:
                self._boxes[j] = self._spawn(j)
        box_w = [self._boxes[j].weights().p for j in active]
        out = self.meta.step(box_w, losses)
        for wb, j in zip(box_w, active):
            box = self._boxes[j]
            if isinstance(box, Squint):
                box.update(wb, losses)
            else:
                box.update(losses)
        self.box_update_events += len(active)
        return out.weights, out


# ---------------------------------------------------------------------------
# Squint-CE


def learner_mixloss_equivalence(qtilde: np.ndarray, active: list[int],
                                g_all: np.ndarray) -> tuple[float, float]:
    """The learner's loss computed two ways: mixing the active boxes' losses
    under the conditioned q_t, and mixing over the full unconditioned
    posterior. Inactive entries of g_all must already carry the learner's own
    loss; under that substitution the two values agree up to rounding.
    """
    qtilde = np.asarray(qtilde, dtype=float)
    g_all = np.asarray(g_all, dtype=float)
    mass = float(qtilde[active].sum())
    if mass <= 0.0:
        raise ValueError("active set has zero posterior mass")
    via_q = -math.log(float((qtilde[active] / mass) @ np.exp(-g_all[active])))
    via_qtilde = -math.log(float(qtilde @ np.exp(-g_all)))
    return via_q, via_qtilde


@dataclass
class _BoxState:
    F: np.ndarray               # cumulative surrogate losses on the rate grid
    R: np.ndarray               # per-expert regret over the box's rounds
    V: np.ndarray               # per-expert squared regret over the box's rounds
    birth_offset: float         # learner's cumulative loss before the box started


@dataclass
class SquintCeRound:
    weights: np.ndarray
    weights_closed: np.ndarray
    r: np.ndarray
    ghat: float
    ghat_unconditioned: float
    active: list[int]
    g_active: np.ndarray
    q_active: np.ndarray
    active_mass: float


class SquintCe:
    """Mix-loss exponential weights over covering-interval Squint boxes.

    State per box: cumulative surrogate losses F on the shared rate grid plus
    the redundant (R, V) pair, created when the box starts and frozen when it
    ends. The meta posterior over all boxes needs only each box's deviation
    D^b = G^b - C, where C is the learner's cumulative loss: inactive rounds
    charge every box the same amount, so D moves only while a box is active.
    """

    def __init__(self, schedule: CoveringSchedule, n_experts: int,
                 grid: LearningRateGrid | None = None,
                 prior: ExpertPrior | None = None,
                 tau: np.ndarray | None = None):
        if n_experts < 1:
            raise ValueError("need at least one expert")
        self.schedule = schedule
        self.n_experts = n_experts
        self.grid = grid if grid is not None else build_grid(schedule.horizon)
        self.prior = prior if prior is not None else ExpertPrior.uniform(n_experts)
        if tau is None:
            tau = uniform_box_prior(schedule)
        tau = np.asarray(tau, dtype=float)
        if tau.shape != (schedule.size,) or abs(tau.sum() - 1.0) > 1e-9:
            raise ValueError("tau must be a distribution over the schedule's boxes")
        self.log_tau = np.log(tau)
        self._rates = self.grid.array
        self._log_rates = np.log(self._rates)
        self._log_joint_prior = (self.grid.log_gamma[:, None]
                                 + np.log(self.prior.dist.p)[None, :])
        self.D = np.zeros(schedule.size)
        self.C = 0.0
        self._box: dict[int, _BoxState] = {}
        self.box_update_events = 0
        self.t = 0

    def box_state(self, idx: int) -> _BoxState:
        return self._box[idx]

    def round(self, losses) -> SquintCeRound:
        self.t += 1
        t = self.t
        if t > self.schedule.horizon:
            raise ValueError("round counter exceeded the schedule horizon")
        l = as_losses(losses, self.n_experts)
        active = self.schedule.active_at(t)
        for j in active:
            if j not in self._box:
                shape = (self.grid.size, self.n_experts)
                self._box[j] = _BoxState(np.zeros(shape), np.zeros(self.n_experts),
                                         np.zeros(self.n_experts), self.C)

        # per-box posteriors on the (rate, expert) grid
        posteriors = []
        for j in active:
            logp = self._log_joint_prior - self._box[j].F
            posteriors.append(np.exp(logp - log_sum_exp(logp)))

        # meta posterior conditioned on the active set
        log_qt = self.log_tau - self.D
        lse_all = log_sum_exp(log_qt)
        lse_act = log_sum_exp(log_qt[active])
        if not np.isfinite(lse_act):
            # conditioning mass underflowed: degenerate branch, fall back to tau_t
            q_active = np.exp(self.log_tau[active] - log_sum_exp(self.log_tau[active]))
            active_mass = 0.0
        else:
            q_active = np.exp(log_qt[active] - lse_act)
            active_mass = float(math.exp(lse_act - lse_all))

        # route 1: mixture of normalized posteriors, marginalized against the rate
        mixture = np.tensordot(q_active, np.array(posteriors), axes=1)
        by_expert = (mixture * self._rates[:, None]).sum(axis=0)
        w = by_expert / by_expert.sum()

        # route 2: one log-domain pass with per-box birth offsets
        logits = np.array([
            self.log_tau[j] - self._box[j].birth_offset - self._box[j].F
            + self._log_joint_prior + self._log_rates[:, None]
            for j in active
        ])
        log_num = log_sum_exp(logits, axis=(0, 1))
        w_closed = np.exp(log_num - log_sum_exp(log_num))

        gap = float(np.max(np.abs(w - w_closed)))
        if gap > ROUTE_ATOL:
            raise RouteMismatchError(
                f"round {t}: weight routes differ by {gap:.3e}")

        # observe and settle
        r = float(w @ l) - l
        fhat = surrogate_loss_grid(self._rates, r)
        decay = np.exp(-fhat)
        g_active = np.array([
            -math.log(float((p * decay).sum())) for p in posteriors
        ])
        ghat = -math.log(float(q_active @ np.exp(-g_active)))
        if active_mass > 0.0:
            g_all = np.full(self.schedule.size, ghat)
            g_all[active] = g_active
            _, ghat_uncond = learner_mixloss_equivalence(
                np.exp(log_qt - lse_all), active, g_all)
        else:
            ghat_uncond = ghat

        for j, g_j in zip(active, g_active):
            box = self._box[j]
            box.F += fhat
            box.R += r
            box.V += r * r
            self.D[j] += g_j - ghat
        self.C += ghat
        self.box_update_events += len(active)

        return SquintCeRound(w, w_closed, r, ghat, ghat_uncond, active,
                             g_active, q_active, active_mass)
