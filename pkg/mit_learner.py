"""
Forward-backward neighborhood selection by conditional mutual information.

Each round adds the candidate with the largest conditional mutual information
with node i given the active set, then drops every member whose entry of the
projection vector Sigma_{i,S} Sigma_{S,S}^{-1} sqrt(D_S) falls below a
calibrated threshold. The greedy least-squares baseline (forward gain /
backward loss on the regression of X_i on X_S) lives here too so both learners
share the same bookkeeping.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

import settings
from gaussian_core import (
    CovarianceView,
    IndexLike,
    OrderedIndexSet,
    as_index_set,
    conditional_mi_candidates,
    factor_block,
    rejection_decomposition,
    residual_covariance,
)
from ggm_errors import ConfigurationError, DimensionError, SingularConditioningError
from model_zoo import ParamBox

mit_logger = settings.get_logger('mit_learner')

EPSILON_CLAMP_HIGH = 1 - 1e-6
EPSILON_CLAMP_LOW = 1e-12


def epsilon_to_mi_threshold(epsilon: float) -> float:
    """epsilon_F = 1/2 log(1 / (1 - epsilon))."""
    if not 0 < epsilon < 1:
        raise ConfigurationError(f"epsilon must lie in (0, 1), got {epsilon}")
    return float(-0.5 * math.log1p(-epsilon))


@dataclass(frozen=True)
class MitConfig:
    """
    Attributes:
        epsilon_f: forward stopping threshold on conditional MI (nats)
        nu: backward calibration, in (0, 1)
        max_rounds: safety cap; None means 3n
    """
    epsilon_f: float = epsilon_to_mi_threshold(0.01)
    nu: float = 0.5
    max_rounds: Optional[int] = None

    def __post_init__(self):
        if self.epsilon_f <= 0:
            raise ConfigurationError(f"epsilon_f must be positive, got {self.epsilon_f}")
        if not 0 < self.nu < 1:
            raise ConfigurationError(f"nu must lie in (0, 1), got {self.nu}")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ConfigurationError(f"max_rounds must be positive, got {self.max_rounds}")

    @classmethod
    def for_box(cls, box: ParamBox, nu: float = 0.5, max_rounds: Optional[int] = None) -> 'MitConfig':
        """
        Exact-covariance config for models in a parameter box: epsilon = a^2 / 8.

        A node whose only neighbor is j has first-round MI
        1/2 log(1 + J_ij^2 Sigma_jj / J_ii) >= 1/2 log(1 + J_norm,ij^2). Edges of
        a boxed model have |J_norm,ij| >= a/2, and 1/2 log(1 + a^2 / 4) clears
        1/2 log(1 / (1 - a^2 / 8)), so every edge of a leaf is admitted.
        """
        return cls(epsilon_f=epsilon_to_mi_threshold(box.a ** 2 / 8.0), nu=nu, max_rounds=max_rounds)

    def rounds_for(self, n: int) -> int:
        return self.max_rounds if self.max_rounds is not None else 3 * n


@dataclass(frozen=True)
class RoundRecord:
    """
    One learner round.

    Attributes:
        round: 1-based round number
        candidate: node considered this round (None when nothing was left)
        delta: score of the candidate (MI in nats, or loss decrease)
        added: whether the candidate entered the active set
        pruned: members removed after the addition
        members: active set after the round
        loss: least-squares loss Sigma_{ii|S} after the round
        threshold: backward threshold used for pruning, if any
    """
    round: int
    candidate: Optional[int]
    delta: float
    added: bool
    pruned: Tuple[int, ...]
    members: Tuple[int, ...]
    loss: float
    threshold: Optional[float] = None


@dataclass
class NeighborhoodEstimate:
    node: int
    members: OrderedIndexSet
    trace: List[RoundRecord] = field(default_factory=list)
    truncated: bool = False
    algorithm: str = 'mit'
    forward_size: Optional[int] = None

    def __post_init__(self):
        self.members = OrderedIndexSet.of(self.members)
        if self.node in self.members:
            raise DimensionError(f"node {self.node} cannot be its own neighbor")

    @property
    def rounds(self) -> int:
        return len([r for r in self.trace if r.added])


def least_squares_loss(view: CovarianceView, i: int, subset: IndexLike = ()) -> float:
    """
    min_beta E[(X_i - beta^T X_S)^2], i.e. Sigma_ii - Sigma_{i,S} Sigma_{S,S}^{-1} Sigma_{S,i}.
    """
    _, variance = rejection_decomposition(view, i, subset)
    return variance


def projection_prune_vector(view: CovarianceView, i: int, subset: IndexLike) -> np.ndarray:
    """
    Sigma_{i,S} Sigma_{S,S}^{-1} sqrt(D_S), one entry per member of S.

    When S contains every neighbor of i, the entries of non-neighbors are zero
    on the exact covariance.
    """
    s = as_index_set(subset, view.n)
    coeffs, _ = rejection_decomposition(view, i, s)
    if not len(s):
        return coeffs
    return coeffs * np.sqrt(np.diag(view.entries)[s.as_array()])


def mit_select_neighborhood(view: CovarianceView, i: int, config: MitConfig = MitConfig()) -> NeighborhoodEstimate:
    """
    Estimate the neighborhood of node i by conditional mutual information.

    The candidate is tested against epsilon_f before it is added, so a failed
    candidate never enters the estimate. Ties go to the lowest node index.

    Args:
        view: covariance source (exact or empirical)
        i: node whose neighborhood is estimated
        config: thresholds and round cap

    Returns:
        NeighborhoodEstimate with a per-round trace
    """
    if view.n < 2:
        raise DimensionError(f"need at least 2 nodes, got {view.n}")
    sigma = view.entries
    members = OrderedIndexSet()
    trace: List[RoundRecord] = []
    loss = float(sigma[i, i])

    for round_no in range(1, config.rounds_for(view.n) + 1):
        try:
            candidates, mi, residual = conditional_mi_candidates(view, i, members)
        except SingularConditioningError as e:
            raise e.at_round(round_no)
        if not len(candidates):
            trace.append(RoundRecord(round_no, None, 0.0, False, (), members.indices, loss))
            break
        best = int(np.argmax(mi))
        j, delta = int(candidates[best]), float(mi[best])
        if delta < config.epsilon_f:
            trace.append(RoundRecord(round_no, j, delta, False, (), members.indices, loss))
            mit_logger.debug(f"node {i} round {round_no}: best {j} with MI {delta:.3e} below threshold, stop")
            break

        # calibration uses the set MI against the pre-addition set
        mi_i = 0.5 * math.log(sigma[i, i] / residual[i, i])
        mi_j = 0.5 * math.log(sigma[j, j] / residual[j, j])
        k_ij = sigma[i, i] * math.exp(-2.0 * (mi_i + mi_j))

        grown = members.union([j])
        try:
            u = projection_prune_vector(view, i, grown)
        except SingularConditioningError as e:
            raise e.at_round(round_no)
        eps_b = math.sqrt(config.nu * (1.0 - math.exp(-2.0 * delta)) * k_ij)
        pruned = tuple(int(s) for s, value in zip(grown, u) if abs(value) < eps_b)
        members = grown.difference(pruned)
        loss = least_squares_loss(view, i, members)
        trace.append(RoundRecord(round_no, j, delta, True, pruned, members.indices, loss, eps_b))
        mit_logger.debug(
            f"node {i} round {round_no}: added {j} (MI {delta:.4e}), eps_B {eps_b:.4e}, "
            f"pruned {list(pruned)}, members {list(members)}"
        )
    else:
        mit_logger.warning(f"node {i}: stopped at the round cap {config.rounds_for(view.n)}")
        return NeighborhoodEstimate(i, members, trace, truncated=True, algorithm='mit')

    mit_logger.debug(f"node {i}: {len(members)} neighbors after {len(trace)} rounds")
    return NeighborhoodEstimate(i, members, trace, truncated=False, algorithm='mit')


def _removal_increases(view: CovarianceView, i: int, members: OrderedIndexSet) -> np.ndarray:
    """
    Loss increase from dropping each member and refitting: beta_s^2 / [Sigma_SS^{-1}]_ss.
    """
    idx = members.as_array()
    factor = factor_block(view, members)
    beta = linalg.cho_solve(factor, view.entries[idx, i], check_finite=False)
    inverse_diag = np.diag(linalg.cho_solve(factor, np.eye(len(idx)), check_finite=False))
    return beta * beta / inverse_diag


def baseline_fb_greedy(view: CovarianceView, i: int, epsilon_s: float, nu: float = 0.5,
                       max_rounds: Optional[int] = None) -> NeighborhoodEstimate:
    """
    Forward-backward greedy regression of X_i on the other variables.

    Forward: add the variable with the largest loss decrease while that
    decrease is at least epsilon_s. Backward, after each addition: drop the
    member whose removal raises the loss least while that rise is at most
    nu * epsilon_s. Coefficients are refit by least squares after every change.

    Args:
        view: covariance source
        i: target node
        epsilon_s: forward stopping threshold on the loss decrease
        nu: backward fraction of epsilon_s
        max_rounds: cap on forward steps (default 3n)
    """
    if epsilon_s <= 0:
        raise ConfigurationError(f"epsilon_s must be positive, got {epsilon_s}")
    if not 0 < nu < 1:
        raise ConfigurationError(f"nu must lie in (0, 1), got {nu}")
    cap = max_rounds if max_rounds is not None else 3 * view.n
    members = OrderedIndexSet()
    trace: List[RoundRecord] = []
    loss = float(view.entries[i, i])

    for round_no in range(1, cap + 1):
        try:
            residual = residual_covariance(view, members)
        except SingularConditioningError as e:
            raise e.at_round(round_no)
        mask = np.ones(view.n, dtype=bool)
        mask[i] = False
        mask[members.as_array()] = False
        candidates = np.flatnonzero(mask)
        if not len(candidates):
            trace.append(RoundRecord(round_no, None, 0.0, False, (), members.indices, loss))
            break
        c_jj = residual[candidates, candidates]
        gains = np.where(c_jj > 0, residual[i, candidates] ** 2 / np.where(c_jj > 0, c_jj, 1.0), 0.0)
        best = int(np.argmax(gains))
        j, gain = int(candidates[best]), float(gains[best])
        if gain < epsilon_s:
            trace.append(RoundRecord(round_no, j, gain, False, (), members.indices, loss))
            break

        members = members.union([j])
        pruned: List[int] = []
        while len(members) > 1:
            try:
                increases = _removal_increases(view, i, members)
            except SingularConditioningError as e:
                raise e.at_round(round_no)
            worst = int(np.argmin(increases))
            if increases[worst] > nu * epsilon_s:
                break
            pruned.append(int(members[worst]))
            members = members.difference([members[worst]])
        loss = least_squares_loss(view, i, members)
        trace.append(RoundRecord(round_no, j, gain, True, tuple(pruned), members.indices, loss, nu * epsilon_s))
    else:
        mit_logger.warning(f"node {i}: baseline stopped at the round cap {cap}")
        return NeighborhoodEstimate(i, members, trace, truncated=True, algorithm='baseline')

    return NeighborhoodEstimate(i, members, trace, truncated=False, algorithm='baseline')


def mi_forward_threshold(c: float, rho: float, eta: int, d: int, n: int, N: int,
                         c_min: float, k_i: float) -> float:
    """
    epsilon_F = 1/2 log(1/(1 - eps)) with eps = 8 c rho eta d log(n) / (c_min N k_i),
    clamped into [1e-12, 1 - 1e-6].
    """
    for name, value in (('c', c), ('rho', rho), ('eta', eta), ('d', d), ('n', n),
                        ('N', N), ('c_min', c_min), ('k_i', k_i)):
        if value <= 0:
            raise ConfigurationError(f"{name} must be positive, got {value}")
    eps = 8.0 * c * rho * eta * d * math.log(n) / (c_min * N * k_i)
    eps = min(EPSILON_CLAMP_HIGH, max(eps, EPSILON_CLAMP_LOW))
    return epsilon_to_mi_threshold(eps)


def greedy_loss_threshold(c: float, rho: float, eta: int, d: int, n: int, N: int, c_min: float) -> float:
    """
    Baseline forward threshold epsilon_s = 8 c rho eta d log(n) / (c_min N).
    """
    if min(c, rho, eta, d, n, N, c_min) <= 0:
        raise ConfigurationError("baseline threshold inputs must all be positive")
    return 8.0 * c * rho * eta * d * math.log(n) / (c_min * N)
