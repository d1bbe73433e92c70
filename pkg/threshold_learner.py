"""
Neighborhood selection for walk-summable models by thresholding.

Forward pass: every round admits all j whose |Sigma_{ij|S}| clears a threshold
tau derived from the parameter box; at most delta_max rounds. Backward pass:
drop members whose regression coefficient |Sigma_{i,S} Sigma_{S,S}^{-1}| is at
most tau_p. A global pass keeps only edges both endpoints agree on.

Oracle mode replaces tau, round by round, with the population lower bound on
the largest conditional covariance to an undiscovered neighbor. It needs the
true model and the exact covariance.

Note: for normalized triangle-free models the population bound is
a / (1 - a^2). A shorter closed form a (1 - a)^(-1/2) sometimes quoted for this
case does not agree with it; the a / (d_max (d_max^2 - a^2)) expression is used.
"""

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

import settings
from gaussian_core import (
    CovarianceView,
    IndexLike,
    OrderedIndexSet,
    as_index_set,
    rejection_decomposition,
    residual_covariance,
)
from ggm_errors import ConfigurationError, NoUndiscoveredNeighborsError, SingularConditioningError
from mit_learner import NeighborhoodEstimate
from model_zoo import GgmModel, ParamBox, spectral_norm_abs

threshold_logger = settings.get_logger('threshold_learner')

# oracle thresholds are relaxed by this factor so a tight bound still admits its neighbor
ORACLE_RELAXATION = 1e-9


@dataclass(frozen=True)
class ThresholdConfig:
    """
    Attributes:
        box: parameter box of the model class
        epsilon: slack subtracted from the population bound (None: half the bound)
        nu: pruning fraction, tau_p = nu * a
        tau_p: absolute pruning threshold overriding nu
        triangle_free: use the triangle-free population bound
        oracle: per-round population bounds (exact covariance and true model only)
    """
    box: ParamBox
    epsilon: Optional[float] = None
    nu: float = 0.5
    tau_p: Optional[float] = None
    triangle_free: bool = False
    oracle: bool = False

    def __post_init__(self):
        if self.epsilon is not None and self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.tau_p is None and not 0 < self.nu < 1:
            raise ConfigurationError(f"nu must lie in (0, 1), got {self.nu}")
        if self.tau_p is not None and self.tau_p <= 0:
            raise ConfigurationError(f"tau_p must be positive, got {self.tau_p}")

    @property
    def pruning_threshold(self) -> float:
        return self.tau_p if self.tau_p is not None else self.nu * self.box.a


@dataclass(frozen=True)
class RoundTrace:
    """
    Attributes:
        round: 1-based round number
        members: S_i after the round
        added: nodes admitted this round
        max_abs_cond_cov: largest |Sigma_{ij|S}| over candidates before admission
        threshold: threshold applied this round
        oracle_bound: population lower bound for this round (None when no
            neighbor is undiscovered, the true model is unknown, or the bound
            is undefined outside oracle mode)
    """
    round: int
    members: Tuple[int, ...]
    added: Tuple[int, ...]
    max_abs_cond_cov: float
    threshold: float
    oracle_bound: Optional[float] = None


def population_bound(box: ParamBox, triangle_free: bool = False) -> float:
    """
    Lower bound on max_j |Sigma_{ij|S}| over undiscovered neighbors j:
    a / (d_max (d_max^2 - a^2)) without triangles, else
    a / (d_max (d_max^2 (1 + alpha) - a^2)).
    """
    if triangle_free:
        denominator = box.d_max * (box.d_max ** 2 - box.a ** 2)
    else:
        denominator = box.d_max * (box.d_max ** 2 * (1 + box.alpha) - box.a ** 2)
    if denominator <= 0:
        raise ConfigurationError(
            f"population bound undefined: a={box.a} too large for d_max={box.d_max}, alpha={box.alpha}"
        )
    return box.a / denominator


def forward_threshold(config: ThresholdConfig) -> float:
    """tau = population bound - epsilon; epsilon defaults to half the bound."""
    bound = population_bound(config.box, config.triangle_free)
    epsilon = bound / 2.0 if config.epsilon is None else config.epsilon
    tau = bound - epsilon
    if tau <= 0:
        raise ConfigurationError(
            f"forward threshold {tau:.3e} is not positive; use epsilon below {bound:.6g}"
        )
    return tau


def undiscovered_neighbor_bound(model: GgmModel, i: int, subset: IndexLike,
                                triangle_free: bool = False) -> float:
    """
    Lower bound on max |Sigma_{ij|S}| over the K undiscovered neighbors j of i.

    With s = ||J_{i,N_i \\ S}||_2^2 and d_ii = J_ii the squared bound is
    s / (K d_ii^2 (D - s)^2), where D = d_ii * max_j d_jj over undiscovered
    neighbors for triangle-free graphs and D = d_ii (1 + alpha) d_max otherwise.
    alpha and d_max come from the model's parameter box, or from the model
    itself when it has none.

    Returns:
        the square root of the bound
    """
    s = as_index_set(subset, model.n)
    undiscovered = model.neighborhoods[i].difference(s)
    k = len(undiscovered)
    if k == 0:
        raise NoUndiscoveredNeighborsError(f"S={list(s)} already covers every neighbor of node {i}")
    j = model.precision
    idx = undiscovered.as_array()
    sq_norm = float(np.sum(j[i, idx] ** 2))
    d_ii = float(j[i, i])
    if triangle_free:
        scale = d_ii * float(np.max(np.diag(j)[idx]))
    else:
        if model.param_box is not None:
            alpha, d_max = model.param_box.alpha, model.param_box.d_max
        else:
            alpha, d_max = spectral_norm_abs(model.partial_correlation()), float(np.max(np.diag(j)))
        scale = d_ii * (1 + alpha) * d_max
    denominator = scale - sq_norm
    if denominator <= 0:
        raise ConfigurationError(f"undiscovered neighbor bound undefined for node {i}")
    return math.sqrt(sq_norm / (k * d_ii ** 2 * denominator ** 2))


def _oracle_bound_or_none(model: Optional[GgmModel], i: int, members: OrderedIndexSet,
                          triangle_free: bool, strict: bool) -> Optional[float]:
    """
    Oracle bound for the round, or None. Outside oracle mode the bound is only
    recorded, so an undefined bound is logged and skipped instead of raised.
    """
    if model is None or not len(model.neighborhoods[i].difference(members)):
        return None
    try:
        return undiscovered_neighbor_bound(model, i, members, triangle_free)
    except ConfigurationError as e:
        if strict:
            raise
        threshold_logger.debug(f"node {i}: oracle bound not recorded ({e})")
        return None


def threshold_select_neighborhood(view: CovarianceView, i: int, config: ThresholdConfig,
                                  model: Optional[GgmModel] = None
                                  ) -> Tuple[NeighborhoodEstimate, List[RoundTrace]]:
    """
    Forward thresholding pass for node i.

    Args:
        view: covariance source
        i: node
        config: thresholds; config.oracle switches to per-round population bounds
        model: true model; required in oracle mode, and when given the trace
            records the oracle bound of every round for comparison

    Returns:
        (estimate, per-round trace)
    """
    if config.oracle:
        if not view.is_exact:
            raise ConfigurationError("oracle mode runs on the exact covariance only")
        if model is None:
            raise ConfigurationError("oracle mode needs the true model")
        tau = None
    else:
        tau = forward_threshold(config)

    members = OrderedIndexSet()
    traces: List[RoundTrace] = []
    for round_no in range(1, config.box.delta_max + 1):
        oracle_bound = _oracle_bound_or_none(model, i, members, config.triangle_free, strict=config.oracle)
        if config.oracle:
            if oracle_bound is None:
                break
            threshold = oracle_bound * (1 - ORACLE_RELAXATION)
        else:
            threshold = tau
        try:
            residual = residual_covariance(view, members)
        except SingularConditioningError as e:
            raise e.at_round(round_no)
        mask = np.ones(view.n, dtype=bool)
        mask[i] = False
        mask[members.as_array()] = False
        candidates = np.flatnonzero(mask)
        if not len(candidates):
            break
        magnitudes = np.abs(residual[i, candidates])
        added = tuple(int(c) for c in candidates[magnitudes >= threshold])
        members = members.union(added)
        traces.append(RoundTrace(round_no, members.indices, added, float(magnitudes.max()),
                                 float(threshold), oracle_bound))
        threshold_logger.debug(
            f"node {i} round {round_no}: threshold {threshold:.4e}, "
            f"max |cond cov| {magnitudes.max():.4e}, added {list(added)}"
        )
        if not added:
            break

    algorithm = 'threshold-oracle' if config.oracle else 'threshold'
    estimate = NeighborhoodEstimate(i, members, algorithm=algorithm, forward_size=len(members))
    return estimate, traces


def pruning_coefficients(view: CovarianceView, i: int, subset: IndexLike) -> np.ndarray:
    """Sigma_{i,S} Sigma_{S,S}^{-1}, one signed entry per member of S."""
    coeffs, _ = rejection_decomposition(view, i, subset)
    return coeffs


def prune_neighborhood(view: CovarianceView, i: int, subset: IndexLike,
                       config: ThresholdConfig) -> OrderedIndexSet:
    """
    Remove every member whose |regression coefficient| is at most tau_p.
    """
    s = as_index_set(subset, view.n)
    if not len(s):
        return s
    gamma = np.abs(pruning_coefficients(view, i, s))
    tau_p = config.pruning_threshold
    dropped = [int(m) for m, g in zip(s, gamma) if g <= tau_p]
    if dropped:
        threshold_logger.debug(f"node {i}: pruned {dropped} at tau_p={tau_p:.3e}")
    return s.difference(dropped)


def prune_by_symmetry(estimates: Sequence[NeighborhoodEstimate]) -> List[NeighborhoodEstimate]:
    """
    Keep edge (i, j) only if j is in S_i and i is in S_j.
    """
    n = len(estimates)
    by_node = sorted(estimates, key=lambda e: e.node)
    if [e.node for e in by_node] != list(range(n)):
        raise ValueError("prune_by_symmetry needs exactly one estimate per node 0..n-1")
    adjacency = np.zeros((n, n), dtype=bool)
    for est in by_node:
        adjacency[est.node, est.members.as_array()] = True
    agreed = adjacency & adjacency.T
    return [replace(est, members=OrderedIndexSet.of(np.flatnonzero(agreed[est.node]))) for est in by_node]


def pseudo_neighborhood_bound(box: ParamBox, tau: float, delta_i: int) -> float:
    """Upper bound b^2 Delta_i / ((1 - alpha)^2 d_min^2 tau^2) on the forward set size."""
    if tau <= 0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    return box.b ** 2 * delta_i / ((1 - box.alpha) ** 2 * box.d_min ** 2 * tau ** 2)


def threshold_gap(model: GgmModel, i: int, config: ThresholdConfig) -> List[Tuple[float, float]]:
    """
    (algorithm threshold, oracle bound) for every forward round on the exact
    covariance in which some neighbor is still undiscovered.
    """
    plain = replace(config, oracle=False)
    _, traces = threshold_select_neighborhood(model.view(), i, plain, model=model)
    return [(t.threshold, t.oracle_bound) for t in traces if t.oracle_bound is not None]


def threshold_pipeline(view: CovarianceView, config: ThresholdConfig, model: Optional[GgmModel] = None,
                       magnitude_pruning: bool = True, symmetry: bool = True) -> List[NeighborhoodEstimate]:
    """
    Forward pass for every node, optional magnitude pruning, optional symmetry pruning.
    """
    estimates = []
    for i in range(view.n):
        est, _ = threshold_select_neighborhood(view, i, config, model=model)
        if magnitude_pruning:
            est = replace(est, members=prune_neighborhood(view, i, est.members, config))
        estimates.append(est)
    return prune_by_symmetry(estimates) if symmetry else estimates
