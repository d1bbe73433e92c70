"""
Covariance algebra shared by every learner.

This module holds the covariance source the learners run on (exact or
empirical), ordered index sets, and the conditioning primitives:

1. Submatrix extraction over ordered index sets
2. Schur-complement conditioning via a Cholesky factor of Sigma_{S,S}
3. Conditional and set mutual information (natural logs)
4. Projection/rejection decomposition of a variable against a set

Everything here is a pure function of immutable inputs.
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg

import settings
from ggm_errors import (
    DegenerateDistributionError,
    DimensionError,
    PerfectCorrelationError,
    SingularConditioningError,
)

core_logger = settings.get_logger('gaussian_core')

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class OrderedIndexSet:
    """
    Strictly increasing tuple of node ids.

    Use OrderedIndexSet.of() to build one from an arbitrary iterable.
    """
    indices: Tuple[int, ...] = ()

    def __post_init__(self):
        idx = tuple(int(v) for v in self.indices)
        for a, b in zip(idx, idx[1:]):
            if a >= b:
                raise DimensionError(f"indices must be strictly increasing, got {list(idx)}")
        if idx and idx[0] < 0:
            raise DimensionError(f"negative node id {idx[0]}")
        object.__setattr__(self, 'indices', idx)

    @classmethod
    def of(cls, values: Iterable[int] = ()) -> 'OrderedIndexSet':
        if isinstance(values, OrderedIndexSet):
            return values
        return cls(tuple(sorted({int(v) for v in values})))

    def check_within(self, n: int) -> 'OrderedIndexSet':
        if self.indices and self.indices[-1] >= n:
            raise DimensionError(f"index {self.indices[-1]} out of range for dimension {n}")
        return self

    def union(self, other: Iterable[int]) -> 'OrderedIndexSet':
        return OrderedIndexSet.of(set(self.indices) | set(OrderedIndexSet.of(other).indices))

    def difference(self, other: Iterable[int]) -> 'OrderedIndexSet':
        drop = set(OrderedIndexSet.of(other).indices)
        return OrderedIndexSet(tuple(v for v in self.indices if v not in drop))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int)

    def __iter__(self):
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)

    def __contains__(self, item) -> bool:
        return int(item) in self.indices

    def __getitem__(self, pos):
        return self.indices[pos]

    def __repr__(self) -> str:
        return f"OrderedIndexSet({list(self.indices)})"


IndexLike = Union[OrderedIndexSet, Sequence[int], Iterable[int]]


@dataclass(frozen=True, eq=False)
class CovarianceView:
    """
    Read-only covariance source for the learners.

    Attributes:
        entries: symmetric n x n matrix (Sigma or Sigma-hat)
        kind: 'exact' or 'empirical'
        sample_count: N for empirical views, None for exact
    """
    entries: np.ndarray
    kind: str = 'exact'
    sample_count: Optional[int] = None

    def __post_init__(self):
        mat = np.array(self.entries, dtype=float, copy=True)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise DimensionError(f"covariance must be square, got shape {mat.shape}")
        if self.kind not in ('exact', 'empirical'):
            raise ValueError(f"unknown covariance kind {self.kind!r}")
        if not np.all(np.isfinite(mat)):
            raise DimensionError("covariance contains non-finite entries")
        scale = max(float(np.max(np.abs(mat))), 1.0) if mat.size else 1.0
        if np.max(np.abs(mat - mat.T), initial=0.0) > SYMMETRY_RTOL * scale:
            raise DimensionError("covariance is not symmetric")
        if np.any(np.diag(mat) <= 0):
            raise DegenerateDistributionError("covariance diagonal must be strictly positive")
        mat.setflags(write=False)
        object.__setattr__(self, 'entries', mat)

    @classmethod
    def exact(cls, sigma: np.ndarray) -> 'CovarianceView':
        sigma = np.asarray(sigma, dtype=float)
        return cls(0.5 * (sigma + sigma.T), 'exact', None)

    @classmethod
    def empirical(cls, sigma_hat: np.ndarray, sample_count: int) -> 'CovarianceView':
        sigma_hat = np.asarray(sigma_hat, dtype=float)
        return cls(0.5 * (sigma_hat + sigma_hat.T), 'empirical', int(sample_count))

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def is_exact(self) -> bool:
        return self.kind == 'exact'

    def describe(self) -> str:
        if self.is_exact:
            return f"exact(n={self.n})"
        return f"empirical(n={self.n}, N={self.sample_count})"


@dataclass(frozen=True)
class ConditionalStats:
    sigma_ij_given_S: float
    sigma_ii_given_S: float
    sigma_jj_given_S: float
    cond_corr: float
    cond_mi: float


def as_index_set(values: IndexLike, n: int) -> OrderedIndexSet:
    return OrderedIndexSet.of(values).check_within(n)


def _check_node(view: CovarianceView, node: int, label: str = 'node') -> int:
    node = int(node)
    if node < 0 or node >= view.n:
        raise DimensionError(f"{label} {node} out of range for dimension {view.n}")
    return node


def submatrix(view: CovarianceView, rows: IndexLike, cols: IndexLike) -> np.ndarray:
    """
    Extract Sigma_{rows, cols}.

    Args:
        view: covariance source
        rows: ordered row index set
        cols: ordered column index set

    Returns:
        len(rows) x len(cols) array (a copy)
    """
    r = as_index_set(rows, view.n).as_array()
    c = as_index_set(cols, view.n).as_array()
    return view.entries[np.ix_(r, c)].copy()


def factor_block(view: CovarianceView, subset: IndexLike):
    """
    Cholesky-factor Sigma_{S,S}, refusing numerically singular blocks.

    The block is rejected when the factorization fails or when the smallest
    squared pivot falls below SINGULAR_RTOL times the largest diagonal entry.

    Returns:
        scipy cho_factor tuple, or None for the empty set
    """
    s = as_index_set(subset, view.n)
    if not len(s):
        return None
    block = view.entries[np.ix_(s.as_array(), s.as_array())]
    try:
        factor = linalg.cho_factor(block, lower=True, check_finite=False)
    except linalg.LinAlgError as e:
        core_logger.warning(f"Cholesky failed on S={list(s)}: {e}")
        raise SingularConditioningError(s, 'factorization failed')
    pivots = np.diag(factor[0]) ** 2
    floor = settings.SINGULAR_RTOL * float(np.max(np.diag(block)))
    if float(np.min(pivots)) < floor:
        core_logger.warning(f"Pivot {np.min(pivots):.3e} below floor {floor:.3e} on S={list(s)}")
        raise SingularConditioningError(s, f'smallest pivot {np.min(pivots):.3e}')
    return factor


def residual_covariance(view: CovarianceView, subset: IndexLike) -> np.ndarray:
    """
    Full Schur complement Sigma - Sigma_{:,S} Sigma_{S,S}^{-1} Sigma_{S,:}.

    Entry (i, j) is Sigma_{ij|S}; rows and columns belonging to S are zero
    up to rounding.
    """
    s = as_index_set(subset, view.n)
    sigma = view.entries
    if not len(s):
        return sigma.copy()
    factor = factor_block(view, s)
    lower = np.tril(factor[0])
    whitened = linalg.solve_triangular(lower, sigma[s.as_array(), :], lower=True, check_finite=False)
    residual = sigma - whitened.T @ whitened
    return 0.5 * (residual + residual.T)


def _check_pair(view: CovarianceView, i: int, j: int, s: OrderedIndexSet):
    i = _check_node(view, i, 'i')
    j = _check_node(view, j, 'j')
    if i == j:
        raise DimensionError(f"i and j must differ, both are {i}")
    if i in s or j in s:
        raise DimensionError(f"conditioning set {list(s)} must exclude {i} and {j}")
    return i, j


def conditional_covariance(view: CovarianceView, i: int, j: int, subset: IndexLike = ()) -> float:
    """
    Sigma_{ij|S} = Sigma_ij - Sigma_{i,S} Sigma_{S,S}^{-1} Sigma_{S,j}.
    """
    s = as_index_set(subset, view.n)
    i, j = _check_pair(view, i, j, s)
    sigma = view.entries
    if not len(s):
        return float(sigma[i, j])
    factor = factor_block(view, s)
    idx = s.as_array()
    solved = linalg.cho_solve(factor, sigma[idx, j], check_finite=False)
    return float(sigma[i, j] - sigma[i, idx] @ solved)


def _stats_from_residual(c_ij: float, c_ii: float, c_jj: float, i: int, j: int) -> ConditionalStats:
    if c_ii <= 0 or c_jj <= 0:
        raise DegenerateDistributionError(
            f"non-positive conditional variance for ({i}, {j}): {c_ii:.3e}, {c_jj:.3e}"
        )
    corr = c_ij / np.sqrt(c_ii * c_jj)
    if abs(corr) >= 1.0:
        raise PerfectCorrelationError(f"conditional correlation {corr:.6f} for ({i}, {j})")
    mi = -0.5 * np.log1p(-corr * corr)
    return ConditionalStats(float(c_ij), float(c_ii), float(c_jj), float(corr), float(max(mi, 0.0)))


def conditional_mi(view: CovarianceView, i: int, j: int, subset: IndexLike = ()) -> ConditionalStats:
    """
    Conditional covariance, variances, correlation and mutual information
    of (X_i, X_j) given X_S. Mutual information is in nats.
    """
    s = as_index_set(subset, view.n)
    i, j = _check_pair(view, i, j, s)
    sigma = view.entries
    if not len(s):
        return _stats_from_residual(sigma[i, j], sigma[i, i], sigma[j, j], i, j)
    factor = factor_block(view, s)
    idx = s.as_array()
    lower = np.tril(factor[0])
    w = linalg.solve_triangular(lower, sigma[np.ix_(idx, [i, j])], lower=True, check_finite=False)
    c_ii = sigma[i, i] - w[:, 0] @ w[:, 0]
    c_jj = sigma[j, j] - w[:, 1] @ w[:, 1]
    c_ij = sigma[i, j] - w[:, 0] @ w[:, 1]
    return _stats_from_residual(c_ij, c_ii, c_jj, i, j)


def conditional_mi_candidates(view: CovarianceView, i: int,
                              subset: IndexLike = ()) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Conditional mutual information between X_i and every X_j outside S and i.

    Returns:
        (candidates, mutual_information, residual) where residual is the full
        conditioned covariance used for the evaluation
    """
    s = as_index_set(subset, view.n)
    i = _check_node(view, i, 'i')
    residual = residual_covariance(view, s)
    mask = np.ones(view.n, dtype=bool)
    mask[i] = False
    mask[s.as_array()] = False
    candidates = np.flatnonzero(mask)
    if residual[i, i] <= 0:
        raise DegenerateDistributionError(f"non-positive conditional variance of {i}: {residual[i, i]:.3e}")
    c_jj = residual[candidates, candidates]
    if np.any(c_jj <= 0):
        bad = int(candidates[np.argmin(c_jj)])
        raise DegenerateDistributionError(f"non-positive conditional variance of {bad} given S={list(s)}")
    corr = residual[i, candidates] / np.sqrt(residual[i, i] * c_jj)
    if np.any(np.abs(corr) >= 1.0):
        bad = int(candidates[np.argmax(np.abs(corr))])
        raise PerfectCorrelationError(f"conditional correlation of ({i}, {bad}) reached 1")
    mi = np.maximum(-0.5 * np.log1p(-corr * corr), 0.0)
    return candidates, mi, residual


def set_mutual_information(view: CovarianceView, i: int, subset: IndexLike = ()) -> float:
    """
    I(X_i; X_S) = 1/2 log(Sigma_ii / Sigma_{ii|S}); zero for the empty set.
    """
    s = as_index_set(subset, view.n)
    i = _check_node(view, i, 'i')
    if not len(s):
        return 0.0
    if i in s:
        raise DimensionError(f"node {i} is inside S={list(s)}")
    _, variance = rejection_decomposition(view, i, s)
    if variance <= 0:
        raise DegenerateDistributionError(f"non-positive rejection variance of {i}")
    return float(0.5 * np.log(view.entries[i, i] / variance))


def rejection_decomposition(view: CovarianceView, i: int, subset: IndexLike = ()) -> Tuple[np.ndarray, float]:
    """
    Split X_i into its projection onto span(X_S) and the rejection Y_i.

    Returns:
        (projection coefficients Sigma_{S,S}^{-1} Sigma_{S,i}, E[Y_i^2])
    """
    s = as_index_set(subset, view.n)
    i = _check_node(view, i, 'i')
    if i in s:
        raise DimensionError(f"node {i} is inside S={list(s)}")
    sigma = view.entries
    if not len(s):
        return np.zeros(0), float(sigma[i, i])
    factor = factor_block(view, s)
    idx = s.as_array()
    coeffs = linalg.cho_solve(factor, sigma[idx, i], check_finite=False)
    variance = float(sigma[i, i] - sigma[i, idx] @ coeffs)
    return coeffs, variance


def rejection_identity_residual(view: CovarianceView, i: int, j: int, subset: IndexLike = ()) -> float:
    """
    |2 I(X_i;X_j|X_S) - (log E[Y_i^2] - log min_a E[(Y_i - a Y_j)^2])|.

    The right-hand side is built from the two rejection vectors independently
    of conditional_mi, so a small value cross-checks both code paths.
    """
    s = as_index_set(subset, view.n)
    stats = conditional_mi(view, i, j, s)
    sigma = view.entries
    coeffs_i, var_i = rejection_decomposition(view, i, s)
    coeffs_j, var_j = rejection_decomposition(view, j, s)
    idx = s.as_array()
    if len(s):
        # E[Y_i Y_j] = Sigma_ij - b_i' Sigma_{S,j} - b_j' Sigma_{S,i} + b_i' Sigma_SS b_j
        block = sigma[np.ix_(idx, idx)]
        cross = (sigma[i, j] - coeffs_i @ sigma[idx, j] - coeffs_j @ sigma[idx, i]
                 + coeffs_i @ block @ coeffs_j)
    else:
        cross = sigma[i, j]
    inner = var_i - cross * cross / var_j
    if var_i <= 0 or inner <= 0:
        raise DegenerateDistributionError(f"degenerate rejection variances for ({i}, {j})")
    return float(abs(2.0 * stats.cond_mi - (np.log(var_i) - np.log(inner))))
