"""
Ground-truth Gaussian graphical models.

This module builds and validates the models the learners are scored against:

1. Named topologies (chain, star, grid, diamond) with uniform or seeded-random weights
2. Random walk-summable models by rejection sampling inside a parameter box
3. Validators for walk-summability, degree bounds, eigenvalue boxes and the
   restricted eigenvalue condition
4. The JSON model document (precision, parameter box, seed, generator tag)
"""

import itertools
import json
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, Optional, Tuple, Union

import networkx as nx
import numpy as np
from scipy import linalg

import settings
from gaussian_core import CovarianceView, OrderedIndexSet
from ggm_errors import (
    DimensionError,
    GenerationFailedError,
    ModelConstructionError,
    UnsupportedSizeError,
)

zoo_logger = settings.get_logger('model_zoo')

TOPOLOGIES = ('chain', 'star', 'grid', 'diamond')
RESTRICTED_EIGENVALUE_MAX_DIM = 14
# spectral norm target of |R| relative to alpha after rescaling
RESCALE_TARGET = 0.95
TRIANGLE_FREE_MEAN_DEGREE = 2.2
EIGEN_SLACK = 1e-10


@dataclass(frozen=True)
class ParamBox:
    """
    Parameter box a walk-summable model lives in.

    Attributes:
        alpha: walk-summability level, in (0, 1)
        a: lower bound on off-diagonal magnitudes of the normalized precision
        b: upper bound on the same magnitudes
        d_min, d_max: bounds on the precision diagonal
        delta_max: degree bound
    """
    alpha: float
    a: float
    b: float
    d_min: float = 1.0
    d_max: float = 1.0
    delta_max: int = 1

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0 < self.a <= self.b:
            raise ValueError(f"need 0 < a <= b, got a={self.a}, b={self.b}")
        if not 0 < self.d_min <= self.d_max:
            raise ValueError(f"need 0 < d_min <= d_max, got {self.d_min}, {self.d_max}")
        if int(self.delta_max) < 1:
            raise ValueError(f"delta_max must be at least 1, got {self.delta_max}")
        object.__setattr__(self, 'delta_max', int(self.delta_max))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ParamBox':
        return cls(
            alpha=float(data['alpha']),
            a=float(data['a']),
            b=float(data['b']),
            d_min=float(data.get('d_min', 1.0)),
            d_max=float(data.get('d_max', 1.0)),
            delta_max=int(data.get('delta_max', 1)),
        )


@dataclass(frozen=True, eq=False)
class GgmModel:
    """
    A Gaussian graphical model with its precision J and covariance J^{-1}.

    Build instances with GgmModel.from_precision(); the covariance and the
    adjacency are derived there and never stored in model files.
    """
    precision: np.ndarray
    covariance: np.ndarray
    adjacency: np.ndarray
    neighborhoods: Tuple[OrderedIndexSet, ...]
    param_box: Optional[ParamBox] = None
    seed: Optional[int] = None
    generator: str = 'imported'

    @classmethod
    def from_precision(cls, precision: np.ndarray, param_box: Optional[ParamBox] = None,
                       seed: Optional[int] = None, generator: str = 'imported') -> 'GgmModel':
        """
        Validate J and derive covariance, adjacency and neighborhoods.

        An off-diagonal entry is an edge iff |J_norm,ij| >= a/2 when a parameter
        box is attached, and iff it is nonzero otherwise.
        """
        j = np.array(precision, dtype=float)
        if j.ndim != 2 or j.shape[0] != j.shape[1]:
            raise DimensionError(f"precision must be square, got shape {j.shape}")
        n = j.shape[0]
        if not np.allclose(j, j.T, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(j)))):
            raise ModelConstructionError("precision matrix is not symmetric", float('nan'))
        j = 0.5 * (j + j.T)
        eigs = np.linalg.eigvalsh(j)
        if eigs[0] <= 0:
            raise ModelConstructionError(
                f"precision matrix is not positive definite (smallest eigenvalue {eigs[0]:.6g})",
                eigs[0],
            )
        factor = linalg.cho_factor(j, lower=True)
        sigma = linalg.cho_solve(factor, np.eye(n))
        sigma = 0.5 * (sigma + sigma.T)
        if np.max(np.abs(sigma @ j - np.eye(n))) > 1e-8:
            raise ModelConstructionError("precision matrix is too ill-conditioned to invert", eigs[0])

        scale = np.sqrt(np.diag(j))
        j_norm = j / np.outer(scale, scale)
        if param_box is not None:
            adjacency = np.abs(j_norm) >= param_box.a / 2.0
        else:
            adjacency = j_norm != 0
        np.fill_diagonal(adjacency, False)
        adjacency = adjacency & adjacency.T
        neighborhoods = tuple(OrderedIndexSet.of(np.flatnonzero(adjacency[i])) for i in range(n))

        for arr in (j, sigma, adjacency):
            arr.setflags(write=False)
        return cls(j, sigma, adjacency, neighborhoods, param_box, seed, generator)

    @property
    def n(self) -> int:
        return self.precision.shape[0]

    def view(self) -> CovarianceView:
        return CovarianceView.exact(self.covariance)

    def normalized_precision(self) -> np.ndarray:
        scale = np.sqrt(np.diag(self.precision))
        return self.precision / np.outer(scale, scale)

    def partial_correlation(self) -> np.ndarray:
        """R = I - J_norm (zero diagonal)."""
        r = np.eye(self.n) - self.normalized_precision()
        np.fill_diagonal(r, 0.0)
        return r

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(int)

    @property
    def max_degree(self) -> int:
        return int(self.degrees().max()) if self.n else 0

    def edges(self) -> List[Tuple[int, int]]:
        rows, cols = np.nonzero(np.triu(self.adjacency, 1))
        return [(int(r), int(c)) for r, c in zip(rows, cols)]

    def to_document(self) -> Dict[str, Any]:
        return {
            'n': self.n,
            'precision': [float(v) for v in self.precision.ravel()],
            'param_box': self.param_box.to_dict() if self.param_box else None,
            'seed': self.seed,
            'generator': self.generator,
        }

    @classmethod
    def from_document(cls, doc: Dict[str, Any]) -> 'GgmModel':
        n = int(doc['n'])
        values = doc['precision']
        if len(values) != n * n:
            raise DimensionError(f"precision has {len(values)} entries, expected {n * n}")
        box = ParamBox.from_dict(doc['param_box']) if doc.get('param_box') else None
        return cls.from_precision(
            np.asarray(values, dtype=float).reshape(n, n),
            param_box=box,
            seed=doc.get('seed'),
            generator=doc.get('generator', 'imported'),
        )


def save_model(model: GgmModel, path: str) -> None:
    with open(path, 'w') as f:
        json.dump(model.to_document(), f, indent=2)
    zoo_logger.info(f"Wrote {model.generator} model (n={model.n}) to {path}")


def load_model(path: str) -> GgmModel:
    with open(path, 'r') as f:
        return GgmModel.from_document(json.load(f))


def _topology_graph(topology: str, n_or_side: int) -> nx.Graph:
    if topology == 'chain':
        graph = nx.path_graph(n_or_side)
    elif topology == 'star':
        graph = nx.star_graph(n_or_side - 1)
    elif topology == 'grid':
        graph = nx.convert_node_labels_to_integers(
            nx.grid_2d_graph(n_or_side, n_or_side), ordering='sorted')
    elif topology == 'diamond':
        graph = nx.diamond_graph()
    else:
        raise ValueError(f"unknown topology {topology!r}, expected one of {TOPOLOGIES}")
    return graph


def build_named(topology: str, n_or_side: int, edge_weight: float, diag: float = 1.0,
                random_weights: bool = False, seed: Optional[int] = None,
                param_box: Optional[ParamBox] = None) -> GgmModel:
    """
    Build a named-topology precision matrix.

    Args:
        topology: chain, star, grid or diamond
        n_or_side: node count (chain, star), side length (grid); ignored for diamond
        edge_weight: off-diagonal precision entry on every edge
        diag: precision diagonal
        random_weights: draw each edge weight with random sign and magnitude
            uniform in [|w|/2, |w|] instead of using edge_weight as is
        seed: RNG seed for random_weights

    Returns:
        GgmModel whose adjacency is exactly the named topology
    """
    if topology != 'diamond' and n_or_side < 2:
        raise DimensionError(f"{topology} needs at least 2 nodes, got {n_or_side}")
    graph = _topology_graph(topology, int(n_or_side))
    n = graph.number_of_nodes()
    j = np.eye(n) * float(diag)
    rng = np.random.Generator(np.random.Philox(seed)) if random_weights else None
    for u, v in sorted(graph.edges()):
        w = float(edge_weight)
        if rng is not None:
            w = rng.choice([-1.0, 1.0]) * rng.uniform(abs(w) / 2.0, abs(w))
        j[u, v] = j[v, u] = w
    eigs = np.linalg.eigvalsh(j)
    if eigs[0] <= 0:
        raise ModelConstructionError(
            f"{topology} precision with weight {edge_weight} and diagonal {diag} is not "
            f"positive definite (smallest eigenvalue {eigs[0]:.6g})",
            eigs[0],
        )
    tag = topology if not random_weights else f"{topology}-random"
    return GgmModel.from_precision(j, param_box=param_box, seed=seed, generator=tag)


def _triangle_count(adjacency: np.ndarray) -> int:
    a = adjacency.astype(float)
    return int(round(np.trace(a @ a @ a) / 6.0))


def spectral_norm_abs(r: np.ndarray) -> float:
    """Largest eigenvalue magnitude of the entrywise absolute value of R."""
    if r.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(np.abs(r)))))


def generate_random_walk_summable(n: int, box: ParamBox, triangle_free: bool = False,
                                  seed: int = 0, mean_degree: Optional[float] = None,
                                  budget: Optional[int] = None) -> GgmModel:
    """
    Draw a random alpha-walk-summable model inside the parameter box.

    Each candidate edge is included independently with probability
    min(1, mean_degree / (n - 1)); nonzero entries of R are i.i.d. standard
    normal, rescaled once so the spectral norm of |R| is 0.95 alpha. Instances
    violating the entry box, the degree bound or (if requested) triangle
    freeness are rejected whole.

    Args:
        n: number of nodes
        box: parameter box the model must satisfy
        triangle_free: reject structures with 3-cycles
        seed: RNG seed; the output is a deterministic function of the arguments
        mean_degree: expected degree of the structure law (default delta_max,
            or min(delta_max, 2.2) for triangle-free graphs)
        budget: rejection budget (default from settings)

    Returns:
        GgmModel tagged 'random' or 'random-triangle-free'
    """
    if n < 2:
        raise DimensionError(f"random models need n >= 2, got {n}")
    if not check_scalability(box):
        zoo_logger.warning(
            f"Degree bound {box.delta_max} is outside the scalable range "
            f"[1, {box.d_min * box.alpha / box.b:.3f}); generating anyway"
        )
    budget = settings.REJECTION_BUDGET if budget is None else int(budget)
    if mean_degree is None:
        mean_degree = min(box.delta_max, TRIANGLE_FREE_MEAN_DEGREE) if triangle_free else box.delta_max
    p = min(1.0, float(mean_degree) / (n - 1))
    rng = np.random.Generator(np.random.Philox(seed))
    upper = np.triu_indices(n, 1)
    tag = 'random-triangle-free' if triangle_free else 'random'
    reasons: Dict[str, int] = {}

    for attempt in range(1, budget + 1):
        mask = rng.random(len(upper[0])) < p
        weights = rng.standard_normal(len(upper[0]))
        diag = rng.uniform(box.d_min, box.d_max, n)

        adjacency = np.zeros((n, n), dtype=bool)
        adjacency[upper[0][mask], upper[1][mask]] = True
        adjacency |= adjacency.T
        reason = None
        if not mask.any():
            reason = 'empty'
        elif adjacency.sum(axis=1).max() > box.delta_max:
            reason = 'degree'
        elif triangle_free and _triangle_count(adjacency) > 0:
            reason = 'triangle'
        if reason is None:
            r = np.zeros((n, n))
            r[upper[0][mask], upper[1][mask]] = weights[mask]
            r = r + r.T
            r *= RESCALE_TARGET * box.alpha / spectral_norm_abs(r)
            magnitudes = np.abs(r[upper[0][mask], upper[1][mask]])
            if magnitudes.min() < box.a or magnitudes.max() > box.b:
                reason = 'entry-box'
        if reason is not None:
            reasons[reason] = reasons.get(reason, 0) + 1
            zoo_logger.debug(f"Attempt {attempt} rejected: {reason}")
            continue

        root = np.sqrt(diag)
        j = (np.eye(n) - r) * np.outer(root, root)
        model = GgmModel.from_precision(j, param_box=box, seed=seed, generator=tag)
        zoo_logger.info(
            f"Generated {tag} model n={n} with {len(model.edges())} edges "
            f"after {attempt} attempt(s)"
        )
        return model

    raise GenerationFailedError(
        f"no {tag} model found in {budget} attempts (rejections: {reasons})", budget
    )


def check_walk_summable(model: GgmModel, alpha: float) -> Tuple[bool, float]:
    """
    Returns:
        (ok, spectral norm of |R|) with ok iff the norm is at most alpha
    """
    norm = spectral_norm_abs(model.partial_correlation())
    return norm <= alpha, norm


def degree_upper_bound(box: ParamBox) -> float:
    return (box.d_max * box.alpha / box.a) ** 2


def check_degree_bound(model: GgmModel, box: ParamBox) -> bool:
    """
    Max degree against (d_max alpha / a)^2 and against the box's delta_max.
    """
    max_degree = model.max_degree
    ok = max_degree <= degree_upper_bound(box) and max_degree <= box.delta_max
    if not ok:
        zoo_logger.debug(
            f"Degree check failed: max degree {max_degree}, bound {degree_upper_bound(box):.3f}, "
            f"delta_max {box.delta_max}"
        )
    return ok


def check_scalability(box: ParamBox) -> bool:
    """1 <= delta_max < d_min alpha / b."""
    return 1 <= box.delta_max < box.d_min * box.alpha / box.b


@dataclass(frozen=True)
class EigenvalueReport:
    j_low: float
    j_high: float
    sigma_low: float
    sigma_high: float
    ok: bool


def check_eigenvalue_bounds(model: GgmModel, box: ParamBox) -> EigenvalueReport:
    """
    Extreme eigenvalues of J and Sigma against the walk-summable box
    [(1-alpha) d_min, (1+alpha) d_max] and its reciprocal.
    """
    j_eigs = np.linalg.eigvalsh(model.precision)
    s_eigs = np.linalg.eigvalsh(model.covariance)
    j_lo, j_hi = (1 - box.alpha) * box.d_min, (1 + box.alpha) * box.d_max
    s_lo, s_hi = 1.0 / j_hi, 1.0 / j_lo
    ok = (j_eigs[0] >= j_lo * (1 - EIGEN_SLACK) and j_eigs[-1] <= j_hi * (1 + EIGEN_SLACK)
          and s_eigs[0] >= s_lo * (1 - EIGEN_SLACK) and s_eigs[-1] <= s_hi * (1 + EIGEN_SLACK))
    return EigenvalueReport(float(j_eigs[0]), float(j_eigs[-1]), float(s_eigs[0]), float(s_eigs[-1]), bool(ok))


def restricted_eigenvalue_eta(rho: float, d: int) -> int:
    """eta = ceil(2 + 4 rho^2 (sqrt((rho^2 - rho) / d) + sqrt(2))^2)."""
    return int(math.ceil(2 + 4 * rho ** 2 * (math.sqrt(max(rho ** 2 - rho, 0.0) / d) + math.sqrt(2)) ** 2))


def check_restricted_eigenvalue(model: Union[GgmModel, np.ndarray], i: int, c_min: float,
                                rho: float, d: int) -> bool:
    """
    Exhaustive restricted eigenvalue check on Sigma_{-i}.

    Removing a column can only shrink the largest and grow the smallest
    singular value, so enumerating supports of exactly min(eta d, n - 1)
    columns covers every smaller support.

    Args:
        model: a model, or a raw covariance matrix
        i: excluded node
        c_min: lower singular value bound
        rho: ratio of upper to lower bound
        d: sparsity level

    Returns:
        True iff every support's singular values lie in [c_min, rho c_min]
    """
    sigma = model.covariance if isinstance(model, GgmModel) else np.asarray(model, dtype=float)
    n = sigma.shape[0]
    if n > RESTRICTED_EIGENVALUE_MAX_DIM:
        raise UnsupportedSizeError(
            f"exhaustive restricted eigenvalue check supports n <= {RESTRICTED_EIGENVALUE_MAX_DIM}, got {n}"
        )
    if not 0 <= i < n:
        raise DimensionError(f"node {i} out of range for dimension {n}")
    others = [k for k in range(n) if k != i]
    reduced = sigma[np.ix_(others, others)]
    size = min(restricted_eigenvalue_eta(rho, d) * d, n - 1)
    lo, hi = c_min * (1 - EIGEN_SLACK), rho * c_min * (1 + EIGEN_SLACK)
    for support in itertools.combinations(range(n - 1), size):
        values = np.linalg.svd(reduced[:, support], compute_uv=False)
        if values.min() < lo or values.max() > hi:
            zoo_logger.debug(f"Restricted eigenvalue violated on support {support}: "
                             f"[{values.min():.4g}, {values.max():.4g}]")
            return False
    return True


def neumann_partial_sum(model: GgmModel, terms: int) -> np.ndarray:
    """
    D^{-1/2} (sum_{k < terms} R^k) D^{-1/2}, which converges to Sigma for
    walk-summable models.
    """
    r = model.partial_correlation()
    total = np.zeros_like(r)
    power = np.eye(model.n)
    for _ in range(terms):
        total += power
        power = power @ r
    root = np.sqrt(np.diag(model.precision))
    return total / np.outer(root, root)


def degree_summary(model: GgmModel) -> Dict[str, Any]:
    degrees = model.degrees()
    return {
        'n': model.n,
        'edges': len(model.edges()),
        'max_degree': int(degrees.max()) if model.n else 0,
        'mean_degree': float(degrees.mean()) if model.n else 0.0,
        'triangles': _triangle_count(model.adjacency),
    }
