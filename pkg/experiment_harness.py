"""
Experiment harness: scoring, seeded sweeps and result files.

A sweep is a grid of generator cells x sample counts x algorithms, repeated
over trials. Every trial derives its model and sample seeds from the base seed
through SeedSequence.spawn, so a sweep spec reproduces its records exactly.
Records are merged in (cell, N, algorithm, trial) order regardless of the
worker count.
"""

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

import settings
from gaussian_core import CovarianceView
from ggm_errors import ConfigurationError, GgmError
from mit_learner import (
    MitConfig,
    NeighborhoodEstimate,
    baseline_fb_greedy,
    epsilon_to_mi_threshold,
    greedy_loss_threshold,
    mi_forward_threshold,
    mit_select_neighborhood,
)
from model_zoo import (
    TOPOLOGIES,
    GgmModel,
    ParamBox,
    build_named,
    generate_random_walk_summable,
    restricted_eigenvalue_eta,
    spectral_norm_abs,
)
from sampler import draw, empirical_covariance
from threshold_learner import (
    ThresholdConfig,
    prune_by_symmetry,
    prune_neighborhood,
    threshold_select_neighborhood,
)

harness_logger = settings.get_logger('experiment_harness')

ALGORITHMS = (
    'mit', 'mit-symmetric', 'baseline', 'baseline-symmetric',
    'threshold-forward', 'threshold', 'threshold-oracle',
)
GENERATORS = TOPOLOGIES + ('random',)
CSV_COLUMNS = ('generator', 'n', 'N', 'algorithm', 'seed', 'trial',
               'success_rate', 'accuracy', 'wall_time_ms')

# defaults used on exact-covariance cells of models without a parameter box
EXACT_MIT_EPSILON = 0.01
EXACT_BASELINE_EPSILON_S = 1e-4


@dataclass(frozen=True)
class Metrics:
    success_rate: float
    accuracy: float


@dataclass
class ExperimentRecord:
    """
    One (cell, N, algorithm, trial) outcome. sample_count 0 means the exact covariance.
    """
    generator: str
    n: int
    params: Dict[str, Any]
    sample_count: int
    algorithm: str
    seed: int
    trial: int
    success_rate: float = 0.0
    accuracy: float = 0.0
    wall_time_ms: float = 0.0
    edges_selected: int = 0
    pseudo_size_mean: float = 0.0
    failed: bool = False
    failure: str = ''

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentRecord':
        return cls(**data)


def estimate_adjacency(n: int, estimates: Sequence[NeighborhoodEstimate]) -> np.ndarray:
    """Directed support: entry (i, j) is set iff j is in S_i."""
    adjacency = np.zeros((n, n), dtype=bool)
    for est in estimates:
        adjacency[est.node, est.members.as_array()] = True
    return adjacency


def score(truth: GgmModel, estimates: Sequence[NeighborhoodEstimate],
          failed_nodes: Sequence[int] = ()) -> Metrics:
    """
    Success rate and symmetric-difference accuracy against the true graph.

    |A| and |A_hat xor A| both count ordered pairs. An empty true graph scores
    accuracy 1 if the estimate is empty too and 0 otherwise. Nodes listed in
    failed_nodes never count as recovered.
    """
    n = truth.n
    if sorted(e.node for e in estimates) != list(range(n)):
        raise ValueError(f"score needs exactly one estimate per node 0..{n - 1}")
    failed = set(int(i) for i in failed_nodes)
    recovered = sum(1 for e in estimates
                    if e.node not in failed and e.members == truth.neighborhoods[e.node])
    a_hat = estimate_adjacency(n, estimates)
    true_size = int(truth.adjacency.sum())
    mismatches = int(np.sum(a_hat != truth.adjacency))
    if true_size == 0:
        accuracy = 1.0 if mismatches == 0 else 0.0
    else:
        accuracy = 1.0 - mismatches / true_size
    return Metrics(recovered / n, float(accuracy))


def selected_edge_count(estimates: Sequence[NeighborhoodEstimate]) -> int:
    """Undirected edges in the union of the estimated neighborhoods."""
    adjacency = estimate_adjacency(len(estimates), estimates)
    return int(np.triu(adjacency | adjacency.T, 1).sum())


def _model_constants(model: GgmModel) -> Tuple[float, float, int, int]:
    """(c_min, rho, eta, d) from the parameter box, or from the model without one."""
    if model.param_box is not None:
        alpha, d = model.param_box.alpha, model.param_box.delta_max
    else:
        alpha, d = spectral_norm_abs(model.partial_correlation()), max(model.max_degree, 1)
    alpha = min(alpha, 1 - 1e-6)
    rho = (1 + alpha) / (1 - alpha)
    return 1.0 / (1 + alpha), rho, restricted_eigenvalue_eta(rho, d), d


def _mit_config(model: GgmModel, view: CovarianceView, options: Dict[str, Any]) -> MitConfig:
    nu = float(options.get('nu', 0.5))
    if options.get('epsilon_f') is not None:
        return MitConfig(epsilon_f=float(options['epsilon_f']), nu=nu)
    if view.is_exact:
        if model.param_box is not None:
            return MitConfig.for_box(model.param_box, nu=nu)
        return MitConfig(epsilon_f=epsilon_to_mi_threshold(EXACT_MIT_EPSILON), nu=nu)
    c_min, rho, eta, d = _model_constants(model)
    eps_f = mi_forward_threshold(float(options.get('c', 1.0)), rho, eta, d, model.n,
                                 view.sample_count, c_min, 1.0)
    return MitConfig(epsilon_f=eps_f, nu=nu)


def _baseline_epsilon(model: GgmModel, view: CovarianceView, options: Dict[str, Any]) -> float:
    if options.get('epsilon_s') is not None:
        return float(options['epsilon_s'])
    if view.is_exact:
        return EXACT_BASELINE_EPSILON_S
    c_min, rho, eta, d = _model_constants(model)
    return greedy_loss_threshold(float(options.get('c', 1.0)), rho, eta, d, model.n,
                                 view.sample_count, c_min)


def _threshold_config(model: GgmModel, options: Dict[str, Any], oracle: bool) -> ThresholdConfig:
    box = model.param_box
    if box is None:
        raise ConfigurationError(f"threshold learners need a parameter box ({model.generator} model has none)")
    return ThresholdConfig(
        box=box,
        epsilon=options.get('epsilon'),
        nu=float(options.get('nu', 0.5)),
        tau_p=options.get('tau_p'),
        triangle_free=bool(options.get('triangle_free', False)),
        oracle=oracle,
    )


def learn_all_neighborhoods(model: GgmModel, view: CovarianceView, algorithm: str,
                            options: Optional[Dict[str, Any]] = None, ledger=None
                            ) -> Tuple[List[NeighborhoodEstimate], Dict[int, str]]:
    """
    Run one algorithm (learner plus its pruning chain) on every node.

    A node whose learner raises a GgmError gets an empty estimate and an entry
    in the returned failure map; the other nodes proceed. With a ledger every
    node invocation is logged as a learner event.

    Returns:
        (estimates ordered by node, {node: failure message})
    """
    if algorithm not in ALGORITHMS:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}")
    options = options or {}
    if algorithm.startswith('mit'):
        mit_config = _mit_config(model, view, options)
    elif algorithm.startswith('baseline'):
        epsilon_s = _baseline_epsilon(model, view, options)
        nu = float(options.get('nu', 0.5))
    else:
        threshold_config = _threshold_config(model, options, oracle=algorithm == 'threshold-oracle')

    estimates: List[NeighborhoodEstimate] = []
    failures: Dict[int, str] = {}
    for i in range(view.n):
        start = time.perf_counter()
        try:
            if algorithm.startswith('mit'):
                est = mit_select_neighborhood(view, i, mit_config)
            elif algorithm.startswith('baseline'):
                est = baseline_fb_greedy(view, i, epsilon_s, nu)
            else:
                est, _ = threshold_select_neighborhood(view, i, threshold_config, model=model)
                if algorithm != 'threshold-forward':
                    est = replace(est, members=prune_neighborhood(view, i, est.members, threshold_config))
        except GgmError as e:
            harness_logger.warning(f"{algorithm} failed on node {i}: {e}")
            failures[i] = str(e)
            est = NeighborhoodEstimate(i, (), algorithm=algorithm, forward_size=0)
        if ledger is not None:
            ledger.log_learner_event(algorithm, i, view.n, est.rounds, est.truncated, est.members,
                                     (time.perf_counter() - start) * 1000.0)
        estimates.append(replace(est, algorithm=algorithm))

    if algorithm.endswith('-symmetric') or algorithm.startswith('threshold'):
        estimates = prune_by_symmetry(estimates)
    return estimates, failures


@dataclass(frozen=True)
class SweepCell:
    generator: str
    n: Optional[int] = None
    side: Optional[int] = None
    edge_weight: float = 0.2
    diag: float = 1.0
    random_weights: bool = False
    param_box: Optional[ParamBox] = None
    triangle_free: bool = False
    mean_degree: Optional[float] = None

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ConfigurationError(f"unknown generator {self.generator!r}, expected one of {GENERATORS}")
        if self.generator == 'random' and (self.n is None or self.param_box is None):
            raise ConfigurationError("random cells need n and param_box")
        if self.generator == 'grid' and self.side is None:
            raise ConfigurationError("grid cells need side")
        if self.generator in ('chain', 'star') and self.n is None:
            raise ConfigurationError(f"{self.generator} cells need n")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SweepCell':
        box = data.get('param_box')
        return cls(
            generator=data['generator'],
            n=data.get('n'),
            side=data.get('side'),
            edge_weight=float(data.get('edge_weight', 0.2)),
            diag=float(data.get('diag', 1.0)),
            random_weights=bool(data.get('random_weights', False)),
            param_box=ParamBox.from_dict(box) if box else None,
            triangle_free=bool(data.get('triangle_free', False)),
            mean_degree=data.get('mean_degree'),
        )

    def params(self) -> Dict[str, Any]:
        out = {k: v for k, v in asdict(self).items() if k != 'generator' and v is not None}
        if self.param_box is not None:
            out['param_box'] = self.param_box.to_dict()
        return out

    def build(self, seed: int) -> GgmModel:
        if self.generator == 'random':
            return generate_random_walk_summable(self.n, self.param_box, self.triangle_free,
                                                 seed=seed, mean_degree=self.mean_degree)
        size = self.side if self.generator == 'grid' else (self.n or 4)
        return build_named(self.generator, size, self.edge_weight, self.diag,
                           self.random_weights, seed if self.random_weights else None, self.param_box)


@dataclass(frozen=True)
class SweepSpec:
    base_seed: int
    trials: int
    sample_counts: Tuple[int, ...]
    algorithms: Tuple[str, ...]
    cells: Tuple[SweepCell, ...]
    options: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SweepSpec':
        try:
            counts = tuple(0 if c in (0, 'exact') else int(c) for c in data['sample_counts'])
            algorithms = tuple(data['algorithms'])
            cells = tuple(SweepCell.from_dict(c) for c in data['cells'])
            spec = cls(int(data['base_seed']), int(data['trials']), counts, algorithms, cells,
                       dict(data.get('options', {})))
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed sweep spec: {e}")
        unknown = [a for a in spec.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigurationError(f"unknown algorithms {unknown}")
        if spec.trials < 1 or not spec.cells or not spec.sample_counts:
            raise ConfigurationError("a sweep needs at least one trial, cell and sample count")
        if any(c < 0 or c == 1 for c in spec.sample_counts):
            raise ConfigurationError(f"sample counts must be 0 (exact) or at least 2, got {spec.sample_counts}")
        return spec


def load_sweep_spec(path: str) -> SweepSpec:
    with open(path, 'r') as f:
        return SweepSpec.from_dict(json.load(f))


def _count_order(count: int) -> float:
    """Exact runs (N = 0) sort after every finite N."""
    return math.inf if count == 0 else float(count)


def trial_seeds(base_seed: int, cells: int, trials: int) -> List[List[Tuple[int, int]]]:
    """(model seed, sample seed) per cell and trial, spawned from the base seed."""
    root = np.random.SeedSequence(base_seed)
    seeds = []
    for cell_seq in root.spawn(cells):
        seeds.append([tuple(int(v) for v in child.generate_state(2, dtype=np.uint32))
                      for child in cell_seq.spawn(trials)])
    return seeds


def _run_trial(spec: SweepSpec, cell_index: int, trial: int,
               model_seed: int, sample_seed: int) -> List[ExperimentRecord]:
    cell = spec.cells[cell_index]
    options = dict(spec.options)
    options.setdefault('triangle_free', cell.triangle_free)
    records: List[ExperimentRecord] = []
    try:
        model = cell.build(model_seed)
    except GgmError as e:
        harness_logger.warning(f"cell {cell_index} trial {trial}: model construction failed: {e}")
        n = cell.side ** 2 if cell.generator == 'grid' else (cell.n or 4)
        return [ExperimentRecord(cell.generator, n, cell.params(), count, algorithm, model_seed, trial,
                                 failed=True, failure=str(e))
                for count in spec.sample_counts for algorithm in spec.algorithms]

    for k, count in enumerate(spec.sample_counts):
        view = model.view() if count == 0 else empirical_covariance(
            draw(model, count, sample_seed, stream=(k,)))
        for algorithm in spec.algorithms:
            record = ExperimentRecord(model.generator, model.n, cell.params(), count, algorithm,
                                      model_seed, trial)
            if algorithm == 'threshold-oracle' and count != 0:
                record.failed, record.failure = True, 'oracle mode runs on the exact covariance only'
                records.append(record)
                continue
            start = time.perf_counter()
            try:
                estimates, failures = learn_all_neighborhoods(model, view, algorithm, options)
            except GgmError as e:
                record.failed, record.failure = True, str(e)
                harness_logger.warning(f"cell {cell_index} trial {trial} N={count} {algorithm}: {e}")
                records.append(record)
                continue
            record.wall_time_ms = (time.perf_counter() - start) * 1000.0
            metrics = score(model, estimates, failed_nodes=failures.keys())
            record.success_rate, record.accuracy = metrics.success_rate, metrics.accuracy
            record.edges_selected = selected_edge_count(estimates)
            sizes = [e.forward_size if e.forward_size is not None else len(e.members) for e in estimates]
            record.pseudo_size_mean = float(np.mean(sizes))
            if failures:
                record.failed = True
                record.failure = '; '.join(f"node {i}: {msg}" for i, msg in sorted(failures.items()))
            records.append(record)
    return records


def _run_trial_packed(args) -> List[ExperimentRecord]:
    return _run_trial(*args)


def run_sweep(spec: SweepSpec, workers: Optional[int] = None, ledger=None) -> List[ExperimentRecord]:
    """
    Run every (cell, trial) work item and return the records.

    Args:
        spec: parsed sweep spec
        workers: process pool size (default from settings; 1 runs inline)
        ledger: optional RunLedger every record is written to

    Returns:
        records ordered by cell, ascending N (exact last), algorithm, trial
    """
    workers = settings.SWEEP_WORKERS if workers is None else int(workers)
    seeds = trial_seeds(spec.base_seed, len(spec.cells), spec.trials)
    items = [(spec, c, t, *seeds[c][t]) for c in range(len(spec.cells)) for t in range(spec.trials)]
    harness_logger.info(f"Sweep: {len(spec.cells)} cell(s) x {spec.trials} trial(s), "
                        f"N={list(spec.sample_counts)}, algorithms={list(spec.algorithms)}, workers={workers}")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_run_trial_packed, items))
    else:
        batches = []
        for item in items:
            batches.append(_run_trial_packed(item))
            harness_logger.info(f"cell {item[1]} trial {item[2]} done")

    keyed = []
    for (_, c, t, _, _), batch in zip(items, batches):
        for record in batch:
            key = (c, _count_order(record.sample_count), spec.algorithms.index(record.algorithm), t)
            keyed.append((key, record))
    records = [record for _, record in sorted(keyed, key=lambda kr: kr[0])]

    if ledger is not None:
        for record in records:
            ledger.log_record(record)
    failed = sum(1 for r in records if r.failed)
    if failed:
        harness_logger.warning(f"Sweep finished with {failed} failed record(s) out of {len(records)}")
    return records


def success_curve(records: Sequence[ExperimentRecord], generator: str, algorithm: str) -> List[Tuple[int, float]]:
    """Mean success rate per N for one generator and algorithm, ascending N with exact last."""
    by_count: Dict[int, List[float]] = {}
    for r in records:
        if r.generator == generator and r.algorithm == algorithm:
            by_count.setdefault(r.sample_count, []).append(r.success_rate)
    return [(count, float(np.mean(rates))) for count, rates in sorted(by_count.items(), key=lambda kv: _count_order(kv[0]))]


def _csv_value(value: Any) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def emit_results(records: Sequence[ExperimentRecord], path: str, fmt: str = 'csv',
                 include_walltime: bool = True) -> None:
    """
    Write records as CSV (fixed columns) or as a JSON list of full records.
    Without wall times the output is a pure function of the sweep spec.
    """
    if fmt == 'csv':
        columns = [c for c in CSV_COLUMNS if include_walltime or c != 'wall_time_ms']
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(columns)
            for r in records:
                row = {'generator': r.generator, 'n': r.n, 'N': r.sample_count, 'algorithm': r.algorithm,
                       'seed': r.seed, 'trial': r.trial, 'success_rate': r.success_rate,
                       'accuracy': r.accuracy, 'wall_time_ms': r.wall_time_ms}
                writer.writerow([_csv_value(row[c]) for c in columns])
    elif fmt in ('json', 'structured'):
        docs = []
        for r in records:
            doc = r.to_dict()
            if not include_walltime:
                doc.pop('wall_time_ms')
            docs.append(doc)
        with open(path, 'w') as f:
            json.dump(docs, f, indent=2, sort_keys=True)
    else:
        raise ConfigurationError(f"unknown result format {fmt!r}")
    harness_logger.info(f"Wrote {len(records)} record(s) to {path}")


def load_results(path: str) -> List[ExperimentRecord]:
    with open(path, 'r') as f:
        return [ExperimentRecord.from_dict(doc) for doc in json.load(f)]


def save_estimates(estimates: Sequence[NeighborhoodEstimate], n: int, algorithm: str, path: str) -> None:
    doc = {'n': n, 'algorithm': algorithm,
           'neighborhoods': [list(e.members) for e in sorted(estimates, key=lambda e: e.node)]}
    with open(path, 'w') as f:
        json.dump(doc, f, indent=2)


def load_estimates(path: str) -> List[NeighborhoodEstimate]:
    with open(path, 'r') as f:
        doc = json.load(f)
    neighborhoods = doc['neighborhoods']
    if len(neighborhoods) != int(doc['n']):
        raise ConfigurationError(f"estimate file lists {len(neighborhoods)} neighborhoods for n={doc['n']}")
    return [NeighborhoodEstimate(i, members, algorithm=doc.get('algorithm', 'imported'))
            for i, members in enumerate(neighborhoods)]
