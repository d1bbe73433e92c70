"""
Tests for scoring, seeded sweeps and result files.
"""

import json
import math

import numpy as np
import pytest
from pytest import approx

from gaussian_core import CovarianceView
from ggm_errors import ConfigurationError
from experiment_harness import (
    CSV_COLUMNS,
    ExperimentRecord,
    SweepSpec,
    learn_all_neighborhoods,
    load_estimates,
    load_results,
    emit_results,
    run_sweep,
    save_estimates,
    score,
    selected_edge_count,
    success_curve,
    trial_seeds,
)
from mit_learner import NeighborhoodEstimate
from model_zoo import GgmModel, build_named


def _estimates(neighborhoods):
    return [NeighborhoodEstimate(i, s) for i, s in enumerate(neighborhoods)]


def _chain_sweep(**overrides):
    doc = {
        'base_seed': 42,
        'trials': 2,
        'sample_counts': [200, 'exact'],
        'algorithms': ['mit', 'baseline'],
        'cells': [{'generator': 'chain', 'n': 5, 'edge_weight': -0.3}],
    }
    doc.update(overrides)
    return SweepSpec.from_dict(doc)


def _without_walltime(records):
    return [{k: v for k, v in r.to_dict().items() if k != 'wall_time_ms'} for r in records]


class TestScore:

    def test_perfect_estimate(self, chain10):
        metrics = score(chain10, _estimates(chain10.neighborhoods))
        assert metrics.success_rate == 1.0
        assert metrics.accuracy == 1.0

    def test_single_edge_missed(self):
        j = np.eye(5)
        j[1, 3] = j[3, 1] = -0.2
        truth = GgmModel.from_precision(j)
        metrics = score(truth, _estimates([[]] * 5))
        assert metrics.success_rate == approx(3 / 5)
        assert metrics.accuracy == 0.0

    def test_false_edges_count_both_directions(self):
        # 22 true edges, 19 spurious edges (i, i + 2)
        truth = build_named('chain', 23, -0.3)
        neighborhoods = [set(s) for s in truth.neighborhoods]
        for i in range(19):
            neighborhoods[i].add(i + 2)
            neighborhoods[i + 2].add(i)
        metrics = score(truth, _estimates(neighborhoods))
        assert metrics.accuracy == approx(1 - 38 / 44)
        assert metrics.success_rate == approx(2 / 23)

    def test_empty_truth(self, diagonal4):
        assert score(diagonal4, _estimates([[]] * 4)).accuracy == 1.0
        assert score(diagonal4, _estimates([[1], [], [], []])).accuracy == 0.0

    def test_failed_nodes_never_recovered(self, chain3):
        metrics = score(chain3, _estimates(chain3.neighborhoods), failed_nodes=[1])
        assert metrics.success_rate == approx(2 / 3)

    def test_missing_node(self, chain3):
        with pytest.raises(ValueError):
            score(chain3, _estimates(chain3.neighborhoods)[:2])

    def test_selected_edge_count(self):
        assert selected_edge_count(_estimates([[1, 2], [0], []])) == 2


class TestLearnAllNeighborhoods:

    def test_exact_chain(self, chain10):
        for algorithm in ('mit', 'mit-symmetric', 'baseline', 'baseline-symmetric'):
            estimates, failures = learn_all_neighborhoods(chain10, chain10.view(), algorithm)
            assert not failures
            assert score(chain10, estimates).success_rate == 1.0
            assert all(e.algorithm == algorithm for e in estimates)

    def test_threshold_variants(self, reference_instance):
        options = {'triangle_free': True}
        for algorithm in ('threshold', 'threshold-oracle'):
            estimates, _ = learn_all_neighborhoods(reference_instance, reference_instance.view(), algorithm, options)
            assert score(reference_instance, estimates).success_rate == 1.0
        forward, _ = learn_all_neighborhoods(reference_instance, reference_instance.view(), 'threshold-forward', options)
        for est, truth in zip(forward, reference_instance.neighborhoods):
            assert set(truth) <= set(est.members)

    def test_exact_mit_threshold_follows_parameter_box(self, reference_family):
        for model in reference_family[:20]:
            estimates, failures = learn_all_neighborhoods(model, model.view(), 'mit')
            assert not failures
            for i in np.flatnonzero(model.degrees() == 1):
                assert estimates[i].members == model.neighborhoods[i]

    def test_threshold_needs_box(self, chain3):
        with pytest.raises(ConfigurationError):
            learn_all_neighborhoods(chain3, chain3.view(), 'threshold')

    def test_node_failure_is_isolated(self):
        sigma = np.array([[1.0, 0.5, 0.5],
                          [0.5, 1.0, 1.0],
                          [0.5, 1.0, 1.0]])
        model = build_named('chain', 3, -0.3)
        estimates, failures = learn_all_neighborhoods(model, CovarianceView.exact(sigma), 'mit',
                                                      {'epsilon_f': 1e-6})
        assert 0 in failures
        assert len(estimates[0].members) == 0
        assert len(estimates) == 3

    def test_unknown_algorithm(self, chain3):
        with pytest.raises(ConfigurationError):
            learn_all_neighborhoods(chain3, chain3.view(), 'lasso')


class TestSweepSpec:

    def test_exact_alias(self):
        assert _chain_sweep().sample_counts == (200, 0)

    @pytest.mark.parametrize('overrides', [
        {'algorithms': ['mit', 'lasso']},
        {'sample_counts': [1]},
        {'sample_counts': [-5]},
        {'trials': 0},
        {'cells': []},
        {'cells': [{'generator': 'wheel', 'n': 5}]},
        {'cells': [{'generator': 'random', 'n': 5}]},
        {'base_seed': 'abc'},
    ])
    def test_malformed(self, overrides):
        with pytest.raises(ConfigurationError):
            _chain_sweep(**overrides)

    def test_missing_key(self):
        with pytest.raises(ConfigurationError):
            SweepSpec.from_dict({'trials': 1})


class TestSweep:

    def test_seeds_are_reproducible(self):
        assert trial_seeds(3, 2, 4) == trial_seeds(3, 2, 4)
        assert trial_seeds(3, 2, 4) != trial_seeds(4, 2, 4)
        assert len({s for cell in trial_seeds(3, 2, 4) for s in cell}) == 8

    def test_record_order(self):
        records = run_sweep(_chain_sweep(), workers=1)
        assert len(records) == 8
        assert [(r.sample_count, r.algorithm, r.trial) for r in records] == [
            (200, 'mit', 0), (200, 'mit', 1), (200, 'baseline', 0), (200, 'baseline', 1),
            (0, 'mit', 0), (0, 'mit', 1), (0, 'baseline', 0), (0, 'baseline', 1),
        ]
        for r in records:
            assert 0.0 <= r.success_rate <= 1.0
            assert r.generator == 'chain' and r.n == 5
        assert all(r.success_rate == 1.0 for r in records if r.sample_count == 0)

    def test_deterministic(self):
        assert _without_walltime(run_sweep(_chain_sweep(), workers=1)) == \
            _without_walltime(run_sweep(_chain_sweep(), workers=1))

    def test_model_failure_becomes_failed_records(self):
        spec = _chain_sweep(trials=1, cells=[{'generator': 'star', 'n': 10, 'edge_weight': 0.5}])
        records = run_sweep(spec, workers=1)
        assert len(records) == 4
        assert all(r.failed and 'positive definite' in r.failure for r in records)

    def test_oracle_on_samples_fails(self):
        spec = SweepSpec.from_dict({
            'base_seed': 1, 'trials': 1, 'sample_counts': [500, 0],
            'algorithms': ['threshold-oracle'],
            'cells': [{'generator': 'random', 'n': 10, 'triangle_free': True,
                       'param_box': {'alpha': 0.4, 'a': 0.01, 'b': 0.28, 'delta_max': 4}}],
        })
        empirical, exact = run_sweep(spec, workers=1)
        assert empirical.failed
        assert not exact.failed
        assert exact.success_rate == 1.0

    def test_success_curve(self):
        curve = success_curve(run_sweep(_chain_sweep(), workers=1), 'chain', 'mit')
        assert [count for count, _ in curve] == [200, 0]
        assert curve[-1][1] == 1.0

    @pytest.mark.slow
    def test_named_graphs_converge(self):
        cells = [
            {'generator': 'chain', 'n': 10, 'edge_weight': -0.3},
            {'generator': 'star', 'n': 10, 'edge_weight': 0.2},
            {'generator': 'grid', 'side': 3, 'edge_weight': 0.2},
            {'generator': 'diamond', 'edge_weight': 0.2},
        ]
        spec = SweepSpec.from_dict({
            'base_seed': 2024, 'trials': 100, 'sample_counts': [100, 1000, 10000, 100000],
            'algorithms': ['mit', 'baseline'], 'cells': cells,
            'options': {'epsilon_f': 0.5 * math.log(1 / 0.99), 'epsilon_s': 1e-3},
        })
        records = run_sweep(spec, workers=1)
        for generator in ('chain', 'star', 'grid', 'diamond'):
            for algorithm in ('mit', 'baseline'):
                rates = [rate for _, rate in success_curve(records, generator, algorithm)]
                assert rates[-1] == 1.0
                for before, after in zip(rates, rates[1:]):
                    assert after >= before - 0.05


class TestResultFiles:

    def _record(self, **overrides):
        base = dict(generator='chain', n=3, params={'n': 3}, sample_count=100, algorithm='mit',
                    seed=11, trial=0, success_rate=1.0, accuracy=0.5, wall_time_ms=1.25)
        base.update(overrides)
        return ExperimentRecord(**base)

    def test_header_only(self, tmp_path):
        path = str(tmp_path / 'out.csv')
        emit_results([], path)
        assert open(path).read() == ','.join(CSV_COLUMNS) + '\n'

    def test_one_record(self, tmp_path):
        path = str(tmp_path / 'out.csv')
        emit_results([self._record()], path)
        lines = open(path).read().splitlines()
        assert len(lines) == 2
        assert lines[1] == 'chain,3,100,mit,11,0,1.0,0.5,1.25'

    def test_without_walltime(self, tmp_path):
        path = str(tmp_path / 'out.csv')
        emit_results([self._record()], path, include_walltime=False)
        header, row = open(path).read().splitlines()
        assert 'wall_time_ms' not in header
        assert row == 'chain,3,100,mit,11,0,1.0,0.5'

    def test_json_round_trip(self, tmp_path):
        path = str(tmp_path / 'out.json')
        records = [self._record(), self._record(trial=1, failed=True, failure='singular')]
        emit_results(records, path, fmt='json')
        assert load_results(path) == records
        assert json.load(open(path))[1]['failure'] == 'singular'

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ConfigurationError):
            emit_results([], str(tmp_path / 'out.xml'), fmt='xml')

    def test_estimate_file(self, tmp_path, chain3):
        path = str(tmp_path / 'estimates.json')
        save_estimates(_estimates(chain3.neighborhoods), 3, 'mit', path)
        loaded = load_estimates(path)
        assert [e.members for e in loaded] == list(chain3.neighborhoods)
        assert score(chain3, loaded).success_rate == 1.0
