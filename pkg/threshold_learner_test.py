"""
Tests for the thresholding learner: forward pass, magnitude pruning,
symmetry pruning, and the population bounds behind its thresholds.
"""

import itertools
from dataclasses import replace

import numpy as np
import pytest
from pytest import approx

from conftest import REFERENCE_BOX
from experiment_harness import learn_all_neighborhoods
from gaussian_core import CovarianceView, residual_covariance
from ggm_errors import ConfigurationError, NoUndiscoveredNeighborsError, SingularConditioningError
from mit_learner import NeighborhoodEstimate
from model_zoo import ParamBox, build_named
from sampler import draw, empirical_covariance
from threshold_learner import (
    ThresholdConfig,
    forward_threshold,
    population_bound,
    prune_by_symmetry,
    prune_neighborhood,
    pruning_coefficients,
    pseudo_neighborhood_bound,
    threshold_gap,
    threshold_pipeline,
    threshold_select_neighborhood,
    undiscovered_neighbor_bound,
)

CHAIN_BOX = ParamBox(alpha=0.43, a=0.3, b=0.3, delta_max=2)


def _reference_config(**overrides):
    return ThresholdConfig(box=REFERENCE_BOX, triangle_free=True, **overrides)


def _graph_of(estimates):
    return [tuple(e.members) for e in estimates]


def _truth_of(model):
    return [tuple(s) for s in model.neighborhoods]


def _edges_of(neighborhoods):
    return {(i, j) for i, members in enumerate(neighborhoods) for j in members if i < j}


class TestForwardThreshold:

    def test_triangle_free_unit_diagonal(self):
        config = ThresholdConfig(box=ParamBox(alpha=0.7, a=0.01, b=0.2), epsilon=0.0, triangle_free=True)
        assert forward_threshold(config) == approx(0.01 / (1 - 0.0001), rel=1e-12)

    def test_general_bound(self):
        box = ParamBox(alpha=0.4, a=0.01, b=0.28, d_max=2.0)
        expected = 0.01 / (2.0 * (4.0 * 1.4 - 0.0001))
        assert population_bound(box) == approx(expected, rel=1e-12)

    def test_default_epsilon_is_half(self):
        bound = population_bound(REFERENCE_BOX, triangle_free=True)
        assert forward_threshold(_reference_config()) == approx(bound / 2)

    def test_epsilon_equal_to_bound(self):
        bound = population_bound(REFERENCE_BOX, triangle_free=True)
        with pytest.raises(ConfigurationError):
            forward_threshold(_reference_config(epsilon=bound))

    def test_config_validation(self):
        with pytest.raises(ConfigurationError):
            _reference_config(nu=0.0)
        with pytest.raises(ConfigurationError):
            _reference_config(tau_p=-1e-3)
        assert _reference_config().pruning_threshold == approx(0.005)
        assert _reference_config(tau_p=1e-3).pruning_threshold == 1e-3


class TestThresholdSelect:

    def test_diagonal_model(self, diagonal4):
        for i in range(4):
            est, traces = threshold_select_neighborhood(diagonal4.view(), i, _reference_config())
            assert len(est.members) == 0
            assert traces[0].added == ()

    def test_chain_rounds(self, chain3):
        config = ThresholdConfig(box=CHAIN_BOX, triangle_free=True)
        assert forward_threshold(config) < chain3.covariance[0, 1]
        est, traces = threshold_select_neighborhood(chain3.view(), 0, config)
        assert list(est.members) == [1]
        assert traces[0].added == (1,)
        assert traces[1].added == ()
        assert len(traces) == 2

    def test_superset_on_reference_instance(self, reference_instance):
        view = reference_instance.view()
        tau = forward_threshold(_reference_config())
        for i in range(reference_instance.n):
            est, _ = threshold_select_neighborhood(view, i, _reference_config())
            assert set(reference_instance.neighborhoods[i]) <= set(est.members)
            bound = pseudo_neighborhood_bound(REFERENCE_BOX, tau, int(reference_instance.degrees()[i]))
            assert len(est.members) <= bound

    def test_singular_round_is_reported(self):
        sigma = np.array([[1.0, 0.5, 0.5],
                          [0.5, 1.0, 1.0],
                          [0.5, 1.0, 1.0]])
        config = ThresholdConfig(box=CHAIN_BOX, triangle_free=True)
        with pytest.raises(SingularConditioningError) as info:
            threshold_select_neighborhood(CovarianceView.exact(sigma), 0, config)
        assert info.value.round == 2
        assert info.value.subset == (1, 2)

    def test_oracle_needs_exact_view(self, reference_instance):
        view = empirical_covariance(draw(reference_instance, 100, seed=1))
        with pytest.raises(ConfigurationError):
            threshold_select_neighborhood(view, 0, _reference_config(oracle=True), model=reference_instance)

    def test_oracle_needs_model(self, reference_instance):
        with pytest.raises(ConfigurationError):
            threshold_select_neighborhood(reference_instance.view(), 0, _reference_config(oracle=True))

    def test_undefined_oracle_bound_only_fails_oracle_mode(self):
        # d_max understates the true unit diagonal, so the bound is undefined for the middle node
        box = ParamBox(alpha=0.4, a=0.05, b=0.3, d_min=0.1, d_max=0.1, delta_max=2)
        model = build_named('chain', 3, -0.3, param_box=box)
        config = ThresholdConfig(box=box)
        est, traces = threshold_select_neighborhood(model.view(), 1, config, model=model)
        assert traces[0].oracle_bound is None
        assert est.algorithm == 'threshold'
        _, failures = learn_all_neighborhoods(model, model.view(), 'threshold')
        assert failures == {}
        with pytest.raises(ConfigurationError):
            threshold_select_neighborhood(model.view(), 1, replace(config, oracle=True), model=model)

    def test_oracle_recovers_reference_instance(self, reference_instance):
        estimates = threshold_pipeline(reference_instance.view(), _reference_config(oracle=True), model=reference_instance)
        assert _graph_of(estimates) == _truth_of(reference_instance)
        assert all(e.algorithm == 'threshold-oracle' for e in estimates)


class TestPruning:

    def test_coefficients_match_precision(self, reference_family):
        for model in reference_family:
            view = model.view()
            j = model.precision
            for i in range(model.n):
                # neighbors plus two arbitrary non-neighbors
                extra = [k for k in range(model.n) if k != i and k not in model.neighborhoods[i]][:2]
                s = model.neighborhoods[i].union(extra)
                gamma = pruning_coefficients(view, i, s)
                for member, value in zip(s, gamma):
                    if member in model.neighborhoods[i]:
                        assert value == approx(-j[i, member], abs=1e-9)
                    else:
                        assert abs(value) < 1e-10

    def test_prune_to_neighborhood(self, reference_instance):
        view = reference_instance.view()
        for tau_p in (1e-3, 0.005, 0.009):
            config = _reference_config(tau_p=tau_p)
            for i in range(reference_instance.n):
                s = reference_instance.neighborhoods[i].union([k for k in range(20) if k != i][:3])
                assert prune_neighborhood(view, i, s, config) == reference_instance.neighborhoods[i]

    def test_exact_neighborhood_unchanged(self, reference_instance):
        view = reference_instance.view()
        for i in range(reference_instance.n):
            n_i = reference_instance.neighborhoods[i]
            assert prune_neighborhood(view, i, n_i, _reference_config()) == n_i


class TestSymmetry:

    def test_symmetric_input_unchanged(self, chain3):
        estimates = [NeighborhoodEstimate(i, chain3.neighborhoods[i]) for i in range(3)]
        assert _graph_of(prune_by_symmetry(estimates)) == _truth_of(chain3)

    def test_one_sided_edge_removed(self):
        pruned = prune_by_symmetry([NeighborhoodEstimate(0, [1]), NeighborhoodEstimate(1, [])])
        assert _graph_of(pruned) == [(), ()]

    def test_idempotent(self):
        estimates = [NeighborhoodEstimate(0, [1, 2]), NeighborhoodEstimate(1, [0]), NeighborhoodEstimate(2, [1])]
        once = prune_by_symmetry(estimates)
        assert _graph_of(once) == [(1,), (0,), ()]
        assert _graph_of(prune_by_symmetry(once)) == _graph_of(once)

    def test_never_adds_an_edge(self, small_general_family, small_triangle_free_family):
        rng = np.random.default_rng(11)
        for model in small_general_family + small_triangle_free_family:
            # true neighborhoods with random members flipped in and out
            estimates = []
            for i in range(model.n):
                directed = model.adjacency[i] ^ (rng.random(model.n) < 0.3)
                directed[i] = False
                estimates.append(NeighborhoodEstimate(i, np.flatnonzero(directed)))
            pruned = prune_by_symmetry(estimates)
            for before, after in zip(estimates, pruned):
                assert set(after.members) <= set(before.members)
                assert all(before.node in estimates[j].members for j in after.members)

    def test_requires_every_node(self):
        with pytest.raises(ValueError):
            prune_by_symmetry([NeighborhoodEstimate(1, [])])


class TestPseudoNeighborhoodBound:

    def test_isolated_node(self):
        assert pseudo_neighborhood_bound(REFERENCE_BOX, 0.005, 0) == 0.0

    def test_ratio_at_population_threshold(self):
        box = ParamBox(alpha=0.4, a=0.01, b=0.28)
        tau = population_bound(box, triangle_free=True)
        ratio = pseudo_neighborhood_bound(box, tau, 1)
        assert ratio <= (1.4 / 0.6) ** 2 * 784
        assert ratio == approx(0.28 ** 2 / (0.36 * tau ** 2))

    def test_family(self, reference_family):
        tau = forward_threshold(_reference_config())
        violations = 0
        for model in reference_family:
            view = model.view()
            degrees = model.degrees()
            for i in range(model.n):
                est, _ = threshold_select_neighborhood(view, i, _reference_config())
                if len(est.members) > pseudo_neighborhood_bound(REFERENCE_BOX, tau, int(degrees[i])):
                    violations += 1
        assert violations == 0


class TestUndiscoveredNeighborBound:

    def test_single_neighbor_closed_form(self, chain3):
        assert undiscovered_neighbor_bound(chain3, 0, [], triangle_free=True) == approx(0.3 / (1 - 0.09))

    def test_covered_neighborhood(self, chain3):
        with pytest.raises(NoUndiscoveredNeighborsError):
            undiscovered_neighbor_bound(chain3, 1, [0, 2])

    @staticmethod
    def _sweep(models, triangle_free):
        violations = 0
        for model in models:
            n = model.n
            for size in range(n):
                for s in itertools.combinations(range(n), size):
                    residual = residual_covariance(model.view(), s)
                    for i in range(n):
                        if i in s:
                            continue
                        undiscovered = [j for j in model.neighborhoods[i] if j not in s]
                        if not undiscovered:
                            continue
                        actual = max(abs(residual[i, j]) for j in undiscovered)
                        bound = undiscovered_neighbor_bound(model, i, s, triangle_free)
                        if actual < bound * (1 - 1e-9):
                            violations += 1
        return violations

    def test_exhaustive_general(self, small_general_family):
        assert self._sweep(small_general_family, triangle_free=False) == 0

    def test_exhaustive_triangle_free(self, small_triangle_free_family):
        assert self._sweep(small_triangle_free_family, triangle_free=True) == 0

    def test_algorithm_threshold_below_oracle(self, reference_family):
        for model in reference_family[:30]:
            for i in range(model.n):
                for tau, bound in threshold_gap(model, i, _reference_config()):
                    assert tau <= bound


class TestPipeline:

    def test_reference_family_exact_recovery(self, reference_family):
        recovered = 0
        for model in reference_family:
            estimates = threshold_pipeline(model.view(), _reference_config())
            recovered += _graph_of(estimates) == _truth_of(model)
        assert recovered >= 99

    def test_without_magnitude_pruning_is_superset(self, reference_instance):
        estimates = threshold_pipeline(reference_instance.view(), _reference_config(), magnitude_pruning=False)
        for est, truth in zip(estimates, reference_instance.neighborhoods):
            assert set(truth) <= set(est.members)

    @pytest.mark.slow
    def test_million_samples(self, reference_instance):
        config = _reference_config()
        truth = _truth_of(reference_instance)
        forward_only = threshold_pipeline(
            empirical_covariance(draw(reference_instance, 1000000, seed=0)), config, magnitude_pruning=False)
        for est, n_i in zip(forward_only, reference_instance.neighborhoods):
            assert set(n_i) <= set(est.members)

        exact = 0
        for seed in range(100):
            view = empirical_covariance(draw(reference_instance, 1000000, seed=seed))
            exact += _graph_of(threshold_pipeline(view, config)) == truth
        assert exact >= 90

    @pytest.mark.slow
    def test_million_samples_absolute_pruning_threshold(self, reference_instance):
        # tau_p = 1e-3 is at the coefficient noise level for N = 1e6: no edge is lost, some spurious ones stay
        config = _reference_config(tau_p=1e-3)
        true_edges = _edges_of(reference_instance.neighborhoods)
        for seed in range(10):
            view = empirical_covariance(draw(reference_instance, 1000000, seed=seed))
            found = _edges_of(e.members for e in threshold_pipeline(view, config))
            assert true_edges <= found
            assert len(found - true_edges) <= len(true_edges)
