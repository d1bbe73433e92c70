"""
Tests for seeded sampling and the empirical covariance.
"""

import numpy as np
import pytest
from pytest import approx

from ggm_errors import DimensionError, InsufficientSamplesError
from model_zoo import GgmModel
from sampler import (
    SampleSet,
    concentration_curve,
    draw,
    empirical_covariance,
    empirical_covariance_matrix,
    load_samples,
    make_rng,
    save_samples,
    sup_norm_error,
)


class TestDraw:

    def test_identity_model(self):
        model = GgmModel.from_precision(np.eye(3))
        samples = draw(model, 100000, seed=1)
        assert np.all(np.abs(samples.data.mean(axis=0)) < 0.05)
        assert np.max(np.abs(empirical_covariance_matrix(samples) - np.eye(3))) < 0.05

    def test_deterministic(self, chain3):
        a = draw(chain3, 50, seed=9)
        b = draw(chain3, 50, seed=9)
        assert np.array_equal(a.data, b.data)

    def test_streams_differ(self, chain3):
        a = draw(chain3, 50, seed=9, stream=(0,))
        b = draw(chain3, 50, seed=9, stream=(1,))
        assert not np.array_equal(a.data, b.data)

    def test_philox_generator(self):
        assert isinstance(make_rng(3, 1).bit_generator, np.random.Philox)

    def test_zero_count(self, chain3):
        with pytest.raises(InsufficientSamplesError):
            draw(chain3, 0, seed=1)

    @pytest.mark.slow
    def test_chain_concentration(self, chain3):
        assert sup_norm_error(chain3, draw(chain3, 1000000, seed=2)) < 0.01


class TestEmpiricalCovariance:

    def test_hand_computed(self):
        samples = SampleSet(2, 2, np.array([[1.0, 0.0], [-1.0, 0.0]]), 0)
        assert np.array_equal(empirical_covariance_matrix(samples), np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_duplicated_rows(self, chain3):
        samples = draw(chain3, 200, seed=4)
        doubled = SampleSet(3, 400, np.vstack([samples.data, samples.data]), 4)
        assert np.allclose(empirical_covariance_matrix(doubled), empirical_covariance_matrix(samples))

    def test_too_few(self, chain3):
        with pytest.raises(InsufficientSamplesError):
            empirical_covariance(draw(chain3, 1, seed=1))

    def test_view_is_empirical(self, chain3):
        view = empirical_covariance(draw(chain3, 500, seed=5))
        assert not view.is_exact
        assert view.sample_count == 500

    def test_sample_set_shape_checked(self):
        with pytest.raises(DimensionError):
            SampleSet(3, 2, np.zeros((2, 2)), 0)


class TestConcentrationCurve:

    def test_single_count(self, chain3):
        curve = concentration_curve(chain3, [100], trials=3, seed=1)
        assert len(curve) == 1 and curve[0][0] == 100

    def test_reproducible(self, chain3):
        assert concentration_curve(chain3, [50, 200], 1, seed=8) == concentration_curve(chain3, [50, 200], 1, seed=8)

    def test_counts_must_ascend(self, chain3):
        with pytest.raises(ValueError):
            concentration_curve(chain3, [200, 50], 1, seed=1)

    @pytest.mark.slow
    def test_quadrupling_halves_error(self, reference_instance):
        (_, small), (_, large) = concentration_curve(reference_instance, [2000, 8000], trials=50, seed=3)
        assert large / small == approx(0.5, rel=0.25)


class TestSampleFiles:

    def test_text_round_trip(self, tmp_path, chain3):
        samples = draw(chain3, 20, seed=6)
        path = str(tmp_path / 'samples.txt')
        save_samples(samples, path)
        loaded = load_samples(path)
        assert (loaded.n, loaded.count, loaded.seed) == (3, 20, 6)
        assert np.array_equal(loaded.data, samples.data)

    def test_binary_layout(self, tmp_path, chain3):
        samples = draw(chain3, 4, seed=7)
        path = str(tmp_path / 'samples.bin')
        save_samples(samples, path)
        raw = open(path, 'rb').read()
        assert len(raw) == 24 + 4 * 3 * 8
        assert list(np.frombuffer(raw[:24], dtype='<i8')) == [3, 4, 7]
        assert np.array_equal(load_samples(path).data, samples.data)
