"""
Seeded sampling from a GgmModel and the empirical covariance.

Random streams come from numpy's counter-based Philox bit generator keyed by a
SeedSequence, so the same (seed, stream) pair reproduces bit-for-bit across
platforms. Samples are zero-mean and the empirical covariance is the
uncentered (1/N) X^T X.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg

import settings
from gaussian_core import CovarianceView
from ggm_errors import DimensionError, InsufficientSamplesError, ModelInvalidError
from model_zoo import GgmModel

sampler_logger = settings.get_logger('sampler')

BINARY_SUFFIX = '.bin'


@dataclass(frozen=True, eq=False)
class SampleSet:
    """
    N i.i.d. draws (rows) of an n-dimensional model and the seed behind them.
    """
    n: int
    count: int
    data: np.ndarray
    seed: int

    def __post_init__(self):
        if self.count < 1:
            raise InsufficientSamplesError(f"a sample set needs at least one row, got {self.count}")
        if self.data.shape != (self.count, self.n):
            raise DimensionError(f"data shape {self.data.shape} does not match ({self.count}, {self.n})")
        if not np.all(np.isfinite(self.data)):
            raise DimensionError("sample data contains non-finite values")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for the stream (seed, *stream)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def covariance_factor(model: GgmModel) -> np.ndarray:
    try:
        return linalg.cholesky(model.covariance, lower=True)
    except linalg.LinAlgError as e:
        raise ModelInvalidError(f"covariance of {model.generator} model is not positive definite: {e}")


def draw(model: GgmModel, count: int, seed: int, stream: Sequence[int] = ()) -> SampleSet:
    """
    Draw rows L z with L the Cholesky factor of Sigma and z standard normal.

    Args:
        model: model to sample
        count: number of rows N
        seed: base seed
        stream: extra stream coordinates (e.g. trial index) mixed into the seed

    Returns:
        SampleSet with count rows
    """
    if count < 1:
        raise InsufficientSamplesError(f"count must be at least 1, got {count}")
    factor = covariance_factor(model)
    rng = make_rng(seed, *stream)
    z = rng.standard_normal((int(count), model.n))
    sampler_logger.debug(f"Drew {count} samples (n={model.n}, seed={seed}, stream={tuple(stream)})")
    return SampleSet(model.n, int(count), z @ factor.T, int(seed))


def empirical_covariance_matrix(samples: SampleSet) -> np.ndarray:
    """(1/N) sum_k x_k x_k^T as a plain symmetric array."""
    if samples.count < 2:
        raise InsufficientSamplesError(f"empirical covariance needs at least 2 samples, got {samples.count}")
    x = samples.data
    sigma_hat = (x.T @ x) / samples.count
    return 0.5 * (sigma_hat + sigma_hat.T)


def empirical_covariance(samples: SampleSet) -> CovarianceView:
    return CovarianceView.empirical(empirical_covariance_matrix(samples), samples.count)


def sup_norm_error(model: GgmModel, samples: SampleSet) -> float:
    return float(np.max(np.abs(empirical_covariance_matrix(samples) - model.covariance)))


def concentration_curve(model: GgmModel, counts: Sequence[int], trials: int,
                        seed: int) -> List[Tuple[int, float]]:
    """
    Mean sup-norm error of the empirical covariance per sample count.

    Trial t at the k-th count uses the stream (seed, k, t).
    """
    counts = [int(c) for c in counts]
    if any(b < a for a, b in zip(counts, counts[1:])):
        raise ValueError(f"counts must be ascending, got {counts}")
    curve = []
    for k, count in enumerate(counts):
        errors = [sup_norm_error(model, draw(model, count, seed, (k, t))) for t in range(trials)]
        curve.append((count, float(np.mean(errors))))
        sampler_logger.info(f"N={count}: mean sup-norm error {curve[-1][1]:.5f} over {trials} trials")
    return curve


def save_samples(samples: SampleSet, path: str) -> None:
    """
    Text format: header 'n count seed' then one row per sample. Paths ending
    in .bin get three little-endian int64 header values and row-major
    little-endian float64 data.
    """
    if path.endswith(BINARY_SUFFIX):
        with open(path, 'wb') as f:
            f.write(np.asarray([samples.n, samples.count, samples.seed], dtype='<i8').tobytes())
            f.write(np.ascontiguousarray(samples.data, dtype='<f8').tobytes())
    else:
        np.savetxt(path, samples.data, fmt='%.17g',
                   header=f"{samples.n} {samples.count} {samples.seed}", comments='')
    sampler_logger.info(f"Wrote {samples.count} samples to {path}")


def load_samples(path: str) -> SampleSet:
    if path.endswith(BINARY_SUFFIX):
        raw = np.fromfile(path, dtype=np.uint8)
        n, count, seed = (int(v) for v in np.frombuffer(raw[:24].tobytes(), dtype='<i8'))
        data = np.frombuffer(raw[24:].tobytes(), dtype='<f8').reshape(count, n)
        return SampleSet(n, count, data.astype(float), seed)
    with open(path, 'r') as f:
        header = f.readline().split()
    if len(header) != 3:
        raise DimensionError(f"sample file header must be 'n count seed', got {header}")
    n, count, seed = (int(v) for v in header)
    data = np.loadtxt(path, skiprows=1, ndmin=2)
    if data.size == 0:
        data = data.reshape(0, n)
    return SampleSet(n, count, data.reshape(count, n), seed)
