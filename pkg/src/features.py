"""
Burst features for faultsynth
-----------------------------
Ten statistical descriptors per burst: mean, standard deviation, skewness,
crest factor and kurtosis of the samples (time domain) and the same
quantities of the one-sided magnitude spectrum, with Shannon entropy in
place of the spectral kurtosis. Standard moment definitions are used
throughout: kurtosis is the central fourth moment over sigma**4 (3 for a
Gaussian) and the standard deviation uses n - 1.
"""

from dataclasses import astuple, dataclass

import numpy as np

from src.errors import DataError
from src.spectral import fft_magnitude

FEATURE_NAMES = ("t_mean", "t_std", "t_skewness", "t_crest_factor", "t_kurtosis",
                 "f_mean", "f_std", "f_skewness", "f_crest_factor", "f_entropy")


@dataclass(frozen=True)
class FeatureVector:
    t_mean: float
    t_std: float
    t_skewness: float
    t_crest_factor: float
    t_kurtosis: float
    f_mean: float
    f_std: float
    f_skewness: float
    f_crest_factor: float
    f_entropy: float

    def as_array(self):
        return np.array(astuple(self), dtype=np.float64)

    @classmethod
    def from_array(cls, values):
        return cls(*(float(v) for v in values))


def _moments(x):
    """mean, sample std, skewness, crest factor, kurtosis along the last axis."""
    mean = x.mean(axis=-1)
    centered = x - mean[..., None]
    m2 = np.mean(centered ** 2, axis=-1)
    m3 = np.mean(centered ** 3, axis=-1)
    m4 = np.mean(centered ** 4, axis=-1)
    n = x.shape[-1]
    std = np.sqrt(m2 * n / (n - 1))
    skewness = m3 / m2 ** 1.5
    kurtosis = m4 / m2 ** 2
    rms = np.sqrt(np.mean(x ** 2, axis=-1))
    crest = np.max(np.abs(x), axis=-1) / rms
    return mean, std, skewness, crest, kurtosis


def spectral_entropy(spectrum):
    """Shannon entropy (nats) of the spectrum normalised to sum 1, DC bin excluded."""
    body = spectrum[..., 1:]
    total = body.sum(axis=-1, keepdims=True)
    p = np.divide(body, total, out=np.zeros_like(body), where=total > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


def feature_matrix(samples):
    """
    Features of a batch of bursts.

    Args:
        samples: array [B, L] (or [L] for a single burst)

    Returns:
        np.ndarray [B, 10] in FEATURE_NAMES order
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if x.shape[-1] < 2:
        raise DataError("features need at least two samples per burst")
    constant = np.ptp(x, axis=-1) == 0
    if constant.any():
        raise DataError(f"cannot extract features from a constant burst (row {int(np.argmax(constant))})")
    spectrum = fft_magnitude(x)
    t_mean, t_std, t_skew, t_crest, t_kurt = _moments(x)
    f_mean, f_std, f_skew, f_crest, _ = _moments(spectrum)
    return np.stack([t_mean, t_std, t_skew, t_crest, t_kurt,
                     f_mean, f_std, f_skew, f_crest, spectral_entropy(spectrum)], axis=-1)


def extract_features(burst):
    samples = burst.samples if hasattr(burst, "samples") else burst
    return FeatureVector.from_array(feature_matrix(samples)[0])


def extract_batch(bursts):
    """FeatureVectors for many bursts with one batched FFT."""
    if not bursts:
        return []
    matrix = feature_matrix(np.stack([b.samples for b in bursts]))
    return [FeatureVector.from_array(row) for row in matrix]


def zscore(matrix):
    """Standardise each column; constant columns are left at zero."""
    matrix = np.asarray(matrix, dtype=np.float64)
    std = matrix.std(axis=0)
    return (matrix - matrix.mean(axis=0)) / np.where(std > 0, std, 1.0)


def class_centroids(bursts):
    """Mean feature vector per class label."""
    matrix = feature_matrix(np.stack([b.samples for b in bursts]))
    labels = np.array([int(b.label) for b in bursts])
    return {int(label): matrix[labels == label].mean(axis=0) for label in np.unique(labels)}


def nearest_centroid(vectors, centroids, scale=None):
    """Label of the closest centroid for each row (optionally in per-feature scaled units)."""
    keys = sorted(centroids)
    table = np.stack([centroids[k] for k in keys])
    scale = np.ones(table.shape[1]) if scale is None else np.where(scale > 0, scale, 1.0)
    d = (((np.atleast_2d(vectors)[:, None, :] - table[None]) / scale) ** 2).sum(axis=-1)
    return np.array(keys)[np.argmin(d, axis=1)]
