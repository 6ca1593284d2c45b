"""
Exact t-SNE for faultsynth
--------------------------
Embeds standardised feature vectors in two dimensions. Every point gets a
Gaussian bandwidth found by bisection so its conditional distribution has
the requested perplexity; the embedding is then optimised by gradient
descent with per-coordinate gains, momentum and early exaggeration.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from src.errors import ConfigurationError, DataError
from src.features import FeatureVector, zscore

logger = logging.getLogger(__name__)

MACHINE_EPSILON = np.finfo(np.float64).eps
PERPLEXITY_TOLERANCE = 1e-5
BISECTION_STEPS = 200
MIN_GAIN = 0.01


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    n_iter: int = 1000
    learning_rate: float = 200.0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_switch: int = 250
    seed: int = 0

    def __post_init__(self):
        if self.n_iter < 250:
            raise ConfigurationError(f"n_iter must be >= 250, got {self.n_iter}")
        if self.perplexity <= 0:
            raise ConfigurationError("perplexity must be positive")

    @classmethod
    def from_run_config(cls, config):
        tsne = config.section("tsne")
        return cls(tsne["perplexity"], tsne["n_iter"], tsne["learning_rate"], tsne["early_exaggeration"],
                   tsne["exaggeration_iters"], seed=config["run.seed"])


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_trace: list = field(default_factory=list)
    perplexities: np.ndarray = None


def max_perplexity(n_points):
    return (n_points - 1) / 3.0


def squared_distances(x):
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * x @ x.T
    np.fill_diagonal(d, 0.0)
    return np.maximum(d, 0.0)


def _row_distribution(distances, beta):
    p = np.exp(-distances * beta)
    total = max(p.sum(), MACHINE_EPSILON)
    p /= total
    entropy = np.log(total) + beta * np.sum(distances * p)
    return p, entropy


def conditional_probabilities(distances, perplexity):
    """
    Row-wise conditional P(j | i) matching `perplexity`.

    Returns:
        (P [n, n] with zero diagonal, achieved perplexity per row)
    """
    n = distances.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    achieved = np.zeros(n)
    for i in range(n):
        others = np.delete(distances[i], i)
        beta, lo, hi = 1.0, -np.inf, np.inf
        for _ in range(BISECTION_STEPS):
            p, entropy = _row_distribution(others, beta)
            diff = entropy - target
            if abs(diff) <= PERPLEXITY_TOLERANCE:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == -np.inf else (beta + lo) / 2.0
        P[i, np.arange(n) != i] = p
        achieved[i] = np.exp(entropy)
    logger.debug("mean sigma %.4f", float(np.mean(np.sqrt(1.0 / np.maximum(achieved, 1e-12)))))
    return P, achieved


def joint_probabilities(distances, perplexity):
    conditional, achieved = conditional_probabilities(distances, perplexity)
    P = conditional + conditional.T
    P = np.maximum(P / max(P.sum(), MACHINE_EPSILON), MACHINE_EPSILON)
    np.fill_diagonal(P, 0.0)
    return P, achieved


def kl_and_gradient(P, Y):
    """KL(P || Q) of the Student-t embedding similarities and its gradient in Y."""
    num = 1.0 / (1.0 + squared_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), MACHINE_EPSILON)
    mask = ~np.eye(len(P), dtype=bool)
    kl = float(np.sum(P[mask] * np.log(np.maximum(P[mask], MACHINE_EPSILON) / Q[mask])))
    PQ = (P - Q) * num
    np.fill_diagonal(PQ, 0.0)
    grad = 4.0 * (PQ.sum(axis=1)[:, None] * Y - PQ @ Y)
    return kl, grad


def _as_matrix(features):
    if len(features) and isinstance(features[0], FeatureVector):
        return np.stack([f.as_array() for f in features])
    return np.asarray(features, dtype=np.float64)


def tsne(features, cfg=None):
    """
    Two-dimensional exact t-SNE embedding.

    Args:
        features: list of FeatureVector or an [n, d] array
        cfg: TsneConfig

    Returns:
        TsneResult with the [n, 2] embedding, per-iteration KL and the
        perplexity each point's bandwidth achieved
    """
    cfg = cfg or TsneConfig()
    x = _as_matrix(features)
    n = x.shape[0]
    if cfg.perplexity >= max_perplexity(n):
        suggestion = max(1.0, np.floor(max_perplexity(n) - 1.0))
        raise DataError(f"perplexity {cfg.perplexity} too large for {n} points; "
                        f"try --perplexity {suggestion:g} or fewer")
    x = zscore(x)
    distances = squared_distances(x)
    if distances.max() <= 0.0:
        raise DataError("all feature vectors are identical; nothing to embed")

    P, achieved = joint_probabilities(distances, cfg.perplexity)
    rng = np.random.default_rng(cfg.seed)
    Y = 1e-4 * rng.standard_normal((n, 2))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = []
    for it in range(cfg.n_iter):
        exaggeration = cfg.early_exaggeration if it < cfg.exaggeration_iters else 1.0
        momentum = 0.5 if it < cfg.momentum_switch else 0.8
        kl, grad = kl_and_gradient(P * exaggeration, Y)
        trace.append(kl)
        increase = update * grad < 0.0
        gains = np.where(increase, gains + 0.2, gains * 0.8)
        np.clip(gains, MIN_GAIN, np.inf, out=gains)
        update = momentum * update - cfg.learning_rate * gains * grad
        Y = Y + update
        if (it + 1) % 250 == 0:
            logger.info("t-SNE iteration %d: KL %.4f", it + 1, kl)
    return TsneResult(Y, trace, achieved)
