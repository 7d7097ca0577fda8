"""Sequential set-MAP inference and random-finite-set sampling.

Inference proceeds in two stages: the mode m* of the predicted cardinality
distribution is computed first, then the m* elements with the highest
probabilities are selected (the joint density of i.i.d. elements is
maximised element-wise).  The sampler draws a cardinality from an explicit
pmf and then that many i.i.d. element values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .cardloss import AlphaBeta
from .errors import NumericError
from .numerics import NegBinParams, log_gamma, nb_mode

__all__ = [
    "ScoredElements",
    "PredictedSet",
    "CardinalityPMF",
    "map_set",
    "sequential_map",
    "sample_rfs",
    "vector_set_factor",
]


@dataclass(frozen=True)
class ScoredElements:
    """Per-element probabilities supplied by an external scorer."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        for p in probs:
            if not math.isfinite(p) or not 0.0 <= p <= 1.0:
                raise NumericError(f"element probability out of [0,1]: {p!r}")
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class PredictedSet:
    """Strictly increasing element indices plus their count."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(int(i) for i in self.indices)
        if any(i < 0 for i in idx) or any(b <= a for a, b in zip(idx, idx[1:])):
            raise NumericError(f"indices must be strictly increasing and >= 0: {idx!r}")
        object.__setattr__(self, "indices", idx)

    @property
    def cardinality(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class CardinalityPMF:
    """Discrete law over set sizes m = 0..M_max; must sum to 1 within 1e-9."""

    pmf: tuple[float, ...]

    def __post_init__(self) -> None:
        pmf = tuple(float(p) for p in self.pmf)
        if not pmf:
            raise NumericError("pmf must have at least one entry")
        if any(p < 0.0 or not math.isfinite(p) for p in pmf):
            raise NumericError("pmf entries must be finite and >= 0")
        if abs(sum(pmf) - 1.0) > 1e-9:
            raise NumericError(f"pmf must sum to 1 within 1e-9, got {sum(pmf)!r}")
        object.__setattr__(self, "pmf", pmf)


def map_set(scores: ScoredElements, m_star: int) -> PredictedSet:
    """Indices of the m_star highest probabilities; ties go to lower index."""
    if m_star < 0 or m_star > len(scores):
        raise NumericError(
            f"m_star must lie in [0, {len(scores)}], got {m_star!r}"
        )
    if m_star == 0:
        return PredictedSet(indices=())
    p = np.asarray(scores.probs)
    # Stable sort on negated probabilities keeps lower indices first on ties.
    order = np.argsort(-p, kind="stable")
    chosen = sorted(int(i) for i in order[:m_star])
    return PredictedSet(indices=tuple(chosen))


def sequential_map(scores: ScoredElements, ab: AlphaBeta) -> PredictedSet:
    """Cardinality mode first, then the top-m* elements.

    The NB mode is clamped to the number of available elements.
    """
    m_star = nb_mode(NegBinParams(a=ab.alpha, b=1.0 / (1.0 + ab.beta)))
    return map_set(scores, min(m_star, len(scores)))


def sample_rfs(
    card: CardinalityPMF,
    element_sampler: Callable[[np.random.Generator], object],
    rng_seed: int,
) -> list:
    """Draw one set: m ~ card, then m i.i.d. element values.

    Returns the draws as a list (a multiset): duplicates produced by
    discrete element laws are preserved; deduplication is caller policy.
    """
    rng = np.random.default_rng(rng_seed)
    return sample_rfs_with(card, element_sampler, rng)


def sample_rfs_with(
    card: CardinalityPMF,
    element_sampler: Callable[[np.random.Generator], object],
    rng: np.random.Generator,
) -> list:
    """Like ``sample_rfs`` but drawing from a caller-owned generator."""
    pmf = np.asarray(card.pmf)
    m = int(rng.choice(len(pmf), p=pmf / pmf.sum()))
    return [element_sampler(rng) for _ in range(m)]


def vector_set_factor(m: int) -> float:
    """ln m!, the permutation factor relating vector and set densities."""
    if m < 0 or int(m) != m:
        raise NumericError(f"m must be a non-negative integer, got {m!r}")
    return log_gamma(float(m) + 1.0)


def set_log_density(card: CardinalityPMF, probs: Sequence[float]) -> float:
    """ln of the i.i.d. set density: ln pmf(m) + ln m! + sum of element logs.

    The unit-of-hypervolume factor is deliberately omitted; it cancels in
    all mode computations and is unknown in practice.
    """
    m = len(probs)
    if m >= len(card.pmf):
        raise NumericError(f"cardinality {m} outside pmf support")
    if card.pmf[m] <= 0.0:
        return -math.inf
    total = math.log(card.pmf[m]) + vector_set_factor(m)
    for p in probs:
        if p <= 0.0:
            return -math.inf
        total += math.log(p)
    return total
