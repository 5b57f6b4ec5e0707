"""Population expectations of information and estimate uncertainty.

Integrates the per-theta quantities from :mod:`irtselect.grm` against a
latent-trait population law: Gauss-Hermite quadrature for normal
populations, plain weighted sums for empirical samples and explicit grids.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .grm import ItemParams, NonInformativeSetError, _item_information_vec, set_information

DEFAULT_NODES = 61

_WEIGHT_SUM_TOL = 1e-10


@dataclass(frozen=True)
class Normal:
    """Normal population of latent-trait scores."""

    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self) -> None:
        if not (np.isfinite(self.mean) and np.isfinite(self.sd)):
            raise ValueError("normal parameters must be finite")
        if self.sd <= 0:
            raise ValueError(f"normal sd must be > 0, got {self.sd}")


@dataclass(frozen=True)
class EmpiricalSample:
    """Population given by a sample of trait values, e.g. fitted severity scores."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.values) == 0:
            raise ValueError("empirical sample must be nonempty")
        if not all(np.isfinite(v) for v in self.values):
            raise ValueError("empirical sample values must be finite")


@dataclass(frozen=True)
class ExplicitGrid:
    """Population given directly as weighted support points."""

    nodes: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(float(v) for v in self.nodes))
        object.__setattr__(self, "weights", tuple(float(v) for v in self.weights))
        if len(self.nodes) == 0 or len(self.nodes) != len(self.weights):
            raise ValueError("grid nodes and weights must be nonempty and equal length")
        if any(w < 0 for w in self.weights):
            raise ValueError("grid weights must be nonnegative")
        if abs(sum(self.weights) - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"grid weights must sum to 1, got {sum(self.weights)!r}")


LatentDistribution = Union[Normal, EmpiricalSample, ExplicitGrid]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Discretization of a latent distribution: nodes and probability weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if self.nodes.ndim != 1 or self.nodes.shape != self.weights.shape:
            raise ValueError("nodes and weights must be 1-d arrays of equal length")
        if np.any(self.weights < 0):
            raise ValueError("quadrature weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError("quadrature weights must sum to 1")

    def __len__(self) -> int:
        return len(self.nodes)


def make_quadrature(dist: LatentDistribution, n_nodes: int = DEFAULT_NODES) -> QuadratureRule:
    """Build the integration rule for a latent distribution.

    Normal populations get a Gauss-Hermite rule rescaled to (mean, sd);
    empirical samples weight each point 1/n; explicit grids pass through
    unchanged (n_nodes is ignored for those two).
    """
    if n_nodes < 3:
        raise ValueError(f"n_nodes must be >= 3, got {n_nodes}")
    if isinstance(dist, Normal):
        x, w = np.polynomial.hermite_e.hermegauss(n_nodes)
        return QuadratureRule(dist.mean + dist.sd * x, w / w.sum())
    if isinstance(dist, EmpiricalSample):
        n = len(dist.values)
        return QuadratureRule(np.array(dist.values), np.full(n, 1.0 / n))
    if isinstance(dist, ExplicitGrid):
        return QuadratureRule(np.array(dist.nodes), np.array(dist.weights))
    raise TypeError(f"unsupported latent distribution: {type(dist).__name__}")


def _rule_for(dist, n_nodes: int) -> QuadratureRule:
    if isinstance(dist, QuadratureRule):
        return dist
    return make_quadrature(dist, n_nodes)


def expected_item_information(item: ItemParams, dist, n_nodes: int = DEFAULT_NODES) -> float:
    """Fisher information of one item averaged over the population.

    ``dist`` may also be a prebuilt QuadratureRule to reuse across calls.
    """
    rule = _rule_for(dist, n_nodes)
    return float(np.sum(rule.weights * _item_information_vec(item, rule.nodes)))


def expected_set_information(items: Sequence[ItemParams], dist, n_nodes: int = DEFAULT_NODES) -> float:
    """Population-expected information of a set: additive over its items."""
    rule = _rule_for(dist, n_nodes)
    return float(sum(expected_item_information(it, rule) for it in items))


def expected_sd(items: Sequence[ItemParams], dist, n_nodes: int = DEFAULT_NODES) -> float:
    """Expected standard deviation of a trait estimate for a random respondent.

    Averages the conditional SD (information^(-1/2)) over the population
    nodes. Raises NonInformativeSetError, naming the node, if the set has
    zero information anywhere the population puts weight.
    """
    rule = _rule_for(dist, n_nodes)
    info = set_information(items, rule.nodes)
    info = np.atleast_1d(np.asarray(info, dtype=float))
    if np.any(info <= 0.0):
        k = int(np.argmax(info <= 0.0))
        raise NonInformativeSetError(
            f"non-informative set at quadrature node {k} (theta={rule.nodes[k]:g})"
        )
    return float(np.sum(rule.weights * info**-0.5))
