"""Graded response model primitives.

Pure functions of item parameters and a latent-trait value: level
probabilities, Fisher information of items and item sets, and the
conditional standard deviation of a trait estimate. All operations accept
a scalar theta or an ndarray of thetas and are safe for concurrent use.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import expit

# Tail clamp for the information formula: keeps each term finite while
# preserving its true limit of zero in the extreme tails.
PROB_CLAMP = 1e-14


class NonInformativeSetError(ValueError):
    """An item set carries zero Fisher information at the requested trait value."""


@dataclass(frozen=True)
class ItemParams:
    """One graded item: discrimination ``a`` and ordered thresholds ``b``.

    ``b[m-1]`` is the trait value at which reaching level ``m`` or above has
    probability one half. A single threshold recovers the binary
    two-parameter logistic item; M thresholds give levels ``0..M``.
    """

    id: str
    a: float
    b: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        object.__setattr__(self, "a", float(self.a))
        if not self.id:
            raise ValueError("item id must be a nonempty string")
        if not np.isfinite(self.a) or self.a <= 0:
            raise ValueError(f"item {self.id!r}: discrimination must be finite and > 0, got {self.a}")
        if len(self.b) == 0:
            raise ValueError(f"item {self.id!r}: needs at least one threshold")
        if not all(np.isfinite(x) for x in self.b):
            raise ValueError(f"item {self.id!r}: thresholds must be finite")
        if any(hi <= lo for lo, hi in zip(self.b, self.b[1:])):
            raise ValueError(f"item {self.id!r}: thresholds must be strictly increasing, got {self.b}")

    @property
    def n_thresholds(self) -> int:
        return len(self.b)

    @property
    def max_level(self) -> int:
        """Highest response level (levels run 0..max_level)."""
        return len(self.b)


@dataclass(frozen=True)
class ItemBank:
    """An ordered pool of items sharing one latent-trait scale."""

    items: tuple[ItemParams, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "items", tuple(self.items))
        if len(self.items) == 0:
            raise ValueError("item bank must be nonempty")
        seen: set[str] = set()
        for it in self.items:
            if it.id in seen:
                raise ValueError(f"duplicate item id {it.id!r} in bank")
            seen.add(it.id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[ItemParams]:
        return iter(self.items)

    def __getitem__(self, idx: int) -> ItemParams:
        return self.items[idx]

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(it.id for it in self.items)

    def index_of(self, item_id: str) -> int:
        try:
            return self.ids.index(item_id)
        except ValueError:
            raise KeyError(f"unknown item id {item_id!r}") from None

    def get(self, item_id: str) -> ItemParams:
        return self.items[self.index_of(item_id)]

    def subset(self, item_ids: Sequence[str]) -> tuple[ItemParams, ...]:
        """Items for ``item_ids``, returned in bank order."""
        idx = sorted(self.index_of(i) for i in item_ids)
        return tuple(self.items[i] for i in idx)


def _theta_array(theta) -> tuple[np.ndarray, bool]:
    th = np.asarray(theta, dtype=float)
    return th, th.ndim == 0


def prob_gte(item: ItemParams, m: int, theta):
    """P(response >= m | theta) for m in 0..M+1.

    m = 0 is reached with certainty and m = M+1 never; in between the
    probability is logistic in a * (theta - b[m]).
    """
    M = item.n_thresholds
    if not 0 <= m <= M + 1:
        raise ValueError(f"level index m={m} out of range 0..{M + 1} for item {item.id!r}")
    th, scalar = _theta_array(theta)
    if m == 0:
        out = np.ones_like(th)
    elif m == M + 1:
        out = np.zeros_like(th)
    else:
        out = expit(item.a * (th - item.b[m - 1]))
    return float(out) if scalar else out


def prob_eq(item: ItemParams, m: int, theta):
    """P(response == m | theta): reach level m but not level m+1."""
    M = item.n_thresholds
    if not 0 <= m <= M:
        raise ValueError(f"response level m={m} out of range 0..{M} for item {item.id!r}")
    th, scalar = _theta_array(theta)
    out = np.maximum(prob_gte(item, m, th) - prob_gte(item, m + 1, th), 0.0)
    return float(out) if scalar else out


def _item_information_vec(item: ItemParams, th: np.ndarray) -> np.ndarray:
    """Fisher information over an ndarray of trait values."""
    M = item.n_thresholds
    P = np.empty((M + 2,) + th.shape, dtype=float)
    P[0] = 1.0
    P[M + 1] = 0.0
    for m in range(1, M + 1):
        P[m] = expit(item.a * (th - item.b[m - 1]))
    P[1 : M + 1] = np.clip(P[1 : M + 1], PROB_CLAMP, 1.0 - PROB_CLAMP)
    w = item.a * P * (1.0 - P)
    num = (w[:-1] - w[1:]) ** 2
    den = np.maximum(P[:-1] - P[1:], PROB_CLAMP)
    return np.sum(num / den, axis=0)


def item_information(item: ItemParams, theta):
    """Fisher information an item carries about theta.

    Sum over level boundaries m = 1..M+1 of
    (a*P_{m-1}(1-P_{m-1}) - a*P_m(1-P_m))^2 / (P_{m-1} - P_m),
    with P_m = prob_gte(item, m, theta). Nonnegative and finite everywhere.
    """
    th, scalar = _theta_array(theta)
    out = _item_information_vec(item, th)
    return float(out) if scalar else out


def set_information(items: Sequence[ItemParams], theta):
    """Fisher information of an item set: the sum over its items."""
    th, scalar = _theta_array(theta)
    if len(items) == 0:
        return 0.0 if scalar else np.zeros_like(th)
    rows = np.stack([_item_information_vec(it, np.atleast_1d(th)) for it in items])
    out = np.sum(rows, axis=0)
    return float(out[0]) if scalar else out.reshape(th.shape)


def conditional_sd(items: Sequence[ItemParams], theta):
    """Standard deviation of a trait estimate from the set, at a known theta.

    The square root of the inverse of the set information. Raises
    NonInformativeSetError where the set information is zero rather than
    returning a silent infinity.
    """
    th, scalar = _theta_array(theta)
    info = set_information(items, th)
    info_arr = np.atleast_1d(np.asarray(info, dtype=float))
    if np.any(info_arr <= 0.0):
        bad = np.atleast_1d(th)[info_arr <= 0.0]
        raise NonInformativeSetError(
            f"non-informative item set at theta={bad[0]:g}"
            + (f" (and {bad.size - 1} more values)" if bad.size > 1 else "")
        )
    out = info_arr**-0.5
    return float(out[0]) if scalar else out.reshape(th.shape)
