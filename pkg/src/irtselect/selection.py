"""Selection of K-item subsets from a bank.

Four methods: ranking by expected information, coordinate-descent local
search on the expected standard deviation, per-trait adaptive choice (the
best-case limit), and a random-order baseline. A brute-force enumerator
serves as the exact oracle where the subset count is small enough.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .grm import (
    ItemBank,
    _item_information_vec,
    conditional_sd,
    item_information,
    set_information,
)
from .population import (
    DEFAULT_NODES,
    QuadratureRule,
    _rule_for,
    expected_item_information,
    expected_set_information,
    expected_sd,
)

BRUTE_FORCE_CAP = 2_000_000


class SelectionMethod(enum.Enum):
    RANK_BY_EXPECTED_INFO = "rank"
    COORDINATE_DESCENT = "cd"
    ADAPTIVE = "adaptive"
    RANDOM = "random"
    BRUTE_FORCE = "brute-force"


@dataclass(frozen=True)
class SwapRecord:
    """One accepted exchange during coordinate descent."""

    sweep: int
    position: int
    item_out: str
    item_in: str
    sd_before: float
    sd_after: float


@dataclass
class SelectionTrace:
    """How a subset was found: initialization, seed, and accepted swaps."""

    init: str
    seed: int | None = None
    sweeps: int = 0
    swaps: tuple[SwapRecord, ...] = ()


@dataclass
class SubsetResult:
    """A selected subset with its criterion values.

    ``item_ids`` are reported in bank order. For population-level methods
    expected_info/expected_sd are population expectations; for
    select_adaptive_at they are conditional on the requested theta
    (equivalently, expectations under a point mass there).
    """

    item_ids: tuple[str, ...]
    expected_info: float
    expected_sd: float
    method: SelectionMethod
    trace: SelectionTrace


class _EvalTable:
    """Precomputed per-item information at the quadrature nodes.

    Row sums over a subset reproduce population.expected_sd bit for bit
    when the rows are given in bank order.
    """

    def __init__(self, bank: ItemBank, rule: QuadratureRule):
        self.bank = bank
        self.rule = rule
        self.info = np.stack([_item_information_vec(it, rule.nodes) for it in bank])

    def esd(self, rows: Sequence[int]) -> float:
        total = self.info[list(rows)].sum(axis=0)
        return float(np.sum(self.rule.weights * total**-0.5))

    def esd_sorted(self, rows: Sequence[int]) -> float:
        return self.esd(sorted(rows))


def _check_k(bank: ItemBank, k: int) -> None:
    if not 1 <= k <= len(bank):
        raise ValueError(f"K={k} out of range 1..{len(bank)}")


def _result(
    bank: ItemBank,
    rows: Sequence[int],
    rule: QuadratureRule,
    method: SelectionMethod,
    trace: SelectionTrace,
) -> SubsetResult:
    items = [bank[i] for i in sorted(rows)]
    return SubsetResult(
        item_ids=tuple(it.id for it in items),
        expected_info=expected_set_information(items, rule),
        expected_sd=expected_sd(items, rule),
        method=method,
        trace=trace,
    )


def rank_order(bank: ItemBank, dist, n_nodes: int = DEFAULT_NODES) -> list[int]:
    """Bank indices ordered by decreasing expected information, ties to the
    lower bank index. Prefixes of this order are the rank-selected sets."""
    rule = _rule_for(dist, n_nodes)
    e = np.array([expected_item_information(it, rule) for it in bank])
    return list(np.argsort(-e, kind="stable"))


def select_by_rank(bank: ItemBank, dist, k: int, n_nodes: int = DEFAULT_NODES) -> SubsetResult:
    """The K items with the largest expected information (nested across K)."""
    _check_k(bank, k)
    rule = _rule_for(dist, n_nodes)
    rows = rank_order(bank, rule)[:k]
    return _result(bank, rows, rule, SelectionMethod.RANK_BY_EXPECTED_INFO, SelectionTrace(init="rank"))


def _cd_core(table: _EvalTable, vec: list[int], trace: SelectionTrace) -> list[int]:
    """Algorithm: sweep positions, exchanging each for the best unused item,
    until a full sweep changes nothing. Only strict improvements are kept."""
    bank_size = table.info.shape[0]
    members = set(vec)
    swaps: list[SwapRecord] = list(trace.swaps)
    sweeps = 0
    changed = True
    while changed:
        changed = False
        sweeps += 1
        for k_pos in range(len(vec)):
            best_sd = table.esd_sorted(vec)
            sd_before = best_sd
            best_item = vec[k_pos]
            current = vec[k_pos]
            for n in range(bank_size):
                if n in members:
                    continue
                vec[k_pos] = n
                this_sd = table.esd_sorted(vec)
                if this_sd < best_sd:
                    best_sd = this_sd
                    best_item = n
            vec[k_pos] = best_item
            if best_item != current:
                members.discard(current)
                members.add(best_item)
                changed = True
                swaps.append(
                    SwapRecord(
                        sweep=sweeps,
                        position=k_pos,
                        item_out=table.bank[current].id,
                        item_in=table.bank[best_item].id,
                        sd_before=sd_before,
                        sd_after=best_sd,
                    )
                )
    trace.sweeps = sweeps
    trace.swaps = tuple(swaps)
    return vec


def coordinate_descent(
    bank: ItemBank,
    dist,
    k: int,
    init: str | Sequence[str] = "rank",
    seed: int | None = None,
    n_nodes: int = DEFAULT_NODES,
) -> SubsetResult:
    """Coordinate-descent local search minimizing the expected SD.

    ``init`` is "rank" (default; guarantees a result no worse than the
    rank-selected set), "random" (requires ``seed``), or an explicit list
    of K distinct item ids. The result is swap-optimal: no single exchange
    of one member for an unused item lowers the expected SD.
    """
    _check_k(bank, k)
    rule = _rule_for(dist, n_nodes)
    table = _EvalTable(bank, rule)

    if isinstance(init, str) and init == "rank":
        vec = rank_order(bank, rule)[:k]
        trace = SelectionTrace(init="rank", seed=seed)
    elif isinstance(init, str) and init == "random":
        if seed is None:
            raise ValueError("init='random' requires an explicit seed")
        rng = np.random.default_rng(seed)
        vec = list(rng.choice(len(bank), size=k, replace=False))
        trace = SelectionTrace(init="random", seed=seed)
    elif isinstance(init, str):
        raise ValueError(f"unknown init {init!r}: expected 'rank', 'random', or explicit ids")
    else:
        ids = list(init)
        if len(ids) != k:
            raise ValueError(f"explicit init has {len(ids)} ids but K={k}")
        if len(set(ids)) != len(ids):
            raise ValueError("explicit init contains duplicate item ids")
        vec = [bank.index_of(i) for i in ids]
        trace = SelectionTrace(init="explicit", seed=seed)

    vec = _cd_core(table, [int(i) for i in vec], trace)
    return _result(bank, vec, rule, SelectionMethod.COORDINATE_DESCENT, trace)


def select_adaptive_at(bank: ItemBank, theta: float, k: int) -> SubsetResult:
    """The K items most informative at a known trait value.

    Set information is additive at fixed theta, so the top-K items form
    the theta-optimal subset (they also minimize the conditional SD).
    """
    _check_k(bank, k)
    infos = np.array([item_information(it, theta) for it in bank])
    rows = sorted(np.argsort(-infos, kind="stable")[:k])
    items = [bank[i] for i in rows]
    return SubsetResult(
        item_ids=tuple(it.id for it in items),
        expected_info=float(set_information(items, theta)),
        expected_sd=float(conditional_sd(items, theta)),
        method=SelectionMethod.ADAPTIVE,
        trace=SelectionTrace(init=f"theta={theta:g}"),
    )


def adaptive_expected_sd(bank: ItemBank, dist, k: int, n_nodes: int = DEFAULT_NODES) -> float:
    """Best-case adaptive criterion: at each population node pick the top-K
    items for that trait value, then average the conditional SDs.

    Assumes the tailored set could be chosen from the true trait value, so
    this is the limit of what adaptive administration can achieve.
    """
    _check_k(bank, k)
    rule = _rule_for(dist, n_nodes)
    table = _EvalTable(bank, rule)
    sds = np.empty(len(rule))
    for j in range(len(rule)):
        rows = sorted(np.argsort(-table.info[:, j], kind="stable")[:k])
        sds[j] = table.info[rows, j].sum() ** -0.5
    return float(np.sum(rule.weights * sds))


@dataclass
class RandomBaselineCurve:
    """Average expected SD of random cumulative item orders, per subset size."""

    ks: np.ndarray
    mean_sd: np.ndarray
    std_sd: np.ndarray
    reps: int
    seed: int


def random_baseline(
    bank: ItemBank, dist, reps: int = 200, seed: int = 0, n_nodes: int = DEFAULT_NODES
) -> RandomBaselineCurve:
    """Add items in random order; evaluate each cumulative prefix set.

    Returns the per-K average over ``reps`` repetitions together with the
    across-repetition dispersion (population std). Deterministic given seed.
    """
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    rule = _rule_for(dist, n_nodes)
    table = _EvalTable(bank, rule)
    n = len(bank)
    rng = np.random.default_rng(seed)
    curves = np.empty((reps, n))
    for r in range(reps):
        perm = rng.permutation(n)
        for k in range(1, n + 1):
            curves[r, k - 1] = table.esd_sorted(perm[:k])
    return RandomBaselineCurve(
        ks=np.arange(1, n + 1),
        mean_sd=curves.mean(axis=0),
        std_sd=curves.std(axis=0),
        reps=reps,
        seed=seed,
    )


def brute_force_best(
    bank: ItemBank, dist, k: int, cap: int = BRUTE_FORCE_CAP, n_nodes: int = DEFAULT_NODES
) -> SubsetResult:
    """Exact minimizer of the expected SD by exhaustive enumeration.

    Refuses banks where C(|bank|, K) exceeds ``cap``. Ties resolve to the
    lexicographically smallest id tuple.
    """
    _check_k(bank, k)
    n_subsets = math.comb(len(bank), k)
    if n_subsets > cap:
        raise ValueError(f"brute force cap exceeded: C({len(bank)},{k})={n_subsets} > {cap}")
    rule = _rule_for(dist, n_nodes)
    table = _EvalTable(bank, rule)
    best_rows: tuple[int, ...] | None = None
    best_sd = np.inf
    best_ids: tuple[str, ...] = ()
    for rows in combinations(range(len(bank)), k):
        sd = table.esd(rows)
        if sd < best_sd:
            best_sd, best_rows = sd, rows
            best_ids = tuple(bank[i].id for i in rows)
        elif sd == best_sd and best_rows is not None:
            ids = tuple(bank[i].id for i in rows)
            if ids < best_ids:
                best_rows, best_ids = rows, ids
    assert best_rows is not None
    return _result(
        bank, best_rows, rule, SelectionMethod.BRUTE_FORCE, SelectionTrace(init="exhaustive")
    )


@dataclass
class CurveTable:
    """Expected SD by subset size and method, with percent decrease vs random."""

    ks: np.ndarray
    curves: dict[str, np.ndarray]
    random_mean: np.ndarray
    random_std: np.ndarray
    percent_vs_random: dict[str, np.ndarray]
    reps: int
    seed: int
    n_nodes: int = DEFAULT_NODES


def comparison_curves(
    bank: ItemBank,
    dist,
    methods: Sequence[SelectionMethod | str],
    reps: int = 200,
    seed: int = 0,
    n_nodes: int = DEFAULT_NODES,
) -> CurveTable:
    """Method-comparison curves over K = 1..|bank|.

    The random baseline is always evaluated (it anchors the percent-decrease
    columns); its own curve appears among ``curves`` only when requested.
    Coordinate descent is rank-initialized here.
    """
    if len(methods) == 0:
        raise ValueError("methods must be nonempty")
    wanted = [SelectionMethod(m) if not isinstance(m, SelectionMethod) else m for m in methods]
    if SelectionMethod.BRUTE_FORCE in wanted:
        raise ValueError("brute force is an oracle, not a comparison method")
    rule = _rule_for(dist, n_nodes)
    table = _EvalTable(bank, rule)
    n = len(bank)
    ks = np.arange(1, n + 1)

    baseline = random_baseline(bank, rule, reps=reps, seed=seed)
    curves: dict[str, np.ndarray] = {}

    if SelectionMethod.RANK_BY_EXPECTED_INFO in wanted:
        order = rank_order(bank, rule)
        curves["rank"] = np.array([table.esd_sorted(order[:k]) for k in ks])
    if SelectionMethod.COORDINATE_DESCENT in wanted:
        order = rank_order(bank, rule)
        vals = np.empty(n)
        for k in ks:
            vec = _cd_core(table, list(order[:k]), SelectionTrace(init="rank"))
            vals[k - 1] = table.esd_sorted(vec)
        curves["cd"] = vals
    if SelectionMethod.ADAPTIVE in wanted:
        curves["adaptive"] = np.array([adaptive_expected_sd(bank, rule, int(k)) for k in ks])
    if SelectionMethod.RANDOM in wanted:
        curves["random"] = baseline.mean_sd

    percent = {
        name: 100.0 * (baseline.mean_sd - vals) / baseline.mean_sd
        for name, vals in curves.items()
        if name != "random"
    }
    return CurveTable(
        ks=ks,
        curves=curves,
        random_mean=baseline.mean_sd,
        random_std=baseline.std_sd,
        percent_vs_random=percent,
        reps=reps,
        seed=seed,
        n_nodes=n_nodes,
    )
