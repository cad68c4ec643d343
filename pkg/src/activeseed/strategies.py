"""Query-selection strategies for pool-based active learning.

Four strategies: density-based initialization (used for the first round of
every run), uniform random sampling, uncertainty sampling by distance to
the decision boundary, and the four-criteria strategy that blends distance,
density, class-distribution coverage, and batch diversity with
self-adapting weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SampleBlock
from .mixture import MixtureModel, log_density, responsibilities

__all__ = [
    "FourDsWeights",
    "density_init",
    "select_random",
    "select_us",
    "score_4ds_criteria",
    "select_4ds",
    "adapt_4ds_weights",
]


def density_init(
    m: MixtureModel, pool: SampleBlock, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw `count` distinct pool ids, one decile-ranked pick per component.

    Components are visited in random order without repetition until all have
    been seen, then the visited set resets. For the drawn component r the
    pool is ranked by p(x | r) and a sample is picked uniformly from the top
    10% (ceil, at least 1). A pick that is already selected is redrawn
    within the decile up to 10 times, then replaced by the highest-ranked
    unselected sample.
    """
    n = len(pool)
    if count > n:
        raise ValueError(f"cannot select {count} samples from a pool of {n}")
    decile = max(1, int(np.ceil(0.1 * n)))
    # rank once per component: position 0 = highest p(x | r)
    order = {}
    selected: list[int] = []
    chosen = np.zeros(n, dtype=bool)
    visited: set[int] = set()
    while len(selected) < count:
        if len(visited) == m.n_components:
            visited.clear()
        r = int(rng.integers(m.n_components))
        if r in visited:
            continue
        visited.add(r)
        if r not in order:
            scores = m.log_component_density(pool.cont, pool.cat)[:, r]
            order[r] = np.argsort(-scores, kind="stable")
        ranking = order[r]
        pick = None
        for _ in range(10):
            candidate = int(ranking[rng.integers(decile)])
            if not chosen[candidate]:
                pick = candidate
                break
        if pick is None:
            unselected = ranking[~chosen[ranking]]
            pick = int(unselected[0])
        chosen[pick] = True
        selected.append(int(pool.ids[pick]))
    return np.asarray(selected, dtype=np.int64)


def select_random(
    pool_ids: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """k distinct ids drawn uniformly without replacement."""
    pool_ids = np.asarray(pool_ids, dtype=np.int64)
    if k > len(pool_ids):
        raise ValueError("k exceeds the pool size")
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(pool_ids, size=k, replace=False)


def select_us(distances: np.ndarray, pool_ids: np.ndarray, k: int) -> np.ndarray:
    """The k ids nearest the decision boundary, ascending; ties by id."""
    pool_ids = np.asarray(pool_ids, dtype=np.int64)
    if k > len(pool_ids):
        raise ValueError("k exceeds the pool size")
    order = np.lexsort((pool_ids, distances))
    return pool_ids[order[:k]]


def score_4ds_criteria(
    m: MixtureModel,
    distances: np.ndarray,
    pool: SampleBlock,
    ls_rho_sum: np.ndarray,
    ls_count: int,
    s_logdens_sum: float = 0.0,
    s_count: int = 0,
):
    """Per-pool-sample criterion values (distance, density, distribution,
    diversity).

    ls_rho_sum / ls_count summarize the labeled set plus the partial query
    set S; distribution(x) evaluates coverage of the mixture weights after
    hypothetically adding x. Diversity folds x's log-density into S's.
    """
    rho = responsibilities(m, pool)
    logp = log_density(m, pool)
    avg = (ls_rho_sum[None, :] + rho) / (ls_count + 1)
    deficit = np.maximum(0.0, m.weights[None, :] - avg)
    distribution = 1.0 - deficit.sum(axis=1)
    diversity = -(s_logdens_sum + logp) / (s_count + 1)
    return np.asarray(distances, dtype=np.float64), np.exp(logp), distribution, diversity


def _minmax(v: np.ndarray) -> np.ndarray:
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return np.full(v.shape, 0.5)
    return (v - lo) / (hi - lo)


@dataclass(frozen=True)
class FourDsWeights:
    """Simplex weights over the distance, density, and distribution criteria."""

    w_dist: float = 0.0
    w_dens: float = 0.0
    w_distr: float = 1.0

    def __post_init__(self):
        vec = (self.w_dist, self.w_dens, self.w_distr)
        if min(vec) < 0.0 or abs(sum(vec) - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")


def adapt_4ds_weights(
    w: FourDsWeights, improved: bool, eta: float = 0.05
) -> FourDsWeights:
    """Shift eta of weight mass toward the criterion favored by the last
    retrain: distance if resubstitution accuracy did not drop, density
    otherwise. The distribution weight donates first; once exhausted, the
    remaining non-favored weight donates. No donor mass left -> no-op.
    """
    target = "w_dist" if improved else "w_dens"
    other = "w_dens" if improved else "w_dist"
    vals = {"w_dist": w.w_dist, "w_dens": w.w_dens, "w_distr": w.w_distr}
    donor = "w_distr" if vals["w_distr"] > 0.0 else other
    amount = min(eta, vals[donor])
    vals[donor] -= amount
    vals[target] += amount
    total = sum(vals.values())
    return FourDsWeights(
        w_dist=vals["w_dist"] / total,
        w_dens=vals["w_dens"] / total,
        w_distr=vals["w_distr"] / total,
    )


def select_4ds(
    m: MixtureModel,
    distances: np.ndarray,
    labeled: SampleBlock,
    pool: SampleBlock,
    k: int,
    diversity_weight: float,
    weights: FourDsWeights,
) -> np.ndarray:
    """Greedy batch selection of k pool ids.

    Each pick maximizes w_dist*(1 - norm distance) + w_dens*norm density
    + w_distr*norm distribution, plus diversity_weight*norm diversity from
    the second pick on (diversity is undefined for an empty batch). All
    criteria are min-max normalized over the remaining pool before each
    pick; a zero-range criterion contributes the constant 0.5. Ties go to
    the sample appearing first in the pool block.
    """
    if k > len(pool):
        raise ValueError("k exceeds the pool size")
    labeled_rho = (
        responsibilities(m, labeled)
        if len(labeled)
        else np.zeros((0, m.n_components))
    )
    ls_rho_sum = labeled_rho.sum(axis=0)
    ls_count = len(labeled)
    s_logdens_sum = 0.0
    s_count = 0
    remaining = np.arange(len(pool))
    distances = np.asarray(distances, dtype=np.float64)
    picked: list[int] = []
    for _ in range(k):
        sub = pool.take(remaining)
        dist, dens, distr, div = score_4ds_criteria(
            m, distances[remaining], sub, ls_rho_sum, ls_count,
            s_logdens_sum, s_count,
        )
        score = (
            weights.w_dist * (1.0 - _minmax(dist))
            + weights.w_dens * _minmax(dens)
            + weights.w_distr * _minmax(distr)
        )
        if s_count > 0:
            score = score + diversity_weight * _minmax(div)
        best = int(np.argmax(score))
        row = remaining[best]
        picked.append(int(pool.ids[row]))
        rho_row = responsibilities(m, pool.take(np.array([row])))[0]
        logp_row = float(log_density(m, pool.take(np.array([row])))[0])
        ls_rho_sum = ls_rho_sum + rho_row
        ls_count += 1
        s_logdens_sum += logp_row
        s_count += 1
        remaining = np.delete(remaining, best)
    return np.asarray(picked, dtype=np.int64)
