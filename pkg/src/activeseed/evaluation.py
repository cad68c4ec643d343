"""Evaluation criteria for comparing active-learning runs.

Three criteria over learning curves: ranked performance (Friedman test with
Nemenyi post-hoc critical differences), data utilization ratio against a
baseline strategy, and the area between learning curves. Report emitters
write the rank/DUR/AULC tables as CSV, the critical-difference plot data as
JSON, and the curves themselves as CSV.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import jsonio

__all__ = [
    "LearningCurve",
    "DurResult",
    "AulcResult",
    "mean_curve",
    "rp_rank",
    "friedman_statistic",
    "nemenyi_cd",
    "cd_groups",
    "target_accuracy",
    "dur",
    "aulc",
    "write_rp_csv",
    "write_dur_csv",
    "write_aulc_csv",
    "write_curves_csv",
    "cd_plot_data",
]

# upper-tail chi-square critical values, df -> value
CHI2_CRITICAL = {
    0.05: {1: 3.841, 2: 5.991, 3: 7.815, 4: 9.488, 5: 11.070, 6: 12.592,
           7: 14.067, 8: 15.507, 9: 16.919},
    0.10: {1: 2.706, 2: 4.605, 3: 6.251, 4: 7.779, 5: 9.236, 6: 10.645,
           7: 12.017, 8: 13.362, 9: 14.684},
}

# studentized range / sqrt(2) at infinite dof, indexed by classifier count
Q_TABLE = {
    0.05: {2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949,
           8: 3.031, 9: 3.102, 10: 3.164},
    0.10: {2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693,
           8: 2.780, 9: 2.855, 10: 2.920},
}
# q implied by the reference results for alpha=0.1, S=5; the standard table
# gives 2.459, so reproductions of those numbers must opt in explicitly
Q_REFERENCE_01_5 = 2.516


@dataclass(frozen=True)
class LearningCurve:
    """Fold-averaged test accuracy per labeled-set size."""

    label: str
    budgets: np.ndarray
    accuracies: np.ndarray
    n_folds: int = 1
    stds: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "budgets", np.asarray(self.budgets, dtype=np.float64)
        )
        object.__setattr__(
            self, "accuracies", np.asarray(self.accuracies, dtype=np.float64)
        )
        if self.budgets.shape != self.accuracies.shape or self.budgets.ndim != 1:
            raise ValueError("budgets and accuracies must be equal-length vectors")
        if len(self.budgets) == 0:
            raise ValueError("curve is empty")
        if np.any(np.diff(self.budgets) <= 0):
            raise ValueError("budget points must be strictly increasing")
        if self.accuracies.min() < 0.0 or self.accuracies.max() > 1.0:
            raise ValueError("accuracies must lie in [0, 1]")


def mean_curve(label: str, records) -> LearningCurve:
    """Average the test-accuracy curves of several runs (typically folds).

    All runs must share the budget grid, which holds whenever they share a
    configuration.
    """
    if not records:
        raise ValueError("no records")
    grids = [[r.n_labeled for r in rec.rounds] for rec in records]
    if any(g != grids[0] for g in grids):
        raise ValueError("runs disagree on the budget grid")
    accs = np.array(
        [[r.test_acc for r in rec.rounds] for rec in records], dtype=np.float64
    )
    if np.any(np.isnan(accs)):
        raise ValueError("every round needs a test accuracy")
    return LearningCurve(
        label=label,
        budgets=np.asarray(grids[0], dtype=np.float64),
        accuracies=accs.mean(axis=0),
        n_folds=len(records),
        stds=accs.std(axis=0, ddof=0),
    )


def rp_rank(table: np.ndarray):
    """Rank classifiers per dataset: highest accuracy gets rank 1, ties are
    averaged. Returns (ranks, mean_ranks, wins); a dataset's win is shared
    equally among the classifiers attaining its minimum rank.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 1 or table.shape[1] < 2:
        raise ValueError("need a datasets x classifiers table")
    n, s = table.shape
    ranks = np.empty_like(table)
    wins = np.zeros(s)
    for i in range(n):
        ranks[i] = rankdata(-table[i], method="average")
        winners = np.flatnonzero(ranks[i] == ranks[i].min())
        wins[winners] += 1.0 / len(winners)
    return ranks, ranks.mean(axis=0), wins


def friedman_statistic(
    mean_ranks: np.ndarray, n: int, s: int, alpha: float = 0.10
):
    """Friedman chi-square over mean ranks, compared with the embedded
    critical value for S-1 degrees of freedom. Returns (statistic,
    reject, critical)."""
    if n < 2 or s < 2:
        raise ValueError("need at least 2 datasets and 2 classifiers")
    mean_ranks = np.asarray(mean_ranks, dtype=np.float64)
    if mean_ranks.shape != (s,):
        raise ValueError("mean_ranks length must equal the classifier count")
    stat = (12.0 * n / (s * (s + 1))) * (
        np.sum(mean_ranks**2) - s * (s + 1) ** 2 / 4.0
    )
    try:
        critical = CHI2_CRITICAL[alpha][s - 1]
    except KeyError:
        raise ValueError(f"no critical value for alpha={alpha}, S={s}") from None
    return float(stat), bool(stat > critical), critical


def nemenyi_cd(s: int, n: int, alpha: float = 0.10, q_source: str = "standard"):
    """Critical difference q_alpha * sqrt(S(S+1) / 6N).

    q_source "reference" selects the value implied by the published CD for
    alpha=0.1, S=5 (2.516) instead of the standard table's 2.459.
    """
    if n < 1:
        raise ValueError("need at least one dataset")
    if q_source == "reference":
        if alpha != 0.10 or s != 5:
            raise ValueError("the reference q value exists only for alpha=0.1, S=5")
        q = Q_REFERENCE_01_5
    elif q_source == "standard":
        try:
            q = Q_TABLE[alpha][s]
        except KeyError:
            raise ValueError(f"no q value for alpha={alpha}, S={s}") from None
    else:
        raise ValueError(f"unknown q_source {q_source!r}")
    return q * np.sqrt(s * (s + 1) / (6.0 * n))


def cd_groups(mean_ranks: np.ndarray, cd: float) -> list[tuple[int, int]]:
    """Maximal runs of rank-adjacent classifiers whose spread is below the
    critical difference. Indices refer to the rank-sorted order."""
    order = np.argsort(mean_ranks, kind="stable")
    sorted_ranks = np.asarray(mean_ranks)[order]
    s = len(sorted_ranks)
    groups = []
    for i in range(s):
        j = i
        while j + 1 < s and sorted_ranks[j + 1] - sorted_ranks[i] < cd:
            j += 1
        if not groups or groups[-1][1] < j:
            groups.append((i, j))
    return groups


def target_accuracy(baseline: LearningCurve, budget: float) -> float:
    """Mean baseline accuracy over budget points in [0.8 * budget, budget]."""
    lo = 0.8 * budget
    window = (baseline.budgets >= lo) & (baseline.budgets <= budget)
    if not window.any():
        raise ValueError("no budget points fall in the target window")
    return float(baseline.accuracies[window].mean())


def _align(a: LearningCurve, b: LearningCurve):
    """Union budget grid over the overlap, both curves linearly interpolated."""
    lo = max(a.budgets[0], b.budgets[0])
    hi = min(a.budgets[-1], b.budgets[-1])
    if lo > hi:
        raise ValueError("curves do not overlap")
    grid = np.union1d(a.budgets, b.budgets)
    grid = grid[(grid >= lo) & (grid <= hi)]
    return (
        grid,
        np.interp(grid, a.budgets, a.accuracies),
        np.interp(grid, b.budgets, b.accuracies),
    )


@dataclass(frozen=True)
class DurResult:
    """Sample count needed to hit the target, relative to the baseline."""

    ratio: float
    samples: float
    baseline_samples: float
    reached: bool
    target: float

    def ratio_text(self) -> str:
        return f"{self.ratio:.3f}" if self.reached else f">{self.ratio:.3f}"

    def samples_text(self) -> str:
        sample = f"{self.samples:g}"
        return f"({sample})" if self.reached else f"(>{sample})"


def _first_reaching(curve: LearningCurve, target: float):
    hit = np.flatnonzero(curve.accuracies >= target)
    return float(curve.budgets[hit[0]]) if len(hit) else None


def dur(curve: LearningCurve, baseline: LearningCurve, target: float) -> DurResult:
    """First budget point at which each curve reaches the target; the ratio
    of the two counts. A curve that never reaches the target within its
    budget is flagged and charged its full budget."""
    base = _first_reaching(baseline, target)
    if base is None:
        raise ValueError("the baseline curve never reaches the target")
    samples = _first_reaching(curve, target)
    if samples is None:
        return DurResult(
            ratio=float(curve.budgets[-1]) / base,
            samples=float(curve.budgets[-1]),
            baseline_samples=base,
            reached=False,
            target=target,
        )
    return DurResult(
        ratio=samples / base,
        samples=samples,
        baseline_samples=base,
        reached=True,
        target=target,
    )


@dataclass(frozen=True)
class AulcResult:
    """Area between two learning curves.

    mean_pp: trapezoidal area of (curve - baseline) divided by the budget
    span, in accuracy percentage points; raw_area keeps the unnormalized
    trapezoid in accuracy x samples units.
    """

    mean_pp: float
    raw_area: float


def aulc(curve: LearningCurve, baseline: LearningCurve) -> AulcResult:
    grid, a, b = _align(curve, baseline)
    if len(grid) == 1:
        return AulcResult(mean_pp=100.0 * float(a[0] - b[0]), raw_area=0.0)
    area = float(np.trapezoid(a - b, grid))
    span = float(grid[-1] - grid[0])
    return AulcResult(mean_pp=100.0 * area / span, raw_area=area)


def write_rp_csv(path, dataset_names, labels, table, ranks, mean_ranks, wins):
    """Accuracy table with per-column mean, rank, and wins footer rows."""
    table = np.asarray(table, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", *labels])
        for name, row in zip(dataset_names, table):
            w.writerow([name, *[f"{v:.4f}" for v in row]])
        w.writerow(["mean", *[f"{v:.4f}" for v in table.mean(axis=0)]])
        w.writerow(["rank", *[f"{v:.3f}" for v in mean_ranks]])
        w.writerow(["wins", *[f"{v:.1f}" for v in wins]])


def write_dur_csv(path, dataset_names, labels, results, targets):
    """Per-dataset DUR rows: ratio and sample count per classifier, plus the
    target accuracy. `results` is a list of per-classifier DurResult lists."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["dataset"]
        for label in labels:
            header += [f"{label} ratio", f"{label} samples"]
        header.append("target")
        w.writerow(header)
        means = np.zeros(len(labels))
        wins = np.zeros(len(labels))
        for name, row, target in zip(dataset_names, results, targets):
            cells = [name]
            for r in row:
                cells += [r.ratio_text(), r.samples_text()]
            cells.append(f"{target:.4f}")
            w.writerow(cells)
            means += [r.ratio for r in row]
            reached_samples = [
                r.samples if r.reached else np.inf for r in row
            ]
            best = min(reached_samples)
            if np.isfinite(best):
                winners = [i for i, v in enumerate(reached_samples) if v == best]
                for i in winners:
                    wins[i] += 1.0 / len(winners)
        means /= max(1, len(dataset_names))
        w.writerow(["mean", *sum([[f"{v:.3f}", ""] for v in means], []), ""])
        w.writerow(["wins", *sum([[f"{v:.1f}", ""] for v in wins], []), ""])


def write_aulc_csv(path, dataset_names, labels, results):
    """Per-dataset AULC values; `results` holds per-classifier AulcResult
    lists."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", *labels])
        table = np.array([[r.mean_pp for r in row] for row in results])
        for name, row in zip(dataset_names, table):
            w.writerow([name, *[f"{v:.3f}" for v in row]])
        w.writerow(["mean", *[f"{v:.3f}" for v in table.mean(axis=0)]])
        wins = np.zeros(len(labels))
        for row in table:
            winners = np.flatnonzero(row == row.max())
            wins[winners] += 1.0 / len(winners)
        w.writerow(["wins", *[f"{v:.1f}" for v in wins]])


def write_curves_csv(path, curves: list[LearningCurve]):
    """Long-format rows: label, budget, mean accuracy, std over folds."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "n_labeled", "mean_accuracy", "std"])
        for c in curves:
            stds = c.stds if c.stds is not None else np.zeros_like(c.accuracies)
            for budget, acc, std in zip(c.budgets, c.accuracies, stds):
                w.writerow([c.label, f"{budget:g}", f"{acc:.6f}", f"{std:.6f}"])


def cd_plot_data(labels, mean_ranks, cd: float, alpha: float) -> str:
    """JSON payload for an external CD-plot renderer: classifier positions
    sorted by rank plus the index ranges of non-distinguishable groups."""
    mean_ranks = np.asarray(mean_ranks, dtype=np.float64)
    order = np.argsort(mean_ranks, kind="stable")
    positions = [
        {"label": labels[int(i)], "rank": float(mean_ranks[int(i)])}
        for i in order
    ]
    groups = [[int(a), int(b)] for a, b in cd_groups(mean_ranks, cd)]
    return jsonio.dumps(
        {"alpha": alpha, "cd": float(cd), "positions": positions, "groups": groups}
    )
