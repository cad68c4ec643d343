"""Multi-class C-SVM on precomputed kernel matrices.

Binary subproblems are solved by sequential minimal optimization with
maximal-violating-pair working-set selection (no shrinking, so runs are
deterministic). Multi-class uses one-vs-one voting; the margin distance
consumed by the selection strategies is the minimum pairwise |f|.
Hyperparameters are searched on a fixed grid, scored by inner
cross-validation blended with model agreement on the unlabeled pool.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .data import SampleBlock
from .kernels import GramMatrix, KernelFactory, KernelSpec
from .mixture import CmmSha, classify_cmm_sha

__all__ = [
    "SolverError",
    "BinaryMachine",
    "SvmModel",
    "GridSearchSpec",
    "smo_solve",
    "train_csvm",
    "decision_values",
    "decision_distance",
    "predict",
    "tune_hyperparams",
]

TAU = 1e-12


class SolverError(RuntimeError):
    """Raised when SMO fails to reach the tolerance within max_iter."""

    def __init__(self, message, iterations=None, gap=None):
        super().__init__(message)
        self.iterations = iterations
        self.gap = gap


def smo_solve(
    kernel: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float = 1e-3,
    max_iter: int = 200_000,
):
    """Solve the dual of the binary C-SVM over a precomputed kernel matrix.

    min_a 0.5 a^T Q a - e^T a, Q_ij = y_i y_j K_ij, subject to y^T a = 0 and
    0 <= a <= C. Each step updates the maximal KKT-violating pair; converged
    when the duality gap proxy m(a) - M(a) drops to tol. Returns
    (alpha, bias, iterations, gap).
    """
    n = y.shape[0]
    y = np.asarray(y, dtype=np.float64)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective at alpha = 0
    for it in range(max_iter):
        neg_yg = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        if not up.any() or not low.any():
            gap = 0.0
            break
        up_vals = np.where(up, neg_yg, -np.inf)
        low_vals = np.where(low, neg_yg, np.inf)
        i = int(np.argmax(up_vals))
        j = int(np.argmin(low_vals))
        gap = float(up_vals[i] - low_vals[j])
        if gap <= tol:
            break
        # step along d with d_i = y_i, d_j = -y_j keeps y^T a constant
        quad = kernel[i, i] + kernel[j, j] - 2.0 * kernel[i, j]
        if quad <= 0.0:
            quad = TAU  # indefinite kernel guard
        step = gap / quad
        bound_i = c - alpha[i] if y[i] > 0 else alpha[i]
        bound_j = alpha[j] if y[j] > 0 else c - alpha[j]
        step = min(step, bound_i, bound_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        # exact box projection guards against accumulated roundoff
        alpha[i] = min(max(alpha[i], 0.0), c)
        alpha[j] = min(max(alpha[j], 0.0), c)
        grad += step * y * (kernel[:, i] - kernel[:, j])
    else:
        raise SolverError(
            f"SMO did not converge in {max_iter} iterations (gap {gap:.3e}); "
            f"the kernel matrix may be strongly indefinite",
            iterations=max_iter,
            gap=gap,
        )
    free = (alpha > 0.0) & (alpha < c)
    if free.any():
        bias = float(np.mean(-(y * grad)[free]))
    else:
        neg_yg = -y * grad
        up = ((y > 0) & (alpha < c)) | ((y < 0) & (alpha > 0))
        low = ((y < 0) & (alpha < c)) | ((y > 0) & (alpha > 0))
        hi = np.max(np.where(up, neg_yg, -np.inf)) if up.any() else 0.0
        lo = np.min(np.where(low, neg_yg, np.inf)) if low.any() else 0.0
        bias = float(0.5 * (hi + lo))
    return alpha, bias, it, gap


@dataclass
class BinaryMachine:
    """One one-vs-one subproblem: positive class, negative class, duals."""

    class_pos: int
    class_neg: int
    support_rows: np.ndarray  # positions into the model's train_ids
    dual_coef: np.ndarray  # alpha_n * c_n for the supports
    bias: float
    c: float
    iterations: int = 0
    gap: float = 0.0


@dataclass
class SvmModel:
    """One-vs-one ensemble over a fixed training id set."""

    machines: list[BinaryMachine]
    n_classes: int
    train_ids: np.ndarray
    kernel: KernelSpec | None = None

    def __post_init__(self):
        expected = self.n_classes * (self.n_classes - 1) // 2
        if len(self.machines) != expected:
            raise ValueError(
                f"expected {expected} pairwise machines, got {len(self.machines)}"
            )


def train_csvm(
    gm: GramMatrix,
    y: np.ndarray,
    c: float,
    tol: float = 1e-3,
    kernel: KernelSpec | None = None,
) -> SvmModel:
    """Train all C(C-1)/2 pairwise machines on one Gram matrix.

    ``y`` holds class indices aligned with the Gram rows; every class in
    0..max(y) must be present.
    """
    if c <= 0.0:
        raise ValueError("C must be > 0")
    y = np.asarray(y, dtype=np.int64)
    n_classes = int(y.max()) + 1
    counts = np.bincount(y, minlength=n_classes)
    if np.any(counts == 0):
        raise ValueError("every class needs at least one sample")
    machines = []
    for p, q in itertools.combinations(range(n_classes), 2):
        rows = np.flatnonzero((y == p) | (y == q))
        labels = np.where(y[rows] == p, 1.0, -1.0)
        sub = gm.values[np.ix_(rows, rows)]
        alpha, bias, iterations, gap = smo_solve(sub, labels, c, tol=tol)
        support = alpha > TAU * max(c, 1.0)
        machines.append(
            BinaryMachine(
                class_pos=p,
                class_neg=q,
                support_rows=rows[support],
                dual_coef=(alpha * labels)[support],
                bias=bias,
                c=c,
                iterations=iterations,
                gap=gap,
            )
        )
    return SvmModel(
        machines=machines, n_classes=n_classes, train_ids=gm.ids.copy(), kernel=kernel
    )


def decision_values(m: SvmModel, cross: np.ndarray) -> np.ndarray:
    """(n_x, n_machines) pairwise decision values f_pq.

    ``cross`` holds kernel evaluations between the query points (rows) and
    the model's training samples (columns, aligned with train_ids).
    """
    if cross.shape[1] != m.train_ids.shape[0]:
        raise ValueError("kernel columns must align with the training set")
    out = np.empty((cross.shape[0], len(m.machines)))
    for idx, machine in enumerate(m.machines):
        out[:, idx] = cross[:, machine.support_rows] @ machine.dual_coef + machine.bias
    return out


def decision_distance(m: SvmModel, cross: np.ndarray) -> np.ndarray:
    """Distance to the nearest pairwise decision boundary: min |f_pq|."""
    return np.min(np.abs(decision_values(m, cross)), axis=1)


def predict(m: SvmModel, cross: np.ndarray) -> np.ndarray:
    """Majority vote over pairwise machines.

    Vote ties are broken by the larger sum of |f| over the machines that
    voted for the class, then by the smaller class index.
    """
    f = decision_values(m, cross)
    n = cross.shape[0]
    votes = np.zeros((n, m.n_classes))
    strength = np.zeros((n, m.n_classes))
    for idx, machine in enumerate(m.machines):
        pos = f[:, idx] >= 0.0
        absf = np.abs(f[:, idx])
        votes[pos, machine.class_pos] += 1
        votes[~pos, machine.class_neg] += 1
        strength[pos, machine.class_pos] += absf[pos]
        strength[~pos, machine.class_neg] += absf[~pos]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        best = np.max(votes[i])
        tied = np.flatnonzero(votes[i] == best)
        if len(tied) == 1:
            out[i] = tied[0]
        else:
            s = strength[i, tied]
            out[i] = int(tied[np.flatnonzero(s == s.max())[0]])
    return out


@dataclass(frozen=True)
class GridSearchSpec:
    """Hyperparameter grids and the tuning-score blend."""

    c_grid: tuple[float, ...] = tuple(10.0**i for i in range(-3, 3))
    gamma_grid: tuple[float, ...] = tuple(10.0**i for i in range(-3, 3))
    alpha_grid: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))
    beta_grid: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(11))
    inner_folds: int = 4
    validation_weight: float = 0.5
    agreement_weight: float = 0.5

    def __post_init__(self):
        if not (self.c_grid and self.gamma_grid):
            raise ValueError("grids must be non-empty")


def _inner_deal(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Stratified round-robin deal of positions 0..n-1 into k folds; thin
    classes are allowed (they simply miss some folds)."""
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in np.unique(y):
        members = np.flatnonzero(y == cls)
        rng.shuffle(members)
        for pos, idx in enumerate(members):
            folds[pos % k].append(int(idx))
    return [np.asarray(sorted(f), dtype=np.int64) for f in folds]


def _inner_splits(y: np.ndarray, k: int, seed: int, n_classes: int):
    """Fold splits for inner validation; re-deals once if a training split
    lost a class, then errors."""
    for attempt, s in enumerate((seed, seed + 1)):
        folds = _inner_deal(y, k, s)
        splits = []
        ok = True
        for f in range(k):
            val = folds[f]
            if len(val) == 0:  # thin classes can leave a fold empty
                continue
            train = np.asarray(
                sorted(set(range(len(y))) - set(val.tolist())), dtype=np.int64
            )
            if len(np.unique(y[train])) < n_classes:
                ok = False
                break
            splits.append((train, val))
        if ok:
            return splits
    raise ValueError(
        "a class is absent from an inner training split even after re-dealing; "
        "label more samples before tuning"
    )


def _all_bound(m: SvmModel) -> bool:
    """True when some pairwise machine kept no free support vector.

    Every dual at the bound means C was too small to realize a functional
    margin on any training point; the bias then comes from the midpoint
    heuristic and the decision collapses to a constant as soon as the
    class counts unbalance. Such machines score deceptively well against
    the generative classifier, so tuning refuses them while any
    alternative exists.
    """
    for machine in m.machines:
        if not np.any(np.abs(machine.dual_coef) < machine.c * (1.0 - 1e-9)):
            return True
    return False


def tune_hyperparams(
    factory: KernelFactory,
    labeled_ids: np.ndarray,
    labeled_y: np.ndarray,
    pool_ids: np.ndarray,
    spec: GridSearchSpec,
    kernel_kind: str,
    cmm: CmmSha | None = None,
    pool_block: SampleBlock | None = None,
    mixed: bool = False,
    seed: int = 0,
    tol: float = 1e-3,
) -> tuple[KernelSpec, float, list[dict]]:
    """Pick (C, gamma[, alpha, beta]) maximizing the blended tuning score.

    Score = validation_weight * mean inner-fold accuracy
          + agreement_weight * agreement with the generative classifier on
            the unlabeled pool (skipped, with weight renormalized onto
            validation accuracy, when no classifier is supplied).
    Ties go to the earlier grid point; grid order is C, gamma, alpha, beta.
    """
    labeled_ids = np.asarray(labeled_ids, dtype=np.int64)
    labeled_y = np.asarray(labeled_y, dtype=np.int64)
    n_classes = int(labeled_y.max()) + 1
    if len(labeled_ids) < spec.inner_folds:
        raise ValueError("need at least inner_folds labeled samples")
    splits = _inner_splits(labeled_y, spec.inner_folds, seed, n_classes)

    use_agreement = (
        cmm is not None and pool_block is not None and len(pool_ids) > 0
    )
    if use_agreement:
        cmm_pred = np.argmax(classify_cmm_sha(cmm, pool_block), axis=1)

    ab_grid = (
        [(a, b) for a in spec.alpha_grid for b in spec.beta_grid]
        if mixed
        else [(1.0, 1.0)]
    )
    best = None
    best_any = None
    trace = []
    for c in spec.c_grid:
        for gamma in spec.gamma_grid:
            for alpha, beta in ab_grid:
                kspec = KernelSpec(kernel_kind, gamma=gamma, alpha=alpha, beta=beta)
                accs = []
                failed = False
                for train, val in splits:
                    gm = factory.gram(labeled_ids[train], kspec)
                    try:
                        model = train_csvm(gm, labeled_y[train], c, tol=tol)
                    except SolverError:
                        failed = True
                        break
                    cross = factory.cross(
                        labeled_ids[val], labeled_ids[train], kspec
                    )
                    accs.append(
                        float(np.mean(predict(model, cross) == labeled_y[val]))
                    )
                if failed:
                    trace.append(
                        {"c": c, "gamma": gamma, "alpha": alpha, "beta": beta,
                         "score": -1.0, "failed": True}
                    )
                    continue
                val_acc = float(np.mean(accs))
                degenerate = False
                if use_agreement:
                    gm = factory.gram(labeled_ids, kspec)
                    try:
                        model = train_csvm(gm, labeled_y, c, tol=tol)
                    except SolverError:
                        trace.append(
                            {"c": c, "gamma": gamma, "alpha": alpha, "beta": beta,
                             "score": -1.0, "failed": True}
                        )
                        continue
                    degenerate = _all_bound(model)
                    cross = factory.cross(pool_ids, labeled_ids, kspec)
                    agreement = float(np.mean(predict(model, cross) == cmm_pred))
                    score = (
                        spec.validation_weight * val_acc
                        + spec.agreement_weight * agreement
                    )
                else:
                    agreement = None
                    score = val_acc
                row = {
                    "c": c, "gamma": gamma, "alpha": alpha, "beta": beta,
                    "val_acc": val_acc, "agreement": agreement, "score": score,
                    "degenerate": degenerate,
                }
                trace.append(row)
                if degenerate:
                    if best_any is None or score > best_any[0]:
                        best_any = (score, kspec, c)
                elif best is None or score > best[0]:
                    best = (score, kspec, c)
    if best is None:
        best = best_any  # every combo degenerate: take the best of them
    if best is None:
        raise SolverError("every grid point failed to converge")
    score, kspec, c = best
    return kspec, c, trace
