"""Extended pool-based active learning.

The engine alternates query selection and model updates: a density-based
initialization round, then strategy-driven rounds until the label budget is
reached. Each labeling step optionally refines the mixture transductively,
retrains the SVM on the grown labeled set, and records accuracies.
Hyperparameters are tuned once, normally on the first labeled set; when
that set cannot support the inner validation split (a class holds fewer
than two labels), tuning is retried at each retrain until it can, with the
first grid point standing in meanwhile.

`PalRun` is an explicit state machine: `pending` holds the ids awaiting
labels and `provide` ingests answers and advances to the next query. That
makes the run resumable (a transcript of provided labels replays to the
same state) and lets an interactive oracle take minutes per answer without
holding any thread. `run_pal` drives it with a callable oracle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import SampleBlock
from .kernels import KernelFactory, KernelSpec, cross_kernel
from .mixture import (
    MixtureModel,
    ViConfig,
    fit_cmm_sha,
    refine_transductive,
    train_vi,
)
from .strategies import (
    FourDsWeights,
    adapt_4ds_weights,
    density_init,
    select_4ds,
    select_random,
    select_us,
)
from .svm import (
    GridSearchSpec,
    SvmModel,
    decision_distance,
    predict,
    train_csvm,
    tune_hyperparams,
)

__all__ = [
    "STRATEGIES",
    "AlConfig",
    "RoundRecord",
    "ALRunRecord",
    "PalRun",
    "run_pal",
    "oracle_answer",
    "make_simulated_oracle",
]

STRATEGIES = ("random", "us", "4ds")


@dataclass(frozen=True)
class AlConfig:
    """Run parameters: label budget, query sizes, strategy and kernel kinds."""

    budget: int
    strategy: str = "4ds"
    kernel: str = "rwm"
    query_size: int | None = None  # defaults to 5 for 4ds, 1 otherwise
    init_size: int | None = None  # defaults to 4 * n_classes
    diversity_weight: float = 1.0
    refinement: bool = True
    eta: float = 0.05
    seed: int = 0
    svm_tol: float = 1e-3
    record_timing: bool = True
    vi: ViConfig = field(default_factory=ViConfig)
    grid: GridSearchSpec = field(default_factory=GridSearchSpec)

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.kernel not in ("rbf", "rwm"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not 0.0 <= self.diversity_weight <= 1.0:
            raise ValueError("diversity_weight must lie in [0, 1]")
        if self.query_size is not None and self.query_size < 1:
            raise ValueError("query_size must be >= 1")

    @property
    def effective_query_size(self) -> int:
        if self.query_size is not None:
            return self.query_size
        return 5 if self.strategy == "4ds" else 1

    def effective_init_size(self, n_classes: int) -> int:
        return self.init_size if self.init_size is not None else 4 * n_classes


@dataclass
class RoundRecord:
    """One retrain: what was queried and how the models scored."""

    round: int
    selected_ids: list[int]
    n_labeled: int
    train_acc: float
    test_acc: float | None
    weights: tuple[float, float, float]
    elapsed_ms: float

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "selected_ids": self.selected_ids,
            "n_labeled": self.n_labeled,
            "train_acc": self.train_acc,
            "test_acc": self.test_acc,
            "weights": list(self.weights),
            "elapsed_ms": self.elapsed_ms,
        }


@dataclass
class ALRunRecord:
    """Full run: per-retrain records plus the tuned hyperparameters."""

    strategy: str
    kernel: str
    budget: int
    seed: int
    rounds: list[RoundRecord] = field(default_factory=list)
    tuned_gamma: float | None = None
    tuned_c: float | None = None
    tuned_alpha: float | None = None
    tuned_beta: float | None = None

    @property
    def final_test_acc(self) -> float | None:
        return self.rounds[-1].test_acc if self.rounds else None

    @property
    def curve(self) -> list[tuple[int, float]]:
        return [
            (r.n_labeled, r.test_acc)
            for r in self.rounds
            if r.test_acc is not None
        ]


class PalRun:
    """Resumable active-learning run over a fixed training pool.

    The training block is the initial unlabeled pool; its labels (when
    present) are never read by the engine, only by a simulated oracle the
    caller may build from the same block.
    """

    def __init__(
        self,
        train: SampleBlock,
        cfg: AlConfig,
        n_classes: int,
        test: SampleBlock | None = None,
    ):
        if n_classes < 2:
            raise ValueError("need at least 2 classes")
        n0 = len(train)
        m = cfg.effective_init_size(n_classes)
        if not m <= cfg.budget <= n0:
            raise ValueError(
                f"need init size {m} <= budget {cfg.budget} <= pool size {n0}"
            )
        self.cfg = cfg
        self.n_classes = n_classes
        self.train = train
        self.test = test
        self._pos_by_id = {int(v): i for i, v in enumerate(train.ids)}
        if len(self._pos_by_id) != n0:
            raise ValueError("training ids must be unique")
        self.base_model = train_vi(train, cfg.vi)
        self.model: MixtureModel = self.base_model
        self.svm: SvmModel | None = None
        self.kernel_spec: KernelSpec | None = None
        self.c: float | None = None
        self.weights = FourDsWeights()
        self.labeled_pos = np.empty(0, dtype=np.int64)
        self.labeled_y = np.empty(0, dtype=np.int64)
        self.pool_pos = np.arange(n0, dtype=np.int64)
        self.round = 0
        self.tuned = False
        self.record = ALRunRecord(
            strategy=cfg.strategy, kernel=cfg.kernel, budget=cfg.budget,
            seed=cfg.seed,
        )
        self._factory: KernelFactory | None = None
        self._pending = density_init(
            self.base_model, train, m, np.random.default_rng([cfg.seed, 0])
        )

    @property
    def done(self) -> bool:
        return len(self.labeled_pos) >= self.cfg.budget

    @property
    def pending(self) -> np.ndarray:
        """Ids queried and not yet labeled; empty once the run is done."""
        return self._pending.copy()

    def _positions(self, ids: np.ndarray) -> np.ndarray:
        try:
            return np.asarray(
                [self._pos_by_id[int(i)] for i in ids], dtype=np.int64
            )
        except KeyError as e:
            raise KeyError(f"unknown sample id {e.args[0]}") from None

    def _get_factory(self) -> KernelFactory:
        # rwm distances depend on the current mixture, so refinement
        # invalidates the cache; rbf distances never change
        if self._factory is None or (
            self.cfg.kernel == "rwm" and self._factory.model is not self.model
        ):
            model = self.model if self.cfg.kernel == "rwm" else None
            self._factory = KernelFactory(self.cfg.kernel, self.train, model)
        return self._factory

    def _mixed(self) -> bool:
        return bool(self.train.cat_sizes) and self.cfg.kernel == "rwm"

    def _fallback_hyperparams(self) -> tuple[KernelSpec, float]:
        # earliest grid point in tuning order, used until tuning is possible
        g = self.cfg.grid
        mixed = self._mixed()
        spec = KernelSpec(
            self.cfg.kernel,
            gamma=g.gamma_grid[0],
            alpha=g.alpha_grid[0] if mixed else 1.0,
            beta=g.beta_grid[0] if mixed else 1.0,
        )
        return spec, g.c_grid[0]

    def _tune(self) -> None:
        factory = self._get_factory()
        cmm = None
        pool_block = None
        if len(self.pool_pos):
            cmm = fit_cmm_sha(
                self.model, self.train.take(self.labeled_pos), self.n_classes
            )
            pool_block = self.train.take(self.pool_pos)
        mixed = self._mixed()
        self.kernel_spec, self.c, _ = tune_hyperparams(
            factory,
            self.labeled_pos,
            self.labeled_y,
            self.pool_pos,
            self.cfg.grid,
            self.cfg.kernel,
            cmm=cmm,
            pool_block=pool_block,
            mixed=mixed,
            seed=self.cfg.seed,
            tol=self.cfg.svm_tol,
        )

    def _select_next(self) -> np.ndarray:
        k = min(
            self.cfg.effective_query_size,
            self.cfg.budget - len(self.labeled_pos),
        )
        rng = np.random.default_rng([self.cfg.seed, self.round])
        pool_ids = self.train.ids[self.pool_pos]
        if self.cfg.strategy == "random":
            return select_random(pool_ids, k, rng)
        factory = self._get_factory()
        cross = factory.cross(self.pool_pos, self.labeled_pos, self.kernel_spec)
        distances = decision_distance(self.svm, cross)
        if self.cfg.strategy == "us":
            return select_us(distances, pool_ids, k)
        return select_4ds(
            self.model,
            distances,
            self.train.take(self.labeled_pos),
            self.train.take(self.pool_pos),
            k,
            self.cfg.diversity_weight,
            self.weights,
        )

    def provide(self, labels) -> None:
        """Ingest labels for the pending ids, retrain, book the round, and
        stage the next query set (or finish)."""
        if self.done:
            raise RuntimeError("run is complete")
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != self._pending.shape:
            raise ValueError(
                f"expected {len(self._pending)} labels, got {len(labels)}"
            )
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise ValueError("label outside the class range")
        start = time.monotonic()
        pos = self._positions(self._pending)
        self.labeled_pos = np.concatenate([self.labeled_pos, pos])
        self.labeled_y = np.concatenate([self.labeled_y, labels])
        keep = ~np.isin(self.pool_pos, pos)
        self.pool_pos = self.pool_pos[keep]

        if self.cfg.refinement:
            self.model = refine_transductive(
                self.base_model,
                self.train.take(self.labeled_pos),
                self.train.take(self.pool_pos),
                self.n_classes,
                self.cfg.vi,
            )
        if not self.tuned:
            try:
                self._tune()
                self.tuned = True
                spec = self.kernel_spec
                self.record.tuned_gamma = spec.gamma
                self.record.tuned_c = self.c
                if self._mixed():
                    self.record.tuned_alpha = spec.alpha
                    self.record.tuned_beta = spec.beta
            except ValueError:
                # a class holds fewer than two labels, so the inner
                # validation split cannot be built; retry next retrain
                self.kernel_spec, self.c = self._fallback_hyperparams()
        factory = self._get_factory()
        gm = factory.gram(self.labeled_pos, self.kernel_spec)
        self.svm = train_csvm(
            gm, self.labeled_y, self.c, tol=self.cfg.svm_tol,
            kernel=self.kernel_spec,
        )
        train_acc = float(np.mean(predict(self.svm, gm.values) == self.labeled_y))
        test_acc = None
        if self.test is not None:
            cross = cross_kernel(
                self.kernel_spec,
                self.test,
                self.train.take(self.labeled_pos),
                self.model if self.cfg.kernel == "rwm" else None,
            )
            test_acc = float(np.mean(predict(self.svm, cross) == self.test.y))
        if self.cfg.strategy == "4ds" and self.record.rounds:
            improved = train_acc >= self.record.rounds[-1].train_acc
            self.weights = adapt_4ds_weights(self.weights, improved, self.cfg.eta)
        elapsed = (
            (time.monotonic() - start) * 1000.0 if self.cfg.record_timing else 0.0
        )
        self.record.rounds.append(
            RoundRecord(
                round=self.round,
                selected_ids=[int(i) for i in self._pending],
                n_labeled=len(self.labeled_pos),
                train_acc=train_acc,
                test_acc=test_acc,
                weights=(
                    self.weights.w_dist,
                    self.weights.w_dens,
                    self.weights.w_distr,
                ),
                elapsed_ms=elapsed,
            )
        )
        self.round += 1
        self._pending = (
            np.empty(0, dtype=np.int64) if self.done else self._select_next()
        )


def make_simulated_oracle(block: SampleBlock):
    """Oracle answering from the block's stored labels."""
    labels = {int(i): int(y) for i, y in zip(block.ids, block.y)}
    if any(y < 0 for y in labels.values()):
        raise ValueError("simulated oracle needs a fully labeled block")

    def oracle(ids: np.ndarray) -> np.ndarray:
        return np.asarray([labels[int(i)] for i in ids], dtype=np.int64)

    return oracle


def oracle_answer(oracle, ids: np.ndarray) -> np.ndarray:
    """Ask the oracle, validating the answer shape."""
    ids = np.asarray(ids, dtype=np.int64)
    labels = np.asarray(oracle(ids), dtype=np.int64)
    if labels.shape != ids.shape:
        raise ValueError("oracle returned a mismatched number of labels")
    return labels


def run_pal(
    train: SampleBlock,
    cfg: AlConfig,
    n_classes: int,
    oracle,
    test: SampleBlock | None = None,
) -> ALRunRecord:
    """Drive a run to completion with a callable oracle (ids -> labels)."""
    run = PalRun(train, cfg, n_classes, test=test)
    while not run.done:
        run.provide(oracle_answer(oracle, run.pending))
    return run.record
