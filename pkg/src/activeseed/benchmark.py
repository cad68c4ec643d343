"""Manifest-driven benchmark runs and report generation.

A manifest pins everything a run matrix needs: datasets, strategy/kernel
cells, fold count, budgets, engine defaults, and the seed. Every artifact
under the output directory is reproducible from (manifest, seed) alone; a
SHA-256 hash of the canonical manifest document is embedded in every file
written, so records can always be traced back to the exact configuration
that produced them.

Layout on disk:

    out/manifest.json
    out/<dataset>/<strategy>-<kernel>/fold<k>.jsonl

Each fold file holds one meta line (provenance, tuned hyperparameters)
followed by one line per retrain round. Cells fail independently: an error
in one (dataset, fold, strategy, kernel) combination is reported and the
run continues.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import corpus
from . import jsonio
from .data import DataError, Dataset, zscore_normalize, stratified_kfold
from .mixture import ViConfig, representativity, train_vi
from .evaluation import (
    aulc,
    cd_plot_data,
    dur,
    friedman_statistic,
    mean_curve,
    nemenyi_cd,
    rp_rank,
    target_accuracy,
    write_aulc_csv,
    write_curves_csv,
    write_dur_csv,
    write_rp_csv,
)
from .pal import (
    STRATEGIES,
    AlConfig,
    ALRunRecord,
    RoundRecord,
    make_simulated_oracle,
    run_pal,
)
from .svm import GridSearchSpec

__all__ = [
    "RunManifest",
    "CellKey",
    "CellOutcome",
    "RunReport",
    "manifest_to_json",
    "manifest_from_json",
    "manifest_sha256",
    "load_manifest",
    "save_manifest",
    "tune_vi",
    "run_cell",
    "run_manifest",
    "write_fold_record",
    "read_fold_record",
    "evaluate_records",
]

KERNELS = ("rbf", "rwm")

# Candidates for the mixture fit, ranked by representativity per fold. The
# first entry is the library default; the others vary the expected component
# count and the weight prior's appetite for extra components.
DEFAULT_VI_GRID = (
    {"j_max": 10},
    {"j_max": 10, "weight_concentration": 1.0},
    {"j_max": 5},
)


@dataclass(frozen=True)
class RunManifest:
    """Declarative description of a benchmark run matrix."""

    datasets: tuple[str, ...]
    strategies: tuple[str, ...] = STRATEGIES
    kernels: tuple[str, ...] = KERNELS
    folds: int = 5
    budget: int = 60
    budgets: dict[str, int] = field(default_factory=dict)
    seed: int = 0
    jobs: int = 1
    out_dir: str = "out"
    query_size: int | None = None
    init_size: int | None = None
    refinement: bool = True
    eta: float = 0.05
    diversity_weight: float = 1.0
    svm_tol: float = 1e-3
    record_timing: bool = False
    c_grid: tuple[float, ...] | None = None
    gamma_grid: tuple[float, ...] | None = None
    vi: dict = field(default_factory=dict)
    vi_grid: tuple[dict, ...] = DEFAULT_VI_GRID
    vi_mc: int = 512

    def __post_init__(self):
        object.__setattr__(self, "datasets", tuple(self.datasets))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "kernels", tuple(self.kernels))
        object.__setattr__(self, "vi_grid", tuple(dict(g) for g in self.vi_grid))
        if not self.datasets:
            raise ValueError("manifest needs at least one dataset")
        known = set(corpus.available())
        for name in self.datasets:
            if name not in known:
                raise ValueError(
                    f"unknown dataset {name!r}; known: {sorted(known)}"
                )
        if len(set(self.datasets)) != len(self.datasets):
            raise ValueError("duplicate dataset names")
        if not self.strategies or not self.kernels:
            raise ValueError("manifest needs at least one strategy and kernel")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        for k in self.kernels:
            if k not in KERNELS:
                raise ValueError(f"unknown kernel {k!r}")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        for name in self.budgets:
            if name not in self.datasets:
                raise ValueError(f"budget override for unlisted dataset {name!r}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if not self.vi_grid:
            raise ValueError("vi_grid must hold at least one candidate")

    def budget_for(self, dataset: str) -> int:
        return self.budgets.get(dataset, self.budget)

    def cells(self) -> list["CellKey"]:
        """All (dataset, fold, strategy, kernel) combinations, in a fixed
        order: dataset-major, then fold, strategy, kernel."""
        return [
            CellKey(d, f, s, k)
            for d in self.datasets
            for f in range(self.folds)
            for s in self.strategies
            for k in self.kernels
        ]


@dataclass(frozen=True)
class CellKey:
    """One unit of work; cells are independent by construction."""

    dataset: str
    fold: int
    strategy: str
    kernel: str

    @property
    def label(self) -> str:
        return f"{self.strategy}-{self.kernel}"

    @property
    def relpath(self) -> str:
        return f"{self.dataset}/{self.label}/fold{self.fold}.jsonl"

    def __str__(self) -> str:
        return f"{self.dataset}/{self.label}/fold{self.fold}"


@dataclass
class CellOutcome:
    key: CellKey
    path: str | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RunReport:
    manifest_sha256: str
    outcomes: list[CellOutcome]

    @property
    def ok(self) -> bool:
        return all(o.ok for o in self.outcomes)

    @property
    def failures(self) -> list[CellOutcome]:
        return [o for o in self.outcomes if not o.ok]


_MANIFEST_FIELDS = (
    "datasets", "strategies", "kernels", "folds", "budget", "budgets",
    "seed", "jobs", "out_dir", "query_size", "init_size", "refinement",
    "eta", "diversity_weight", "svm_tol", "record_timing", "c_grid",
    "gamma_grid", "vi", "vi_grid", "vi_mc",
)


def manifest_to_json(m: RunManifest) -> dict:
    out: dict = {}
    for name in _MANIFEST_FIELDS:
        v = getattr(m, name)
        if isinstance(v, tuple):
            v = list(v)
        out[name] = v
    return out


def manifest_from_json(obj: dict) -> RunManifest:
    unknown = set(obj) - set(_MANIFEST_FIELDS)
    if unknown:
        raise ValueError(f"unknown manifest fields: {sorted(unknown)}")
    if "datasets" not in obj:
        raise ValueError("manifest needs a 'datasets' list")
    kwargs = dict(obj)
    for name in ("c_grid", "gamma_grid"):
        if kwargs.get(name) is not None:
            kwargs[name] = tuple(float(v) for v in kwargs[name])
    return RunManifest(**kwargs)


# execution details that do not affect record content stay out of the hash,
# so a rerun at different parallelism or into a different directory still
# produces identically stamped artifacts
_HASH_EXCLUDED = ("jobs", "out_dir")


def manifest_sha256(m: RunManifest) -> str:
    """Hash of the canonical (sorted-key, full-precision) manifest document,
    minus pure execution fields."""
    doc = manifest_to_json(m)
    for name in _HASH_EXCLUDED:
        doc.pop(name)
    text = jsonio.dumps(doc)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_manifest(path) -> RunManifest:
    """Read a manifest file. Both bare field objects and the stamped
    {"manifest": ..., "sha256": ...} form written next to run records are
    accepted; a present stamp is verified against the content."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = jsonio.load(fh)
    if isinstance(doc, dict) and "manifest" in doc:
        m = manifest_from_json(doc["manifest"])
        stamp = doc.get("sha256")
        if stamp is not None and stamp != manifest_sha256(m):
            raise ValueError("manifest hash stamp does not match its content")
        return m
    return manifest_from_json(doc)


def save_manifest(m: RunManifest, path) -> None:
    doc = {"manifest": manifest_to_json(m), "sha256": manifest_sha256(m)}
    Path(path).write_text(jsonio.dumps(doc, indent=2) + "\n", encoding="utf-8")


def tune_vi(block, manifest: RunManifest):
    """Pick the mixture configuration whose fit best matches a Parzen read
    of the pool (lowest symmetric divergence). Ties keep the earlier grid
    entry. Returns (config, chosen overrides, score)."""
    best = None
    for cand in manifest.vi_grid:
        merged = {"seed": manifest.seed, **manifest.vi, **cand}
        cfg = ViConfig(**merged)
        m = train_vi(block, cfg)
        score = representativity(
            m, block, n_mc=manifest.vi_mc, seed=manifest.seed
        )
        if best is None or score < best[2]:
            best = (cfg, merged, score)
    return best


def _load_normalized(name: str, seed: int) -> Dataset:
    return zscore_normalize(corpus.builtin(name, seed))


def _grid_spec(manifest: RunManifest) -> GridSearchSpec:
    spec = GridSearchSpec()
    if manifest.c_grid is not None:
        spec = replace(spec, c_grid=manifest.c_grid)
    if manifest.gamma_grid is not None:
        spec = replace(spec, gamma_grid=manifest.gamma_grid)
    return spec


def _cell_config(manifest: RunManifest, key: CellKey, vi_cfg: ViConfig) -> AlConfig:
    # one engine seed per fold so folds draw distinct selection streams
    return AlConfig(
        budget=manifest.budget_for(key.dataset),
        strategy=key.strategy,
        kernel=key.kernel,
        query_size=manifest.query_size,
        init_size=manifest.init_size,
        diversity_weight=manifest.diversity_weight,
        refinement=manifest.refinement,
        eta=manifest.eta,
        seed=manifest.seed * manifest.folds + key.fold,
        svm_tol=manifest.svm_tol,
        record_timing=manifest.record_timing,
        vi=vi_cfg,
        grid=_grid_spec(manifest),
    )


def write_fold_record(path, meta: dict, record: ALRunRecord) -> None:
    """One meta line, then one line per round; stable bytes for a fixed
    record (sorted keys, full-precision floats)."""
    lines = [jsonio.dumps({"kind": "meta", **meta})]
    for r in record.rounds:
        lines.append(jsonio.dumps({"kind": "round", **r.to_dict()}))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_fold_record(path) -> tuple[dict, ALRunRecord]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}: empty record file")
    meta = jsonio.loads(lines[0])
    if meta.get("kind") != "meta":
        raise DataError(f"{path}: first line must be the meta record")
    tuned = meta.get("tuned", {})
    record = ALRunRecord(
        strategy=meta["strategy"],
        kernel=meta["kernel"],
        budget=meta["budget"],
        seed=meta["seed"],
        tuned_gamma=tuned.get("gamma"),
        tuned_c=tuned.get("c"),
        tuned_alpha=tuned.get("alpha"),
        tuned_beta=tuned.get("beta"),
    )
    for line in lines[1:]:
        obj = jsonio.loads(line)
        if obj.get("kind") != "round":
            raise DataError(f"{path}: unexpected line kind {obj.get('kind')!r}")
        record.rounds.append(
            RoundRecord(
                round=obj["round"],
                selected_ids=[int(i) for i in obj["selected_ids"]],
                n_labeled=obj["n_labeled"],
                train_acc=obj["train_acc"],
                test_acc=obj["test_acc"],
                weights=tuple(obj["weights"]),
                elapsed_ms=obj["elapsed_ms"],
            )
        )
    return meta, record


def run_cell(
    manifest: RunManifest,
    key: CellKey,
    out_dir,
    dataset: Dataset | None = None,
    vi_tuned=None,
) -> CellOutcome:
    """Run one cell and write its fold record. The dataset and tuned mixture
    configuration can be supplied to share work across cells; both are
    re-derived deterministically when absent."""
    try:
        if dataset is None:
            dataset = _load_normalized(key.dataset, manifest.seed)
        split = stratified_kfold(dataset, manifest.folds, manifest.seed)[key.fold]
        train = dataset.block(split.pool_ids)
        test = dataset.block(split.test_ids)
        if vi_tuned is None:
            vi_tuned = tune_vi(train, manifest)
        vi_cfg, vi_chosen, vi_score = vi_tuned
        cfg = _cell_config(manifest, key, vi_cfg)
        oracle = make_simulated_oracle(train)
        record = run_pal(train, cfg, dataset.schema.n_classes, oracle, test=test)
        meta = {
            "manifest_sha256": manifest_sha256(manifest),
            "dataset": key.dataset,
            "fold": key.fold,
            "strategy": key.strategy,
            "kernel": key.kernel,
            "budget": cfg.budget,
            "seed": cfg.seed,
            "n_classes": dataset.schema.n_classes,
            "n_train": len(train),
            "n_test": len(test),
            "vi": vi_chosen,
            "representativity": vi_score,
            "tuned": {
                "gamma": record.tuned_gamma,
                "c": record.tuned_c,
                "alpha": record.tuned_alpha,
                "beta": record.tuned_beta,
            },
        }
        path = Path(out_dir) / key.relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        write_fold_record(path, meta, record)
        return CellOutcome(key=key, path=str(path))
    except Exception as e:  # noqa: BLE001 - cell isolation is the contract
        return CellOutcome(key=key, error=f"{type(e).__name__}: {e}")


def _cell_worker(manifest_json: dict, key: CellKey, out_dir: str) -> CellOutcome:
    # process-pool entry point: rebuild everything from primitives
    manifest = manifest_from_json(manifest_json)
    return run_cell(manifest, key, out_dir)


def run_manifest(
    manifest: RunManifest, out_dir=None, progress=None
) -> RunReport:
    """Execute every cell of the manifest, writing records under out_dir
    (defaults to the manifest's own output directory). Per-cell failures
    are collected, not raised; `progress` (if given) is called with each
    CellOutcome as it lands."""
    out = Path(out_dir if out_dir is not None else manifest.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(manifest, out / "manifest.json")
    keys = manifest.cells()
    outcomes: list[CellOutcome] = []
    if manifest.jobs > 1:
        doc = manifest_to_json(manifest)
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            futures = [
                pool.submit(_cell_worker, doc, key, str(out)) for key in keys
            ]
            for fut in futures:
                outcome = fut.result()
                outcomes.append(outcome)
                if progress is not None:
                    progress(outcome)
    else:
        # sequential path shares the loaded dataset and the representativity
        # tuning across all cells of a (dataset, fold) pair
        datasets: dict[str, Dataset | Exception] = {}
        tuned: dict[tuple[str, int], object] = {}
        for key in keys:
            if key.dataset not in datasets:
                try:
                    datasets[key.dataset] = _load_normalized(
                        key.dataset, manifest.seed
                    )
                except Exception as e:  # noqa: BLE001
                    datasets[key.dataset] = e
            d = datasets[key.dataset]
            if isinstance(d, Exception):
                outcome = CellOutcome(
                    key=key, error=f"{type(d).__name__}: {d}"
                )
            else:
                fold_key = (key.dataset, key.fold)
                if fold_key not in tuned:
                    try:
                        split = stratified_kfold(
                            d, manifest.folds, manifest.seed
                        )[key.fold]
                        tuned[fold_key] = tune_vi(
                            d.block(split.pool_ids), manifest
                        )
                    except Exception as e:  # noqa: BLE001
                        tuned[fold_key] = e
                t = tuned[fold_key]
                if isinstance(t, Exception):
                    outcome = CellOutcome(
                        key=key, error=f"{type(t).__name__}: {t}"
                    )
                else:
                    outcome = run_cell(manifest, key, out, dataset=d, vi_tuned=t)
            outcomes.append(outcome)
            if progress is not None:
                progress(outcome)
    return RunReport(manifest_sha256=manifest_sha256(manifest), outcomes=outcomes)


# report column order mirrors the benchmark tables: strongest configuration
# first, the uncertainty and random baselines after
_STRATEGY_ORDER = {"4ds": 0, "us": 1, "random": 2}
_KERNEL_ORDER = {"rwm": 0, "rbf": 1}


def _label_sort_key(label: str):
    strategy, _, kernel = label.partition("-")
    return (
        _STRATEGY_ORDER.get(strategy, len(_STRATEGY_ORDER)),
        _KERNEL_ORDER.get(kernel, len(_KERNEL_ORDER)),
        label,
    )


def _scan_records(records_dir):
    root = Path(records_dir)
    cells: dict[tuple[str, str], list] = {}
    hashes: set[str] = set()
    for path in sorted(root.glob("*/*/fold*.jsonl")):
        dataset = path.parent.parent.name
        label = path.parent.name
        fold = int(path.stem.removeprefix("fold"))
        meta, record = read_fold_record(path)
        hashes.add(meta.get("manifest_sha256", ""))
        cells.setdefault((dataset, label), []).append((fold, record))
    if not cells:
        raise DataError(f"no run records under {root}")
    for group in cells.values():
        group.sort(key=lambda t: t[0])
    return cells, hashes


def evaluate_records(
    records_dir, out_dir=None, alpha: float = 0.10, q_source: str = "standard"
) -> dict:
    """Turn a tree of fold records into report files: accuracy/rank table,
    data-utilization ratios, learning-curve areas, per-dataset curves, and
    critical-difference plot data. Datasets with missing cells are listed
    as gaps and excluded from the comparisons. Returns the report summary
    (also written as report.json)."""
    cells, hashes = _scan_records(records_dir)
    out = Path(out_dir if out_dir is not None else Path(records_dir) / "report")
    out.mkdir(parents=True, exist_ok=True)
    datasets = sorted({d for d, _ in cells})
    labels = sorted({l for _, l in cells}, key=_label_sort_key)

    curves: dict[tuple[str, str], object] = {}
    for (dataset, label), group in cells.items():
        try:
            curves[(dataset, label)] = mean_curve(label, [r for _, r in group])
        except ValueError as e:
            raise DataError(f"{dataset}/{label}: {e}") from None

    gaps = [
        {"dataset": d, "cell": l}
        for d in datasets
        for l in labels
        if (d, l) not in cells
    ]
    complete = [
        d for d in datasets if all((d, l) in cells for l in labels)
    ]

    report: dict = {
        "datasets": datasets,
        "labels": labels,
        "complete_datasets": complete,
        "gaps": gaps,
        "manifest_sha256": sorted(hashes),
        "alpha": alpha,
        "statistics": None,
        "baseline": None,
    }

    for d in datasets:
        present = [curves[(d, l)] for l in labels if (d, l) in cells]
        write_curves_csv(out / f"curves_{d}.csv", present)

    if complete and len(labels) >= 2:
        table = np.array(
            [
                [curves[(d, l)].accuracies[-1] for l in labels]
                for d in complete
            ]
        )
        ranks, mean_ranks, wins = rp_rank(table)
        write_rp_csv(
            out / "rp.csv", complete, labels, table, ranks, mean_ranks, wins
        )
        stats: dict = {
            "mean_ranks": [float(v) for v in mean_ranks],
            "wins": [float(v) for v in wins],
        }
        if len(complete) >= 2:
            try:
                stat, reject, critical = friedman_statistic(
                    mean_ranks, n=len(complete), s=len(labels), alpha=alpha
                )
                cd = float(
                    nemenyi_cd(
                        len(labels), len(complete), alpha=alpha, q_source=q_source
                    )
                )
                stats["friedman"] = {
                    "statistic": stat,
                    "critical": critical,
                    "reject": reject,
                }
                stats["cd"] = cd
                (out / "cd_plot.json").write_text(
                    cd_plot_data(labels, mean_ranks, cd, alpha) + "\n",
                    encoding="utf-8",
                )
            except ValueError as e:
                stats["note"] = str(e)
        else:
            stats["note"] = "need at least 2 complete datasets for the tests"
        report["statistics"] = stats

        baseline = "us-rbf" if "us-rbf" in labels else labels[0]
        report["baseline"] = baseline
        dur_rows, aulc_rows, targets = [], [], []
        for d in complete:
            base = curves[(d, baseline)]
            target = target_accuracy(base, float(base.budgets[-1]))
            targets.append(target)
            dur_rows.append([dur(curves[(d, l)], base, target) for l in labels])
            aulc_rows.append([aulc(curves[(d, l)], base) for l in labels])
        if complete:
            write_dur_csv(out / "dur.csv", complete, labels, dur_rows, targets)
            write_aulc_csv(out / "aulc.csv", complete, labels, aulc_rows)

    (out / "report.json").write_text(
        jsonio.dumps(report, indent=2) + "\n", encoding="utf-8"
    )
    return report
