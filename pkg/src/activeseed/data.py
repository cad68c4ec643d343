"""Dataset loading, encoding, normalization, splitting, and projection.

Defines the on-disk schema (CSV + JSON schema, IDX for image smoke runs)
and the in-memory sample containers every other module consumes. Feature
vectors carry a continuous part and a 1-of-K binary-encoded categorical
part; class labels are integer indices into the schema's class list.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "Attribute",
    "Schema",
    "Sample",
    "SampleBlock",
    "Dataset",
    "FoldSplit",
    "PcaResult",
    "DataError",
    "load_schema",
    "load_dataset",
    "zscore_normalize",
    "apply_zscore",
    "stratified_kfold",
    "pca_project",
    "load_idx",
]

UNLABELED = -1


class DataError(ValueError):
    """Raised for malformed schemas, rows, categories, or class names."""


@dataclass(frozen=True)
class Attribute:
    """One input column: continuous, or categorical with named categories."""

    name: str
    kind: str  # "continuous" | "categorical"
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise DataError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and len(self.categories) < 2:
            raise DataError(
                f"attribute {self.name!r}: categorical needs >= 2 categories"
            )
        if self.kind == "continuous" and self.categories:
            raise DataError(f"attribute {self.name!r}: continuous takes no categories")


@dataclass(frozen=True)
class Schema:
    """Column layout: feature attributes plus the class-label column."""

    attributes: tuple[Attribute, ...]
    label_name: str
    class_names: tuple[str, ...]

    def __post_init__(self):
        if not self.attributes:
            raise DataError("schema needs at least one feature attribute")
        if len(set(self.class_names)) != len(self.class_names):
            raise DataError("class names must be unique")
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise DataError("attribute names must be unique")

    @property
    def continuous(self) -> tuple[Attribute, ...]:
        return tuple(a for a in self.attributes if a.kind == "continuous")

    @property
    def categorical(self) -> tuple[Attribute, ...]:
        return tuple(a for a in self.attributes if a.kind == "categorical")

    @property
    def d_cont(self) -> int:
        return len(self.continuous)

    @property
    def d_cat(self) -> int:
        return len(self.categorical)

    @property
    def cat_sizes(self) -> tuple[int, ...]:
        """K_d per categorical attribute, in attribute order."""
        return tuple(len(a.categories) for a in self.categorical)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def to_json(self) -> dict:
        return {
            "attributes": [
                {"name": a.name, "kind": a.kind}
                if a.kind == "continuous"
                else {"name": a.name, "kind": a.kind, "categories": list(a.categories)}
                for a in self.attributes
            ],
            "label": {"name": self.label_name, "classes": list(self.class_names)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Schema":
        try:
            attrs = tuple(
                Attribute(
                    name=a["name"],
                    kind=a["kind"],
                    categories=tuple(a.get("categories", ())),
                )
                for a in obj["attributes"]
            )
            label = obj["label"]
            return cls(attrs, label["name"], tuple(label["classes"]))
        except (KeyError, TypeError) as exc:
            raise DataError(f"invalid schema document: {exc}") from exc


@dataclass(frozen=True)
class Sample:
    """A single observation: continuous part, 1-of-K categorical part, label."""

    id: int
    cont: np.ndarray
    cat: np.ndarray
    label: int | None


@dataclass(frozen=True)
class SampleBlock:
    """Matrix view over a set of samples; the currency of the numeric modules.

    ``cont`` is (n, d_cont); ``cat`` is (n, sum K_d) binary under 1-of-K
    coding; ``y`` holds class indices with -1 for unlabeled; ``ids`` are the
    row ids in the originating dataset.
    """

    cont: np.ndarray
    cat: np.ndarray
    cat_sizes: tuple[int, ...]
    y: np.ndarray
    ids: np.ndarray

    def __len__(self) -> int:
        return self.cont.shape[0]

    @property
    def d_cont(self) -> int:
        return self.cont.shape[1]

    @property
    def cat_codes(self) -> np.ndarray:
        """(n, d_cat) category indices recovered from the binary coding."""
        codes = np.empty((len(self), len(self.cat_sizes)), dtype=np.int64)
        off = 0
        for d, k in enumerate(self.cat_sizes):
            codes[:, d] = np.argmax(self.cat[:, off : off + k], axis=1)
            off += k
        return codes

    def take(self, rows) -> "SampleBlock":
        rows = np.asarray(rows, dtype=np.int64)
        return SampleBlock(
            self.cont[rows], self.cat[rows], self.cat_sizes, self.y[rows], self.ids[rows]
        )


@dataclass
class Dataset:
    """Schema + sample matrices + provenance."""

    schema: Schema
    cont: np.ndarray  # (n, d_cont) float64
    cat: np.ndarray  # (n, sum K_d) float64 binary
    y: np.ndarray  # (n,) int64, -1 where unlabeled
    name: str = "unnamed"
    source: str = ""
    normalized: bool = False
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None

    def __post_init__(self):
        n = self.cont.shape[0]
        if self.cat.shape[0] != n or self.y.shape[0] != n:
            raise DataError("sample arrays disagree on length")
        if self.cont.shape[1] != self.schema.d_cont:
            raise DataError("continuous width does not match schema")
        if self.cat.shape[1] != sum(self.schema.cat_sizes):
            raise DataError("categorical width does not match schema")
        if not np.all(np.isfinite(self.cont)):
            raise DataError("continuous entries must be finite")
        off = 0
        for attr, k in zip(self.schema.categorical, self.schema.cat_sizes):
            block = self.cat[:, off : off + k]
            if not np.array_equal(np.sum(block, axis=1), np.ones(n)):
                raise DataError(f"attribute {attr.name!r}: 1-of-K block must have one 1")
            off += k

    def __len__(self) -> int:
        return self.cont.shape[0]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64)

    def sample(self, i: int) -> Sample:
        label = int(self.y[i])
        return Sample(
            id=i,
            cont=self.cont[i].copy(),
            cat=self.cat[i].copy(),
            label=None if label == UNLABELED else label,
        )

    def block(self, rows=None) -> SampleBlock:
        if rows is None:
            rows = self.ids
        rows = np.asarray(rows, dtype=np.int64)
        return SampleBlock(
            cont=self.cont[rows],
            cat=self.cat[rows],
            cat_sizes=self.schema.cat_sizes,
            y=self.y[rows],
            ids=rows.copy(),
        )

    def decode_row(self, i: int) -> list[str]:
        """Reproduce the source row (feature values + class name) for sample i."""
        values: list[str] = []
        ci = 0
        off = 0
        codes = None
        for attr in self.schema.attributes:
            if attr.kind == "continuous":
                values.append(format(float(self.cont[i, ci]), "g"))
                ci += 1
            else:
                k = len(attr.categories)
                code = int(np.argmax(self.cat[i, off : off + k]))
                values.append(attr.categories[code])
                off += k
        label = int(self.y[i])
        values.append("" if label == UNLABELED else self.schema.class_names[label])
        return values


@dataclass(frozen=True)
class FoldSplit:
    """One cross-validation fold: held-out test ids and the remaining pool."""

    fold: int
    test_ids: np.ndarray
    pool_ids: np.ndarray


def load_schema(path) -> Schema:
    with open(path, "r", encoding="utf-8") as fh:
        return Schema.from_json(json.load(fh))


def load_dataset(path, schema: Schema, name: str | None = None) -> Dataset:
    """Parse a header CSV into a Dataset, applying the 1-of-K encoding.

    The header must contain every schema attribute plus the label column;
    extra columns are rejected. Errors report 1-based line numbers.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: no samples (empty file)") from None
        header = [h.strip() for h in header]
        wanted = [a.name for a in schema.attributes] + [schema.label_name]
        missing = [w for w in wanted if w not in header]
        if missing:
            raise DataError(f"{path}: header missing columns {missing}")
        extra = [h for h in header if h not in wanted]
        if extra:
            raise DataError(f"{path}: unexpected columns {extra}")
        col = {name_: header.index(name_) for name_ in wanted}

        cont_rows: list[list[float]] = []
        cat_rows: list[list[float]] = []
        labels: list[int] = []
        class_index = {c: i for i, c in enumerate(schema.class_names)}
        cat_index = {
            a.name: {c: i for i, c in enumerate(a.categories)}
            for a in schema.categorical
        }
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            cont_vals = []
            cat_vals = []
            for attr in schema.attributes:
                cell = row[col[attr.name]].strip()
                if attr.kind == "continuous":
                    try:
                        cont_vals.append(float(cell))
                    except ValueError:
                        raise DataError(
                            f"{path}:{lineno}: bad number {cell!r} in {attr.name!r}"
                        ) from None
                else:
                    try:
                        code = cat_index[attr.name][cell]
                    except KeyError:
                        raise DataError(
                            f"{path}:{lineno}: unknown category {cell!r} "
                            f"for {attr.name!r}"
                        ) from None
                    onehot = [0.0] * len(attr.categories)
                    onehot[code] = 1.0
                    cat_vals.extend(onehot)
            cell = row[col[schema.label_name]].strip()
            if cell == "":
                labels.append(UNLABELED)
            else:
                try:
                    labels.append(class_index[cell])
                except KeyError:
                    raise DataError(
                        f"{path}:{lineno}: unknown class name {cell!r}"
                    ) from None
            cont_rows.append(cont_vals)
            cat_rows.append(cat_vals)

    if not cont_rows:
        raise DataError(f"{path}: no samples")
    return Dataset(
        schema=schema,
        cont=np.asarray(cont_rows, dtype=np.float64).reshape(len(cont_rows), -1),
        cat=np.asarray(cat_rows, dtype=np.float64).reshape(len(cat_rows), -1),
        y=np.asarray(labels, dtype=np.int64),
        name=name or str(path),
        source=str(path),
    )


def apply_zscore(cont: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Apply recorded normalization parameters to raw continuous data."""
    return (cont - mean) / std


def zscore_normalize(d: Dataset) -> Dataset:
    """Normalize each continuous dimension to mean 0, sample std 1 (n-1).

    Constant columns map to all-zeros (their std is recorded as 1).
    Categorical dimensions are untouched; parameters land in provenance.
    """
    if d.normalized:
        raise DataError(f"dataset {d.name!r} is already normalized")
    if d.schema.d_cont == 0:
        return replace(d, normalized=True,
                       norm_mean=np.zeros(0), norm_std=np.ones(0))
    mean = d.cont.mean(axis=0)
    std = d.cont.std(axis=0, ddof=1) if len(d) > 1 else np.zeros(d.schema.d_cont)
    std = np.where(std > 0.0, std, 1.0)
    return replace(
        d,
        cont=apply_zscore(d.cont, mean, std),
        normalized=True,
        norm_mean=mean,
        norm_std=std,
    )


def stratified_kfold(d: Dataset, k: int, seed: int) -> list[FoldSplit]:
    """Deal each class round-robin into k folds after a seeded shuffle.

    Per-class fold counts differ by at most one sample, so class shares per
    fold stay within one sample of the global shares.
    """
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if np.any(d.y == UNLABELED):
        raise DataError("stratified split needs fully labeled data")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for c in range(d.schema.n_classes):
        members = np.flatnonzero(d.y == c)
        if len(members) and len(members) < k:
            raise DataError(
                f"class {d.schema.class_names[c]!r} has {len(members)} members, "
                f"fewer than k={k}"
            )
        rng.shuffle(members)
        for pos, idx in enumerate(members):
            folds[pos % k].append(int(idx))
    all_ids = set(range(len(d)))
    out = []
    for f in range(k):
        test = np.asarray(sorted(folds[f]), dtype=np.int64)
        pool = np.asarray(sorted(all_ids - set(folds[f])), dtype=np.int64)
        out.append(FoldSplit(fold=f, test_ids=test, pool_ids=pool))
    return out


@dataclass(frozen=True)
class PcaResult:
    dataset: Dataset
    retained_variance: float
    components: np.ndarray  # (d_cont, target), orthonormal columns
    eigenvalues: np.ndarray  # all d_cont eigenvalues, descending


def pca_project(d: Dataset, target: int) -> PcaResult:
    """Project onto the leading principal components of the covariance.

    Components are ordered by descending eigenvalue with the sign fixed so
    each component's largest-magnitude loading is positive.
    """
    if d.schema.d_cat != 0:
        raise DataError("pca_project requires a fully continuous dataset")
    if target == 0:
        raise DataError("target dimension must be >= 1")
    if target > d.schema.d_cont:
        raise DataError(f"target {target} exceeds d_cont {d.schema.d_cont}")
    centered = d.cont - d.cont.mean(axis=0)
    cov = np.cov(centered, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    evecs = evecs[:, order]
    for j in range(evecs.shape[1]):
        lead = np.argmax(np.abs(evecs[:, j]))
        if evecs[lead, j] < 0:
            evecs[:, j] = -evecs[:, j]
    comps = evecs[:, :target]
    total = float(np.sum(evals))
    retained = 1.0 if total == 0.0 else float(np.sum(evals[:target]) / total)
    schema = Schema(
        attributes=tuple(
            Attribute(name=f"pc{j + 1}", kind="continuous") for j in range(target)
        ),
        label_name=d.schema.label_name,
        class_names=d.schema.class_names,
    )
    projected = Dataset(
        schema=schema,
        cont=centered @ comps,
        cat=np.zeros((len(d), 0)),
        y=d.y.copy(),
        name=f"{d.name}-pca{target}",
        source=d.source,
        normalized=d.normalized,
    )
    return PcaResult(projected, retained, comps, evals)


_IDX_IMAGES = 0x00000803
_IDX_LABELS = 0x00000801


def load_idx(path) -> np.ndarray:
    """Read a big-endian IDX file: images -> (n, rows, cols), labels -> (n,)."""
    with open(path, "rb") as fh:
        magic = struct.unpack(">I", fh.read(4))[0]
        if magic == _IDX_IMAGES:
            n, rows, cols = struct.unpack(">III", fh.read(12))
            data = np.frombuffer(fh.read(n * rows * cols), dtype=np.uint8)
            if data.size != n * rows * cols:
                raise DataError(f"{path}: truncated image payload")
            return data.reshape(n, rows, cols)
        if magic == _IDX_LABELS:
            (n,) = struct.unpack(">I", fh.read(4))
            data = np.frombuffer(fh.read(n), dtype=np.uint8)
            if data.size != n:
                raise DataError(f"{path}: truncated label payload")
            return data
        raise DataError(f"{path}: unknown IDX magic 0x{magic:08x}")
