"""Built-in benchmark datasets: bundled CSVs, synthetic generators, and
loaders for externally supplied data (Seeds CSV, MNIST IDX files).

Every entry point returns an unnormalized Dataset; callers decide when to
apply zscore_normalize. Generators are deterministic per seed.
"""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

import numpy as np

from .data import (
    Attribute,
    DataError,
    Dataset,
    Schema,
    load_dataset,
    load_idx,
)

__all__ = [
    "iris",
    "two_moons",
    "synth3",
    "seeds",
    "mnist",
    "builtin",
    "available",
    "SYNTH3_MEANS",
    "SYNTH3_COVS",
    "SYNTH3_WEIGHTS",
]

IRIS_SCHEMA = Schema(
    attributes=tuple(
        Attribute(name=n, kind="continuous")
        for n in ("sepal_length", "sepal_width", "petal_length", "petal_width")
    ),
    label_name="species",
    class_names=("setosa", "versicolor", "virginica"),
)

SEEDS_SCHEMA = Schema(
    attributes=tuple(
        Attribute(name=n, kind="continuous")
        for n in (
            "area",
            "perimeter",
            "compactness",
            "kernel_length",
            "kernel_width",
            "asymmetry",
            "groove_length",
        )
    ),
    label_name="variety",
    class_names=("kama", "rosa", "canadian"),
)


def _xy_schema(n_classes: int) -> Schema:
    return Schema(
        attributes=(
            Attribute(name="x1", kind="continuous"),
            Attribute(name="x2", kind="continuous"),
        ),
        label_name="class",
        class_names=tuple(f"c{i}" for i in range(n_classes)),
    )


def iris() -> Dataset:
    """150 samples, 4 continuous attributes, 3 balanced classes."""
    path = resources.files("activeseed").joinpath("builtin_data/iris.csv")
    with resources.as_file(path) as p:
        d = load_dataset(p, IRIS_SCHEMA, name="iris")
    d.source = "builtin:iris"
    return d


def two_moons(n: int = 800, noise: float = 0.1, seed: int = 0) -> Dataset:
    """Two interleaving half circles, n//2 samples per class."""
    rng = np.random.default_rng(seed)
    n_out = n // 2
    n_in = n - n_out
    t_out = rng.uniform(0.0, np.pi, n_out)
    t_in = rng.uniform(0.0, np.pi, n_in)
    outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
    inner = np.column_stack([1.0 - np.cos(t_in), 0.5 - np.sin(t_in)])
    x = np.vstack([outer, inner]) + rng.normal(0.0, noise, (n, 2))
    y = np.concatenate([np.zeros(n_out, dtype=np.int64), np.ones(n_in, dtype=np.int64)])
    order = rng.permutation(n)
    return Dataset(
        schema=_xy_schema(2),
        cont=x[order],
        cat=np.zeros((n, 0)),
        y=y[order],
        name="two_moons",
        source=f"builtin:two_moons(n={n}, noise={noise}, seed={seed})",
    )


SYNTH3_MEANS = np.array([[-1.0, 0.0], [0.0, 0.0], [1.0, 0.0]])
SYNTH3_COVS = np.array(
    [np.diag([0.50, 1.50]), np.diag([0.04, 0.03]), np.diag([0.50, 0.50])]
)
SYNTH3_WEIGHTS = np.array([1.0, 1.0, 1.0]) / 3.0


def synth3(n: int = 500, seed: int = 0) -> Dataset:
    """Three overlapping 2-D Gaussian processes, one class per component."""
    rng = np.random.default_rng(seed)
    comps = rng.choice(3, size=n, p=SYNTH3_WEIGHTS)
    x = np.empty((n, 2))
    for j in range(3):
        mask = comps == j
        x[mask] = rng.multivariate_normal(
            SYNTH3_MEANS[j], SYNTH3_COVS[j], size=int(mask.sum())
        )
    return Dataset(
        schema=_xy_schema(3),
        cont=x,
        cat=np.zeros((n, 0)),
        y=comps.astype(np.int64),
        name="synth3",
        source=f"builtin:synth3(n={n}, seed={seed})",
    )


def _data_dir() -> Path:
    return Path(os.environ.get("ACTIVESEED_DATA", "data"))


def seeds(path=None) -> Dataset:
    """UCI Seeds (210 samples, 7 attributes, 3 wheat varieties).

    Reads a header CSV at the given path, else $ACTIVESEED_DATA/seeds.csv.
    The dataset is not bundled; raises DataError when the file is absent.
    """
    p = Path(path) if path is not None else _data_dir() / "seeds.csv"
    if not p.exists():
        raise DataError(
            f"seeds data not found at {p}; supply the CSV (columns "
            f"{', '.join(a.name for a in SEEDS_SCHEMA.attributes)}, variety)"
        )
    return load_dataset(p, SEEDS_SCHEMA, name="seeds")


def mnist(directory=None, train: bool = True, limit: int | None = None) -> Dataset:
    """Handwritten digits from IDX files, flattened to 784 dims in [0,1].

    Looks in the given directory, else $ACTIVESEED_MNIST, else
    $ACTIVESEED_DATA/mnist. Not bundled; raises DataError when absent.
    """
    root = (
        Path(directory)
        if directory is not None
        else Path(os.environ.get("ACTIVESEED_MNIST", _data_dir() / "mnist"))
    )
    stem = "train" if train else "t10k"
    img_path = root / f"{stem}-images-idx3-ubyte"
    lab_path = root / f"{stem}-labels-idx1-ubyte"
    if not img_path.exists() or not lab_path.exists():
        raise DataError(
            f"MNIST IDX files not found under {root} "
            f"(expected {img_path.name}, {lab_path.name})"
        )
    images = load_idx(img_path)
    labels = load_idx(lab_path)
    if images.shape[0] != labels.shape[0]:
        raise DataError(f"{root}: image/label counts disagree")
    if limit is not None:
        images = images[:limit]
        labels = labels[:limit]
    n, rows, cols = images.shape
    schema = Schema(
        attributes=tuple(
            Attribute(name=f"p{i}", kind="continuous") for i in range(rows * cols)
        ),
        label_name="digit",
        class_names=tuple(str(d) for d in range(10)),
    )
    return Dataset(
        schema=schema,
        cont=images.reshape(n, rows * cols).astype(np.float64) / 255.0,
        cat=np.zeros((n, 0)),
        y=labels.astype(np.int64),
        name=f"mnist-{stem}",
        source=str(root),
    )


_BUILTIN = {
    "iris": lambda seed: iris(),
    "two_moons": lambda seed: two_moons(seed=seed),
    "synth3": lambda seed: synth3(seed=seed),
    "seeds": lambda seed: seeds(),
}


def available() -> list[str]:
    """Names accepted by builtin(); seeds requires external data."""
    return sorted(_BUILTIN)


def builtin(name: str, seed: int = 0) -> Dataset:
    try:
        factory = _BUILTIN[name]
    except KeyError:
        raise DataError(f"unknown dataset {name!r}; known: {available()}") from None
    return factory(seed)
