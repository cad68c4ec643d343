import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from activeseed import corpus
from activeseed.data import (
    Attribute,
    DataError,
    Dataset,
    Schema,
    apply_zscore,
    load_dataset,
    load_idx,
    load_schema,
    pca_project,
    stratified_kfold,
    zscore_normalize,
)


def make_dataset(cont, y, n_classes=None, cat=None, cat_sizes=()):
    cont = np.asarray(cont, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n_classes = n_classes or int(y.max()) + 1
    attrs = [Attribute(f"f{i}", "continuous") for i in range(cont.shape[1])]
    for d, k in enumerate(cat_sizes):
        attrs.append(
            Attribute(f"g{d}", "categorical", tuple(f"v{i}" for i in range(k)))
        )
    schema = Schema(
        tuple(attrs), "label", tuple(f"c{i}" for i in range(n_classes))
    )
    if cat is None:
        cat = np.zeros((len(y), 0))
    return Dataset(schema=schema, cont=cont, cat=np.asarray(cat, float), y=y)


# ---------------------------------------------------------------- schema


def test_schema_validation():
    with pytest.raises(DataError):
        Attribute("a", "categorical", ("only_one",))
    with pytest.raises(DataError):
        Attribute("a", "nonsense")
    with pytest.raises(DataError):
        Schema((), "label", ("c0", "c1"))
    with pytest.raises(DataError):
        Schema(
            (Attribute("a", "continuous"),), "label", ("c0", "c0")
        )


def test_schema_json_roundtrip(tmp_path):
    schema = Schema(
        (
            Attribute("height", "continuous"),
            Attribute("color", "categorical", ("red", "green", "blue")),
        ),
        "label",
        ("yes", "no"),
    )
    p = tmp_path / "schema.json"
    p.write_text(__import__("json").dumps(schema.to_json()))
    assert load_schema(p) == schema


# ---------------------------------------------------------------- loading


def test_load_iris_shape():
    d = corpus.iris()
    assert len(d) == 150
    assert d.schema.d_cont == 4
    assert d.schema.d_cat == 0
    assert d.schema.n_classes == 3
    assert np.array_equal(np.bincount(d.y), [50, 50, 50])


def test_load_empty_file_errors(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("a,label\n")
    schema = Schema((Attribute("a", "continuous"),), "label", ("c0", "c1"))
    with pytest.raises(DataError, match="no samples"):
        load_dataset(p, schema)
    p2 = tmp_path / "really_empty.csv"
    p2.write_text("")
    with pytest.raises(DataError, match="no samples"):
        load_dataset(p2, schema)


def test_one_of_k_encoding(tmp_path):
    p = tmp_path / "cat.csv"
    p.write_text("g,label\nb,c0\n")
    schema = Schema(
        (Attribute("g", "categorical", ("a", "b", "c")),), "label", ("c0", "c1")
    )
    d = load_dataset(p, schema)
    assert np.array_equal(d.cat[0], [0.0, 1.0, 0.0])


def test_load_reports_line_numbers(tmp_path):
    schema = Schema(
        (
            Attribute("a", "continuous"),
            Attribute("g", "categorical", ("x", "y")),
        ),
        "label",
        ("c0", "c1"),
    )
    p = tmp_path / "bad.csv"
    p.write_text("a,g,label\n1.0,x,c0\noops,x,c0\n")
    with pytest.raises(DataError, match=":3:"):
        load_dataset(p, schema)
    p.write_text("a,g,label\n1.0,z,c0\n")
    with pytest.raises(DataError, match="unknown category 'z'"):
        load_dataset(p, schema)
    p.write_text("a,g,label\n1.0,x,c9\n")
    with pytest.raises(DataError, match="unknown class name 'c9'"):
        load_dataset(p, schema)
    p.write_text("a,g,label\n1.0,x\n")
    with pytest.raises(DataError, match=":2:"):
        load_dataset(p, schema)


def test_header_mismatch(tmp_path):
    schema = Schema((Attribute("a", "continuous"),), "label", ("c0",))
    p = tmp_path / "h.csv"
    p.write_text("a,extra,label\n1.0,z,c0\n")
    with pytest.raises(DataError, match="unexpected columns"):
        load_dataset(p, schema)
    p.write_text("label\nc0\n")
    with pytest.raises(DataError, match="missing columns"):
        load_dataset(p, schema)


def test_unlabeled_rows_allowed(tmp_path):
    schema = Schema((Attribute("a", "continuous"),), "label", ("c0", "c1"))
    p = tmp_path / "u.csv"
    p.write_text("a,label\n1.0,c0\n2.0,\n")
    d = load_dataset(p, schema)
    assert d.y[0] == 0 and d.y[1] == -1
    assert d.sample(1).label is None


def test_decode_roundtrip(tmp_path):
    schema = Schema(
        (
            Attribute("a", "continuous"),
            Attribute("g", "categorical", ("x", "y", "z")),
        ),
        "label",
        ("c0", "c1"),
    )
    rows = [["1.5", "y", "c0"], ["-2", "z", "c1"], ["0.25", "x", "c0"]]
    p = tmp_path / "rt.csv"
    p.write_text("a,g,label\n" + "\n".join(",".join(r) for r in rows) + "\n")
    d = load_dataset(p, schema)
    for i, row in enumerate(rows):
        decoded = d.decode_row(i)
        assert decoded[1] == row[1]
        assert decoded[2] == row[2]
        assert float(decoded[0]) == float(row[0])


# ---------------------------------------------------------------- zscore


def test_zscore_simple_column():
    d = make_dataset([[1.0], [2.0], [3.0]], [0, 1, 0])
    z = zscore_normalize(d)
    assert np.allclose(z.cont[:, 0], [-1.0, 0.0, 1.0])
    assert z.normalized


def test_zscore_constant_column():
    d = make_dataset([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]], [0, 1, 0])
    z = zscore_normalize(d)
    assert np.array_equal(z.cont[:, 0], [0.0, 0.0, 0.0])
    assert z.norm_std[0] == 1.0


def test_zscore_moments():
    rng = np.random.default_rng(7)
    d = make_dataset(rng.normal(3.0, 2.5, (200, 1)), rng.integers(0, 2, 200))
    z = zscore_normalize(d)
    assert abs(z.cont[:, 0].mean()) < 1e-10
    assert abs(z.cont[:, 0].std(ddof=1) - 1.0) < 1e-10


def test_zscore_params_reproduce_bitwise():
    rng = np.random.default_rng(3)
    d = make_dataset(rng.normal(0, 1, (50, 3)), rng.integers(0, 2, 50))
    z = zscore_normalize(d)
    again = apply_zscore(d.cont, z.norm_mean, z.norm_std)
    assert np.array_equal(again, z.cont)


def test_zscore_twice_errors():
    d = make_dataset([[1.0], [2.0]], [0, 1])
    with pytest.raises(DataError, match="already normalized"):
        zscore_normalize(zscore_normalize(d))


# ---------------------------------------------------------------- folding


def test_iris_folds():
    splits = stratified_kfold(corpus.iris(), 5, seed=0)
    assert len(splits) == 5
    d = corpus.iris()
    for s in splits:
        assert len(s.test_ids) == 30
        assert np.array_equal(np.bincount(d.y[s.test_ids]), [10, 10, 10])
        assert len(np.intersect1d(s.test_ids, s.pool_ids)) == 0
        assert len(s.test_ids) + len(s.pool_ids) == 150


def test_fold_union_is_partition():
    d = corpus.two_moons(n=101, seed=5)
    splits = stratified_kfold(d, 4, seed=2)
    seen = np.concatenate([s.test_ids for s in splits])
    assert np.array_equal(np.sort(seen), np.arange(101))


def test_k_too_small_and_sparse_class():
    d = corpus.iris()
    with pytest.raises(DataError):
        stratified_kfold(d, 1, seed=0)
    tiny = make_dataset([[0.0], [1.0], [2.0]], [0, 0, 1])
    with pytest.raises(DataError, match="fewer than"):
        stratified_kfold(tiny, 2, seed=0)


def test_fold_determinism():
    d = corpus.synth3(n=200, seed=1)
    a = stratified_kfold(d, 5, seed=9)
    b = stratified_kfold(d, 5, seed=9)
    for s, t in zip(a, b):
        assert np.array_equal(s.test_ids, t.test_ids)


@settings(max_examples=30, deadline=None)
@given(
    counts=st.lists(st.integers(min_value=6, max_value=40), min_size=2, max_size=4),
    k=st.integers(min_value=2, max_value=5),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_stratification_within_one_sample(counts, k, seed):
    y = np.concatenate([np.full(c, i) for i, c in enumerate(counts)])
    d = make_dataset(np.arange(len(y), dtype=float)[:, None], y)
    shares = np.bincount(y) / len(y)
    for s in stratified_kfold(d, k, seed):
        fold_counts = np.bincount(d.y[s.test_ids], minlength=len(counts))
        assert np.all(np.abs(fold_counts - len(s.test_ids) * shares) <= 1.0 + 1e-9)


# ---------------------------------------------------------------- pca


def test_pca_full_basis_keeps_all_variance():
    rng = np.random.default_rng(0)
    d = make_dataset(rng.normal(0, 1, (80, 5)), rng.integers(0, 2, 80))
    res = pca_project(d, 5)
    assert abs(res.retained_variance - 1.0) < 1e-9


def test_pca_dominant_direction():
    rng = np.random.default_rng(1)
    t = rng.normal(0, 3, 300)
    noise = rng.normal(0, 0.01, (300, 2))
    x = np.column_stack([t, t]) / np.sqrt(2) + noise
    d = make_dataset(x, rng.integers(0, 2, 300))
    res = pca_project(d, 1)
    assert res.retained_variance > 0.99


def test_pca_orthonormal_components():
    rng = np.random.default_rng(2)
    d = make_dataset(rng.normal(0, 1, (60, 6)), rng.integers(0, 2, 60))
    res = pca_project(d, 4)
    gram = res.components.T @ res.components
    assert np.max(np.abs(gram - np.eye(4))) < 1e-9


def test_pca_sign_convention_and_errors():
    rng = np.random.default_rng(3)
    d = make_dataset(rng.normal(0, 1, (40, 3)), rng.integers(0, 2, 40))
    res = pca_project(d, 3)
    for j in range(3):
        lead = np.argmax(np.abs(res.components[:, j]))
        assert res.components[lead, j] > 0
    with pytest.raises(DataError):
        pca_project(d, 0)
    with pytest.raises(DataError):
        pca_project(d, 4)


# ---------------------------------------------------------------- idx


def _write_idx_images(path, arr):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x00000803, *arr.shape))
        fh.write(arr.astype(np.uint8).tobytes())


def _write_idx_labels(path, arr):
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x00000801, arr.shape[0]))
        fh.write(arr.astype(np.uint8).tobytes())


def test_idx_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    images = rng.integers(0, 256, (7, 5, 4), dtype=np.uint8)
    labels = rng.integers(0, 10, 7, dtype=np.uint8)
    _write_idx_images(tmp_path / "imgs", images)
    _write_idx_labels(tmp_path / "labs", labels)
    assert np.array_equal(load_idx(tmp_path / "imgs"), images)
    assert np.array_equal(load_idx(tmp_path / "labs"), labels)


def test_idx_bad_magic(tmp_path):
    p = tmp_path / "junk"
    p.write_bytes(struct.pack(">I", 0xDEADBEEF) + b"\x00" * 16)
    with pytest.raises(DataError, match="magic"):
        load_idx(p)


def test_mnist_loader_via_idx(tmp_path):
    rng = np.random.default_rng(5)
    images = rng.integers(0, 256, (12, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, 12, dtype=np.uint8)
    _write_idx_images(tmp_path / "train-images-idx3-ubyte", images)
    _write_idx_labels(tmp_path / "train-labels-idx1-ubyte", labels)
    d = corpus.mnist(tmp_path, train=True, limit=10)
    assert len(d) == 10
    assert d.schema.d_cont == 784
    assert d.cont.max() <= 1.0 and d.cont.min() >= 0.0
    assert np.array_equal(d.y, labels[:10])


# ---------------------------------------------------------------- corpus


def test_two_moons_balance_and_determinism():
    a = corpus.two_moons(n=800, seed=11)
    b = corpus.two_moons(n=800, seed=11)
    assert np.array_equal(a.cont, b.cont)
    assert np.array_equal(np.bincount(a.y), [400, 400])


def test_synth3_matches_generator_moments():
    d = corpus.synth3(n=20000, seed=0)
    for j in range(3):
        mask = d.y == j
        assert np.linalg.norm(d.cont[mask].mean(axis=0) - corpus.SYNTH3_MEANS[j]) < 0.05
        emp = np.cov(d.cont[mask], rowvar=False)
        assert np.max(np.abs(emp - corpus.SYNTH3_COVS[j])) < 0.1


def test_builtin_registry():
    assert "iris" in corpus.available()
    d = corpus.builtin("two_moons", seed=2)
    assert d.name == "two_moons"
    with pytest.raises(DataError, match="unknown dataset"):
        corpus.builtin("nope")


def test_seeds_missing_file_message(tmp_path):
    with pytest.raises(DataError, match="seeds data not found"):
        corpus.seeds(tmp_path / "absent.csv")
