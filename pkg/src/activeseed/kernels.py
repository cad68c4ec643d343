"""Kernel functions and Gram-matrix construction for the SVM solver.

Two families: the data-independent RBF kernel, and the mixture-aware kernel
that weights per-component Mahalanobis distances by the components'
responsibilities for the two samples. Mixed continuous/categorical data
adds a categorical mismatch count with separate weights for the two parts.

Distances are independent of the kernel width, so the factory caches them
once per pool and re-exponentiates for every (gamma, alpha, beta) choice a
grid search visits.

Similarities below machine epsilon of the unit self-similarity are flushed
to exact zero: the denormal tail of exp(-gamma d^2) otherwise acts as a
hidden nearest-neighbour rule at extreme widths, where a Gram matrix equal
to the identity still yields sign-varying decision values.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .data import Sample, SampleBlock
from .mixture import MixtureModel, responsibilities

__all__ = [
    "KernelSpec",
    "GramMatrix",
    "KernelFactory",
    "rbf_kernel",
    "mahalanobis",
    "rwm_distance",
    "rwm_kernel",
    "rwm_kernel_mixed",
    "gram",
    "cross_kernel",
    "clip_spectrum",
    "save_gram",
    "load_gram",
]

KERNEL_KINDS = ("rbf", "rwm")

_EPS = float(np.finfo(np.float64).eps)


def _flush_noise(k):
    """Zero out similarities smaller than machine epsilon."""
    return np.where(k < _EPS, 0.0, k)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus width and mixed-form weights."""

    kind: str
    gamma: float
    alpha: float = 1.0
    beta: float = 1.0
    spectral_clip: bool = False

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be > 0")
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha and beta must lie in [0, 1]")


@dataclass
class GramMatrix:
    """Symmetric kernel matrix with the sample ids labeling its rows."""

    values: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.ids = np.asarray(self.ids, dtype=np.int64)
        n = self.values.shape[0]
        if self.values.shape != (n, n) or self.ids.shape != (n,):
            raise ValueError("gram matrix must be square with matching ids")
        if not np.array_equal(self.values, self.values.T):
            raise ValueError("gram matrix must be symmetric")

    def __len__(self) -> int:
        return self.values.shape[0]


def _parts(x) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(x, Sample):
        return np.asarray(x.cont, float), np.asarray(x.cat, float)
    arr = np.asarray(x, dtype=np.float64).ravel()
    return arr, np.zeros(0)


def rbf_kernel(gamma: float, a, b) -> float:
    """exp(-gamma * ||a - b||^2) over the full feature vector."""
    ac, acat = _parts(a)
    bc, bcat = _parts(b)
    av = np.concatenate([ac, acat])
    bv = np.concatenate([bc, bcat])
    return float(_flush_noise(np.exp(-gamma * np.sum((av - bv) ** 2))))


def mahalanobis(sigma_inv: np.ndarray, a, b) -> float:
    """sqrt((a-b)^T Sigma^-1 (a-b)) for an SPD inverse covariance."""
    ac, _ = _parts(a)
    bc, _ = _parts(b)
    diff = ac - bc
    return float(np.sqrt(diff @ np.asarray(sigma_inv, float) @ diff))


def _resp_pair(m: MixtureModel, ac, acat, bc, bcat) -> np.ndarray:
    width = sum(m.cat_sizes)
    blk = SampleBlock(
        cont=np.vstack([ac, bc]),
        cat=np.vstack([acat, bcat]) if width else np.zeros((2, 0)),
        cat_sizes=m.cat_sizes,
        y=np.full(2, -1, dtype=np.int64),
        ids=np.arange(2),
    )
    return responsibilities(m, blk)


def rwm_distance(m: MixtureModel, a, b) -> float:
    """Responsibility-weighted sum of per-component Mahalanobis distances."""
    ac, acat = _parts(a)
    bc, bcat = _parts(b)
    rho = _resp_pair(m, ac, acat, bc, bcat)
    total = 0.0
    for j in range(m.n_components):
        z = solve_triangular(m._chols[j], ac - bc, lower=True)
        total += 0.5 * (rho[0, j] + rho[1, j]) * float(np.sqrt(z @ z))
    return total


def rwm_kernel(m: MixtureModel, gamma: float, a, b) -> float:
    return float(_flush_noise(np.exp(-gamma * rwm_distance(m, a, b) ** 2)))


def _code_mismatches(cat_sizes, acat: np.ndarray, bcat: np.ndarray) -> int:
    count = 0
    off = 0
    for k_d in cat_sizes:
        ca = int(np.argmax(acat[off : off + k_d]))
        cb = int(np.argmax(bcat[off : off + k_d]))
        count += ca != cb
        off += k_d
    return count


def rwm_kernel_mixed(
    m: MixtureModel, gamma: float, alpha: float, beta: float, a, b
) -> float:
    """exp(-gamma (alpha d_cont^2 + beta d_cat^2)); d_cat counts categorical
    attributes whose categories differ."""
    ac, acat = _parts(a)
    bc, bcat = _parts(b)
    d_cont = rwm_distance(m, a, b)
    d_cat = _code_mismatches(m.cat_sizes, acat, bcat)
    k = np.exp(-gamma * (alpha * d_cont**2 + beta * float(d_cat) ** 2))
    return float(_flush_noise(k))


def _pairwise_sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sq_a = np.sum(a * a, axis=1)[:, None]
    sq_b = np.sum(b * b, axis=1)[None, :]
    d2 = sq_a + sq_b - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


class KernelFactory:
    """Distance caches for one pool; kernels materialize per KernelSpec.

    Bound to the full dataset block so every Gram or cross matrix is a row
    selection. The width-independent distance matrices are computed lazily
    once and shared across all gamma/alpha/beta combinations.
    """

    def __init__(self, kind: str, block: SampleBlock, model: MixtureModel | None = None):
        if kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {kind!r}")
        if kind == "rwm":
            if model is None:
                raise ValueError("rwm kernel requires a mixture model")
            if model.d_cont != block.d_cont or model.cat_sizes != block.cat_sizes:
                raise ValueError("mixture model does not match the data layout")
        self.kind = kind
        self.block = block
        self.model = model
        self._sq_cont: np.ndarray | None = None  # rbf: squared euclidean
        self._d_rwm: np.ndarray | None = None  # rwm: weighted distance (not squared)
        self._d_cat2: np.ndarray | None = None  # squared categorical mismatch count

    def _full_features(self) -> np.ndarray:
        return np.hstack([self.block.cont, self.block.cat])

    def _ensure_distances(self) -> None:
        if self.kind == "rbf":
            if self._sq_cont is None:
                feats = self._full_features()
                self._sq_cont = _pairwise_sq_dists(feats, feats)
            return
        if self._d_rwm is None:
            m = self.model
            n = len(self.block)
            rho = responsibilities(m, self.block)
            d = np.zeros((n, n))
            for j in range(m.n_components):
                if m.d_cont:
                    z = solve_triangular(
                        m._chols[j], self.block.cont.T, lower=True
                    ).T
                    maha = np.sqrt(_pairwise_sq_dists(z, z))
                else:
                    maha = np.zeros((n, n))
                w = 0.5 * (rho[:, j][:, None] + rho[:, j][None, :])
                d += w * maha
            self._d_rwm = d
        if self.block.cat_sizes and self._d_cat2 is None:
            codes = self.block.cat_codes
            mismatches = np.zeros((len(self.block), len(self.block)))
            for col in range(codes.shape[1]):
                c = codes[:, col]
                mismatches += (c[:, None] != c[None, :]).astype(np.float64)
            self._d_cat2 = mismatches**2

    def _kernel_block(self, rows: np.ndarray, cols: np.ndarray, spec: KernelSpec):
        self._ensure_distances()
        if self.kind == "rbf":
            d2 = self._sq_cont[np.ix_(rows, cols)]
            return _flush_noise(np.exp(-spec.gamma * d2))
        d2 = self._d_rwm[np.ix_(rows, cols)] ** 2
        if self.block.cat_sizes:
            d2 = spec.alpha * d2 + spec.beta * self._d_cat2[np.ix_(rows, cols)]
        return _flush_noise(np.exp(-spec.gamma * d2))

    def gram(self, ids, spec: KernelSpec) -> GramMatrix:
        ids = np.asarray(ids, dtype=np.int64)
        values = self._kernel_block(ids, ids, spec)
        values = np.triu(values)  # mirror the upper triangle: exact symmetry
        values = values + np.triu(values, 1).T
        np.fill_diagonal(values, 1.0)
        if spec.spectral_clip:
            values = _clip_values(values)
        return GramMatrix(values=values, ids=ids)

    def cross(self, ids_a, ids_b, spec: KernelSpec) -> np.ndarray:
        ids_a = np.asarray(ids_a, dtype=np.int64)
        ids_b = np.asarray(ids_b, dtype=np.int64)
        return self._kernel_block(ids_a, ids_b, spec)


def gram(
    spec: KernelSpec, block: SampleBlock, model: MixtureModel | None = None
) -> GramMatrix:
    """One-shot Gram matrix over a block (factory built and discarded)."""
    if len(block) < 1:
        raise ValueError("need at least one sample")
    factory = KernelFactory(spec.kind, block, model)
    return factory.gram(np.arange(len(block)), spec)


def cross_kernel(
    spec: KernelSpec,
    a: SampleBlock,
    b: SampleBlock,
    model: MixtureModel | None = None,
) -> np.ndarray:
    """(|a|, |b|) kernel matrix between two blocks, vectorized.

    Serves out-of-pool evaluation (test folds, interactive queries); the
    factory only caches distances within its own pool.
    """
    if a.cat_sizes != b.cat_sizes or a.d_cont != b.d_cont:
        raise ValueError("blocks disagree on the attribute layout")
    if spec.kind == "rbf":
        fa = np.hstack([a.cont, a.cat])
        fb = np.hstack([b.cont, b.cat])
        return _flush_noise(np.exp(-spec.gamma * _pairwise_sq_dists(fa, fb)))
    if model is None:
        raise ValueError("rwm kernel requires a mixture model")
    rho_a = responsibilities(model, a)
    rho_b = responsibilities(model, b)
    d = np.zeros((len(a), len(b)))
    for j in range(model.n_components):
        if model.d_cont:
            za = solve_triangular(model._chols[j], a.cont.T, lower=True).T
            zb = solve_triangular(model._chols[j], b.cont.T, lower=True).T
            maha = np.sqrt(_pairwise_sq_dists(za, zb))
        else:
            maha = np.zeros((len(a), len(b)))
        d += 0.5 * (rho_a[:, j][:, None] + rho_b[:, j][None, :]) * maha
    d2 = d**2
    if a.cat_sizes:
        ca, cb = a.cat_codes, b.cat_codes
        mismatches = np.zeros((len(a), len(b)))
        for col in range(ca.shape[1]):
            mismatches += (ca[:, col][:, None] != cb[:, col][None, :]).astype(
                np.float64
            )
        d2 = spec.alpha * d2 + spec.beta * mismatches**2
    return _flush_noise(np.exp(-spec.gamma * d2))


def _clip_values(values: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(values)
    clipped = (evecs * np.maximum(evals, 0.0)) @ evecs.T
    clipped = 0.5 * (clipped + clipped.T)
    return clipped


def clip_spectrum(gm: GramMatrix) -> GramMatrix:
    """Repair an indefinite matrix by clipping negative eigenvalues to 0.

    Off by default everywhere; the solver takes indefinite matrices as-is.
    """
    values = _clip_values(gm.values)
    return GramMatrix(values=values, ids=gm.ids.copy())


_GRAM_MAGIC = b"ASGRAM01"


def save_gram(path, gm: GramMatrix) -> None:
    """Binary export: 8-byte magic, little-endian uint64 n, then row-major
    little-endian float64 values."""
    with open(path, "wb") as fh:
        fh.write(_GRAM_MAGIC)
        fh.write(struct.pack("<Q", len(gm)))
        fh.write(np.ascontiguousarray(gm.values, dtype="<f8").tobytes())


def load_gram(path, ids=None) -> GramMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _GRAM_MAGIC:
            raise ValueError(f"{path}: not a gram matrix file")
        (n,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(n * n * 8), dtype="<f8")
        if data.size != n * n:
            raise ValueError(f"{path}: truncated payload")
    values = data.reshape(n, n).astype(np.float64)
    if ids is None:
        ids = np.arange(n, dtype=np.int64)
    return GramMatrix(values=values, ids=ids)
