"""Probabilistic structure capture over (un)labeled pools.

A mixture model couples a Gaussian per component on the continuous
dimensions with one categorical distribution per discrete attribute. Models
are estimated by conjugate variational Bayes (Dirichlet prior on weights,
Gaussian-Wishart on mean/precision, Dirichlet on the categorical
distributions) with automatic component pruning, then frozen to plug-in
point estimates for downstream use (densities, responsibilities, kernels,
generative classifiers, transductive refinement).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, logsumexp, multigammaln

from .data import SampleBlock

__all__ = [
    "MixtureModel",
    "ViConfig",
    "CmmSha",
    "CmmSep",
    "train_vi",
    "responsibilities",
    "log_density",
    "density",
    "sample_mixture",
    "silverman_bandwidth",
    "parzen_model",
    "representativity",
    "fit_cmm_sha",
    "classify_cmm_sha",
    "fit_cmm_sep",
    "classify_cmm_sep",
    "refine_transductive",
    "model_to_json",
    "model_from_json",
]

_LOG_2PI = np.log(2.0 * np.pi)


def _spd_cholesky(cov: np.ndarray, var_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Cholesky of cov, adding eps*I (doubling) until it succeeds."""
    eps = 1e-6 * (var_scale if var_scale > 0.0 else 1.0)
    attempt = cov
    for _ in range(40):
        try:
            return attempt, np.linalg.cholesky(attempt)
        except np.linalg.LinAlgError:
            attempt = attempt + eps * np.eye(cov.shape[0])
            eps *= 2.0
    raise np.linalg.LinAlgError("covariance could not be regularized to SPD")


@dataclass
class MixtureModel:
    """Frozen mixture: weights, Gaussian components, categorical tables.

    ``deltas`` holds the per-attribute categorical distributions flattened
    to one (J, sum K_d) matrix in attribute order; ``cat_sizes`` gives the
    block widths. Continuous-only models have empty deltas; categorical-only
    models have d_cont = 0.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    cat_sizes: tuple[int, ...] = ()
    deltas: np.ndarray | None = None
    elbo_traces: tuple[tuple[float, ...], ...] = ()
    _chols: np.ndarray = field(init=False, repr=False)
    _logdets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.covs = np.asarray(self.covs, dtype=np.float64)
        j = self.weights.shape[0]
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("component weights must sum to 1")
        if np.any(self.weights < 0.0):
            raise ValueError("component weights must be non-negative")
        d = self.means.shape[1] if self.means.ndim == 2 else 0
        self.means = self.means.reshape(j, d)
        self.covs = self.covs.reshape(j, d, d)
        chols = np.empty_like(self.covs)
        logdets = np.empty(j)
        for k in range(j):
            if d:
                chols[k] = np.linalg.cholesky(self.covs[k])  # SPD or raise
                logdets[k] = 2.0 * np.sum(np.log(np.diag(chols[k])))
            else:
                logdets[k] = 0.0
        self._chols = chols
        self._logdets = logdets
        if self.deltas is None:
            self.deltas = np.zeros((j, sum(self.cat_sizes)))
        self.deltas = np.asarray(self.deltas, dtype=np.float64).reshape(
            j, sum(self.cat_sizes)
        )
        off = 0
        for k_d in self.cat_sizes:
            block = self.deltas[:, off : off + k_d]
            if np.any(block < 0.0) or np.max(np.abs(block.sum(axis=1) - 1.0)) > 1e-9:
                raise ValueError("each categorical table row must be a distribution")
            off += k_d

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def d_cont(self) -> int:
        return self.means.shape[1]

    def log_component_density(self, cont: np.ndarray, cat: np.ndarray) -> np.ndarray:
        """(n, J) matrix of log p(x|j)."""
        n = cont.shape[0]
        j = self.n_components
        out = np.zeros((n, j))
        d = self.d_cont
        if d:
            out += self._gaussian_loglik(cont)
        if self.cat_sizes:
            with np.errstate(divide="ignore"):
                logd = np.log(self.deltas)
            logd[np.isneginf(logd)] = -np.inf
            out += cat @ logd.T
        return out

    def _gaussian_loglik(self, cont: np.ndarray) -> np.ndarray:
        from scipy.linalg import solve_triangular

        n = cont.shape[0]
        j = self.n_components
        d = self.d_cont
        out = np.empty((n, j))
        for k in range(j):
            z = solve_triangular(
                self._chols[k], (cont - self.means[k]).T, lower=True
            )
            out[:, k] = -0.5 * (d * _LOG_2PI + self._logdets[k] + np.sum(z * z, axis=0))
        return out

    def log_joint(self, cont: np.ndarray, cat: np.ndarray) -> np.ndarray:
        """(n, J) matrix of log(pi_j p(x|j))."""
        with np.errstate(divide="ignore"):
            logw = np.log(self.weights)
        return self.log_component_density(cont, cat) + logw


@dataclass(frozen=True)
class ViConfig:
    """Estimation knobs: initial size, prior strengths, stopping, pruning."""

    j_max: int = 10
    weight_concentration: float | None = None  # alpha0; default 1/j_max
    mean_scale: float = 1.0  # beta0
    dof_offset: float = 2.0  # nu0 = d_cont + dof_offset
    cov_scale: float = 1.0  # prior covariance = cov_scale * data variances
    delta_concentration: float = 1.0  # eta0
    tol: float = 1e-6
    max_iter: int = 500
    prune_threshold: float | None = None  # default 1/(2*j_max)
    n_restarts: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")
        if self.tol <= 0.0:
            raise ValueError("tolerance must be > 0")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be >= 1")
        thr = self.effective_prune_threshold
        if not 0.0 < thr < 1.0 / self.j_max:
            raise ValueError("prune threshold must lie in (0, 1/j_max)")

    @property
    def effective_alpha0(self) -> float:
        return (
            self.weight_concentration
            if self.weight_concentration is not None
            else 1.0 / self.j_max
        )

    @property
    def effective_prune_threshold(self) -> float:
        return (
            self.prune_threshold
            if self.prune_threshold is not None
            else 1.0 / (2.0 * self.j_max)
        )


class _Prior:
    def __init__(self, cont: np.ndarray, cat_sizes, cfg: ViConfig):
        d = cont.shape[1]
        self.alpha0 = cfg.effective_alpha0
        self.eta0 = cfg.delta_concentration
        self.beta0 = cfg.mean_scale
        self.d = d
        if d:
            self.m0 = cont.mean(axis=0)
            var = cont.var(axis=0)
            var_scale = float(var.mean()) if float(var.mean()) > 0.0 else 1.0
            prior_cov = cfg.cov_scale * np.diag(np.where(var > 0.0, var, var_scale))
            self.nu0 = d + cfg.dof_offset
            # W0 chosen so E[precision] = nu0*W0 = prior_cov^-1
            self.W0_inv = prior_cov * self.nu0
            _, self.W0_inv_chol = _spd_cholesky(self.W0_inv, var_scale)
            self.logdet_W0 = -2.0 * np.sum(np.log(np.diag(self.W0_inv_chol)))
            self.var_scale = var_scale
        else:
            self.m0 = np.zeros(0)
            self.nu0 = 0.0
            self.var_scale = 1.0


class _VbState:
    """Variational parameters for the current component set."""

    def __init__(self, j, prior: _Prior, cat_sizes):
        self.j = j
        self.prior = prior
        self.cat_sizes = cat_sizes
        self.alpha = np.full(j, prior.alpha0)
        self.beta = np.full(j, prior.beta0)
        self.m = np.tile(prior.m0, (j, 1))
        self.nu = np.full(j, prior.nu0)
        self.W_inv = np.tile(prior.W0_inv, (j, 1, 1)) if prior.d else np.zeros((j, 0, 0))
        self.W_inv_chol = np.array(
            [prior.W0_inv_chol for _ in range(j)]
        ) if prior.d else np.zeros((j, 0, 0))
        self.eta = np.full((j, sum(cat_sizes)), prior.eta0)

    def m_step(self, cont, cat, resp):
        p = self.prior
        nk = resp.sum(axis=0) + 1e-300
        self.alpha = p.alpha0 + resp.sum(axis=0)
        if p.d:
            xbar = (resp.T @ cont) / nk[:, None]
            self.beta = p.beta0 + resp.sum(axis=0)
            self.nu = p.nu0 + resp.sum(axis=0)
            self.m = (p.beta0 * p.m0 + nk[:, None] * xbar) / self.beta[:, None]
            for k in range(self.j):
                diff = cont - xbar[k]
                sk = (resp[:, k][:, None] * diff).T @ diff
                dm = (xbar[k] - p.m0)[:, None]
                w_inv = (
                    p.W0_inv
                    + sk
                    + (p.beta0 * nk[k] / (p.beta0 + nk[k])) * (dm @ dm.T)
                )
                self.W_inv[k], self.W_inv_chol[k] = _spd_cholesky(w_inv, p.var_scale)
        if self.cat_sizes:
            self.eta = p.eta0 + resp.T @ cat

    def expected_log_weights(self):
        return digamma(self.alpha) - digamma(self.alpha.sum())

    def expected_log_det(self):
        d = self.prior.d
        logdet_w = np.array(
            [-2.0 * np.sum(np.log(np.diag(c))) for c in self.W_inv_chol]
        )
        i = np.arange(1, d + 1)
        return (
            np.sum(digamma(0.5 * (self.nu[:, None] + 1.0 - i)), axis=1)
            + d * np.log(2.0)
            + logdet_w
        )

    def e_step(self, cont, cat):
        from scipy.linalg import solve_triangular

        n = cont.shape[0]
        log_rho = np.tile(self.expected_log_weights(), (n, 1))
        d = self.prior.d
        if d:
            elogdet = self.expected_log_det()
            for k in range(self.j):
                z = solve_triangular(
                    self.W_inv_chol[k], (cont - self.m[k]).T, lower=True
                )
                quad = self.nu[k] * np.sum(z * z, axis=0)
                log_rho[:, k] += 0.5 * (
                    elogdet[k] - d * _LOG_2PI
                ) - 0.5 * (d / self.beta[k] + quad)
        if self.cat_sizes:
            elogd = np.empty_like(self.eta)
            off = 0
            for k_d in self.cat_sizes:
                block = self.eta[:, off : off + k_d]
                elogd[:, off : off + k_d] = digamma(block) - digamma(
                    block.sum(axis=1, keepdims=True)
                )
                off += k_d
            log_rho += cat @ elogd.T
        kappa = logsumexp(log_rho, axis=1)
        resp = np.exp(log_rho - kappa[:, None])
        return resp, float(kappa.sum())

    def _kl_weights(self):
        p = self.prior
        a, j = self.alpha, self.j
        a0 = np.full(j, p.alpha0)
        return _dirichlet_kl(a, a0)

    def _kl_gauss_wishart(self):
        from scipy.linalg import solve_triangular

        p = self.prior
        d = p.d
        if not d:
            return 0.0
        total = 0.0
        logdet_w0 = p.logdet_W0
        for k in range(self.j):
            logdet_wk = -2.0 * np.sum(np.log(np.diag(self.W_inv_chol[k])))
            dm = self.m[k] - p.m0
            z = solve_triangular(self.W_inv_chol[k], dm, lower=True)
            quad = self.nu[k] * float(z @ z)
            gauss = 0.5 * (
                d * p.beta0 / self.beta[k]
                + p.beta0 * quad
                - d
                + d * np.log(self.beta[k] / p.beta0)
            )
            # tr(W0^-1 Wk) with W0^-1 = L0 L0^T and Wk = Lk^-T Lk^-1
            t = solve_triangular(self.W_inv_chol[k], p.W0_inv_chol, lower=True)
            trace = float(np.sum(t * t))
            i = np.arange(1, d + 1)
            psi_d = float(np.sum(digamma(0.5 * (self.nu[k] + 1.0 - i))))
            wish = (
                -0.5 * p.nu0 * (logdet_wk - logdet_w0)
                + 0.5 * self.nu[k] * (trace - d)
                + multigammaln(0.5 * p.nu0, d)
                - multigammaln(0.5 * self.nu[k], d)
                + 0.5 * (self.nu[k] - p.nu0) * psi_d
            )
            total += gauss + wish
        return total

    def _kl_deltas(self):
        if not self.cat_sizes:
            return 0.0
        p = self.prior
        total = 0.0
        off = 0
        for k_d in self.cat_sizes:
            block = self.eta[:, off : off + k_d]
            for k in range(self.j):
                total += _dirichlet_kl(block[k], np.full(k_d, p.eta0))
            off += k_d
        return total

    def elbo(self, kappa_sum: float) -> float:
        return (
            kappa_sum
            - self._kl_weights()
            - self._kl_gauss_wishart()
            - self._kl_deltas()
        )

    def to_model(self, traces) -> MixtureModel:
        weights = self.alpha / self.alpha.sum()
        d = self.prior.d
        covs = np.zeros((self.j, d, d))
        if d:
            for k in range(self.j):
                w_k_inv = self.W_inv[k] / self.nu[k]  # Sigma = W^-1 / nu
                covs[k], _ = _spd_cholesky(
                    0.5 * (w_k_inv + w_k_inv.T), self.prior.var_scale
                )
        deltas = np.zeros((self.j, sum(self.cat_sizes)))
        off = 0
        for k_d in self.cat_sizes:
            block = self.eta[:, off : off + k_d]
            deltas[:, off : off + k_d] = block / block.sum(axis=1, keepdims=True)
            off += k_d
        return MixtureModel(
            weights=weights / weights.sum(),
            means=self.m.copy(),
            covs=covs,
            cat_sizes=tuple(self.cat_sizes),
            deltas=deltas,
            elbo_traces=tuple(tuple(t) for t in traces),
        )


def _dirichlet_kl(a: np.ndarray, b: np.ndarray) -> float:
    a_sum, b_sum = a.sum(), b.sum()
    return float(
        gammaln(a_sum)
        - np.sum(gammaln(a))
        - gammaln(b_sum)
        + np.sum(gammaln(b))
        + np.sum((a - b) * (digamma(a) - digamma(a_sum)))
    )


def _kmeans_init(cont: np.ndarray, j: int, rng: np.random.Generator) -> np.ndarray:
    """Hard assignments from k-means++ seeding plus a few Lloyd rounds."""
    n = cont.shape[0]
    centers = [cont[rng.integers(n)]]
    for _ in range(1, j):
        d2 = np.min(
            [np.sum((cont - c) ** 2, axis=1) for c in centers], axis=0
        )
        total = d2.sum()
        if total <= 0.0:
            centers.append(cont[rng.integers(n)])
            continue
        centers.append(cont[rng.choice(n, p=d2 / total)])
    centers = np.array(centers)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(10):
        d2 = np.sum((cont[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in range(j):
            mask = assign == k
            if mask.any():
                centers[k] = cont[mask].mean(axis=0)
    return assign


def _init_resp(block: SampleBlock, j: int, rng: np.random.Generator) -> np.ndarray:
    n = len(block)
    if block.d_cont:
        assign = _kmeans_init(block.cont, j, rng)
        resp = np.full((n, j), 1e-3 / max(j - 1, 1))
        resp[np.arange(n), assign] = 1.0
    else:
        resp = rng.random((n, j)) + 1e-3
    return resp / resp.sum(axis=1, keepdims=True)


def _degenerate_model(block: SampleBlock) -> MixtureModel:
    """All samples identical: one component with a regularized covariance."""
    d = block.d_cont
    cov = 1e-6 * np.eye(d)
    deltas = None
    if block.cat_sizes:
        counts = block.cat.sum(axis=0) + 1.0
        deltas = np.zeros((1, block.cat.shape[1]))
        off = 0
        for k_d in block.cat_sizes:
            seg = counts[off : off + k_d]
            deltas[0, off : off + k_d] = seg / seg.sum()
            off += k_d
    return MixtureModel(
        weights=np.array([1.0]),
        means=block.cont[:1].reshape(1, d),
        covs=cov.reshape(1, d, d),
        cat_sizes=block.cat_sizes if block.cat_sizes else (),
        deltas=deltas,
    )


def _vb_converge(block: SampleBlock, resp: np.ndarray, prior: _Prior, cfg: ViConfig):
    state = _VbState(resp.shape[1], prior, block.cat_sizes)
    trace: list[float] = []
    prev = -np.inf
    for _ in range(cfg.max_iter):
        state.m_step(block.cont, block.cat, resp)
        resp, kappa_sum = state.e_step(block.cont, block.cat)
        bound = state.elbo(kappa_sum)
        trace.append(bound)
        if abs(bound - prev) <= cfg.tol * max(1.0, abs(bound)):
            break
        prev = bound
    return state, resp, trace


def _drop_columns(resp: np.ndarray, keep: np.ndarray) -> np.ndarray:
    out = resp[:, keep] + 1e-12
    return out / out.sum(axis=1, keepdims=True)


def _prune_loop(block, resp, prior, cfg):
    """Alternate VB convergence with expected-weight pruning until stable."""
    threshold = cfg.effective_prune_threshold
    traces = []
    while True:
        state, resp, trace = _vb_converge(block, resp, prior, cfg)
        traces.append(trace)
        expected_w = state.alpha / state.alpha.sum()
        keep = expected_w >= threshold
        if keep.all() or keep.sum() == 0:
            return state, resp, traces
        resp = _drop_columns(resp, keep)


def _merge_loop(block, state, resp, traces, prior, cfg):
    """Greedily merge component pairs while the converged bound improves.

    Escapes the common local optimum where one generating process is
    covered by several components; each accepted merge is revalidated by a
    full VB convergence, so the final bound never decreases.
    """
    bound = traces[-1][-1]
    while resp.shape[1] > 1:
        j = resp.shape[1]
        best = None
        best_bound = bound
        for a in range(j):
            for b in range(a + 1, j):
                merged = np.delete(resp, b, axis=1).copy()
                merged[:, a] = resp[:, a] + resp[:, b]
                cand_state, cand_resp, cand_trace = _vb_converge(
                    block, merged, prior, cfg
                )
                cand_bound = cand_trace[-1]
                if cand_bound > best_bound + cfg.tol * max(1.0, abs(best_bound)):
                    best_bound = cand_bound
                    best = (cand_state, cand_resp, cand_trace)
        if best is None:
            break
        state, resp, trace = best
        traces.append(trace)
        bound = best_bound
    return state, resp, traces


def train_vi(block: SampleBlock, cfg: ViConfig) -> MixtureModel:
    """Estimate a mixture by variational Bayes with automatic pruning.

    Each restart runs coordinate ascent to convergence, prunes components
    whose expected weight falls below the threshold, and then attempts
    bound-guided pairwise merges; the restart with the best final bound
    wins. Deterministic given cfg.seed. The bound trace of every phase of
    the winning restart is attached to the returned model.
    """
    n = len(block)
    if n < 2:
        raise ValueError("need at least 2 samples")
    if block.d_cont == 0 and not block.cat_sizes:
        raise ValueError("need at least one feature dimension")
    span = 0.0
    if block.d_cont:
        span = float(np.max(block.cont.var(axis=0), initial=0.0))
    if block.cat_sizes:
        span = max(span, float(np.max(block.cat.var(axis=0), initial=0.0)))
    if span == 0.0:
        return _degenerate_model(block)

    prior = _Prior(block.cont, block.cat_sizes, cfg)
    j = min(cfg.j_max, n)
    best = None
    for r in range(cfg.n_restarts):
        rng = np.random.default_rng([cfg.seed, r])
        if r == 0:
            resp = _init_resp(block, j, rng)
        else:
            resp = rng.random((n, j)) + 1e-3
            resp /= resp.sum(axis=1, keepdims=True)
        state, resp, traces = _prune_loop(block, resp, prior, cfg)
        state, resp, traces = _merge_loop(block, state, resp, traces, prior, cfg)
        bound = traces[-1][-1]
        if best is None or bound > best[0]:
            best = (bound, state, traces)
    _, state, traces = best
    return state.to_model(traces)


def responsibilities(m: MixtureModel, block: SampleBlock) -> np.ndarray:
    """(n, J) posterior component memberships, computed in log space.

    Rows where every component's log joint is -inf fall back to a one-hot
    on the nearest component mean.
    """
    logj = m.log_joint(block.cont, block.cat)
    top = np.max(logj, axis=1)
    out = np.zeros_like(logj)
    ok = np.isfinite(top)
    if ok.any():
        shifted = logj[ok] - top[ok][:, None]
        w = np.exp(shifted)
        out[ok] = w / w.sum(axis=1, keepdims=True)
    if (~ok).any():
        if m.d_cont:
            d2 = (
                np.sum(block.cont[~ok][:, None, :] - m.means[None, :, :], axis=2) ** 2
                if m.d_cont == 1
                else np.sum(
                    (block.cont[~ok][:, None, :] - m.means[None, :, :]) ** 2, axis=2
                )
            )
            nearest = np.argmin(d2, axis=1)
        else:
            nearest = np.zeros((~ok).sum(), dtype=np.int64)
        rows = np.flatnonzero(~ok)
        out[rows, nearest] = 1.0
    return out


def log_density(m: MixtureModel, block: SampleBlock) -> np.ndarray:
    return logsumexp(m.log_joint(block.cont, block.cat), axis=1)


def density(m: MixtureModel, block: SampleBlock) -> np.ndarray:
    return np.exp(log_density(m, block))


def sample_mixture(
    m: MixtureModel, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw n samples; returns (continuous, binary categorical) arrays."""
    comps = rng.choice(m.n_components, size=n, p=m.weights)
    cont = np.zeros((n, m.d_cont))
    cat = np.zeros((n, sum(m.cat_sizes)))
    for k in range(m.n_components):
        mask = comps == k
        cnt = int(mask.sum())
        if not cnt:
            continue
        if m.d_cont:
            z = rng.standard_normal((cnt, m.d_cont))
            cont[mask] = m.means[k] + z @ m._chols[k].T
        off = 0
        for d, k_d in enumerate(m.cat_sizes):
            p = m.deltas[k, off : off + k_d]
            draws = rng.choice(k_d, size=cnt, p=p / p.sum())
            rows = np.flatnonzero(mask)
            cat[rows, off + draws] = 1.0
            off += k_d
    return cont, cat


def silverman_bandwidth(cont: np.ndarray) -> float:
    n, d = cont.shape
    sigma = float(np.sqrt(np.mean(cont.var(axis=0, ddof=1))))
    if sigma <= 0.0:
        sigma = 1.0
    return sigma * (4.0 / ((d + 2.0) * n)) ** (1.0 / (d + 4.0))


def parzen_model(block: SampleBlock) -> MixtureModel:
    """Parzen-window estimate as an explicit mixture: one isotropic Gaussian
    per pool point, Silverman bandwidth."""
    n, d = block.cont.shape
    h = silverman_bandwidth(block.cont)
    covs = np.tile((h * h) * np.eye(d), (n, 1, 1))
    return MixtureModel(
        weights=np.full(n, 1.0 / n),
        means=block.cont.copy(),
        covs=covs,
    )


def _cont_only(m: MixtureModel) -> MixtureModel:
    if not m.cat_sizes:
        return m
    return MixtureModel(weights=m.weights, means=m.means, covs=m.covs)


def _empty_cat(n: int) -> np.ndarray:
    return np.zeros((n, 0))


def representativity(
    m: MixtureModel, block: SampleBlock, n_mc: int = 1024, seed: int = 0
) -> float:
    """Symmetric KL divergence between the model's continuous marginal and a
    Parzen-window estimate of the pool, by Monte Carlo.

    The Parzen side is sampled as pool point + bandwidth noise; the model
    side directly. Lower is better; identical densities score 0.
    """
    if len(block) < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    p = _cont_only(m)
    q = parzen_model(block)

    def logp(x):
        b = SampleBlock(
            x, _empty_cat(len(x)), (), np.full(len(x), -1), np.arange(len(x))
        )
        return log_density(p, b)

    def logq(x):
        b = SampleBlock(
            x, _empty_cat(len(x)), (), np.full(len(x), -1), np.arange(len(x))
        )
        return log_density(q, b)

    xp, _ = sample_mixture(p, n_mc, rng)
    xq, _ = sample_mixture(q, n_mc, rng)
    d_pq = float(np.mean(logp(xp) - logq(xp)))
    d_qp = float(np.mean(logq(xq) - logp(xq)))
    return max(d_pq + d_qp, 0.0)


@dataclass
class CmmSha:
    """Shared-components classifier: soft component-to-class assignment."""

    model: MixtureModel
    xi: np.ndarray  # (J, C), rows sum to 1
    n_classes: int

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=np.float64)
        if np.max(np.abs(self.xi.sum(axis=1) - 1.0)) > 1e-9:
            raise ValueError("xi rows must sum to 1")


def fit_cmm_sha(m: MixtureModel, labeled: SampleBlock, n_classes: int) -> CmmSha:
    """Assign components to classes by responsibility-weighted label counts.

    xi_{j,c} = (1/N_j) sum over labeled x of class c of rho_{x,j}; components
    with no responsibility mass get a uniform row.
    """
    if np.any(labeled.y < 0):
        raise ValueError("labeled block contains unlabeled samples")
    rho = responsibilities(m, labeled)
    xi = np.zeros((m.n_components, n_classes))
    for c in range(n_classes):
        xi[:, c] = rho[labeled.y == c].sum(axis=0)
    nj = xi.sum(axis=1)
    empty = nj <= 0.0
    xi[~empty] /= nj[~empty][:, None]
    xi[empty] = 1.0 / n_classes
    return CmmSha(model=m, xi=xi, n_classes=n_classes)


def classify_cmm_sha(c: CmmSha, block: SampleBlock) -> np.ndarray:
    """(n, C) class posteriors p(c|x) = sum_j xi_{j,c} rho_{x,j}."""
    rho = responsibilities(c.model, block)
    post = rho @ c.xi
    return post / post.sum(axis=1, keepdims=True)


@dataclass
class CmmSep:
    """Separate-components classifier: one mixture per class."""

    class_models: tuple[MixtureModel, ...]
    class_priors: np.ndarray  # xi_c = |X_c| / |X|

    def __post_init__(self):
        self.class_priors = np.asarray(self.class_priors, dtype=np.float64)
        if abs(self.class_priors.sum() - 1.0) > 1e-12:
            raise ValueError("class priors must sum to 1")


def _single_sample_model(
    block: SampleBlock, context: SampleBlock | None = None
) -> MixtureModel:
    """One-component stand-in for a class with a single sample.

    The lone sample fixes the mean; the covariance falls back to the
    context block's variances (the scale the VB prior would use). A point
    mass here would hijack responsibilities and blow up the Mahalanobis
    distances of every sample near it.
    """
    d = block.d_cont
    if d:
        ref = context if context is not None and len(context) > 1 else block
        var = ref.cont.var(axis=0)
        fallback = float(var.mean()) if float(var.mean()) > 0.0 else 1.0
        cov = np.diag(np.where(var > 0.0, var, fallback))
    else:
        cov = np.eye(0)
    deltas = None
    if block.cat_sizes:
        counts = block.cat.sum(axis=0) + 1.0
        deltas = np.zeros((1, block.cat.shape[1]))
        off = 0
        for k_d in block.cat_sizes:
            seg = counts[off : off + k_d]
            deltas[0, off : off + k_d] = seg / seg.sum()
            off += k_d
    return MixtureModel(
        weights=np.array([1.0]),
        means=block.cont[:1].reshape(1, d),
        covs=cov.reshape(1, d, d),
        cat_sizes=block.cat_sizes if block.cat_sizes else (),
        deltas=deltas,
    )


def fit_cmm_sep(labeled: SampleBlock, n_classes: int, cfg: ViConfig) -> CmmSep:
    """One mixture per class; classes with a single sample get a regularized
    single-component model."""
    if np.any(labeled.y < 0):
        raise ValueError("labeled block contains unlabeled samples")
    counts = np.bincount(labeled.y, minlength=n_classes)
    if np.any(counts == 0):
        missing = [c for c in range(n_classes) if counts[c] == 0]
        raise ValueError(f"classes {missing} absent from the labeled set")
    models = []
    for c in range(n_classes):
        sub = labeled.take(np.flatnonzero(labeled.y == c))
        if len(sub) < 2:
            models.append(_single_sample_model(sub, labeled))
        else:
            models.append(train_vi(sub, cfg))
    return CmmSep(
        class_models=tuple(models),
        class_priors=counts / counts.sum(),
    )


def classify_cmm_sep(s: CmmSep, block: SampleBlock) -> np.ndarray:
    """(n, C) posteriors from per-class densities and class priors."""
    logs = np.column_stack(
        [
            np.log(s.class_priors[c]) + log_density(s.class_models[c], block)
            for c in range(len(s.class_models))
        ]
    )
    logs -= logsumexp(logs, axis=1)[:, None]
    return np.exp(logs)


def _knn_vote(
    query_cont: np.ndarray,
    labeled_cont: np.ndarray,
    labeled_y: np.ndarray,
    n_classes: int,
    k: int,
) -> np.ndarray:
    k = min(k, labeled_cont.shape[0])
    out = np.empty(query_cont.shape[0], dtype=np.int64)
    for i, x in enumerate(query_cont):
        d2 = np.sum((labeled_cont - x) ** 2, axis=1)
        nn = np.argsort(d2, kind="stable")[:k]
        votes = np.bincount(labeled_y[nn], minlength=n_classes)
        out[i] = int(np.argmax(votes))  # ties -> smallest class index
    return out


def refine_transductive(
    m: MixtureModel,
    labeled: SampleBlock,
    unlabeled: SampleBlock,
    n_classes: int,
    cfg: ViConfig,
    purity_threshold: float = 0.95,
    k_neighbors: int = 7,
) -> MixtureModel:
    """Rebuild the regions covered by class-impure components.

    Components whose dominated labeled samples mix classes (majority share
    below the purity threshold) are replaced: the samples they dominate are
    completed by k-nearest-labeled-neighbor voting, a separate-components
    model is trained locally, and its components are fused with the intact
    ones under renormalized weights. With nothing disputed, the input model
    is returned unchanged.
    """
    if len(labeled) == 0:
        raise ValueError("labeled set must be non-empty")
    rho_l = responsibilities(m, labeled)
    dom_l = np.argmax(rho_l, axis=1)
    disputed = np.zeros(m.n_components, dtype=bool)
    for j in range(m.n_components):
        y_j = labeled.y[dom_l == j]
        if len(y_j) == 0:
            continue
        counts = np.bincount(y_j, minlength=n_classes)
        present = int((counts > 0).sum())
        share = counts.max() / counts.sum()
        if present >= 2 and share < purity_threshold:
            disputed[j] = True
    if not disputed.any():
        return m

    rho_u = responsibilities(m, unlabeled)
    dom_u = np.argmax(rho_u, axis=1) if len(unlabeled) else np.zeros(0, dtype=np.int64)
    local_l = labeled.take(np.flatnonzero(disputed[dom_l]))
    local_u = unlabeled.take(np.flatnonzero(disputed[dom_u])) if len(unlabeled) else unlabeled
    votes = (
        _knn_vote(local_u.cont, labeled.cont, labeled.y, n_classes, k_neighbors)
        if len(local_u)
        else np.zeros(0, dtype=np.int64)
    )
    region = SampleBlock(
        cont=np.vstack([local_l.cont, local_u.cont]),
        cat=np.vstack([local_l.cat, local_u.cat]),
        cat_sizes=labeled.cat_sizes,
        y=np.concatenate([local_l.y, votes]),
        ids=np.concatenate([local_l.ids, local_u.ids]),
    )
    present = np.unique(region.y)
    models = []
    pri = []
    for c in present:
        sub = region.take(np.flatnonzero(region.y == c))
        models.append(
            _single_sample_model(sub, region) if len(sub) < 2 else train_vi(sub, cfg)
        )
        pri.append(len(sub))
    pri = np.asarray(pri, dtype=np.float64)
    pri /= pri.sum()

    disputed_mass = float(m.weights[disputed].sum())
    weights = [m.weights[~disputed]]
    means = [m.means[~disputed]]
    covs = [m.covs[~disputed]]
    deltas = [m.deltas[~disputed]]
    for prior_c, local in zip(pri, models):
        weights.append(disputed_mass * prior_c * local.weights)
        means.append(local.means)
        covs.append(local.covs)
        deltas.append(
            local.deltas
            if local.cat_sizes
            else np.zeros((local.n_components, m.deltas.shape[1]))
        )
    w = np.concatenate(weights)
    return MixtureModel(
        weights=w / w.sum(),
        means=np.vstack(means),
        covs=np.vstack(covs),
        cat_sizes=m.cat_sizes,
        deltas=np.vstack(deltas) if m.cat_sizes else None,
    )


_MODEL_FORMAT = "mixture-model"
_MODEL_VERSION = 1


def model_to_json(m: MixtureModel) -> dict:
    return {
        "format": _MODEL_FORMAT,
        "version": _MODEL_VERSION,
        "weights": m.weights,
        "means": m.means,
        "covs": m.covs,
        "cat_sizes": list(m.cat_sizes),
        "deltas": m.deltas,
    }


def model_from_json(obj: dict) -> MixtureModel:
    if obj.get("format") != _MODEL_FORMAT:
        raise ValueError(f"not a mixture model document: {obj.get('format')!r}")
    if obj.get("version") != _MODEL_VERSION:
        raise ValueError(f"unsupported model version {obj.get('version')!r}")
    return MixtureModel(
        weights=np.asarray(obj["weights"], dtype=np.float64),
        means=np.asarray(obj["means"], dtype=np.float64),
        covs=np.asarray(obj["covs"], dtype=np.float64),
        cat_sizes=tuple(obj["cat_sizes"]),
        deltas=np.asarray(obj["deltas"], dtype=np.float64),
    )
