"""Two-level multi-response Gaussian-process emulator.

Level 1 regresses the low-fidelity responses; level 2 models the
high-fidelity responses as rho * (level-1 output observed at the same
inputs) plus an independent discrepancy process.  Each level is a
separable multi-response GP: squared-exponential spatial kernel
exp(-sum_k b_k (x_k - x'_k)^2), linear mean h(x) = [1, x^T], and a
between-response covariance Q estimated in closed form, with beta
profiled out by generalized least squares.  Roughness parameters (and
rho at level 2) maximize the profiled log-likelihood

    l = -0.5 * (d * log|Sigma| + n * log|Q_hat|)

by particle-swarm search over log10-roughness, optionally refined by a
seeded Nelder-Mead polish of the incumbent.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import optimize
from scipy.spatial.distance import cdist

from .errors import FitError

GROUP_PER_DIMENSION = "per_dimension"
GROUP_SEGMENT_PAIRS = "segment_pairs"
_GROUPINGS = (GROUP_PER_DIMENSION, GROUP_SEGMENT_PAIRS)


@dataclass(frozen=True)
class KernelParams:
    """Per-dimension roughness of the squared-exponential kernel."""

    roughness: np.ndarray
    jitter: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "roughness", np.asarray(self.roughness, dtype=float))
        if np.any(self.roughness <= 0.0):
            raise ValueError("roughness must be positive")
        if self.jitter < 0.0:
            raise ValueError("jitter must be nonnegative")


def kernel_matrix(xa, xb, roughness):
    """exp(-sum_k b_k (xa_k - xb_k)^2) for all pairs."""
    w = np.sqrt(np.asarray(roughness, dtype=float))
    return np.exp(-cdist(np.asarray(xa) * w, np.asarray(xb) * w, "sqeuclidean"))


def _mean_basis(x):
    return np.hstack([np.ones((x.shape[0], 1)), x])


@dataclass
class LevelFit:
    """One fitted GP level (all quantities in the fit's own data space)."""

    x: np.ndarray
    y: np.ndarray
    kernel: KernelParams
    beta: np.ndarray
    q_mat: np.ndarray
    loglik: float
    _chol: np.ndarray
    _alpha: np.ndarray
    _hsolve: np.ndarray
    _hth_chol: np.ndarray

    @property
    def n_train(self):
        return self.x.shape[0]


def fit_level_fixed(x, y, kernel):
    """Closed-form fit for fixed roughness.

    beta = (H' S^-1 H)^-1 H' S^-1 Y by GLS, Q = R' S^-1 R / n with
    R = Y - H beta, and the profiled log-likelihood as documented in the
    module docstring (additive constants dropped).

    Raises
    ------
    FitError
        Covariance not positive definite, or too few rows to estimate Q
        (needs n > q + d - 1 effective residual rank).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim != 2 or x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x must be (n, m) and y (n, d) with matching rows")
    n, d = y.shape
    sigma = kernel_matrix(x, x, kernel.roughness)
    sigma[np.diag_indices_from(sigma)] += kernel.jitter
    try:
        chol = sla.cholesky(sigma, lower=True)
    except sla.LinAlgError as exc:
        raise FitError(f"covariance is not positive definite: {exc}") from exc

    h = _mean_basis(x)
    si_h = sla.cho_solve((chol, True), h)
    si_y = sla.cho_solve((chol, True), y)
    hth = h.T @ si_h
    try:
        hth_chol = sla.cholesky(hth, lower=True)
    except sla.LinAlgError as exc:
        raise FitError(f"degenerate mean design: {exc}") from exc
    beta = sla.cho_solve((hth_chol, True), h.T @ si_y)
    resid = y - h @ beta
    si_r = sla.cho_solve((chol, True), resid)
    q_mat = resid.T @ si_r / n

    sign, logdet_q = np.linalg.slogdet(q_mat)
    if sign <= 0:
        raise FitError("response covariance is not positive definite "
                       "(too few training rows for the response count)")
    logdet_sigma = 2.0 * np.sum(np.log(np.diag(chol)))
    loglik = -0.5 * (d * logdet_sigma + n * logdet_q)
    return LevelFit(
        x=x,
        y=y,
        kernel=kernel,
        beta=beta,
        q_mat=q_mat,
        loglik=float(loglik),
        _chol=chol,
        _alpha=si_r,
        _hsolve=si_h,
        _hth_chol=hth_chol,
    )


def predict_level(fit, x_star):
    """Posterior mean and spatial variance factor at new inputs.

    The full predictive covariance between responses at one point is
    ``svar[i] * fit.q_mat``; ``svar`` includes the universal-kriging
    mean-uncertainty term and is clipped at zero.

    Returns
    -------
    mean : ndarray, shape (k, d)
    svar : ndarray, shape (k,)
    """
    x_star = np.asarray(x_star, dtype=float)
    kvec = kernel_matrix(x_star, fit.x, fit.kernel.roughness)
    h_star = _mean_basis(x_star)
    mean = h_star @ fit.beta + kvec @ fit._alpha

    vsolve = sla.cho_solve((fit._chol, True), kvec.T)
    data_term = np.sum(kvec * vsolve.T, axis=1)
    u = h_star - kvec @ fit._hsolve
    w = sla.cho_solve((fit._hth_chol, True), u.T)
    mean_term = np.sum(u * w.T, axis=1)
    svar = 1.0 + fit.kernel.jitter - data_term + mean_term
    return mean, np.maximum(svar, 0.0)


@dataclass(frozen=True)
class PSOConfig:
    """Global-best particle swarm settings."""

    particles: int = 30
    iterations: int = 200
    inertia: float = 0.72
    cognitive: float = 1.49
    social: float = 1.49
    seed: int = 0

    def validate(self):
        if self.particles < 1 or self.iterations < 1:
            raise ValueError("particles and iterations must be positive")
        if not 0.0 <= self.inertia < 1.0:
            raise ValueError("inertia must lie in [0, 1)")
        if self.cognitive < 0.0 or self.social < 0.0:
            raise ValueError("acceleration coefficients must be nonnegative")


def pso_minimize(fn, lo, hi, config):
    """Global-best PSO over a box; deterministic for a given seed.

    Positions start uniform in the box with zero velocities; each
    iteration draws cognitive/social coefficients, updates velocities,
    and clamps positions to the box.  Non-finite objective values are
    treated as +inf.

    Returns
    -------
    (x_best, f_best)
    """
    config.validate()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or np.any(lo >= hi):
        raise ValueError("bounds must satisfy lo < hi")
    rng = np.random.default_rng(config.seed)
    ndim = len(lo)

    def safe(x):
        v = fn(x)
        return np.inf if not np.isfinite(v) else float(v)

    pos = lo + (hi - lo) * rng.random((config.particles, ndim))
    vel = np.zeros_like(pos)
    pbest = pos.copy()
    pval = np.array([safe(p) for p in pos])
    g = int(np.argmin(pval))
    gbest, gval = pbest[g].copy(), pval[g]

    for _ in range(config.iterations):
        r1 = rng.random((config.particles, ndim))
        r2 = rng.random((config.particles, ndim))
        vel = (
            config.inertia * vel
            + config.cognitive * r1 * (pbest - pos)
            + config.social * r2 * (gbest - pos)
        )
        pos = np.clip(pos + vel, lo, hi)
        for i in range(config.particles):
            v = safe(pos[i])
            if v < pval[i]:
                pval[i] = v
                pbest[i] = pos[i]
                if v < gval:
                    gval = v
                    gbest = pos[i].copy()
    return gbest, gval


@dataclass(frozen=True)
class GPFitConfig:
    """Hyperparameter search settings shared by both levels."""

    roughness_lo: float = 1e-4
    roughness_hi: float = 1e3
    rho_bound: float = 10.0
    grouping: str = GROUP_PER_DIMENSION
    jitter: float = 1e-8
    pso: PSOConfig = field(default_factory=PSOConfig)
    polish: bool = True

    def validate(self):
        if not 0.0 < self.roughness_lo < self.roughness_hi:
            raise ValueError("need 0 < roughness_lo < roughness_hi")
        if self.rho_bound <= 0.0:
            raise ValueError("rho_bound must be positive")
        if self.grouping not in _GROUPINGS:
            raise ValueError(f"grouping must be one of {_GROUPINGS}")
        self.pso.validate()


def _group_index(m, grouping):
    if grouping == GROUP_PER_DIMENSION:
        return np.arange(m)
    if m % 2 != 0:
        raise ValueError("segment-pair grouping needs an even input dimension")
    return np.arange(m) // 2


def _expand_groups(values, group_index):
    return np.asarray(values, dtype=float)[group_index]


def _search(objective, lo, hi, config, seed_offset=0):
    pso_cfg = PSOConfig(
        particles=config.pso.particles,
        iterations=config.pso.iterations,
        inertia=config.pso.inertia,
        cognitive=config.pso.cognitive,
        social=config.pso.social,
        seed=config.pso.seed + seed_offset,
    )
    best_x, best_f = pso_minimize(objective, lo, hi, pso_cfg)
    if config.polish:
        res = optimize.minimize(
            lambda z: objective(np.clip(z, lo, hi)),
            best_x,
            method="Nelder-Mead",
            options={"maxiter": 400 * len(lo), "xatol": 1e-12, "fatol": 1e-14},
        )
        cand = np.clip(res.x, lo, hi)
        f = objective(cand)
        if np.isfinite(f) and f < best_f:
            best_x, best_f = cand, f
    return best_x, best_f


def fit_level(x, y, config, seed_offset=0):
    """Maximize the profiled likelihood of one level over roughness.

    The swarm searches log10-roughness within the configured box (a
    monotone reparametrization of the documented bounds).

    Returns
    -------
    LevelFit
    """
    config.validate()
    x = np.asarray(x, dtype=float)
    groups = _group_index(x.shape[1], config.grouping)
    n_groups = int(groups.max()) + 1
    lo = np.full(n_groups, np.log10(config.roughness_lo))
    hi = np.full(n_groups, np.log10(config.roughness_hi))

    def objective(z):
        b = _expand_groups(10.0 ** z, groups)
        try:
            return -fit_level_fixed(x, y, KernelParams(b, config.jitter)).loglik
        except FitError:
            return np.inf

    best, _ = _search(objective, lo, hi, config, seed_offset)
    b = _expand_groups(10.0 ** best, groups)
    return fit_level_fixed(x, y, KernelParams(b, config.jitter))


@dataclass
class TwoLevelGP:
    """Fitted two-level emulator with its input/output scalers."""

    level1: LevelFit
    level2: LevelFit
    rho: float
    x_lo: np.ndarray
    x_span: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray
    grouping: str
    jitter: float

    def scale_x(self, x):
        return (np.asarray(x, dtype=float) - self.x_lo) / self.x_span

    def scale_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std


def fit_two_level(x_lf, y_lf, x_hf, y_hf, y_lf_at_hf, config):
    """Fit both levels on a nested two-fidelity design.

    Inputs are min-max scaled to [0, 1] on the LF-train box and outputs
    z-scored by LF-train statistics before fitting.  Level 1 fits the
    scaled LF data; level 2 jointly searches (roughness groups, rho) so
    the discrepancy y_hf - rho * y_lf_at_hf maximizes its own profiled
    likelihood.

    Parameters
    ----------
    y_lf_at_hf : ndarray
        Low-fidelity responses observed at the high-fidelity inputs
        (available because the design is nested).

    Returns
    -------
    TwoLevelGP
    """
    config.validate()
    x_lf = np.asarray(x_lf, dtype=float)
    y_lf = np.asarray(y_lf, dtype=float)
    x_hf = np.asarray(x_hf, dtype=float)
    y_hf = np.asarray(y_hf, dtype=float)
    y_lf_at_hf = np.asarray(y_lf_at_hf, dtype=float)
    if x_hf.shape[0] != y_hf.shape[0] or y_lf_at_hf.shape != y_hf.shape:
        raise ValueError("high-fidelity arrays do not align")

    x_lo = x_lf.min(axis=0)
    x_span = x_lf.max(axis=0) - x_lo
    x_span = np.where(x_span > 0.0, x_span, 1.0)
    y_mean = y_lf.mean(axis=0)
    y_std = y_lf.std(axis=0)
    y_std = np.where(y_std > 0.0, y_std, 1.0)

    xs_lf = (x_lf - x_lo) / x_span
    xs_hf = (x_hf - x_lo) / x_span
    ys_lf = (y_lf - y_mean) / y_std
    ys_hf = (y_hf - y_mean) / y_std
    ys_lf_at_hf = (y_lf_at_hf - y_mean) / y_std

    level1 = fit_level(xs_lf, ys_lf, config, seed_offset=0)

    groups = _group_index(x_lf.shape[1], config.grouping)
    n_groups = int(groups.max()) + 1
    lo = np.concatenate([np.full(n_groups, np.log10(config.roughness_lo)), [-config.rho_bound]])
    hi = np.concatenate([np.full(n_groups, np.log10(config.roughness_hi)), [config.rho_bound]])

    def objective(z):
        b = _expand_groups(10.0 ** z[:-1], groups)
        rho = z[-1]
        try:
            fit = fit_level_fixed(xs_hf, ys_hf - rho * ys_lf_at_hf, KernelParams(b, config.jitter))
        except FitError:
            return np.inf
        return -fit.loglik

    best, _ = _search(objective, lo, hi, config, seed_offset=1)
    rho = float(best[-1])
    b2 = _expand_groups(10.0 ** best[:-1], groups)
    level2 = fit_level_fixed(xs_hf, ys_hf - rho * ys_lf_at_hf, KernelParams(b2, config.jitter))
    return TwoLevelGP(
        level1=level1,
        level2=level2,
        rho=rho,
        x_lo=x_lo,
        x_span=x_span,
        y_mean=y_mean,
        y_std=y_std,
        grouping=config.grouping,
        jitter=config.jitter,
    )


def predict_two_level(model, x_star):
    """High-fidelity posterior mean and per-response variance.

    The level-2 posterior combines rho^2 times the level-1 covariance
    with the discrepancy covariance (independent processes), then maps
    back to original units.

    Returns
    -------
    mean : ndarray, shape (k, d)
    var : ndarray, shape (k, d)
    """
    xs = model.scale_x(x_star)
    m1, s1 = predict_level(model.level1, xs)
    m2, s2 = predict_level(model.level2, xs)
    mean_s = model.rho * m1 + m2
    var_s = (
        (model.rho ** 2) * s1[:, None] * np.diag(model.level1.q_mat)[None, :]
        + s2[:, None] * np.diag(model.level2.q_mat)[None, :]
    )
    mean = mean_s * model.y_std + model.y_mean
    var = var_s * (model.y_std ** 2)
    return mean, var


def predict_low_level(model, x_star):
    """Level-1 (low-fidelity) posterior mean in original units."""
    m1, _ = predict_level(model.level1, model.scale_x(x_star))
    return m1 * model.y_std + model.y_mean


def save_two_level(model, path):
    """Persist the model as JSON (arrays as repr strings, exact)."""
    def arr(a):
        return [[repr(float(v)) for v in row] for row in np.atleast_2d(a)]

    payload = {
        "rho": repr(float(model.rho)),
        "grouping": model.grouping,
        "jitter": repr(float(model.jitter)),
        "x_lo": arr(model.x_lo),
        "x_span": arr(model.x_span),
        "y_mean": arr(model.y_mean),
        "y_std": arr(model.y_std),
        "levels": [
            {
                "x": arr(lv.x),
                "y": arr(lv.y),
                "roughness": arr(lv.kernel.roughness),
            }
            for lv in (model.level1, model.level2)
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_two_level(path):
    """Rebuild a saved model; refits the closed-form factors, which are
    deterministic, so reloaded predictions match the originals."""
    with open(path) as fh:
        d = json.load(fh)

    def arr(rows):
        return np.array([[float(v) for v in row] for row in rows])

    jitter = float(d["jitter"])
    levels = []
    for lv in d["levels"]:
        x = arr(lv["x"])
        y = arr(lv["y"])
        b = arr(lv["roughness"]).ravel()
        levels.append(fit_level_fixed(x, y, KernelParams(b, jitter)))
    return TwoLevelGP(
        level1=levels[0],
        level2=levels[1],
        rho=float(d["rho"]),
        x_lo=arr(d["x_lo"]).ravel(),
        x_span=arr(d["x_span"]).ravel(),
        y_mean=arr(d["y_mean"]).ravel(),
        y_std=arr(d["y_std"]).ravel(),
        grouping=d["grouping"],
        jitter=jitter,
    )
