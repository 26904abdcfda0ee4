"""Multi-output Gaussian-process model: likelihood, L1-penalized fitting,
prediction, and the independent univariate baseline.

Replicated observations are handled exactly: with all replicates stacked, the
covariance is Kron(C, J_M) + nugget*I over (output, point, replicate) order,
which collapses to an equivalent problem on per-point means plus a scalar
residual term.  All likelihood values equal the stacked-data likelihood.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular, LinAlgError
from scipy.optimize import minimize
from scipy.special import expit, logit

from .covkernel import (
    ANGLE_EPS,
    CrossCorrAngles,
    CrossCorrMatrix,
    MarginalSds,
    RoughnessParams,
    angles_to_corr,
    corr_to_angles,
    cov_matrix,
    cross_cov_block,
    n_angles,
)
from .design import InputSpec

MODEL_FORMAT_VERSION = "mgpkit-model-v1"


class FitError(Exception):
    """Model fitting failed; carries diagnostics in args."""


class NonPositiveDefiniteError(FitError):
    """Covariance factorization failed even after jitter escalation."""


# ---------------------------------------------------------------------------
# Regression basis


@dataclass(frozen=True)
class RegressionBasis:
    """Trend basis shared by all outputs: 'const', 'linear' or 'quad'.

    'quad' is quadratic-diagonal: [1, x_1..x_l, x_1^2..x_l^2].
    """

    kind: str = "const"

    _KINDS = ("const", "linear", "quad")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown basis '{self.kind}'; choose from {self._KINDS}")

    def width(self, l: int) -> int:
        return {"const": 1, "linear": 1 + l, "quad": 1 + 2 * l}[self.kind]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        ones = np.ones((x.shape[0], 1))
        if self.kind == "const":
            return ones
        if self.kind == "linear":
            return np.hstack([ones, x])
        return np.hstack([ones, x, x ** 2])


# ---------------------------------------------------------------------------
# Dataset


@dataclass(frozen=True)
class Dataset:
    """Replicated multi-output observations on unit-hypercube designs.

    y[i] stacks the reps observations of each design point contiguously
    (point-major order), so len(y[i]) == x[i].shape[0] * reps.
    """

    specs: list
    x: list
    y: list
    reps: int
    output_names: list

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError(f"reps must be >= 1, got {self.reps}")
        xs = [np.atleast_2d(np.asarray(xi, dtype=float)) for xi in self.x]
        ys = [np.asarray(yi, dtype=float).ravel() for yi in self.y]
        if len(xs) != len(ys) or len(xs) != len(self.output_names):
            raise ValueError("x, y and output_names must have one entry per output")
        for i, (xi, yi) in enumerate(zip(xs, ys)):
            if yi.size != xi.shape[0] * self.reps:
                raise ValueError(
                    f"output {i}: expected {xi.shape[0] * self.reps} observations, got {yi.size}"
                )
            if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(yi))):
                raise ValueError(f"output {i}: non-finite values in data")
        object.__setattr__(self, "x", xs)
        object.__setattr__(self, "y", ys)

    @property
    def k(self) -> int:
        return len(self.x)

    @property
    def l(self) -> int:
        return self.x[0].shape[1]

    @property
    def n_points(self) -> int:
        return sum(xi.shape[0] for xi in self.x)

    @property
    def n_total(self) -> int:
        return self.n_points * self.reps

    def point_means(self) -> list:
        """Per-output means over replicates at each design point."""
        return [yi.reshape(-1, self.reps).mean(axis=1) for yi in self.y]

    def within_point_sse(self) -> float:
        """Total squared deviation of observations from their point means."""
        sse = 0.0
        for yi in self.y:
            g = yi.reshape(-1, self.reps)
            sse += float(((g - g.mean(axis=1, keepdims=True)) ** 2).sum())
        return sse

    def sub_dataset(self, i: int) -> "Dataset":
        return Dataset(self.specs, [self.x[i]], [self.y[i]], self.reps, [self.output_names[i]])

    def fingerprint(self) -> dict:
        h = hashlib.sha256()
        for xi, yi in zip(self.x, self.y):
            h.update(np.ascontiguousarray(xi).tobytes())
            h.update(np.ascontiguousarray(yi).tobytes())
        return {"n_total": self.n_total, "sha256": h.hexdigest()}


# ---------------------------------------------------------------------------
# Parameters


@dataclass
class MgpParams:
    """All estimable quantities of the model."""

    beta: list
    sigma: MarginalSds
    phi: RoughnessParams
    omega: CrossCorrAngles
    nugget: float
    lam: float = 0.0

    def __post_init__(self):
        if self.nugget < 0.0:
            raise ValueError(f"nugget must be >= 0, got {self.nugget}")
        if self.lam < 0.0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        self.beta = [np.asarray(b, dtype=float).ravel() for b in self.beta]

    @property
    def t(self) -> CrossCorrMatrix:
        return angles_to_corr(self.omega)

    def beta_concat(self) -> np.ndarray:
        return np.concatenate(self.beta)


# ---------------------------------------------------------------------------
# Likelihood pieces


def build_f_matrix(data: Dataset, basis: RegressionBasis) -> np.ndarray:
    """Block-diagonal trend matrix over the stacked (replicated) observations."""
    blocks = [basis.evaluate(np.repeat(xi, data.reps, axis=0)) for xi in data.x]
    return _blkdiag(blocks)


def _f_points(data: Dataset, basis: RegressionBasis) -> np.ndarray:
    """Block-diagonal trend matrix over design points only (one row per point)."""
    return _blkdiag([basis.evaluate(xi) for xi in data.x])


def _blkdiag(blocks: list) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def _chol_with_jitter(a: np.ndarray):
    """Lower Cholesky factor, escalating diagonal jitter on failure."""
    scale = float(np.mean(np.diag(a)))
    jitter = 0.0
    while True:
        try:
            return cholesky(a + jitter * np.eye(a.shape[0]), lower=True), jitter
        except LinAlgError:
            jitter = 1e-10 * scale if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-6 * scale:
                raise NonPositiveDefiniteError(
                    "covariance matrix is not positive definite (jitter escalation failed)"
                )


def _collapsed_system(params: MgpParams, data: Dataset):
    """Point-level covariance of replicate means: Cz = M*C + nugget*I."""
    c = cov_matrix(data.x, params.sigma, params.phi, params.t, nugget=0.0)
    cz = data.reps * c + params.nugget * np.eye(data.n_points)
    return cz


def penalized_loglik(params: MgpParams, data: Dataset, basis: RegressionBasis) -> float:
    """L1-penalized Gaussian log-likelihood of the stacked observations.

    -1/2 (log|R| + e' R^-1 e) - lambda*|beta|_1 - (N/2) log(2*pi), evaluated
    through the exact replicate collapse.
    """
    m, n, n_pts = data.reps, data.n_total, data.n_points
    if m > 1 and params.nugget <= 0.0:
        raise ValueError("replicated data requires a positive nugget")
    cz = _collapsed_system(params, data)
    chol_l, _ = _chol_with_jitter(cz)
    ybar = np.concatenate(data.point_means())
    resid = ybar - _f_points(data, basis) @ params.beta_concat()
    w = solve_triangular(chol_l, resid, lower=True)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol_l))))
    quad = m * float(w @ w)
    ll = -0.5 * (n * np.log(2.0 * np.pi) + logdet + quad)
    if m > 1:
        ll -= 0.5 * ((n - n_pts) * np.log(params.nugget) + data.within_point_sse() / params.nugget)
    return ll - params.lam * float(np.sum(np.abs(params.beta_concat())))


# ---------------------------------------------------------------------------
# L1-penalized generalized least squares


def gls_beta_l1(
    r_chol: np.ndarray,
    f: np.ndarray,
    y: np.ndarray,
    lam: float,
    tol: float = 1e-10,
    max_iter: int = 10000,
) -> np.ndarray:
    """Minimize 1/2 (y - F b)' R^-1 (y - F b) + lam*|b|_1.

    ``r_chol`` is the lower Cholesky factor of R.  The system is whitened by a
    triangular solve; lam = 0 falls back to the closed-form GLS solution, and
    lam > 0 runs coordinate descent with soft thresholding.
    """
    w = solve_triangular(r_chol, y, lower=True)
    fw = solve_triangular(r_chol, f, lower=True)
    q = f.shape[1]
    if lam == 0.0:
        sol, _, rank, _ = np.linalg.lstsq(fw, w, rcond=None)
        if rank < q:
            raise FitError("rank-deficient trend basis: F' R^-1 F is singular")
        return sol
    norms = (fw ** 2).sum(axis=0)
    beta = np.zeros(q)
    r = w.copy()  # running residual w - fw @ beta
    for _ in range(max_iter):
        max_change = 0.0
        for j in range(q):
            if norms[j] == 0.0:
                continue
            rho = fw[:, j] @ r + norms[j] * beta[j]
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / norms[j]
            if new != beta[j]:
                r -= (new - beta[j]) * fw[:, j]
                max_change = max(max_change, abs(new - beta[j]))
                beta[j] = new
        if max_change < tol:
            break
    return beta


def lambda_max(r_chol: np.ndarray, f: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which the L1-penalized GLS solution is all-zero."""
    w = solve_triangular(r_chol, y, lower=True)
    fw = solve_triangular(r_chol, f, lower=True)
    return float(np.max(np.abs(fw.T @ w)))


# ---------------------------------------------------------------------------
# Fitting


@dataclass
class FitConfig:
    """Knobs for the block-coordinate maximum-likelihood fit."""

    lam: object = 0.0  # float, or "auto" for holdout-selected penalty
    restarts: int = 5
    max_rounds: int = 4
    cov_maxiter: int = 60
    tol: float = 1e-5
    seed: int = 0
    lambda_grid: tuple = (0.0, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0)  # x N_total
    phi_init_range: tuple = (0.1, 100.0)


@dataclass
class Prediction:
    """Per-output predictive mean and standard deviation."""

    mean: np.ndarray
    sd: np.ndarray
    extrapolated: bool = False


# unconstrained parameter vector layout: [log sigma (K), log phi (K*l),
# logit-scaled omega (K(K-1)/2), log nugget (1)]
_LOG_SIGMA_BOUNDS = (-6.0, 6.0)
_LOG_PHI_BOUNDS = (np.log(1e-3), np.log(1e4))
_OMEGA_U_BOUNDS = (-12.0, 12.0)
_LOG_NUGGET_BOUNDS = (-18.0, 3.0)


def _pack(sigma, phi, omega, nugget):
    u = logit(np.clip(np.asarray(omega) / np.pi, 1e-9, 1 - 1e-9))
    return np.concatenate([np.log(sigma), np.log(phi).ravel(), u, [np.log(nugget)]])


def _unpack(theta, k, l):
    m = n_angles(k)
    sigma = np.exp(theta[:k])
    phi = np.exp(theta[k : k + k * l]).reshape(k, l)
    omega = np.clip(np.pi * expit(theta[k + k * l : k + k * l + m]), ANGLE_EPS, np.pi - ANGLE_EPS)
    nugget = float(np.exp(theta[-1]))
    return sigma, phi, omega, nugget


def _theta_bounds(k, l):
    m = n_angles(k)
    return (
        [_LOG_SIGMA_BOUNDS] * k
        + [_LOG_PHI_BOUNDS] * (k * l)
        + [_OMEGA_U_BOUNDS] * m
        + [_LOG_NUGGET_BOUNDS]
    )


@dataclass
class FittedModel:
    """Immutable result of fit(): parameters plus cached training algebra.

    Parameters are in standardized output units; predictions are mapped back
    to original units through (y_mean, y_scale).
    """

    params: MgpParams
    data: Dataset  # standardized copy used for the algebra
    basis: RegressionBasis
    y_mean: np.ndarray
    y_scale: np.ndarray
    chol: np.ndarray = field(repr=False)  # lower factor of Cz = M*C + nugget*I
    alpha: np.ndarray = field(repr=False)  # M * Cz^-1 (ybar - F beta)
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self) -> int:
        return self.data.k

    def beta_original(self) -> list:
        """Trend coefficients mapped back to original output units."""
        out = []
        for i, b in enumerate(self.params.beta):
            bo = self.y_scale[i] * b.copy()
            bo[0] += self.y_mean[i]
            out.append(bo)
        return out

    def predict(self, x0: np.ndarray) -> Prediction:
        return predict(self, x0)


def _fit_once(data, basis, lam, config, start=None, support=None) -> FittedModel:
    """One restart of block-coordinate ascent on standardized data."""
    k, l, m_reps = data.k, data.l, data.reps
    if start is None:
        start = (np.ones(k), np.ones((k, l)), np.full(n_angles(k), np.pi / 2.0), 1e-2)
    sigma0, phi0, omega0, nugget0 = start
    theta = _pack(sigma0, phi0, omega0, nugget0)
    bounds = _theta_bounds(k, l)
    ybar = np.concatenate(data.point_means())
    f_pts = _f_points(data, basis)
    beta_split = np.cumsum([basis.width(l)] * k)[:-1]

    def params_at(theta, beta_list):
        sigma, phi, omega, nugget = _unpack(theta, k, l)
        return MgpParams(
            beta=beta_list,
            sigma=MarginalSds(sigma),
            phi=RoughnessParams(phi),
            omega=CrossCorrAngles(omega, k),
            nugget=nugget,
            lam=lam,
        )

    beta = [np.zeros(basis.width(l)) for _ in range(k)]

    def neg_ll(th):
        try:
            return -penalized_loglik(params_at(th, beta), data, basis)
        except (NonPositiveDefiniteError, FloatingPointError, ValueError):
            return 1e12

    # warm-up: settle sigma/phi/nugget with the angles frozen, so the
    # cross-correlation cannot wander while the marginals are still wrong
    if n_angles(k) > 0:
        frozen = list(bounds)
        for a_i in range(k + k * l, k + k * l + n_angles(k)):
            frozen[a_i] = (theta[a_i], theta[a_i])
        res = minimize(
            neg_ll, theta, method="L-BFGS-B", bounds=frozen,
            options={"maxiter": config.cov_maxiter},
        )
        theta = res.x

    prev_obj = -np.inf
    n_iters = 0
    for _ in range(config.max_rounds):
        # beta step at current covariance
        p = params_at(theta, beta)
        cz = _collapsed_system(p, data)
        chol_l, _ = _chol_with_jitter(cz)
        # the collapsed system scales y and F by sqrt(M); lam is unchanged
        if support is None:
            bfull = gls_beta_l1(chol_l, np.sqrt(m_reps) * f_pts, np.sqrt(m_reps) * ybar, lam)
        else:
            bfull = np.zeros(f_pts.shape[1])
            bfull[support] = gls_beta_l1(
                chol_l, np.sqrt(m_reps) * f_pts[:, support], np.sqrt(m_reps) * ybar, lam
            )
        beta = np.split(bfull, beta_split)
        # covariance step at current beta
        res = minimize(
            neg_ll,
            theta,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": config.cov_maxiter},
        )
        theta = res.x
        n_iters += int(res.nit)
        obj = -neg_ll(theta)
        if obj - prev_obj < config.tol * max(1.0, abs(obj)):
            prev_obj = obj
            break
        prev_obj = obj

    params = params_at(theta, beta)
    cz = _collapsed_system(params, data)
    chol_l, jitter = _chol_with_jitter(cz)
    resid = ybar - f_pts @ params.beta_concat()
    alpha = m_reps * cho_solve((chol_l, True), resid)
    return FittedModel(
        params=params,
        data=data,
        basis=basis,
        y_mean=np.zeros(k),
        y_scale=np.ones(k),
        chol=chol_l,
        alpha=alpha,
        diagnostics={
            "loglik": float(prev_obj),
            "iterations": n_iters,
            "jitter": jitter,
        },
    )


def _standardize(data: Dataset):
    means = np.array([yi.mean() for yi in data.y])
    scales = np.array([max(yi.std(), 1e-12) for yi in data.y])
    ystd = [(yi - mu) / sc for yi, mu, sc in zip(data.y, means, scales)]
    return Dataset(data.specs, data.x, ystd, data.reps, data.output_names), means, scales


def fit(
    data: Dataset,
    basis: RegressionBasis = None,
    config: FitConfig = None,
    _support: np.ndarray = None,
) -> FittedModel:
    """Maximum penalized-likelihood fit of all model parameters.

    Alternates an L1-penalized GLS step for the trend coefficients with a
    bounded quasi-Newton step over the covariance parameters (in log/logit
    space); the best of ``config.restarts`` multi-starts wins.  With
    ``lam="auto"`` the penalty level is chosen on the L1 path by a BIC over
    support-restricted refits, and the returned model is the λ=0 refit on the
    selected support (relaxed-lasso style).
    """
    basis = basis or RegressionBasis("const")
    config = config or FitConfig()
    if config.lam == "auto":
        return _fit_auto(data, basis, config)
    lam = float(config.lam)

    sdata, means, scales = _standardize(data)
    rng = np.random.default_rng(config.seed)
    best = None
    errors = []
    lo, hi = config.phi_init_range
    k, l = sdata.k, sdata.l
    starts = [None] * config.restarts
    if k > 1:
        # informed first start: univariate prefits for sigma/phi/nugget and an
        # empirical-correlation guess for the angles
        try:
            starts[0] = _informed_start(sdata, basis, config)
        except (FitError, ValueError):
            pass
    for i in range(config.restarts):
        start = starts[i]
        if start is None and i > 0:
            if starts[0] is not None and i % 2 == 1:
                # perturb the informed start
                s0, p0, o0, n0 = starts[0]
                phi0 = p0 * np.exp(rng.normal(0.0, 0.5, size=(k, l)))
                w = rng.uniform(0.4, 0.9)
                om0 = np.clip(w * o0 + (1 - w) * np.pi / 2.0, ANGLE_EPS, np.pi - ANGLE_EPS)
                start = (s0, phi0, om0, n0)
            else:
                phi0 = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(k, l)))
                start = (np.ones(k), phi0, np.full(n_angles(k), np.pi / 2.0), 1e-2)
        try:
            model = _fit_once(sdata, basis, lam, config, start=start, support=_support)
        except FitError as exc:
            errors.append(str(exc))
            continue
        if best is None or model.diagnostics["loglik"] > best.diagnostics["loglik"]:
            best = model
    if best is None:
        raise FitError(f"all {config.restarts} restarts failed: {errors}")
    best.y_mean = means
    best.y_scale = scales
    best.diagnostics["restarts"] = config.restarts
    best.diagnostics["lambda"] = lam
    return best


def _informed_start(sdata: Dataset, basis: RegressionBasis, config: FitConfig):
    """Starting point from per-output univariate fits plus empirical correlation."""
    k, l = sdata.k, sdata.l
    sub = FitConfig(
        lam=0.0,
        restarts=2,
        max_rounds=config.max_rounds,
        cov_maxiter=config.cov_maxiter,
        tol=config.tol,
        seed=config.seed,
    )
    sigma0 = np.ones(k)
    phi0 = np.ones((k, l))
    nuggets = np.full(k, 1e-2)
    for i in range(k):
        m = fit(sdata.sub_dataset(i), basis, sub)
        # sub-fit re-standardizes; undo its scale to stay in sdata units
        sigma0[i] = m.params.sigma.sigma[0] * m.y_scale[0]
        phi0[i] = m.params.phi.phi[0]
        nuggets[i] = m.params.nugget * m.y_scale[0] ** 2
    omega0 = np.full(n_angles(k), np.pi / 2.0)
    shapes = {xi.shape for xi in sdata.x}
    if len(shapes) == 1 and all(np.allclose(xi, sdata.x[0]) for xi in sdata.x[1:]):
        ybars = np.array(sdata.point_means())
        t_emp = np.corrcoef(ybars)
        t0 = 0.8 * t_emp + 0.2 * np.eye(k)  # shrink toward I to keep PD margins
        w, v = np.linalg.eigh((t0 + t0.T) / 2.0)
        t0 = v @ np.diag(np.clip(w, 1e-6, None)) @ v.T
        d = np.sqrt(np.diag(t0))
        t0 = t0 / np.outer(d, d)
        np.fill_diagonal(t0, 1.0)
        omega0 = corr_to_angles(CrossCorrMatrix(t0)).angles
    return sigma0, phi0, omega0, float(np.mean(nuggets))


def _select_lambda(model0: FittedModel, config: FitConfig):
    """Pick (lambda, support) on the L1 path by BIC over relaxed refits.

    The covariance is held at the unpenalized fit ``model0``; each grid value
    of lambda yields a support via the whitened lasso, the support gets an
    unrestricted GLS refit, and supports are compared by residual quadratic
    form plus ``|support| * log(N)``.  Returns the winning (lambda, support
    index array); ties prefer the sparser support.
    """
    data = model0.data  # standardized
    p = model0.params
    cz = _collapsed_system(p, data)
    chol_l, _ = _chol_with_jitter(cz)
    f_pts = _f_points(data, model0.basis)
    ybar = np.concatenate(data.point_means())
    s = np.sqrt(data.reps)
    w_f = solve_triangular(chol_l, f_pts, lower=True) * s
    w_y = solve_triangular(chol_l, ybar, lower=True) * s
    n_tot = data.n_total
    scored = []
    for g in sorted(config.lambda_grid):
        lam = g * n_tot
        beta = gls_beta_l1(np.eye(len(w_y)), w_f, w_y, lam) if lam > 0 else None
        if beta is None:
            sup = np.arange(f_pts.shape[1])
        else:
            sup = np.flatnonzero(beta != 0.0)
        relaxed = np.zeros(f_pts.shape[1])
        if len(sup):
            coef, *_ = np.linalg.lstsq(w_f[:, sup], w_y, rcond=None)
            relaxed[sup] = coef
        bic = float(np.sum((w_y - w_f @ relaxed) ** 2)) + len(sup) * np.log(n_tot)
        scored.append((bic, len(sup), -lam, tuple(sup)))
    bic, nnz, neg_lam, sup = min(scored)
    return -neg_lam, np.array(sup, dtype=int)


def _fit_auto(data: Dataset, basis: RegressionBasis, config: FitConfig) -> FittedModel:
    """lam="auto": BIC-selected support on the L1 path, then a relaxed refit."""
    cfg0 = replace(config, lam=0.0)
    model0 = fit(data, basis, cfg0)
    lam_sel, support = _select_lambda(model0, config)
    if len(support) == model0.params.beta_concat().size:
        model = model0
    else:
        model = fit(data, basis, cfg0, _support=support)
    model.params.lam = lam_sel
    model.diagnostics["lambda"] = lam_sel
    model.diagnostics["support"] = support.tolist()
    return model


def fit_independent(
    data: Dataset, basis: RegressionBasis = None, config: FitConfig = None
) -> list:
    """Fit K separate univariate GPs, one per output."""
    return [fit(data.sub_dataset(i), basis, config) for i in range(data.k)]


# ---------------------------------------------------------------------------
# Prediction


def predict(model: FittedModel, x0: np.ndarray) -> Prediction:
    """Predictive mean and simple-kriging standard deviation at one point."""
    x0 = np.asarray(x0, dtype=float).ravel()
    data, p = model.data, model.params
    extrapolated = bool(np.any(x0 < 0.0) or np.any(x0 > 1.0))
    m_reps = data.reps
    means = np.empty(data.k)
    sds = np.empty(data.k)
    for k_out in range(data.k):
        r = np.concatenate(
            [
                cross_cov_block(x0[None, :], data.x[j], k_out, j, p.sigma, p.phi, p.t)[0]
                for j in range(data.k)
            ]
        )
        trend = float(model.basis.evaluate(x0[None, :])[0] @ p.beta[k_out])
        mean_std = trend + float(r @ model.alpha)
        v = solve_triangular(model.chol, r, lower=True)
        var_std = p.sigma.sigma[k_out] ** 2 + p.nugget - m_reps * float(v @ v)
        means[k_out] = model.y_mean[k_out] + model.y_scale[k_out] * mean_std
        sds[k_out] = model.y_scale[k_out] * np.sqrt(max(0.0, var_std))
    return Prediction(mean=means, sd=sds, extrapolated=extrapolated)


def predict_batch(model: FittedModel, x: np.ndarray) -> tuple:
    """Means and sds at many points: returns (n x K, n x K) arrays."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    preds = [predict(model, row) for row in x]
    return np.array([p.mean for p in preds]), np.array([p.sd for p in preds])


def rmse(model, test: Dataset) -> np.ndarray:
    """Per-output test RMSE; `model` is a FittedModel or a list of K of them."""
    if test.n_points == 0:
        raise ValueError("empty test dataset")
    out = np.empty(test.k)
    for i in range(test.k):
        if isinstance(model, list):
            mean, _ = predict_batch(model[i], test.x[i])
            pred = mean[:, 0]
        else:
            mean, _ = predict_batch(model, test.x[i])
            pred = mean[:, i]
        obs = test.y[i].reshape(-1, test.reps)
        err = obs - pred[:, None]
        out[i] = float(np.sqrt(np.mean(err ** 2)))
    return out


# ---------------------------------------------------------------------------
# Serialization


def model_to_json(model: FittedModel) -> str:
    p = model.params
    doc = {
        "version": MODEL_FORMAT_VERSION,
        "specs": [{"name": s.name, "lower": s.lower, "upper": s.upper} for s in model.data.specs],
        "basis": model.basis.kind,
        "output_names": list(model.data.output_names),
        "params": {
            "beta": [b.tolist() for b in p.beta],
            "sigma": p.sigma.sigma.tolist(),
            "phi": p.phi.phi.tolist(),
            "omega": p.omega.angles.tolist(),
            "t": p.t.t.tolist(),
            "nugget": p.nugget,
            "lambda": p.lam,
        },
        "standardization": {"y_mean": model.y_mean.tolist(), "y_scale": model.y_scale.tolist()},
        "training": {
            "x": [xi.tolist() for xi in model.data.x],
            "y": [yi.tolist() for yi in model.data.y],
            "reps": model.data.reps,
            "fingerprint": model.data.fingerprint(),
        },
        "diagnostics": {k: v for k, v in model.diagnostics.items()},
    }
    return json.dumps(doc, indent=2)


def model_from_json(text: str) -> FittedModel:
    doc = json.loads(text)
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format: {doc.get('version')!r}")
    specs = [InputSpec(s["name"], s["lower"], s["upper"]) for s in doc["specs"]]
    tr = doc["training"]
    data = Dataset(
        specs,
        [np.array(xi) for xi in tr["x"]],
        [np.array(yi) for yi in tr["y"]],
        tr["reps"],
        doc["output_names"],
    )
    pp = doc["params"]
    k = data.k
    params = MgpParams(
        beta=[np.array(b) for b in pp["beta"]],
        sigma=MarginalSds(np.array(pp["sigma"])),
        phi=RoughnessParams(np.array(pp["phi"])),
        omega=CrossCorrAngles(np.array(pp["omega"]), k),
        nugget=float(pp["nugget"]),
        lam=float(pp["lambda"]),
    )
    basis = RegressionBasis(doc["basis"])
    cz = _collapsed_system(params, data)
    chol_l, _ = _chol_with_jitter(cz)
    ybar = np.concatenate(data.point_means())
    resid = ybar - _f_points(data, basis) @ params.beta_concat()
    alpha = data.reps * cho_solve((chol_l, True), resid)
    return FittedModel(
        params=params,
        data=data,
        basis=basis,
        y_mean=np.array(doc["standardization"]["y_mean"]),
        y_scale=np.array(doc["standardization"]["y_scale"]),
        chol=chol_l,
        alpha=alpha,
        diagnostics=doc.get("diagnostics", {}),
    )
