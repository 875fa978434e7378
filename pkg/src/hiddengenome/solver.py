"""Group-lasso penalized multinomial logistic regression.

Minimizes

    -sum_i log p_{i, c_i}  +  lam * sum_j ||B[j, :]||_2

over intercepts ``alpha`` (K,) and coefficients ``B`` (q, K), where
``p_i = softmax(alpha + Z[i] @ B)``. Every predictor column is one group of
K coefficients; intercepts are unpenalized.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from sklearn.model_selection import StratifiedKFold

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


class ConvergenceError(RuntimeError):
    """Raised instead of warning when ``SolverConfig.strict`` is set."""


def softmax_probs(eta: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max shift; accepts a K-vector or an (n, K) array."""
    eta = np.asarray(eta, dtype=float)
    shifted = eta - eta.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def group_soft_threshold(z: np.ndarray, gamma: float) -> np.ndarray:
    """Prox of ``gamma * ||.||_2``: shrink ``z`` toward 0 by ``gamma`` in norm."""
    z = np.asarray(z, dtype=float)
    norm = np.linalg.norm(z)
    if norm <= gamma:
        return np.zeros_like(z)
    return (1.0 - gamma / norm) * z


def _row_norms(B: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", B, B))


def _group_prox_rows(B: np.ndarray, gamma: float) -> np.ndarray:
    norms = _row_norms(B)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(norms > gamma, 1.0 - gamma / norms, 0.0)
    return B * shrink[:, None]


@dataclass(frozen=True)
class FitProblem:
    """Scaled predictor matrix with labels.

    ``Z`` holds the raw columns divided by ``scales`` (population standard
    deviation over the training rows, no centering). Zero-variance columns
    are removed up front and listed in ``dropped``.
    """

    Z: sparse.csr_matrix | np.ndarray
    y: np.ndarray
    n_classes: int
    column_names: list[str]
    column_kinds: list[str]
    scales: np.ndarray
    dropped: list[tuple[str, str]] = field(default_factory=list)  # (name, kind)

    @classmethod
    def from_columns(cls, raw, y, n_classes: int, names, kinds) -> "FitProblem":
        raw = sparse.csr_matrix(raw, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        if raw.shape[0] != y.shape[0]:
            raise ValueError(f"{raw.shape[0]} rows but {y.shape[0]} labels")
        mean = np.asarray(raw.mean(axis=0)).ravel()
        sq = np.asarray(raw.multiply(raw).mean(axis=0)).ravel()
        sd = np.sqrt(np.maximum(sq - mean**2, 0.0))
        keep = sd > 1e-12 * np.maximum(1.0, np.abs(mean))
        names, kinds = list(names), list(kinds)
        dropped = [(names[j], kinds[j]) for j in np.flatnonzero(~keep)]
        scales = sd[keep]
        Z = raw[:, np.flatnonzero(keep)] @ sparse.diags(1.0 / scales)
        Z = sparse.csr_matrix(Z)
        if Z.shape[1] and Z.nnz > 0.25 * Z.shape[0] * Z.shape[1]:
            Z = Z.toarray()
        return cls(
            Z, y, n_classes,
            [names[j] for j in np.flatnonzero(keep)],
            [kinds[j] for j in np.flatnonzero(keep)],
            scales, dropped,
        )

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @cached_property
    def Y(self) -> np.ndarray:
        Y = np.zeros((self.n, self.n_classes))
        Y[np.arange(self.n), self.y] = 1.0
        return Y

    @cached_property
    def ZT(self):
        return self.Z.T.tocsr() if sparse.issparse(self.Z) else np.ascontiguousarray(self.Z.T)

    @cached_property
    def column_means(self) -> np.ndarray:
        return np.asarray(self.Z.mean(axis=0)).ravel()

    @cached_property
    def lipschitz(self) -> float:
        """Upper bound on the curvature of the likelihood in centered coordinates."""
        return _lipschitz_bound(self.Z, self.column_means, self.n)

    @cached_property
    def lambda_max(self) -> float:
        if self.q == 0:
            return 0.0
        alpha = null_intercepts(self)
        _, G = smooth_gradient(alpha, np.zeros((self.q, self.n_classes)), self)
        return float(np.linalg.norm(G, axis=1).max())

    @cached_property
    def merged(self) -> tuple["FitProblem", np.ndarray]:
        """Problem with identical columns merged, and the merged index of each column."""
        Z = sparse.csc_matrix(self.Z) if sparse.issparse(self.Z) else np.asarray(self.Z)
        keys: dict[bytes, int] = {}
        inverse = np.empty(self.q, dtype=np.int64)
        first = []
        for j in range(self.q):
            if sparse.issparse(Z):
                lo, hi = Z.indptr[j], Z.indptr[j + 1]
                key = Z.indices[lo:hi].tobytes() + b"|" + Z.data[lo:hi].tobytes()
            else:
                key = Z[:, j].tobytes()
            k = keys.setdefault(key, len(first))
            if k == len(first):
                first.append(j)
            inverse[j] = k
        if len(first) == self.q:
            return self, inverse
        first = np.asarray(first)
        reduced = FitProblem(self.Z[:, first], self.y, self.n_classes,
                             [self.column_names[j] for j in first],
                             [self.column_kinds[j] for j in first], self.scales[first])
        return reduced, inverse

    def subset(self, rows) -> "FitProblem":
        """Row subset sharing the column scaling of the parent problem."""
        rows = np.asarray(rows)
        return FitProblem(self.Z[rows], self.y[rows], self.n_classes, self.column_names,
                          self.column_kinds, self.scales, self.dropped)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.n_classes)


def _logsumexp_rows(eta: np.ndarray) -> np.ndarray:
    # K is small: column-wise maxima and a matvec beat axis-1 reductions by ~3x
    cols = eta.T
    m = cols[0].copy()
    for c in cols[1:]:
        np.maximum(m, c, out=m)
    return m + np.log(np.exp(eta - m[:, None]) @ np.ones(eta.shape[1]))


def linear_predictor(alpha, B, problem: FitProblem) -> np.ndarray:
    return np.asarray(problem.Z @ B) + alpha[None, :]


def neg_log_likelihood(alpha, B, problem: FitProblem) -> float:
    eta = linear_predictor(alpha, B, problem)
    lse = _logsumexp_rows(eta)
    return float(np.sum(lse - eta[np.arange(problem.n), problem.y]))


def penalty(B) -> float:
    return float(_row_norms(B).sum()) if B.size else 0.0


def objective(alpha, B, problem: FitProblem, lam: float) -> float:
    """Negated penalized log-likelihood (the quantity the solver minimizes)."""
    return neg_log_likelihood(alpha, B, problem) + lam * penalty(B)


def smooth_gradient(alpha, B, problem: FitProblem) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of the negative log-likelihood: (intercepts, coefficient rows)."""
    R = softmax_probs(linear_predictor(alpha, B, problem)) - problem.Y
    return R.sum(axis=0), np.asarray(problem.Z.T @ R)


def null_intercepts(problem: FitProblem) -> np.ndarray:
    """Log class proportions (the intercept-only optimum)."""
    prop = problem.class_counts() / problem.n
    return np.log(np.maximum(prop, 1e-300))


def lambda_max(problem: FitProblem) -> float:
    """Smallest penalty at which every coefficient group is zero."""
    return problem.lambda_max


@dataclass
class SolverConfig:
    kkt_tol: float = 1e-4  # absolute stationarity tolerance on active groups and intercepts
    inactive_rtol: float = 1e-4  # inactive groups need ||grad|| <= lam * (1 + rtol)
    rel_tol: float = 1e-13  # relative objective change counted as a stall (float-precision floor)
    stall_patience: int = 200
    max_iter: int = 10_000
    check_every: int = 5
    strict: bool = False  # raise ConvergenceError rather than warn


@dataclass
class KKTReport:
    intercept: float
    active: float
    inactive_excess: float
    ok: bool

    @property
    def residual(self) -> float:
        return max(self.intercept, self.active, self.inactive_excess)


def _kkt_from_gradient(g_alpha, G, B, lam: float, config: SolverConfig) -> KKTReport:
    norms = np.linalg.norm(B, axis=1)
    act = norms > 0
    intercept = float(np.abs(g_alpha).max()) if g_alpha.size else 0.0
    active = 0.0
    if act.any():
        sub = G[act] + lam * B[act] / norms[act, None]
        active = float(np.abs(sub).max())
    inactive_excess = 0.0
    if (~act).any():
        gn = np.linalg.norm(G[~act], axis=1)
        inactive_excess = float(np.maximum(gn - lam * (1 + config.inactive_rtol), 0.0).max())
    ok = intercept < config.kkt_tol and active < config.kkt_tol and inactive_excess == 0.0
    return KKTReport(intercept, active, inactive_excess, ok)


def kkt_check(alpha, B, problem: FitProblem, lam: float, config: SolverConfig | None = None) -> KKTReport:
    """Optimality certificate for a candidate solution on the scaled problem.

    Active groups need ``|grad + lam * B_j / ||B_j|| |`` below ``kkt_tol``
    entrywise, inactive groups need ``||grad_j|| <= lam * (1 + inactive_rtol)``,
    and the unpenalized intercept gradient must be below ``kkt_tol``.
    """
    g_alpha, G = smooth_gradient(alpha, B, problem)
    return _kkt_from_gradient(g_alpha, G, B, lam, config or SolverConfig())


@dataclass
class FitResult:
    """Solution on the scaled problem."""

    alpha: np.ndarray
    B: np.ndarray
    lam: float
    objective: float
    iterations: int
    converged: bool
    kkt: KKTReport

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(np.linalg.norm(self.B, axis=1)))

    def deviance(self, problem: FitProblem) -> float:
        return 2.0 * neg_log_likelihood(self.alpha, self.B, problem)


def _lipschitz_bound(Z, zbar: np.ndarray, n: int, n_iter: int = 100, seed: int = 0) -> float:
    """0.5 * largest squared singular value of [1 | Z - 1 zbar^T], by power iteration."""
    q = Z.shape[1]
    if q == 0:
        return 0.5 * n
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(q)
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(n_iter):
        u = np.asarray(Z @ v).ravel() - zbar @ v
        w = np.asarray(Z.T @ u).ravel() - zbar * u.sum()
        s_new = np.linalg.norm(w)
        if s_new == 0:
            break
        v = w / s_new
        if abs(s_new - s) <= 1e-6 * s_new:
            s = s_new
            break
        s = s_new
    return 0.5 * max(s * 1.01, n)


def fit(
    problem: FitProblem,
    lam: float,
    warm: tuple[np.ndarray, np.ndarray] | None = None,
    config: SolverConfig | None = None,
) -> FitResult:
    """Minimize the penalized negative log-likelihood at one penalty value.

    Identical columns are merged before solving. For m copies of a column
    the penalty is smallest when their coefficient rows are parallel, and
    then it equals the norm of their sum, so the merged problem has the
    same optimal value; its solution is split equally among the copies.
    The reduced problem is solved by accelerated proximal gradient (FISTA
    with backtracking and adaptive restart). Convergence means the KKT
    certificate holds on the original problem.
    """
    if lam < 0:
        raise ConfigError(f"penalty must be >= 0, got {lam}")
    config = config or SolverConfig()
    K = problem.n_classes

    if problem.q == 0 or lam >= lambda_max(problem):
        alpha = null_intercepts(problem)
        B = np.zeros((problem.q, K))
        return FitResult(alpha, B, lam, objective(alpha, B, problem, lam), 0, True,
                         kkt_check(alpha, B, problem, lam, config))

    reduced, inverse = problem.merged
    if warm is not None:
        warm_B = np.zeros((reduced.q, K))
        np.add.at(warm_B, inverse, np.asarray(warm[1], dtype=float))
        warm = (np.asarray(warm[0], dtype=float), warm_B)
    alpha, B, it, converged = _fista(reduced, lam, warm, config)
    copies = np.bincount(inverse, minlength=reduced.q).astype(float)
    B = B[inverse] / copies[inverse, None]

    report = kkt_check(alpha, B, problem, lam, config)
    converged = converged and report.ok
    if not converged:
        msg = (f"group-lasso fit at lam={lam:.4g} stopped after {it} iterations "
               f"without meeting the KKT certificate (residual {report.residual:.3g})")
        if config.strict:
            raise ConvergenceError(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return FitResult(alpha, B, lam, objective(alpha, B, problem, lam), it, converged, report)


def _fista(problem: FitProblem, lam: float, warm, config: SolverConfig):
    """FISTA on centered coordinates; returns (alpha, B, iterations, certified)."""
    n, q, K = problem.n, problem.q, problem.n_classes
    Z, ZT, Y, y = problem.Z, problem.ZT, problem.Y, problem.y
    zbar = problem.column_means
    rows = np.arange(n)

    # centered coordinates: eta = a_c + (Z - 1 zbar^T) B, with a_c = alpha + zbar @ B
    def linpred(a_c, B):
        return np.asarray(Z @ B) + (a_c - zbar @ B)[None, :]

    flat_y = rows * K + y

    def value(eta):
        lse = _logsumexp_rows(eta)
        return float(lse.sum() - eta.ravel()[flat_y].sum()), lse

    def residual(eta, lse):
        return np.exp(eta - lse[:, None]) - Y

    if warm is None:
        alpha0, B0 = null_intercepts(problem), np.zeros((q, K))
    else:
        alpha0, B0 = np.array(warm[0], dtype=float), np.array(warm[1], dtype=float)
    x_a, x_B = alpha0 + zbar @ B0, B0
    eta_x = linpred(x_a, x_B)
    y_a, y_B, eta_y = x_a.copy(), x_B.copy(), eta_x.copy()
    t = 1.0
    L = problem.lipschitz / 8.0
    F_x = value(eta_x)[0] + lam * penalty(x_B)

    converged = False
    stall = 0
    it = 0
    report = None
    for it in range(1, config.max_iter + 1):
        f_y, lse_y = value(eta_y)
        R = residual(eta_y, lse_y)
        g_a = R.sum(axis=0)
        g_B = np.asarray(ZT @ R) - np.outer(zbar, g_a)
        while True:
            step = 1.0 / L
            n_a = y_a - step * g_a
            n_B = _group_prox_rows(y_B - step * g_B, step * lam)
            eta_n = linpred(n_a, n_B)
            f_n, lse_n = value(eta_n)
            da, dB = n_a - y_a, n_B - y_B
            quad = f_y + g_a @ da + np.sum(g_B * dB) + 0.5 * L * (da @ da + np.sum(dB * dB))
            if f_n <= quad + 1e-12 * abs(f_y):
                break
            L *= 2.0
        F_n = f_n + lam * penalty(n_B)

        # gradient-based restart of the momentum
        if np.sum((y_B - n_B) * (n_B - x_B)) + (y_a - n_a) @ (n_a - x_a) > 0:
            t = 1.0
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_next
        # eta is affine in the parameters, so extrapolate it directly
        y_a = n_a + mom * (n_a - x_a)
        y_B = n_B + mom * (n_B - x_B)
        eta_y = eta_n + mom * (eta_n - eta_x)
        t = t_next

        rel = (F_x - F_n) / max(abs(F_x), 1.0)
        stall = stall + 1 if abs(rel) < config.rel_tol else 0
        x_a, x_B, eta_x, F_x = n_a, n_B, eta_n, F_n

        if it % config.check_every == 0 or stall >= config.stall_patience:
            R_x = residual(eta_x, lse_n)
            g_alpha = R_x.sum(axis=0)
            report = _kkt_from_gradient(g_alpha, np.asarray(ZT @ R_x), x_B, lam, config)
            if report.ok:
                converged = True
                break
            if stall >= config.stall_patience:
                break

    return x_a - zbar @ x_B, x_B, it, converged


def lambda_grid(lmax: float, n_lambda: int = 50, lambda_min_ratio: float = 0.01) -> np.ndarray:
    if n_lambda < 2:
        raise ConfigError(f"n_lambda must be >= 2, got {n_lambda}")
    if not 0 < lambda_min_ratio < 1:
        raise ConfigError(f"lambda_min_ratio must lie in (0, 1), got {lambda_min_ratio}")
    if lmax <= 0:
        # degenerate problem (e.g. one class): a flat grid still yields null fits
        lmax = 1.0
    return np.geomspace(lmax, lmax * lambda_min_ratio, n_lambda)


@dataclass
class PenaltyPath:
    lambdas: np.ndarray
    fits: list[FitResult]

    @property
    def n_active(self) -> list[int]:
        return [f.n_active for f in self.fits]

    @property
    def objectives(self) -> list[float]:
        return [f.objective for f in self.fits]


def fit_path(
    problem: FitProblem,
    n_lambda: int = 50,
    lambda_min_ratio: float = 0.01,
    lambdas: np.ndarray | None = None,
    config: SolverConfig | None = None,
) -> PenaltyPath:
    """Warm-started fits along a log-spaced grid from lambda_max downward."""
    if lambdas is None:
        lambdas = lambda_grid(lambda_max(problem), n_lambda, lambda_min_ratio)
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) >= 0):
        raise ConfigError("lambda grid must be strictly decreasing")
    fits, warm = [], None
    for lam in lambdas:
        res = fit(problem, float(lam), warm=warm, config=config)
        fits.append(res)
        warm = (res.alpha, res.B)
    return PenaltyPath(lambdas, fits)


def stratified_folds(y: np.ndarray, n_folds: int, seed: int) -> np.ndarray:
    """Fold id per row, class proportions preserved, deterministic in ``seed``."""
    if n_folds < 2:
        raise ConfigError(f"need at least 2 folds, got {n_folds}")
    counts = np.bincount(y)
    present = counts[counts > 0]
    if present.size and present.min() < n_folds:
        raise ConfigError(
            f"smallest class has {present.min()} members, fewer than {n_folds} folds; use fewer folds"
        )
    folds = np.empty(len(y), dtype=np.int64)
    skf = StratifiedKFold(n_splits=n_folds, shuffle=True, random_state=seed)
    for f, (_, test) in enumerate(skf.split(np.zeros(len(y)), y)):
        folds[test] = f
    return folds


@dataclass
class CVResult:
    lambdas: np.ndarray
    mean_deviance: np.ndarray
    sd_deviance: np.ndarray
    chosen_index: int
    rule: str
    path: PenaltyPath | None = None

    @property
    def chosen_lambda(self) -> float:
        return float(self.lambdas[self.chosen_index])

    def to_tsv(self) -> str:
        lines = ["lambda\tmean_deviance\tsd_deviance\tn_active_groups"]
        active = self.path.n_active if self.path is not None else [""] * len(self.lambdas)
        for lam, m, s, a in zip(self.lambdas, self.mean_deviance, self.sd_deviance, active):
            lines.append(f"{lam:.10g}\t{m:.10g}\t{s:.10g}\t{a}")
        return "\n".join(lines) + "\n"


def cross_validate_lambda(
    problem: FitProblem,
    n_folds: int = 10,
    n_lambda: int = 50,
    lambda_min_ratio: float = 0.01,
    seed: int = 0,
    rule: str = "min",
    config: SolverConfig | None = None,
    full_path: bool = True,
) -> CVResult:
    """Stratified K-fold choice of the penalty by held-out multinomial deviance.

    ``rule="min"`` takes the deviance minimizer; ``rule="1sd"`` takes the
    largest penalty whose mean deviance is within one (across-fold) standard
    deviation of the minimum. Fold problems reuse the parent column scaling.
    """
    if rule not in ("min", "1sd"):
        raise ConfigError(f"unknown CV rule {rule!r}")
    lambdas = lambda_grid(lambda_max(problem), n_lambda, lambda_min_ratio)
    folds = stratified_folds(problem.y, n_folds, seed)
    dev = np.zeros((n_folds, len(lambdas)))
    for f in range(n_folds):
        train, held = problem.subset(folds != f), problem.subset(folds == f)
        path = fit_path(train, lambdas=lambdas, config=config)
        dev[f] = [r.deviance(held) for r in path.fits]
    mean, sd = dev.mean(axis=0), dev.std(axis=0, ddof=1)
    best = int(np.argmin(mean))
    chosen = best
    if rule == "1sd":
        within = np.flatnonzero(mean <= mean[best] + sd[best])
        chosen = int(within.min())
    path = fit_path(problem, lambdas=lambdas, config=config) if full_path else None
    return CVResult(lambdas, mean, sd, chosen, rule, path)
