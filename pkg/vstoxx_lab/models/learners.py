"""Lasso with its regularization path, random forest and permutation importance.

The Lasso minimizes (2n)^-1 ||y - X b - b0||^2 + alpha ||b||_1 with an
unpenalized intercept. It is solved by cyclic coordinate descent on the Gram
matrix so the duality gap and KKT residual can be driven well below what a
generic solver tolerance guarantees.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

import numpy as np
from sklearn.ensemble import RandomForestRegressor
from sklearn.linear_model import LinearRegression
from sklearn.metrics import explained_variance_score
from sklearn.model_selection import ShuffleSplit

from ..core.errors import (
    DegenerateFoldError,
    DomainError,
    InsufficientDataError,
    LassoConvergenceError,
    UndefinedScoreError,
    UndefinedShrinkageError,
)
from ..core.logging import StructuredLogger, log_performance
from ..schemas.learners import CrossValidationResult, ForestModel, ImportanceReport, LassoFit, LassoPath

LASSO_GAP_TOL = 1e-9
LASSO_KKT_TOL = 1e-10
LASSO_MAX_SWEEPS = 100_000
LASSO_STALL_STEP = 1e-15

DEFAULT_TREES = 250
DEFAULT_REPEATS = 30
CV_TEST_SIZE = 0.2
CV_TIE_TOL = 1e-12

logger = StructuredLogger("learners")


def _as_xy(X, y) -> Tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2 or X.shape[0] != y.size:
        raise DomainError(f"X must be (n, p) with n = len(y); got {X.shape} and {y.size}")
    if X.shape[0] < 2:
        raise InsufficientDataError(f"At least 2 rows are required, got {X.shape[0]}")
    return X, y


def soft_threshold(z: float, alpha: float) -> float:
    return float(np.sign(z) * max(abs(z) - alpha, 0.0))


def kkt_violation(X, y, fit: LassoFit) -> np.ndarray:
    """Per-coefficient distance from the Lasso optimality conditions."""
    X, y = _as_xy(X, y)
    residual = y - fit.predict(X)
    grad = X.T @ (residual - residual.mean()) / X.shape[0]
    beta = fit.coefficients
    active = beta != 0.0
    return np.where(
        active,
        np.abs(grad - fit.alpha * np.sign(beta)),
        np.maximum(np.abs(grad) - fit.alpha, 0.0),
    )


def _duality_gap(Xc: np.ndarray, yc: np.ndarray, beta: np.ndarray, alpha: float) -> float:
    n = Xc.shape[0]
    residual = yc - Xc @ beta
    grad_norm = np.max(np.abs(Xc.T @ residual)) / n
    scale = 1.0 if grad_norm <= alpha else alpha / grad_norm
    dual_point = residual * scale
    primal = residual @ residual / (2.0 * n) + alpha * np.abs(beta).sum()
    dual = yc @ dual_point / n - dual_point @ dual_point / (2.0 * n)
    return float(primal - dual)


def alpha_max(X, y) -> float:
    """Smallest alpha at which every coefficient is exactly zero."""
    X, y = _as_xy(X, y)
    Xc = X - X.mean(axis=0)
    return float(np.max(np.abs(Xc.T @ (y - y.mean()))) / X.shape[0])


def lasso_fit(
    X,
    y,
    alpha: float,
    beta_init: Optional[np.ndarray] = None,
    tol: float = LASSO_GAP_TOL,
    max_sweeps: int = LASSO_MAX_SWEEPS,
) -> LassoFit:
    X, y = _as_xy(X, y)
    if not np.isfinite(alpha) or alpha < 0.0:
        raise DomainError(f"alpha must be non-negative, got {alpha}")
    n, p = X.shape
    x_mean, y_mean = X.mean(axis=0), y.mean()

    if alpha == 0.0:
        ols = LinearRegression().fit(X, y)
        return LassoFit(alpha=0.0, coefficients=np.asarray(ols.coef_, dtype=float), intercept=float(ols.intercept_))

    Xc, yc = X - x_mean, y - y_mean
    gram = Xc.T @ Xc / n
    corr = Xc.T @ yc / n
    diag = np.diag(gram).copy()
    beta = np.zeros(p) if beta_init is None else np.array(beta_init, dtype=float)
    beta[diag == 0.0] = 0.0
    # gap and KKT are compared on the scale of the target
    y_scale = max(1.0, float(yc @ yc / n))
    grad_scale = np.sqrt(y_scale)

    gap = np.inf
    for sweep in range(1, max_sweeps + 1):
        max_step = 0.0
        for j in range(p):
            if diag[j] == 0.0:
                continue
            rho = corr[j] - gram[j] @ beta + diag[j] * beta[j]
            new = soft_threshold(rho, alpha) / diag[j]
            step = abs(new - beta[j])
            if step > 0.0:
                beta[j] = new
                max_step = max(max_step, step)
        grad = corr - gram @ beta
        violation = np.where(
            beta != 0.0,
            np.abs(grad - alpha * np.sign(beta)),
            np.maximum(np.abs(grad) - alpha, 0.0),
        ).max()
        gap = _duality_gap(Xc, yc, beta, alpha)
        if (gap <= tol * y_scale and violation <= LASSO_KKT_TOL * grad_scale) or max_step <= LASSO_STALL_STEP:
            return LassoFit(
                alpha=float(alpha),
                coefficients=beta,
                intercept=float(y_mean - x_mean @ beta),
                n_iter=sweep,
                duality_gap=max(gap, 0.0),
            )

    last = LassoFit(alpha=float(alpha), coefficients=beta, intercept=float(y_mean - x_mean @ beta),
                    n_iter=max_sweeps, duality_gap=gap)
    raise LassoConvergenceError(
        f"Coordinate descent did not converge in {max_sweeps} sweeps (alpha={alpha:.3e}, gap={gap:.3e})",
        last_iterate=last,
    )


def shrinkage_factor(fit: LassoFit, ols: LassoFit) -> float:
    """sum |b_alpha| / sum |b_ols|."""
    denominator = ols.l1_norm
    if denominator == 0.0:
        raise UndefinedShrinkageError("Least-squares coefficients are all zero; shrinkage is undefined")
    return fit.l1_norm / denominator


def alpha_grid(alpha_top: float, n_alphas: int = 100, eps: float = 1e-4) -> np.ndarray:
    """Decreasing log-spaced grid from alpha_top to eps * alpha_top."""
    if alpha_top <= 0.0:
        raise DomainError("The target is uncorrelated with every feature; no regularization path exists")
    return np.geomspace(alpha_top, eps * alpha_top, n_alphas)


def _fit_grid(X: np.ndarray, y: np.ndarray, alphas: np.ndarray) -> List[LassoFit]:
    """Warm-started fits in decreasing-alpha order, returned in the grid's order."""
    order = np.argsort(-alphas, kind="stable")
    fits: List[Optional[LassoFit]] = [None] * alphas.size
    beta = None
    for idx in order:
        fit = lasso_fit(X, y, float(alphas[idx]), beta_init=beta)
        beta = fit.coefficients
        fits[idx] = fit
    return fits


@log_performance
def lasso_path(
    X,
    y,
    n_alphas: int = 100,
    eps: float = 1e-4,
    feature_names: Optional[Sequence[str]] = None,
) -> LassoPath:
    X, y = _as_xy(X, y)
    alphas = alpha_grid(alpha_max(X, y), n_alphas, eps)
    fits = _fit_grid(X, y, alphas)
    ols = lasso_fit(X, y, 0.0)
    shrinkage = np.array([shrinkage_factor(fit, ols) for fit in fits])
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X.shape[1])]
    logger.info(
        "Lasso path computed",
        n_alphas=n_alphas,
        alpha_max=float(alphas[0]),
        total_sweeps=int(sum(fit.n_iter for fit in fits)),
    )
    return LassoPath(alphas=alphas, fits=fits, shrinkage=shrinkage, ols=ols, feature_names=names)


def explained_variance(y, y_hat) -> float:
    """1 - Var(y - y_hat) / Var(y)."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.size < 2:
        raise InsufficientDataError("explained variance needs at least 2 observations")
    if y.size != y_hat.size:
        raise DomainError("y and y_hat differ in length")
    if np.ptp(y) == 0.0:
        raise UndefinedScoreError("Target variance is zero; explained variance is undefined")
    return float(explained_variance_score(y, y_hat))


@log_performance
def cross_validate_alpha(
    X,
    y,
    alphas: Sequence[float],
    k: int = 5,
    seed: int = 0,
    test_size: float = CV_TEST_SIZE,
) -> CrossValidationResult:
    """Mean explained variance over k random 80/20 splits for every alpha.

    The best alpha maximizes the mean score; near-ties go to the larger alpha.
    """
    X, y = _as_xy(X, y)
    alphas = np.asarray(alphas, dtype=float)
    if alphas.size == 0:
        raise DomainError("alpha grid is empty")
    if X.shape[0] < 2 * k:
        raise InsufficientDataError(f"{k}-fold validation needs at least {2 * k} rows, got {X.shape[0]}")

    splitter = ShuffleSplit(n_splits=k, test_size=test_size, random_state=seed)
    fold_scores = np.empty((alphas.size, k))
    for fold, (train_idx, test_idx) in enumerate(splitter.split(X)):
        if np.ptp(y[train_idx]) == 0.0 or np.ptp(y[test_idx]) == 0.0:
            raise DegenerateFoldError(f"Fold {fold} has a constant target")
        fits = _fit_grid(X[train_idx], y[train_idx], alphas)
        for i, fit in enumerate(fits):
            fold_scores[i, fold] = explained_variance(y[test_idx], fit.predict(X[test_idx]))

    mean_scores = fold_scores.mean(axis=1)
    top = mean_scores.max()
    candidates = np.flatnonzero(mean_scores >= top - CV_TIE_TOL)
    best = int(candidates[np.argmax(alphas[candidates])])
    logger.info("Cross-validation finished", folds=k, best_alpha=float(alphas[best]), best_score=float(mean_scores[best]))
    return CrossValidationResult(
        alphas=alphas,
        mean_scores=mean_scores,
        fold_scores=fold_scores,
        best_alpha=float(alphas[best]),
        best_score=float(mean_scores[best]),
    )


def forest_fit(
    X,
    y,
    n_trees: int = DEFAULT_TREES,
    seed: int = 0,
    bootstrap: bool = True,
    n_jobs: int = 1,
) -> ForestModel:
    """Bagged regression trees grown to pure leaves, every feature tried at each split."""
    X, y = _as_xy(X, y)
    if n_trees < 1:
        raise DomainError("n_trees must be at least 1")
    hyperparameters = {
        "n_estimators": n_trees,
        "criterion": "squared_error",
        "max_depth": None,
        "min_samples_leaf": 1,
        "max_features": 1.0,
        "bootstrap": bootstrap,
    }
    forest = RandomForestRegressor(random_state=seed, n_jobs=n_jobs, **hyperparameters)
    forest.fit(X, y)
    return ForestModel(trees=list(forest.estimators_), seed=seed, hyperparameters=hyperparameters)


def _importance_for_seed(
    X_train: np.ndarray,
    y_train: np.ndarray,
    X_test: np.ndarray,
    y_test: np.ndarray,
    n_trees: int,
    base_seed: int,
    repeat: int,
) -> np.ndarray:
    model = forest_fit(X_train, y_train, n_trees=n_trees, seed=base_seed + repeat)
    baseline = explained_variance(y_test, model.predict(X_test))
    rng = np.random.default_rng([base_seed, repeat])
    drops = np.empty(X_test.shape[1])
    for j in range(X_test.shape[1]):
        shuffled = X_test.copy()
        shuffled[:, j] = rng.permutation(shuffled[:, j])
        drops[j] = baseline - explained_variance(y_test, model.predict(shuffled))
    return drops


@log_performance
def permutation_importance(
    X_test,
    y_test,
    train_inputs: Tuple[np.ndarray, np.ndarray],
    n_repeats: int = DEFAULT_REPEATS,
    base_seed: int = 0,
    n_trees: int = DEFAULT_TREES,
    feature_names: Optional[Sequence[str]] = None,
    threads: int = 1,
) -> ImportanceReport:
    """Drop in held-out explained variance when one feature column is shuffled.

    One forest per repeat, seeded ``base_seed + repeat``; one permutation per
    feature per forest.
    """
    X_test, y_test = _as_xy(X_test, y_test)
    X_train, y_train = _as_xy(*train_inputs)
    if X_train.shape[1] != X_test.shape[1]:
        raise DomainError("train and test feature counts differ")
    if n_repeats < 1:
        raise DomainError("n_repeats must be at least 1")

    def run(repeat: int) -> np.ndarray:
        return _importance_for_seed(X_train, y_train, X_test, y_test, n_trees, base_seed, repeat)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            columns = list(pool.map(run, range(n_repeats)))
    else:
        columns = [run(repeat) for repeat in range(n_repeats)]

    raw = np.column_stack(columns)
    names = list(feature_names) if feature_names is not None else [f"x{j}" for j in range(X_test.shape[1])]
    report = ImportanceReport(
        feature_names=names,
        mean=raw.mean(axis=1),
        std=raw.std(axis=1, ddof=1) if n_repeats > 1 else np.zeros(raw.shape[0]),
        raw=raw,
        n_repeats=n_repeats,
    )
    logger.info("Permutation importance computed", n_repeats=n_repeats, ranking=report.ranked()[:5])
    return report
