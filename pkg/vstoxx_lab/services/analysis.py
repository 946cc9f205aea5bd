"""Analysis of the feature table: correlations, Lasso path and CV, forest, importance."""

from dataclasses import dataclass
from typing import Any, Dict, List

import numpy as np
import pandas as pd

from ..core.logging import StructuredLogger, log_performance
from ..models import learners
from ..schemas.learners import CrossValidationResult, ImportanceReport, LassoFit, LassoPath
from .features import consolidate, correlation_matrix, standardize, train_test_split

logger = StructuredLogger("analysis")


@dataclass
class AnalysisResult:
    correlation: pd.DataFrame
    path: LassoPath
    cv: CrossValidationResult
    best_fit: LassoFit
    best_shrinkage: float
    scores: Dict[str, float]
    importance: ImportanceReport
    predictions: pd.DataFrame

    def path_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.path.coefficients, columns=self.path.feature_names)
        frame.insert(0, "shrinkage", self.path.shrinkage)
        frame.insert(0, "alpha", self.path.alphas)
        return frame

    def cv_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"alpha": self.cv.alphas, "mean_score": self.cv.mean_scores})
        for k in range(self.cv.fold_scores.shape[1]):
            frame[f"fold_{k}"] = self.cv.fold_scores[:, k]
        return frame

    def importance_frame(self) -> pd.DataFrame:
        order = np.argsort(-self.importance.mean, kind="stable")
        return pd.DataFrame({
            "feature": [self.importance.feature_names[i] for i in order],
            "mean": self.importance.mean[order],
            "std": self.importance.std[order],
        })

    def metrics(self) -> Dict[str, Any]:
        return {
            "best_alpha": self.cv.best_alpha,
            "best_cv_score": self.cv.best_score,
            "shrinkage_at_best_alpha": self.best_shrinkage,
            "explained_variance": dict(self.scores),
            "dropout_shrinkage": self.path.entry_shrinkage(),
            "importance_ranking": self.importance.ranked(),
            "lasso_coefficients": dict(zip(self.path.feature_names, self.best_fit.coefficients.tolist())),
        }


@log_performance
def run_analysis(
    table: pd.DataFrame,
    seed: int = 0,
    test_fraction: float = 0.30,
    folds: int = 5,
    n_alphas: int = 100,
    alpha_eps: float = 1e-4,
    n_trees: int = learners.DEFAULT_TREES,
    n_repeats: int = learners.DEFAULT_REPEATS,
    threads: int = 1,
) -> AnalysisResult:
    """Full modelling run over a feature table with a date column and the table columns.

    The Lasso sees features standardized with training statistics; the forest
    consumes raw features.
    """
    correlation = correlation_matrix(table)
    consolidated = consolidate(table)
    train, test = train_test_split(consolidated, test_fraction, seed)
    names: List[str] = train.columns

    scaler = standardize(train.features)
    x_train, x_test = scaler.apply(train.features).to_numpy(), scaler.apply(test.features).to_numpy()
    y_train, y_test = train.target.to_numpy(), test.target.to_numpy()

    path = learners.lasso_path(x_train, y_train, n_alphas, alpha_eps, feature_names=names)
    cv = learners.cross_validate_alpha(x_train, y_train, path.alphas, k=folds, seed=seed)
    best_fit = path.fits[int(np.flatnonzero(path.alphas == cv.best_alpha)[0])]
    best_shrinkage = learners.shrinkage_factor(best_fit, path.ols)

    raw_train, raw_test = train.features.to_numpy(), test.features.to_numpy()
    forest = learners.forest_fit(raw_train, y_train, n_trees=n_trees, seed=seed, n_jobs=threads)
    scores = {
        "lasso_train": learners.explained_variance(y_train, best_fit.predict(x_train)),
        "lasso_test": learners.explained_variance(y_test, best_fit.predict(x_test)),
        "forest_train": learners.explained_variance(y_train, forest.predict(raw_train)),
        "forest_test": learners.explained_variance(y_test, forest.predict(raw_test)),
    }
    importance = learners.permutation_importance(
        raw_test, y_test, (raw_train, y_train),
        n_repeats=n_repeats, base_seed=seed, n_trees=n_trees, feature_names=names, threads=threads,
    )

    def prediction_frame(part, label: str, x: np.ndarray, raw: np.ndarray) -> pd.DataFrame:
        market = part.features["market_price"].to_numpy()
        # diff_price is market minus model, so model + predicted diff is the augmented price
        model = market - part.target.to_numpy()
        y_hat_lasso, y_hat_forest = best_fit.predict(x), forest.predict(raw)
        return pd.DataFrame({
            "date": [str(d) for d in part.dates],
            "split": label,
            "y": part.target.to_numpy(),
            "y_hat_lasso": y_hat_lasso,
            "y_hat_forest": y_hat_forest,
            "market_price": market,
            "model_price": model,
            "augmented_price_lasso": model + y_hat_lasso,
            "augmented_price_forest": model + y_hat_forest,
        })

    predictions = pd.concat([
        prediction_frame(train, "train", x_train, raw_train),
        prediction_frame(test, "test", x_test, raw_test),
    ]).sort_values(["date"], kind="stable").reset_index(drop=True)

    logger.info("Analysis finished", rows=len(consolidated), best_alpha=cv.best_alpha, **scores)
    return AnalysisResult(
        correlation=correlation,
        path=path,
        cv=cv,
        best_fit=best_fit,
        best_shrinkage=best_shrinkage,
        scores=scores,
        importance=importance,
        predictions=predictions,
    )
