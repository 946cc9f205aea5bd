from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np


@dataclass(frozen=True)
class LassoFit:
    alpha: float
    coefficients: np.ndarray
    intercept: float
    n_iter: int = 0
    duality_gap: float = 0.0

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.coefficients + self.intercept

    @property
    def l1_norm(self) -> float:
        return float(np.abs(self.coefficients).sum())


@dataclass(frozen=True)
class LassoPath:
    alphas: np.ndarray  # decreasing
    fits: List[LassoFit]
    shrinkage: np.ndarray
    ols: LassoFit
    feature_names: List[str]

    @property
    def coefficients(self) -> np.ndarray:
        """Matrix of shape (n_alphas, n_features)."""
        return np.vstack([fit.coefficients for fit in self.fits])

    def entry_shrinkage(self) -> Dict[str, float]:
        """Smallest shrinkage factor at which each feature is still in the model.

        Features that never enter get ``nan``.
        """
        coefs = self.coefficients
        result = {}
        for j, name in enumerate(self.feature_names):
            active = np.flatnonzero(coefs[:, j] != 0.0)
            result[name] = float(self.shrinkage[active].min()) if active.size else float("nan")
        return result


@dataclass(frozen=True)
class CrossValidationResult:
    alphas: np.ndarray
    mean_scores: np.ndarray
    fold_scores: np.ndarray  # (n_alphas, k)
    best_alpha: float
    best_score: float


@dataclass
class ForestModel:
    trees: List[Any]
    seed: int
    hyperparameters: Dict[str, Any] = field(default_factory=dict)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        # fixed summation order keeps predictions independent of worker count
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)


@dataclass(frozen=True)
class ImportanceReport:
    feature_names: List[str]
    mean: np.ndarray
    std: np.ndarray
    raw: np.ndarray  # (n_features, n_repeats)
    n_repeats: int

    def ranked(self) -> List[str]:
        order = np.argsort(-self.mean, kind="stable")
        return [self.feature_names[i] for i in order]

    def as_dict(self) -> Dict[str, Dict[str, float]]:
        return {
            name: {"mean": float(m), "std": float(s)}
            for name, m, s in zip(self.feature_names, self.mean, self.std)
        }
