"""scikit-learn style wrapper: fit on an (n, 2) array of city coordinates, predict the tour."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .solver import SolverConfig, solve
from .tsp_core import TspInstance, tour_length


class TourSolver(BaseEstimator):
    """Online actor-critic tour search on a single instance.

    Each ``fit`` call solves the instance given as ``X``; nothing carries
    over between calls. ``predict`` returns the best tour found as an index
    permutation and ``transform`` reorders the cities along it.
    """

    def __init__(
        self,
        steps=250,
        samples_T=250,
        batch_B=4,
        epsilon=0.05,
        update_K=1,
        k_increment=0,
        k_cap=0,
        init_mode="uniform",
        boost=0.5,
        update_target="relative",
        start_city=None,
        forbidden=(),
        random_state=0,
    ):
        self.steps = steps
        self.samples_T = samples_T
        self.batch_B = batch_B
        self.epsilon = epsilon
        self.update_K = update_K
        self.k_increment = k_increment
        self.k_cap = k_cap
        self.init_mode = init_mode
        self.boost = boost
        self.update_target = update_target
        self.start_city = start_city
        self.forbidden = forbidden
        self.random_state = random_state

    def _config(self) -> SolverConfig:
        params = self.get_params()
        seed = params.pop("random_state")
        if seed is None:
            seed = int(np.random.SeedSequence().generate_state(1)[0])
        return SolverConfig(seed=int(seed), **params)

    def _validate(self, X) -> np.ndarray:
        X = check_array(X, dtype=np.float64, ensure_min_samples=3)
        if X.shape[1] != 2:
            raise ValueError(f"expected (n, 2) city coordinates, got shape {X.shape}")
        return X

    def fit(self, X, y=None):
        X = self._validate(X)
        instance = TspInstance(X)
        result = solve(instance, self._config())
        self.instance_ = instance
        self.result_ = result
        self.tour_ = result.best_tour
        self.length_ = result.best_length
        self.policy_ = result.policy
        self.transition_matrix_ = result.final_matrix.p
        self.history_ = result.history_array()
        self.n_features_in_ = 2
        return self

    def _check_same(self, X):
        check_is_fitted(self, "tour_")
        if X is None:
            return self.instance_.cities
        X = self._validate(X)
        if X.shape != self.instance_.cities.shape or not np.array_equal(X, self.instance_.cities):
            raise ValueError("X must be the instance this solver was fitted on")
        return X

    def predict(self, X=None) -> np.ndarray:
        """Best tour found, as a permutation of row indices of ``X``."""
        self._check_same(X)
        return self.tour_.copy()

    def transform(self, X=None) -> np.ndarray:
        """Rows of ``X`` in visiting order."""
        X = self._check_same(X)
        return X[self.tour_]

    def score(self, X=None, y=None) -> float:
        """Negative length of the fitted tour (higher is better)."""
        self._check_same(X)
        return -tour_length(self.instance_, self.tour_)
