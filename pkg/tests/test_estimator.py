import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rltsp import TourSolver
from rltsp.tsp_core import TspInstance, random_instance, tour_length

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)


def test_fit_predict_square():
    est = TourSolver(steps=20, samples_T=30).fit(SQUARE)
    assert est.length_ == pytest.approx(4.0)
    assert sorted(est.predict(SQUARE)) == [0, 1, 2, 3]
    assert est.score(SQUARE) == pytest.approx(-4.0)
    np.testing.assert_array_equal(est.transform(SQUARE), SQUARE[est.tour_])
    assert est.transition_matrix_.shape == (4, 4)
    assert est.history_.shape == (20, 4)


def test_params_round_trip():
    est = TourSolver(steps=5, epsilon=0.1)
    assert est.get_params()["epsilon"] == 0.1
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(steps=7)
    assert est.steps == 7


def test_matches_library_solve():
    from rltsp.solver import SolverConfig, solve

    X = random_instance(9, 2).cities
    est = TourSolver(steps=15, samples_T=20, random_state=4).fit(X)
    r = solve(TspInstance(X), SolverConfig(steps=15, samples_T=20, seed=4))
    assert est.length_ == r.best_length
    assert est.length_ == pytest.approx(tour_length(TspInstance(X), est.tour_))


def test_input_validation():
    with pytest.raises(ValueError):
        TourSolver().fit(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        TourSolver().fit([[0, 0], [1, 1]])
    with pytest.raises(ValueError):
        TourSolver().fit([[0, 0], [1, np.nan], [2, 2]])
    with pytest.raises(NotFittedError):
        TourSolver().predict(SQUARE)
    est = TourSolver(steps=2, samples_T=5).fit(SQUARE)
    with pytest.raises(ValueError):
        est.predict(SQUARE + 1)
