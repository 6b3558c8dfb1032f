"""Row-stochastic city transition matrix: initialization, sampling, decoding, updates."""

from __future__ import annotations

import csv
import io

import numpy as np

from .exceptions import (
    ConstraintViolationError,
    InfeasibleConstraintsError,
    InvalidSizeError,
    ParameterError,
)
from .tsp_core import check_tour, tour_edges

PROB_FLOOR = 1e-12


class TransitionMatrix:
    """``p[i, j]``: probability of moving from city ``i`` to city ``j``.

    ``allowed`` marks the entries that may carry mass; the diagonal and any
    forbidden pairs are permanently zero.
    """

    def __init__(self, p, allowed=None):
        p = np.array(p, dtype=np.float64)
        n = p.shape[0]
        if p.ndim != 2 or p.shape != (n, n):
            raise InvalidSizeError(f"transition matrix must be square, got {p.shape}")
        if allowed is None:
            allowed = ~np.eye(n, dtype=bool)
        allowed = np.array(allowed, dtype=bool)
        np.fill_diagonal(allowed, False)
        self.p = p
        self.allowed = allowed
        self.diagnostics = {"fallbacks": 0}

    @property
    def n(self) -> int:
        return self.p.shape[0]

    def copy(self) -> "TransitionMatrix":
        return TransitionMatrix(self.p.copy(), self.allowed.copy())

    def check(self, tol=1e-9):
        """Raise AssertionError if any stochasticity invariant is broken."""
        p = self.p
        assert np.all(p >= 0) and np.all(p <= 1), "entries outside [0, 1]"
        assert np.all(p[~self.allowed] == 0), "mass on a forbidden or diagonal entry"
        assert np.allclose(p.sum(axis=1), 1.0, atol=tol, rtol=0), "row sums differ from 1"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for row in self.p:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TransitionMatrix":
        rows = [[float(x) for x in r] for r in csv.reader(io.StringIO(text)) if r]
        p = np.array(rows)
        return cls(p, allowed=p > 0)


def _allowed_mask(n, forbidden):
    allowed = ~np.eye(n, dtype=bool)
    for i, j in forbidden or ():
        allowed[i, j] = False
    empty = np.flatnonzero(~allowed.any(axis=1))
    if empty.size:
        raise InfeasibleConstraintsError(
            f"rows {empty.tolist()} have every transition forbidden"
        )
    return allowed


def init_uniform(n: int, forbidden=()) -> TransitionMatrix:
    if n < 3:
        raise InvalidSizeError(f"need at least 3 cities, got {n}")
    allowed = _allowed_mask(n, forbidden)
    p = allowed / allowed.sum(axis=1, keepdims=True)
    return TransitionMatrix(p, allowed)


def init_from_tour(n: int, tour, boost: float, forbidden=()) -> TransitionMatrix:
    """Put ``boost`` on each edge of ``tour``; spread the rest of every row uniformly."""
    perm = check_tour(n, tour)
    allowed = _allowed_mask(n, forbidden)
    if not 1.0 / (n - 1) < boost < 1.0:
        raise ParameterError(f"boost must lie in ({1.0 / (n - 1):.6g}, 1), got {boost}")
    p = np.zeros((n, n))
    for i, j in tour_edges(perm):
        if not allowed[i, j]:
            raise ConstraintViolationError(f"seed tour uses forbidden edge ({i}, {j})")
        others = allowed[i].copy()
        others[j] = False
        k = others.sum()
        if k == 0:
            p[i, j] = 1.0
            continue
        p[i, others] = (1.0 - boost) / k
        p[i, j] = boost
    return TransitionMatrix(p, allowed)


def init_distance(distances, tau: float = 0.3, forbidden=()) -> TransitionMatrix:
    """Rows proportional to ``exp(-(d_ij - d_i,min) / (tau * mean nearest distance))``.

    A distance-shaped prior: short edges start likely, long ones unlikely.
    """
    d = np.array(distances, dtype=np.float64)
    n = d.shape[0]
    if n < 3:
        raise InvalidSizeError(f"need at least 3 cities, got {n}")
    if tau <= 0:
        raise ParameterError(f"tau must be positive, got {tau}")
    allowed = _allowed_mask(n, forbidden)
    d = np.where(allowed, d, np.inf)
    nearest = d.min(axis=1, keepdims=True)
    scale = tau * float(np.mean(nearest))
    w = np.exp(-(d - nearest) / scale)
    w = np.where(allowed, np.maximum(w, PROB_FLOOR), 0.0)
    return TransitionMatrix(w / w.sum(axis=1, keepdims=True), allowed)


def sample_episodes(P: TransitionMatrix, starts, rng) -> np.ndarray:
    """Draw one tour per entry of ``starts``; returns a (len(starts), n) int array.

    Each step draws from the current row restricted to unvisited cities.
    A row with no mass left on unvisited cities falls back to a uniform draw
    and is counted in ``P.diagnostics["fallbacks"]``.
    """
    starts = np.atleast_1d(np.asarray(starts, dtype=np.intp))
    n, m = P.n, starts.shape[0]
    if np.any((starts < 0) | (starts >= n)):
        raise IndexError("start city out of range")
    tours = np.empty((m, n), dtype=np.intp)
    tours[:, 0] = starts
    unvisited = np.ones((m, n), dtype=bool)
    rows = np.arange(m)
    unvisited[rows, starts] = False
    cur = starts
    for k in range(1, n):
        w = P.p[cur] * unvisited
        cdf = np.cumsum(w, axis=1)
        total = cdf[:, -1]
        dead = total <= 0
        if np.any(dead):
            P.diagnostics["fallbacks"] += int(dead.sum())
            cdf[dead] = np.cumsum(unvisited[dead], axis=1)
            total = cdf[:, -1]
        u = (1.0 - rng.random(m)) * total
        nxt = (cdf < u[:, None]).sum(axis=1)
        nxt = np.minimum(nxt, n - 1)
        tours[:, k] = nxt
        unvisited[rows, nxt] = False
        cur = nxt
    return tours


def sample_episode(P: TransitionMatrix, start: int, rng) -> np.ndarray:
    return sample_episodes(P, [start], rng)[0]


def greedy_decode(P: TransitionMatrix, start: int) -> np.ndarray:
    """Follow the most likely unvisited successor from ``start``; ties go to the lowest index."""
    n = P.n
    if not 0 <= start < n:
        raise IndexError(f"start city {start} out of range")
    visited = np.zeros(n, dtype=bool)
    tour = np.empty(n, dtype=np.intp)
    cur = start
    for k in range(n):
        tour[k] = cur
        visited[cur] = True
        if k == n - 1:
            break
        row = np.where(visited, -1.0, P.p[cur])
        cur = int(np.argmax(row))
    return tour


def tour_probability(P: TransitionMatrix, tour) -> float:
    """Probability that :func:`sample_episodes` started at ``tour[0]`` emits ``tour``."""
    perm = check_tour(P.n, tour)
    unvisited = np.ones(P.n, dtype=bool)
    unvisited[perm[0]] = False
    prob = 1.0
    for a, b in zip(perm[:-1], perm[1:]):
        row = P.p[a] * unvisited
        total = row.sum()
        if total > 0:
            prob *= row[b] / total
        else:
            prob /= unvisited.sum()
        unvisited[b] = False
    return float(prob)


def apply_update(P: TransitionMatrix, v, pairs, epsilon: float) -> TransitionMatrix:
    """Move ``P[i, j]`` toward ``v[i]`` by a step of ``epsilon`` for each pair, then renormalize.

    Touched rows are rescaled to sum to one, allowed entries are floored at
    ``PROB_FLOOR`` and the row is rescaled once more. Returns a new matrix.
    """
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    v = np.asarray(v, dtype=np.float64)
    n = P.n
    if v.shape != (n,):
        raise ParameterError(f"update vector must have length {n}, got shape {v.shape}")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ParameterError("update vector entries must be finite and nonnegative")
    out = P.copy()
    p = out.p
    touched = []
    for i, j in pairs:
        i, j = int(i), int(j)
        if not out.allowed[i, j]:
            raise ConstraintViolationError(f"update touches forbidden entry ({i}, {j})")
        p[i, j] += epsilon * (v[i] - p[i, j])
        touched.append(i)
    rows = np.unique(np.asarray(touched, dtype=np.intp))
    if rows.size:
        sub = p[rows]
        mask = out.allowed[rows]
        sub /= sub.sum(axis=1, keepdims=True)
        sub = np.where(mask, np.maximum(sub, PROB_FLOOR), 0.0)
        sub /= sub.sum(axis=1, keepdims=True)
        p[rows] = sub
    return out

