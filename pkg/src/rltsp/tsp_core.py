"""Euclidean TSP instances, tour evaluation, file formats and reference solvers.

The reference solvers (:func:`held_karp`, :func:`brute_force`,
:func:`nearest_neighbor`, :func:`two_opt`) are independent of the learning
code and serve both as seeds for the transition matrix and as oracles.
"""

from __future__ import annotations

import hashlib
import io
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    InvalidSizeError,
    InvalidTourError,
    ParseError,
    SizeLimitError,
)

DISTANCE_CACHE_LIMIT = 4096
HELD_KARP_LIMIT = 20
BRUTE_FORCE_LIMIT = 10


@dataclass(frozen=True, eq=False)
class TspInstance:
    """``n`` cities in the plane. Coordinates are stored as a read-only array."""

    cities: np.ndarray
    _dist: list = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        cities = np.array(self.cities, dtype=np.float64)
        if cities.ndim != 2 or cities.shape[1] != 2:
            raise InvalidSizeError(f"cities must have shape (n, 2), got {cities.shape}")
        if cities.shape[0] < 3:
            raise InvalidSizeError(f"need at least 3 cities, got {cities.shape[0]}")
        if not np.all(np.isfinite(cities)):
            raise ValueError("city coordinates must be finite")
        uniq = np.unique(cities, axis=0)
        if uniq.shape[0] != cities.shape[0]:
            raise ValueError("duplicate city coordinates")
        cities.setflags(write=False)
        object.__setattr__(self, "cities", cities)

    @property
    def n(self) -> int:
        return self.cities.shape[0]

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, TspInstance):
            return NotImplemented
        return np.array_equal(self.cities, other.cities)

    def __hash__(self):
        return hash(self.cities.tobytes())

    @property
    def distances(self) -> np.ndarray:
        """Full n x n Euclidean distance matrix, built once and cached."""
        if not self._dist:
            if self.n > DISTANCE_CACHE_LIMIT:
                raise InvalidSizeError(
                    f"distance cache limited to n <= {DISTANCE_CACHE_LIMIT}"
                )
            diff = self.cities[:, None, :] - self.cities[None, :, :]
            d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            d.setflags(write=False)
            self._dist.append(d)
        return self._dist[0]

    def fingerprint(self) -> str:
        """sha256 over the canonical decimal serialization of the coordinates."""
        return hashlib.sha256(serialize_instance(self).encode("ascii")).hexdigest()


def check_tour(n, tour) -> np.ndarray:
    """Return ``tour`` as an int array, raising if it is not a permutation of range(n)."""
    if isinstance(n, TspInstance):
        n = n.n
    perm = np.asarray(tour)
    if perm.ndim != 1 or perm.shape[0] != n:
        raise InvalidTourError(f"tour must have length {n}, got shape {perm.shape}")
    if perm.dtype.kind not in "iu":
        if perm.dtype.kind != "f" or not np.all(perm == np.round(perm)):
            raise InvalidTourError("tour entries must be integers")
        perm = perm.astype(np.int64)
    if not np.array_equal(np.sort(perm), np.arange(n)):
        raise InvalidTourError("tour is not a permutation of the city indices")
    return perm.astype(np.intp, copy=False)


def tour_edges(tour) -> list[tuple[int, int]]:
    """(city, successor) pairs of a closed tour, including the closing edge."""
    t = [int(c) for c in tour]
    return list(zip(t, t[1:] + t[:1]))


def canonical_tours(tours) -> np.ndarray:
    """Rotate each row to start at city 0 and orient it so the second city is the smaller neighbor.

    Rows describing the same cyclic tour become identical, which makes
    lengths summed in canonical order bitwise equal for equal tours.
    """
    tours = np.atleast_2d(np.asarray(tours, dtype=np.intp))
    m, n = tours.shape
    shift = np.argmax(tours == 0, axis=1)
    idx = (np.arange(n)[None, :] + shift[:, None]) % n
    out = np.take_along_axis(tours, idx, axis=1)
    flip = out[:, 1] > out[:, -1]
    out[flip, 1:] = out[flip, 1:][:, ::-1]
    return out


def tour_lengths(instance: TspInstance, tours) -> np.ndarray:
    """Lengths of a (B, n) batch of tours; rows are assumed valid.

    Edges are summed in canonical order, so every rotation or reversal of a
    tour gets exactly the same value.
    """
    t = canonical_tours(tours)
    pts = instance.cities[t]
    seg = pts - np.roll(pts, -1, axis=1)
    return np.sqrt(np.einsum("bij,bij->bi", seg, seg)).sum(axis=1)


def tour_length(instance: TspInstance, tour) -> float:
    perm = check_tour(instance.n, tour)
    return float(tour_lengths(instance, perm[None, :])[0])


def random_instance(n: int, seed: int) -> TspInstance:
    """``n`` points drawn i.i.d. uniform on the unit square."""
    if n < 3:
        raise InvalidSizeError(f"need at least 3 cities, got {n}")
    rng = np.random.default_rng(seed)
    return TspInstance(rng.random((n, 2)))


# -- file formats -----------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def serialize_instance(instance: TspInstance) -> str:
    lines = [str(instance.n)]
    for i, (x, y) in enumerate(instance.cities):
        lines.append(f"{i} {_fmt(x)} {_fmt(y)}")
    return "\n".join(lines) + "\n"


def parse_instance(text) -> TspInstance:
    """Parse the plain instance format.

    First non-blank line holds ``n``; each following line is ``id x y`` with
    ids ``0..n-1`` in file order. Blank lines and ``#`` comments are skipped.
    """
    if hasattr(text, "read"):
        text = text.read()
    header = None
    ids: dict[int, int] = {}
    coords = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if header is None:
            if len(parts) != 1:
                raise ParseError("expected the city count on its own", lineno)
            try:
                header = int(parts[0])
            except ValueError:
                raise ParseError(f"bad city count {parts[0]!r}", lineno) from None
            if header < 3:
                raise ParseError(f"need at least 3 cities, header says {header}", lineno)
            continue
        if len(parts) != 3:
            raise ParseError(f"expected 'id x y', got {line!r}", lineno)
        try:
            cid = int(parts[0])
            x, y = float(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError(f"malformed city line {line!r}", lineno) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError("coordinates must be finite", lineno)
        if cid in ids:
            raise ParseError(f"duplicate city id {cid} (first on line {ids[cid]})", lineno)
        if cid != len(coords):
            raise ParseError(f"expected city id {len(coords)}, got {cid}", lineno)
        ids[cid] = lineno
        coords.append((x, y))
    if header is None:
        raise ParseError("empty instance file", 1)
    if len(coords) != header:
        raise ParseError(f"header declares {header} cities, found {len(coords)}", lineno)
    try:
        return TspInstance(np.array(coords))
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


def parse_tsplib(text) -> TspInstance:
    """Read the EUC_2D ``NODE_COORD_SECTION`` subset of TSPLIB."""
    if hasattr(text, "read"):
        text = text.read()
    meta = {}
    coords = []
    in_coords = False
    lineno = 0
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        if in_coords:
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"expected 'id x y' in NODE_COORD_SECTION, got {line!r}", lineno)
            try:
                cid, x, y = int(parts[0]), float(parts[1]), float(parts[2])
            except ValueError:
                raise ParseError(f"malformed coordinate line {line!r}", lineno) from None
            if cid != len(coords) + 1:
                raise ParseError(f"expected node id {len(coords) + 1}, got {cid}", lineno)
            coords.append((x, y))
            continue
        if line.startswith("NODE_COORD_SECTION"):
            etype = meta.get("EDGE_WEIGHT_TYPE")
            if etype != "EUC_2D":
                raise ParseError(
                    f"unsupported EDGE_WEIGHT_TYPE {etype!r}; only EUC_2D is accepted", lineno
                )
            in_coords = True
            continue
        if ":" not in line:
            raise ParseError(f"unsupported TSPLIB section {line!r}", lineno)
        key, value = (s.strip() for s in line.split(":", 1))
        meta[key.upper()] = value
        if key.upper() == "TYPE" and value.upper() != "TSP":
            raise ParseError(f"unsupported problem TYPE {value!r}", lineno)
        if key.upper() == "EDGE_WEIGHT_TYPE" and value.upper() != "EUC_2D":
            raise ParseError(
                f"unsupported EDGE_WEIGHT_TYPE {value!r}; only EUC_2D is accepted", lineno
            )
    if not in_coords:
        raise ParseError("missing NODE_COORD_SECTION", lineno)
    if "DIMENSION" in meta and int(meta["DIMENSION"]) != len(coords):
        raise ParseError(
            f"DIMENSION is {meta['DIMENSION']} but {len(coords)} nodes were read", lineno
        )
    if len(coords) < 3:
        raise ParseError(f"need at least 3 cities, found {len(coords)}", lineno)
    try:
        return TspInstance(np.array(coords))
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None


def load_instance(path) -> TspInstance:
    """Load a file, picking the TSPLIB reader when the file looks like TSPLIB."""
    with open(path) as fh:
        text = fh.read()
    if "NODE_COORD_SECTION" in text or str(path).lower().endswith(".tsp"):
        return parse_tsplib(text)
    return parse_instance(text)


# -- heuristics and exact oracles ------------------------------------------


def nearest_neighbor(instance: TspInstance, start: int = 0) -> np.ndarray:
    """Greedy nearest-unvisited-city tour. Ties go to the lowest city index."""
    n = instance.n
    if not 0 <= start < n:
        raise IndexError(f"start city {start} out of range for n={n}")
    d = instance.distances
    visited = np.zeros(n, dtype=bool)
    tour = np.empty(n, dtype=np.intp)
    cur = start
    for k in range(n):
        tour[k] = cur
        visited[cur] = True
        if k == n - 1:
            break
        row = np.where(visited, np.inf, d[cur])
        cur = int(np.argmin(row))
    return tour


def two_opt(instance: TspInstance, tour, tol: float = 1e-12) -> np.ndarray:
    """Improve ``tour`` by segment reversals until it is 2-opt optimal."""
    t = check_tour(instance.n, tour).copy()
    n = t.shape[0]
    d = instance.distances
    improved = True
    while improved:
        improved = False
        for i in range(n - 2):
            a, b = t[i], t[i + 1]
            # j == n-1 with i == 0 shares the closing edge with (a, b)
            j = np.arange(i + 2, n if i > 0 else n - 1)
            if j.size == 0:
                continue
            c = t[j]
            e = t[(j + 1) % n]
            delta = d[a, c] + d[b, e] - d[a, b] - d[c, e]
            k = int(np.argmin(delta))
            if delta[k] < -tol:
                jj = j[k]
                t[i + 1 : jj + 1] = t[i + 1 : jj + 1][::-1]
                improved = True
    return t


def brute_force(instance: TspInstance) -> tuple[np.ndarray, float]:
    """Enumerate the (n-1)!/2 distinct cyclic tours; n <= 10."""
    n = instance.n
    if n > BRUTE_FORCE_LIMIT:
        raise SizeLimitError(f"brute_force supports n <= {BRUTE_FORCE_LIMIT}, got {n}")
    rest = np.array(list(itertools.permutations(range(1, n))), dtype=np.intp)
    # drop mirror images: keep the orientation with second city < last city
    rest = rest[rest[:, 0] < rest[:, -1]]
    tours = np.hstack([np.zeros((rest.shape[0], 1), dtype=np.intp), rest])
    lengths = tour_lengths(instance, tours)
    k = int(np.argmin(lengths))
    best = tours[k]
    return best, tour_length(instance, best)


def held_karp(instance: TspInstance) -> tuple[np.ndarray, float]:
    """Exact Held-Karp dynamic program over subsets, anchored at city 0; n <= 20."""
    n = instance.n
    if n > HELD_KARP_LIMIT:
        raise SizeLimitError(f"held_karp supports n <= {HELD_KARP_LIMIT}, got {n}")
    d = instance.distances
    m = n - 1
    sub = d[1:, 1:]
    full = (1 << m) - 1
    cost = np.full((1 << m, m), np.inf)
    parent = np.full((1 << m, m), -1, dtype=np.int8)
    singles = 1 << np.arange(m)
    cost[singles, np.arange(m)] = d[0, 1:]

    masks = np.arange(1 << m, dtype=np.int64)
    popcount = np.bitwise_count(masks)
    for size in range(2, m + 1):
        layer = masks[popcount == size]
        for j in range(m):
            mj = layer[(layer >> j) & 1 == 1]
            prev = mj ^ (1 << j)
            cand = cost[prev] + sub[:, j]
            k = np.argmin(cand, axis=1)
            cost[mj, j] = cand[np.arange(mj.shape[0]), k]
            parent[mj, j] = k

    closing = cost[full] + d[1:, 0]
    last = int(np.argmin(closing))
    path = []
    mask = full
    while last >= 0:
        path.append(last + 1)
        prev_last = int(parent[mask, last])
        mask ^= 1 << last
        last = prev_last
    tour = np.array([0] + path[::-1], dtype=np.intp)
    return tour, tour_length(instance, tour)


def optimal_tour(instance: TspInstance) -> tuple[np.ndarray, float]:
    return held_karp(instance)


def reference_length(instance: TspInstance, kind: str = "auto") -> tuple[float, str]:
    """Length used as the gap denominator, and the name of its source.

    ``exact`` runs Held-Karp (n <= 20); ``two-opt`` polishes the nearest
    neighbor tour from city 0; ``auto`` picks exact whenever it is allowed.
    """
    if kind == "auto":
        kind = "exact" if instance.n <= HELD_KARP_LIMIT else "two-opt"
    if kind == "exact":
        return held_karp(instance)[1], "exact"
    if kind == "two-opt":
        t = two_opt(instance, nearest_neighbor(instance, 0))
        return tour_length(instance, t), "two-opt"
    raise ValueError(f"unknown reference kind {kind!r}")
