"""Finite metric measure spaces: lattice tori and Sierpinski gasket graphs."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

DEFAULT_MAX_POINTS = 4096


class SpaceError(ValueError):
    pass


class ResourceCapError(RuntimeError):
    """A requested object is larger than the configured cap."""


@dataclass(eq=False)
class FiniteMetricMeasureSpace:
    dist: np.ndarray
    mu: np.ndarray
    builder: dict = field(default_factory=dict)
    coords: Optional[np.ndarray] = None
    edges: Optional[np.ndarray] = None

    def __post_init__(self):
        self.dist = np.asarray(self.dist, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        n = len(self.mu)
        if self.dist.shape != (n, n):
            raise SpaceError("metric must be an N x N matrix")
        if np.any(self.mu <= 0):
            raise SpaceError("measure weights must be positive")
        if np.any(np.diag(self.dist) != 0) or np.any(self.dist < 0):
            raise SpaceError("metric needs zero diagonal and nonnegative entries")
        if not np.allclose(self.dist, self.dist.T, rtol=0, atol=1e-12):
            raise SpaceError("metric is not symmetric")
        self.dist.setflags(write=False)
        self.mu.setflags(write=False)
        self._sorted = None

    @property
    def n(self) -> int:
        return len(self.mu)

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    @property
    def total_mass(self) -> float:
        return float(self.mu.sum())

    @property
    def guard_radius(self) -> float:
        """Largest radius a checker may probe."""
        return self.diameter / 4.0

    def ball(self, x: int, r: float) -> np.ndarray:
        """Indices of the closed ball B(x, r)."""
        return np.flatnonzero(self.dist[x] <= r + 1e-9)

    def volume(self, x: int, r) -> np.ndarray:
        """mu of the closed ball; vectorized in r."""
        if self._sorted is None:
            self._sorted = {}
        if x not in self._sorted:
            order = np.argsort(self.dist[x], kind="stable")
            self._sorted[x] = (self.dist[x][order], np.cumsum(self.mu[order]))
        ds, cm = self._sorted[x]
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0):
            raise SpaceError("radius must be nonnegative")
        k = np.searchsorted(ds, r_arr + 1e-9, side="right")
        out = cm[k - 1]
        return float(out) if out.ndim == 0 else out

    def volume_fn(self, x: int):
        return lambda r: self.volume(x, r)

    def check_guard(self, radius: float, what: str = "radius"):
        if radius > self.guard_radius + 1e-9:
            raise SpaceError(f"{what} {radius} exceeds diameter/4 = {self.guard_radius}")

    def triangle_violations(self, n_samples: int = 2000, rng=None) -> int:
        rng = np.random.default_rng(0) if rng is None else rng
        if self.n ** 3 <= n_samples:
            trip = np.array(list(itertools.product(range(self.n), repeat=3)))
        else:
            trip = rng.integers(0, self.n, size=(n_samples, 3))
        a, b, c = trip.T
        return int(np.sum(self.dist[a, c] > self.dist[a, b] + self.dist[b, c] + 1e-9))

    def to_dict(self) -> dict:
        return dict(self.builder)


def _check_cap(n: int, max_points: int):
    if n > max_points:
        raise ResourceCapError(f"{n} points exceeds cap {max_points}")


def build_lattice_torus(dim: int, side: int, spacing: float = 1.0,
                        max_points: int = DEFAULT_MAX_POINTS) -> FiniteMetricMeasureSpace:
    if dim not in (1, 2, 3):
        raise SpaceError("dim must be 1, 2 or 3")
    if side < 4 or spacing <= 0:
        raise SpaceError("need side >= 4 and spacing > 0")
    n = side ** dim
    _check_cap(n, max_points)
    coords = np.array(list(itertools.product(range(side), repeat=dim)), dtype=np.int64)
    sq = np.zeros((n, n))
    for k in range(dim):
        diff = np.abs(coords[:, None, k] - coords[None, :, k])
        diff = np.minimum(diff, side - diff)
        sq += diff.astype(float) ** 2
    dist = spacing * np.sqrt(sq)
    mu = np.full(n, float(spacing) ** dim)
    builder = {"builder": "lattice_torus", "dim": dim, "side": side, "spacing": spacing}
    # nearest-neighbor edges
    edges = []
    for k in range(dim):
        shifted = coords.copy()
        shifted[:, k] = (shifted[:, k] + 1) % side
        idx = np.ravel_multi_index(shifted.T, (side,) * dim)
        edges.append(np.stack([np.arange(n), idx], axis=1))
    edges = np.unique(np.sort(np.concatenate(edges), axis=1), axis=0)
    return FiniteMetricMeasureSpace(dist, mu, builder, coords.astype(float), edges)


def _gasket_edges(level: int):
    """Vertices (as exact integer coordinates) and edges of the level-n graph."""
    size = 2 ** level
    # triangular lattice coordinates (i, j) with i + j <= size; keep the gasket cells
    tris = [((0, 0), (size, 0), (0, size))]
    for _ in range(level):
        nxt = []
        for a, b, c in tris:
            ab = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
            ac = ((a[0] + c[0]) // 2, (a[1] + c[1]) // 2)
            bc = ((b[0] + c[0]) // 2, (b[1] + c[1]) // 2)
            nxt += [(a, ab, ac), (ab, b, bc), (ac, bc, c)]
        tris = nxt
    verts = sorted({v for tri in tris for v in tri})
    index = {v: i for i, v in enumerate(verts)}
    edges = set()
    for a, b, c in tris:
        for u, v in ((a, b), (b, c), (a, c)):
            i, j = index[u], index[v]
            edges.add((min(i, j), max(i, j)))
    return np.array(verts, dtype=float), np.array(sorted(edges), dtype=np.int64)


def build_sierpinski_graph(level: int, max_points: int = DEFAULT_MAX_POINTS) -> FiniteMetricMeasureSpace:
    if level < 0 or level > 8:
        raise SpaceError("level must be in 0..8")
    n = 3 * (3 ** level + 1) // 2
    _check_cap(n, max_points)
    verts, edges = _gasket_edges(level)
    adj = csr_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    dist = shortest_path(adj, method="D", directed=False, unweighted=True)
    # planar embedding of the triangular coordinates
    xy = np.stack([verts[:, 0] + 0.5 * verts[:, 1], verts[:, 1] * np.sqrt(3) / 2], axis=1)
    builder = {"builder": "sierpinski_graph", "level": level}
    return FiniteMetricMeasureSpace(dist, np.ones(n), builder, xy, edges)


def build_space(doc: dict, max_points: int = DEFAULT_MAX_POINTS) -> FiniteMetricMeasureSpace:
    doc = dict(doc)
    name = doc.pop("builder", None)
    if name == "lattice_torus":
        allowed = {"dim", "side", "spacing"}
        fn = build_lattice_torus
    elif name == "sierpinski_graph":
        allowed = {"level"}
        fn = build_sierpinski_graph
    else:
        raise SpaceError(f"unknown space builder {name!r}")
    extra = set(doc) - allowed
    if extra:
        raise SpaceError(f"unknown keys for {name}: {sorted(extra)}")
    return fn(max_points=max_points, **doc)


@dataclass
class VolumeFit:
    c_upper: float
    d_upper: float
    c_lower: float
    d_lower: float
    passed: bool
    ratios: np.ndarray


def check_vd_rvd(space: FiniteMetricMeasureSpace, radii, points=None) -> VolumeFit:
    """Fit V(x,R)/V(x,r) <= C (R/r)^d2 and >= c (R/r)^d1 over grid pairs.

    The exponents are the extreme local slopes of log V against log r between
    consecutive grid radii (over all points); the constants are then the
    tightest that make the sandwich hold for every pair.
    """
    radii = np.asarray(sorted(radii), dtype=float)
    if len(radii) < 2:
        raise SpaceError("need at least two radii")
    points = range(space.n) if points is None else points
    lr = np.log(radii)
    lv = np.array([np.log(space.volume(x, radii)) for x in points])
    slopes = np.diff(lv, axis=1) / np.diff(lr)
    d2 = float(slopes.max())
    d1 = float(slopes.min())
    i, j = np.triu_indices(len(radii), k=1)
    span = lr[j] - lr[i]
    gain = lv[:, j] - lv[:, i]
    c_up = float(np.exp(np.max(gain - d2 * span)))
    c_lo = float(np.exp(np.min(gain - d1 * span)))
    passed = bool(np.isfinite(d2) and np.isfinite(c_up) and d1 > 0)
    return VolumeFit(c_up, d2, c_lo, d1, passed, slopes)


def chain_midpoint_scan(space: FiniteMetricMeasureSpace, n_pairs: int = 200, eps: float = 1.0,
                        rng=None) -> float:
    """Fraction of sampled pairs having an eps-midpoint; a heuristic only."""
    rng = np.random.default_rng(0) if rng is None else rng
    a = rng.integers(0, space.n, n_pairs)
    b = rng.integers(0, space.n, n_pairs)
    ok = 0
    for x, y in zip(a, b):
        half = space.dist[x, y] / 2
        mids = np.abs(space.dist[x] - half) <= eps
        mids &= np.abs(space.dist[y] - half) <= eps
        ok += bool(mids.any())
    return ok / n_pairs
