"""Collocation point generation over axis-aligned boxes.

All samplers are deterministic under their seed; randomness comes from
a PCG64 generator seeded with SeedSequence(seed), the package-wide
pseudo-random source.  Interior equispaced grids offset by half a cell
so they never emit boundary points; boundary points are sampled per
facet, with counts allocated proportionally to facet measure.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

SPATIAL = "spatial"
TIME = "time"
PARAM = "param"


@dataclass(frozen=True)
class Axis:
    name: str
    low: float
    high: float
    kind: str = SPATIAL

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"axis {self.name}: low must be < high")


@dataclass(frozen=True)
class Box:
    axes: tuple

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def dim(self):
        return len(self.axes)

    @property
    def lows(self):
        return np.array([a.low for a in self.axes])

    @property
    def highs(self):
        return np.array([a.high for a in self.axes])

    @property
    def names(self):
        return tuple(a.name for a in self.axes)

    def contains(self, x, tol=1e-12):
        x = np.asarray(x)
        return bool(np.all(x >= self.lows - tol) and np.all(x <= self.highs + tol))

    def facet(self, axis: int, side: int):
        return (axis, side)

    def all_facets(self):
        return tuple((i, s) for i in range(self.dim) for s in (0, 1))

    def facet_measure(self, facet):
        axis, _ = facet
        m = 1.0
        for i, a in enumerate(self.axes):
            if i != axis:
                m *= a.high - a.low
        return m


def box2d(x0=(0.0, 1.0), x1=(0.0, 1.0), names=("x0", "x1")):
    return Box((Axis(names[0], *x0), Axis(names[1], *x1)))


@dataclass
class PointSet:
    points: np.ndarray     # (n, dim)
    box: Box
    tag: str
    seed: int | None = None

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != self.box.dim:
            raise ValueError("points must be (n, box.dim)")

    def __len__(self):
        return self.points.shape[0]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.box.names)
            for row in self.points:
                wr.writerow([repr(float(v)) for v in row])


def _rng(seed):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def cartesian_grid(box: Box, n_per_axis) -> PointSet:
    """Tensor-product equispaced grid including the box endpoints."""
    n_per_axis = [int(n) for n in np.atleast_1d(n_per_axis)]
    if len(n_per_axis) == 1:
        n_per_axis = n_per_axis * box.dim
    if len(n_per_axis) != box.dim:
        raise ValueError("one count per axis required")
    if any(n < 2 for n in n_per_axis):
        raise ValueError("cartesian_grid needs at least 2 points per axis")
    axes = [np.linspace(a.low, a.high, n)
            for a, n in zip(box.axes, n_per_axis)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return PointSet(pts, box, "grid")


def interior_grid(box: Box, n_per_axis) -> PointSet:
    """Equispaced interior grid, offset half a cell from the boundary."""
    n_per_axis = [int(n) for n in np.atleast_1d(n_per_axis)]
    if len(n_per_axis) == 1:
        n_per_axis = n_per_axis * box.dim
    if len(n_per_axis) != box.dim:
        raise ValueError("one count per axis required")
    if any(n < 1 for n in n_per_axis):
        raise ValueError("interior_grid needs at least 1 point per axis")
    axes = []
    for a, n in zip(box.axes, n_per_axis):
        h = (a.high - a.low) / n
        axes.append(a.low + h * (np.arange(n) + 0.5))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return PointSet(pts, box, "interior_grid")


def latin_hypercube(box: Box, n: int, seed: int) -> PointSet:
    """One point per axis stratum on every axis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed)
    cols = []
    for a in box.axes:
        perm = rng.permutation(n)
        u = rng.uniform(0.0, 1.0, size=n)
        cols.append(a.low + (perm + u) / n * (a.high - a.low))
    return PointSet(np.stack(cols, axis=1), box, "lhs", seed)


def _allocate(n, weights):
    """Largest-remainder allocation of n slots by weight; deterministic."""
    weights = np.asarray(weights, dtype=float)
    share = n * weights / weights.sum()
    base = np.floor(share).astype(int)
    rem = n - base.sum()
    order = np.argsort(-(share - base), kind="stable")
    for i in range(rem):
        base[order[i]] += 1
    return base


def boundary_sample(box: Box, n: int, mode: str, seed: int | None = None,
                    facets=None) -> PointSet:
    """Points on the selected boundary facets.

    ``facets`` is a sequence of (axis, side) pairs; default all facets.
    Counts are split proportionally to facet measure.  ``equispaced``
    places endpoint-inclusive uniform points along each facet;
    ``uniform_random`` draws them from the facet's uniform law.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode not in ("equispaced", "uniform_random"):
        raise ValueError("mode must be 'equispaced' or 'uniform_random'")
    facets = list(facets) if facets is not None else list(box.all_facets())
    if not facets:
        raise ValueError("facet mask must select at least one facet")
    counts = _allocate(n, [box.facet_measure(f) for f in facets])
    rng = _rng(seed if seed is not None else 0)
    blocks = []
    for (axis, side), k in zip(facets, counts):
        if k == 0:
            continue
        pts = np.empty((k, box.dim))
        pts[:, axis] = box.axes[axis].high if side else box.axes[axis].low
        free = [i for i in range(box.dim) if i != axis]
        for i in free:
            a = box.axes[i]
            if mode == "equispaced":
                if k == 1:
                    pts[:, i] = 0.5 * (a.low + a.high)
                else:
                    pts[:, i] = np.linspace(a.low, a.high, k)
            else:
                pts[:, i] = rng.uniform(a.low, a.high, size=k)
        blocks.append(pts)
    return PointSet(np.concatenate(blocks, axis=0), box,
                    f"boundary_{mode}", seed)


def tensor_product(spatial: PointSet, params: PointSet | None) -> np.ndarray:
    """All (x, mu) pairs, mu-major: for each mu, every spatial point.

    With no parameter set, returns the spatial points unchanged.
    """
    xs = spatial.points
    if params is None or len(params) == 0:
        return xs
    ms = params.points
    n_x, n_m = xs.shape[0], ms.shape[0]
    out = np.empty((n_m * n_x, xs.shape[1] + ms.shape[1]))
    for i in range(n_m):
        out[i * n_x:(i + 1) * n_x, :xs.shape[1]] = xs
        out[i * n_x:(i + 1) * n_x, xs.shape[1]:] = ms[i]
    return out
