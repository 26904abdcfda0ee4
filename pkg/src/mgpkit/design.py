"""Space-filling designs and one-at-a-time screening trajectories.

All designs live in the unit hypercube [0, 1]^l and are mapped to physical
units through :func:`scale_design` with a list of :class:`InputSpec`.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class InputSpec:
    """A named physical input with its admissible range (lower < upper)."""

    name: str
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(
                f"input '{self.name}': lower ({self.lower}) must be < upper ({self.upper})"
            )


@dataclass(frozen=True)
class DesignMatrix:
    """n points in [0,1]^l, one row per point."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError("design points must be a 2-d array")
        if np.any(pts < 0.0) or np.any(pts > 1.0):
            raise ValueError("design points must lie in the unit hypercube")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def l(self) -> int:
        return self.points.shape[1]

    def min_distance(self) -> float:
        """Minimum pairwise Euclidean distance between design points."""
        d = self.points[:, None, :] - self.points[None, :, :]
        dist = np.sqrt((d ** 2).sum(axis=-1))
        iu = np.triu_indices(self.n, k=1)
        return float(dist[iu].min())


@dataclass(frozen=True)
class MorrisTrajectory:
    """(l+1) points where consecutive points differ in one coordinate by ±delta."""

    points: np.ndarray
    varied_index: tuple
    delta: float

    @property
    def l(self) -> int:
        return self.points.shape[1]

    def signed_steps(self) -> np.ndarray:
        """Signed step taken at each of the l moves (±delta)."""
        diffs = np.diff(self.points, axis=0)
        return diffs[np.arange(self.l), list(self.varied_index)]


def lhs(n: int, l: int, seed: int, midpoint: bool = False) -> DesignMatrix:
    """Latin hypercube sample: one point per axis stratum, per column.

    Within-stratum placement is uniform random unless ``midpoint`` is set,
    in which case each point sits at its stratum center.
    """
    if n < 2:
        raise ValueError(f"need at least 2 design points, got {n}")
    if l < 1:
        raise ValueError(f"need at least 1 input dimension, got {l}")
    rng = np.random.default_rng(seed)
    pts = np.empty((n, l))
    for j in range(l):
        perm = rng.permutation(n)
        u = np.full(n, 0.5) if midpoint else rng.uniform(size=n)
        pts[:, j] = (perm + u) / n
    return DesignMatrix(pts)


def maximin_lhs(
    n: int,
    l: int,
    seed: int,
    restarts: int = 20,
    exchange_iters: int = 0,
    midpoint: bool = False,
) -> DesignMatrix:
    """Best-of-`restarts` LHS under the maximin inter-point distance criterion.

    The first candidate reuses the stream of ``lhs(n, l, seed)``, so
    ``restarts=1`` (with no exchange) returns exactly that design.  Optional
    exchange improvement swaps two values within a random column, which
    preserves the LHS property by construction.
    """
    if restarts < 1:
        raise ValueError(f"restarts must be >= 1, got {restarts}")
    best = None
    best_dist = -np.inf
    for i in range(restarts):
        cand_seed = seed if i == 0 else np.random.SeedSequence((seed, i)).generate_state(1)[0]
        cand = lhs(n, l, int(cand_seed), midpoint=midpoint)
        if exchange_iters > 0:
            cand = _exchange_improve(cand, exchange_iters, np.random.default_rng((seed, i, 0xE)))
        d = cand.min_distance()
        if d > best_dist:
            best, best_dist = cand, d
    return best


def _exchange_improve(d: DesignMatrix, iters: int, rng: np.random.Generator) -> DesignMatrix:
    pts = d.points.copy()
    n, l = pts.shape
    best = d.min_distance()
    for _ in range(iters):
        col = rng.integers(l)
        r1, r2 = rng.choice(n, size=2, replace=False)
        pts[r1, col], pts[r2, col] = pts[r2, col], pts[r1, col]
        dist = DesignMatrix(pts).min_distance()
        if dist > best:
            best = dist
        else:
            pts[r1, col], pts[r2, col] = pts[r2, col], pts[r1, col]
    return DesignMatrix(pts)


def scale_design(d: DesignMatrix, specs: list[InputSpec]) -> np.ndarray:
    """Map a unit-cube design to physical units, column by column."""
    if len(specs) != d.l:
        raise ValueError(f"design has {d.l} columns but {len(specs)} input specs given")
    lo = np.array([s.lower for s in specs])
    hi = np.array([s.upper for s in specs])
    return lo + d.points * (hi - lo)


def unscale_points(x_phys: np.ndarray, specs: list[InputSpec]) -> np.ndarray:
    """Inverse of :func:`scale_design` on a raw physical-unit array."""
    x_phys = np.atleast_2d(np.asarray(x_phys, dtype=float))
    if x_phys.shape[1] != len(specs):
        raise ValueError(f"points have {x_phys.shape[1]} columns but {len(specs)} input specs given")
    lo = np.array([s.lower for s in specs])
    hi = np.array([s.upper for s in specs])
    return (x_phys - lo) / (hi - lo)


# Morris base points come from a p-level grid; levels without a feasible
# ±delta step are excluded so every trajectory stays inside [0,1]^l.
MORRIS_GRID_LEVELS = 4


def morris_trajectories(
    r: int, l: int, delta: float = 0.3, seed: int = 0
) -> list[MorrisTrajectory]:
    """Generate r one-at-a-time trajectories of l+1 points each.

    Each trajectory varies every coordinate exactly once, in random order,
    by ±delta (sign flipped where needed to stay in range).
    """
    if r < 1:
        raise ValueError(f"need at least 1 trajectory, got {r}")
    if l < 1:
        raise ValueError(f"need at least 1 input dimension, got {l}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    rng = np.random.default_rng(seed)
    levels = np.linspace(0.0, 1.0, MORRIS_GRID_LEVELS)
    feasible = [lv for lv in levels if lv + delta <= 1.0 + 1e-12 or lv - delta >= -1e-12]
    trajectories = []
    for _ in range(r):
        base = rng.choice(feasible, size=l)
        order = rng.permutation(l)
        pts = np.empty((l + 1, l))
        pts[0] = base
        x = base.copy()
        for k, v in enumerate(order):
            up_ok = x[v] + delta <= 1.0 + 1e-12
            down_ok = x[v] - delta >= -1e-12
            if up_ok and down_ok:
                sign = 1.0 if rng.random() < 0.5 else -1.0
            else:
                sign = 1.0 if up_ok else -1.0
            x[v] = min(1.0, max(0.0, x[v] + sign * delta))
            pts[k + 1] = x
        trajectories.append(MorrisTrajectory(pts, tuple(int(v) for v in order), delta))
    return trajectories


def write_design_csv(path, d: DesignMatrix, specs: list[InputSpec], unit: bool = False) -> None:
    """Write a design as CSV; physical units by default, `u_`-prefixed unit cube otherwise."""
    if unit:
        header = [f"u_{s.name}" for s in specs]
        data = d.points
    else:
        header = [s.name for s in specs]
        data = scale_design(d, specs)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in data:
            w.writerow([f"{v:.12g}" for v in row])


def read_design_csv(path, specs: list[InputSpec]) -> DesignMatrix:
    """Read a design CSV (unit or physical, detected from the header prefix)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty design file")
    header = rows[0]
    is_unit = all(h.startswith("u_") for h in header)
    data = []
    for i, row in enumerate(rows[1:], start=2):
        try:
            data.append([float(v) for v in row])
        except ValueError as exc:
            raise ValueError(f"{path}: bad value at row {i}: {exc}") from exc
    arr = np.array(data)
    if arr.shape[1] != len(specs):
        raise ValueError(
            f"{path}: design has {arr.shape[1]} columns but {len(specs)} input specs given"
        )
    if not is_unit:
        arr = unscale_points(arr, specs)
    return DesignMatrix(np.clip(arr, 0.0, 1.0))
