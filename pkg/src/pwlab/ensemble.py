"""Initial-condition sampling, coarse-grained densities, the relaxation
H-function S = -sum p_bar log(p_bar / q_bar) and distribution distances.

Sampling is rejection sampling under a flat envelope, with one independent
counter-keyed RNG substream per sample, so sample k is identical no matter
how many samples are requested in total.

Coarse graining is histogram based (exact integer mass bookkeeping) on cells
that are integer multiples of grid cells, so the matching Born-weight
histogram can be computed exactly by block summation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ComplexField, GridSpec

REJECTION_MIN_ACCEPTANCE = 1e-4


def substream(seed: int, index: int, label: int = 0) -> np.random.Generator:
    """Counter-keyed RNG stream: depends only on (seed, label, index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(label, index)))


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _density_table(density, grid: GridSpec) -> np.ndarray:
    if isinstance(density, ComplexField):
        return density.density()
    arr = np.asarray(density, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError(f"density shape {arr.shape} != grid {grid.shape}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError("density must be nonnegative and finite")
    if np.max(arr) <= 0:
        raise ValueError("density vanishes everywhere")
    return arr


def _interp_density(table: np.ndarray, grid: GridSpec, pts: np.ndarray) -> np.ndarray:
    from .guidance import _interp_components
    vals, _ = _interp_components(table[None], np.ones(grid.shape, dtype=bool), grid, pts)
    return vals[:, 0]


def sample_initial(density, n: int, seed: int, grid: GridSpec) -> np.ndarray:
    """Draw n points from a density on the periodic domain.

    density: "uniform", a ComplexField (sampled as |psi|^2) or a nonnegative
    node table (interpolated multilinearly). Returns (n, dims) positions.

    Aborts with a diagnostic if the flat-envelope acceptance rate falls below
    REJECTION_MIN_ACCEPTANCE.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    lengths = np.asarray(grid.lengths)
    out = np.empty((n, grid.dims))
    if n == 0:
        return out
    if isinstance(density, str):
        if density != "uniform":
            raise ValueError(f"unknown density spec {density!r}")
        for k in range(n):
            rng = substream(seed, k)
            out[k] = rng.uniform(0.0, 1.0, grid.dims) * lengths
        return out
    table = _density_table(density, grid)
    env = float(np.max(table)) * (1.0 + 1e-12)
    attempts = 0
    accepted = 0
    for k in range(n):
        rng = substream(seed, k)
        while True:
            # draw in small batches inside one substream
            cand = rng.uniform(0.0, 1.0, (16, grid.dims)) * lengths
            u = rng.uniform(0.0, env, 16)
            vals = _interp_density(table, grid, cand)
            attempts += 16
            hit = np.nonzero(u < vals)[0]
            if hit.size:
                out[k] = cand[hit[0]]
                accepted += 1
                break
            if attempts > 100_000 and accepted / attempts < REJECTION_MIN_ACCEPTANCE:
                raise RuntimeError(
                    f"rejection acceptance rate {accepted / attempts:.2e} below "
                    f"{REJECTION_MIN_ACCEPTANCE:.0e}; envelope height {env:.3g}, "
                    f"mean density {float(np.mean(table)):.3g}")
    return out


# ---------------------------------------------------------------------------
# coarse graining
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoarsePartition:
    """Axis-aligned partition whose cells are integer multiples of grid cells."""

    grid: GridSpec
    multiples: tuple[int, ...]

    def __post_init__(self):
        if len(self.multiples) != self.grid.dims:
            raise ValueError("need one multiple per dimension")
        for m, pts in zip(self.multiples, self.grid.points_per_dim):
            if m < 1:
                raise ValueError("cell must be at least one grid cell")
            if pts % m != 0:
                raise ValueError(f"multiple {m} does not divide {pts} grid points")

    @property
    def cells_per_dim(self) -> tuple[int, ...]:
        return tuple(p // m for p, m in zip(self.grid.points_per_dim, self.multiples))

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_dim))

    @property
    def cell_volume(self) -> float:
        return float(np.prod([m * h for m, h in zip(self.multiples, self.grid.spacings)]))

    def cell_sizes(self) -> tuple[float, ...]:
        return tuple(m * h for m, h in zip(self.multiples, self.grid.spacings))

    def cell_index(self, positions: np.ndarray) -> np.ndarray:
        """Flat cell index for positions (n, dims)."""
        pts = np.atleast_2d(np.asarray(positions, dtype=float))
        idx = []
        for i, (c, size, l) in enumerate(zip(self.cells_per_dim, self.cell_sizes(),
                                             self.grid.lengths)):
            j = np.floor(np.mod(pts[:, i], l) / size).astype(np.intp)
            idx.append(np.clip(j, 0, c - 1))
        return np.ravel_multi_index(idx, self.cells_per_dim)

    def cell_centers(self) -> np.ndarray:
        axes = [(np.arange(c) + 0.5) * s for c, s in zip(self.cells_per_dim, self.cell_sizes())]
        meshes = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in meshes], axis=1)


@dataclass(frozen=True)
class HistogramDensity:
    """Normalized cell masses on a coarse partition (counts kept for audits)."""

    partition: CoarsePartition
    masses: np.ndarray
    counts: np.ndarray | None = None

    def density_values(self) -> np.ndarray:
        return self.masses / self.partition.cell_volume

    def mass_at(self, positions: np.ndarray) -> np.ndarray:
        return self.masses[self.partition.cell_index(positions)]


def coarse_grain(samples: np.ndarray, multiples, grid: GridSpec,
                 psi: ComplexField | None = None, weights=None
                 ) -> tuple[HistogramDensity, HistogramDensity | None]:
    """Histogram samples on coarse cells; optionally coarse-grain |psi|^2 on
    the same cells for a paired comparison."""
    part = CoarsePartition(grid, tuple(int(m) for m in np.atleast_1d(multiples)))
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        counts = np.zeros(part.n_cells)
    else:
        counts = np.bincount(part.cell_index(samples),
                             weights=weights, minlength=part.n_cells).astype(float)
    total = counts.sum()
    if total <= 0:
        raise ValueError("cannot coarse-grain an empty sample set")
    hist = HistogramDensity(partition=part, masses=counts / total, counts=counts)
    paired = coarse_grain_density(psi.density(), part) if psi is not None else None
    return hist, paired


def coarse_grain_density(node_density: np.ndarray, part: CoarsePartition) -> HistogramDensity:
    """Exact block-sum coarse graining of a node density (mass per cell)."""
    grid = part.grid
    mass = np.asarray(node_density, dtype=float) * grid.cell_volume
    shape = []
    for c, m in zip(part.cells_per_dim, part.multiples):
        shape.extend([c, m])
    blocks = mass.reshape(shape)
    for axis in range(grid.dims - 1, -1, -1):
        blocks = blocks.sum(axis=2 * axis + 1)
    masses = blocks.reshape(-1)
    total = masses.sum()
    return HistogramDensity(partition=part, masses=masses / total, counts=None)


# ---------------------------------------------------------------------------
# H-function
# ---------------------------------------------------------------------------

def subquantum_entropy(p_bar: HistogramDensity, q_bar: HistogramDensity) -> float:
    """S = -sum_cells p log(p / q) over cell masses, with 0 log 0 = 0.

    Always <= 0, zero only when the histograms agree cell-wise. Cells with
    q = 0 but p > 0 yield -inf (a support violation, reported not clamped).
    """
    if p_bar.partition != q_bar.partition:
        raise ValueError("histograms live on different partitions")
    p = p_bar.masses
    q = q_bar.masses
    live = p > 0
    if np.any(live & (q <= 0)):
        return float("-inf")
    return float(-np.sum(p[live] * np.log(p[live] / q[live])))


# ---------------------------------------------------------------------------
# f = p / |psi|^2 tracking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FRatioTrack:
    """Per-trajectory time series of f = p / |psi|^2 at the output times."""

    values: np.ndarray              # (n_traj, n_times)
    valid: np.ndarray               # (n_traj, n_times) bool
    times: np.ndarray

    def max_relative_drift(self) -> float:
        """max over trajectories of |f(t) - f(0)| / f(0), invalid samples skipped."""
        ok_rows = self.valid[:, 0] & (self.values[:, 0] > 0)
        worst = 0.0
        for r in np.nonzero(ok_rows)[0]:
            f0 = self.values[r, 0]
            sel = self.valid[r]
            drift = np.max(np.abs(self.values[r, sel] - f0)) / f0
            worst = max(worst, float(drift))
        return worst


def track_f_ratio(positions_t: np.ndarray, times, density_at, psi_sq_at) -> FRatioTrack:
    """Evaluate f along trajectories.

    positions_t: (n_traj, n_times, dims) trajectory output positions.
    density_at(j, positions) and psi_sq_at(j, positions) return the ensemble
    density estimate and the Born density at output index j; samples where
    either side is nonpositive or non-finite are marked invalid.
    """
    positions_t = np.asarray(positions_t, dtype=float)
    n_traj, n_times = positions_t.shape[0], positions_t.shape[1]
    values = np.zeros((n_traj, n_times))
    valid = np.zeros((n_traj, n_times), dtype=bool)
    for j in range(n_times):
        pts = positions_t[:, j, :]
        p = np.asarray(density_at(j, pts), dtype=float)
        q = np.asarray(psi_sq_at(j, pts), dtype=float)
        ok = np.isfinite(p) & np.isfinite(q) & (q > 0) & (p >= 0)
        values[ok, j] = p[ok] / q[ok]
        valid[:, j] = ok
    return FRatioTrack(values=values, valid=valid, times=np.asarray(times, dtype=float))


# ---------------------------------------------------------------------------
# distribution distances
# ---------------------------------------------------------------------------

def total_variation(p_masses: np.ndarray, q_masses: np.ndarray) -> float:
    p = np.asarray(p_masses, dtype=float)
    q = np.asarray(q_masses, dtype=float)
    if p.shape != q.shape:
        raise ValueError("mass arrays must have one shape")
    return 0.5 * float(np.sum(np.abs(p - q)))


def cdf_from_density(node_density: np.ndarray, grid: GridSpec):
    """Piecewise-linear CDF on [0, l) for a 1-D periodic grid.

    Node j owns the cell [x_j - h/2, x_j + h/2) with constant density, so the
    first and last half cells of the period both belong to node 0.
    """
    if grid.dims != 1:
        raise ValueError("cdf_from_density is 1-D only")
    h = grid.spacings[0]
    n = grid.points_per_dim[0]
    mass = np.asarray(node_density, dtype=float) * h
    mass = mass / mass.sum()
    # cum[j] = mass below the segment starting at (j - 1/2) h, j = 1..n
    cum = np.concatenate([[0.0], [0.5 * mass[0]], 0.5 * mass[0] + np.cumsum(mass[1:])])

    def cdf(x):
        x = np.asarray(x, dtype=float)
        u = np.mod(x, grid.lengths[0])
        j = np.clip(np.floor((u + 0.5 * h) / h).astype(int), 0, n)
        left = np.where(j == 0, 0.0, (j - 0.5) * h)
        base = np.where(j == 0, 0.0, cum[j])
        dens = mass[j % n] / h
        return np.clip(base + dens * (u - left), 0.0, 1.0)

    return cdf


def ks_distance(samples: np.ndarray, target_cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic against a CDF callable."""
    x = np.sort(np.asarray(samples, dtype=float).reshape(-1))
    n = x.size
    if n == 0:
        raise ValueError("no samples")
    f = np.asarray(target_cdf(x), dtype=float)
    hi = np.max(np.arange(1, n + 1) / n - f)
    lo = np.max(f - np.arange(0, n) / n)
    return float(max(hi, lo))


def distribution_distance(a, b, grid: GridSpec | None = None) -> dict[str, float]:
    """Distances between two distributions.

    Histogram vs histogram gives {"tv"}; 1-D samples vs a node density (or
    ComplexField, or CDF callable) gives {"ks"}.
    """
    if isinstance(a, HistogramDensity) and isinstance(b, HistogramDensity):
        return {"tv": total_variation(a.masses, b.masses)}
    samples = np.asarray(a, dtype=float)
    if isinstance(b, ComplexField):
        return {"ks": ks_distance(samples, cdf_from_density(b.density(), b.grid))}
    if callable(b):
        return {"ks": ks_distance(samples, b)}
    if grid is None:
        raise ValueError("node-density comparison needs the grid")
    return {"ks": ks_distance(samples, cdf_from_density(np.asarray(b, dtype=float), grid))}
