"""Torus eigenflow runs: occupancy convergence, ergodicity verdicts and the
rigid-translation contrast.

The eigenflow is exactly solvable, so the closed-form path is always run; on
a circle the RK4 integrator is run alongside and the two occupancy ratios are
cross-checked. For the contrast artifact, a non-equilibrium bump prior is
evolved under the flow and compared against the rigidly translated initial
density: the ensemble distribution never relaxes, it only slides around the
torus, which is exactly why time averages rather than ensemble relaxation
carry the equilibrium argument here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..ensemble import coarse_grain, sample_initial, total_variation
from ..ergodic import (IndependenceVerdict, OccupancyAccumulator, SurdLength,
                       accumulate_occupancy, check_rational_independence,
                       torus_flow_exact)
from ..fields import GridSpec, Region
from ..guidance import advance_positions, make_probe, velocity_from_psi
from ..propagator import stationary_eigenfield
from .common import STREAM_INITIAL
from ..ensemble import substream


@dataclass
class TorusConfig:
    lengths_sq: tuple            # SurdLength values or plain floats
    quantum_numbers: tuple[int, ...]
    x0: tuple[float, ...]
    n_periods: float             # total time in units of the slowest nonzero period
    samples_per_period: int = 64
    boxes: tuple = ()            # Region fractions: ((lo1, hi1), (lo2, hi2)), in units of l
    n_checkpoints: int = 20
    points_per_dim: int = 256
    run_integrator: bool | None = None    # default: only in 1-D
    contrast_samples: int = 10000
    contrast_cells: int = 16
    bump_center_frac: float = 0.5
    bump_width_frac: float = 0.12
    seed: int = 0

    def lengths(self) -> tuple[float, ...]:
        return tuple(l.length() if isinstance(l, SurdLength) else float(np.sqrt(l))
                     for l in self.lengths_sq)

    def validate(self) -> None:
        dims = len(self.lengths_sq)
        if not 1 <= dims <= 3:
            raise ValueError("torus runs support 1 to 3 dimensions")
        if len(self.quantum_numbers) != dims or len(self.x0) != dims:
            raise ValueError("quantum_numbers and x0 must match the dimension count")
        if self.n_periods <= 0 or self.samples_per_period < 8:
            raise ValueError("need n_periods > 0 and samples_per_period >= 8")
        if not 0 < self.bump_width_frac < 0.5:
            raise ValueError("bump_width_frac must be in (0, 0.5)")
        for iv in self.boxes:
            if len(iv) != dims:
                raise ValueError("each box needs one interval per dimension")


@dataclass
class BoxReport:
    region: Region
    target: float
    ratio: float
    series: list            # (T, ratio, target, abs_error)


@dataclass
class TorusResult:
    verdict: IndependenceVerdict
    boxes: list
    integrator_ratio: float | None
    oracle_ratio: float | None
    integrator_agreement: float | None
    contrast_tv: float | None
    freeze_events: int
    status: str = "ok"

    def summary(self) -> dict:
        out = {
            "verdict": self.verdict.verdict,
            "verdict_detail": self.verdict.detail,
            "status": self.status,
            "boxes": [{"target": b.target, "ratio": b.ratio,
                       "abs_error": abs(b.ratio - b.target)} for b in self.boxes],
            "node_freeze_events": self.freeze_events,
        }
        if self.integrator_ratio is not None:
            out["integrator_ratio"] = self.integrator_ratio
            out["oracle_ratio"] = self.oracle_ratio
            out["integrator_agreement"] = self.integrator_agreement
        if self.contrast_tv is not None:
            out["contrast_tv"] = self.contrast_tv
        return out


def _bump_density(grid: GridSpec, center_frac: float, width_frac: float) -> np.ndarray:
    """Smooth cos^2 bump, one per axis, strictly positive support width."""
    dens = np.ones(grid.shape)
    meshes = grid.meshes()
    for i in range(grid.dims):
        l = grid.lengths[i]
        c = center_frac * l
        w = width_frac * l
        d = meshes[i] - c
        d = d - l * np.round(d / l)
        dens = dens * np.where(np.abs(d) < w, np.cos(0.5 * np.pi * d / w) ** 2, 0.0)
    return dens


def _bump_at(points: np.ndarray, grid: GridSpec, center_frac, width_frac) -> np.ndarray:
    out = np.ones(points.shape[0])
    for i in range(grid.dims):
        l = grid.lengths[i]
        c = center_frac * l
        w = width_frac * l
        d = points[:, i] - c
        d = d - l * np.round(d / l)
        out = out * np.where(np.abs(d) < w, np.cos(0.5 * np.pi * d / w) ** 2, 0.0)
    return out


def run_torus(cfg: TorusConfig) -> TorusResult:
    cfg.validate()
    lengths = cfg.lengths()
    dims = len(lengths)
    ns = cfg.quantum_numbers
    verdict = check_rational_independence(list(cfg.lengths_sq), ns)

    velocities = np.array([2.0 * np.pi * n / l for n, l in zip(ns, lengths)])
    nonzero = np.abs(velocities) > 0
    if np.any(nonzero):
        period = float(np.max([l / abs(v) for l, v in zip(lengths, velocities) if v != 0]))
    else:
        period = 1.0
    dt = period / cfg.samples_per_period
    n_steps = int(round(cfg.n_periods * cfg.samples_per_period))
    times = np.arange(n_steps + 1) * dt
    exact_positions = torus_flow_exact(cfg.x0, ns, lengths, times)

    # box occupancy via the closed form, with a convergence series
    boxes = []
    checkpoint_idx = np.unique(np.linspace(1, n_steps, cfg.n_checkpoints).astype(int))
    for iv in cfg.boxes:
        region = Region.from_intervals(
            [(lo * l, hi * l) for (lo, hi), l in zip(iv, lengths)], lengths)
        acc = OccupancyAccumulator(omega=region)
        series = []
        last = 0
        for idx in checkpoint_idx:
            acc.update_series(times[last:idx + 1], exact_positions[last:idx + 1])
            series.append((times[idx], acc.ratio, region.fraction(),
                           abs(acc.ratio - region.fraction())))
            last = idx
        boxes.append(BoxReport(region=region, target=region.fraction(),
                               ratio=acc.ratio, series=series))

    # RK4 cross-check (1-D by default: the guided trajectory on the grid field)
    run_integrator = cfg.run_integrator if cfg.run_integrator is not None else dims == 1
    integ_ratio = oracle_ratio = agreement = None
    freezes = 0
    if run_integrator and cfg.boxes:
        grid = GridSpec.create((cfg.points_per_dim,) * dims, lengths)
        psi, _ = stationary_eigenfield(grid, ns)
        vfield = velocity_from_psi(psi)
        probe = make_probe(vfield)
        pos = np.array([cfg.x0], dtype=float)
        rk4_positions = np.empty((n_steps + 1, dims))
        rk4_positions[0] = pos[0]
        for i in range(n_steps):
            pos, ev = advance_positions(pos, probe, dt, grid)
            freezes += int(ev.sum())
            rk4_positions[i + 1] = pos[0]
        region = boxes[0].region
        integ_ratio = accumulate_occupancy(times, rk4_positions, region).ratio
        oracle_ratio = accumulate_occupancy(times, exact_positions, region).ratio
        agreement = abs(integ_ratio - oracle_ratio)

    # rigid-translation contrast: p0 bump evolved vs p0 translated
    contrast_tv = None
    if cfg.contrast_samples > 0:
        grid = GridSpec.create((cfg.points_per_dim,) * dims, lengths)
        bump = _bump_density(grid, cfg.bump_center_frac, cfg.bump_width_frac)
        rng_seed = int(substream(cfg.seed, 0, STREAM_INITIAL).integers(2 ** 31))
        samples = sample_initial(bump, cfg.contrast_samples, rng_seed, grid)
        t_end = times[-1]
        moved = np.mod(samples + velocities[None, :] * t_end, np.asarray(lengths))
        hist, _ = coarse_grain(moved, (cfg.points_per_dim // cfg.contrast_cells,) * dims, grid)
        # analytic translated density, integrated over the same cells
        shifted_nodes = _bump_at(
            np.mod(np.stack([m.reshape(-1) for m in grid.meshes()], axis=1)
                   - velocities[None, :] * t_end, np.asarray(lengths)),
            grid, cfg.bump_center_frac, cfg.bump_width_frac).reshape(grid.shape)
        from ..ensemble import coarse_grain_density
        ref = coarse_grain_density(shifted_nodes, hist.partition)
        contrast_tv = total_variation(hist.masses, ref.masses)

    return TorusResult(verdict=verdict, boxes=boxes, integrator_ratio=integ_ratio,
                       oracle_ratio=oracle_ratio, integrator_agreement=agreement,
                       contrast_tv=contrast_tv, freeze_events=freezes,
                       status="ok")


def commensurate_witness_scan(lengths, quantum_numbers, x0, n_periods: float,
                              samples_per_period: int = 64) -> tuple[float, Region]:
    """Scan a family of candidate boxes for a non-ergodicity witness: the box
    whose occupancy deviates most from its area fraction."""
    lengths = tuple(float(l) for l in lengths)
    velocities = np.array([2.0 * np.pi * n / l for n, l in zip(quantum_numbers, lengths)])
    period = float(np.max([l / abs(v) for l, v in zip(lengths, velocities) if v != 0]))
    dt = period / samples_per_period
    n_steps = int(round(n_periods * samples_per_period))
    times = np.arange(n_steps + 1) * dt
    pos = torus_flow_exact(x0, quantum_numbers, lengths, times)
    worst_err, worst_box = -1.0, None
    shapes = [(0.5, 0.125), (0.4, 0.1), (0.25, 0.25), (0.125, 0.5)]
    for u, w in shapes:
        for a1 in np.linspace(0.0, 1.0, 9)[:-1]:
            for a2 in np.linspace(0.0, 1.0, 9)[:-1]:
                box = Region.from_intervals(
                    [(a1 * lengths[0], (a1 + u) * lengths[0]),
                     (a2 * lengths[1], (a2 + w) * lengths[1])], lengths)
                err = abs(accumulate_occupancy(times, pos, box).ratio - box.fraction())
                if err > worst_err:
                    worst_err, worst_box = err, box
    return worst_err, worst_box
