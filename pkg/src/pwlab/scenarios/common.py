"""Shared scenario machinery: interleaved field/ensemble co-evolution,
outcome records, manifests and the tolerance table.

Trajectory and field stepping are interleaved: the field is advanced first,
the velocity fields at t and t + dt bracket the RK4 stages, and positions are
advanced with the time-blended probe. All randomness flows from one master
seed through counter-keyed substreams, so ensembles are stable under size
changes and runs replay bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
import time as _time
from dataclasses import dataclass, field

import numpy as np

from ..fields import ComplexField, PotentialSpec
from ..guidance import (ModifiedGuidance, VelocityField, advance_positions,
                        make_probe, velocity_from_branches, velocity_from_psi)
from ..propagator import (BranchSuperposition, PropagatorConfig, StepCache,
                          evolve_branches, step)

# Stream labels for master-seed fan-out (counter-based; adding streams later
# must append, never renumber).
STREAM_INITIAL = 1
STREAM_PRIOR = 2
STREAM_MAPS = 3
STREAM_AUDIT = 4

TOLERANCES = {
    "norm_drift": 1e-9,
    "field_normalization": 1e-12,
    "branch_weight_sum": 1e-10,
    "branch_overlap": 1e-6,
    "equivariance_ks": 0.05,
    "divergence_residual": 1e-8,
    "circle_occupancy": 0.005,
    "torus_occupancy": 0.01,
    "flux_marginal_tv": 0.05,
    "relaxation_entropy": 0.05,
}


@dataclass
class EnsembleHistory:
    """Output-time snapshots of a co-evolved ensemble."""

    times: list[float] = field(default_factory=list)
    positions: list[np.ndarray] = field(default_factory=list)
    fields: list = field(default_factory=list)
    freeze_events: np.ndarray | None = None

    def stacked_positions(self) -> np.ndarray:
        """(n_traj, n_times, dims)"""
        return np.stack(self.positions, axis=1)

    def total_freezes(self) -> int:
        return int(self.freeze_events.sum()) if self.freeze_events is not None else 0


def co_evolve(psi: ComplexField, v_pot: PotentialSpec, cfg: PropagatorConfig,
              positions: np.ndarray, n_steps: int, output_every: int,
              mod: ModifiedGuidance | None = None, keep_fields: bool = False,
              on_step=None) -> tuple[ComplexField, EnsembleHistory]:
    """Interleave split-step field evolution with guided ensemble advance."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    hist = EnsembleHistory(freeze_events=np.zeros(positions.shape[0], dtype=np.int64))
    cache = StepCache(psi.grid, v_pot, cfg)
    v_now = velocity_from_psi(psi)
    hist.times.append(0.0)
    hist.positions.append(positions.copy())
    if keep_fields:
        hist.fields.append(psi)
    for i in range(1, n_steps + 1):
        psi_next = cache.step(psi)
        v_next = velocity_from_psi(psi_next)
        probe = make_probe(v_now, v_next=v_next, mod=mod)
        positions, ev = advance_positions(positions, probe, cfg.dt, psi.grid)
        hist.freeze_events += ev
        psi, v_now = psi_next, v_next
        if on_step is not None:
            on_step(i, i * cfg.dt, psi, positions)
        if i % output_every == 0 or i == n_steps:
            hist.times.append(i * cfg.dt)
            hist.positions.append(positions.copy())
            if keep_fields:
                hist.fields.append(psi)
    return psi, hist


def co_evolve_branches(b: BranchSuperposition, h_q: PotentialSpec,
                       v_q: PotentialSpec | None, cfg: PropagatorConfig,
                       positions: np.ndarray, n_steps: int, output_every: int
                       ) -> tuple[BranchSuperposition, EnsembleHistory]:
    """Same interleaving for a branch superposition guiding one coordinate."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    hist = EnsembleHistory(freeze_events=np.zeros(positions.shape[0], dtype=np.int64))
    v_now = velocity_from_branches(b)
    hist.times.append(b.time)
    hist.positions.append(positions.copy())
    for i in range(1, n_steps + 1):
        b_next = evolve_branches(b, h_q, v_q, cfg)
        v_next = velocity_from_branches(b_next)
        probe = make_probe(v_now, v_next=v_next)
        positions, ev = advance_positions(positions, probe, cfg.dt, b.grid)
        hist.freeze_events += ev
        b, v_now = b_next, v_next
        if i % output_every == 0 or i == n_steps:
            hist.times.append(b.time)
            hist.positions.append(positions.copy())
    return b, hist


@dataclass
class OutcomeRecord:
    """Per-trajectory outcome labels plus the run frequency table."""

    labels: tuple[str, ...]
    outcomes: np.ndarray                 # outcome index per trajectory
    target_weights: np.ndarray           # |c_n|^2
    valid: bool
    invalid_reason: str = ""
    freeze_events: int = 0
    extras: dict = field(default_factory=dict)

    def frequencies(self) -> dict[str, float]:
        n = self.outcomes.size
        return {lab: float(np.sum(self.outcomes == i)) / n
                for i, lab in enumerate(self.labels)}


def assign_outcomes(b: BranchSuperposition, positions: np.ndarray) -> np.ndarray:
    """Outcome = branch whose weighted packet dominates at the final position.

    Unambiguous once the packets are disjoint; ties (measure zero) fall to the
    lowest index.
    """
    from ..guidance import _interp_components
    grid = b.grid
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    scores = np.empty((pts.shape[0], b.branch_count))
    ones = np.ones(grid.shape, dtype=bool)
    for n, (c, f) in enumerate(zip(b.coefficients, b.fields)):
        dens = abs(c) ** 2 * f.density()
        vals, _ = _interp_components(dens[None], ones, grid, pts)
        scores[:, n] = vals[:, 0]
    return np.argmax(scores, axis=1)


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def config_hash(payload: dict) -> str:
    canon = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def write_manifest(path, *, scenario: str, seed: int, payload: dict,
                   files: list[str], status: str, started: float) -> dict:
    from .. import __version__
    manifest = {
        "tool_version": __version__,
        "scenario": scenario,
        "config_hash": config_hash(payload),
        "master_seed": seed,
        "started_utc": _time.strftime("%Y-%m-%dT%H:%M:%SZ", _time.gmtime(started)),
        "finished_utc": _time.strftime("%Y-%m-%dT%H:%M:%SZ", _time.gmtime()),
        "tolerances": TOLERANCES,
        "files": sorted(files),
        "status": status,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
