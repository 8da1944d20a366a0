"""Ideal-measurement run: pointer branches drifting apart under an impulsive
coupling linear in the pointer momentum.

The total state is sum_n c_n (eigenlabel n)(pointer packet phi_n); every
branch starts from the same packet and drifts at speed g * Lambda_n, so the
final packets are disjoint and the pointer coordinate ends up inside exactly
one of them. Frequencies over an equilibrium-sampled pointer ensemble are
compared to the weights |c_n|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..ensemble import sample_initial, substream
from ..fields import GridSpec, PotentialSpec, gaussian_packet
from ..propagator import BranchSuperposition, PropagatorConfig, branch_overlap
from .common import (OutcomeRecord, STREAM_INITIAL, assign_outcomes,
                     co_evolve_branches)


@dataclass
class MeasurementConfig:
    coefficients: tuple[complex, ...]
    eigenvalues: tuple[float, ...]       # Lambda_n, one per outcome
    coupling: float = 3.0                # g: branch drift speed is g * Lambda_n
    box_length: float = 48.0
    points: int = 512
    pointer_mass: float = 50.0
    packet_center: float = 12.0
    packet_sigma: float = 0.5
    duration: float = 2.0
    dt: float = 2e-3
    n_traj: int = 10000
    output_every: int = 200
    overlap_tolerance: float = 1e-6
    seed: int = 0

    def validate(self) -> None:
        k = len(self.coefficients)
        if k < 1 or k > 8:
            raise ValueError("between 1 and 8 outcomes supported")
        if len(self.eigenvalues) != k:
            raise ValueError("need one eigenvalue per outcome")
        if len(set(self.eigenvalues)) != k:
            raise ValueError("eigenvalues must be distinct (branches must separate)")
        total = sum(abs(c) ** 2 for c in self.coefficients)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"sum |c_n|^2 = {total} must be 1 within 1e-10")
        if self.n_traj < 1 or self.duration <= 0 or self.dt <= 0:
            raise ValueError("n_traj >= 1 and positive duration/dt required")
        if self.packet_sigma <= 0 or self.coupling <= 0:
            raise ValueError("packet_sigma and coupling must be positive")


def run_measurement(cfg: MeasurementConfig) -> OutcomeRecord:
    cfg.validate()
    grid = GridSpec.create(cfg.points, cfg.box_length, masses=cfg.pointer_mass)
    packet = gaussian_packet(grid, cfg.packet_center, cfg.packet_sigma)
    labels = tuple(f"outcome{n}" for n in range(len(cfg.coefficients)))
    b = BranchSuperposition(
        coefficients=tuple(complex(c) for c in cfg.coefficients),
        labels=labels,
        fields=(packet,) * len(labels),
        couplings=tuple(cfg.coupling * lam for lam in cfg.eigenvalues),
        coupling_kind="momentum",
    )
    seed = int(substream(cfg.seed, 0, STREAM_INITIAL).integers(2 ** 31))
    positions = sample_initial(packet, cfg.n_traj, seed, grid)

    n_steps = int(round(cfg.duration / cfg.dt))
    pcfg = PropagatorConfig(dt=cfg.dt)
    b_final, hist = co_evolve_branches(b, PotentialSpec.zero(), None, pcfg,
                                       positions, n_steps, cfg.output_every)

    overlap = branch_overlap(b_final)
    valid = overlap < cfg.overlap_tolerance
    outcomes = assign_outcomes(b_final, hist.positions[-1])
    weights = b_final.weights()
    return OutcomeRecord(
        labels=labels, outcomes=outcomes, target_weights=weights,
        valid=valid,
        invalid_reason="" if valid else
        f"branch packets still overlapping at end time (overlap={overlap:.3g})",
        freeze_events=hist.total_freezes(),
        extras={"final_overlap": overlap,
                "final_positions": hist.positions[-1][:, 0],
                "times": hist.times})
