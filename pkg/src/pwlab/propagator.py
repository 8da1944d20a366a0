"""Split-step spectral time evolution, stationary eigenfields and branch evolution.

One step is the Strang composition

    exp(-i V dt / 2 hbar) . exp(-i T dt / hbar) . exp(-i V dt / 2 hbar)

with the kinetic factor applied in Fourier space, so the evolution is exactly
unitary (apart from an optional absorbing mask) and exactly reversible under
dt -> -dt.

Branch superpositions model post-measurement wavefunctions: a fixed set of
complex weights c_n times per-branch pointer/packet fields phi_n that evolve
independently (the branching structure never re-couples). Each branch feels
the common potential plus its own coupling term, either

    potential coupling:  V_eff = H_q + s_n * V_q          (spin-gradient type)
    momentum coupling:   H_eff = H_q + T + lam_n * p_hat  (pointer drift type)

The momentum-linear term is diagonal in k-space and folds into the kinetic
factor, so both variants keep the split-step structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ComplexField, GridSpec, PotentialSpec, grid_norm


@dataclass(frozen=True)
class PropagatorConfig:
    """Fixed-step split-step configuration.

    dt may be negative (used by reversibility checks); the stability guard is
    applied to |dt|. absorbing_mask, when given, is a per-node multiplicative
    damp in [0, 1] applied after each step.
    """

    dt: float
    absorbing_mask: np.ndarray | None = None
    steps_per_output: int = 1
    stability_limit: float = 0.5
    scheme: str = "split-step-spectral"

    def __post_init__(self):
        if self.dt == 0 or not math.isfinite(self.dt):
            raise ValueError("dt must be a nonzero finite real")
        if self.steps_per_output < 1:
            raise ValueError("steps_per_output must be >= 1")
        if self.scheme != "split-step-spectral":
            raise ValueError(f"unsupported scheme {self.scheme!r}")
        if self.absorbing_mask is not None:
            m = np.asarray(self.absorbing_mask)
            if np.any(m < 0) or np.any(m > 1):
                raise ValueError("absorbing_mask values must lie in [0, 1]")


def check_stability(v_values: np.ndarray, cfg: PropagatorConfig, hbar: float) -> None:
    vmax = float(np.max(np.abs(v_values)))
    if vmax > 0 and abs(cfg.dt) * vmax / hbar >= cfg.stability_limit:
        dt_max = cfg.stability_limit * hbar / vmax
        raise ValueError(
            f"stability guard violated: |dt|*max|V|/hbar = {abs(cfg.dt) * vmax / hbar:.3g} "
            f">= {cfg.stability_limit}; require |dt| < {dt_max:.6g}")


def _kinetic_phase(grid: GridSpec, dt: float, drift: float = 0.0, drift_axis: int = 0) -> np.ndarray:
    """exp(-i (T + drift * hbar k_axis) dt / hbar) in k-space."""
    t_k = grid.kinetic_spectrum()
    if drift != 0.0:
        k = grid.wavenumbers(drift_axis)
        shape = [1] * grid.dims
        shape[drift_axis] = len(k)
        t_k = t_k + drift * grid.hbar * k.reshape(shape)
    return np.exp(-1j * t_k * dt / grid.hbar)


class StepCache:
    """Precomputed phase factors for repeated stepping with one (V, cfg)."""

    def __init__(self, grid: GridSpec, v: PotentialSpec, cfg: PropagatorConfig):
        self.grid = grid
        self.cfg = cfg
        vv = v.evaluate(grid)
        check_stability(vv, cfg, grid.hbar)
        self.half = np.exp(-1j * vv * cfg.dt / (2.0 * grid.hbar))
        self.kin = _kinetic_phase(grid, cfg.dt)
        self.mask = cfg.absorbing_mask

    def step(self, psi: ComplexField) -> ComplexField:
        out = self.half * psi.values
        out = np.fft.ifftn(self.kin * np.fft.fftn(out))
        out = self.half * out
        if self.mask is not None:
            out = out * self.mask
        return psi.with_values(out)


def step(psi: ComplexField, v: PotentialSpec, cfg: PropagatorConfig,
         _v_values: np.ndarray | None = None,
         _kin_phase: np.ndarray | None = None) -> ComplexField:
    """One Strang split step. The private cache arguments let long loops skip
    re-evaluating the potential and kinetic phases."""
    grid = psi.grid
    vv = v.evaluate(grid) if _v_values is None else _v_values
    check_stability(vv, cfg, grid.hbar)
    half = np.exp(-1j * vv * cfg.dt / (2.0 * grid.hbar))
    kin = _kinetic_phase(grid, cfg.dt) if _kin_phase is None else _kin_phase
    out = half * psi.values
    out = np.fft.ifftn(kin * np.fft.fftn(out))
    out = half * out
    if cfg.absorbing_mask is not None:
        out = out * cfg.absorbing_mask
    return psi.with_values(out)


def propagate(psi: ComplexField, v: PotentialSpec, cfg: PropagatorConfig, n_steps: int,
              observer=None) -> ComplexField:
    """Advance n_steps. `observer(step_index, t, field)` fires every
    steps_per_output steps (and at step 0)."""
    grid = psi.grid
    vv = v.evaluate(grid)
    check_stability(vv, cfg, grid.hbar)
    kin = _kinetic_phase(grid, cfg.dt)
    if observer is not None:
        observer(0, 0.0, psi)
    for i in range(1, n_steps + 1):
        psi = step(psi, v, cfg, _v_values=vv, _kin_phase=kin)
        if observer is not None and i % cfg.steps_per_output == 0:
            observer(i, i * cfg.dt, psi)
    return psi


def energy_expectation(psi: ComplexField, v: PotentialSpec) -> float:
    """<H> = kinetic (spectral) + potential (nodal) expectation."""
    grid = psi.grid
    fhat = np.fft.fftn(psi.values)
    n_tot = fhat.size
    kin = float(np.sum(grid.kinetic_spectrum() * np.abs(fhat) ** 2) * grid.cell_volume / n_tot)
    pot = float(np.sum(v.evaluate(grid) * psi.density()) * grid.cell_volume)
    return kin + pot


def scalar_csv_rows(history) -> str:
    """Render (t, norm, energy) triples as the per-step scalar CSV."""
    lines = ["t,norm,energy"]
    for t, norm, energy in history:
        lines.append(f"{t!r},{norm!r},{energy!r}")
    return "\n".join(lines) + "\n"


def probability_current(psi: ComplexField) -> list[np.ndarray]:
    """J_i = (hbar / m_i) Im(psi* d_i psi), one array per axis."""
    from .fields import spectral_gradient
    grid = psi.grid
    out = []
    for i in range(grid.dims):
        dpsi = spectral_gradient(psi.values, grid, i)
        out.append(grid.hbar / grid.masses[i] * np.imag(np.conj(psi.values) * dpsi))
    return out


def continuity_residual(psi_prev: ComplexField, psi_now: ComplexField,
                        psi_next: ComplexField, dt: float) -> float:
    """Grid norm of (rho(t+dt) - rho(t-dt)) / 2dt + div J(t).

    Zero for the exact flow; the discrete value is dominated by the O(dt^2)
    central-difference error.
    """
    from .fields import spectral_gradient
    grid = psi_now.grid
    drho = (psi_next.density() - psi_prev.density()) / (2.0 * dt)
    div_j = np.zeros(grid.shape)
    for i, j in enumerate(probability_current(psi_now)):
        div_j = div_j + spectral_gradient(j, grid, i).real
    return grid_norm(drho + div_j, grid)


def absorbing_mask(grid: GridSpec, widths, strength: float = 0.1) -> np.ndarray:
    """cos^2-profile multiplicative damp near the box edges.

    widths: per-axis absorbing layer width (0 disables the axis). The damp
    factor falls from 1 at the inner edge to (1 - strength) at the boundary.
    """
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (grid.dims,))
    mask = np.ones(grid.shape)
    meshes = grid.meshes()
    for i in range(grid.dims):
        w = widths[i]
        if w <= 0:
            continue
        l = grid.lengths[i]
        edge_dist = np.minimum(meshes[i], l - meshes[i])
        ramp = np.clip(1.0 - edge_dist / w, 0.0, 1.0)
        mask = mask * (1.0 - strength * np.cos(0.5 * np.pi * (1.0 - ramp)) ** 2)
    return mask


# ---------------------------------------------------------------------------
# stationary eigenfields
# ---------------------------------------------------------------------------

def stationary_eigenfield(grid: GridSpec, quantum_numbers) -> tuple[ComplexField, float]:
    """Momentum eigenstate prod_i exp(i 2 pi n_i x_i / l_i), normalized, with
    its energy sum_i (2 pi n_i / l_i)^2 hbar^2 / 2 m_i."""
    ns = tuple(int(n) for n in np.atleast_1d(quantum_numbers))
    if len(ns) != grid.dims:
        raise ValueError(f"need {grid.dims} quantum numbers, got {len(ns)}")
    for n, pts in zip(ns, grid.points_per_dim):
        if abs(n) >= pts // 2:
            raise ValueError(f"quantum number {n} aliases on {pts} points")
    meshes = grid.meshes()
    phase = np.zeros(grid.shape)
    energy = 0.0
    for i, n in enumerate(ns):
        kap = 2.0 * np.pi * n / grid.lengths[i]
        phase = phase + kap * meshes[i]
        energy += (kap * grid.hbar) ** 2 / (2.0 * grid.masses[i])
    amp = 1.0 / math.sqrt(grid.volume)
    return ComplexField(grid, amp * np.exp(1j * phase)), energy


def eigenstate_velocity(grid: GridSpec, quantum_numbers) -> np.ndarray:
    """Guidance velocity of a momentum eigenstate: v_i = 2 pi hbar n_i / (m_i l_i)."""
    ns = np.atleast_1d(np.asarray(quantum_numbers, dtype=float))
    return 2.0 * np.pi * grid.hbar * ns / (np.asarray(grid.masses) * np.asarray(grid.lengths))


# ---------------------------------------------------------------------------
# branch superpositions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BranchSuperposition:
    """Weights c_n, labels, per-branch packet fields and per-branch couplings.

    coupling_kind:
      "potential"  branch n evolves under H_q + couplings[n] * V_q
      "momentum"   branch n evolves under H_q + T + couplings[n] * p_hat
                   (V_q is unused; the drift is along drift_axis)

    system_energy is the eigen-energy of the shared stationary system factor;
    it contributes only the global phase exp(-i E t / hbar), tracked through
    `time` and never touching any statistic.
    """

    coefficients: tuple[complex, ...]
    labels: tuple[str, ...]
    fields: tuple[ComplexField, ...]
    couplings: tuple[float, ...]
    coupling_kind: str = "potential"
    drift_axis: int = 0
    system_energy: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        n = len(self.coefficients)
        if n < 1:
            raise ValueError("need at least one branch")
        if not (len(self.labels) == len(self.fields) == len(self.couplings) == n):
            raise ValueError("branch arrays must share one length")
        total = sum(abs(c) ** 2 for c in self.coefficients)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"sum |c_n|^2 = {total} != 1 within 1e-10")
        grid = self.fields[0].grid
        for f in self.fields[1:]:
            if f.grid != grid:
                raise ValueError("branch fields must share one grid")
        for f in self.fields:
            if abs(f.norm_sq() - 1.0) > 1e-8:
                raise ValueError("each branch field must be individually normalized")
        if self.coupling_kind not in ("potential", "momentum"):
            raise ValueError(f"unknown coupling_kind {self.coupling_kind!r}")

    @property
    def grid(self) -> GridSpec:
        return self.fields[0].grid

    @property
    def branch_count(self) -> int:
        return len(self.coefficients)

    def weights(self) -> np.ndarray:
        return np.array([abs(c) ** 2 for c in self.coefficients])

    def global_phase(self) -> complex:
        return np.exp(-1j * self.system_energy * self.time / self.grid.hbar)

    def marginal_density(self) -> np.ndarray:
        """|Psi|^2 marginal over the simulated coordinate: sum |c_n|^2 |phi_n|^2.

        Cross terms vanish because the system factors of distinct branches are
        orthonormal.
        """
        rho = np.zeros(self.grid.shape)
        for c, f in zip(self.coefficients, self.fields):
            rho += abs(c) ** 2 * f.density()
        return rho


def evolve_branches(b: BranchSuperposition, h_q: PotentialSpec, v_q: PotentialSpec | None,
                    cfg: PropagatorConfig) -> BranchSuperposition:
    """Step every branch field by cfg.dt under its own effective Hamiltonian.

    Coefficients are unchanged; branches never re-couple.
    """
    grid = b.grid
    h_vals = h_q.evaluate(grid)
    new_fields = []
    if b.coupling_kind == "potential":
        v_vals = v_q.evaluate(grid) if v_q is not None else np.zeros(grid.shape)
        kin = _kinetic_phase(grid, cfg.dt)
        for s, f in zip(b.couplings, b.fields):
            eff = PotentialSpec.tabulated(h_vals + s * v_vals)
            new_fields.append(step(f, eff, cfg, _v_values=h_vals + s * v_vals, _kin_phase=kin))
    else:
        check_stability(h_vals, cfg, grid.hbar)
        half = np.exp(-1j * h_vals * cfg.dt / (2.0 * grid.hbar))
        for lam, f in zip(b.couplings, b.fields):
            kin = _kinetic_phase(grid, cfg.dt, drift=lam, drift_axis=b.drift_axis)
            out = half * f.values
            out = np.fft.ifftn(kin * np.fft.fftn(out))
            out = half * out
            if cfg.absorbing_mask is not None:
                out = out * cfg.absorbing_mask
            new_fields.append(f.with_values(out))
    return BranchSuperposition(
        coefficients=b.coefficients, labels=b.labels, fields=tuple(new_fields),
        couplings=b.couplings, coupling_kind=b.coupling_kind, drift_axis=b.drift_axis,
        system_energy=b.system_energy, time=b.time + cfg.dt)


def branch_overlap(b: BranchSuperposition) -> float:
    """Largest pairwise overlap integral max_{n != m} int |phi_n| |phi_m| dx."""
    if b.branch_count < 2:
        return 0.0
    grid = b.grid
    mags = [np.abs(f.values) for f in b.fields]
    worst = 0.0
    for i in range(len(mags)):
        for j in range(i + 1, len(mags)):
            worst = max(worst, float(np.sum(mags[i] * mags[j]) * grid.cell_volume))
    return worst
