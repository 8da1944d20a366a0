"""Guidance velocity fields and trajectory integration.

Velocities are always computed from the current form

    v_i = (hbar / m_i) Im(psi* d_i psi) / |psi|^2

never from an unwrapped phase, so branch cuts of arg(psi) cannot leak into the
flow. Nodes of psi are genuinely singular for the guidance law; grid nodes
with amplitude at or below the node floor are flagged, and a trajectory whose
RK4 sub-stage touches a flagged cell retries with a quartered step before
freezing in place for that step (each freeze is counted, never fatal).

The optional divergence-free extra velocity is the 2-D stream construction

    v' = eps * (-d chi / dx2, d chi / dx1) / |psi|^2

for which div(|psi|^2 v') = 0 holds identically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import product as _corners

import numpy as np

from .fields import (ComplexField, GridSpec, NODE_FLOOR_RATIO, grid_norm,
                     spectral_gradient)
from .propagator import BranchSuperposition

try:
    from numba import njit as _njit
except ImportError:                                        # pragma: no cover
    _njit = None


@dataclass(frozen=True)
class VelocityField:
    """One real velocity vector per node, plus a defined-mask."""

    grid: GridSpec
    components: np.ndarray          # (dims, *shape)
    defined: np.ndarray             # (*shape,) bool

    def interpolate(self, positions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Multilinear periodic interpolation at positions (n, dims).

        Returns (velocities (n, dims), flagged (n,)); a point is flagged when
        any surrounding node is undefined or the result is non-finite.
        """
        return _interp_components(self.components, self.defined, self.grid, positions)


@dataclass(frozen=True)
class TrajectoryState:
    """A configuration point on the periodic domain plus integrator bookkeeping."""

    position: np.ndarray
    time: float = 0.0
    node_proximity_events: int = 0


@dataclass(frozen=True)
class ModifiedGuidance:
    """Stream-generated extra velocity for 2-D domains (already scaled by eps)."""

    grid: GridSpec
    chi: np.ndarray
    eps: float
    components: np.ndarray
    defined: np.ndarray

    def as_velocity_field(self) -> VelocityField:
        return VelocityField(self.grid, self.components, self.defined)


# ---------------------------------------------------------------------------
# velocity fields from wavefunctions
# ---------------------------------------------------------------------------

def _velocity_from_current(grid, density, currents):
    floor_sq = (NODE_FLOOR_RATIO ** 2) * float(np.max(density))
    defined = density > floor_sq
    comps = np.zeros((grid.dims,) + grid.shape)
    for i in range(grid.dims):
        comps[i][defined] = currents[i][defined] / density[defined]
    return VelocityField(grid=grid, components=comps, defined=defined)


def _gradients(values, grid):
    """All spectral first derivatives from one forward transform."""
    fhat = np.fft.fftn(values)
    out = []
    for i in range(grid.dims):
        k = grid.wavenumbers(i).copy()
        k[grid.points_per_dim[i] // 2] = 0.0
        shape = [1] * grid.dims
        shape[i] = len(k)
        out.append(np.fft.ifftn(1j * k.reshape(shape) * fhat))
    return out


def velocity_from_psi(psi: ComplexField) -> VelocityField:
    """Guidance velocity of a single field."""
    grid = psi.grid
    density = psi.density()
    conj = np.conj(psi.values)
    currents = [grid.hbar / grid.masses[i] * np.imag(conj * dpsi)
                for i, dpsi in enumerate(_gradients(psi.values, grid))]
    return _velocity_from_current(grid, density, currents)


def velocity_from_branches(b: BranchSuperposition) -> VelocityField:
    """Guidance velocity of the simulated coordinate of a branch superposition.

    Built from the branch fields, weights and couplings only:

        v = sum_n |c_n|^2 J_n / sum_n |c_n|^2 |phi_n|^2

    (the cross terms cancel by orthonormality of the per-branch system
    factors, so no other degree of freedom can enter). For momentum-coupled
    branches the per-branch current carries the drift term lam_n |phi_n|^2
    demanded by the continuity equation of H_q + T + lam_n p_hat.
    """
    grid = b.grid
    w = b.weights()
    density = np.zeros(grid.shape)
    currents = [np.zeros(grid.shape) for _ in range(grid.dims)]
    for wn, lam, f in zip(w, b.couplings, b.fields):
        rho_n = f.density()
        density += wn * rho_n
        conj = np.conj(f.values)
        for i, dphi in enumerate(_gradients(f.values, grid)):
            currents[i] += wn * grid.hbar / grid.masses[i] * np.imag(conj * dphi)
            if b.coupling_kind == "momentum" and i == b.drift_axis:
                currents[i] += wn * lam * rho_n
    return _velocity_from_current(grid, density, currents)


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------

def _interp_numpy(components, defined, grid, pts):
    n = pts.shape[0]
    dims = grid.dims
    ncomp = components.shape[0]
    shape = grid.shape
    # strides for manual row-major flattening (dims <= 3)
    strides = [1] * dims
    for i in range(dims - 2, -1, -1):
        strides[i] = strides[i + 1] * shape[i + 1]
    lo = []
    hi = []
    frac = []
    for i in range(dims):
        u = pts[:, i] / grid.spacings[i]
        base = np.floor(u)
        j = base.astype(np.intp) % shape[i]
        lo.append(j * strides[i])
        jn = j + 1
        jn[jn == shape[i]] = 0
        hi.append(jn * strides[i])
        frac.append(u - base)
    flat_comps = components.reshape(ncomp, -1)
    flat_def = defined.reshape(-1)
    out = np.zeros((n, ncomp))
    flagged = np.zeros(n, dtype=bool)
    for offs in _corners(*([(0, 1)] * dims)):
        w = np.ones(n)
        flat = np.zeros(n, dtype=np.intp)
        for i, off in enumerate(offs):
            w = w * (frac[i] if off else 1.0 - frac[i])
            flat = flat + (hi[i] if off else lo[i])
        flagged |= ~flat_def[flat]
        out += w[:, None] * flat_comps[:, flat].T
    flagged |= ~np.all(np.isfinite(out), axis=1)
    return out, flagged


if _njit is not None:
    @_njit(cache=True)
    def _gather_kernel(comps, defined, shape, spacings, pts, out, flagged):
        n, dims = pts.shape
        ncomp = comps.shape[0]
        strides = np.empty(3, np.int64)
        strides[dims - 1] = 1
        for i in range(dims - 2, -1, -1):
            strides[i] = strides[i + 1] * shape[i + 1]
        lo = np.empty(3, np.int64)
        hi = np.empty(3, np.int64)
        fr = np.empty(3, np.float64)
        ncorner = 1 << dims
        for p in range(n):
            for i in range(dims):
                u = pts[p, i] / spacings[i]
                b = np.floor(u)
                j = int(b) % shape[i]
                lo[i] = j * strides[i]
                jn = j + 1
                if jn == shape[i]:
                    jn = 0
                hi[i] = jn * strides[i]
                fr[i] = u - b
            bad = False
            for c in range(ncomp):
                out[p, c] = 0.0
            for corner in range(ncorner):
                w = 1.0
                flat = 0
                for i in range(dims):
                    if corner & (1 << i):
                        w *= fr[i]
                        flat += hi[i]
                    else:
                        w *= 1.0 - fr[i]
                        flat += lo[i]
                if not defined[flat]:
                    bad = True
                for c in range(ncomp):
                    out[p, c] += w * comps[c, flat]
            for c in range(ncomp):
                if not np.isfinite(out[p, c]):
                    bad = True
            flagged[p] = bad


def _interp_components(components, defined, grid, positions):
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    if _njit is None:
        return _interp_numpy(components, defined, grid, pts)
    n = pts.shape[0]
    ncomp = components.shape[0]
    out = np.empty((n, ncomp))
    flagged = np.empty(n, dtype=bool)
    _gather_kernel(np.ascontiguousarray(components.reshape(ncomp, -1)),
                   np.ascontiguousarray(defined.reshape(-1)),
                   np.asarray(grid.shape, dtype=np.int64),
                   np.asarray(grid.spacings), np.ascontiguousarray(pts),
                   out, flagged)
    return out, flagged


# ---------------------------------------------------------------------------
# trajectory integration
# ---------------------------------------------------------------------------

def make_probe(v: VelocityField, v_next: VelocityField | None = None,
               mod: ModifiedGuidance | None = None):
    """Velocity evaluator for the RK4 stepper.

    probe(positions, tau) with tau in [0, 1] across the step bracket; when
    v_next is given the two node fields are blended linearly in time (the
    fields live at t and t + dt, the RK4 midpoints in between).

    All contributing node fields are stacked into one component array so each
    probe costs a single gather pass; a point is flagged when any surrounding
    node of any contribution is undefined.
    """
    grid = v.grid
    d = grid.dims
    stack = [v.components]
    defined = v.defined
    if v_next is not None:
        stack.append(v_next.components)
        defined = defined & v_next.defined
    if mod is not None:
        stack.append(mod.components)
        defined = defined & mod.defined
    comps = np.concatenate(stack, axis=0)

    def probe(positions, tau):
        vals, flag = _interp_components(comps, defined, grid, positions)
        if v_next is not None:
            vel = (1.0 - tau) * vals[:, :d] + tau * vals[:, d:2 * d]
            rest = 2 * d
        else:
            vel = vals[:, :d]
            rest = d
        if mod is not None:
            vel = vel + vals[:, rest:rest + d]
        return vel, flag
    return probe


def advance_positions(positions: np.ndarray, probe, dt: float, grid: GridSpec,
                      max_retries: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized RK4 step of an (n, dims) position batch.

    Any row whose sub-stage is flagged retries as four quarter steps,
    recursively up to max_retries levels; rows still flagged at the bottom are
    frozen for that (sub)step and counted in the returned event array.
    """
    pts = np.atleast_2d(np.asarray(positions, dtype=float))
    n = pts.shape[0]
    events = np.zeros(n, dtype=np.int64)
    budget = np.full(n, max_retries)
    frozen = np.zeros(n, dtype=bool)

    def rk4(pos, f0, span):
        h = dt * span
        k1, b1 = probe(pos, f0)
        p2 = grid.wrap(pos + 0.5 * h * k1)
        k2, b2 = probe(p2, f0 + 0.5 * span)
        p3 = grid.wrap(pos + 0.5 * h * k2)
        k3, b3 = probe(p3, f0 + 0.5 * span)
        p4 = grid.wrap(pos + h * k3)
        k4, b4 = probe(p4, f0 + span)
        out = grid.wrap(pos + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        later = b2 | b3 | b4 | ~np.all(np.isfinite(out), axis=1)
        return out, b1, later

    def advance(pos, index, f0, span):
        out, at_start, later = rk4(pos, f0, span)
        # a flag at the starting position cannot be cured by a smaller step,
        # and an exhausted retry budget freezes the row for the rest of dt
        freeze_now = at_start | (later & (budget[index] <= 0))
        if np.any(freeze_now):
            out[freeze_now] = pos[freeze_now]
            events[index[freeze_now]] += 1
            frozen[index[freeze_now]] = True
        retry = later & ~freeze_now
        if np.any(retry):
            ridx = index[retry]
            budget[ridx] -= 1
            sub = pos[retry]
            for j in range(4):
                live = ~frozen[ridx]
                if not np.any(live):
                    break
                sub[live] = advance(sub[live], ridx[live], f0 + j * span / 4.0, span / 4.0)
            out[retry] = sub
        return out

    new = advance(pts, np.arange(n), 0.0, 1.0)
    return new, events


def advance_trajectory(state: TrajectoryState, v: VelocityField, dt: float,
                       v_next: VelocityField | None = None,
                       mod: ModifiedGuidance | None = None) -> TrajectoryState:
    """One RK4 step of a single trajectory (see advance_positions for the
    node-freeze policy). v_next, when given, is the velocity field at t + dt."""
    probe = make_probe(v, v_next=v_next, mod=mod)
    new, events = advance_positions(state.position[None, :], probe, dt, v.grid)
    return replace(state, position=new[0], time=state.time + dt,
                   node_proximity_events=state.node_proximity_events + int(events[0]))


# ---------------------------------------------------------------------------
# divergence-free guidance modification
# ---------------------------------------------------------------------------

def build_divergence_free(psi: ComplexField, chi: np.ndarray, eps: float) -> ModifiedGuidance:
    """Extra velocity v' = eps * (-d2 chi, d1 chi) / |psi|^2 on a 2-D domain.

    div(|psi|^2 v') vanishes identically (mixed spectral derivatives commute);
    the residual is still measured and enforced below 1e-8 as a guard against
    inconsistent inputs.
    """
    grid = psi.grid
    if grid.dims != 2:
        raise ValueError("stream-generated modification requires a 2-D domain")
    chi = np.asarray(chi, dtype=float)
    if chi.shape != grid.shape:
        raise ValueError(f"chi shape {chi.shape} != grid {grid.shape}")
    if eps < 0:
        raise ValueError("eps must be >= 0")
    density = psi.density()
    floor_sq = (NODE_FLOOR_RATIO ** 2) * float(np.max(density))
    defined = density > floor_sq
    d1 = spectral_gradient(chi, grid, 0).real
    d2 = spectral_gradient(chi, grid, 1).real
    support = (np.abs(d1) + np.abs(d2)) > 1e-13 * max(1.0, float(np.max(np.abs(chi))))
    if np.any(support & ~defined):
        raise ValueError("chi support overlaps amplitude-flagged nodes")
    comps = np.zeros((2,) + grid.shape)
    comps[0][defined] = -eps * d2[defined] / density[defined]
    comps[1][defined] = eps * d1[defined] / density[defined]
    flux0 = density * comps[0]
    flux1 = density * comps[1]
    residual = spectral_gradient(flux0, grid, 0).real + spectral_gradient(flux1, grid, 1).real
    res_norm = grid_norm(residual, grid)
    if res_norm >= 1e-8 * max(1.0, grid_norm(flux0, grid) + grid_norm(flux1, grid)):
        raise ValueError(f"divergence residual {res_norm:.3g} exceeds tolerance")
    return ModifiedGuidance(grid=grid, chi=chi, eps=eps, components=comps, defined=defined)


def divergence_residual(mod: ModifiedGuidance, psi: ComplexField) -> float:
    """Grid norm of div(|psi|^2 v') for an existing modification."""
    grid = mod.grid
    density = psi.density()
    residual = (spectral_gradient(density * mod.components[0], grid, 0).real
                + spectral_gradient(density * mod.components[1], grid, 1).real)
    return grid_norm(residual, grid)
