"""Periodic grids, complex wavefunctions, polar splitting and Born-weight measures.

Everything in here is pure: fields are immutable after construction and all
operations return new arrays. Derivatives are spectral (FFT) on the periodic
grid throughout; no finite differences are mixed in.

Units are natural by default (hbar = 1, unit masses), but both are plain
fields on the grid description and can be set to anything positive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Relative amplitude below which phase, quantum potential and guidance
# velocity are treated as undefined (the guidance law divides by |psi|^2).
NODE_FLOOR_RATIO = 1e-8


# ---------------------------------------------------------------------------
# grid description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Rectangular periodic grid: dims axes, points_per_dim nodes, period lengths."""

    dims: int
    points_per_dim: tuple[int, ...]
    lengths: tuple[float, ...]
    masses: tuple[float, ...]
    hbar: float = 1.0

    def __post_init__(self):
        if not 1 <= self.dims <= 3:
            raise ValueError(f"dims must be 1..3, got {self.dims}")
        for name, seq in (("points_per_dim", self.points_per_dim),
                          ("lengths", self.lengths), ("masses", self.masses)):
            if len(seq) != self.dims:
                raise ValueError(f"{name} must have {self.dims} entries, got {len(seq)}")
        for n in self.points_per_dim:
            if n < 8 or n % 2 != 0:
                raise ValueError(f"points per dim must be even and >= 8, got {n}")
        if any(not (l > 0 and math.isfinite(l)) for l in self.lengths):
            raise ValueError("lengths must be positive and finite")
        if any(m <= 0 for m in self.masses):
            raise ValueError("masses must be positive")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")

    @classmethod
    def create(cls, points, lengths, masses=None, hbar=1.0) -> "GridSpec":
        points = tuple(int(n) for n in np.atleast_1d(points))
        lengths = tuple(float(l) for l in np.atleast_1d(lengths))
        if masses is None:
            masses = (1.0,) * len(points)
        masses = tuple(float(m) for m in np.atleast_1d(masses))
        return cls(len(points), points, lengths, masses, float(hbar))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points_per_dim

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(l / n for l, n in zip(self.lengths, self.points_per_dim))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacings))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axis_coords(self, axis: int) -> np.ndarray:
        """Node coordinates along one axis, x_j = j*h in [0, l)."""
        h = self.spacings[axis]
        return np.arange(self.points_per_dim[axis]) * h

    def meshes(self) -> list[np.ndarray]:
        axes = [self.axis_coords(i) for i in range(self.dims)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self, axis: int) -> np.ndarray:
        """Angular wavenumbers 2*pi*fftfreq for one axis."""
        n = self.points_per_dim[axis]
        return 2.0 * np.pi * np.fft.fftfreq(n, d=self.spacings[axis])

    def kinetic_spectrum(self) -> np.ndarray:
        """sum_i hbar^2 k_i^2 / (2 m_i), broadcast to the full grid shape."""
        out = np.zeros(self.shape)
        for i in range(self.dims):
            k = self.wavenumbers(i)
            shape = [1] * self.dims
            shape[i] = len(k)
            out = out + (self.hbar ** 2) * k.reshape(shape) ** 2 / (2.0 * self.masses[i])
        return out

    def wrap(self, positions: np.ndarray) -> np.ndarray:
        """Reduce positions (..., dims) into [0, l_i) per axis."""
        return np.mod(positions, np.asarray(self.lengths))


# ---------------------------------------------------------------------------
# spectral derivatives
# ---------------------------------------------------------------------------

def spectral_gradient(values: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    """d/dx_axis via FFT. The Nyquist mode is zeroed (odd derivative is
    sign-ambiguous there on an even grid)."""
    k = grid.wavenumbers(axis).copy()
    n = grid.points_per_dim[axis]
    k[n // 2] = 0.0
    shape = [1] * grid.dims
    shape[axis] = n
    fhat = np.fft.fftn(values)
    return np.fft.ifftn(1j * k.reshape(shape) * fhat)


def spectral_laplacian(values: np.ndarray, grid: GridSpec, axis: int | None = None) -> np.ndarray:
    """Laplacian (or single-axis second derivative) via FFT."""
    fhat = np.fft.fftn(values)
    if axis is None:
        k2 = np.zeros(grid.shape)
        for i in range(grid.dims):
            k = grid.wavenumbers(i)
            shape = [1] * grid.dims
            shape[i] = len(k)
            k2 = k2 + k.reshape(shape) ** 2
    else:
        k = grid.wavenumbers(axis)
        shape = [1] * grid.dims
        shape[axis] = len(k)
        k2 = np.broadcast_to(k.reshape(shape) ** 2, grid.shape)
    return np.fft.ifftn(-k2 * fhat)


def grid_norm(values: np.ndarray, grid: GridSpec) -> float:
    """Discrete L2(domain) norm: sqrt(sum |f|^2 * cell volume)."""
    return float(np.sqrt(np.sum(np.abs(values) ** 2) * grid.cell_volume))


# ---------------------------------------------------------------------------
# complex field
# ---------------------------------------------------------------------------

class ComplexField:
    """A complex amplitude sampled on a GridSpec, immutable after construction."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: GridSpec, values: np.ndarray):
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != grid.shape:
            if values.size != int(np.prod(grid.shape)):
                raise ValueError(
                    f"value count {values.size} != grid size {int(np.prod(grid.shape))}")
            values = values.reshape(grid.shape)
        values = values.copy()
        values.flags.writeable = False
        self.grid = grid
        self.values = values

    def __setattr__(self, name, value):
        if name in self.__slots__ and hasattr(self, "values"):
            raise AttributeError("ComplexField is immutable")
        object.__setattr__(self, name, value)

    @classmethod
    def from_callable(cls, grid: GridSpec, fn) -> "ComplexField":
        return cls(grid, np.asarray(fn(*grid.meshes()), dtype=np.complex128))

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.cell_volume)

    def normalize(self) -> "ComplexField":
        n2 = self.norm_sq()
        if n2 <= 0 or not math.isfinite(n2):
            raise ValueError("cannot normalize field with zero or non-finite norm")
        return ComplexField(self.grid, self.values / math.sqrt(n2))

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def with_values(self, values: np.ndarray) -> "ComplexField":
        return ComplexField(self.grid, values)


def uniform_field(grid: GridSpec) -> ComplexField:
    """Constant-amplitude normalized field (the n = 0 stationary state)."""
    amp = 1.0 / math.sqrt(grid.volume)
    return ComplexField(grid, np.full(grid.shape, amp, dtype=np.complex128))


def gaussian_packet(grid: GridSpec, center, sigma, momentum=None) -> ComplexField:
    """Normalized Gaussian packet exp(-(x-c)^2/(4 s^2) + i k x), periodically centered.

    Widths are position-space standard deviations per axis. Distances are
    wrapped to the nearest image so the packet can sit anywhere in the box.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (grid.dims,))
    if momentum is None:
        momentum = np.zeros(grid.dims)
    momentum = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.dims,))
    meshes = grid.meshes()
    logamp = np.zeros(grid.shape)
    phase = np.zeros(grid.shape)
    for i in range(grid.dims):
        d = meshes[i] - center[i]
        l = grid.lengths[i]
        d = d - l * np.round(d / l)
        logamp = logamp - d ** 2 / (4.0 * sigma[i] ** 2)
        phase = phase + momentum[i] * meshes[i]
    psi = np.exp(logamp + 1j * phase)
    return ComplexField(grid, psi).normalize()


# ---------------------------------------------------------------------------
# polar decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PolarPair:
    """Amplitude R and phase S (action units, principal value in (-pi*hbar, pi*hbar]).

    `defined` is False at nodes where R is at or below the node floor; the
    phase there is flagged rather than assigned a convention.
    """

    amplitude: np.ndarray
    phase: np.ndarray
    defined: np.ndarray
    node_floor: float


def node_floor_of(amplitude: np.ndarray) -> float:
    return NODE_FLOOR_RATIO * float(np.max(amplitude))


def polar_decompose(psi: ComplexField) -> PolarPair:
    """Split psi into R * exp(i S / hbar) per node."""
    if not np.all(np.isfinite(psi.values.real)) or not np.all(np.isfinite(psi.values.imag)):
        bad = int(np.sum(~(np.isfinite(psi.values.real) & np.isfinite(psi.values.imag))))
        raise ValueError(f"non-finite amplitude at {bad} nodes")
    r = np.abs(psi.values)
    s = psi.grid.hbar * np.angle(psi.values)
    floor = node_floor_of(r)
    return PolarPair(amplitude=r, phase=s, defined=r > floor, node_floor=floor)


def recompose(pair: PolarPair, grid: GridSpec) -> ComplexField:
    return ComplexField(grid, pair.amplitude * np.exp(1j * pair.phase / grid.hbar))


# ---------------------------------------------------------------------------
# quantum potential
# ---------------------------------------------------------------------------

def quantum_potential(psi: ComplexField) -> np.ndarray:
    """Q = -sum_i (hbar^2 / 2 m_i) (d^2 R / dx_i^2) / R, spectrally.

    Nodes with R at or below the node floor get NaN (undefined there).
    """
    grid = psi.grid
    r = np.abs(psi.values)
    floor = node_floor_of(r)
    defined = r > floor
    if not np.any(defined):
        raise ValueError("amplitude below floor everywhere")
    rhat = np.fft.fftn(r)
    weights = np.zeros(grid.shape)
    for i in range(grid.dims):
        k = grid.wavenumbers(i)
        shape = [1] * grid.dims
        shape[i] = len(k)
        weights = weights + (grid.hbar ** 2) * k.reshape(shape) ** 2 / (2.0 * grid.masses[i])
    # -(hbar^2/2m) * (-k^2 R_hat) collapses to +k^2-weighted transform
    num = np.fft.ifftn(weights * rhat).real
    q = np.full(grid.shape, np.nan)
    q[defined] = num[defined] / r[defined]
    return q


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Region:
    """Axis-aligned box on the periodic domain, stored as (start, extent) per axis.

    extent == l_i means the full period; extent == 0 is an empty slab.
    Wrap-around intervals (a > b) are supported through the modular reduction.
    """

    starts: tuple[float, ...]
    extents: tuple[float, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        for a, e, l in zip(self.starts, self.extents, self.lengths):
            if not (0.0 <= a < l):
                raise ValueError(f"start {a} not reduced into [0, {l})")
            if not (0.0 <= e <= l):
                raise ValueError(f"extent {e} outside [0, {l}]")

    @classmethod
    def from_intervals(cls, intervals, lengths) -> "Region":
        """Build from closed intervals [a_i, b_i]; a > b wraps around the period."""
        lengths = tuple(float(l) for l in lengths)
        starts, extents = [], []
        for (a, b), l in zip(intervals, lengths):
            a, b = float(a), float(b)
            if b - a >= l:
                starts.append(0.0)
                extents.append(l)
                continue
            a_red = a % l
            e = (b - a) % l
            starts.append(a_red)
            extents.append(e)
        return cls(tuple(starts), tuple(extents), lengths)

    @property
    def dims(self) -> int:
        return len(self.starts)

    def volume(self) -> float:
        return float(np.prod(self.extents))

    def fraction(self) -> float:
        """Lebesgue measure of the box divided by the domain volume."""
        return float(np.prod([e / l for e, l in zip(self.extents, self.lengths)]))

    def contains(self, positions: np.ndarray) -> np.ndarray:
        """Indicator for positions of shape (..., dims) (or (dims,))."""
        x = np.asarray(positions, dtype=float)
        squeeze = x.ndim == 1
        x = np.atleast_2d(x)
        inside = np.ones(x.shape[:-1], dtype=bool)
        for i, (a, e, l) in enumerate(zip(self.starts, self.extents, self.lengths)):
            d = np.mod(x[..., i] - a, l)
            inside &= d <= e
        return bool(inside[0]) if squeeze else inside

    def node_weights(self, grid: GridSpec) -> np.ndarray:
        """Fractional overlap of each node cell [x - h/2, x + h/2) with the box."""
        if grid.dims != self.dims:
            raise ValueError("region/grid dimensionality mismatch")
        per_axis = []
        for i in range(grid.dims):
            h = grid.spacings[i]
            a, e, l = self.starts[i], self.extents[i], self.lengths[i]
            u = np.mod(grid.axis_coords(i) - 0.5 * h - a, l)
            # cell [u, u+h) against arc copies [0, e) and [l, l+e)
            ov = np.clip(np.minimum(u + h, e) - u, 0.0, None)
            ov += np.clip(np.minimum(u + h, l + e) - np.maximum(u, l), 0.0, None)
            per_axis.append(np.clip(ov / h, 0.0, 1.0))
        w = per_axis[0]
        for arr in per_axis[1:]:
            w = np.multiply.outer(w, arr)
        return w


def measure_of_region(psi: ComplexField, omega: Region) -> float:
    """Born weight of the box: integral of |psi|^2 over omega, boundary cells
    weighted by fractional overlap."""
    w = omega.node_weights(psi.grid)
    return float(np.sum(psi.density() * w) * psi.grid.cell_volume)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Evaluable real potential on the grid.

    kinds:
      zero        V = 0
      harmonic    V = sum_i 0.5 m_i omega_i^2 (x_i - c_i)^2, periodically wrapped
      barrier     slab of height `height` along `slab_axis` in [lo, hi], with
                  zero-potential apertures (intervals) cut along `aperture_axis`
      tabulated   explicit node values
    """

    kind: str
    omegas: tuple[float, ...] | None = None
    center: tuple[float, ...] | None = None
    height: float = 0.0
    slab_axis: int = 0
    slab: tuple[float, float] | None = None
    aperture_axis: int = 1
    apertures: tuple[tuple[float, float], ...] = ()
    values: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls(kind="zero")

    @classmethod
    def harmonic(cls, omegas, center) -> "PotentialSpec":
        omegas = tuple(float(w) for w in np.atleast_1d(omegas))
        center = tuple(float(c) for c in np.atleast_1d(center))
        return cls(kind="harmonic", omegas=omegas, center=center)

    @classmethod
    def barrier(cls, slab_axis, lo, hi, height, aperture_axis=1, apertures=()) -> "PotentialSpec":
        return cls(kind="barrier", slab_axis=slab_axis, slab=(float(lo), float(hi)),
                   height=float(height), aperture_axis=aperture_axis,
                   apertures=tuple((float(a), float(b)) for a, b in apertures))

    @classmethod
    def tabulated(cls, values) -> "PotentialSpec":
        return cls(kind="tabulated", values=np.asarray(values, dtype=float))

    def evaluate(self, grid: GridSpec) -> np.ndarray:
        if self.kind == "zero":
            return np.zeros(grid.shape)
        if self.kind == "harmonic":
            meshes = grid.meshes()
            v = np.zeros(grid.shape)
            for i in range(grid.dims):
                d = meshes[i] - self.center[i]
                l = grid.lengths[i]
                d = d - l * np.round(d / l)
                v = v + 0.5 * grid.masses[i] * self.omegas[i] ** 2 * d ** 2
            return v
        if self.kind == "barrier":
            meshes = grid.meshes()
            lo, hi = self.slab
            inside = (meshes[self.slab_axis] >= lo) & (meshes[self.slab_axis] <= hi)
            if self.apertures:
                open_mask = np.zeros(grid.shape, dtype=bool)
                for a, b in self.apertures:
                    open_mask |= (meshes[self.aperture_axis] >= a) & (meshes[self.aperture_axis] <= b)
                inside &= ~open_mask
            return np.where(inside, self.height, 0.0)
        if self.kind == "tabulated":
            v = np.asarray(self.values, dtype=float)
            if v.shape != grid.shape:
                raise ValueError(f"tabulated potential shape {v.shape} != grid {grid.shape}")
            if not np.all(np.isfinite(v)):
                raise ValueError("tabulated potential must be bounded")
            return v
        raise ValueError(f"unknown potential kind {self.kind!r}")


# ---------------------------------------------------------------------------
# field dump format
# ---------------------------------------------------------------------------

def save_field(psi: ComplexField, path) -> None:
    """Write the PWFIELD v1 text dump (header + one re,im pair per line)."""
    grid = psi.grid
    header = "PWFIELD v1 dims={} points={} lengths={}".format(
        grid.dims,
        ",".join(str(n) for n in grid.points_per_dim),
        ",".join(repr(l) for l in grid.lengths),
    )
    flat = psi.values.reshape(-1)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for z in flat:
            fh.write(f"{z.real!r},{z.imag!r}\n")


def load_field(path, masses=None, hbar=1.0) -> ComplexField:
    """Read a PWFIELD v1 dump. Masses and hbar are not part of the format and
    default to 1 unless given."""
    with open(path) as fh:
        header = fh.readline().strip()
        parts = header.split()
        if len(parts) != 5 or parts[0] != "PWFIELD" or parts[1] != "v1":
            raise ValueError(f"not a PWFIELD v1 dump: {header!r}")
        meta = dict(p.split("=", 1) for p in parts[2:])
        dims = int(meta["dims"])
        points = tuple(int(tok) for tok in meta["points"].split(","))
        lengths = tuple(float(tok) for tok in meta["lengths"].split(","))
        if len(points) != dims or len(lengths) != dims:
            raise ValueError("header dims do not match points/lengths")
        data = np.empty(int(np.prod(points)), dtype=np.complex128)
        for i in range(data.size):
            line = fh.readline()
            if not line:
                raise ValueError(f"truncated dump: expected {data.size} values, got {i}")
            re_s, im_s = line.strip().split(",")
            data[i] = complex(float(re_s), float(im_s))
    grid = GridSpec.create(points, lengths, masses=masses, hbar=hbar)
    return ComplexField(grid, data.reshape(points))
