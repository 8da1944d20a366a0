"""Time-average occupancy statistics, exact torus translation flows,
rational-independence verdicts and iterated measure-preserving maps.

The independence question for torus eigenflows is decided exactly, but only
when the squared period lengths are given as quadratic surds
q0 + q1*sqrt(2) + q2*sqrt(3) + q3*sqrt(5) with rational q_j. Products of such
surds close in the eight-dimensional algebra spanned by square roots of the
squarefree products of {2, 3, 5}, and rational linear (in)dependence of the
flow frequencies reduces to an exact rank computation there. Anything outside
the surd form is reported "undecided" together with a continued-fraction
quality diagnostic; rational independence of floats is not a decidable
question and is never guessed at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .fields import GridSpec, Region


# ---------------------------------------------------------------------------
# occupancy accumulation
# ---------------------------------------------------------------------------

@dataclass
class OccupancyAccumulator:
    """Trapezoidal time-in-region accumulator, optionally conditional.

    With a conditioning region the ratio is time-in-(omega and Omega) over
    time-in-Omega; otherwise time-in-omega over total time.
    """

    omega: Region
    conditioning: Region | None = None
    time_in_region: float = 0.0
    time_conditioning: float = 0.0
    total_time: float = 0.0
    _last: tuple | None = field(default=None, repr=False)

    def update_series(self, times, positions) -> None:
        """Feed a chunk of strictly increasing timestamps and matching positions."""
        times = np.asarray(times, dtype=float)
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        if times.size == 0:
            return
        if np.any(np.diff(times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        num = self.omega.contains(positions).astype(float)
        if self.conditioning is not None:
            den = self.conditioning.contains(positions).astype(float)
            num = num * den
        else:
            den = np.ones_like(num)
        if self._last is not None:
            t0, n0, d0 = self._last
            if times[0] <= t0:
                raise ValueError("timestamps must continue increasing across chunks")
            dt = times[0] - t0
            self.time_in_region += 0.5 * (n0 + num[0]) * dt
            self.time_conditioning += 0.5 * (d0 + den[0]) * dt
            self.total_time += dt
        if times.size > 1:
            dts = np.diff(times)
            self.time_in_region += float(np.sum(0.5 * (num[:-1] + num[1:]) * dts))
            self.time_conditioning += float(np.sum(0.5 * (den[:-1] + den[1:]) * dts))
            self.total_time += float(times[-1] - times[0])
        self._last = (float(times[-1]), float(num[-1]), float(den[-1]))

    @property
    def ratio(self) -> float:
        """Occupancy ratio; NaN when the conditioning time vanishes."""
        den = self.time_conditioning if self.conditioning is not None else self.total_time
        if den <= 0:
            return float("nan")
        return self.time_in_region / den

    @property
    def ratio_defined(self) -> bool:
        den = self.time_conditioning if self.conditioning is not None else self.total_time
        return den > 0

    def merge(self, other: "OccupancyAccumulator") -> "OccupancyAccumulator":
        if other.omega != self.omega or other.conditioning != self.conditioning:
            raise ValueError("cannot merge accumulators for different regions")
        self.time_in_region += other.time_in_region
        self.time_conditioning += other.time_conditioning
        self.total_time += other.total_time
        return self


def accumulate_occupancy(times, positions, omega: Region,
                         conditioning: Region | None = None) -> OccupancyAccumulator:
    acc = OccupancyAccumulator(omega=omega, conditioning=conditioning)
    acc.update_series(times, positions)
    return acc


# ---------------------------------------------------------------------------
# exact torus flow
# ---------------------------------------------------------------------------

def torus_flow_exact(x0, quantum_numbers, lengths, t, masses=None, hbar: float = 1.0):
    """Closed-form eigenflow position x_i(t) = x_i(0) + v_i t mod l_i with
    v_i = 2 pi hbar n_i / (m_i l_i). t may be a scalar or an array."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    ns = np.atleast_1d(np.asarray(quantum_numbers, dtype=float))
    lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
    if masses is None:
        masses = np.ones_like(lengths)
    masses = np.broadcast_to(np.asarray(masses, dtype=float), lengths.shape)
    v = 2.0 * np.pi * hbar * ns / (masses * lengths)
    t_arr = np.asarray(t, dtype=float)
    pos = x0 + np.multiply.outer(t_arr, v)
    return np.mod(pos, lengths)


# ---------------------------------------------------------------------------
# exact surd arithmetic
# ---------------------------------------------------------------------------

_PRIMES = (2, 3, 5)
# squarefree radicands reachable from products of sqrt(2), sqrt(3), sqrt(5)
_RADICANDS = (1, 2, 3, 5, 6, 10, 15, 30)
_RAD_INDEX = {r: i for i, r in enumerate(_RADICANDS)}


def _rad_mul(a: int, b: int) -> tuple[int, int]:
    """sqrt(a) * sqrt(b) = whole * sqrt(rad) for squarefree a, b."""
    whole, rad = 1, 1
    for p in _PRIMES:
        ea = int(a % p == 0)
        eb = int(b % p == 0)
        if ea + eb == 2:
            whole *= p
        elif ea + eb == 1:
            rad *= p
    return whole, rad


class SurdNumber:
    """Exact element of Q(sqrt(2), sqrt(3), sqrt(5)) as 8 rational coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=None):
        self.coeffs = [Fraction(0)] * len(_RADICANDS)
        if coeffs is not None:
            for rad, c in coeffs.items():
                self.coeffs[_RAD_INDEX[rad]] = Fraction(c)

    @classmethod
    def rational(cls, q) -> "SurdNumber":
        return cls({1: Fraction(q)})

    def __add__(self, other: "SurdNumber") -> "SurdNumber":
        out = SurdNumber()
        out.coeffs = [a + b for a, b in zip(self.coeffs, other.coeffs)]
        return out

    def __mul__(self, other) -> "SurdNumber":
        if isinstance(other, (int, Fraction)):
            out = SurdNumber()
            out.coeffs = [c * Fraction(other) for c in self.coeffs]
            return out
        out = SurdNumber()
        for i, a in enumerate(self.coeffs):
            if a == 0:
                continue
            for j, b in enumerate(other.coeffs):
                if b == 0:
                    continue
                whole, rad = _rad_mul(_RADICANDS[i], _RADICANDS[j])
                out.coeffs[_RAD_INDEX[rad]] += a * b * whole
        return out

    __rmul__ = __mul__

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def value(self) -> float:
        return float(sum(float(c) * math.sqrt(r) for c, r in zip(self.coeffs, _RADICANDS)))


@dataclass(frozen=True)
class SurdLength:
    """A squared period length q0 + q1 sqrt(2) + q2 sqrt(3) + q3 sqrt(5), exact."""

    q0: Fraction = Fraction(0)
    q1: Fraction = Fraction(0)
    q2: Fraction = Fraction(0)
    q3: Fraction = Fraction(0)

    def __post_init__(self):
        if self.value() <= 0:
            raise ValueError("represented squared length must be positive")

    @classmethod
    def parse(cls, text: str) -> "SurdLength":
        """Parse forms like "1", "sqrt(2)", "3/2*sqrt(5)", "1 + sqrt(2)"."""
        coeffs = {1: Fraction(0), 2: Fraction(0), 3: Fraction(0), 5: Fraction(0)}
        cleaned = text.replace(" ", "").replace("-", "+-")
        for term in cleaned.split("+"):
            if not term:
                continue
            rad = 1
            if "sqrt(" in term:
                head, _, tail = term.partition("sqrt(")
                rad = int(tail.rstrip(")"))
                if rad not in (2, 3, 5):
                    raise ValueError(f"unsupported radicand {rad} in {text!r}")
                head = head.rstrip("*")
                coef = Fraction(head) if head not in ("", "-") else Fraction(-1 if head == "-" else 1)
            else:
                coef = Fraction(term)
            coeffs[rad] += coef
        return cls(coeffs[1], coeffs[2], coeffs[3], coeffs[5])

    def to_surd(self) -> SurdNumber:
        return SurdNumber({1: self.q0, 2: self.q1, 3: self.q2, 5: self.q3})

    def value(self) -> float:
        return (float(self.q0) + float(self.q1) * math.sqrt(2)
                + float(self.q2) * math.sqrt(3) + float(self.q3) * math.sqrt(5))

    def length(self) -> float:
        return math.sqrt(self.value())


def _rational_rank(vectors: list[list[Fraction]]) -> int:
    """Rank over Q of row vectors, exact Gaussian elimination."""
    rows = [list(v) for v in vectors]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    col = 0
    while rank < len(rows) and col < ncols:
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if pivot is None:
            col += 1
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        lead = rows[rank][col]
        for r in range(rank + 1, len(rows)):
            if rows[r][col] != 0:
                factor = rows[r][col] / lead
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
        col += 1
    return rank


@dataclass(frozen=True)
class IndependenceVerdict:
    verdict: str                   # ergodic-guaranteed | closed-orbit | undecided
    detail: str
    cf_report: tuple = ()


def continued_fraction(x: float, max_terms: int = 20) -> list[int]:
    """Partial quotients of x (diagnostic quality only, float precision)."""
    out = []
    for _ in range(max_terms):
        a = math.floor(x)
        out.append(int(a))
        frac = x - a
        if frac < 1e-12:
            break
        x = 1.0 / frac
        if x > 1e12:
            break
    return out


def _cf_quality(ratio: float) -> dict:
    quots = continued_fraction(ratio)
    # reconstruct the best convergent p/q from the quotients
    p0, p1 = 1, quots[0]
    q0, q1 = 0, 1
    for a in quots[1:]:
        p0, p1 = p1, a * p1 + p0
        q0, q1 = q1, a * q1 + q0
    err = abs(ratio - p1 / q1) if q1 else float("nan")
    return {"ratio": ratio, "partial_quotients": quots,
            "convergent": (p1, q1), "abs_error": err}


def check_rational_independence(lengths_sq, quantum_numbers) -> IndependenceVerdict:
    """Ergodicity verdict for the torus eigenflow with the given squared
    lengths (SurdLength values, or plain floats for "undecided") and integer
    quantum numbers.

    The flow frequencies are proportional to n_i / l_i^2; the flow is ergodic
    exactly when these are rationally independent and all n_i are nonzero.
    """
    ns = [int(n) for n in np.atleast_1d(quantum_numbers)]
    if any(n == 0 for n in ns):
        return IndependenceVerdict(
            "closed-orbit", "some quantum number vanishes; the orbit closes on a subtorus")
    if len(ns) == 1:
        return IndependenceVerdict(
            "ergodic-guaranteed", "single nonzero frequency on a circle")
    if not all(isinstance(l, SurdLength) for l in lengths_sq):
        ratios = []
        vals = [float(l.value()) if isinstance(l, SurdLength) else float(l) for l in lengths_sq]
        for i in range(len(vals)):
            for j in range(i + 1, len(vals)):
                ratios.append(_cf_quality((ns[i] / vals[i]) / (ns[j] / vals[j])))
        return IndependenceVerdict(
            "undecided", "squared lengths not in exact surd form", tuple(ratios))
    # w_i = n_i * prod_{j != i} l_j^2; frequencies are dependent over Q exactly
    # when the w_i are (clearing the common positive denominator prod l_j^2)
    surds = [l.to_surd() for l in lengths_sq]
    ws = []
    for i, n in enumerate(ns):
        w = SurdNumber.rational(n)
        for j, s in enumerate(surds):
            if j != i:
                w = w * s
        ws.append(w.coeffs)
    rank = _rational_rank(ws)
    if rank < len(ns):
        return IndependenceVerdict(
            "closed-orbit", "frequencies are rationally dependent (exact check)")
    return IndependenceVerdict(
        "ergodic-guaranteed", "frequencies rationally independent (exact check)")


# ---------------------------------------------------------------------------
# iterated measure-preserving maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IteratedMap:
    """Seeded sequence of Lebesgue-preserving kick maps on the torus.

    families:
      identity   U_n = id
      rotation   U_n(x) = x + theta_n mod l (rigid translation per step)
      shear      alternating integer shears: even n add k_n*(l1/l2)*x2 to x1,
                 odd n the transpose (2-D only); |det J| = 1 for every member
    """

    family: str
    lengths: tuple[float, ...]
    seed: int
    amplitude: float = 1.0
    max_shear: int = 3

    def __post_init__(self):
        if self.family not in ("identity", "rotation", "shear"):
            raise ValueError(f"unknown map family {self.family!r}")
        if self.family == "shear" and len(self.lengths) != 2:
            raise ValueError("shear kicks need a 2-D torus")

    @property
    def dims(self) -> int:
        return len(self.lengths)

    def parameters(self, n_steps: int) -> np.ndarray:
        """Per-step kick parameters; a prefix-stable seeded stream."""
        rng = np.random.default_rng(self.seed)
        if self.family == "identity":
            return np.zeros((n_steps, self.dims))
        if self.family == "rotation":
            return self.amplitude * rng.uniform(0.0, 1.0, (n_steps, self.dims)) \
                * np.asarray(self.lengths)
        mags = rng.integers(1, self.max_shear + 1, n_steps)
        signs = rng.choice([-1, 1], n_steps)
        out = np.zeros((n_steps, self.dims))
        out[:, 0] = mags * signs
        return out

    def apply(self, index: int, params_row: np.ndarray, positions: np.ndarray,
              wrap: bool = True) -> np.ndarray:
        pos = np.atleast_2d(np.asarray(positions, dtype=float)).copy()
        if self.family == "rotation":
            pos = pos + params_row[None, :]
        elif self.family == "shear":
            k = params_row[0]
            l1, l2 = self.lengths
            if index % 2 == 0:
                pos[:, 0] = pos[:, 0] + k * (l1 / l2) * pos[:, 1]
            else:
                pos[:, 1] = pos[:, 1] + k * (l2 / l1) * pos[:, 0]
        if wrap:
            pos = np.mod(pos, np.asarray(self.lengths))
        return pos


@dataclass
class MapRunResult:
    positions: np.ndarray                     # final sample positions
    visit_ratios: dict[int, float]            # region index -> Birkhoff ratio
    ratio_series: dict[int, np.ndarray]       # region index -> cumulative ratios


def apply_map_sequence(x0, imap: IteratedMap, n_steps: int,
                       regions: tuple[Region, ...] = ()) -> MapRunResult:
    """Iterate X_n = U_n(X_{n-1}) and accumulate per-visit occupancy counts
    (discrete-time Birkhoff sums over samples and steps)."""
    pos = np.atleast_2d(np.asarray(x0, dtype=float))
    n_samples = pos.shape[0]
    params = imap.parameters(n_steps)
    visits = np.zeros(len(regions))
    series = [np.empty(n_steps) for _ in regions]
    if imap.family == "rotation":
        # rigid kicks commute with each other: vectorize over steps
        shifts = np.cumsum(params, axis=0)
        lengths = np.asarray(imap.lengths)
        if regions:
            chunk = max(1, int(2_000_000 // max(1, n_samples)))
            done = 0
            while done < n_steps:
                hi = min(n_steps, done + chunk)
                traj = np.mod(pos[None, :, :] + shifts[done:hi, None, :], lengths)
                for r, region in enumerate(regions):
                    counts = region.contains(traj.reshape(-1, imap.dims))
                    counts = counts.reshape(hi - done, n_samples).sum(axis=1)
                    prev_total = visits[r]
                    visits[r] += counts.sum()
                    series[r][done:hi] = (np.cumsum(counts) + prev_total) \
                        / (np.arange(done + 1, hi + 1) * n_samples)
                done = hi
        final = np.mod(pos + shifts[-1], lengths) if n_steps else pos
    else:
        final = pos
        for n in range(n_steps):
            final = imap.apply(n, params[n], final)
            for r, region in enumerate(regions):
                visits[r] += float(np.sum(region.contains(final)))
                series[r][n] = visits[r] / ((n + 1) * n_samples)
    ratios = {r: visits[r] / (n_steps * n_samples) if n_steps else float("nan")
              for r in range(len(regions))}
    return MapRunResult(positions=final,
                        visit_ratios=ratios,
                        ratio_series={r: series[r] for r in range(len(regions))})


def jacobian_determinant_audit(imap: IteratedMap, step_index: int, n_probe: int = 16,
                               seed: int = 0, fd_step: float = 1e-5) -> float:
    """max |det J - 1| of one map member, central differences on the unwrapped
    map (our kick families are affine, so this is exact up to roundoff)."""
    rng = np.random.default_rng(seed)
    params = imap.parameters(step_index + 1)[step_index]
    pts = rng.uniform(0.2, 0.8, (n_probe, imap.dims)) * np.asarray(imap.lengths)
    worst = 0.0
    for x in pts:
        jac = np.empty((imap.dims, imap.dims))
        for j in range(imap.dims):
            dx = np.zeros(imap.dims)
            dx[j] = fd_step
            fp = imap.apply(step_index, params, (x + dx)[None, :], wrap=False)[0]
            fm = imap.apply(step_index, params, (x - dx)[None, :], wrap=False)[0]
            jac[:, j] = (fp - fm) / (2.0 * fd_step)
        worst = max(worst, abs(abs(np.linalg.det(jac)) - 1.0))
    return worst


def pushforward_tv_audit(imap: IteratedMap, step_index: int, grid: GridSpec,
                         reference, n_samples: int, multiples, seed: int) -> float:
    """TV between a pushforward sample histogram and the coarse reference
    masses (statistical audit at finite n)."""
    from .ensemble import CoarsePartition, coarse_grain, coarse_grain_density, sample_initial, total_variation
    samples = sample_initial(reference, n_samples, seed, grid)
    params = imap.parameters(step_index + 1)[step_index]
    pushed = imap.apply(step_index, params, samples)
    hist, _ = coarse_grain(pushed, multiples, grid)
    part = CoarsePartition(grid, tuple(int(m) for m in np.atleast_1d(multiples)))
    if isinstance(reference, str) and reference == "uniform":
        ref_masses = np.full(part.n_cells, 1.0 / part.n_cells)
    else:
        from .fields import ComplexField
        dens = reference.density() if isinstance(reference, ComplexField) else np.asarray(reference)
        ref_masses = coarse_grain_density(dens, part).masses
    return total_variation(hist.masses, ref_masses)
