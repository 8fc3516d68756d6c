"""Random-walk jump laws and their transition kernels on Z^d.

The kernel p(t, z) is computed spectrally: the characteristic exponent
``l_hat(k) = kappa * (a_hat(k) - 1)`` is exponentiated on a uniform tensor
grid of the torus [-pi, pi]^d and inverted with an FFT.  On an M-point grid
this is exactly the kernel of the walk wrapped on (Z_M)^d, so mass is
conserved to rounding and the only error is wrap-around.  An independent
check is ``heat_kernel_series``, which sums the Poisson mixture of
convolution powers of the jump law directly.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import product

import numpy as np
from scipy import stats

from .errors import (
    AsymmetryError,
    NegativeWeightError,
    NormalizationError,
    ReducibilityError,
    ResolutionError,
    ToleranceNotReached,
)

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class JumpDistribution:
    """Symmetric, finitely supported jump law a(z) with jump rate kappa.

    Build instances through :func:`validate_jump_distribution`, which enforces
    the invariants; the constructor itself trusts its input.
    """

    dim: int
    entries: tuple  # ((offset_tuple, weight), ...) sorted by offset
    kappa: float = 1.0

    @cached_property
    def offsets(self):
        return np.array([z for z, _ in self.entries], dtype=np.int64).reshape(-1, self.dim)

    @cached_property
    def weights(self):
        return np.array([w for _, w in self.entries], dtype=np.float64)

    @cached_property
    def support_radius(self):
        return int(np.abs(self.offsets).max())

    @cached_property
    def covariance(self):
        """Per-jump covariance sum_z z z^T a(z) (the Hessian of 1 - a_hat at 0)."""
        z = self.offsets.astype(float)
        return (z * self.weights[:, None]).T @ z

    @cached_property
    def axis_laws(self):
        """Split into independent coordinate walks when every jump is along an axis.

        Returns a list of ``(JumpDistribution_1d, rate)`` per axis, or ``None``
        when the law does not factorise.
        """
        z = self.offsets
        if np.any(np.count_nonzero(z, axis=1) != 1):
            return None
        laws = []
        for axis in range(self.dim):
            on_axis = z[:, axis] != 0
            mass = float(self.weights[on_axis].sum())
            if mass == 0.0:
                return None
            entries = tuple(sorted(((int(z[i, axis]),), float(self.weights[i]) / mass)
                                   for i in np.flatnonzero(on_axis)))
            laws.append((JumpDistribution(1, entries, 1.0), self.kappa * mass))
        return laws


def validate_jump_distribution(entries, dim, kappa=1.0):
    """Check a jump law and return it as a :class:`JumpDistribution`.

    Parameters
    ----------
    entries : mapping or iterable of (offset, weight)
        Offsets are integer d-tuples (plain ints allowed when ``dim == 1``).
    dim : int
    kappa : float
        Jump rate, strictly positive.

    Raises
    ------
    NegativeWeightError, AsymmetryError, NormalizationError, ReducibilityError
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    items = entries.items() if hasattr(entries, "items") else entries
    law = {}
    for z, w in items:
        z = (int(z),) if np.isscalar(z) else tuple(int(c) for c in z)
        if len(z) != dim:
            raise ValueError(f"offset {z} does not have dimension {dim}")
        if all(c == 0 for c in z):
            raise ValueError("the zero offset is not a jump")
        law[z] = law.get(z, 0.0) + float(w)
    if not law:
        raise ValueError("empty jump law")

    for z, w in law.items():
        if w < 0:
            raise NegativeWeightError(f"a{z} = {w} < 0")
    law = {z: w for z, w in law.items() if w > 0}
    for z, w in law.items():
        mirror = tuple(-c for c in z)
        if law.get(mirror, 0.0) != w:
            raise AsymmetryError(f"a{z} = {w} but a{mirror} = {law.get(mirror, 0.0)}")
    total = math.fsum(law.values())
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NormalizationError(f"weights sum to {total!r}, not 1")
    if not _generates_lattice(list(law), dim):
        raise ReducibilityError("support does not generate Z^%d" % dim)
    return JumpDistribution(dim, tuple(sorted(law.items())), float(kappa))


def _generates_lattice(vectors, dim):
    # Z-span equals Z^d iff the Smith normal form has d unit invariant factors.
    from sympy import Matrix, ZZ
    from sympy.matrices.normalforms import invariant_factors

    factors = invariant_factors(Matrix(vectors).T, domain=ZZ)
    return len(factors) == dim and all(abs(int(f)) == 1 for f in factors)


def simple_random_walk(dim, kappa=1.0):
    """Nearest-neighbour walk, weight 1/(2d) on each unit vector."""
    entries = {}
    for axis in range(dim):
        for sign in (1, -1):
            z = [0] * dim
            z[axis] = sign
            entries[tuple(z)] = 1.0 / (2 * dim)
    return validate_jump_distribution(entries, dim, kappa)


class CharExponent:
    """a_hat(k) = sum_z cos(k.z) a(z) and l_hat(k) = kappa (a_hat(k) - 1).

    Evaluated as ``1 - sum_z a(z) 2 sin^2(k.z / 2)`` so that ``a_hat(0) == 1``
    exactly and ``1 - a_hat`` keeps full relative precision near k = 0.
    """

    def __init__(self, jd):
        self.jd = jd

    def one_minus_a_hat(self, k):
        k = np.asarray(k, dtype=float)
        if self.jd.dim == 1 and (k.ndim == 0 or k.shape[-1] != 1):
            k = k[..., None]
        phase = k @ self.jd.offsets.T.astype(float)
        return (2.0 * np.sin(0.5 * phase) ** 2) @ self.jd.weights

    def a_hat(self, k):
        return 1.0 - self.one_minus_a_hat(k)

    def l_hat(self, k):
        return -self.jd.kappa * self.one_minus_a_hat(k)


def char_exponent(jd):
    return CharExponent(jd)


def torus_frequencies(M):
    return 2.0 * np.pi * np.fft.fftfreq(M)


def torus_l_hat(jd, M, first_index=None):
    """l_hat on the full M^d frequency grid (FFT ordering).

    With ``first_index`` only the slab with that first-axis index is returned,
    which lets callers stream over large d >= 3 grids.
    """
    k1 = torus_frequencies(M)
    out = np.zeros((M,) * (jd.dim - (first_index is not None)))
    for z, w in jd.entries:
        phase = 0.0
        axes = range(jd.dim)
        if first_index is not None:
            phase = k1[first_index] * z[0]
            axes = range(1, jd.dim)
        for j, axis in enumerate(axes):
            shape = [1] * out.ndim
            shape[j] = M
            phase = phase + (k1 * z[axis]).reshape(shape)
        out = out + w * 2.0 * np.sin(0.5 * phase) ** 2
    return -jd.kappa * out


def minimal_grid(jd, t):
    """Smallest admissible quadrature resolution for time t."""
    m = max(64, math.ceil(8.0 * math.sqrt(jd.kappa * t)))
    return m + (m % 2)


def _kernel_1d_many(jd1, rate, times, M):
    """Rows p(t_i, .) of a 1-d walk on Z_M, FFT ordering."""
    k = torus_frequencies(M)
    lam = -2.0 * np.sin(0.5 * np.outer(k, jd1.offsets[:, 0])) ** 2 @ jd1.weights
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return np.fft.ifft(np.exp(rate * np.outer(times, lam)), axis=-1).real


def torus_kernel(jd, t, M):
    """p(t, z) for every z in (Z_M)^d, FFT ordering (index j <-> z = j mod M)."""
    if t == 0:
        p = np.zeros((M,) * jd.dim)
        p[(0,) * jd.dim] = 1.0
        return p
    laws = jd.axis_laws
    if laws is not None:
        # the tensor-grid quadrature of a product integrand is the product of
        # the one-dimensional quadratures
        p = None
        for jd1, rate in laws:
            row = _kernel_1d_many(jd1, rate, [t], M)[0]
            p = row if p is None else np.multiply.outer(p, row)
        return p
    return np.fft.ifftn(np.exp(t * torus_l_hat(jd, M))).real


def _window_from_torus(full, R):
    idx = np.arange(-R, R + 1)
    return full[np.ix_(*([idx] * full.ndim))]


@dataclass(frozen=True)
class HeatKernelGrid:
    t: float
    window_radius: int
    grid_points_per_dim: int
    values: np.ndarray = field(repr=False)

    def at(self, z):
        z = (int(z),) if np.isscalar(z) else tuple(int(c) for c in z)
        R = self.window_radius
        if any(abs(c) > R for c in z):
            raise IndexError(f"{z} outside window of radius {R}")
        return float(self.values[tuple(c + R for c in z)])

    def coordinates(self):
        """Integer offsets of every window cell, shape (n_cells, d)."""
        R = self.window_radius
        axes = [np.arange(-R, R + 1)] * self.values.ndim
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.values.ndim)

    def to_csv_rows(self):
        for z, p in zip(self.coordinates(), self.values.reshape(-1)):
            yield (self.t, *(int(c) for c in z), float(p))


def heat_kernel(jd, t, window_radius, grid_points_per_dim=None):
    """Transition probabilities p(t, z) for |z|_inf <= window_radius.

    Raises
    ------
    ResolutionError
        If the grid is coarser than the admissible minimum for ``t`` or the
        window does not fit in half the torus.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    M = minimal_grid(jd, t) if grid_points_per_dim is None else int(grid_points_per_dim)
    need = minimal_grid(jd, t)
    if M < need:
        raise ResolutionError(f"M={M} below the admissible minimum {need} at t={t}")
    if window_radius > M // 2:
        raise ResolutionError(f"window radius {window_radius} exceeds M/2 = {M // 2}")
    full = torus_kernel(jd, t, M)
    vals = _window_from_torus(full, window_radius)
    return HeatKernelGrid(float(t), int(window_radius), M, vals)


def kernel_value(jd, t, z, M=None):
    """p(t, z) at a single offset, on a grid large enough to hold z."""
    z = (int(z),) if np.isscalar(z) else tuple(int(c) for c in z)
    reach = max(abs(c) for c in z)
    if M is None:
        M = max(minimal_grid(jd, t), 2 * reach + 2)
    return heat_kernel(jd, t, reach, M).at(z)


def _poisson_cutoff(mean, tail_tol):
    if mean == 0:
        return 0
    n = int(stats.poisson.isf(tail_tol, mean)) + 1
    while stats.poisson.sf(n, mean) >= tail_tol:
        n += 1
    return n


def series_window(jd, t, radius, tail_tol=1e-12):
    """Uniformization sum over |z|_inf <= radius, as a dense (2radius+1)^d array.

    p(t, z) = sum_n e^{-kappa t} (kappa t)^n / n! * a^{*n}(z), truncated where
    the Poisson upper tail drops below ``tail_tol`` (which bounds the error).
    Convolution powers are built by direct shift-and-add, never by FFT.
    """
    d = jd.dim
    lam = jd.kappa * t
    n_max = _poisson_cutoff(lam, tail_tol)
    big = radius + n_max * jd.support_radius
    shape = (2 * big + 1,) * d
    cur = np.zeros(shape)
    cur[(big,) * d] = 1.0
    acc = stats.poisson.pmf(0, lam) * cur
    weights = stats.poisson.pmf(np.arange(n_max + 1), lam)
    for n in range(1, n_max + 1):
        nxt = np.zeros(shape)
        for z, w in jd.entries:
            dst = tuple(slice(max(c, 0), shape[0] + min(c, 0)) for c in z)
            src = tuple(slice(max(-c, 0), shape[0] - max(c, 0)) for c in z)
            nxt[dst] += w * cur[src]
        cur = nxt
        acc += weights[n] * cur
    centre = tuple(slice(big - radius, big + radius + 1) for _ in range(d))
    return acc[centre]


def heat_kernel_series(jd, t, z, tail_tol=1e-12):
    """Independent oracle for p(t, z) by uniformization."""
    if t < 0 or tail_tol <= 0:
        raise ValueError("need t >= 0 and tail_tol > 0")
    z = (int(z),) if np.isscalar(z) else tuple(int(c) for c in z)
    r = max(abs(c) for c in z)
    win = series_window(jd, t, r, tail_tol)
    return float(win[tuple(c + r for c in z)])


class GreenKind(Enum):
    RECURRENT = "Recurrent"
    TRANSIENT = "Transient"


@dataclass(frozen=True)
class GreenValue:
    kind: GreenKind
    value: float
    quadrature_error_estimate: float = 0.0
    levels: tuple = ()


def _punctured_mean(jd, M):
    """(1/M^d) sum over the grid without k = 0 of 1 / (kappa (1 - a_hat))."""
    total = 0.0
    for i in range(M):
        slab = -torus_l_hat(jd, M, first_index=i)
        if i == 0:
            slab[(0,) * slab.ndim] = np.inf
        total += float(np.sum(1.0 / slab))
    return total / M ** jd.dim


def green_value(jd, quad_tol=1e-6, start_grid=32, max_grid=512):
    """G_0(0,0) = integral of p(t, 0) over t >= 0.

    For d <= 2 the walk has finite variance and is recurrent: reported
    structurally, without quadrature.  For d >= 3 the integral of
    1/(kappa(1 - a_hat)) over the torus is evaluated by the punctured grid
    rule (k = 0 dropped).  Because 1 - a_hat ~ k^T H k / 2 near the origin,
    the error of that rule expands in h^(d-2), h^d, h^(d+2), ... with
    h = 2 pi / M; two Richardson sweeps over grids M, 2M, 4M remove the first
    two terms.  Refinement continues until two successive extrapolants agree
    to ``quad_tol``.
    """
    d = jd.dim
    if d <= 2:
        return GreenValue(GreenKind.RECURRENT, math.inf, 0.0)
    p1, p2 = d - 2, d
    raw = []
    extrap = []
    M = start_grid
    while M <= max_grid:
        raw.append(_punctured_mean(jd, M))
        if len(raw) >= 3:
            a, b, c = raw[-3:]
            f1 = 2.0 ** p1
            r_ab = (f1 * b - a) / (f1 - 1)
            r_bc = (f1 * c - b) / (f1 - 1)
            f2 = 2.0 ** p2
            extrap.append((f2 * r_bc - r_ab) / (f2 - 1))
        if len(extrap) >= 2:
            err = abs(extrap[-1] - extrap[-2])
            if err < quad_tol:
                return GreenValue(GreenKind.TRANSIENT, extrap[-1], err, tuple(extrap))
        M *= 2
    err = abs(extrap[-1] - extrap[-2]) if len(extrap) >= 2 else math.inf
    raise ToleranceNotReached(f"Green value refinement stalled at error {err:.3g} > {quad_tol}")


def gaussian_clt_approx(jd, t, z):
    """exp(-|z|^2 / 2t) / (2 pi t)^(d/2), the local CLT shape as written.

    No covariance correction: the formula is exact in the limit only for
    unit-rate laws with identity per-coordinate variance per unit time (the
    1-d simple walk, for instance).  For other laws compare against
    ``jd.covariance * jd.kappa`` yourself.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    r2 = float(z @ z)
    return math.exp(-r2 / (2.0 * t)) / (2.0 * math.pi * t) ** (jd.dim / 2.0)


# -- plain-text jump-law blocks ------------------------------------------------

def parse_jump_block(text):
    """Parse ``dim = d``, ``kappa = k`` and ``z_1 .. z_d weight`` lines.

    Returns a validated JumpDistribution.  Blank lines and ``#`` comments are
    ignored.  For the sectioned run-config format see :mod:`critbrw.config`.
    """
    from .config import parse_config

    return parse_config(text).jump_distribution()


def format_jump_block(jd):
    lines = [f"dim = {jd.dim}", f"kappa = {jd.kappa!r}"]
    for z, w in jd.entries:
        lines.append(" ".join(str(c) for c in z) + f" {w!r}")
    return "\n".join(lines) + "\n"


def kernel_csv_header(dim):
    return ["t", *[f"z{i + 1}" for i in range(dim)], "p"]


def iter_window(radius, dim):
    return product(range(-radius, radius + 1), repeat=dim)
