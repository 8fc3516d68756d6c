"""Moments of the subpopulation n(t, x, y) started by one particle at x.

All linear problems here have a potential that depends on time only, so they
reduce to heat evolution on the torus grid: multiply by exp(t * l_hat) in
Fourier space, then correct by exp(integral of the potential).

The conditional second factorial moment given n_x(t) = m is

    M2(m, t, x, y) = 2 beta (beta t + 1) / (beta t)
        * int_0^t S(s) / (beta s + 1)^2 * F_{m-2}(q(s)) ds,

    S(s) = sum_v p(t - s, x - v) p(s, v - y)^2,
    q(s) = s (beta t + 1) / (t (beta s + 1)),
    F_n(q) = sum_{l=0}^{n} (n + 1 - l)(l + 1) q^l.

It comes from the coefficient of z^m in the Duhamel solution for
E[z^{n_x} n(n - 1)], divided by P{n_x = m}.  With no migration (S = 1) it
reduces to m (m - 1), which the tests use as an exact check.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import integrate

from .errors import (
    BoxTooSmall,
    InsufficientSamples,
    OverflowGuard,
    ResolutionError,
    StepFailure,
    ToleranceNotReached,
)
from .gw_analytics import GWLaw, gf_total
from .lattice_kernel import (
    _kernel_1d_many,
    kernel_value,
    minimal_grid,
    torus_frequencies,
    torus_l_hat,
)

M_MAX = 10**6
Q_DIRECT_BAND = 1e-4


class MomentKind(Enum):
    M1 = "M1"
    M1_CONDITIONAL = "M1Conditional"
    M2_TOTAL = "M2Total"
    M2_CONDITIONAL = "M2Conditional"


@dataclass(frozen=True)
class MomentEstimate:
    kind: MomentKind
    t: float
    x: tuple
    y: tuple
    value: float
    m: int | None = None
    method: dict = field(default_factory=dict)

    def csv_row(self):
        return (self.kind.value, self.t, *self.x, *self.y,
                "" if self.m is None else self.m, self.value,
                ";".join(f"{k}={v}" for k, v in sorted(self.method.items())))


@dataclass(frozen=True)
class Level:
    k: int


@dataclass(frozen=True)
class Survival:
    pass


@dataclass(frozen=True)
class Point:
    y: tuple


@dataclass(frozen=True)
class SiteSet:
    sites: tuple


def _pt(v, d=None):
    if np.isscalar(v):
        v = (int(v),)
    v = tuple(int(c) for c in v)
    if d is not None and len(v) != d:
        raise ValueError(f"point {v} is not {d}-dimensional")
    return v


class TimePotential:
    """gamma(t, z) = -2 beta (1 - z) / (1 + beta t - beta t z) and its integral."""

    def __init__(self, beta, z):
        if not 0.0 <= z <= 1.0:
            raise ValueError("z must lie in [0, 1]")
        self.beta = float(beta)
        self.z = float(z)

    def __call__(self, t):
        b, z = self.beta, self.z
        return -2.0 * b * (1.0 - z) / (1.0 + b * t - b * t * z)

    def integral(self, t):
        return -2.0 * math.log1p(self.beta * t * (1.0 - self.z))

    def exp_integral(self, t):
        return (self.beta * t + 1.0 - self.beta * t * self.z) ** -2


def _grid_coords(M, d):
    c = np.rint(np.fft.fftfreq(M) * M).astype(np.int64)
    return np.stack(np.meshgrid(*([c] * d), indexing="ij"))


def _window(full, R):
    idx = np.arange(-R, R + 1)
    return full[np.ix_(*([idx] * full.ndim))]


def delta_initial(point):
    """Initial datum equal to 1 at ``point`` and 0 elsewhere, for duhamel_solve."""
    point = np.asarray(_pt(point))

    def phi(coords):
        return np.all(coords == point.reshape((-1,) + (1,) * (coords.ndim - 1)), axis=0).astype(float)

    return phi


def duhamel_solve(jd, potential, source, t, window_radius, initial=None,
                  grid_points_per_dim=None, s_nodes=256):
    """Solve du/dt = L u + gamma(t) u + f(t, x) up to time t on the torus grid.

    Parameters
    ----------
    potential : callable or None
        gamma(s).  If it has an ``integral`` method that is used for
        int_0^s gamma, otherwise the integral is computed with ``quad``.
    source : callable or None
        f(s, coords) -> array broadcastable to the grid; ``coords`` has shape
        (d, M, ..., M) holding centred integer coordinates.
    initial : callable or None
        phi(coords) -> array; zero when omitted.
    s_nodes : int
        Midpoint nodes for the time convolution.

    Returns
    -------
    ndarray of shape (2R+1,)*d, entry [z + R] holding u(t, z).
    """
    d = jd.dim
    M = minimal_grid(jd, t) if grid_points_per_dim is None else int(grid_points_per_dim)
    if window_radius > M // 2:
        raise ResolutionError(f"window radius {window_radius} exceeds M/2 = {M // 2}")
    if potential is None:
        def G(s):
            return 0.0
    elif hasattr(potential, "integral"):
        G = potential.integral
    else:
        def G(s):
            return integrate.quad(potential, 0.0, s, limit=200)[0] if s > 0 else 0.0

    coords = _grid_coords(M, d)
    lam = torus_l_hat(jd, M)
    acc = np.zeros((M,) * d, dtype=complex)
    if initial is not None:
        acc += np.exp(t * lam) * np.fft.fftn(np.broadcast_to(initial(coords), (M,) * d))
    if source is not None and t > 0:
        h = t / s_nodes
        for j in range(s_nodes):
            s = (j + 0.5) * h
            f = np.broadcast_to(np.asarray(source(s, coords), dtype=float), (M,) * d)
            acc += h * math.exp(-G(s)) * np.exp((t - s) * lam) * np.fft.fftn(f)
    u = math.exp(G(t)) * np.fft.ifftn(acc).real
    return _window(u, window_radius)


# -- first moments ---------------------------------------------------------------

def first_moment(jd, t, x, y):
    """m1(t, x, y) = E n(t, x, y) = p(t, y - x)."""
    x, y = _pt(x, jd.dim), _pt(y, jd.dim)
    z = tuple(b - a for a, b in zip(x, y))
    val = kernel_value(jd, t, z)
    return MomentEstimate(MomentKind.M1, float(t), x, y, min(max(val, 0.0), 1.0),
                          method={"source": "torus-fft"})


def conditional_first_moment(jd, bp, t, x, y, conditioning):
    """E[n(t,x,y) | n_x(t) = k] = k p  or  E[n(t,x,y) | n_x(t) > 0] = (beta t + 1) p."""
    base = first_moment(jd, t, x, y)
    if isinstance(conditioning, Level):
        if conditioning.k < 0:
            raise ValueError("level must be nonnegative")
        factor, m = float(conditioning.k), conditioning.k
    elif isinstance(conditioning, Survival):
        factor, m = bp.beta * t + 1.0, None
    else:
        raise TypeError(f"unknown conditioning {conditioning!r}")
    return MomentEstimate(MomentKind.M1_CONDITIONAL, float(t), base.x, base.y,
                          factor * base.value, m,
                          method={"conditioning": type(conditioning).__name__})


# -- total second moment -------------------------------------------------------------

def _sites_phase_power(sites, M, d, first_index=None):
    """|sum_y exp(i theta.y)|^2 on the grid (or one first-axis slab)."""
    k = torus_frequencies(M)
    shape = (M,) * (d - (first_index is not None))
    acc = np.zeros(shape, dtype=complex)
    for y in sites:
        ph = 0.0
        axes = range(d)
        if first_index is not None:
            ph = k[first_index] * y[0]
            axes = range(1, d)
        for j, ax in enumerate(axes):
            sh = [1] * len(shape)
            sh[j] = M
            ph = ph + (k * y[ax]).reshape(sh)
        acc = acc + np.exp(1j * ph)
    return np.abs(acc) ** 2


def _total_m2_on_grid(jd, beta, t, sites, M):
    d = jd.dim
    total = 0.0
    slabs = range(M) if d >= 2 else [None]
    for i in slabs:
        lam = torus_l_hat(jd, M, first_index=i) if i is not None else torus_l_hat(jd, M)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lam == 0.0, 2.0 * t, np.expm1(2.0 * t * lam) / lam)
        total += float(np.sum(ratio * _sites_phase_power(sites, M, d, i)))
    return beta * total / M ** d


def second_moment_total(jd, bp, t, target, rtol=1e-9, max_grid=1024):
    """sum_x E[n(t, x, G)(n(t, x, G) - 1)] for a finite site set G.

    Evaluated as beta times the torus average of
    (exp(2 t l_hat) - 1) / l_hat * |sum_{y in G} exp(i theta.y)|^2,
    the removable singularity at l_hat = 0 replaced by its limit 2t.  For a
    single point this equals beta * int_0^{2t} p(u, 0) du, which tends to
    beta * G_0(0,0) for transient walks.
    """
    if isinstance(target, Point):
        sites = (_pt(target.y, jd.dim),)
    elif isinstance(target, SiteSet):
        sites = tuple(_pt(s, jd.dim) for s in target.sites)
        if not sites:
            raise ValueError("empty site set")
    else:
        raise TypeError(f"unknown target {target!r}")
    if t == 0:
        return MomentEstimate(MomentKind.M2_TOTAL, 0.0, (), sites[0], 0.0,
                              method={"M": 0})
    reach = max(max(abs(c) for c in s) for s in sites)
    M = max(minimal_grid(jd, 2.0 * t), 4 * reach + 4)
    M += M % 2
    prev = _total_m2_on_grid(jd, bp.beta, t, sites, M)
    while 2 * M <= max_grid:
        M *= 2
        cur = _total_m2_on_grid(jd, bp.beta, t, sites, M)
        if abs(cur - prev) <= rtol * abs(cur):
            return MomentEstimate(MomentKind.M2_TOTAL, float(t), (), sites[0], cur,
                                  method={"M": M, "sites": len(sites)})
        prev = cur
    raise ToleranceNotReached(f"total second moment not converged at M={M}")


# -- conditional second moment -------------------------------------------------------------

def lsum(q, m):
    """F_{m-2}(q) = sum_{l=0}^{m-2} (m - 1 - l)(l + 1) q^l for q in [0, 1].

    Rational closed form away from q = 1, direct summation inside the band
    |1 - q| < 1e-4 where the closed form cancels catastrophically.
    """
    q = np.asarray(q, dtype=float)
    n = m - 2
    if n < 0:
        return np.zeros_like(q)
    out = np.empty_like(q)
    near = np.abs(1.0 - q) < Q_DIRECT_BAND
    far = ~near
    if np.any(far):
        qf = q[far]
        with np.errstate(divide="ignore"):
            qn2 = np.where(qf > 0, np.exp((n + 2) * np.log(np.where(qf > 0, qf, 1.0))), 0.0)
        num = (n + 1) - (n + 3) * qf + (n + 3) * qn2 - (n + 1) * qn2 * qf
        out[far] = num / (1.0 - qf) ** 3
    if np.any(near):
        ell = np.arange(n + 1, dtype=float)
        coef = (n + 1 - ell) * (ell + 1)
        out[near] = [np.polynomial.polynomial.polyval(qq, coef) for qq in q[near]]
    return out


def _s_chunks(n, M, d, budget=2**22):
    return max(1, budget // (M ** d))


def spatial_sum(jd, t, s, x, y, power=2, M=None):
    """sum_v p(t - s, x - v) p(s, v - y)^power for an array of s in [0, t].

    Computed with transform-domain products on the torus grid.  With
    ``power=1`` it collapses to p(t, x - y) by Chapman-Kolmogorov.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x, y = _pt(x, jd.dim), _pt(y, jd.dim)
    delta = tuple(a - b for a, b in zip(x, y))
    reach = max(abs(c) for c in delta)
    if M is None:
        M = max(minimal_grid(jd, t), 2 * reach + 2)
        M += M % 2
    laws = jd.axis_laws
    if laws is not None:
        out = np.ones_like(s)
        for (jd1, rate), dc in zip(laws, delta):
            out *= _spatial_sum_1d(jd1, rate, t, s, dc, power, M)
        return out
    return _spatial_sum_nd(jd, t, s, delta, power, M)


def _spatial_sum_1d(jd1, rate, t, s, dc, power, M):
    k = torus_frequencies(M)
    lam = rate * (-2.0 * np.sin(0.5 * np.outer(k, jd1.offsets[:, 0])) ** 2 @ jd1.weights)
    phase = np.exp(1j * k * dc)
    out = np.empty_like(s)
    step = _s_chunks(len(s), M, 1)
    for a in range(0, len(s), step):
        sl = s[a:a + step]
        ps = _kernel_1d_many(jd1, rate, sl, M) ** power
        g = np.fft.fft(ps, axis=-1) * np.exp(np.outer(t - sl, lam))
        out[a:a + step] = (g @ phase).real / M
    return out


def _spatial_sum_nd(jd, t, s, delta, power, M):
    d = jd.dim
    lam = torus_l_hat(jd, M)
    k = torus_frequencies(M)
    phase = np.ones((M,) * d, dtype=complex)
    for ax, dc in enumerate(delta):
        sh = [1] * d
        sh[ax] = M
        phase = phase * np.exp(1j * k * dc).reshape(sh)
    axes = tuple(range(1, d + 1))
    out = np.empty_like(s)
    step = _s_chunks(len(s), M, d)
    for a in range(0, len(s), step):
        sl = s[a:a + step]
        ps = np.fft.ifftn(np.exp(sl.reshape((-1,) + (1,) * d) * lam), axes=axes).real ** power
        g = np.fft.fftn(ps, axes=axes) * np.exp((t - sl).reshape((-1,) + (1,) * d) * lam)
        out[a:a + step] = (g * phase).sum(axis=axes).real / M ** d
    return out


def _m2_midpoint(jd, beta, t, delta_xy, m, n, M):
    x, y = delta_xy
    h = t / n
    s = (np.arange(n) + 0.5) * h
    S = spatial_sum(jd, t, s, x, y, 2, M)
    q = s * (beta * t + 1.0) / (t * (beta * s + 1.0))
    integrand = S / (beta * s + 1.0) ** 2 * lsum(q, m)
    return 2.0 * beta * (beta * t + 1.0) / (beta * t) * h * integrand.sum()


def conditional_second_moment(jd, bp, t, x, y, m, s_grid=2048, rtol=5e-3,
                              max_nodes=2**17):
    """M2(m, t, x, y) = E[n(t,x,y)(n(t,x,y) - 1) | n_x(t) = m].

    Composite midpoint rule on a uniform s-grid, doubled until two successive
    values agree to ``rtol``.
    """
    x, y = _pt(x, jd.dim), _pt(y, jd.dim)
    if m > M_MAX:
        raise OverflowGuard(f"m = {m} exceeds {M_MAX}")
    meta = {"s_grid": 0, "M": 0}
    if m < 2 or t == 0:
        return MomentEstimate(MomentKind.M2_CONDITIONAL, float(t), x, y, 0.0, m, meta)
    if bp.beta == 0:
        raise ValueError("n_x(t) = m >= 2 has probability zero without branching")
    reach = max(abs(a - b) for a, b in zip(x, y))
    M = max(minimal_grid(jd, t), 2 * reach + 2)
    M += M % 2
    n = s_grid
    prev = _m2_midpoint(jd, bp.beta, t, (x, y), m, n, M)
    while 2 * n <= max_nodes:
        n *= 2
        cur = _m2_midpoint(jd, bp.beta, t, (x, y), m, n, M)
        if abs(cur - prev) <= rtol * abs(cur):
            return MomentEstimate(MomentKind.M2_CONDITIONAL, float(t), x, y, float(cur), m,
                                  {"s_grid": n, "M": M})
        prev = cur
    raise ToleranceNotReached(f"M2 quadrature not converged with {n} nodes")


# -- growth orders ------------------------------------------------------------------------

@dataclass(frozen=True)
class GrowthOrder:
    exponent: float
    log_flag: bool
    ratios: tuple
    log_pattern: tuple
    log_pattern_deviation: float
    power_residual: float
    log_residual: float


def growth_order_fit(samples, log_resid_tol=5e-3):
    """Classify the growth of ``value(t)`` from geometrically spaced samples.

    ``exponent`` is the least-squares slope of log(value) against log(t).
    ``log_flag`` is set when value is affine in ln t with positive slope and
    that model fits better than the power law, i.e. the successive ratios
    behave like 1 + ln(rho) / (ln t + c), which approaches 1 + ln(rho) / ln t,
    instead of staying at a constant rho**exponent.  ``log_pattern_deviation``
    is the largest gap between observed ratios and 1 + ln(rho) / ln t itself.
    """
    pts = sorted((float(t), float(v)) for t, v in samples)
    if len(pts) < 4:
        raise InsufficientSamples(f"need at least 4 samples, got {len(pts)}")
    t = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(t <= 1) or np.any(v <= 0):
        raise ValueError("need t > 1 and positive values")
    lt = np.log(t)
    slope, icept = np.polyfit(lt, np.log(v), 1)
    power_fit = np.exp(icept + slope * lt)
    c1, c0 = np.polyfit(lt, v, 1)
    log_fit = c0 + c1 * lt
    rms = lambda fit: float(np.sqrt(np.mean(((fit - v) / v) ** 2)))
    p_res, l_res = rms(power_fit), rms(log_fit)
    ratios = v[1:] / v[:-1]
    pattern = 1.0 + np.log(t[1:] / t[:-1]) / lt[:-1]
    flag = bool(c1 > 0 and l_res < p_res and l_res < log_resid_tol)
    return GrowthOrder(float(slope), flag, tuple(ratios), tuple(pattern),
                       float(np.max(np.abs(ratios - pattern))), p_res, l_res)


# -- nonlinear generating-function field -------------------------------------------------

@dataclass(frozen=True)
class GeneratingFieldState:
    z: float
    z1: float
    y: tuple
    box_radius: int
    time: float
    values: np.ndarray = field(repr=False)

    def at(self, x):
        x = _pt(x, len(self.y))
        idx = tuple(a - b + self.box_radius for a, b in zip(x, self.y))
        if any(i < 0 or i > 2 * self.box_radius for i in idx):
            raise IndexError(f"{x} outside the solved box")
        return float(self.values[idx])


def gf_field_solve(jd, bp, z, z1, y, t_end, box_radius, rtol=1e-10, atol=1e-13):
    """Integrate du/dt = L u + beta (u - 1)^2 for u(t, x) = E z^{n_x} z1^{n(t,x,y)}.

    The box [y - R, y + R]^d carries the unknowns; cells beyond it are frozen
    at the spatially constant solution phi(t, z) (the total-size generating
    function), which is what the true field looks like far from y.  RK45
    with adaptive steps.

    Raises
    ------
    BoxTooSmall
        If the box violates R >= 6 sqrt(kappa t_end) + support diameter, or the
        outermost box layer ends up more than 1e-8 away from phi(t_end, z).
    StepFailure
        If the integrator gives up.
    """
    if not (0.0 <= z <= 1.0 and 0.0 <= z1 <= 1.0):
        raise ValueError("z and z1 must lie in [0, 1]")
    d = jd.dim
    y = _pt(y, d)
    r = jd.support_radius
    need = 6.0 * math.sqrt(jd.kappa * t_end) + 2 * r
    if box_radius < need:
        raise BoxTooSmall(f"box radius {box_radius} < required {need:.2f}")
    side = 2 * box_radius + 1
    shape = (side,) * d
    beta, kappa = bp.beta, jd.kappa
    u0 = np.full(shape, float(z))
    u0[(box_radius,) * d] = z * z1
    inner = tuple(slice(r, r + side) for _ in range(d))
    shifts = [(tuple(slice(r + c, r + c + side) for c in off), w) for off, w in jd.entries]

    def far(t):
        return float(gf_total(GWLaw(bp, t), z))

    def rhs(t, flat):
        u = flat.reshape(shape)
        padded = np.full((side + 2 * r,) * d, far(t))
        padded[inner] = u
        lu = -u.copy()
        for sl, w in shifts:
            lu += w * padded[sl]
        return (kappa * lu + beta * (u - 1.0) ** 2).reshape(-1)

    sol = integrate.solve_ivp(rhs, (0.0, float(t_end)), u0.reshape(-1), method="RK45",
                              rtol=rtol, atol=atol)
    if sol.status != 0:
        raise StepFailure(sol.message)
    u = np.clip(sol.y[:, -1].reshape(shape), 0.0, 1.0)
    ref = far(t_end)
    edge = np.ones(shape, dtype=bool)
    edge[tuple(slice(1, side - 1) for _ in range(d))] = False
    dev = float(np.max(np.abs(u[edge] - ref)))
    if dev > 1e-8:
        raise BoxTooSmall(f"boundary layer deviates by {dev:.2e} from the far field")
    return GeneratingFieldState(float(z), float(z1), y, int(box_radius), float(t_end), u)
