"""Periodic-box pseudospectral tools and the MDFM linear propagator.

Conventions
-----------
Fourier transform (unitary)::

    Ff(xi) = (2 pi)^{-n/2} int exp(-i x.xi) f(x) dx

Nodes on each axis are ``x_j = -L + j dx`` with ``dx = 2L/N`` and
``xi_k = (k - N/2) dxi`` with ``dxi = pi/L``; discrete norms carry the
cell volume, so ``||f||_2^2 = dx^n sum |f_j|^2``.

The linear flow of ``i u_t = (-Delta/2 + sigma(t)|x|^2/2) u`` factors as

    U0(t, 0) = M(z2/z2') D(z2) F M(z2/z1),

with ``M(tau) = exp(i|x|^2/(2 tau))`` and ``D(tau)f(x) = (i tau)^{-n/2} f(x/tau)``.
Dilations and evaluations of Fourier integrals at scaled nodes are done
with a chirp-z transform, which evaluates trigonometric sums exactly at
equispaced points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.signal import czt

from .errors import DomainEscape, IllConditioned, SingularTime, UnderResolved

ESCAPE_TOL = 1e-8
#: mass fraction that may be ignored when measuring support and band radii
SUPPORT_TOL = 1e-14
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[-L, L)^n`` with ``N`` points per axis."""

    n: int
    N: int
    L: float

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise ValueError("n must be 1, 2 or 3")
        if self.N < 16 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two and at least 16")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def dxi(self) -> float:
        return math.pi / self.L

    @property
    def xi_max(self) -> float:
        return self.N / 2 * self.dxi

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.N)

    @property
    def xi(self) -> np.ndarray:
        return (np.arange(self.N) - self.N // 2) * self.dxi

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    def axes(self, space: str = "x") -> list:
        """Broadcastable per-axis node arrays."""
        nodes = self.x if space == "x" else self.xi
        out = []
        for ax in range(self.n):
            shp = [1] * self.n
            shp[ax] = self.N
            out.append(nodes.reshape(shp))
        return out

    def r2(self, space: str = "x") -> np.ndarray:
        """``|x|^2`` (or ``|xi|^2``) on the full grid."""
        return sum(a**2 for a in self.axes(space)) + np.zeros(self.shape)

    def cell(self, space: str = "x") -> float:
        return (self.dx if space == "x" else self.dxi) ** self.n

    def to_dict(self) -> dict:
        return {"n": self.n, "N": self.N, "L": self.L}


@dataclass(frozen=True)
class Field:
    """Complex samples on a grid; ``space`` is ``"x"`` or ``"xi"``."""

    grid: Grid
    values: np.ndarray
    space: str = "x"
    t: Optional[float] = None

    def __post_init__(self):
        if self.space not in ("x", "xi"):
            raise ValueError("space must be 'x' or 'xi'")
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def norm(self) -> float:
        return float(np.sqrt(self.grid.cell(self.space) * np.sum(np.abs(self.values) ** 2)))

    def linf(self) -> float:
        return float(np.max(np.abs(self.values)))

    def replace(self, values=None, space=None, t=None, grid=None) -> "Field":
        return Field(self.grid if grid is None else grid,
                     self.values if values is None else values,
                     self.space if space is None else space,
                     self.t if t is None else t)

    def as_position(self) -> "Field":
        """Reinterpret frequency samples as a position field on the dual grid."""
        if self.space == "x":
            return self
        # xi nodes are k dxi - N/2 dxi = -pi N/(2L) + k dxi; the grid with
        # half-width L' = pi N/(2L) has exactly these nodes.
        g = Grid(self.grid.n, self.grid.N, self.grid.xi_max)
        return Field(g, self.values, "x", self.t)

    def __sub__(self, other: "Field") -> "Field":
        _check_same(self, other)
        return self.replace(values=self.values - other.values)

    def __add__(self, other: "Field") -> "Field":
        _check_same(self, other)
        return self.replace(values=self.values + other.values)


def _check_same(a: Field, b: Field):
    if a.grid != b.grid or a.space != b.space:
        raise ValueError("fields live on different grids or spaces")


def from_function(grid: Grid, func, t=None) -> Field:
    """Sample ``func(*axes)`` on the position nodes."""
    vals = func(*grid.axes("x")) + np.zeros(grid.shape)
    return Field(grid, vals, "x", t)


def gaussian(grid: Grid, width: float = 1.0, amplitude: float | None = None,
             center=0.0, k0=0.0) -> Field:
    """``A exp(-|x-c|^2/(2 w^2) + i k0.x)``; unit L2 norm when ``amplitude`` is None."""
    c = np.broadcast_to(np.asarray(center, float), (grid.n,))
    k = np.broadcast_to(np.asarray(k0, float), (grid.n,))
    if amplitude is None:
        amplitude = (math.pi * width**2) ** (-grid.n / 4)

    def f(*xs):
        r2 = sum((x - ci) ** 2 for x, ci in zip(xs, c))
        ph = sum(ki * x for x, ki in zip(xs, k))
        return amplitude * np.exp(-r2 / (2 * width**2) + 1j * ph)

    return from_function(grid, f)


# ----------------------------------------------------------------------------
# transforms


def _sign_vector(N):
    return np.where(np.arange(N) % 2 == 0, 1.0, -1.0)


def _axis_shape(n, ax, N):
    shp = [1] * n
    shp[ax] = N
    return shp


def fourier(f: Field) -> Field:
    """Unitary Fourier transform of a position-space field."""
    if f.space != "x":
        raise ValueError("fourier expects a position-space field")
    g = f.grid
    v = np.asarray(f.values)
    s = _sign_vector(g.N)
    # (-1)^j before and (-1)^(k - N/2) after the DFT realise the node phases
    post = s * (1 if (g.N // 2) % 2 == 0 else -1)
    for ax in range(g.n):
        v = v * s.reshape(_axis_shape(g.n, ax, g.N))
    v = np.fft.fftn(v)
    for ax in range(g.n):
        v = v * post.reshape(_axis_shape(g.n, ax, g.N))
    v = v * (g.dx / math.sqrt(TWO_PI)) ** g.n
    return Field(g, v, "xi", f.t)


def inverse_fourier(F: Field) -> Field:
    if F.space != "xi":
        raise ValueError("inverse_fourier expects a frequency-space field")
    g = F.grid
    v = np.asarray(F.values)
    s = _sign_vector(g.N)
    post = s * (1 if (g.N // 2) % 2 == 0 else -1)
    for ax in range(g.n):
        v = v * post.reshape(_axis_shape(g.n, ax, g.N))
    v = np.fft.ifftn(v) * g.N**g.n
    for ax in range(g.n):
        v = v * s.reshape(_axis_shape(g.n, ax, g.N))
    v = v * (g.dxi / math.sqrt(TWO_PI)) ** g.n
    return Field(g, v, "x", F.t)


def _trig_sum(v, sign, x0, dx, y0, dy, M, band=None):
    """``out[..., k] = sum_j v[..., j] exp(sign i (x0 + j dx)(y0 + k dy))`` along the last axis.

    Targets with ``|y| > band`` are set to zero (they alias in a sum sampled
    at spacing ``dx``).
    """
    N = v.shape[-1]
    j = np.arange(N)
    k = np.arange(M)
    pre = np.exp(sign * 1j * j * dx * y0)
    w = np.exp(sign * 1j * dx * dy)
    out = czt(v * pre, m=M, w=w, a=1.0, axis=-1)
    y = y0 + k * dy
    out = out * np.exp(sign * 1j * x0 * y)
    if band is not None:
        out = np.where(np.abs(y) <= band * (1 + 1e-12), out, 0.0)
    return out


def _separable_sum(v, n, sign, x0, dx, y0, dy, M, band=None):
    for ax in range(n):
        v = np.moveaxis(v, ax, -1)
        v = _trig_sum(v, sign, x0, dx, y0, dy, M, band)
        v = np.moveaxis(v, -1, ax)
    return v


def fourier_at(f: Field, scale: float, out_grid: Grid, sign: int = -1) -> np.ndarray:
    """Evaluate ``(2pi)^{-n/2} int exp(sign i x.eta) f(x) dx`` at ``eta = y/scale``.

    ``y`` runs over the position nodes of ``out_grid``.  Targets beyond the
    Nyquist band of ``f``'s grid return 0.
    """
    g = f.grid
    y0 = -out_grid.L / scale
    dy = out_grid.dx / scale
    vals = _separable_sum(np.asarray(f.values), g.n, sign, -g.L, g.dx, y0, dy, out_grid.N,
                          band=g.xi_max)
    return vals * (g.dx / math.sqrt(TWO_PI)) ** g.n


def apply_M(f: Field, tau: float) -> Field:
    """Multiply by ``exp(i |x|^2 / (2 tau))``."""
    if tau == 0 or not np.isfinite(tau):
        raise ValueError("tau must be finite and nonzero")
    if f.space != "x":
        raise ValueError("apply_M expects a position-space field")
    return f.replace(values=f.values * np.exp(1j * f.grid.r2() / (2 * tau)))


def dilation_phase(tau: float, n: int, phase_index: Optional[int] = None) -> complex:
    """``(i tau)^{-n/2}`` with ``arg(i tau) = pi s / 2``.

    ``s = sign(tau)`` is the principal branch; the continuation of the
    propagator through zeros of ``z2`` uses ``s = sign(t)(1 + 2m)``.
    """
    s = int(np.sign(tau)) if phase_index is None else int(phase_index)
    return abs(tau) ** (-n / 2) * complex(np.exp(-1j * math.pi * n * s / 4))


def mass_outside(values, grid: Grid, radius: float, space: str = "x") -> float:
    """Fraction of ``|values|^2`` at nodes with max-norm coordinate above ``radius``."""
    nodes = grid.axes(space)
    mask = np.zeros(grid.shape, bool)
    for a in nodes:
        mask |= np.abs(a) > radius
    tot = np.sum(np.abs(values) ** 2)
    return float(np.sum(np.abs(values[mask]) ** 2) / tot) if tot > 0 else 0.0


def support_radius(values, grid: Grid, space: str = "x", tol: float = SUPPORT_TOL) -> float:
    """Smallest max-norm radius holding all but ``tol`` of the mass."""
    v2 = np.abs(np.asarray(values)) ** 2
    nodes = grid.x if space == "x" else grid.xi
    r = np.abs(nodes)
    # per-node max-norm radius over all axes
    rr = r.reshape(_axis_shape(grid.n, 0, grid.N))
    for ax in range(1, grid.n):
        rr = np.maximum(rr, r.reshape(_axis_shape(grid.n, ax, grid.N)))
    rr = np.broadcast_to(rr, grid.shape).ravel()
    order = np.argsort(rr)
    cum = np.cumsum(v2.ravel()[order])
    if cum[-1] == 0:
        return 0.0
    k = int(np.searchsorted(cum, (1 - tol) * cum[-1]))
    return float(rr[order][min(k, rr.size - 1)])


def top_third_fraction(F: Field) -> float:
    """Spectral mass fraction with ``|xi| > 2/3 xi_max`` on some axis."""
    if F.space != "xi":
        F = fourier(F)
    return mass_outside(F.values, F.grid, 2.0 / 3.0 * F.grid.xi_max, "xi")


def apply_D(f: Field, tau: float, phase_index: Optional[int] = None,
            escape_tol: float = ESCAPE_TOL) -> Field:
    """``(D(tau) f)(x) = (i tau)^{-n/2} f(x/tau)`` by band-limited resampling."""
    if tau == 0 or not np.isfinite(tau):
        raise ValueError("tau must be finite and nonzero")
    if f.space != "x":
        raise ValueError("apply_D expects a position-space field")
    g = f.grid
    a = abs(tau)
    if a > 1:
        lost = mass_outside(f.values, g, g.L / a)
        if lost > escape_tol:
            raise DomainEscape(f"dilation by {tau:g} pushes {lost:.3g} of the mass out of the box")
    elif a < 1:
        F = fourier(f)
        lost = mass_outside(F.values, g, a * g.xi_max, "xi")
        if lost > escape_tol:
            raise DomainEscape(f"compression by {tau:g} pushes {lost:.3g} of the spectrum past Nyquist")
    if tau == 1 and phase_index is None:
        return f.replace(values=f.values * dilation_phase(1.0, g.n))
    F = fourier(f)
    # interpolant f(y) = (2pi)^{-n/2} int exp(i xi y) Ff(xi) d xi at y = x/tau;
    # the xi nodes form a grid with half-width xi_max and spacing dxi
    y0, dy = -g.L / tau, g.dx / tau
    vals = _separable_sum(np.asarray(F.values), g.n, +1, -g.xi_max, g.dxi, y0, dy, g.N, band=g.L)
    vals = vals * (g.dxi / math.sqrt(TWO_PI)) ** g.n
    return Field(g, vals * dilation_phase(tau, g.n, phase_index), "x", f.t)


# ----------------------------------------------------------------------------
# MDFM propagator


def _zeta_values(pair, t):
    z1, dz1, z2, dz2 = (float(v) for v in pair.evaluate(t))
    scale = max(1.0, abs(t)) ** 0.5
    for name, val in (("zeta2", z2), ("zeta1", z1), ("zeta2'", dz2)):
        if not np.isfinite(val) or abs(val) <= 1e-12 * scale:
            raise SingularTime(f"{name}({t:g}) = {val:g}")
    return z1, dz1, z2, dz2


def phase_index(pair, t: float, maslov: bool = True) -> int:
    """Index ``s`` of the dilation phase at time ``t``; see :func:`dilation_phase`."""
    if not maslov:
        return int(np.sign(pair.zeta2(t)))
    return int(np.sign(t)) * (1 + 2 * pair.maslov_index(t))


def _check_resolved(rho, chirp, band, grid, what):
    need = rho * abs(chirp) + band
    if need > grid.xi_max:
        raise UnderResolved(f"{what}: local frequency {need:.4g} exceeds Nyquist {grid.xi_max:.4g}")


def mdfm_propagate(f: Field, pair, t: float, out_grid: Optional[Grid] = None,
                   maslov: bool = True, escape_tol: float = ESCAPE_TOL) -> Field:
    """``U0(t, 0) f`` via ``M(z2/z2') D(z2) F M(z2/z1)``.

    The output lives on ``out_grid`` (default: the input grid).  The Fourier
    integral is evaluated directly at the dilated nodes ``x/z2``, so the two
    grids may differ by orders of magnitude in extent.

    Raises
    ------
    SingularTime
        if ``z1``, ``z2`` or ``z2'`` vanish at ``t``.
    UnderResolved
        if either chirp aliases on its grid.
    DomainEscape
        if the dilated profile leaves ``out_grid``.
    """
    if f.space != "x":
        raise ValueError("mdfm_propagate expects a position-space field")
    z1, dz1, z2, dz2 = _zeta_values(pair, t)
    g = f.grid
    og = g if out_grid is None else out_grid
    if og.n != g.n:
        raise ValueError("grids differ in dimension")

    rho = support_radius(f.values, g)
    band = support_radius(fourier(f).values, g, "xi")
    _check_resolved(rho, z1 / z2, band, g, "input chirp")
    h = apply_M(f, z2 / z1)
    H = fourier(h)
    rho_G = support_radius(H.values, g, "xi")
    lost = mass_outside(H.values, g, og.L / abs(z2), "xi")
    if lost > escape_tol:
        raise DomainEscape(f"profile at t={t:g} leaves the output box (lost fraction {lost:.3g})")
    out_rho = min(og.L, abs(z2) * rho_G)
    _check_resolved(out_rho, dz2 / z2, rho / abs(z2), og, "output chirp")

    vals = fourier_at(h, z2, og, -1)
    vals = vals * dilation_phase(z2, g.n, phase_index(pair, t, maslov))
    vals = vals * np.exp(1j * og.r2() * dz2 / (2 * z2))
    return Field(og, vals, "x", t)


def mdfm_pullback(u: Field, pair, t: float, profile_grid: Optional[Grid] = None,
                  maslov: bool = True, escape_tol: float = ESCAPE_TOL) -> Field:
    """``U0(0, t) u`` (position space) on ``profile_grid``; inverse of :func:`mdfm_propagate`."""
    if u.space != "x":
        raise ValueError("mdfm_pullback expects a position-space field")
    z1, dz1, z2, dz2 = _zeta_values(pair, t)
    g = u.grid
    pg = g if profile_grid is None else profile_grid
    if pg.n != g.n:
        raise ValueError("grids differ in dimension")

    rho = support_radius(u.values, g)
    band = support_radius(fourier(u).values, g, "xi")
    _check_resolved(rho, dz2 / z2, band, g, "output chirp")
    p = u.replace(values=u.values * np.exp(-1j * g.r2() * dz2 / (2 * z2)))
    # the pulled-back profile has support ~ rho/|z2| in x
    prof_rho = rho / abs(z2) * 1.0
    if prof_rho > pg.L:
        lost_guess = mass_outside(p.values, g, pg.L * abs(z2))
        if lost_guess > escape_tol:
            raise DomainEscape(f"pulled-back profile at t={t:g} leaves the profile box")
    band_p = support_radius(fourier(p).values, g, "xi")
    _check_resolved(min(pg.L, band_p * abs(z2)), z1 / z2, 0.0, pg, "profile chirp")

    # g(x) = c^{-1} |z2|^{-n} (2pi)^{-n/2} int exp(i x y / z2) p(y) dy
    vals = fourier_at(p, z2, pg, +1)
    c = dilation_phase(z2, g.n, phase_index(pair, t, maslov))
    vals = vals / c * abs(z2) ** (-g.n)
    vals = vals * np.exp(-1j * pg.r2() * z1 / (2 * z2))
    return Field(pg, vals, "x", t)


def box_size(u0: Field, pair, t_max: float, margin: float = 2.0) -> float:
    """Half-width needed so that ``U0(t, 0) u0`` fits the box up to ``t_max``.

    ``L >= margin * |z2(t_max)| * rho`` where ``rho`` is the frequency
    support radius of ``F M(z2/z1) u0`` at ``t_max``.
    """
    z1, _, z2, _ = (float(v) for v in pair.evaluate(t_max))
    H = fourier(apply_M(u0, z2 / z1))
    rho = support_radius(H.values, u0.grid, "xi", tol=ESCAPE_TOL)
    return margin * abs(z2) * rho


# ----------------------------------------------------------------------------
# norms and ratios


class Side(str, Enum):
    FREQUENCY = "H^{g,0}"
    POSITION = "H^{0,g}"


def sobolev_norm(f: Field, gamma: float, side: Side = Side.FREQUENCY) -> float:
    """``||(1+|xi|^2)^{g/2} Ff||_2`` (FREQUENCY) or ``||(1+|x|^2)^{g/2} f||_2`` (POSITION)."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if f.space != "x":
        raise ValueError("sobolev_norm expects a position-space field")
    side = Side(side)
    if side is Side.FREQUENCY:
        F = fourier(f)
        w = (1 + f.grid.r2("xi")) ** (gamma / 2)
        return float(np.sqrt(f.grid.cell("xi") * np.sum(np.abs(w * F.values) ** 2)))
    w = (1 + f.grid.r2("x")) ** (gamma / 2)
    return float(np.sqrt(f.grid.cell("x") * np.sum(np.abs(w * f.values) ** 2)))


def leibniz_ratio(f: Field, gamma: float, params, which: str = "L") -> float:
    """``||F(|f|) f||_{g,0} / (F(||f||_inf) ||f||_{g,0})`` with unit coefficient."""
    from .nonlinearity import _powerlog

    expo = {"L": 1.0, "S": params.theta}[which]
    a = np.abs(f.values)
    Ff = _powerlog(a, params, expo)
    num = sobolev_norm(f.replace(values=Ff * f.values), gamma)
    den = float(_powerlog(a.max(), params, expo)) * sobolev_norm(f, gamma)
    return num / den


def leibniz_corpus(grid: Grid, size: int = 50, seed: int = 0, amplitude_range=(1e-3, 1.0)):
    """Reproducible corpus of smooth, band-limited test functions.

    Each member is a sum of 1-3 modulated Gaussians with random centres,
    widths in ``[0.6, 2]``, carrier wavenumbers in ``[-2, 2]`` and phases.
    Parameters and normalisation depend only on ``seed``, so the same
    functions are sampled on refined grids.
    """
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(size):
        k = int(rng.integers(1, 4))
        comps = []
        for _ in range(k):
            comps.append(dict(c=rng.uniform(-4, 4, grid.n), w=rng.uniform(0.6, 2.0),
                              k0=rng.uniform(-2, 2, grid.n), ph=rng.uniform(0, TWO_PI),
                              amp=rng.uniform(0.3, 1.0)))
        scale = math.exp(rng.uniform(*np.log(amplitude_range)))
        specs.append((scale, comps))
    fields = []
    for scale, comps in specs:
        v = np.zeros(grid.shape, complex)
        xs = grid.axes("x")
        for cp in comps:
            r2 = sum((x - c) ** 2 for x, c in zip(xs, cp["c"]))
            ph = sum(kk * x for x, kk in zip(xs, cp["k0"]))
            v = v + cp["amp"] * np.exp(-r2 / (2 * cp["w"] ** 2) + 1j * (ph + cp["ph"]))
        # sum of amplitudes bounds the sup and does not depend on the grid
        v = v * scale / sum(cp["amp"] for cp in comps)
        fields.append(Field(grid, v, "x"))
    return fields


@dataclass
class DispersiveFit:
    slope_vs_zeta2: float
    slope_vs_t: float
    log_exponent: float
    residual_zeta2: float = field(default=0.0)
    residual_joint: float = field(default=0.0)


def dispersive_fit(times, linf, pair, n: int = 1, min_decades: float = 2.0) -> DispersiveFit:
    """Fit ``log||u||_inf`` against ``log|z2|`` and jointly against ``log t, log log t``.

    Only times beyond ``r0`` are used; expected values are ``-n/2``,
    ``-n/4`` and ``-n/2``.
    """
    t = np.abs(np.asarray(times, float))
    y = np.log(np.asarray(linf, float))
    m = t > pair.r0
    t, y = t[m], y[m]
    if t.size < 4 or math.log10(t.max() / t.min()) < min_decades - 1e-9:
        raise IllConditioned(f"series must cover {min_decades} decades beyond r0")
    lz = np.log(np.abs(pair.zeta2(np.asarray(times, float)[m])))
    A = np.column_stack([np.ones_like(lz), lz])
    c1, res1, *_ = np.linalg.lstsq(A, y, rcond=None)
    B = np.column_stack([np.ones_like(t), np.log(t), np.log(np.log(t))])
    if np.linalg.cond(B / np.linalg.norm(B, axis=0)) > 1e8:
        raise IllConditioned("joint design matrix is singular")
    c2, *_ = np.linalg.lstsq(B, y, rcond=None)
    r1 = float(np.sqrt(np.mean((A @ c1 - y) ** 2)))
    r2 = float(np.sqrt(np.mean((B @ c2 - y) ** 2)))
    return DispersiveFit(float(c1[1]), float(c2[1]), float(c2[2]), r1, r2)


# ----------------------------------------------------------------------------
# I/O


def write_field(path, f: Field) -> None:
    """JSON header line, then little-endian interleaved (re, im) doubles."""
    header = {"n": f.grid.n, "N": f.grid.N, "L": f.grid.L, "space": f.space, "t": f.t}
    data = np.ascontiguousarray(f.values, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(data.tobytes())


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        raw = fh.read()
    g = Grid(header["n"], header["N"], header["L"])
    vals = np.frombuffer(raw, dtype="<c16").reshape(g.shape)
    return Field(g, vals, header["space"], header["t"])


def write_field_csv(path, f: Field) -> None:
    if f.grid.n != 1:
        raise ValueError("CSV export is for n = 1")
    nodes = f.grid.x if f.space == "x" else f.grid.xi
    col = "x" if f.space == "x" else "xi"
    np.savetxt(Path(path), np.column_stack([nodes, f.values.real, f.values.imag]),
               delimiter=",", header=f"{col},re,im", comments="", fmt="%.17g")


def auto_out_grid(f: Field, pair, t: float, margin: float = 1.5, N_min: int = 256,
                  N_max: int = 2**20) -> Grid:
    """Smallest power-of-two grid holding ``U0(t, 0) f`` with resolved chirp.

    Half-width ``margin |z2| rho`` with ``rho`` the frequency support of
    ``F M(z2/z1) f``; spacing resolves the local frequency
    ``rho |z2'| + rho_x / |z2|`` with the same margin.
    """
    z1, _, z2, dz2 = (float(v) for v in pair.evaluate(t))
    H = fourier(apply_M(f, z2 / z1))
    rho = support_radius(H.values, f.grid, "xi")
    rho_x = support_radius(f.values, f.grid)
    L = margin * abs(z2) * rho
    band = rho * abs(dz2) + rho_x / abs(z2)
    dx = math.pi / (margin * band)
    N = N_min
    while 2 * L / N > dx and N < N_max:
        N *= 2
    return Grid(f.grid.n, N, L)
