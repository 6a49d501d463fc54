"""Time-dependent oscillator coefficient sigma(t) and its fundamental solutions.

The fundamental pair solves ``zeta'' + sigma(t) zeta = 0`` with
``zeta1(0) = 1, zeta1'(0) = 0`` and ``zeta2(0) = 0, zeta2'(0) = 1``.  For the
critical models sigma(t) = 1/(4 t^2) outside ``|t| <= r0``, where
``y1 = |t|^{1/2}`` and ``y2 = |t|^{1/2} log|t|`` span the solutions, so the
pair is an exact linear combination of them there.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import IllConditioned, IntegrationFailure, RootNotBracketed

#: x tan(x) at the matching point when zeta1 has no y2 component.
MATCHING_TARGET = -0.5
#: alternative target; the matched zeta1 then keeps a y2 component
ALT_MATCHING_TARGET = -2.0


class SigmaKind(str, Enum):
    ZERO = "zero"
    CONSTANT = "constant"
    CANONICAL = "canonical"
    MATCHED = "matched"


@dataclass(frozen=True)
class SigmaModel:
    """Piecewise coefficient of the harmonic potential.

    Use the constructors :meth:`zero`, :meth:`constant`, :meth:`canonical` and
    :meth:`matched` rather than building instances directly.
    """

    kind: SigmaKind
    r0: float = 10.0
    alpha: float = 0.0
    smooth: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    smooth_spec: Optional[dict] = None

    @classmethod
    def zero(cls, r0: float = 10.0) -> "SigmaModel":
        return cls(SigmaKind.ZERO, r0=r0)

    @classmethod
    def constant(cls, alpha: float, r0: float = 10.0) -> "SigmaModel":
        return cls(SigmaKind.CONSTANT, r0=r0, alpha=float(alpha))

    @classmethod
    def canonical(cls, r0: float, smooth, smooth_spec: Optional[dict] = None) -> "SigmaModel":
        """sigma = smooth(t) for |t| <= r0 and 1/(4 t^2) beyond.

        ``smooth`` is a vectorised callable or a number (constant inner part).
        """
        if np.isscalar(smooth):
            value = float(smooth)
            smooth_spec = smooth_spec or {"form": "constant", "value": value}
            fn = lambda t, v=value: np.full_like(np.asarray(t, dtype=float), v)
        else:
            fn = smooth
        return cls(SigmaKind.CANONICAL, r0=float(r0), smooth=fn, smooth_spec=smooth_spec)

    @classmethod
    def matched(cls, r0: float = 10.0, alpha: Optional[float] = None,
                 target: float = MATCHING_TARGET) -> "SigmaModel":
        """alpha^2 on ``|t| <= r0``, 1/(4t^2) outside; alpha from the matching root by default."""
        if alpha is None:
            alpha, _ = solve_matching(r0, target=target)
        return cls(SigmaKind.MATCHED, r0=float(r0), alpha=float(alpha))

    @property
    def critical(self) -> bool:
        return self.kind in (SigmaKind.CANONICAL, SigmaKind.MATCHED)

    @property
    def even(self) -> bool:
        if self.kind is SigmaKind.CANONICAL:
            t = np.linspace(0.0, self.r0, 33)
            return bool(np.allclose(self.smooth(t), self.smooth(-t), rtol=1e-14, atol=0))
        return True

    def __call__(self, t):
        return eval_sigma(self, t)

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "r0": self.r0}
        if self.kind in (SigmaKind.CONSTANT, SigmaKind.MATCHED):
            out["alpha"] = self.alpha
        if self.kind is SigmaKind.CANONICAL:
            out["smooth"] = self.smooth_spec
        return out


def eval_sigma(model: SigmaModel, t):
    """Evaluate sigma(t); vectorised over ``t``."""
    t = np.asarray(t, dtype=float)
    kind = model.kind
    if kind is SigmaKind.ZERO:
        out = np.zeros_like(t)
    elif kind is SigmaKind.CONSTANT:
        out = np.full_like(t, model.alpha**2)
    else:
        inner = np.abs(t) <= model.r0
        with np.errstate(divide="ignore"):
            out = np.where(inner, 0.0, 0.25 / np.where(inner, 1.0, t * t))
        if kind is SigmaKind.MATCHED:
            out = np.where(inner, model.alpha**2, out)
        else:
            out = np.where(inner, model.smooth(np.where(inner, t, 0.0)), out)
    return out if out.ndim else float(out)


def solve_matching(r0: float, target: float = MATCHING_TARGET) -> tuple[float, float]:
    """Inner frequency alpha and outer coefficient c22 for the matched model.

    Returns the alpha with ``x = alpha r0`` the root of ``x tan x = target`` in
    ``(pi/2, pi)``, and ``c22`` from continuity of zeta2 and zeta2' at r0.

    With the default target -1/2 the matched zeta1 has no ``|t|^{1/2} log|t|``
    component.  ``target=-2`` gives the alternative form of the
    condition, which does not cancel that component.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    f = lambda x: x * math.tan(x) - target
    lo, hi = math.pi / 2 + 1e-12, math.pi - 1e-15
    if not f(lo) * f(hi) < 0:
        raise RootNotBracketed(f"x tan x = {target} has no root in (pi/2, pi)")
    x = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    alpha = x / r0
    c22 = math.sqrt(r0) * math.cos(x) - 0.5 * math.sin(x) / (alpha * math.sqrt(r0))
    if abs(c22) < 1e-12:
        raise RootNotBracketed("matching root gives c22 = 0")
    return alpha, c22


def _basis(t):
    """y1, y1', y2, y2' at ``t`` (|t| > 0)."""
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    s = np.sign(t)
    sq = np.sqrt(a)
    lg = np.log(a)
    return sq, s * 0.5 / sq, sq * lg, s * (0.5 * lg + 1.0) / sq


def _match(t0: float, z: float, dz: float) -> tuple[float, float]:
    y1, dy1, y2, dy2 = (float(v) for v in _basis(t0))
    return tuple(np.linalg.solve([[y1, y2], [dy1, dy2]], [z, dz]))


def _rhs(model):
    def rhs(t, y):
        s = eval_sigma(model, t)
        return [y[1], -s * y[0], y[3], -s * y[2]]
    return rhs


#: local tolerance handed to the integrator per unit of requested global tolerance
LOCAL_SAFETY = 1e-3


def _zeta2_event(t, y):
    return y[2]


@dataclass(frozen=True)
class FundamentalPair:
    """Evaluable zeta1, zeta2 and derivatives, with their asymptotic data.

    ``coeffs[+1]`` and ``coeffs[-1]`` hold ``((c11, c12), (c21, c22))`` for
    critical models: ``zeta_j = c_j1 y1 + c_j2 y2`` on that side of r0.
    """

    model: SigmaModel
    t_max: float
    tol: float
    methods: dict
    coeffs: Optional[dict]
    r_assume: float
    lower_bound_c: float
    zeros: tuple
    segments: tuple = field(default=(), repr=False)

    # ------------------------------------------------------------------
    def evaluate(self, t):
        """Return ``(zeta1, dzeta1, zeta2, dzeta2)`` at ``t`` (vectorised)."""
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        out = np.empty((4,) + t.shape)
        kind = self.model.kind
        a = self.model.alpha
        r0 = self.model.r0

        numeric = np.zeros(t.shape, dtype=bool)
        if self.methods["inner"] == "numeric":
            numeric |= np.abs(t) <= (r0 if self.model.critical else np.inf)
        if self.methods["outer"] == "numeric":
            numeric |= np.abs(t) > r0
        closed = ~numeric

        if np.any(numeric):
            tn = t[numeric]
            if np.any(np.abs(tn) > self.t_max * (1 + 1e-12)):
                raise ValueError(f"t outside the integrated domain [-{self.t_max}, {self.t_max}]")
            out[:, numeric] = self._numeric(tn)

        if np.any(closed):
            tc = t[closed]
            vals = np.empty((4,) + tc.shape)
            if kind is SigmaKind.ZERO:
                vals[0], vals[1], vals[2], vals[3] = 1.0, 0.0, tc, 1.0
            else:
                inner = np.abs(tc) <= r0 if self.model.critical else np.ones(tc.shape, bool)
                if np.any(inner):
                    ti = tc[inner]
                    vals[0, inner] = np.cos(a * ti)
                    vals[1, inner] = -a * np.sin(a * ti)
                    vals[2, inner] = np.sin(a * ti) / a
                    vals[3, inner] = np.cos(a * ti)
                outer = ~inner
                if np.any(outer):
                    to = tc[outer]
                    y1, dy1, y2, dy2 = _basis(to)
                    for side in (1, -1):
                        m = np.sign(to) == side
                        if not np.any(m):
                            continue
                        (c11, c12), (c21, c22) = self.coeffs[side]
                        idx = np.flatnonzero(outer)[m]
                        vals[0, idx] = c11 * y1[m] + c12 * y2[m]
                        vals[1, idx] = c11 * dy1[m] + c12 * dy2[m]
                        vals[2, idx] = c21 * y1[m] + c22 * y2[m]
                        vals[3, idx] = c21 * dy1[m] + c22 * dy2[m]
            out[:, closed] = vals
        return tuple(v[0] if scalar else v for v in out)

    def _numeric(self, t):
        res = np.empty((4,) + t.shape)
        done = np.zeros(t.shape, bool)
        for lo, hi, sol in self.segments:
            m = (~done) & (t >= min(lo, hi) - 1e-14) & (t <= max(lo, hi) + 1e-14)
            if np.any(m):
                res[:, m] = sol(t[m])
                done |= m
        if not np.all(done):
            raise ValueError("time not covered by numeric segments")
        return res

    def zeta1(self, t):
        return self.evaluate(t)[0]

    def dzeta1(self, t):
        return self.evaluate(t)[1]

    def zeta2(self, t):
        return self.evaluate(t)[2]

    def dzeta2(self, t):
        return self.evaluate(t)[3]

    # ------------------------------------------------------------------
    @property
    def r0(self) -> float:
        return self.model.r0

    def _limit1(self, side):
        if self.coeffs is None:
            return math.nan
        (c11, c12), _ = self.coeffs[side]
        if abs(c12) > 1e-8 * max(1.0, abs(c11)):
            return math.copysign(math.inf, c12)
        return c11

    @property
    def c1_plus(self) -> float:
        """lim zeta1/|t|^{1/2} as t -> +inf (infinite if zeta1 carries a y2 part)."""
        return self._limit1(1)

    @property
    def c1_minus(self) -> float:
        return self._limit1(-1)

    @property
    def c2_plus(self) -> float:
        return math.nan if self.coeffs is None else self.coeffs[1][1][1]

    @property
    def c2_minus(self) -> float:
        return math.nan if self.coeffs is None else self.coeffs[-1][1][1]

    def maslov_index(self, t: float) -> int:
        """Number of zeros of zeta2 strictly between 0 and ``t``."""
        if t == 0:
            return 0
        count = sum(1 for z in self.zeros if (0 < z < t) or (t < z < 0))
        if self.model.kind is SigmaKind.CONSTANT and self.methods["inner"] == "closed":
            count = int(math.floor(abs(t) * self.model.alpha / math.pi - 1e-15))
        return count


def _outer_zero(c21, c22, r0, side):
    """Zero of c21 + c22 log|t| beyond r0 on ``side`` (or None)."""
    if c22 == 0:
        return None
    tz = math.exp(-c21 / c22)
    return side * tz if tz > r0 else None


def solve_fundamental(model: SigmaModel, t_max: float = 1e3, tol: float = 1e-10,
                      method: str = "auto") -> FundamentalPair:
    """Build the fundamental pair on ``[-t_max, t_max]``.

    ``method="auto"`` uses closed forms wherever the model admits them and
    an adaptive Dormand-Prince 8(5,3) integrator with dense output elsewhere.
    The integrator runs at local tolerance ``tol * LOCAL_SAFETY`` so that the
    accumulated error over a few hundred time units stays below ``10 * tol``.
    ``method="numeric"`` integrates everywhere (restarting exactly at
    ``+-r0``), which is useful to cross-check the closed forms.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not np.isfinite(t_max) or t_max <= 0:
        raise ValueError("t_max must be finite and positive")
    kind = model.kind
    r0 = model.r0
    if method not in ("auto", "numeric"):
        raise ValueError(method)

    if method == "numeric":
        methods = {"inner": "numeric", "outer": "numeric"}
    elif kind is SigmaKind.CANONICAL:
        methods = {"inner": "numeric", "outer": "closed"}
    else:
        methods = {"inner": "closed", "outer": "closed"}

    segments = []
    zeros = []
    if "numeric" in methods.values():
        reach = t_max if method == "numeric" else r0
        rhs = _rhs(model)
        for side in (1, -1):
            breaks = [0.0]
            if model.critical and r0 < reach:
                breaks.append(side * r0)
            breaks.append(side * reach)
            y = np.array([1.0, 0.0, 0.0, 1.0])
            for lo, hi in zip(breaks[:-1], breaks[1:]):
                loc = max(tol * LOCAL_SAFETY, 200 * np.finfo(float).eps)
                sol = solve_ivp(rhs, (lo, hi), y, method="DOP853", rtol=loc, atol=loc,
                                dense_output=True, events=_zeta2_event)
                if sol.status != 0:
                    raise IntegrationFailure(sol.message)
                segments.append((lo, hi, sol.sol))
                zeros.extend(z for z in sol.t_events[0] if abs(z) > 1e-12)
                y = sol.y[:, -1]

    coeffs = None
    if model.critical:
        coeffs = {}
        for side in (1, -1):
            t0 = side * r0
            if kind is SigmaKind.MATCHED:
                a = model.alpha
                z1, dz1 = math.cos(a * t0), -a * math.sin(a * t0)
                z2, dz2 = math.sin(a * t0) / a, math.cos(a * t0)
            else:
                sol = next(s for lo, hi, s in segments if abs(hi) == r0 and np.sign(hi) == side)
                z1, dz1, z2, dz2 = sol(t0)
            coeffs[side] = (_match(t0, z1, dz1), _match(t0, z2, dz2))

    # inner zeros of zeta2 for closed-form regions
    if methods["inner"] == "closed" and kind is SigmaKind.MATCHED:
        k = 1
        while k * math.pi / model.alpha < r0:
            zeros.extend([k * math.pi / model.alpha, -k * math.pi / model.alpha])
            k += 1
    r_assume = r0
    if coeffs is not None:
        if methods["outer"] == "closed":
            for side in (1, -1):
                (_, _), (c21, c22) = coeffs[side]
                z = _outer_zero(c21, c22, r0, side)
                if z is not None:
                    zeros.append(z)
        # past the last zero by one unit of log t: |c21 + c22 log t| >= |c22|
        for side in (1, -1):
            (_, _), (c21, c22) = coeffs[side]
            z = _outer_zero(c21, c22, r0, side)
            if z is not None:
                r_assume = max(r_assume, math.e * abs(z))
    zeros = tuple(sorted(set(round(z, 12) for z in zeros)))

    pair = FundamentalPair(model=model, t_max=float(t_max), tol=float(tol), methods=methods,
                           coeffs=coeffs, r_assume=r_assume, lower_bound_c=math.nan,
                           zeros=zeros, segments=tuple(segments))
    hi = t_max if methods["outer"] == "numeric" else max(t_max, 10 * r_assume)
    if hi > r_assume:
        probes = np.geomspace(r_assume * (1 + 1e-9), hi, 400)
        probes = np.concatenate([probes, -probes])
        c = 0.9 * float(np.min(np.abs(pair.zeta2(probes))))
    else:
        c = math.nan
    object.__setattr__(pair, "lower_bound_c", c)
    return pair


def wronskian(pair: FundamentalPair, t):
    """zeta1 zeta2' - zeta1' zeta2 (identically 1 for exact solutions)."""
    z1, dz1, z2, dz2 = pair.evaluate(t)
    return z1 * dz2 - dz1 * z2


def matching_residuals(pair: FundamentalPair) -> np.ndarray:
    """Residuals of the four continuity conditions at ``+r0`` and ``-r0``.

    Written in the normalisation of the coefficient equations (values scaled
    by ``r0^{1/2}``, derivatives by ``2 r0^{1/2}``); shape ``(2, 4)``.
    """
    m = pair.model
    if m.kind is not SigmaKind.MATCHED:
        raise ValueError("matching conditions are defined for the matched model")
    a, r0 = m.alpha, m.r0
    sq, lg = math.sqrt(r0), math.log(r0)
    out = np.empty((2, 4))
    for row, side in enumerate((1, -1)):
        (c11, c12), (c21, c22) = pair.coeffs[side]
        out[row] = [
            c11 * sq + c12 * sq * lg - math.cos(a * side * r0),
            c21 * sq + c22 * sq * lg - math.sin(a * side * r0) / a,
            c11 + c12 * lg + 2 * c12 + side * 2 * a * sq * math.sin(a * side * r0),
            c21 + c22 * lg + 2 * c22 - side * 2 * sq * math.cos(a * side * r0),
        ]
    return out


@dataclass
class AsymptoticFit:
    """Least-squares coefficients of zeta_j on ``{|t|^{1/2}, |t|^{1/2} log|t|}``."""

    window: tuple
    coeffs: dict  # side -> ((c11, c12), (c21, c22))
    residuals: dict  # side -> (relative residual of zeta1, of zeta2)

    def c1(self, side: int) -> float:
        return self.coeffs[side][0][0]

    def c2(self, side: int) -> float:
        return self.coeffs[side][1][1]


def asymptotic_coeffs(pair: FundamentalPair, fit_window=None, npts: int = 200) -> AsymptoticFit:
    """Fit zeta1, zeta2 on a log-spaced window beyond r0, on both sides of 0."""
    if fit_window is None:
        fit_window = (1e2 * pair.r0, 1e4 * pair.r0)
    lo, hi = map(float, fit_window)
    if lo <= pair.r0:
        raise ValueError("fit window must lie beyond r0")
    if not hi > 10 * lo:
        raise IllConditioned("fit window spans less than a decade")
    t = np.geomspace(lo, hi, npts)
    coeffs, residuals = {}, {}
    for side in (1, -1):
        ts = side * t
        z1, _, z2, _ = pair.evaluate(ts)
        y1, _, y2, _ = _basis(ts)
        A = np.column_stack([y1, y2])
        scale = np.linalg.norm(A, axis=0)
        As = A / scale
        if np.linalg.cond(As) > 1e10:
            raise IllConditioned("basis columns are numerically dependent on this window")
        sol = []
        res = []
        for z in (z1, z2):
            c, *_ = np.linalg.lstsq(As, z, rcond=None)
            c = c / scale
            sol.append(tuple(float(v) for v in c))
            res.append(float(np.linalg.norm(A @ c - z) / max(np.linalg.norm(z), 1e-300)))
        coeffs[side] = tuple(sol)
        residuals[side] = tuple(res)
    return AsymptoticFit(window=(lo, hi), coeffs=coeffs, residuals=residuals)


@dataclass
class AsymptoticsReport:
    passed: bool
    entries: list  # (check name, passed, witness)

    def __str__(self):
        lines = [f"asymptotics {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"  [{'ok' if ok else '!!'}] {name}: {w}" for name, ok, w in self.entries]
        return "\n".join(lines)


def verify_asymptotics(pair: FundamentalPair, probe_grid=None, fit_tol: float = 1e-6) -> AsymptoticsReport:
    """Check the lower bound on |zeta2| and the existence of the limits c_{j,+-}.

    Probes with ``|t| <= r_assume`` are ignored; for critical models
    ``r_assume`` lies past the last zero of zeta2.
    """
    r = pair.r_assume
    if probe_grid is None:
        probe_grid = np.geomspace(r * 1.001, max(100 * r, 1e6), 500)
        probe_grid = np.concatenate([-probe_grid[::-1], probe_grid])
    probes = np.sort(np.asarray(probe_grid, dtype=float))
    probes = probes[np.abs(probes) > r]
    entries = []
    if probes.size < 4:
        return AsymptoticsReport(False, [("probe grid", False, f"fewer than 4 probes beyond {r:g}")])

    z2 = pair.zeta2(probes)
    c = pair.lower_bound_c
    low = np.abs(z2) < c
    ok = not np.any(low) and np.isfinite(c) and c > 0
    entries.append(("|zeta2| >= c", ok,
                    f"c={c:.4g}" if ok else f"min |zeta2|={np.min(np.abs(z2)):.3g} at t={probes[np.argmin(np.abs(z2))]:.6g}"))
    for side in (1, -1):
        zs = z2[np.sign(probes) == side]
        ts = probes[np.sign(probes) == side]
        flips = np.flatnonzero(np.sign(zs[1:]) != np.sign(zs[:-1]))
        entries.append((f"no zero of zeta2 ({'+' if side > 0 else '-'})", flips.size == 0,
                        "none" if flips.size == 0 else f"sign change in [{ts[flips[0]]:.6g}, {ts[flips[0] + 1]:.6g}]"))

    for side in (1, -1):
        ts = np.abs(probes[np.sign(probes) == side])
        if ts.size < 4 or ts.max() < 10 * ts.min():
            entries.append((f"limits ({side:+d})", False, "probes span less than a decade"))
            continue
        try:
            fit = asymptotic_coeffs(pair, (ts.min(), ts.max()), npts=max(ts.size, 50))
        except IllConditioned as exc:
            entries.append((f"limits ({side:+d})", False, str(exc)))
            continue
        (c11, c12), (c21, c22) = fit.coeffs[side]
        r1, r2 = fit.residuals[side]
        sgn = "+" if side > 0 else "-"
        ok1 = r1 <= fit_tol and abs(c12) <= 1e-8 * max(1.0, abs(c11)) and c11 != 0 and np.isfinite(c11)
        ok2 = r2 <= fit_tol and c22 != 0 and np.isfinite(c22)
        w1 = f"c1{sgn}={c11:.6g}" if ok1 else (
            f"zeta1 not in span of y1, y2 (residual {r1:.2g})" if r1 > fit_tol
            else f"zeta1/|t|^(1/2) diverges: y2 coefficient {c12:.3g}")
        w2 = f"c2{sgn}={c22:.6g}" if ok2 else (
            f"zeta2/(|t|^(1/2) log|t|) has no finite limit (residual {r2:.2g})" if r2 > fit_tol
            else "c2 vanishes")
        entries.append((f"c1{sgn} finite and nonzero", ok1, w1))
        entries.append((f"c2{sgn} finite and nonzero", ok2, w2))
    return AsymptoticsReport(all(e[1] for e in entries), entries)


def zeta_table(pair: FundamentalPair, times) -> np.ndarray:
    """Columns ``t, zeta1, zeta2, zeta1', zeta2', wronskian``."""
    t = np.asarray(times, dtype=float)
    z1, dz1, z2, dz2 = pair.evaluate(t)
    return np.column_stack([t, z1, z2, dz1, dz2, z1 * dz2 - dz1 * z2])


def write_zeta_csv(path, pair: FundamentalPair, times) -> None:
    table = zeta_table(pair, times)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "zeta1", "zeta2", "dzeta1", "dzeta2", "wronskian"])
        for row in table:
            w.writerow([repr(float(v)) for v in row])
