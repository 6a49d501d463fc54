"""Interaction profile, long-range phase correction and the scattering datum W.

The profile is ``Fv(t) = F U0(0, t) u(t)``.  The phase correction is

    Theta(t, xi) = int_{t_origin}^t F_L(|z2(tau)|^{-n/2} |Fv(tau, xi)|) dtau,

and ``Fv(t) exp(i Theta(t))`` converges to ``W`` as ``t -> inf``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import LadderTooShort, NonMonotoneTime, NotApplicable, PreconditionError
from .nonlinearity import NonlinearityParams, _powerlog
from .spectral import (Field, Grid, Side, fourier, inverse_fourier, mdfm_pullback, read_field,
                       sobolev_norm, write_field)

#: how F_L(|Fv|) is read: F_L applied to the modulus of the complex profile
MODULUS_INTERPRETATION = "F_L applied to |F v(tau, xi)|"


class PhaseConvention(str, Enum):
    """Where the long-range coefficient sits in the phase integral.

    ``SINGLE``: the integrand is F_L itself, which carries one factor mu_L.
    ``DOUBLE``: mu_L multiplies an integrand that already contains mu_L.
    """

    SINGLE = "single"
    DOUBLE = "double"


def to_profile(u: Field, pair, t: float, profile_grid: Optional[Grid] = None) -> Field:
    """``F U0(0, t) u`` in frequency space on ``profile_grid``."""
    return fourier(mdfm_pullback(u, pair, t, profile_grid))


@dataclass
class ScatteringRecord:
    """Ladder of profiles with the accumulated phase.

    ``Theta[k]`` is the phase field at ``times[k]``; it vanishes at the
    first ladder time (the origin of the phase integral).
    """

    params: NonlinearityParams
    convention: PhaseConvention = PhaseConvention.SINGLE
    times: list = field(default_factory=list)
    Fv: list = field(default_factory=list)
    Theta: list = field(default_factory=list)
    integrand: list = field(default_factory=list)
    W: Optional[Field] = None
    residuals_l2: Optional[np.ndarray] = None
    residuals_sup: Optional[np.ndarray] = None
    residual_times: Optional[np.ndarray] = None
    alpha: float = math.nan
    alpha_stderr: float = math.nan
    Phi: Optional[np.ndarray] = None
    ablated: bool = False

    @property
    def t_origin(self) -> float:
        return self.times[0] if self.times else math.nan

    def corrected(self, k: int) -> np.ndarray:
        return np.asarray(self.Fv[k].values) * np.exp(1j * self.Theta[k])


def _phase_integrand(Fv: Field, z2: float, params: NonlinearityParams,
                     convention: PhaseConvention) -> np.ndarray:
    n = Fv.grid.n
    a = abs(z2) ** (-n / 2) * np.abs(Fv.values)
    coef = params.mu_L if convention is PhaseConvention.SINGLE else params.mu_L**2
    if coef == 0:
        return np.zeros(Fv.grid.shape)
    return coef * _powerlog(a, params, 1.0)


def phase_integral(record: ScatteringRecord, t: float, Fv: Field, pair) -> np.ndarray:
    """Append ``(t, Fv)`` to ``record`` and advance Theta.

    Trapezoidal rule in ``log tau`` between consecutive ladder times.
    """
    if Fv.space != "xi":
        raise ValueError("profiles must be in frequency space")
    if t <= pair.r0:
        raise ValueError("phase accumulation starts beyond r0")
    if record.times and t <= record.times[-1]:
        raise NonMonotoneTime(f"t={t:g} does not exceed the last ladder time {record.times[-1]:g}")
    f = _phase_integrand(Fv, float(pair.zeta2(t)), record.params, record.convention)
    if not record.times:
        theta = np.zeros(Fv.grid.shape)
    else:
        t0 = record.times[-1]
        h = math.log(t) - math.log(t0)
        theta = record.Theta[-1] + 0.5 * h * (t0 * record.integrand[-1] + t * f)
    record.times.append(float(t))
    record.Fv.append(Fv)
    record.Theta.append(theta)
    record.integrand.append(f)
    return theta


def build_record(traj, pair, params: NonlinearityParams,
                 convention: PhaseConvention = PhaseConvention.SINGLE,
                 t_origin: Optional[float] = None) -> ScatteringRecord:
    """Accumulate the phase over the profiles of a trajectory.

    The origin defaults to ``pair.r_assume``: past it ``|z2|`` is bounded
    below and the integrand is regular.  A different origin changes Theta
    by a constant-in-time field only.
    """
    origin = pair.r_assume if t_origin is None else t_origin
    rec = ScatteringRecord(params=params, convention=PhaseConvention(convention))
    for t, Fv in zip(traj.times, traj.profiles):
        if Fv is None or t < origin or t <= pair.r0:
            continue
        phase_integral(rec, t, Fv, pair)
    return rec


@dataclass
class WResult:
    W: Field
    times: np.ndarray
    residual_l2: np.ndarray
    residual_sup: np.ndarray
    alpha: float
    alpha_stderr: float


def _fit_slope(x, y):
    A = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    dof = max(1, x.size - 2)
    cov = np.linalg.inv(A.T @ A) * (r @ r) / dof
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


def extract_W(record: ScatteringRecord, ablate: bool = False, fit_decades: float = 1.5,
              min_decades: float = 1.5) -> WResult:
    """``W = Fv(t_last) exp(i Theta(t_last))`` with residual series and rate fit.

    ``alpha`` is the slope of ``log r`` against ``log log t`` over the last
    ``fit_decades`` of the ladder, ``t_last`` excluded (the residual
    vanishes there by construction).  With ``ablate`` the phase is dropped.
    """
    if len(record.times) < 4:
        raise LadderTooShort("need at least four ladder times")
    times = np.asarray(record.times)
    if math.log10(times[-1] / times[0]) < min_decades - 1e-9:
        raise LadderTooShort(f"ladder spans less than {min_decades} decades")
    g = record.Fv[-1].grid
    phase = (lambda k: np.ones(g.shape)) if ablate else (lambda k: np.exp(1j * record.Theta[k]))
    W = np.asarray(record.Fv[-1].values) * phase(len(times) - 1)
    cell = g.cell("xi")
    r2 = np.empty(len(times) - 1)
    rs = np.empty(len(times) - 1)
    for k in range(len(times) - 1):
        d = np.asarray(record.Fv[k].values) * phase(k) - W
        r2[k] = math.sqrt(cell * np.sum(np.abs(d) ** 2))
        rs[k] = float(np.max(np.abs(d)))
    tt = times[:-1]
    m = (tt >= times[-1] / 10**fit_decades) & (r2 > 0)
    if m.sum() >= 3:
        alpha, se = _fit_slope(np.log(np.log(tt[m])), np.log(r2[m]))
    else:
        alpha, se = math.nan, math.nan
    Wf = Field(g, W, "xi", float(times[-1]))
    if not ablate:
        record.W, record.residuals_l2, record.residuals_sup = Wf, r2, rs
        record.residual_times, record.alpha, record.alpha_stderr = tt, alpha, se
    return WResult(Wf, tt, r2, rs, alpha, se)


def final_residual(res: WResult, decades: float = 1.0) -> float:
    """Largest residual over the last ``decades`` of the ladder (before ``t_last``)."""
    t_last = res.times[-1] * 1.0
    m = res.times >= t_last / 10**decades
    return float(np.max(res.residual_l2[m]))


def trend_slope(times, values, decades: Optional[float] = None) -> tuple[float, float]:
    """Slope (and standard error) of ``log values`` against ``log log t``."""
    t = np.asarray(times, float)
    y = np.asarray(values, float)
    m = np.isfinite(y) & (y > 0) & (t > math.e)
    if decades is not None:
        m &= t >= t[m].max() / 10**decades
    return _fit_slope(np.log(np.log(t[m])), np.log(y[m]))


@dataclass
class CompareResult:
    times: np.ndarray
    errors: np.ndarray
    mask_fraction: float
    slope: float
    slope_stderr: float
    decreasing: bool
    mode: str


def profile_compare(record: ScatteringRecord, mode: str = "loglog",
                    mask_rel: float = 1e-3, fit_decades: float = 1.0) -> CompareResult:
    """Distance between ``Fv(t)`` and the log-log-modified profile.

    Because ``U0(t, 0)`` and ``F`` are unitary, ``||u(t) - U0(t,0) F^{-1} P(t)||_2``
    equals ``||Fv(t) - P(t)||_2``, which is what is computed, on the mask
    ``|W| > mask_rel max|W|``.  The model profile is

    * ``mode="loglog"``: ``P = W exp(-i kappa log log t + i Phi)`` with
      ``kappa(xi)`` the slope of Theta against ``log log t`` over the last
      ``fit_decades`` and Phi the angle of the time-averaged ratio
      ``Fv exp(i kappa log log t) / W`` over the same window;
    * ``mode="theta"``: ``P = W exp(-i Theta(t) + i Phi)``.

    Raises NotApplicable when the mask is empty.
    """
    if record.W is None:
        raise PreconditionError("extract_W must run first")
    W = np.asarray(record.W.values)
    absW = np.abs(W)
    if absW.max() == 0:
        raise NotApplicable("W vanishes identically")
    mask = absW > mask_rel * absW.max()
    if not mask.any():
        raise NotApplicable("empty support mask")
    times = np.asarray(record.times)
    L = np.log(np.log(times))
    win = times >= times[-1] / 10**fit_decades
    if mode == "loglog":
        Th = np.array([record.Theta[k][mask] for k in range(len(times))])
        Lw = L[win] - L[win].mean()
        kappa = (Lw @ (Th[win] - Th[win].mean(axis=0))) / (Lw @ Lw)
        model_phase = lambda k: kappa * L[k]
    elif mode == "theta":
        model_phase = lambda k: record.Theta[k][mask]
    else:
        raise ValueError(mode)
    ratios = [np.asarray(record.Fv[k].values)[mask] * np.exp(1j * model_phase(k)) / W[mask]
              for k in np.flatnonzero(win)]
    Phi = np.angle(np.mean(ratios, axis=0))
    full = np.zeros(W.shape)
    full[mask] = Phi
    record.Phi = full
    cell = record.W.grid.cell("xi")
    errs = np.empty(len(times))
    for k in range(len(times)):
        P = W[mask] * np.exp(1j * (Phi - model_phase(k)))
        d = np.asarray(record.Fv[k].values)[mask] - P
        errs[k] = math.sqrt(cell * np.sum(np.abs(d) ** 2))
    keep = np.arange(len(times)) < len(times) - 1
    slope, se = _fit_slope(L[keep & (errs > 0)], np.log(errs[keep & (errs > 0)]))
    return CompareResult(times, errs, float(mask.mean()), slope, se, slope < 0, mode)


@dataclass
class BoundReport:
    passed: bool
    C_first: float
    C_second: float
    growth_first: float
    growth_second: float
    times: np.ndarray
    ratio_first: np.ndarray
    ratio_second: np.ndarray

    def __str__(self):
        s = "PASS" if self.passed else "FAIL"
        return (f"{s}: C1={self.C_first:.3g} (late/early {self.growth_first:.3g}), "
                f"C2={self.C_second:.3g} (late/early {self.growth_second:.3g})")


def verify_sup_bounds(traj, record: ScatteringRecord, pair, params: NonlinearityParams,
                    alpha: float, gamma: float, gamma_p: float, epsilon_prime: float,
                    growth_cap: float = 2.0) -> BoundReport:
    """Both sides of the pointwise and profile sup-norm estimates on the ladder.

    First: ``||u||_inf`` against
    ``|z2|^{-n/2} ||Fv||_inf + |z2|^{-n/2} |z1/z2|^alpha ||v||_{0,gamma}``.
    Second: ``||Fv||_inf`` against
    ``eps' + int (|mu_L| I1 + |mu_S| I2) dtau``.
    The fitted constants are the maximal ratios; the check passes when the
    ratio over the last third of the ladder does not exceed ``growth_cap``
    times its maximum over the first two thirds.
    """
    n = record.Fv[0].grid.n if record.Fv else traj.grid.n
    if not gamma_p > n / 2:
        raise PreconditionError("need gamma' > n/2")
    if not 0 < alpha <= 1:
        raise PreconditionError("need 0 < alpha <= 1")
    if not gamma > n / 2 + 2 * alpha:
        raise PreconditionError("need gamma > n/2 + 2 alpha")
    linf = dict(zip(traj.times, traj.diag("linf")))
    times = np.asarray(record.times)
    z1, _, z2, _ = (np.asarray(v) for v in pair.evaluate(times))
    lhs1, rhs1, lhs2, I = [], [], [], []
    for k, t in enumerate(times):
        Fv = record.Fv[k]
        v = inverse_fourier(Fv)
        ng = sobolev_norm(v, gamma, Side.POSITION)
        ngp = sobolev_norm(v, gamma_p, Side.POSITION)
        zz = abs(z2[k]) ** (-n / 2)
        w = abs(z1[k] / z2[k]) ** alpha
        lhs1.append(linf[t])
        rhs1.append(zz * Fv.linf() + zz * w * ng)
        lhs2.append(Fv.linf())
        I1 = w * float(_powerlog(zz * ngp, params, 1.0)) * ng
        I2 = float(_powerlog(zz * ngp, params, params.theta)) * ngp
        I.append(abs(params.mu_L) * I1 + abs(params.mu_S) * I2)
    I = np.asarray(I)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(times) * (I[1:] + I[:-1]))])
    rhs2 = epsilon_prime + integral
    r1 = np.asarray(lhs1) / np.asarray(rhs1)
    r2 = np.asarray(lhs2) / rhs2
    cut = max(1, (2 * len(times)) // 3)

    def growth(r):
        return float(np.max(r[cut:]) / np.max(r[:cut])) if cut < len(r) else 1.0

    g1, g2 = growth(r1), growth(r2)
    ok = bool(np.all(np.isfinite(r1)) and np.all(np.isfinite(r2)) and g1 <= growth_cap
              and g2 <= growth_cap)
    return BoundReport(ok, float(np.max(r1)), float(np.max(r2)), g1, g2, times, r1, r2)


# ----------------------------------------------------------------------------
# persistence


def write_record(directory, record: ScatteringRecord, extra: Optional[dict] = None) -> None:
    """Manifest JSON, binary W and Theta(t_last), residual CSV."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    manifest = {
        "times": [float(t) for t in record.times],
        "t_origin": record.t_origin,
        "alpha_fit": None if not math.isfinite(record.alpha) else record.alpha,
        "alpha_stderr": None if not math.isfinite(record.alpha_stderr) else record.alpha_stderr,
        "phase_mu_convention": record.convention.value,
        "modulus_interpretation": MODULUS_INTERPRETATION,
        "params": record.params.to_dict(),
        "ablated": record.ablated,
    }
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2))
    if record.W is not None:
        write_field(d / "W.bin", record.W)
        g = record.W.grid
        write_field(d / "theta_last.bin", Field(g, record.Theta[-1], "xi", record.times[-1]))
    if record.residuals_l2 is not None:
        with open(d / "residuals.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "residual_l2", "residual_sup"])
            for row in zip(record.residual_times, record.residuals_l2, record.residuals_sup):
                w.writerow([repr(float(x)) for x in row])


def read_record_manifest(directory) -> dict:
    d = Path(directory)
    out = json.loads((d / "manifest.json").read_text())
    if (d / "W.bin").exists():
        out["W"] = read_field(d / "W.bin")
    return out
