"""Log-modified nonlinearities and short/long-range threshold integrals.

F(u) = F_L(|u|) + F_S(|u|) with

    F_L(a) = mu_L a^{4/n} log(R + 1/a)
    F_S(a) = mu_S a^{4/n} (log(R + 1/a))^theta

and F(0) = 0 by continuity.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from .errors import NoAdmissibleR, QuadratureFailure

DEFAULT_DELTA0 = 0.01
#: theta-tilde values on which admissibility of R is checked
THETA_GRID = np.linspace(0.0, 1.0, 11)


def _log_R_inv(a, R):
    """log(R + 1/a) for a > 0, without overflow for tiny a or huge R."""
    return np.logaddexp(math.log(R), -np.log(a))


def _admissibility_expr(t, R, delta0, theta):
    ell = _log_R_inv(t, R)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        second = theta / (R * t + 1.0) * ell ** (theta - 1.0)
    return delta0 * ell**theta - np.where(theta == 0, 0.0, second)


def is_admissible_R(R: float, delta0: float, theta_tilde: float) -> bool:
    """Whether ``inf_{t>0} [delta0 l^th - th/(Rt+1) l^(th-1)] >= 0``, ``l = log(R+1/t)``.

    Decided on a log-spaced grid over ``[1e-12 / R, 1e12]``, refined by
    golden-section search around the grid minimum, together with the limits
    at ``t -> 0+`` and ``t -> inf``.
    """
    if R <= 0 or not 0 < delta0 < 1 or not 0 <= theta_tilde <= 1:
        raise ValueError("need R > 0, 0 < delta0 < 1, 0 <= theta_tilde <= 1")
    if theta_tilde == 0:
        return True
    if R < 1:
        # log(R + 1/t) < 0 for large t: the power is undefined
        return False
    # t -> 0+: the first term dominates and diverges to +inf.
    # t -> inf: l -> log R; limit delta0 (log R)^th if R > 1, else sign(delta0 - th) * 0+.
    if R == 1 and delta0 < theta_tilde:
        return False

    # the negative term lives near t ~ 1/R, so the grid reaches down to 1e-12/R
    lo = -12 * math.log(10) - max(0.0, math.log(R))
    hi = 12 * math.log(10)
    logt = np.linspace(lo, hi, int((hi - lo) / (24 * math.log(10) / 2400)) + 1)
    vals = _admissibility_expr(np.exp(logt), R, delta0, theta_tilde)
    k = int(np.argmin(vals))
    best = vals[k]
    if 0 < k < logt.size - 1:
        f = lambda s: float(_admissibility_expr(math.exp(s), R, delta0, theta_tilde))
        res = minimize_scalar(f, bracket=(logt[k - 1], logt[k], logt[k + 1]), method="golden",
                              tol=1e-10)
        best = min(best, res.fun)
    return bool(best >= 0)


def min_admissible_R(delta0: float = DEFAULT_DELTA0, tol: float = 1e-6,
                     thetas=THETA_GRID, check_monotone: bool = True) -> float:
    """Smallest R (to relative tolerance ``tol``) admissible for every theta-tilde.

    Bisection in ``log R`` over ``[1, 1e300]``.  The returned value makes
    ``a -> a^delta0 (log(R + 1/a))^theta`` nondecreasing; with
    ``check_monotone`` this is confirmed on a sample grid.
    """
    if not 0 < delta0 < 1:
        raise ValueError("delta0 must lie in (0, 1)")
    ok = lambda R: all(is_admissible_R(R, delta0, th) for th in thetas)
    lo, hi = 0.0, 300 * math.log(10)
    if not ok(math.exp(hi)):
        raise NoAdmissibleR(f"no admissible R up to 1e300 for delta0={delta0}")
    if ok(1.0):
        return 1.0
    while hi - lo > math.log1p(tol):
        mid = 0.5 * (lo + hi)
        if ok(math.exp(mid)):
            hi = mid
        else:
            lo = mid
    R = math.exp(hi)
    if check_monotone:
        a = np.geomspace(1e-12, 1e6, 1000)
        for th in thetas:
            g = a**delta0 * _log_R_inv(a, R) ** th
            if np.any(np.diff(g) < -1e-12 * np.abs(g[1:])):
                raise NoAdmissibleR(f"monotonicity check failed at theta={th}")
    return R


@dataclass(frozen=True)
class NonlinearityParams:
    """Coefficients of F = F_L + F_S.

    ``R`` is checked for admissibility at ``delta0`` on construction unless
    ``check_R=False``.  Use :meth:`with_min_R` to pick the smallest
    admissible ``R``.
    """

    mu_L: float = 1.0
    mu_S: float = 0.0
    theta: float = 0.0
    R: float = 1.0
    delta0: float = DEFAULT_DELTA0
    n: int = 1
    check_R: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.theta < 1:
            raise ValueError("theta must lie in [0, 1)")
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")
        if self.n not in (1, 2, 3):
            raise ValueError("n must be 1, 2 or 3")
        if not self.R > 0:
            raise ValueError("R must be positive")
        if self.check_R:
            bad = [th for th in THETA_GRID if not is_admissible_R(self.R, self.delta0, th)]
            if bad:
                raise ValueError(f"R={self.R:g} is not admissible at delta0={self.delta0} "
                                 f"(fails for theta_tilde={bad[0]:g})")

    @classmethod
    def with_min_R(cls, mu_L=1.0, mu_S=0.0, theta=0.0, delta0=DEFAULT_DELTA0, n=1):
        return cls(mu_L, mu_S, theta, min_admissible_R(delta0), delta0, n, check_R=False)

    @property
    def power(self) -> float:
        return 4.0 / self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("check_R")
        return d


def _powerlog(a, params: NonlinearityParams, expo: float):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("amplitude must be nonnegative")
    pos = a > 0
    # below 1e-300 the power underflows to 0 anyway; the clip keeps 1/a finite
    safe = np.where(pos, np.maximum(a, 1e-300), 1.0)
    p = params.power
    lead = safe * safe if p == 2 else (safe * safe) ** 2 if p == 4 else safe**p
    ell = np.log(params.R + 1.0 / safe)
    val = lead * (ell if expo == 1.0 else ell**expo)
    out = np.where(pos, val, 0.0)
    return out if out.ndim else float(out)


def eval_FL(a, params: NonlinearityParams):
    """Long-range term ``mu_L a^{4/n} log(R + 1/a)``; zero at ``a = 0``."""
    return params.mu_L * _powerlog(a, params, 1.0)


def eval_FS(a, params: NonlinearityParams):
    """Short-range term ``mu_S a^{4/n} (log(R + 1/a))^theta``; zero at ``a = 0``."""
    return params.mu_S * _powerlog(a, params, params.theta)


def eval_F(a, params: NonlinearityParams):
    return eval_FL(a, params) + eval_FS(a, params)


def unit_FL(a, params: NonlinearityParams):
    """F_L with unit coefficient."""
    return _powerlog(a, params, 1.0)


# ----------------------------------------------------------------------------
# threshold integrals


class Verdict(str, Enum):
    CONVERGING = "Converging"
    DIVERGING = "Diverging"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class ThresholdReport:
    verdict: Verdict
    partial_integrals: list  # (T, value)
    tail_estimate: float
    tail_fit: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({
            "verdict": self.verdict.value,
            "ladder": [[float(T), float(v)] for T, v in self.partial_integrals],
            "tail_estimate": None if not math.isfinite(self.tail_estimate) else self.tail_estimate,
            "tail_fit": self.tail_fit,
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ThresholdReport":
        d = json.loads(text)
        tail = d["tail_estimate"]
        return cls(Verdict(d["verdict"]), [tuple(x) for x in d["ladder"]],
                   math.inf if tail is None else tail, d["tail_fit"])


def classify_threshold(decay: Callable, F: Callable, s_range=(math.e, 1e300),
                       divergence_bound: float = 1e6, n_ladder: int = 48,
                       converge_p: float = 0.1, diverge_slack: float = 0.03) -> ThresholdReport:
    """Classify ``int_{s0}^inf F(decay(s)) ds`` as converging or diverging.

    Partial integrals are taken on a ladder of ``T`` with ``log T``
    geometrically spaced, each panel by adaptive Gauss-Kronrod quadrature in
    the variable ``log s``.  The growth of the partial integrals is fitted as
    ``dI/d(log L) ~ K L^{-p} exp(beta log(L)/L)`` with ``L = log T``:

    * ``p >= converge_p``: Converging, tail ``~ K (log T)^{-p} / p``;
    * ``p <= diverge_slack`` (log-log growth or faster) or any partial
      integral above ``divergence_bound``: Diverging;
    * otherwise Inconclusive.
    """
    s0, S = map(float, s_range)
    if not s0 > 1 or not S > s0:
        raise ValueError("need 1 < s0 < S_max")
    lam = np.geomspace(math.log(s0), math.log(S), n_ladder + 1)

    def h(L):
        s = math.exp(L)
        v = F(decay(s)) * s
        if not math.isfinite(v) or v < 0:
            raise QuadratureFailure(f"integrand is {v} at s=exp({L:.6g})")
        return v

    total = 0.0
    ladder = []
    for a, b in zip(lam[:-1], lam[1:]):
        val, err, *_ = quad(h, a, b, epsabs=0.0, epsrel=1e-10, limit=200, full_output=1)
        if not math.isfinite(val):
            raise QuadratureFailure(f"panel [{a:.4g}, {b:.4g}] returned {val}")
        total += val
        ladder.append((math.exp(b), total))
        if total > divergence_bound:
            return ThresholdReport(Verdict.DIVERGING, ladder, math.inf,
                                   {"reason": "bound", "bound": divergence_bound})

    vals = np.array([v for _, v in ladder])
    inc = np.diff(np.concatenate([[0.0], vals]))
    dloglam = np.diff(np.log(lam))
    deriv = inc / dloglam
    mid = np.exp(0.5 * (np.log(lam[:-1]) + np.log(lam[1:])))
    tail = slice(len(deriv) // 2, None)
    d, m = deriv[tail], mid[tail]
    if np.all(d == 0):
        return ThresholdReport(Verdict.CONVERGING, ladder, 0.0, {"reason": "zero tail"})
    if np.any(d <= 0):
        return ThresholdReport(Verdict.INCONCLUSIVE, ladder, math.nan, {"reason": "nonpositive increments"})
    # log(1/a) of a power-log decay expands as c1 log s + c2 log log s, which
    # puts a (log L)/L correction on top of the pure power in L = log s
    A = np.column_stack([np.ones_like(m), np.log(m), np.log(m) / m])
    coef, *_ = np.linalg.lstsq(A, np.log(d), rcond=None)
    slope = float(coef[1])
    resid = float(np.sqrt(np.mean((A @ coef - np.log(d)) ** 2)))
    p = -slope
    fit = {"slope": slope, "p": p, "log_K": float(coef[0]), "beta": float(coef[2]), "rms": resid}
    if p >= converge_p:
        tail_est = float(np.exp(coef[0]) * lam[-1] ** (-p) / p)
        return ThresholdReport(Verdict.CONVERGING, ladder, tail_est, fit)
    if p <= diverge_slack:
        return ThresholdReport(Verdict.DIVERGING, ladder, math.inf, fit)
    return ThresholdReport(Verdict.INCONCLUSIVE, ladder, math.nan, fit)


def power_decay(n: int = 1, log_power: float | None = None):
    """``s -> s^{-n/4} (log s)^{-q}``; default ``q = n/2`` (the dispersive rate)."""
    q = n / 2 if log_power is None else log_power
    return lambda s: s ** (-n / 4) * math.log(s) ** (-q)
