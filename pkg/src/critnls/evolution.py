"""Split-step integration of the full equation

    i u_t = (-Delta/2 + sigma(t)|x|^2/2) u + F(u) u

on a periodic box, with snapshot diagnostics of the interaction profile
``v(t) = U0(0, t) u(t)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.fft as sfft

from .errors import (BlowupDetected, DomainEscape, IllConditioned, MassEscape, SingularTime,
                     SpectralTail)
from .nonlinearity import NonlinearityParams, eval_F
from .oscillator import SigmaModel, eval_sigma
from .spectral import Field, Grid, Side, fourier, mdfm_pullback, sobolev_norm

ESCAPE_ABORT = 1e-6
TAIL_ABORT = 1e-8
BLOWUP_FACTOR = 10.0
#: fraction of the box half-width beyond which mass counts as escaping
ESCAPE_SHELL = 0.9
#: adaptive steps change in multiples of this factor (keeps kinetic multipliers cached)
DT_QUANTUM = 1.01


def gamma_window(n: int) -> tuple[float, float, bool]:
    """Admissible Sobolev index range ``(lo, hi, hi_inclusive)`` for dimension ``n``."""
    if n in (1, 2):
        return n / 2, 1 + 4 / n, False
    return n / 2, 2.0, True


def check_gamma(gamma: float, n: int) -> None:
    lo, hi, incl = gamma_window(n)
    ok = lo < gamma and (gamma <= hi if incl else gamma < hi)
    if not ok:
        raise ValueError(f"gamma={gamma} outside the admissible window for n={n}")


@dataclass(frozen=True)
class SolverConfig:
    """Time-stepping and monitoring parameters.

    Step size is ``dt0 * max(1, t/10)`` when ``adaptive`` (so it grows
    linearly once the potential has decayed); otherwise ``dt0``.  Steps
    are shortened to land on snapshot times and on ``+-r0``.
    """

    dt0: float = 0.01
    t_max: float = 1e3
    epsilon_prime: float = 1e-3
    gamma: float = 1.0
    n: int = 1
    snapshots_per_decade: int = 40
    t_first_snapshot: float = 1.0
    adaptive: bool = True
    store_fields: bool = False
    escape_abort: float = ESCAPE_ABORT
    tail_abort: float = TAIL_ABORT
    blowup_factor: float = BLOWUP_FACTOR
    monitor_every: int = 20

    def __post_init__(self):
        if not self.dt0 > 0:
            raise ValueError("dt0 must be positive")
        if not self.t_max > 0 or not math.isfinite(self.t_max):
            raise ValueError("t_max must be finite and positive")
        if not 0 < self.t_first_snapshot <= self.t_max:
            raise ValueError("t_first_snapshot must lie in (0, t_max]")
        if self.snapshots_per_decade < 1:
            raise ValueError("snapshots_per_decade must be positive")
        check_gamma(self.gamma, self.n)

    def snapshot_times(self) -> np.ndarray:
        dec = math.log10(self.t_max / self.t_first_snapshot)
        k = max(1, int(math.ceil(dec * self.snapshots_per_decade - 1e-9)))
        return np.geomspace(self.t_first_snapshot, self.t_max, k + 1)

    def step_size(self, t: float) -> float:
        """``dt0 max(1, t/10)``, rounded down to a power of 1.01 times ``dt0``."""
        if not self.adaptive or abs(t) <= 10.0:
            return self.dt0
        k = math.floor(math.log(abs(t) / 10.0) / math.log(DT_QUANTUM) + 1e-12)
        return self.dt0 * DT_QUANTUM**k


# ----------------------------------------------------------------------------
# stepping


def _cis(x):
    return np.cos(x) + 1j * np.sin(x)


class _Stepper:
    """Caches grid arrays for repeated Strang steps."""

    def __init__(self, grid: Grid, model: SigmaModel, params: NonlinearityParams):
        self.grid = grid
        self.model = model
        self.params = params
        self.half_r2 = 0.5 * grid.r2("x")
        k = 2 * np.pi * np.fft.fftfreq(grid.N, d=grid.dx)
        kk = np.zeros(grid.shape)
        for ax in range(grid.n):
            shp = [1] * grid.n
            shp[ax] = grid.N
            kk = kk + (k**2).reshape(shp)
        self.half_k2 = 0.5 * kk
        self.linear = params.mu_L == 0 and params.mu_S == 0
        self._kin = {}
        self.axes = tuple(range(grid.n))

    def phase(self, v, s_weight, h):
        """Multiply by ``exp(-i (s_weight |x|^2/2 + h F(|v|)))``."""
        arg = s_weight * self.half_r2
        if not self.linear and h != 0:
            arg = arg + h * eval_F(np.abs(v), self.params)
        return v * _cis(-arg)

    def kinetic(self, v, dt):
        mult = self._kin.get(dt)
        if mult is None:
            if len(self._kin) > 8:
                self._kin.clear()
            mult = self._kin[dt] = _cis(-dt * self.half_k2)
        w = sfft.fftn(v, axes=self.axes)
        w *= mult
        return sfft.ifftn(w, axes=self.axes, overwrite_x=True)

    def sigma_weight(self, t, dt):
        return float(eval_sigma(self.model, t + dt / 2)) * dt / 2

    def __call__(self, v, t, dt):
        sw = self.sigma_weight(t, dt)
        v = self.phase(v, sw, dt / 2)
        v = self.kinetic(v, dt)
        return self.phase(v, sw, dt / 2)


class _FusedRun:
    """Strang steps with adjacent half-phases merged into one.

    The closing half-phase of a step and the opening one of the next are
    both pointwise and see the same modulus, so they commute and combine.
    ``flush`` applies the pending half-phase.
    """

    def __init__(self, stepper: _Stepper, v):
        self.st = stepper
        self.v = v
        self.s_pending = 0.0
        self.h_pending = 0.0

    def step(self, t, dt):
        sw = self.st.sigma_weight(t, dt)
        self.v = self.st.phase(self.v, self.s_pending + sw, self.h_pending + dt / 2)
        self.v = self.st.kinetic(self.v, dt)
        self.s_pending, self.h_pending = sw, dt / 2

    def flush(self):
        if self.h_pending:
            self.v = self.st.phase(self.v, self.s_pending, self.h_pending)
        self.s_pending = self.h_pending = 0.0
        return self.v


def step(u: Field, t: float, dt: float, model: SigmaModel, params: NonlinearityParams) -> Field:
    """One Strang step from ``t`` to ``t + dt``.

    Half potential-plus-F phase, full kinetic step, half phase with F
    re-evaluated.  Every substep is unitary.  A step with ``-dt`` from
    ``t + dt`` undoes the step exactly (up to roundoff).
    """
    if dt == 0:
        raise ValueError("dt must be nonzero")
    if u.space != "x":
        raise ValueError("step expects a position-space field")
    st = _Stepper(u.grid, model, params)
    return Field(u.grid, st(np.asarray(u.values), t, dt), "x", t + dt)


def escape_fraction(values, grid: Grid, shell: float = ESCAPE_SHELL) -> float:
    """Mass fraction with some coordinate beyond ``shell * L``."""
    mask = np.zeros(grid.shape, bool)
    for a in grid.axes("x"):
        mask |= np.abs(a) > shell * grid.L
    tot = np.sum(np.abs(values) ** 2)
    return float(np.sum(np.abs(values[mask]) ** 2) / tot) if tot else 0.0


def spectral_tail(values, grid: Grid) -> float:
    F = np.abs(np.fft.fftn(values)) ** 2
    k = np.abs(np.fft.fftfreq(grid.N) * grid.N)
    mask = np.zeros(grid.shape, bool)
    for ax in range(grid.n):
        shp = [1] * grid.n
        shp[ax] = grid.N
        mask |= (k > grid.N / 3).reshape(shp)
    tot = F.sum()
    return float(F[mask].sum() / tot) if tot else 0.0


# ----------------------------------------------------------------------------
# trajectories

DIAG_COLUMNS = ("t", "l2", "linf", "h_gamma_0", "h_0_gamma", "escape")


@dataclass
class Trajectory:
    """Snapshots and per-snapshot diagnostics of one run.

    ``profiles[k]`` is ``F v(t_k)`` on the profile grid (None where the
    pull-back is unavailable); ``snapshots[k]`` the lab-frame field when
    fields are stored.
    """

    config: SolverConfig
    grid: Grid
    times: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=lambda: {c: [] for c in DIAG_COLUMNS})
    snapshots: list = field(default_factory=list)
    profiles: list = field(default_factory=list)
    steps: list = field(default_factory=list)  # (t, dt) of every step taken
    u_last: Optional[Field] = None
    t_last: float = 0.0
    l2_initial: float = math.nan
    linf_initial: float = math.nan
    meta: dict = field(default_factory=dict)

    def diag(self, name: str) -> np.ndarray:
        return np.asarray(self.diagnostics[name], float)

    def l2_drift(self) -> float:
        l2 = self.diag("l2")
        return float(np.max(np.abs(l2 / self.l2_initial - 1))) if l2.size else 0.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DIAG_COLUMNS)
            for k in range(len(self.times)):
                w.writerow([repr(float(self.diagnostics[c][k])) for c in DIAG_COLUMNS])


def scale_to_epsilon(u0: Field, epsilon_prime: float, gamma: float) -> Field:
    """Rescale ``u0`` so that ``||u0||_{g,0} + ||u0||_{0,g} = epsilon_prime``."""
    size = sobolev_norm(u0, gamma, Side.FREQUENCY) + sobolev_norm(u0, gamma, Side.POSITION)
    return u0.replace(values=u0.values * (epsilon_prime / size))


def data_size(u0: Field, gamma: float) -> float:
    return sobolev_norm(u0, gamma, Side.FREQUENCY) + sobolev_norm(u0, gamma, Side.POSITION)


def _profile_diag(u: Field, pair, t, profile_grid, gamma):
    """``(F v, ||v||_{g,0}, ||v||_{0,g})``, or Nones where unavailable."""
    if pair is None:
        return None, math.nan, math.nan
    try:
        v = mdfm_pullback(u, pair, t, profile_grid)
    except (SingularTime, DomainEscape):
        return None, math.nan, math.nan
    return (fourier(v), sobolev_norm(v, gamma, Side.FREQUENCY),
            sobolev_norm(v, gamma, Side.POSITION))


def evolve(u0: Field, config: SolverConfig, model: SigmaModel, params: NonlinearityParams,
           pair=None, profile_grid: Optional[Grid] = None, t_start: float = 0.0,
           check_data_size: bool = True, size_slack: float = 1e-9,
           resume: Optional[Trajectory] = None) -> Trajectory:
    """Integrate from ``t_start`` to ``config.t_max``.

    Parameters
    ----------
    pair : FundamentalPair, optional
        Enables the profile diagnostics (``F v``, weighted norms of ``v``).
    profile_grid : Grid, optional
        Grid on which ``v`` is represented (default: the lab grid).
    resume : Trajectory, optional
        Continue a previous run from its last state; snapshots before its
        ``t_last`` are not repeated.

    Raises
    ------
    MassEscape, SpectralTail, BlowupDetected
        carrying the partial trajectory.
    """
    if u0.space != "x":
        raise ValueError("evolve expects a position-space field")
    if u0.grid.n != config.n:
        raise ValueError("grid dimension differs from config.n")
    if resume is not None:
        traj = resume
        u = resume.u_last
        t = resume.t_last
        traj.config = config
    else:
        if check_data_size and t_start == 0:
            size = data_size(u0, config.gamma)
            if size > config.epsilon_prime * (1 + size_slack):
                raise ValueError(f"initial data size {size:.6g} exceeds epsilon_prime "
                                 f"{config.epsilon_prime:.6g}")
        traj = Trajectory(config=config, grid=u0.grid)
        u = u0
        t = float(t_start)
        traj.l2_initial = u0.norm()
        traj.linf_initial = u0.linf()
        traj.u_last, traj.t_last = u0, t
    grid = u.grid
    stepper = _Stepper(grid, model, params)
    snaps = [s for s in config.snapshot_times() if s > t * (1 + 1e-12)]
    breaks = [b for b in ((model.r0,) if model.critical else ()) if b > t]
    stops = sorted(set(snaps) | set(breaks) | {config.t_max})
    snapset = set(snaps)
    run = _FusedRun(stepper, np.array(u.values, dtype=complex))
    nstep = 0

    for stop in stops:
        while t < stop:
            dt = config.step_size(t)
            if t + dt >= stop - 1e-12 * max(1.0, stop):
                dt = stop - t
            run.step(t, dt)
            traj.steps.append((t, dt))
            t = stop if abs(t + dt - stop) <= 1e-12 * max(1.0, stop) else t + dt
            nstep += 1
            if config.monitor_every and nstep % config.monitor_every == 0:
                _monitor(run.flush(), grid, t, traj, config, check_tail=False)
        if stop in snapset:
            v = run.flush()
            uf = Field(grid, v, "x", t)
            _record(traj, uf, pair, profile_grid, config)
            _monitor(v, grid, t, traj, config, check_tail=True)
    traj.u_last = Field(grid, run.flush(), "x", t)
    traj.t_last = t
    return traj


def _partial(traj, v, grid, t):
    traj.u_last = Field(grid, v, "x", t)
    traj.t_last = t
    return traj


def _monitor(v, grid, t, traj, config, check_tail):
    esc = escape_fraction(v, grid)
    if esc > config.escape_abort:
        raise MassEscape(f"escape fraction {esc:.3g} at t={t:g}", _partial(traj, v, grid, t))
    linf = float(np.max(np.abs(v)))
    if linf > config.blowup_factor * traj.linf_initial:
        raise BlowupDetected(f"sup norm grew to {linf:.3g} at t={t:g}", _partial(traj, v, grid, t))
    if check_tail:
        tail = spectral_tail(v, grid)
        if tail > config.tail_abort:
            raise SpectralTail(f"top-third spectral mass {tail:.3g} at t={t:g}",
                               _partial(traj, v, grid, t))


def _record(traj, u: Field, pair, profile_grid, config):
    Fv, hg0, h0g = _profile_diag(u, pair, u.t, profile_grid, config.gamma)
    d = traj.diagnostics
    traj.times.append(float(u.t))
    d["t"].append(float(u.t))
    d["l2"].append(u.norm())
    d["linf"].append(u.linf())
    d["h_gamma_0"].append(hg0)
    d["h_0_gamma"].append(h0g)
    d["escape"].append(escape_fraction(u.values, u.grid))
    traj.profiles.append(Fv)
    traj.snapshots.append(u if config.store_fields else None)


def reverse(traj: Trajectory, model: SigmaModel, params: NonlinearityParams) -> Field:
    """Undo every step of ``traj`` in reverse order and return the state at the start."""
    st = _Stepper(traj.grid, model, params)
    v = np.asarray(traj.u_last.values).copy()
    for t, dt in reversed(traj.steps):
        v = st(v, t + dt, -dt)
    t0 = traj.steps[0][0] if traj.steps else traj.t_last
    return Field(traj.grid, v, "x", t0)


def integrate_fixed(u0: Field, t_end: float, dt: float, model: SigmaModel,
                    params: NonlinearityParams, t_start: float = 0.0) -> Field:
    """Fixed-step integration, landing exactly on ``t_end`` (and on ``+-r0``)."""
    st = _Stepper(u0.grid, model, params)
    v = np.asarray(u0.values).copy()
    stops = [t_end]
    if model.critical and t_start < model.r0 < t_end:
        stops = [model.r0, t_end]
    t = t_start
    for stop in stops:
        nsteps = max(1, int(math.ceil((stop - t) / dt - 1e-9)))
        h = (stop - t) / nsteps
        for k in range(nsteps):
            v = st(v, t + k * h, h)
        t = stop
    return Field(u0.grid, v, "x", t_end)


@dataclass
class OrderReport:
    dts: tuple
    differences: tuple
    ratio: float
    order: float


def richardson_order(u0: Field, t_end: float, dt: float, model: SigmaModel,
                     params: NonlinearityParams) -> OrderReport:
    """Self-convergence order from the triplet ``dt, dt/2, dt/4``."""
    sols = [integrate_fixed(u0, t_end, h, model, params) for h in (dt, dt / 2, dt / 4)]
    e1 = (sols[0] - sols[1]).norm()
    e2 = (sols[1] - sols[2]).norm()
    ratio = e1 / e2
    return OrderReport((dt, dt / 2, dt / 4), (e1, e2), ratio, math.log2(ratio))


# ----------------------------------------------------------------------------
# weighted growth


@dataclass
class GrowthFit:
    coefficient: float
    intercept: float
    stderr: float
    npoints: int


def fit_loglog_growth(times, values, t_min: float = math.e) -> GrowthFit:
    """Fit ``log values = a + b log log t``; returns ``b`` as ``coefficient``."""
    t = np.asarray(times, float)
    y = np.asarray(values, float)
    m = (t > max(t_min, math.e)) & np.isfinite(y) & (y > 0)
    t, y = t[m], y[m]
    if t.size < 5 or math.log10(t.max() / t.min()) < 1.0:
        raise IllConditioned("need at least 5 points over one decade of t")
    X = np.log(np.log(t))
    A = np.column_stack([np.ones_like(X), X])
    coef, *_ = np.linalg.lstsq(A, np.log(y), rcond=None)
    r = np.log(y) - A @ coef
    dof = max(1, t.size - 2)
    cov = np.linalg.inv(A.T @ A) * (r @ r) / dof
    return GrowthFit(float(coef[1]), float(coef[0]), float(math.sqrt(cov[1, 1])), int(t.size))


def track_weighted_growth(traj, gamma: Optional[float] = None, t_min: Optional[float] = None,
                          column: str = "h_0_gamma") -> GrowthFit:
    """Growth of ``||U0(0,t)u(t)||_{0,g}`` in ``log log t``.

    ``traj`` is a :class:`Trajectory` or a ``(times, values)`` pair.
    ``gamma`` must match the index the trajectory was recorded with.
    """
    if isinstance(traj, Trajectory):
        if gamma is not None and abs(gamma - traj.config.gamma) > 1e-12:
            raise ValueError("trajectory was recorded with a different gamma")
        times, values = traj.diag("t"), traj.diag(column)
    else:
        times, values = traj
    return fit_loglog_growth(times, values, t_min if t_min is not None else math.e)


def growth_coefficient_series(traj: Trajectory, column: str = "h_0_gamma") -> np.ndarray:
    """``log(||v(t)||/||v(t_first)||)`` for each snapshot with a profile."""
    y = traj.diag(column)
    k = np.flatnonzero(np.isfinite(y))
    return np.log(y / y[k[0]]) if k.size else y


def trend_slope_log(times, values) -> tuple[float, float]:
    """Slope (and standard error) of ``log values`` against ``log t``."""
    t = np.asarray(times, float)
    y = np.log(np.asarray(values, float))
    A = np.column_stack([np.ones_like(t), np.log(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    cov = np.linalg.inv(A.T @ A) * (r @ r) / max(1, t.size - 2)
    return float(coef[1]), float(math.sqrt(cov[1, 1]))
