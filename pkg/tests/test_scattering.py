"""Phase correction, the scattering datum W and its diagnostics.

The pair used here is synthetic, ``zeta1 = t^{1/2}`` and
``zeta2 = t^{1/2} log t``, so the phase integrand is explicit and the
reference phases come from scipy quadrature rather than the ladder rule.
"""

import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from critnls.errors import LadderTooShort, NonMonotoneTime, NotApplicable, PreconditionError
from critnls.nonlinearity import NonlinearityParams
from critnls.scattering import (MODULUS_INTERPRETATION, PhaseConvention, ScatteringRecord,
                                build_record, extract_W, final_residual, phase_integral,
                                profile_compare, read_record_manifest, trend_slope,
                                verify_sup_bounds, write_record)
from critnls.spectral import Field, Grid

G = Grid(1, 64, 10.0)
P = NonlinearityParams(mu_L=1.0, mu_S=0.0, R=math.e, delta0=0.5, check_R=False)


class LogPair:
    r0 = 1.0
    r_assume = math.e

    def zeta1(self, t):
        return np.sqrt(np.abs(t))

    def zeta2(self, t):
        return np.sqrt(np.abs(t)) * np.log(np.abs(t))

    def evaluate(self, t):
        return self.zeta1(t), None, self.zeta2(t), None


PAIR = LogPair()


def theta_oracle(c, t0, t1, params=P):
    """Quadrature of the phase integrand for constant profile modulus ``c``."""
    def f(tau):
        a = c / math.sqrt(PAIR.zeta2(tau))
        return params.mu_L * a**4 * math.log(params.R + 1 / a)
    return quad(f, t0, t1, epsabs=0, epsrel=1e-12, limit=200)[0]


def amplitude():
    return 0.8 * np.exp(-G.xi**2 / 4)


def ladder(t0=math.e, t1=1e4, per_decade=200):
    return np.geomspace(t0, t1, int(round(per_decade * math.log10(t1 / t0))) + 1)


def fake_traj(times, profiles):
    return SimpleNamespace(times=list(times), profiles=list(profiles), grid=G)


def record_for(A, times, params=P, convention=PhaseConvention.SINGLE, phase=None):
    rec = ScatteringRecord(params=params, convention=convention)
    for k, t in enumerate(times):
        vals = A if phase is None else A * np.exp(1j * phase[k])
        phase_integral(rec, t, Field(G, vals.astype(complex), "xi", t), PAIR)
    return rec


# --- phase integral --------------------------------------------------------

def test_phase_matches_quadrature():
    A = amplitude()
    times = ladder()
    rec = record_for(A, times)
    for j in (G.N // 2, G.N // 2 + 5, G.N // 2 + 12):
        assert rec.Theta[-1][j] == pytest.approx(theta_oracle(A[j], times[0], times[-1]), rel=1e-4)
    assert np.all(rec.Theta[0] == 0)


def test_phase_rule_is_second_order():
    A = amplitude()
    j = G.N // 2
    ref = theta_oracle(A[j], math.e, 1e4)
    err = [record_for(A, ladder(per_decade=m)).Theta[-1][j] - ref for m in (100, 200, 400)]
    assert err[0] / err[1] == pytest.approx(4.0, rel=0.05)
    assert err[1] / err[2] == pytest.approx(4.0, rel=0.05)


def test_zero_long_range_coefficient_gives_zero_phase():
    p = NonlinearityParams(mu_L=0.0, mu_S=1.0, theta=0.5, R=math.e, delta0=0.5, check_R=False)
    rec = record_for(amplitude(), ladder(per_decade=10), params=p)
    assert all(np.all(th == 0) for th in rec.Theta)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 3.0), min_size=G.N, max_size=G.N))
def test_phase_nondecreasing(mods):
    rec = record_for(np.array(mods), ladder(per_decade=5))
    d = np.diff(np.array(rec.Theta), axis=0)
    assert np.all(d >= 0)


def test_phase_additive_over_origin():
    A = amplitude()
    times = ladder(per_decade=20)
    traj = fake_traj(times, [Field(G, A.astype(complex), "xi", t) for t in times])
    first = build_record(traj, PAIR, P)
    b = times[40]
    second = build_record(traj, PAIR, P, t_origin=b)
    assert second.t_origin == b
    np.testing.assert_allclose(first.Theta[-1] - first.Theta[40], second.Theta[-1],
                               rtol=1e-13, atol=1e-15)


def test_double_convention_scales_by_mu():
    p = NonlinearityParams(mu_L=1.7, mu_S=0.0, R=math.e, delta0=0.5, check_R=False)
    times = ladder(per_decade=10)
    single = record_for(amplitude(), times, params=p)
    double = record_for(amplitude(), times, params=p, convention=PhaseConvention.DOUBLE)
    np.testing.assert_allclose(double.Theta[-1], 1.7 * single.Theta[-1], rtol=1e-14)


def test_build_record_skips_missing_and_early_profiles():
    times = [2.0, 3.0, 5.0, 10.0]
    profs = [Field(G, amplitude().astype(complex), "xi", t) for t in times]
    profs[2] = None
    rec = build_record(fake_traj(times, profs), PAIR, P)
    assert rec.times == [3.0, 10.0]


def test_non_monotone_time():
    rec = record_for(amplitude(), [5.0, 6.0])
    with pytest.raises(NonMonotoneTime):
        phase_integral(rec, 6.0, Field(G, amplitude().astype(complex), "xi", 6.0), PAIR)


def test_phase_rejects_position_space_and_early_times():
    rec = ScatteringRecord(params=P)
    with pytest.raises(ValueError):
        phase_integral(rec, 5.0, Field(G, amplitude().astype(complex), "x", 5.0), PAIR)
    with pytest.raises(ValueError):
        phase_integral(rec, 0.5, Field(G, amplitude().astype(complex), "xi", 0.5), PAIR)


# --- W ---------------------------------------------------------------------

def exact_modified_record(per_decade=40):
    """Profiles ``A exp(-i Theta_exact(t))``: the corrected profile is constant."""
    A = amplitude()
    times = ladder(per_decade=per_decade)
    cols = [G.N // 2 + j for j in range(-20, 21)]
    theta = np.zeros((len(times), G.N))
    for j in cols:
        acc = 0.0
        for k in range(1, len(times)):
            acc += theta_oracle(A[j], times[k - 1], times[k])
            theta[k, j] = acc
    mask = np.zeros(G.N, bool)
    mask[cols] = True
    A = np.where(mask, A, 0.0)
    return record_for(A, times, phase=-theta), A


@pytest.fixture(scope="module")
def modified():
    return exact_modified_record()


def test_linear_limit_W_is_profile():
    p = NonlinearityParams(mu_L=0.0, mu_S=0.0, check_R=False)
    A = amplitude().astype(complex) * np.exp(0.3j)
    rec = record_for(A, ladder(per_decade=10), params=p)
    res = extract_W(rec)
    np.testing.assert_array_equal(res.W.values, A)
    assert np.all(res.residual_l2 == 0) and np.isnan(res.alpha)


def test_W_of_exactly_modified_profile(modified):
    rec, A = modified
    res = extract_W(rec)
    np.testing.assert_allclose(np.abs(res.W.values), A, atol=1e-15)
    abl = extract_W(rec, ablate=True)
    assert final_residual(res) < 1e-4 * final_residual(abl)
    assert rec.W is res.W and rec.residuals_l2 is res.residual_l2


def test_gauge_covariance(modified):
    rec, _ = modified
    base = extract_W(rec)
    turned = ScatteringRecord(params=P)
    for t, Fv in zip(rec.times, rec.Fv):
        phase_integral(turned, t, Field(G, Fv.values * np.exp(1.1j), "xi", t), PAIR)
    res = extract_W(turned)
    np.testing.assert_allclose(res.W.values, base.W.values * np.exp(1.1j), atol=1e-14)
    np.testing.assert_allclose(res.residual_l2, base.residual_l2, rtol=1e-10, atol=1e-16)


def test_ladder_too_short():
    with pytest.raises(LadderTooShort):
        extract_W(record_for(amplitude(), [5.0, 10.0, 20.0]))
    with pytest.raises(LadderTooShort):
        extract_W(record_for(amplitude(), np.geomspace(5.0, 100.0, 10)))


def test_trend_slope_of_loglog_power():
    t = np.geomspace(30, 1e8, 50)
    s, se = trend_slope(t, 2.0 * np.log(t) ** -0.5)
    assert s == pytest.approx(-0.5, abs=1e-12) and se < 1e-10


# --- profile comparison ----------------------------------------------------

def test_profile_compare_requires_W():
    with pytest.raises(PreconditionError):
        profile_compare(record_for(amplitude(), ladder(per_decade=5)))


def test_profile_compare_zero_W():
    rec = record_for(np.zeros(G.N), ladder(per_decade=5))
    extract_W(rec)
    with pytest.raises(NotApplicable):
        profile_compare(rec)


def test_profile_compare_theta_mode_is_exact():
    # profiles built from the ladder's own phase: the theta model is exact
    A = amplitude()
    times = ladder(per_decade=10)
    theta = record_for(A, times).Theta
    rec = record_for(A, times, phase=-np.array(theta))
    extract_W(rec)
    cmp = profile_compare(rec, mode="theta")
    assert cmp.mask_fraction == np.mean(A > 1e-3 * A.max())
    assert np.max(cmp.errors) < 1e-12
    with pytest.raises(ValueError):
        profile_compare(rec, mode="other")


def test_profile_compare_loglog_mode_decreases(modified):
    rec, _ = modified
    extract_W(rec)
    cmp = profile_compare(rec, mode="loglog")
    # Theta approaches kappa log log t + const, so late errors fall off
    late = cmp.times >= cmp.times[-1] / 10
    assert np.max(cmp.errors[late]) < 0.1 * cmp.errors[0]


# --- bound check preconditions --------------------------------------------

@pytest.mark.parametrize("alpha,gamma,gamma_p", [(0.5, 2.0, 0.4), (0.0, 2.0, 1.0),
                                                 (1.5, 5.0, 1.0), (0.5, 1.4, 1.0)])
def test_sup_bounds_preconditions(alpha, gamma, gamma_p):
    rec = record_for(amplitude(), ladder(per_decade=5))
    traj = SimpleNamespace(grid=G, times=rec.times, diag=lambda name: [1.0] * len(rec.times))
    with pytest.raises(PreconditionError):
        verify_sup_bounds(traj, rec, PAIR, P, alpha, gamma, gamma_p, 1e-3)


# --- persistence -----------------------------------------------------------

@pytest.mark.parametrize("convention", list(PhaseConvention))
def test_record_roundtrip(tmp_path, modified, convention):
    rec, _ = modified
    rec.convention = convention
    extract_W(rec)
    write_record(tmp_path, rec, extra={"note": "x"})
    back = read_record_manifest(tmp_path)
    assert back["times"] == rec.times
    assert back["phase_mu_convention"] == convention.value
    assert back["modulus_interpretation"] == MODULUS_INTERPRETATION
    assert back["note"] == "x"
    np.testing.assert_array_equal(back["W"].values, rec.W.values)
    rows = (tmp_path / "residuals.csv").read_text().splitlines()
    assert rows[0] == "t,residual_l2,residual_sup" and len(rows) == len(rec.times)
    rec.convention = PhaseConvention.SINGLE
