"""Grids, unitary transforms, the M and D operators and the factorized propagator."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from critnls.errors import DomainEscape, IllConditioned, SingularTime
from critnls.evolution import integrate_fixed
from critnls.nonlinearity import NonlinearityParams
from critnls.oscillator import SigmaModel, solve_fundamental
from critnls.spectral import (Field, Grid, Side, apply_D, apply_M, auto_out_grid, box_size,
                              dilation_phase, dispersive_fit, fourier, gaussian,
                              inverse_fourier, leibniz_corpus, leibniz_ratio, mdfm_propagate,
                              mdfm_pullback, read_field, sobolev_norm, top_third_fraction,
                              write_field, write_field_csv)

G = Grid(1, 512, 20.0)
LINEAR = NonlinearityParams(mu_L=0.0, mu_S=0.0, check_R=False)


def l2(a, b, grid, space="x"):
    return math.sqrt(grid.cell(space) * np.sum(np.abs(np.asarray(a) - np.asarray(b)) ** 2))


def free_gaussian(grid, t):
    x = grid.x
    return math.pi**-0.25 * (1 + 1j * t) ** -0.5 * np.exp(-x**2 / (2 * (1 + 1j * t)))


@pytest.fixture(scope="module")
def zero_pair():
    return solve_fundamental(SigmaModel.zero(), t_max=100.0)


@pytest.fixture(scope="module")
def mpair():
    return solve_fundamental(SigmaModel.matched(10.0), t_max=1e5)


fields = st.builds(
    lambda w, c, k, amp: gaussian(G, width=w, center=c, k0=k, amplitude=amp),
    st.floats(0.5, 2.0), st.floats(-3, 3), st.floats(-3, 3), st.floats(1e-3, 10))


# --- grid ------------------------------------------------------------------

def test_grid_nodes_symmetric_and_spacing():
    assert G.x[0] == -G.L and G.x[G.N // 2] == 0.0
    assert G.dxi == pytest.approx(math.pi / G.L)
    assert G.xi[G.N // 2] == 0.0
    with pytest.raises(ValueError):
        Grid(1, 24, 1.0)
    with pytest.raises(ValueError):
        Grid(1, 8, 1.0)


def test_field_values_are_read_only():
    f = gaussian(G)
    with pytest.raises(ValueError):
        f.values[0] = 1.0


# --- fourier ---------------------------------------------------------------

def test_gaussian_self_dual():
    F = fourier(gaussian(G))
    assert np.max(np.abs(F.values - math.pi**-0.25 * np.exp(-G.xi**2 / 2))) < 1e-14


def test_spike_has_flat_modulus():
    v = np.zeros(G.N, complex)
    v[G.N // 2 + 37] = 1.0
    F = fourier(Field(G, v))
    mod = np.abs(F.values)
    assert np.ptp(mod) < 1e-15 and mod[0] == pytest.approx(G.dx / math.sqrt(2 * math.pi))


@given(fields)
def test_fourier_round_trip_and_parseval(f):
    F = fourier(f)
    assert F.space == "xi"
    assert F.norm() == pytest.approx(f.norm(), rel=1e-12)
    back = inverse_fourier(F)
    assert l2(back.values, f.values, G) <= 1e-12 * f.norm()


def test_fourier_space_checks():
    with pytest.raises(ValueError):
        fourier(fourier(gaussian(G)))
    with pytest.raises(ValueError):
        inverse_fourier(gaussian(G))


def test_fourier_2d_gaussian():
    g2 = Grid(2, 64, 10.0)
    F = fourier(gaussian(g2))
    ref = math.pi**-0.5 * np.exp(-g2.r2("xi") / 2)
    assert np.max(np.abs(F.values - ref)) < 1e-13


# --- M and D ---------------------------------------------------------------

@given(fields, st.floats(0.1, 100) | st.floats(-100, -0.1))
def test_M_is_unitary(f, tau):
    assert apply_M(f, tau).norm() == pytest.approx(f.norm(), rel=1e-14)


def test_D_at_one_is_phase():
    f = gaussian(G, center=1.0, k0=0.5)
    np.testing.assert_allclose(apply_D(f, 1.0).values, np.exp(-1j * math.pi / 4) * f.values,
                               atol=0, rtol=1e-15)


@pytest.mark.parametrize("tau", [2.0, -2.0, 0.5, 3.7])
def test_D_dilates_gaussian(tau):
    g = Grid(1, 1024, 40.0)
    f = gaussian(g)
    out = apply_D(f, tau)
    ref = dilation_phase(tau, 1) * math.pi**-0.25 * np.exp(-(g.x / tau) ** 2 / 2)
    assert np.max(np.abs(out.values - ref)) < 1e-10
    assert out.norm() == pytest.approx(1.0, abs=1e-10)


def test_D_phase_branches():
    assert dilation_phase(2.0, 1) == pytest.approx(2**-0.5 * np.exp(-1j * math.pi / 4))
    assert dilation_phase(-2.0, 1) == pytest.approx(2**-0.5 * np.exp(1j * math.pi / 4))
    # continuation across one zero: index 3 instead of 1
    assert dilation_phase(2.0, 1, 3) == pytest.approx(-1j * dilation_phase(2.0, 1))


def test_D_domain_escape():
    f = gaussian(G, width=3.0)
    with pytest.raises(DomainEscape):
        apply_D(f, 5.0)
    with pytest.raises(ValueError):
        apply_D(f, 0.0)


# --- MDFM ------------------------------------------------------------------

@pytest.mark.parametrize("t", [0.5, 1.0, 2.0, 4.0])
def test_mdfm_matches_free_gaussian(zero_pair, t):
    g = Grid(1, 2**12, 40.0)
    u = mdfm_propagate(gaussian(g), zero_pair, t)
    assert l2(u.values, free_gaussian(g, t), g) <= 1e-6


@settings(max_examples=15, deadline=None)
@given(st.floats(11.0, 1e4))
def test_mdfm_unitary_matched(t):
    pair = solve_fundamental(SigmaModel.matched(10.0), t_max=1e4)
    g = Grid(1, 1024, 32.0)
    u0 = gaussian(g)
    try:
        u = mdfm_propagate(u0, pair, t, out_grid=auto_out_grid(u0, pair, t))
    except SingularTime:
        return
    assert u.norm() == pytest.approx(1.0, abs=1e-8)


def test_mdfm_matches_split_step_past_a_zero_of_zeta2(mpair):
    # t = 3 r0 lies past the zero of zeta2 at 10.56
    g = Grid(1, 2048, 100.0)
    u0 = gaussian(g)
    ref = integrate_fixed(u0, 30.0, 0.005, SigmaModel.matched(10.0), LINEAR)
    u = mdfm_propagate(u0, mpair, 30.0)
    assert l2(u.values, ref.values, g) <= 1e-4


def test_mdfm_principal_branch_is_wrong_past_the_zero(mpair):
    g = Grid(1, 2048, 100.0)
    u0 = gaussian(g)
    ref = integrate_fixed(u0, 30.0, 0.005, SigmaModel.matched(10.0), LINEAR)
    u = mdfm_propagate(u0, mpair, 30.0, maslov=False)
    assert l2(u.values, ref.values, g) > 1.0


def test_mdfm_singular_time(mpair):
    z = [z for z in mpair.zeros if z > 0][0]
    with pytest.raises(SingularTime):
        mdfm_propagate(gaussian(G), mpair, z)
    with pytest.raises(SingularTime):
        mdfm_propagate(gaussian(G), mpair, 0.0)


@pytest.mark.parametrize("t", [3.0, 50.0, 2e3])
def test_pullback_inverts_propagate(mpair, t):
    g = Grid(1, 1024, 32.0)
    u0 = gaussian(g, center=0.5, k0=0.3)
    u = mdfm_propagate(u0, mpair, t, out_grid=auto_out_grid(u0, mpair, t))
    back = mdfm_pullback(u, mpair, t, g)
    assert l2(back.values, u0.values, g) < 1e-8


def test_two_time_dispersive_bound(mpair):
    # ||U0(t,s) phi||_inf <= (2 pi)^{-1/2} |z1(s)z2(t) - z1(t)z2(s)|^{-1/2} ||phi||_1
    g = Grid(1, 2048, 64.0)
    phi = gaussian(g)
    l1 = math.pi**-0.25 * math.sqrt(2 * math.pi)
    worst = 0.0
    for s in (2.0, 5.0):
        w = mdfm_pullback(phi, mpair, s, g)  # U0(0, s) phi
        z1s, _, z2s, _ = mpair.evaluate(s)
        for t in (8.0, 60.0, 500.0, 5e3):
            u = mdfm_propagate(w, mpair, t, out_grid=auto_out_grid(w, mpair, t))
            z1t, _, z2t, _ = mpair.evaluate(t)
            K = abs(z1s * z2t - z1t * z2s)
            worst = max(worst, u.linf() * K**0.5 * math.sqrt(2 * math.pi) / l1)
    assert 0.1 < worst <= 1 + 1e-6


def test_box_size_rule(mpair):
    g = Grid(1, 1024, 32.0)
    u0 = gaussian(g)
    L = box_size(u0, mpair, 1e3)
    z1, _, z2, _ = mpair.evaluate(1e3)
    H = fourier(apply_M(u0, z2 / z1))
    # mass of |H|^2 beyond rho is at most 1e-8 of the total
    rho = L / (2 * abs(z2))
    outside = np.sum(np.abs(H.values[np.abs(g.xi) > rho]) ** 2) / np.sum(np.abs(H.values) ** 2)
    assert outside <= 1e-8
    inside = np.sum(np.abs(H.values[np.abs(g.xi) > rho - g.dxi]) ** 2) / np.sum(np.abs(H.values) ** 2)
    assert inside > 1e-8


# --- Sobolev norms ---------------------------------------------------------

def test_sobolev_gamma_zero_is_l2():
    f = gaussian(G, center=1.0, k0=1.0, amplitude=0.3)
    for side in Side:
        assert sobolev_norm(f, 0.0, side) == pytest.approx(f.norm(), rel=1e-12)


def test_sobolev_gaussian_reference():
    # mpmath: sqrt(int (1+xi^2)^2 exp(-xi^2) / sqrt(pi)) = sqrt(11/4)
    g = Grid(1, 1024, 30.0)
    assert sobolev_norm(gaussian(g), 2.0) == pytest.approx(1.65831239517769992455746636834, rel=1e-12)
    assert sobolev_norm(gaussian(g), 2.0, Side.POSITION) == pytest.approx(1.65831239517769992,
                                                                          rel=1e-12)


@given(fields, st.floats(0, 3))
def test_sobolev_duality(f, gamma):
    a = sobolev_norm(f, gamma, Side.FREQUENCY)
    b = sobolev_norm(fourier(f).as_position(), gamma, Side.POSITION)
    assert a == pytest.approx(b, rel=1e-12)


@given(fields, st.floats(0, 2), st.floats(0, 2))
def test_sobolev_nondecreasing_in_gamma(f, g1, dg):
    for side in Side:
        assert sobolev_norm(f, g1 + dg, side) >= sobolev_norm(f, g1, side) * (1 - 1e-14)


# --- Leibniz ratio ---------------------------------------------------------

P_LS = NonlinearityParams(mu_L=1.0, mu_S=1.0, theta=0.5, R=1.359140914229523, delta0=0.5)


def test_leibniz_gamma_zero_bounded_by_one():
    for f in leibniz_corpus(G, 20, seed=3):
        for which in "LS":
            assert leibniz_ratio(f, 0.0, P_LS, which) <= 1 + 1e-12


@pytest.mark.parametrize("gamma", [0.75, 1.5, 2.5])
def test_leibniz_small_amplitude_stays_finite(gamma):
    f = gaussian(G, width=1.2, k0=0.5, amplitude=1.0)
    r1 = leibniz_ratio(f, gamma, P_LS, "L")
    r2 = leibniz_ratio(f.replace(values=1e-3 * f.values), gamma, P_LS, "L")
    assert np.isfinite(r1) and np.isfinite(r2)
    assert r2 < 10 * r1


def test_corpus_is_band_limited_and_grid_independent():
    c1 = leibniz_corpus(Grid(1, 256, 32.0), 10, seed=1)
    c2 = leibniz_corpus(Grid(1, 512, 32.0), 10, seed=1)
    for a, b in zip(c1, c2):
        assert top_third_fraction(a) < 1e-12
        np.testing.assert_allclose(a.values, b.values[::2], rtol=1e-13, atol=1e-300)


# --- dispersive fit --------------------------------------------------------

def test_dispersive_fit_exact_power(mpair):
    t = np.geomspace(1e2, 1e5, 30)
    fit = dispersive_fit(t, np.abs(mpair.zeta2(t)) ** -0.5, mpair)
    assert fit.slope_vs_zeta2 == pytest.approx(-0.5, abs=1e-10)


def test_dispersive_fit_synthetic_log_exponent(mpair):
    t = np.geomspace(1e2, 1e5, 30)
    fit = dispersive_fit(t, t**-0.25 * np.log(t) ** -0.5, mpair)
    assert fit.log_exponent == pytest.approx(-0.5, rel=0.1)
    assert fit.slope_vs_t == pytest.approx(-0.25, abs=1e-10)


def test_dispersive_fit_linear_evolution(mpair):
    g = Grid(1, 1024, 32.0)
    u0 = gaussian(g)
    t = np.geomspace(1e2, 1e5, 16)
    sup = [mdfm_propagate(u0, mpair, tt, out_grid=auto_out_grid(u0, mpair, tt)).linf() for tt in t]
    assert dispersive_fit(t, sup, mpair).slope_vs_zeta2 == pytest.approx(-0.5, rel=0.05)


def test_dispersive_fit_short_series(mpair):
    with pytest.raises(IllConditioned):
        dispersive_fit([100.0, 200.0, 300.0, 400.0], [1, 1, 1, 1], mpair)


# --- I/O -------------------------------------------------------------------

def test_field_binary_round_trip(tmp_path):
    f = gaussian(G, center=0.3, k0=1.0).replace(t=12.5)
    write_field(tmp_path / "f.bin", f)
    g = read_field(tmp_path / "f.bin")
    assert g.grid == f.grid and g.t == 12.5 and g.space == "x"
    assert np.array_equal(g.values, f.values)
    header = (tmp_path / "f.bin").read_bytes().split(b"\n", 1)[0]
    assert b'"space": "x"' in header


def test_field_csv(tmp_path):
    write_field_csv(tmp_path / "f.csv", gaussian(G))
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,re,im" and len(lines) == G.N + 1
