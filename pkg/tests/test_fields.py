import numpy as np
import pytest

from debondsim.fields import (
    CompatibilityError, HData, Profile, ProblemData, Toughness,
    f_kernel, g_kernel, kappa_eval, kernel_prefactor, to_h_data,
    u_from_v, v_from_h,
)


# -- profiles ---------------------------------------------------------------

def test_profile_presets_evaluate():
    p = Profile.affine(1.0, -2.0)
    assert p(0.5) == pytest.approx(0.0)
    assert p.deriv(0.3) == pytest.approx(-2.0)
    assert p.cumint(2.0) == pytest.approx(1.0 * 2.0 - 0.5 * 2.0 * 4.0)


def test_poly_profile_derivative_and_integral():
    p = Profile.poly([1.0, 0.0, 3.0])  # 1 + 3 x^2
    xs = np.linspace(0, 1, 11)
    assert np.allclose(p(xs), 1 + 3 * xs ** 2)
    assert np.allclose(p.deriv(xs), 6 * xs)
    assert np.allclose(p.cumint(xs), xs + xs ** 3)


def test_sine_bump_vanishes_at_ends():
    p = Profile.sine_bump(0.7, 1.3)
    assert p(0.0) == pytest.approx(0.0, abs=1e-15)
    assert p(1.3) == pytest.approx(0.0, abs=1e-14)
    assert p.cumint(1.3) == pytest.approx(2 * 0.7 * 1.3 / np.pi)


def test_cached_cumint_matches_closed_form():
    p = Profile(lambda x: np.sin(3.0 * np.asarray(x)), domain=(0.0, 2.0))
    xs = np.linspace(0, 2, 17)
    exact = (1 - np.cos(3 * xs)) / 3.0
    assert np.allclose(p.cumint(xs), exact, atol=1e-12)


def test_linear_samples_exact_pl_integral():
    x = np.array([0.0, 0.5, 1.0, 2.0])
    y = np.array([1.0, 2.0, 0.0, 4.0])
    p = Profile.from_samples(x, y, method="linear")
    assert p.cumint(0.25) == pytest.approx(0.25 * (1.0 + 1.5) / 2)
    assert p.cumint(1.0) == pytest.approx(0.75 + 0.5)
    assert p(0.75) == pytest.approx(1.0)


def test_pchip_samples_have_derivative():
    x = np.linspace(0, 1, 9)
    p = Profile.from_samples(x, x ** 2, method="pchip")
    assert p.deriv(0.5) == pytest.approx(1.0, abs=5e-2)
    assert p.cumint(1.0) == pytest.approx(1.0 / 3.0, abs=1e-3)


# -- problem data and the weighted transform --------------------------------

def make_data(R=2.0, rho0=1.0, alpha=0.0, amp=0.5):
    return ProblemData(R=R, rho0=rho0, alpha=alpha, horizon=1.0,
                       w=Profile.zero(), v0=Profile.sine_bump(amp, rho0),
                       v1=Profile.zero())


def test_compatibility_enforced():
    with pytest.raises(CompatibilityError):
        ProblemData(R=2.0, rho0=1.0, alpha=0.0, horizon=1.0,
                    w=Profile.zero(), v0=Profile.constant(1.0), v1=Profile.zero())


def test_to_h_data_zero():
    hd = to_h_data(ProblemData(R=2.0, rho0=1.0, alpha=1.0, horizon=1.0,
                               w=Profile.zero(), v0=Profile.zero(), v1=Profile.zero()))
    rs = np.linspace(0, 1, 7)
    assert np.allclose(hd.z(rs), 0) and np.allclose(hd.h0(rs), 0) and np.allclose(hd.h1(rs), 0)


def test_h1_formula_weight_only():
    # alpha = 0: h1 = sqrt(R - r) v1
    data = ProblemData(R=2.0, rho0=1.5, alpha=0.0, horizon=1.0,
                       w=Profile.zero(), v0=Profile.sine_bump(0.1, 1.5),
                       v1=Profile.constant(3.0))
    hd = to_h_data(data)
    assert hd.h1(1.0) == pytest.approx(3.0)


def test_h1_formula_with_damping():
    # direct substitution: R=2, alpha=2, r=1, v0=1, v1=0 -> h1 = 1
    R, alpha, r = 2.0, 2.0, 1.0
    v0, v1 = 1.0, 0.0
    h1 = np.sqrt(R - r) * (v1 + 0.5 * alpha * v0)
    assert h1 == pytest.approx(1.0)
    # same formula through the container, with data made compatible
    data = ProblemData(R=R, rho0=1.5, alpha=alpha, horizon=1.0,
                       w=Profile.zero(), v0=Profile.sine_bump(1.0, 1.5),
                       v1=Profile.zero())
    hd = to_h_data(data)
    r = 0.4
    expect = np.sqrt(R - r) * 0.5 * alpha * float(data.v0(r))
    assert hd.h1(r) == pytest.approx(expect, rel=1e-14)


def test_h0_dot_against_finite_difference():
    data = make_data(alpha=0.7)
    hd = to_h_data(data)
    eps = 1e-6
    for r in [0.2, 0.5, 0.8]:
        fd = (float(hd.h0(r + eps)) - float(hd.h0(r - eps))) / (2 * eps)
        assert float(hd.h0_dot(r)) == pytest.approx(fd, rel=1e-8, abs=1e-8)


def test_round_trip_h_to_v():
    data = make_data(alpha=1.3)
    hd = to_h_data(data)
    rng = np.random.default_rng(5)
    rs = rng.uniform(0.0, 1.0, 200)
    v, v_t, _ = v_from_h(hd.h0(rs), hd.h1(rs), hd.h0_dot(rs), 0.0, rs,
                         R=data.R, alpha=data.alpha)
    assert np.allclose(v, data.v0(rs), atol=1e-12)
    assert np.allclose(v_t, data.v1(rs), atol=1e-12)


def test_v_from_h_weight_inversion():
    v, _, _ = v_from_h(5.0, 0.0, 0.0, 0.7, 1.0, R=2.0, alpha=0.0)
    assert v == pytest.approx(5.0)
    with pytest.raises(ValueError):
        v_from_h(1.0, 0.0, 0.0, 0.0, 2.0, R=2.0, alpha=0.0)


def test_u_from_v_placement():
    radius, u = u_from_v(1.0, 0.0, R=3.0)
    assert radius == pytest.approx(3.0) and u == pytest.approx(1.0)
    radius, u = u_from_v(0.25, 1.2, R=3.0)
    assert radius == pytest.approx(1.8) and u == pytest.approx(0.25)


# -- kernels ----------------------------------------------------------------

def test_f_kernel_linear_in_h():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = rng.normal()
        h = rng.normal()
        s = rng.uniform(0, 1.5)
        assert f_kernel(a * h, s, 2.0, 0.5) == pytest.approx(
            a * f_kernel(h, s, 2.0, 0.5), rel=1e-14)


def test_kernel_prefactor_monotone():
    ss = np.linspace(0.0, 2.9, 400)
    pf = kernel_prefactor(ss, R=3.0, alpha=1.0)
    assert np.all(np.diff(pf) > 0)


def test_g_kernel_uses_first_derivatives():
    assert g_kernel(1.0, 0.0, 1.0, R=2.0, alpha=0.5) == pytest.approx(-0.5)
    assert g_kernel(0.0, 2.0, 1.0, R=2.0, alpha=0.5) == pytest.approx(-2.0)


# -- toughness --------------------------------------------------------------

def test_constant_toughness():
    k = Toughness.constant(2.0, rho0=1.0, R=3.0)
    assert kappa_eval(k, 1.7) == pytest.approx(2.0)
    assert k.c1 == pytest.approx(2.0) and k.c2 == pytest.approx(2.0)


def test_two_piece_right_continuity():
    k = Toughness.from_pieces([(1.0, Profile.constant(1.0)),
                               (2.0, Profile.constant(3.0))], R=3.0)
    assert kappa_eval(k, 2.0) == pytest.approx(3.0)
    assert kappa_eval(k, 2.0 - 1e-12) == pytest.approx(1.0)


def test_kappa_bounds_hold():
    k = Toughness.from_pieces([(1.0, Profile.affine(1.0, 0.5)),
                               (1.8, Profile.constant(2.5))], R=3.0)
    rng = np.random.default_rng(2)
    rs = rng.uniform(1.0, 3.0 - 1e-6, 300)
    vals = kappa_eval(k, rs)
    assert np.all(vals >= k.c1 - 1e-12) and np.all(vals <= k.c2 + 1e-12)


def test_toughness_rejects_nonpositive():
    with pytest.raises(ValueError):
        Toughness.constant(0.0, rho0=1.0, R=3.0)


def test_toughness_clamp_after():
    k = Toughness.from_pieces([(1.0, Profile.affine(0.0, 2.0))], R=3.0)
    kc = k.clamped_after(1.5)
    assert kappa_eval(kc, 1.2) == pytest.approx(2.4)
    assert kappa_eval(kc, 2.5) == pytest.approx(3.0)  # frozen at the clamp value


def test_kappa_domain_errors():
    k = Toughness.constant(1.0, rho0=1.0, R=3.0)
    with pytest.raises(ValueError):
        kappa_eval(k, 0.5)
    with pytest.raises(ValueError):
        kappa_eval(k, 3.0)
