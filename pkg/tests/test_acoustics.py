import numpy as np
import pytest

import exact_strip as ex
from paraxfem import acoustics as ac


def s_up(t):
    return 1 - 0.3 * t + 0.05 * t ** 2


def test_strip_coefficients_against_symbolic_solution(rng):
    sol = ex.build(s_up)
    prof = ac.BottomProfile(*ex.profile_functions(s_up))
    c = ac.wedge_coefficients(prof, g=sol["g"])
    t = rng.uniform(0, 0.8, 50)
    x = rng.uniform(0, 1, 50)
    res = [sol["ut"](ti, xi) - 1j * c.a(ti) * sol["uxx"](ti, xi) - 1j * c.beta(ti, xi) * sol["u"](ti, xi)
           for ti, xi in zip(t, x)]
    assert np.max(np.abs(res)) < 1e-12
    bc = [sol["ux"](ti, 1.0) - c.mu(ti) * (c.S(ti) * sol["ut"](ti, 1.0) + c.G(ti) * sol["u"](ti, 1.0))
          for ti in t]
    assert np.max(np.abs(bc)) < 1e-11


def test_transform_initial_phase():
    sol = ex.build(s_up)
    prof = ac.BottomProfile(*ex.profile_functions(s_up))
    u0 = ac.transform_initial(prof, lambda y: np.sin(ex.KAPPA * y) + 0j)
    x = np.linspace(0, 1, 9)
    np.testing.assert_allclose(u0(x), sol["u"](0.0, x), atol=1e-14)


def test_slope_classification():
    assert ac.is_upsloping(ac.table_case(1), 1.0)
    assert not ac.is_upsloping(ac.table_case(2), 1.0)
    assert not ac.is_upsloping(ac.table_case(3), 1.0)
    assert ac.asa_wedge_environment("up").upsloping()
    assert not ac.asa_wedge_environment("down").upsloping()


def test_kinked_profile_rejects_kink():
    f = ac.growth_profile("f")
    with pytest.raises(ValueError):
        f.values(0.5)
    assert f.values(0.25)[1] == 2.0


def test_wedge_environment_scales():
    env = ac.asa_wedge_environment("up")
    assert env.k0 == pytest.approx(np.pi / 30)
    assert env.T == pytest.approx(np.pi / 30 * 3339)
    assert env.g == pytest.approx(1j)
    prof = env.profile()
    assert prof.s(env.T) / env.k0 == pytest.approx(200 - 0.05 * 3339)
    assert prof.s_dot(0.0) == pytest.approx(-0.05)


def test_transmission_loss():
    assert ac.transmission_loss(1.0, 1.0) == pytest.approx(0.0)
    assert ac.transmission_loss(0.1, 100.0) == pytest.approx(40.0)
    assert ac.transmission_loss(0.0, 10.0) == ac.TL_CLIP_DB
    with pytest.raises(ValueError):
        ac.transmission_loss(1.0, 0.0)


def test_recover_field_rejects_points_below_bottom():
    env = ac.asa_wedge_environment("up")
    prof = env.profile()
    with pytest.raises(ValueError):
        ac.recover_field(lambda x: 0 * x, 0.0, 250.0, prof, env, 1.0)


def test_source_is_odd_and_vanishes_at_surface():
    env = ac.asa_wedge_environment("up")
    psi = ac.asa_source(env)
    assert psi(0.0) == 0.0
    z = np.array([10.0, 60.0, 150.0])
    np.testing.assert_allclose(psi(-z), -psi(z))
    dz = 1e-5
    fd = (psi(z + dz) - psi(z - dz)) / (2 * dz)
    np.testing.assert_allclose(ac.asa_source_derivative(env)(z), fd, rtol=1e-6, atol=1e-9)
