import warnings
from dataclasses import replace
from unittest import mock

import numpy as np
import pytest

import exact_strip as ex
from paraxfem import acoustics as ac
from paraxfem import schrodinger as sch
from paraxfem.fem1d import FeSpace, Mesh1D, SingularSystemError, nodal_l2_error


def test_time_grid():
    g = sch.TimeGrid.uniform(2.0, 4)
    assert g.steps == 4 and g.k_max == pytest.approx(0.5)
    assert g.half(1) == pytest.approx(0.25)
    assert g.mesh_condition_constant() == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        sch.TimeGrid(np.array([0.0, 0.5, 0.5]))
    var = sch.TimeGrid(np.array([0.0, 0.1, 0.3, 0.6]))
    assert var.mesh_condition_constant() == pytest.approx(0.1 / 0.04)


def test_zero_data_stays_zero():
    c = ac.wedge_coefficients(ac.table_case(1), g=0.0)
    sp = FeSpace(Mesh1D.uniform(10))
    ctx = sch.CnStepContext(sp, c, sch.TimeGrid.uniform(1.0, 10))
    hist = sch.run(ctx, sp.zero(complex))
    assert not np.any(hist.final.coeffs)


def real_beta_coeffs():
    return ac.CoefficientSet(a=lambda t: 0.7 + 0.2 * t, beta=lambda t, x: x * t + 1.0)


def test_ak_conserves_norm():
    sp = FeSpace(Mesh1D.uniform(40))
    c = real_beta_coeffs()
    grid = sch.TimeGrid(np.cumsum(np.r_[0.0, np.linspace(0.01, 0.05, 30)]))
    ctx = sch.CnStepContext(sp, c, grid, sch.AK)
    U0 = sch.init_ak(sp, lambda x: np.sin(3 * x) * (1 + 1j * x))
    norms = np.array(sch.run(ctx, U0).norms)
    assert np.max(np.abs(norms / norms[0] - 1)) < 1e-12


def test_neumann_with_flat_bottom_equals_ak_bitwise():
    prof = ac.linear_profile(1.0, 0.0)
    c = ac.wedge_coefficients(prof, g=1j)
    sp = FeSpace(Mesh1D.uniform(20))
    grid = sch.TimeGrid.uniform(1.0, 20)
    U0 = sch.init_neumann(sp, c, lambda x: x * (1 - x) ** 2 + 0j)
    a = sch.run(sch.CnStepContext(sp, c, grid, sch.NEUMANN), U0).final.coeffs
    b = sch.run(sch.CnStepContext(sp, c, grid, sch.AK), U0).final.coeffs
    np.testing.assert_array_equal(a, b)


def test_downsloping_warning():
    c = ac.wedge_coefficients(ac.table_case(2), g=0.0)
    sp = FeSpace(Mesh1D.uniform(4))
    with pytest.warns(sch.DownslopingWarning):
        sch.CnStepContext(sp, c, sch.TimeGrid.uniform(1.0, 4))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sch.CnStepContext(sp, c, sch.TimeGrid.uniform(1.0, 4), sch.AK)


def test_singular_step_reports_step_size():
    c = ac.wedge_coefficients(ac.table_case(1), g=0.0)
    sp = FeSpace(Mesh1D.uniform(4))
    ctx = sch.CnStepContext(sp, c, sch.TimeGrid.uniform(1.0, 4))
    with mock.patch("paraxfem.fem1d.BandedSystem.factor",
                    side_effect=SingularSystemError("zero pivot", 3)):
        with pytest.raises(sch.StepSizeError, match="step-size condition violated"):
            ctx.step(sp.zero(complex), 1)


def test_mode_checks():
    c = real_beta_coeffs()
    sp = FeSpace(Mesh1D.uniform(4))
    ctx = sch.CnStepContext(sp, c, sch.TimeGrid.uniform(1.0, 4), sch.AK)
    with pytest.raises(ValueError):
        sch.step_neumann(ctx, sp.zero(complex), 1)
    with pytest.raises(ValueError):
        sch.CnStepContext(sp, c, sch.TimeGrid.uniform(1.0, 4), "X")


def s_up(t):
    return 1 - 0.3 * t + 0.05 * t ** 2


def test_neumann_converges_on_exact_transformed_solution():
    sol = ex.build(s_up)
    prof = ac.BottomProfile(*ex.profile_functions(s_up))
    c = ac.wedge_coefficients(prof, g=sol["g"])
    errs = []
    for n in (25, 50, 100):
        sp = FeSpace(Mesh1D.uniform(n))
        grid = sch.TimeGrid.uniform(0.8, n)
        ctx = sch.CnStepContext(sp, c, grid)
        U0 = sch.init_neumann(sp, c, lambda x: sol["u"](0.0, x))
        hist = sch.run(ctx, U0)
        errs.append(nodal_l2_error(hist.final, lambda x: sol["u"](0.8, x)))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > 1.9), rates


def test_run_flags_blowup():
    c = ac.CoefficientSet(a=lambda t: 1.0, beta=lambda t, x: -5j + 0 * x)
    sp = FeSpace(Mesh1D.uniform(8))
    ctx = sch.CnStepContext(sp, c, sch.TimeGrid.uniform(5.0, 50), sch.AK)
    hist = sch.run(ctx, sch.init_ak(sp, lambda x: x + 0j), blowup_ratio=1e3)
    assert hist.flagged and hist.terminated_step is not None
    assert hist.norms[-1] > 1e3 * hist.norms[0]
