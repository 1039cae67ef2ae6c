import math

import numpy as np
import pytest

from photonsub import (DensityMatrix, FockDim, LossBudget, MeasuredSqueezing,
                       SqueezeParam, antisqueezing_ratio, apply_channel,
                       fit_initial_squeezing, loss_channel, quadrature_op,
                       squeezed_vacuum, squeezed_vacuum_leakage, squeezing_ratio,
                       wigner_eval)
from photonsub.errors import TruncationError, ValidationError

from oracles import lossy_populations, random_density_matrix, squeeze_vacuum_expm

PAPER_BUDGET = LossBudget(opa=0.11, hd_photodiodes=0.04, spatial_mode=0.04,
                          temporal_mode=0.12, propagation=0.05, circuit_noise=0.05)


def test_budget_total_efficiency():
    expected = 0.89 * 0.96 * 0.96 * 0.88 * 0.95 * 0.95
    assert PAPER_BUDGET.total_efficiency == pytest.approx(expected, rel=1e-12)
    assert PAPER_BUDGET.efficiency_before_tap == pytest.approx(0.89)
    assert (PAPER_BUDGET.efficiency_before_tap
            * PAPER_BUDGET.efficiency_after_herald
            == pytest.approx(expected, rel=1e-12))


def test_budget_validation():
    with pytest.raises(ValidationError):
        LossBudget(opa=1.2, hd_photodiodes=0, spatial_mode=0, temporal_mode=0,
                   propagation=0, circuit_noise=0)
    with pytest.raises(ValidationError):
        LossBudget.from_dict({"opa": 0.1})


def test_db_ratios():
    assert squeezing_ratio(0.0) == pytest.approx(1.0)
    assert antisqueezing_ratio(0.0) == pytest.approx(1.0)
    # paper levels
    assert squeezing_ratio(2.9) == pytest.approx(0.5129, abs=2e-4)
    assert antisqueezing_ratio(4.4) == pytest.approx(2.754, abs=2e-3)


def test_squeezed_vacuum_r0_is_vacuum():
    rho = squeezed_vacuum(SqueezeParam(0.0), FockDim(6))
    assert np.allclose(rho.elements, DensityMatrix.vacuum(FockDim(6)).elements)


def test_squeezed_vacuum_amplitude_ratio_against_expm_oracle():
    r = 0.5
    rho = squeezed_vacuum(SqueezeParam(r), FockDim(20))
    ratio = (rho.elements[2, 0] / rho.elements[0, 0]).real
    assert ratio == pytest.approx(-math.tanh(r) / math.sqrt(2), abs=1e-10)
    assert ratio == pytest.approx(-0.3268, abs=1e-4)
    vec = squeeze_vacuum_expm(r, 0.0, n_big=40)
    assert (vec[2] / vec[0]).real == pytest.approx(ratio, abs=1e-9)
    # full amplitude comparison on the truncated support
    amps = np.sqrt(np.abs(rho.photon_dist()))
    assert np.allclose(amps[: 10], np.abs(vec[: 10]), atol=1e-7)


def test_squeezed_vacuum_odd_populations_zero():
    rho = squeezed_vacuum(SqueezeParam(0.8, 1.3), FockDim(21), leakage_tol=1e-4)
    assert np.abs(rho.photon_dist()[1::2]).max() == 0.0


def test_squeezed_vacuum_variances():
    r = 0.45
    dim = FockDim(20)
    rho = squeezed_vacuum(SqueezeParam(r), dim)
    x = quadrature_op(dim, 0.0)
    p = quadrature_op(dim, math.pi / 2)
    assert rho.expect(x @ x).real == pytest.approx(math.exp(-2 * r) / 2, abs=1e-5)
    assert rho.expect(p @ p).real == pytest.approx(math.exp(2 * r) / 2, abs=1e-5)


def test_squeezed_vacuum_phase_rotates_axis():
    r = 0.45
    dim = FockDim(20)
    rho = squeezed_vacuum(SqueezeParam(r, math.pi), dim)
    x = quadrature_op(dim, 0.0)
    assert rho.expect(x @ x).real == pytest.approx(math.exp(2 * r) / 2, abs=1e-5)


def test_squeezed_vacuum_leakage_guard():
    with pytest.raises(TruncationError):
        squeezed_vacuum(SqueezeParam(1.5), FockDim(6))
    assert squeezed_vacuum_leakage(SqueezeParam(0.64), FockDim(20)) < 1e-6


def test_loss_channel_identity():
    dim = FockDim(5)
    rho = DensityMatrix(dim, random_density_matrix(6, seed=11))
    out = apply_channel(rho, loss_channel(1.0, dim))
    assert np.allclose(out.elements, rho.elements, atol=1e-14)


def test_loss_channel_single_photon():
    dim = FockDim(4)
    out = apply_channel(DensityMatrix.fock(1, dim), loss_channel(0.6, dim))
    assert np.allclose(out.photon_dist()[:2], [0.4, 0.6], atol=1e-12)


def test_loss_channel_two_photons_binomial_oracle():
    dim = FockDim(4)
    out = apply_channel(DensityMatrix.fock(2, dim), loss_channel(0.6, dim))
    expected = lossy_populations(2, 0.6)       # (0.16, 0.48, 0.36)
    assert expected == pytest.approx([0.16, 0.48, 0.36])
    assert np.allclose(out.photon_dist()[:3], expected, atol=1e-12)


def test_loss_channel_composition_law():
    dim = FockDim(10)
    rho = DensityMatrix(dim, random_density_matrix(11, seed=12))
    one = apply_channel(apply_channel(rho, loss_channel(0.7, dim)),
                        loss_channel(0.8, dim))
    both = apply_channel(rho, loss_channel(0.56, dim))
    assert np.abs(one.elements - both.elements).max() < 1e-10


def test_loss_keeps_wigner_nonnegative():
    # loss never creates negativity: the output floor can only rise relative
    # to the input's (which sits at truncation-ringing scale, not zero)
    dim = FockDim(20)
    rho = squeezed_vacuum(SqueezeParam(0.4), dim)
    axis = np.linspace(-4.5, 4.5, 61)
    before = wigner_eval(rho, axis, axis).values.min()
    lossy = apply_channel(rho, loss_channel(0.63, dim))
    after = wigner_eval(lossy, axis, axis).values.min()
    assert before > -1e-5
    assert after >= before - 1e-12
    assert after > -1e-8


def test_fit_symmetric_pure_pair():
    fit = fit_initial_squeezing(MeasuredSqueezing(3.01, 3.01),
                                LossBudget(0, 0, 0, 0, 0, 0))
    assert fit.param.r == pytest.approx(0.3466, abs=5e-4)
    assert fit.eta_extra == pytest.approx(1.0, abs=1e-9)


def test_fit_paper_pair_closed_form_and_roundtrip():
    fit = fit_initial_squeezing(MeasuredSqueezing(2.9, 4.4), PAPER_BUDGET)
    # forward model must reproduce the measured pair to < 0.01 dB
    assert fit.predicted_squeezing_db == pytest.approx(2.9, abs=0.01)
    assert fit.predicted_antisqueezing_db == pytest.approx(4.4, abs=0.01)
    # independent check: solve the 2x2 system numerically
    a, b = 10 ** -0.29, 10 ** 0.44
    from scipy.optimize import fsolve
    def eqs(v):
        r, eta = v
        return [eta * math.exp(-2 * r) + 1 - eta - a,
                eta * math.exp(2 * r) + 1 - eta - b]
    r_num, eta_num = fsolve(eqs, [0.5, 0.7], xtol=1e-13)
    assert fit.param.r == pytest.approx(r_num, abs=1e-9)
    assert fit.eta_total == pytest.approx(eta_num, abs=1e-9)
    assert fit.eta_extra == pytest.approx(eta_num / PAPER_BUDGET.total_efficiency,
                                          abs=1e-9)


def test_fit_roundtrip_through_channels():
    # feed the fitted (r, eta_total) through squeezed_vacuum + loss_channel
    # and read the variances back off quadrature moments
    fit = fit_initial_squeezing(MeasuredSqueezing(2.9, 4.4), PAPER_BUDGET)
    dim = FockDim(24)
    rho = squeezed_vacuum(fit.param, dim, leakage_tol=1e-5)
    rho = apply_channel(rho, loss_channel(fit.eta_total, dim))
    x = quadrature_op(dim, 0.0)
    p = quadrature_op(dim, math.pi / 2)
    vx = rho.expect(x @ x).real
    vp = rho.expect(p @ p).real
    assert -10 * math.log10(vx / 0.5) == pytest.approx(2.9, abs=0.01)
    assert 10 * math.log10(vp / 0.5) == pytest.approx(4.4, abs=0.01)


def test_fit_extreme_pair_still_consistent():
    # every pair with antisqueezing >= squeezing admits a solution with
    # eta <= 1 (the model forces V-.V+ >= V0^2); check a harsh one solves
    fit = fit_initial_squeezing(MeasuredSqueezing(0.01, 20.0),
                                LossBudget(0, 0, 0, 0, 0, 0))
    assert 0 < fit.eta_total <= 1
    assert fit.predicted_squeezing_db == pytest.approx(0.01, abs=1e-6)
    assert fit.predicted_antisqueezing_db == pytest.approx(20.0, abs=1e-6)


def test_measured_squeezing_validation():
    with pytest.raises(ValidationError):
        MeasuredSqueezing(-1.0, 2.0)
    with pytest.raises(ValidationError):
        MeasuredSqueezing(3.0, 2.0)
