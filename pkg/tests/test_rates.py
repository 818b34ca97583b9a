"""Absorption and emission rate construction.

The absorption side is checked against hand-evaluated single-transition
rates and exact interference zeros; the emission side against closed-form
columns and quadrature refinement.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bosecool import (PulseSpec, SimParams, build_absorption_rates,
                      build_spontaneous_rates, emission_quadrature,
                      enumerate_levels, franck_condon_1d, pulse_spectrum_sq)
from bosecool.rates import RateMatrix, absorption_structure

PREF = math.pi / 8.0


def test_spectrum_values():
    assert pulse_spectrum_sq(0.0, 4.0) == 1.0
    assert_allclose(pulse_spectrum_sq(1.0, 4.0), math.exp(-8.0), rtol=1e-14)
    assert_allclose(pulse_spectrum_sq(-1.0, 4.0), math.exp(-8.0), rtol=1e-14)
    assert_allclose(pulse_spectrum_sq(2.0, 4.0), math.exp(-32.0), rtol=1e-13)


def test_single_beam_rate_by_hand():
    basis = enumerate_levels(1, 3)
    params = SimParams(eta=1.1, omega0_tau_abs=0.3)
    mat = build_absorption_rates(basis, params, PulseSpec(s=-1, amps=(1.0,)))
    dense = mat.to_dense()
    for n in (1, 2, 3):
        want = PREF * 0.3 ** 2 * abs(franck_condon_1d(n - 1, n, 1.1)) ** 2
        assert_allclose(dense[n - 1, n], want, rtol=1e-13)
    # ground level has nowhere to go on a lowering pulse
    assert mat.column_sums()[0] == 0.0


def test_selection_rule_one_axis():
    basis = enumerate_levels(3, 4)
    params = SimParams(eta=2.0, omega0_tau_abs=0.4)
    mat = build_absorption_rates(basis, params, PulseSpec(s=-1, amps=(1.0, 1.0, 1.0)))
    assert mat.nnz > 0
    for to_id, from_id in zip(mat.to_ids, mat.from_ids):
        diff = np.asarray(basis.level(int(to_id))) - np.asarray(basis.level(int(from_id)))
        moved = np.nonzero(diff)[0]
        assert moved.size == 1
        assert diff[moved[0]] == -1


def test_area_scaling_quadratic():
    basis = enumerate_levels(1, 4)
    pulse = PulseSpec(s=-1, amps=(1.0,))
    lo = build_absorption_rates(basis, SimParams(eta=0.9, omega0_tau_abs=0.3), pulse)
    hi = build_absorption_rates(basis, SimParams(eta=0.9, omega0_tau_abs=0.6), pulse)
    assert np.array_equal(lo.to_ids, hi.to_ids)
    assert_allclose(hi.rates, 4.0 * lo.rates, rtol=1e-14)


def test_interference_dark_diagonal():
    # A = (1,1,-2): every (m,m,m) decouples, and so does (0,2,0)
    basis = enumerate_levels(3, 6)
    params = SimParams(eta=2.0, omega0_tau_abs=0.5)
    dep = build_absorption_rates(basis, params, PulseSpec(s=0, amps=(1.0, 1.0, -2.0))).column_sums()
    top = dep.max()
    assert top > 0.0
    for m in (0, 1, 2):
        assert dep[basis.id_of((m, m, m))] <= 1e-12 * top
    assert dep[basis.id_of((0, 2, 0))] <= 1e-12 * top
    assert dep[basis.id_of((1, 0, 0))] > 1e-3 * top


def test_interference_dark_pair():
    basis = enumerate_levels(3, 6)
    params = SimParams(eta=2.0, omega0_tau_abs=0.5)
    dep = build_absorption_rates(
        basis, params, PulseSpec(s=0, amps=(1.0, 1.0, -2.0 / 3.0))).column_sums()
    top = dep.max()
    assert dep[basis.id_of((1, 0, 1))] <= 1e-12 * top
    assert dep[basis.id_of((0, 1, 1))] <= 1e-12 * top
    assert dep[basis.id_of((1, 1, 1))] > 1e-3 * top


def test_ground_dark_on_lowering_pulse():
    basis = enumerate_levels(3, 5)
    params = SimParams(eta=2.0, omega0_tau_abs=0.5)
    dep = build_absorption_rates(basis, params, PulseSpec(s=-1, amps=(1.0, 1.0, 1.0))).column_sums()
    assert dep[basis.id_of((0, 0, 0))] == 0.0


def test_laguerre_dark_on_raising_pulse():
    # eta^2 = s + 1 protects the first excited shell against s = +3
    basis = enumerate_levels(3, 5)
    params = SimParams(eta=2.0, omega0_tau_abs=0.5)
    dep = build_absorption_rates(basis, params, PulseSpec(s=3, amps=(1.0, 1.0, 1.0))).column_sums()
    assert dep[basis.id_of((1, 1, 1))] == 0.0
    assert dep[basis.id_of((0, 0, 0))] > 0.0


def test_resonance_window_adds_detuned_lines():
    basis = enumerate_levels(1, 6)
    narrow = SimParams(eta=1.1, omega0_tau_abs=0.3)
    wide = SimParams(eta=1.1, omega0_tau_abs=0.3, resonance_window=1)
    pulse = PulseSpec(s=-1, amps=(1.0,))
    d0 = build_absorption_rates(basis, narrow, pulse).to_dense()
    d1 = build_absorption_rates(basis, wide, pulse).to_dense()
    # resonant line unchanged
    assert_allclose(d1[1, 2], d0[1, 2], rtol=1e-13)
    # one shell further down, suppressed by the pulse spectrum at delta = 1
    want = PREF * 0.09 * abs(franck_condon_1d(0, 2, 1.1)) ** 2 * math.exp(-8.0)
    assert d0[0, 2] == 0.0
    assert_allclose(d1[0, 2], want, rtol=1e-12)
    # |s| <= window turns on the coherent diagonal as well
    amp = abs(franck_condon_1d(3, 3, 1.1)) ** 2
    assert_allclose(d1[3, 3], PREF * 0.09 * amp * math.exp(-8.0), rtol=1e-12)
    assert d0[3, 3] == 0.0


def test_rate_matrix_helpers():
    mat = RateMatrix(kind="absorption", shape=(3, 3),
                     to_ids=np.array([0, 2], dtype=np.uint32),
                     from_ids=np.array([1, 1], dtype=np.uint32),
                     rates=np.array([0.25, 0.5]))
    assert mat.nnz == 2
    assert_allclose(mat.column_sums(), [0.0, 0.75, 0.0])
    assert mat.max_rate() == 0.5
    assert_allclose(mat.to_dense(), mat.to_csc().toarray())
    empty = RateMatrix(kind="absorption", shape=(2, 2),
                       to_ids=np.zeros(0, dtype=np.uint32),
                       from_ids=np.zeros(0, dtype=np.uint32), rates=np.zeros(0))
    assert empty.max_rate() == 0.0
    with pytest.raises(ValueError):
        RateMatrix(kind="absorption", shape=(2, 2),
                   to_ids=np.array([0], dtype=np.uint32),
                   from_ids=np.array([0], dtype=np.uint32),
                   rates=np.array([-1.0]))


def test_structure_amps_length_checked():
    basis = enumerate_levels(2, 3)
    struct = absorption_structure(basis, SimParams(eta=1.0, omega0_tau_abs=0.4), -1)
    with pytest.raises(ValueError):
        struct.evaluate((1.0, 1.0, 1.0), 0.4)


def test_quadrature_normalization():
    for dim in (1, 2, 3):
        quad = emission_quadrature(dim)
        assert_allclose(quad.weights.sum(), 1.0, atol=1e-12)
        assert quad.directions.shape[1] == dim
        assert_allclose(np.linalg.norm(quad.directions, axis=1), 1.0, atol=1e-12)
    dip = emission_quadrature(3, pattern="dipole:z")
    assert_allclose(dip.weights.sum(), 1.0, atol=1e-12)


def test_quadrature_second_moments():
    iso = emission_quadrature(3)
    assert_allclose((iso.weights * iso.directions[:, 2] ** 2).sum(), 1.0 / 3.0, atol=1e-12)
    dip = emission_quadrature(3, pattern="dipole:z")
    # (3/8)(1+cos^2) pattern has <cos^2> = 2/5
    assert_allclose((dip.weights * dip.directions[:, 2] ** 2).sum(), 0.4, atol=1e-12)


def test_quadrature_validation():
    with pytest.raises(ValueError):
        emission_quadrature(3, pattern="cardioid")
    with pytest.raises(ValueError):
        emission_quadrature(1, pattern="dipole:z")
    with pytest.raises(ValueError):
        emission_quadrature(2, pattern="dipole:x")


def test_emission_1d_poisson_column():
    # both emission directions carry |kappa| = eta, so the ground column is
    # the exact Poisson comb exp(-eta^2) eta^(2n) / n!
    basis = enumerate_levels(1, 30)
    params = SimParams(eta=1.2, omega0_tau_abs=0.4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        sp = build_spontaneous_rates(basis, params, emission_quadrature(1)).to_dense()
    eta2 = 1.2 ** 2
    for n in range(13):
        want = math.exp(-eta2) * eta2 ** n / math.factorial(n)
        assert_allclose(sp[n, 0], want, rtol=1e-10)


def test_emission_3d_ground_anchor():
    # isotropic 3D self-overlap of the ground level is exp(-eta_sp^2) exactly
    basis = enumerate_levels(3, 2)
    params = SimParams(eta=2.0, omega0_tau_abs=0.4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        sp = build_spontaneous_rates(basis, params, emission_quadrature(3)).to_dense()
    assert_allclose(sp[0, 0], math.exp(-4.0), rtol=1e-12)


def test_emission_columns_substochastic():
    basis = enumerate_levels(3, 6)
    params = SimParams(eta=2.0, omega0_tau_abs=0.4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        sp = build_spontaneous_rates(basis, params, emission_quadrature(3))
    sums = sp.column_sums()
    assert sums.max() <= 1.0 + 1e-9
    assert sums.min() > 0.0


def test_emission_column_grows_with_truncation():
    params = SimParams(eta=1.5, omega0_tau_abs=0.4)
    totals = []
    for max_shell in (6, 12, 24):
        basis = enumerate_levels(1, max_shell)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            sp = build_spontaneous_rates(basis, params, emission_quadrature(1))
        totals.append(sp.column_sums()[0])
    assert totals[0] <= totals[1] <= totals[2] <= 1.0 + 1e-12
    assert totals[2] > 0.999


def test_emission_quadrature_refinement():
    basis = enumerate_levels(3, 6)
    params = SimParams(eta=2.0, omega0_tau_abs=0.4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        coarse = build_spontaneous_rates(basis, params, emission_quadrature(3, polar_order=24))
        fine = build_spontaneous_rates(basis, params, emission_quadrature(3, polar_order=48))
    diff = np.abs(coarse.to_dense() - fine.to_dense()).max()
    assert diff <= 1e-10 * fine.max_rate()


def test_emission_without_recoil_is_identity():
    basis = enumerate_levels(2, 4)
    params = SimParams(eta=1.3, omega0_tau_abs=0.4, eta_sp_ratio=0.0)
    sp = build_spontaneous_rates(basis, params, emission_quadrature(2))
    assert_allclose(sp.to_dense(), np.eye(basis.size), atol=1e-15)


def test_truncation_warning_threshold():
    params = SimParams(eta=2.0, omega0_tau_abs=0.4)
    basis = enumerate_levels(3, 4)
    with pytest.warns(UserWarning, match="lose more than"):
        build_spontaneous_rates(basis, params, emission_quadrature(3))
    # a generous threshold stays quiet on the same matrix
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        build_spontaneous_rates(basis, params, emission_quadrature(3), completeness_warn=2.0)


def test_quadrature_dim_mismatch():
    basis = enumerate_levels(2, 3)
    params = SimParams(eta=1.0, omega0_tau_abs=0.4)
    with pytest.raises(ValueError):
        build_spontaneous_rates(basis, params, emission_quadrature(3))
