"""Displacement matrix elements against an independent quadrature oracle."""
from __future__ import annotations

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bosecool import franck_condon_1d
from bosecool.rates import fc_abs2_shift, fc_abs2_table, fc_diag

from oracles import displacement_overlap_quad

KAPPAS = (0.5, 1.0, 2.0, 2.05)


def test_matches_quadrature_oracle():
    # closed form vs 220-node Gauss-Hermite, every pair up to n=12
    for kappa in KAPPAS:
        for n_in in range(13):
            for n_out in range(13):
                ref = displacement_overlap_quad(n_out, n_in, kappa)
                got = franck_condon_1d(n_out, n_in, kappa)
                assert abs(got - ref) <= 1e-10, (n_out, n_in, kappa)


def test_frozen_values_kappa_two():
    e2 = math.exp(-2.0)
    assert_allclose(franck_condon_1d(0, 0, 2.0), e2, rtol=1e-14)
    # L_1(4) = -3
    assert_allclose(franck_condon_1d(1, 1, 2.0), -3.0 * e2, rtol=1e-14)
    assert_allclose(abs(franck_condon_1d(0, 1, 2.0)) ** 2, 4.0 * math.exp(-4.0), rtol=1e-13)
    got = franck_condon_1d(2, 3, 2.0)
    assert_allclose(got, -0.15627172441502513j, rtol=1e-13)
    assert_allclose(abs(got) ** 2, 0.02442085185164556, rtol=1e-13)
    assert_allclose(abs(franck_condon_1d(0, 3, 2.0)) ** 2, 0.19536681481316442, rtol=1e-13)


def test_phase_convention():
    # i^|dn| phase, odd-transfer sign flips with the displacement sign
    up = franck_condon_1d(1, 0, 1.3)
    assert up.real == 0.0 and up.imag > 0.0
    down = franck_condon_1d(1, 0, -1.3)
    assert down == -up
    even = franck_condon_1d(2, 0, 1.3)
    assert even.imag == 0.0 and even.real < 0.0


def test_zero_displacement_is_identity():
    for n in range(6):
        assert franck_condon_1d(n, n, 0.0) == 1.0 + 0.0j
    assert franck_condon_1d(3, 5, 0.0) == 0.0 + 0.0j


def test_laguerre_node_gives_dark_transition():
    # first excited level decouples when kappa^2 = s+1 (associated Laguerre zero)
    assert franck_condon_1d(4, 1, 2.0) == 0.0  # kappa^2 = 4 exactly
    for s in (1, 2):
        amp = franck_condon_1d(1 + s, 1, math.sqrt(s + 1.0))
        assert abs(amp) < 1e-13


def test_unitarity_rows():
    for kappa in (0.5, 1.0, 2.0, 2.5):
        for n_in in range(11):
            total = sum(abs(franck_condon_1d(n_out, n_in, kappa)) ** 2 for n_out in range(201))
            assert_allclose(total, 1.0, atol=1e-8)


def test_magnitude_symmetry():
    for n_a in range(8):
        for n_b in range(8):
            a = abs(franck_condon_1d(n_a, n_b, 1.7))
            b = abs(franck_condon_1d(n_b, n_a, 1.7))
            assert a == b


def test_abs2_table_matches_scalar():
    table = fc_abs2_table(6, 1.4)
    assert table.shape == (7, 7)
    assert_allclose(table, table.T, rtol=0, atol=0)
    for n_out in range(7):
        for n_in in range(7):
            assert_allclose(table[n_out, n_in],
                            abs(franck_condon_1d(n_out, n_in, 1.4)) ** 2, rtol=1e-12)


def test_shift_table_matches_scalar():
    shift = fc_abs2_shift(5, -2, 1.1)
    for n in range(6):
        want = abs(franck_condon_1d(n - 2, n, 1.1)) ** 2 if n >= 2 else 0.0
        assert_allclose(shift[n], want, rtol=1e-12, atol=0)


def test_diagonal_helper():
    d = fc_diag(4, 2.0)
    e2 = math.exp(-2.0)
    assert_allclose(d[:3], [e2, -3.0 * e2, e2], rtol=1e-13)
    assert_allclose(d[3], (7.0 / 3.0) * e2, rtol=1e-13)


def test_negative_quanta_rejected():
    with pytest.raises(ValueError):
        franck_condon_1d(-1, 0, 1.0)
    with pytest.raises(ValueError):
        franck_condon_1d(0, -2, 1.0)
