"""Independent numerical references used by the tests.

Everything here is built from first principles (quadrature, recurrences,
brute-force enumeration) so the library under test never certifies itself.
"""
from __future__ import annotations

import math

import numpy as np


def displacement_overlap_quad(n_out: int, n_in: int, kappa: float, order: int = 220) -> complex:
    """Overlap <n_out| exp(i*kappa*(a+a†)) |n_in> by Gauss-Hermite quadrature.

    With x = (a+a†)/sqrt(2) the operator is exp(i*sqrt(2)*kappa*x), so the
    overlap is the integral of psi_out(x)*psi_in(x)*exp(i*sqrt(2)*kappa*x)
    over the real line, with psi_n the orthonormal Hermite functions.  The
    Gaussian weight is absorbed into the quadrature; the Hermite functions
    are evaluated through the stable normalized recurrence.
    """
    nodes, weights = np.polynomial.hermite.hermgauss(order)
    # normalized Hermite polynomials h_n = H_n / sqrt(2^n n! sqrt(pi))
    hmax = max(n_out, n_in)
    h = np.zeros((hmax + 1, order))
    h[0] = math.pi ** -0.25
    if hmax >= 1:
        h[1] = math.sqrt(2.0) * nodes * h[0]
    for n in range(1, hmax):
        h[n + 1] = nodes * math.sqrt(2.0 / (n + 1)) * h[n] - math.sqrt(n / (n + 1.0)) * h[n - 1]
    phase = np.exp(1j * math.sqrt(2.0) * kappa * nodes)
    return complex(np.sum(weights * h[n_out] * h[n_in] * phase))


def thermal_level_weights(shells: np.ndarray, beta: float) -> np.ndarray:
    """Normalized Boltzmann weights exp(-beta*shell) over an explicit level list."""
    w = np.exp(-beta * shells.astype(float))
    return w / w.sum()


def multinomial_sigma(p: float, n: int) -> float:
    """Standard error of an empirical frequency from n draws."""
    return math.sqrt(max(p * (1.0 - p), 1e-12) / n)
