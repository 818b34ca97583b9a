"""Rate matrices for stimulated absorption and spontaneous emission.

Absorption entries are dimensionless per-pulse excitation factors: the
second-order pulse-area prefactor pi/8 * (omega0_tau_abs)^2 is folded in,
so the per-pulse excitation probability of one atom in ground level m is
2 * sum_l rate[l, m]. Spontaneous entries are branching rates in units of
the excited-state linewidth; the dynamics renormalizes them per
configuration, so only ratios matter.

Matrix convention: entry (to_id, from_id), i.e. columns are source
levels. Column sums of an absorption matrix are depletion rates; column
sums of a spontaneous matrix approach 1 when the truncation holds the
full emission band.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .basis import Basis, SimParams

REL_CUTOFF = 1e-12  # entries below this fraction of the max are dropped


class PhysicsValidityError(RuntimeError):
    """A coarse-grained validity bound was violated at run time."""


# ---------------------------------------------------------------- kernels


def _laguerre_upward(n: int, alpha: int, x: float) -> float:
    """Associated Laguerre L_n^(alpha)(x) by the three-term upward recurrence."""
    if n == 0:
        return 1.0
    prev = 1.0
    cur = 1.0 + alpha - x
    for k in range(1, n):
        prev, cur = cur, ((2 * k + 1 + alpha - x) * cur - (k + alpha) * prev) / (k + 1)
    return cur


_I_POW = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


def franck_condon_1d(n_out: int, n_in: int, kappa: float) -> complex:
    """<n_out| exp(i kappa (a + a^dag)) |n_in> for one oscillator axis.

    Closed form exp(-kappa^2/2) (i kappa)^|dn| sqrt(n_<! / n_>!)
    L_{n_<}^{|dn|}(kappa^2); the factorial ratio goes through lgamma so
    large quantum numbers stay finite.
    """
    if n_out < 0 or n_in < 0:
        raise ValueError("quantum numbers must be non-negative")
    d = abs(n_out - n_in)
    if kappa == 0.0:
        return 1.0 + 0.0j if d == 0 else 0.0 + 0.0j
    lo, hi = (n_out, n_in) if n_out < n_in else (n_in, n_out)
    x = kappa * kappa
    lag = _laguerre_upward(lo, d, x)
    log_mag = (-0.5 * x + d * math.log(abs(kappa))
               + 0.5 * (math.lgamma(lo + 1) - math.lgamma(hi + 1)))
    amp = math.exp(log_mag) * lag
    phase = _I_POW[d % 4]
    if kappa < 0 and d % 2 == 1:
        amp = -amp
    return amp * phase


def fc_diag(n_max: int, kappa: float) -> np.ndarray:
    """Real diagonal amplitudes <n|e^{i kappa x}|n> for n = 0..n_max."""
    x = kappa * kappa
    out = np.empty(n_max + 1)
    pref = math.exp(-0.5 * x)
    prev, cur = 1.0, 1.0 - x
    out[0] = pref
    if n_max >= 1:
        out[1] = pref * cur
    for k in range(1, n_max):
        prev, cur = cur, ((2 * k + 1 - x) * cur - k * prev) / (k + 1)
        out[k + 1] = pref * cur
    return out


def fc_abs2_shift(n_max: int, delta: int, kappa: float) -> np.ndarray:
    """|<n+delta|e^{i kappa x}|n>|^2 for n = 0..n_max (0 where n+delta < 0)."""
    out = np.zeros(n_max + 1)
    for n in range(n_max + 1):
        if n + delta >= 0:
            a = franck_condon_1d(n + delta, n, kappa)
            out[n] = (a * a.conjugate()).real
    return out


def fc_abs2_table(n_max: int, kappa: float) -> np.ndarray:
    """Full |<n_out|e^{i kappa x}|n_in>|^2 table, shape (n_max+1, n_max+1).

    One upward Laguerre recurrence per |dn| fills a whole diagonal, so the
    cost is O(n_max^2) and the table is exactly symmetric.
    """
    size = n_max + 1
    out = np.empty((size, size))
    if kappa == 0.0:
        return np.eye(size)
    x = kappa * kappa
    lg = np.array([math.lgamma(k + 1) for k in range(size)])
    logk = math.log(abs(kappa))
    for d in range(size):
        n_lo = np.arange(size - d)
        log_mag = -x + 2 * d * logk + lg[n_lo] - lg[n_lo + d]
        prev, cur = 1.0, 1.0 + d - x
        vals = np.empty(size - d)
        vals[0] = 1.0
        if size - d > 1:
            vals[1] = cur
        for k in range(1, size - d - 1):
            prev, cur = cur, ((2 * k + 1 + d - x) * cur - (k + d) * prev) / (k + 1)
            vals[k + 1] = cur
        sq = np.exp(log_mag) * vals * vals
        idx = np.arange(size - d)
        out[idx + d, idx] = sq
        out[idx, idx + d] = sq
    return out


def pulse_spectrum_sq(delta_mismatch: float, omega_tau_abs: float) -> float:
    """Peak-normalized |spectrum|^2 of the Gaussian pulse at a detuning error.

    ``delta_mismatch`` is in trap-frequency units; the Fourier transform of
    exp(-t^2/tau^2) gives exp(-(delta*tau)^2/2) after peak normalization.
    """
    z = delta_mismatch * omega_tau_abs
    return math.exp(-0.5 * z * z)


# ----------------------------------------------------------- rate matrix


@dataclass
class RateMatrix:
    """Sparse non-negative rate matrix in (to, from) coordinate triplets."""

    kind: str
    shape: tuple[int, int]
    to_ids: np.ndarray
    from_ids: np.ndarray
    rates: np.ndarray
    fingerprint: str = ""
    _csc: sparse.csc_array | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.to_ids = np.asarray(self.to_ids, dtype=np.uint32)
        self.from_ids = np.asarray(self.from_ids, dtype=np.uint32)
        self.rates = np.asarray(self.rates, dtype=np.float64)
        if (self.rates < 0).any():
            raise ValueError("rates must be non-negative")

    @property
    def nnz(self) -> int:
        return self.rates.shape[0]

    def column_sums(self) -> np.ndarray:
        return np.bincount(self.from_ids, weights=self.rates,
                           minlength=self.shape[1])

    def max_rate(self) -> float:
        return float(self.rates.max()) if self.nnz else 0.0

    def to_csc(self) -> sparse.csc_array:
        if self._csc is None:
            self._csc = sparse.csc_array(
                (self.rates, (self.to_ids.astype(np.int64),
                              self.from_ids.astype(np.int64))),
                shape=self.shape)
        return self._csc

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.to_ids.astype(np.int64),
                        self.from_ids.astype(np.int64)), self.rates)
        return out


def _apply_cutoff(to_ids, from_ids, vals, rel_cutoff):
    vals = np.asarray(vals, dtype=np.float64)
    if vals.size == 0:
        return to_ids, from_ids, vals
    keep = vals >= rel_cutoff * vals.max()
    return to_ids[keep], from_ids[keep], vals[keep]


# ------------------------------------------------------------ absorption


@dataclass(frozen=True)
class AbsorptionStructure:
    """Amplitude-independent skeleton of one pulse's absorption matrix.

    The coherent beam sum only survives on the diagonal (any off-diagonal
    pair differs on exactly one axis and is reached by that axis' beam
    alone), so the matrix is a quadratic form in the beam amplitudes:
    diagonal entries |sum_j A_j d_j(m)|^2, one-axis entries A_j^2 f_j.
    Evaluating at a new amplitude vector is O(size) and is what makes
    amplitude ramps cheap.
    """

    basis: Basis
    s: int
    eta: float
    omega_tau_abs: float
    window: int
    diag_amp: np.ndarray | None       # (size, dim) per-axis diagonal amplitudes
    diag_spectrum: float
    blocks: tuple                      # (axis, from_ids, to_ids, fc2 * spectrum)

    def evaluate(self, amps: tuple[float, ...], omega0_tau_abs: float,
                 rel_cutoff: float = REL_CUTOFF) -> RateMatrix:
        if len(amps) != self.basis.dim:
            raise ValueError("amplitude tuple length must match basis dim")
        pref = math.pi / 8.0 * omega0_tau_abs ** 2
        tos, fros, vals = [], [], []
        if self.diag_amp is not None:
            m = self.diag_amp @ np.asarray(amps)
            v = pref * self.diag_spectrum * m * m
            ids = np.arange(self.basis.size, dtype=np.uint32)
            tos.append(ids)
            fros.append(ids)
            vals.append(v)
        for axis, from_ids, to_ids, fc2s in self.blocks:
            a = amps[axis]
            if a == 0.0:
                continue
            tos.append(to_ids)
            fros.append(from_ids)
            vals.append(pref * a * a * fc2s)
        if tos:
            to_ids = np.concatenate(tos)
            from_ids = np.concatenate(fros)
            rates = np.concatenate(vals)
        else:
            to_ids = np.empty(0, dtype=np.uint32)
            from_ids = np.empty(0, dtype=np.uint32)
            rates = np.empty(0)
        to_ids, from_ids, rates = _apply_cutoff(to_ids, from_ids, rates, rel_cutoff)
        fp = absorption_fingerprint(self.basis, self.s, self.eta, amps,
                                    omega0_tau_abs, self.omega_tau_abs, self.window)
        n = self.basis.size
        return RateMatrix("absorption", (n, n), to_ids, from_ids, rates, fp)


def absorption_fingerprint(basis: Basis, s: int, eta: float, amps,
                           omega0_tau_abs: float, omega_tau_abs: float,
                           window: int) -> str:
    astr = ",".join(repr(float(a)) for a in amps)
    return (f"abs|{basis.fingerprint()}|s={s}|eta={float(eta)!r}|A=({astr})"
            f"|omega0_tau={float(omega0_tau_abs)!r}"
            f"|omega_tau={float(omega_tau_abs)!r}|window={window}")


def absorption_structure(basis: Basis, params: SimParams, s: int,
                         omega_tau_abs: float | None = None) -> AbsorptionStructure:
    """Precompute the amplitude-independent pieces of a pulse matrix.

    Keeps (to, from) pairs whose shell change is within
    ``params.resonance_window`` of the pulse's shell target ``s``. A beam
    moves quantum numbers on its own axis only, so pairs differing on two
    or more axes never appear.
    """
    wtau = params.omega_tau_abs if omega_tau_abs is None else omega_tau_abs
    window = params.resonance_window
    nq = basis.max_shell
    eta = params.eta

    diag_amp = None
    diag_spec = 0.0
    if abs(s) <= window:
        d = fc_diag(nq, eta)
        diag_amp = d[basis.levels]  # (size, dim) gather per axis
        diag_spec = pulse_spectrum_sq(float(s), wtau)

    blocks = []
    deltas = [d for d in range(s - window, s + window + 1) if d != 0]
    for axis in range(basis.dim):
        q = basis.levels[:, axis]
        for delta in deltas:
            target = basis.levels.copy()
            target[:, axis] = q + delta
            ok = (target[:, axis] >= 0) & (basis.shells + delta <= nq)
            if not ok.any():
                continue
            from_ids = np.nonzero(ok)[0].astype(np.uint32)
            to_ids = basis.lut[tuple(target[ok].T)].astype(np.uint32)
            fc2 = fc_abs2_shift(nq, delta, eta)[q[ok]]
            spec = pulse_spectrum_sq(float(s - delta), wtau)
            blocks.append((axis, from_ids, to_ids, fc2 * spec))
    return AbsorptionStructure(basis=basis, s=s, eta=eta, omega_tau_abs=wtau,
                               window=window, diag_amp=diag_amp,
                               diag_spectrum=diag_spec, blocks=tuple(blocks))


def build_absorption_rates(basis: Basis, params: SimParams, pulse,
                           rel_cutoff: float = REL_CUTOFF) -> RateMatrix:
    """Per-pulse excitation rate matrix for one stimulated pulse.

    ``pulse`` provides ``s``, ``amps`` and optional per-pulse overrides of
    the widths; see schedule.PulseSpec.
    """
    wtau = pulse.omega_tau_abs if pulse.omega_tau_abs is not None else params.omega_tau_abs
    otau = (pulse.omega0_tau_abs if pulse.omega0_tau_abs is not None
            else params.omega0_tau_abs)
    if not 0 < otau < 1:
        raise PhysicsValidityError(
            f"pulse area omega0_tau_abs={otau} outside the perturbative range (0, 1)")
    struct = absorption_structure(basis, params, pulse.s, wtau)
    return struct.evaluate(tuple(pulse.amps), otau, rel_cutoff)


# ------------------------------------------------------------- emission


@dataclass(frozen=True)
class EmissionQuadrature:
    """Photon-direction quadrature: unit directions and weights summing to 1."""

    directions: np.ndarray
    weights: np.ndarray
    pattern: str
    polar_order: int

    def __post_init__(self):
        total = float(self.weights.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"quadrature weights sum to {total}, expected 1")

    def fingerprint(self) -> str:
        return (f"quad|dim={self.directions.shape[1]}|pattern={self.pattern}"
                f"|order={self.polar_order}|n={self.directions.shape[0]}")


def emission_quadrature(dim: int, pattern: str = "isotropic",
                        polar_order: int = 24,
                        azimuthal_count: int | None = None) -> EmissionQuadrature:
    """Angular quadrature for the emission pattern in ``dim`` dimensions.

    In 3D: product Gauss-Legendre in cos(theta) times a uniform midpoint
    rule in phi. Lower-dimensional traps emit along their own axes (two
    points in 1D, a uniform circle in 2D); only the isotropic pattern is
    defined there. ``pattern`` is "isotropic" or "dipole:x|y|z" for the
    linear-dipole lobe 3/(16 pi) (1 + cos^2) about the given axis.
    """
    n_phi = azimuthal_count if azimuthal_count is not None else 2 * polar_order
    if dim == 1:
        if pattern != "isotropic":
            raise ValueError("only the isotropic pattern is defined in 1D")
        dirs = np.array([[1.0], [-1.0]])
        w = np.array([0.5, 0.5])
        return EmissionQuadrature(dirs, w, pattern, polar_order)
    if dim == 2:
        if pattern != "isotropic":
            raise ValueError("only the isotropic pattern is defined in 2D")
        phi = (np.arange(n_phi) + 0.5) * (2 * math.pi / n_phi)
        dirs = np.column_stack([np.cos(phi), np.sin(phi)])
        w = np.full(n_phi, 1.0 / n_phi)
        return EmissionQuadrature(dirs, w, pattern, polar_order)
    if dim != 3:
        raise ValueError(f"dim must be 1, 2 or 3, got {dim}")

    nodes, glw = np.polynomial.legendre.leggauss(polar_order)
    phi = (np.arange(n_phi) + 0.5) * (2 * math.pi / n_phi)
    ct = np.repeat(nodes, n_phi)
    st = np.sqrt(np.clip(1.0 - ct * ct, 0.0, None))
    cphi = np.tile(np.cos(phi), polar_order)
    sphi = np.tile(np.sin(phi), polar_order)
    dirs = np.column_stack([st * cphi, st * sphi, ct])
    base_w = np.repeat(glw, n_phi) / (2.0 * n_phi)

    if pattern == "isotropic":
        w = base_w
    elif pattern.startswith("dipole:"):
        axis = {"x": 0, "y": 1, "z": 2}.get(pattern.split(":", 1)[1])
        if axis is None:
            raise ValueError(f"unknown dipole axis in pattern {pattern!r}")
        ca = dirs[:, axis]
        w = base_w * 0.75 * (1.0 + ca * ca)  # 3/(16pi)(1+c^2) over 1/(4pi)
    else:
        raise ValueError(f"unknown emission pattern {pattern!r}")
    return EmissionQuadrature(dirs, w, pattern, polar_order)


def spontaneous_fingerprint(basis: Basis, params: SimParams,
                            quadrature: EmissionQuadrature) -> str:
    return (f"sp|{basis.fingerprint()}|eta_sp={params.eta_sp!r}"
            f"|{quadrature.fingerprint()}")


def _kappa_table_cache(n_max: int):
    cache: dict[float, np.ndarray] = {}

    def get(kappa: float) -> np.ndarray:
        key = round(abs(kappa), 13)
        tab = cache.get(key)
        if tab is None:
            tab = fc_abs2_table(n_max, key)
            cache[key] = tab
        return tab

    return get


def build_spontaneous_rates(basis: Basis, params: SimParams,
                            quadrature: EmissionQuadrature,
                            rel_cutoff: float = REL_CUTOFF,
                            completeness_warn: float = 0.01) -> RateMatrix:
    """Angle-averaged emission branching matrix, in linewidth units.

    Entry (n, l) integrates the product of per-axis recoil overlaps
    |<n_j|exp(i k_sp u_j x_j)|l_j>|^2 over photon directions u. Columns
    sum to 1 up to truncation loss; a single warning reports columns
    losing more than ``completeness_warn``.
    """
    if quadrature.directions.shape[1] != basis.dim:
        raise ValueError("quadrature dimension does not match basis dim")
    nq = basis.max_shell
    size = basis.size
    eta_sp = params.eta_sp
    table = _kappa_table_cache(nq)

    if basis.dim == 1:
        dense = np.zeros((size, size))
        for u, w in zip(quadrature.directions[:, 0], quadrature.weights):
            dense += w * table(eta_sp * u)
    elif basis.dim == 2:
        qx = basis.levels[:, 0].astype(np.int64)
        qy = basis.levels[:, 1].astype(np.int64)
        dense = np.zeros((size, size))
        for (ux, uy), w in zip(quadrature.directions, quadrature.weights):
            tx = table(eta_sp * ux)
            ty = table(eta_sp * uy)
            dense += w * (tx[np.ix_(qx, qx)] * ty[np.ix_(qy, qy)])
    else:
        dense = _spontaneous_dense_3d(basis, eta_sp, quadrature, table)

    to_ids, from_ids = np.nonzero(dense >= rel_cutoff * dense.max())
    vals = dense[to_ids, from_ids]
    fp = spontaneous_fingerprint(basis, params, quadrature)
    mat = RateMatrix("spontaneous", (size, size),
                     to_ids.astype(np.uint32), from_ids.astype(np.uint32), vals, fp)

    lost = 1.0 - mat.column_sums()
    bad = int((lost > completeness_warn).sum())
    if bad:
        warnings.warn(
            f"{bad} of {size} spontaneous columns lose more than "
            f"{completeness_warn:.0%} of their branching to truncation "
            f"(worst {lost.max():.3f}); raise max_shell if the dynamics "
            "populates the top of the band", stacklevel=2)
    return mat


def _spontaneous_dense_3d(basis: Basis, eta_sp: float,
                          quadrature: EmissionQuadrature, table) -> np.ndarray:
    """Dense 3D emission matrix via a polar-grouped tensor contraction.

    For each polar node the phi sum builds a 4-index (x,y) tensor once;
    the z table then contracts against all level pairs with two gathers.
    Cost is O(polar_order * size^2) instead of O(nodes * size^2).
    """
    nq1 = basis.max_shell + 1
    size = basis.size
    dirs = quadrature.directions
    w = quadrature.weights

    # group nodes by the (rounded) z component; phi nodes share each group
    zkey = np.round(dirs[:, 2], 13)
    groups: dict[float, list[int]] = {}
    for i, z in enumerate(zkey):
        groups.setdefault(float(z), []).append(i)

    qx = basis.levels[:, 0].astype(np.int64)
    qy = basis.levels[:, 1].astype(np.int64)
    qz = basis.levels[:, 2].astype(np.int64)
    n_idx = np.repeat(np.arange(size, dtype=np.int64), size)
    l_idx = np.tile(np.arange(size, dtype=np.int64), size)
    flat_xy = ((qx[n_idx] * nq1 + qx[l_idx]) * nq1 + qy[n_idx]) * nq1 + qy[l_idx]
    flat_z = qz[n_idx] * nq1 + qz[l_idx]

    vals = np.zeros(size * size)
    for z, members in groups.items():
        tz = table(eta_sp * z).ravel()
        xy = np.zeros((nq1 * nq1, nq1 * nq1))
        for i in members:
            tx = table(eta_sp * dirs[i, 0]).ravel()
            ty = table(eta_sp * dirs[i, 1]).ravel()
            xy += w[i] * np.outer(tx, ty)
        vals += xy.ravel()[flat_xy] * tz[flat_z]
    return vals.reshape(size, size)
