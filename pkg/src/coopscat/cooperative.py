"""Cooperative shift and width tensors of an infinite square array.

The central quantity is the lattice sum

    lambda * g(k_par) = lambda * sum_{n != 0} G(r_n) exp(-i k_par . r_n)

from which the cooperative shift and width tensors follow as

    Delta = -(3/2) Re(lambda g),    Gamma = 3 Im(lambda g)

in units of the single-emitter width.  Both tensors are block diagonal: an
in-plane 2x2 block and a decoupled z entry.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .core import K0, sym_eigen3, pv_integral
from .errors import (
    ConsistencyFailure,
    ContractViolation,
    ThresholdDegeneracy,
    WrongRegime,
)
from .lattice import KParallel, propagating_orders, THRESHOLD_EPS
from .latticesum import damped_sum, ewald_sum

METHODS = ("ewald", "damped")


@dataclass
class CooperativeResponse:
    """Cooperative shift/width tensors at one (a, k_par)."""

    kpar: KParallel
    a: float
    delta_tensor: np.ndarray
    gamma_tensor: np.ndarray
    convergence_report: dict = field(default_factory=dict)

    @property
    def delta_inplane(self):
        return self.delta_tensor[:2, :2]

    @property
    def gamma_inplane(self):
        return self.gamma_tensor[:2, :2]


def _kpar(kpar, k):
    if kpar is None:
        return KParallel(0.0, 0.0, k)
    if isinstance(kpar, KParallel):
        return kpar
    kx, ky = kpar
    return KParallel(float(kx), float(ky), k)


def lattice_sum_g(a, k=K0, kpar=None, tol=1e-3, method="ewald", return_report=False):
    """Dimensionless lattice sum lambda * g(k_par) as a complex 3x3 tensor.

    Args:
        a: lattice constant (units of lambda).
        k: wavenumber.
        kpar: KParallel or (kx, ky); defaults to normal incidence.
        tol: requested accuracy on lambda * g (>= 1e-6).
        method: "ewald" (spectral/spatial splitting) or "damped"
            (real-space damping with extrapolation).
        return_report: also return a convergence report dict.

    Raises:
        ConvergenceFailure: the damped extrapolation misses ``tol``.
        ThresholdDegeneracy: a diffraction order sits on its threshold.
    """
    if tol < 1e-6:
        raise ContractViolation("tol must be >= 1e-6")
    if method not in METHODS:
        raise ContractViolation("unknown lattice-sum method %r" % (method,))
    kp = _kpar(kpar, k)
    if method == "damped":
        value, report = damped_sum(a, k, kp.kx, kp.ky, tol=tol, return_report=True)
    else:
        value = ewald_sum(a, k, kp.kx, kp.ky)
        alt_split = 1.5 * max(math.sqrt(math.pi) / a, k / 6.0)
        alt = ewald_sum(a, k, kp.kx, kp.ky, split=alt_split)
        report = {"method": "ewald", "error_estimate": float(np.abs(value - alt).max())}
    if return_report:
        return value, report
    return value


def _order_vectors(a, k, kx, ky):
    # propagating reciprocal channels k_par + q_m; valid for any k_par
    g = 2.0 * np.pi / a
    mmax = int(math.ceil((k + math.hypot(kx, ky)) / g)) + 1
    out = []
    for mx in range(-mmax, mmax + 1):
        for my in range(-mmax, mmax + 1):
            bx, by = kx + g * mx, ky + g * my
            b = math.hypot(bx, by)
            if abs(b - k) < THRESHOLD_EPS * k:
                raise ThresholdDegeneracy(
                    "diffraction order (%d, %d) sits on its threshold" % (mx, my),
                    order=(mx, my),
                )
            if b < k:
                out.append((bx, by, math.sqrt(k * k - b * b)))
    return out


def _gamma_from_orders(a, k, channels):
    lam = 2.0 * np.pi / k
    gam = -np.eye(3)
    for bx, by, kap in channels:
        vec = np.array([bx, by, kap])
        gam += (3.0 * lam / (2.0 * a * a * kap)) * (np.eye(3) - np.outer(vec, vec) / k**2)
    # z does not mix with the in-plane block after summing +/- kappa images
    gam[0, 2] = gam[2, 0] = gam[1, 2] = gam[2, 1] = 0.0
    return gam


def gamma_analytic(a, k=K0, kpar=None):
    """Closed-form width tensor in the single-order regime.

    Gamma_ij = (3/4 pi)(lambda/a)^2 (k/k_z)(delta_ij - k_i k_j / k^2) - delta_ij
    for the in-plane block and zz, and zero for entries mixing z with x, y.

    Raises:
        WrongRegime: more than the specular order propagates.
    """
    kp = _kpar(kpar, k)
    orders = propagating_orders(a, k, kp)
    if [o.index for o in orders] != [(0, 0)]:
        raise WrongRegime("multiple diffraction orders propagate; use gamma_reciprocal")
    lam = 2.0 * np.pi / k
    kz = kp.kz
    kvec = np.array([kp.kx, kp.ky, kz])
    pref = (3.0 / (4.0 * np.pi)) * (lam / a) ** 2 * (k / kz)
    gam = pref * (np.eye(3) - np.outer(kvec, kvec) / k**2) - np.eye(3)
    gam[0, 2] = gam[2, 0] = gam[1, 2] = gam[2, 1] = 0.0
    return gam


def gamma_reciprocal(a, k=K0, kpar=None):
    """Width tensor from the finite sum over propagating diffraction orders.

    Each propagating order m contributes
    (3 lambda / 2 a^2)(1/kappa_m)(delta_ij - K_i K_j / k^2), K = (k_par + q_m, kappa_m),
    on top of the -1 from excluding the emitter's own field.
    """
    kp = _kpar(kpar, k)
    orders = propagating_orders(a, k, kp)
    channels = [(kp.kx + o.qx, kp.ky + o.qy, float(np.real(o.kappa))) for o in orders]
    return _gamma_from_orders(a, k, channels)


def gamma_normal_incidence(u):
    """In-plane Gamma_xx at normal incidence for an array of spacings u = a/lambda."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.empty_like(u)
    for i, ui in enumerate(u):
        out[i] = _gamma_from_orders(ui, K0, _order_vectors(ui, K0, 0.0, 0.0))[0, 0]
    return out


def cooperative_response(a, k=K0, kpar=None, tol=1e-3, method="ewald"):
    """Cooperative shift and width tensors at (a, k_par).

    The width tensor is checked against the finite diffraction-order sum
    (closed form in the single-order regime, -1 outside the light cone).

    Raises:
        ConsistencyFailure: the lattice-sum width differs from the order sum by
            more than 10 * tol.
    """
    kp = _kpar(kpar, k)
    lg, report = lattice_sum_g(a, k, kp, tol=tol, method=method, return_report=True)
    delta = -1.5 * lg.real
    gamma = 3.0 * lg.imag
    delta = 0.5 * (delta + delta.T)
    gamma = 0.5 * (gamma + gamma.T)

    reference = _gamma_from_orders(a, k, _order_vectors(a, k, kp.kx, kp.ky))
    discrepancy = float(np.abs(gamma - reference).max())
    report = dict(report)
    report["gamma_crosscheck"] = discrepancy
    report["tol"] = tol
    if discrepancy > 10.0 * tol:
        raise ConsistencyFailure(
            "lattice-sum width disagrees with diffraction-order sum by %.3g" % discrepancy
        )
    block = max(abs(delta[0, 2]), abs(delta[1, 2]), abs(gamma[0, 2]), abs(gamma[1, 2]))
    report["block_offdiag"] = float(block)
    return CooperativeResponse(kp, a, delta, gamma, report)


# ---------------------------------------------------------------------------
# band structure
# ---------------------------------------------------------------------------

@dataclass
class BandStructure:
    """Eigenvalue tracks of Delta(k_par) along a path.

    ``bands[:, 0:2]`` are the in-plane bands ordered by eigenvector continuity;
    ``bands[:, 2]`` is the z-polarized band.  Rows whose evaluation failed are
    NaN with a message in ``failures``.
    """

    path: list
    bands: np.ndarray
    polarizations: np.ndarray
    gamma_bands: np.ndarray
    light_cone_mask: np.ndarray
    z_band_flag: np.ndarray
    failures: dict = field(default_factory=dict)


def _inplane_eig(block):
    w, v = sym_eigen3(np.pad(block, ((0, 1), (0, 1))))
    # drop the padded zero direction (0, 0, 1)
    keep = [i for i in range(3) if abs(v[2, i]) < 0.5]
    return w[keep], v[:2, keep]


def band_structure(a, k=K0, path=None, tol=1e-3, method="ewald", points_per_segment=60):
    """Delta-eigenvalue bands along Gamma-X-M-Gamma.

    Bands are ordered by maximal eigenvector overlap with the neighbouring
    path point rather than by magnitude, so crossings stay crossings.
    """
    from .lattice import bz_path

    if path is None:
        path = bz_path(a, points_per_segment)
    npts = len(path)
    vals = np.full((npts, 2), np.nan)
    vecs = np.full((npts, 2, 2), np.nan)
    zval = np.full(npts, np.nan)
    gvals = np.full((npts, 3), np.nan)
    zflag = np.zeros(npts, bool)
    failures = {}
    for i, kp in enumerate(path):
        try:
            resp = cooperative_response(a, k, kp, tol=tol, method=method)
        except (ThresholdDegeneracy, ConsistencyFailure) as exc:
            failures[i] = "%s: %s" % (type(exc).__name__, exc)
            continue
        w, v = sym_eigen3(resp.delta_tensor)
        zi = int(np.argmax(np.abs(v[2])))
        zflag[i] = abs(abs(v[2, zi]) - 1.0) < 1e-12
        zval[i] = w[zi]
        vals[i], vecs[i] = _inplane_eig(resp.delta_inplane)
        gvals[i] = sym_eigen3(resp.gamma_tensor)[0]

    ok = [i for i in range(npts) if i not in failures]
    scale = max(np.nanmax(np.abs(vals)), 1.0) if ok else 1.0
    nondeg = {i for i in ok if abs(vals[i, 1] - vals[i, 0]) > 1e-9 * scale}
    if nondeg:
        seed = min(nondeg)
        forward = [i for i in ok if i > seed]
        backward = [i for i in reversed(ok) if i < seed]
        for sweep in (forward, backward):
            prev = vecs[seed]
            for i in sweep:
                if i not in nondeg:
                    # degenerate point: any basis is an eigenbasis, keep the neighbour's
                    vecs[i] = prev
                    continue
                ov = np.abs(prev.T @ vecs[i])
                if ov[0, 1] + ov[1, 0] > ov[0, 0] + ov[1, 1]:
                    vals[i] = vals[i, ::-1]
                    vecs[i] = vecs[i][:, ::-1]
                prev = vecs[i]

    bands = np.column_stack([vals, zval])
    pol = np.zeros((npts, 3, 3))
    pol[:, :2, :2] = vecs
    pol[:, 2, 2] = 1.0
    mask = np.array([kp.norm < k for kp in path])
    return BandStructure(list(path), bands, pol, gvals, mask, zflag, failures)


# ---------------------------------------------------------------------------
# Kramers-Kronig reconstruction of Delta(a/lambda) from Gamma(a/lambda)
# ---------------------------------------------------------------------------

# Square-lattice Epstein zeta Z(s) = sum' (n^2 + m^2)^(-s/2) = 4 zeta(s/2) beta(s/2),
# Z(1) by analytic continuation.
EPSTEIN_Z3 = 9.033621683100950
EPSTEIN_Z1 = -3.900264920001956

#: coefficients of the singular small-spacing expansion of lambda*g_xx at k_par = 0
KK_A3 = EPSTEIN_Z3 / (32.0 * np.pi**3)
KK_A1 = 3.0 * EPSTEIN_Z1 / (16.0 * np.pi)


def diffraction_thresholds(u_max):
    """Spacings a/lambda <= u_max at which a normal-incidence order opens."""
    vals = set()
    n = int(math.ceil(u_max)) + 1
    for i in range(n + 1):
        for j in range(n + 1):
            s = i * i + j * j
            if s > 0 and math.sqrt(s) <= u_max + 1e-12:
                vals.add(s)
    return np.array([math.sqrt(s) for s in sorted(vals)])


@dataclass
class KKGrid:
    """Sampling grid for the Kramers-Kronig reconstruction."""

    u: np.ndarray
    u_min: float
    u_max: float
    thresholds: np.ndarray


def kk_grid(u_max=4.0, u_min=0.05, step=1e-3):
    """Grid on (u_min, u_max] refined toward the diffraction thresholds.

    Above each threshold t the nodes are u = t + s^2 with s on a uniform
    midpoint grid, which absorbs the 1/sqrt(u - t) divergence of Gamma and
    keeps the spacing below ``step`` within 0.05 of every threshold.  Below the
    first threshold the grid is uniform with spacing ``step``.  No node lies on
    a threshold.
    """
    th = diffraction_thresholds(u_max)
    edges = [u_min] + [t for t in th if t > u_min]
    if edges[-1] < u_max - 1e-12:
        edges.append(u_max)
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if lo == u_min:
            n = int(math.ceil((hi - lo) / step))
            pieces.append(lo + (np.arange(n) + 0.5) * (hi - lo) / n)
        else:
            span = math.sqrt(hi - lo)
            # spacing 2 s h <= step at the top of the interval
            n = int(math.ceil(2.0 * span * span / step))
            s = (np.arange(n) + 0.5) * span / n
            pieces.append(lo + s * s)
    return KKGrid(np.concatenate(pieces), u_min, float(edges[-1]), th)


def _cell_weights(nodes, lo, hi, graded):
    # midpoint-type weights on [lo, hi]; graded intervals work in s = sqrt(u - lo)
    if graded:
        s = np.sqrt(nodes - lo)
        edges = np.concatenate([[0.0], 0.5 * (s[1:] + s[:-1]), [math.sqrt(hi - lo)]])
        return np.diff(edges) * 2.0 * s
    edges = np.concatenate([[lo], 0.5 * (nodes[1:] + nodes[:-1]), [hi]])
    return np.diff(edges)


def kk_reconstruct_delta(u, gamma_samples, x, u_min=None, u_max=None, window=1.0):
    """Reconstruct the normal-incidence in-plane shift Delta(x) from Gamma(u).

    The width Gamma(u) = 3 Im D(u) with D = lambda g_xx at k_par = 0 grows like
    u^-2 at small spacing, so the dispersion integral is applied to D after
    removing its singular small-u part A3/u^3 + i/(4 pi u^2) + A1/u (A3, A1 from
    the square-lattice Epstein zeta).  The remainder H has Im H = Gamma/3 -
    1/(4 pi u^2), even in u and equal to -1/3 below the first threshold, and
    its real part follows from a principal-value integral evaluated with
    ``pv_integral``.

    Args:
        u: sample spacings (increasing), e.g. ``kk_grid().u``.
        gamma_samples: Gamma(u) at those spacings.
        x: evaluation spacing, strictly inside the grid and away from thresholds.
        u_min, u_max: ends of the sampled range (default: first/last node).
            [0, u_min] is added analytically and requires u_min < 1.
        window: width of the trailing window used for the tail model.

    Returns:
        (delta, truncation_error)
    """
    u = np.asarray(u, dtype=float)
    gam = np.asarray(gamma_samples, dtype=float)
    if u.shape != gam.shape or u.ndim != 1 or u.size < 8:
        raise ContractViolation("u and gamma_samples must be matching 1-d arrays")
    if np.any(np.diff(u) <= 0):
        raise ContractViolation("u must be strictly increasing")
    lo_all = u[0] if u_min is None else float(u_min)
    hi_all = u[-1] if u_max is None else float(u_max)
    if not lo_all < 1.0:
        raise ContractViolation("grid must start below the first threshold")
    if not (u[0] < x < u[-1]):
        raise ContractViolation("x must lie inside the sampled grid")
    th = diffraction_thresholds(hi_all + 1.0)
    if np.any(np.abs(th - x) < 1e-3):
        raise ThresholdDegeneracy("evaluation point sits on a diffraction threshold")

    imh = gam / 3.0 - 1.0 / (4.0 * np.pi * u * u)
    edges = [lo_all] + [t for t in th if lo_all < t < hi_all] + [hi_all]
    weights = np.zeros_like(u)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (u > lo) & (u < hi)
        if hi == hi_all:
            sel |= u == hi
        nodes, vals = u[sel], imh[sel]
        if nodes.size == 0:
            continue
        w = _cell_weights(nodes, lo, hi, graded=lo != lo_all)
        weights[sel] = w
        total += np.sum(w * vals / (x + nodes))
        if lo < x < hi:
            if nodes.size < 4:
                raise ContractViolation("too few samples around the pole")
            total += pv_integral(nodes, vals, x)
            # end gaps between the interval edges and the outermost nodes
            total += vals[0] * (nodes[0] - lo) / (x - 0.5 * (lo + nodes[0]))
            total += vals[-1] * (hi - nodes[-1]) / (x - 0.5 * (hi + nodes[-1]))
        else:
            total += np.sum(w * vals / (x - nodes))
    # [0, u_min]: Im H = -1/3 exactly
    total += -(1.0 / 3.0) * math.log((x + lo_all) / (x - lo_all))

    # tail beyond u_max modelled by the trailing mean of Im H
    tw = u >= hi_all - window
    mean = float(np.average(imh[tw], weights=weights[tw]))
    spread = float(np.sqrt(np.average((imh[tw] - mean) ** 2, weights=weights[tw])))
    logk = math.log((hi_all - x) / (hi_all + x))
    total += mean * logk

    # H is analytic in the upper half u-plane: Re H(x) = (1/pi) PV int Im H(u)/(u - x)
    re_h = -total / np.pi
    delta = -1.5 * (KK_A3 / x**3 + KK_A1 / x + re_h)
    err = 1.5 * (abs(mean) + spread) * abs(logk) / np.pi
    return float(delta), float(err)
