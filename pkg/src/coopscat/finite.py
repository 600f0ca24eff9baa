"""Direct coupled-dipole solver for finite arrays.

The local fields at the N sites solve the Lippmann-Schwinger system

    [1 - 4 pi^2 alpha lambda G] E = E_0

with ``alpha`` the bare polarizability in units of eps0 lambda^3 and G the
3N x 3N matrix of dyadic Green's functions between distinct sites (zero
diagonal blocks).  Unknowns are ordered site-major: index 3*n + i.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np
from scipy import linalg
from scipy.spatial import cKDTree

from .core import K0
from .errors import ContractViolation
from .greens import MIN_SEPARATION, dyadic_green
from .scatter import EmitterParams, bare_polarizability

#: dense-memory guard on the number of sites
MAX_SITES = 5000


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

@dataclass
class FiniteArray:
    """Explicit emitter positions with provenance and emitter parameters."""

    positions: np.ndarray
    params: EmitterParams = field(default_factory=EmitterParams)
    delta: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ContractViolation("positions must have shape (N, 3)")
        if len(pos) > 1:
            dmin, _ = cKDTree(pos).query(pos, k=2)
            if dmin[:, 1].min() < MIN_SEPARATION:
                raise ContractViolation("two sites closer than %g lambda" % MIN_SEPARATION)
        self.positions = pos

    @property
    def n_sites(self):
        return len(self.positions)

    @property
    def alpha(self):
        return bare_polarizability(self.params, self.delta)


def perfect_array(nx, ny, a, params=None, delta=0.0):
    """nx x ny square array with spacing ``a`` centred on the origin in z = 0."""
    if nx < 1 or ny < 1:
        raise ContractViolation("array dimensions must be positive")
    if not a > 0:
        raise ContractViolation("lattice constant must be positive")
    ix = (np.arange(nx) - 0.5 * (nx - 1)) * a
    iy = (np.arange(ny) - 0.5 * (ny - 1)) * a
    gx, gy = np.meshgrid(ix, iy, indexing="ij")
    pos = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])
    prov = {"lattice": {"nx": nx, "ny": ny, "a": a}, "seed": None, "removed": []}
    return FiniteArray(pos, params or EmitterParams(), float(delta), prov)


def displaced(array, dr, rng, mode="3d"):
    """Copy of ``array`` with independent Gaussian displacements of rms ``dr``.

    ``mode`` is "3d" (all three cartesian components) or "inplane" (x, y only).
    """
    if mode not in ("3d", "inplane"):
        raise ContractViolation("disorder mode must be '3d' or 'inplane'")
    shift = rng.normal(0.0, dr, size=array.positions.shape)
    if mode == "inplane":
        shift[:, 2] = 0.0
    prov = dict(array.provenance, disorder={"dr": dr, "mode": mode})
    return FiniteArray(array.positions + shift, array.params, array.delta, prov)


def remove_sites(array, indices):
    """Copy of ``array`` without the listed site indices."""
    idx = sorted(set(int(i) for i in indices))
    if any(i < 0 or i >= array.n_sites for i in idx):
        raise ContractViolation("removed sites must belong to the array")
    keep = np.setdiff1d(np.arange(array.n_sites), idx)
    prov = dict(array.provenance, removed=list(array.provenance.get("removed", [])) + idx)
    return FiniteArray(array.positions[keep], array.params, array.delta, prov)


def central_site(array):
    """Index of the site closest to the origin."""
    return int(np.argmin(np.linalg.norm(array.positions, axis=1)))


# ---------------------------------------------------------------------------
# sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BeamSpec:
    """Paraxial Gaussian beam focused on the origin, incident in the xz-plane.

    ``pol`` is "p" or "s"; at normal incidence "x" and "y" are accepted too.
    """

    w0: float
    theta: float = 0.0
    pol: str = "s"
    amplitude: float = 1.0

    def __post_init__(self):
        if self.w0 < 0.5:
            raise ContractViolation("waist below lambda/2 breaks the paraxial approximation")
        if not (0.0 <= self.theta < np.pi / 2):
            raise ContractViolation("incidence angle must satisfy 0 <= theta < pi/2")
        if self.pol not in ("p", "s", "x", "y"):
            raise ContractViolation("polarization must be p, s, x or y")
        if self.pol in ("x", "y") and self.theta != 0.0:
            raise ContractViolation("x/y polarization labels only apply at normal incidence")

    @property
    def rayleigh_range(self):
        return np.pi * self.w0**2

    @property
    def direction(self):
        return np.array([math.sin(self.theta), 0.0, math.cos(self.theta)])

    @property
    def polarization(self):
        ct, st = math.cos(self.theta), math.sin(self.theta)
        return {
            "p": np.array([ct, 0.0, -st]),
            "s": np.array([0.0, -1.0, 0.0]),
            "x": np.array([1.0, 0.0, 0.0]),
            "y": np.array([0.0, 1.0, 0.0]),
        }[self.pol]

    @property
    def power(self):
        """(pi/2) w0^2 |E0|^2, beam power in units of c eps0 E0^2 lambda^2."""
        return 0.5 * np.pi * self.w0**2 * self.amplitude**2

    def width(self, z):
        return self.w0 * np.sqrt(1.0 + (np.asarray(z) / self.rayleigh_range) ** 2)

    def curvature(self, z):
        """Inverse radius of curvature 1/R(z) (zero at the focus)."""
        z = np.asarray(z, dtype=float)
        return z / (z * z + self.rayleigh_range**2)

    def gouy(self, z):
        return np.arctan(np.asarray(z) / self.rayleigh_range)

    def waist_ok(self, a, n_sites):
        """Waist-versus-array rule w0 <= 0.3 a sqrt(N) cos(theta)."""
        return self.w0 <= 0.3 * a * math.sqrt(n_sites) * math.cos(self.theta) + 1e-12


def gaussian_beam(beam, k, r):
    """Paraxial Gaussian field at points ``r`` (..., 3).

    In the rotated frame x' = x cos(theta) - z sin(theta), z' = x sin(theta) +
    z cos(theta) the field is
    E0 (w0/w) exp(-rho^2/w^2) exp(i k z' + i k rho^2 / 2R - i arctan(z'/z_R)) e_pol.
    """
    r = np.asarray(r, dtype=float)
    ct, st = math.cos(beam.theta), math.sin(beam.theta)
    x, y, z = r[..., 0], r[..., 1], r[..., 2]
    xp = x * ct - z * st
    zp = x * st + z * ct
    rho2 = xp * xp + y * y
    w = beam.width(zp)
    phase = k * zp + 0.5 * k * rho2 * beam.curvature(zp) - beam.gouy(zp)
    amp = beam.amplitude * (beam.w0 / w) * np.exp(-rho2 / w**2 + 1j * phase)
    return amp[..., None] * beam.polarization


@dataclass(frozen=True)
class PlaneWave:
    """Unit-amplitude plane wave exp(i k e_k . r) e_pol."""

    direction: tuple = (0.0, 0.0, 1.0)
    polarization: tuple = (1.0, 0.0, 0.0)
    amplitude: complex = 1.0

    def __call__(self, k, r):
        r = np.asarray(r, dtype=float)
        ph = np.exp(1j * k * (r @ np.asarray(self.direction, dtype=float)))
        return self.amplitude * ph[..., None] * np.asarray(self.polarization, dtype=complex)


def incident_field(source, k, r):
    if isinstance(source, BeamSpec):
        return gaussian_beam(source, k, r)
    if callable(source):
        return source(k, r)
    raise ContractViolation("source must be a BeamSpec or callable(k, r)")


# ---------------------------------------------------------------------------
# linear system
# ---------------------------------------------------------------------------

def green_matrix(positions, k, chunk=256):
    """3N x 3N matrix of lambda * G between distinct sites (zero diagonal blocks)."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    lam = 2.0 * np.pi / k
    out = np.zeros((3 * n, 3 * n), complex)
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        sep = pos[start:stop, None, :] - pos[None, :, :]
        rows = np.arange(start, stop)
        sep[rows - start, rows] = (1.0, 0.0, 0.0)  # placeholder on the diagonal
        blk = lam * dyadic_green(k, sep)
        blk[rows - start, rows] = 0.0
        out[3 * start:3 * stop] = blk.transpose(0, 2, 1, 3).reshape(3 * (stop - start), 3 * n)
    return out


def build_system(array, k=K0):
    """M = I - 4 pi^2 alpha lambda G for the array at its detuning."""
    if array.n_sites > MAX_SITES:
        raise ContractViolation(
            "%d sites exceed the dense-solver guard of %d; iterative or tiled "
            "solvers are out of scope" % (array.n_sites, MAX_SITES)
        )
    m = -4.0 * np.pi**2 * array.alpha * green_matrix(array.positions, k)
    m[np.diag_indices_from(m)] += 1.0
    return m


@dataclass
class DipoleSolution:
    """Solved local fields and dipoles (dipoles in units eps0 lambda^3 E0)."""

    local_fields: np.ndarray
    dipoles: np.ndarray
    incident: np.ndarray
    residual: float
    source: object
    k: float


def solve_dipoles(array, source, k=K0):
    """Solve the coupled-dipole system for an incident beam or plane wave."""
    m = build_system(array, k)
    e0 = incident_field(source, k, array.positions)
    rhs = e0.reshape(-1)
    lu = linalg.lu_factor(m.copy(), check_finite=False)
    e = linalg.lu_solve(lu, rhs, check_finite=False)
    resid = float(np.linalg.norm(m @ e - rhs) / max(np.linalg.norm(rhs), 1e-300))
    e = e.reshape(-1, 3)
    return DipoleSolution(e, array.alpha * e, e0, resid, source, k)


def field_at(solution, array, r, chunk=2048):
    """Total field E0(r) + 4 pi^2 sum_n lambda G(r - r_n) p_n at points ``r`` (..., 3)."""
    r = np.asarray(r, dtype=float)
    shape = r.shape[:-1]
    pts = r.reshape(-1, 3)
    k = solution.k
    lam = 2.0 * np.pi / k
    tree = cKDTree(array.positions)
    dist, _ = tree.query(pts)
    if np.any(dist < MIN_SEPARATION):
        raise ContractViolation("field requested on top of an emitter")
    out = incident_field(solution.source, k, pts).astype(complex)
    for start in range(0, len(pts), chunk):
        sep = pts[start:start + chunk, None, :] - array.positions[None, :, :]
        g = dyadic_green(k, sep)
        out[start:start + chunk] += 4.0 * np.pi**2 * lam * np.einsum(
            "pnij,nj->pi", g, solution.dipoles
        )
    return out.reshape(shape + (3,))


def scattered_at(solution, array, r):
    """Field radiated by the dipoles only."""
    tot = field_at(solution, array, r)
    return tot - incident_field(solution.source, solution.k, np.asarray(r, dtype=float))


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------

@dataclass
class RTResult:
    T: float
    R: float
    warnings: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.T, self.R))


def extract_rt(array, beam, k=K0, distance=6.0, solution=None, samples=16):
    """Numerical transmission and reflection for a Gaussian beam.

    T is |E_tot / E_inc|^2 averaged over one wavelength along the beam axis
    beyond ``distance`` (in z); R is |E_sc|^2 on the specularly reflected axis
    normalised to |E_inc|^2 at the mirror-image point, averaged likewise.
    """
    notes = []
    a = array.provenance.get("lattice", {}).get("a")
    if a is not None and not beam.waist_ok(a, array.n_sites):
        msg = "waist %.3g exceeds 0.3 a sqrt(N) cos(theta); edge diffraction expected" % beam.w0
        warnings.warn(msg)
        notes.append(msg)
    if solution is None:
        solution = solve_dipoles(array, beam, k)
    ek = beam.direction
    ekr = ek * np.array([1.0, 1.0, -1.0])
    lam = 2.0 * np.pi / k
    s = distance / math.cos(beam.theta) + lam * (np.arange(samples) + 0.5) / samples
    fwd = s[:, None] * ek
    back = s[:, None] * ekr
    e_inc = incident_field(beam, k, fwd)
    e_tot = field_at(solution, array, fwd)
    T = float(np.mean(np.sum(np.abs(e_tot) ** 2, -1) / np.sum(np.abs(e_inc) ** 2, -1)))
    e_sc = scattered_at(solution, array, back)
    R = float(np.mean(np.sum(np.abs(e_sc) ** 2, -1) / np.sum(np.abs(e_inc) ** 2, -1)))
    return RTResult(T, R, notes)


def power_balance(solution, array, n_theta=26, n_phi=52):
    """Extinguished and scattered power of the solved dipoles.

    P_ext = (k/2) Im sum_n E0(r_n)^* . p_n
    P_sca = (k^4 / 32 pi^2) int |(1 - r r) sum_n p_n exp(-i k r . r_n)|^2 dOmega

    The angular integral uses a Gauss-Legendre rule in cos(theta) times a
    uniform rule in phi.
    """
    k = solution.k
    p = solution.dipoles
    p_ext = 0.5 * k * float(np.imag(np.sum(np.conj(solution.incident) * p)))
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - mu**2)
    rhat = np.stack(
        [st[:, None] * np.cos(phi)[None], st[:, None] * np.sin(phi)[None],
         np.broadcast_to(mu[:, None], (n_theta, n_phi))], -1
    ).reshape(-1, 3)
    w = (wmu[:, None] * np.full(n_phi, 2.0 * np.pi / n_phi)[None]).reshape(-1)
    amp = np.exp(-1j * k * rhat @ array.positions.T) @ p
    trans = amp - rhat * np.sum(rhat * amp, -1)[:, None]
    p_sca = k**4 / (32.0 * np.pi**2) * float(np.sum(w * np.sum(np.abs(trans) ** 2, -1)))
    return p_ext, p_sca


def collective_modes(array, k=K0):
    """Complex eigenvalues of -(3/2) lambda G: (frequency shift, total width) per mode.

    An eigenvalue eps gives shift Re(eps) and total width gamma - 2 Im(eps).
    """
    eps = np.linalg.eigvals(-1.5 * green_matrix(array.positions, k))
    order = np.lexsort((eps.imag, eps.real))
    eps = eps[order]
    return eps.real, array.params.gamma - 2.0 * eps.imag


# ---------------------------------------------------------------------------
# disorder, defects and saturation
# ---------------------------------------------------------------------------

def uniform_mode_shift(positions, k=K0):
    """Cooperative shift of the uniform-phase x-polarized mode of a finite array.

    Rayleigh quotient -(3/2)(1/N) sum_{n != m} Re lambda G_xx(r_n - r_m); it tends
    to the infinite-lattice Delta_xx(k_par = 0) as the array grows.
    """
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    lam = 2.0 * np.pi / k
    total = 0.0
    for start in range(0, n, 256):
        sep = pos[start:start + 256, None, :] - pos[None, :, :]
        d = np.linalg.norm(sep, axis=-1)
        rows = np.arange(start, min(start + 256, n))
        d[rows - start, rows] = 1.0
        kr = k * d
        e = np.exp(1j * kr) / (4.0 * np.pi * d)
        gxx = e * ((1.0 + (1j * kr - 1.0) / kr**2) + (-1.0 + (3.0 - 3.0j * kr) / kr**2) * (sep[..., 0] / d) ** 2)
        gxx[rows - start, rows] = 0.0
        total += float(np.sum(gxx.real))
    return -1.5 * lam * total / n


@dataclass
class DisorderStats:
    dr: float
    n_samples: int
    shifts: np.ndarray
    mean: float
    stderr: float
    delta_ordered: float
    predicted: float
    seed: object
    mode: str

    @property
    def z_score(self):
        if self.stderr == 0.0:
            return 0.0 if self.mean == self.predicted else math.inf
        return (self.mean - self.predicted) / self.stderr


def disorder_ensemble(nx, ny, a, dr, n_samples, seed, mode="3d", k=K0):
    """Monte-Carlo statistics of the disorder-induced cooperative shift.

    Each sample displaces every site by an independent zero-mean Gaussian of
    rms ``dr`` per cartesian component and records the change of the
    uniform-phase mode shift (``uniform_mode_shift``) relative to the ordered
    array.  The reference value is 4 pi^2 (dr/lambda)^2 Delta_N with Delta_N the
    ordered finite-array shift.

    Random numbers come from numpy's PCG64 generator seeded through
    SeedSequence(seed), one spawned child stream per sample.
    """
    if dr < 0 or dr > 0.05 * a + 1e-15:
        raise ContractViolation("rms displacement must satisfy 0 <= dr <= 0.05 a")
    if n_samples < 1:
        raise ContractViolation("need at least one sample")
    base = perfect_array(nx, ny, a)
    d0 = uniform_mode_shift(base.positions, k)
    children = np.random.SeedSequence(seed).spawn(n_samples)
    shifts = np.empty(n_samples)
    for i, child in enumerate(children):
        if dr == 0.0:
            shifts[i] = 0.0
            continue
        rng = np.random.Generator(np.random.PCG64(child))
        arr = displaced(base, dr, rng, mode)
        shifts[i] = uniform_mode_shift(arr.positions, k) - d0
    lam = 2.0 * np.pi / k
    mean = float(shifts.mean())
    se = float(shifts.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    pred = 4.0 * np.pi**2 * (dr / lam) ** 2 * d0
    return DisorderStats(dr, n_samples, shifts, mean, se, d0, pred, seed, mode)


def defect_study(nx, ny, a, removed, beam, delta=0.0, k=K0, params=None):
    """Change of (T, R) when ``removed`` sites are taken out of the array."""
    base = perfect_array(nx, ny, a, params, delta)
    ref = extract_rt(base, beam, k)
    if not removed:
        return 0.0, 0.0, ref, ref
    cut = remove_sites(base, removed)
    cut.provenance["lattice"] = base.provenance["lattice"]
    res = extract_rt(cut, beam, k)
    return res.T - ref.T, res.R - ref.R, ref, res


@dataclass
class SaturationEstimate:
    p0: float
    n_photons: float
    gamma_total: float
    w_sat: float
    power_sum: float


def saturation_estimate(a=0.49, w0=1.5, gamma_total=None):
    """Power scale at which the array saturates.

    The fraction of beam power absorbed by the central atom is
    P0 = a^2 / ((pi/2) w0^2); saturation needs N = 1/P0 photons per cooperative
    lifetime, so W_sat = N (Gamma + gamma) in units hbar omega_a gamma.  Also
    returns the lattice sum of P_n, which should be close to one.
    """
    if w0 < 0.5:
        raise ContractViolation("waist below lambda/2 is not paraxial")
    if not a > 0:
        raise ContractViolation("lattice constant must be positive")
    if gamma_total is None:
        from .cooperative import cooperative_response

        gamma_total = 1.0 + cooperative_response(a).gamma_tensor[0, 0]
    p0 = a * a / (0.5 * np.pi * w0 * w0)
    nmax = int(math.ceil(6.0 * w0 / a)) + 1
    n = np.arange(-nmax, nmax + 1)
    g1 = np.exp(-2.0 * (a / w0) ** 2 * n * n)
    psum = float(p0 * g1.sum() ** 2)
    n_ph = 1.0 / p0
    return SaturationEstimate(p0, n_ph, float(gamma_total), n_ph * gamma_total, psum)


def far_field_order_powers(solution, array, a, kpar, side=-1, n_theta=120, n_phi=240):
    """Radiated power per diffraction order in one half space.

    The far-field intensity of the dipoles is integrated over the half space
    ``side * z > 0`` and every direction is attributed to the nearest
    propagating-order direction (k_par + q_m, side * kappa_m)/k.

    Returns:
        dict mapping order index (mx, my) to power, same units as
        ``power_balance``.
    """
    from .lattice import propagating_orders

    k = solution.k
    orders = propagating_orders(a, k, kpar)
    dirs = np.array([
        [kpar.kx + o.qx, kpar.ky + o.qy, side * float(np.real(o.kappa))] for o in orders
    ]) / k
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    mu = 0.5 * (mu + 1.0) * side  # cos(theta) on the requested half space
    wmu = 0.5 * wmu
    phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - mu**2)
    rhat = np.stack(
        [st[:, None] * np.cos(phi)[None], st[:, None] * np.sin(phi)[None],
         np.broadcast_to(mu[:, None], (n_theta, n_phi))], -1
    ).reshape(-1, 3)
    w = (wmu[:, None] * np.full(n_phi, 2.0 * np.pi / n_phi)[None]).reshape(-1)
    p = solution.dipoles
    power = np.empty(len(rhat))
    for start in range(0, len(rhat), 4096):
        rh = rhat[start:start + 4096]
        amp = np.exp(-1j * k * rh @ array.positions.T) @ p
        trans = amp - rh * np.sum(rh * amp, -1)[:, None]
        power[start:start + 4096] = np.sum(np.abs(trans) ** 2, -1)
    power *= w * k**4 / (32.0 * np.pi**2)
    nearest = np.argmax(rhat @ dirs.T, axis=1)
    return {o.index: float(power[nearest == i].sum()) for i, o in enumerate(orders)}
