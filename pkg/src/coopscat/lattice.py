"""Square-lattice geometry, reciprocal lattice and diffraction orders."""

from dataclasses import dataclass, field
import math

import numpy as np

from .core import K0
from .errors import ContractViolation, ThresholdDegeneracy

#: relative distance to a diffraction threshold treated as degenerate
THRESHOLD_EPS = 1e-9


@dataclass(frozen=True)
class SquareLattice:
    """Square Bravais lattice with spacing ``a`` in the z = 0 plane."""

    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ContractViolation("lattice constant must be positive")

    @property
    def cell_area(self):
        return self.a * self.a

    @property
    def reciprocal(self):
        """Length of the reciprocal generators, 2 pi / a."""
        return 2.0 * np.pi / self.a

    def site(self, nx, ny):
        return np.array([self.a * nx, self.a * ny, 0.0])


@dataclass(frozen=True)
class KParallel:
    """In-plane wavevector (kx, ky) at free-space wavenumber ``k``."""

    kx: float
    ky: float
    k: float = K0

    @classmethod
    def from_angles(cls, theta, phi, k=K0):
        """Wavevector of a plane wave with polar angle ``theta`` and azimuth ``phi``."""
        s = math.sin(theta)
        return cls(k * s * math.cos(phi), k * s * math.sin(phi), k)

    @property
    def vec(self):
        return np.array([self.kx, self.ky])

    @property
    def norm(self):
        return math.hypot(self.kx, self.ky)

    @property
    def propagating(self):
        return self.norm < self.k

    @property
    def kz(self):
        """Out-of-plane component for propagating incidence."""
        if not self.propagating:
            raise ContractViolation("k_parallel outside the light cone has no real kz")
        return math.sqrt(self.k * self.k - self.norm**2)

    @property
    def theta(self):
        return math.asin(min(self.norm / self.k, 1.0))

    @property
    def phi(self):
        return math.atan2(self.ky, self.kx)

    def __neg__(self):
        return KParallel(-self.kx, -self.ky, self.k)


@dataclass(frozen=True)
class DiffractionOrder:
    """Reciprocal-lattice channel (mx, my) with its out-of-plane wavenumber."""

    mx: int
    my: int
    qx: float
    qy: float
    kappa: complex
    propagating: bool = field(default=False)

    @property
    def index(self):
        return (self.mx, self.my)


def bz_path(a, points_per_segment):
    """Gamma -> X -> M -> Gamma path through the first Brillouin zone.

    Each segment is sampled uniformly with ``points_per_segment`` points
    including both corners; shared corners appear once.

    Returns:
        list of KParallel.
    """
    if not a > 0:
        raise ContractViolation("lattice constant must be positive")
    if points_per_segment < 2:
        raise ContractViolation("need at least 2 points per segment")
    b = np.pi / a
    corners = [(0.0, 0.0), (b, 0.0), (b, b), (0.0, 0.0)]
    pts = []
    for (x0, y0), (x1, y1) in zip(corners[:-1], corners[1:]):
        t = np.linspace(0.0, 1.0, points_per_segment)
        if pts:
            t = t[1:]
        for ti in t:
            pts.append(KParallel(x0 + ti * (x1 - x0), y0 + ti * (y1 - y0)))
    return pts


def _orders(a, k, kpar, mmax):
    g = 2.0 * np.pi / a
    out = []
    for mx in range(-mmax, mmax + 1):
        for my in range(-mmax, mmax + 1):
            bx = kpar.kx + g * mx
            by = kpar.ky + g * my
            b = math.hypot(bx, by)
            if abs(b - k) < THRESHOLD_EPS * k:
                raise ThresholdDegeneracy(
                    "diffraction order (%d, %d) sits on its threshold" % (mx, my),
                    order=(mx, my),
                )
            kap2 = k * k - b * b
            kappa = math.sqrt(kap2) if kap2 > 0 else 1j * math.sqrt(-kap2)
            out.append(DiffractionOrder(mx, my, g * mx, g * my, kappa, kap2 > 0))
    return out


def propagating_orders(a, k, kpar):
    """Diffraction orders with |k_par + q_m| < k.

    Args:
        a: lattice constant.
        k: wavenumber.
        kpar: incident KParallel (must be inside the light cone).

    Returns:
        list of DiffractionOrder, (0, 0) first, then by (mx, my).

    Raises:
        ThresholdDegeneracy: an order lies within 1e-9 k of its threshold.
    """
    if not a > 0:
        raise ContractViolation("lattice constant must be positive")
    if not kpar.norm < k:
        raise ContractViolation("incident k_parallel must lie inside the light cone")
    lam = 2.0 * np.pi / k
    mmax = int(math.ceil(2.0 * a / lam)) + 1
    orders = [o for o in _orders(a, k, kpar, mmax) if o.propagating]
    orders.sort(key=lambda o: (o.index != (0, 0), o.mx, o.my))
    return orders


def is_single_order(a, k, kpar):
    """True when only the specular (0, 0) order propagates."""
    return [o.index for o in propagating_orders(a, k, kpar)] == [(0, 0)]
