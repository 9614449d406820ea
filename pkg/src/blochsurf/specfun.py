"""Special functions for the scattering solver.

Everything here is vectorized over numpy arrays and stateless.  The
module fixes the quasiperiodicity sign convention used throughout the
package: a component with parameter ``alpha`` picks up the phase factor
``exp(-i*lam*alpha)`` under a shift by one period ``lam``, and its
Fourier modes in the horizontal direction are ``exp(i*(lam_dual*j +
QP_SIGN*alpha)*x1)``.  With ``QP_SIGN = -1`` this matches the lattice-sum
definition of the transform in :mod:`blochsurf.bloch`; the consistency of
the pair is checked numerically by the self-test.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import j0, y0

# Sign of alpha in the mode exponents lam_dual*j + QP_SIGN*alpha.
# Adjudicated against the direct lattice sum (see cli selftest).
QP_SIGN = -1.0


@dataclass(frozen=True)
class WaveParams:
    """Wavenumber and periodicity of the problem.

    Attributes
    ----------
    k : float
        Wavenumber, > 0.
    lam : float
        Surface period, > 0.
    lam_dual : float
        Dual period 2*pi/lam (spacing of the horizontal Fourier modes).
    """

    k: float
    lam: float
    lam_dual: float = field(init=False)

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError(f"wavenumber must be positive, got {self.k}")
        if self.lam <= 0:
            raise ValueError(f"period must be positive, got {self.lam}")
        object.__setattr__(self, "lam_dual", 2.0 * np.pi / self.lam)

    @property
    def brillouin_halfwidth(self) -> float:
        """Half-width pi/lam of the interval of quasiperiodicity parameters."""
        return np.pi / self.lam


def branch_sqrt(z):
    """Complex square root with the branch cut on the negative imaginary axis.

    Both real and imaginary part of the result are nonnegative for
    arguments in the closed upper half-plane; in particular the root of a
    negative real number is ``+i*sqrt(|z|)``.  Accepts scalars or arrays.
    """
    z = np.asarray(z, dtype=complex)
    w = np.sqrt(z)
    # principal sqrt already lands in the right half-sector except for
    # arguments in the open lower-left quadrant
    flip = (z.real < 0) & (z.imag < 0)
    w = np.where(flip, -w, w)
    if w.ndim == 0:
        return complex(w)
    return w


def mode_wavenumber(j, alpha, params: WaveParams):
    """Vertical wavenumber of horizontal Fourier mode ``j`` at parameter ``alpha``.

    Returns ``branch_sqrt(k^2 - t^2)`` with ``t = lam_dual*j + QP_SIGN*alpha``:
    positive real for propagating modes (|t| < k), positive imaginary for
    evanescent ones.  ``j`` may be an integer array.
    """
    t = params.lam_dual * np.asarray(j, dtype=float) + QP_SIGN * alpha
    return branch_sqrt(params.k**2 - t * t)


def hankel1_0(x):
    """Hankel function of the first kind of order zero, J0(x) + i*Y0(x).

    Only real positive arguments arise (distances scaled by the
    wavenumber).  Nonpositive input raises, since the field is never
    evaluated at its own source point.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ValueError("hankel1_0 requires strictly positive arguments")
    out = j0(x) + 1j * y0(x)
    if out.ndim == 0:
        return complex(out)
    return out


def sinc_complex(z):
    """Entire function sin(z)/z with sinc(0) = 1, for complex arguments.

    A 4-term Taylor expansion is used below |z| < 1e-4 to avoid the
    cancellation in the quotient.
    """
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 1e-4
    zsafe = np.where(small, 1.0, z)
    direct = np.sin(zsafe) / zsafe
    z2 = z * z
    taylor = 1.0 - z2 / 6.0 + z2 * z2 / 120.0 - z2 * z2 * z2 / 5040.0
    out = np.where(small, taylor, direct)
    if out.ndim == 0:
        return complex(out)
    return out
