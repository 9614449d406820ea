"""Transparent boundary condition on the artificial top line.

The outgoing solution above the top line acts on periodic traces as a
Fourier multiplier: mode m carries ``i*sqrt(k^2 - t^2)`` with
``t = lam_dual*m + QP_SIGN*alpha``.  Because the solver integrates each
zone interval exactly, the multiplier is needed in alpha-integrated form;
the antiderivative is elementary on both sides of the cutoff |t| = k and
the integral stays finite and continuous across it, so no special
treatment of Wood anomalies is required.

Trace Fourier coefficients of the piecewise linear hat functions are
computed in closed form (triangle transform), and the boundary matrix is
a weighted Gram matrix of those coefficients.  For the equispaced top
nodes produced by the structured mesh the matrix is circulant, which the
assembly exploits.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .specfun import WaveParams, QP_SIGN

logger = logging.getLogger(__name__)

__all__ = [
    "TraceBasis",
    "DtnBlock",
    "dtn_multiplier",
    "dtn_multiplier_interval",
    "assemble_dtn_block",
    "assemble_dtn_block_pointwise",
    "trace_mass_circulant",
]


def dtn_multiplier(m, alpha, params: WaveParams):
    """Pointwise multiplier ``i*sqrt(k^2 - t^2)`` on periodic trace mode m."""
    t = params.lam_dual * np.asarray(m, dtype=float) + QP_SIGN * alpha
    z = np.asarray(params.k**2 - t * t, dtype=complex)
    w = np.sqrt(z)
    w = np.where((z.real < 0) & (z.imag < 0), -w, w)
    out = 1j * w
    if out.ndim == 0:
        return complex(out)
    return out


def _anti_inside(t, k):
    # antiderivative of sqrt(k^2-t^2) on |t| <= k
    return 0.5 * t * np.sqrt(np.maximum(k * k - t * t, 0.0)) + 0.5 * k * k * np.arcsin(
        np.clip(t / k, -1.0, 1.0)
    )


def _anti_outside(t, k):
    # antiderivative of sqrt(t^2-k^2) on |t| >= k
    r = np.sqrt(np.maximum(t * t - k * k, 0.0))
    return 0.5 * t * r - 0.5 * k * k * np.log(np.abs(t + r))


def dtn_multiplier_interval(m, a, b, params: WaveParams):
    """Exact integral of the multiplier over the zone interval [a, b].

    Written in the mode variable ``t = lam_dual*m + QP_SIGN*alpha`` the
    integrand is ``i*sqrt(k^2-t^2)`` for |t| < k and ``-sqrt(t^2-k^2)``
    beyond the cutoff; the interval is split at |t| = k and each piece
    uses its elementary antiderivative.  Vectorized over m.
    """
    if b < a:
        raise ValueError("empty interval")
    k = params.k
    m = np.asarray(m, dtype=float)
    e1 = params.lam_dual * m + QP_SIGN * a
    e2 = params.lam_dual * m + QP_SIGN * b
    t1, t2 = np.minimum(e1, e2), np.maximum(e1, e2)

    out = np.zeros(np.shape(m), dtype=complex)
    # inside piece: [max(t1,-k), min(t2,k)]
    lo = np.clip(t1, -k, k)
    hi = np.clip(t2, -k, k)
    has = hi > lo
    out += np.where(has, 1j * (_anti_inside(hi, k) - _anti_inside(lo, k)), 0.0)
    # left outside piece: [t1, min(t2,-k)]
    hi_l = np.minimum(t2, -k)
    has = hi_l > t1
    out += np.where(has, -(_anti_outside(hi_l, k) - _anti_outside(np.minimum(t1, -k), k)), 0.0)
    # right outside piece: [max(t1,k), t2]
    lo_r = np.maximum(t1, k)
    has = t2 > lo_r
    out += np.where(has, -(_anti_outside(np.maximum(t2, k), k) - _anti_outside(lo_r, k)), 0.0)
    if out.ndim == 0:
        return complex(out)
    return out


@dataclass(frozen=True)
class TraceBasis:
    """Fourier data of the top-boundary nodal traces.

    ``coeff(ell, m) = integral over one period of hat_ell(x1) e^{-i lam_dual m x1} dx1``.
    For hats of half-width ``dx`` centered at ``x_ell`` this is
    ``dx * sinc^2(lam_dual m dx/2) * e^{-i lam_dual m x_ell}``.
    """

    dofs: np.ndarray  # global dof indices of the top nodes, in x1 order
    x1: np.ndarray  # node positions
    dx: float  # spacing (nodes are equispaced)
    lam: float
    m_trunc: int

    @classmethod
    def from_mesh(cls, mesh, m_trunc=None):
        x1 = mesh.nodes[mesh.top_dofs, 0]
        if not np.allclose(np.diff(x1), mesh.dx, rtol=0, atol=1e-12):
            raise ValueError("top boundary nodes are not equispaced")
        n = len(x1)
        if m_trunc is None:
            m_trunc = max(32, 4 * n)
        return cls(dofs=mesh.top_dofs, x1=x1, dx=mesh.dx, lam=mesh.lam, m_trunc=int(m_trunc))

    @property
    def modes(self):
        return np.arange(-self.m_trunc, self.m_trunc + 1)

    def hat_amplitude(self, m=None):
        """Real radial part dx*sinc^2(lam_dual m dx/2) of the coefficients."""
        if m is None:
            m = self.modes
        u = (np.pi / self.lam) * np.asarray(m, dtype=float) * self.dx
        s = np.ones_like(u)
        nz = u != 0
        s[nz] = np.sin(u[nz]) / u[nz]
        return self.dx * s * s

    def coeff_matrix(self):
        """Dense (modes, nodes) coefficient matrix; only used as a fallback."""
        m = self.modes
        w = self.hat_amplitude(m)
        lst = 2.0 * np.pi / self.lam
        return w[:, None] * np.exp(-1j * lst * np.outer(m, self.x1))


@dataclass(frozen=True)
class DtnBlock:
    """Boundary matrix over the top dofs for one zone interval.

    ``circ`` holds the value of entry (ell, ell') as a function of
    ``(ell' - ell) mod n``; the sign convention is such that the block is
    ADDED to the volume part of the interval stiffness matrix.
    """

    circ: np.ndarray
    interval: tuple
    m_trunc: int

    @property
    def n(self):
        return len(self.circ)

    def dense(self):
        d = (np.arange(self.n)[None, :] - np.arange(self.n)[:, None]) % self.n
        return self.circ[d]

    def matvec(self, x):
        # entry (i,j) = circ[(j-i) mod n]: first column is circ[(-i) mod n]
        col = np.empty_like(self.circ)
        col[0] = self.circ[0]
        col[1:] = self.circ[:0:-1]
        return np.fft.ifft(np.fft.fft(col) * np.fft.fft(x))


def _gram_circulant(basis: TraceBasis, mults):
    """First row of -(1/lam) * sum_m mults_m |w_m|^2 e^{-i lam_dual m d dx}."""
    m = basis.modes
    w2 = basis.hat_amplitude(m) ** 2
    lst = 2.0 * np.pi / basis.lam
    n = len(basis.x1)
    d = np.arange(n) * basis.dx
    phases = np.exp(-1j * lst * np.outer(m, d))
    return -(1.0 / basis.lam) * (mults * w2) @ phases


def assemble_dtn_block(basis: TraceBasis, interval, params: WaveParams, verify=False) -> DtnBlock:
    """Alpha-integrated boundary matrix for one zone interval."""
    a, b = interval
    mult = dtn_multiplier_interval(basis.modes, a, b, params)
    circ = _gram_circulant(basis, mult)
    if verify:
        double = TraceBasis(
            dofs=basis.dofs, x1=basis.x1, dx=basis.dx, lam=basis.lam, m_trunc=2 * basis.m_trunc
        )
        mult2 = dtn_multiplier_interval(double.modes, a, b, params)
        circ2 = _gram_circulant(double, mult2)
        rel = np.linalg.norm(circ2 - circ) / np.linalg.norm(circ2)
        if rel > 1e-6:
            logger.warning(
                "trace truncation unstable on interval %s: doubling m_trunc moves entries by %.2e",
                interval,
                rel,
            )
    return DtnBlock(circ=circ, interval=(a, b), m_trunc=basis.m_trunc)


def assemble_dtn_block_pointwise(basis: TraceBasis, alpha, params: WaveParams) -> DtnBlock:
    """Boundary matrix at a single quasiperiodicity value (diagnostics, tests)."""
    mult = dtn_multiplier(basis.modes, alpha, params)
    circ = _gram_circulant(basis, mult)
    return DtnBlock(circ=circ, interval=(alpha, alpha), m_trunc=basis.m_trunc)


def trace_mass_circulant(basis: TraceBasis):
    """First row of the periodic 1D mass matrix of the top traces."""
    n = len(basis.x1)
    row = np.zeros(n)
    row[0] = 2.0 * basis.dx / 3.0
    row[1] = basis.dx / 6.0
    row[-1] = basis.dx / 6.0
    return row
