"""Brillouin-zone discretization and transform machinery.

The transform of a decaying field u on the periodic strip is the family

    (J u)(alpha, x) = sqrt(lam/2pi) * sum_m u(x1 + lam*m, x2) e^{i lam m alpha}

of quasiperiodic fields over the zone ``(-pi/lam, pi/lam]``; each
component satisfies ``(J u)(alpha, x1+lam) = e^{-i lam alpha} (J u)(alpha, x)``
and u is recovered on the central cell by integrating over the zone.  The
solver samples the zone with N equal intervals, represents each component
as ``e^{-i alpha x1}`` times an alpha-independent periodic finite element
field, and integrates the zone exactly per interval, which produces the
closed-form interval weights below instead of a quadrature in alpha.
"""

from dataclasses import dataclass, field

import numpy as np

from .specfun import WaveParams, branch_sqrt, hankel1_0, sinc_complex, QP_SIGN

__all__ = [
    "BlochGrid",
    "IncidentSource",
    "make_grid",
    "interval_weight",
    "interval_weight_deriv",
    "incident_field",
    "incident_series",
    "lattice_transform",
    "inverse_bloch_nodal",
]


@dataclass(frozen=True)
class BlochGrid:
    """Equispaced samples of the Brillouin zone.

    ``N`` intervals of half-width ``delta = pi/(N*lam)`` with midpoints
    ``alpha_j = -pi/lam + (2j-1)*delta`` for j = 1..N (optionally shifted
    by a fraction of the spacing for cross-validation runs; the shifted
    nodes wrap around the zone).
    """

    N: int
    lam: float
    offset: float = 0.0
    nodes: np.ndarray = field(init=False)
    delta: float = field(init=False)

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("need at least one interval")
        delta = np.pi / (self.N * self.lam)
        j = np.arange(1, self.N + 1)
        nodes = -np.pi / self.lam + (2.0 * j - 1.0) * delta + self.offset * 2.0 * delta
        zone = 2.0 * np.pi / self.lam
        nodes = nodes - zone * np.ceil((nodes - np.pi / self.lam) / zone - 1e-15)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "delta", float(delta))

    def interval(self, j: int):
        """Endpoints (a, b) of the j-th interval, 1-based."""
        a = self.nodes[j - 1] - self.delta
        return a, a + 2.0 * self.delta


def make_grid(N: int, lam: float, offset: float = 0.0) -> BlochGrid:
    return BlochGrid(N=N, lam=lam, offset=offset)


def interval_weight(grid: BlochGrid, j: int, x1):
    """Exact integral of e^{-i alpha x1} over the j-th zone interval.

    Equals ``e^{-i alpha_j x1} * 2 sin(delta x1)/x1`` with the removable
    singularity at x1 = 0 (value 2*delta) handled by a series expansion.
    """
    x1 = np.asarray(x1, dtype=float)
    d = grid.delta
    out = np.exp(-1j * grid.nodes[j - 1] * x1) * _two_sin_over(d, x1)
    if out.ndim == 0:
        return complex(out)
    return out


def _two_sin_over(d, x1):
    small = np.abs(x1) < 1e-8
    xs = np.where(small, 1.0, x1)
    direct = 2.0 * np.sin(d * xs) / xs
    u = d * x1
    taylor = 2.0 * d * (1.0 - u * u / 6.0 + u**4 / 120.0)
    return np.where(small, taylor, direct)


def interval_weight_deriv(grid: BlochGrid, j: int, x1):
    """d/dx1 of :func:`interval_weight` (needed for gradients of weighted tests)."""
    x1 = np.asarray(x1, dtype=float)
    d = grid.delta
    aj = grid.nodes[j - 1]
    phase = np.exp(-1j * aj * x1)
    small = np.abs(x1) < 1e-8
    xs = np.where(small, 1.0, x1)
    core_direct = 2.0 * (d * np.cos(d * xs) * xs - np.sin(d * xs)) / xs**2
    u = d * x1
    core_taylor = 2.0 * d * d * x1 * (-1.0 / 3.0 + u * u / 30.0)
    core = np.where(small, core_taylor, core_direct)
    out = phase * (core - 1j * aj * _two_sin_over(d, x1))
    if out.ndim == 0:
        return complex(out)
    return out


@dataclass(frozen=True)
class IncidentSource:
    """Point source of the half-space Green's function incident field.

    The source sits above the x1-axis and strictly below both surfaces,
    so the field is smooth throughout the computational strip.
    """

    position: tuple  # (y1, y2), y2 > 0
    series_tol: float = 1e-12
    max_terms: int = 4000

    def __post_init__(self):
        if self.position[1] <= 0:
            raise ValueError("source must lie above the x1-axis")


def incident_field(source: IncidentSource, params: WaveParams, points):
    """Half-space Green's function with mirror source, evaluated pointwise.

    ``u(x) = (i/4) [H0^(1)(k|x-y|) - H0^(1)(k|x-y'|)]`` where y' mirrors
    the source across the x1-axis; vanishes on the axis.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    y1, y2 = source.position
    r = np.hypot(p[:, 0] - y1, p[:, 1] - y2)
    rm = np.hypot(p[:, 0] - y1, p[:, 1] + y2)
    out = 0.25j * (hankel1_0(params.k * r) - hankel1_0(params.k * rm))
    return complex(out[0]) if np.ndim(points) == 1 else out


def _series_orders(source, params, alpha, x2_min):
    """Symmetric mode range large enough for the exponential tail bound."""
    k, lst = params.k, params.lam_dual
    y2 = source.position[1]
    gap = x2_min - y2
    if gap <= 0:
        raise ValueError("transform series requires evaluation above the source")
    jprop = int(np.ceil((k + abs(alpha)) / lst)) + 2
    # once |t| > k the term magnitude is ~ exp(-|beta| gap)/(2 |beta| y2) * y2
    need = -np.log(source.series_tol)
    jtail = int(np.ceil((np.sqrt((need / gap) ** 2 + k**2) + abs(alpha)) / lst)) + 2
    return min(max(jprop, jtail), source.max_terms)


def incident_series(source: IncidentSource, params: WaveParams, alpha, points):
    """Mode expansion of the transformed incident field at one ``alpha``.

    Valid for x2 above the source height; the number of retained modes is
    chosen adaptively from the exponential decay of the evanescent tail.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    y1, y2 = source.position
    J = _series_orders(source, params, alpha, float(np.min(p[:, 1])))
    j = np.arange(-J, J + 1)
    t = params.lam_dual * j + QP_SIGN * alpha
    beta = branch_sqrt(params.k**2 - t * t)
    # terms (modes, points)
    phase = np.exp(1j * (np.outer(t, p[:, 0] - y1) + np.outer(beta, p[:, 1])))
    amp = sinc_complex(beta * y2) * y2
    out = (amp[:, None] * phase).sum(axis=0) / np.sqrt(2.0 * np.pi * params.lam)
    return complex(out[0]) if np.ndim(points) == 1 else out


def lattice_transform(u, lam, alpha, points, j_sum=400, tail_correction=False):
    """Direct lattice-sum transform of a callable field.

    ``sqrt(lam/2pi) * sum_{|m|<=j_sum} u(x1+lam*m, x2) e^{i lam m alpha}``
    for an absolutely summable field.  Returns ``(value, tail_estimate)``
    where the estimate extrapolates each tail geometrically from the last
    two retained terms; with ``tail_correction`` the estimate is added to
    the returned value.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    m = np.arange(-j_sum, j_sum + 1)
    vals = np.zeros(len(p), dtype=complex)
    terms_pos = terms_pos1 = terms_neg = terms_neg1 = None
    shifted = np.empty_like(p)
    shifted[:, 1] = p[:, 1]
    for mm in m:
        shifted[:, 0] = p[:, 0] + lam * mm
        term = np.asarray(u(shifted), dtype=complex) * np.exp(1j * lam * mm * alpha)
        vals += term
        if mm == j_sum - 1:
            terms_pos1 = term
        elif mm == j_sum:
            terms_pos = term
        elif mm == -j_sum:
            terms_neg = term
        elif mm == -(j_sum - 1):
            terms_neg1 = term
    tail = np.zeros(len(p), dtype=complex)
    for last, prev, sgn in ((terms_pos, terms_pos1, 1), (terms_neg, terms_neg1, -1)):
        nxt = np.empty_like(p)
        nxt[:, 0] = p[:, 0] + lam * sgn * (j_sum + 1)
        nxt[:, 1] = p[:, 1]
        t_next = np.asarray(u(nxt), dtype=complex) * np.exp(1j * lam * sgn * (j_sum + 1) * alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(last != 0, t_next / np.where(last == 0, 1, last), 0.0)
        ok = np.abs(rho) < 0.999
        tail += np.where(ok, t_next / (1.0 - rho), 0.0)
    scale = np.sqrt(lam / (2.0 * np.pi))
    vals *= scale
    tail *= scale
    if tail_correction:
        vals = vals + tail
    if np.ndim(points) == 1:
        return complex(vals[0]), complex(tail[0])
    return vals, tail


def inverse_bloch_nodal(grid: BlochGrid, cell_fields, mesh):
    """Discrete inverse transform of per-interval periodic nodal fields.

    Given the periodic coefficient fields ``w_j`` (one complex vector over
    the mesh dofs per zone interval), returns the nodal values of

        sqrt(lam/2pi) * sum_j g_j(x1) w_j(x)

    with the exact interval weights ``g_j``; this is the field whose
    transform is piecewise constant per interval through the ``w_j``.
    """
    fields = np.asarray(cell_fields)
    if fields.ndim != 2 or fields.shape[0] != grid.N:
        raise ValueError(f"expected {grid.N} nodal vectors, got shape {fields.shape}")
    if fields.shape[1] != mesh.num_total:
        raise ValueError(
            f"field length {fields.shape[1]} does not match mesh dofs {mesh.num_total}"
        )
    x1 = mesh.nodes[:, 0]
    out = np.zeros(mesh.num_total, dtype=complex)
    for j in range(1, grid.N + 1):
        out += interval_weight(grid, j, x1) * fields[j - 1]
    return np.sqrt(grid.lam / (2.0 * np.pi)) * out
