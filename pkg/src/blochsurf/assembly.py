"""Assembly of the coupled block linear system.

Unknowns are N periodic nodal fields W_1..W_N (one per zone interval, the
periodized quasiperiodic components of the scattered field) plus one
extra field U (the reconstructed scattered field on the cell).  The
operator has block structure

    [ A_1          C_1 ] [W_1]   [F_1]
    [     ...      ... ] [...] = [...]
    [          A_N C_N ] [W_N]   [F_N]
    [ B_1 ... B_N   I  ] [ U ]   [ 0 ]

where each interval stiffness A_j integrates the alpha-dependent cell
form exactly over its interval (polynomial moments plus the closed-form
boundary multiplier integrals -- no quadrature in alpha), the coupling
blocks C_j carry the perturbation coefficients tested against the
interval-weighted reconstruction, the diagonal blocks B_j express U as
the discrete inverse transform of the W_j, and rows at surface nodes are
replaced by nodal interpolation of the Dirichlet data.

The alpha-expansion of the volume form: with the periodized field w0 and
test v0, the integrand ``(grad + i alpha e1) w0 . (grad - i alpha e1)
conj(v0) - k^2 w0 conj(v0)`` splits into stiffness, an antisymmetric
first-derivative cross term (linear in alpha), and mass terms (constant
and quadratic in alpha), so its interval integral needs only the moments
``I0 = 2 delta``, ``I1 = 2 delta alpha_j``, ``I2 = 2 delta (alpha_j^2 +
delta^2/3)``.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .bloch import BlochGrid, IncidentSource, incident_series, incident_field, interval_weight, interval_weight_deriv
from .dtn import TraceBasis, assemble_dtn_block, assemble_dtn_block_pointwise
from .mesh import CellMesh, QuadratureRule, reference_quadrature
from .specfun import WaveParams

logger = logging.getLogger(__name__)

__all__ = [
    "ElementMatrices",
    "RightHandSide",
    "BlockSystem",
    "assemble_element_matrices",
    "alpha_moments",
    "assemble_coupling",
    "assemble_b_diagonals",
    "assemble_rhs",
    "build_block_system",
    "assemble_stiffness_at_alpha",
    "dump_matrix_market",
]


@dataclass(frozen=True)
class ElementMatrices:
    """Global P1 matrices over all mesh dofs (no boundary-row surgery).

    K is the stiffness matrix, M the mass matrix, and D the antisymmetric
    cross matrix with entries ``int(phi_m d1 phi_ell - phi_ell d1 phi_m)``
    (row = test index).  All integrands are polynomial on each triangle,
    so the entries are exact.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    D: sp.csr_matrix


def assemble_element_matrices(mesh: CellMesh, rule: Optional[QuadratureRule] = None) -> ElementMatrices:
    tris = mesh.triangles
    area = mesh.tri_area
    grads = mesh.tri_grads  # (ntri, 3, 2)

    ke = np.einsum("t,tid,tjd->tij", area, grads, grads)
    me = (area[:, None, None] / 12.0) * (np.ones((3, 3)) + np.eye(3))
    gx = grads[:, :, 0]
    de = (area[:, None, None] / 3.0) * (gx[:, :, None] - gx[:, None, :])

    rows = np.repeat(tris, 3, axis=1).ravel()  # test index ell
    cols = np.tile(tris, (1, 3)).ravel()  # trial index m
    n = mesh.num_total

    def build(e):
        # e[t, i, j] pairs test vertex i (row) with trial vertex j (col)
        A = sp.coo_matrix((e.ravel(), (rows, cols)), shape=(n, n)).tocsr()
        A.sort_indices()
        return A

    return ElementMatrices(K=build(ke), M=build(me), D=build(de))


def alpha_moments(grid: BlochGrid, j: int):
    """Exact moments (I0, I1, I2) of 1, alpha, alpha^2 over interval j."""
    d = grid.delta
    aj = grid.nodes[j - 1]
    return 2.0 * d, 2.0 * d * aj, 2.0 * d * (aj * aj + d * d / 3.0)


@dataclass
class RightHandSide:
    """Per-interval Dirichlet data vectors, nonzero only at surface dofs."""

    vectors: np.ndarray  # (N, M') complex
    sign: int


@dataclass
class _CouplingData:
    """Flattened quadrature tensors for the perturbation coupling blocks.

    For every (triangle in the bump region, quad point, test vertex,
    trial vertex) the arrays hold the alpha-independent parts of the
    coupling integrand; block j contracts them against the interval
    weight and its derivative evaluated at the quad point abscissae.
    """

    rows: np.ndarray
    cols: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    xq: np.ndarray


class BlockSystem:
    """Assembled block system in structural (matrix-free) form.

    The per-interval stiffness is never stored whole: `stiffness(j)`
    materializes it on demand (for factorization or small direct solves),
    while `matvec` applies the operator from the shared element matrices,
    the circulant boundary blocks, and the stored coupling blocks.
    """

    def __init__(self, grid, mesh, params, elements, dtn_blocks, coupling, b_diagonals, rhs):
        self.grid = grid
        self.mesh = mesh
        self.params = params
        self.elements = elements
        self.dtn_blocks = dtn_blocks  # list of DtnBlock
        self.coupling = coupling  # list of csr or None (unperturbed)
        self.b_diagonals = b_diagonals  # (N, M') complex
        self.rhs = rhs

        M, Mp = mesh.num_interior, mesh.num_total
        self.num_interior = M
        self.num_total = Mp
        self.size = (grid.N + 1) * Mp
        self._KM = None  # K - k^2 M, shared across blocks

    # -- operator pieces ----------------------------------------------------

    def _shared(self):
        if self._KM is None:
            k2 = self.params.k**2
            self._KM = (self.elements.K - k2 * self.elements.M).tocsr()
        return self._KM

    def stiffness(self, j: int) -> sp.csr_matrix:
        """Materialize the interval stiffness A_j (1-based j), constraint rows included."""
        I0, I1, I2 = alpha_moments(self.grid, j)
        k2 = self.params.k**2
        M, Mp = self.num_interior, self.num_total
        # cross term sign follows the periodization direction: the
        # quasiperiodic components carry e^{-i alpha x1}, so the twisted
        # form is (grad - i alpha e1) w . (grad + i alpha e1) conj(v)
        A = (
            I0 * self.elements.K
            - 1j * I1 * self.elements.D
            + (I2 - I0 * k2) * self.elements.M
        ).tocsr()
        top = self.mesh.top_dofs
        block = self.dtn_blocks[j - 1].dense()
        G = sp.coo_matrix(
            (block.ravel(), (np.repeat(top, len(top)), np.tile(top, len(top)))),
            shape=(Mp, Mp),
        ).tocsr()
        A = A + G
        A = sp.vstack([A[:M], sp.identity(Mp, format="csr", dtype=complex)[M:]]).tocsr()
        A.sort_indices()
        return A

    def coupling_block(self, j: int):
        """C_j as CSR (zero matrix when the geometry is unperturbed)."""
        C = self.coupling[j - 1]
        if C is None:
            return sp.csr_matrix((self.num_total, self.num_total), dtype=complex)
        return C

    def matvec(self, x):
        """Apply the full block operator to a stacked vector."""
        N, Mp, M = self.grid.N, self.num_total, self.num_interior
        X = x.reshape(N + 1, Mp)
        Y = np.empty_like(X)
        KM = self._shared()
        K, Mm, D = self.elements.K, self.elements.M, self.elements.D
        k2 = self.params.k**2
        top = self.mesh.top_dofs
        U = X[N]
        for j in range(1, N + 1):
            w = X[j - 1]
            I0, I1, I2 = alpha_moments(self.grid, j)
            y = I0 * (KM @ w) - (1j * I1) * (D @ w) + I2 * (Mm @ w)
            y[top] += self.dtn_blocks[j - 1].matvec(w[top])
            if self.coupling[j - 1] is not None:
                y += self.coupling[j - 1] @ U
            y[M:] = w[M:]
            Y[j - 1] = y
        acc = U.astype(complex, copy=True)
        for j in range(N):
            acc += self.b_diagonals[j] * X[j]
        Y[N] = acc
        return Y.ravel()

    def rhs_vector(self):
        b = np.zeros(self.size, dtype=complex)
        Mp = self.num_total
        for j in range(self.grid.N):
            b[j * Mp : (j + 1) * Mp] = self.rhs.vectors[j]
        return b

    def as_sparse(self) -> sp.csr_matrix:
        """Full sparse matrix (small instances: direct solves, oracles)."""
        N, Mp = self.grid.N, self.num_total
        blocks = [[None] * (N + 1) for _ in range(N + 1)]
        for j in range(1, N + 1):
            blocks[j - 1][j - 1] = self.stiffness(j)
            blocks[j - 1][N] = self.coupling_block(j)
            blocks[N][j - 1] = sp.diags(self.b_diagonals[j - 1])
        blocks[N][N] = sp.identity(Mp, dtype=complex)
        return sp.bmat(blocks, format="csr")


def assemble_coupling(grid, mesh, geometry, params, rule, keep_boundary_columns=False):
    """Perturbation coupling blocks C_j, cell-local by construction.

    Entry (ell, m) of C_j is

        sqrt(lam/2pi) * int [ (A-I) grad phi_m . grad( conj(g_j) phi_ell )
                              - k^2 (c-1) phi_m conj(g_j) phi_ell ] dx

    over the triangles meeting the bump support; g_j is the interval
    weight and the sqrt factor is the normalization of the reconstructed
    test function.  Rows and columns at surface dofs are dropped to match
    the constraint-row convention (``keep_boundary_columns`` retains the
    trial columns; diagnostic only).
    """
    if geometry.perturbation.is_zero:
        return [None] * grid.N

    a, b = geometry.perturbation.support
    xmin = mesh.tri_coords[:, :, 0].min(axis=1)
    xmax = mesh.tri_coords[:, :, 0].max(axis=1)
    aff = np.nonzero((xmax >= a - 1e-12) & (xmin <= b + 1e-12))[0]
    if len(aff) == 0:
        return [None] * grid.N

    pts, w = mesh.quad_points(rule)  # (ntri, nq, 2), (ntri, nq)
    pts, w = pts[aff], w[aff]
    nq = rule.weights.size
    flat = pts.reshape(-1, 2)
    A, c = geometry.coefficients(flat)
    A = A.reshape(len(aff), nq, 2, 2)
    cm1 = (c - 1.0).reshape(len(aff), nq)
    A[:, :, 0, 0] -= 1.0
    A[:, :, 1, 1] -= 1.0

    grads = mesh.tri_grads[aff]  # (nt, 3, 2)
    vals = rule.points  # (nq, 3) barycentric = P1 values at the quad points
    k2 = params.k**2

    # ag[t, q, m, d] = (A-I) grad phi_m ; contract with test gradients / e1
    ag = np.einsum("tqde,tme->tqmd", A, grads)
    z1 = np.einsum("tqmd,tld->tqlm", ag, grads)  # (A-I) grad_m . grad_l
    z1 -= k2 * cm1[:, :, None, None] * (vals[None, :, :, None] * vals[None, :, None, :])
    z2 = ag[:, :, None, :, 0] * vals[None, :, :, None]  # (A-I) grad_m . e1 * phi_l
    z1 *= w[:, :, None, None]
    z2 *= w[:, :, None, None]

    tris = mesh.triangles[aff]
    rows = np.broadcast_to(tris[:, None, :, None], z1.shape).ravel()
    cols = np.broadcast_to(tris[:, None, None, :], z1.shape).ravel()
    xq = np.broadcast_to(pts[:, :, 0][:, :, None, None], z1.shape).ravel()
    data = _CouplingData(rows=rows, cols=cols, z1=z1.ravel(), z2=z2.ravel(), xq=xq)

    M, Mp = mesh.num_interior, mesh.num_total
    keep = data.rows < M
    if not keep_boundary_columns:
        keep = keep & (data.cols < M)
    rows, cols = data.rows[keep], data.cols[keep]
    z1v, z2v, xqv = data.z1[keep], data.z2[keep], data.xq[keep]

    scale = np.sqrt(grid.lam / (2.0 * np.pi))
    out = []
    for j in range(1, grid.N + 1):
        gj = np.conj(interval_weight(grid, j, xqv))
        gpj = np.conj(interval_weight_deriv(grid, j, xqv))
        v = scale * (z1v * gj + z2v * gpj)
        C = sp.coo_matrix((v, (rows, cols)), shape=(Mp, Mp)).tocsr()
        C.sort_indices()
        out.append(C)
    return out


def assemble_b_diagonals(grid: BlochGrid, mesh: CellMesh):
    """Diagonals of the inverse-transform constraint blocks B_j.

    Row m of the last block row reads ``U_m - sqrt(lam/2pi) sum_j g_j(x1_m)
    W_j,m = 0``, so ``B_j = -sqrt(lam/2pi) diag(g_j(x1_m))``.
    """
    x1 = mesh.nodes[:, 0]
    scale = np.sqrt(grid.lam / (2.0 * np.pi))
    out = np.empty((grid.N, mesh.num_total), dtype=complex)
    for j in range(1, grid.N + 1):
        out[j - 1] = -scale * interval_weight(grid, j, x1)
    return out


def assemble_rhs(
    grid: BlochGrid,
    mesh: CellMesh,
    source: IncidentSource,
    params: WaveParams,
    geometry=None,
    sign: int = -1,
    transplant: bool = True,
    n_gauss: int = 8,
) -> RightHandSide:
    """Dirichlet data of the scattered field at the surface nodes.

    The periodized component on interval j is the interval average

        c_j(x) = sign * (1/(2 delta)) * int_j e^{i alpha x1} (J u_inc)(alpha, x) d alpha

    evaluated by Gauss-Legendre (the integrand is smooth inside each
    interval; mode cutoffs sit at interval endpoints for the shipped
    configurations).  With ``transplant`` the incident field is composed
    with the periodizing map before transforming, which adds the
    cell-supported, alpha-independent correction
    ``sqrt(lam/2pi) * [u_inc(map(x)) - u_inc(x)]``; this is the data whose
    scattered solution transplants back exactly, and it reduces to the
    plain series for an unperturbed geometry.
    """
    if sign not in (-1, 1):
        raise ValueError("sign must be +1 or -1")
    xb, wq = np.polynomial.legendre.leggauss(n_gauss)
    bottom = mesh.bottom_dofs
    pts = mesh.nodes[bottom]
    x1 = pts[:, 0]
    N, Mp = grid.N, mesh.num_total
    vecs = np.zeros((N, Mp), dtype=complex)

    corr = 0.0
    if transplant and geometry is not None and not geometry.perturbation.is_zero:
        mapped = geometry.map_to_perturbed(pts)
        corr = np.sqrt(grid.lam / (2.0 * np.pi)) * (
            incident_field(source, params, mapped) - incident_field(source, params, pts)
        )

    for j in range(1, N + 1):
        a, b = grid.interval(j)
        acc = np.zeros(len(bottom), dtype=complex)
        for xi, ww in zip(xb, wq):
            alpha = 0.5 * (a + b) + 0.5 * (b - a) * xi
            acc += (0.5 * (b - a) * ww) * np.exp(1j * alpha * x1) * incident_series(
                source, params, alpha, pts
            )
        if transplant and np.ndim(corr) > 0:
            acc += np.conj(interval_weight(grid, j, x1)) * corr
        vecs[j - 1, mesh.num_interior :] = sign * acc / (2.0 * grid.delta)
    return RightHandSide(vectors=vecs, sign=sign)


def build_block_system(
    geometry,
    mesh: CellMesh,
    grid: BlochGrid,
    params: WaveParams,
    source: IncidentSource,
    sign: int = -1,
    transplant: bool = True,
    quad_order: int = 4,
    m_trunc=None,
    n_gauss: int = 8,
    verify_dtn: bool = False,
    coupling_boundary_columns: bool = True,
) -> BlockSystem:
    """Assemble all blocks of the coupled system for one (N, mesh) pair."""
    elements = assemble_element_matrices(mesh)
    basis = TraceBasis.from_mesh(mesh, m_trunc=m_trunc)
    dtn_blocks = [
        assemble_dtn_block(basis, grid.interval(j), params, verify=verify_dtn and j == 1)
        for j in range(1, grid.N + 1)
    ]
    rule = reference_quadrature(quad_order)
    coupling = assemble_coupling(
        grid, mesh, geometry, params, rule, keep_boundary_columns=coupling_boundary_columns
    )
    b_diag = assemble_b_diagonals(grid, mesh)
    rhs = assemble_rhs(
        grid, mesh, source, params, geometry=geometry, sign=sign, transplant=transplant, n_gauss=n_gauss
    )
    return BlockSystem(grid, mesh, params, elements, dtn_blocks, coupling, b_diag, rhs)


def assemble_stiffness_at_alpha(mesh, elements, basis, alpha, params):
    """Cell stiffness at a single alpha (manufactured-solution diagnostics).

    Same volume terms and boundary block as the interval stiffness, with
    the moments collapsed to point values (1, alpha, alpha^2).
    """
    k2 = params.k**2
    M, Mp = mesh.num_interior, mesh.num_total
    A = (elements.K - 1j * alpha * elements.D + (alpha * alpha - k2) * elements.M).tocsr()
    top = mesh.top_dofs
    block = assemble_dtn_block_pointwise(basis, alpha, params).dense()
    G = sp.coo_matrix(
        (block.ravel(), (np.repeat(top, len(top)), np.tile(top, len(top)))), shape=(Mp, Mp)
    ).tocsr()
    A = A + G
    A = sp.vstack([A[:M], sp.identity(Mp, format="csr", dtype=complex)[M:]]).tocsr()
    A.sort_indices()
    return A


def dump_matrix_market(system: BlockSystem, outdir):
    """Write every block in Matrix Market format for external cross-checks."""
    from pathlib import Path
    from scipy.io import mmwrite

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for j in range(1, system.grid.N + 1):
        mmwrite(out / f"A_{j:03d}.mtx", system.stiffness(j))
        mmwrite(out / f"C_{j:03d}.mtx", system.coupling_block(j))
        mmwrite(out / f"B_{j:03d}.mtx", sp.diags(system.b_diagonals[j - 1]))
        mmwrite(out / f"F_{j:03d}.mtx", system.rhs.vectors[j - 1].reshape(-1, 1))
    logger.info("wrote %d block quadruples to %s", system.grid.N, out)
