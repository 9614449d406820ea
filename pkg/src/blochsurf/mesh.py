"""Structured triangulations of one periodicity cell.

The cell is meshed by mapping a uniform reference grid on
``(-lam/2, lam/2] x [0, 1]`` through ``(s, t) -> (s, (1-t) zeta(s) + t H)``
and splitting each quad into two triangles with alternating diagonals.
Left-boundary nodes are identified with their right-boundary partners at
the same height (the heights match because the surface is periodic), so
piecewise linear functions on the mesh extend periodically.  Unknowns are
numbered with all non-bottom nodes first and the bottom (surface) nodes
last, which is the ordering the block solver's constraint rows rely on.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadratureRule",
    "CellMesh",
    "reference_quadrature",
    "generate_cell_mesh",
    "mesh_for_target_h",
    "write_vtk",
]


@dataclass(frozen=True)
class QuadratureRule:
    """Symmetric Gauss rule on the reference triangle.

    Barycentric points with weights summing to one; the integral of f over
    a physical triangle T is ``area(T) * sum_q w_q f(x_q)``.
    """

    points: np.ndarray  # (nq, 3) barycentric
    weights: np.ndarray  # (nq,)
    order: int


def reference_quadrature(order: int) -> QuadratureRule:
    """Gauss rule exact to the given polynomial degree (2, 4, or 6)."""
    if order == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        w = np.full(3, 1.0 / 3.0)
    elif order == 4:
        a1, w1 = 0.108103018168070, 0.223381589678011
        a2, w2 = 0.816847572980459, 0.109951743655322
        pts, w = _sym_points([(a1, w1), (a2, w2)])
    elif order == 6:
        a1, w1 = 0.873821971016996, 0.050844906370207
        a2, w2 = 0.501426509658179, 0.116786275726379
        pts, w = _sym_points([(a1, w1), (a2, w2)])
        b, c, w3 = 0.636502499121399, 0.310352451033785, 0.082851075618374
        d = 1.0 - b - c
        six = np.array(
            [[b, c, d], [b, d, c], [c, b, d], [c, d, b], [d, b, c], [d, c, b]]
        )
        pts = np.vstack([pts, six])
        w = np.concatenate([w, np.full(6, w3)])
    else:
        raise ValueError(f"unsupported quadrature order {order}; use 2, 4, or 6")
    return QuadratureRule(points=pts, weights=w, order=order)


def _sym_points(groups):
    pts, ws = [], []
    for a, w in groups:
        b = (1.0 - a) / 2.0
        pts += [[a, b, b], [b, a, b], [b, b, a]]
        ws += [w, w, w]
    return np.array(pts), np.array(ws)


class CellMesh:
    """Triangulation of one periodicity cell with periodic identification.

    Attributes
    ----------
    n1, n2 : int
        Grid resolution (columns, vertical layers).
    nodes : (M', 2) float array
        Node coordinates; columns at x1 = -lam/2 + i*lam/n1 for i = 1..n1.
    triangles : (ntri, 3) int array
        Dof indices; wrap-around elements reference right-column dofs.
    tri_coords : (ntri, 3, 2) float array
        Vertex coordinates with the ghost shift by -lam applied on the
        wrap-around strip.
    h : float
        Maximum edge length.
    num_interior (M), num_total (M') : int
        Unknown counts excluding / including bottom nodes; bottom dofs
        occupy indices M..M'-1 and top dofs M-n1..M-1.
    """

    def __init__(self, geometry, n1: int, n2: int):
        if n1 < 4 or n2 < 4:
            raise ValueError("need at least 4 subdivisions in each direction")
        self.geometry = geometry
        self.n1, self.n2 = n1, n2
        lam, H = geometry.lam, geometry.height
        self.lam, self.height = lam, H

        dx = lam / n1
        s = -lam / 2.0 + dx * np.arange(1, n1 + 1)  # retained columns, s[n1-1] = lam/2
        zeta = geometry.unperturbed_height(s)
        t = np.arange(n2 + 1) / n2

        M = n1 * n2
        Mp = n1 * (n2 + 1)
        self.num_interior = M
        self.num_total = Mp

        nodes = np.empty((Mp, 2))
        # non-bottom rows j = 1..n2 first, bottom row last
        for j in range(1, n2 + 1):
            rows = slice((j - 1) * n1, j * n1)
            nodes[rows, 0] = s
            nodes[rows, 1] = (1.0 - t[j]) * zeta + t[j] * H
        nodes[M:, 0] = s
        nodes[M:, 1] = zeta
        self.nodes = nodes

        def dof(i, j):
            # i in 0..n1-1 column index of retained node, j in 0..n2 layer
            return M + i if j == 0 else (j - 1) * n1 + i

        tris = np.empty((2 * n1 * n2, 3), dtype=np.int64)
        ghost = np.zeros((2 * n1 * n2, 3), dtype=bool)  # vertex uses x1 - lam
        k = 0
        for c in range(n1):  # column strip between grid lines c and c+1
            il = n1 - 1 if c == 0 else c - 1  # left line: ghost of last column
            ir = c
            lg = c == 0
            for j in range(n2):
                ll, lr = dof(il, j), dof(ir, j)
                ul, ur = dof(il, j + 1), dof(ir, j + 1)
                if (c + j) % 2 == 0:
                    tris[k] = (ll, lr, ur)
                    ghost[k] = (lg, False, False)
                    tris[k + 1] = (ll, ur, ul)
                    ghost[k + 1] = (lg, False, lg)
                else:
                    tris[k] = (ll, lr, ul)
                    ghost[k] = (lg, False, lg)
                    tris[k + 1] = (lr, ur, ul)
                    ghost[k + 1] = (False, False, lg)
                k += 2
        self.triangles = tris
        coords = nodes[tris].copy()
        coords[ghost, 0] -= lam
        self.tri_coords = coords
        self._ghost = ghost

        e01 = coords[:, 1] - coords[:, 0]
        e12 = coords[:, 2] - coords[:, 1]
        e20 = coords[:, 0] - coords[:, 2]
        twice_area = e01[:, 0] * (-e20[:, 1]) - e01[:, 1] * (-e20[:, 0])
        if np.any(twice_area <= 0):
            raise ValueError("inverted element in structured mesh")
        self.tri_area = 0.5 * twice_area
        self.h = float(
            np.sqrt(
                max(
                    np.max(np.sum(e01**2, axis=1)),
                    np.max(np.sum(e12**2, axis=1)),
                    np.max(np.sum(e20**2, axis=1)),
                )
            )
        )
        # P1 basis gradients: grad lambda_i = rot90(opposite edge)/(2A)
        grads = np.empty((len(tris), 3, 2))
        for i, opp in enumerate((e12, e20, e01)):
            grads[:, i, 0] = -opp[:, 1]
            grads[:, i, 1] = opp[:, 0]
        grads /= twice_area[:, None, None]
        self.tri_grads = grads

        self.bottom_dofs = np.arange(M, Mp)
        self.top_dofs = np.arange(M - n1, M)
        self.right_dofs = np.arange(n1 - 1, Mp, n1)
        self.dx = dx
        self.column_x = s

    @property
    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        c = self.tri_coords
        ang = []
        for i in range(3):
            u = c[:, (i + 1) % 3] - c[:, i]
            v = c[:, (i + 2) % 3] - c[:, i]
            cosa = np.sum(u * v, axis=1) / np.sqrt(np.sum(u**2, 1) * np.sum(v**2, 1))
            ang.append(np.degrees(np.arccos(np.clip(cosa, -1, 1))))
        return float(np.min(ang))

    def quad_points(self, rule: QuadratureRule):
        """Cartesian quadrature points (ntri, nq, 2) and weights (ntri, nq).

        Weights include the triangle areas, so a field sampled at the
        points integrates as ``(weights * values).sum()``.
        """
        pts = np.einsum("qi,tid->tqd", rule.points, self.tri_coords)
        w = self.tri_area[:, None] * rule.weights[None, :]
        return pts, w

    def locate(self, points):
        """Triangle index and barycentric coordinates for each query point."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        lam, n1, n2 = self.lam, self.n1, self.n2
        x1 = p[:, 0]
        if np.any(x1 < -lam / 2 - 1e-12) or np.any(x1 > lam / 2 + 1e-12):
            raise ValueError("point outside the cell in x1")
        c = np.clip(((x1 + lam / 2) / self.dx).astype(int), 0, n1 - 1)
        # surface height along the piecewise linear bottom edge
        sl = -lam / 2 + c * self.dx
        frac = (x1 - sl) / self.dx
        zl = self.geometry.unperturbed_height(sl)
        zr = self.geometry.unperturbed_height(sl + self.dx)
        zint = (1 - frac) * zl + frac * zr
        tpar = (p[:, 1] - zint) / (self.height - zint)
        if np.any(tpar < -1e-9) or np.any(tpar > 1 + 1e-9):
            raise ValueError("point outside the cell in x2")
        j = np.clip((tpar * n2).astype(int), 0, n2 - 1)
        base = 2 * (c * n2 + j)
        tri_idx = np.empty(len(p), dtype=np.int64)
        bary = np.empty((len(p), 3))
        for m in range(len(p)):
            for cand in (base[m], base[m] + 1):
                b = _barycentric(self.tri_coords[cand], p[m])
                if np.min(b) >= -1e-10:
                    tri_idx[m], bary[m] = cand, b
                    break
            else:  # roundoff near the diagonal: take the closer one
                b0 = _barycentric(self.tri_coords[base[m]], p[m])
                b1 = _barycentric(self.tri_coords[base[m] + 1], p[m])
                if np.min(b0) >= np.min(b1):
                    tri_idx[m], bary[m] = base[m], b0
                else:
                    tri_idx[m], bary[m] = base[m] + 1, b1
        return tri_idx, bary


def _barycentric(tri, p):
    T = np.array(
        [
            [tri[0, 0] - tri[2, 0], tri[1, 0] - tri[2, 0]],
            [tri[0, 1] - tri[2, 1], tri[1, 1] - tri[2, 1]],
        ]
    )
    ab = np.linalg.solve(T, p - tri[2])
    return np.array([ab[0], ab[1], 1.0 - ab[0] - ab[1]])


def generate_cell_mesh(geometry, n1: int, n2: int) -> CellMesh:
    """Structured mesh of the periodicity cell with matched boundary heights."""
    return CellMesh(geometry, n1, n2)


def mesh_for_target_h(geometry, h_target: float, max_tries: int = 4) -> CellMesh:
    """Mesh whose measured maximum edge length does not exceed ``h_target``."""
    dx = h_target / np.sqrt(2.0)
    n1 = max(4, int(np.ceil(geometry.lam / dx)))
    depth = geometry.height - geometry.surface.min_height
    n2 = max(4, int(np.ceil(depth / dx)))
    mesh = CellMesh(geometry, n1, n2)
    for _ in range(max_tries):
        if mesh.h <= h_target:
            return mesh
        grow = mesh.h / h_target * 1.01
        n1 = int(np.ceil(n1 * grow))
        n2 = int(np.ceil(n2 * grow))
        mesh = CellMesh(geometry, n1, n2)
    return mesh


def write_vtk(mesh: CellMesh, path, point_data=None):
    """Dump the mesh (and optional complex nodal fields) as legacy ASCII VTK."""
    nodes = mesh.nodes
    tris = mesh.triangles.copy()
    # ghost copies of wrapped vertices so elements render unstretched
    ghost_entries = np.argwhere(mesh._ghost)
    ghost_dofs = np.unique(tris[mesh._ghost])
    gmap = {d: len(nodes) + i for i, d in enumerate(ghost_dofs)}
    extra = nodes[ghost_dofs].copy()
    extra[:, 0] -= mesh.lam
    allpts = np.vstack([nodes, extra])
    for t, v in ghost_entries:
        tris[t, v] = gmap[mesh.triangles[t, v]]

    lines = [
        "# vtk DataFile Version 3.0",
        "blochsurf cell mesh",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {len(allpts)} double",
    ]
    lines += [f"{x:.16g} {y:.16g} 0.0" for x, y in allpts]
    lines.append(f"CELLS {len(tris)} {4 * len(tris)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in tris]
    lines.append(f"CELL_TYPES {len(tris)}")
    lines += ["5"] * len(tris)
    if point_data:
        lines.append(f"POINT_DATA {len(allpts)}")
        for name, vals in point_data.items():
            vals = np.asarray(vals)
            ext = np.concatenate([vals, vals[ghost_dofs]])
            for part, tag in ((ext.real, "re"), (ext.imag, "im"), (np.abs(ext), "abs")):
                lines.append(f"SCALARS {name}_{tag} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [f"{v:.16g}" for v in part]
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
