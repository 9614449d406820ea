"""Field reconstruction, error norms, and convergence studies.

The block solve returns the reconstructed scattered field on the
unperturbed cell (the transplant of the physical scattered field through
the periodizing map).  For the manufactured point-source problems the
exact total field vanishes, so the exact transplanted scattered field is
``sign * u_inc(map(x))`` and relative errors against it are computed by
element quadrature.  Physical-domain errors are the same integrals
weighted by the map's Jacobian determinant.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .mesh import CellMesh, QuadratureRule, reference_quadrature

logger = logging.getLogger(__name__)

__all__ = [
    "SolutionField",
    "evaluate_field",
    "relative_l2_error",
    "reconstruct_physical",
    "StudyRow",
    "convergence_study",
    "write_summary_csv",
    "write_table_csv",
]


@dataclass
class SolutionField:
    """Nodal complex field on a cell mesh."""

    values: np.ndarray
    mesh: CellMesh
    tag: str = "scattered"
    grid: object = None
    geometry: object = None


def evaluate_field(fld: SolutionField, points):
    """Piecewise-linear interpolation; exact at nodes."""
    tri, bary = fld.mesh.locate(points)
    vals = np.einsum("pk,pk->p", fld.values[fld.mesh.triangles[tri]], bary)
    return complex(vals[0]) if np.ndim(points) == 1 else vals


def _quad_values(fld: SolutionField, rule: QuadratureRule):
    """Field values at all element quadrature points, shape (ntri, nq)."""
    nodal = fld.values[fld.mesh.triangles]  # (ntri, 3)
    return np.einsum("qk,tk->tq", rule.points, nodal)


def relative_l2_error(
    fld: SolutionField,
    reference: Callable,
    mesh: Optional[CellMesh] = None,
    rule: Optional[QuadratureRule] = None,
    jacobian_weight: bool = False,
):
    """Relative L2 distance between the field and a reference callable.

    Both norms use the same element quadrature (order 4 by default).
    With ``jacobian_weight`` the integrals carry the determinant of the
    periodizing map, turning them into physical-domain norms.
    """
    mesh = mesh or fld.mesh
    rule = rule or reference_quadrature(4)
    pts, w = mesh.quad_points(rule)
    flat = pts.reshape(-1, 2)
    ref = np.asarray(reference(flat), dtype=complex).reshape(w.shape)
    vals = _quad_values(fld, rule)
    if jacobian_weight:
        _, c = fld.geometry.coefficients(flat)
        w = w * c.reshape(w.shape)
    num = np.sum(w * np.abs(vals - ref) ** 2)
    den = np.sum(w * np.abs(ref) ** 2)
    if den == 0.0:
        raise ValueError("reference field has zero norm on the cell")
    return float(np.sqrt(num / den))


def reconstruct_physical(fld: SolutionField, geometry=None):
    """Field on the perturbed cell: composition with the inverse map."""
    geo = geometry or fld.geometry

    def ev(points):
        back = geo.map_from_perturbed(points)
        return evaluate_field(fld, back)

    return ev


@dataclass
class StudyRow:
    N: int
    h_nominal: float
    h_measured: float
    dofs: int
    relative_error: float
    physical_error: float
    iterations: int
    wall_seconds: float
    converged: bool
    failed: bool = False
    message: str = ""


@dataclass
class StudyResult:
    rows: list = field(default_factory=list)
    slope: Optional[float] = None

    def row(self, N, h):
        for r in self.rows:
            if r.N == N and r.h_nominal == h:
                return r
        return None


def fit_loglog_slope(ns, errs):
    """Least-squares slope of log(err) against log(N)."""
    ns, errs = np.asarray(ns, float), np.asarray(errs, float)
    good = errs > 0
    if good.sum() < 2:
        return None
    p = np.polyfit(np.log(ns[good]), np.log(errs[good]), 1)
    return float(p[0])


def convergence_study(case, pairs, solver_options=None, fit_pairs=None, **kwargs) -> StudyResult:
    """Run the pipeline over (N, h) pairs and tabulate relative errors.

    ``case`` is a RunConfig-like object understood by
    :func:`blochsurf.pipeline.run_case`.  Failed runs mark their row and do
    not abort the study.  When ``fit_pairs`` is given, the log-log slope of
    error against N is fitted over those rows (balanced-rate diagnostics).
    """
    from . import pipeline  # local import; pipeline uses this module's norms

    result = StudyResult()
    for N, h in pairs:
        t0 = time.perf_counter()
        try:
            out = pipeline.run_case(case, N=N, h=h, solver_options=solver_options, **kwargs)
            result.rows.append(
                StudyRow(
                    N=N,
                    h_nominal=h,
                    h_measured=out.mesh.h,
                    dofs=out.system_size,
                    relative_error=out.relative_error,
                    physical_error=out.physical_error,
                    iterations=out.report.iterations,
                    wall_seconds=time.perf_counter() - t0,
                    converged=out.report.converged,
                )
            )
            logger.info(
                "N=%d h=%.3g: err=%.3e (phys %.3e) iters=%d %.1fs",
                N, h, out.relative_error, out.physical_error,
                out.report.iterations, time.perf_counter() - t0,
            )
        except Exception as exc:  # mark the row, keep going
            logger.exception("run (N=%d, h=%.3g) failed", N, h)
            result.rows.append(
                StudyRow(
                    N=N, h_nominal=h, h_measured=np.nan, dofs=0,
                    relative_error=np.nan, physical_error=np.nan,
                    iterations=0, wall_seconds=time.perf_counter() - t0,
                    converged=False, failed=True, message=str(exc),
                )
            )
    if fit_pairs:
        ns, errs = [], []
        for N, h in fit_pairs:
            r = result.row(N, h)
            if r and not r.failed:
                ns.append(r.N)
                errs.append(r.relative_error)
        result.slope = fit_loglog_slope(ns, errs)
    return result


def write_summary_csv(rows, path):
    """Long-form study output: one row per run."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["N", "h", "h_measured", "relative_error", "physical_error",
             "iterations", "wall_seconds", "converged", "failed"]
        )
        for r in rows:
            w.writerow(
                [r.N, r.h_nominal, f"{r.h_measured:.6g}", f"{r.relative_error:.6e}",
                 f"{r.physical_error:.6e}", r.iterations, f"{r.wall_seconds:.3f}",
                 int(r.converged), int(r.failed)]
            )


def write_table_csv(rows, path):
    """Matrix layout: one row per N, one error column per h, then timings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    hs = sorted({r.h_nominal for r in rows}, reverse=True)
    ns = sorted({r.N for r in rows})
    bykey = {(r.N, r.h_nominal): r for r in rows}
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["N"] + [f"err_h={h:g}" for h in hs] + [f"time_h={h:g}" for h in hs])
        for N in ns:
            line = [N]
            for h in hs:
                r = bykey.get((N, h))
                line.append("FAILED" if (r is None or r.failed) else f"{r.relative_error:.3e}")
            for h in hs:
                r = bykey.get((N, h))
                line.append("" if (r is None or r.failed) else f"{r.wall_seconds:.2f}")
            w.writerow(line)
