"""Built-in property suite: convention adjudication and quick oracles.

Runs in well under a minute and is completely deterministic for a fixed
seed.  The two convention checks mirror how the package fixed its
defaults: the quasiperiodicity sign is the one that makes the incident
mode series agree with the direct lattice sum, and the Dirichlet sign is
the one that makes a small end-to-end solve reproduce the known exact
field.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.integrate
import scipy.sparse as sp

from .bloch import (
    BlochGrid,
    IncidentSource,
    incident_field,
    incident_series,
    interval_weight,
    inverse_bloch_nodal,
    lattice_transform,
    make_grid,
)
from .config import preset
from .specfun import WaveParams, branch_sqrt, QP_SIGN
from .dtn import dtn_multiplier_interval
from .assembly import alpha_moments, build_block_system
from .solver import ilu0, gmres
from . import pipeline

logger = logging.getLogger(__name__)

__all__ = ["run_selftest"]


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str


def _series_with_sign(source, params, alpha, pts, sigma):
    """Incident mode series evaluated under an explicit sign convention."""
    from .specfun import sinc_complex

    p = np.atleast_2d(pts)
    y1, y2 = source.position
    j = np.arange(-160, 161)
    t = params.lam_dual * j + sigma * alpha
    beta = branch_sqrt(params.k**2 - t * t)
    phase = np.exp(1j * (np.outer(t, p[:, 0] - y1) + np.outer(beta, p[:, 1])))
    amp = sinc_complex(beta * y2) * y2
    return (amp[:, None] * phase).sum(axis=0) / np.sqrt(2.0 * np.pi * params.lam)


def check_sigma(seed=0, flip=False):
    params = WaveParams(k=1.0, lam=2 * np.pi)
    source = IncidentSource(position=(0.5, 0.4))
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-np.pi, np.pi, 20), rng.uniform(0.9, 3.9, 20)])
    alphas = rng.uniform(0.03, 0.47, 20) * rng.choice([-1.0, 1.0], 20)

    def u(xy):
        return incident_field(source, params, xy)

    worst = {+1: 0.0, -1: 0.0}
    for alpha, p in zip(alphas, pts):
        ref, _ = lattice_transform(u, params.lam, alpha, p, j_sum=400, tail_correction=True)
        for sigma in (+1, -1):
            val = _series_with_sign(source, params, alpha, p, sigma)[0]
            worst[sigma] = max(worst[sigma], abs(val - ref) / abs(ref))
    adopted = -1 if worst[-1] < worst[+1] else +1
    tested = -adopted if flip else adopted
    ok = worst[tested] < 1e-6 and tested == QP_SIGN
    return CheckResult(
        "sigma-adjudication",
        ok,
        f"adopted sigma={adopted:+d} (rel dev {worst[adopted]:.2e}; "
        f"rejected {worst[-adopted]:.2e}); module uses {QP_SIGN:+.0f}",
    )


def check_quasiperiodicity():
    params = WaveParams(k=1.0, lam=2 * np.pi)
    source = IncidentSource(position=(0.5, 0.4))
    alpha, x = 0.23, np.array([1.1, 2.5])
    v1 = incident_series(source, params, alpha, x + np.array([params.lam, 0.0]))
    v0 = incident_series(source, params, alpha, x)
    dev = abs(v1 - np.exp(-1j * params.lam * alpha) * v0)
    return CheckResult("quasiperiodicity-factor", dev < 1e-10, f"dev {dev:.2e}")


def check_interval_weight():
    grid = make_grid(20, 2 * np.pi)
    x1 = 1.3
    j = 7
    a, b = grid.interval(j)
    re = scipy.integrate.quad(lambda t: np.cos(t * x1), a, b, epsabs=1e-14)[0]
    im = scipy.integrate.quad(lambda t: -np.sin(t * x1), a, b, epsabs=1e-14)[0]
    dev = abs(interval_weight(grid, j, x1) - (re + 1j * im))
    bound = max(
        abs(interval_weight(grid, jj, x1)) <= 2 * grid.delta + 1e-15 for jj in range(1, 21)
    )
    zero = abs(interval_weight(grid, 3, 0.0) - 2 * grid.delta)
    ok = dev < 1e-12 and bound and zero < 1e-15
    return CheckResult("interval-weight", ok, f"quad dev {dev:.2e}, g(0) dev {zero:.2e}")


def check_isometry():
    lam = 2 * np.pi
    K = 1  # support within |x1| <= 3 cells/2

    def u(x1):
        v = np.zeros_like(x1)
        inside = np.abs(x1) < 1.5 * lam
        v[inside] = np.exp(-1.0 / (1 - (x1[inside] / (1.5 * lam)) ** 2)) * np.cos(x1[inside])
        return v

    x1 = 0.7
    shifts = np.arange(-3, 4)
    vals = u(x1 + lam * shifts)
    direct = np.sum(np.abs(vals) ** 2)
    # trapezoid over the zone, exact for trig polynomials of this degree
    npts = 2 * 7 + 1
    alphas = -np.pi / lam + (2 * np.pi / lam) * np.arange(npts) / npts
    tr = 0.0
    for a in alphas:
        J = np.sqrt(lam / (2 * np.pi)) * np.sum(vals * np.exp(1j * lam * shifts * a))
        tr += np.abs(J) ** 2
    tr *= (2 * np.pi / lam) / npts
    dev = abs(tr - direct) / direct
    return CheckResult("bloch-isometry", dev < 1e-10, f"rel dev {dev:.2e}")


def check_dtn_interval():
    params = WaveParams(k=1.0, lam=2 * np.pi)
    cases = [(0, -0.05, 0.05), (1, -0.05, 0.05), (1, -0.02, 0.03), (3, 0.1, 0.2)]
    worst = 0.0
    for m, a, b in cases:
        closed = dtn_multiplier_interval(m, a, b, params)

        def f(al, part):
            z = branch_sqrt(params.k**2 - (params.lam_dual * m + QP_SIGN * al) ** 2) * 1j
            return z.real if part == 0 else z.imag

        re = scipy.integrate.quad(f, a, b, args=(0,), epsabs=1e-13, limit=200)[0]
        im = scipy.integrate.quad(f, a, b, args=(1,), epsabs=1e-13, limit=200)[0]
        worst = max(worst, abs(closed - (re + 1j * im)))
    return CheckResult("dtn-interval-integral", worst < 1e-10, f"max dev {worst:.2e}")


def check_alpha_moments():
    grid = make_grid(20, 2 * np.pi)
    worst = 0.0
    for j in (1, 7, 20):
        a, b = grid.interval(j)
        I0, I1, I2 = alpha_moments(grid, j)
        worst = max(worst, abs(I0 - (b - a)))
        worst = max(worst, abs(I1 - (b * b - a * a) / 2))
        worst = max(worst, abs(I2 - (b**3 - a**3) / 3))
    return CheckResult("alpha-moments", worst < 1e-13, f"max dev {worst:.2e}")


def check_block_matvec():
    cfg = preset("example1", N=2, n1=8, n2=8)
    geo = cfg.make_geometry()
    from .mesh import generate_cell_mesh

    params = WaveParams(k=cfg.k, lam=geo.lam)
    mesh = generate_cell_mesh(geo, 8, 8)
    grid = make_grid(2, geo.lam)
    system = build_block_system(geo, mesh, grid, params, IncidentSource(position=cfg.source))
    rng = np.random.default_rng(3)
    x = rng.standard_normal(system.size) + 1j * rng.standard_normal(system.size)
    dense = system.as_sparse() @ x
    dev = np.linalg.norm(system.matvec(x) - dense) / np.linalg.norm(dense)
    return CheckResult("block-matvec-oracle", dev < 1e-13, f"rel dev {dev:.2e}")


def check_solver():
    rng = np.random.default_rng(5)
    n = 50
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 10 * np.eye(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    x_exact = np.linalg.solve(A, b)
    As = sp.csr_matrix(A)
    f = ilu0(As)  # full pattern: equals exact LU
    lu_dev = np.max(np.abs(f.solve(b) - x_exact)) / np.max(np.abs(x_exact))
    x, rep = gmres(lambda v: As @ v, b, tol=1e-10, restart=60, maxiter=600)
    g_dev = np.linalg.norm(x - x_exact) / np.linalg.norm(x_exact)
    ok = lu_dev < 1e-12 and g_dev < 1e-8 and rep.converged
    return CheckResult("ilu-gmres-oracle", ok, f"ilu dev {lu_dev:.2e}, gmres dev {g_dev:.2e}")


def check_rhs_sign():
    cfg = preset("example1", N=4, h=0.45, force_direct=True)
    errs = {}
    for s in (-1, +1):
        out = pipeline.run_case(replace(cfg, rhs_sign=s))
        errs[s] = out.relative_error
    adopted = -1 if errs[-1] < errs[+1] else +1
    ok = adopted == -1 and errs[-1] < 0.1
    return CheckResult(
        "rhs-sign-adjudication",
        ok,
        f"adopted sign={adopted:+d} (err {errs[adopted]:.2e}; rejected {errs[-adopted]:.2e})",
    )


def check_roundtrip():
    lam = 2 * np.pi
    geo = preset("example1").make_geometry()
    from .mesh import generate_cell_mesh

    mesh = generate_cell_mesh(geo, 12, 8)

    def u(xy):
        xy = np.atleast_2d(xy)
        x1 = xy[:, 0]
        v = np.zeros(len(x1), dtype=complex)
        inside = np.abs(x1) < 1.5 * lam
        v[inside] = np.exp(-1.0 / (1 - (x1[inside] / (1.5 * lam)) ** 2))
        return v

    errs = []
    for N in (20, 40):
        grid = make_grid(N, lam)
        fields = np.empty((N, mesh.num_total), dtype=complex)
        for j in range(1, N + 1):
            aj = grid.nodes[j - 1]
            snap, _ = lattice_transform(u, lam, aj, mesh.nodes, j_sum=8)
            fields[j - 1] = np.exp(1j * aj * mesh.nodes[:, 0]) * snap
        rec = inverse_bloch_nodal(grid, fields, mesh)
        exact = u(mesh.nodes)
        errs.append(np.linalg.norm(rec - exact) / np.linalg.norm(exact))
    ok = errs[1] < 0.7 * errs[0]
    return CheckResult(
        "inverse-transform-roundtrip", ok, f"err(N=20)={errs[0]:.2e}, err(N=40)={errs[1]:.2e}"
    )


def run_selftest(seed=0, flip_sigma=False, verbose=True):
    """Run all checks; returns (all_ok, list of CheckResult)."""
    checks = [
        lambda: check_sigma(seed=seed, flip=flip_sigma),
        check_quasiperiodicity,
        check_interval_weight,
        check_isometry,
        check_dtn_interval,
        check_alpha_moments,
        check_roundtrip,
        check_block_matvec,
        check_solver,
        check_rhs_sign,
    ]
    results = []
    for c in checks:
        try:
            results.append(c())
        except Exception as exc:  # a crash counts as a failure
            results.append(CheckResult(getattr(c, "__name__", "check"), False, f"raised {exc!r}"))
    all_ok = all(r.ok for r in results)
    if verbose:
        for r in results:
            print(f"[{'PASS' if r.ok else 'FAIL'}] {r.name}: {r.detail}")
        print(f"conventions: quasiperiodicity sign {QP_SIGN:+.0f}, default Dirichlet sign -1")
    return all_ok, results
