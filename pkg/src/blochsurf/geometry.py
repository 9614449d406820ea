"""Periodic surfaces, local perturbations, and the periodizing map.

A scattering domain is the region between a periodic graph surface and a
flat truncation line at height ``H``.  A local perturbation adds a
compactly supported bump to the surface inside one period.  The cubic
blend

    (x1, x2)  ->  (x1, x2 + (x2-H)^3/(zeta(x1)-H)^3 * g(x1))

maps the unperturbed strip onto the perturbed one, fixes the top line,
sends the unperturbed surface onto the perturbed one, and is the identity
outside the bump support.  Transplanting the PDE through this map turns
the perturbation into variable coefficients (a symmetric matrix ``A`` and
a scalar ``c``) supported in a single period, which is what makes the
block coupling of the discrete system cell-local.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "GeometryError",
    "SurfaceProfile",
    "PerturbationProfile",
    "Geometry",
    "surface_f1",
    "surface_f2",
    "bump_g1",
    "bump_g2",
    "bump_none",
    "fourier_surface",
    "builtin_geometry",
    "BUILTIN_NAMES",
]

_EXP_FLOOR = -700.0  # exponent below which the smooth cutoff underflows to 0


class GeometryError(ValueError):
    """Inadmissible geometry: degenerate map, bad heights, or bad support."""


@dataclass(frozen=True)
class SurfaceProfile:
    """Periodic height profile of the unperturbed surface.

    Parameters
    ----------
    lam : float
        Period, > 0.
    height, height_deriv : callable
        Vectorized height function and its derivative.
    """

    lam: float
    height: Callable
    height_deriv: Callable
    min_height: float = field(init=False)
    max_height: float = field(init=False)

    def __post_init__(self):
        if self.lam <= 0:
            raise GeometryError(f"period must be positive, got {self.lam}")
        t = np.linspace(-self.lam / 2, self.lam / 2, 4097)
        z = np.asarray(self.height(t), dtype=float)
        per = np.max(np.abs(np.asarray(self.height(t + self.lam)) - z))
        if per > 1e-12 * max(1.0, np.max(np.abs(z))):
            raise GeometryError(f"height function is not {self.lam}-periodic (dev {per:.2e})")
        lo, hi = float(np.min(z)), float(np.max(z))
        if lo <= 0:
            raise GeometryError(f"surface must stay strictly above the x1-axis, min {lo}")
        object.__setattr__(self, "min_height", lo)
        object.__setattr__(self, "max_height", hi)


@dataclass(frozen=True)
class PerturbationProfile:
    """Compactly supported bump added to the surface inside one period."""

    bump: Callable
    bump_deriv: Callable
    support: tuple  # (a, b)

    def __post_init__(self):
        a, b = self.support
        if a > b:
            raise GeometryError(f"empty support interval {self.support}")
        # vanishing outside the support, sampled
        pad = max(1.0, b - a)
        t = np.concatenate([np.linspace(a - pad, a - 1e-9, 64), np.linspace(b + 1e-9, b + pad, 64)])
        if np.max(np.abs(np.asarray(self.bump(t), dtype=float))) > 1e-14:
            raise GeometryError("bump does not vanish outside its declared support")
        if np.max(np.abs(np.asarray(self.bump_deriv(t), dtype=float))) > 1e-14:
            raise GeometryError("bump derivative does not vanish outside its declared support")

    @property
    def is_zero(self) -> bool:
        a, b = self.support
        return a == b


class Geometry:
    """Perturbed periodic strip together with the periodizing map.

    Parameters
    ----------
    surface : SurfaceProfile
    perturbation : PerturbationProfile
    height : float
        Truncation height H; must lie strictly above both surfaces.
    """

    def __init__(self, surface: SurfaceProfile, perturbation: PerturbationProfile, height: float):
        self.surface = surface
        self.perturbation = perturbation
        self.height = float(height)

        a, b = perturbation.support
        half = surface.lam / 2
        if not (-half <= a and b <= half):
            raise GeometryError(f"bump support {perturbation.support} exceeds one period cell")

        t = np.linspace(-half, half, 4097)
        zp = self.perturbed_height(t)
        if np.min(zp) <= 0:
            raise GeometryError("perturbed surface dips below the x1-axis")
        if self.height <= max(np.max(zp), surface.max_height):
            raise GeometryError(
                f"truncation height {self.height} must exceed the surfaces "
                f"(max {max(np.max(zp), surface.max_height):.6g})"
            )
        self.min_perturbed_height = float(np.min(zp))
        self.max_perturbed_height = float(np.max(zp))

        # admissibility: the vertical stretch of the blend must stay positive
        x1 = np.linspace(-half, half, 801)
        x2 = np.linspace(0.0, 1.0, 41)
        z = self.unperturbed_height(x1)
        grid2 = z[:, None] + (self.height - z)[:, None] * x2[None, :]
        det = self._vertical_stretch(np.repeat(x1, x2.size), grid2.ravel())
        if np.min(det) <= 1e-8:
            raise GeometryError(
                f"perturbation too strong for the cubic blend (min det {np.min(det):.3e})"
            )

    # -- surface evaluation -------------------------------------------------

    @property
    def lam(self) -> float:
        return self.surface.lam

    def unperturbed_height(self, x1):
        return np.asarray(self.surface.height(x1), dtype=float)

    def perturbed_height(self, x1):
        return self.unperturbed_height(x1) + np.asarray(self.perturbation.bump(x1), dtype=float)

    # -- the periodizing map -------------------------------------------------

    def _blend(self, x1, x2):
        """Cubic blend factor (x2-H)^3/(zeta-H)^3 and the bump value at x1."""
        z = self.unperturbed_height(x1)
        H = self.height
        cube = ((x2 - H) / (z - H)) ** 3
        g = np.asarray(self.perturbation.bump(x1), dtype=float)
        return z, cube, g

    def _vertical_stretch(self, x1, x2):
        """d(second coordinate of the map)/dx2; equals the Jacobian determinant."""
        z = self.unperturbed_height(x1)
        H = self.height
        g = np.asarray(self.perturbation.bump(x1), dtype=float)
        return 1.0 + 3.0 * (x2 - H) ** 2 * g / (z - H) ** 3

    def _check_in_strip(self, x1, x2, zmin):
        H = self.height
        tol = 1e-10 * max(1.0, H)
        if np.any(x2 > H + tol) or np.any(x2 < zmin - tol):
            raise GeometryError("point outside the closed strip between surface and top line")

    def map_to_perturbed(self, points):
        """Apply the periodizing map; input shape (2,) or (n, 2)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x1, x2 = p[:, 0], p[:, 1]
        z, cube, g = self._blend(x1, x2)
        self._check_in_strip(x1, x2, z)
        out = np.column_stack([x1, x2 + cube * g])
        return out[0] if np.ndim(points) == 1 else out

    def map_from_perturbed(self, points, tol=1e-13, maxiter=60):
        """Invert the periodizing map by a safeguarded Newton iteration.

        The second coordinate of the map is strictly increasing in x2, so
        a Newton step with bisection fallback on [zeta(x1), H] converges;
        failure to reach ``tol`` within ``maxiter`` raises.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        y1, y2 = p[:, 0], p[:, 1]
        z = self.unperturbed_height(y1)
        zp = self.perturbed_height(y1)
        self._check_in_strip(y1, y2, np.minimum(z, zp))
        H = self.height
        g = np.asarray(self.perturbation.bump(y1), dtype=float)
        q = g / (z - H) ** 3

        lo = np.minimum(z, y2)  # map(x1, z) = zp; for y2 in [zp, H] the preimage is in [z, H]
        hi = np.full_like(y2, H)
        x = np.clip(y2, lo, hi)
        for _ in range(maxiter):
            f = x + (x - H) ** 3 * q - y2
            lo = np.where(f < 0, x, lo)
            hi = np.where(f > 0, x, hi)
            df = 1.0 + 3.0 * (x - H) ** 2 * q
            step = f / df
            xn = x - step
            bad = (xn < lo) | (xn > hi)
            xn = np.where(bad, 0.5 * (lo + hi), xn)
            done = np.abs(f) <= tol * max(1.0, H)
            if np.all(done):
                x = np.where(done, x, xn)
                break
            x = np.where(done, x, xn)
        else:
            f = x + (x - H) ** 3 * q - y2
            if np.max(np.abs(f)) > 1e-10 * max(1.0, H):
                raise ArithmeticError(
                    f"inverse map iteration did not converge (residual {np.max(np.abs(f)):.2e})"
                )
        out = np.column_stack([y1, x])
        return out[0] if np.ndim(points) == 1 else out

    def jacobian(self, points):
        """Jacobian matrix of the map; shape (2, 2) or (n, 2, 2)."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x1, x2 = p[:, 0], p[:, 1]
        z = self.unperturbed_height(x1)
        self._check_in_strip(x1, x2, z)
        H = self.height
        g = np.asarray(self.perturbation.bump(x1), dtype=float)
        gp = np.asarray(self.perturbation.bump_deriv(x1), dtype=float)
        zp = np.asarray(self.surface.height_deriv(x1), dtype=float)
        denom = (z - H) ** 3
        q = g / denom
        dq = gp / denom - 3.0 * g * zp / (z - H) ** 4
        j21 = (x2 - H) ** 3 * dq
        j22 = 1.0 + 3.0 * (x2 - H) ** 2 * q
        if np.any(j22 <= 0):
            raise GeometryError("degenerate map Jacobian; perturbation inadmissible")
        J = np.zeros((p.shape[0], 2, 2))
        J[:, 0, 0] = 1.0
        J[:, 1, 0] = j21
        J[:, 1, 1] = j22
        return J[0] if np.ndim(points) == 1 else J

    def coefficients(self, points):
        """Transformed PDE coefficients (A, c) at the given points.

        ``A = |det J| J^{-1} J^{-T}`` and ``c = |det J|`` for the map's
        Jacobian J.  Both reduce to the identity and 1 outside the bump
        support and satisfy det A = 1 identically.
        """
        single = np.ndim(points) == 1
        J = self.jacobian(np.atleast_2d(np.asarray(points, dtype=float)))
        j21, j22 = J[:, 1, 0], J[:, 1, 1]
        A = np.zeros_like(J)
        A[:, 0, 0] = j22
        A[:, 0, 1] = -j21
        A[:, 1, 0] = -j21
        A[:, 1, 1] = (1.0 + j21 * j21) / j22
        c = j22.copy()
        if single:
            return A[0], float(c[0])
        return A, c


# -- built-in profiles -------------------------------------------------------


def surface_f1(lam=2 * np.pi) -> SurfaceProfile:
    """Sinusoidal test surface 1 + sin(t)/4."""
    return SurfaceProfile(
        lam=lam,
        height=lambda t: 1.0 + np.sin(t) / 4.0,
        height_deriv=lambda t: np.cos(t) / 4.0,
    )


def surface_f2(lam=2 * np.pi) -> SurfaceProfile:
    """Two-mode test surface 1.9 + sin(t)/3 - cos(2t)/4."""
    return SurfaceProfile(
        lam=lam,
        height=lambda t: 1.9 + np.sin(t) / 3.0 - np.cos(2.0 * t) / 4.0,
        height_deriv=lambda t: np.cos(t) / 3.0 + np.sin(2.0 * t) / 2.0,
    )


def _smooth_cutoff(u):
    """exp(u) for u <= 0 with hard zero once exp would underflow."""
    out = np.zeros_like(u)
    ok = u > _EXP_FLOOR
    out[ok] = np.exp(u[ok])
    return out


def bump_g1(amplitude=1.0) -> PerturbationProfile:
    """One-sided smooth bump supported on [-2, 0]."""

    def val(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = (t > -2.0) & (t < 0.0)
        ti = t[inside]
        e = _smooth_cutoff(1.0 / (ti * (ti + 2.0)))
        out[inside] = amplitude * e * (np.cos(np.pi * (ti + 2.0) / 2.0) + 1.0)
        return out

    def deriv(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = (t > -2.0) & (t < 0.0)
        ti = t[inside]
        u = 1.0 / (ti * (ti + 2.0))
        e = _smooth_cutoff(u)
        du = -(2.0 * ti + 2.0) * u * u
        w = np.pi * (ti + 2.0) / 2.0
        out[inside] = amplitude * e * (du * (np.cos(w) + 1.0) - (np.pi / 2.0) * np.sin(w))
        return out

    return PerturbationProfile(bump=val, bump_deriv=deriv, support=(-2.0, 0.0))


def bump_g2(amplitude=1.0) -> PerturbationProfile:
    """Sign-changing smooth bump supported on [-1, 1]."""

    def val(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = (t > -1.0) & (t < 1.0)
        ti = t[inside]
        e = _smooth_cutoff(1.0 / (ti * ti - 1.0))
        out[inside] = amplitude * e * np.sin(np.pi * (ti + 1.0))
        return out

    def deriv(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        inside = (t > -1.0) & (t < 1.0)
        ti = t[inside]
        u = 1.0 / (ti * ti - 1.0)
        e = _smooth_cutoff(u)
        du = -2.0 * ti * u * u
        w = np.pi * (ti + 1.0)
        out[inside] = amplitude * e * (du * np.sin(w) + np.pi * np.cos(w))
        return out

    return PerturbationProfile(bump=val, bump_deriv=deriv, support=(-1.0, 1.0))


def bump_none() -> PerturbationProfile:
    """Zero perturbation (purely periodic surface)."""
    zero = lambda t: np.zeros_like(np.asarray(t, dtype=float))
    return PerturbationProfile(bump=zero, bump_deriv=zero, support=(0.0, 0.0))


def fourier_surface(lam, mean, cos_coeffs=(), sin_coeffs=()) -> SurfaceProfile:
    """Surface from a truncated Fourier series.

    ``zeta(t) = mean + sum_n cos_coeffs[n-1] cos(2 pi n t/lam)
                     + sum_n sin_coeffs[n-1] sin(2 pi n t/lam)``
    """
    ac = np.asarray(cos_coeffs, dtype=float)
    as_ = np.asarray(sin_coeffs, dtype=float)
    w = 2.0 * np.pi / lam

    def val(t):
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, float(mean))
        for n, a in enumerate(ac, start=1):
            out = out + a * np.cos(n * w * t)
        for n, b in enumerate(as_, start=1):
            out = out + b * np.sin(n * w * t)
        return out

    def deriv(t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for n, a in enumerate(ac, start=1):
            out = out - a * n * w * np.sin(n * w * t)
        for n, b in enumerate(as_, start=1):
            out = out + b * n * w * np.cos(n * w * t)
        return out

    return SurfaceProfile(lam=lam, height=val, height_deriv=deriv)


_SURFACES = {"f1": surface_f1, "f2": surface_f2}
_BUMPS = {"g1": bump_g1, "g2": bump_g2, "none": bump_none}

BUILTIN_NAMES = tuple(f"{f}+{g}" for f in ("f1", "f2") for g in ("g1", "g2", "none"))


def builtin_geometry(name: str, height=4.0) -> Geometry:
    """Construct a named built-in geometry such as ``"f1+g1"`` or ``"f2+none"``."""
    try:
        fname, gname = name.split("+")
        surf = _SURFACES[fname]()
        bump = _BUMPS[gname]()
    except (ValueError, KeyError):
        raise GeometryError(f"unknown geometry {name!r}; expected one of {BUILTIN_NAMES}") from None
    return Geometry(surf, bump, height)
