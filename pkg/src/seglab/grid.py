"""Structured polar and spherical grids, fields, and quadrature.

The disk grid has nodes ``r_j = j * dr`` (``j = 0..n_r``) and
``theta_m = m * dtheta`` (``m = 0..n_theta-1``, periodic). Row ``j = 0`` is the
pole: it is stored with the same width as every other ring for array
convenience, but a :class:`MultiField` always holds a single value there.

Scalar fields are plain arrays of shape ``(n_r + 1, n_theta)``; stacks of
components have shape ``(k, n_r + 1, n_theta)``. All reductions go through
``numpy.sum`` on fixed-shape arrays, so results do not depend on threading.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np


class GridDomainError(ValueError):
    """A radius, window, or grid parameter lies outside the admissible range."""


_RTOL = 1e-12


@dataclass(frozen=True)
class PolarGrid2D:
    """Uniform polar grid on the closed disk of radius ``r_max``."""

    n_r: int
    n_theta: int
    r_max: float

    def __post_init__(self):
        if int(self.n_r) != self.n_r or self.n_r < 8:
            raise GridDomainError(f"n_r must be an integer >= 8, got {self.n_r}")
        if int(self.n_theta) != self.n_theta or self.n_theta < 16 or self.n_theta % 2:
            raise GridDomainError(f"n_theta must be an even integer >= 16, got {self.n_theta}")
        if not (self.r_max > 0 and math.isfinite(self.r_max)):
            raise GridDomainError(f"r_max must be positive, got {self.r_max}")
        object.__setattr__(self, "n_r", int(self.n_r))
        object.__setattr__(self, "n_theta", int(self.n_theta))
        object.__setattr__(self, "r_max", float(self.r_max))

    @property
    def dr(self) -> float:
        return self.r_max / self.n_r

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.n_r + 1) * self.dr

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.dtheta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r + 1, self.n_theta)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(R, Theta)`` arrays of shape :attr:`shape`."""
        return np.meshgrid(self.r, self.theta, indexing="ij")

    def cartesian(self) -> tuple[np.ndarray, np.ndarray]:
        rr, tt = self.mesh()
        return rr * np.cos(tt), rr * np.sin(tt)

    def evaluate(self, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
        """Sample ``func(r, theta)`` on the nodes; the pole row is averaged."""
        rr, tt = self.mesh()
        vals = np.array(np.broadcast_to(func(rr, tt), self.shape), dtype=float)
        vals[0, :] = vals[0, :].mean()
        return vals

    def node_weights(self) -> np.ndarray:
        """Area weights: pole disk of radius dr/2, rings r_j dr dtheta, half weight on the rim."""
        w = np.empty(self.shape)
        w[0, :] = 0.0
        w[1:, :] = (self.r[1:] * self.dr * self.dtheta)[:, None]
        w[-1, :] *= 0.5
        w[0, 0] = math.pi * (0.5 * self.dr) ** 2
        return w

    def check_radius(self, r: float) -> float:
        r = float(r)
        if not (r > 0.0) or r > self.r_max * (1.0 + _RTOL):
            raise GridDomainError(f"radius {r} outside (0, {self.r_max}]")
        return min(r, self.r_max)


@dataclass(frozen=True)
class MultiField:
    """``k`` nonnegative components sampled on a :class:`PolarGrid2D`.

    ``values`` has shape ``(k, n_r + 1, n_theta)``. The pole row of each
    component is collapsed to its mean on construction, and the stored array
    is read-only.
    """

    grid: PolarGrid2D
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 2:
            vals = vals[None]
        if vals.ndim != 3 or vals.shape[1:] != self.grid.shape:
            raise GridDomainError(
                f"values shape {vals.shape} incompatible with grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must be finite")
        if np.any(vals < 0):
            raise ValueError("field values must be nonnegative")
        vals[:, 0, :] = vals[:, 0, :].mean(axis=1, keepdims=True)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def k(self) -> int:
        return self.values.shape[0]

    @property
    def pole(self) -> np.ndarray:
        return self.values[:, 0, 0].copy()

    def component(self, i: int) -> np.ndarray:
        return self.values[i]

    def sum_sq(self) -> np.ndarray:
        return np.sum(self.values**2, axis=0)

    def coupling_density(self) -> np.ndarray:
        """Pointwise sum over pairs i < j of u_i^2 u_j^2."""
        sq = self.values**2
        total = np.sum(sq, axis=0)
        return 0.5 * (total**2 - np.sum(sq**2, axis=0))

    def with_values(self, values: np.ndarray) -> "MultiField":
        return MultiField(self.grid, values)

    def padded(self, k: int) -> "MultiField":
        """Append zero components up to ``k`` total."""
        if k < self.k:
            raise ValueError("cannot pad to fewer components")
        extra = np.zeros((k - self.k,) + self.grid.shape)
        return MultiField(self.grid, np.concatenate([self.values, extra]))

    @classmethod
    def from_functions(cls, grid: PolarGrid2D, funcs: Sequence[Callable]) -> "MultiField":
        return cls(grid, np.stack([grid.evaluate(f) for f in funcs]))


# --------------------------------------------------------------------------
# quadrature


def _ring_interp(grid: PolarGrid2D, f: np.ndarray, r: float) -> np.ndarray:
    s = r / grid.dr
    j0 = min(int(math.floor(s)), grid.n_r - 1)
    w = s - j0
    return (1.0 - w) * f[..., j0, :] + w * f[..., j0 + 1, :]


def integrate_circle(grid: PolarGrid2D, f: np.ndarray, r: float) -> float | np.ndarray:
    """Trapezoidal integral of ``f`` over the circle of radius ``r``.

    The trace on the circle is linearly interpolated between the two
    neighbouring rings. Leading axes of ``f`` are kept.
    """
    r = grid.check_radius(r)
    ring = _ring_interp(grid, np.asarray(f, dtype=float), r)
    return np.sum(ring, axis=-1) * r * grid.dtheta


def _radial_profile(grid: PolarGrid2D, f: np.ndarray) -> np.ndarray:
    # g_j = r_j * sum_m f_jm * dtheta; g_0 = 0
    return grid.r * np.sum(f, axis=-1) * grid.dtheta


def integrate_disk(grid: PolarGrid2D, f: np.ndarray, r: float) -> float | np.ndarray:
    """Integral of ``f`` over the disk of radius ``r``.

    At node radii this is the ring sum ``sum f r_j dr dtheta`` with half weight
    on the outermost ring plus a pole cell of radius ``dr/2``; between nodes
    the last partial interval is integrated with the linear interpolant of the
    ring integrand, so the result is continuous in ``r``.
    """
    r = grid.check_radius(r)
    f = np.asarray(f, dtype=float)
    g = _radial_profile(grid, f)
    dr = grid.dr
    s = r / dr
    j0 = min(int(math.floor(s)), grid.n_r - 1)
    w = s - j0
    # trapezoid over [0, r_j0]
    if j0 > 0:
        full = dr * (np.sum(g[..., 1:j0], axis=-1) + 0.5 * g[..., j0])
    else:
        full = np.zeros(g.shape[:-1])
    gr = (1.0 - w) * g[..., j0] + w * g[..., j0 + 1]
    part = 0.5 * (g[..., j0] + gr) * (w * dr)
    pole = math.pi * (0.5 * dr) ** 2 * f[..., 0, 0]
    return full + part + pole


def integrate_full(grid: PolarGrid2D, f: np.ndarray) -> float | np.ndarray:
    return integrate_disk(grid, f, grid.r_max)


# --------------------------------------------------------------------------
# derivatives


def gradient_components(grid: PolarGrid2D, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(du/dr, |(1/r) du/dtheta|)``.

    The radial derivative is centred (second-order one-sided on the rim). The
    angular magnitude is the root mean square of the two one-sided
    differences, which stays exact across nodal rays where a segregated
    component has a kink. At the pole the Cartesian gradient ``(a, b)`` is
    estimated from the first ring's ``cos``/``sin`` Fourier modes and reported
    as ``(|grad u|, 0)``.
    """
    u = np.asarray(u, dtype=float)
    dr, dth = grid.dr, grid.dtheta
    ur = np.empty_like(u)
    ut = np.empty_like(u)
    ur[..., 1:-1, :] = (u[..., 2:, :] - u[..., :-2, :]) / (2 * dr)
    ur[..., -1, :] = (3 * u[..., -1, :] - 4 * u[..., -2, :] + u[..., -3, :]) / (2 * dr)
    rings = u[..., 1:, :]
    fwd = np.roll(rings, -1, axis=-1) - rings
    bwd = rings - np.roll(rings, 1, axis=-1)
    ut[..., 1:, :] = np.sqrt(0.5 * (fwd**2 + bwd**2)) / (dth * grid.r[1:, None])
    th = grid.theta
    n = grid.n_theta
    a = 2.0 / n * np.sum(u[..., 1, :] * np.cos(th), axis=-1) / dr
    b = 2.0 / n * np.sum(u[..., 1, :] * np.sin(th), axis=-1) / dr
    ur[..., 0, :] = np.hypot(a, b)[..., None]
    ut[..., 0, :] = 0.0
    return ur, ut


def gradient_sq(grid: PolarGrid2D, u: np.ndarray) -> np.ndarray:
    """Pointwise ``|grad u|^2`` for a scalar field or a component stack."""
    ur, ut = gradient_components(grid, u)
    return ur**2 + ut**2


def laplacian(grid: PolarGrid2D, u: np.ndarray) -> np.ndarray:
    """Five-point polar Laplacian; pole closure uses the first-ring mean.

    The rim row (Dirichlet data) is returned as zero.
    """
    u = np.asarray(u, dtype=float)
    dr, dth = grid.dr, grid.dtheta
    r = grid.r
    out = np.zeros_like(u)
    rj = r[1:-1, None]
    rp = rj + 0.5 * dr
    rm = rj - 0.5 * dr
    uc = u[..., 1:-1, :]
    radial = (rp * (u[..., 2:, :] - uc) - rm * (uc - u[..., :-2, :])) / (rj * dr**2)
    angular = (np.roll(uc, -1, axis=-1) - 2 * uc + np.roll(uc, 1, axis=-1)) / (rj**2 * dth**2)
    out[..., 1:-1, :] = radial + angular
    pole = 4.0 / dr**2 * (u[..., 1, :].mean(axis=-1) - u[..., 0, 0])
    out[..., 0, :] = pole[..., None]
    return out


# --------------------------------------------------------------------------
# interpolation


def interpolate(grid: PolarGrid2D, u: np.ndarray, r: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Bilinear interpolation in ``(r, theta)``; ``theta`` is taken mod 2 pi."""
    u = np.asarray(u, dtype=float)
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    s = np.clip(r / grid.dr, 0.0, grid.n_r)
    j0 = np.minimum(np.floor(s).astype(int), grid.n_r - 1)
    wr = s - j0
    t = np.mod(theta / grid.dtheta, grid.n_theta)
    m0 = np.floor(t).astype(int) % grid.n_theta
    wt = t - np.floor(t)
    m1 = (m0 + 1) % grid.n_theta
    v00 = u[..., j0, m0]
    v01 = u[..., j0, m1]
    v10 = u[..., j0 + 1, m0]
    v11 = u[..., j0 + 1, m1]
    return (1 - wr) * ((1 - wt) * v00 + wt * v01) + wr * ((1 - wt) * v10 + wt * v11)


def sample_rescaled(field: MultiField, R: float, target: PolarGrid2D, norm: float) -> MultiField:
    """Sample ``u(R x) / norm`` on ``target`` by bilinear interpolation."""
    if not norm > 0:
        raise GridDomainError(f"norm must be positive, got {norm}")
    if not R > 0:
        raise GridDomainError(f"scale R must be positive, got {R}")
    if R * target.r_max > field.grid.r_max * (1.0 + _RTOL):
        raise GridDomainError(
            f"window R*r_max = {R * target.r_max} exceeds source radius {field.grid.r_max}"
        )
    rr, tt = target.mesh()
    vals = interpolate(field.grid, field.values, np.minimum(R * rr, field.grid.r_max), tt)
    return MultiField(target, np.maximum(vals / norm, 0.0))


# --------------------------------------------------------------------------
# sphere grid


@dataclass(frozen=True)
class SphereGrid:
    """Colatitude/longitude grid on S^2 with the poles excluded.

    Interior colatitudes ``phi_p = p * dphi`` for ``p = 1..n_phi-1`` and
    periodic longitudes ``lam_q = q * dlam`` for ``q = 0..n_lam-1``.
    """

    n_phi: int
    n_lam: int

    def __post_init__(self):
        if self.n_phi < 4 or self.n_lam < 8:
            raise GridDomainError("SphereGrid needs n_phi >= 4 and n_lam >= 8")

    @property
    def dphi(self) -> float:
        return math.pi / self.n_phi

    @property
    def dlam(self) -> float:
        return 2.0 * math.pi / self.n_lam

    @property
    def phi(self) -> np.ndarray:
        return np.arange(1, self.n_phi) * self.dphi

    @property
    def lam(self) -> np.ndarray:
        return np.arange(self.n_lam) * self.dlam

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_phi - 1, self.n_lam)

    def weights(self) -> np.ndarray:
        w = np.sin(self.phi) * self.dphi * self.dlam
        return np.repeat(w[:, None], self.n_lam, axis=1)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.sum(np.asarray(f) * self.weights()))

    @staticmethod
    def pole_values(f: np.ndarray) -> tuple[float, float]:
        """North/south pole values as the mean over the adjacent ring."""
        f = np.asarray(f, dtype=float)
        return float(f[0].mean()), float(f[-1].mean())


# --------------------------------------------------------------------------
# field snapshots


def write_field_csv(field: MultiField, path: str | Path) -> None:
    """Write ``j,m,r,theta,u1..uk`` rows, row-major in ``(j, m)``."""
    g = field.grid
    header = ["j", "m", "r", "theta"] + [f"u{i + 1}" for i in range(field.k)]
    r, th = g.r, g.theta
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for j in range(g.n_r + 1):
            for m in range(g.n_theta):
                row = [j, m, f"{r[j]:.17g}", f"{th[m]:.17g}"]
                row += [f"{v:.17g}" for v in field.values[:, j, m]]
                w.writerow(row)


def read_field_csv(path: str | Path) -> MultiField:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[:4] != ["j", "m", "r", "theta"]:
        raise ValueError(f"unexpected header {header}")
    k = len(header) - 4
    data = np.array(body, dtype=float)
    n_r = int(data[:, 0].max())
    n_theta = int(data[:, 1].max()) + 1
    r_max = float(data[data[:, 0] == n_r, 2][0])
    grid = PolarGrid2D(n_r, n_theta, r_max)
    vals = data[:, 4:].T.reshape(k, n_r + 1, n_theta)
    return MultiField(grid, vals)
