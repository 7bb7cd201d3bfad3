"""First Dirichlet eigenvalues of spherical domains and partition values.

``gamma`` converts an eigenvalue of the sphere S^{N-1} into the homogeneity
degree of the corresponding harmonic extension; ``gamma_inverse`` is
``d -> d (d + N - 2)``.

On S^1 an arc of length ``l`` has ``lambda_1 = (pi/l)^2``. On S^2 a lune of
dihedral angle ``alpha`` has ``lambda_1 = nu (nu + 1)`` with ``nu = pi/alpha``.
Arbitrary node masks on a :class:`~seglab.grid.SphereGrid` go through a
finite-volume Laplace-Beltrami matrix and inverse power iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar
from scipy.sparse.csgraph import connected_components

from .grid import GridDomainError, SphereGrid

TWO_PI = 2.0 * math.pi


class NotConvergedError(RuntimeError):
    pass


def gamma(t: float, N: int) -> float:
    if t < 0:
        raise ValueError(f"gamma needs t >= 0, got {t}")
    if N < 2:
        raise ValueError("N must be >= 2")
    c = (N - 2) / 2.0
    return math.sqrt(c * c + t) - c


def gamma_inverse(d: float, N: int) -> float:
    """Eigenvalue ``d (d + N - 2)`` of a degree-``d`` homogeneous harmonic trace."""
    if not d > 0:
        raise ValueError(f"gamma_inverse needs d > 0, got {d}")
    return d * (d + N - 2)


def lambda1_arc(length: float) -> float:
    if not 0 < length <= TWO_PI * (1 + 1e-12):
        raise ValueError(f"arc length must lie in (0, 2 pi], got {length}")
    return (math.pi / length) ** 2


def lambda1_lune(alpha: float) -> float:
    if not 0 < alpha <= TWO_PI * (1 + 1e-12):
        raise ValueError(f"lune angle must lie in (0, 2 pi], got {alpha}")
    nu = math.pi / alpha
    return nu * (nu + 1.0)


# --------------------------------------------------------------------------
# partitions


@dataclass
class ArcPartition:
    """Disjoint open arcs ``(a_i, b_i)`` with ``0 <= a_1 < b_1 <= a_2 < ... <= 2 pi``."""

    arcs: list[tuple[float, float]]

    def __post_init__(self):
        arcs = [(float(a), float(b)) for a, b in self.arcs]
        if not arcs:
            raise ValueError("empty arc partition")
        prev = 0.0
        for a, b in arcs:
            if a < prev - 1e-12 or not b > a or b > TWO_PI * (1 + 1e-12):
                raise ValueError(f"arcs overlap or are out of order: {arcs}")
            prev = b
        self.arcs = arcs

    @property
    def lengths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.arcs])

    @classmethod
    def equal(cls, k: int) -> "ArcPartition":
        t = np.linspace(0.0, TWO_PI, k + 1)
        return cls(list(zip(t[:-1], t[1:])))


@dataclass
class SphereDomain:
    """A lune ``lam0 < lambda < lam0 + alpha`` or a node mask on a sphere grid."""

    kind: str = "lune"
    alpha: float = math.pi
    lam0: float = 0.0
    mask: np.ndarray | None = field(default=None, repr=False)
    grid: SphereGrid | None = None

    def __post_init__(self):
        if self.kind == "lune":
            if not 0 < self.alpha <= TWO_PI * (1 + 1e-12):
                raise ValueError(f"lune angle must lie in (0, 2 pi], got {self.alpha}")
        elif self.kind == "mask":
            if self.mask is None or self.grid is None:
                raise ValueError("mask domain needs mask and grid")
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.grid.shape:
                raise GridDomainError(f"mask shape {self.mask.shape} != grid shape {self.grid.shape}")
            check_mask(self.grid, self.mask)
        else:
            raise ValueError(f"unknown domain kind {self.kind!r}")

    def node_mask(self, grid: SphereGrid) -> np.ndarray:
        if self.kind == "mask":
            if grid != self.grid:
                raise GridDomainError("mask domain lives on a different grid")
            return self.mask
        return lune_mask(grid, self.alpha, self.lam0)


def lune_mask(grid: SphereGrid, alpha: float, lam0: float = 0.0) -> np.ndarray:
    """Nodes with longitude strictly inside ``(lam0, lam0 + alpha)``."""
    rel = np.mod(grid.lam - lam0, TWO_PI)
    eps = 1e-9 * grid.dlam
    inside = (rel > eps) & (rel < alpha - eps)
    return np.repeat(inside[None, :], grid.shape[0], axis=0)


def _neighbour_pairs(grid: SphereGrid):
    P, Q = grid.shape
    idx = np.arange(P * Q).reshape(P, Q)
    lat = (idx[:-1, :].ravel(), idx[1:, :].ravel())
    lon = (idx.ravel(), np.roll(idx, -1, axis=1).ravel())
    return idx, lat, lon


def check_mask(grid: SphereGrid, mask: np.ndarray) -> None:
    """Nonempty and connected over the 4-neighbour stencil (periodic longitude)."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("mask is empty")
    _, lat, lon = _neighbour_pairs(grid)
    flat = mask.ravel()
    a = np.concatenate([lat[0], lon[0]])
    b = np.concatenate([lat[1], lon[1]])
    keep = flat[a] & flat[b]
    nodes = np.flatnonzero(flat)
    remap = -np.ones(flat.size, dtype=int)
    remap[nodes] = np.arange(nodes.size)
    adj = sp.coo_matrix(
        (np.ones(keep.sum()), (remap[a[keep]], remap[b[keep]])), shape=(nodes.size, nodes.size)
    )
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise ValueError(f"mask is not connected ({n_comp} components)")


def laplace_beltrami_matrices(grid: SphereGrid, mask: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Stiffness ``A`` and lumped mass ``m`` with Dirichlet data off the mask.

    Poles are not unknowns, so they act as Dirichlet nodes.
    """
    mask = np.asarray(mask, dtype=bool)
    P, Q = grid.shape
    dphi, dlam = grid.dphi, grid.dlam
    phi = grid.phi
    nodes = np.flatnonzero(mask.ravel())
    remap = -np.ones(P * Q, dtype=int)
    remap[nodes] = np.arange(nodes.size)
    n = nodes.size
    diag = np.zeros(n)
    rows, cols, vals = [], [], []

    def add_edges(a, b, w):
        ra, rb = remap[a], remap[b]
        ina, inb = ra >= 0, rb >= 0
        np.add.at(diag, ra[ina], w[ina])
        np.add.at(diag, rb[inb], w[inb])
        both = ina & inb
        rows.extend([ra[both], rb[both]])
        cols.extend([rb[both], ra[both]])
        vals.extend([-w[both], -w[both]])

    idx = np.arange(P * Q).reshape(P, Q)
    # latitude edges between interior rows
    w_lat = np.sin(phi[:-1] + 0.5 * dphi) * dlam / dphi
    add_edges(idx[:-1, :].ravel(), idx[1:, :].ravel(), np.repeat(w_lat, Q))
    # edges to the poles (Dirichlet)
    w_pole = math.sin(0.5 * dphi) * dlam / dphi
    for row in (0, P - 1):
        r = remap[idx[row, :]]
        np.add.at(diag, r[r >= 0], w_pole)
    # longitude edges
    w_lon = dphi / (np.sin(phi) * dlam)
    add_edges(idx.ravel(), np.roll(idx, -1, axis=1).ravel(), np.repeat(w_lon, Q))

    off = sp.coo_matrix(
        (np.concatenate(vals) if vals else [], (np.concatenate(rows) if rows else [], np.concatenate(cols) if cols else [])),
        shape=(n, n),
    )
    A = (off + sp.diags(diag)).tocsr()
    m = grid.weights().ravel()[nodes]
    return A, m


@dataclass
class EigenResult:
    value: float
    iterations: int
    n_nodes: int
    history: list[float]


def lambda1_masked(
    grid: SphereGrid,
    mask: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 500,
    shift: float = 0.0,
    cg_rtol: float = 1e-12,
) -> EigenResult:
    """Smallest Dirichlet eigenvalue on ``mask`` by shifted inverse iteration.

    Inner solves use Jacobi-preconditioned conjugate gradients. The start
    vector is all ones on the mask. Iteration stops when successive Rayleigh
    quotients differ by less than ``tol``.
    """
    check_mask(grid, mask)
    A, m = laplace_beltrami_matrices(grid, mask)
    S = (A - shift * sp.diags(m)).tocsr() if shift else A
    prec = sp.diags(1.0 / S.diagonal())
    x = np.ones(A.shape[0])
    x /= math.sqrt(np.dot(x, m * x))
    rq_prev = math.inf
    hist: list[float] = []
    y = x.copy()
    for it in range(1, max_iter + 1):
        y, info = spla.cg(S, m * x, x0=y, rtol=cg_rtol, maxiter=20 * A.shape[0], M=prec)
        if info < 0:
            raise NotConvergedError(f"inner CG breakdown (info={info})")
        x = y / math.sqrt(np.dot(y, m * y))
        rq = float(np.dot(x, A @ x))
        hist.append(rq)
        if abs(rq - rq_prev) < tol:
            return EigenResult(rq, it, A.shape[0], hist)
        rq_prev = rq
        y = x * (1.0 / max(rq - shift, 1e-300))
    raise NotConvergedError(f"inverse iteration stalled after {max_iter} iterations")


def lune_geometry_error(grid: SphereGrid, alpha: float) -> float:
    """Relative difference between ``alpha`` and its rasterised longitude span."""
    steps = math.ceil(alpha / grid.dlam - 1e-9)
    return (steps * grid.dlam - alpha) / alpha


def lambda1_domain(domain: SphereDomain, grid: SphereGrid | None = None) -> float:
    """Closed form for lunes unless ``grid`` is given; masks always use the grid."""
    if domain.kind == "lune" and grid is None:
        return lambda1_lune(domain.alpha)
    g = grid if grid is not None else domain.grid
    return lambda1_masked(g, domain.node_mask(g)).value


def _check_lunes_disjoint(domains: Sequence[SphereDomain]) -> None:
    lunes = [d for d in domains if d.kind == "lune"]
    if sum(d.alpha for d in lunes) > TWO_PI * (1 + 1e-12):
        raise ValueError("lunes overlap: total angle exceeds 2 pi")
    for i, a in enumerate(lunes):
        for b in lunes[i + 1 :]:
            start = np.mod(b.lam0 - a.lam0, TWO_PI)
            if start < a.alpha - 1e-12 or TWO_PI - start < b.alpha - 1e-12:
                raise ValueError("lunes overlap")
    masks = [d for d in domains if d.kind == "mask"]
    if masks:
        total = np.zeros(masks[0].mask.shape, dtype=int)
        for d in masks:
            total += d.mask
        if total.max() > 1:
            raise ValueError("masks overlap")


def consecutive_lunes(alphas: Sequence[float]) -> list[SphereDomain]:
    """Lunes placed side by side starting at longitude 0."""
    out, lam0 = [], 0.0
    for a in alphas:
        out.append(SphereDomain("lune", alpha=float(a), lam0=lam0))
        lam0 += float(a)
    return out


def part_eigenvalues(partition, grid: SphereGrid | None = None) -> list[float]:
    if isinstance(partition, ArcPartition):
        return [lambda1_arc(l) for l in partition.lengths]
    domains = list(partition)
    _check_lunes_disjoint(domains)
    return [lambda1_domain(d, grid) for d in domains]


def _dim(partition) -> int:
    return 2 if isinstance(partition, ArcPartition) else 3


def partition_value(partition, grid: SphereGrid | None = None) -> float:
    """``max_i lambda_1(omega_i)`` for a candidate partition (an upper bound for L_k)."""
    return max(part_eigenvalues(partition, grid))


def beta_value(partition, N: int | None = None, grid: SphereGrid | None = None) -> float:
    """``(2/k) sum_i gamma(lambda_1(omega_i))`` for a candidate partition."""
    N = N or _dim(partition)
    lams = part_eigenvalues(partition, grid)
    return 2.0 / len(lams) * sum(gamma(l, N) for l in lams)


def partition_summary(partition, grid: SphereGrid | None = None) -> dict:
    N = _dim(partition)
    lams = part_eigenvalues(partition, grid)
    value = max(lams)
    return {
        "lambda1_per_part": lams,
        "partition_value": value,
        "beta_value": 2.0 / len(lams) * sum(gamma(l, N) for l in lams),
        "gamma_of_value": gamma(value, N),
    }


# --------------------------------------------------------------------------
# optimisation on S^1


def _arc_objective(t: np.ndarray) -> float:
    return max(lambda1_arc(b - a) for a, b in zip(t[:-1], t[1:]))


def optimize_arcs(
    k: int,
    n_starts: int = 8,
    seed: int = 0,
    max_sweeps: int = 20000,
    xtol: float = 1e-13,
) -> tuple[ArcPartition, float]:
    """Coordinate descent on arc endpoints from random starts.

    Gaps between consecutive arcs never lower the objective, so arcs are
    parametrised by ``k + 1`` breakpoints ``t_0 <= ... <= t_k`` in
    ``[0, 2 pi]``. Each sweep minimises the objective in one breakpoint at a
    time with bounded Brent search.
    """
    if k < 2:
        raise ValueError("optimize_arcs needs k >= 2")
    rng = np.random.default_rng(seed)
    best_t, best_val = None, math.inf
    for _ in range(n_starts):
        t = np.sort(rng.uniform(0.0, TWO_PI, k + 1))
        t[0] = min(t[0], t[1] - 1e-6)
        for _sweep in range(max_sweeps):
            moved = 0.0
            for i in range(k + 1):
                lo = 0.0 if i == 0 else t[i - 1]
                hi = TWO_PI if i == k else t[i + 1]
                if hi - lo <= 0:
                    continue

                def local(s, i=i):
                    vals = []
                    if i > 0:
                        vals.append((math.pi / max(s - t[i - 1], 1e-300)) ** 2)
                    if i < k:
                        vals.append((math.pi / max(t[i + 1] - s, 1e-300)) ** 2)
                    return max(vals)

                res = minimize_scalar(local, bounds=(lo, hi), method="bounded", options={"xatol": xtol})
                new = float(res.x)
                # bounded Brent never returns the exact endpoint
                if i == 0 and local(0.0) <= res.fun:
                    new = 0.0
                if i == k and local(TWO_PI) <= res.fun:
                    new = TWO_PI
                moved = max(moved, abs(new - t[i]))
                t[i] = new
            if moved < xtol:
                break
        val = _arc_objective(t)
        if val < best_val:
            best_t, best_val = t.copy(), val
    part = ArcPartition(list(zip(best_t[:-1], best_t[1:])))
    return part, best_val


def monotonicity_Lk_check(k_max: int, n_starts: int = 4, seed: int = 0) -> dict:
    """Strict growth of optimised S^1 values for k = 2..k_max and of L_3 > L_2 on S^2."""
    if k_max < 3:
        raise ValueError("k_max must be >= 3")
    values = []
    for k in range(2, k_max + 1):
        _, v = optimize_arcs(k, n_starts=n_starts, seed=seed)
        values.append(v)
    circle_ok = all(b > a for a, b in zip(values, values[1:]))
    L2, L3 = gamma_inverse(1.0, 3), gamma_inverse(1.5, 3)
    return {
        "k": list(range(2, k_max + 1)),
        "circle_values": values,
        "circle_strict": circle_ok,
        "sphere_L2": L2,
        "sphere_L3": L3,
        "sphere_strict": L3 > L2,
        "passed": circle_ok and L3 > L2,
    }
