"""Almgren frequency, doubling checks, growth-rate plateau, and ACF functionals.

For a field on the disk (dimension N = 2) and centre at the origin:

    H(r) = (1/r) int_{dB_r} sum u_i^2
    E(r) = int_{B_r} sum |grad u_i|^2 + beta sum_{i<j} u_i^2 u_j^2
    N(r) = E(r) / H(r)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import (
    GridDomainError,
    MultiField,
    PolarGrid2D,
    gradient_components,
    gradient_sq,
    integrate_circle,
    integrate_disk,
)
from .spectral import gamma

DIM = 2


class UndefinedFrequencyError(ArithmeticError):
    """H vanishes at the requested radius."""


def _energy_density(field: MultiField, beta: float) -> np.ndarray:
    return np.sum(gradient_sq(field.grid, field.values), axis=0) + beta * field.coupling_density()


def compute_H(field: MultiField, r: float) -> float:
    return float(integrate_circle(field.grid, field.sum_sq(), r)) / r


def compute_E(field: MultiField, beta: float, r: float) -> float:
    return float(integrate_disk(field.grid, _energy_density(field, beta), r))


def compute_N(field: MultiField, beta: float, r: float) -> float:
    H = compute_H(field, r)
    if not H > 0:
        raise UndefinedFrequencyError(f"H(u, 0, {r}) = {H}")
    return compute_E(field, beta, r) / H


def geometric_radii(r_lo: float, r_hi: float, per_octave: int = 4) -> np.ndarray:
    """Log-uniform radii ``r_lo * 2^(i/per_octave)`` up to ``r_hi``.

    Every radius ``r`` with ``2r <= r_hi`` has its double in the list.
    """
    n = int(math.floor(per_octave * math.log2(r_hi / r_lo) + 1e-9))
    return r_lo * 2.0 ** (np.arange(n + 1) / per_octave)


@dataclass
class AlmgrenTrace:
    radii: np.ndarray
    H: np.ndarray
    E: np.ndarray
    N: np.ndarray
    beta: float
    r_max: float
    truncated: bool = False
    violations: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def max_violation(self) -> float:
        return float(self.violations.max()) if self.violations.size else 0.0

    def window(self, lo: float, hi: float) -> "AlmgrenTrace":
        """Sub-trace with ``lo <= r <= hi`` (violations recomputed)."""
        m = (self.radii >= lo * (1 - 1e-12)) & (self.radii <= hi * (1 + 1e-12))
        return _make_trace(self.radii[m], self.H[m], self.E[m], self.beta, self.r_max, self.truncated)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["r", "H", "E", "N"])
            for row in zip(self.radii, self.H, self.E, self.N):
                w.writerow([f"{v:.17g}" for v in row])


def _make_trace(radii, H, E, beta, r_max, truncated) -> AlmgrenTrace:
    radii, H, E = (np.asarray(a, dtype=float) for a in (radii, H, E))
    N = E / H
    viol = np.maximum(0.0, N[:-1] - N[1:]) if N.size > 1 else np.zeros(0)
    return AlmgrenTrace(radii, H, E, N, beta, r_max, truncated, viol)


def frequency_trace(field: MultiField, beta: float, radii: Sequence[float]) -> AlmgrenTrace:
    """Sample H, E, N at increasing radii; stops (and flags) at the first H <= 0."""
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be strictly increasing")
    grid = field.grid
    s2 = field.sum_sq()
    dens = _energy_density(field, beta)
    Hs, Es, kept = [], [], []
    truncated = False
    for r in radii:
        H = float(integrate_circle(grid, s2, r)) / r
        if not H > 0:
            truncated = True
            break
        Hs.append(H)
        Es.append(float(integrate_disk(grid, dens, r)))
        kept.append(r)
    return _make_trace(kept, Hs, Es, beta, grid.r_max, truncated)


# --------------------------------------------------------------------------
# doubling


@dataclass
class DoublingReport:
    d: float
    pairs: list[tuple[float, float]]
    lower_ok: list[bool]
    upper_ok: list[bool]
    lower_margin: float
    upper_margin: float
    tol: float

    @property
    def passed(self) -> bool:
        return all(self.lower_ok) and all(self.upper_ok)


def check_doubling(
    trace: AlmgrenTrace,
    d: float | None = None,
    tol: float = 1e-2,
    ratio: float | None = None,
) -> DoublingReport:
    """Check both doubling inequalities over ordered radius pairs.

    Lower bound, with exponent ``N(r1)``:
        H(r2)/r2^{2N(r1)} >= H(r1)/r1^{2N(r1)}
    Upper bound, for ``d >= max N``:
        H(r2)/r2^{2d} <= e^d H(r1)/r1^{2d}

    Margins are relative: ``lhs/rhs - 1`` for the lower bound and
    ``rhs/lhs - 1`` for the upper one, so a pair passes when its margin is at
    least ``-tol``. ``ratio`` restricts to pairs with ``r2/r1 == ratio``.
    """
    r, H, N = trace.radii, trace.H, trace.N
    if d is None:
        d = float(N.max())
    pairs, lo_ok, up_ok = [], [], []
    lo_worst, up_worst = math.inf, math.inf
    for a in range(len(r)):
        for b in range(a + 1, len(r)):
            if ratio is not None and abs(r[b] / r[a] - ratio) > 1e-9 * ratio:
                continue
            lr = math.log(r[b] / r[a])
            lo = math.exp(math.log(H[b] / H[a]) - 2 * N[a] * lr) - 1.0
            up = math.exp(d - math.log(H[b] / H[a]) + 2 * d * lr) - 1.0
            pairs.append((float(r[a]), float(r[b])))
            lo_ok.append(lo >= -tol)
            up_ok.append(up >= -tol)
            lo_worst = min(lo_worst, lo)
            up_worst = min(up_worst, up)
    return DoublingReport(d, pairs, lo_ok, up_ok, lo_worst, up_worst, tol)


# --------------------------------------------------------------------------
# growth rate


@dataclass
class GrowthRate:
    d_hat: float
    plateau_quality: float
    low_confidence: bool
    radii_used: np.ndarray


def growth_rate(trace: AlmgrenTrace) -> GrowthRate:
    """Median of N over the top third of radii below ``0.9 r_max``."""
    keep = trace.radii <= 0.9 * trace.r_max * (1 + 1e-12)
    r, N = trace.radii[keep], trace.N[keep]
    if r.size < 10:
        raise ValueError(f"growth_rate needs at least 10 radii, got {r.size}")
    top = N[-(r.size // 3) :] if r.size >= 3 else N
    used = r[-(r.size // 3) :]
    d_hat = float(np.median(top))
    q = float(top.max() - top.min())
    return GrowthRate(d_hat, q, q > 0.2, used)


# --------------------------------------------------------------------------
# Alt-Caffarelli-Friedman type functionals


def weight_f(r: np.ndarray, N: int = DIM) -> np.ndarray:
    """C^1 superharmonic radial weight: quadratic inside B_1, r^{2-N} outside."""
    r = np.asarray(r, dtype=float)
    return np.where(r <= 1.0, (2.0 - N) / 2.0 * r**2 + N / 2.0, np.power(np.maximum(r, 1e-300), 2.0 - N))


@dataclass
class AcfDiagnostics:
    radii: np.ndarray
    group: list[int]
    q: float
    Lambda: np.ndarray  # (h, n_r)
    J: np.ndarray  # (h, n_r)
    boundary_term: np.ndarray  # int_{dB_r} f (|grad u_i|^2 + u_i^2 g_i)
    product: np.ndarray
    bound_margin: np.ndarray  # (rhs - J) / rhs
    r_prime: float | None
    slack: float

    def write_csv(self, path: str | Path) -> None:
        h = len(self.group)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ["r"]
                + [f"Lambda_{i + 1}" for i in self.group]
                + [f"J_{i + 1}" for i in self.group]
                + ["product"]
            )
            for n, r in enumerate(self.radii):
                row = [r] + [self.Lambda[i, n] for i in range(h)] + [self.J[i, n] for i in range(h)]
                row.append(self.product[n])
                w.writerow([f"{v:.17g}" for v in row])


def acf_diagnostics(
    field: MultiField,
    beta: float,
    group: Sequence[int],
    q: float,
    radii: Sequence[float] | None = None,
    slack: float = 1e-3,
) -> AcfDiagnostics:
    """Lambda_i, J_i and the product prod_i r^{-q} J_i on radii > 1.

    ``g_i = beta sum_{j != i} u_j^2``. ``r_prime`` is the smallest sampled
    radius from which the product is non-decreasing (relative slack
    ``slack``) through the last radius, or the last radius if the product drops at the end.
    """
    if not q > 0:
        raise ValueError("q must be positive")
    group = list(group)
    if not group:
        raise ValueError("group must be nonempty")
    grid = field.grid
    if radii is None:
        radii = np.linspace(1.0, 0.9 * grid.r_max, 33)
    radii = np.asarray(radii, dtype=float)
    radii = radii[radii >= 1.0 - 1e-12]
    if radii.size == 0:
        raise GridDomainError("acf_diagnostics needs radii >= 1 (grid r_max too small)")

    u = field.values
    sq = u**2
    tot = np.sum(sq, axis=0)
    rr, _ = grid.mesh()
    f = weight_f(rr)
    ur, ut = gradient_components(grid, u)
    h = len(group)
    Lam = np.empty((h, radii.size))
    J = np.empty_like(Lam)
    bnd = np.empty_like(Lam)
    for a, i in enumerate(group):
        gi = beta * (tot - sq[i])
        dens = f * (ur[i] ** 2 + ut[i] ** 2 + sq[i] * gi)
        tang = ut[i] ** 2 + sq[i] * gi
        for n, r in enumerate(radii):
            mass = float(integrate_circle(grid, sq[i], r))
            Lam[a, n] = r**2 * float(integrate_circle(grid, tang, r)) / mass if mass > 0 else math.inf
            J[a, n] = float(integrate_disk(grid, dens, r))
            bnd[a, n] = float(integrate_circle(grid, dens, r))
    gam = np.vectorize(lambda t: gamma(t, DIM) if math.isfinite(t) else math.inf)(Lam)
    rhs = radii[None, :] / (2.0 * gam) * bnd
    with np.errstate(divide="ignore", invalid="ignore"):
        margin = np.where(rhs > 0, (rhs - J) / rhs, 0.0)
    product = np.prod(J * radii[None, :] ** (-q), axis=0)

    ok_from = radii.size - 1
    for n in range(radii.size - 1, 0, -1):
        if product[n] >= product[n - 1] * (1 - slack):
            ok_from = n - 1
        else:
            break
    r_prime = float(radii[ok_from])
    return AcfDiagnostics(radii, group, q, Lam, J, bnd, product, margin, r_prime, slack)
