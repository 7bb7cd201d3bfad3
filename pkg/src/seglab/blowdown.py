"""Blow-down families and their classification against split homogeneous profiles.

The blow-down of ``u`` at scale ``R`` is ``u(R x) / H(u, 0, R)^{1/2}`` on the
unit disk. Its expected limits are ``(chi_{A_1}, ..., chi_{A_k}) |Psi_d|``,
where the sets ``A_i`` are unions of non-adjacent nodal cones of
``Psi_d = r^d sin(d theta) / sqrt(pi)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .almgren import compute_H
from .elliptic import cone_index, n_cones, psi_abs
from .grid import GridDomainError, MultiField, PolarGrid2D, integrate_circle, integrate_disk, sample_rescaled

VANISHING_THRESHOLD = 1e-4
TIE_RTOL = 0.01


@dataclass
class BlowdownFamily:
    R: list[float]
    members: list[MultiField | None]
    skipped: list[bool]
    H_source: list[float]
    beta: float | None = None

    @property
    def valid(self) -> list[MultiField]:
        return [m for m in self.members if m is not None]


def blowdown_family(
    field: MultiField,
    R_list: Sequence[float],
    target: PolarGrid2D,
    beta: float | None = None,
) -> BlowdownFamily:
    """Rescaled copies ``u(R x) / H(u, 0, R)^{1/2}`` sampled on ``target``.

    Windows with ``R * target.r_max`` beyond the source disk are skipped and
    flagged instead of being padded.
    """
    members, skipped, Hs = [], [], []
    for R in R_list:
        R = float(R)
        if R * target.r_max > field.grid.r_max * (1 + 1e-12) or R <= 0:
            members.append(None)
            skipped.append(True)
            Hs.append(math.nan)
            continue
        H = compute_H(field, R)
        if not H > 0:
            members.append(None)
            skipped.append(True)
            Hs.append(H)
            continue
        members.append(sample_rescaled(field, R, target, math.sqrt(H)))
        skipped.append(False)
        Hs.append(H)
    return BlowdownFamily([float(r) for r in R_list], members, skipped, Hs, beta)


# --------------------------------------------------------------------------
# classification


@dataclass
class ProfileFit:
    d: float
    theta0: float
    assignment: list[int]
    relative_l2_residual: float
    segregation_value: float
    ties: list[int] = field(default_factory=list)
    admissible: bool = True

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "theta0": self.theta0,
            "assignment": list(self.assignment),
            "residual": self.relative_l2_residual,
            "segregation": self.segregation_value,
            "ties": list(self.ties),
            "admissible": self.admissible,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _l2_sq(grid: PolarGrid2D, f: np.ndarray) -> float:
    return float(np.sum(integrate_disk(grid, f * f, 1.0)))


def _split_profile(grid: PolarGrid2D, d: float, theta0: float, assignment: Sequence[int], k: int) -> np.ndarray:
    rr, tt = grid.mesh()
    base = psi_abs(rr, tt, d, theta0)
    owner = np.asarray(assignment)[cone_index(tt, d, theta0)]
    vals = np.stack([np.where(owner == i, base, 0.0) for i in range(k)])
    vals[:, 0, :] = vals[:, 0, :].mean(axis=1, keepdims=True)
    return vals


def classify_profile(field: MultiField, d: float) -> ProfileFit:
    """Fit the rotation and cone assignment of ``(chi_{A_i}) |Psi_d|`` to ``field``.

    ``theta0`` minimises the ``L^2(B_1)`` distance between ``sum_i u_i`` and
    ``|Psi_d(r, theta - theta0)|``: a search over grid angles in
    ``[0, pi/d)`` followed by three-point parabolic refinement. Each cone then
    goes to the component with the largest ``L^2`` mass in it. Components
    within 1% of the winner are recorded as ties and the lowest index wins.
    """
    n = n_cones(d)
    grid = field.grid
    if grid.r_max < 1.0:
        raise GridDomainError("classification needs a grid covering B_1")
    rr, tt = grid.mesh()
    total = np.sum(field.values, axis=0)
    period = math.pi / d

    def objective(t0: float) -> float:
        return _l2_sq(grid, total - psi_abs(rr, tt, d, t0))

    dth = grid.dtheta
    cands = np.arange(int(math.ceil(period / dth - 1e-9))) * dth
    vals = np.array([objective(t) for t in cands])
    m = int(np.argmin(vals))
    t_best = float(cands[m])
    fm, f0, fp = objective(t_best - dth), vals[m], objective(t_best + dth)
    curv = fm - 2 * f0 + fp
    if curv > 0:
        t_best += float(np.clip(0.5 * (fm - fp) / curv, -1.0, 1.0)) * dth
    theta0 = float(np.mod(t_best, period))
    if theta0 >= period - 1e-15:
        theta0 = 0.0

    cone = cone_index(tt, d, theta0)
    sq = field.values**2
    assignment, ties = [], []
    for c in range(n):
        masses = np.array([float(integrate_disk(grid, np.where(cone == c, sq[i], 0.0), 1.0)) for i in range(field.k)])
        top = masses.max()
        close = np.flatnonzero(masses >= top * (1 - TIE_RTOL))
        if close.size > 1:
            ties.append(c)
        assignment.append(int(close[0]))
    admissible = n == 1 or all(assignment[c] != assignment[(c + 1) % n] for c in range(n))
    fit = _split_profile(grid, d, theta0, assignment, field.k)
    num = math.sqrt(_l2_sq(grid, field.values - fit))
    den = math.sqrt(_l2_sq(grid, fit))
    seg = float(integrate_disk(grid, field.coupling_density(), 1.0))
    return ProfileFit(float(d), theta0, assignment, num / den, seg, ties, admissible)


def segregation_residual(field: MultiField, scale_factor: float) -> float:
    """``scale_factor * int_{B_1} sum_{i<j} u_i^2 u_j^2``; pass ``H(u, 0, R) R^2``."""
    if not scale_factor > 0:
        raise ValueError("scale_factor must be positive")
    return float(scale_factor * integrate_disk(field.grid, field.coupling_density(), 1.0))


@dataclass
class VanishingReport:
    masses: list[float]
    vanishing: list[bool]
    threshold: float = VANISHING_THRESHOLD

    def to_dict(self) -> dict:
        return asdict(self)


def vanishing_diagnostic(family: Sequence[MultiField | None] | BlowdownFamily, threshold: float = VANISHING_THRESHOLD) -> VanishingReport:
    """Per component, the minimum over the family of ``int_{dB_1} u_i^2``."""
    members = family.valid if isinstance(family, BlowdownFamily) else [m for m in family if m is not None]
    if not members:
        raise ValueError("family is empty")
    k = members[0].k
    masses = np.full(k, math.inf)
    for mem in members:
        if mem.k != k:
            raise ValueError("family members disagree on k")
        per = np.array([float(integrate_circle(mem.grid, mem.values[i] ** 2, 1.0)) for i in range(k)])
        masses = np.minimum(masses, per)
    return VanishingReport([float(x) for x in masses], [bool(x < threshold) for x in masses], threshold)


def quantization_check(d_hat: float) -> tuple[float, float]:
    """Nearest positive half-integer and the distance to it."""
    if not d_hat > 0:
        raise ValueError("d_hat must be positive")
    q = max(0.5, round(2.0 * d_hat) / 2.0)
    return q, abs(d_hat - q)
