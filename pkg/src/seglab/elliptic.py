"""Dirichlet solver for the competitive system on the disk.

Solutions of ``-Lap u_i = -beta u_i sum_{j != i} u_j^2`` with fixed trace are
critical points of

    D(u) = sum_i 1/2 int |grad u_i|^2 + beta/2 int sum_{i<j} u_i^2 u_j^2.

The discrete energy is edge based (radial edges weighted by ``r_{j+1/2}``,
angular edges by ``dr / (r_j dtheta)``), so its gradient divided by the node
area is exactly :func:`seglab.grid.laplacian` plus the coupling term.

Minimisation is projected block-coordinate descent. A sweep replaces each
component in turn by the minimiser of the energy with the other components
frozen, which is one sparse solve with ``K + beta W diag(sum_{j != i} u_j^2)``.
That matrix is an M-matrix and the right side is nonnegative, so the update
is nonnegative before projection. Energy is monotone along the sweeps.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridDomainError, MultiField, PolarGrid2D, laplacian

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# homogeneous profiles and boundary data


def n_cones(d: float) -> int:
    n = 2.0 * d
    if d <= 0 or abs(n - round(n)) > 1e-12:
        raise ValueError(f"d must be a positive half-integer, got {d}")
    return int(round(n))


def cone_index(theta: np.ndarray, d: float, theta0: float = 0.0) -> np.ndarray:
    """Index of the nodal cone of ``|sin(d (theta - theta0))|`` containing ``theta``.

    Cones are numbered counterclockwise from ``theta0``; cone ``c`` spans
    ``[c pi/d, (c+1) pi/d)`` relative to ``theta0``.
    """
    n = n_cones(d)
    phase = np.mod(np.asarray(theta) - theta0, 2.0 * math.pi)
    c = np.floor(phase / (math.pi / d) + 1e-9).astype(int)
    return np.minimum(c, n - 1)


def psi_abs(r: np.ndarray, theta: np.ndarray, d: float, theta0: float = 0.0) -> np.ndarray:
    """``|Psi_d|`` with ``Psi_d = r^d sin(d theta) / sqrt(pi)``, rotated by ``theta0``."""
    return np.asarray(r) ** d * np.abs(np.sin(d * (np.asarray(theta) - theta0))) / math.sqrt(math.pi)


def default_assignment(d: float, k: int) -> list[int]:
    """Cone ``c`` goes to component ``c mod k``."""
    return [c % k for c in range(n_cones(d))]


def check_assignment(d: float, assignment: Sequence[int]) -> None:
    n = n_cones(d)
    if len(assignment) != n:
        raise ValueError(f"assignment must cover all {n} cones, got {len(assignment)}")
    if n == 1:
        return
    for c in range(n):
        if assignment[c] == assignment[(c + 1) % n]:
            raise ValueError(f"adjacent cones {c} and {(c + 1) % n} share component {assignment[c]}")


def profile_values(
    grid: PolarGrid2D,
    d: float,
    k: int,
    assignment: Sequence[int] | None = None,
    theta0: float = 0.0,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Component stack ``amplitude * (chi_{A_i}) |Psi_d|`` on ``grid``."""
    if assignment is None:
        assignment = default_assignment(d, k)
    check_assignment(d, assignment)
    if max(assignment) >= k or min(assignment) < 0:
        raise ValueError("assignment refers to a component outside 0..k-1")
    rr, tt = grid.mesh()
    base = amplitude * psi_abs(rr, tt, d, theta0)
    owner = np.asarray(assignment)[cone_index(tt, d, theta0)]
    vals = np.stack([np.where(owner == i, base, 0.0) for i in range(k)])
    vals[:, 0, :] = vals[:, 0, :].mean(axis=1, keepdims=True)
    return vals


def profile_field(grid: PolarGrid2D, d: float, k: int | None = None, **kw) -> MultiField:
    """Segregated homogeneous profile; ``k`` defaults to 2 (or ``2d`` when that is odd)."""
    if k is None:
        n = n_cones(d)
        k = 1 if n == 1 else (2 if n % 2 == 0 else n)
    return MultiField(grid, profile_values(grid, d, k, **kw))


@dataclass
class BoundarySpec:
    """Dirichlet data: a split homogeneous profile or explicit rim traces.

    For ``kind="profile"`` the trace of component ``i`` on the rim is
    ``amplitude * |Psi_d(r_max, theta)|`` on the cones assigned to ``i``.
    For ``kind="trace"``, ``traces`` is a ``(k, n_theta)`` array used as given.
    """

    kind: str = "profile"
    d: float = 1.0
    assignment: list[int] | None = None
    theta0: float = 0.0
    amplitude: float = 1.0
    traces: list[list[float]] | None = None

    def __post_init__(self):
        if self.kind not in ("profile", "trace"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if not self.amplitude > 0:
            raise ValueError("amplitude must be positive")
        if self.kind == "profile":
            n_cones(self.d)
            if self.assignment is not None:
                check_assignment(self.d, self.assignment)
        elif self.traces is None:
            raise ValueError("trace boundary needs explicit traces")

    def rim_traces(self, grid: PolarGrid2D, k: int) -> np.ndarray:
        if self.kind == "trace":
            t = self.amplitude * np.asarray(self.traces, dtype=float)
            if t.shape != (k, grid.n_theta):
                raise ValueError(f"traces shape {t.shape} != {(k, grid.n_theta)}")
        else:
            assignment = self.assignment or default_assignment(self.d, k)
            t = profile_values(grid, self.d, k, assignment, self.theta0, self.amplitude)[:, -1, :]
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValueError("boundary trace must be finite and nonnegative")
        return t


# --------------------------------------------------------------------------
# configuration and reports


@dataclass
class SolveConfig:
    beta: float = 50.0
    beta_schedule: list[float] | None = None
    tol_grad: float = 1e-6
    max_iter: int = 2000
    step_rule: str = "backtracking"
    tau: float = 1.0
    anderson: int = 5

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.beta_schedule is None:
            n = max(0, math.ceil(math.log(self.beta, 5.0)))
            self.beta_schedule = [5.0**j for j in range(n) if 5.0**j < self.beta] + [self.beta]
        sched = [float(b) for b in self.beta_schedule]
        if any(b2 <= b1 for b1, b2 in zip(sched, sched[1:])):
            raise ValueError("beta_schedule must be strictly increasing")
        if sched[-1] != self.beta:
            raise ValueError("beta_schedule must end at beta")
        self.beta_schedule = sched
        if not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.step_rule not in ("backtracking", "fixed"):
            raise ValueError("step_rule must be 'backtracking' or 'fixed'")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if self.anderson < 0:
            raise ValueError("anderson depth must be >= 0")


@dataclass
class SolveReport:
    iterations: int
    final_energy: float
    final_residual: float
    converged: bool
    beta_schedule: list[float]
    energy_history: list[float] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("energy_history")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# --------------------------------------------------------------------------
# discrete operators


ENERGY_RTOL = 1e-13


class _Operators:
    """Sparse stiffness split into interior/rim blocks for one grid."""

    def __init__(self, grid: PolarGrid2D):
        self.grid = grid
        nr, nt = grid.n_r, grid.n_theta
        dr, dth = grid.dr, grid.dtheta
        r = grid.r
        # node numbering over all nodes: pole 0, ring j>=1 node m -> 1 + (j-1) nt + m
        n_all = 1 + nr * nt
        idx = np.empty((nr + 1, nt), dtype=int)
        idx[0, :] = 0
        idx[1:, :] = 1 + np.arange(nr * nt).reshape(nr, nt)
        a_list, b_list, w_list = [], [], []
        for j in range(nr):
            w = (r[j] + 0.5 * dr) * dth / dr
            a_list.append(idx[j, :])
            b_list.append(idx[j + 1, :])
            w_list.append(np.full(nt, w))
        for j in range(1, nr + 1):
            w = dr / (r[j] * dth)
            if j == nr:
                w *= 0.5
            a_list.append(idx[j, :])
            b_list.append(np.roll(idx[j, :], -1))
            w_list.append(np.full(nt, w))
        a = np.concatenate(a_list)
        b = np.concatenate(b_list)
        w = np.concatenate(w_list)
        rows = np.concatenate([a, b, a, b])
        cols = np.concatenate([a, b, b, a])
        vals = np.concatenate([w, w, -w, -w])
        L = sp.coo_matrix((vals, (rows, cols)), shape=(n_all, n_all)).tocsr()
        n_int = 1 + (nr - 1) * nt
        self.n_int = n_int
        self.K = L[:n_int, :n_int].tocsc()
        self.KR = L[:n_int, n_int:].tocsr()
        self.L = L
        self.edges = (a, b, w)
        wn = np.empty(n_all)
        wn[0] = math.pi * (0.5 * dr) ** 2
        wn[1:] = np.repeat(r[1:] * dr * dth, nt)
        wn[n_all - nt :] *= 0.5
        self.wn = wn
        self.W = wn[:n_int]

    def flatten(self, u: np.ndarray) -> np.ndarray:
        """(k, n_r+1, n_theta) -> (k, 1 + n_r n_theta)."""
        k = u.shape[0]
        return np.concatenate([u[:, 0, :1], u[:, 1:, :].reshape(k, -1)], axis=1)

    def unflatten(self, x: np.ndarray) -> np.ndarray:
        g = self.grid
        k = x.shape[0]
        out = np.empty((k, g.n_r + 1, g.n_theta))
        out[:, 0, :] = x[:, :1]
        out[:, 1:, :] = x[:, 1:].reshape(k, g.n_r, g.n_theta)
        return out

    def energy(self, x: np.ndarray, beta: float) -> float:
        a, b, w = self.edges
        dirichlet = 0.5 * np.sum(w * (x[:, a] - x[:, b]) ** 2)
        sq = x**2
        tot = np.sum(sq, axis=0)
        pair = 0.5 * (tot**2 - np.sum(sq**2, axis=0))
        return float(dirichlet + 0.5 * beta * np.sum(self.wn * pair))

    def gradient(self, x: np.ndarray, beta: float) -> np.ndarray:
        """Energy gradient on interior nodes, shape (k, n_int)."""
        n = self.n_int
        lap = (self.L @ x.T).T[:, :n]
        sq = x[:, :n] ** 2
        c = np.sum(sq, axis=0)[None, :] - sq
        return lap + beta * self.W * c * x[:, :n]

    def component_solve(self, x: np.ndarray, i: int, beta: float) -> np.ndarray:
        """Minimiser of the energy in component ``i`` with the others frozen.

        The block is an M-matrix with nonnegative right side, so the
        minimiser is already nonnegative; the clip only removes round-off.
        """
        n = self.n_int
        sq = x[:, :n] ** 2
        c = np.sum(sq, axis=0) - sq[i]
        P = (self.K + sp.diags(beta * self.W * c)).tocsc()
        return np.maximum(spla.spsolve(P, -(self.KR @ x[i, n:])), 0.0)


_OPS_CACHE: dict[PolarGrid2D, _Operators] = {}


def _ops(grid: PolarGrid2D) -> _Operators:
    ops = _OPS_CACHE.get(grid)
    if ops is None:
        if len(_OPS_CACHE) > 8:
            _OPS_CACHE.clear()
        ops = _OPS_CACHE[grid] = _Operators(grid)
    return ops


def energy(field: MultiField, beta: float) -> float:
    """Discrete segregation energy on the whole disk."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    ops = _ops(field.grid)
    return ops.energy(ops.flatten(field.values), beta)


def pde_residual(field: MultiField, beta: float) -> float:
    """Sup over interior nodes of ``|Lap u_i - beta u_i sum_{j != i} u_j^2|``."""
    return float(np.max(np.abs(_residual_array(field.values, field.grid, beta)[:, :-1, :])))


def _residual_array(u: np.ndarray, grid: PolarGrid2D, beta: float) -> np.ndarray:
    sq = u**2
    c = np.sum(sq, axis=0)[None] - sq
    return laplacian(grid, u) - beta * u * c


def _projected_grad_sup(ops: _Operators, x: np.ndarray, beta: float) -> float:
    g = ops.gradient(x, beta) / ops.W
    at_bound = (x[:, : ops.n_int] <= 0.0) & (g > 0.0)
    g = np.where(at_bound, 0.0, g)
    return float(np.max(np.abs(g))) if g.size else 0.0


def harmonic_extension(grid: PolarGrid2D, traces: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension of each rim trace; shape (k, n_r+1, n_theta)."""
    ops = _ops(grid)
    traces = np.atleast_2d(traces)
    lu = spla.splu(ops.K)
    out = np.empty((traces.shape[0], grid.n_r + 1, grid.n_theta))
    for i, t in enumerate(traces):
        xi = lu.solve(-(ops.KR @ t))
        full = np.concatenate([xi, t])
        out[i] = ops.unflatten(full[None])[0]
    return out


def _anderson(ops, x_old, x_sweep, e_sweep, beta, xs, fs, depth):
    """Anderson-extrapolate the sweep map; keep the result only if it lowers the energy."""
    n = ops.n_int
    k = x_old.shape[0]
    f = (x_sweep - x_old)[:, :n].ravel()
    xs.append(x_old[:, :n].ravel().copy())
    fs.append(f)
    if len(xs) > depth + 1:
        xs.pop(0)
        fs.pop(0)
    if len(fs) < 2:
        return x_sweep, e_sweep
    dF = np.diff(np.array(fs), axis=0).T
    dX = np.diff(np.array(xs), axis=0).T
    coef = np.linalg.lstsq(dF, f, rcond=None)[0]
    xa = xs[-1] + f - (dX + dF) @ coef
    cand = x_sweep.copy()
    cand[:, :n] = np.maximum(xa.reshape(k, n), 0.0)
    e_cand = ops.energy(cand, beta)
    if e_cand < e_sweep:
        return cand, e_cand
    return x_sweep, e_sweep


def solve_dirichlet(
    grid: PolarGrid2D,
    k: int,
    boundary: BoundarySpec,
    cfg: SolveConfig,
    initial: MultiField | np.ndarray | None = None,
) -> tuple[MultiField, SolveReport]:
    """Minimise the segregation energy with the rim fixed to ``boundary``.

    Iterations are projected block-coordinate descent: each sweep replaces
    one component at a time by its exact minimiser with the others frozen,
    scaled by ``tau`` (fixed) or halved from ``tau`` until the energy does not
    increase (backtracking). With ``cfg.anderson > 0`` the sweep map is
    Anderson-extrapolated over that many past iterates and the extrapolate is
    kept only when its energy is below the plain sweep.

    Each stage of ``cfg.beta_schedule`` is warm-started from the previous
    one; intermediate stages stop at ``100 * tol_grad``. The report is flagged
    non-converged when ``max_iter`` total iterations are spent before the
    final stage reaches ``tol_grad``.
    """
    if k < 1:
        raise ValueError("k must be positive")
    ops = _ops(grid)
    traces = boundary.rim_traces(grid, k)
    if initial is None:
        u0 = harmonic_extension(grid, traces)
    else:
        u0 = np.array(initial.values if isinstance(initial, MultiField) else initial, dtype=float)
        if u0.shape != (k,) + grid.shape:
            raise GridDomainError("initial field has the wrong shape")
        u0 = np.maximum(u0, 0.0)
        u0[:, -1, :] = traces
    x = ops.flatten(u0)
    n = ops.n_int

    history: list[float] = []
    total_iter = 0
    converged = False
    res = math.inf
    for stage, beta in enumerate(cfg.beta_schedule):
        last = stage == len(cfg.beta_schedule) - 1
        tol = cfg.tol_grad if last else 100.0 * cfg.tol_grad
        e = ops.energy(x, beta)
        history.append(e)
        xs: list[np.ndarray] = []
        fs: list[np.ndarray] = []
        while True:
            res = _projected_grad_sup(ops, x, beta)
            if res <= tol:
                if last:
                    converged = True
                break
            if total_iter >= cfg.max_iter:
                break
            total_iter += 1
            x_old = x
            for i in range(k):
                step = ops.component_solve(x, i, beta) - x[i, :n]
                tau = cfg.tau
                # energies are compared up to summation round-off
                slack = ENERGY_RTOL * abs(e)
                while True:
                    trial = x.copy()
                    trial[i, :n] = np.maximum(x[i, :n] + tau * step, 0.0)
                    e_new = ops.energy(trial, beta)
                    if cfg.step_rule == "fixed" or e_new <= e + slack or tau < 1e-12:
                        break
                    tau *= 0.5
                if e_new <= e + slack or cfg.step_rule == "fixed":
                    x, e = trial, e_new
            if cfg.anderson:
                x, e = _anderson(ops, x_old, x, e, beta, xs, fs, cfg.anderson)
            history.append(e)
        if total_iter >= cfg.max_iter and not converged:
            break

    field_out = MultiField(grid, ops.unflatten(x))
    report = SolveReport(
        iterations=total_iter,
        final_energy=float(e),
        final_residual=float(res),
        converged=converged,
        beta_schedule=list(cfg.beta_schedule),
        energy_history=history,
    )
    if not converged:
        log.warning("solve did not converge: residual %.3e after %d iterations", res, total_iter)
    return field_out, report


# --------------------------------------------------------------------------
# symmetry


def _rotation_shift(grid: PolarGrid2D, d: float) -> int:
    n = n_cones(d)
    if grid.n_theta % (2 * n):
        raise GridDomainError(f"n_theta = {grid.n_theta} not divisible by 4d = {2 * n}")
    return grid.n_theta // n


def _rotate(u: np.ndarray, shift: int) -> np.ndarray:
    """u'_{i+1}(z) = u_i(G^{-1} z): component shift plus rotation by ``shift`` nodes."""
    return np.roll(np.roll(u, 1, axis=0), shift, axis=-1)


def _reflect(u: np.ndarray) -> np.ndarray:
    """u'_{k+1-i}(z) = u_i(conj z) with 1-based indices."""
    k = u.shape[0]
    perm = [(k - 1 - i) % k for i in range(k)]
    theta_rev = np.roll(u[..., ::-1], 1, axis=-1)
    out = np.empty_like(u)
    for i in range(k):
        out[perm[i]] = theta_rev[i]
    return out


def equivariance_project(field: MultiField, d: float) -> MultiField:
    """Average ``field`` over the dihedral group generated by rotation and reflection.

    Fixed points satisfy ``u_i(z) = u_{i+1}(G z)`` with ``G`` the rotation by
    ``pi/d``, and ``u_{k+1-i}(z) = u_i(conj z)``.
    """
    shift = _rotation_shift(field.grid, d)
    n = n_cones(d)
    if n % field.k:
        # 2d rotations must return every component to itself
        raise GridDomainError(f"k = {field.k} does not divide 2d = {n}")
    u = np.array(field.values)
    acc = np.zeros_like(u)
    cur = u
    for _ in range(n):
        acc += cur + _reflect(cur)
        cur = _rotate(cur, shift)
    return MultiField(field.grid, acc / (2 * n))
