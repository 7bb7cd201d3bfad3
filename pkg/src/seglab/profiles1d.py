"""The 1-D two-component profile and the radial exponential-decay experiment.

The profile solves ``u'' = u v^2``, ``v'' = u^2 v`` on the line with
``u(x) = v(-x)``, ``u' > 0`` and ``v' < 0``. Shooting starts at ``x = 0`` from
``u = v = a``, ``u' = m = -v'``. Bisection on ``m`` separates slopes for which
``v`` reaches zero (too large) from slopes for which ``v`` turns back up
(too small).

Forward integration of the decaying component is unstable: an error of
relative size eps in the data grows like ``exp(int 2u)``. Once ``v`` has
dropped below ``tail_switch * a`` the trajectory is finished by a tail
solve instead. ``u`` is then almost linear. ``v`` solves the linear boundary value
problem ``v'' = u^2 v`` with a WKB value at ``X``, and ``u`` is updated from
the new ``v``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import solve_banded

from .grid import MultiField, PolarGrid2D

TOO_LARGE = "too_large"
TOO_SMALL = "too_small"
UNDETERMINED = "undetermined"
DIVERGED = "diverged"


class BracketError(ValueError):
    """No slope bracket with opposite shooting tags was found."""


@dataclass
class OdeTrajectory:
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    m: float
    a: float
    h: float
    tag: str = UNDETERMINED
    b: float = math.nan
    symmetry_defect: float = math.nan

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "u", "v"])
            for row in zip(self.x, self.u, self.v):
                w.writerow([f"{c:.17g}" for c in row])


def _rhs(y: np.ndarray) -> np.ndarray:
    u, du, v, dv = y
    return np.array([du, u * v * v, dv, u * u * v])


def _rk4_step(y: np.ndarray, h: float) -> np.ndarray:
    k1 = _rhs(y)
    k2 = _rhs(y + 0.5 * h * k1)
    k3 = _rhs(y + 0.5 * h * k2)
    k4 = _rhs(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _check(a: float, X: float, h: float) -> None:
    if not (a > 0 and X > 0 and h > 0):
        raise ValueError("a, X and h must be positive")
    if h > X:
        raise ValueError("step h exceeds the window X")


def shoot(m: float, a: float, X: float, h: float) -> OdeTrajectory:
    """RK4 from ``x = 0`` to ``X`` with ``u(0) = v(0) = a``, ``u'(0) = -v'(0) = m``.

    Stops at the first ``v <= 0`` (tag ``too_large``) or the first ``v' >= 0``
    at ``x > 0`` (tag ``too_small``). A non-finite state is tagged
    ``diverged``; reaching ``X`` without either event is ``undetermined``.
    """
    _check(a, X, h)
    if m < 0:
        raise ValueError("m must be nonnegative")
    n = int(round(X / h))
    y = np.array([a, m, a, -m], dtype=float)
    out = np.empty((n + 1, 4))
    out[0] = y
    tag = UNDETERMINED
    last = n
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, n + 1):
            y = _rk4_step(y, h)
            out[i] = y
            if not np.all(np.isfinite(y)):
                tag, last = DIVERGED, i
                break
            if y[2] <= 0.0:
                tag, last = TOO_LARGE, i
                break
            if y[3] >= 0.0:
                tag, last = TOO_SMALL, i
                break
    x = h * np.arange(last + 1)
    return OdeTrajectory(x, out[: last + 1, 0], out[: last + 1, 2], float(m), a, h, tag)


def _bisect_slope(a: float, X: float, h: float, max_iter: int = 200) -> float:
    lo, hi = 0.0, max(a * a, 1.0)
    while shoot(hi, a, X, h).tag != TOO_LARGE:
        hi *= 2.0
        if hi > 1e8 * max(a * a, 1.0):
            raise BracketError("no slope makes v reach zero")
    if shoot(lo, a, X, h).tag != TOO_SMALL:
        raise BracketError("m = 0 is not tagged too_small")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        tag = shoot(mid, a, X, h).tag
        if tag == TOO_LARGE:
            hi = mid
        elif tag == TOO_SMALL:
            lo = mid
        else:
            # both events pushed past X: the bracket is as tight as the window allows
            return mid
    return 0.5 * (lo + hi)


def _integrate_until(y: np.ndarray, step: float, n: int, decaying: int, v_switch: float) -> np.ndarray:
    """RK4 while component ``decaying`` (0 for u, 2 for v) stays above ``v_switch``."""
    out = [y]
    for _ in range(n):
        y = _rk4_step(y, step)
        dv = y[decaying + 1] * math.copysign(1.0, step)
        if y[decaying] < v_switch or dv >= 0.0:
            break
        out.append(y)
    return np.array(out)


def _tail(
    x: np.ndarray, u0: float, du0: float, v0: float, sweeps: int = 2
) -> tuple[np.ndarray, np.ndarray]:
    """Finish the half-line from ``x[0]`` where ``v`` is already tiny."""
    h = x[1] - x[0]
    n = x.size
    u = u0 + du0 * (x - x[0])
    v = np.empty(n)
    for _ in range(sweeps):
        # WKB: v ~ C u^{-1/2} exp(-int u)
        phase = np.concatenate([[0.0], np.cumsum(0.5 * h * (u[1:] + u[:-1]))])
        v_end = v0 * math.sqrt(u[0] / u[-1]) * math.exp(-phase[-1])
        # tridiagonal solve of -v'' + u^2 v = 0 on the interior nodes
        m = n - 2
        if m > 0:
            ab = np.zeros((3, m))
            ab[0, 1:] = -1.0
            ab[1, :] = 2.0 + h * h * u[1:-1] ** 2
            ab[2, :-1] = -1.0
            rhs = np.zeros(m)
            rhs[0] += v0
            rhs[-1] += v_end
            v[1:-1] = solve_banded((1, 1), ab, rhs)
        v[0], v[-1] = v0, v_end
        # Stormer integration of u'' = u v^2 from the matched data
        u_new = np.empty(n)
        u_new[0] = u0
        if n > 1:
            u_new[1] = u0 + h * du0 + 0.5 * h * h * u0 * v0 * v0
        for i in range(1, n - 1):
            u_new[i + 1] = 2 * u_new[i] - u_new[i - 1] + h * h * u_new[i] * v[i] ** 2
        u = u_new
    return u, v


def _half_line(
    m: float, a: float, X: float, h: float, tail_switch: float, direction: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(|x|, u, v)`` on ``x in [0, X]`` (direction 1) or ``[-X, 0]`` (direction -1)."""
    n = int(round(X / h))
    decaying = 2 if direction > 0 else 0
    head = _integrate_until(np.array([a, m, a, -m]), direction * h, n, decaying, tail_switch * a)
    j = head.shape[0] - 1
    s = h * np.arange(n + 1)
    u = np.empty(n + 1)
    v = np.empty(n + 1)
    u[: j + 1] = head[:, 0]
    v[: j + 1] = head[:, 2]
    if j < n:
        grow = 2 - decaying
        # derivatives along |x|
        g0, dg0 = head[j, grow], direction * head[j, grow + 1]
        gt, dt = _tail(s[j:], g0, dg0, head[j, decaying])
        if direction > 0:
            u[j:], v[j:] = gt, dt
        else:
            v[j:], u[j:] = gt, dt
    return s, u, v


def find_profile(
    a: float = 1.0,
    X: float | None = None,
    tol: float = 1e-6,
    h: float = 1e-3,
    tail_switch: float = 1e-6,
) -> OdeTrajectory:
    """Symmetric profile on ``[-X, X]``; ``X`` defaults to ``20 / a``.

    The slope is bisected to the resolution of double precision. The
    negative half-line is integrated separately, stepping backwards from
    ``x = 0``, and ``symmetry_defect`` is ``sup |u(x) - v(-x)|`` over
    ``|x| <= X/2`` between the two integrations.
    """
    if X is None:
        X = 20.0 / a
    _check(a, X, h)
    m = _bisect_slope(a, X, h)
    x, u, v = _half_line(m, a, X, h, tail_switch, 1)
    _, un, vn = _half_line(m, a, X, h, tail_switch, -1)
    n = x.size
    xs = np.concatenate([-x[:0:-1], x])
    us = np.concatenate([un[:0:-1], u])
    vs = np.concatenate([vn[:0:-1], v])
    half = np.abs(xs) <= 0.5 * X + 1e-12
    defect = float(np.max(np.abs(us[half] - vs[half][::-1])))
    i_half = n - 1 + int(round(0.5 * X / h))
    b = float((us[i_half + 1] - us[i_half - 1]) / (2 * h))
    traj = OdeTrajectory(xs, us, vs, m, a, h, "accepted", b, defect)
    if defect >= tol:
        traj.tag = "symmetry_defect_exceeds_tol"
    return traj


def ode_residual(traj: OdeTrajectory) -> float:
    """Sup over interior nodes of the second-difference residual of both equations."""
    h = traj.h
    u, v = traj.u, traj.v
    ru = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2 - u[1:-1] * v[1:-1] ** 2
    rv = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2 - u[1:-1] ** 2 * v[1:-1]
    return float(max(np.max(np.abs(ru)), np.max(np.abs(rv))))


def extend_to_disk(traj: OdeTrajectory, grid: PolarGrid2D) -> MultiField:
    """The planar field ``(u(x), v(x))`` on ``grid``.

    Past the window the growing component continues linearly with slope
    ``b`` at the window edge and the decaying one is set to zero.
    """
    x0, x1 = traj.x[0], traj.x[-1]
    slope_r = (traj.u[-1] - traj.u[-2]) / traj.h
    slope_l = (traj.v[0] - traj.v[1]) / traj.h

    def comp(xq: np.ndarray, f: np.ndarray, grows_right: bool, slope: float) -> np.ndarray:
        out = np.interp(xq, traj.x, f)
        if grows_right:
            out = np.where(xq > x1, f[-1] + slope * (xq - x1), out)
            out = np.where(xq < x0, 0.0, out)
        else:
            out = np.where(xq < x0, f[0] + slope * (x0 - xq), out)
            out = np.where(xq > x1, 0.0, out)
        return out

    X, _ = grid.cartesian()
    vals = np.stack(
        [comp(X, traj.u, True, slope_r), comp(X, traj.v, False, slope_l)]
    )
    return MultiField(grid, np.maximum(vals, 0.0))


# --------------------------------------------------------------------------
# exponential decay


@dataclass
class DecayResult:
    K: float
    A: float
    r: float
    N: int
    sup_Br: float


def decay_experiment(K: float, A: float, r: float, N: int = 2, rtol: float = 1e-12) -> DecayResult:
    """``v(r)`` for ``v'' + (N-1)/rho v' = K v`` on ``(0, 2r)``, ``v'(0) = 0``, ``v(2r) = A``.

    The problem is linear, so it is integrated from ``v(0) = 1`` and rescaled.
    A two-term series supplies the data at a small ``rho_0`` to step over the
    singular point. ``v`` increases in ``rho``, hence ``v(r) = sup_{B_r} v``.
    """
    if K < 0 or not A > 0 or not r > 0:
        raise ValueError("need K >= 0, A > 0, r > 0")
    if N < 1:
        raise ValueError("N must be >= 1")
    if K == 0:
        return DecayResult(K, A, r, N, float(A))
    rho0 = min(1e-3 / math.sqrt(K), 1e-3 * r)
    c1 = K / (2 * N)
    c2 = K * K / (8 * N * (N + 2))
    y0 = [1 + c1 * rho0**2 + c2 * rho0**4, 2 * c1 * rho0 + 4 * c2 * rho0**3]

    def f(rho, y):
        return [y[1], K * y[0] - (N - 1) / rho * y[1]]

    sol = solve_ivp(f, (rho0, 2 * r), y0, method="DOP853", rtol=rtol, atol=0.0, t_eval=[r, 2 * r])
    if not sol.success:
        raise RuntimeError(sol.message)
    v_r, v_2r = sol.y[0]
    return DecayResult(K, A, r, N, float(A * v_r / v_2r))


def decay_slope(r: float, N: int, Ks=(1.0, 4.0, 9.0, 16.0), A: float = 1.0) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log v(r)`` against ``sqrt(K)``."""
    s = np.sqrt(np.asarray(Ks, dtype=float))
    logs = np.log([decay_experiment(K, A, r, N).sup_Br for K in Ks])
    slope, intercept = np.polyfit(s, logs, 1)
    return float(slope), float(intercept)


def write_decay_csv(results: list[DecayResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["K", "A", "r", "sup_Br"])
        for d in results:
            w.writerow([f"{c:.17g}" for c in (d.K, d.A, d.r, d.sup_Br)])
