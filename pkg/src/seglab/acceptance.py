"""The twelve acceptance checks at pinned desk-scale resolutions.

Each check returns a :class:`CriterionResult` with the measured values, the
target, the tolerance and a pass flag. ``run_suite`` evaluates a subset (all
by default) and shares expensive solves between checks through a cache, so a
solve used by several checks is computed once.

Competition strength enters the solver only through ``beta * A^2`` where
``A`` is the boundary amplitude: ``u -> A u`` maps solutions with data ``A g``
and coupling ``beta`` to solutions with data ``g`` and coupling
``beta A^2``. The solver checks keep ``beta = 50`` and reach strong
segregation through the amplitude.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable

import numpy as np

from . import almgren, blowdown, elliptic, profiles1d, spectral
from .grid import MultiField, PolarGrid2D, SphereGrid

BETA = 50.0
AMP_D1 = 10.0**2.5  # beta * A^2 = 5e6
AMP_D2 = 10.0**2.5
AMP_SYMMETRIC = 10.0**3.5 / math.sqrt(5.0)  # beta * A^2 = 1e8


def _tol(amp: float) -> float:
    # the projected gradient scales with the amplitude
    return 1e-6 * amp


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    measured: dict[str, Any]
    target: dict[str, Any]
    tolerance: dict[str, Any]
    details: dict[str, Any] = field(default_factory=dict)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] criterion {self.id:2d}: {self.name}"


@dataclass
class VerifyReport:
    results: list[CriterionResult]
    resolution: dict[str, int]
    seed: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "resolution": dict(self.resolution),
            "seed": self.seed,
            "criteria": [_jsonable(asdict(r)) for r in self.results],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# --------------------------------------------------------------------------
# pinned resolutions


DEFAULT_RESOLUTION = {
    "n_phi": 128,
    "profile_n_r": 256,
    "profile_n_theta": 768,
    "solve_n_r": 128,
    "solve_n_theta": 256,
    "symmetric_n_r": 64,
    "symmetric_n_theta": 192,
    "acf_n_r": 128,
    "acf_n_theta": 256,
    "line_n_r": 256,
    "line_n_theta": 512,
}


def resolve_resolution(overrides: dict[str, int] | None) -> dict[str, int]:
    """Apply overrides. ``n_r`` / ``n_theta`` act on every polar grid at once."""
    res = dict(DEFAULT_RESOLUTION)
    for key, val in (overrides or {}).items():
        if key == "n_r":
            for k in res:
                if k.endswith("n_r"):
                    res[k] = int(val)
        elif key == "n_theta":
            for k in res:
                if k.endswith("n_theta"):
                    res[k] = int(val)
        elif key in res:
            res[key] = int(val)
        else:
            raise KeyError(f"unknown resolution key {key!r}")
    return res


class Suite:
    def __init__(self, resolution: dict[str, int] | None = None, seed: int = 0):
        self.res = resolve_resolution(resolution)
        self.seed = seed
        self._cache: dict[Any, Any] = {}

    def cached(self, key, fn: Callable[[], Any]):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    # shared computations ------------------------------------------------

    def sphere_grid(self) -> SphereGrid:
        n = self.res["n_phi"]
        return SphereGrid(n, 3 * n)

    def solve_k2(self, d: float, beta: float = BETA) -> tuple[MultiField, elliptic.SolveReport]:
        def run():
            grid = PolarGrid2D(self.res["solve_n_r"], self.res["solve_n_theta"], 1.0)
            amp = AMP_D1 if d == 1.0 else AMP_D2
            bspec = elliptic.BoundarySpec(d=d, amplitude=amp)
            if beta == BETA:
                cfg = elliptic.SolveConfig(beta=beta, tol_grad=_tol(amp), max_iter=5000)
                return elliptic.solve_dirichlet(grid, 2, bspec, cfg)
            prev, _ = self.solve_k2(d, beta / 2)
            cfg = elliptic.SolveConfig(beta=beta, beta_schedule=[beta], tol_grad=_tol(amp), max_iter=5000)
            return elliptic.solve_dirichlet(grid, 2, bspec, cfg, initial=prev)

        return self.cached(("k2", d, beta), run)

    def solve_symmetric(self) -> tuple[MultiField, elliptic.SolveReport]:
        def run():
            grid = PolarGrid2D(self.res["symmetric_n_r"], self.res["symmetric_n_theta"], 1.0)
            bspec = elliptic.BoundarySpec(d=1.5, amplitude=AMP_SYMMETRIC)
            cfg = elliptic.SolveConfig(beta=BETA, tol_grad=_tol(AMP_SYMMETRIC), max_iter=5000)
            return elliptic.solve_dirichlet(grid, 3, bspec, cfg)

        return self.cached("symmetric", run)

    def symmetric_trace(self) -> almgren.AlmgrenTrace:
        f, _ = self.solve_symmetric()
        return self.cached("symmetric_trace", lambda: almgren.frequency_trace(f, BETA, np.linspace(0.025, 1.0, 40)))

    def profile_d_hats(self) -> dict[float, float]:
        return self.cached("c4", self.c4).measured["d_hat"]

    # criteria -------------------------------------------------------------

    def c1(self) -> CriterionResult:
        values, errs = {}, {}
        for k in range(2, 7):
            _, v = spectral.optimize_arcs(k, n_starts=4, seed=self.seed)
            values[k] = v
            errs[k] = abs(v - k * k / 4)
        seq = [values[k] for k in range(2, 7)]
        strict = all(b > a for a, b in zip(seq, seq[1:]))
        ok = strict and max(errs.values()) < 1e-4
        return CriterionResult(
            1,
            "optimised arc partitions of the circle reach k^2/4, strictly increasing",
            ok,
            {"values": seq, "max_abs_error": max(errs.values()), "strictly_increasing": strict},
            {"values": [k * k / 4 for k in range(2, 7)]},
            {"abs": 1e-4},
        )

    def c2(self) -> CriterionResult:
        g = self.sphere_grid()
        lam = spectral.lambda1_masked(g, spectral.lune_mask(g, math.pi)).value
        gam = spectral.gamma(2.0, 3)
        rel = abs(lam - 2.0) / 2.0
        ok = rel < 0.01 and abs(gam - 1.0) < 1e-12
        return CriterionResult(
            2,
            "hemisphere eigenvalue 2 and gamma(2, 3) = 1",
            ok,
            {"lambda1": lam, "relative_error": rel, "gamma": gam},
            {"lambda1": 2.0, "gamma": 1.0},
            {"lambda1_rel": 0.01, "gamma_abs": 1e-12},
            {"n_phi": g.n_phi, "n_lam": g.n_lam},
        )

    def c3(self) -> CriterionResult:
        g = self.sphere_grid()
        alpha = 2 * math.pi / 3
        lam = spectral.lambda1_masked(g, spectral.lune_mask(g, alpha)).value
        lunes = spectral.consecutive_lunes([alpha] * 3)
        pv = spectral.partition_value(lunes)
        gam = spectral.gamma(3.75, 3)
        rel = abs(lam - 3.75) / 3.75
        ok = rel < 0.01 and abs(pv - 3.75) < 1e-12 and abs(gam - 1.5) < 1e-12
        return CriterionResult(
            3,
            "Y-partition lunes: eigenvalue 15/4, partition value 15/4, gamma = 3/2",
            ok,
            {"lambda1_masked": lam, "relative_error": rel, "partition_value": pv, "gamma": gam},
            {"lambda1": 3.75, "partition_value": 3.75, "gamma": 1.5},
            {"lambda1_rel": 0.01, "exact_abs": 1e-12},
            {"n_phi": g.n_phi, "n_lam": g.n_lam},
        )

    def c4(self) -> CriterionResult:
        grid = PolarGrid2D(self.res["profile_n_r"], self.res["profile_n_theta"], 1.0)
        radii = np.linspace(0.1, 0.9, 33)
        worst, d_hats = {}, {}
        for d in (0.5, 1.0, 1.5, 2.0, 3.0):
            f = elliptic.profile_field(grid, d)
            tr = almgren.frequency_trace(f, BETA, radii)
            worst[d] = float(np.max(np.abs(tr.N - d)) / d)
            d_hats[d] = almgren.growth_rate(tr).d_hat
        ok = max(worst.values()) < 0.01
        return CriterionResult(
            4,
            "frequency of homogeneous profiles is constant and equal to d",
            ok,
            {"max_relative_deviation": {str(d): v for d, v in worst.items()}, "d_hat": d_hats},
            {"N": "d"},
            {"rel": 0.01},
            {"n_r": grid.n_r, "n_theta": grid.n_theta},
        )

    def c5(self) -> CriterionResult:
        measured, ok = {}, True
        radii = almgren.geometric_radii(0.1, 0.9, per_octave=8)
        for d in (1.0, 2.0):
            f, rep = self.solve_k2(d)
            tr = almgren.frequency_trace(f, BETA, radii)
            dbl = almgren.check_doubling(tr, tol=1e-2, ratio=2.0)
            measured[f"d={d:g}"] = {
                "max_violation": tr.max_violation,
                "doubling_lower_margin": dbl.lower_margin,
                "doubling_upper_margin": dbl.upper_margin,
                "pairs": len(dbl.pairs),
                "converged": rep.converged,
            }
            ok = ok and rep.converged and tr.max_violation < 5e-3 and dbl.passed and len(dbl.pairs) > 0
        return CriterionResult(
            5,
            "monotone frequency and doubling on k = 2 solves",
            ok,
            measured,
            {"violation": 0.0, "doubling_margin": ">= 0"},
            {"violation": 5e-3, "doubling": 1e-2},
            {"beta": BETA, "amplitude": AMP_D2},
        )

    def c6(self) -> CriterionResult:
        target = PolarGrid2D(self.res["solve_n_r"] // 2, self.res["solve_n_theta"], 1.0)
        residuals, fits = [], []
        for beta in (BETA, 2 * BETA, 4 * BETA):
            f, _ = self.solve_k2(2.0, beta)
            fam = blowdown.blowdown_family(f, [0.5], target, beta)
            fit = blowdown.classify_profile(fam.members[0], 2.0)
            residuals.append(fit.relative_l2_residual)
            fits.append(fit.to_dict())
        decreasing = all(b < a for a, b in zip(residuals, residuals[1:]))
        ok = residuals[0] < 0.1 and decreasing
        return CriterionResult(
            6,
            "blow-down of the d = 2 solve matches a split |Psi_2|, improving with beta",
            ok,
            {"residuals": residuals, "decreasing": decreasing},
            {"residual": 0.0},
            {"residual": 0.1},
            {"betas": [BETA, 2 * BETA, 4 * BETA], "fits": fits},
        )

    def c7(self) -> CriterionResult:
        # (a) a seeded third component on two-cone data
        grid = PolarGrid2D(self.res["symmetric_n_r"], 128, 1.0)
        bspec = elliptic.BoundarySpec(d=1.0, assignment=[0, 1], amplitude=AMP_D1)
        init = elliptic.harmonic_extension(grid, bspec.rim_traces(grid, 3))
        x, y = grid.cartesian()
        init[2] = 0.1 * AMP_D1 * np.exp(-(x**2 + y**2) / 0.05)
        init[2][-1] = 0.0
        cfg = elliptic.SolveConfig(beta=BETA, tol_grad=_tol(AMP_D1), max_iter=5000)
        fa, rep_a = elliptic.solve_dirichlet(grid, 3, bspec, cfg, initial=init)
        unit = PolarGrid2D(grid.n_r, grid.n_theta, 1.0)
        fam_a = blowdown.blowdown_family(fa, [0.25, 0.5, 1.0], unit, BETA)
        van_a = blowdown.vanishing_diagnostic(fam_a)
        # (b) the equivariant three-component solve
        fb, rep_b = self.solve_symmetric()
        unit_b = PolarGrid2D(fb.grid.n_r, fb.grid.n_theta, 1.0)
        fam_b = blowdown.blowdown_family(fb, [0.5, 1.0], unit_b, BETA)
        van_b = blowdown.vanishing_diagnostic(fam_b)
        d_hat = almgren.growth_rate(self.symmetric_trace()).d_hat
        sym = elliptic.equivariance_project(fb, 1.5)
        sym_defect = float(np.max(np.abs(sym.values - fb.values)) / np.max(fb.values))
        ok = (
            rep_a.converged
            and rep_b.converged
            and van_a.masses[2] < 1e-4
            and min(van_b.masses) > 1e-2
            and abs(d_hat - 1.5) <= 0.1
        )
        return CriterionResult(
            7,
            "at most 2d components survive; the k = 3 solve has growth rate 3/2",
            ok,
            {
                "seeded_component_mass": van_a.masses[2],
                "two_cone_masses": van_a.masses,
                "symmetric_masses": van_b.masses,
                "d_hat": d_hat,
            },
            {"seeded_component_mass": 0.0, "symmetric_masses": "> 1e-2", "d_hat": 1.5},
            {"seeded_mass": 1e-4, "d_hat": 0.1},
            {"equivariance_relative_defect": sym_defect, "beta": BETA, "amplitude": AMP_SYMMETRIC},
        )

    def c8(self) -> CriterionResult:
        tr = self.symmetric_trace().window(0.3, 0.7)
        ratio = tr.H / tr.radii**3
        flat = float(ratio.max() / ratio.min())
        return CriterionResult(
            8,
            "H(r)/r^3 is flat for the k = 3 solve",
            flat < 1.2,
            {"max_over_min": flat, "b_estimate": float(np.median(ratio))},
            {"max_over_min": 1.0},
            {"max_over_min": 1.2},
        )

    def c9(self) -> CriterionResult:
        grid = PolarGrid2D(self.res["acf_n_r"], self.res["acf_n_theta"], 4.0)
        f = elliptic.profile_field(grid, 1.0)
        diag = almgren.acf_diagnostics(f, BETA, [0, 1], 1.9, radii=np.linspace(1.0, 3.6, 27), slack=1e-3)
        rel = diag.product[1:] / diag.product[:-1] - 1.0
        worst = float(rel.min())
        return CriterionResult(
            9,
            "ACF product for the disjoint Psi_1 pair is non-decreasing",
            worst >= -1e-3,
            {"min_relative_increment": worst, "r_prime": diag.r_prime, "bound_margin_min": float(diag.bound_margin.min())},
            {"min_relative_increment": ">= 0"},
            {"slack": 1e-3},
            {"q": 1.9, "r_max": grid.r_max},
        )

    def c10(self) -> CriterionResult:
        errs = []
        for K in (1.0, 4.0, 9.0, 16.0):
            got = profiles1d.decay_experiment(K, 1.0, 5.0, 1).sup_Br
            exact = math.cosh(math.sqrt(K) * 5.0) / math.cosh(2 * math.sqrt(K) * 5.0)
            errs.append(abs(got - exact) / exact)
        r = 2.0
        slopes = {N: profiles1d.decay_slope(r, N)[0] for N in (2, 3)}
        slope_err = {N: abs(s + r) / r for N, s in slopes.items()}
        ok = max(errs) < 1e-6 and max(slope_err.values()) < 0.05
        return CriterionResult(
            10,
            "radial decay: closed form in 1-D, log-slope -r in 2-D and 3-D",
            ok,
            {"closed_form_rel_error": max(errs), "slopes": {str(N): s for N, s in slopes.items()}},
            {"closed_form_rel_error": 0.0, "slope": -r},
            {"closed_form_rel": 1e-6, "slope_rel": 0.05},
        )

    def c11(self) -> CriterionResult:
        traj = self.cached("profile1d", lambda: profiles1d.find_profile(1.0, X=20.0, h=1e-3))
        n0 = int(np.searchsorted(traj.x, 0.0))
        n1 = int(np.searchsorted(traj.x, 10.0 + 1e-9))
        du = np.diff(traj.u[n0:n1])
        dv = np.diff(traj.v[n0:n1])
        monotone = bool(np.all(du > 0) and np.all(dv < 0))
        r_max = 100.0
        grid = PolarGrid2D(self.res["line_n_r"], self.res["line_n_theta"], r_max)
        f = profiles1d.extend_to_disk(traj, grid)
        tr = almgren.frequency_trace(f, 1.0, almgren.geometric_radii(r_max / 64, r_max))
        d_hat = almgren.growth_rate(tr).d_hat
        ok = traj.symmetry_defect < 1e-6 and monotone and abs(d_hat - 1.0) <= 0.05
        return CriterionResult(
            11,
            "1-D profile: symmetric, monotone, growth rate 1 when extended to the plane",
            ok,
            {"symmetry_defect": traj.symmetry_defect, "monotone": monotone, "d_hat": d_hat, "slope_b": traj.b, "m": traj.m},
            {"symmetry_defect": 0.0, "d_hat": 1.0},
            {"symmetry_defect": 1e-6, "d_hat": 0.05},
        )

    def c12(self) -> CriterionResult:
        d_hats = {f"profile d={d:g}": v for d, v in self.profile_d_hats().items()}
        d_hats["k=3 solve"] = self.cached("c7_dhat", lambda: almgren.growth_rate(self.symmetric_trace()).d_hat)
        d_hats["1-D profile"] = self.cached("c11", self.c11).measured["d_hat"]
        devs = {name: blowdown.quantization_check(v) for name, v in d_hats.items()}
        worst = max(dev for _, dev in devs.values())
        return CriterionResult(
            12,
            "all measured growth rates sit within 0.1 of a half-integer",
            worst < 0.1,
            {"d_hat": d_hats, "nearest": {k: q for k, (q, _) in devs.items()}, "max_deviation": worst},
            {"deviation": 0.0},
            {"deviation": 0.1},
        )


CRITERIA = tuple(range(1, 13))


def run_suite(
    criteria: list[int] | None = None,
    resolution: dict[str, int] | None = None,
    seed: int = 0,
    on_result: Callable[[CriterionResult], None] | None = None,
) -> VerifyReport:
    """Run the selected criteria (all by default) in order."""
    suite = Suite(resolution, seed)
    ids = list(CRITERIA) if criteria is None else sorted(set(criteria))
    results = []
    for i in ids:
        if i not in CRITERIA:
            raise KeyError(f"unknown criterion {i}")
        try:
            res = suite.cached(f"c{i}", getattr(suite, f"c{i}"))
        except Exception as exc:  # a crash is a failure with a reason, never a skip
            res = CriterionResult(i, f"criterion {i}", False, {"error": f"{type(exc).__name__}: {exc}"}, {}, {})
        results.append(res)
        if on_result is not None:
            on_result(res)
    return VerifyReport(results, suite.res, seed)
