"""Command line entry point: ``seglab <command> --config c.json --out dir``.

Every command reads a JSON config, fills documented defaults, rejects
unknown keys, and writes ``<command>-<hash>.json`` (and a CSV where there is
tabular data) into the output directory. ``hash`` is the first 16 hex digits
of the SHA-256 of the canonical config, so the same config and seed always
produce the same file names and byte-identical JSON.

Exit codes: 0 success, 1 verification failure, 2 non-convergence,
3 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_NOT_CONVERGED = 2
EXIT_CONFIG = 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration dataclasses


@dataclass
class GridConfig:
    n_r: int = 64
    n_theta: int = 128
    r_max: float = 1.0


@dataclass
class BoundaryConfig:
    kind: str = "profile"
    d: float = 1.0
    assignment: list[int] | None = None
    theta0: float = 0.0
    amplitude: float = 1.0
    traces: list[list[float]] | None = None


@dataclass
class SolveCommand:
    grid: GridConfig = field(default_factory=GridConfig)
    k: int = 2
    boundary: BoundaryConfig = field(default_factory=BoundaryConfig)
    beta: float = 50.0
    beta_schedule: list[float] | None = None
    tol_grad: float = 1e-6
    max_iter: int = 2000
    step_rule: str = "backtracking"
    tau: float = 1.0
    anderson: int = 5
    equivariant: bool = False
    seed: int = 0


@dataclass
class RadiiConfig:
    values: list[float] | None = None
    r_lo: float = 0.1
    r_hi: float = 0.9
    per_octave: int = 8


@dataclass
class AcfConfig:
    group: list[int] = field(default_factory=lambda: [0, 1])
    q: float = 1.9
    radii: list[float] | None = None
    slack: float = 1e-3


@dataclass
class AlmgrenCommand:
    solve: SolveCommand | None = None
    field_csv: str | None = None
    beta: float | None = None
    radii: RadiiConfig = field(default_factory=RadiiConfig)
    doubling_tol: float = 1e-2
    doubling_ratio: float | None = 2.0
    acf: AcfConfig | None = None
    seed: int = 0


@dataclass
class BlowdownCommand:
    solve: SolveCommand | None = None
    field_csv: str | None = None
    beta: float | None = None
    R: list[float] = field(default_factory=lambda: [0.25, 0.5])
    target: GridConfig = field(default_factory=GridConfig)
    d: float | None = None
    radii: RadiiConfig = field(default_factory=RadiiConfig)
    seed: int = 0


@dataclass
class SphereGridConfig:
    n_phi: int = 128
    n_lam: int = 384


@dataclass
class PartitionCommand:
    arcs_equal: dict[str, int] | None = None
    arcs: list[list[float]] | None = None
    lunes: list[float] | None = None
    mask_file: str | None = None
    optimize_arcs: dict[str, int] | None = None
    sphere_grid: SphereGridConfig | None = None
    seed: int = 0


@dataclass
class Profile1dCommand:
    a: float = 1.0
    X: float | None = None
    h: float = 1e-3
    tol: float = 1e-6
    seed: int = 0


@dataclass
class DecayCommand:
    K: list[float] = field(default_factory=lambda: [1.0, 4.0, 9.0, 16.0])
    A: list[float] = field(default_factory=lambda: [1.0])
    r: list[float] = field(default_factory=lambda: [2.0])
    N: int = 2
    seed: int = 0


@dataclass
class VerifyCommand:
    criteria: list[int] | None = None
    resolution: dict[str, int] = field(default_factory=dict)
    seed: int = 0


COMMANDS: dict[str, type] = {
    "solve": SolveCommand,
    "almgren": AlmgrenCommand,
    "blowdown": BlowdownCommand,
    "partition": PartitionCommand,
    "profile1d": Profile1dCommand,
    "decay": DecayCommand,
    "verify": VerifyCommand,
}


def _coerce(tp, value, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union or origin is types.UnionType:
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, where)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return from_dict(tp, value, where)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list")
        return [_coerce(args[0], v, f"{where}[{i}]") for i, v in enumerate(value)]
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(f"{where}: expected an object")
        return {str(k): _coerce(args[1], v, f"{where}.{k}") for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string")
        return value
    raise ConfigError(f"{where}: unsupported type {tp}")


def from_dict(cls, data: dict, where: str = "config"):
    """Build ``cls`` from JSON data; unknown keys are an error."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {', '.join(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}") for k, v in data.items()}
    return cls(**kwargs)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def canonical_json(cfg) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


def parse_config(command: str, text: str | None):
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    if text is None:
        data: Any = {}
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(COMMANDS[command], data)


# --------------------------------------------------------------------------
# output


def _json_ready(obj):
    if isinstance(obj, dict):
        return {str(k): _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _json_ready(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if hasattr(obj, "item"):
        return _json_ready(obj.item())
    return obj


def dump_json(payload: dict) -> str:
    return json.dumps(_json_ready(payload), sort_keys=True, indent=2) + "\n"


@dataclass
class Outputs:
    """Artifacts are collected first and written only once a command finishes."""

    out_dir: Path
    stem: str
    files: dict[str, Any] = field(default_factory=dict)

    def write(self, suffix: str, text: str) -> None:
        self.files[suffix] = text

    def write_csv_via(self, writer) -> None:
        self.files["csv"] = writer

    def commit(self) -> list[Path]:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for suffix, content in sorted(self.files.items()):
            p = self.out_dir / f"{self.stem}.{suffix}"
            if callable(content):
                content(p)
            else:
                p.write_text(content)
            paths.append(p)
        return paths


# --------------------------------------------------------------------------
# commands


def _grid(g: GridConfig):
    from .grid import PolarGrid2D

    return PolarGrid2D(g.n_r, g.n_theta, g.r_max)


def _run_solve(cfg: SolveCommand):
    from . import elliptic

    grid = _grid(cfg.grid)
    b = cfg.boundary
    bspec = elliptic.BoundarySpec(b.kind, b.d, b.assignment, b.theta0, b.amplitude, b.traces)
    scfg = elliptic.SolveConfig(cfg.beta, cfg.beta_schedule, cfg.tol_grad, cfg.max_iter, cfg.step_rule, cfg.tau, cfg.anderson)
    field_, report = elliptic.solve_dirichlet(grid, cfg.k, bspec, scfg)
    if cfg.equivariant:
        field_ = elliptic.equivariance_project(field_, b.d)
    return field_, report


def _field_from(cfg) -> tuple[Any, float, dict]:
    from .grid import read_field_csv

    if (cfg.solve is None) == (cfg.field_csv is None):
        raise ConfigError("give exactly one of 'solve' or 'field_csv'")
    if cfg.solve is not None:
        field_, report = _run_solve(cfg.solve)
        beta = cfg.beta if cfg.beta is not None else cfg.solve.beta
        return field_, beta, {"solve_report": report.to_dict()}
    if cfg.beta is None:
        raise ConfigError("'beta' is required with 'field_csv'")
    return read_field_csv(cfg.field_csv), cfg.beta, {}


def _radii(rc: RadiiConfig, r_max: float):
    import numpy as np

    from .almgren import geometric_radii

    if rc.values is not None:
        return np.asarray(rc.values, dtype=float)
    return geometric_radii(rc.r_lo * r_max, rc.r_hi * r_max, rc.per_octave)


def cmd_solve(cfg: SolveCommand, out: Outputs) -> int:
    from .grid import write_field_csv

    field_, report = _run_solve(cfg)
    out.write("json", dump_json({"config": to_dict(cfg), "report": report.to_dict()}))
    out.write_csv_via(lambda p: write_field_csv(field_, p))
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def cmd_almgren(cfg: AlmgrenCommand, out: Outputs) -> int:
    from . import almgren

    field_, beta, extra = _field_from(cfg)
    tr = almgren.frequency_trace(field_, beta, _radii(cfg.radii, field_.grid.r_max))
    dbl = almgren.check_doubling(tr, tol=cfg.doubling_tol, ratio=cfg.doubling_ratio)
    payload: dict[str, Any] = {
        "config": to_dict(cfg),
        "beta": beta,
        "truncated": tr.truncated,
        "max_violation": tr.max_violation,
        "doubling": {
            "d": dbl.d,
            "passed": dbl.passed,
            "lower_margin": dbl.lower_margin,
            "upper_margin": dbl.upper_margin,
            "pairs": len(dbl.pairs),
        },
        **extra,
    }
    try:
        gr = almgren.growth_rate(tr)
        payload["growth_rate"] = {
            "d_hat": gr.d_hat,
            "plateau_quality": gr.plateau_quality,
            "low_confidence": gr.low_confidence,
        }
    except ValueError as exc:
        payload["growth_rate"] = {"error": str(exc)}
    if cfg.acf is not None:
        a = almgren.acf_diagnostics(field_, beta, cfg.acf.group, cfg.acf.q, cfg.acf.radii, cfg.acf.slack)
        payload["acf"] = {
            "radii": a.radii,
            "Lambda": a.Lambda,
            "J": a.J,
            "product": a.product,
            "bound_margin": a.bound_margin,
            "r_prime": a.r_prime,
        }
    out.write("json", dump_json(payload))
    out.write_csv_via(tr.write_csv)
    converged = extra.get("solve_report", {}).get("converged", True)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def cmd_blowdown(cfg: BlowdownCommand, out: Outputs) -> int:
    from . import almgren, blowdown

    field_, beta, extra = _field_from(cfg)
    d = cfg.d
    if d is None:
        tr = almgren.frequency_trace(field_, beta, _radii(cfg.radii, field_.grid.r_max))
        d = blowdown.quantization_check(almgren.growth_rate(tr).d_hat)[0]
    fam = blowdown.blowdown_family(field_, cfg.R, _grid(cfg.target), beta)
    rows = []
    for R, mem, H in zip(fam.R, fam.members, fam.H_source):
        if mem is None:
            rows.append({"R": R, "skipped": True})
            continue
        fit = blowdown.classify_profile(mem, d)
        seg = blowdown.segregation_residual(mem, H * R * R)
        rows.append({"R": R, "skipped": False, "fit": fit.to_dict(), "segregation_residual": seg})
    payload: dict[str, Any] = {"config": to_dict(cfg), "d": d, "members": rows, **extra}
    if fam.valid:
        payload["vanishing"] = blowdown.vanishing_diagnostic(fam).to_dict()
    out.write("json", dump_json(payload))
    lines = ["R,skipped,residual,segregation"]
    for row in rows:
        if row["skipped"]:
            lines.append(f"{row['R']:.17g},1,,")
        else:
            lines.append(f"{row['R']:.17g},0,{row['fit']['residual']:.17g},{row['segregation_residual']:.17g}")
    out.write("csv", "\n".join(lines) + "\n")
    converged = extra.get("solve_report", {}).get("converged", True)
    return EXIT_OK if converged else EXIT_NOT_CONVERGED


def _read_mask(path: str):
    import numpy as np

    rows = [line.strip() for line in Path(path).read_text().splitlines() if line.strip()]
    return np.array([[int(c) for c in r.split(",")] for r in rows], dtype=bool)


def cmd_partition(cfg: PartitionCommand, out: Outputs) -> int:
    from . import spectral
    from .grid import SphereGrid

    given = [x for x in ("arcs_equal", "arcs", "lunes", "mask_file", "optimize_arcs") if getattr(cfg, x) is not None]
    if len(given) != 1:
        raise ConfigError("give exactly one of arcs_equal, arcs, lunes, mask_file, optimize_arcs")
    sg = SphereGrid(cfg.sphere_grid.n_phi, cfg.sphere_grid.n_lam) if cfg.sphere_grid else None
    payload: dict[str, Any] = {"config": to_dict(cfg)}
    if cfg.arcs_equal is not None:
        part = spectral.ArcPartition.equal(int(cfg.arcs_equal["k"]))
    elif cfg.arcs is not None:
        part = spectral.ArcPartition([tuple(a) for a in cfg.arcs])
    elif cfg.optimize_arcs is not None:
        k = int(cfg.optimize_arcs["k"])
        n_starts = int(cfg.optimize_arcs.get("n_starts", 8))
        part, _ = spectral.optimize_arcs(k, n_starts=n_starts, seed=cfg.seed)
        payload["arcs"] = [list(a) for a in part.arcs]
    elif cfg.lunes is not None:
        part = spectral.consecutive_lunes(cfg.lunes)
    else:
        if sg is None:
            raise ConfigError("mask_file needs sphere_grid")
        part = [spectral.SphereDomain("mask", mask=_read_mask(cfg.mask_file), grid=sg)]
    try:
        payload.update(spectral.partition_summary(part, sg))
    except spectral.NotConvergedError as exc:
        payload["error"] = str(exc)
        out.write("json", dump_json(payload))
        return EXIT_NOT_CONVERGED
    out.write("json", dump_json(payload))
    return EXIT_OK


def cmd_profile1d(cfg: Profile1dCommand, out: Outputs) -> int:
    from . import profiles1d

    try:
        traj = profiles1d.find_profile(cfg.a, cfg.X, cfg.tol, cfg.h)
    except profiles1d.BracketError as exc:
        raise ConfigError(str(exc)) from exc
    payload = {
        "config": to_dict(cfg),
        "m": traj.m,
        "b": traj.b,
        "symmetry_defect": traj.symmetry_defect,
        "ode_residual": profiles1d.ode_residual(traj),
        "tag": traj.tag,
    }
    out.write("json", dump_json(payload))
    out.write_csv_via(traj.write_csv)
    return EXIT_OK if traj.symmetry_defect < cfg.tol else EXIT_NOT_CONVERGED


def cmd_decay(cfg: DecayCommand, out: Outputs) -> int:
    from . import profiles1d

    results = [profiles1d.decay_experiment(K, A, r, cfg.N) for r in cfg.r for A in cfg.A for K in cfg.K]
    slopes = {}
    positive = [K for K in cfg.K if K > 0]
    if len(positive) >= 2:
        for r in cfg.r:
            s, c = profiles1d.decay_slope(r, cfg.N, positive)
            slopes[f"{r:g}"] = {"slope": s, "intercept": c}
    out.write("json", dump_json({"config": to_dict(cfg), "sup_Br": [d.sup_Br for d in results], "log_slope_vs_sqrtK": slopes}))
    out.write_csv_via(lambda p: profiles1d.write_decay_csv(results, p))
    return EXIT_OK


def cmd_verify(cfg: VerifyCommand, out: Outputs) -> int:
    from .acceptance import run_suite

    try:
        report = run_suite(cfg.criteria, cfg.resolution, cfg.seed, on_result=lambda r: print(r.line(), file=sys.stderr))
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    payload = report.to_dict()
    payload["config"] = to_dict(cfg)
    out.write("json", dump_json(payload))
    return EXIT_OK if report.passed else EXIT_VERIFY_FAILED


HANDLERS = {
    "solve": cmd_solve,
    "almgren": cmd_almgren,
    "blowdown": cmd_blowdown,
    "partition": cmd_partition,
    "profile1d": cmd_profile1d,
    "decay": cmd_decay,
    "verify": cmd_verify,
}


def run(command: str, config_text: str | None, out_dir: str | Path, seed: int | None = None) -> int:
    """Parse, execute and write artifacts; returns the exit code."""
    try:
        cfg = parse_config(command, config_text)
        if seed is not None:
            cfg.seed = seed
        out = Outputs(Path(out_dir), f"{command}-{config_hash(cfg)}")
        code = HANDLERS[command](cfg, out)
    except (ConfigError, ValueError, KeyError, TypeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in out.commit():
        print(p)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seglab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1 for reproducibility)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(max(1, args.threads)))
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    text = None
    if args.config is not None:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    return run(args.command, text, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
