"""``hcl`` command line: bound tables, Bellman certification, trajectories, sharpness runs."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import bellman as bm
from . import bounds as bd
from . import control as ctl
from .centroaffine import CubicBound, check_admissible, constant_profile, riemann_length
from .errors import DomainError, IntegrationFault

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
OUT_DIR_ENV = "HCL_OUT_DIR"


@dataclass
class RunConfig:
    gamma: float = 0.5
    n: Optional[int] = None
    grid: int = 64
    n_t: int = 20
    controls: int = 9
    fd_step: float = 1e-6
    tol: float = 1e-5
    seed: int = 0
    out_dir: str = "."
    step: float = 1e-4
    seam_points: int = 1000
    brute_grid: int = 256

    def __post_init__(self):
        for name in ("fd_step", "tol", "step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.gamma is not None and self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        for name in ("grid", "n_t", "controls", "seam_points", "brute_grid"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def bound(self) -> CubicBound:
        return bd.blaschke_bound(self.n) if self.n is not None else bd.bound_for(gamma=self.gamma)

    def output_path(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.out_dir) / p


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(name, value):
    kind = _FIELD_TYPES[name]
    if "int" in kind:
        return int(value)
    if "float" in kind:
        return float(value)
    return str(value)


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` file (``#`` comments, dashes or underscores in keys)."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults < config file < HCL_OUT_DIR < command-line flags."""
    values = {}
    if getattr(args, "config", None):
        values.update(read_config_file(args.config))
    if os.environ.get(OUT_DIR_ENV):
        values["out_dir"] = os.environ[OUT_DIR_ENV]
    if "gamma" in values and "n" in values:
        raise ValueError("config sets both gamma and n")
    for name in _FIELD_TYPES:
        v = getattr(args, name, None)
        if v is None:
            continue
        if name == "gamma":
            values.pop("n", None)
            v = v[0] if isinstance(v, list) else v
        elif name == "n":
            values.pop("gamma", None)
        values[name] = v
    cfg = RunConfig(**values)
    if cfg.n is not None:
        cfg.gamma = cfg.bound.gamma
    return cfg


def _write_csv_safely(writer, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    writer(path)


# ---------------------------------------------------------------------------
# commands


def cmd_bounds(cfg: RunConfig, dh_max: float = 5.0, samples: int = 200, out: str = "bounds.csv") -> Path:
    if not dh_max > 0 or samples < 2:
        raise ValueError("need dh-max > 0 and at least 2 samples")
    bound = cfg.bound
    rows = bd.bound_curve(np.linspace(0.0, dh_max, samples), bound)
    path = cfg.output_path(out)
    _write_csv_safely(lambda p: bd.write_bounds_csv(p, rows), path)
    return path


def _gammas_for(args, cfg):
    if cfg.n is not None:
        return [cfg.bound]
    gs = args.gamma if isinstance(args.gamma, list) and args.gamma else [cfg.gamma]
    return [bd.bound_for(gamma=g) for g in gs]


def cmd_verify(cfg: RunConfig, problem: str = "all", bounds_list=None, corrupt_mu: Optional[float] = None) -> dict:
    """Certify the Bellman functions; returns a summary with an overall ``passed`` flag."""
    problems = bm.PROBLEMS if problem == "all" else (problem,)
    bounds_list = bounds_list or [cfg.bound]
    out = {"passed": True, "runs": []}
    for bound in bounds_list:
        if corrupt_mu is not None:
            # debug: keep gamma, perturb mu so the pair is inconsistent
            bound = CubicBound(bound.gamma, bound.mu * corrupt_mu, check=False)
        run = {"gamma": bound.gamma, "mu": bound.mu, "checks": []}
        grid = bm.VerificationGrid.uniform(bound, n=cfg.grid, n_t=cfg.n_t, n_u=cfg.controls)
        for prob in problems:
            if prob != "free-max" and bound.mu <= 1 + bd.MU_ONE_TOL:
                run["checks"].append({"name": f"hjb {prob}", "passed": True, "skipped": "mu = 1"})
                continue
            rep = bm.verify_bellman(prob, bound, grid, fd_step=cfg.fd_step, tol=cfg.tol)
            run["checks"].append(
                {
                    "name": f"hjb {prob}",
                    "passed": rep.passed,
                    "violations": rep.n_violations,
                    "checks": rep.n_checks,
                    "max_signed_residual": rep.max_signed_residual,
                    "max_uhat_residual": rep.max_uhat_residual,
                    "worst": [list(w) for w in rep.worst[:10]] if not rep.passed else [],
                }
            )
        if bound.mu > 1 + bd.MU_ONE_TOL and any(p != "free-max" for p in problems):
            for s in bm.seam_continuity(bound, n=cfg.seam_points, seed=cfg.seed):
                ok = s.max_rel_jump < 1e-9 and s.max_stated_error < 1e-10
                run["checks"].append({"name": f"seam {s.name}", "passed": ok, "max_rel_jump": s.max_rel_jump, "max_stated_error": s.max_stated_error})
            for prob in (p for p in problems if p != "free-max"):
                for T in (0.5, 2.0):
                    ext = (bm.maximal_B if prob == "bounded-max" else bm.minimal_B)(T, bound)
                    g = bm.brute_force_extremum(prob, T, bound, n=cfg.brute_grid)
                    sign = 1 if prob == "bounded-max" else -1
                    w_cf = bm.xy_to_wz(*ext.point)
                    w_grid = bm.xy_to_wz(*g.grid_point)
                    ok = (
                        abs(ext.value - g.value) < 1e-6
                        # raw grid nodes can only do worse than the true extremum
                        and sign * (ext.value - g.grid_value) >= -1e-12
                        and max(abs(a - b) for a, b in zip(w_cf, w_grid)) <= g.cell
                    )
                    run["checks"].append(
                        {"name": f"extremizer {prob} T={T}", "passed": bool(ok), "closed_form": ext.value, "brute_force": g.value, "grid_node": g.grid_value}
                    )
        run["passed"] = all(c["passed"] for c in run["checks"])
        out["passed"] &= run["passed"]
        out["runs"].append(run)
    return out


MODES = ("max-fixed", "max-free", "min-fixed", "min-free")


def cmd_trajectory(cfg: RunConfig, mode: str, T: float, x0=None, y0=None, out: str = "trajectory.csv", extend: float = 0.0) -> dict:
    bound = cfg.bound
    if mode.endswith("fixed"):
        if x0 is None or y0 is None:
            raise ValueError("fixed-start modes need --x0 and --y0")
        s0 = ctl.ControlState(x0, y0)
        if not s0.feasible(bound, tol=1e-12):
            raise DomainError(f"start ({x0}, {y0}) outside the feasible set")
    if mode == "max-fixed":
        traj = ctl.synthesize_max_fixed_start(s0, T, bound, cfg.step)
        value = bm.bellman_max(-T, x0, y0, bound).value
    elif mode == "min-fixed":
        traj = ctl.synthesize_min_fixed_start(s0, T, bound, cfg.step)
        value = bm.bellman_min(-T, x0, y0, bound).value
    elif mode == "max-free":
        traj = ctl.synthesize_max_free(T, bound, cfg.step)
        value = traj.info["bellman_value"]
    elif mode == "min-free":
        traj = ctl.synthesize_min_free(T, bound, cfg.step)
        value = traj.info["bellman_value"]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    cost = traj.running_cost
    written = ctl.extend_to_corners(traj, extend) if extend > 0 else traj
    path = cfg.output_path(out)
    _write_csv_safely(lambda p: written.to_csv(p), path)
    info = {
        "mode": mode,
        "T": T,
        "gamma": bound.gamma,
        "cost": cost,
        "bellman": value,
        "difference": cost - value,
        "arcs": traj.arc_tags(),
        "arc_count": len(traj.arc_tags()),
        "structure": traj.info.get("branch", ""),
        "boundary_fraction": traj.boundary_fraction(),
        "csv": str(path),
    }
    if extend > 0:
        info["start_corner_distance"] = written.info["start_corner_distance"]
        info["end_corner_distance"] = written.info["end_corner_distance"]
    return info


def _gap_row(kind, eps, length, bound_value):
    gap = (bound_value - length) if kind != "min" else (length - bound_value)
    return {"problem": kind, "epsilon": eps, "length": length, "bound": bound_value, "gap": gap, "relative_gap": gap / bound_value}


def cmd_sharpness(cfg: RunConfig, T: float = 3.0, epsilons=(1e-2, 1e-3, 1e-4), problems=("max", "min", "free")) -> dict:
    """Lengths of smoothed near-extremal profiles against the sharp bounds.

    The run is conclusive when every gap is strictly positive (or zero in the
    degenerate ``mu = 1`` case), the gaps shrink as ``epsilon`` decreases and
    the smoothed bounded-problem profiles stay admissible.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    eps = sorted((float(e) for e in epsilons), reverse=True)
    if any(not 0 < e <= 0.1 for e in eps):
        raise ValueError("epsilon must lie in (0, 0.1]")
    bound = cfg.bound
    degenerate = bound.mu <= 1 + bd.MU_ONE_TOL
    rows, notes = [], []
    for kind in problems:
        if kind == "free":
            ub = bd.thm1_upper(T)
            for e in eps:
                p = ctl.near_extremal_free_profile(T, e)
                rows.append(_gap_row("free", e, riemann_length(p, -T, 0.0, tol=1e-12), ub))
            continue
        ref = bd.thm2_upper(T, bound) if kind == "max" else bd.thm3_lower(T, bound)
        if degenerate:
            # X collapses to the point (0, 1); only the hyperbola is admissible
            p = constant_profile(0.0, -T, 0.0)
            for e in eps:
                rows.append(_gap_row(kind, e, riemann_length(p, -T, 0.0, tol=1e-12), ref))
            continue
        traj = (ctl.synthesize_max_free if kind == "max" else ctl.synthesize_min_free)(T, bound, cfg.step)
        for e in eps:
            try:
                p = ctl.profile_from_trajectory(traj, smoothing=e)
            except ValueError as exc:
                notes.append(f"{kind} eps={e:g}: {exc}")
                continue
            row = _gap_row(kind, e, riemann_length(p, p.t_lo, p.t_hi, tol=1e-12), ref)
            rep = check_admissible(p, bound, grid_step=min(1e-3, e), state_bounds=True)
            row["admissible"] = rep.ok
            row["max_state_excess"] = p.info["max_state_excess"]
            row["cubic_excess"] = p.info["cubic_excess"]
            if not rep.ok:
                notes.append(f"{kind} eps={e:g}: smoothed profile violates {sorted(rep.kinds())}")
            rows.append(row)
    conclusive = not notes
    for kind in problems:
        gaps = [r["gap"] for r in rows if r["problem"] == kind]
        if degenerate and kind != "free":
            if any(abs(g) > 1e-9 for g in gaps):
                notes.append(f"{kind}: nonzero gap in the hyperbola case")
                conclusive = False
            continue
        if len(gaps) < len(eps) or any(not g > 0 for g in gaps):
            notes.append(f"{kind}: gap not strictly positive")
            conclusive = False
        if any(b >= a for a, b in zip(gaps, gaps[1:])):
            notes.append(f"{kind}: gaps do not shrink with epsilon")
            conclusive = False
    return {"T": T, "gamma": bound.gamma, "mu": bound.mu, "rows": rows, "conclusive": conclusive and not notes, "notes": notes}


FIGURE_GAMMAS = (0.1, 0.5, 1.0, 2.0, 5.0)


def cmd_figures(cfg: RunConfig, out_dir: Optional[str] = None) -> list[Path]:
    """Write the CSV data behind the bound curves and the trajectory panels."""
    base = Path(out_dir) if out_dir else Path(cfg.out_dir)
    written = []
    for g in FIGURE_GAMMAS:
        sub = RunConfig(**{**asdict(cfg), "gamma": g, "n": None, "out_dir": str(base)})
        written.append(cmd_bounds(sub, dh_max=10.0, samples=400, out=f"fig1_bounds_gamma{g:g}.csv"))
    sub = RunConfig(**{**asdict(cfg), "gamma": 0.5, "n": None, "out_dir": str(base)})
    bound = sub.bound
    # constant-control flows through a fan of start points, cut off once they leave a box
    box = lambda t, x, y: 2.0 - max(abs(x), y)
    for u in (-1.0, 0.0, 1.0):
        for k, y0 in enumerate((0.8, 0.9, 1.0, 1.1, 1.2)):
            tr = ctl.integrate(ctl.ControlState(0.0, y0), ctl.const(u), 0.0, 3.0, 1e-3, bound, feasible=False, stop=box)
            p = sub.output_path(f"fig2_flow_u{u:+g}_{k}.csv")
            _write_csv_safely(tr.to_csv, p)
            written.append(p)
    panels = [
        ("fig3", "max-fixed", (0.1, 0.5, 1.0, 2.0)),
        ("fig4", "min-fixed", (0.3, 1.5)),
        ("fig5", "max-free", (1.0, 3.0)),
        ("fig6", "min-free", (1.0, 3.0)),
    ]
    for fig, mode, Ts in panels:
        for T in Ts:
            info = cmd_trajectory(sub, mode, T, 0.0, 1.1, out=f"{fig}_{mode}_T{T:g}.csv")
            written.append(Path(info["csv"]))
    return written


# ---------------------------------------------------------------------------
# argument parsing


def _add_common(p, multi_gamma=False):
    g = p.add_mutually_exclusive_group()
    if multi_gamma:
        g.add_argument("--gamma", type=float, nargs="+", help="cubic-form bound(s)")
    else:
        g.add_argument("--gamma", type=float, help="cubic-form bound")
    g.add_argument("--n", type=int, help="Blaschke mode: affine sphere over RP^n")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--step", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hcl", description="Hilbert distance versus centro-affine length.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="bound curves as CSV")
    _add_common(p)
    p.add_argument("--dh-max", type=float, default=5.0)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--out", default="bounds.csv")

    p = sub.add_parser("verify", help="certify the Bellman functions")
    _add_common(p, multi_gamma=True)
    p.add_argument("--problem", choices=(*bm.PROBLEMS, "all"), default="all")
    p.add_argument("--grid", type=int)
    p.add_argument("--n-t", dest="n_t", type=int)
    p.add_argument("--controls", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--fd-step", dest="fd_step", type=float)
    p.add_argument("--seam-points", dest="seam_points", type=int)
    p.add_argument("--brute-grid", dest="brute_grid", type=int)
    p.add_argument("--corrupt-mu", dest="corrupt_mu", type=float, help="debug: multiply mu by this factor")

    p = sub.add_parser("trajectory", help="optimal trajectory as CSV")
    _add_common(p)
    p.add_argument("--mode", choices=MODES, required=True)
    p.add_argument("--T", type=float, required=True)
    p.add_argument("--x0", type=float)
    p.add_argument("--y0", type=float)
    p.add_argument("--extend", type=float, default=0.0, help="append boundary arcs of this length")
    p.add_argument("--out", default="trajectory.csv")

    p = sub.add_parser("sharpness", help="lengths of smoothed near-extremal profiles")
    _add_common(p)
    p.add_argument("--T", type=float, default=3.0)
    p.add_argument("--epsilon", type=float, nargs="+", default=[1e-2, 1e-3, 1e-4])
    p.add_argument("--problem", choices=("max", "min", "free", "all"), default="all")

    p = sub.add_parser("figures", help="CSV data for all figure panels")
    _add_common(p)
    return parser


def _emit(obj):
    print(json.dumps(obj, indent=2, default=float))


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = build_config(args)
        cfg.bound  # validate gamma / n early
    except (ValueError, OSError) as exc:
        print(f"hcl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "bounds":
            path = cmd_bounds(cfg, args.dh_max, args.samples, args.out)
            print(path)
            return EXIT_OK
        if args.command == "verify":
            bounds_list = _gammas_for(args, cfg)
            summary = cmd_verify(cfg, args.problem, bounds_list, args.corrupt_mu)
            _emit(summary)
            return EXIT_OK if summary["passed"] else EXIT_FAIL
        if args.command == "trajectory":
            _emit(cmd_trajectory(cfg, args.mode, args.T, args.x0, args.y0, args.out, args.extend))
            return EXIT_OK
        if args.command == "sharpness":
            problems = ("max", "min", "free") if args.problem == "all" else (args.problem,)
            report = cmd_sharpness(cfg, args.T, args.epsilon, problems)
            _emit(report)
            return EXIT_OK if report["conclusive"] else EXIT_FAIL
        if args.command == "figures":
            for p in cmd_figures(cfg):
                print(p)
            return EXIT_OK
    except (DomainError, ValueError, IntegrationFault, OSError) as exc:
        print(f"hcl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
