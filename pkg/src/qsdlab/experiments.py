"""Declarative (sigma, delta, grid) sweeps: plan loading and validation, the
per-point pipeline, CSV output and log-log scaling fits."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import DegenerateFit, MapValidationError, PlanInvalid, QsdLabError
from .maps import BUILTINS, NoiseModel, builtin, check_phase
from .observables import base_lyapunov, bv_distance, gap_time, lyapunov
from .operators import assemble_annealed, assemble_conditioned, assemble_Q, grid_for
from .spectral import diagnostic_norms, q_fixed_point, qsd_eigenpair, reconstruct_rho, stationary_density

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OBSERVABLES = ("gap", "qsd", "reconstruct", "lyapunov", "diagnostics")
DEFAULT_OBSERVABLES = ("gap", "qsd", "reconstruct", "lyapunov")
MIN_CELLS = 4096


# ---------------------------------------------------------------- plan


def auto_grid(sigma: float, delta: float, floor: int = MIN_CELLS, ratio: int = 4) -> int:
    """Smallest power of two >= ``floor`` with h <= min(sigma, delta) / ratio."""
    scale = min(s for s in (sigma, delta) if s > 0) if max(sigma, delta) > 0 else 1.0
    n = floor
    while 1.0 / n > scale / ratio:
        n *= 2
    return n


def _values(spec) -> list[float]:
    """A scalar, a list, or ``{geom = [start, stop, count]}`` / ``{lin = [...]}``."""
    if isinstance(spec, dict):
        if "geom" in spec:
            a, b, c = spec["geom"]
            return [float(v) for v in np.geomspace(a, b, int(c))]
        if "lin" in spec:
            a, b, c = spec["lin"]
            return [float(v) for v in np.linspace(a, b, int(c))]
        raise PlanInvalid(f"unknown range spec {spec}")
    if isinstance(spec, (list, tuple)):
        return [float(v) for v in spec]
    return [float(spec)]


@dataclass
class ExperimentPlan:
    map: str
    points: list                      # (sigma, delta) pairs in run order
    grids: list = field(default_factory=list)   # empty: choose per point
    seeds: list = field(default_factory=lambda: [0])
    observables: tuple = DEFAULT_OBSERVABLES
    output: str | None = None
    workers: int = 1
    map_options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, cfg: dict) -> "ExperimentPlan":
        cfg = dict(cfg)
        if "map" not in cfg:
            raise PlanInvalid("config needs a 'map' entry")
        if "points" in cfg:
            points = [(float(s), float(d)) for s, d in cfg["points"]]
        else:
            if "sigma" not in cfg or "delta" not in cfg:
                raise PlanInvalid("config needs 'points' or both 'sigma' and 'delta'")
            points = [(s, d) for s in _values(cfg["sigma"]) for d in _values(cfg["delta"])]
        grid = cfg.get("grid", cfg.get("n", "auto"))
        grids = [] if grid == "auto" else [int(g) for g in (grid if isinstance(grid, list) else [grid])]
        seeds = cfg.get("seeds", cfg.get("seed", 0))
        seeds = [int(s) for s in (seeds if isinstance(seeds, list) else [seeds])]
        obs = tuple(cfg.get("observables", DEFAULT_OBSERVABLES))
        return cls(str(cfg["map"]), points, grids, seeds, obs, cfg.get("output"), int(cfg.get("workers", 1)),
                   dict(cfg.get("map_options", {})))

    @classmethod
    def from_toml(cls, path, **overrides) -> "ExperimentPlan":
        try:
            with open(path, "rb") as fh:
                cfg = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise PlanInvalid(f"cannot read config {path}: {exc}") from exc
        cfg.update({k: v for k, v in overrides.items() if v is not None})
        if ("sigma" in overrides or "delta" in overrides) and "points" in cfg:
            del cfg["points"]
            cfg.setdefault("sigma", overrides.get("sigma"))
            cfg.setdefault("delta", overrides.get("delta"))
        return cls.from_dict(cfg)

    def tasks(self) -> list[tuple]:
        out = []
        for sigma, delta in self.points:
            ns = self.grids or [auto_grid(sigma, delta)]
            for n in ns:
                for seed in self.seeds:
                    out.append((sigma, delta, n, seed))
        return out

    def validate(self) -> None:
        """Check every point before anything runs; raises PlanInvalid listing all problems."""
        problems = []
        if self.map not in BUILTINS:
            raise PlanInvalid(f"unknown map {self.map!r}; choose from {sorted(BUILTINS)}")
        bad = set(self.observables) - set(OBSERVABLES)
        if bad:
            problems.append(f"unknown observables {sorted(bad)}")
        if not self.points:
            problems.append("no (sigma, delta) points")
        for sigma, delta, n, _ in self.tasks():
            tag = f"(sigma={sigma:g}, delta={delta:g}, n={n})"
            if sigma <= 0 or delta < 0:
                problems.append(f"{tag}: need sigma > 0 and delta >= 0")
                continue
            try:
                model = builtin(self.map, delta, sigma, **self.map_options)
                check_phase(model, sigma)
            except (MapValidationError, ValueError) as exc:
                problems.append(f"{tag}: {exc}")
                continue
            scale = min(sigma, delta) if delta > 0 else sigma
            if n < 16 or 1.0 / n > scale / 4 * (1 + 1e-12):
                problems.append(f"{tag}: cell width must be <= min(sigma, delta)/4")
        if problems:
            raise PlanInvalid("; ".join(problems))


# ---------------------------------------------------------------- rows


@dataclass
class ResultRow:
    map: str
    sigma: float
    delta: float
    n: int
    seed: int
    k: float = math.nan
    cap_hit: str = ""
    lam: float = math.nan
    rho_q_l1: float = math.nan
    rho_q_bv: float = math.nan
    u_q_bv: float = math.nan
    resid_l1: float = math.nan
    resid_bv: float = math.nan
    defect: float = math.nan
    xi: float = math.nan
    xi_finite: float = math.nan
    r: float = math.nan
    a1: float = math.nan
    a2_lower: float = math.nan
    a2_upper: float = math.nan
    a3: float = math.nan
    error: str = ""

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _cell(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(float(v))
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(ResultRow.columns())
    for row in rows:
        cells = [_cell(getattr(row, c)) for c in ResultRow.columns()]
        if math.isfinite(row.k):
            cells[ResultRow.columns().index("k")] = str(int(row.k))
        out.writerow(cells)
    return buf.getvalue()


def read_rows(path) -> list[ResultRow]:
    rows = []
    kinds = {f.name: f.type for f in fields(ResultRow)}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            vals = {}
            for key, text in rec.items():
                if kinds[key] in ("float", float):
                    vals[key] = float(text) if text else math.nan
                elif kinds[key] in ("int", int):
                    vals[key] = int(text)
                else:
                    vals[key] = text
            rows.append(ResultRow(**vals))
    return rows


# ---------------------------------------------------------------- pipeline


def run_point(map_name: str, sigma: float, delta: float, n: int, seed: int,
              observables=DEFAULT_OBSERVABLES, map_options=None) -> tuple[ResultRow, dict]:
    """Assemble, solve and measure one point; errors land in the row, never raise."""
    row = ResultRow(map_name, sigma, delta, n, seed)
    times = {}
    obs = set(observables)
    t0 = time.perf_counter()
    try:
        model = builtin(map_name, delta, sigma, **(map_options or {}))
        noise = NoiseModel(sigma)
        grid = grid_for(model, n)
        gap = gap_time(model, noise)
        row.k, row.cap_hit = gap.k, "yes" if gap.cap_hit else "no"
        times["gap"] = time.perf_counter() - t0

        t = time.perf_counter()
        L = assemble_annealed(model, noise, grid)
        rho = stationary_density(L)
        times["stationary"] = time.perf_counter() - t

        q, R = rho, None
        row.lam = 1.0
        if delta > 0 and obs & {"qsd", "reconstruct", "diagnostics"}:
            t = time.perf_counter()
            R = assemble_conditioned(L)
            qr = qsd_eigenpair(R)
            q, row.lam = qr, qr.eigenvalue
            times["qsd"] = time.perf_counter() - t
        row.rho_q_l1, row.rho_q_bv = bv_distance(rho.density, q.density)

        if "reconstruct" in obs and delta > 0 and not model.fixed_point_in_hole():
            t = time.perf_counter()
            Q = assemble_Q(model, noise, grid, gap.k, L)
            u = q_fixed_point(Q)
            rec = reconstruct_rho(u.density, L, L.hole_weights, gap.k)
            row.u_q_bv = bv_distance(u.density, q.density)[1]
            row.resid_l1, row.resid_bv, row.defect = rec.remainder_l1, rec.remainder_bv, rec.defect
            times["reconstruct"] = time.perf_counter() - t

        if "lyapunov" in obs:
            t = time.perf_counter()
            ly = lyapunov(model, rho.density)
            row.xi, row.xi_finite = ly.xi, ly.finite_part
            row.r = ly.xi - base_lyapunov(model, grid)
            times["lyapunov"] = time.perf_counter() - t

        if "diagnostics" in obs:
            t = time.perf_counter()
            R = R if R is not None else assemble_conditioned(L)
            dg = diagnostic_norms(L, R, q.density, row.lam, seed=seed)
            row.a1, row.a2_lower, row.a2_upper, row.a3 = dg.a1, dg.a2_lower, dg.a2_upper, dg.a3
            times["diagnostics"] = time.perf_counter() - t
    except (QsdLabError, ValueError, ArithmeticError) as exc:
        row.error = f"{type(exc).__name__}: {exc}"
    times["total"] = time.perf_counter() - t0
    return row, times


def _run_task(args):
    return run_point(*args)


def run_plan(plan: ExperimentPlan, write: bool = True) -> list[ResultRow]:
    """Validate, then run every (sigma, delta, n, seed) in plan order."""
    plan.validate()
    jobs = [(plan.map, s, d, n, seed, tuple(plan.observables), plan.map_options) for s, d, n, seed in plan.tasks()]
    if plan.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=plan.workers) as pool:
            results = list(pool.map(_run_task, jobs))
    else:
        results = [_run_task(j) for j in jobs]
    rows = [r for r, _ in results]
    if write and plan.output:
        write_rows(rows, plan.output, timings=[t for _, t in results], plan=plan)
    return rows


def write_rows(rows, path, timings=None, plan: ExperimentPlan | None = None) -> None:
    """CSV of rows (deterministic) plus a ``.meta.json`` sidecar carrying the runtimes."""
    path = Path(path)
    path.write_text(rows_to_csv(rows))
    if timings is not None:
        meta = {"plan": asdict(plan) if plan else None,
                "runtimes": [dict(point=[r.sigma, r.delta, r.n, r.seed], **t) for r, t in zip(rows, timings)]}
        path.with_suffix(".meta.json").write_text(json.dumps(meta, indent=2, default=str) + "\n")


# ---------------------------------------------------------------- fits


@dataclass
class Fit:
    slope: float
    intercept: float
    r2: float


DERIVED = {
    "one_minus_lam": lambda r: 1.0 - r.lam,
    "abs_r": lambda r: abs(r.r),
}


def _column(rows, name):
    get = DERIVED.get(name, lambda r: getattr(r, name) if not isinstance(r, dict) else r[name])
    return np.array([get(r) for r in rows], dtype=float)


def fit_scaling(rows, x: str, y: str) -> Fit:
    """Ordinary least squares of ln y on ln x."""
    if len(rows) < 4:
        raise DegenerateFit(f"need at least 4 rows, got {len(rows)}")
    xs, ys = _column(rows, x), _column(rows, y)
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys)) and np.all(xs > 0) and np.all(ys > 0)):
        raise DegenerateFit("fit columns must be finite and positive")
    lx, ly = np.log(xs), np.log(ys)
    if np.ptp(lx) == 0:
        raise DegenerateFit("no variation in x")
    res = stats.linregress(lx, ly)
    return Fit(float(res.slope), float(res.intercept), float(res.rvalue**2))


def fit_arrays(xs, ys) -> Fit:
    """``fit_scaling`` on bare arrays."""
    return fit_scaling([{"x": a, "y": b} for a, b in zip(xs, ys)], "x", "y")


def sign_changes(values) -> int:
    s = np.sign(np.asarray(values, dtype=float))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))
