"""Scalar observables: gap time, density distances, Lyapunov exponents and the
predicted order of the Lyapunov gap, plus empirical Lasota-Yorke fits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import reach
from .errors import GridMismatch
from .grid import Density, Grid, bv_norm, variation
from .maps import Constant, MapModel, NoiseModel
from .operators import UlamOperator, assemble_deterministic

OVERLAP_EPS = 1e-15


# ---------------------------------------------------------------- gap time


@dataclass
class ReachabilitySweep:
    steps: list = field(default_factory=list)   # steps[j-1] = interval list after j steps
    first_return: int | None = None
    cap: int = 1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(["step", "interval_lo", "interval_hi"])
            for j, intervals in enumerate(self.steps, start=1):
                for a, b in intervals:
                    out.writerow([j, repr(float(a)), repr(float(b))])


@dataclass
class GapTime:
    k: int
    cap: int
    cap_hit: bool
    sweep: ReachabilitySweep


def gap_cap(delta: float) -> int:
    return max(1, math.floor(abs(math.log(delta)))) if delta > 0 else 1


def gap_time(model: MapModel, noise: NoiseModel) -> GapTime:
    """First step n >= 1 at which the noise-inflated images of the hole meet
    the hole in positive measure, capped at floor(|ln delta|)."""
    cap = gap_cap(model.delta)
    sweep = ReachabilitySweep(cap=cap)
    if model.delta <= 0:
        return GapTime(1, cap, True, sweep)
    arcs = model.hole_arcs()
    current = reach.hole_set(model)
    for j in range(1, cap + 1):
        current = reach.step(current, model, noise.sigma)
        sweep.steps.append(current)
        if reach.overlap_measure(current, arcs, model.phase) > OVERLAP_EPS:
            sweep.first_return = j
            return GapTime(j, cap, False, sweep)
    return GapTime(cap, cap, True, sweep)


# ---------------------------------------------------------------- distances


def bv_distance(d1: Density, d2: Density) -> tuple[float, float]:
    """(L1, BV) norms of ``d1 - d2``."""
    if d1.grid != d2.grid:
        raise GridMismatch(f"{d1.grid} vs {d2.grid}")
    diff = d1.values - d2.values
    return float(np.abs(diff).sum() * d1.grid.h), bv_norm(diff, d1.grid)


# ---------------------------------------------------------------- Lyapunov


@dataclass
class Lyapunov:
    xi: float            # -inf when a flat piece carries mass
    finite_part: float   # integral over the complement of flat pieces
    flat_mass: float

    @property
    def divergent(self) -> bool:
        return math.isinf(self.xi)


def cell_log_derivative(pieces, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell integrals of log|f'| over non-flat pieces, and the flat length per cell."""
    h = grid.h
    edges = grid.edges
    logint = np.zeros(grid.n)
    flat = np.zeros(grid.n)
    for p in pieces:
        if p.hi <= p.lo:
            continue
        i0 = max(int(np.floor((p.lo - grid.lo) / h)), 0)
        i1 = min(int(np.ceil((p.hi - grid.lo) / h)), grid.n)
        a = np.maximum(edges[i0:i1], p.lo)
        b = np.minimum(edges[i0 + 1:i1 + 1], p.hi)
        ok = b > a
        if isinstance(p, Constant):
            flat[i0:i1][ok] += (b - a)[ok]
        elif p.affine:
            logint[i0:i1][ok] += math.log(abs(p.slope)) * (b - a)[ok]
        else:
            for j in np.flatnonzero(ok):
                logint[i0 + j] += p.log_deriv_integral(float(a[j]), float(b[j]))
    return logint, flat


def lyapunov(model: MapModel, d: Density, base: bool = False) -> Lyapunov:
    """Integral of log|f_delta'| against the piecewise-constant density ``d``."""
    pieces = model.base_pieces if base else model.pieces
    logint, flat = cell_log_derivative(pieces, d.grid)
    v = d.values
    finite = float(np.dot(v, logint))
    flat_mass = float(np.dot(v, flat))
    xi = -math.inf if flat_mass > 0 else finite
    return Lyapunov(xi, finite, flat_mass)


def base_lyapunov(model: MapModel, grid: Grid, tol: float = 1e-13, budget: int = 100_000) -> float:
    """Lyapunov exponent of the unperturbed map against its Ulam invariant density."""
    D = assemble_deterministic(model, grid, base=True)
    d = np.ones(grid.n) / grid.length
    for _ in range(budget):
        nxt = D.matvec(d)
        if np.abs(nxt - d).sum() * grid.h <= tol:
            d = nxt
            break
        d = nxt
    return lyapunov(model, Density(d, grid), base=True).xi


def lyapunov_gap_prediction(model: MapModel, noise: NoiseModel, k: int | None = None) -> dict:
    """Order-of-magnitude terms for the Lyapunov gap (no constants).

    p = 1:  l d^2 |ln d| / s + s |ln s|
    p > 1:  p d + (1 + p d) (l d^2 |ln d| / (lam^(p-1) s) + s |ln s| + d |ln d|)
    """
    p = model.period if k is None else k
    if p is None:
        raise ValueError("the sink centre is not periodic; pass the period explicitly")
    l, d, s = model.exponent, model.delta, noise.sigma
    lam = model.lambda_min
    ld = abs(math.log(d)) if d > 0 else 0.0
    ls = abs(math.log(s)) if s > 0 else 0.0
    if p == 1:
        terms = {"sink": l * d * d * ld / s, "noise": s * ls}
    else:
        inner = l * d * d * ld / (lam ** (p - 1) * s) + s * ls + d * ld
        terms = {"period": p * d, "sink": (1 + p * d) * l * d * d * ld / (lam ** (p - 1) * s),
                 "noise": (1 + p * d) * s * ls, "hole": (1 + p * d) * d * ld}
        terms["total"] = p * d + (1 + p * d) * inner
        return terms
    terms["total"] = terms["sink"] + terms["noise"]
    return terms


# ---------------------------------------------------------------- Lasota-Yorke


@dataclass
class LasotaYorkeFit:
    A: float
    B: float
    gamma: float
    holds: bool


def lasota_yorke_fit(op: UlamOperator, phis: np.ndarray, steps: int = 20) -> LasotaYorkeFit:
    """Fit Var(op^n phi) <= A gamma^n Var(phi) + B |phi|_1 over ``n <= steps``.

    B is the largest late-time ratio Var(op^steps phi) / |phi|_1; gamma comes
    from a log-linear fit to the worst excess variation per step, and A is
    then the smallest constant making the inequality hold on the data.
    """
    grid = op.grid
    phis = np.asarray(phis, dtype=float)
    if phis.ndim == 1:
        phis = phis[:, None]
    l1 = np.abs(phis).sum(axis=0) * grid.h
    v0 = np.array([variation(phis[:, j], grid.circle) for j in range(phis.shape[1])])
    var = [v0]
    x = phis
    for _ in range(steps):
        x = op.matvec(x)
        var.append(np.array([variation(x[:, j], grid.circle) for j in range(x.shape[1])]))
    var = np.array(var)                      # (steps + 1, trials)
    B = float((var[-1] / l1).max())
    excess = np.clip((var - B * l1) / np.where(v0 > 0, v0, 1.0), 0.0, None).max(axis=1)
    pos = np.flatnonzero(excess > 0)
    if pos.size >= 2:
        slope = np.polyfit(pos, np.log(excess[pos]), 1)[0]
        gamma = float(min(math.exp(slope), 1.0))
    else:
        gamma = 0.0
    n = np.arange(steps + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(excess > 0, excess / np.power(gamma, n), 0.0)
    A = float(np.nanmax(ratios)) if pos.size else 0.0
    bound = A * np.power(gamma, n)[:, None] * v0[None, :] + B * l1[None, :]
    holds = bool(np.all(var <= bound * (1 + 1e-9) + 1e-12))
    return LasotaYorkeFit(A, B, gamma, holds)
