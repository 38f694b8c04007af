"""Leading eigenpairs of Ulam operators by power iteration, the fixed point of
the composite operator, reconstruction of the stationary density from it, and
the three diagnostic norms of the perturbation argument."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NoConvergence, SingularResolvent, ZeroOperator
from .grid import Density, Grid, bv_norm, column_variation, variation
from .operators import UlamOperator

log = logging.getLogger(__name__)

TOL = 1e-12
BUDGET = 1_000_000


@dataclass
class SpectralResult:
    eigenvalue: float
    density: Density
    residual: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)

    def to_record(self) -> dict:
        return {"eigenvalue": self.eigenvalue, "residual": self.residual,
                "iterations": self.iterations, "converged": self.converged}


def format_result(result: SpectralResult) -> str:
    """CSV of ``cell_center,density`` preceded by ``# key=value`` header lines."""
    g = result.density.grid
    lines = [f"# {key}={val!r}" for key, val in result.to_record().items()]
    lines.append(f"# grid={json.dumps([g.n, g.lo, g.hi, g.circle])}")
    lines.append("cell_center,density")
    lines += [f"{c!r},{v!r}" for c, v in zip(g.centers.tolist(), result.density.values.tolist())]
    return "\n".join(lines) + "\n"


def write_result(result: SpectralResult, path) -> None:
    Path(path).write_text(format_result(result))


def read_result(path) -> SpectralResult:
    meta, rows = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, val = line[1:].strip().split("=", 1)
            meta[key] = val
        elif line and not line.startswith("cell_center"):
            rows.append(float(line.split(",")[1]))
    n, lo, hi, circle = json.loads(meta["grid"])
    grid = Grid(n, lo, hi, circle)
    return SpectralResult(float(meta["eigenvalue"]), Density(np.array(rows), grid), float(meta["residual"]),
                          int(meta["iterations"]), meta["converged"] == "True")


def _power(op: UlamOperator, start: np.ndarray, tol: float, budget: int, fixed_one: bool) -> SpectralResult:
    h = op.grid.h
    d = start / (start.sum() * h)
    history = []
    lam = 1.0
    for it in range(1, budget + 1):
        out = op.matvec(d)
        mass = out.sum() * h
        if not mass > 0:
            raise ZeroOperator("all mass is lost in one step; the hole swallows everything reachable")
        lam = 1.0 if fixed_one else mass
        res = np.abs(out - lam * d).sum() * h
        history.append(res)
        d = np.maximum(out / mass, 0.0)
        if res <= tol:
            return SpectralResult(float(lam), Density(d, op.grid), float(res), it, True, history)
    result = SpectralResult(float(lam), Density(d, op.grid), float(history[-1]), budget, False, history)
    raise NoConvergence(f"power iteration did not reach {tol:g} in {budget} steps "
                        f"(last residual {history[-1]:.3g})", result)


def stationary_density(L: UlamOperator, tol: float = TOL, budget: int = BUDGET, start=None) -> SpectralResult:
    """Fixed point of the annealed operator, by power iteration from the uniform density."""
    if L.kind not in ("annealed", "deterministic"):
        raise ValueError(f"expected an annealed operator, got {L.kind}")
    d0 = np.ones(L.n) if start is None else np.asarray(start, dtype=float)
    return _power(L, d0, tol, budget, fixed_one=True)


def qsd_eigenpair(R: UlamOperator, tol: float = TOL, budget: int = BUDGET, start=None) -> SpectralResult:
    """Leading eigenvalue and L1-normalized eigenvector of the conditioned operator."""
    if R.kind not in ("conditioned", "annealed"):
        raise ValueError(f"expected a conditioned operator, got {R.kind}")
    d0 = np.ones(R.n) if start is None else np.asarray(start, dtype=float)
    return _power(R, d0, tol, budget, fixed_one=False)


def q_fixed_point(Q: UlamOperator, tol: float = TOL, budget: int = BUDGET, start=None) -> SpectralResult:
    """Fixed point u of the composite operator (which conserves mass)."""
    d0 = np.ones(Q.n) if start is None else np.asarray(start, dtype=float)
    return _power(Q, d0, tol, budget, fixed_one=True)


@dataclass
class Reconstruction:
    density: Density          # h / |h|_1
    defect: float             # |L h - h|_1 with h L1-normalized
    remainder: Density        # sum_j L^j(1_H u), unnormalized
    remainder_l1: float
    remainder_var: float
    remainder_bv: float


def reconstruct_rho(u: Density, L: UlamOperator, weights, k: int) -> Reconstruction:
    """Rebuild the stationary density from the composite fixed point.

    With ``u = Q u`` the function ``h = u + sum_{j=1}^{k-1} L^j(1_H u)`` is
    L-invariant; for ``k = 1`` the sum is empty and ``h = u``.
    """
    w = np.asarray(weights, dtype=float)
    grid = u.grid
    x = w * u.values
    rem = np.zeros_like(x)
    for _ in range(k - 1):
        x = L.matvec(x)
        rem += x
    hvals = u.values + rem
    hd = Density(hvals, grid).normalized()
    defect = float(np.abs(L.matvec(hd.values) - hd.values).sum() * grid.h)
    var = variation(rem, grid.circle)
    l1 = float(np.abs(rem).sum() * grid.h)
    return Reconstruction(hd, defect, Density(rem, grid), l1, var, var + l1)


# ---------------------------------------------------------------- diagnostics


@dataclass
class Diagnostics:
    a1: float
    a2_lower: float
    a2_upper: float
    a3: float


def haar_probes(grid: Grid, centers=(), per_scale: int = 64) -> np.ndarray:
    """Columns are indicator blocks and Haar wavelets at dyadic scales.

    Positions are spread evenly over the phase, plus blocks centred on each
    point in ``centers`` (the hole, typically).
    """
    n = grid.n
    cols = []
    width = 1
    while 2 * width <= n:
        step = max(1, n // per_scale)
        starts = set(range(0, n, step))
        for c in centers:
            j = int(grid.cell_of(c))
            starts.update({(j - width) % n, (j - width // 2) % n})
        for s in sorted(starts):
            idx = (s + np.arange(2 * width)) % n
            block = np.zeros(n)
            block[idx[:width]] = 1.0
            cols.append(block.copy())
            block[idx[width:]] = -1.0
            cols.append(block)
        width *= 2
    return np.array(cols).T


def _batch_bv(m: np.ndarray, grid: Grid) -> np.ndarray:
    return column_variation(m, grid.circle) + np.abs(m).sum(axis=0) * grid.h


def _a2_upper(L: UlamOperator, scale: np.ndarray, block: int = 256) -> float:
    # M = L diag(scale).  Any step function is c*1 + sum_j jump_j * 1_[x_j, 1),
    # so |M phi|_BV <= C (|c| + Var phi) <= 2 C |phi|_BV with C the largest BV
    # image of the constant and of the step functions 1_[x_j, 1).
    grid = L.grid
    mat = L.matrix.tocsc()
    n = grid.n
    running = np.zeros(n)
    worst = 0.0
    for hi in range(n, 0, -block):
        lo = max(0, hi - block)
        cols = mat[:, lo:hi].toarray() * scale[lo:hi]
        tails = np.cumsum(cols[:, ::-1], axis=1)[:, ::-1] + running[:, None]
        worst = max(worst, float(_batch_bv(tails, grid).max()))
        running = tails[:, 0]
    return 2.0 * worst


def _a1(T: UlamOperator, trials: int, seed: int, tol: float, budget: int) -> float:
    grid = T.grid
    n = grid.n
    rng = np.random.default_rng(seed)
    b = np.zeros((n, trials))
    for t in range(trials):
        jumps = np.sort(rng.choice(n, size=rng.integers(1, 33), replace=False))
        levels = rng.standard_normal(jumps.size)
        seg = np.searchsorted(jumps, np.arange(n), side="right") - 1
        b[:, t] = levels[seg]
    b -= b.mean(axis=0)
    x = b.copy()
    term = b.copy()
    scale = np.abs(b).sum(axis=0) * grid.h
    for _ in range(budget):
        term = T.matvec(term)
        term -= term.mean(axis=0)   # project out drift caused by round-off
        x += term
        size = np.abs(term).sum(axis=0) * grid.h
        if not np.all(np.isfinite(size)):
            break
        if np.all(size <= tol * scale):
            return float((_batch_bv(x, grid) / _batch_bv(b, grid)).max())
    raise SingularResolvent("Neumann series for (I - T)^-1 on mean-zero functions did not converge")


def diagnostic_norms(L: UlamOperator, R: UlamOperator, q: Density, lam: float, T: UlamOperator | None = None,
                     trials: int = 50, seed: int = 0, tol: float = 1e-12, budget: int = 200_000) -> Diagnostics:
    """a1: resolvent size on mean-zero functions; a2: |T - R/lam| (probe lower
    estimate and analytic upper bound); a3: |q|_BV.  ``T`` defaults to ``L``."""
    T = L if T is None else T
    grid = L.grid
    a3 = q.bv()
    w = R.hole_weights
    scale = 1.0 - (1.0 - w) / lam    # (T - R/lam) = L diag(scale) when T = L
    if T is L:
        probes = haar_probes(grid, centers=[L.model.x0] if L.model.delta > 0 else [])
        images = L.matvec(probes * scale[:, None])
        a2_lower = float((_batch_bv(images, grid) / _batch_bv(probes, grid)).max())
        a2_upper = 0.0 if np.all(scale == 0) else _a2_upper(L, scale)
    else:
        probes = haar_probes(grid, centers=[L.model.x0])
        images = T.matvec(probes) - R.matvec(probes) / lam
        a2_lower = float((_batch_bv(images, grid) / _batch_bv(probes, grid)).max())
        a2_upper = float("nan")
    a1 = _a1(T, trials, seed, tol, budget)
    return Diagnostics(a1, a2_lower, a2_upper, a3)
