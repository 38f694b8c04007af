"""Ulam discretizations of the deterministic, annealed, conditioned and composite
transfer operators.

Entry ``(i, j)`` of an operator matrix is the probability that a point drawn
uniformly from cell ``j`` lands in cell ``i`` after one step.  Because the grid
is uniform the same matrix maps cell densities to cell densities.

Each cell is cut into chords on which the map is affine (exactly, for affine
pieces; by chord interpolation on a refined sub-partition otherwise).  The
image of a uniform density on a chord is uniform on an interval, and its
convolution with the uniform noise kernel is integrated against every target
cell in closed form.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import GridMismatch, GridTooCoarse
from .grid import Density, Grid
from .maps import MapModel, NoiseModel

log = logging.getLogger(__name__)

SUBCHORDS = 16
MAX_SUBCHORDS = 1024
CHORD_TOL = 1e-6    # chord-to-curve distance, in units of sigma
_CHUNK = 4_000_000
MASS_TOL = 1e-10


def grid_for(model: MapModel, n: int) -> Grid:
    ph = model.phase
    return Grid(n, ph.lo, ph.hi, circle=ph.circle)


def check_resolution(grid: Grid, sigma: float, delta: float):
    h = grid.h
    if h > sigma / 4:
        raise GridTooCoarse(f"cell width {h:.3g} exceeds sigma/4 = {sigma / 4:.3g}")
    if delta > 0 and h > delta / 4:
        raise GridTooCoarse(f"cell width {h:.3g} exceeds delta/4 = {delta / 4:.3g}")


def _check_grid(model: MapModel, grid: Grid):
    ph = model.phase
    if grid.circle != ph.circle or (grid.lo, grid.hi) != (ph.lo, ph.hi):
        raise GridMismatch(f"grid {grid} does not tile the phase {ph}")


# ---------------------------------------------------------------- chords


def _subdivisions(piece, h: float, chord_tol: float, sub: int) -> int:
    """Sub-chords per cell so that chord interpolation is off by at most ``chord_tol``."""
    x = np.linspace(piece.lo, piece.hi, 257)[1:-1]
    with np.errstate(all="ignore"):
        curv = np.abs(piece.deriv2(x))
    curv = float(np.max(curv[np.isfinite(curv)], initial=0.0))
    if curv == 0.0:
        return sub
    step = np.sqrt(8.0 * chord_tol / curv)
    return int(np.clip(np.ceil(h / step), sub, MAX_SUBCHORDS))


def chords(pieces, grid: Grid, sub: int = SUBCHORDS, chord_tol: float = 0.0):
    """Cut the phase into affine chords.

    Affine pieces are cut only at cell edges.  Curved pieces are cut into
    ``sub`` chords per cell, or more when ``chord_tol`` (a bound on the
    distance between chord and curve) asks for it.  Returns ``(col, weight,
    ya, yb)``: source cell, fraction of the cell's mass, and the lifted image
    of the chord's endpoints.
    """
    pts = [grid.edges, np.array([p.lo for p in pieces] + [grid.hi])]
    h = grid.h
    for p in pieces:
        if p.affine:
            continue
        k = _subdivisions(p, h, chord_tol, sub) if chord_tol > 0 else sub
        i0 = int(np.floor((p.lo - grid.lo) / h))
        i1 = int(np.ceil((p.hi - grid.lo) / h))
        fine = grid.lo + h * (np.arange(i0 * k, i1 * k + 1) / k)
        pts.append(fine[(fine > p.lo) & (fine < p.hi)])
    x = np.unique(np.concatenate(pts))
    x = x[(x >= grid.lo) & (x <= grid.hi)]
    a, b = x[:-1], x[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    mid = 0.5 * (a + b)
    col = np.clip(np.floor((mid - grid.lo) / h).astype(np.int64), 0, grid.n - 1)
    los = np.array([p.lo for p in pieces])
    pidx = np.clip(np.searchsorted(los, mid, side="right") - 1, 0, len(pieces) - 1)
    ya = np.empty_like(a)
    yb = np.empty_like(b)
    for k in np.unique(pidx):
        m = pidx == k
        ya[m] = pieces[k].value(a[m])
        yb[m] = pieces[k].value(b[m])
    return col, (b - a) / h, ya, yb


def _fold(rows, grid: Grid, vals):
    if grid.circle:
        return np.mod(rows, grid.n), vals
    inside = (rows >= 0) & (rows < grid.n)
    leaked = float(vals[~inside].sum())
    if leaked > 0:
        log.warning("dropping %.3g of probability that left the interval", leaked)
    return rows[inside], vals[inside]


def _expand(col, w, lo_y, hi_y, grid: Grid, sigma: float):
    """Enumerate (chord, target cell) pairs covering ``[lo_y - sigma, hi_y + sigma]``."""
    h = grid.h
    m_lo = np.floor((lo_y - sigma - grid.lo) / h).astype(np.int64)
    m_hi = np.floor((hi_y + sigma - grid.lo) / h).astype(np.int64)
    counts = m_hi - m_lo + 1
    total = int(counts.sum())
    starts = np.repeat(np.cumsum(counts) - counts, counts)
    m = np.repeat(m_lo, counts) + (np.arange(total) - starts)
    pick = np.repeat(np.arange(col.size), counts)
    return pick, m


def _kernel_mass(y, c, c2, sigma):
    """Probability that ``y + U[-sigma, sigma]`` lands in ``[c, c2]``."""
    return np.maximum(0.0, np.minimum(y + sigma, c2) - np.maximum(y - sigma, c)) / (2 * sigma)


def _mean_kernel_mass(lo, hi, c, c2, sigma):
    """Average of :func:`_kernel_mass` for ``y`` uniform on ``[lo, hi]``.

    The integrand is piecewise linear with kinks at ``c - sigma < c2 - sigma <
    c + sigma < c2 + sigma`` (cells narrower than 2 sigma), so trapezoids
    between kinks are exact and stay accurate for very short chords.
    """
    knots = [lo]
    for k in (c - sigma, c2 - sigma, c + sigma, c2 + sigma):
        knots.append(np.clip(k, lo, hi))
    knots.append(hi)
    span = hi - lo
    flat = span <= 0
    safe = np.where(flat, 1.0, span)
    acc = np.zeros_like(lo)
    k_prev = _kernel_mass(knots[0], c, c2, sigma)
    for s, e in zip(knots[:-1], knots[1:]):
        k_next = _kernel_mass(e, c, c2, sigma)
        acc += (e - s) / safe * 0.5 * (k_prev + k_next)
        k_prev = k_next
    return np.where(flat, _kernel_mass(lo, c, c2, sigma), acc)


def _noisy_matrix(col, w, ya, yb, grid: Grid, sigma: float) -> sp.csr_matrix:
    lo_y, hi_y = np.minimum(ya, yb), np.maximum(ya, yb)
    h = grid.h
    per = np.floor((hi_y - lo_y + 2 * sigma) / h) + 2
    rows_all, cols_all, vals_all = [], [], []
    bounds = np.searchsorted(np.cumsum(per), np.arange(_CHUNK, per.sum() + _CHUNK, _CHUNK))
    start = 0
    for stop in list(bounds) + [col.size]:
        stop = min(int(stop), col.size)
        if stop <= start:
            continue
        sl = slice(start, stop)
        pick, m = _expand(col[sl], w[sl], lo_y[sl], hi_y[sl], grid, sigma)
        c = grid.lo + m * h
        c2 = grid.lo + (m + 1) * h
        vals = w[sl][pick] * _mean_kernel_mass(lo_y[sl][pick], hi_y[sl][pick], c, c2, sigma)
        rows, vals = _fold(m, grid, vals)
        cols = col[sl][pick] if grid.circle else col[sl][pick][(m >= 0) & (m < grid.n)]
        nz = vals > 0
        rows_all.append(rows[nz])
        cols_all.append(cols[nz])
        vals_all.append(vals[nz])
        start = stop
    mat = sp.coo_matrix((np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
                        shape=(grid.n, grid.n))
    return mat.tocsr()


def _deterministic_matrix(col, w, ya, yb, grid: Grid) -> sp.csr_matrix:
    lo_y, hi_y = np.minimum(ya, yb), np.maximum(ya, yb)
    h = grid.h
    pick, m = _expand(col, w, lo_y, hi_y, grid, 0.0)
    c = grid.lo + m * h
    c2 = grid.lo + (m + 1) * h
    lo_p, hi_p = lo_y[pick], hi_y[pick]
    span = hi_p - lo_p
    point = span <= 0
    frac = np.where(point, ((lo_p >= c) & (lo_p < c2)).astype(float),
                    np.clip(np.minimum(hi_p, c2) - np.maximum(lo_p, c), 0, None) / np.where(point, 1.0, span))
    vals = w[pick] * frac
    rows, vals = _fold(m, grid, vals)
    cols = col[pick] if grid.circle else col[pick][(m >= 0) & (m < grid.n)]
    nz = vals > 0
    return sp.coo_matrix((vals[nz], (rows[nz], cols[nz])), shape=(grid.n, grid.n)).tocsr()


# ---------------------------------------------------------------- operator type


@dataclass(frozen=True, eq=False)
class UlamOperator:
    """Finite-rank transfer operator on a uniform grid.

    ``kind`` is one of ``deterministic``, ``annealed``, ``conditioned`` or
    ``composite``.  Composite operators keep a reference to the annealed
    operator and apply ``L^k`` to hole mass by repeated multiplication.
    """

    kind: str
    grid: Grid
    matrix: sp.csr_matrix | None
    model: MapModel
    sigma: float
    hole_weights: np.ndarray
    base: "UlamOperator | None" = None
    k: int = 1
    _hole_block: np.ndarray | None = field(default=None, repr=False)
    _hole_cols: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind != "composite":
            return self.matrix @ v
        w = self.hole_weights if v.ndim == 1 else self.hole_weights[:, None]
        out = self.base.matrix @ ((1.0 - w) * v)
        if self._hole_block is not None:
            out = out + self._hole_block @ (w * v)[self._hole_cols]
        else:
            x = w * v
            for _ in range(self.k):
                x = self.base.matrix @ x
            out = out + x
        return out

    def rmatvec(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind != "composite":
            return self.matrix.T @ v
        w = self.hole_weights
        y = v
        for _ in range(self.k):
            y = self.base.matrix.T @ y
        return (1.0 - w) * (self.base.matrix.T @ v) + w * y

    def column_sums(self) -> np.ndarray:
        return self.rmatvec(np.ones(self.n))

    def power_apply(self, v, times: int):
        for _ in range(times):
            v = self.matvec(v)
        return v

    def to_sparse(self) -> sp.csr_matrix:
        if self.kind != "composite":
            return self.matrix
        lw = self.base.matrix @ sp.diags(1.0 - self.hole_weights)
        cols = np.flatnonzero(self.hole_weights > 0)
        block = self._hole_block if self._hole_block is not None else self._powers_of_columns(cols)
        hole = sp.csr_matrix((block * self.hole_weights[cols]))
        hole = sp.csr_matrix((hole.data, hole.indices, hole.indptr), shape=(self.n, cols.size))
        scatter = sp.csr_matrix((np.ones(cols.size), (np.arange(cols.size), cols)), shape=(cols.size, self.n))
        return (lw + hole @ scatter).tocsr()

    def _powers_of_columns(self, cols) -> np.ndarray:
        e = np.zeros((self.n, cols.size))
        e[cols, np.arange(cols.size)] = 1.0
        for _ in range(self.k):
            e = self.base.matrix @ e
        return e


# ---------------------------------------------------------------- assembly


def assemble_annealed(model: MapModel, noise: NoiseModel, grid: Grid, sub: int = SUBCHORDS) -> UlamOperator:
    """Noisy transfer operator L: push through f_delta, then smear by U[-sigma, sigma]."""
    _check_grid(model, grid)
    if noise.sigma <= 0:
        raise ValueError("the annealed operator needs sigma > 0; use assemble_deterministic")
    check_resolution(grid, noise.sigma, model.delta)
    col, w, ya, yb = chords(model.pieces, grid, sub, CHORD_TOL * noise.sigma)
    mat = _noisy_matrix(col, w, ya, yb, grid, noise.sigma)
    weights = grid.overlap_fractions(model.hole_arcs())
    return UlamOperator("annealed", grid, mat, model, noise.sigma, weights)


def assemble_deterministic(model: MapModel, grid: Grid, base: bool = False, sub: int = SUBCHORDS) -> UlamOperator:
    """Classical Ulam matrix of f_delta (or of the unmodified map when ``base``)."""
    _check_grid(model, grid)
    pieces = model.base_pieces if base else model.pieces
    col, w, ya, yb = chords(pieces, grid, sub)
    mat = _deterministic_matrix(col, w, ya, yb, grid)
    weights = grid.overlap_fractions(model.hole_arcs())
    return UlamOperator("deterministic", grid, mat, model, 0.0, weights)


def hole_mask(op: UlamOperator) -> np.ndarray:
    """Overlap fraction of every cell with the hole."""
    return op.grid.overlap_fractions(op.model.hole_arcs())


def assemble_conditioned(L: UlamOperator, weights=None) -> UlamOperator:
    """R(phi) = L(1_{outside hole} phi): scale column j by the part of cell j outside the hole."""
    if L.kind != "annealed":
        raise ValueError("conditioning applies to the annealed operator")
    w = L.hole_weights if weights is None else np.asarray(weights, dtype=float)
    mat = (L.matrix @ sp.diags(1.0 - w)).tocsr()
    mat.eliminate_zeros()
    return UlamOperator("conditioned", L.grid, mat, L.model, L.sigma, w)


def assemble_Q(model: MapModel, noise: NoiseModel, grid: Grid, k: int, L: UlamOperator | None = None,
               block_limit: int = 5_000_000) -> UlamOperator:
    """Q(phi) = L^k(1_H phi) + R(1_{H^c} phi) = L^k(1_H phi) + L(1_{H^c} phi)."""
    if k < 1:
        raise ValueError("gap time must be >= 1")
    if L is None:
        L = assemble_annealed(model, noise, grid)
    w = L.hole_weights
    cols = np.flatnonzero(w > 0)
    Q = UlamOperator("composite", L.grid, None, L.model, L.sigma, w, base=L, k=int(k))
    if grid.n <= 2048 or cols.size * grid.n <= block_limit:
        block = Q._powers_of_columns(cols)
        Q = UlamOperator("composite", L.grid, None, L.model, L.sigma, w, base=L, k=int(k),
                         _hole_block=block, _hole_cols=cols)
    return Q


def apply(op: UlamOperator, d: Density) -> Density:
    """Push a density through ``op``; negative round-off is clamped."""
    if d.grid != op.grid:
        raise GridMismatch(f"operator grid {op.grid} vs density grid {d.grid}")
    out = op.matvec(d.values)
    worst = float(out.min()) if out.size else 0.0
    if worst < -1e-14:
        log.warning("clamping negative density value %.3g", worst)
    return Density(np.maximum(out, 0.0), op.grid)


def export_triplets(op: UlamOperator, path) -> int:
    """Write ``row col value`` lines (one nonzero per line); returns the entry count."""
    coo = op.to_sparse().tocoo()
    order = np.lexsort((coo.row, coo.col))
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{int(r)} {int(c)} {float(v)!r}\n")
    return int(coo.nnz)


def read_triplets(path, n: int) -> sp.csr_matrix:
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return sp.csr_matrix((n, n))
    return sp.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, n)).tocsr()
