"""Trajectory simulation of the noisy map: occupation histograms of a single
orbit and a constant-population killed ensemble for the conditioned law.

Noise comes from a Philox counter-based generator, so a run is a pure
function of ``(seed, SimConfig)``.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .errors import Extinction
from .grid import Density, Grid
from .maps import Affine, Constant, MapModel, NoiseModel, PowerProfile

AFFINE, CONSTANT, POWER = 0, 1, 2
COVERAGE_MIN = 0.10


@dataclass(frozen=True)
class SimConfig:
    seed: int
    steps: int
    burn_in: int = 0
    ensemble_size: int = 0
    kill_on: bool = False
    chunk: int = 1 << 20
    batches: int = 50

    def __post_init__(self):
        if not (self.steps > self.burn_in >= 0):
            raise ValueError("need steps > burn_in >= 0")
        if self.kill_on and self.ensemble_size < 100:
            raise ValueError("killed ensembles need at least 100 particles")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass
class SimResult:
    density: Density
    samples: int
    coverage: float
    cell_se: np.ndarray = field(repr=False)        # batch-means standard error per cell
    escape_rate: float = 0.0
    survival: float = 1.0                          # mean survival fraction per step
    survival_se: float = 0.0
    kills: int = 0
    log_derivative_mean: float = float("nan")      # finite part of the Birkhoff average of log|f'|
    zero_derivative_hits: int = 0
    elapsed: float = 0.0
    config: SimConfig | None = None

    @property
    def non_ergodic_suspect(self) -> bool:
        return self.coverage < COVERAGE_MIN

    def metadata(self) -> dict:
        meta = {k: v for k, v in asdict(self.config).items()} if self.config else {}
        meta.update(samples=self.samples, coverage=self.coverage, escape_rate=self.escape_rate,
                    survival=self.survival, survival_se=self.survival_se, kills=self.kills,
                    log_derivative_mean=self.log_derivative_mean,
                    zero_derivative_hits=self.zero_derivative_hits,
                    non_ergodic_suspect=self.non_ergodic_suspect, elapsed_seconds=self.elapsed)
        return meta


def write_histogram(result: SimResult, path) -> Path:
    """Write ``cell_center,density`` CSV plus a ``.meta.json`` sidecar; returns the sidecar path."""
    path = Path(path)
    g = result.density.grid
    with open(path, "w") as fh:
        fh.write("cell_center,density\n")
        for c, v in zip(g.centers.tolist(), result.density.values.tolist()):
            fh.write(f"{c!r},{v!r}\n")
    side = path.with_suffix(".meta.json")
    side.write_text(json.dumps(result.metadata(), indent=2, sort_keys=True) + "\n")
    return side


# ---------------------------------------------------------------- compiled kernels


def piece_table(model: MapModel):
    """Pack the pieces into arrays for the compiled kernels, or None if some piece is opaque."""
    los = np.array([p.lo for p in model.pieces])
    kind = np.empty(len(model.pieces), dtype=np.int64)
    par = np.zeros((len(model.pieces), 5))
    for i, p in enumerate(model.pieces):
        if isinstance(p, Affine):
            kind[i] = AFFINE
            par[i, :2] = p.slope, p.intercept
        elif isinstance(p, Constant):
            kind[i] = CONSTANT
            par[i, 0] = p.level
        elif isinstance(p, PowerProfile):
            kind[i] = POWER
            par[i] = p.center, p.anchor, p.amp, p.radius, p.exponent
        else:
            return None
    return los, kind, par


@numba.njit(cache=True)
def _eval(x, los, kind, par):
    i = np.searchsorted(los, x, side="right") - 1
    if i < 0:
        i = 0
    k = kind[i]
    if k == AFFINE:
        return par[i, 0] * x + par[i, 1], par[i, 0]
    if k == CONSTANT:
        return par[i, 0], 0.0
    c, anchor, amp, r, l = par[i, 0], par[i, 1], par[i, 2], par[i, 3], par[i, 4]
    t = abs(x - c) / r
    s = 1.0 if x >= c else -1.0
    return anchor + amp * t**l, amp * l / r * t ** (l - 1) * s


@numba.njit(cache=True)
def _reduce(y, circle, lo, hi):
    if circle:
        y = y - math.floor(y)
        if y >= 1.0:
            y = 0.0
        return y
    if y < lo:
        return lo
    if y >= hi:
        return np.nextafter(hi, lo)
    return y


@numba.njit(cache=True)
def _orbit(x, noise, los, kind, par, circle, lo, hi, n, record, counts, stats):
    h = (hi - lo) / n
    for t in range(noise.size):
        y, d = _eval(x, los, kind, par)
        if record:
            j = int((x - lo) / h)
            if j >= n:
                j = n - 1
            counts[j] += 1
            if d == 0.0:
                stats[1] += 1.0
            else:
                stats[0] += math.log(abs(d))
        x = _reduce(y + noise[t], circle, lo, hi)
    return x


@numba.njit(cache=True)
def _move(x, noise, los, kind, par, circle, lo, hi, out):
    for i in range(x.size):
        y, _ = _eval(x[i], los, kind, par)
        out[i] = _reduce(y + noise[i], circle, lo, hi)


def _move_python(model: MapModel, x, w):
    return model.phase.reduce(model.lift(x) + w)


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed))


def _cells(x, grid: Grid):
    return np.clip(((x - grid.lo) / grid.h).astype(np.int64), 0, grid.n - 1)


def _batch_se(batch_counts: np.ndarray, grid: Grid) -> np.ndarray:
    # batch_counts: (batches, n) occupation counts of equal-length batches
    per = batch_counts.sum(axis=1, keepdims=True)
    dens = batch_counts / (per * grid.h)
    b = dens.shape[0]
    return dens.std(axis=0, ddof=1) / math.sqrt(b) if b > 1 else np.zeros(grid.n)


# ---------------------------------------------------------------- single orbit


def simulate_histogram(model: MapModel, noise: NoiseModel, grid: Grid, cfg: SimConfig) -> SimResult:
    """Occupation histogram of one noisy orbit, recorded after ``burn_in`` steps."""
    t0 = time.perf_counter()
    rng = _rng(cfg.seed)
    ph = model.phase
    x = float(rng.uniform(ph.lo, ph.hi))
    table = piece_table(model)
    kept = cfg.steps - cfg.burn_in
    nb = max(1, min(cfg.batches, kept))
    edges = cfg.burn_in + (np.arange(nb + 1) * kept) // nb
    bounds = np.unique(np.concatenate(([0, cfg.steps], edges, np.arange(0, cfg.steps, cfg.chunk))))
    batch_counts = np.zeros((nb, grid.n), dtype=np.int64)
    scratch = np.zeros(grid.n, dtype=np.int64)
    stats = np.zeros(2)
    for a, b in zip(bounds[:-1], bounds[1:]):
        w = rng.uniform(-noise.sigma, noise.sigma, b - a) if noise.sigma > 0 else np.zeros(b - a)
        record = a >= cfg.burn_in
        counts = batch_counts[np.searchsorted(edges, a, side="right") - 1] if record else scratch
        if table is not None:
            x = _orbit(x, w, *table, ph.circle, grid.lo, grid.hi, grid.n, record, counts, stats)
        else:
            x = _orbit_python(model, x, w, grid, record, counts, stats)
    total = batch_counts.sum(axis=0)
    dens = total / (kept * grid.h)
    hits = int(stats[1])
    finite = stats[0] / kept
    return SimResult(Density(dens, grid), kept, float(np.mean(total > 0)), _batch_se(batch_counts, grid),
                     log_derivative_mean=float(finite), zero_derivative_hits=hits,
                     elapsed=time.perf_counter() - t0, config=cfg)


def _orbit_python(model, x, w, grid, record, counts, stats):
    for t in range(w.size):
        if record:
            counts[_cells(np.array([x]), grid)[0]] += 1
            d = float(model.deriv(x))
            if d == 0.0:
                stats[1] += 1
            else:
                stats[0] += math.log(abs(d))
        x = float(model.phase.reduce(model.lift(x) + w[t]))
    return x


# ---------------------------------------------------------------- killed ensemble


def killed_ensemble(model: MapModel, noise: NoiseModel, grid: Grid, cfg: SimConfig) -> SimResult:
    """Constant-population ensemble conditioned on never entering the hole.

    Each step every particle moves; the histogram records the moved positions;
    particles that landed in the hole are then replaced by copies of uniformly
    chosen survivors.  The per-step survival fraction estimates the leading
    eigenvalue of the conditioned operator.
    """
    if not cfg.kill_on:
        raise ValueError("killed_ensemble needs kill_on=True")
    t0 = time.perf_counter()
    rng = _rng(cfg.seed)
    ph = model.phase
    N = cfg.ensemble_size
    x = rng.uniform(ph.lo, ph.hi, N)
    y = np.empty(N)
    table = piece_table(model)
    kept = cfg.steps - cfg.burn_in
    nb = max(1, min(cfg.batches, kept))
    batch_of = np.minimum(((np.arange(kept) * nb) // kept), nb - 1)
    batch_counts = np.zeros((nb, grid.n), dtype=np.int64)
    survival = np.empty(kept)
    kills = 0
    for t in range(cfg.steps):
        w = rng.uniform(-noise.sigma, noise.sigma, N) if noise.sigma > 0 else np.zeros(N)
        if table is not None:
            _move(x, w, *table, ph.circle, ph.lo, ph.hi, y)
        else:
            y = _move_python(model, x, w)
        dead = model.in_hole(y)
        nd = int(dead.sum())
        if t >= cfg.burn_in:
            s = t - cfg.burn_in
            batch_counts[batch_of[s]] += np.bincount(_cells(y, grid), minlength=grid.n)
            survival[s] = 1.0 - nd / N
            kills += nd
        if nd == N:
            raise Extinction(f"every particle entered the hole at step {t}")
        if nd:
            alive = np.flatnonzero(~dead)
            y[dead] = y[alive[rng.integers(0, alive.size, nd)]]
        x, y = y, x
    total = batch_counts.sum(axis=0)
    dens = total / (kept * N * grid.h)
    surv = float(survival.mean())
    chunks = np.array([c.mean() for c in np.array_split(survival, nb)])
    surv_se = float(chunks.std(ddof=1) / math.sqrt(nb)) if nb > 1 else 0.0
    return SimResult(Density(dens, grid), kept * N, float(np.mean(total > 0)), _batch_se(batch_counts, grid),
                     escape_rate=-math.log(surv), survival=surv, survival_se=surv_se, kills=kills,
                     elapsed=time.perf_counter() - t0, config=cfg)


def block_average(d: Density, coarse: Grid) -> Density:
    """Average a density onto a coarser grid whose cell count divides the fine one."""
    if d.grid.n % coarse.n or (d.grid.lo, d.grid.hi, d.grid.circle) != (coarse.lo, coarse.hi, coarse.circle):
        raise ValueError("coarse grid must evenly divide the fine grid")
    return Density(d.values.reshape(coarse.n, -1).mean(axis=1), coarse)
