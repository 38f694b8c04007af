"""Expanding maps with a contracting hole, and their noisy versions.

A map is stored as an ordered tuple of monotone pieces tiling the phase space.
Piece values are *lifted*: on the circle they may leave ``[0, 1)`` and every
consumer reduces them mod 1.  The hole ``B_delta(x0)`` is replaced by a sink
profile ``g`` that matches the base map at ``x0 +- delta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ContinuityViolation, ExpansionViolation, MapValidationError, PhaseLeak

CONTINUITY_TOL = 1e-12
DERIVATIVE_TOL = 1e-6

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(12)


def wrap_diff(d):
    """Reduce a circle displacement to ``[-1/2, 1/2)``."""
    return np.mod(np.asarray(d, dtype=float) + 0.5, 1.0) - 0.5


# ---------------------------------------------------------------- pieces


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float

    affine = False
    constant = False

    def value(self, x):
        raise NotImplementedError

    def deriv(self, x):
        raise NotImplementedError

    def deriv2(self, x):
        raise NotImplementedError

    def log_deriv_integral(self, a: float, b: float) -> float:
        """Integral of log|F'| over ``[a, b]`` (Gauss-Legendre by default)."""
        if b <= a:
            return 0.0
        x = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
        with np.errstate(divide="ignore"):
            vals = np.log(np.abs(self.deriv(x)))
        return float(0.5 * (b - a) * np.dot(_GL_WEIGHTS, vals))

    def restrict(self, lo: float, hi: float) -> "Piece":
        return replace(self, lo=lo, hi=hi)


@dataclass(frozen=True)
class Affine(Piece):
    slope: float = 1.0
    intercept: float = 0.0

    affine = True

    def value(self, x):
        return self.intercept + self.slope * np.asarray(x, dtype=float)

    def deriv(self, x):
        return np.full(np.shape(x), float(self.slope))

    def deriv2(self, x):
        return np.zeros(np.shape(x))

    def log_deriv_integral(self, a, b):
        if b <= a:
            return 0.0
        if self.slope == 0:
            return -math.inf
        return math.log(abs(self.slope)) * (b - a)


@dataclass(frozen=True)
class Constant(Piece):
    level: float = 0.0

    affine = True
    constant = True

    def value(self, x):
        return np.full(np.shape(x), float(self.level))

    def deriv(self, x):
        return np.zeros(np.shape(x))

    def deriv2(self, x):
        return np.zeros(np.shape(x))

    def log_deriv_integral(self, a, b):
        return -math.inf if b > a else 0.0


@dataclass(frozen=True)
class PowerProfile(Piece):
    """``anchor + amp * (|x - center| / radius) ** exponent`` on one side of ``center``."""

    center: float = 0.0
    anchor: float = 0.0
    amp: float = 0.0
    radius: float = 1.0
    exponent: float = 2.0

    def _t(self, x):
        return np.abs(np.asarray(x, dtype=float) - self.center) / self.radius

    def value(self, x):
        return self.anchor + self.amp * self._t(x) ** self.exponent

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        s = np.sign(x - self.center)
        return self.amp * self.exponent / self.radius * self._t(x) ** (self.exponent - 1) * s

    def deriv2(self, x):
        l = self.exponent
        if l == 1:
            return np.zeros(np.shape(x))
        with np.errstate(divide="ignore"):
            return self.amp * l * (l - 1) / self.radius**2 * self._t(x) ** (l - 2)

    def log_deriv_integral(self, a, b):
        if b <= a:
            return 0.0
        if self.amp == 0:
            return -math.inf
        l = self.exponent
        out = math.log(abs(self.amp) * l / self.radius) * (b - a)
        if l != 1:
            # the piece lies on one side of center, so |x - c| / r is monotone in x
            ta, tb = sorted((abs(a - self.center) / self.radius, abs(b - self.center) / self.radius))
            out += (l - 1) * self.radius * (_xlogx_minus_x(tb) - _xlogx_minus_x(ta))
        return out


def _xlogx_minus_x(t: float) -> float:
    return t * math.log(t) - t if t > 0 else 0.0


@dataclass(frozen=True)
class Smooth(Piece):
    """User-supplied branch: value, first and second derivative callables."""

    f: Callable = field(default=None, compare=False)
    df: Callable = field(default=None, compare=False)
    d2f: Callable = field(default=None, compare=False)

    def value(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)

    def deriv(self, x):
        return np.asarray(self.df(np.asarray(x, dtype=float)), dtype=float)

    def deriv2(self, x):
        return np.asarray(self.d2f(np.asarray(x, dtype=float)), dtype=float)


# ---------------------------------------------------------------- model


@dataclass(frozen=True)
class Phase:
    kind: str = "circle"
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in ("circle", "interval"):
            raise ValueError(f"unknown phase kind {self.kind!r}")
        if self.kind == "circle" and (self.lo, self.hi) != (0.0, 1.0):
            raise ValueError("the circle has circumference 1")

    @property
    def circle(self) -> bool:
        return self.kind == "circle"

    def reduce(self, x):
        x = np.asarray(x, dtype=float)
        return np.mod(x, 1.0) if self.circle else x


@dataclass(frozen=True)
class NoiseModel:
    """Uniform additive noise on ``[-sigma, sigma]``."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")

    def pdf(self, w):
        w = np.asarray(w, dtype=float)
        if self.sigma == 0:
            raise ValueError("zero noise has no density")
        return np.where(np.abs(w) <= self.sigma, 0.5 / self.sigma, 0.0)

    def sample(self, rng: np.random.Generator, size=None):
        return rng.uniform(-self.sigma, self.sigma, size=size)


@dataclass(frozen=True)
class MapSpec:
    """Structured description consumed by :func:`build_map`."""

    base: str | Sequence[Piece] = "doubling"
    x0: float = 0.0
    delta: float = 0.01
    sink: str = "power"
    exponent: float = 2.0
    phase: Phase = Phase()
    sigma: float | None = None
    name: str = ""


@dataclass(frozen=True)
class MapModel:
    name: str
    phase: Phase
    pieces: tuple
    base_pieces: tuple
    x0: float
    delta: float
    sink: str
    exponent: float
    period: int | None
    lambda_min: float
    m_sup: float
    c2_bound: float
    nondiff: tuple
    _los: np.ndarray = field(repr=False, compare=False)

    # evaluation -------------------------------------------------------

    def piece_index(self, x) -> np.ndarray:
        x = self.phase.reduce(x)
        idx = np.searchsorted(self._los, x, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def _dispatch(self, x, method: str):
        x = np.asarray(x, dtype=float)
        xr = self.phase.reduce(x)
        idx = self.piece_index(xr)
        out = np.empty(xr.shape)
        for k in np.unique(idx):
            mask = idx == k
            out[mask] = getattr(self.pieces[k], method)(xr[mask])
        return out if out.ndim else float(out)

    def lift(self, x):
        """f_delta(x) before reduction to the phase."""
        return self._dispatch(x, "value")

    def __call__(self, x):
        return self.phase.reduce(self.lift(x)) if np.ndim(x) else float(self.phase.reduce(self.lift(x)))

    def deriv(self, x):
        return self._dispatch(x, "deriv")

    def deriv2(self, x):
        return self._dispatch(x, "deriv2")

    def base(self, x):
        """The unmodified map f, reduced to the phase."""
        x = self.phase.reduce(np.asarray(x, dtype=float))
        idx = np.clip(np.searchsorted([p.lo for p in self.base_pieces], x, side="right") - 1,
                      0, len(self.base_pieces) - 1)
        out = np.empty(x.shape)
        for k in np.unique(idx):
            mask = idx == k
            out[mask] = self.base_pieces[k].value(x[mask])
        out = self.phase.reduce(out)
        return out if out.ndim else float(out)

    # hole geometry ----------------------------------------------------

    def hole_arcs(self) -> list[tuple[float, float]]:
        """``B_delta(x0)`` as disjoint arcs inside the phase."""
        if self.delta <= 0:
            return []
        return [(a, b) for a, b, _ in _split_arc(self.x0 - self.delta, self.x0 + self.delta, self.phase) if b > a]

    def in_hole(self, x):
        x = np.asarray(x, dtype=float)
        if self.delta <= 0:
            return np.zeros(x.shape, dtype=bool)
        d = wrap_diff(x - self.x0) if self.phase.circle else x - self.x0
        return np.abs(d) < self.delta

    @property
    def hole_pieces(self) -> list[Piece]:
        arcs = self.hole_arcs()
        return [p for p in self.pieces if any(p.lo >= a - 1e-15 and p.hi <= b + 1e-15 for a, b in arcs)]

    def fixed_point_in_hole(self, samples: int = 2001) -> bool:
        """True when f_delta has a fixed point in the closed hole."""
        if self.delta <= 0:
            return False
        x = self.x0 + np.linspace(-self.delta, self.delta, samples)
        d = self.lift(x) - self.phase.reduce(x)
        d = wrap_diff(d) if self.phase.circle else d
        return bool(np.any(np.abs(d) < 1e-12) or np.any(np.sign(d[:-1]) * np.sign(d[1:]) < 0))

    def image_range(self, piece: Piece, a: float, b: float) -> tuple[float, float]:
        """Lifted image of ``[a, b]`` (inside ``piece``) under the piece formula."""
        if piece.affine or isinstance(piece, PowerProfile):
            ya, yb = float(piece.value(a)), float(piece.value(b))
            return min(ya, yb), max(ya, yb)
        y = piece.value(np.linspace(a, b, 257))
        return float(y.min()), float(y.max())


# ---------------------------------------------------------------- builders


def doubling_pieces() -> list[Piece]:
    return [Affine(0.0, 1.0, slope=2.0, intercept=0.0)]


def tent_pieces() -> list[Piece]:
    return [Affine(0.0, 0.5, slope=2.0, intercept=0.0), Affine(0.5, 1.0, slope=-2.0, intercept=2.0)]


BASE_MAPS = {"doubling": doubling_pieces, "tent": tent_pieces}

BUILTINS = {
    # flat on B_{delta/2}(0), linear connector out to the hole edge
    "doubling-e1": dict(base="doubling", x0=0.0, sink="plateau"),
    # constant 1 - 2 delta across the hole around the crease
    "tent-e2": dict(base="tent", x0=0.5, sink="flat"),
    "doubling-sink": dict(base="doubling", x0=0.0, sink="power", exponent=2.0),
    "doubling-p3": dict(base="doubling", x0=1.0 / 7.0, sink="power", exponent=2.0),
    "doubling": dict(base="doubling", x0=0.0, sink="none"),
    "tent": dict(base="tent", x0=0.5, sink="none"),
}


def builtin_spec(name: str, delta: float, sigma: float | None = None, **overrides) -> MapSpec:
    try:
        params = dict(BUILTINS[name])
    except KeyError:
        raise MapValidationError(f"unknown builtin map {name!r}; choose from {sorted(BUILTINS)}") from None
    params.update(overrides)
    return MapSpec(delta=delta, sigma=sigma, name=name, **params)


def builtin(name: str, delta: float, sigma: float | None = None, **overrides) -> MapModel:
    return build_map(builtin_spec(name, delta, sigma, **overrides))


def _split_arc(a: float, b: float, phase: Phase):
    """Split a lifted interval into phase segments ``(lo, hi, shift)``; shift maps lifted -> phase."""
    if not phase.circle:
        return [(max(a, phase.lo), min(b, phase.hi), 0.0)] if b >= a else []
    if b - a >= 1.0:
        return [(0.0, 1.0, 0.0)]
    k = math.floor(a)
    if b <= k + 1:
        return [(a - k, b - k, -float(k))]
    return [(a - k, 1.0, -float(k)), (0.0, b - (k + 1), -float(k + 1))]


def _base_piece(pieces, x: float, side: str) -> Piece:
    """Base piece adjacent to ``x`` from the given side (x already in the phase)."""
    for p in pieces:
        if side == "left" and p.lo < x <= p.hi:
            return p
        if side == "right" and p.lo <= x < p.hi:
            return p
    raise MapValidationError(f"no base piece covers {x} from the {side}")


def _base_eval(pieces, phase: Phase, x: float, side: str) -> float:
    xr = float(phase.reduce(x))
    if phase.circle and side == "left" and xr == 0.0:
        xr = 1.0
    if not phase.circle:
        if not phase.lo <= xr <= phase.hi:
            raise MapValidationError(f"{xr} lies outside the interval")
        side = "left" if xr == phase.hi else "right" if xr == phase.lo else side
    return float(_base_piece(pieces, xr, side).value(xr))


def _subtract(piece: Piece, arcs) -> list[Piece]:
    keep = [(piece.lo, piece.hi)]
    for a, b in arcs:
        nxt = []
        for lo, hi in keep:
            if b <= lo or a >= hi:
                nxt.append((lo, hi))
                continue
            if a > lo:
                nxt.append((lo, a))
            if b < hi:
                nxt.append((b, hi))
        keep = nxt
    return [piece.restrict(lo, hi) for lo, hi in keep if hi > lo]


def _sink_pieces(spec: MapSpec, base, phase: Phase) -> list[Piece]:
    x0, d = spec.x0, spec.delta
    f_left = _base_eval(base, phase, x0, "left")
    f_right = _base_eval(base, phase, x0, "right")
    f_minus = _base_eval(base, phase, x0 - d, "right")
    f_plus = _base_eval(base, phase, x0 + d, "left")
    diff = wrap_diff if phase.circle else (lambda v: v)
    amp_left = float(diff(f_minus - f_left))
    amp_right = float(diff(f_plus - f_right))

    out: list[Piece] = []
    if spec.sink == "power":
        if spec.exponent < 1:
            raise MapValidationError("sink exponent must be >= 1")
        for (a, b), anchor, amp in (((x0 - d, x0), f_left, amp_left), ((x0, x0 + d), f_right, amp_right)):
            for lo, hi, shift in _split_arc(a, b, phase):
                out.append(PowerProfile(lo, hi, center=x0 + shift, anchor=anchor, amp=amp,
                                        radius=d, exponent=spec.exponent))
    elif spec.sink == "plateau":
        for lo, hi, shift in _split_arc(x0 - d / 2, x0 + d / 2, phase):
            out.append(Constant(lo, hi, level=f_right))
        # connector: f(x0) at |x - x0| = d/2, f(x0 +- d) at |x - x0| = d
        for (a, b), anchor, amp, sgn in (((x0 - d, x0 - d / 2), f_left, amp_left, -1.0),
                                         ((x0 + d / 2, x0 + d), f_right, amp_right, 1.0)):
            for lo, hi, shift in _split_arc(a, b, phase):
                c = x0 + shift
                slope = sgn * amp / (d / 2)
                out.append(Affine(lo, hi, slope=slope, intercept=anchor - slope * (c + sgn * d / 2)))
    elif spec.sink == "flat":
        for lo, hi, shift in _split_arc(x0 - d, x0 + d, phase):
            out.append(Constant(lo, hi, level=f_plus))
    else:
        raise MapValidationError(f"unknown sink kind {spec.sink!r}")
    return out


def _check_tiling(pieces, phase: Phase):
    if abs(pieces[0].lo - phase.lo) > 1e-14 or abs(pieces[-1].hi - phase.hi) > 1e-14:
        raise MapValidationError("pieces do not cover the phase")
    for p, q in zip(pieces, pieces[1:]):
        if abs(p.hi - q.lo) > 1e-14:
            raise MapValidationError(f"gap or overlap between pieces at {p.hi} / {q.lo}")


def _snap(pieces, phase: Phase) -> list[Piece]:
    """Make consecutive boundaries bit-identical."""
    out = [pieces[0].restrict(phase.lo, pieces[0].hi)]
    for p in pieces[1:]:
        out.append(p.restrict(out[-1].hi, p.hi))
    out[-1] = out[-1].restrict(out[-1].lo, phase.hi)
    return out


def _period(base, phase: Phase, x0: float, max_period: int = 64) -> int | None:
    x = x0
    for p in range(1, max_period + 1):
        try:
            x = _base_eval(base, phase, x, "right")
        except MapValidationError:
            return None
        d = wrap_diff(x - x0) if phase.circle else x - x0
        if abs(d) < 1e-9:
            return p
    return None


def _nondiff_points(base, phase: Phase, x0: float, delta: float) -> tuple:
    points = []
    junctions = [(p, q, p.hi) for p, q in zip(base, base[1:])]
    if phase.circle:
        junctions.append((base[-1], base[0], 0.0))
    for left, right, b in junctions:
        xl = 1.0 if (phase.circle and b == 0.0) else b
        dl, dr = float(left.deriv(xl)), float(right.deriv(b))
        vl, vr = float(left.value(xl)), float(right.value(b))
        jump = wrap_diff(vl - vr) if phase.circle else vl - vr
        if abs(dl - dr) > 1e-9 * max(1.0, abs(dl)) or abs(jump) > CONTINUITY_TOL:
            dist = wrap_diff(b - x0) if phase.circle else b - x0
            if delta <= 0 or abs(dist) >= delta:
                points.append(float(b))
    return tuple(points)


def build_map(spec: MapSpec) -> MapModel:
    """Build and validate ``f_delta`` from a :class:`MapSpec`."""
    phase = spec.phase
    if isinstance(spec.base, str):
        try:
            base = BASE_MAPS[spec.base]()
        except KeyError:
            raise MapValidationError(f"unknown base map {spec.base!r}") from None
        if not phase.circle:
            base = [p.restrict(max(p.lo, phase.lo), min(p.hi, phase.hi)) for p in base
                    if p.hi > phase.lo and p.lo < phase.hi]
    else:
        base = sorted(spec.base, key=lambda p: p.lo)
    _check_tiling(base, phase)
    if spec.delta < 0:
        raise MapValidationError("delta must be non-negative")
    if spec.delta > 0 and not phase.circle:
        if spec.x0 - spec.delta < phase.lo or spec.x0 + spec.delta > phase.hi:
            raise MapValidationError("the hole must lie inside the interval")

    if spec.delta > 0 and spec.sink != "none":
        arcs = [(a, b) for a, b, _ in _split_arc(spec.x0 - spec.delta, spec.x0 + spec.delta, phase)]
        pieces = [q for p in base for q in _subtract(p, arcs)] + _sink_pieces(spec, base, phase)
    else:
        pieces = list(base)
    pieces = sorted((p for p in pieces if p.hi - p.lo > 1e-15), key=lambda p: p.lo)
    _check_tiling(pieces, phase)
    pieces = _snap(pieces, phase)

    model = MapModel(
        name=spec.name or (spec.base if isinstance(spec.base, str) else "custom"),
        phase=phase,
        pieces=tuple(pieces),
        base_pieces=tuple(base),
        x0=float(spec.x0),
        delta=float(spec.delta),
        sink=spec.sink if spec.delta > 0 else "none",
        exponent=float(spec.exponent),
        period=_period(base, phase, spec.x0),
        lambda_min=math.nan,
        m_sup=math.nan,
        c2_bound=math.nan,
        nondiff=_nondiff_points(base, phase, spec.x0, spec.delta),
        _los=np.array([p.lo for p in pieces]),
    )
    lam, c2 = _expansion_stats(model)
    m_sup = max(float(np.max(np.abs(p.deriv(np.linspace(p.lo, p.hi, 1001))))) for p in base)
    model = replace(model, lambda_min=lam, m_sup=m_sup, c2_bound=c2)

    _check_continuity(model)
    if not lam > 1.0:
        raise ExpansionViolation(f"inf |f'| outside the hole is {lam:.6g} <= 1")
    if spec.sigma is not None:
        check_phase(model, spec.sigma)
    return model


def _expansion_stats(model: MapModel) -> tuple[float, float]:
    lam, c2 = math.inf, 0.0
    arcs = model.hole_arcs()
    for p in model.pieces:
        if any(p.lo >= a - 1e-15 and p.hi <= b + 1e-15 for a, b in arcs):
            continue
        x = np.linspace(p.lo, p.hi, 1001)
        x = x[~model.in_hole(x)] if model.delta > 0 else x
        if x.size == 0:
            continue
        lam = min(lam, float(np.min(np.abs(p.deriv(x)))))
        c2 = max(c2, float(np.max(np.abs(p.deriv2(x)))))
    return lam, c2


def _check_continuity(model: MapModel):
    """g(x0 +- delta) = f(x0 +- delta), probed at points adjacent to both endpoints."""
    if model.delta <= 0 or model.sink == "none":
        return
    worst = continuity_defect(model)
    if worst > CONTINUITY_TOL:
        raise ContinuityViolation(f"|g - f| = {worst:.3g} at the hole edge exceeds {CONTINUITY_TOL}")


def continuity_defect(model: MapModel, samples: int = 1000) -> float:
    """Max |g - f| over points of the hole adjacent to (and at) both endpoints."""
    if model.delta <= 0 or model.sink == "none":
        return 0.0
    dist = np.concatenate([[0.0], model.delta * np.logspace(-16, -13, samples // 2 - 1)])
    worst = 0.0
    for end, inward in ((model.x0 - model.delta, 1.0), (model.x0 + model.delta, -1.0)):
        side = "right" if inward > 0 else "left"
        xr = model.phase.reduce(end + inward * dist)
        if model.phase.circle and inward < 0:
            xr = np.where(xr == 0.0, 1.0, xr)
        anchor = float(xr[0])
        g = _base_piece(model.pieces, anchor, side).value(xr)
        f = _base_piece(model.base_pieces, anchor, side).value(xr)
        d = wrap_diff(g - f) if model.phase.circle else g - f
        worst = max(worst, float(np.max(np.abs(d))))
    return worst


def check_phase(model: MapModel, sigma: float):
    """Interval phase: f_delta(I) + [-sigma, sigma] must stay inside I."""
    if model.phase.circle:
        return
    lo = min(model.image_range(p, p.lo, p.hi)[0] for p in model.pieces)
    hi = max(model.image_range(p, p.lo, p.hi)[1] for p in model.pieces)
    if lo - sigma < model.phase.lo - 1e-15 or hi + sigma > model.phase.hi + 1e-15:
        raise PhaseLeak(
            f"noisy image [{lo - sigma:.6g}, {hi + sigma:.6g}] leaves I = [{model.phase.lo}, {model.phase.hi}]")


def eval_noisy(model: MapModel, noise: NoiseModel, x, w):
    """One step of the random map: f_delta(x) + w, reduced to the phase."""
    w = np.asarray(w, dtype=float)
    if np.any(np.abs(w) > noise.sigma * (1 + 1e-12)):
        raise ValueError("noise offset outside [-sigma, sigma]")
    y = model.phase.reduce(model.lift(x) + w)
    return y if np.ndim(y) else float(y)


# ---------------------------------------------------------------- diagnostics


def derivative_defect(model: MapModel, samples: int = 1000) -> float:
    """Worst relative error between central differences and declared derivatives."""
    worst = 0.0
    for p in model.pieces:
        if p.constant or p.hi - p.lo <= 0:
            continue
        width = p.hi - p.lo
        eps = 6e-6 * width
        x = np.linspace(p.lo + 2 * eps, p.hi - 2 * eps, samples)
        if isinstance(p, PowerProfile):
            x = x[np.abs(x - p.center) > 4 * eps]
        fd = (p.value(x + eps) - p.value(x - eps)) / (2 * eps)
        d = p.deriv(x)
        scale = np.maximum(np.abs(d), 1e-3 * max(1.0, float(np.max(np.abs(d)))))
        worst = max(worst, float(np.max(np.abs(fd - d) / scale)))
    return worst


def sink_exponent_estimate(model: MapModel, scale: float = 1e-3) -> float:
    """Local log-log slope of |g(x) - g(x0)| against |x - x0| near the sink centre."""
    r1, r2 = model.delta * scale, 2 * model.delta * scale
    g0 = model.lift(model.x0)
    d1 = abs(float(wrap_diff(model.lift(model.x0 + r1) - g0)))
    d2 = abs(float(wrap_diff(model.lift(model.x0 + r2) - g0)))
    return math.log(d2 / d1) / math.log(r2 / r1)


def admissibility(model: MapModel, sigma: float | None = None) -> dict:
    """Checkable items of the admissible-class definition; ``admissible`` is their conjunction.

    Topological mixing of the base map is assumed, not verified.
    """
    report = {"circle": model.phase.circle, "period": model.period}
    report["continuity"] = model.delta > 0 and continuity_defect(model) <= CONTINUITY_TOL
    report["expanding_outside_hole"] = model.lambda_min > 1
    if model.delta > 0 and model.sink != "none":
        g_img, f_img = _hull_image(model, model.pieces), _hull_image(model, model.base_pieces)
        report["range"] = bool(np.allclose(g_img, f_img, atol=1e-12))
        gx0 = model.lift(model.x0)
        fx0 = _base_eval(model.base_pieces, model.phase, model.x0, "right")
        report["sink_at_x0"] = abs(float(wrap_diff(gx0 - fx0))) < 1e-12
        h = model.delta * 1e-7
        slope = abs(float(wrap_diff(model.lift(model.x0 + h) - model.lift(model.x0 - h)))) / (2 * h)
        report["superattracting"] = slope < 1e-5
    else:
        report["range"] = report["sink_at_x0"] = report["superattracting"] = False
    ok = all(report[k] for k in ("circle", "continuity", "expanding_outside_hole", "range",
                                 "sink_at_x0", "superattracting")) and model.period is not None
    if sigma is not None and model.period is not None:
        report["noise_condition"] = sigma * model.lambda_min ** (model.period - 1) >= 2 * model.delta
        ok = ok and report["noise_condition"]
    report["admissible"] = bool(ok)
    return report


def _hull_image(model: MapModel, pieces) -> tuple[float, float]:
    """Hull of the hole's image, as displacements from f(x0)."""
    ref = _base_eval(model.base_pieces, model.phase, model.x0, "right")
    rel = wrap_diff if model.phase.circle else (lambda v: v)
    lo, hi = math.inf, -math.inf
    for a, b in model.hole_arcs():
        for p in pieces:
            s, e = max(p.lo, a), min(p.hi, b)
            if e > s:
                ends = rel(np.array(model.image_range(p, s, e)) - ref)
                lo, hi = min(lo, float(ends.min())), max(hi, float(ends.max()))
    return lo, hi


def check_H2(model: MapModel, noise: NoiseModel, k: int):
    """Do the noisy images of the hole avoid the base map's creases for ``j <= k`` steps?

    Returns ``(True, None)`` or ``(False, (j, (lo, hi), point))`` for the first
    offending step, image interval and non-differentiability point.
    """
    from . import reach

    if k < 1 or model.delta <= 0:
        return True, None
    current = reach.hole_set(model)
    for j in range(1, k + 1):
        current = reach.step(current, model, noise.sigma)
        for c in model.nondiff:
            hit = reach.contains_interior(current, c, model.phase)
            if hit is not None:
                return False, (j, hit, c)
    return True, None
