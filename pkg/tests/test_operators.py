import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdlab import NoiseModel, builtin, grid_for
from qsdlab.errors import GridMismatch, GridTooCoarse
from qsdlab.grid import Density, Grid, variation
from qsdlab.maps import Affine, MapSpec, Phase, build_map
from qsdlab.observables import gap_time
from qsdlab.operators import (apply, assemble_annealed, assemble_conditioned, assemble_deterministic, assemble_Q,
                              export_triplets, read_triplets)


def brute_column(model, sigma, grid, j, samples=4000):
    """Cell-j column by midpoint sampling of the source cell and exact kernel overlap."""
    h = grid.h
    x = grid.lo + h * (j + (np.arange(samples) + 0.5) / samples)
    y = model.lift(x)
    col = np.zeros(grid.n)
    edges = grid.edges
    for shift in (-2.0, -1.0, 0.0, 1.0, 2.0):
        lo = np.maximum(y[:, None] - sigma, edges[None, :-1] + shift)
        hi = np.minimum(y[:, None] + sigma, edges[None, 1:] + shift)
        col += np.clip(hi - lo, 0, None).sum(axis=0) / (2 * sigma * samples)
    return col


@pytest.mark.parametrize("name,delta,sigma,n,cols", [
    ("doubling-sink", 0.01, 0.02, 512, [0, 1, 3, 100, 511]),
    ("doubling-e1", 0.02, 0.03, 256, [0, 1, 2, 3, 255, 128]),
    ("tent-e2", 0.01, 0.05, 512, [0, 250, 255, 256, 400]),
    ("doubling-p3", 0.01, 0.02, 512, [70, 73, 75, 77]),
])
def test_columns_match_brute_force(name, delta, sigma, n, cols):
    m = builtin(name, delta)
    L = assemble_annealed(m, NoiseModel(sigma), grid_for(m, n))
    dense = L.matrix.toarray()
    for j in cols:
        ref = brute_column(m, sigma, L.grid, j)
        assert np.abs(dense[:, j] - ref).max() < 2e-4 * ref.max()


def test_point_mass_is_spread_uniformly():
    m = builtin("doubling", 0.0)
    g = grid_for(m, 4096)
    L = assemble_annealed(m, NoiseModel(0.05), g)
    j = g.cell_of(0.3)
    col = L.matrix[:, [j]].toarray().ravel()
    support = g.centers[col > 1e-12]
    assert support.min() == pytest.approx(0.55, abs=2 * g.h)
    assert support.max() == pytest.approx(0.65, abs=2 * g.h)
    inner = (g.centers > 0.552) & (g.centers < 0.648)
    assert np.allclose(col[inner] / g.h, 10.0, rtol=1e-9)


def test_uniform_density_is_invariant_for_doubling():
    m = builtin("doubling", 0.0)
    g = grid_for(m, 1024)
    L = assemble_annealed(m, NoiseModel(0.03), g)
    out = apply(L, Density.uniform(g))
    assert np.abs(out.values - 1).max() < 1e-12


def test_tent_column_sums():
    m = builtin("tent", 0.01)
    g = grid_for(m, 4096)
    noise = NoiseModel(0.005)
    L = assemble_annealed(m, noise, g)
    assert np.abs(L.column_sums() - 1).max() < 1e-10
    k = gap_time(m, noise).k
    Q = assemble_Q(m, noise, g, k, L)
    assert np.abs(Q.column_sums() - 1).max() < 1e-10


def test_conditioned_examples():
    m = builtin("doubling", 0.01)
    g = grid_for(m, 4096)
    L = assemble_annealed(m, NoiseModel(0.005), g)
    R = assemble_conditioned(L)
    inside = np.flatnonzero(L.hole_weights == 1.0)
    assert inside.size > 0
    assert R.matrix[:, inside].nnz == 0
    assert np.all(R.column_sums() <= 1 + 1e-10)
    d = np.zeros(g.n)
    d[inside] = 1.0
    assert apply(R, Density(d, g)).mass == 0.0
    # no hole: conditioning changes nothing
    m0 = builtin("doubling", 0.0)
    L0 = assemble_annealed(m0, NoiseModel(0.005), g)
    assert (assemble_conditioned(L0).matrix != L0.matrix).nnz == 0


def test_conditioned_radius_between_bounds():
    from qsdlab.spectral import qsd_eigenpair
    m = builtin("doubling", 0.01)
    g = grid_for(m, 4096)
    lam = qsd_eigenpair(assemble_conditioned(assemble_annealed(m, NoiseModel(0.005), g))).eigenvalue
    assert 0.9 < lam < 1


def test_q_reduces_to_l():
    m = builtin("tent-e2", 0.01)
    g = grid_for(m, 1024)
    noise = NoiseModel(0.02)
    L = assemble_annealed(m, noise, g)
    Q1 = assemble_Q(m, noise, g, 1, L)
    assert abs(Q1.to_sparse() - L.matrix).max() < 1e-15
    m0 = builtin("tent-e2", 0.0)
    L0 = assemble_annealed(m0, noise, g)
    Q0 = assemble_Q(m0, noise, g, 3, L0)
    assert abs(Q0.to_sparse() - L0.matrix).max() < 1e-15


def test_q_implicit_and_materialized_agree():
    m = builtin("tent-e2", 0.01)
    g = grid_for(m, 2048)
    noise = NoiseModel(0.02)
    L = assemble_annealed(m, noise, g)
    dense = assemble_Q(m, noise, g, 4, L)
    lazy = assemble_Q(m, noise, g, 4, L, block_limit=0)
    lazy = type(lazy)(lazy.kind, lazy.grid, None, lazy.model, lazy.sigma, lazy.hole_weights, lazy.base, lazy.k)
    v = np.random.default_rng(1).random(g.n)
    assert np.allclose(dense.matvec(v), lazy.matvec(v), atol=1e-14)
    assert np.allclose(dense.to_sparse() @ v, lazy.matvec(v), atol=1e-14)


def test_grid_checks():
    m = builtin("doubling-sink", 0.01)
    with pytest.raises(GridTooCoarse):
        assemble_annealed(m, NoiseModel(0.001), grid_for(m, 512))
    with pytest.raises(GridTooCoarse):
        assemble_annealed(m, NoiseModel(0.1), grid_for(m, 256))
    L = assemble_annealed(m, NoiseModel(0.02), grid_for(m, 1024))
    with pytest.raises(GridMismatch):
        apply(L, Density.uniform(Grid(512)))


def test_deterministic_ulam_of_doubling():
    m = builtin("doubling", 0.0)
    D = assemble_deterministic(m, grid_for(m, 64))
    dense = D.matrix.toarray()
    assert np.allclose(dense.sum(axis=0), 1.0)
    assert np.allclose(dense[10, 5], 0.5) and np.allclose(dense[11, 5], 0.5)


def test_interval_phase_conserves_mass():
    pieces = [Affine(0.0, 0.5, slope=1.6, intercept=0.1), Affine(0.5, 1.0, slope=-1.6, intercept=1.7)]
    m = build_map(MapSpec(base=pieces, x0=0.3, delta=0.01, phase=Phase("interval"), sigma=0.05))
    L = assemble_annealed(m, NoiseModel(0.05), grid_for(m, 1024))
    assert np.abs(L.column_sums() - 1).max() < 1e-12


def test_triplet_roundtrip(tmp_path):
    m = builtin("tent-e2", 0.01)
    noise = NoiseModel(0.02)
    g = grid_for(m, 512)
    Q = assemble_Q(m, noise, g, 3)
    path = tmp_path / "q.txt"
    nnz = export_triplets(Q, path)
    back = read_triplets(path, g.n)
    assert back.nnz == nnz
    assert abs(back - Q.to_sparse()).max() == 0.0


def _random_density(rng, n):
    kind = rng.integers(3)
    if kind == 0:
        v = rng.random(n)
    elif kind == 1:
        v = np.zeros(n)
        v[rng.integers(n)] = 1.0
    else:
        v = np.zeros(n)
        a = rng.integers(n)
        v[a:a + rng.integers(1, n // 4)] = 1.0
    return v / (v.sum() / n)


@pytest.fixture(scope="module")
def tent_ops():
    m = builtin("tent-e2", 0.01)
    L = assemble_annealed(m, NoiseModel(0.02), grid_for(m, 2048))
    return L, assemble_conditioned(L)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_positivity_mass_and_domination(tent_ops, seed):
    L, R = tent_ops
    d = Density(_random_density(np.random.default_rng(seed), L.n), L.grid)
    out = apply(L, d)
    assert out.values.min() >= 0
    assert abs(out.mass - d.mass) <= 1e-10 * d.mass
    assert np.all(apply(R, d).values <= out.values * (1 + 1e-12) + 1e-12)


def test_smoothing_bound(tent_ops):
    L, _ = tent_ops
    rng = np.random.default_rng(7)
    worst = max(variation(apply(L, Density(_random_density(rng, L.n), L.grid)).values) for _ in range(100))
    assert worst <= 2 / L.sigma + 10 * L.grid.h


def test_conditioned_entrywise_below_annealed(tent_ops):
    L, R = tent_ops
    diff = (L.matrix - R.matrix).tocoo()
    assert diff.data.min() >= 0
    assert sp.issparse(R.matrix)
