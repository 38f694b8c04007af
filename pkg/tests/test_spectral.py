import numpy as np
import pytest

from oracle_values import DOUBLING_LAMBDA, E1_TRAP_MASS
from qsdlab import NoiseModel, builtin, grid_for
from qsdlab.errors import NoConvergence, SingularResolvent, ZeroOperator
from qsdlab.grid import Density
from qsdlab.observables import bv_distance, gap_time
from qsdlab.operators import assemble_annealed, assemble_conditioned, assemble_Q
from qsdlab.spectral import (diagnostic_norms, haar_probes, q_fixed_point, qsd_eigenpair, read_result,
                             reconstruct_rho, stationary_density, write_result)


def test_uniform_fixed_point_without_hole():
    m = builtin("doubling", 0.0)
    res = stationary_density(assemble_annealed(m, NoiseModel(0.05), grid_for(m, 4096)))
    assert res.converged and res.eigenvalue == 1.0
    assert np.abs(res.density.values - 1).max() < 1e-8
    assert res.residual <= 1e-12


def test_plateau_sink_traps_mass():
    m = builtin("doubling-e1", 0.01)
    g = grid_for(m, 65536)
    rho = stationary_density(assemble_annealed(m, NoiseModel(0.001), g)).density
    r = 3 * 0.001 + 0.01
    mass = rho.mass_on(g.overlap_fractions([(0.0, r), (1 - r, 1.0)]))
    assert mass > 0.9
    assert abs(mass - E1_TRAP_MASS) < 1e-3


def test_qsd_without_hole_is_stationary(solve):
    _, L, _, rho, _ = solve("doubling", 0.01, 0.02, 4096)
    m0 = builtin("doubling", 0.0)
    L0 = assemble_annealed(m0, NoiseModel(0.02), L.grid)
    q = qsd_eigenpair(assemble_conditioned(L0))
    assert q.eigenvalue == pytest.approx(1.0, abs=1e-12)
    assert bv_distance(q.density, stationary_density(L0).density)[0] < 1e-10


def test_qsd_matches_killed_ensemble_oracle(solve):
    *_, q = solve("doubling", 0.01, 0.02, 8192)
    assert abs(q.eigenvalue - DOUBLING_LAMBDA) < 0.002
    assert q.density.mass == pytest.approx(1.0)
    assert q.residual <= 1e-12


def test_eigenvalue_grid_refinement(solve):
    lam4 = solve("doubling", 0.01, 0.02, 4096)[4].eigenvalue
    lam8 = solve("doubling", 0.01, 0.02, 8192)[4].eigenvalue
    assert abs(lam4 - lam8) / lam8 < 1e-3
    assert f"{lam4:.4g}" == f"{lam8:.4g}"


def test_eigenvalue_bracketing(solve):
    _, _, R, _, q = solve("doubling", 0.01, 0.02, 4096)
    hole_mass = q.density.mass_on(R.hole_weights)
    assert q.eigenvalue < 1
    assert q.eigenvalue == pytest.approx(1 - hole_mass, abs=1e-10)


def test_residual_history_settles(solve):
    *_, q = solve("doubling", 0.01, 0.02, 4096)
    hist = np.array(q.history[10:])
    assert np.all(np.diff(hist) <= 1e-15 + 1e-9 * hist[:-1])


def test_qsd_vanishes_where_unreachable():
    # a flat top sends the hole to one point; with sigma small the conditioned
    # dynamics never visits the cells right of the noisy image of the flat top
    m = builtin("tent-e2", 0.01)
    g = grid_for(m, 8192)
    noise = NoiseModel(0.005)
    q = qsd_eigenpair(assemble_conditioned(assemble_annealed(m, noise, g))).density
    top = 1 - 2 * 0.01 + 0.005     # image of everything is inside [0, 1 - 2 delta + sigma]... plus wrap
    beyond = (g.edges[:-1] > top + 0.0) & (g.edges[1:] < 1.0 - 0.005)
    assert beyond.any()
    assert np.all(q.values[beyond] <= 1e-12)


def test_q_fixed_point_trivial_cases():
    m = builtin("tent-e2", 0.01)
    noise = NoiseModel(0.02)
    g = grid_for(m, 2048)
    L = assemble_annealed(m, noise, g)
    rho = stationary_density(L).density
    u1 = q_fixed_point(assemble_Q(m, noise, g, 1, L)).density
    assert bv_distance(u1, rho)[0] < 1e-10
    m0 = builtin("tent-e2", 0.0)
    L0 = assemble_annealed(m0, noise, g)
    u0 = q_fixed_point(assemble_Q(m0, noise, g, 4, L0)).density
    assert bv_distance(u0, stationary_density(L0).density)[0] < 1e-10


def test_reconstruction_identity():
    m = builtin("tent-e2", 0.01)
    noise = NoiseModel(0.02)
    g = grid_for(m, 4096)
    L = assemble_annealed(m, noise, g)
    k = gap_time(m, noise).k
    u = q_fixed_point(assemble_Q(m, noise, g, k, L)).density
    rec = reconstruct_rho(u, L, L.hole_weights, k)
    assert rec.defect <= 1e-8
    assert bv_distance(rec.density, stationary_density(L).density)[0] <= 1e-6
    assert rec.remainder_l1 > 0 and rec.remainder_bv >= rec.remainder_l1


def test_reconstruction_without_hole():
    m = builtin("tent-e2", 0.0)
    g = grid_for(m, 1024)
    L = assemble_annealed(m, NoiseModel(0.02), g)
    rho = stationary_density(L).density
    rec = reconstruct_rho(rho, L, np.zeros(g.n), 3)
    assert rec.defect <= 1e-12
    assert rec.remainder_l1 == 0.0


def test_errors():
    m = builtin("doubling", 0.0)
    L = assemble_annealed(m, NoiseModel(0.02), grid_for(m, 1024))
    with pytest.raises(NoConvergence) as info:
        stationary_density(L, start=np.r_[np.ones(512), np.zeros(512)], tol=1e-30, budget=5)
    assert info.value.result.iterations == 5
    mh = builtin("doubling", 0.45)
    Lh = assemble_annealed(mh, NoiseModel(0.02), grid_for(mh, 1024))
    with pytest.raises(ZeroOperator):
        qsd_eigenpair(assemble_conditioned(Lh), start=(Lh.hole_weights == 1).astype(float))
    with pytest.raises(ValueError):
        qsd_eigenpair(assemble_Q(mh, NoiseModel(0.02), Lh.grid, 1, Lh))


def test_result_roundtrip(tmp_path, solve):
    *_, q = solve("doubling", 0.01, 0.02, 4096)
    write_result(q, tmp_path / "q.csv")
    back = read_result(tmp_path / "q.csv")
    assert back.eigenvalue == q.eigenvalue and back.iterations == q.iterations
    assert np.array_equal(back.density.values, q.density.values)


def test_haar_probes_are_step_functions():
    from qsdlab.grid import Grid
    P = haar_probes(Grid(64), centers=[0.0])
    assert set(np.unique(P)) <= {-1.0, 0.0, 1.0}
    assert P.shape[0] == 64


def test_diagnostics_without_hole():
    m = builtin("doubling", 0.0)
    L = assemble_annealed(m, NoiseModel(0.05), grid_for(m, 1024))
    R = assemble_conditioned(L)
    rho = stationary_density(L).density
    dg = diagnostic_norms(L, R, rho, 1.0, trials=10)
    assert dg.a2_lower == 0.0 and dg.a2_upper == 0.0
    assert dg.a3 == pytest.approx(1.0, abs=1e-8)
    assert np.isfinite(dg.a1) and dg.a1 > 0


def test_diagnostics_bracket_and_stability():
    out = []
    for delta in (0.01, 0.005):
        m = builtin("doubling", delta)
        L = assemble_annealed(m, NoiseModel(0.02), grid_for(m, 4096))
        R = assemble_conditioned(L)
        q = qsd_eigenpair(R)
        dg = diagnostic_norms(L, R, q.density, q.eigenvalue, trials=20)
        assert dg.a2_lower <= dg.a2_upper
        assert dg.a3 <= 10
        out.append(dg)
    assert 0.5 <= out[0].a1 / out[1].a1 <= 2


def test_singular_resolvent_flagged():
    m = builtin("doubling", 0.0)
    L = assemble_annealed(m, NoiseModel(0.05), grid_for(m, 1024))
    with pytest.raises(SingularResolvent):
        diagnostic_norms(L, assemble_conditioned(L), Density.uniform(L.grid), 1.0, trials=5, budget=1)
