import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import bump_field, desk_windows, make_rates
from popctrl.core import ControlWindows, Grid, norm
from popctrl.hum import (ControlOperator, HUMConfig, gram_apply, krylov_solve, synthesize, synthesize_female_only,
                         synthesize_male_only, target_masks)

G8 = Grid(8, 8, 1.0, 1.0)


def _phi(g, rng):
    return rng.normal(size=g.field_shape), rng.normal(size=g.field_shape)


def test_gram_of_zero_is_zero(rates):
    out = gram_apply(rates, G8, desk_windows(), 0.5, (G8.zeros(), G8.zeros()))
    assert not out[0].any() and not out[1].any()


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["both-sexes", "male-only", "female-only"]))
def test_gram_symmetric_and_coercive(seed, variant):
    r = make_rates()
    rng = np.random.default_rng(seed)
    cfg = HUMConfig(1e-3, 2e-3, variant=variant, rho=0.25 if variant == "male-only" else 0.0)
    op = ControlOperator(r, G8, desk_windows(variant, cfg.rho), rng.uniform(0, 2, (G8.Nx, G8.Nt + 1)), cfg)
    phi, psi = op.project(_phi(G8, rng)), op.project(_phi(G8, rng))
    Gphi, Gpsi = op.gram(phi), op.gram(psi)
    a, b = op.dot(Gphi, psi), op.dot(phi, Gpsi)
    assert abs(a - b) <= 1e-12 * np.sqrt(op.dot(Gphi, Gphi) * op.dot(psi, psi))
    lower = op.pen_m * norm(phi[0], G8) ** 2 + op.pen_f * norm(phi[1], G8) ** 2
    assert op.dot(Gphi, phi) >= lower * (1 - 1e-12)


def test_gram_apply_default_config_matches_operator(rates, rng):
    phi = _phi(G8, rng)
    w = desk_windows()
    a = gram_apply(rates, G8, w, 0.3, phi)
    b = ControlOperator(rates, G8, w, 0.3, HUMConfig()).gram(phi)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_zero_data_needs_no_iterations(rates):
    g = Grid(7, 10, 1.0, 0.5)
    res = synthesize(rates, g, desk_windows(), 0.5, (g.zeros(), g.zeros()), HUMConfig())
    assert res.iterations == 0 and res.converged
    assert not res.control_m.any() and not res.control_f.any()
    assert res.final_norm_m == res.final_norm_f == 0.0


def _small_problem():
    r = make_rates(K_m=1.0, K_f=1.0)
    g = Grid(15, 20, 1.0, 0.5)
    return r, g, (bump_field(g, 0.1, 0.7), bump_field(g, 0.2, 0.8))


def test_cr_history_monotone_and_optimality():
    r, g, data = _small_problem()
    cfg = HUMConfig(1e-4, 1e-4, cg_tol=1e-10)
    res = synthesize(r, g, desk_windows(), 0.5, data, cfg)
    h = np.array(res.residual_history)
    assert res.converged
    assert np.all(np.diff(h) <= 0)
    # residual of the normal equations is -(P state(T) + pen * phi), bounded by tol * ||b||
    op = ControlOperator(r, g, desk_windows(), 0.5, cfg)
    m, f, _ = op.forward(*data)
    bnorm = np.hypot(norm(m[-1], g), norm(f[-1], g))
    assert np.hypot(res.optimality_m, res.optimality_f) <= 10 * cfg.cg_tol * bnorm


def test_cg_and_cr_agree():
    r, g, data = _small_problem()
    a = synthesize(r, g, desk_windows(), 0.5, data, HUMConfig(1e-3, 1e-3, cg_tol=1e-11))
    b = synthesize(r, g, desk_windows(), 0.5, data, HUMConfig(1e-3, 1e-3, cg_tol=1e-11, method="cg"))
    assert a.converged and b.converged
    assert np.abs(a.control_m - b.control_m).max() <= 1e-7 * np.abs(a.control_m).max()


def test_controls_live_in_windows():
    r, g, data = _small_problem()
    res = synthesize(r, g, desk_windows(), 0.5, data, HUMConfig(1e-3, 1e-3))
    op = ControlOperator(r, g, desk_windows(), 0.5, HUMConfig())
    assert not res.control_m[0].any() and not res.control_f[0].any()
    assert not (res.control_m * (1 - op.mask_m)).any()
    assert not (res.control_f * (1 - op.mask_f)).any()
    assert res.control_m.any() and res.control_f.any()


def test_final_norm_shrinks_with_penalty():
    r, g, data = _small_problem()
    finals = [synthesize(r, g, desk_windows(), 0.5, data, HUMConfig(e, e, cg_tol=1e-10)).final_norm_m
              for e in (1e-2, 1e-3, 1e-4)]
    assert finals[0] > finals[1] > finals[2]


def test_non_convergence_is_flagged():
    r, g, data = _small_problem()
    res = synthesize(r, g, desk_windows(), 0.5, data, HUMConfig(cg_max_iters=2))
    assert not res.converged and res.iterations == 2
    assert res.residual_history[-1] > 1e-8


def test_krylov_on_matrix():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(20, 20))
    M = B @ B.T + 0.1 * np.eye(20)
    rhs = (rng.normal(size=20), np.zeros(3))
    apply = lambda v: (M @ v[0], np.zeros(3))  # noqa: E731
    dot = lambda a, b: float(a[0] @ b[0])  # noqa: E731
    for method in ("cr", "cg"):
        x, it, hist, ok = krylov_solve(apply, dot, rhs, (np.zeros(20), np.zeros(3)), 1e-12, 200, method)
        assert ok and np.allclose(M @ x[0], rhs[0], atol=1e-9)


@pytest.mark.parametrize("kw", [dict(epsilon=0), dict(theta=-1), dict(cg_tol=2.0), dict(cg_max_iters=0),
                                dict(variant="male-only"), dict(method="gmres"), dict(variant="nobody")])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        HUMConfig(**kw)


# single-sex variants --------------------------------------------------------

def test_target_masks(small_grid):
    g = small_grid
    tm, tf = target_masks(g, HUMConfig(variant="male-only", rho=0.3))
    assert not tm[:, g.ages < 0.3].any() and tm[:, g.ages >= 0.3].all() and not tf.any()
    tm, tf = target_masks(g, HUMConfig(variant="female-only"))
    assert not tm.any() and tf.all()


def test_male_only_zero_data(rates):
    g = Grid(7, 10, 1.0, 0.3)
    cfg = HUMConfig(variant="male-only", rho=0.1)
    res = synthesize_male_only(rates, g, desk_windows("male-only", 0.1), 0.5, (g.zeros(), g.zeros()), cfg)
    assert res.iterations == 0 and not res.control_m.any() and not res.control_f.any()


def test_male_only_iterates_respect_constraint():
    r = make_rates(K_m=1.0)
    g = Grid(15, 20, 1.0, 0.3)
    cfg = HUMConfig(1e-4, variant="male-only", rho=0.25, cg_tol=1e-10)
    op = ControlOperator(r, g, desk_windows("male-only", 0.25), 0.5, cfg)
    seen = []
    inner_gram = op.gram

    def recording(phi):
        seen.append(phi[0].copy())
        return inner_gram(phi)

    op.gram = recording
    m, _, _ = op.forward(bump_field(g, 0.1, 0.7), bump_field(g, 0.2, 0.8))
    b = (-m[-1] * op.target_m, np.zeros(g.field_shape))
    krylov_solve(op.gram, op.dot, b, (g.zeros(), g.zeros()), cfg.cg_tol, 300)
    low = g.ages < 0.25
    assert len(seen) > 3
    assert all(not s[:, low].any() for s in seen)


def test_male_only_matches_dense_least_squares():
    r = make_rates(K_m=0.5, K_f=0.5)
    g = Grid(3, 8, 1.0, 1.0)
    rho = 1.0 - g.da
    w = ControlWindows((0.2, 0.8), (0.2, 0.8), (0.0, 0.8), (0.1, 0.9), "male-only", rho)
    eps = 1e-3
    cfg = HUMConfig(eps, variant="male-only", rho=rho, cg_tol=1e-13, cg_max_iters=2000)
    m0, f0 = bump_field(g, 0.1, 0.9), bump_field(g, 0.3, 0.9)
    res = synthesize_male_only(r, g, w, 0.8, (m0, f0), cfg)
    op = ControlOperator(r, g, w, 0.8, cfg)
    # control-to-final-state matrix over the masked cells at steps 1..Nt
    cells = [(k, j, i) for k in range(1, g.Nt + 1) for j, i in zip(*np.nonzero(op.mask_m))]
    tgt = op.target_m.astype(bool)
    cols = []
    for k, j, i in cells:
        v = g.zeros_traj()
        v[k, j, i] = 1.0
        mT = op.forward(g.zeros(), g.zeros(), v, None)[0][-1]
        cols.append(mT[tgt])
    L = np.array(cols).T
    free = op.forward(m0, f0)[0][-1][tgt]
    wv = np.sqrt(g.dt * g.dx * g.da)
    wx = np.sqrt(g.dx * g.da / eps)
    lhs = np.vstack([wv * np.eye(len(cells)), wx * L])
    rhs = np.concatenate([np.zeros(len(cells)), -wx * free])
    v_ls = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    v_hum = np.array([res.control_m[c] for c in cells])
    assert res.converged
    assert np.abs(v_hum - v_ls).max() <= 1e-8 * np.abs(v_ls).max()
    assert np.abs(v_ls).max() > 0


def test_female_only_zero_data(rates):
    g = Grid(7, 10, 1.0, 0.5)
    res = synthesize_female_only(rates, g, desk_windows("female-only"), 0.5, g.zeros(),
                                 HUMConfig(variant="female-only"))
    assert res.iterations == 0 and not res.control_f.any()


def test_female_only_equals_decoupled_both_sexes():
    # all births female and no male data: the male block drops out of the two-sex problem
    r = make_rates(K_m=1.0, K_f=1.0, gamma=1.0)
    g = Grid(15, 20, 1.0, 0.5)
    f0 = bump_field(g, 0.2, 0.8)
    eps = 1e-4
    a = synthesize_female_only(r, g, desk_windows("female-only"), 0.5, f0,
                               HUMConfig(eps, variant="female-only", cg_tol=1e-10))
    b = synthesize(r, g, desk_windows(), 0.5, (g.zeros(), f0), HUMConfig(eps, eps, cg_tol=1e-10))
    assert not b.control_m.any() and not b.final_n.any()
    assert np.abs(a.control_f - b.control_f).max() <= 1e-12 * np.abs(b.control_f).max()
    assert a.final_norm_f == pytest.approx(b.final_norm_f, rel=1e-10)


def test_single_sex_entry_points_check_variant(rates, small_grid):
    g = small_grid
    with pytest.raises(ValueError):
        synthesize_male_only(rates, g, desk_windows(), 0.0, (g.zeros(), g.zeros()), HUMConfig())
    with pytest.raises(ValueError):
        synthesize_female_only(rates, g, desk_windows(), 0.0, g.zeros(), HUMConfig())
