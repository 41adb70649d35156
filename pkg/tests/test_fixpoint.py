import numpy as np
import pytest

from conftest import bump_field, desk_windows, make_rates
from popctrl.core import Grid, norm
from popctrl.fixpoint import FixedPointConfig, free_run_profile, iterate, lambda_map, norm_qt
from popctrl.hum import HUMConfig

G = Grid(15, 20, 1.0, 0.5)
HUM = HUMConfig(1e-4, 1e-4, cg_tol=1e-11)


def _data(scale=1.0):
    return scale * bump_field(G, 0.1, 0.7), scale * bump_field(G, 0.2, 0.8)


def _rates(**kw):
    return make_rates(K_m=1.0, K_f=1.0, **kw)


def test_zero_data_maps_to_zero():
    rng = np.random.default_rng(0)
    for _ in range(3):
        M, _ = lambda_map(_rates(), G, desk_windows(), rng.uniform(0, 5, (G.Nx, G.Nt + 1)),
                          (G.zeros(), G.zeros()), HUM)
        assert not M.any()


def test_zero_data_converges_at_once():
    res = iterate(_rates(), G, desk_windows(), (G.zeros(), G.zeros()), FixedPointConfig(), HUM)
    assert res.converged and res.iterations == 1
    assert not res.p.any() and res.consistency == 0.0


def test_lambda_bounded_uniformly_in_p():
    r = _rates()
    data = _data()
    size = norm(data[0], G) + norm(data[1], G)
    rng = np.random.default_rng(1)
    ratios = [norm_qt(lambda_map(r, G, desk_windows(), s * rng.uniform(size=(G.Nx, G.Nt + 1)), data, HUM)[0], G) / size
              for s in (0.0, 0.1, 1.0, 10.0, 100.0)]
    assert max(ratios) <= 2 * min(ratios)


def test_lambda_homogeneous_in_data():
    r = _rates()
    p = np.full((G.Nx, G.Nt + 1), 0.4)
    one, _ = lambda_map(r, G, desk_windows(), p, _data(), HUM)
    three, _ = lambda_map(r, G, desk_windows(), p, _data(3.0), HUM)
    assert np.abs(three - 3 * one).max() <= 1e-9 * np.abs(one).max()


def test_saturated_birth_rate_makes_lambda_constant():
    r = _rates(kind="clipped", sat=0.05)
    rng = np.random.default_rng(2)
    p1 = rng.uniform(0.05, 1.0, (G.Nx, G.Nt + 1))
    p2 = -rng.uniform(1.0, 7.0, (G.Nx, G.Nt + 1))
    a, _ = lambda_map(r, G, desk_windows(), p1, _data(), HUM)
    b, _ = lambda_map(r, G, desk_windows(), p2, _data(), HUM)
    assert np.abs(a - b).max() <= 1e-12 * np.abs(a).max()


def test_halving_lipschitz_constant_reduces_contraction():
    cfg = FixedPointConfig(damping=1.0, tol=1e-10, max_outer_iters=40)
    rates = [_rates(beta_h=1.5), _rates(beta_h=0.75)]
    assert rates[1].lipschitz_L == pytest.approx(0.5 * rates[0].lipschitz_L)
    first = [iterate(r, G, desk_windows(), _data(), cfg, HUM).contraction[0] for r in rates]
    assert first[1] < first[0]


def test_converged_profile_is_a_fixed_point():
    r = _rates()
    cfg = FixedPointConfig(tol=1e-10)
    res = iterate(r, G, desk_windows(), _data(), cfg, HUM)
    assert res.converged
    assert np.all(np.diff(res.residual_history) < 0)
    M, _ = lambda_map(r, G, desk_windows(), res.p, _data(), HUM)
    assert norm_qt(M - res.p, G) <= 1e-9 * max(1.0, norm_qt(res.p, G))
    again = iterate(r, G, desk_windows(), _data(), cfg, HUM, p0=res.p)
    assert again.iterations == 1 and again.converged
    assert res.consistency <= 1e-9


def test_free_run_start_reaches_same_point():
    r = _rates()
    a = iterate(r, G, desk_windows(), _data(), FixedPointConfig(tol=1e-10), HUM)
    b = iterate(r, G, desk_windows(), _data(), FixedPointConfig(tol=1e-10, initial_p="free-run"), HUM)
    assert norm_qt(a.p - b.p, G) <= 1e-8 * norm_qt(a.p, G)
    assert free_run_profile(r, G, _data()).shape == (G.Nx, G.Nt + 1)


def test_budget_exhaustion_reports_unconverged():
    res = iterate(_rates(), G, desk_windows(), _data(), FixedPointConfig(tol=1e-15, max_outer_iters=2), HUM)
    assert not res.converged and res.iterations == 2
    assert set(res.summary()) >= {"fp_converged", "fp_iterations", "fp_residual", "consistency"}


@pytest.mark.parametrize("kw", [dict(damping=0.0), dict(damping=1.5), dict(tol=0.0), dict(initial_p="random")])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        FixedPointConfig(**kw)
