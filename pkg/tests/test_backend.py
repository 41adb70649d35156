import subprocess
import sys

import numpy as np
import pytest

from conftest import make_rates
from popctrl import backend
from popctrl.core import Grid, diffusion_step
from popctrl.forward import Discretization

py = backend.load("python")
try:
    cy = backend.load("cython")
except ImportError:  # pragma: no cover - extension not built
    cy = None

needs_cython = pytest.mark.skipif(cy is None, reason="compiled kernels not built")


def _setup(seed=0):
    r = make_rates()
    g = Grid(11, 16, 1.0, 0.5)
    rng = np.random.default_rng(seed)
    disc = Discretization(r, g)
    kb = disc.kernels(rng.uniform(0, 2, (g.Nx, g.Nt + 1)))
    fields = [rng.normal(size=g.field_shape) for _ in range(2)]
    srcs = [rng.normal(size=g.traj_shape) for _ in range(2)]
    return g, disc, kb, fields, srcs


def test_python_diffuse_matches_core():
    u = np.random.default_rng(1).normal(size=(9, 4))
    r = 0.3 * 0.05 * 10**2
    assert np.allclose(py.diffuse(u, r), diffusion_step(u, 0.3, 0.05), atol=1e-14)


@needs_cython
def test_diffuse_agrees():
    u = np.random.default_rng(2).normal(size=(17, 6))
    assert np.allclose(cy.diffuse(u, 2.5), py.diffuse(u, 2.5), rtol=1e-13, atol=1e-14)


@needs_cython
@pytest.mark.parametrize("with_sources", [True, False])
def test_forward_march_agrees(with_sources):
    g, disc, kb, (m0, f0), (sm, sf) = _setup()
    if not with_sources:
        sm = sf = None
    a = cy.forward_march(m0, f0, sm, sf, kb, *disc.coeffs)
    b = py.forward_march(m0, f0, sm, sf, kb, *disc.coeffs)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-13)


@needs_cython
def test_adjoint_march_agrees():
    g, disc, kb, (nT, lT), _ = _setup(3)
    a = cy.adjoint_march(nT, lT, kb, *disc.coeffs)
    b = py.adjoint_march(nT, lT, kb, *disc.coeffs)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-13)


@needs_cython
def test_single_steps_agree():
    g, disc, kb, (m, f), (sm, sf) = _setup(4)
    a = cy.forward_step(m, f, sm[1], sf[1], kb[0], *disc.coeffs)
    b = py.forward_step(m, f, sm[1], sf[1], kb[0], *disc.coeffs)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-13)
    a = cy.adjoint_step(m, f, kb[0], *disc.coeffs)
    b = py.adjoint_step(m, f, kb[0], *disc.coeffs)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-13)


def test_unknown_backend():
    with pytest.raises(ValueError):
        backend.load("fortran")


def test_environment_forces_fallback():
    code = "from popctrl import backend; print(backend.NAME)"
    out = subprocess.run([sys.executable, "-c", code], env={"POPCTRL_BACKEND": "python", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
