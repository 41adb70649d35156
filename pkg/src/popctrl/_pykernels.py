"""NumPy/SciPy implementation of the time-marching kernels.

Same signatures as the compiled ``_ckernels`` module. Arrays follow the
``(Nx, Na + 1)`` field layout; ``src_*`` are ``(Nt + 1, Nx, Na + 1)`` sources
already multiplied by ``dt`` (slice ``k + 1`` is injected during step ``k``),
``kb`` is ``(Nt, Nx, Na + 1)`` and holds quadrature weight times birth rate for
step ``k``. ``r`` is ``K dt / dx^2``.
"""
import numpy as np
from scipy.linalg import solveh_banded


def _banded(r, n):
    ab = np.empty((2, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = -r
    ab[1, :] = 1.0 + 2.0 * r
    return ab


def diffuse(u, r):
    if r == 0.0:
        return np.array(u, dtype=float)
    return solveh_banded(_banded(r, u.shape[0]), u, check_finite=False)


def _advance(u, s, r):
    y = np.empty_like(u)
    y[:, 0] = 0.0
    y[:, 1:] = u[:, :-1] * s[1:]
    return diffuse(y, r)


def forward_step(m, f, src_m, src_f, kb, s_m, s_f, r_m, r_f, gamma):
    """One split step; returns ``(m_next, f_next, births)``."""
    yf = _advance(f, s_f, r_f)
    ym = _advance(m, s_m, r_m)
    if src_f is not None:
        yf += src_f
    if src_m is not None:
        ym += src_m
    births = np.einsum("ji,ji->j", kb, yf)
    yf[:, 0] += gamma * births
    ym[:, 0] += (1.0 - gamma) * births
    return ym, yf, births


def forward_march(m0, f0, src_m, src_f, kb, s_m, s_f, r_m, r_f, gamma):
    nt = kb.shape[0]
    nx, na1 = m0.shape
    m = np.empty((nt + 1, nx, na1))
    f = np.empty((nt + 1, nx, na1))
    births = np.zeros((nx, nt + 1))
    m[0] = m0
    f[0] = f0
    for k in range(nt):
        m[k + 1], f[k + 1], births[:, k + 1] = forward_step(
            m[k], f[k],
            None if src_m is None else src_m[k + 1],
            None if src_f is None else src_f[k + 1],
            kb[k], s_m, s_f, r_m, r_f, gamma,
        )
    return m, f, births


def _retreat(z, s, r):
    w = diffuse(z, r)
    out = np.empty_like(w)
    out[:, :-1] = w[:, 1:] * s[1:]
    out[:, -1] = 0.0
    return out


def adjoint_step(n, l, kb, s_m, s_f, r_m, r_f, gamma):
    """Transpose of ``forward_step``; returns ``(n_prev, l_prev, q)``.

    ``q`` is ``l`` plus the birth source scattered from the age-0 traces of
    ``(n, l)``; it is the quantity the female control is paired with.
    """
    trace = (1.0 - gamma) * n[:, 0] + gamma * l[:, 0]
    q = l + kb * trace[:, None]
    return _retreat(n, s_m, r_m), _retreat(q, s_f, r_f), q


def adjoint_march(nT, lT, kb, s_m, s_f, r_m, r_f, gamma):
    nt = kb.shape[0]
    nx, na1 = nT.shape
    n = np.empty((nt + 1, nx, na1))
    l = np.empty((nt + 1, nx, na1))
    q = np.empty((nt + 1, nx, na1))
    n[nt] = nT
    l[nt] = lT
    for k in range(nt - 1, -1, -1):
        n[k], l[k], q[k + 1] = adjoint_step(n[k + 1], l[k + 1], kb[k], s_m, s_f, r_m, r_f, gamma)
    q[0] = l[0]
    return n, l, q
