# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-marching kernels; drop-in for ``popctrl._pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef void _thomas(double[:, ::1] u, double r, double* denom) noexcept nogil:
    # in-place solve of (I + r*tridiag(-1, 2, -1)) x = u, columns independent
    cdef Py_ssize_t nx = u.shape[0], na1 = u.shape[1], j, i
    cdef double b = 1.0 + 2.0 * r
    if r == 0.0:
        return
    denom[0] = b
    for j in range(1, nx):
        denom[j] = b - r * r / denom[j - 1]
    for i in range(na1):
        u[0, i] = u[0, i] / denom[0]
    for j in range(1, nx):
        for i in range(na1):
            u[j, i] = (u[j, i] + r * u[j - 1, i]) / denom[j]
    for j in range(nx - 2, -1, -1):
        for i in range(na1):
            u[j, i] = u[j, i] + (r / denom[j]) * u[j + 1, i]


def diffuse(u, double r):
    cdef double[:, ::1] out = np.array(u, dtype=np.float64, order="C")
    cdef double* denom = <double*> malloc(out.shape[0] * sizeof(double))
    try:
        _thomas(out, r, denom)
    finally:
        free(denom)
    return np.asarray(out)


cdef void _fwd(double[:, ::1] m, double[:, ::1] f, double[:, ::1] ym, double[:, ::1] yf,
               const double[:, ::1] srcm, const double[:, ::1] srcf, bint has_m, bint has_f,
               const double[:, ::1] kb, const double[::1] sm, const double[::1] sf,
               double rm, double rf, double gamma, double* births, double* denom) noexcept nogil:
    cdef Py_ssize_t nx = m.shape[0], na1 = m.shape[1], j, i
    cdef double acc
    for j in range(nx):
        ym[j, 0] = 0.0
        yf[j, 0] = 0.0
        for i in range(1, na1):
            ym[j, i] = m[j, i - 1] * sm[i]
            yf[j, i] = f[j, i - 1] * sf[i]
    _thomas(ym, rm, denom)
    _thomas(yf, rf, denom)
    if has_m:
        for j in range(nx):
            for i in range(na1):
                ym[j, i] += srcm[j, i]
    if has_f:
        for j in range(nx):
            for i in range(na1):
                yf[j, i] += srcf[j, i]
    for j in range(nx):
        acc = 0.0
        for i in range(na1):
            acc += kb[j, i] * yf[j, i]
        births[j] = acc
        yf[j, 0] += gamma * acc
        ym[j, 0] += (1.0 - gamma) * acc


def forward_step(m, f, src_m, src_f, kb, s_m, s_f, double r_m, double r_f, double gamma):
    cdef double[:, ::1] mv = np.ascontiguousarray(m, dtype=np.float64)
    cdef double[:, ::1] fv = np.ascontiguousarray(f, dtype=np.float64)
    cdef Py_ssize_t nx = mv.shape[0], na1 = mv.shape[1]
    ym_arr = np.empty((nx, na1))
    yf_arr = np.empty((nx, na1))
    births_arr = np.empty(nx)
    cdef double[:, ::1] ym = ym_arr
    cdef double[:, ::1] yf = yf_arr
    cdef double[::1] bv = births_arr
    cdef double[:, ::1] dummy = np.zeros((1, 1))
    cdef const double[:, ::1] srcm = dummy if src_m is None else np.ascontiguousarray(src_m, dtype=np.float64)
    cdef const double[:, ::1] srcf = dummy if src_f is None else np.ascontiguousarray(src_f, dtype=np.float64)
    cdef const double[:, ::1] kbv = np.ascontiguousarray(kb, dtype=np.float64)
    cdef const double[::1] smv = np.ascontiguousarray(s_m, dtype=np.float64)
    cdef const double[::1] sfv = np.ascontiguousarray(s_f, dtype=np.float64)
    cdef double* denom = <double*> malloc(nx * sizeof(double))
    try:
        _fwd(mv, fv, ym, yf, srcm, srcf, src_m is not None, src_f is not None,
             kbv, smv, sfv, r_m, r_f, gamma, &bv[0], denom)
    finally:
        free(denom)
    return ym_arr, yf_arr, births_arr


def forward_march(m0, f0, src_m, src_f, kb, s_m, s_f, double r_m, double r_f, double gamma):
    cdef const double[:, :, ::1] kbv = np.ascontiguousarray(kb, dtype=np.float64)
    cdef Py_ssize_t nt = kbv.shape[0]
    m0 = np.ascontiguousarray(m0, dtype=np.float64)
    cdef Py_ssize_t nx = m0.shape[0], na1 = m0.shape[1], k, j
    m_arr = np.empty((nt + 1, nx, na1))
    f_arr = np.empty((nt + 1, nx, na1))
    b_arr = np.zeros((nt + 1, nx))
    cdef double[:, :, ::1] mv = m_arr
    cdef double[:, :, ::1] fv = f_arr
    cdef double[:, ::1] bv = b_arr
    m_arr[0] = m0
    f_arr[0] = f0
    cdef double[:, :, ::1] dummy = np.zeros((nt + 1, 1, 1))
    cdef const double[:, :, ::1] srcm = dummy if src_m is None else np.ascontiguousarray(src_m, dtype=np.float64)
    cdef const double[:, :, ::1] srcf = dummy if src_f is None else np.ascontiguousarray(src_f, dtype=np.float64)
    cdef bint hm = src_m is not None, hf = src_f is not None
    cdef const double[::1] smv = np.ascontiguousarray(s_m, dtype=np.float64)
    cdef const double[::1] sfv = np.ascontiguousarray(s_f, dtype=np.float64)
    cdef double* denom = <double*> malloc(nx * sizeof(double))
    try:
        with nogil:
            for k in range(nt):
                _fwd(mv[k], fv[k], mv[k + 1], fv[k + 1], srcm[k + 1], srcf[k + 1], hm, hf,
                     kbv[k], smv, sfv, r_m, r_f, gamma, &bv[k + 1, 0], denom)
    finally:
        free(denom)
    return m_arr, f_arr, np.ascontiguousarray(b_arr.T)


cdef void _adj(double[:, ::1] n, double[:, ::1] l, double[:, ::1] nprev, double[:, ::1] lprev,
               double[:, ::1] q, double[:, ::1] work, const double[:, ::1] kb,
               const double[::1] sm, const double[::1] sf, double rm, double rf, double gamma,
               double* denom) noexcept nogil:
    cdef Py_ssize_t nx = n.shape[0], na1 = n.shape[1], j, i
    cdef double tr
    for j in range(nx):
        tr = (1.0 - gamma) * n[j, 0] + gamma * l[j, 0]
        for i in range(na1):
            q[j, i] = l[j, i] + kb[j, i] * tr
            work[j, i] = q[j, i]
    _thomas(work, rf, denom)
    for j in range(nx):
        for i in range(na1 - 1):
            lprev[j, i] = work[j, i + 1] * sf[i + 1]
        lprev[j, na1 - 1] = 0.0
    for j in range(nx):
        for i in range(na1):
            work[j, i] = n[j, i]
    _thomas(work, rm, denom)
    for j in range(nx):
        for i in range(na1 - 1):
            nprev[j, i] = work[j, i + 1] * sm[i + 1]
        nprev[j, na1 - 1] = 0.0


def adjoint_step(n, l, kb, s_m, s_f, double r_m, double r_f, double gamma):
    cdef double[:, ::1] nv = np.ascontiguousarray(n, dtype=np.float64)
    cdef double[:, ::1] lv = np.ascontiguousarray(l, dtype=np.float64)
    cdef Py_ssize_t nx = nv.shape[0], na1 = nv.shape[1]
    np_arr = np.empty((nx, na1))
    lp_arr = np.empty((nx, na1))
    q_arr = np.empty((nx, na1))
    cdef double[:, ::1] work = np.empty((nx, na1))
    cdef const double[:, ::1] kbv = np.ascontiguousarray(kb, dtype=np.float64)
    cdef const double[::1] smv = np.ascontiguousarray(s_m, dtype=np.float64)
    cdef const double[::1] sfv = np.ascontiguousarray(s_f, dtype=np.float64)
    cdef double* denom = <double*> malloc(nx * sizeof(double))
    try:
        _adj(nv, lv, np_arr, lp_arr, q_arr, work, kbv, smv, sfv, r_m, r_f, gamma, denom)
    finally:
        free(denom)
    return np_arr, lp_arr, q_arr


def adjoint_march(nT, lT, kb, s_m, s_f, double r_m, double r_f, double gamma):
    cdef const double[:, :, ::1] kbv = np.ascontiguousarray(kb, dtype=np.float64)
    cdef Py_ssize_t nt = kbv.shape[0]
    nT = np.ascontiguousarray(nT, dtype=np.float64)
    cdef Py_ssize_t nx = nT.shape[0], na1 = nT.shape[1], k
    n_arr = np.empty((nt + 1, nx, na1))
    l_arr = np.empty((nt + 1, nx, na1))
    q_arr = np.empty((nt + 1, nx, na1))
    cdef double[:, :, ::1] nv = n_arr
    cdef double[:, :, ::1] lv = l_arr
    cdef double[:, :, ::1] qv = q_arr
    cdef double[:, ::1] work = np.empty((nx, na1))
    n_arr[nt] = nT
    l_arr[nt] = lT
    cdef const double[::1] smv = np.ascontiguousarray(s_m, dtype=np.float64)
    cdef const double[::1] sfv = np.ascontiguousarray(s_f, dtype=np.float64)
    cdef double* denom = <double*> malloc(nx * sizeof(double))
    try:
        with nogil:
            for k in range(nt - 1, -1, -1):
                _adj(nv[k + 1], lv[k + 1], nv[k], lv[k], qv[k + 1], work, kbv[k],
                     smv, sfv, r_m, r_f, gamma, denom)
    finally:
        free(denom)
    q_arr[0] = l_arr[0]
    return n_arr, l_arr, q_arr
