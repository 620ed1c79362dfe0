# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: coordinate-descent sweeps and proximal Langevin chains.

Twin of ``_kernels_py`` — same signatures, same iteration order, same
stepping rules — selected at import time when the extension is available.
The matrix chain performs its singular-value thresholding in-kernel through
LAPACK's dgesdd.
"""

import numpy as np

from libc.math cimport fabs, sqrt
from scipy.linalg.cython_lapack cimport dgesdd


cdef inline double _soft1(double x, double t) noexcept nogil:
    if x > t:
        return x - t
    if x < -t:
        return x + t
    return 0.0


cdef inline bint _finite(double x) noexcept nogil:
    return x == x and fabs(x) <= 1e308


cpdef double cd_sweeps(const double[:, ::1] gram, const double[::1] xty, double lam,
                       double[::1] beta, int n_sweeps):
    """Cyclic coordinate-descent sweeps; see the NumPy twin for the contract."""
    cdef Py_ssize_t p = beta.shape[0]
    cdef Py_ssize_t j, k
    cdef int s
    cdef double gjj, old, new, z, change, ac
    cdef double delta_max = 0.0
    g_arr = np.asarray(xty) - np.asarray(gram) @ np.asarray(beta)
    cdef double[::1] g = np.ascontiguousarray(g_arr)
    for s in range(n_sweeps):
        delta_max = 0.0
        for j in range(p):
            gjj = gram[j, j]
            old = beta[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                z = g[j] + gjj * old
                new = _soft1(z, lam) / gjj
            change = new - old
            if change != 0.0:
                for k in range(p):
                    g[k] -= gram[k, j] * change
                beta[j] = new
                ac = fabs(change)
                if ac > delta_max:
                    delta_max = ac
    return delta_max


cpdef int langevin_chain(const double[:, ::1] A, const double[::1] b, double lam, double tau,
                         double delta, double gamma, double[::1] u,
                         const double[:, ::1] noise, double[:, ::1] draws,
                         long burn_in, long thinning):
    """Proximal Langevin chain with coordinatewise soft-threshold prox.

    Returns 0 on success, 1 if an iterate went non-finite.
    """
    cdef Py_ssize_t p = u.shape[0]
    cdef long S = draws.shape[0]
    cdef long total = burn_in + S * thinning
    cdef long t, k = 0
    cdef Py_ssize_t i, jj
    cdef double keep = 1.0 - delta / gamma
    cdef double pull = delta / gamma
    cdef double threshold = gamma * lam / tau
    cdef double sot = delta / tau
    cdef double amp = sqrt(2.0 * delta)
    cdef double acc, ui
    cdef bint ok
    grad_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    for t in range(total):
        for i in range(p):
            acc = 0.0
            for jj in range(p):
                acc += A[i, jj] * u[jj]
            grad[i] = acc - b[i]
        ok = True
        for i in range(p):
            ui = keep * u[i] + pull * _soft1(u[i], threshold) \
                 - sot * grad[i] + amp * noise[t, i]
            u[i] = ui
            if not _finite(ui):
                ok = False
        if not ok:
            return 1
        if t >= burn_in and (t - burn_in) % thinning == thinning - 1:
            for i in range(p):
                draws[k, i] = u[i]
            k += 1
    return 0


cdef int _svt_inplace(double* mat, int m1, int m2, double threshold,
                      double* a_copy, double* u_buf, double* vt_buf,
                      double* s_buf, double* work, int lwork,
                      int* iwork) noexcept nogil:
    # LAPACK reads our row-major (m1 x m2) buffer as the column-major
    # (m2 x m1) matrix M^T.  dgesdd('S') factors M^T = Uf S Vf^T, hence
    # M = Vf S Uf^T; in row-major terms vt_buf holds Vf as (m1 x k) and
    # u_buf holds Uf^T as (k x m2), so the thresholded reconstruction is a
    # plain triple product over those buffers.
    cdef int m = m2
    cdef int n = m1
    cdef int k = m if m < n else n
    cdef int info = 0
    cdef int lda = m, ldu = m, ldvt = k
    cdef Py_ssize_t i, j, l
    cdef Py_ssize_t total = <Py_ssize_t>m1 * m2
    cdef double acc
    for i in range(total):
        a_copy[i] = mat[i]
    dgesdd('S', &m, &n, a_copy, &lda, s_buf, u_buf, &ldu, vt_buf, &ldvt,
           work, &lwork, iwork, &info)
    if info != 0:
        return info
    for l in range(k):
        s_buf[l] = s_buf[l] - threshold
        if s_buf[l] < 0.0:
            s_buf[l] = 0.0
    for i in range(m1):
        for j in range(m2):
            acc = 0.0
            for l in range(k):
                acc += vt_buf[i * k + l] * s_buf[l] * u_buf[l * m2 + j]
            mat[i * m2 + j] = acc
    return 0


cpdef int matrix_langevin_chain(const double[:, ::1] A, const double[::1] b, double lam,
                                double tau, double delta, double gamma,
                                double[::1] u, const double[:, ::1] noise,
                                double[:, ::1] draws, long burn_in,
                                long thinning, int m1, int m2):
    """Matrix-variate chain: same stepping rule, prox = SVT via dgesdd.

    Returns 0 on success, 1 on a non-finite iterate, 2 if the SVD failed.
    """
    cdef Py_ssize_t p = u.shape[0]
    cdef long S = draws.shape[0]
    cdef long total = burn_in + S * thinning
    cdef long t, kk = 0
    cdef Py_ssize_t i, jj
    cdef double keep = 1.0 - delta / gamma
    cdef double pull = delta / gamma
    cdef double threshold = gamma * lam / tau
    cdef double sot = delta / tau
    cdef double amp = sqrt(2.0 * delta)
    cdef double acc, ui
    cdef bint ok
    cdef int kmin = m1 if m1 < m2 else m2
    cdef int info

    grad_arr = np.empty(p, dtype=np.float64)
    prox_arr = np.empty(p, dtype=np.float64)
    a_copy_arr = np.empty(p, dtype=np.float64)
    u_buf_arr = np.empty(<Py_ssize_t>m2 * kmin, dtype=np.float64)
    vt_buf_arr = np.empty(<Py_ssize_t>kmin * m1, dtype=np.float64)
    s_buf_arr = np.empty(kmin, dtype=np.float64)
    iwork_arr = np.empty(8 * kmin, dtype=np.intc)
    cdef double[::1] grad = grad_arr
    cdef double[::1] prox = prox_arr
    cdef double[::1] a_copy = a_copy_arr
    cdef double[::1] u_buf = u_buf_arr
    cdef double[::1] vt_buf = vt_buf_arr
    cdef double[::1] s_buf = s_buf_arr
    cdef int[::1] iwork = iwork_arr

    # workspace size query
    cdef int lwork = -1
    cdef int m = m2, n = m1, lda = m2, ldu = m2, ldvt = kmin
    cdef double wkopt = 0.0
    info = 0
    dgesdd('S', &m, &n, &a_copy[0], &lda, &s_buf[0], &u_buf[0], &ldu,
           &vt_buf[0], &ldvt, &wkopt, &lwork, &iwork[0], &info)
    if info != 0:
        return 2
    lwork = <int>wkopt
    work_arr = np.empty(lwork, dtype=np.float64)
    cdef double[::1] work = work_arr

    for t in range(total):
        for i in range(p):
            acc = 0.0
            for jj in range(p):
                acc += A[i, jj] * u[jj]
            grad[i] = acc - b[i]
        for i in range(p):
            prox[i] = u[i]
        info = _svt_inplace(&prox[0], m1, m2, threshold, &a_copy[0],
                            &u_buf[0], &vt_buf[0], &s_buf[0], &work[0],
                            lwork, &iwork[0])
        if info != 0:
            return 2
        ok = True
        for i in range(p):
            ui = keep * u[i] + pull * prox[i] - sot * grad[i] + amp * noise[t, i]
            u[i] = ui
            if not _finite(ui):
                ok = False
        if not ok:
            return 1
        if t >= burn_in and (t - burn_in) % thinning == thinning - 1:
            for i in range(p):
                draws[kk, i] = u[i]
            kk += 1
    return 0
