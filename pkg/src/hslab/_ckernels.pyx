# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled time-stepping kernel; mirrors hslab._pykernels.advance exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, fabs, isfinite

cnp.import_array()

DEF ST_OK = 0
DEF ST_NONFINITE = 1
DEF ST_MAXSTEPS = 2
DEF RATE_FLOOR = 1e-8


def advance(double[:, ::1] rho, double t0, double t1,
            double[::1] m_a, double[::1] m_b,
            double[::1] mf_a, double[::1] mf_b,
            double[::1] bf_a, double[::1] bf_b,
            double[::1] f_a, double[::1] f_b,
            double[::1] vol, double[::1] aflux, double h,
            double k, double safety, double reg_n, double vcap,
            long max_steps, double dt_fixed=0.0):
    cdef Py_ssize_t nb = rho.shape[0]
    cdef Py_ssize_t n = rho.shape[1]
    cdef Py_ssize_t i, j, ib
    cdef double[::1] m = np.empty(n)
    cdef double[::1] mf = np.empty(n + 1)
    cdef double[::1] bf = np.empty(n + 1)
    cdef double[::1] f = np.empty(n)
    cdef double[:, ::1] q = np.empty((nb, n))
    cdef double[::1] G = np.empty(n + 1)
    cdef double[::1] source = np.zeros(nb)
    cdef double[::1] clamped = np.zeros(nb)
    cdef long[::1] caps = np.zeros(nb, dtype=np.int64)
    cdef double t = t0, s, dt, rate, rmax, v, vk1, bj, flo, r, acc
    cdef double span = t1 - t0
    cdef double tol_end = 1e-14 * (fabs(t1) if fabs(t1) > 1.0 else 1.0)
    cdef long steps = 0
    cdef int status = ST_OK
    cdef double last_dt = 0.0

    with nogil:
        while t < t1 - tol_end:
            if steps >= max_steps:
                status = ST_MAXSTEPS
                break
            s = (t - t0) / span if span > 0 else 0.0
            for i in range(n):
                m[i] = m_a[i] + s * (m_b[i] - m_a[i])
                f[i] = f_a[i] + s * (f_b[i] - f_a[i])
            for j in range(n + 1):
                mf[j] = mf_a[j] + s * (mf_b[j] - mf_a[j])
                bf[j] = bf_a[j] + s * (bf_b[j] - bf_a[j])

            # CFL: diagonal coefficient of the explicit update, cell by cell
            rmax = 0.0
            for ib in range(nb):
                for i in range(n):
                    v = rho[ib, i] / m[i]
                    if v > vcap:
                        v = vcap
                        caps[ib] += 1
                    if v > 0.0:
                        vk1 = pow(v, k - 1.0)
                        q[ib, i] = vk1 * v
                    else:
                        vk1 = 0.0
                        q[ib, i] = 0.0
                    rate = k * vk1 / m[i] * (aflux[i] * mf[i] + aflux[i + 1] * mf[i + 1]) / (h * vol[i])
                    bj = -bf[i + 1]
                    if bj > 0.0:
                        rate += aflux[i + 1] * bj / vol[i]
                    bj = bf[i]
                    if bj > 0.0:
                        rate += aflux[i] * bj / vol[i]
                    rate += fabs(f[i])
                    if rate > rmax:
                        rmax = rate
            if dt_fixed > 0.0:
                dt = dt_fixed
            else:
                dt = safety * h * h / (h * h * rmax + RATE_FLOOR)
            if dt > t1 - t:
                dt = t1 - t

            for ib in range(nb):
                G[0] = 0.0
                G[n] = 0.0
                for j in range(1, n):
                    bj = bf[j]
                    if bj > 0.0:
                        r = rho[ib, j]
                    else:
                        r = rho[ib, j - 1]
                    G[j] = aflux[j] * (mf[j] * (q[ib, j] - q[ib, j - 1]) / h + bj * r)
                acc = 0.0
                for i in range(n):
                    r = rho[ib, i]
                    acc += vol[i] * f[i] * r
                    r = r + dt * ((G[i + 1] - G[i]) / vol[i] + f[i] * r)
                    flo = m[i] / reg_n if reg_n > 0.0 else 0.0
                    if r < flo:
                        clamped[ib] += vol[i] * (flo - r)
                        r = flo
                    if not isfinite(r):
                        status = ST_NONFINITE
                    rho[ib, i] = r
                source[ib] += dt * acc
            if status != ST_OK:
                break
            t += dt
            last_dt = dt
            steps += 1
        if status == ST_OK and t >= t1 - tol_end:
            t = t1

    return t, steps, status, last_dt, np.asarray(source), np.asarray(clamped), np.asarray(caps)
