# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled Euler-Maruyama kernel for the coupled stochastic master equation.

Mirrors spinfilter._pykernel.run_batch step for step; see that module for
the scheme. Per-trajectory loops over banded N x N complex updates.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, acos, cos, fabs, pow, round, sin, sqrt

cnp.import_array()

COMPILED = True

DEF HARD_TRACE = 0.1
DEF HARD_EIG = -0.1


cdef inline double _clip01(double x) nogil:
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


cdef inline double _cutoff(double x, double e1, double e2) nogil:
    if x < e1:
        return 0.0
    if x > e2:
        return 1.0
    return 0.5 * sin(M_PI * (2.0 * x - e1 - e2) / (2.0 * (e2 - e1))) + 0.5


cdef inline double _signed_pow(double x, double beta) nogil:
    if fabs(beta - round(beta)) < 1e-12:
        return pow(x, round(beta))
    if x == 0.0:
        return 0.0
    if x > 0.0:
        return pow(x, beta)
    return -pow(-x, beta)


cdef inline double _cabs2(double complex x) nogil:
    return x.real * x.real + x.imag * x.imag


cdef inline double complex _conj(double complex x) nogil:
    return x.real - 1j * x.imag


cdef inline double _min_eig3(double complex * a) nogil:
    """Smallest eigenvalue of a 3x3 Hermitian matrix stored row-major."""
    cdef double d0 = a[0].real
    cdef double d1 = a[4].real
    cdef double d2 = a[8].real
    cdef double complex o01 = a[1]
    cdef double complex o02 = a[2]
    cdef double complex o12 = a[5]
    cdef double q = (d0 + d1 + d2) / 3.0
    cdef double e0 = d0 - q
    cdef double e1 = d1 - q
    cdef double e2 = d2 - q
    cdef double aa = _cabs2(o01)
    cdef double bb = _cabs2(o02)
    cdef double cc = _cabs2(o12)
    cdef double p2 = (e0 * e0 + e1 * e1 + e2 * e2) / 6.0 + (aa + bb + cc) / 3.0
    cdef double p = sqrt(p2)
    cdef double det, r
    cdef double complex triple
    if p <= 0.0:
        return q
    triple = o01 * o12 * _conj(o02)
    det = e0 * e1 * e2 - e0 * cc - e2 * aa - e1 * bb + 2.0 * triple.real
    r = det / (2.0 * p2 * p)
    if r < -1.0:
        r = -1.0
    elif r > 1.0:
        r = 1.0
    return q + 2.0 * p * cos(acos(r) / 3.0 + 2.0 * M_PI / 3.0)


cdef inline double _pure_dist(double pop) nogil:
    cdef double v = 2.0 - 2.0 * sqrt(_clip01(pop))
    if v < 0.0:
        v = 0.0
    return sqrt(v)


cdef inline bint _hygiene(
    double complex * s,
    Py_ssize_t n,
    bint renorm,
    bint track3,
    double * mh,
    double * mtp,
    double * mto,
    double * me,
) nogil:
    """Hermitize/renormalize in place, update defect metrics; True if blown."""
    cdef double herm = 0.0, tr = 0.0, defect, post, worst, mag
    cdef double complex diff, avg
    cdef Py_ssize_t jj, kk
    for jj in range(n):
        tr += s[jj * n + jj].real
        for kk in range(n):
            diff = s[jj * n + kk] - _conj(s[kk * n + jj])
            mag = sqrt(_cabs2(diff))
            if mag > herm:
                herm = mag
    if herm > mh[0]:
        mh[0] = herm
    defect = fabs(tr - 1.0)
    if defect > mtp[0]:
        mtp[0] = defect
    if renorm:
        for jj in range(n):
            for kk in range(jj, n):
                avg = 0.5 * (s[jj * n + kk] + _conj(s[kk * n + jj]))
                s[jj * n + kk] = avg / tr
                s[kk * n + jj] = _conj(avg) / tr
        post = 0.0
        for jj in range(n):
            post += s[jj * n + jj].real
        post = fabs(post - 1.0)
    else:
        post = defect
    if post > mto[0]:
        mto[0] = post
    if track3:
        worst = _min_eig3(s)
        if worst < me[0]:
            me[0] = worst
    else:
        worst = s[0].real
        for jj in range(1, n):
            if s[jj * n + jj].real < worst:
                worst = s[jj * n + jj].real
    return (not (defect <= HARD_TRACE)) or worst < HARD_EIG


def run_batch(
    cnp.ndarray rho0,
    cnp.ndarray rhohat0,
    cnp.ndarray dw_arr,
    cnp.ndarray z_arr,
    cnp.ndarray c_arr,
    cnp.ndarray pvec,
    cnp.ndarray cvec,
    double dt,
    int stride,
    int mode,
    bint renormalize,
    cnp.ndarray watch_arr,
):
    cdef Py_ssize_t batch = dw_arr.shape[0]
    cdef Py_ssize_t n_steps = dw_arr.shape[1]
    cdef Py_ssize_t n = rho0.shape[1]
    if n_steps % stride != 0:
        raise ValueError("record stride must divide the number of steps")
    cdef Py_ssize_t n_rec = n_steps // stride + 1

    cdef const double[::1] pv = np.ascontiguousarray(pvec, dtype=float)
    cdef const double[::1] cv = np.ascontiguousarray(cvec, dtype=float)
    cdef const double[::1] wv = np.ascontiguousarray(watch_arr, dtype=float)

    cdef double omega = pv[0]
    cdef double eta = pv[1]
    cdef double em_m = pv[2]
    cdef double omega_hat = pv[3]
    cdef double eta_hat = pv[4]
    cdef double em_m_hat = pv[5]
    cdef double sq = sqrt(eta * em_m)
    cdef double sq_hat = sqrt(eta_hat * em_m_hat)

    cdef int code = <int>cv[0]
    cdef double alpha = cv[1]
    cdef double beta = cv[2]
    cdef Py_ssize_t nbar = <Py_ssize_t>cv[3]
    cdef double eps1 = cv[4]
    cdef double eps2 = cv[5]

    cdef int w_code = <int>wv[0]
    cdef Py_ssize_t w_true = <Py_ssize_t>wv[1]
    cdef Py_ssize_t w_filt = <Py_ssize_t>wv[2]
    cdef double w_thr = wv[3]
    cdef bint w_stop = wv[4] != 0.0

    cdef double j_spin = (n - 1) / 2.0

    cdef const double complex[:, :, ::1] r0 = np.ascontiguousarray(rho0, dtype=complex)
    cdef const double complex[:, :, ::1] h0 = np.ascontiguousarray(rhohat0, dtype=complex)
    cdef const double[:, ::1] dw = np.ascontiguousarray(dw_arr, dtype=float)
    cdef const double[::1] z = np.ascontiguousarray(z_arr, dtype=float)
    cdef const double[::1] c = np.ascontiguousarray(c_arr, dtype=float)

    snaps_rho = np.empty((batch, n_rec, n, n), dtype=complex)
    snaps_rhohat = np.empty((batch, n_rec, n, n), dtype=complex)
    u_rec = np.empty((batch, n_rec))
    y_rec = np.empty((batch, n_rec))
    watch_step = np.full(batch, -1, dtype=np.int64)
    blow_step = np.full(batch, -1, dtype=np.int64)
    max_tr_pre = np.zeros(batch)
    max_tr_post = np.zeros(batch)
    max_herm = np.zeros(batch)
    min_eig = np.full(batch, np.inf)

    cdef double complex[:, :, :, ::1] sr = snaps_rho
    cdef double complex[:, :, :, ::1] sh = snaps_rhohat
    cdef double[:, ::1] ur = u_rec
    cdef double[:, ::1] yr = y_rec
    cdef long long[::1] ws = watch_step
    cdef long long[::1] bs = blow_step
    cdef double[::1] mtp = max_tr_pre
    cdef double[::1] mto = max_tr_post
    cdef double[::1] mh = max_herm
    cdef double[::1] me = min_eig

    work = np.empty((4, n, n), dtype=complex)
    cdef double complex[:, :, ::1] wk = work
    cdef double complex * r
    cdef double complex * h
    cdef double complex * rn
    cdef double complex * hn
    cdef double complex * swap

    cdef Py_ssize_t b, step, rec, jj, kk, r2
    cdef double t_true, t_hat, u, pop, dwk, dy, gap, y_cum
    cdef double dzz, s_dist
    cdef double complex jyr, rjy, drift, gval
    cdef double complex im = 1j
    cdef bint blown, track3 = (n == 3)

    with nogil:
        for b in range(batch):
            r = &wk[0, 0, 0]
            h = &wk[1, 0, 0]
            rn = &wk[2, 0, 0]
            hn = &wk[3, 0, 0]
            for jj in range(n):
                for kk in range(n):
                    r[jj * n + kk] = r0[b, jj, kk]
                    h[jj * n + kk] = h0[b, jj, kk]
            y_cum = 0.0
            rec = 0

            if w_code != 0:
                s_dist = _pure_dist(r[w_true * n + w_true].real) + _pure_dist(
                    h[w_filt * n + w_filt].real
                )
                if (w_code == 1 and s_dist > w_thr) or (w_code == 2 and s_dist < w_thr):
                    ws[b] = 0

            for step in range(n_steps + 1):
                t_true = 0.0
                t_hat = 0.0
                for jj in range(n):
                    t_true += z[jj] * r[jj * n + jj].real
                    t_hat += z[jj] * h[jj * n + jj].real

                if code == 0:
                    u = 0.0
                elif code == 1:
                    pop = _clip01(h[nbar * n + nbar].real)
                    u = alpha * pow(1.0 - pop, beta)
                else:
                    pop = _clip01(h[nbar * n + nbar].real)
                    u = (
                        alpha
                        * _signed_pow(j_spin - nbar - t_hat, beta)
                        * _cutoff(_clip01(1.0 - pop), eps1, eps2)
                    )

                if step % stride == 0:
                    for jj in range(n):
                        for kk in range(n):
                            sr[b, rec, jj, kk] = r[jj * n + kk]
                            sh[b, rec, jj, kk] = h[jj * n + kk]
                    ur[b, rec] = u
                    yr[b, rec] = y_cum
                    rec += 1
                if step == n_steps:
                    break
                if w_code != 0 and w_stop and ws[b] >= 0:
                    # lane finished watching: freeze remaining records
                    for r2 in range(rec, n_rec):
                        for jj in range(n):
                            for kk in range(n):
                                sr[b, r2, jj, kk] = r[jj * n + kk]
                                sh[b, r2, jj, kk] = h[jj * n + kk]
                        ur[b, r2] = u
                        yr[b, r2] = y_cum
                    break

                dwk = dw[b, step]
                dy = dwk + 2.0 * sq * t_true * dt
                gap = sq * t_true - sq_hat * t_hat

                for jj in range(n):
                    for kk in range(n):
                        jyr = 0.0
                        if jj > 0:
                            jyr = jyr + im * c[jj - 1] * r[(jj - 1) * n + kk]
                        if jj < n - 1:
                            jyr = jyr - im * c[jj] * r[(jj + 1) * n + kk]
                        rjy = 0.0
                        if kk > 0:
                            rjy = rjy - im * c[kk - 1] * r[jj * n + kk - 1]
                        if kk < n - 1:
                            rjy = rjy + im * c[kk] * r[jj * n + kk + 1]
                        dzz = z[jj] - z[kk]
                        drift = (
                            -im * omega * dzz - 0.5 * em_m * dzz * dzz
                        ) * r[jj * n + kk] - im * u * (jyr - rjy)
                        gval = sq * (z[jj] + z[kk] - 2.0 * t_true) * r[jj * n + kk]
                        if mode == 0:
                            rn[jj * n + kk] = r[jj * n + kk] + drift * dt + gval * dwk
                        else:
                            rn[jj * n + kk] = r[jj * n + kk] + drift * dt + gval * (
                                dy - 2.0 * sq * t_true * dt
                            )

                        jyr = 0.0
                        if jj > 0:
                            jyr = jyr + im * c[jj - 1] * h[(jj - 1) * n + kk]
                        if jj < n - 1:
                            jyr = jyr - im * c[jj] * h[(jj + 1) * n + kk]
                        rjy = 0.0
                        if kk > 0:
                            rjy = rjy - im * c[kk - 1] * h[jj * n + kk - 1]
                        if kk < n - 1:
                            rjy = rjy + im * c[kk] * h[jj * n + kk + 1]
                        drift = (
                            -im * omega_hat * dzz - 0.5 * em_m_hat * dzz * dzz
                        ) * h[jj * n + kk] - im * u * (jyr - rjy)
                        gval = sq_hat * (z[jj] + z[kk] - 2.0 * t_hat) * h[jj * n + kk]
                        if mode == 0:
                            hn[jj * n + kk] = (
                                h[jj * n + kk]
                                + drift * dt
                                + gval * dwk
                                + 2.0 * gap * gval * dt
                            )
                        else:
                            hn[jj * n + kk] = h[jj * n + kk] + drift * dt + gval * (
                                dy - 2.0 * sq_hat * t_hat * dt
                            )
                y_cum += dy

                blown = _hygiene(rn, n, renormalize, track3, &mh[b], &mtp[b], &mto[b], &me[b])
                if _hygiene(hn, n, renormalize, track3, &mh[b], &mtp[b], &mto[b], &me[b]):
                    blown = 1
                if blown and bs[b] < 0:
                    bs[b] = step + 1

                swap = r
                r = rn
                rn = swap
                swap = h
                h = hn
                hn = swap

                if w_code != 0 and ws[b] < 0:
                    s_dist = _pure_dist(r[w_true * n + w_true].real) + _pure_dist(
                        h[w_filt * n + w_filt].real
                    )
                    if (w_code == 1 and s_dist > w_thr) or (w_code == 2 and s_dist < w_thr):
                        ws[b] = step + 1

    return {
        "snaps_rho": snaps_rho,
        "snaps_rhohat": snaps_rhohat,
        "u_rec": u_rec,
        "y_rec": y_rec,
        "watch_step": watch_step,
        "blow_step": blow_step,
        "max_trace_defect_pre": max_tr_pre,
        "max_trace_defect_post": max_tr_post,
        "max_herm_defect": max_herm,
        "min_eig": min_eig,
    }
