# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop stepping of a TCL population.

Mirrors ``tclflex._pykernel.simulate`` operation for operation; the two must
produce identical floating-point results for identical inputs.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, INFINITY, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()



cdef inline double band_dist(double lo, double hi, double t) nogil:
    cdef double d = 0.0
    if lo - t > d:
        d = lo - t
    if t - hi > d:
        d = t - hi
    return d


cdef inline double ttb(double theta, double asym, double lo, double hi, double rc) nogil:
    cdef double edge, ratio
    if asym < theta:
        edge = lo
    elif asym > theta:
        edge = hi
    else:
        return INFINITY
    if lo <= asym and asym <= hi:
        return INFINITY
    ratio = (theta - asym) / (edge - asym)
    if ratio <= 1.0:
        return 0.0
    return rc * log(ratio)


cdef void merge_sort(int* idx, int* tmp, double* key, int n) nogil:
    # stable, descending by key
    cdef int width = 1, lo, mid, hi, i, j, k
    cdef int* src = idx
    cdef int* dst = tmp
    cdef int* swap
    while width < n:
        lo = 0
        while lo < n:
            mid = lo + width
            if mid > n:
                mid = n
            hi = lo + 2 * width
            if hi > n:
                hi = n
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if key[src[j]] > key[src[i]]:
                    dst[k] = src[j]
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
            lo += 2 * width
        swap = src
        src = dst
        dst = swap
        width *= 2
    if src != idx:
        for i in range(n):
            idx[i] = src[i]


def simulate(double[::1] g, double[::1] omg, double[::1] gtau, double[::1] theta_g,
             double[::1] pe, signed char[::1] heating, double[::1] lo, double[::1] hi,
             double[::1] setpoint, double[::1] cop_r, double[::1] rc, int[::1] tau,
             int[::1] amb_col,
             double[::1] theta, signed char[::1] status, int[::1] since,
             double[:, ::1] ambient, double[:, ::1] noise, double[::1] r,
             unsigned char[::1] managed, int supply_sign, bint nameplate,
             double[:, ::1] records, signed char[:, ::1] history,
             bint want_records, bint want_history):
    cdef Py_ssize_t n = theta.shape[0]
    cdef Py_ssize_t steps = r.shape[0]
    cdef Py_ssize_t k, i, c
    cdef int fail_step = -1
    cdef double amb, p0e, dirn, pred_off, pred_on, d_now, d_off, d_on
    cdef double m_acc, p_plus, p_minus, base, consumed, forced_kw, beta, m_plus, m_minus
    cdef double e, target, cum, after, x, asym, t_new
    cdef int ok_on, ok_off, locked, forced, may, u, toggles, overrides, nc, viol
    cdef signed char* flip = <signed char*> malloc(n * sizeof(signed char))
    cdef signed char* can_c = <signed char*> malloc(n * sizeof(signed char))
    cdef signed char* can_d = <signed char*> malloc(n * sizeof(signed char))
    cdef signed char* frc = <signed char*> malloc(n * sizeof(signed char))
    cdef int* cand = <int*> malloc((n + 1) * sizeof(int))
    cdef int* tmp = <int*> malloc((n + 1) * sizeof(int))
    cdef double* prio = <double*> malloc((n + 1) * sizeof(double))
    if flip == NULL or can_c == NULL or can_d == NULL or frc == NULL or cand == NULL or tmp == NULL or prio == NULL:
        free(flip); free(can_c); free(can_d); free(frc); free(cand); free(tmp); free(prio)
        raise MemoryError()
    try:
        with nogil:
            for k in range(steps):
                m_acc = 0.0
                p_plus = 0.0
                p_minus = 0.0
                base = 0.0
                consumed = 0.0
                forced_kw = 0.0
                for i in range(n):
                    amb = ambient[k, amb_col[i]]
                    dirn = 1.0 - 2.0 * heating[i]
                    p0e = dirn * ((amb - setpoint[i]) / cop_r[i])
                    u = status[i]
                    pred_off = g[i] * theta[i] + omg[i] * (amb - 0.0 * theta_g[i])
                    pred_on = g[i] * theta[i] + omg[i] * (amb - 1.0 * theta_g[i])
                    d_now = band_dist(lo[i], hi[i], theta[i])
                    d_off = band_dist(lo[i], hi[i], pred_off)
                    d_on = band_dist(lo[i], hi[i], pred_on)
                    ok_off = d_off == 0.0 or d_off < d_now
                    ok_on = d_on == 0.0 or d_on < d_now
                    if heating[i] and amb > hi[i]:
                        ok_on = 0
                        ok_off = 1
                    elif (not heating[i]) and amb < lo[i]:
                        ok_on = 0
                        ok_off = 1
                    if not ok_on and not ok_off:
                        if d_on < d_off:
                            ok_on = 1
                        else:
                            ok_off = 1
                    locked = since[i] < tau[i]
                    if u:
                        forced = not ok_on
                    else:
                        forced = not ok_off
                    may = (not locked) or forced
                    can_c[i] = ok_on and (u == 1 or may)
                    can_d[i] = ok_off and (u == 0 or may)
                    frc[i] = forced
                    flip[i] = 0
                    m_acc += pe[i] - p0e
                    # unavailable devices count with their current draw, or
                    # with their rated draw under nameplate accounting
                    if not can_c[i] and (u or nameplate):
                        p_plus += pe[i]
                    if not can_d[i] and (u or nameplate):
                        p_minus += pe[i]
                    base += p0e
                    if u:
                        consumed += pe[i]
                    if forced:
                        if u:
                            forced_kw -= pe[i]
                        else:
                            forced_kw += pe[i]
                m_plus = m_acc - p_plus
                m_minus = base - p_minus
                beta = consumed - base + forced_kw

                if supply_sign != 0 and managed[k] and fail_step < 0:
                    x = r[k]
                    if supply_sign > 0:
                        if fabs(x) > m_plus and x != 0.0:
                            fail_step = <int>k
                    else:
                        if fabs(x) > m_minus and x != 0.0:
                            fail_step = <int>k

                toggles = 0
                overrides = 0
                for i in range(n):
                    if frc[i]:
                        flip[i] = 1
                        toggles += 1
                        if since[i] < tau[i]:
                            overrides += 1

                e = 0.0
                if managed[k]:
                    e = r[k] - beta
                    nc = 0
                    if e > 0.0:
                        for i in range(n):
                            if status[i] == 0 and can_c[i] and not frc[i]:
                                amb = ambient[k, amb_col[i]]
                                asym = amb - 1.0 * theta_g[i]
                                t_new = asym + gtau[i] * (theta[i] - asym)
                                if lo[i] <= t_new and t_new <= hi[i]:
                                    cand[nc] = <int>i
                                    prio[i] = ttb(theta[i], asym, lo[i], hi[i], rc[i])
                                    nc += 1
                    elif e < 0.0:
                        for i in range(n):
                            if status[i] == 1 and can_d[i] and not frc[i]:
                                amb = ambient[k, amb_col[i]]
                                asym = amb - 0.0 * theta_g[i]
                                t_new = asym + gtau[i] * (theta[i] - asym)
                                if lo[i] <= t_new and t_new <= hi[i]:
                                    cand[nc] = <int>i
                                    prio[i] = ttb(theta[i], asym, lo[i], hi[i], rc[i])
                                    nc += 1
                    if nc > 0:
                        merge_sort(cand, tmp, prio, nc)
                        target = fabs(e)
                        cum = 0.0
                        for c in range(nc):
                            i = cand[c]
                            if cum + pe[i] <= target:
                                cum = cum + pe[i]
                                flip[i] = 1
                                toggles += 1
                            else:
                                if fabs(target - (cum + pe[i])) < target - cum:
                                    flip[i] = 1
                                    toggles += 1
                                break

                after = 0.0
                viol = 0
                for i in range(n):
                    if flip[i]:
                        status[i] = 1 - status[i]
                        since[i] = 0
                    u = status[i]
                    if u:
                        after += pe[i]
                    amb = ambient[k, amb_col[i]]
                    theta[i] = g[i] * theta[i] + omg[i] * (amb - u * theta_g[i]) + noise[k, i]
                    since[i] += 1
                    if theta[i] < lo[i] or theta[i] > hi[i]:
                        viol += 1
                    if want_history:
                        history[k, i] = status[i]

                if want_records:
                    records[k, 0] = m_plus
                    records[k, 1] = m_minus
                    records[k, 2] = p_plus
                    records[k, 3] = p_minus
                    records[k, 4] = beta
                    records[k, 5] = consumed
                    records[k, 6] = base
                    records[k, 7] = forced_kw
                    records[k, 8] = e
                    records[k, 9] = after
                    records[k, 10] = toggles
                    records[k, 11] = overrides
                    records[k, 12] = viol
                elif fail_step >= 0:
                    break
    finally:
        free(flip); free(can_c); free(can_d); free(frc); free(cand); free(tmp); free(prio)
    return fail_step
