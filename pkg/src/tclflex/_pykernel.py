"""NumPy implementation of the closed-loop stepping kernel.

Used when the compiled extension is unavailable (or ``TCLFLEX_PURE=1``).
Sums are accumulated left to right with ``cumsum`` and logarithms go through
``math.log`` so results match the compiled kernel bit for bit.
"""

from __future__ import annotations

import math

import numpy as np


def _seq_sum(values):
    if values.shape[0] == 0:
        return 0.0
    return float(np.cumsum(values)[-1])


def _band_dist(lo, hi, t):
    return np.maximum(np.maximum(lo - t, t - hi), 0.0)


def _ttb(theta, asym, lo, hi, rc):
    if asym < theta:
        edge = lo
    elif asym > theta:
        edge = hi
    else:
        return math.inf
    if lo <= asym <= hi:
        return math.inf
    ratio = (theta - asym) / (edge - asym)
    if ratio <= 1.0:
        return 0.0
    return rc * math.log(ratio)


def device_flags(g, omg, theta_g, heating, lo, hi, setpoint, cop_r, tau, theta, status, since, amb):
    """Vectorised admissibility and availability for one step.

    Returns ``(u, p0e, forced, locked, can_c, can_d)`` with ``p0e`` the
    electrical-sense baseline power of every device.
    """
    is_heat = heating.astype(bool)
    dirn = 1.0 - 2.0 * heating.astype(np.float64)
    p0e = dirn * ((amb - setpoint) / cop_r)
    u = status.astype(bool)
    pred_off = g * theta + omg * (amb - 0.0 * theta_g)
    pred_on = g * theta + omg * (amb - 1.0 * theta_g)
    d_now = _band_dist(lo, hi, theta)
    d_off = _band_dist(lo, hi, pred_off)
    d_on = _band_dist(lo, hi, pred_on)
    ok_off = (d_off == 0.0) | (d_off < d_now)
    ok_on = (d_on == 0.0) | (d_on < d_now)
    disq = (is_heat & (amb > hi)) | (~is_heat & (amb < lo))
    ok_on &= ~disq
    ok_off |= disq
    neither = ~ok_on & ~ok_off
    ok_on |= neither & (d_on < d_off)
    ok_off |= neither & ~(d_on < d_off)
    locked = since < tau
    forced = np.where(u, ~ok_on, ~ok_off)
    may = ~locked | forced
    can_c = ok_on & (u | may)
    can_d = ok_off & (~u | may)
    return u, p0e, forced, locked, can_c, can_d


def simulate(g, omg, gtau, theta_g, pe, heating, lo, hi, setpoint, cop_r, rc, tau,
             amb_col, theta, status, since, ambient, noise, r, managed, supply_sign, nameplate,
             records, history, want_records, want_history):
    steps = r.shape[0]
    fail_step = -1
    for k in range(steps):
        amb = ambient[k][amb_col]
        u, p0e, forced, locked, can_c, can_d = device_flags(
            g, omg, theta_g, heating, lo, hi, setpoint, cop_r, tau, theta, status, since, amb)

        # unavailable devices count with their current draw, or with their
        # rated draw under nameplate accounting
        counted = np.ones_like(u) if nameplate else u
        p_plus = _seq_sum(np.where(~can_c & counted, pe, 0.0))
        p_minus = _seq_sum(np.where(~can_d & counted, pe, 0.0))
        m_plus = _seq_sum(pe - p0e) - p_plus
        base = _seq_sum(p0e)
        m_minus = base - p_minus
        consumed = _seq_sum(np.where(u, pe, 0.0))
        forced_kw = _seq_sum(np.where(forced, np.where(u, -pe, pe), 0.0))
        beta = consumed - base + forced_kw

        if supply_sign != 0 and managed[k] and fail_step < 0:
            x = float(r[k])
            cap = m_plus if supply_sign > 0 else m_minus
            if abs(x) > cap and x != 0.0:
                fail_step = k

        flip = forced.copy()
        toggles = int(forced.sum())
        overrides = int((forced & locked).sum())

        e = 0.0
        if managed[k]:
            e = float(r[k]) - beta
            if e != 0.0:
                new_u = 1.0 if e > 0.0 else 0.0
                pool = (~u & can_c) if e > 0.0 else (u & can_d)
                pool &= ~forced
                asym = amb - new_u * theta_g
                t_new = asym + gtau * (theta - asym)
                pool &= (lo <= t_new) & (t_new <= hi)
                cand = np.flatnonzero(pool)
                if cand.shape[0]:
                    prio = np.array([_ttb(theta[i], asym[i], lo[i], hi[i], rc[i]) for i in cand])
                    cand = cand[np.argsort(-prio, kind="stable")]
                    target = abs(e)
                    cum = 0.0
                    for i in cand:
                        if cum + pe[i] <= target:
                            cum = cum + pe[i]
                            flip[i] = True
                            toggles += 1
                        else:
                            if abs(target - (cum + pe[i])) < target - cum:
                                flip[i] = True
                                toggles += 1
                            break

        status[flip] = 1 - status[flip]
        since[flip] = 0
        u_now = status.astype(np.float64)
        after = _seq_sum(np.where(status.astype(bool), pe, 0.0))
        theta[:] = g * theta + omg * (amb - u_now * theta_g) + noise[k]
        since += 1
        viol = int(((theta < lo) | (theta > hi)).sum())
        if want_history:
            history[k] = status

        if want_records:
            records[k] = (m_plus, m_minus, p_plus, p_minus, beta, consumed, base,
                          forced_kw, e, after, toggles, overrides, viol)
        elif fail_step >= 0:
            break
    return fail_step
