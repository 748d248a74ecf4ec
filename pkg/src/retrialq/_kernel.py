"""Compiled event loop shared by every simulation entry point.

State lives in flat arrays so one ``advance`` call can run millions of
events without returning to Python.  Random increments are pre-drawn into
buffers by the caller; ``advance`` returns ``REFILL`` when any buffer may
run dry within the next event.
"""

import math

import numpy as np
from numba import njit

# float state slots
F_CLOCK, F_NEXT_A, F_NEXT_D, F_NEXT_S, F_ELAPSED, F_INT_Q1, F_LOGW, F_INC_A = range(8)
N_FLOAT = 8

# int state slots
(
    I_Q1,
    I_Q2,
    I_Q3,
    I_ARRIVALS,
    I_COMPLETIONS,
    I_K_A,
    I_K_D,
    I_M_ARRIVALS,
    I_M_LOSSES,
    I_M_COMPLETIONS,
    I_LAST_KIND,
    I_LAST_LOSS,
) = range(12)
N_INT = 12

# params slots
P_N, P_MU, P_LAM, P_LAM_S, P_DELTA, P_A_DET, P_D_DET, P_WEIGHTED = range(8)
N_PARAM = 8

EV_ARRIVAL, EV_RETRIAL, EV_SERVICE = 0, 1, 2

# return codes
STOP_TIME, STOP_ARRIVALS, STOP_EVENTS, REFILL, IDLE, VIOLATION = range(6)


@njit(cache=True, nogil=True)
def advance(fs, si, params, occ, arr_at, ret_at, abuf, dbuf, sbuf, pos,
            stop_time, stop_arrivals, max_events, measure):
    n = int(params[P_N])
    mu = params[P_MU]
    lam = params[P_LAM]
    lam_s = params[P_LAM_S]
    delta = params[P_DELTA]
    a_det = params[P_A_DET] > 0.0
    d_det = params[P_D_DET] > 0.0
    weighted = params[P_WEIGHTED] > 0.0
    log_ratio = math.log(lam / lam_s) if weighted else 0.0

    events = 0
    while events < max_events:
        if pos[0] >= abuf.size or pos[1] >= dbuf.size or pos[2] >= sbuf.size:
            return REFILL
        ta = fs[F_NEXT_A]
        td = fs[F_NEXT_D]
        ts = fs[F_NEXT_S]
        # tie order: arrival, retrial, service
        if ta <= td and ta <= ts:
            kind = EV_ARRIVAL
            t = ta
        elif td <= ts:
            kind = EV_RETRIAL
            t = td
        else:
            kind = EV_SERVICE
            t = ts

        q1 = si[I_Q1]
        q2 = si[I_Q2]
        if t > stop_time:
            gap = stop_time - fs[F_CLOCK]
            if measure and gap > 0.0:
                occ[q1, q2] += gap
                fs[F_ELAPSED] += gap
                fs[F_INT_Q1] += q1 * gap
            fs[F_CLOCK] = stop_time
            return STOP_TIME
        if t == np.inf:
            return IDLE

        gap = t - fs[F_CLOCK]
        if measure:
            occ[q1, q2] += gap
            fs[F_ELAPSED] += gap
            fs[F_INT_Q1] += q1 * gap
        fs[F_CLOCK] = t
        loss = 0

        if kind == EV_ARRIVAL:
            if weighted:
                fs[F_LOGW] += log_ratio + (lam_s - lam) * fs[F_INC_A]
            si[I_ARRIVALS] += 1
            if measure:
                arr_at[q1, q2] += 1
                si[I_M_ARRIVALS] += 1
            if q1 < n:
                q1 += 1
                fs[F_NEXT_S] = t + sbuf[pos[2]] / (q1 * mu)
                pos[2] += 1
            elif q2 == 0:
                q2 = 1
            else:
                si[I_Q3] += 1
                loss = 1
                if measure:
                    si[I_M_LOSSES] += 1
            if a_det:
                si[I_K_A] += 1
                fs[F_NEXT_A] = si[I_K_A] / lam_s
            else:
                inc = abuf[pos[0]]
                pos[0] += 1
                fs[F_INC_A] = inc
                fs[F_NEXT_A] = t + inc
        elif kind == EV_RETRIAL:
            if measure:
                ret_at[q1, q2] += 1
            if q2 == 1 and q1 < n:
                q2 = 0
                q1 += 1
                fs[F_NEXT_S] = t + sbuf[pos[2]] / (q1 * mu)
                pos[2] += 1
            if d_det:
                si[I_K_D] += 1
                fs[F_NEXT_D] = si[I_K_D] / delta
            else:
                fs[F_NEXT_D] = t + dbuf[pos[1]]
                pos[1] += 1
        else:
            q1 -= 1
            si[I_COMPLETIONS] += 1
            if measure:
                si[I_M_COMPLETIONS] += 1
            if q1 > 0:
                fs[F_NEXT_S] = t + sbuf[pos[2]] / (q1 * mu)
                pos[2] += 1
            else:
                fs[F_NEXT_S] = np.inf

        si[I_Q1] = q1
        si[I_Q2] = q2
        si[I_LAST_KIND] = kind
        si[I_LAST_LOSS] = loss
        if q1 < 0 or q1 > n:
            return VIOLATION
        if si[I_ARRIVALS] != si[I_COMPLETIONS] + q1 + q2 + si[I_Q3]:
            return VIOLATION
        events += 1
        if stop_arrivals >= 0 and si[I_ARRIVALS] >= stop_arrivals:
            return STOP_ARRIVALS
    return STOP_EVENTS
