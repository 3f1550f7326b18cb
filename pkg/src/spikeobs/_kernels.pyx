# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled trial integrator.

Operation-for-operation twin of the pure-Python module: identical
expressions, summation order and branch structure, compiled with
contraction disabled so both backends emit bit-identical trajectories.
See the pure module for the state-vector layout and code meanings.
"""

from libc.math cimport exp, fabs, sqrt

cimport cython

# mp[] scalar slots and layout codes (mirrored in the pure kernel)
cdef enum:
    MP_C = 0
    MP_TAU_CA = 1
    MP_CAT_C = 2
    MP_CAL_C = 3
    MP_KCA_HALF = 4
    MP_KCA_SLOPE = 5
    MP_E_CA = 6
    MP_GAMMA = 7
    MP_ALPHA = 8
    MP_QUADG = 9
    MP_GAMMA0 = 10
    MP_BETA = 11
    MP_BIAS = 12
    MP_SENSOR_C = 13
    MP_GATE_SLACK = 14
    MP_V_LIMIT = 15

    GK_VHALF = 0
    GK_SLOPE = 1
    GK_SIGN = 2
    GK_TBASE = 3
    GK_TAMP = 4
    GK_TCENTER = 5
    GK_TWIDTH = 6

    OBS_NONE = 0
    OBS_CENTRALIZED = 1
    OBS_BLOCKED = 2
    OBS_BIAS = 3

    METHOD_EULER = 0

    DIVERGED_V = 1
    DIVERGED_VHAT = 2
    DIVERGED_GATE = 3
    DIVERGED_CA = 4
    DIVERGED_COV = 5


cdef void _eval_theta(double t, const double[::1] theta_base, const int[::1] ramp_param,
                      const double[:, ::1] ramp_f, double[::1] out) noexcept:
    cdef int j, r
    cdef int nr = ramp_param.shape[0]
    cdef double t0, t1, frac
    for j in range(6):
        out[j] = theta_base[j]
    for r in range(nr):
        t0 = ramp_f[r, 0]
        t1 = ramp_f[r, 1]
        if t >= t1:
            out[ramp_param[r]] = ramp_f[r, 3]
        elif t >= t0:
            frac = (t - t0) / (t1 - t0)
            out[ramp_param[r]] = ramp_f[r, 2] + (ramp_f[r, 3] - ramp_f[r, 2]) * frac


cdef void _rhs(const double[::1] y, double[::1] dy, double t, double u,
               const double[::1] mp, const double[:, ::1] gk, const double[::1] erev,
               const double[::1] theta_base, const int[::1] ramp_param, const double[:, ::1] ramp_f,
               int obs_kind, int S, int G, int nca,
               const int[::1] slot_block, const int[::1] slot_gate_start, const int[::1] gate_kind,
               const int[::1] slot_ca, const int[::1] block_slot_start,
               const double[::1] p_gate, const double[::1] q_gate, const double[::1] sensor_b,
               const double[::1] gb, const double[::1] ab, const double[::1] qgb,
               double[::1] theta_true, double[::1] phi_buf, double[::1] ppsi_buf,
               double[::1] bmean_buf, double[::1] maxcons) noexcept:
    cdef double c = mp[MP_C]
    cdef double tau_ca = mp[MP_TAU_CA]
    cdef double cat_c = mp[MP_CAT_C]
    cdef double cal_c = mp[MP_CAL_C]
    cdef double e_ca = mp[MP_E_CA]
    cdef int j, k, g_i, s_i, b, ci, lo, hi, g0, ow, oth, ops, op
    cdef double v, z, sig, d, tau, dr, influx, zk, kca_true, kca_hat
    cdef double acc, s, quad, err, gamma, alpha, qg, gain_acc, beta
    cdef double val, gating, d_th, tot, cons, a_cons

    _eval_theta(t, theta_base, ramp_param, ramp_f, theta_true)

    # true neuron
    v = y[0]
    for k in range(6):
        z = gk[k, GK_SIGN] * (v - gk[k, GK_VHALF]) / gk[k, GK_SLOPE]
        sig = 1.0 / (1.0 + exp(-z))
        d = (v - gk[k, GK_TCENTER]) / gk[k, GK_TWIDTH]
        tau = gk[k, GK_TBASE] + gk[k, GK_TAMP] * exp(-d * d)
        dy[1 + k] = (sig - y[1 + k]) / tau
    dr = v - e_ca
    influx = -cat_c * y[4] * y[5] * dr - cal_c * y[6] * dr
    dy[7] = (influx - y[7]) / tau_ca

    zk = (y[7] - mp[MP_KCA_HALF]) / mp[MP_KCA_SLOPE]
    kca_true = 1.0 / (1.0 + exp(-zk))
    phi_buf[0] = -y[1] * y[2] * (v - erev[0]) / c
    phi_buf[1] = -y[3] * (v - erev[1]) / c
    phi_buf[2] = -y[4] * y[5] * (v - erev[2]) / c
    phi_buf[3] = -y[6] * (v - erev[3]) / c
    phi_buf[4] = -kca_true * (v - erev[4]) / c
    phi_buf[5] = -(v - erev[5]) / c
    acc = 0.0
    for j in range(6):
        acc += phi_buf[j] * theta_true[j]
    dy[0] = acc + u / c

    if obs_kind == OBS_NONE:
        return
    if obs_kind == OBS_BIAS:
        dy[8] = 0.0
        return

    err = v - y[8]

    if obs_kind == OBS_CENTRALIZED:
        gamma = mp[MP_GAMMA]
        alpha = mp[MP_ALPHA]
        qg = mp[MP_QUADG]
        ow = 9
        oth = 16
        ops = 22
        op = 28
        for k in range(6):
            z = gk[k, GK_SIGN] * ((v - q_gate[k]) - gk[k, GK_VHALF]) / gk[k, GK_SLOPE]
            sig = 1.0 / (1.0 + exp(-z))
            d = (v - gk[k, GK_TCENTER]) / gk[k, GK_TWIDTH]
            tau = gk[k, GK_TBASE] + gk[k, GK_TAMP] * exp(-d * d)
            dy[ow + k] = (sig - y[ow + k]) / (p_gate[k] * tau)
        influx = -cat_c * y[ow + 3] * y[ow + 4] * dr - cal_c * y[ow + 5] * dr
        dy[ow + 6] = (influx - y[ow + 6]) / tau_ca

        zk = ((y[ow + 6] - mp[MP_SENSOR_C]) - mp[MP_KCA_HALF]) / mp[MP_KCA_SLOPE]
        kca_hat = 1.0 / (1.0 + exp(-zk))
        phi_buf[0] = -y[ow] * y[ow + 1] * (v - erev[0]) / c
        phi_buf[1] = -y[ow + 2] * (v - erev[1]) / c
        phi_buf[2] = -y[ow + 3] * y[ow + 4] * (v - erev[2]) / c
        phi_buf[3] = -y[ow + 5] * (v - erev[3]) / c
        phi_buf[4] = -kca_hat * (v - erev[4]) / c
        phi_buf[5] = -(v - erev[5]) / c

        for j in range(6):
            s = 0.0
            for k in range(6):
                s += y[op + 6 * j + k] * y[ops + k]
            ppsi_buf[j] = s
        quad = 0.0
        for j in range(6):
            quad += y[ops + j] * ppsi_buf[j]
        acc = 0.0
        for j in range(6):
            acc += phi_buf[j] * y[oth + j]
        dy[8] = acc + u / c + gamma * (1.0 + quad) * err
        for j in range(6):
            dy[oth + j] = gamma * ppsi_buf[j] * err
            dy[ops + j] = phi_buf[j] - gamma * y[ops + j]
        for j in range(6):
            for k in range(j, 6):
                val = alpha * y[op + 6 * j + k] - qg * ppsi_buf[j] * ppsi_buf[k]
                dy[op + 6 * j + k] = val
                dy[op + 6 * k + j] = val
        return

    # blocked (distributed / redundant)
    oth = 9 + G + nca
    ops = oth + S
    op = ops + S
    beta = mp[MP_BETA]

    for g_i in range(G):
        k = gate_kind[g_i]
        z = gk[k, GK_SIGN] * ((v - q_gate[g_i]) - gk[k, GK_VHALF]) / gk[k, GK_SLOPE]
        sig = 1.0 / (1.0 + exp(-z))
        d = (v - gk[k, GK_TCENTER]) / gk[k, GK_TWIDTH]
        tau = gk[k, GK_TBASE] + gk[k, GK_TAMP] * exp(-d * d)
        dy[9 + g_i] = (sig - y[9 + g_i]) / (p_gate[g_i] * tau)

    for s_i in range(S):
        b = slot_block[s_i]
        g0 = 9 + slot_gate_start[s_i]
        if b == 0 or b == 2:
            gating = y[g0] * y[g0 + 1]
        elif b == 1 or b == 3:
            gating = y[g0]
        elif b == 4:
            ci = slot_ca[s_i]
            influx = -cat_c * y[g0] * y[g0 + 1] * dr - cal_c * y[g0 + 2] * dr
            dy[9 + G + ci] = (influx - y[9 + G + ci]) / tau_ca
            zk = ((y[9 + G + ci] - sensor_b[ci]) - mp[MP_KCA_HALF]) / mp[MP_KCA_SLOPE]
            gating = 1.0 / (1.0 + exp(-zk))
        else:
            gating = 1.0
        phi_buf[s_i] = -gating * (v - erev[b]) / c

    acc = 0.0
    for s_i in range(S):
        acc += phi_buf[s_i] * y[oth + s_i]
    gain_acc = 0.0
    for s_i in range(S):
        gain_acc += gb[slot_block[s_i]] * y[ops + s_i] * y[ops + s_i] * y[op + s_i]
    dy[8] = acc + u / c + (mp[MP_GAMMA0] + gain_acc) * err

    if beta != 0.0:
        for b in range(6):
            tot = 0.0
            lo = block_slot_start[b]
            hi = block_slot_start[b + 1]
            for s_i in range(lo, hi):
                tot += y[oth + s_i]
            bmean_buf[b] = tot / (hi - lo)

    for s_i in range(S):
        b = slot_block[s_i]
        d_th = gb[b] * y[op + s_i] * y[ops + s_i] * err
        if beta != 0.0:
            d_th -= beta * (y[oth + s_i] - bmean_buf[b])
        dy[oth + s_i] = d_th
        dy[ops + s_i] = phi_buf[s_i] - gb[b] * y[ops + s_i]
        dy[op + s_i] = (ab[b] * y[op + s_i]
                        - qgb[b] * y[op + s_i] * y[ops + s_i] * y[ops + s_i] * y[op + s_i])

    if beta != 0.0:
        for b in range(6):
            cons = 0.0
            lo = block_slot_start[b]
            hi = block_slot_start[b + 1]
            for s_i in range(lo, hi):
                cons += -beta * (y[oth + s_i] - bmean_buf[b])
            a_cons = fabs(cons)
            if a_cons > maxcons[b]:
                maxcons[b] = a_cons


cdef bint _spd_fail(const double[::1] y, int op) noexcept:
    cdef double L[36]
    cdef int i, j, k
    cdef double s
    for i in range(36):
        L[i] = 0.0
    for i in range(6):
        for j in range(i + 1):
            s = y[op + 6 * i + j]
            for k in range(j):
                s -= L[6 * i + k] * L[6 * j + k]
            if i == j:
                if s <= 0.0:
                    return True
                L[6 * i + j] = sqrt(s)
            else:
                L[6 * i + j] = s / L[6 * j + j]
    return False


def run_trial(const double[::1] y0, const double[::1] mp, const double[:, ::1] gk, const double[::1] erev,
              const double[::1] theta_base, const int[::1] ramp_param, const double[:, ::1] ramp_f,
              const double[::1] u, double dt,
              const int[::1] slot_block, const int[::1] slot_gate_start, const int[::1] gate_kind,
              const int[::1] slot_ca, const int[::1] block_slot_start,
              const double[::1] p_gate, const double[::1] q_gate, const double[::1] sensor_b,
              const double[::1] gb, const double[::1] ab, const double[::1] qgb,
              int substeps, int method, int obs_kind, int log_decim, int check_interval,
              double[:, ::1] logs_out, double[:, ::1] dump_out,
              double[::1] maxcons_out, double[::1] final_out):
    """Integrate one trial; returns (status, step_index, rms_sum, n_rms)."""
    cdef long n_base = u.shape[0]
    cdef int S = slot_block.shape[0]
    cdef int G = gate_kind.shape[0]
    cdef int nca = sensor_b.shape[0]
    cdef int dim, i, k, m, g_i, s_i, ci, b, lo, hi, j
    cdef long kb, kb1, dump_row, log_row
    cdef int status = 0
    cdef long fail_step = 0
    cdef double rms_sum = 0.0
    cdef long n_rms = 0

    if obs_kind == OBS_NONE:
        dim = 8
    elif obs_kind == OBS_BIAS:
        dim = 9
    elif obs_kind == OBS_CENTRALIZED:
        dim = 64
    else:
        dim = 9 + G + nca + 3 * S

    import numpy as _np
    y_arr = _np.empty(dim)
    dy_arr = _np.zeros(dim)
    k1_arr = _np.zeros(dim)
    k2_arr = _np.zeros(dim)
    k3_arr = _np.zeros(dim)
    k4_arr = _np.zeros(dim)
    yt_arr = _np.zeros(dim)
    theta_true_arr = _np.zeros(6)
    nphi = S if S > 6 else 6
    phi_arr = _np.zeros(nphi)
    ppsi_arr = _np.zeros(6)
    bmean_arr = _np.zeros(6)
    maxcons_arr = _np.zeros(6)

    cdef double[::1] y = y_arr
    cdef double[::1] dy = dy_arr
    cdef double[::1] k1 = k1_arr
    cdef double[::1] k2 = k2_arr
    cdef double[::1] k3 = k3_arr
    cdef double[::1] k4 = k4_arr
    cdef double[::1] yt = yt_arr
    cdef double[::1] theta_true = theta_true_arr
    cdef double[::1] phi_buf = phi_arr
    cdef double[::1] ppsi_buf = ppsi_arr
    cdef double[::1] bmean_buf = bmean_arr
    cdef double[::1] maxcons = maxcons_arr

    for i in range(dim):
        y[i] = y0[i]

    cdef double h = dt / substeps
    cdef double hh = 0.5 * h
    cdef double s6 = h / 6.0
    cdef double gate_slack = mp[MP_GATE_SLACK]
    cdef double v_limit = mp[MP_V_LIMIT]
    cdef double bias = mp[MP_BIAS]
    cdef int oth_b = 9 + G + nca
    cdef int op_b = oth_b + 2 * S
    cdef bint do_dump = dump_out.shape[0] > 0
    cdef double uk, t, x, e, t_log, tot
    cdef long idx

    # initial log row
    _log_row(logs_out, 0, 0, dt, y, u, n_base, obs_kind, block_slot_start,
             oth_b, theta_base, ramp_param, ramp_f, theta_true)
    dump_row = 0
    if do_dump:
        dump_out[0, 0] = 0.0
        dump_out[0, 1] = y[0]
        dump_out[0, 2] = y[8] if obs_kind != OBS_NONE else 0.0
        dump_row = 1
    log_row = 1

    for kb in range(n_base):
        uk = u[kb]
        for m in range(substeps):
            t = (kb * substeps + m) * h
            if method == METHOD_EULER:
                _rhs(y, dy, t, uk, mp, gk, erev, theta_base, ramp_param, ramp_f,
                     obs_kind, S, G, nca, slot_block, slot_gate_start, gate_kind,
                     slot_ca, block_slot_start, p_gate, q_gate, sensor_b, gb, ab, qgb,
                     theta_true, phi_buf, ppsi_buf, bmean_buf, maxcons)
                for i in range(dim):
                    y[i] = y[i] + h * dy[i]
            else:
                _rhs(y, k1, t, uk, mp, gk, erev, theta_base, ramp_param, ramp_f,
                     obs_kind, S, G, nca, slot_block, slot_gate_start, gate_kind,
                     slot_ca, block_slot_start, p_gate, q_gate, sensor_b, gb, ab, qgb,
                     theta_true, phi_buf, ppsi_buf, bmean_buf, maxcons)
                for i in range(dim):
                    yt[i] = y[i] + hh * k1[i]
                _rhs(yt, k2, t + hh, uk, mp, gk, erev, theta_base, ramp_param, ramp_f,
                     obs_kind, S, G, nca, slot_block, slot_gate_start, gate_kind,
                     slot_ca, block_slot_start, p_gate, q_gate, sensor_b, gb, ab, qgb,
                     theta_true, phi_buf, ppsi_buf, bmean_buf, maxcons)
                for i in range(dim):
                    yt[i] = y[i] + hh * k2[i]
                _rhs(yt, k3, t + hh, uk, mp, gk, erev, theta_base, ramp_param, ramp_f,
                     obs_kind, S, G, nca, slot_block, slot_gate_start, gate_kind,
                     slot_ca, block_slot_start, p_gate, q_gate, sensor_b, gb, ab, qgb,
                     theta_true, phi_buf, ppsi_buf, bmean_buf, maxcons)
                for i in range(dim):
                    yt[i] = y[i] + h * k3[i]
                _rhs(yt, k4, t + h, uk, mp, gk, erev, theta_base, ramp_param, ramp_f,
                     obs_kind, S, G, nca, slot_block, slot_gate_start, gate_kind,
                     slot_ca, block_slot_start, p_gate, q_gate, sensor_b, gb, ab, qgb,
                     theta_true, phi_buf, ppsi_buf, bmean_buf, maxcons)
                for i in range(dim):
                    y[i] = y[i] + s6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if obs_kind == OBS_BIAS:
                y[8] = y[0] - bias

            if not (fabs(y[0]) <= v_limit):
                status = DIVERGED_V
                break
            for k in range(6):
                x = y[1 + k]
                if x < -gate_slack or x > 1.0 + gate_slack:
                    status = DIVERGED_GATE
                    break
            if status:
                break
            if y[7] < 0.0:
                status = DIVERGED_CA
                break
            if obs_kind != OBS_NONE:
                if not (fabs(y[8]) <= v_limit):
                    status = DIVERGED_VHAT
                    break
                if obs_kind == OBS_CENTRALIZED:
                    for k in range(6):
                        x = y[9 + k]
                        if x < -gate_slack or x > 1.0 + gate_slack:
                            status = DIVERGED_GATE
                            break
                    if status:
                        break
                    if y[15] < 0.0:
                        status = DIVERGED_CA
                        break
                elif obs_kind == OBS_BLOCKED:
                    for g_i in range(G):
                        x = y[9 + g_i]
                        if x < -gate_slack or x > 1.0 + gate_slack:
                            status = DIVERGED_GATE
                            break
                    if status:
                        break
                    for ci in range(nca):
                        if y[9 + G + ci] < 0.0:
                            status = DIVERGED_CA
                            break
                    if status:
                        break
                    for s_i in range(S):
                        if not (y[op_b + s_i] > 0.0):
                            status = DIVERGED_COV
                            break
                    if status:
                        break
                e = y[0] - y[8]
                rms_sum += e * e
                n_rms += 1
            if do_dump:
                dump_out[dump_row, 0] = (kb * substeps + m + 1) * h
                dump_out[dump_row, 1] = y[0]
                dump_out[dump_row, 2] = y[8] if obs_kind != OBS_NONE else 0.0
                dump_row += 1
        if status:
            fail_step = kb
            break
        kb1 = kb + 1
        if (obs_kind == OBS_CENTRALIZED and check_interval > 0
                and kb1 % check_interval == 0 and _spd_fail(y, 28)):
            status = DIVERGED_COV
            fail_step = kb
            break
        if kb1 % log_decim == 0:
            _log_row(logs_out, log_row, kb1, dt, y, u, n_base, obs_kind,
                     block_slot_start, oth_b, theta_base, ramp_param, ramp_f,
                     theta_true)
            log_row += 1

    for b in range(6):
        maxcons_out[b] = maxcons[b]
    for i in range(dim):
        final_out[i] = y[i]
    return status, fail_step, rms_sum, n_rms


cdef void _log_row(double[:, ::1] logs_out, long row, long k_base, double dt,
                   const double[::1] y, const double[::1] u, long n_base, int obs_kind,
                   const int[::1] block_slot_start, int oth_b,
                   const double[::1] theta_base, const int[::1] ramp_param,
                   const double[:, ::1] ramp_f, double[::1] theta_true) noexcept:
    cdef double t_log = k_base * dt
    cdef int j, b, s_i, lo, hi
    cdef double tot
    _eval_theta(t_log, theta_base, ramp_param, ramp_f, theta_true)
    logs_out[row, 0] = t_log
    logs_out[row, 1] = y[0]
    if obs_kind == OBS_NONE:
        logs_out[row, 2] = 0.0
        logs_out[row, 3] = 0.0
    else:
        logs_out[row, 2] = y[8]
        logs_out[row, 3] = fabs(y[0] - y[8])
    logs_out[row, 4] = u[k_base] if k_base < n_base else u[n_base - 1]
    if obs_kind == OBS_CENTRALIZED:
        for j in range(6):
            logs_out[row, 5 + j] = y[16 + j]
    elif obs_kind == OBS_BLOCKED:
        for b in range(6):
            tot = 0.0
            lo = block_slot_start[b]
            hi = block_slot_start[b + 1]
            for s_i in range(lo, hi):
                tot += y[oth_b + s_i]
            logs_out[row, 5 + b] = tot / (hi - lo)
    else:
        for j in range(6):
            logs_out[row, 5 + j] = 0.0
    logs_out[row, 11] = theta_true[3]
    logs_out[row, 12] = theta_true[4]
