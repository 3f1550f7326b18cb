"""Pure-Python trial integrator.

This module mirrors the compiled kernel operation for operation: same
expressions, same summation order, same branch structure, so both
backends produce bit-identical trajectories.  It exists as the fallback
when the extension is unavailable and as the readable twin the parity
tests compare against.

The full trial state lives in one flat vector ``y``:

    y[0]      membrane voltage v
    y[1:7]    true gates (m_Na, h_Na, m_K, m_CaT, h_CaT, m_CaL)
    y[7]      true calcium
    y[8]      v_hat                              (observers only)
    y[9:]     observer internals, per kind:
        centralized: w_hat(7), theta_hat(6), psi(6), P(36 row-major)
        blocked:     gates(G), ca(n_ca), theta(S), psi(S), P(S)

Observer kinds: 0 none, 1 centralized, 2 blocked, 3 constant-offset
(debug aid whose v_hat tracks v minus a fixed bias).  Methods: 0 forward
Euler, 1 classic RK4.  Status codes: 0 ok, then 1 voltage out of range,
2 estimate out of range, 3 gate left [0,1], 4 negative calcium,
5 covariance not positive definite.
"""

from __future__ import annotations

import math

# mp[] scalar slots (mirrored in the compiled kernel)
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
MP_N_SCALARS = 16

# gk[kind][] per-gate kinetics slots
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
METHOD_RK4 = 1

DIVERGED_V = 1
DIVERGED_VHAT = 2
DIVERGED_GATE = 3
DIVERGED_CA = 4
DIVERGED_COV = 5

N_LOG_COLS = 13


def _eval_theta(t, theta_base, ramp_param, ramp_f, out):
    """True conductances at time t: base values plus piecewise-linear ramps.

    Ramps are sorted by start time and non-overlapping per parameter, so a
    later segment overwrites the held value of an earlier one.
    """
    for j in range(6):
        out[j] = theta_base[j]
    for r in range(len(ramp_param)):
        t0 = ramp_f[r][0]
        t1 = ramp_f[r][1]
        if t >= t1:
            out[ramp_param[r]] = ramp_f[r][3]
        elif t >= t0:
            frac = (t - t0) / (t1 - t0)
            out[ramp_param[r]] = ramp_f[r][2] + (ramp_f[r][3] - ramp_f[r][2]) * frac


def _rhs(y, dy, t, u, mp, gk, erev, theta_base, ramp_param, ramp_f,
         obs_kind, S, G, nca,
         slot_block, slot_gate_start, gate_kind, slot_ca, block_slot_start,
         p_gate, q_gate, sensor_b, gb, ab, qgb,
         theta_true, phi_buf, ppsi_buf, bmean_buf, maxcons):
    c = mp[MP_C]
    tau_ca = mp[MP_TAU_CA]
    cat_c = mp[MP_CAT_C]
    cal_c = mp[MP_CAL_C]
    e_ca = mp[MP_E_CA]

    _eval_theta(t, theta_base, ramp_param, ramp_f, theta_true)

    # true neuron
    v = y[0]
    for k in range(6):
        g = gk[k]
        z = g[GK_SIGN] * (v - g[GK_VHALF]) / g[GK_SLOPE]
        sig = 1.0 / (1.0 + math.exp(-z))
        d = (v - g[GK_TCENTER]) / g[GK_TWIDTH]
        tau = g[GK_TBASE] + g[GK_TAMP] * math.exp(-d * d)
        dy[1 + k] = (sig - y[1 + k]) / tau
    dr = v - e_ca
    influx = -cat_c * y[4] * y[5] * dr - cal_c * y[6] * dr
    dy[7] = (influx - y[7]) / tau_ca

    zk = (y[7] - mp[MP_KCA_HALF]) / mp[MP_KCA_SLOPE]
    kca_true = 1.0 / (1.0 + math.exp(-zk))
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
            g = gk[k]
            z = g[GK_SIGN] * ((v - q_gate[k]) - g[GK_VHALF]) / g[GK_SLOPE]
            sig = 1.0 / (1.0 + math.exp(-z))
            d = (v - g[GK_TCENTER]) / g[GK_TWIDTH]
            tau = g[GK_TBASE] + g[GK_TAMP] * math.exp(-d * d)
            dy[ow + k] = (sig - y[ow + k]) / (p_gate[k] * tau)
        influx = -cat_c * y[ow + 3] * y[ow + 4] * dr - cal_c * y[ow + 5] * dr
        dy[ow + 6] = (influx - y[ow + 6]) / tau_ca

        zk = ((y[ow + 6] - mp[MP_SENSOR_C]) - mp[MP_KCA_HALF]) / mp[MP_KCA_SLOPE]
        kca_hat = 1.0 / (1.0 + math.exp(-zk))
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
    og = 9
    oca = 9 + G
    oth = oca + nca
    ops = oth + S
    op = ops + S
    beta = mp[MP_BETA]

    for g_i in range(G):
        g = gk[gate_kind[g_i]]
        z = g[GK_SIGN] * ((v - q_gate[g_i]) - g[GK_VHALF]) / g[GK_SLOPE]
        sig = 1.0 / (1.0 + math.exp(-z))
        d = (v - g[GK_TCENTER]) / g[GK_TWIDTH]
        tau = g[GK_TBASE] + g[GK_TAMP] * math.exp(-d * d)
        dy[og + g_i] = (sig - y[og + g_i]) / (p_gate[g_i] * tau)

    for s_i in range(S):
        b = slot_block[s_i]
        g0 = og + slot_gate_start[s_i]
        if b == 0 or b == 2:
            gating = y[g0] * y[g0 + 1]
        elif b == 1 or b == 3:
            gating = y[g0]
        elif b == 4:
            ci = slot_ca[s_i]
            influx = -cat_c * y[g0] * y[g0 + 1] * dr - cal_c * y[g0 + 2] * dr
            dy[oca + ci] = (influx - y[oca + ci]) / tau_ca
            zk = ((y[oca + ci] - sensor_b[ci]) - mp[MP_KCA_HALF]) / mp[MP_KCA_SLOPE]
            gating = 1.0 / (1.0 + math.exp(-zk))
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
            a_cons = math.fabs(cons)
            if a_cons > maxcons[b]:
                maxcons[b] = a_cons


def _spd_fail(y, op):
    """True when the 6x6 covariance at y[op:] has no Cholesky factor."""
    L = [0.0] * 36
    for i in range(6):
        for j in range(i + 1):
            s = y[op + 6 * i + j]
            for k in range(j):
                s -= L[6 * i + k] * L[6 * j + k]
            if i == j:
                if s <= 0.0:
                    return True
                L[6 * i + j] = math.sqrt(s)
            else:
                L[6 * i + j] = s / L[6 * j + j]
    return False


def run_trial(y0, mp, gk, erev, theta_base, ramp_param, ramp_f, u, dt,
              slot_block, slot_gate_start, gate_kind, slot_ca, block_slot_start,
              p_gate, q_gate, sensor_b, gb, ab, qgb,
              substeps, method, obs_kind, log_decim, check_interval,
              logs_out, dump_out, maxcons_out, final_out):
    """Integrate one trial; returns (status, step_index, rms_sum, n_rms).

    ``step_index`` is the failing base step when status != 0.  Outputs are
    written into the pre-allocated arrays: decimated rows into logs_out,
    per-substep (t, v, v_hat) rows into dump_out when it is non-empty, the
    running consensus-sum maxima into maxcons_out, and the final state
    vector into final_out.  The squared voltage error accumulates over
    every post-update substep sample, in step order.
    """
    n_base = len(u)
    S = len(slot_block)
    G = len(gate_kind)
    nca = len(sensor_b)

    if obs_kind == OBS_NONE:
        dim = 8
    elif obs_kind == OBS_BIAS:
        dim = 9
    elif obs_kind == OBS_CENTRALIZED:
        dim = 64
    else:
        dim = 9 + G + nca + 3 * S

    y = [float(y0[i]) for i in range(dim)]
    dy = [0.0] * dim
    k1 = [0.0] * dim
    k2 = [0.0] * dim
    k3 = [0.0] * dim
    k4 = [0.0] * dim
    yt = [0.0] * dim

    mp = [float(x) for x in mp]
    gk = [[float(x) for x in row] for row in gk]
    erev = [float(x) for x in erev]
    theta_base = [float(x) for x in theta_base]
    ramp_param = [int(x) for x in ramp_param]
    ramp_f = [[float(x) for x in row] for row in ramp_f]
    u = [float(x) for x in u]
    slot_block = [int(x) for x in slot_block]
    slot_gate_start = [int(x) for x in slot_gate_start]
    gate_kind = [int(x) for x in gate_kind]
    slot_ca = [int(x) for x in slot_ca]
    block_slot_start = [int(x) for x in block_slot_start]
    p_gate = [float(x) for x in p_gate]
    q_gate = [float(x) for x in q_gate]
    sensor_b = [float(x) for x in sensor_b]
    gb = [float(x) for x in gb]
    ab = [float(x) for x in ab]
    qgb = [float(x) for x in qgb]

    theta_true = [0.0] * 6
    nphi = S if S > 6 else 6
    phi_buf = [0.0] * nphi
    ppsi_buf = [0.0] * 6
    bmean_buf = [0.0] * 6
    maxcons = [0.0] * 6

    dt = float(dt)
    h = dt / substeps
    hh = 0.5 * h
    s6 = h / 6.0
    gate_slack = mp[MP_GATE_SLACK]
    v_limit = mp[MP_V_LIMIT]
    bias = mp[MP_BIAS]
    oth_b = 9 + G + nca
    op_b = oth_b + 2 * S
    do_dump = dump_out.shape[0] > 0

    def _log(row, k_base):
        t_log = k_base * dt
        _eval_theta(t_log, theta_base, ramp_param, ramp_f, theta_true)
        logs_out[row, 0] = t_log
        logs_out[row, 1] = y[0]
        if obs_kind == OBS_NONE:
            logs_out[row, 2] = 0.0
            logs_out[row, 3] = 0.0
        else:
            logs_out[row, 2] = y[8]
            logs_out[row, 3] = math.fabs(y[0] - y[8])
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

    status = 0
    fail_step = 0
    rms_sum = 0.0
    n_rms = 0

    _log(0, 0)
    dump_row = 0
    if do_dump:
        dump_out[0, 0] = 0.0
        dump_out[0, 1] = y[0]
        dump_out[0, 2] = y[8] if obs_kind != OBS_NONE else 0.0
        dump_row = 1
    log_row = 1

    rhs_tail = (mp, gk, erev, theta_base, ramp_param, ramp_f,
                obs_kind, S, G, nca,
                slot_block, slot_gate_start, gate_kind, slot_ca, block_slot_start,
                p_gate, q_gate, sensor_b, gb, ab, qgb,
                theta_true, phi_buf, ppsi_buf, bmean_buf, maxcons)

    try:
        for kb in range(n_base):
            uk = u[kb]
            for m in range(substeps):
                t = (kb * substeps + m) * h
                if method == METHOD_EULER:
                    _rhs(y, dy, t, uk, *rhs_tail)
                    for i in range(dim):
                        y[i] = y[i] + h * dy[i]
                else:
                    _rhs(y, k1, t, uk, *rhs_tail)
                    for i in range(dim):
                        yt[i] = y[i] + hh * k1[i]
                    _rhs(yt, k2, t + hh, uk, *rhs_tail)
                    for i in range(dim):
                        yt[i] = y[i] + hh * k2[i]
                    _rhs(yt, k3, t + hh, uk, *rhs_tail)
                    for i in range(dim):
                        yt[i] = y[i] + h * k3[i]
                    _rhs(yt, k4, t + h, uk, *rhs_tail)
                    for i in range(dim):
                        y[i] = y[i] + s6 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                if obs_kind == OBS_BIAS:
                    y[8] = y[0] - bias

                if not (math.fabs(y[0]) <= v_limit):
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
                    if not (math.fabs(y[8]) <= v_limit):
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
                _log(log_row, kb1)
                log_row += 1
    except OverflowError:
        status = DIVERGED_V
        fail_step = kb

    for b in range(6):
        maxcons_out[b] = maxcons[b]
    for i in range(dim):
        final_out[i] = y[i]
    return status, fail_step, rms_sum, n_rms
