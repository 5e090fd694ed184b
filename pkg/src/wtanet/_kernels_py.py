"""NumPy implementation of the per-stimulus simulation kernel.

This is the fallback backend and the readable reference for the compiled
kernel in ``_kernels.pyx``.  Both backends consume the sampling stream in the
same order (K uniforms per circuit per timestep, circuits in packed order)
and perform the same float operations in the same order, so a run is
reproducible across backends up to last-ulp differences in libm.

State layout (see network.PackedNet): per-circuit segments inside flat
arrays, offsets in ``*_off``; the spike board holds fired-neuron indices of
the previous timestep and is double-buffered.
"""

from __future__ import annotations

import numpy as np


def _td_factor_scalar(S, mode, kappa, a, b, p, cap):
    if mode == 1:
        return kappa
    v = a + b * float(S) ** p
    if mode == 2:
        return v if v < cap else cap
    return v if v > cap else cap  # literal printed form: lower bound


def run_stimulus(net, sens_ptr, sens_idx, T, t0, learn, record, rng):
    """Advance the packed network ``T`` timesteps; mutates state in place.

    Returns (n_raster, raster_t, raster_circuit, raster_neuron); raster
    arrays are filled only when ``record`` is true.
    """
    C = net.n_circuits
    n_pops = net.n_pops
    K = net.K
    off = net.circ_off
    mu = net.mu
    Ncnt = net.Ncnt
    Scnt = net.Scnt
    psi = net.psi
    ema = net.ema
    M = net.M
    P = net.P
    wup = net.wup_flat
    wup_off = net.wup_off
    lastup = net.lastup_flat
    lastup_off = net.lastup_off
    wdn = net.wdn_flat
    wdn_off = net.wdn_off
    lastdn = net.lastdn_flat
    lastdn_off = net.lastdn_off
    factors = net.factors_flat
    fb_parent = net.fb_parent
    cptr, ckind, cid, coff = net.cptr, net.ckind, net.cid, net.coff
    zprev_idx, zprev_cnt = net.zprev_idx, net.zprev_cnt
    zcur_idx, zcur_cnt = net.zcur_idx, net.zcur_cnt
    alpha_tab = net.alpha_tab
    window = net.window
    ln_c = net.ln_c
    mu_max = net.mu_max
    target = net.target_rate
    gain = net.psi_gain
    psi_max = net.psi_max
    decay = net.ema_decay
    eta_exp = net.eta_exp
    td_mode = net.td_mode
    kappa = net.td_kappa
    pa, pb, pp, pcap = net.phi_a, net.phi_b, net.phi_p, net.phi_cap

    if record:
        cap = T * int(off[C])
        r_t = np.empty(cap, dtype=np.int64)
        r_c = np.empty(cap, dtype=np.int64)
        r_k = np.empty(cap, dtype=np.int64)
    else:
        r_t = r_c = r_k = np.empty(0, dtype=np.int64)
    n_rast = 0

    for step in range(T):
        t = t0 + step
        # top-down scale factors from the previous-step board and current S
        if td_mode != 0:
            for i in range(C):
                pi = fb_parent[i]
                if pi < 0:
                    continue
                fo = lastdn_off[i]
                po = off[pi]
                for j in range(int(zprev_cnt[pi])):
                    n = zprev_idx[po + j]
                    factors[fo + j] = _td_factor_scalar(
                        Scnt[po + n], td_mode, kappa, pa, pb, pp, pcap
                    )

        for i in range(C):
            ko = int(off[i])
            Ki = int(K[i])
            mu_seg = mu[ko:ko + Ki]
            nprev = int(zprev_cnt[i])

            # homeostatic controller runs every timestep
            ema[i] = decay * ema[i] + (1.0 - decay) * nprev
            if ema[i] > target:
                psi[i] = psi[i] * (1.0 + gain)
            elif ema[i] < target:
                psi[i] = psi[i] / (1.0 + gain)
            if psi[i] > psi_max:
                psi[i] = psi_max
            elif psi[i] < 0.0:
                psi[i] = 0.0

            if nprev > 0:
                # lateral reset: zero potentials, clear traces, and drop
                # this step's arrivals (the window starts after the reset)
                mu_seg[:] = 0.0
                lastup[lastup_off[i]:lastup_off[i] + int(M[i])] = -1
                if P[i] > 0:
                    lastdn[lastdn_off[i]:lastdn_off[i] + int(P[i])] = -1
            else:
                u = np.zeros(Ki)
                tot = 0.0
                wuo = int(wup_off[i])
                Mi = int(M[i])
                w_mat = wup[wuo:wuo + Ki * Mi].reshape(Ki, Mi) if Mi else None
                for j in range(int(cptr[i]), int(cptr[i + 1])):
                    base = int(coff[j])
                    if ckind[j] == 0:
                        s = int(sens_ptr[step * n_pops + cid[j]])
                        e = int(sens_ptr[step * n_pops + cid[j] + 1])
                        fired = sens_idx[s:e]
                    else:
                        ci = int(cid[j])
                        fired = zprev_idx[off[ci]:off[ci] + int(zprev_cnt[ci])]
                    for n in fired:
                        u += w_mat[:, base + int(n)] - ln_c
                    tot += float(fired.size)
                if P[i] > 0:
                    pi = int(fb_parent[i])
                    po = int(off[pi])
                    ldo = int(lastdn_off[i])
                    wdo = int(wdn_off[i])
                    Pi = int(P[i])
                    wd_mat = wdn[wdo:wdo + Ki * Pi].reshape(Ki, Pi)
                    for j in range(int(zprev_cnt[pi])):
                        n = int(zprev_idx[po + j])
                        f = factors[ldo + j]
                        u += f * (wd_mat[:, n] - ln_c)
                        tot += f
                ic = psi[i] * tot
                np.add(mu_seg, u, out=mu_seg)
                mu_seg -= ic
                np.maximum(mu_seg, 0.0, out=mu_seg)
                np.minimum(mu_seg, mu_max, out=mu_seg)

            # stochastic firing: exactly Ki uniforms, in neuron order
            prob = np.exp(mu_seg - mu_max)
            draws = rng.random(Ki)
            fired_k = np.nonzero(draws < prob)[0]
            nf = fired_k.size
            zcur_idx[ko:ko + nf] = fired_k
            zcur_cnt[i] = nf

            if record and nf:
                r_t[n_rast:n_rast + nf] = t
                r_c[n_rast:n_rast + nf] = i
                r_k[n_rast:n_rast + nf] = fired_k
                n_rast += nf

            # counters and plasticity; traces still hold arrivals up to t-1,
            # so a pre-spike arriving this step never erases the causal lag
            if nf:
                luo = int(lastup_off[i])
                wuo = int(wup_off[i])
                Mi = int(M[i])
                lag_up = None
                if learn and Mi:
                    last = lastup[luo:luo + Mi]
                    lag = t - last
                    valid = (last >= 0) & (lag >= 1) & (lag <= window)
                    lag_up = np.where(valid, alpha_tab[np.where(valid, lag, 0)], 0.0)
                lag_dn = None
                if learn and P[i] > 0:
                    ldo = int(lastdn_off[i])
                    Pi = int(P[i])
                    last = lastdn[ldo:ldo + Pi]
                    lag = t - last
                    valid = (last >= 0) & (lag >= 1) & (lag <= window)
                    lag_dn = np.where(valid, alpha_tab[np.where(valid, lag, 0)], 0.0)
                for k in fired_k:
                    Ncnt[ko + k] += 1
                    Scnt[ko + k] += 1
                    if learn:
                        eta = float(Ncnt[ko + k]) ** -eta_exp
                        if Mi:
                            row = wup[wuo + k * Mi:wuo + (k + 1) * Mi]
                            row += eta * (lag_up * np.exp(-row) - 1.0)
                            np.clip(row, ln_c, 0.0, out=row)
                        if P[i] > 0:
                            Pi = int(P[i])
                            wdo = int(wdn_off[i])
                            row = wdn[wdo + k * Pi:wdo + (k + 1) * Pi]
                            row += eta * (lag_dn * np.exp(-row) - 1.0)
                            np.clip(row, ln_c, 0.0, out=row)

            # record this step's arrivals for future updates
            if nprev == 0:
                luo = int(lastup_off[i])
                for j in range(int(cptr[i]), int(cptr[i + 1])):
                    base = int(coff[j])
                    if ckind[j] == 0:
                        s = int(sens_ptr[step * n_pops + cid[j]])
                        e = int(sens_ptr[step * n_pops + cid[j] + 1])
                        fired = sens_idx[s:e]
                    else:
                        ci = int(cid[j])
                        fired = zprev_idx[off[ci]:off[ci] + int(zprev_cnt[ci])]
                    for n in fired:
                        lastup[luo + base + int(n)] = t
                if P[i] > 0:
                    pi = int(fb_parent[i])
                    po = int(off[pi])
                    ldo = int(lastdn_off[i])
                    for j in range(int(zprev_cnt[pi])):
                        lastdn[ldo + int(zprev_idx[po + j])] = t

        # commit the board
        zprev_idx[:] = zcur_idx
        zprev_cnt[:] = zcur_cnt

    return n_rast, r_t, r_c, r_k
