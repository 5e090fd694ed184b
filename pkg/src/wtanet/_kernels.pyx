# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simulation kernel; semantics mirror _kernels_py.run_stimulus.

Both backends consume the sampling stream identically (K uniforms per
circuit per timestep through the PCG next_double path) and order float
operations the same way, so runs agree across backends up to last-ulp libm
differences.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport exp, pow
from numpy.random cimport bitgen_t

cnp.import_array()


cdef inline double _clampw(double w, double ln_c) nogil:
    if w < ln_c:
        return ln_c
    if w > 0.0:
        return 0.0
    return w


def run_stimulus(net, sens_ptr_obj, sens_idx_obj, int T, long long t0,
                 int learn, int record, rng):
    cdef cnp.int64_t[::1] sens_ptr = sens_ptr_obj
    cdef cnp.int64_t[::1] sens_idx = sens_idx_obj

    cdef int C = net.n_circuits
    cdef int n_pops = net.n_pops
    cdef cnp.int64_t[::1] K = net.K
    cdef cnp.int64_t[::1] off = net.circ_off
    cdef double[::1] mu = net.mu
    cdef cnp.int64_t[::1] Ncnt = net.Ncnt
    cdef cnp.int64_t[::1] Scnt = net.Scnt
    cdef double[::1] psi = net.psi
    cdef double[::1] ema = net.ema
    cdef cnp.int64_t[::1] M = net.M
    cdef cnp.int64_t[::1] P = net.P
    cdef double[::1] wup = net.wup_flat
    cdef cnp.int64_t[::1] wup_off = net.wup_off
    cdef cnp.int64_t[::1] lastup = net.lastup_flat
    cdef cnp.int64_t[::1] lastup_off = net.lastup_off
    cdef double[::1] wdn = net.wdn_flat
    cdef cnp.int64_t[::1] wdn_off = net.wdn_off
    cdef cnp.int64_t[::1] lastdn = net.lastdn_flat
    cdef cnp.int64_t[::1] lastdn_off = net.lastdn_off
    cdef double[::1] factors = net.factors_flat
    cdef cnp.int64_t[::1] fb_parent = net.fb_parent
    cdef cnp.int64_t[::1] cptr = net.cptr
    cdef cnp.int64_t[::1] ckind = net.ckind
    cdef cnp.int64_t[::1] cid = net.cid
    cdef cnp.int64_t[::1] coff = net.coff
    cdef cnp.int64_t[::1] zprev_idx = net.zprev_idx
    cdef cnp.int64_t[::1] zprev_cnt = net.zprev_cnt
    cdef cnp.int64_t[::1] zcur_idx = net.zcur_idx
    cdef cnp.int64_t[::1] zcur_cnt = net.zcur_cnt
    cdef double[::1] alpha_tab = net.alpha_tab

    cdef long long window = net.window
    cdef double ln_c = net.ln_c
    cdef double mu_max = net.mu_max
    cdef double target = net.target_rate
    cdef double gain = net.psi_gain
    cdef double psi_max = net.psi_max
    cdef double decay = net.ema_decay
    cdef double eta_exp = net.eta_exp
    cdef int td_mode = net.td_mode
    cdef double kappa = net.td_kappa
    cdef double pa = net.phi_a
    cdef double pb = net.phi_b
    cdef double pp = net.phi_p
    cdef double pcap = net.phi_cap

    cdef bitgen_t *bg = <bitgen_t *> PyCapsule_GetPointer(
        rng.bit_generator.capsule, "BitGenerator")

    cdef long long cap = T * off[C] if record else 0
    r_t_arr = np.empty(max(cap, 1), dtype=np.int64)
    r_c_arr = np.empty(max(cap, 1), dtype=np.int64)
    r_k_arr = np.empty(max(cap, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] r_t = r_t_arr
    cdef cnp.int64_t[::1] r_c = r_c_arr
    cdef cnp.int64_t[::1] r_k = r_k_arr
    cdef long long n_rast = 0

    u_arr = np.zeros(int(np.max(net.K)), dtype=np.float64)
    cdef double[::1] u = u_arr

    cdef long long step, t, i, j, k, m, n, g, pi, po, fo, ko, Ki, Mi, Pi
    cdef long long luo, ldo, wuo, wdo, nprev, nf, s, e, base, d, last
    cdef double tot, ic, f, v, prob, eta, a, w, Sv

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
                for j in range(zprev_cnt[pi]):
                    n = zprev_idx[po + j]
                    if td_mode == 1:
                        factors[fo + j] = kappa
                    else:
                        Sv = <double> Scnt[po + n]
                        v = pa + pb * pow(Sv, pp)
                        if td_mode == 2:
                            factors[fo + j] = v if v < pcap else pcap
                        else:
                            factors[fo + j] = v if v > pcap else pcap

        for i in range(C):
            ko = off[i]
            Ki = K[i]
            Mi = M[i]
            Pi = P[i]
            luo = lastup_off[i]
            ldo = lastdn_off[i]
            wuo = wup_off[i]
            wdo = wdn_off[i]
            nprev = zprev_cnt[i]

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
                # lateral reset: zero potentials, clear traces, drop arrivals
                for k in range(Ki):
                    mu[ko + k] = 0.0
                for m in range(Mi):
                    lastup[luo + m] = -1
                for n in range(Pi):
                    lastdn[ldo + n] = -1
            else:
                for k in range(Ki):
                    u[k] = 0.0
                tot = 0.0
                for j in range(cptr[i], cptr[i + 1]):
                    base = coff[j]
                    if ckind[j] == 0:
                        s = sens_ptr[step * n_pops + cid[j]]
                        e = sens_ptr[step * n_pops + cid[j] + 1]
                        for m in range(s, e):
                            g = base + sens_idx[m]
                            for k in range(Ki):
                                u[k] = u[k] + (wup[wuo + k * Mi + g] - ln_c)
                        tot += <double> (e - s)
                    else:
                        pi = cid[j]
                        po = off[pi]
                        for m in range(zprev_cnt[pi]):
                            g = base + zprev_idx[po + m]
                            for k in range(Ki):
                                u[k] = u[k] + (wup[wuo + k * Mi + g] - ln_c)
                        tot += <double> zprev_cnt[pi]
                if Pi > 0:
                    pi = fb_parent[i]
                    po = off[pi]
                    for j in range(zprev_cnt[pi]):
                        n = zprev_idx[po + j]
                        f = factors[ldo + j]
                        for k in range(Ki):
                            u[k] = u[k] + f * (wdn[wdo + k * Pi + n] - ln_c)
                        tot += f
                ic = psi[i] * tot
                for k in range(Ki):
                    v = mu[ko + k] + u[k]
                    v = v - ic
                    if v < 0.0:
                        v = 0.0
                    if v > mu_max:
                        v = mu_max
                    mu[ko + k] = v

            # stochastic firing: exactly Ki uniforms, in neuron order
            nf = 0
            for k in range(Ki):
                prob = exp(mu[ko + k] - mu_max)
                if bg.next_double(bg.state) < prob:
                    zcur_idx[ko + nf] = k
                    nf += 1
            zcur_cnt[i] = nf

            if record and nf:
                for j in range(nf):
                    r_t[n_rast] = t
                    r_c[n_rast] = i
                    r_k[n_rast] = zcur_idx[ko + j]
                    n_rast += 1

            # counters and plasticity; traces still hold arrivals up to t-1,
            # so a pre-spike arriving this step never erases the causal lag
            for j in range(nf):
                k = zcur_idx[ko + j]
                Ncnt[ko + k] += 1
                Scnt[ko + k] += 1
                if learn:
                    eta = pow(<double> Ncnt[ko + k], -eta_exp)
                    for m in range(Mi):
                        last = lastup[luo + m]
                        a = 0.0
                        if last >= 0:
                            d = t - last
                            if 1 <= d <= window:
                                a = alpha_tab[d]
                        w = wup[wuo + k * Mi + m]
                        w = w + eta * (a * exp(-w) - 1.0)
                        wup[wuo + k * Mi + m] = _clampw(w, ln_c)
                    for n in range(Pi):
                        last = lastdn[ldo + n]
                        a = 0.0
                        if last >= 0:
                            d = t - last
                            if 1 <= d <= window:
                                a = alpha_tab[d]
                        w = wdn[wdo + k * Pi + n]
                        w = w + eta * (a * exp(-w) - 1.0)
                        wdn[wdo + k * Pi + n] = _clampw(w, ln_c)

            # record this step's arrivals for future updates
            if nprev == 0:
                for j in range(cptr[i], cptr[i + 1]):
                    base = coff[j]
                    if ckind[j] == 0:
                        s = sens_ptr[step * n_pops + cid[j]]
                        e = sens_ptr[step * n_pops + cid[j] + 1]
                        for m in range(s, e):
                            lastup[luo + base + sens_idx[m]] = t
                    else:
                        pi = cid[j]
                        po = off[pi]
                        for m in range(zprev_cnt[pi]):
                            lastup[luo + base + zprev_idx[po + m]] = t
                if Pi > 0:
                    pi = fb_parent[i]
                    po = off[pi]
                    for j in range(zprev_cnt[pi]):
                        lastdn[ldo + zprev_idx[po + j]] = t

        # commit the board
        for i in range(C):
            zprev_cnt[i] = zcur_cnt[i]
        for j in range(off[C]):
            zprev_idx[j] = zcur_idx[j]

    return n_rast, r_t_arr, r_c_arr, r_k_arr
