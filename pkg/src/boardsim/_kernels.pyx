# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled LMS kernels.

Every loop here mirrors ``_fallback.py`` operation for operation: same
accumulation order, same grouping of products. Both must stay in sync, the
test suite compares them bit for bit.
"""
import numpy as np

from libc.math cimport isfinite


cdef inline double _reg(const double[::1] u, const double[::1] d,
                        Py_ssize_t nb, Py_ssize_t k, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t j
    if i < nb:
        j = k - i
        if j >= 0:
            return u[j]
        return 0.0
    j = k - (i - nb) - 1
    if j >= 0:
        return d[j]
    return 0.0


def lms_run(const double[::1] u, const double[::1] d, coeffs,
            Py_ssize_t nb, Py_ssize_t na, double mu, double leakage,
            bint normalized, double eps, Py_ssize_t stride):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t p = nb + na
    cdef double[::1] c = np.array(coeffs, dtype=np.float64)
    cdef double[::1] y = np.zeros(n, dtype=np.float64)
    cdef double[::1] e = np.zeros(n, dtype=np.float64)
    cdef double[::1] r = np.zeros(p, dtype=np.float64)
    cdef Py_ssize_t nsnap = 0
    if stride > 0:
        nsnap = (n + stride - 1) // stride
    snaps_arr = np.zeros((nsnap, p), dtype=np.float64)
    cdef double[:, ::1] snaps = snaps_arr
    cdef Py_ssize_t k, i, s = 0
    cdef Py_ssize_t diverged = -1
    cdef double acc, err, power, mu_eff, g
    cdef double keep = 1.0 - leakage
    with nogil:
        for k in range(n):
            if stride > 0 and k % stride == 0:
                for i in range(p):
                    snaps[s, i] = c[i]
                s += 1
            acc = 0.0
            for i in range(p):
                r[i] = _reg(u, d, nb, k, i)
                acc = acc + c[i] * r[i]
            if not isfinite(acc):
                diverged = k
                break
            err = d[k] - acc
            y[k] = acc
            e[k] = err
            if normalized:
                power = 0.0
                for i in range(p):
                    power = power + r[i] * r[i]
                mu_eff = mu / (eps + power)
            else:
                mu_eff = mu
            g = (2.0 * mu_eff) * err
            for i in range(p):
                c[i] = keep * c[i] + g * r[i]
    return np.asarray(y), np.asarray(e), np.asarray(c), snaps_arr, diverged


def filter_block(const double[::1] u, const double[::1] d, const double[::1] c,
                 Py_ssize_t nb, Py_ssize_t na, Py_ssize_t k0, Py_ssize_t k1,
                 double[::1] y, double[::1] e):
    cdef Py_ssize_t p = nb + na
    cdef Py_ssize_t k, i
    cdef Py_ssize_t diverged = -1
    cdef double acc
    with nogil:
        for k in range(k0, k1):
            acc = 0.0
            for i in range(p):
                acc = acc + c[i] * _reg(u, d, nb, k, i)
            if not isfinite(acc):
                diverged = k
                break
            y[k] = acc
            e[k] = d[k] - acc
    return diverged


def update_block(const double[::1] u, const double[::1] d, const double[::1] e,
                 double[::1] c, Py_ssize_t nb, Py_ssize_t na, double mu,
                 double leakage, bint normalized, double eps,
                 Py_ssize_t k0, Py_ssize_t k1):
    cdef Py_ssize_t p = nb + na
    cdef Py_ssize_t k, i
    cdef double power, mu_eff, g, ri
    cdef double keep = 1.0 - leakage
    with nogil:
        for k in range(k0, k1):
            if normalized:
                power = 0.0
                for i in range(p):
                    ri = _reg(u, d, nb, k, i)
                    power = power + ri * ri
                mu_eff = mu / (eps + power)
            else:
                mu_eff = mu
            g = (2.0 * mu_eff) * e[k]
            for i in range(p):
                c[i] = keep * c[i] + g * _reg(u, d, nb, k, i)


# -- dual-core pipeline engine ---------------------------------------------
# A state-machine transcription of the generator workers in dualcore.py.
# Step boundaries, scheduler draws and write ranges match one for one, so
# both engines produce the same schedule, memory image and hazards.

from libc.stdint cimport uint16_t, uint32_t, uint64_t
from libc.string cimport memcpy

cdef enum:
    MAX_WRITES = 8

cdef inline uint64_t _splitmix(uint64_t* s) noexcept nogil:
    s[0] += <uint64_t>0x9E3779B97F4A7C15
    cdef uint64_t z = s[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline bint _put_f32(uint16_t[::1] mem, Py_ssize_t addr, double v) noexcept nogil:
    cdef float f = <float>v
    cdef uint32_t bits
    if not isfinite(f):
        return False
    memcpy(&bits, &f, 4)
    mem[addr] = <uint16_t>(bits >> 16)
    mem[addr + 1] = <uint16_t>(bits & 0xFFFF)
    return True


cdef inline double _get_f32(uint16_t[::1] mem, Py_ssize_t addr) noexcept nogil:
    cdef uint32_t bits = (<uint32_t>mem[addr] << 16) | <uint32_t>mem[addr + 1]
    cdef float f
    memcpy(&f, &bits, 4)
    return <double>f


cdef struct Engine:
    Py_ssize_t wr_n
    Py_ssize_t wr_who[MAX_WRITES]
    Py_ssize_t wr_lo[MAX_WRITES]
    Py_ssize_t wr_hi[MAX_WRITES]
    Py_ssize_t step
    bint strict
    Py_ssize_t fault_addr


cdef enum:
    # status codes
    ST_OK = 0
    ST_DEADLOCK = 1
    ST_MAXSTEPS = 2
    ST_DIVERGED = 3
    ST_HAZARD = 4
    ST_RANGE = 5
    # step results
    R_BLOCKED = 0
    R_PROGRESS = 1
    R_FINISHED = 2
    R_ERROR = 3
    # worker phase: finished, exits on its next turn
    P_FIN = 100


cdef inline bint _note_write(Engine* eng, Py_ssize_t who, Py_ssize_t lo, Py_ssize_t hi,
                             list hazards) except -1:
    cdef Py_ssize_t i, a
    for i in range(eng.wr_n):
        if eng.wr_who[i] != who and eng.wr_lo[i] < hi and lo < eng.wr_hi[i]:
            for a in range(max(eng.wr_lo[i], lo), min(eng.wr_hi[i], hi)):
                if eng.strict:
                    eng.fault_addr = a
                    return False
                hazards.append((eng.step, a, eng.wr_who[i], who))
    if eng.wr_n < MAX_WRITES:
        eng.wr_who[eng.wr_n] = who
        eng.wr_lo[eng.wr_n] = lo
        eng.wr_hi[eng.wr_n] = hi
        eng.wr_n += 1
    return True


def pipeline_run(const double[::1] u, const double[::1] d, uint16_t[::1] mem,
                 tuple layout, Py_ssize_t nb, Py_ssize_t na, double mu,
                 double leakage, bint normalized, double eps,
                 const double[::1] initial, object seed, Py_ssize_t max_steps,
                 Py_ssize_t start_step, bint strict):
    """Run both workers to completion.

    Returns ``(y, e, final, end_step, hazards, status, detail)`` where
    hazards are ``(step, address, first_writer, second_writer)`` with
    writer 0 = filter, 1 = LMS.
    """
    cdef Py_ssize_t coeff_base, coeff_count, data_base, bl, flag_data, flag_coeff, seqno
    coeff_base, coeff_count, data_base, bl, flag_data, flag_coeff, seqno = layout
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t p = nb + na
    cdef Py_ssize_t nblocks = (n + bl - 1) // bl
    cdef Py_ssize_t bank_words = 6 * bl

    y_arr = np.zeros(n)
    e_arr = np.zeros(n)
    cdef double[::1] y = y_arr
    cdef double[::1] e = e_arr
    cdef double[::1] u32 = np.zeros(n)
    cdef double[::1] e32 = np.zeros(n)
    cdef double[::1] d32 = np.zeros(n)
    cdef double[::1] c_use = np.zeros(p)
    c_arr = np.array(initial, dtype=np.float64)
    cdef double[::1] c = c_arr
    hazards = []

    cdef Engine eng
    eng.wr_n = 0
    eng.step = start_step
    eng.strict = strict
    eng.fault_addr = -1

    cdef bint use_seed = seed is not None
    cdef uint64_t rng = 0
    if use_seed:
        rng = <uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF)

    # worker state
    cdef int f_phase = P_FIN if nblocks == 0 else 0
    cdef Py_ssize_t f_n = 0
    cdef int l_phase = P_FIN if nblocks == 0 else 10
    cdef Py_ssize_t l_j = 0, l_m = 0
    cdef bint live[2]
    cdef bint blocked[2]
    live[0] = True
    live[1] = True
    blocked[0] = False
    blocked[1] = False
    cdef Py_ssize_t chosen[2]
    cdef Py_ssize_t nchosen, ci, w, k, i, k0, k1, cnt, base, rr = 0
    cdef int res, status = ST_OK
    cdef Py_ssize_t detail = -1
    cdef uint64_t pick
    cdef double acc, power, mu_eff, g, ri, keep = 1.0 - leakage
    cdef bint ok

    while live[0] or live[1]:
        if max_steps >= 0 and eng.step >= max_steps:
            status = ST_MAXSTEPS
            break
        if live[0] and live[1]:
            if use_seed:
                pick = _splitmix(&rng) & 3
                if pick == 0:
                    nchosen = 1; chosen[0] = 0
                elif pick == 1:
                    nchosen = 1; chosen[0] = 1
                elif pick == 2:
                    nchosen = 2; chosen[0] = 0; chosen[1] = 1
                else:
                    nchosen = 2; chosen[0] = 1; chosen[1] = 0
            else:
                nchosen = 1
                chosen[0] = rr % 2
                rr += 1
        else:
            nchosen = 1
            chosen[0] = 0 if live[0] else 1
            if not use_seed:
                rr += 1

        for ci in range(nchosen):
            w = chosen[ci]
            res = R_PROGRESS
            if w == 0:
                # ---- filter worker
                if f_phase == P_FIN:
                    res = R_FINISHED
                elif f_phase == 0:
                    if ((f_n + 2 - mem[flag_coeff]) & 0xFFFF) > 1:
                        res = R_BLOCKED
                    else:
                        base = coeff_base + (f_n % 2) * 2 * coeff_count
                        for i in range(p):
                            c_use[i] = _get_f32(mem, base + 2 * i)
                        f_phase = 1
                elif f_phase == 1:
                    if f_n >= 2 and ((f_n - mem[seqno]) & 0xFFFF) > 1:
                        res = R_BLOCKED
                    else:
                        k0 = f_n * bl
                        k1 = min(k0 + bl, n)
                        for k in range(k0, k1):
                            acc = 0.0
                            for i in range(p):
                                acc = acc + c_use[i] * _reg(u, d, nb, k, i)
                            if not isfinite(acc):
                                status = ST_DIVERGED
                                detail = k
                                break
                            y[k] = acc
                            e[k] = d[k] - acc
                        if status != ST_OK:
                            res = R_ERROR
                        else:
                            f_phase = 2
                elif f_phase == 2:
                    k0 = f_n * bl
                    k1 = min(k0 + bl, n)
                    cnt = k1 - k0
                    base = data_base + (f_n % 2) * bank_words
                    if cnt == bl:
                        if not _note_write(&eng, 0, base, base + bank_words, hazards):
                            status = ST_HAZARD
                    else:
                        if not (_note_write(&eng, 0, base, base + 2 * cnt, hazards)
                                and _note_write(&eng, 0, base + 2 * bl, base + 2 * bl + 2 * cnt, hazards)
                                and _note_write(&eng, 0, base + 4 * bl, base + 4 * bl + 2 * cnt, hazards)):
                            status = ST_HAZARD
                    if status == ST_OK:
                        ok = True
                        for k in range(k0, k1):
                            ok = ok and _put_f32(mem, base + 2 * (k - k0), u[k])
                            ok = ok and _put_f32(mem, base + 2 * bl + 2 * (k - k0), e[k])
                            ok = ok and _put_f32(mem, base + 4 * bl + 2 * (k - k0), d[k])
                        if not ok:
                            status = ST_RANGE
                    if status != ST_OK:
                        res = R_ERROR
                    else:
                        f_phase = 3
                else:
                    if not _note_write(&eng, 0, flag_data, flag_data + 1, hazards):
                        status = ST_HAZARD
                        res = R_ERROR
                    else:
                        mem[flag_data] = <uint16_t>((f_n + 1) & 0xFFFF)
                        f_n += 1
                        f_phase = P_FIN if f_n == nblocks else 0
            else:
                # ---- LMS worker
                if l_phase == P_FIN:
                    res = R_FINISHED
                elif l_phase == 10 or l_phase == 13:
                    # publish a coefficient set: initial pair (10) or c_{m+2} (13)
                    if l_phase == 10:
                        base = coeff_base + (l_j % 2) * 2 * coeff_count
                    else:
                        base = coeff_base + ((l_m + 2) % 2) * 2 * coeff_count
                    if not _note_write(&eng, 1, base, base + 2 * p, hazards):
                        status = ST_HAZARD
                    else:
                        ok = True
                        for i in range(p):
                            ok = ok and _put_f32(mem, base + 2 * i, c[i])
                        if not ok:
                            status = ST_RANGE
                    if status != ST_OK:
                        res = R_ERROR
                    else:
                        l_phase += 1
                elif l_phase == 11:
                    if not _note_write(&eng, 1, flag_coeff, flag_coeff + 1, hazards):
                        status = ST_HAZARD
                        res = R_ERROR
                    else:
                        mem[flag_coeff] = <uint16_t>(l_j + 1)
                        l_j += 1
                        l_phase = 10 if l_j < min(2, nblocks) else 0
                elif l_phase == 14:
                    if not _note_write(&eng, 1, flag_coeff, flag_coeff + 1, hazards):
                        status = ST_HAZARD
                        res = R_ERROR
                    else:
                        mem[flag_coeff] = <uint16_t>((l_m + 3) & 0xFFFF)
                        l_m += 1
                        l_phase = P_FIN if l_m == nblocks else 0
                elif l_phase == 0:
                    if ((l_m + 2 - mem[flag_data]) & 0xFFFF) > 1:
                        res = R_BLOCKED
                    else:
                        k0 = l_m * bl
                        k1 = min(k0 + bl, n)
                        base = data_base + (l_m % 2) * bank_words
                        for k in range(k0, k1):
                            u32[k] = _get_f32(mem, base + 2 * (k - k0))
                            e32[k] = _get_f32(mem, base + 2 * bl + 2 * (k - k0))
                            d32[k] = _get_f32(mem, base + 4 * bl + 2 * (k - k0))
                        l_phase = 1
                elif l_phase == 1:
                    if not _note_write(&eng, 1, seqno, seqno + 1, hazards):
                        status = ST_HAZARD
                        res = R_ERROR
                    else:
                        mem[seqno] = <uint16_t>((l_m + 1) & 0xFFFF)
                        l_phase = 2
                else:
                    # l_phase == 2: fold block l_m into the master copy
                    k0 = l_m * bl
                    k1 = min(k0 + bl, n)
                    for k in range(k0, k1):
                        if normalized:
                            power = 0.0
                            for i in range(p):
                                ri = _reg(u32, d32, nb, k, i)
                                power = power + ri * ri
                            mu_eff = mu / (eps + power)
                        else:
                            mu_eff = mu
                        g = (2.0 * mu_eff) * e32[k]
                        for i in range(p):
                            c[i] = keep * c[i] + g * _reg(u32, d32, nb, k, i)
                    if l_m + 2 < nblocks:
                        l_phase = 13
                    else:
                        l_m += 1
                        l_phase = P_FIN if l_m == nblocks else 0

            if res == R_ERROR:
                break
            if res == R_FINISHED:
                live[w] = False
            if res == R_BLOCKED:
                blocked[w] = True
            else:
                blocked[0] = False
                blocked[1] = False
        if status != ST_OK:
            if status == ST_HAZARD:
                detail = eng.fault_addr
            break
        if (live[0] or live[1]) and (blocked[0] or not live[0]) and (blocked[1] or not live[1]):
            status = ST_DEADLOCK
            break
        eng.step += 1
        eng.wr_n = 0

    return y_arr, e_arr, c_arr, eng.step, hazards, status, detail
