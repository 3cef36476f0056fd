# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.  Must consume random numbers in exactly the same
order as the pure-Python versions in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log1p
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t

cnp.import_array()

ctypedef cnp.int8_t spin_t
ctypedef Py_ssize_t idx_t

IMPLEMENTATION = "cython"


cdef inline bitgen_t* _bitgen(object rng) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(rng.bit_generator.capsule, "BitGenerator")


cdef inline double _u(bitgen_t* bg) noexcept nogil:
    return bg.next_double(bg.state)


def discrete_rounds(spin_t[::1] spins, idx_t[:, ::1] pairs, idx_t[::1] offsets,
                    long n_rounds, object rng):
    """Apply ``n_rounds`` measurement rounds in place.

    ``pairs[offsets[k]:offsets[k + 1]]`` are the bonds of step ``k``.  One
    uniform is drawn per bond; antiparallel pairs swap when it is below 1/2.
    """
    cdef bitgen_t* bg = _bitgen(rng)
    cdef long r
    cdef idx_t k, i, a, b
    cdef idx_t n_steps = offsets.shape[0] - 1
    cdef double u
    with rng.bit_generator.lock, nogil:
        for r in range(n_rounds):
            for k in range(n_steps):
                for i in range(offsets[k], offsets[k + 1]):
                    u = _u(bg)
                    a = pairs[i, 0]
                    b = pairs[i, 1]
                    if spins[a] != spins[b] and u < 0.5:
                        spins[a] = -spins[a]
                        spins[b] = -spins[b]


def continuous_events(spin_t[::1] spins, idx_t[:, ::1] bonds, double t_next,
                      double t_stop, double rate, object rng):
    """Process all events with time ``<= t_stop``; return ``(t_next, n_events)``.

    ``rate`` is the total event rate ``n_bonds * gamma``.  Per event: one
    uniform picks the bond, one decides the swap, one draws the next gap.
    """
    cdef bitgen_t* bg = _bitgen(rng)
    cdef idx_t nb = bonds.shape[0]
    cdef idx_t b, s, t
    cdef long n = 0
    cdef double u
    with rng.bit_generator.lock, nogil:
        while t_next <= t_stop:
            b = <idx_t>(_u(bg) * nb)
            if b >= nb:
                b = nb - 1
            u = _u(bg)
            s = bonds[b, 0]
            t = bonds[b, 1]
            if spins[s] != spins[t] and u < 0.5:
                spins[s] = -spins[s]
                spins[t] = -spins[t]
            t_next += -log1p(-_u(bg)) / rate
            n += 1
    return t_next, n


def sse_diagonal_update(spin_t[::1] spins, idx_t[::1] opstring, idx_t[:, ::1] bonds,
                        double beta, object rng):
    """Insert/remove diagonal operators; return the expansion order.

    Encoding: -1 identity, ``2 b`` diagonal and ``2 b + 1`` off-diagonal on bond ``b``.
    """
    cdef bitgen_t* bg = _bitgen(rng)
    cdef idx_t M = opstring.shape[0]
    cdef idx_t nb = bonds.shape[0]
    cdef idx_t p, op, b, n = 0
    cdef double ratio = 0.5 * beta * nb
    for p in range(M):
        if opstring[p] != -1:
            n += 1
    with rng.bit_generator.lock, nogil:
        for p in range(M):
            op = opstring[p]
            if op == -1:
                b = <idx_t>(_u(bg) * nb)
                if b >= nb:
                    b = nb - 1
                if spins[bonds[b, 0]] != spins[bonds[b, 1]]:
                    if _u(bg) * (M - n) < ratio:
                        opstring[p] = 2 * b
                        n += 1
            elif op % 2 == 0:
                if _u(bg) * ratio < (M - n + 1):
                    opstring[p] = -1
                    n -= 1
            else:
                b = op // 2
                spins[bonds[b, 0]] = -spins[bonds[b, 0]]
                spins[bonds[b, 1]] = -spins[bonds[b, 1]]
    return n


def sse_loop_update(spin_t[::1] spins, idx_t[::1] opstring, idx_t[:, ::1] bonds, object rng):
    """Build the linked vertex list and flip every loop with probability 1/2."""
    cdef bitgen_t* bg = _bitgen(rng)
    cdef idx_t M = opstring.shape[0]
    cdef idx_t n_sites = spins.shape[0]
    cdef cnp.ndarray[idx_t, ndim=1] vl_arr = np.empty(4 * M, dtype=np.intp)
    cdef cnp.ndarray[idx_t, ndim=1] first_arr = np.full(n_sites, -1, dtype=np.intp)
    cdef cnp.ndarray[idx_t, ndim=1] last_arr = np.full(n_sites, -1, dtype=np.intp)
    cdef idx_t[::1] vl = vl_arr
    cdef idx_t[::1] first = first_arr
    cdef idx_t[::1] last = last_arr
    cdef idx_t p, op, b, s0, s1, v0, v1, v2, v3, s
    with nogil:
        for p in range(M):
            v0 = 4 * p
            op = opstring[p]
            if op == -1:
                vl[v0] = -2
                vl[v0 + 1] = -2
                vl[v0 + 2] = -2
                vl[v0 + 3] = -2
                continue
            b = op // 2
            s0 = bonds[b, 0]
            s1 = bonds[b, 1]
            v2 = last[s0]
            v3 = last[s1]
            if v2 == -1:
                first[s0] = v0
            else:
                vl[v2] = v0
                vl[v0] = v2
            if v3 == -1:
                first[s1] = v0 + 1
            else:
                vl[v3] = v0 + 1
                vl[v0 + 1] = v3
            last[s0] = v0 + 2
            last[s1] = v0 + 3
        for s in range(n_sites):
            v0 = first[s]
            if v0 != -1:
                v1 = last[s]
                vl[v1] = v0
                vl[v0] = v1
    with rng.bit_generator.lock, nogil:
        for v0 in range(0, 4 * M, 2):
            if vl[v0] < 0:
                continue
            v1 = v0
            if _u(bg) < 0.5:
                while True:
                    p = v1 // 4
                    opstring[p] = opstring[p] ^ 1
                    vl[v1] = -1
                    v2 = v1 ^ 1
                    v1 = vl[v2]
                    vl[v2] = -1
                    if v1 == v0:
                        break
            else:
                while True:
                    vl[v1] = -2
                    v2 = v1 ^ 1
                    v1 = vl[v2]
                    vl[v2] = -2
                    if v1 == v0:
                        break
        for s in range(n_sites):
            if first[s] == -1:
                if _u(bg) < 0.5:
                    spins[s] = -spins[s]
            elif vl[first[s]] == -1:
                spins[s] = -spins[s]
