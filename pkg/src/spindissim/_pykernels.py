"""Pure-Python versions of the compiled inner loops.

Random numbers are consumed in the same order as in ``_kernels.pyx``:
``rng.random(k)`` yields the same doubles as ``k`` scalar ``rng.random()``
calls, so both implementations give bit-identical results per seed.
"""

import math

import numpy as np

IMPLEMENTATION = "python"


def discrete_rounds(spins, pairs, offsets, n_rounds, rng):
    n_steps = len(offsets) - 1
    steps = [(pairs[offsets[k]:offsets[k + 1], 0], pairs[offsets[k]:offsets[k + 1], 1])
             for k in range(n_steps)]
    for _ in range(int(n_rounds)):
        for a, b in steps:
            u = rng.random(len(a))
            swap = (spins[a] != spins[b]) & (u < 0.5)
            # each step is a matching, so the swaps are independent
            spins[a[swap]] *= -1
            spins[b[swap]] *= -1


def continuous_events(spins, bonds, t_next, t_stop, rate, rng):
    nb = len(bonds)
    n = 0
    while t_next <= t_stop:
        b = min(int(rng.random() * nb), nb - 1)
        u = rng.random()
        s, t = bonds[b]
        if spins[s] != spins[t] and u < 0.5:
            spins[s] = -spins[s]
            spins[t] = -spins[t]
        t_next += -math.log1p(-rng.random()) / rate
        n += 1
    return t_next, n


def sse_diagonal_update(spins, opstring, bonds, beta, rng):
    M = len(opstring)
    nb = len(bonds)
    ratio = 0.5 * beta * nb
    n = int(np.count_nonzero(opstring != -1))
    for p in range(M):
        op = opstring[p]
        if op == -1:
            b = min(int(rng.random() * nb), nb - 1)
            if spins[bonds[b, 0]] != spins[bonds[b, 1]]:
                if rng.random() * (M - n) < ratio:
                    opstring[p] = 2 * b
                    n += 1
        elif op % 2 == 0:
            if rng.random() * ratio < (M - n + 1):
                opstring[p] = -1
                n -= 1
        else:
            b = op // 2
            spins[bonds[b, 0]] *= -1
            spins[bonds[b, 1]] *= -1
    return n


def sse_loop_update(spins, opstring, bonds, rng):
    M = len(opstring)
    n_sites = len(spins)
    vl = np.empty(4 * M, dtype=np.intp)
    first = np.full(n_sites, -1, dtype=np.intp)
    last = np.full(n_sites, -1, dtype=np.intp)
    for p in range(M):
        v0 = 4 * p
        op = opstring[p]
        if op == -1:
            vl[v0:v0 + 4] = -2
            continue
        s0, s1 = bonds[op // 2]
        v2, v3 = last[s0], last[s1]
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
    for v0 in range(0, 4 * M, 2):
        if vl[v0] < 0:
            continue
        v1 = v0
        mark = -1 if rng.random() < 0.5 else -2
        while True:
            if mark == -1:
                opstring[v1 // 4] ^= 1
            vl[v1] = mark
            v2 = v1 ^ 1
            v1 = vl[v2]
            vl[v2] = mark
            if v1 == v0:
                break
    for s in range(n_sites):
        if first[s] == -1:
            if rng.random() < 0.5:
                spins[s] = -spins[s]
        elif vl[first[s]] == -1:
            spins[s] = -spins[s]
