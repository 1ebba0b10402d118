"""Compiled kernel for the per-bin z-type enumeration (binary Z only).

For one bin with members x_1..x_s, coordinates are grouped into classes by the
pattern (x_1i,...,x_si); for a class of multiplicity m, z only enters through
how many of its m coordinates carry z=1. The kernel walks the mixed-radix
odometer over per-class counts, maintaining prefix products per member, and
accumulates count * |P(z,b) - p(z)/M| over all z in one pass.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def bins_abs_dev(order, starts, sizes, digits, probs, qz, minv, n):
    nbins = starts.shape[0]
    K = probs.shape[0]
    max_s = 0
    for b in range(nbins):
        if sizes[b] > max_s:
            max_s = sizes[b]

    comb = np.zeros((n + 1, n + 1))
    for m in range(n + 1):
        comb[m, 0] = 1.0
        for k in range(1, m + 1):
            prev = comb[m - 1, k] if k <= m - 1 else 0.0
            comb[m, k] = comb[m - 1, k - 1] + prev

    pat_key = np.empty(n, np.int64)
    class_m = np.empty(n, np.int64)
    class_first = np.empty(n, np.int64)
    digit = np.empty(n, np.int64)
    val = np.empty((n, max_s + 1, n + 1))
    pref = np.empty((n + 1, max_s + 1))
    prefcnt = np.empty(n + 1)
    pow0 = np.empty(n + 1)
    pow1 = np.empty(n + 1)

    acc = 0.0
    for bi in range(nbins):
        s = sizes[bi]
        st = starts[bi]

        C = 0
        for i in range(n):
            key = np.int64(0)
            for j in range(s):
                key = key * K + digits[order[st + j], i]
            found = -1
            for c in range(C):
                if pat_key[c] == key:
                    found = c
                    break
            if found >= 0:
                class_m[found] += 1
            else:
                pat_key[C] = key
                class_m[C] = 1
                class_first[C] = i
                C += 1

        for c in range(C):
            m = class_m[c]
            i = class_first[c]
            for j in range(s + 1):
                if j < s:
                    p0 = probs[digits[order[st + j], i], 0]
                    p1 = probs[digits[order[st + j], i], 1]
                else:
                    p0 = qz[0]
                    p1 = qz[1]
                pow0[0] = 1.0
                pow1[0] = 1.0
                for t in range(1, m + 1):
                    pow0[t] = pow0[t - 1] * p0
                    pow1[t] = pow1[t - 1] * p1
                for kk in range(m + 1):
                    val[c, j, kk] = pow0[m - kk] * pow1[kk]

        for j in range(s + 1):
            pref[0, j] = 1.0
        prefcnt[0] = 1.0
        for c in range(C):
            digit[c] = 0
            for j in range(s + 1):
                pref[c + 1, j] = pref[c, j] * val[c, j, 0]
            prefcnt[c + 1] = prefcnt[c] * comb[class_m[c], 0]

        while True:
            tot = 0.0
            for j in range(s):
                tot += pref[C, j]
            dev = tot - pref[C, s] * minv
            if dev < 0.0:
                dev = -dev
            acc += prefcnt[C] * dev

            c = C - 1
            while c >= 0 and digit[c] == class_m[c]:
                digit[c] = 0
                c -= 1
            if c < 0:
                break
            digit[c] += 1
            for cc in range(c, C):
                for j in range(s + 1):
                    pref[cc + 1, j] = pref[cc, j] * val[cc, j, digit[cc]]
                prefcnt[cc + 1] = prefcnt[cc] * comb[class_m[cc], digit[cc]]

    return acc
