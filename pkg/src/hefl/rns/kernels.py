"""Numba kernels for word-sized modular arithmetic on (primes x N) residue arrays.

All residues are int64 in [0, q) with q < 2**51. Products are reduced with a
floating-point quotient estimate followed by exact integer correction, so no
128-bit intermediate is needed.
"""

import numpy as np
from numba import njit

MAX_MODULUS_BITS = 51


@njit(inline="always", cache=True)
def _mulmod(a, b, q, qinv):
    quot = np.int64(np.float64(a) * np.float64(b) * qinv)
    r = a * b - quot * q
    while r < 0:
        r += q
    while r >= q:
        r -= q
    return r


@njit(cache=True, nogil=True)
def mulmod_rows(a, b, q):
    """Element-wise ``a * b mod q[row]`` for two (k, N) arrays."""
    k, n = a.shape
    out = np.empty_like(a)
    for r in range(k):
        qq = q[r]
        qinv = 1.0 / np.float64(qq)
        for c in range(n):
            out[r, c] = _mulmod(a[r, c], b[r, c], qq, qinv)
    return out


@njit(cache=True, nogil=True)
def mulmod_scalar_rows(a, s, q):
    """Multiply row ``r`` of ``a`` by the reduced scalar ``s[r]``."""
    k, n = a.shape
    out = np.empty_like(a)
    for r in range(k):
        qq = q[r]
        qinv = 1.0 / np.float64(qq)
        sr = s[r]
        for c in range(n):
            out[r, c] = _mulmod(a[r, c], sr, qq, qinv)
    return out


@njit(cache=True, nogil=True)
def ntt_rows(a, q, psi_rev):
    """In-place negacyclic forward NTT (Cooley-Tukey, bit-reversed output)."""
    k, n = a.shape
    for r in range(k):
        qq = q[r]
        qinv = 1.0 / np.float64(qq)
        x = a[r]
        w = psi_rev[r]
        t = n
        m = 1
        while m < n:
            t >>= 1
            for i in range(m):
                s = w[m + i]
                j1 = 2 * i * t
                for j in range(j1, j1 + t):
                    u = x[j]
                    v = _mulmod(x[j + t], s, qq, qinv)
                    y = u + v
                    if y >= qq:
                        y -= qq
                    x[j] = y
                    y = u - v
                    if y < 0:
                        y += qq
                    x[j + t] = y
            m <<= 1
    return a


@njit(cache=True, nogil=True)
def intt_rows(a, q, psi_inv_rev, n_inv):
    """In-place inverse of :func:`ntt_rows` (Gentleman-Sande, natural output)."""
    k, n = a.shape
    for r in range(k):
        qq = q[r]
        qinv = 1.0 / np.float64(qq)
        x = a[r]
        w = psi_inv_rev[r]
        t = 1
        m = n
        while m > 1:
            h = m >> 1
            j1 = 0
            for i in range(h):
                s = w[h + i]
                for j in range(j1, j1 + t):
                    u = x[j]
                    v = x[j + t]
                    y = u + v
                    if y >= qq:
                        y -= qq
                    x[j] = y
                    y = u - v
                    if y < 0:
                        y += qq
                    x[j + t] = _mulmod(y, s, qq, qinv)
                j1 += 2 * t
            t <<= 1
            m = h
        ninv = n_inv[r]
        for j in range(n):
            x[j] = _mulmod(x[j], ninv, qq, qinv)
    return a


@njit(cache=True, nogil=True)
def convert_basis(x, src, src_hat_inv, dst, src_hat_mod_dst, src_prod_mod_dst):
    """Exact basis extension of centered residues.

    ``x`` holds residues over the source primes; the result holds the residues
    of the same centered integer (in (-Q/2, Q/2]) over the destination primes.
    The overflow count is recovered with a floating-point sum, which is exact
    unless the value sits within ~2**-40 * Q of +-Q/2.
    """
    kf, n = x.shape
    kt = dst.shape[0]
    out = np.empty((kt, n), dtype=np.int64)
    y = np.empty(kf, dtype=np.int64)
    finv = np.empty(kf, dtype=np.float64)
    tinv = np.empty(kt, dtype=np.float64)
    for i in range(kf):
        finv[i] = 1.0 / np.float64(src[i])
    for j in range(kt):
        tinv[j] = 1.0 / np.float64(dst[j])
    for c in range(n):
        frac = 0.0
        for i in range(kf):
            yi = _mulmod(x[i, c], src_hat_inv[i], src[i], finv[i])
            y[i] = yi
            frac += np.float64(yi) * finv[i]
        v = np.int64(np.floor(frac + 0.5))
        for j in range(kt):
            t = dst[j]
            acc = np.int64(0)
            for i in range(kf):
                acc += _mulmod(y[i] % t, src_hat_mod_dst[i, j], t, tinv[j])
                if acc >= t:
                    acc -= t
            acc -= _mulmod(v % t, src_prod_mod_dst[j], t, tinv[j])
            if acc < 0:
                acc += t
            out[j, c] = acc
    return out
