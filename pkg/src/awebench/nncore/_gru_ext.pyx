# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU recurrence kernels; same contract as ``_kernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, copysign
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef inline void _mm(double* a, double* b, double* c, int m, int k, int n,
                     int lda, int ldb, int ldc, double beta) noexcept nogil:
    # row-major c[m,n] = a[m,k] @ b[k,n] + beta * c
    cdef char tr = b'N'
    cdef double one = 1.0
    dgemm(&tr, &tr, &n, &m, &k, &one, b, &ldb, a, &lda, &beta, c, &ldc)


cdef inline void _mm_at(double* a, double* b, double* c, int m, int k, int n,
                        int lda, int ldb, int ldc) noexcept nogil:
    # row-major c[m,n] += a[k,m]^T @ b[k,n]
    cdef char tn = b'N'
    cdef char tt = b'T'
    cdef double one = 1.0
    dgemm(&tn, &tt, &n, &m, &k, &one, b, &ldb, a, &lda, &one, c, &ldc)


cdef inline void _mm_bt(double* a, double* b, double* c, int m, int k, int n,
                        int lda, int ldb, int ldc, double beta) noexcept nogil:
    # row-major c[m,n] = a[m,k] @ b[n,k]^T + beta * c
    cdef char tn = b'N'
    cdef char tt = b'T'
    cdef double one = 1.0
    dgemm(&tt, &tn, &n, &m, &k, &one, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void _sigmoid_rows(double* g, double* acc, double* out, int B, int w,
                        int ldg, int ldacc) noexcept nogil:
    cdef int b, j
    cdef double* gp
    cdef double* ap
    cdef double* op
    for b in range(B):
        gp = g + b * ldg
        ap = acc + b * ldacc
        op = out + b * w
        for j in range(w):
            op[j] = 1.0 / (1.0 + exp(-(gp[j] + ap[j])))


def gru_forward(gx, u, mask, h0):
    cdef cnp.ndarray[double, ndim=3, mode="c"] GX = np.ascontiguousarray(gx, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] M = np.ascontiguousarray(mask, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] H0 = np.ascontiguousarray(h0, dtype=np.float64)
    cdef int T = GX.shape[0]
    cdef int B = GX.shape[1]
    cdef int h = GX.shape[2] // 3
    cdef int h3 = 3 * h
    cdef int bh = B * h
    cdef cnp.ndarray[double, ndim=3, mode="c"] H = np.empty((T, B, h))
    cdef cnp.ndarray[double, ndim=3, mode="c"] Z = np.empty((T, B, h))
    cdef cnp.ndarray[double, ndim=3, mode="c"] R = np.empty((T, B, h))
    cdef cnp.ndarray[double, ndim=3, mode="c"] N = np.empty((T, B, h))
    cdef cnp.ndarray[double, ndim=2, mode="c"] acc = np.empty((B, 2 * h))
    cdef cnp.ndarray[double, ndim=2, mode="c"] rh = np.empty((B, h))
    cdef cnp.ndarray[double, ndim=2, mode="c"] accn = np.empty((B, h))
    cdef double* gx0 = &GX[0, 0, 0]
    cdef double* u0 = &U[0, 0]
    cdef double* m0 = &M[0, 0]
    cdef double* h00 = &H0[0, 0]
    cdef double* H_ = &H[0, 0, 0]
    cdef double* Z_ = &Z[0, 0, 0]
    cdef double* R_ = &R[0, 0, 0]
    cdef double* N_ = &N[0, 0, 0]
    cdef double* acc_ = &acc[0, 0]
    cdef double* rh_ = &rh[0, 0]
    cdef double* accn_ = &accn[0, 0]
    cdef double *hp
    cdef double *g
    cdef double *zt
    cdef double *rt
    cdef double *nt
    cdef double *ht
    cdef double *ap
    cdef double *anp
    cdef double *hpb
    cdef double m, e, hv, a
    cdef int t, b, j
    with nogil:
        for t in range(T):
            hp = h00 if t == 0 else H_ + (t - 1) * bh
            g = gx0 + t * B * h3
            zt = Z_ + t * bh
            rt = R_ + t * bh
            nt = N_ + t * bh
            ht = H_ + t * bh
            _mm(hp, u0, acc_, B, h, 2 * h, h, h3, 2 * h, 0.0)
            _sigmoid_rows(g, acc_, zt, B, h, h3, 2 * h)
            _sigmoid_rows(g + h, acc_ + h, rt, B, h, h3, 2 * h)
            for j in range(bh):
                rh_[j] = rt[j] * hp[j]
            _mm(rh_, u0 + 2 * h, accn_, B, h, h, h, h3, h, 0.0)
            for b in range(B):
                m = m0[t * B + b]
                ap = g + b * h3 + 2 * h
                anp = accn_ + b * h
                for j in range(h):
                    a = ap[j] + anp[j]
                    e = exp(-2.0 * fabs(a))
                    nt[b * h + j] = copysign((1.0 - e) / (1.0 + e), a)
                hpb = hp + b * h
                for j in range(h):
                    hv = hpb[j]
                    ht[b * h + j] = hv + m * zt[b * h + j] * (nt[b * h + j] - hv)
    return H, Z, R, N


def gru_backward(dh, u, mask, h0, hs, zs, rs, ns):
    cdef cnp.ndarray[double, ndim=3, mode="c"] dH = np.ascontiguousarray(dh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] U = np.ascontiguousarray(u, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] M = np.ascontiguousarray(mask, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] H0 = np.ascontiguousarray(h0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] H = np.ascontiguousarray(hs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] Z = np.ascontiguousarray(zs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] R = np.ascontiguousarray(rs, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] N = np.ascontiguousarray(ns, dtype=np.float64)
    cdef int T = H.shape[0]
    cdef int B = H.shape[1]
    cdef int h = H.shape[2]
    cdef int h3 = 3 * h
    cdef int bh = B * h
    cdef cnp.ndarray[double, ndim=3, mode="c"] dGX = np.empty((T, B, h3))
    cdef cnp.ndarray[double, ndim=2, mode="c"] dU = np.zeros((h, h3))
    cdef cnp.ndarray[double, ndim=2, mode="c"] carry = np.zeros((B, h))
    cdef cnp.ndarray[double, ndim=2, mode="c"] dhp = np.empty((B, h))
    cdef cnp.ndarray[double, ndim=2, mode="c"] drh = np.empty((B, h))
    cdef cnp.ndarray[double, ndim=2, mode="c"] rh = np.empty((B, h))
    cdef double* dH_ = &dH[0, 0, 0]
    cdef double* u0 = &U[0, 0]
    cdef double* m0 = &M[0, 0]
    cdef double* h00 = &H0[0, 0]
    cdef double* H_ = &H[0, 0, 0]
    cdef double* Z_ = &Z[0, 0, 0]
    cdef double* R_ = &R[0, 0, 0]
    cdef double* N_ = &N[0, 0, 0]
    cdef double* dGX_ = &dGX[0, 0, 0]
    cdef double* dU_ = &dU[0, 0]
    cdef double* carry_ = &carry[0, 0]
    cdef double* dhp_ = &dhp[0, 0]
    cdef double* drh_ = &drh[0, 0]
    cdef double* rh_ = &rh[0, 0]
    cdef double *hp
    cdef double *dg
    cdef double *dgt
    cdef double *zt
    cdef double *rt
    cdef double *nt
    cdef double *dht
    cdef double z, r, n, m, hv, gv, dhn
    cdef int t, b, j, i
    with nogil:
        for t in range(T - 1, -1, -1):
            hp = h00 if t == 0 else H_ + (t - 1) * bh
            dgt = dGX_ + t * B * h3
            zt = Z_ + t * bh
            rt = R_ + t * bh
            nt = N_ + t * bh
            dht = dH_ + t * bh
            for b in range(B):
                m = m0[t * B + b]
                dg = dgt + b * h3
                for j in range(h):
                    i = b * h + j
                    z = zt[i]
                    n = nt[i]
                    hv = hp[i]
                    gv = dht[i] + carry_[i]
                    dhn = m * gv
                    dhp_[i] = gv - dhn * z
                    dg[j] = dhn * (n - hv) * z * (1.0 - z)
                    dg[2 * h + j] = dhn * z * (1.0 - n * n)
                    rh_[i] = rt[i] * hv
            _mm_bt(dgt + 2 * h, u0 + 2 * h, drh_, B, h, h, h3, h3, h, 0.0)
            for b in range(B):
                dg = dgt + b * h3
                for j in range(h):
                    i = b * h + j
                    r = rt[i]
                    dhp_[i] += drh_[i] * r
                    dg[h + j] = drh_[i] * hp[i] * r * (1.0 - r)
            _mm_at(hp, dgt, dU_, h, B, 2 * h, h, h3, h3)
            _mm_at(rh_, dgt + 2 * h, dU_ + 2 * h, h, B, h, h, h3, h3)
            _mm_bt(dgt, u0, dhp_, B, 2 * h, h, h3, h3, h, 1.0)
            for i in range(bh):
                carry_[i] = dhp_[i]
    return dGX, dU, carry
