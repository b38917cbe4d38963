# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the rejection-scan and Pareto kernels."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, sqrt
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    REGION_NONE = 0
    REGION_COLUMN_BALL = 1
    REGION_ROW_ELLIPSOID = 2


cdef inline bint _dominated(const double* v, const double* u, Py_ssize_t d) nogil:
    # v strictly dominated by u
    cdef Py_ssize_t c
    cdef bint strict = False
    for c in range(d):
        if v[c] > u[c]:
            return False
        if v[c] < u[c]:
            strict = True
    return strict


cdef bint _in_alt_ptr(const double* means, Py_ssize_t d, const Py_ssize_t* members, Py_ssize_t p,
                      const Py_ssize_t* others, Py_ssize_t q) nogil:
    cdef Py_ssize_t a, b
    cdef bint covered
    for a in range(p):
        for b in range(p):
            if a != b and _dominated(means + members[a] * d, means + members[b] * d, d):
                return True
    for a in range(q):
        covered = False
        for b in range(p):
            if _dominated(means + others[a] * d, means + members[b] * d, d):
                covered = True
                break
        if not covered:
            return True
    return False


cdef Py_ssize_t _split_mask(const unsigned char[::1] mask, Py_ssize_t[::1] members,
                            Py_ssize_t[::1] others):
    """Fill member and non-member indices; returns the member count."""
    cdef Py_ssize_t i, p = 0, q = 0
    for i in range(mask.shape[0]):
        if mask[i]:
            members[p] = i
            p += 1
        else:
            others[q] = i
            q += 1
    return p


def in_alt(means, in_set):
    cdef const double[:, ::1] mv = np.ascontiguousarray(means, dtype=np.float64)
    cdef const unsigned char[::1] mask = np.ascontiguousarray(in_set, dtype=np.uint8)
    cdef Py_ssize_t nz = mv.shape[0], d = mv.shape[1]
    cdef Py_ssize_t[::1] members = np.empty(mask.shape[0] + 1, dtype=np.intp)
    cdef Py_ssize_t[::1] others = np.empty(mask.shape[0] + 1, dtype=np.intp)
    cdef Py_ssize_t p = _split_mask(mask, members, others), q = mask.shape[0] - p
    cdef const Py_ssize_t* mp = &members[0] if p > 0 else NULL
    cdef const Py_ssize_t* op = &others[0] if q > 0 else NULL
    if nz == 0:
        return False
    return bool(_in_alt_ptr(&mv[0, 0], d, mp, p, op, q))


def pareto_mask(means):
    cdef const double[:, ::1] mv = np.ascontiguousarray(means, dtype=np.float64)
    cdef Py_ssize_t n = mv.shape[0], d = mv.shape[1]
    out = np.ones(n, dtype=bool)
    cdef cnp.npy_bool[::1] keep = out
    cdef Py_ssize_t i, j, k, a, b
    cdef double best_y, top, x, y
    cdef Py_ssize_t[::1] order
    if d == 2 and n > 0:
        order = np.lexsort((-np.asarray(mv[:, 1]), -np.asarray(mv[:, 0]))).astype(np.intp)
        best_y = -np.inf
        i = 0
        while i < n:
            a = order[i]
            x = mv[a, 0]
            top = mv[a, 1]
            j = i
            while j < n and mv[order[j], 0] == x:
                b = order[j]
                y = mv[b, 1]
                if best_y >= y or top > y:
                    keep[b] = False
                j += 1
            if top > best_y:
                best_y = top
            i = j
        return out
    for i in range(n):
        for k in range(n):
            if k != i and _dominated(&mv[i, 0], &mv[k, 0], d):
                keep[i] = False
                break
    return out


cdef bint _region_ok(const double* lam, Py_ssize_t h, Py_ssize_t d, int region, double param,
                     const double* sig_inv) nogil:
    cdef Py_ssize_t i, c, e
    cdef double acc, lim = param * param
    if region == REGION_NONE:
        return True
    if region == REGION_COLUMN_BALL:
        for c in range(d):
            acc = 0.0
            for i in range(h):
                acc += lam[i * d + c] * lam[i * d + c]
            if acc > lim:
                return False
        return True
    for i in range(h):
        acc = 0.0
        for c in range(d):
            for e in range(d):
                acc += lam[i * d + c] * sig_inv[c * d + e] * lam[i * d + e]
        if acc >= lim:
            return False
    return True


cdef bint _accept(const double* v, const double* theta_hat, double scale, Py_ssize_t h, Py_ssize_t d,
                  const double* Z, Py_ssize_t nz, bint identity_z, int region, double param,
                  const double* sig_inv, double* lam, double* means,
                  const Py_ssize_t* members, Py_ssize_t p, const Py_ssize_t* others, Py_ssize_t q) nogil:
    cdef Py_ssize_t i, j, c
    cdef double acc
    for i in range(h * d):
        lam[i] = theta_hat[i] + scale * v[i]
    if not _region_ok(lam, h, d, region, param, sig_inv):
        return False
    if identity_z:
        return _in_alt_ptr(lam, d, members, p, others, q)
    for i in range(nz):
        for c in range(d):
            acc = 0.0
            for j in range(h):
                acc += Z[i * h + j] * lam[j * d + c]
            means[i * d + c] = acc
    return _in_alt_ptr(means, d, members, p, others, q)


cdef class BlockScanner:
    """Holds the per-round arrays so each block call only acquires the draws."""
    cdef const double[:, ::1] th
    cdef const double[:, ::1] lvm
    cdef const double[:, ::1] lsm
    cdef const double[:, ::1] zm
    cdef const double[:, ::1] sim
    cdef Py_ssize_t[::1] members
    cdef Py_ssize_t[::1] others
    cdef Py_ssize_t p, q, h, d, nz
    cdef bint diag_v, identity_z

    def __init__(self, theta_hat, lv, bint diag_v, lsig, Z, bint identity_z, in_set, sig_inv):
        self.th = np.ascontiguousarray(theta_hat, dtype=np.float64)
        self.lvm = np.ascontiguousarray(lv, dtype=np.float64)
        self.lsm = np.ascontiguousarray(lsig, dtype=np.float64)
        self.zm = np.ascontiguousarray(Z, dtype=np.float64)
        self.sim = np.ascontiguousarray(sig_inv, dtype=np.float64)
        cdef const unsigned char[::1] mask = np.ascontiguousarray(in_set, dtype=np.uint8)
        self.members = np.empty(mask.shape[0] + 1, dtype=np.intp)
        self.others = np.empty(mask.shape[0] + 1, dtype=np.intp)
        self.p = _split_mask(mask, self.members, self.others)
        self.q = mask.shape[0] - self.p
        self.diag_v = diag_v
        self.identity_z = identity_z
        self.h = self.th.shape[0]
        self.d = self.th.shape[1]
        self.nz = self.zm.shape[0] if not identity_z else self.h

    cdef int _scan(self, const double[:, :, ::1] g, double stop_scale, Py_ssize_t stop_limit,
                   int stop_region, double stop_param, double min_scale, Py_ssize_t min_limit,
                   int min_region, double min_param, Py_ssize_t* stop_out, Py_ssize_t* min_out) except -1:
        cdef const Py_ssize_t* mp = &self.members[0] if self.p > 0 else NULL
        cdef const Py_ssize_t* op = &self.others[0] if self.q > 0 else NULL
        cdef Py_ssize_t n = g.shape[0], h = self.h, d = self.d, nz = self.nz
        cdef Py_ssize_t p = self.p, q = self.q
        cdef bint diag_v = self.diag_v, identity_z = self.identity_z
        cdef const double[:, ::1] lvm = self.lvm
        cdef const double[:, ::1] lsm = self.lsm
        cdef const double* th = &self.th[0, 0]
        cdef const double* zp = &self.zm[0, 0]
        cdef const double* sp = &self.sim[0, 0]
        cdef Py_ssize_t m, i, j, c, k
        cdef Py_ssize_t stop_hit = -1, min_hit = -1
        cdef bint need_stop, need_min
        cdef double acc
        stop_out[0] = -1
        min_out[0] = -1
        if g.shape[1] != h or g.shape[2] != d:
            raise ValueError("draw block has the wrong shape")
        if stop_limit > n:
            stop_limit = n
        if min_limit > n:
            min_limit = n
        cdef Py_ssize_t last = stop_limit if stop_limit > min_limit else min_limit
        if last <= 0:
            return 0
        cdef double* tmp = <double*> malloc(h * d * sizeof(double))
        cdef double* v = <double*> malloc(h * d * sizeof(double))
        cdef double* lam = <double*> malloc(h * d * sizeof(double))
        cdef double* means = <double*> malloc(nz * d * sizeof(double))
        try:
            with nogil:
                for m in range(last):
                    need_stop = stop_hit < 0 and m < stop_limit
                    need_min = min_hit < 0 and m < min_limit
                    if not need_stop and not need_min:
                        break
                    # tmp = G[m] @ lsig.T, lsig lower triangular
                    for i in range(h):
                        for c in range(d):
                            acc = 0.0
                            for k in range(c + 1):
                                acc += g[m, i, k] * lsm[c, k]
                            tmp[i * d + c] = acc
                    if diag_v:
                        for i in range(h):
                            for c in range(d):
                                v[i * d + c] = lvm[i, i] * tmp[i * d + c]
                    else:
                        for i in range(h):
                            for c in range(d):
                                acc = 0.0
                                for j in range(i + 1):
                                    acc += lvm[i, j] * tmp[j * d + c]
                                v[i * d + c] = acc
                    if need_stop and _accept(v, th, stop_scale, h, d, zp, nz, identity_z,
                                             stop_region, stop_param, sp, lam, means, mp, p, op, q):
                        stop_hit = m
                    if need_min and _accept(v, th, min_scale, h, d, zp, nz, identity_z,
                                            min_region, min_param, sp, lam, means, mp, p, op, q):
                        min_hit = m
        finally:
            free(tmp)
            free(v)
            free(lam)
            free(means)
        stop_out[0] = stop_hit
        min_out[0] = min_hit
        return 0

    def scan(self, G, double stop_scale, Py_ssize_t stop_limit, int stop_region, double stop_param,
             double min_scale, Py_ssize_t min_limit, int min_region, double min_param):
        cdef Py_ssize_t s, m
        self._scan(np.ascontiguousarray(G, dtype=np.float64), stop_scale, stop_limit, stop_region,
                   stop_param, min_scale, min_limit, min_region, min_param, &s, &m)
        return s, m

    def walk(self, stream, Py_ssize_t stop_budget, double stop_scale, int stop_region, double stop_param,
             Py_ssize_t min_cap, double min_scale, int min_region, double min_param):
        """Joint walk over ``stream.block(0), stream.block(1), ...``.

        Returns (stop_hit, stop_used, min_hit, min_used, min_block, min_row); hits
        are 1-based positions or 0.
        """
        cdef Py_ssize_t stop_hit = 0, min_hit = 0, stop_used = 0, min_used = 0
        cdef Py_ssize_t index = 0, n, s_lim, m_lim, s, m, min_block = -1, min_row = -1
        cdef const double[:, :, ::1] g
        block = stream.block
        size = stream.size
        while (stop_hit == 0 and stop_used < stop_budget) or (min_hit == 0 and min_used < min_cap):
            n = size(index)
            s_lim = 0
            m_lim = 0
            if stop_hit == 0:
                s_lim = n if stop_budget - stop_used > n else stop_budget - stop_used
                if s_lim < 0:
                    s_lim = 0
            if min_hit == 0:
                m_lim = n if min_cap - min_used > n else min_cap - min_used
                if m_lim < 0:
                    m_lim = 0
            G = block(index, s_lim if s_lim > m_lim else m_lim)
            g = G
            self._scan(g, stop_scale, s_lim, stop_region, stop_param,
                       min_scale, m_lim, min_region, min_param, &s, &m)
            if stop_hit == 0:
                if s >= 0:
                    stop_hit = stop_used + s + 1
                else:
                    stop_used += s_lim
            if min_hit == 0:
                if m >= 0:
                    min_hit = min_used + m + 1
                    min_block = index
                    min_row = m
                else:
                    min_used += m_lim
            index += 1
        return stop_hit, stop_used, min_hit, min_used, min_block, min_row


def halve_bounds(inv_counts, white, in_set, double root_f1):
    """Candidate bounds (U, u) for Estimate-and-Halve; see the numpy twin."""
    cdef const double[::1] inv = np.ascontiguousarray(inv_counts, dtype=float)
    cdef const double[:, ::1] w = np.ascontiguousarray(white, dtype=float)
    cdef const unsigned char[::1] mask = np.ascontiguousarray(in_set, dtype=np.uint8)
    cdef Py_ssize_t n = w.shape[0], d = w.shape[1], i, j, c
    cdef double U = 0.0, inner = -INFINITY, outer = -INFINITY, u = -INFINITY, s, diff, val
    cdef bint any_other = False
    for i in range(n):
        s = 0.0
        for c in range(d):
            s += w[i, c] * w[i, c]
        val = root_f1 * sqrt(inv[i]) + sqrt(s)
        if val > u:
            u = val
        if not mask[i]:
            any_other = True
        for j in range(n):
            if not mask[j] or j == i:
                continue
            s = 0.0
            for c in range(d):
                diff = w[i, c] - w[j, c]
                s += diff * diff
            val = root_f1 * sqrt(inv[i] + inv[j]) + sqrt(s)
            if mask[i]:
                if val > inner:
                    inner = val
            elif val > outer:
                outer = val
    if inner > -INFINITY:
        U = inner
    if any_other and 2.0 * outer > U:
        U = 2.0 * outer
    return U, u


def scan_block(G, theta_hat, lv, bint diag_v, lsig, Z, bint identity_z, in_set,
               double stop_scale, Py_ssize_t stop_limit, int stop_region, double stop_param,
               double min_scale, Py_ssize_t min_limit, int min_region, double min_param, sig_inv):
    return BlockScanner(theta_hat, lv, diag_v, lsig, Z, identity_z, in_set, sig_inv).scan(
        G, stop_scale, stop_limit, stop_region, stop_param, min_scale, min_limit, min_region, min_param)
