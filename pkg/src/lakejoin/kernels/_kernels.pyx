# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Contracts and tie-breaking match _kernels_py.py exactly;
that module is the executable reference for these loops."""

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc, realloc

import numpy as np

ctypedef unsigned long long u64
ctypedef long long i64


def minhash_signature(u64[::1] hashes, u64[::1] a, u64[::1] b):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = hashes.shape[0]
    out_arr = np.empty(m, dtype=np.uint64)
    cdef u64[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef u64 best, h
    for i in range(m):
        best = <u64>0xFFFFFFFFFFFFFFFF
        for j in range(n):
            h = a[i] * hashes[j] + b[i]
            if h < best:
                best = h
        out[i] = best
    return out_arr


def count_equal(u64[::1] s1, u64[::1] s2):
    cdef Py_ssize_t i, n = s1.shape[0]
    cdef Py_ssize_t c = 0
    for i in range(n):
        if s1[i] == s2[i]:
            c += 1
    return c


def sorted_overlap(i64[::1] a, i64[::1] b, Py_ssize_t ai=0, Py_ssize_t bi=0):
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef Py_ssize_t c = 0
    while ai < na and bi < nb:
        if a[ai] == b[bi]:
            c += 1
            ai += 1
            bi += 1
        elif a[ai] < b[bi]:
            ai += 1
        else:
            bi += 1
    return c


cdef inline double _l2(float[:, ::1] vecs, Py_ssize_t row, float[::1] q) nogil:
    cdef Py_ssize_t k, d = q.shape[0]
    cdef double acc = 0.0, diff
    for k in range(d):
        diff = <double>vecs[row, k] - <double>q[k]
        acc += diff * diff
    return sqrt(acc)


cdef inline bint _lt(double d1, i64 i1, double d2, i64 i2) nogil:
    return d1 < d2 or (d1 == d2 and i1 < i2)


# Binary heaps over parallel (dist, id) arrays. Flavor: min-heap pops the
# smallest (dist, id); max-heap keeps the worst on top so it can be trimmed.

cdef inline void _sift_up_min(double* hd, i64* hi, Py_ssize_t pos) nogil:
    cdef Py_ssize_t parent
    cdef double d
    cdef i64 i
    while pos > 0:
        parent = (pos - 1) >> 1
        if _lt(hd[pos], hi[pos], hd[parent], hi[parent]):
            d = hd[pos]; i = hi[pos]
            hd[pos] = hd[parent]; hi[pos] = hi[parent]
            hd[parent] = d; hi[parent] = i
            pos = parent
        else:
            break


cdef inline void _sift_down_min(double* hd, i64* hi, Py_ssize_t n, Py_ssize_t pos) nogil:
    cdef Py_ssize_t child
    cdef double d
    cdef i64 i
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n and _lt(hd[child + 1], hi[child + 1], hd[child], hi[child]):
            child += 1
        if _lt(hd[child], hi[child], hd[pos], hi[pos]):
            d = hd[pos]; i = hi[pos]
            hd[pos] = hd[child]; hi[pos] = hi[child]
            hd[child] = d; hi[child] = i
            pos = child
        else:
            break


cdef inline void _sift_up_max(double* hd, i64* hi, Py_ssize_t pos) nogil:
    cdef Py_ssize_t parent
    cdef double d
    cdef i64 i
    while pos > 0:
        parent = (pos - 1) >> 1
        if _lt(hd[parent], hi[parent], hd[pos], hi[pos]):
            d = hd[pos]; i = hi[pos]
            hd[pos] = hd[parent]; hi[pos] = hi[parent]
            hd[parent] = d; hi[parent] = i
            pos = parent
        else:
            break


cdef inline void _sift_down_max(double* hd, i64* hi, Py_ssize_t n, Py_ssize_t pos) nogil:
    cdef Py_ssize_t child
    cdef double d
    cdef i64 i
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n and _lt(hd[child], hi[child], hd[child + 1], hi[child + 1]):
            child += 1
        if _lt(hd[pos], hi[pos], hd[child], hi[child]):
            d = hd[pos]; i = hi[pos]
            hd[pos] = hd[child]; hi[pos] = hi[child]
            hd[child] = d; hi[child] = i
            pos = child
        else:
            break


def search_layer(
    float[:, ::1] vecs,
    int[:, ::1] adj,
    int[:] deg,
    i64[:] entries,
    float[::1] q,
    int ef,
    int[:] visited,
    int stamp,
):
    """Beam search over one graph layer; see _kernels_py.search_layer."""
    cdef Py_ssize_t ne = entries.shape[0]
    cdef Py_ssize_t cand_cap = 256 if 4 * ef < 256 else 4 * ef
    if cand_cap < ne:
        cand_cap = ne
    cdef double* cd = <double*>malloc(cand_cap * sizeof(double))
    cdef i64* ci = <i64*>malloc(cand_cap * sizeof(i64))
    cdef double* rd = <double*>malloc((ef + 1) * sizeof(double))
    cdef i64* ri = <i64*>malloc((ef + 1) * sizeof(i64))
    if cd == NULL or ci == NULL or rd == NULL or ri == NULL:
        free(cd); free(ci); free(rd); free(ri)
        raise MemoryError()

    cdef Py_ssize_t nc = 0, nr = 0
    cdef Py_ssize_t t, k
    cdef i64 e, c, nb
    cdef int dg
    cdef double dist, dc
    cdef double* tmp_d
    cdef i64* tmp_i

    try:
        for t in range(ne):
            e = entries[t]
            visited[e] = stamp
            dist = _l2(vecs, e, q)
            cd[nc] = dist; ci[nc] = e; nc += 1
            _sift_up_min(cd, ci, nc - 1)
            rd[nr] = dist; ri[nr] = e; nr += 1
            _sift_up_max(rd, ri, nr - 1)
            if nr > ef:
                nr -= 1
                rd[0] = rd[nr]; ri[0] = ri[nr]
                _sift_down_max(rd, ri, nr, 0)

        while nc > 0:
            dc = cd[0]; c = ci[0]
            nc -= 1
            cd[0] = cd[nc]; ci[0] = ci[nc]
            _sift_down_min(cd, ci, nc, 0)
            if nr >= ef and _lt(rd[0], ri[0], dc, c):
                break
            dg = deg[c]
            for t in range(dg):
                nb = adj[c, t]
                if visited[nb] == stamp:
                    continue
                visited[nb] = stamp
                dist = _l2(vecs, nb, q)
                if nr < ef or _lt(dist, nb, rd[0], ri[0]):
                    if nc == cand_cap:
                        cand_cap *= 2
                        tmp_d = <double*>realloc(cd, cand_cap * sizeof(double))
                        tmp_i = <i64*>realloc(ci, cand_cap * sizeof(i64))
                        if tmp_d == NULL or tmp_i == NULL:
                            if tmp_d != NULL:
                                cd = tmp_d
                            if tmp_i != NULL:
                                ci = tmp_i
                            raise MemoryError()
                        cd = tmp_d; ci = tmp_i
                    cd[nc] = dist; ci[nc] = nb; nc += 1
                    _sift_up_min(cd, ci, nc - 1)
                    rd[nr] = dist; ri[nr] = nb; nr += 1
                    _sift_up_max(rd, ri, nr - 1)
                    if nr > ef:
                        nr -= 1
                        rd[0] = rd[nr]; ri[0] = ri[nr]
                        _sift_down_max(rd, ri, nr, 0)

        ids_arr = np.empty(nr, dtype=np.int64)
        dists_arr = np.empty(nr, dtype=np.float64)
        cdef_fill(ids_arr, dists_arr, rd, ri, nr)
        return ids_arr, dists_arr
    finally:
        free(cd); free(ci); free(rd); free(ri)


cdef void cdef_fill(object ids_arr, object dists_arr, double* rd, i64* ri, Py_ssize_t nr):
    # Pop the max-heap worst-first and fill backwards: output ends up ascending.
    cdef i64[::1] ids = ids_arr
    cdef double[::1] dists = dists_arr
    cdef Py_ssize_t pos
    for pos in range(nr - 1, -1, -1):
        ids[pos] = ri[0]
        dists[pos] = rd[0]
        nr -= 1
        rd[0] = rd[nr]; ri[0] = ri[nr]
        _sift_down_max(rd, ri, nr, 0)


def select_neighbors(
    float[:, ::1] vecs,
    i64[:] cand_ids,
    double[:] cand_dists,
    int m,
):
    """Diversity-aware neighbor pick; see _kernels_py.select_neighbors."""
    cdef Py_ssize_t n = cand_ids.shape[0]
    if n <= m:
        return np.asarray(cand_ids, dtype=np.int64).copy()

    sel_arr = np.empty(m, dtype=np.int64)
    cdef i64[::1] sel = sel_arr
    disc_arr = np.empty(n, dtype=np.int64)
    cdef i64[::1] disc = disc_arr
    cdef Py_ssize_t nsel = 0, ndisc = 0
    cdef Py_ssize_t i, j, k, d = vecs.shape[1]
    cdef i64 e
    cdef double d_sel, acc, diff

    for i in range(n):
        if nsel == m:
            break
        e = cand_ids[i]
        if nsel == 0:
            sel[nsel] = e
            nsel += 1
            continue
        d_sel = -1.0
        for j in range(nsel):
            acc = 0.0
            for k in range(d):
                diff = <double>vecs[e, k] - <double>vecs[sel[j], k]
                acc += diff * diff
            acc = sqrt(acc)
            if d_sel < 0.0 or acc < d_sel:
                d_sel = acc
        if cand_dists[i] < d_sel:
            sel[nsel] = e
            nsel += 1
        else:
            disc[ndisc] = e
            ndisc += 1

    for i in range(ndisc):
        if nsel == m:
            break
        sel[nsel] = disc[i]
        nsel += 1
    return sel_arr[:nsel].copy()
