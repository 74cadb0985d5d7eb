# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled twin of ``_kernels_py``; same signatures, same results."""

from libc.stdlib cimport malloc, free

ctypedef unsigned long long u64

BACKEND = "cython"


cdef inline int _lowbit_index(u64 x):
    cdef int i = 0
    while not (x & 1):
        x >>= 1
        i += 1
    return i


def first_disjoint(masks):
    cdef Py_ssize_t k = len(masks)
    if k == 0:
        return None
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t d, j
    for d in range(k):
        total += len(masks[d])
    cdef u64 *flat = <u64 *> malloc(total * sizeof(u64))
    cdef Py_ssize_t *start = <Py_ssize_t *> malloc((k + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t *choice = <Py_ssize_t *> malloc(k * sizeof(Py_ssize_t))
    cdef u64 *acc = <u64 *> malloc((k + 1) * sizeof(u64))
    cdef Py_ssize_t pos = 0
    cdef Py_ssize_t depth
    cdef u64 m
    result = None
    try:
        for d in range(k):
            start[d] = pos
            for q in masks[d]:
                flat[pos] = <u64> q
                pos += 1
        start[k] = pos
        for d in range(k):
            if start[d] == start[d + 1]:
                return None
        # iterative DFS in lexicographic order
        depth = 0
        acc[0] = <u64> -1
        choice[0] = 0
        while depth >= 0:
            if choice[depth] >= start[depth + 1] - start[depth]:
                depth -= 1
                if depth >= 0:
                    choice[depth] += 1
                continue
            m = acc[depth] & flat[start[depth] + choice[depth]]
            if m == 0:
                result = tuple([choice[d] for d in range(depth + 1)]) + (0,) * (k - depth - 1)
                return result
            if depth + 1 < k:
                acc[depth + 1] = m
                depth += 1
                choice[depth] = 0
            else:
                choice[depth] += 1
        return None
    finally:
        free(flat)
        free(start)
        free(choice)
        free(acc)


def decision_codes(nil, vals, quorums, fast):
    cdef Py_ssize_t rows = len(quorums)
    cdef Py_ssize_t r, i, nv
    cdef u64 above = 0, present, q, ev, nilr, vm
    cdef int code
    out = [None] * rows
    for r in range(rows - 1, -1, -1):
        row_vals = vals[r]
        nv = len(row_vals)
        present = 0
        for i in range(nv):
            if <u64> row_vals[i]:
                present |= (<u64> 1) << i
        nilr = <u64> nil[r]
        is_fast = fast[r]
        codes = []
        for pq in quorums[r]:
            q = <u64> pq
            code = -1
            for i in range(nv):
                vm = <u64> row_vals[i]
                if q & ~vm == 0:
                    code = 3 + 2 * i
                    break
            if code < 0:
                if q & nilr:
                    code = 1
                else:
                    if is_fast:
                        ev = above
                        for i in range(nv):
                            if (<u64> row_vals[i]) & q:
                                ev |= (<u64> 1) << i
                    else:
                        ev = above | present
                    if ev == 0:
                        code = 0
                    elif ev & (ev - 1):
                        code = 1
                    else:
                        code = 2 + 2 * _lowbit_index(ev)
            codes.append(code)
        out[r] = codes
        above |= present
    return out
