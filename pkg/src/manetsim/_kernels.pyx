# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled mobility/connectivity kernel; see _pykernels.py for the reference twin."""

import numpy as np


cdef class MobilityCore:
    cdef readonly int n
    cdef double[::1] _ix, _iy, _sx, _sy, _ex, _ey, _xs, _ys
    cdef long long[::1] _off, _dep, _arr, _cursor, _tx_end
    cdef long long _cached_t

    def __init__(self, init_x, init_y, offsets, depart, arrive, sx, sy, ex, ey):
        self.n = len(init_x)
        self._ix = np.asarray(init_x, dtype=np.float64).copy()
        self._iy = np.asarray(init_y, dtype=np.float64).copy()
        self._off = np.asarray(offsets, dtype=np.int64).copy()
        self._dep = np.asarray(depart, dtype=np.int64).reshape(-1).copy()
        self._arr = np.asarray(arrive, dtype=np.int64).reshape(-1).copy()
        self._sx = np.asarray(sx, dtype=np.float64).reshape(-1).copy()
        self._sy = np.asarray(sy, dtype=np.float64).reshape(-1).copy()
        self._ex = np.asarray(ex, dtype=np.float64).reshape(-1).copy()
        self._ey = np.asarray(ey, dtype=np.float64).reshape(-1).copy()
        self._cursor = np.asarray(offsets[:-1], dtype=np.int64) - 1
        self._xs = np.asarray(init_x, dtype=np.float64).copy()
        self._ys = np.asarray(init_y, dtype=np.float64).copy()
        self._cached_t = -1
        self._tx_end = np.zeros(self.n, dtype=np.int64)

    cdef inline void _locate(self, int i, long long t, double* x, double* y) noexcept:
        cdef long long lo = self._off[i]
        cdef long long hi = self._off[i + 1]
        cdef long long k
        cdef double frac, sx, sy
        if hi == lo:
            x[0] = self._ix[i]
            y[0] = self._iy[i]
            return
        k = self._cursor[i]
        if k >= lo and self._dep[k] > t:
            k = lo - 1
        while k + 1 < hi and self._dep[k + 1] <= t:
            k += 1
        self._cursor[i] = k
        if k < lo:
            x[0] = self._ix[i]
            y[0] = self._iy[i]
            return
        if t >= self._arr[k]:
            x[0] = self._ex[k]
            y[0] = self._ey[k]
            return
        frac = <double>(t - self._dep[k]) / <double>(self._arr[k] - self._dep[k])
        sx = self._sx[k]
        sy = self._sy[k]
        x[0] = sx + (self._ex[k] - sx) * frac
        y[0] = sy + (self._ey[k] - sy) * frac

    def position(self, int i, long long t):
        cdef double x, y
        self._locate(i, t, &x, &y)
        return (x, y)

    cdef void _refresh(self, long long t) noexcept:
        cdef int i
        cdef double x, y
        if t == self._cached_t:
            return
        for i in range(self.n):
            self._locate(i, t, &x, &y)
            self._xs[i] = x
            self._ys[i] = y
        self._cached_t = t

    def refresh(self, long long t):
        self._refresh(t)

    def positions(self, long long t):
        self._refresh(t)
        return [(self._xs[i], self._ys[i]) for i in range(self.n)]

    def neighbors(self, int i, long long t, double rng):
        cdef int j
        cdef double x0, y0, dx, dy
        cdef double r2 = rng * rng
        self._refresh(t)
        x0 = self._xs[i]
        y0 = self._ys[i]
        out = []
        for j in range(self.n):
            if j != i:
                dx = self._xs[j] - x0
                dy = self._ys[j] - y0
                if dx * dx + dy * dy <= r2:
                    out.append(j)
        return out

    def in_range(self, int i, int j, long long t, double rng):
        cdef double xi, yi, xj, yj, dx, dy
        self._locate(i, t, &xi, &yi)
        self._locate(j, t, &xj, &yj)
        dx = xj - xi
        dy = yj - yi
        return dx * dx + dy * dy <= rng * rng

    def mark_tx(self, int i, long long until):
        self._tx_end[i] = until

    def busy_until(self, int i, long long t, double rng):
        cdef int j
        cdef bint fresh = False
        cdef double x0 = 0, y0 = 0, dx, dy
        cdef double r2 = rng * rng
        cdef long long busy = 0
        for j in range(self.n):
            if j != i and self._tx_end[j] > t:
                if not fresh:
                    self._refresh(t)
                    x0 = self._xs[i]
                    y0 = self._ys[i]
                    fresh = True
                dx = self._xs[j] - x0
                dy = self._ys[j] - y0
                if dx * dx + dy * dy <= r2 and self._tx_end[j] > busy:
                    busy = self._tx_end[j]
        return busy
