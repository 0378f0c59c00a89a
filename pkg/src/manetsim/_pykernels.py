"""Pure-Python mobility/connectivity kernel.

Mirrors ``_kernels.pyx`` operation for operation; both must give
bit-identical floats so that a run's trace does not depend on which
backend was imported.
"""


class MobilityCore:
    def __init__(self, init_x, init_y, offsets, depart, arrive, sx, sy, ex, ey):
        self.n = len(init_x)
        self._ix = [float(v) for v in init_x]
        self._iy = [float(v) for v in init_y]
        self._off = [int(v) for v in offsets]
        self._dep = [int(v) for v in depart]
        self._arr = [int(v) for v in arrive]
        self._sx = [float(v) for v in sx]
        self._sy = [float(v) for v in sy]
        self._ex = [float(v) for v in ex]
        self._ey = [float(v) for v in ey]
        self._cursor = [o - 1 for o in self._off[:-1]]
        self._xs = list(self._ix)
        self._ys = list(self._iy)
        self._cached_t = -1
        self._tx_end = [0] * self.n

    def _locate(self, i, t):
        lo = self._off[i]
        hi = self._off[i + 1]
        if hi == lo:
            return self._ix[i], self._iy[i]
        dep = self._dep
        k = self._cursor[i]
        if k >= lo and dep[k] > t:
            k = lo - 1
        while k + 1 < hi and dep[k + 1] <= t:
            k += 1
        self._cursor[i] = k
        if k < lo:
            return self._ix[i], self._iy[i]
        a = self._arr[k]
        if t >= a:
            return self._ex[k], self._ey[k]
        frac = (t - dep[k]) / (a - dep[k])
        sx = self._sx[k]
        sy = self._sy[k]
        return sx + (self._ex[k] - sx) * frac, sy + (self._ey[k] - sy) * frac

    def position(self, i, t):
        return self._locate(i, t)

    def refresh(self, t):
        if t == self._cached_t:
            return
        xs = self._xs
        ys = self._ys
        loc = self._locate
        for i in range(self.n):
            xs[i], ys[i] = loc(i, t)
        self._cached_t = t

    def positions(self, t):
        self.refresh(t)
        return list(zip(self._xs, self._ys))

    def neighbors(self, i, t, rng):
        self.refresh(t)
        xs = self._xs
        ys = self._ys
        x0 = xs[i]
        y0 = ys[i]
        r2 = rng * rng
        out = []
        for j in range(self.n):
            if j != i:
                dx = xs[j] - x0
                dy = ys[j] - y0
                if dx * dx + dy * dy <= r2:
                    out.append(j)
        return out

    def in_range(self, i, j, t, rng):
        xi, yi = self._locate(i, t)
        xj, yj = self._locate(j, t)
        dx = xj - xi
        dy = yj - yi
        return dx * dx + dy * dy <= rng * rng

    def mark_tx(self, i, until):
        self._tx_end[i] = until

    def busy_until(self, i, t, rng):
        """Latest end of a transmission by another node within ``rng`` of ``i`` still on air at ``t``; 0 if idle."""
        tx = self._tx_end
        busy = 0
        xs = None
        for j in range(self.n):
            if j != i and tx[j] > t:
                if xs is None:
                    self.refresh(t)
                    xs = self._xs
                    ys = self._ys
                    x0 = xs[i]
                    y0 = ys[i]
                    r2 = rng * rng
                dx = xs[j] - x0
                dy = ys[j] - y0
                if dx * dx + dy * dy <= r2 and tx[j] > busy:
                    busy = tx[j]
        return busy
