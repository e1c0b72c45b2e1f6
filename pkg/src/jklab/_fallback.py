"""Pure-Python versions of the compiled loops, drawing the same uniforms."""
from __future__ import annotations

import math
from bisect import bisect_right

import numpy as np


class _Uniforms:
    """Buffered reader over a bit generator; same order as one-at-a-time draws."""

    def __init__(self, bitgen, block: int = 256):
        self._gen = np.random.Generator(bitgen)
        self._block = block
        self._buf = []
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._gen.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def _pick(row, u):
    # first column with cum > u * total
    return min(bisect_right(row, u * row[-1]), len(row) - 1)


def _rows(cum):
    return [row.tolist() for row in np.asarray(cum)]


def path_endpoints(cum, rates, starts, t_end, bitgens):
    rows, rates = _rows(cum), np.asarray(rates).tolist()
    out = np.empty(len(starts), dtype=np.int64)
    for i, x in enumerate(np.asarray(starts).tolist()):
        u = _Uniforms(bitgens[i], 32)
        t = 0.0
        while rates[x] > 0.0:
            t += -math.log(1.0 - u()) / rates[x]
            if t > t_end:
                break
            x = _pick(rows[x], u())
        out[i] = x
    return out


def record_path(cum, rates, start, t_end, bitgen):
    rows, rates = _rows(cum), np.asarray(rates).tolist()
    u = _Uniforms(bitgen)
    t, x = 0.0, int(start)
    times, states = [0.0], [x]
    while rates[x] > 0.0:
        t += -math.log(1.0 - u()) / rates[x]
        if t > t_end:
            break
        x = _pick(rows[x], u())
        times.append(t)
        states.append(x)
    return np.array(times), np.array(states, dtype=np.int64)


def exit_times(cum, rates, inside, starts, bitgens, t_cap):
    rows, rates = _rows(cum), np.asarray(rates).tolist()
    inside = np.asarray(inside).astype(bool).tolist()
    out = np.empty(len(starts))
    for i, x in enumerate(np.asarray(starts).tolist()):
        u = _Uniforms(bitgens[i], 64)
        t = 0.0
        while inside[x]:
            if rates[x] <= 0.0:
                t = math.inf
                break
            t += -math.log(1.0 - u()) / rates[x]
            if t > t_cap:
                t = math.inf
                break
            x = _pick(rows[x], u())
        out[i] = t
    return out


def subordinator_increments(gamma1, gamma2, eps, drift, rate, p_small, dt, n, bitgen):
    u = _Uniforms(bitgen, 4096)
    lo_pow = eps ** -gamma1
    out = np.empty(n)
    for i in range(n):
        s = drift * dt
        t = 0.0
        while True:
            t += -math.log(1.0 - u()) / rate
            if t > dt:
                break
            if u() < p_small:
                s += (lo_pow - u() * (lo_pow - 1.0)) ** (-1.0 / gamma1)
            else:
                s += (1.0 - u()) ** (-1.0 / gamma2)
        out[i] = s
    return out
