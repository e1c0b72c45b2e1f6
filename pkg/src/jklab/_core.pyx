# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-jump loops: path endpoints, recorded paths, exit times and
compound-Poisson subordinator increments.

Uniforms come from numpy bit generators through their C capsule, so the
pure-Python twin in _fallback.py consumes exactly the same numbers.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, pow, INFINITY
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from numpy.random cimport bitgen_t

cnp.import_array()

cdef const char* CAPSULE_NAME = "BitGenerator"


cdef bitgen_t* _bitgen(object bg) except NULL:
    capsule = bg.capsule
    if not PyCapsule_IsValid(capsule, CAPSULE_NAME):
        raise ValueError("invalid bit generator")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, CAPSULE_NAME)


cdef inline double _u(bitgen_t* g) noexcept nogil:
    return g.next_double(g.state)


cdef inline Py_ssize_t _pick(const double[:, ::1] cum, Py_ssize_t x, double u) noexcept nogil:
    # first column j with cum[x, j] > u * total
    cdef Py_ssize_t n = cum.shape[1]
    cdef double target = u * cum[x, n - 1]
    cdef Py_ssize_t lo = 0, hi = n - 1, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[x, mid] > target:
            hi = mid
        else:
            lo = mid + 1
    return lo


cdef inline Py_ssize_t _walk(const double[:, ::1] cum, const double[::1] rates, Py_ssize_t x,
                             double t_end, bitgen_t* g) noexcept nogil:
    cdef double t = 0.0
    while rates[x] > 0.0:
        t += -log(1.0 - _u(g)) / rates[x]
        if t > t_end:
            break
        x = _pick(cum, x, _u(g))
    return x


def path_endpoints(const double[:, ::1] cum, const double[::1] rates, const cnp.int64_t[::1] starts,
                   double t_end, list bitgens):
    cdef Py_ssize_t i, m = starts.shape[0]
    cdef cnp.int64_t[::1] out = np.empty(m, dtype=np.int64)
    cdef bitgen_t* g
    for i in range(m):
        g = _bitgen(bitgens[i])
        with nogil:
            out[i] = _walk(cum, rates, starts[i], t_end, g)
    return np.asarray(out)


def record_path(const double[:, ::1] cum, const double[::1] rates, Py_ssize_t start,
                double t_end, object bitgen):
    cdef bitgen_t* g = _bitgen(bitgen)
    cdef double t = 0.0
    cdef Py_ssize_t x = start
    times = [0.0]
    states = [start]
    while rates[x] > 0.0:
        t += -log(1.0 - _u(g)) / rates[x]
        if t > t_end:
            break
        x = _pick(cum, x, _u(g))
        times.append(t)
        states.append(x)
    return np.array(times), np.array(states, dtype=np.int64)


def exit_times(const double[:, ::1] cum, const double[::1] rates, const cnp.uint8_t[::1] inside,
               const cnp.int64_t[::1] starts, list bitgens, double t_cap):
    cdef Py_ssize_t i, x, m = starts.shape[0]
    cdef double t
    cdef double[::1] out = np.empty(m)
    cdef bitgen_t* g
    for i in range(m):
        g = _bitgen(bitgens[i])
        with nogil:
            x = starts[i]
            t = 0.0
            while inside[x]:
                if rates[x] <= 0.0:
                    t = INFINITY
                    break
                t += -log(1.0 - _u(g)) / rates[x]
                if t > t_cap:
                    t = INFINITY
                    break
                x = _pick(cum, x, _u(g))
            out[i] = t
    return np.asarray(out)


def subordinator_increments(double gamma1, double gamma2, double eps, double drift, double rate,
                            double p_small, double dt, Py_ssize_t n, object bitgen):
    cdef bitgen_t* g = _bitgen(bitgen)
    cdef double[::1] out = np.empty(n)
    cdef double lo_pow = pow(eps, -gamma1)
    cdef double s, t, u
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            s = drift * dt
            t = 0.0
            while True:
                t += -log(1.0 - _u(g)) / rate
                if t > dt:
                    break
                u = _u(g)
                if u < p_small:
                    s += pow(lo_pow - _u(g) * (lo_pow - 1.0), -1.0 / gamma1)
                else:
                    s += pow(1.0 - _u(g), -1.0 / gamma2)
            out[i] = s
    return np.asarray(out)
