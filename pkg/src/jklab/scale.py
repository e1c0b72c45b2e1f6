"""Scale functions: evaluation, inversion, composition and scaling indices.

A scale function is stored as a piecewise log-log linear map anchored so that
``s(1) == 1``.  Piecewise powers and tabulated samples share this
representation, which makes inversion closed form on every segment.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate


class ScaleError(ValueError):
    """Raised when a scale function cannot be built or evaluated."""


REL_TOL = 1e-10
MAX_BISECT = 200


def dyadic_grid(lo_exp: int = -20, hi_exp: int = 20) -> np.ndarray:
    return np.ldexp(1.0, np.arange(lo_exp, hi_exp + 1))


class ScaleFunction:
    """Strictly increasing scale r -> s(r) with s(0)=0 and s(1)=1.

    Internally: knots in log r, log-values at the knots, and the log-log slopes
    of every segment (including the two unbounded end segments).
    """

    def __init__(self, log_r, log_v, slopes, kind="piecewise_power", window=None):
        self.log_r = np.asarray(log_r, dtype=float)
        self.log_v = np.asarray(log_v, dtype=float)
        self.slopes = np.asarray(slopes, dtype=float)
        self.kind = kind
        if self.log_r.ndim != 1 or len(self.log_r) < 1:
            raise ScaleError("need at least one knot")
        if len(self.slopes) != len(self.log_r) + 1 or len(self.log_v) != len(self.log_r):
            raise ScaleError("inconsistent knot data")
        if np.any(np.diff(self.log_r) <= 0):
            raise ScaleError("knots must be strictly increasing")
        if np.any(self.slopes <= 0) or not np.all(np.isfinite(self.slopes)):
            bad = int(np.argmax(self.slopes <= 0))
            raise ScaleError(f"segment {bad} has non-positive exponent {self.slopes[bad]!r}")
        if abs(float(self(1.0)) - 1.0) > 1e-12:
            raise ScaleError(f"normalization violated: s(1) = {float(self(1.0))!r}")
        if window is None:
            window = (float(self.slopes.min()), float(self.slopes.max()), 1.0, 1.0)
        # (beta1, beta2, c1, c2) of the power sandwich
        self.window = tuple(float(w) for w in window)

    # ---- constructors -------------------------------------------------
    @classmethod
    def power(cls, exponent: float) -> "ScaleFunction":
        return cls.piecewise_power([], [exponent])

    @classmethod
    def piecewise_power(cls, breaks: Sequence[float], exponents: Sequence[float]):
        """s(r) = const_i * r**exponents[i] on the i-th segment, continuous, s(1)=1."""
        breaks = np.asarray(breaks, dtype=float)
        exponents = np.asarray(exponents, dtype=float)
        if len(exponents) != len(breaks) + 1:
            raise ScaleError("need len(exponents) == len(breaks) + 1")
        if np.any(breaks <= 0) or np.any(np.diff(breaks) <= 0):
            raise ScaleError("breaks must be positive and strictly increasing")
        if np.any(exponents <= 0):
            raise ScaleError("exponents must be positive")
        knots = np.log(breaks) if len(breaks) else np.array([0.0])
        slopes = exponents if len(breaks) else np.array([exponents[0], exponents[0]])
        # integrate the slope from log r = 0 to every knot
        lv = np.array([_integrate_slope(knots, slopes, k) for k in knots])
        return cls(knots, lv, slopes, kind="piecewise_power")

    @classmethod
    def from_table(cls, r, v, normalize: bool = True):
        """Tabulated samples, interpolated linearly in log-log coordinates."""
        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        if r.shape != v.shape or r.ndim != 1 or len(r) < 2:
            raise ScaleError("table needs two equal-length 1-d arrays with >= 2 samples")
        if np.any(r <= 0) or np.any(v <= 0):
            raise ScaleError("table samples must be positive")
        if np.any(np.diff(r) <= 0):
            raise ScaleError("table radii must be strictly increasing")
        if np.any(np.diff(v) <= 0):
            i = int(np.argmax(np.diff(v) <= 0))
            raise ScaleError(f"table values not strictly increasing at r={r[i]!r}..{r[i + 1]!r}")
        lr, lv = np.log(r), np.log(v)
        inner = np.diff(lv) / np.diff(lr)
        slopes = np.concatenate([[inner[0]], inner, [inner[-1]]])
        out = cls.__new__(cls)
        out.log_r, out.log_v, out.slopes, out.kind = lr, lv, slopes, "table"
        shift = float(out._log_eval(np.array([0.0]))[0])
        if normalize:
            lv = lv - shift
        elif abs(shift) > 1e-12:
            raise ScaleError("table is not normalized at r=1")
        return cls(lr, lv, slopes, kind="table")

    @classmethod
    def from_function(cls, fn: Callable, r_grid) -> "ScaleFunction":
        r_grid = np.asarray(r_grid, dtype=float)
        return cls.from_table(r_grid, np.array([fn(x) for x in r_grid]))

    @classmethod
    def from_dict(cls, doc: dict) -> "ScaleFunction":
        kind = doc.get("kind")
        extra = set(doc) - {"kind", "breaks", "exponents", "r", "v"}
        if extra:
            raise ScaleError(f"unknown scale keys: {sorted(extra)}")
        if kind == "piecewise_power":
            return cls.piecewise_power(doc.get("breaks", []), doc["exponents"])
        if kind == "table":
            return cls.from_table(doc["r"], doc["v"])
        raise ScaleError(f"unknown scale kind {kind!r}")

    def to_dict(self) -> dict:
        if self.kind == "piecewise_power":
            keep = [i for i in range(len(self.log_r)) if self.slopes[i] != self.slopes[i + 1]]
            breaks = [float(np.exp(self.log_r[i])) for i in keep]
            exps = [float(self.slopes[0])] + [float(self.slopes[i + 1]) for i in keep]
            return {"kind": "piecewise_power", "breaks": breaks, "exponents": exps}
        return {"kind": "table", "r": np.exp(self.log_r).tolist(), "v": np.exp(self.log_v).tolist()}

    # ---- evaluation ---------------------------------------------------
    def _log_eval(self, x):
        k = np.searchsorted(self.log_r, x, side="right") - 1
        kk = np.clip(k, 0, len(self.log_r) - 1)
        seg = k + 1  # slope index; k=-1 means left of every knot
        return self.log_v[kk] + self.slopes[seg] * (x - self.log_r[kk])

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        if np.any(r_arr < 0) or np.any(np.isnan(r_arr)):
            raise ScaleError("scale functions are defined for r >= 0 only")
        out = np.zeros_like(r_arr)
        pos = r_arr > 0
        with np.errstate(over="ignore"):
            out[pos] = np.exp(self._log_eval(np.log(r_arr[pos])))
        if out.ndim == 0:
            return float(out)
        return out

    def inverse(self, t):
        """Closed-form inverse on every power segment, polished by bisection if needed."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr <= 0) or np.any(np.isnan(t_arr)):
            raise ScaleError("inverse needs t > 0")
        lt = np.log(t_arr)
        k = np.searchsorted(self.log_v, lt, side="right") - 1
        kk = np.clip(k, 0, len(self.log_r) - 1)
        lr = self.log_r[kk] + (lt - self.log_v[kk]) / self.slopes[k + 1]
        with np.errstate(over="ignore"):
            out = np.exp(lr)
        flat = np.atleast_1d(out)
        tf = np.atleast_1d(t_arr)
        finite = np.isfinite(tf) & np.isfinite(flat)
        with np.errstate(invalid="ignore"):
            off = np.abs(np.atleast_1d(self(flat)) - tf) > REL_TOL * tf
        for i in np.flatnonzero(finite & off):
            flat[i] = bisect_inverse(self, float(tf[i]))
        return float(flat[0]) if out.ndim == 0 else flat.reshape(out.shape)

    def __repr__(self):
        return f"ScaleFunction({self.to_dict()!r})"


def _integrate_slope(knots, slopes, x):
    """log s(e^x) given s(1)=1: integral of the slope from 0 to x."""
    # every point where slope changes, plus 0 and x
    lo, hi = (0.0, x) if x >= 0 else (x, 0.0)
    pts = np.concatenate([[lo], knots[(knots > lo) & (knots < hi)], [hi]])
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        mid = 0.5 * (a + b)
        seg = np.searchsorted(knots, mid, side="right")
        total += slopes[seg] * (b - a)
    return total if x >= 0 else -total


def bisect_inverse(fn: Callable[[float], float], t: float, rel_tol: float = REL_TOL,
                   max_iter: int = MAX_BISECT) -> float:
    """Invert an increasing function by bisection in log r."""
    lo, hi = -1.0, 1.0
    while float(fn(math.exp(lo))) > t:
        lo *= 2
        if lo < -1400:
            raise ScaleError("bisection bracket underflow")
    while float(fn(math.exp(hi))) < t:
        hi *= 2
        if hi > 1400:
            raise ScaleError("bisection bracket overflow")
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = float(fn(math.exp(mid)))
        if abs(val - t) <= rel_tol * t:
            break
        if val < t:
            lo = mid
        else:
            hi = mid
    return math.exp(mid)


def eval_scale(s: ScaleFunction, r):
    return s(r)


def invert_scale(s: ScaleFunction, t):
    return s.inverse(t)


def lower_scaling_index(s: ScaleFunction, which: str = "small") -> float:
    """Minimum dyadic log-log slope over [2^-20, 1] or [1, 2^20]."""
    if which == "small":
        grid = dyadic_grid(-20, 0)
    elif which == "large":
        grid = dyadic_grid(0, 20)
    else:
        raise ValueError("which must be 'small' or 'large'")
    lv = np.log(s(grid))
    lr = np.log(grid)
    i, j = np.triu_indices(len(grid), k=1)
    # rounding keeps an exact exponent of 1 from flipping branches on float noise
    return round(float(np.min((lv[j] - lv[i]) / (lr[j] - lr[i]))), 9)


def sandwich_holds(s: ScaleFunction, grid=None, slack: float = 1e-9) -> bool:
    """Check the declared power window c1 (R/r)^b1 <= s(R)/s(r) <= c2 (R/r)^b2."""
    b1, b2, c1, c2 = s.window
    grid = dyadic_grid() if grid is None else np.asarray(grid)
    lv, lr = np.log(s(grid)), np.log(grid)
    i, j = np.triu_indices(len(grid), k=1)
    ratio = lv[j] - lv[i]
    span = lr[j] - lr[i]
    return bool(np.all(ratio >= math.log(c1) + b1 * span - slack)
                and np.all(ratio <= math.log(c2) + b2 * span + slack))


def _splice(small: ScaleFunction, large: ScaleFunction, kind: str) -> ScaleFunction:
    """Use `small` on (0,1] and `large` on (1,inf); both equal 1 at r=1."""
    ks = small.log_r < 0
    kl = large.log_r > 0
    log_r = np.concatenate([small.log_r[ks], [0.0], large.log_r[kl]])
    log_v = np.concatenate([small.log_v[ks], [0.0], large.log_v[kl]])
    n_small = int(ks.sum())
    slopes_small = small.slopes[: n_small + 1]
    first_large = int(np.searchsorted(large.log_r, 0.0, side="right"))
    slopes_large = large.slopes[first_large:]
    slopes = np.concatenate([slopes_small, slopes_large])
    return ScaleFunction(log_r, log_v, slopes, kind=kind)


def compose_phi(phi_j: ScaleFunction, phi_c: ScaleFunction,
                beta_small: float, beta_large: float) -> ScaleFunction:
    """Composite scale: phi_j or phi_c on each side of r=1 by the index rule."""
    if phi_c.window[0] <= 1:
        raise ScaleError("phi_c must have lower exponent > 1")
    small = phi_j if beta_small <= 1 else phi_c
    large = phi_j if beta_large <= 1 else phi_c
    kind = "piecewise_power" if small.kind == large.kind == "piecewise_power" else "table"
    try:
        return _splice(small, large, kind)
    except ScaleError as exc:
        raise ScaleError(f"composite scale is not valid: {exc}") from exc


def make_bar_phi_c(phi_c: ScaleFunction, grid=None) -> ScaleFunction:
    """bar_phi_c(r) = phi_c(r)/r, checked to be strictly increasing."""
    grid = dyadic_grid(-30, 30) if grid is None else np.asarray(grid, dtype=float)
    vals = phi_c(grid) / grid
    bad = np.flatnonzero(np.diff(vals) <= 0)
    if len(bad):
        i = int(bad[0])
        raise ScaleError(f"phi_c(r)/r not increasing between r={grid[i]!r} and r={grid[i + 1]!r}")
    if np.any(phi_c.slopes <= 1):
        i = int(np.argmax(phi_c.slopes <= 1))
        raise ScaleError(f"phi_c(r)/r not increasing on segment {i} (slope {phi_c.slopes[i]!r})")
    return ScaleFunction(phi_c.log_r, phi_c.log_v - phi_c.log_r, phi_c.slopes - 1.0, kind=phi_c.kind)


# ---- Phi construction for light-tailed jump scales -------------------------

def _segment_points(s: ScaleFunction, r: float) -> np.ndarray:
    knots = np.exp(s.log_r)
    return np.concatenate([[0.0], knots[knots < r], [r]])


def _moment_integral(phi_j: ScaleFunction, a: float, b: float) -> float:
    """Integral of s/phi_j(s) over [a, b] by adaptive quadrature."""
    if b <= a:
        return 0.0
    if a == 0.0:
        # s/phi_j(s) = s^(1-e) * g(s) with g constant on the first segment
        e = float(phi_j.slopes[0])
        if e >= 2:
            raise ScaleError("integral of s/phi_j(s) diverges at 0 (need exponent < 2 near 0)")
        g = lambda x: x ** e / phi_j(x) if x > 0 else 1.0 / math.exp(phi_j.log_v[0] - e * phi_j.log_r[0])
        val, err = integrate.quad(g, 0.0, b, weight="alg", wvar=(1.0 - e, 0.0),
                                  epsabs=0.0, epsrel=1e-13, limit=200)
    else:
        val, err = integrate.quad(lambda x: x / phi_j(x), a, b, epsabs=0.0, epsrel=1e-13, limit=200)
    if not np.isfinite(val) or err > 1e-9 * abs(val) + 1e-300:
        raise ScaleError(f"quadrature did not converge on [{a}, {b}]: value {val}, error {err}")
    return val


def example_phi(phi_j: ScaleFunction, r):
    """Phi(r) = r^2 / (2 * int_0^r s/phi_j(s) ds), one quadrature per segment."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r_arr)
    for n, x in enumerate(r_arr):
        if x <= 0:
            out[n] = 0.0
            continue
        pts = _segment_points(phi_j, x)
        total = sum(_moment_integral(phi_j, a, b) for a, b in zip(pts[:-1], pts[1:]))
        out[n] = x * x / (2.0 * total)
    return float(out[0]) if np.ndim(r) == 0 else out


def phi_c_from_phi_j(phi_j: ScaleFunction, lo_exp: float = -30, hi_exp: float = 30,
                     per_octave: int = 8) -> ScaleFunction:
    """phi_c equal to r^2 on [0,1] and Phi(r)/Phi(1) on [1, inf), tabulated log-log."""
    # segments whose left end lies below r=1
    n_small = int(np.searchsorted(phi_j.log_r, 0.0, side="left")) + 1
    if phi_j.slopes[:n_small].max() >= 2:
        raise ScaleError("phi_j needs exponents below 2 on [0, 1]")
    grid = np.exp2(np.linspace(0.0, hi_exp, int(hi_exp * per_octave) + 1))
    # cumulative integral over consecutive grid points (plus phi_j knots)
    knots = np.exp(phi_j.log_r)
    pts = np.unique(np.concatenate([[0.0], grid, knots[(knots > 0) & (knots < grid[-1])]]))
    pieces = np.array([_moment_integral(phi_j, a, b) for a, b in zip(pts[:-1], pts[1:])])
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    at_grid = cum[np.searchsorted(pts, grid)]
    big_phi = grid ** 2 / (2.0 * at_grid)
    v_large = big_phi / big_phi[0]
    if np.any(np.diff(v_large) <= 0):
        raise ScaleError("Phi is not strictly increasing on the grid")
    small = np.exp2(np.linspace(lo_exp, 0.0, int(-lo_exp * per_octave) + 1))[:-1]
    r = np.concatenate([small, grid])
    v = np.concatenate([small ** 2, v_large])
    return ScaleFunction.from_table(r, v, normalize=False)


# ---- crossover radius ------------------------------------------------------

@dataclass(frozen=True)
class CrossoverResult:
    radius: Optional[float]
    found: bool
    reason: str = ""
    bracket: tuple = ()


def crossover_radius(phi_j: ScaleFunction, phi_c: ScaleFunction, t: float,
                     c_star: float = 1.0, c_zero: float = 1.0, c_upper: float = 4.0,
                     rel_tol: float = 1e-8, degenerate_tol: float = 1e-6) -> CrossoverResult:
    """Radius where exp(C s)/s meets C' * bar_phi_c^{-1}(t/r)/phi_j^{-1}(t).

    s = r / bar_phi_c^{-1}(t/r).  Returns a "no crossover" result instead of
    raising when the two branches never cross.
    """
    if t < 1:
        raise ScaleError("crossover radius is defined for t >= 1")
    bar = make_bar_phi_c(phi_c)
    rc, rj = phi_c.inverse(t), phi_j.inverse(t)
    if rc <= rj * (1 + degenerate_tol):
        return CrossoverResult(None, False, "phi_c^{-1}(t) <= phi_j^{-1}(t): no crossover")

    def log_f1(r):
        s = r / bar.inverse(t / r)
        return c_star * s - math.log(s)

    def log_f2(r):
        return math.log(c_upper * bar.inverse(t / r) / rj)

    lo = c_zero * rc
    hi = 2.0 * lo
    while log_f1(hi) - log_f2(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            return CrossoverResult(None, False, "no sign change on the bracket")
    if log_f1(lo) - log_f2(lo) >= 0:
        return CrossoverResult(None, False, "no sign change on the bracket", (lo, hi))
    probe = np.geomspace(lo, hi, 200)[1:]
    f1 = np.array([log_f1(x) for x in probe])
    f2 = np.array([log_f2(x) for x in probe])
    if np.any(np.diff(f1) <= 0) or np.any(np.diff(f2) >= 0):
        raise ScaleError("crossover branches are not monotone on the bracket; increase c_zero")
    a, b = lo, hi
    for _ in range(MAX_BISECT):
        m = math.sqrt(a * b)
        if log_f1(m) < log_f2(m):
            a = m
        else:
            b = m
        if b / a - 1 <= rel_tol:
            break
    return CrossoverResult(math.sqrt(a * b), True, "", (lo, hi))


def crossover_log_bounds(phi_j: ScaleFunction, phi_c: ScaleFunction, t: float,
                         c_low: float = 1.0, c_high: float = 1.0):
    """Log-power sandwich for the crossover radius built from phi_c's window."""
    b1, b2 = phi_c.window[0], phi_c.window[1]
    rc, rj = phi_c.inverse(t), phi_j.inverse(t)
    lg = math.log(rc / rj)
    return c_low * rc * lg ** ((b1 - 1) / b2), c_high * rc * lg ** ((b2 - 1) / b1)


# ---- triple ------------------------------------------------------------------

@dataclass
class ScaleTriple:
    phi_j: ScaleFunction
    phi_c: ScaleFunction
    phi: ScaleFunction
    bar_phi_c: ScaleFunction
    beta_star_small: float
    beta_star_large: float
    c_zero: float
    notes: list = field(default_factory=list)


def make_triple(phi_j: ScaleFunction, phi_c: ScaleFunction, near_one_tol: float = 0.02) -> ScaleTriple:
    b_small = lower_scaling_index(phi_j, "small")
    b_large = lower_scaling_index(phi_j, "large")
    notes = []
    for label, b in (("small", b_small), ("large", b_large)):
        if b != 1.0 and abs(b - 1.0) < near_one_tol:
            msg = f"{label}-scale index estimate {b:.4f} is close to 1; branch choice is fragile"
            warnings.warn(msg)
            notes.append(msg)
    phi = compose_phi(phi_j, phi_c, b_small, b_large)
    bar = make_bar_phi_c(phi_c)
    grid = dyadic_grid(-20, 20)
    c_zero = float(np.max(phi(grid) / phi_j(grid)))
    bar_ratio = bar(grid) * grid / phi_c(grid)
    if np.max(np.abs(bar_ratio - 1)) > 1e-9:
        raise ScaleError("bar_phi_c(r) * r drifted from phi_c(r)")
    return ScaleTriple(phi_j, phi_c, phi, bar, b_small, b_large, c_zero, notes)
