"""Analytic heat-kernel bound functions and regime labels.

Volumes enter through a callback ``vol(r)`` giving V(x, r) at the source
point, so the formulas do not care which space they describe.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .scale import ScaleFunction, ScaleTriple, crossover_radius

LOG_FLOOR = -700.0

VolumeFn = Callable[[np.ndarray], np.ndarray]


class Regime(str, Enum):
    NEAR_DIAGONAL = "NearDiagonal"
    SUB_GAUSSIAN_TAIL = "SubGaussianTail"
    JUMP_TAIL = "JumpTail"


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class EnvelopeConstants:
    """Constants of the two-sided comparison.

    lower: lower_scale * f(lower_time * t); upper: upper_scale * f(upper_time * t).
    near_scale / near_radius are the plateau height and width of the lower bound.
    The default height exp(-1) is the value of the sub-Gaussian factor at the
    plateau edge, so the default constants never put the lower bound above the upper.
    """
    lower_scale: float = 1.0
    lower_time: float = 1.0
    upper_scale: float = 1.0
    upper_time: float = 1.0
    near_scale: float = math.exp(-1.0)
    near_radius: float = 1.0
    time_cutoff: float = 1.0

    def __post_init__(self):
        for name, val in self.__dict__.items():
            if not val > 0:
                raise ValueError(f"{name} must be positive")
        if self.lower_time > self.upper_time:
            raise ValueError("need lower_time <= upper_time")


def _vol(vol: VolumeFn, r) -> np.ndarray:
    return np.asarray(vol(np.asarray(r, dtype=float)), dtype=float)


def p_j_envelope(t: float, d, vol: VolumeFn, phi_j: ScaleFunction) -> np.ndarray:
    """min(1/V(phi_j^{-1}(t)), t/(V(d) phi_j(d))); the second term is +inf at d=0."""
    d = np.asarray(d, dtype=float)
    near = 1.0 / _vol(vol, phi_j.inverse(t))
    pos = d > 0
    tail = np.full(d.shape, np.inf)
    if np.any(pos):
        dp = d[pos]
        with np.errstate(over="ignore", divide="ignore"):
            tail[pos] = t / (_vol(vol, dp) * phi_j(dp))
    return np.minimum(near, tail)


def p_c_log_exponent(t: float, d, bar_phi_c: ScaleFunction) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    out = np.zeros(d.shape)
    pos = d > 0
    if np.any(pos):
        dp = d[pos]
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            out[pos] = -dp / bar_phi_c.inverse(t / dp)
    return out


def p_c_envelope(t: float, d, vol: VolumeFn, phi_c: ScaleFunction,
                 bar_phi_c: ScaleFunction) -> np.ndarray:
    """exp(-d / bar_phi_c^{-1}(t/d)) / V(phi_c^{-1}(t)); zero below exp(-700)."""
    expo = p_c_log_exponent(t, d, bar_phi_c)
    out = np.where(expo < LOG_FLOOR, 0.0, np.exp(np.maximum(expo, LOG_FLOOR)))
    return out / _vol(vol, phi_c.inverse(t))


def coarse_upper(t: float, d, vol: VolumeFn, phi: ScaleFunction) -> np.ndarray:
    """min(1/V(phi^{-1}(t)), t/(V(d) phi(d)))."""
    return p_j_envelope(t, d, vol, phi)


def tail_probability_bound(t: float, r, phi: ScaleFunction, const: float = 1.0):
    return np.minimum(1.0, const * t / phi(np.asarray(r, dtype=float)))


def _upper_shape(t, d, vol, triple: ScaleTriple, time_cutoff):
    beta = triple.beta_star_small if t <= time_cutoff else triple.beta_star_large
    pj = p_j_envelope(t, d, vol, triple.phi_j)
    if beta <= 1:
        return pj
    pc = p_c_envelope(t, d, vol, triple.phi_c, triple.bar_phi_c)
    near = 1.0 / _vol(vol, triple.phi_c.inverse(t))
    return np.minimum(near, pc + pj)


def _lower_shape(t, d, vol, triple: ScaleTriple, near_scale, near_radius, time_cutoff):
    d = np.asarray(d, dtype=float)
    small_time = t <= time_cutoff
    beta = triple.beta_star_small if small_time else triple.beta_star_large
    if beta <= 1:
        return p_j_envelope(t, d, vol, triple.phi_j)
    # two-case form: near-diagonal plateau, then the jump term
    scale = triple.phi if small_time else triple.phi_c
    plateau = near_scale / _vol(vol, scale.inverse(t))
    out = np.full(d.shape, plateau)
    far = d > near_radius * scale.inverse(t)
    if np.any(far):
        df = d[far]
        out[far] = t / (_vol(vol, df) * triple.phi_j(df))
    return out


def upper_envelope(t, d, vol, triple, consts: EnvelopeConstants = EnvelopeConstants()):
    return consts.upper_scale * _upper_shape(consts.upper_time * t, d, vol, triple, consts.time_cutoff)


def lower_envelope(t, d, vol, triple, consts: EnvelopeConstants = EnvelopeConstants()):
    tt = consts.lower_time * t
    return consts.lower_scale * _lower_shape(
        tt, d, vol, triple, consts.near_scale, consts.near_radius, consts.time_cutoff)


def classify_regime(t: float, d, vol, triple: ScaleTriple,
                    consts: EnvelopeConstants = EnvelopeConstants(), crossover=None):
    """Label each distance with the dominant term; returns (labels, boundaries)."""
    d = np.asarray(d, dtype=float)
    near_edge = consts.near_radius * float(triple.phi.inverse(t))
    labels = np.full(d.shape, Regime.JUMP_TAIL.value, dtype=object)
    small_time = t <= consts.time_cutoff
    beta = triple.beta_star_small if small_time else triple.beta_star_large
    t_star = None
    if beta > 1:
        if small_time:
            pc = p_c_envelope(t, d, vol, triple.phi_c, triple.bar_phi_c)
            pj = p_j_envelope(t, d, vol, triple.phi_j)
            labels[pc >= pj] = Regime.SUB_GAUSSIAN_TAIL.value
        else:
            if crossover is None:
                crossover = crossover_radius(triple.phi_j, triple.phi_c, max(t, 1.0))
            if crossover.found:
                t_star = crossover.radius
                labels[d < t_star] = Regime.SUB_GAUSSIAN_TAIL.value
    labels[d <= near_edge] = Regime.NEAR_DIAGONAL.value
    return labels, {"near_edge": near_edge, "t_star": t_star}


def hk_envelope(t: float, d, vol: VolumeFn, triple: ScaleTriple,
                consts: EnvelopeConstants = EnvelopeConstants(), crossover=None):
    """Lower bound, upper bound and regime label at every distance in `d`."""
    d = np.asarray(d, dtype=float)
    if t <= 0:
        raise ValueError("t must be positive")
    up = upper_envelope(t, d, vol, triple, consts)
    lo = lower_envelope(t, d, vol, triple, consts)
    bad = lo > up * (1 + 1e-12)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise CalibrationError(f"lower bound {lo[i]:.3e} exceeds upper {up[i]:.3e} at t={t}, d={d[i]}")
    labels, _ = classify_regime(t, d, vol, triple, consts, crossover)
    return lo, up, labels


def envelope_table(times, distances, vol, triple, consts=EnvelopeConstants()):
    """Rows (t, d, lower, upper, regime) over a grid."""
    rows = []
    for t in times:
        lo, up, lab = hk_envelope(float(t), distances, vol, triple, consts)
        for dd, a, b, c in zip(np.asarray(distances, dtype=float), lo, up, lab):
            rows.append((float(t), float(dd), float(a), float(b), str(c)))
    return rows


def envelope_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "d", "lower", "upper", "regime"])
    for t, d, lo, up, lab in rows:
        w.writerow([repr(t), repr(d), repr(lo), repr(up), lab])
    return buf.getvalue()


def power_volume(dim: float, const: float = 1.0) -> VolumeFn:
    """Synthetic V(r) = const * r^dim, floored at const for r < 1."""
    return lambda r: const * np.maximum(np.asarray(r, dtype=float), 1.0) ** dim

