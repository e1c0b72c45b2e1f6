"""Numerical checkers: corridor fits, Faber-Krahn, Poincare, cutoff energy,
jump tails, UJS, parabolic Harnack and exit-time scaling."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import linalg

from . import process as proc
from .process import Generator
from .rng import PURPOSE, generator
from .scale import ScaleFunction
from .space import FiniteMetricMeasureSpace

CORRIDOR_THRESHOLD = 100.0
STABILITY_THRESHOLD = 10.0


def _clean(obj):
    """Plain JSON-ready values (floats rounded through repr for stable output)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v) or math.isinf(v):
            return repr(v)
        return v
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


@dataclass
class CorridorReport:
    c1: float
    c2: float
    c3: float
    c4: float
    worst_ratio: float
    domain: dict
    passed: bool
    threshold: float = CORRIDOR_THRESHOLD


@dataclass
class ConditionVerdict:
    condition: str
    constants: dict
    worst_ratio: float
    domain: dict
    passed: bool
    seed: Optional[int] = None
    samples: list = field(default_factory=list)
    status: str = "ok"
    notes: list = field(default_factory=list)

    def record(self) -> dict:
        return _clean({"condition": self.condition, "constants": self.constants,
                       "worst_ratio": self.worst_ratio, "domain": self.domain,
                       "pass": self.passed, "seed": self.seed})


def stability_ratio(values) -> float:
    v = np.asarray(values, dtype=float)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        return math.inf
    return float(v.max() / v.min())


# ---- corridor ----------------------------------------------------------------

def fit_corridor(samples: Sequence[tuple], env: Callable, dilations=None,
                 threshold: float = CORRIDOR_THRESHOLD, domain: Optional[dict] = None,
                 lower_env: Optional[Callable] = None) -> CorridorReport:
    """Fit c1 g(c2 t) <= p <= c3 f(c4 t) with c2 <= c4 on a dilation grid.

    samples: (t, distances, exact values) triples.  env(t, d) -> f(t, d) is
    the upper shape and lower_env (default: env) the lower shape g.  For a
    dilation pair the corridor width at a point is c3 f(c4 t) / (c1 g(c2 t));
    the worst ratio is the largest width over the domain, minimized over
    pairs.  With a single shape and c2 == c4 it equals c3 / c1.
    """
    if len(samples) < 3:
        raise ValueError("need at least three times")
    if dilations is None:
        dilations = np.geomspace(1 / 16, 16, 41)
    dilations = np.asarray(dilations, dtype=float)
    logs_p = []
    for t, d, p in samples:
        p = np.asarray(p, dtype=float)
        if len(p) < 10:
            raise ValueError("need at least ten distances per time")
        if np.any(p <= 0):
            raise ValueError("exact values must be positive")
        logs_p.append(np.log(p))

    def log_table(fn):
        # log of the shape at every dilation: shape (dilations, points)
        rows = []
        for c in dilations:
            row = []
            for t, d, _ in samples:
                f = np.asarray(fn(c * t, np.asarray(d, dtype=float)), dtype=float)
                if np.any(f <= 0):
                    raise ValueError(f"envelope vanishes where the exact kernel is positive (dilation {c})")
                row.append(np.log(f))
            rows.append(np.concatenate(row))
        return np.array(rows)

    log_up = log_table(env)
    log_lo = log_up if lower_env is None else log_table(lower_env)
    lp = np.concatenate(logs_p)
    log_c1 = (lp[None, :] - log_lo).min(axis=1)
    log_c3 = (lp[None, :] - log_up).max(axis=1)
    best = (math.inf, 0, 0)
    for i in range(len(dilations)):
        for j in range(i, len(dilations)):
            width = log_c3[j] - log_c1[i] + np.max(log_up[j] - log_lo[i])
            if width < best[0]:
                best = (width, i, j)
    width, i, j = best
    worst = float(math.exp(width))
    dom = dict(domain or {})
    dom.setdefault("times", [float(s[0]) for s in samples])
    dom.setdefault("max_distance", float(max(np.max(s[1]) for s in samples)))
    return CorridorReport(float(math.exp(log_c1[i])), float(dilations[i]), float(math.exp(log_c3[j])),
                          float(dilations[j]), worst, dom, bool(worst <= threshold), threshold)


def heat_kernel_corridor(gen: Generator, x0: int, times, max_distance: float, env_factory,
                         threshold: float = CORRIDOR_THRESHOLD, dilations=None,
                         precomputed=None) -> CorridorReport:
    """Exact kernels from x0 against env_factory(vol) over d <= max_distance.

    env_factory(vol) returns either one shape (t, d) -> f or a pair
    (lower shape, upper shape).
    """
    space = gen.space
    space.check_guard(max_distance, "max distance")
    kernels = precomputed or proc.exact_heat_kernel_series(gen, times, rows=[x0])
    d_row = space.dist[x0]
    mask = d_row <= max_distance + 1e-9
    shapes = env_factory(space.volume_fn(x0))
    lower, upper = shapes if isinstance(shapes, tuple) else (None, shapes)
    samples = [(hk.t, d_row[mask], hk.density[0, mask]) for hk in kernels]
    return fit_corridor(samples, upper, dilations, threshold,
                        {"source": int(x0), "times": [float(t) for t in times],
                         "max_distance": float(max_distance)}, lower)


def envelope_shapes(triple, consts=None):
    """env_factory for heat_kernel_corridor from the two-sided envelope."""
    from .envelope import EnvelopeConstants, lower_envelope, upper_envelope
    consts = EnvelopeConstants() if consts is None else consts

    def factory(vol):
        return (lambda t, d: lower_envelope(t, d, vol, triple, consts),
                lambda t, d: upper_envelope(t, d, vol, triple, consts))
    return factory


# ---- scalar stability checks ----------------------------------------------------

def _verdict(condition, values, radii, threshold, constants=None, domain=None, extra_samples=None,
             seed=None):
    ratio = stability_ratio(values)
    samples = [{"r": float(r), "value": float(v)} for r, v in zip(radii, values)]
    if extra_samples:
        for s, e in zip(samples, extra_samples):
            s.update(e)
    consts = {"min": float(np.min(values)), "max": float(np.max(values))}
    consts.update(constants or {})
    dom = {"radii": [float(r) for r in radii]}
    dom.update(domain or {})
    return ConditionVerdict(condition, consts, ratio, dom, bool(ratio <= threshold), seed, samples)


def _inverse_power(a: np.ndarray, tol: float = 1e-12, max_iter: int = 20000) -> float:
    """Smallest eigenvalue of a symmetric positive definite matrix."""
    n = a.shape[0]
    if n == 1:
        return float(a[0, 0])
    factor = linalg.cho_factor(a)
    v = np.ones(n) / math.sqrt(n)
    lam_old = float(v @ a @ v)
    for _ in range(max_iter):
        w = linalg.cho_solve(factor, v)
        v = w / np.linalg.norm(w)
        lam = float(v @ a @ v)
        if abs(lam - lam_old) <= tol * abs(lam):
            # Rayleigh quotient error is quadratic in the vector error
            if np.linalg.norm(a @ v - lam * v) <= math.sqrt(tol) * abs(lam):
                return lam
        lam_old = lam
    raise proc.NumericError("inverse power iteration did not converge")


def dirichlet_bottom_eigenvalue(gen: Generator, domain) -> float:
    idx = np.unique(np.asarray(domain, dtype=np.int64))
    return _inverse_power(gen.symmetric_form(idx))


def check_faber_krahn(gen: Generator, x0: int, radii, phi: ScaleFunction,
                      threshold: float = STABILITY_THRESHOLD) -> ConditionVerdict:
    vals, lams = [], []
    for r in radii:
        gen.space.check_guard(r)
        lam = dirichlet_bottom_eigenvalue(gen, gen.space.ball(x0, r))
        lams.append(lam)
        vals.append(lam * float(phi(r)))
    return _verdict("FK", vals, radii, threshold, {"C": float(np.min(vals))}, {"center": int(x0)},
                    [{"lambda1": float(l)} for l in lams])


def poincare_constant(gen: Generator, ball, big_ball) -> float:
    """sup Var_B(f) / E_{B'}(f) as the top generalized eigenvalue; inf if degenerate."""
    b_idx = np.unique(np.asarray(ball, dtype=np.int64))
    bb_idx = np.unique(np.asarray(big_ball, dtype=np.int64))
    if not np.all(np.isin(b_idx, bb_idx)):
        raise ValueError("ball must lie inside the enlarged ball")
    if len(bb_idx) < 2:
        return 0.0
    mu = gen.mu[bb_idx]
    w = gen.jump[np.ix_(bb_idx, bb_idx)] * mu[:, None] * mu[None, :]
    e_form = 2.0 * (np.diag(w.sum(axis=1)) - w)
    inside = np.isin(bb_idx, b_idx)
    m_b = mu * inside
    total = m_b.sum()
    v_form = np.diag(m_b) - np.outer(m_b, m_b) / total
    # pin the first coordinate to zero to quotient out constants
    e_red, v_red = e_form[1:, 1:], v_form[1:, 1:]
    try:
        linalg.cholesky(e_red)
    except linalg.LinAlgError:
        return math.inf
    vals = linalg.eigh(v_red, e_red, eigvals_only=True)
    return float(vals[-1])


def check_poincare(gen: Generator, x0: int, radii, phi: ScaleFunction, kappa: float = 1.0,
                   threshold: float = STABILITY_THRESHOLD) -> ConditionVerdict:
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    vals, consts = [], []
    for r in radii:
        gen.space.check_guard(kappa * r)
        c = poincare_constant(gen, gen.space.ball(x0, r), gen.space.ball(x0, kappa * r))
        consts.append(c)
        vals.append(c / float(phi(r)))
    v = _verdict("PI", vals, radii, threshold, {"C": float(np.max(vals)), "kappa": kappa},
                 {"center": int(x0)}, [{"optimal_constant": float(c)} for c in consts])
    if any(math.isinf(c) for c in consts):
        v.passed = False
        v.notes.append("degenerate energy form on an enlarged ball")
    return v


def ramp_cutoff(space: FiniteMetricMeasureSpace, x0: int, inner: float, width: float) -> np.ndarray:
    return np.clip((inner + width - space.dist[x0]) / width, 0.0, 1.0)


def carre_du_champ(gen: Generator, f) -> np.ndarray:
    """Gamma(f,f)(x) = sum_y (f(x)-f(y))^2 J(x,y) mu_y."""
    f = np.asarray(f, dtype=float)
    diff2 = (f[:, None] - f[None, :]) ** 2
    return (diff2 * gen.jump) @ gen.mu


def check_cutoff_energy(gen: Generator, x0: int, radii, phi: ScaleFunction, inner_factor: float = 1.0,
                        threshold: float = STABILITY_THRESHOLD) -> ConditionVerdict:
    """sup_x Gamma(ramp)(x) * phi(r) for ramps between B(x0, R) and B(x0, R + r), R = factor r."""
    vals = []
    for r in radii:
        big = inner_factor * r
        gen.space.check_guard(big + r)
        cut = ramp_cutoff(gen.space, x0, big, r)
        vals.append(float(carre_du_champ(gen, cut).max() * float(phi(r))))
    return _verdict("CSJ-energy", vals, radii, threshold, {"C": float(np.max(vals))},
                    {"center": int(x0), "inner_factor": inner_factor})


def jump_tail(gen: Generator, r: float) -> np.ndarray:
    """sum over y with d(x,y) >= r of J(x,y) mu_y, for every x."""
    far = gen.space.dist >= r - 1e-9
    return (gen.jump * far) @ gen.mu


def check_tail_integral(gen: Generator, radii, phi_j: ScaleFunction,
                        threshold: float = STABILITY_THRESHOLD) -> ConditionVerdict:
    vals = []
    for r in radii:
        gen.space.check_guard(r)
        vals.append(float(jump_tail(gen, r).max() * float(phi_j(r))))
    return _verdict("J_phi", vals, radii, threshold, {"c": float(np.max(vals))})


def ujs_ratio(gen: Generator, x: int, y: int, r: float) -> float:
    """J(x,y) V(x,r) / sum_{z in B(x,r)} J(z,y) mu_z."""
    ball = gen.space.ball(x, r)
    denom = float(np.sum(gen.jump[ball, y] * gen.mu[ball]))
    num = float(gen.jump[x, y] * gen.space.volume(x, r))
    if num == 0:
        return 0.0
    return math.inf if denom == 0 else num / denom


def check_ujs(gen: Generator, triples, threshold: float = STABILITY_THRESHOLD) -> ConditionVerdict:
    """Worst UJS ratio over sampled (x, y, r) with r <= d(x,y)/2."""
    vals, samples = [], []
    for x, y, r in triples:
        if r > gen.space.dist[x, y] / 2 + 1e-9:
            raise ValueError("UJS samples need r <= d(x,y)/2")
        v = ujs_ratio(gen, int(x), int(y), float(r))
        vals.append(v)
        samples.append({"x": int(x), "y": int(y), "r": float(r), "value": float(v)})
    worst = float(max(vals)) if vals else 1.0
    return ConditionVerdict("UJS", {"max": worst}, worst, {"n_samples": len(vals)},
                            bool(worst <= threshold), None, samples)


def ujs_triples(space: FiniteMetricMeasureSpace, radii, sources, targets):
    out = []
    for x in sources:
        for y in targets:
            for r in radii:
                if x != y and r <= space.dist[x, y] / 2 + 1e-9:
                    out.append((int(x), int(y), float(r)))
    return out


# ---- Harnack ---------------------------------------------------------------------

@dataclass(frozen=True)
class Cylinder:
    """Q- = (t0 + phi(a R), t0 + phi(b R)), Q+ = (t0 + phi(c R), t0 + phi(d R)), ball B(x0, R)."""
    early: tuple = (0.5, 1.0)
    late: tuple = (1.5, 2.0)
    reach: float = 2.0
    t0: float = 0.0
    n_times: int = 5


def caloric_family(space: FiniteMetricMeasureSpace, n_points: int = 40, n_random: int = 4,
                   seed: int = 0, extra=None) -> np.ndarray:
    """Point masses on a regular site grid, random nonnegative vectors, and extras."""
    cols = []
    step = max(1, space.n // n_points)
    for y in range(0, space.n, step):
        e = np.zeros(space.n)
        e[y] = 1.0
        cols.append(e)
    rng = generator(seed, 0, PURPOSE["family"])
    for _ in range(n_random):
        cols.append(rng.random(space.n))
    for f in extra or []:
        cols.append(np.asarray(f, dtype=float))
    return np.array(cols).T


def harnack_ratios(gen: Generator, x0: int, radii, phi: ScaleFunction, family: np.ndarray,
                   cyl: Cylinder = Cylinder()):
    """Worst sup_{Q-} u / inf_{Q+} u over the family, per radius."""
    out = []
    for R in radii:
        gen.space.check_guard(cyl.reach * R)
        ts_early = cyl.t0 + np.linspace(float(phi(cyl.early[0] * R)), float(phi(cyl.early[1] * R)), cyl.n_times)
        ts_late = cyl.t0 + np.linspace(float(phi(cyl.late[0] * R)), float(phi(cyl.late[1] * R)), cyl.n_times)
        ball = gen.space.ball(x0, R)
        vals = proc.semigroup_apply(gen, list(ts_early) + list(ts_late), family)
        up = np.max([v[ball].max(axis=0) for v in vals[: cyl.n_times]], axis=0)
        lo = np.min([v[ball].min(axis=0) for v in vals[cyl.n_times:]], axis=0)
        if np.any(lo <= 0):
            out.append(math.inf)
            continue
        out.append(float(np.max(up / lo)))
    return out


def check_phi_harnack(gen: Generator, x0: int, radii, phi: ScaleFunction, family=None,
                      cyl: Cylinder = Cylinder(), threshold: float = 3.0, seed: int = 0) -> ConditionVerdict:
    family = caloric_family(gen.space, seed=seed) if family is None else family
    ratios = harnack_ratios(gen, x0, radii, phi, family, cyl)
    v = _verdict("PHI", ratios, radii, threshold, {"worst": float(np.max(ratios))},
                 {"center": int(x0), "early": list(cyl.early), "late": list(cyl.late),
                  "family_size": int(family.shape[1])}, seed=seed)
    v.notes.append("caloric family: P_t f for point masses and random nonnegative f")
    if any(math.isinf(r) for r in ratios):
        v.status = "anomaly"
        v.passed = False
    return v


# ---- exit times ------------------------------------------------------------------

def check_exit_scaling(gen: Generator, x0: int, radii, phi: ScaleFunction,
                       threshold: float = STABILITY_THRESHOLD, survival_fraction: float = 0.5,
                       mc_radii=(), n_paths: int = 0, seed: int = 0,
                       max_paths: Optional[int] = None) -> ConditionVerdict:
    """E[tau_r]/phi(r) stability plus the EP bound at t = fraction * phi(r)."""
    taus, vals, ep, mc = [], [], [], []
    for r in radii:
        gen.space.check_guard(r)
        ball = gen.space.ball(x0, r)
        tau = proc.mean_exit_time(gen, ball, x0)
        taus.append(tau)
        vals.append(tau / float(phi(r)))
        t = survival_fraction * float(phi(r))
        surv = float(proc.survival_probability(gen, ball, x0, [t])[0])
        # fitted c in P(tau <= t) <= c t / phi(r)
        ep.append((1.0 - surv) / survival_fraction)
    extra = [{"exit_time": float(a), "ep_constant": float(b)} for a, b in zip(taus, ep)]
    v = _verdict("E_phi", vals, radii, threshold,
                 {"c_lower": float(np.min(vals)), "c_upper": float(np.max(vals)),
                  "ep_c": float(np.max(ep))}, {"center": int(x0)}, extra, seed)
    slope = float(np.polyfit(np.log(radii), np.log(taus), 1)[0]) if len(radii) > 1 else math.nan
    v.constants["log_slope"] = slope
    for r in mc_radii:
        ball = gen.space.ball(x0, r)
        exact = proc.mean_exit_time(gen, ball, x0)
        mean, se = proc.mc_exit_time(gen, ball, x0, n_paths, seed, max_paths)
        z = abs(mean - exact) / se
        mc.append({"r": float(r), "solve": exact, "mc_mean": mean, "mc_se": se, "z": z})
        if z > 3:
            v.passed = False
    if mc:
        v.constants["mc_max_z"] = float(max(m["z"] for m in mc))
    v.domain["mc"] = mc
    return v


def check_capacity(gen: Generator, x0: int, radii, phi: ScaleFunction,
                   threshold: float = STABILITY_THRESHOLD) -> ConditionVerdict:
    """cap(B(x0,r), B(x0,2r)) * phi(r) / V(x0, r) stability."""
    vals, caps = [], []
    for r in radii:
        gen.space.check_guard(2 * r)
        c = proc.capacity(gen, gen.space.ball(x0, r), gen.space.ball(x0, 2 * r))
        caps.append(c)
        vals.append(c * float(phi(r)) / float(gen.space.volume(x0, r)))
    return _verdict("Gcap", vals, radii, threshold, {"C": float(np.max(vals))}, {"center": int(x0)},
                    [{"capacity": float(c)} for c in caps])


def check_volume(space: FiniteMetricMeasureSpace, radii, points=None) -> ConditionVerdict:
    from .space import check_vd_rvd
    fit = check_vd_rvd(space, radii, points)
    consts = {"C_mu": fit.c_upper, "d2": fit.d_upper, "c_mu": fit.c_lower, "d1": fit.d_lower}
    worst = float(fit.d_upper / fit.d_lower) if fit.d_lower > 0 else math.inf
    return ConditionVerdict("VD/RVD", consts, worst, {"radii": [float(r) for r in radii]}, fit.passed)


def meyer_fit(space, kernel, rho: float, times, phi_j: ScaleFunction, phi: ScaleFunction, x0: int = 0):
    """Fitted constant of the truncation comparison for each time."""
    full = proc.build_generator(space, kernel)
    trunc = proc.build_generator(space, proc.truncate_kernel(kernel, rho))
    p = proc.exact_heat_kernel_series(full, times)
    q = proc.exact_heat_kernel_series(trunc, times)
    vol = float(space.volume(x0, rho))
    return [proc.meyer_comparison_constant(a.density, b.density, a.t, rho, vol, phi_j, phi)
            for a, b in zip(p, q)]


def verdict_dict(v: ConditionVerdict) -> dict:
    return _clean(asdict(v))
