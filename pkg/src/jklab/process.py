"""Jump generators, exact and Monte Carlo heat kernels, exit times, capacity,
subordinators and kernel truncation on finite spaces."""
from __future__ import annotations

import csv
import io
import math
import os
import struct
import tempfile
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, linalg, optimize, sparse, stats
from scipy.sparse.linalg import LinearOperator, cg
from scipy.special import gammaln

from . import kernels
from .rng import PURPOSE, bit_generator, bit_generators
from .scale import ScaleFunction
from .space import DEFAULT_MAX_POINTS, FiniteMetricMeasureSpace, ResourceCapError

POISSON_TAIL = 1e-12
SOLVE_TOL = 1e-10


class ProcessError(ValueError):
    pass


class NumericError(RuntimeError):
    pass


# ---- kernels and generators -------------------------------------------------

@dataclass(frozen=True)
class JumpKernelSpec:
    """J(x,y) = amplitude / (V(x, d) phi_j(d)), or an explicit matrix.

    `truncation` drops every pair farther apart than the given radius.
    The formula form is symmetrized as (J + J^T)/2 so that spaces whose
    volumes depend on the center still give a symmetric kernel.
    """
    phi_j: Optional[ScaleFunction] = None
    amplitude: float = 1.0
    matrix: Optional[np.ndarray] = None
    truncation: Optional[float] = None

    def density(self, space: FiniteMetricMeasureSpace) -> np.ndarray:
        if self.matrix is not None:
            jm = np.array(self.matrix, dtype=float)
            if jm.shape != (space.n, space.n):
                raise ProcessError("kernel matrix does not match the space")
        else:
            if self.phi_j is None:
                raise ProcessError("kernel needs phi_j or an explicit matrix")
            d = space.dist
            jm = np.zeros_like(d)
            off = d > 0
            vol = np.empty_like(d)
            for x in range(space.n):
                vol[x] = space.volume(x, d[x])
            jm[off] = self.amplitude / (vol[off] * self.phi_j(d[off]))
            jm = 0.5 * (jm + jm.T)
        np.fill_diagonal(jm, 0.0)
        if self.truncation is not None:
            jm[space.dist > self.truncation + 1e-9] = 0.0
        return jm


def truncate_kernel(kernel: JumpKernelSpec, rho: float) -> JumpKernelSpec:
    if rho <= 0:
        raise ProcessError("truncation radius must be positive")
    rho = rho if kernel.truncation is None else min(rho, kernel.truncation)
    return replace(kernel, truncation=float(rho))


@dataclass(eq=False)
class Generator:
    space: FiniteMetricMeasureSpace
    jump: np.ndarray          # J(x, y), symmetric, zero diagonal
    rates: np.ndarray         # q_xy off the diagonal, q_xx on it
    uniform_rate: float
    _cum: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n(self):
        return self.space.n

    @property
    def mu(self):
        return self.space.mu

    @property
    def escape(self) -> np.ndarray:
        return -np.diag(self.rates)

    def jump_table(self) -> np.ndarray:
        """Row-wise cumulative off-diagonal rates for the path samplers."""
        if self._cum is None:
            off = self.rates.copy()
            np.fill_diagonal(off, 0.0)
            self._cum = np.ascontiguousarray(np.cumsum(off, axis=1))
        return self._cum

    def symmetric_form(self, idx=None) -> np.ndarray:
        """M^{1/2} (-Q) M^{-1/2} restricted to idx; symmetric by detailed balance."""
        q = self.rates if idx is None else self.rates[np.ix_(idx, idx)]
        mu = self.mu if idx is None else self.mu[idx]
        s = np.sqrt(mu)
        a = -(s[:, None] * q / s[None, :])
        return 0.5 * (a + a.T)


def build_generator(space: FiniteMetricMeasureSpace, kernel, sym_tol: float = 1e-12) -> Generator:
    jm = kernel.density(space) if isinstance(kernel, JumpKernelSpec) else np.array(kernel, dtype=float)
    if np.any(jm < 0):
        raise ProcessError("negative jump rate")
    if not np.all(np.isfinite(jm)):
        raise ProcessError("non-finite jump rate")
    scale = max(float(np.abs(jm).max()), 1e-300)
    if np.max(np.abs(jm - jm.T)) > sym_tol * scale:
        raise ProcessError("jump kernel is not symmetric")
    q = jm * space.mu[None, :]
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    lam = float(np.max(-np.diag(q)))
    return Generator(space, jm, q, lam)


def energy(gen: Generator, f) -> float:
    """Sum over ordered pairs of (f(x)-f(y))^2 J(x,y) mu_x mu_y."""
    f = np.asarray(f, dtype=float)
    qf = gen.rates @ f
    return float(-2.0 * np.sum(gen.mu * f * qf))


def kernel_energy(jump: np.ndarray, mu, f) -> float:
    f = np.asarray(f, dtype=float)
    diff = f[:, None] - f[None, :]
    return float(np.sum(diff ** 2 * jump * mu[:, None] * mu[None, :]))


def nearest_neighbor_generator(space: FiniteMetricMeasureSpace, rate: float = 1.0) -> Generator:
    """Rate-`rate` jumps along the builder's nearest-neighbor edges."""
    if space.edges is None:
        raise ProcessError("space has no edge list")
    jm = np.zeros((space.n, space.n))
    a, b = space.edges[:, 0], space.edges[:, 1]
    jm[a, b] = rate / space.mu[b]
    jm[b, a] = rate / space.mu[a]
    jm = 0.5 * (jm + jm.T)
    return build_generator(space, jm)


# ---- exact heat kernels ----------------------------------------------------

@dataclass
class HeatKernelMatrix:
    """Densities p(t, x, y) with respect to mu, rows = source points."""
    t: float
    density: np.ndarray
    rows: np.ndarray
    source: str = "exact"
    stderr: Optional[np.ndarray] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["t", "x", "y", "p"] + (["stderr"] if self.stderr is not None else [])
        w.writerow(header)
        for i, x in enumerate(self.rows):
            for y in range(self.density.shape[1]):
                row = [repr(float(self.t)), int(x), y, repr(float(self.density[i, y]))]
                if self.stderr is not None:
                    row.append(repr(float(self.stderr[i, y])))
                w.writerow(row)
        return buf.getvalue()


def _poisson_window(mean: float, tail: float = POISSON_TAIL):
    if mean == 0:
        return 0, np.array([1.0])
    kmax = int(stats.poisson.isf(tail, mean)) + 1
    while stats.poisson.sf(kmax, mean) >= tail:
        kmax += 1
    k = np.arange(kmax + 1)
    logw = -mean + k * math.log(mean) - gammaln(k + 1)
    return kmax, np.exp(logw)


def _uniformized_series(rates: np.ndarray, lam: float, block: np.ndarray, times: Sequence[float]):
    """exp(t Q) @ block for every t, sharing the powers K^k block."""
    times = [float(t) for t in times]
    if any(t < 0 for t in times):
        raise ProcessError("time must be nonnegative")
    if lam <= 0:
        return [block.copy() for _ in times]
    k_mat = rates / lam
    k_mat[np.diag_indices_from(k_mat)] += 1.0
    windows = [_poisson_window(lam * t) for t in times]
    kmax = max(w[0] for w in windows)
    acc = [np.zeros_like(block) for _ in times]
    cur = block.copy()
    for k in range(kmax + 1):
        for a, (km, w) in zip(acc, windows):
            if k <= km and w[k] > 0:
                a += w[k] * cur
        if k < kmax:
            cur = k_mat @ cur
    return acc


def _check_cap(gen: Generator, max_points: int):
    if gen.n > max_points:
        raise ResourceCapError(f"{gen.n} points exceeds cap {max_points}")


def exact_heat_kernel_series(gen: Generator, times, rows=None, max_points: int = DEFAULT_MAX_POINTS):
    """Exact p(t, x, .) for x in rows (default all) at every time in `times`."""
    _check_cap(gen, max_points)
    rows = np.arange(gen.n) if rows is None else np.atleast_1d(np.asarray(rows, dtype=np.int64))
    # P_t(., x) columns; p(t,x,y) = P_t(y,x)/mu_x by detailed balance
    block = np.zeros((gen.n, len(rows)))
    block[rows, np.arange(len(rows))] = 1.0
    cols = _uniformized_series(gen.rates, gen.uniform_rate, block, times)
    out = []
    for t, c in zip(times, cols):
        dens = (c / gen.mu[rows][None, :]).T
        out.append(HeatKernelMatrix(float(t), dens, rows))
    return out


def exact_heat_kernel(gen: Generator, t: float, rows=None, max_points: int = DEFAULT_MAX_POINTS):
    if t < 0:
        raise ProcessError("time must be nonnegative")
    return exact_heat_kernel_series(gen, [t], rows, max_points)[0]


def semigroup_apply(gen: Generator, times, f, max_points: int = DEFAULT_MAX_POINTS):
    """P_t f for each t; f may be a vector or an N x m block."""
    _check_cap(gen, max_points)
    f = np.asarray(f, dtype=float)
    block = f[:, None] if f.ndim == 1 else f
    res = _uniformized_series(gen.rates, gen.uniform_rate, block, times)
    return [r[:, 0] for r in res] if f.ndim == 1 else res


def dirichlet_heat_kernel(gen: Generator, domain, t: float):
    """Heat kernel killed on leaving `domain`; returns (indices, p^D)."""
    idx = np.unique(np.asarray(domain, dtype=np.int64))
    if len(idx) == 0:
        raise ProcessError("domain is empty")
    return idx, dirichlet_heat_kernel_series(gen, idx, [t])[0]


def dirichlet_heat_kernel_series(gen: Generator, domain, times):
    idx = np.unique(np.asarray(domain, dtype=np.int64))
    if len(idx) == 0:
        raise ProcessError("domain is empty")
    q = gen.rates[np.ix_(idx, idx)]
    lam = float(np.max(-np.diag(q))) if len(idx) else 0.0
    block = np.eye(len(idx))
    mats = _uniformized_series(q, lam, block, times)
    return [(m / gen.mu[idx][None, :]) for m in mats]


def survival_probability(gen: Generator, domain, start: int, times) -> np.ndarray:
    """P^x(tau_D > t) as the row sum of the Dirichlet kernel."""
    idx = np.unique(np.asarray(domain, dtype=np.int64))
    pos = int(np.searchsorted(idx, start))
    if pos >= len(idx) or idx[pos] != start:
        raise ProcessError("start point must lie in the domain")
    q = gen.rates[np.ix_(idx, idx)]
    lam = float(np.max(-np.diag(q)))
    ones = np.ones((len(idx), 1))
    res = _uniformized_series(q, lam, ones, times)
    return np.array([r[pos, 0] for r in res])


# ---- HKM1 binary layout ------------------------------------------------------

_HKM1 = struct.Struct("<4sIQ")


def _atomic_write(path: str, data: bytes):
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_hkm1(path: str, matrix: np.ndarray):
    m = np.asarray(matrix, dtype="<f8")
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("HKM1 stores square matrices")
    _atomic_write(path, _HKM1.pack(b"HKM1", m.shape[0], 0) + np.ascontiguousarray(m).tobytes())


def read_hkm1(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HKM1.size)
        if len(head) != _HKM1.size:
            raise ValueError("truncated HKM1 header")
        magic, n, _ = _HKM1.unpack(head)
        if magic != b"HKM1":
            raise ValueError("not an HKM1 file")
        body = fh.read()
    if len(body) != 8 * n * n:
        raise ValueError("HKM1 body size does not match N")
    return np.frombuffer(body, dtype="<f8").reshape(n, n).copy()


# ---- linear solves -------------------------------------------------------

def _spd_solve(gen: Generator, idx: np.ndarray, rhs: np.ndarray, tol: float = SOLVE_TOL) -> np.ndarray:
    """Solve (-Q_BB) u = rhs through the symmetric form with Jacobi-preconditioned CG."""
    s = np.sqrt(gen.mu[idx])
    a = gen.symmetric_form(idx)
    b = s * rhs
    diag = np.diag(a).copy()
    if np.any(diag <= 0):
        raise NumericError("restricted operator has a zero diagonal entry")
    precond = LinearOperator(a.shape, matvec=lambda v: v / diag)
    y, info = cg(a, b, rtol=tol, atol=0.0, maxiter=20 * len(idx) + 100, M=precond)
    if info != 0:
        raise NumericError(f"conjugate gradient did not converge (info={info})")
    resid = np.linalg.norm(a @ y - b) / max(np.linalg.norm(b), 1e-300)
    if resid > 10 * tol:
        raise NumericError(f"residual {resid:.2e} above tolerance")
    return y / s


def mean_exit_times(gen: Generator, ball) -> tuple:
    """E^y[tau_B] for every y in B (indices sorted)."""
    idx = np.unique(np.asarray(ball, dtype=np.int64))
    if len(idx) == gen.n:
        raise NumericError("the ball is the whole space; the exit time is infinite")
    return idx, _spd_solve(gen, idx, np.ones(len(idx)))


def mean_exit_time(gen: Generator, ball, x: int) -> float:
    idx, u = mean_exit_times(gen, ball)
    pos = int(np.searchsorted(idx, x))
    if pos >= len(idx) or idx[pos] != x:
        raise ProcessError("start point must lie in the ball")
    return float(u[pos])


def capacity(gen: Generator, inner, outer) -> float:
    """Energy of the equilibrium potential: 1 on `inner`, 0 off `outer`."""
    a_idx = np.unique(np.asarray(inner, dtype=np.int64))
    b_idx = np.unique(np.asarray(outer, dtype=np.int64))
    if len(a_idx) == 0:
        raise ProcessError("inner set is empty")
    if not np.all(np.isin(a_idx, b_idx)):
        raise ProcessError("inner set must lie inside the outer set")
    if len(b_idx) == gen.n and len(a_idx) == len(b_idx):
        raise ProcessError("capacity of the whole space relative to itself is undefined")
    free = np.setdiff1d(b_idx, a_idx)
    h = np.zeros(gen.n)
    h[a_idx] = 1.0
    if len(b_idx) == gen.n:
        # nothing is grounded, so the potential is constant
        return 0.0
    if len(free):
        rhs = gen.rates[np.ix_(free, a_idx)].sum(axis=1)
        h[free] = _spd_solve(gen, free, rhs)
    return energy(gen, h)


# ---- subordinators ---------------------------------------------------------

@dataclass(frozen=True)
class SubordinatorSpec:
    """Levy density s^(-1-g1) on (0,1] and s^(-1-g2) on (1,inf)."""
    gamma1: float
    gamma2: float
    eps: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.gamma1 < 1 < self.gamma2):
            raise ProcessError("need 0 < gamma1 < 1 < gamma2")
        if self.eps is not None and not (0 < self.eps <= 1):
            raise ProcessError("eps must lie in (0, 1]")

    @property
    def cutoff(self) -> float:
        """Default eps keeps the dropped small-jump variance below 1e-6."""
        if self.eps is not None:
            return self.eps
        g = self.gamma1
        return min(1.0, (1e-6 * (2 - g)) ** (1.0 / (2 - g)))

    def levy_density(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= 1, s ** (-1 - self.gamma1), s ** (-1 - self.gamma2))

    @property
    def drift(self) -> float:
        e = self.cutoff
        return e ** (1 - self.gamma1) / (1 - self.gamma1)

    @property
    def small_rate(self) -> float:
        return (self.cutoff ** -self.gamma1 - 1.0) / self.gamma1

    @property
    def large_rate(self) -> float:
        return 1.0 / self.gamma2

    @property
    def mean(self) -> float:
        """E[S_1] = integral of s nu(s)."""
        return 1.0 / (1 - self.gamma1) + 1.0 / (self.gamma2 - 1)

    @property
    def dropped_variance(self) -> float:
        e = self.cutoff
        return e ** (2 - self.gamma1) / (2 - self.gamma1)


def _laplace_quadpack(spec: SubordinatorSpec, r: float) -> float:
    g1, g2 = spec.gamma1, spec.gamma2
    a, b = min(1.0, 1.0 / r), max(1.0, 1.0 / r)
    small = lambda s: -math.expm1(-r * s) / s if s > 0 else r
    opts = dict(epsabs=0.0, epsrel=1e-13, limit=400)
    # (1 - e^{-rs}) s^{-1-g} = [(1 - e^{-rs})/s] * s^{-g}
    total, _ = integrate.quad(small, 0.0, a, weight="alg", wvar=(-g1, 0.0), **opts)
    for lo, hi in ((a, 1.0), (1.0, b)):
        if hi > lo:
            # one piece per decade keeps each integrand well scaled
            cuts = np.geomspace(lo, hi, max(2, int(math.ceil(math.log10(hi / lo))) + 1))
            for c0, c1 in zip(cuts[:-1], cuts[1:]):
                total += integrate.quad(lambda s: -math.expm1(-r * s) * float(spec.levy_density(s)),
                                        c0, c1, **opts)[0]
    # beyond 100 b the exponential is below e^-100, so only the power tail remains
    cuts = np.geomspace(b, 100.0 * b, 3)
    for c0, c1 in zip(cuts[:-1], cuts[1:]):
        total += integrate.quad(lambda s: -math.expm1(-r * s) * s ** (-1 - g2), c0, c1, **opts)[0]
    total += (100.0 * b) ** (-g2) / g2
    return total


def _laplace_gauss_log(spec: SubordinatorSpec, r: float, order: int = 64) -> float:
    """Composite Gauss-Legendre in log s with power-series and tail corrections."""
    g1, g2 = spec.gamma1, spec.gamma2
    lo = 1e-3 * min(1.0, 1.0 / r)
    hi = max(1.0, 60.0 / r)
    # series for the part below lo: sum (-1)^{k+1} r^k lo^{k-g1} / (k! (k-g1))
    head, k, term = 0.0, 1, 1.0
    while True:
        term = (-1) ** (k + 1) * math.exp(k * math.log(r * lo) - math.lgamma(k + 1)) * lo ** (-g1) / (k - g1)
        head += term
        if abs(term) < 1e-18 * abs(head) or k > 60:
            break
        k += 1
    # above hi >= 1 the exponential term is below e^-60 and is dropped
    tail = hi ** (-g2) / g2
    edges = np.unique(np.concatenate([np.linspace(math.log(lo), math.log(hi), 41),
                                      [0.0, -math.log(r)] if r > 0 else [0.0]]))
    edges = edges[(edges >= math.log(lo)) & (edges <= math.log(hi))]
    nodes, weights = np.polynomial.legendre.leggauss(order)
    body = 0.0
    for x0, x1 in zip(edges[:-1], edges[1:]):
        x = 0.5 * (x1 - x0) * nodes + 0.5 * (x1 + x0)
        s = np.exp(x)
        body += 0.5 * (x1 - x0) * np.sum(weights * (-np.expm1(-r * s)) * s * spec.levy_density(s))
    return head + body + tail


def laplace_exponent(spec: SubordinatorSpec, r, agree_tol: float = 1e-8):
    """f(r) = integral of (1 - e^{-rs}) nu(s) ds; two independent rules must agree."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr < 0):
        raise ProcessError("r must be nonnegative")
    out = np.zeros_like(r_arr)
    for i, x in enumerate(r_arr):
        if x == 0:
            continue
        a = _laplace_quadpack(spec, x)
        b = _laplace_gauss_log(spec, x)
        if abs(a - b) > agree_tol * abs(a):
            raise NumericError(f"quadrature rules disagree at r={x}: {a!r} vs {b!r}")
        out[i] = a
    return float(out[0]) if np.ndim(r) == 0 else out


def sample_subordinator_increments(spec: SubordinatorSpec, dt: float, n: int, seed: int, index: int = 0):
    """n independent increments S_{t+dt} - S_t: drift for small jumps plus compound Poisson."""
    if dt <= 0:
        raise ProcessError("dt must be positive")
    rate = spec.small_rate + spec.large_rate
    p_small = spec.small_rate / rate
    bg = bit_generator(seed, index, PURPOSE["subordinator"])
    return kernels.subordinator_increments(spec.gamma1, spec.gamma2, spec.cutoff, spec.drift,
                                           rate, p_small, float(dt), int(n), bg)


def sample_subordinator_increment(spec: SubordinatorSpec, dt: float, seed: int, index: int = 0) -> float:
    return float(sample_subordinator_increments(spec, dt, 1, seed, index)[0])


def subordinate_generator(base: Generator, spec: SubordinatorSpec) -> Generator:
    """Generator -f(-L) of the chain run with subordinated time (spectral calculus)."""
    a = base.symmetric_form()
    lam, vec = linalg.eigh(a)
    lam = np.clip(lam, 0.0, None)
    f = laplace_exponent(spec, lam)
    sym = -(vec * f) @ vec.T  # symmetric version of the new generator
    s = np.sqrt(base.mu)
    q = sym * s[None, :] / s[:, None]
    # J(x,y) = q_xy / mu_y off the diagonal
    jm = q / base.mu[None, :]
    np.fill_diagonal(jm, 0.0)
    jm = np.clip(0.5 * (jm + jm.T), 0.0, None)
    return build_generator(base.space, jm)


# ---- path simulation ---------------------------------------------------------

@dataclass
class PathSample:
    times: np.ndarray
    states: np.ndarray
    seed: int
    index: int

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["time", "state"])
        for t, x in zip(self.times, self.states):
            w.writerow([repr(float(t)), int(x)])
        return buf.getvalue()


def simulate_jump_path(gen: Generator, t_end: float, seed: int, index: int = 0, start: int = 0) -> PathSample:
    if t_end <= 0:
        raise ProcessError("t_end must be positive")
    bg = bit_generator(seed, index, PURPOSE["path"])
    times, states = kernels.record_path(gen.jump_table(), gen.escape, int(start), float(t_end), bg)
    return PathSample(times, states, seed, index)


def _check_paths(n_paths: int, max_paths: Optional[int]):
    if max_paths is not None and n_paths > max_paths:
        raise ResourceCapError(f"{n_paths} paths exceeds cap {max_paths}")


def mc_heat_kernel(gen: Generator, x: int, t: float, n_paths: int, seed: int,
                   max_paths: Optional[int] = None, chunk: int = 4096) -> HeatKernelMatrix:
    """Occupation estimate of p(t, x, .) with per-cell standard errors."""
    _check_paths(n_paths, max_paths)
    counts = np.zeros(gen.n)
    cum, esc = gen.jump_table(), gen.escape
    for start in range(0, n_paths, chunk):
        m = min(chunk, n_paths - start)
        bgs = bit_generators(seed, start, m, PURPOSE["mc_kernel"])
        ends = kernels.path_endpoints(cum, esc, np.full(m, x, dtype=np.int64), float(t), bgs)
        counts += np.bincount(ends, minlength=gen.n)
    p_hat = counts / n_paths
    se = np.sqrt(p_hat * (1 - p_hat) / n_paths)
    return HeatKernelMatrix(float(t), (p_hat / gen.mu)[None, :], np.array([x]), "monte_carlo",
                            (se / gen.mu)[None, :])


def mc_exit_time(gen: Generator, ball, x: int, n_paths: int, seed: int,
                 max_paths: Optional[int] = None, t_cap: float = math.inf, chunk: int = 4096):
    """Monte Carlo mean exit time and its standard error."""
    _check_paths(n_paths, max_paths)
    inside = np.zeros(gen.n, dtype=np.uint8)
    inside[np.asarray(ball, dtype=np.int64)] = 1
    cum, esc = gen.jump_table(), gen.escape
    taus = []
    for start in range(0, n_paths, chunk):
        m = min(chunk, n_paths - start)
        bgs = bit_generators(seed, start, m, PURPOSE["exit"])
        taus.append(kernels.exit_times(cum, esc, inside, np.full(m, x, dtype=np.int64), bgs, float(t_cap)))
    tau = np.concatenate(taus)
    if not np.all(np.isfinite(tau)):
        raise NumericError("some paths never left the ball before the cap")
    return float(tau.mean()), float(tau.std(ddof=1) / math.sqrt(n_paths))


def simulate_subordinate_path(base: Generator, spec: SubordinatorSpec, t_end: float, dt: float,
                              seed: int, index: int = 0, start: int = 0) -> PathSample:
    """Y_t = X_{S_t} on the grid 0, dt, 2 dt, ..., t_end."""
    n_steps = int(math.ceil(t_end / dt - 1e-12))
    grid = np.arange(n_steps + 1) * dt
    incs = sample_subordinator_increments(spec, dt, n_steps, seed, index)
    clock = np.concatenate([[0.0], np.cumsum(incs)])
    base_path = simulate_jump_path(base, max(float(clock[-1]), 1e-300), seed, index, start)
    pos = np.searchsorted(base_path.times, clock, side="right") - 1
    return PathSample(grid, base_path.states[pos], seed, index)


# ---- truncation comparison ---------------------------------------------------

def meyer_comparison_constant(p_full: np.ndarray, p_trunc: np.ndarray, t: float, rho: float,
                              vol_rho: float, phi_j: ScaleFunction, phi: ScaleFunction,
                              c_max: float = 1e6) -> float:
    """Smallest c with p <= q + c t/(V(rho) phi_j(rho)) exp(c t / phi(rho)) entrywise."""
    excess = float(np.max(p_full - p_trunc))
    if excess <= 0:
        return 0.0
    base = t / (vol_rho * float(phi_j(rho)))
    expo = t / float(phi(rho))
    g = lambda c: c * base * math.exp(min(c * expo, 700.0)) - excess
    if g(c_max) < 0:
        return math.inf
    return float(optimize.brentq(g, 0.0, c_max, xtol=1e-14, rtol=1e-12))


def hub_perturbation(space: FiniteMetricMeasureSpace, jump: np.ndarray, hub: int, center: int,
                     radius: float, factor: float = 1.0) -> np.ndarray:
    """Make the window B(center, radius) reachable from outside only through `hub`.

    Every rate between the window and a point outside it (other than the hub)
    is set to zero; rates between the hub and the window are multiplied by
    `factor`.  This breaks the upper jump smoothness bound at the hub.
    """
    jm = np.array(jump, dtype=float)
    window = space.ball(center, radius)
    if hub in set(window.tolist()):
        raise ProcessError("the hub must lie outside the window")
    outside = np.setdiff1d(np.arange(space.n), np.concatenate([window, [hub]]))
    jm[np.ix_(outside, window)] = 0.0
    jm[np.ix_(window, outside)] = 0.0
    jm[hub, window] *= factor
    jm[window, hub] *= factor
    return jm
