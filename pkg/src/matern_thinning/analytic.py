"""Exact first- and second-order characteristics of the thinned models.

Closed forms are used where the registry provides them; everything else is
adaptive (Gauss-Kronrod) quadrature for radial tail integrals and a
panelized Gauss-Legendre scheme for the d-dimensional radial
self-convolution.  Integration intervals are always split at the
interaction's declared jump/kink radii; panel endpoints additionally
receive a sin-substitution that removes the square-root endpoint behavior
the spherical geometry introduces, so indicator interactions integrate to
near machine accuracy.

All functions here are pure functions of immutable inputs and are
thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .core import ball_volume
from .interactions import InteractionFunction, RadialSlice
from .models import ModelSpec

__all__ = [
    "tail_integral", "space_integral", "radial_self_convolution",
    "intensity", "intensity_report", "intensity_mat1", "intensity_marked",
    "intensity_mat2", "pcf", "pcf_mat1", "pcf_marked", "pcf_mat2",
    "competition_integral", "l_function", "k_function",
    "retained_mark_density", "intensity_profile",
    "IntensityResult", "DivergentModelError",
]


class DivergentModelError(ValueError):
    """The thinning is so strong that the model contains no points a.s."""


@dataclass(frozen=True)
class IntensityResult:
    """Intensity value plus a structured divergence diagnostic."""

    value: float
    divergent: bool = False
    message: str = ""


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

_GL_NODES = 24
_gl_x, _gl_w = np.polynomial.legendre.leggauss(_GL_NODES)
# sin-mapped Gauss-Legendre: node positions in (-1, 1) and du-weights.
_sin_x = np.sin(0.5 * np.pi * _gl_x)
_sin_w = 0.5 * np.pi * np.cos(0.5 * np.pi * _gl_x) * _gl_w


def _refine(bounds: np.ndarray, splits: int) -> np.ndarray:
    """Subdivide each panel of a 1-D bounds vector into `splits` pieces."""
    if splits <= 1:
        return bounds
    lo = bounds[:-1]
    steps = np.linspace(0.0, 1.0, splits + 1)[None, :]
    fine = lo[:, None] + np.diff(bounds)[:, None] * steps
    return np.append(fine[:, :-1].ravel(), bounds[-1])


def _panelize(bounds: np.ndarray):
    """Sin-mapped GL nodes/weights for consecutive panels.

    bounds has shape (..., P+1), nondecreasing along the last axis;
    zero-length panels get zero weight.  Returns nodes and weights of
    shape (..., P, K).
    """
    lo = bounds[..., :-1]
    hi = bounds[..., 1:]
    mid = 0.5 * (lo + hi)[..., None]
    half = 0.5 * (hi - lo)[..., None]
    return mid + half * _sin_x, half * _sin_w


def _as_slice(f, m=None, n=None) -> RadialSlice:
    if isinstance(f, RadialSlice):
        return f
    if isinstance(f, InteractionFunction):
        return f.slice(m, n)
    raise TypeError("expected an InteractionFunction or RadialSlice")


def tail_integral(f, d: int, m=None, n=None, method: str = "auto") -> float:
    """int_0^inf f(r[, m, n]) r^(d-1) dr; inf when the tail is non-integrable.

    method "auto" uses a registry closed form when one exists; "quad"
    forces the adaptive quadrature path.
    """
    if method == "auto" and isinstance(f, InteractionFunction):
        closed = f.closed_tail_integral(d, m, n)
        if closed is not None:
            return closed
    sl = _as_slice(f, m, n)
    if not math.isfinite(sl.cutoff):
        return math.inf
    points = [b for b in sl.breakpoints if 0.0 < b < sl.cutoff]

    def integrand(r):
        return float(sl(np.array([r]))[0]) * r ** (d - 1)

    val, _ = integrate.quad(integrand, 0.0, sl.cutoff, points=points or None,
                            limit=200, epsabs=1e-14, epsrel=1e-10)
    return val


def space_integral(f, d: int, m=None, n=None, method: str = "auto") -> float:
    """int_{R^d} f(||x||[, m, n]) dx = d * b_d * tail_integral."""
    t = tail_integral(f, d, m, n, method)
    return d * ball_volume(d) * t if math.isfinite(t) else math.inf


def _conv_at_zero(s1: RadialSlice, s2: RadialSlice, d: int) -> float:
    hi = min(s1.cutoff, s2.cutoff)
    breaks = sorted({b for b in (*s1.breakpoints, *s2.breakpoints) if 0 < b < hi})
    bounds = _refine(np.array([0.0, *breaks, hi]), 6)
    nodes, weights = _panelize(bounds)
    vals = s1(nodes) * s2(nodes) * nodes ** (d - 1)
    return d * ball_volume(d) * float(np.sum(vals * weights))


def _conv_1d(s1: RadialSlice, s2: RadialSlice, r: float) -> float:
    lo = max(-s1.cutoff, r - s2.cutoff)
    hi = min(s1.cutoff, r + s2.cutoff)
    if hi <= lo:
        return 0.0
    breaks = {0.0, r}
    for b in s1.breakpoints:
        breaks.update((b, -b))
    for b in s2.breakpoints:
        breaks.update((r + b, r - b))
    bounds = _refine(np.array(sorted({lo, hi,
                                      *(b for b in breaks if lo < b < hi)})), 4)
    nodes, weights = _panelize(bounds)
    vals = s1(np.abs(nodes)) * s2(np.abs(nodes - r))
    return float(np.sum(vals * weights))


def radial_self_convolution(f1, f2, d: int, r: float,
                            m=None, n=None) -> float:
    """d-dimensional radial convolution [f1 (*) f2](r).

    f1 and f2 are unmarked InteractionFunctions or RadialSlices (use
    ``f.slice(m, l)`` for marked interactions).  Returns 0 for
    r > cutoff(f1) + cutoff(f2).
    """
    s1 = _as_slice(f1, m, n)
    s2 = _as_slice(f2, m, n)
    c1, c2 = s1.cutoff, s2.cutoff
    if not (math.isfinite(c1) and math.isfinite(c2)):
        raise DivergentModelError("radial convolution of a non-integrable "
                                  "interaction diverges")
    r = float(r)
    if r < 0:
        raise ValueError("r must be >= 0")
    if r >= c1 + c2:
        return 0.0
    if r <= 1e-12 * (c1 + c2):
        return _conv_at_zero(s1, s2, d)
    if d == 1:
        return _conv_1d(s1, s2, r)

    s_lo = max(0.0, r - c2)
    s_hi = min(c1, r + c2)
    if s_hi <= s_lo:
        return 0.0
    sbreaks = set(s1.breakpoints)
    sbreaks.add(r)
    for t in (*s2.breakpoints, c2):
        sbreaks.update((abs(r - t), r + t))
    bounds = _refine(np.array(sorted({s_lo, s_hi,
                                      *(b for b in sbreaks if s_lo < b < s_hi)})), 3)
    s_nodes, s_weights = _panelize(bounds)           # (P, K)
    s_flat = s_nodes.ravel()
    sw_flat = s_weights.ravel()

    a = np.abs(s_flat - r)
    b_geom = s_flat + r
    b = np.minimum(b_geom, c2)
    tb = np.array(sorted(s2.breakpoints)) if s2.breakpoints else np.empty(0)
    inner_bounds = np.concatenate(
        [a[:, None],
         np.clip(tb[None, :], a[:, None], b[:, None]),
         b[:, None]], axis=1)
    inner_bounds.sort(axis=1)
    lo_b = inner_bounds[:, :-1]
    steps = np.linspace(0.0, 1.0, 3)[None, None, :]
    fine = lo_b[..., None] + np.diff(inner_bounds, axis=1)[..., None] * steps
    inner_bounds = np.concatenate(
        [fine[..., :-1].reshape(len(a), -1), inner_bounds[:, -1:]], axis=1)
    t_nodes, t_weights = _panelize(inner_bounds)     # (S, P2, K)
    g2 = s2(t_nodes)
    if d == 2:
        radicand = ((t_nodes ** 2 - a[:, None, None] ** 2)
                    * (b_geom[:, None, None] ** 2 - t_nodes ** 2))
        w = 2.0 * t_nodes / np.sqrt(np.maximum(radicand, 1e-300))
        inner = np.sum(g2 * w * t_weights, axis=(1, 2))
        outer = 2.0 * s_flat * s1(s_flat) * inner
    else:
        inner = np.sum(g2 * t_nodes * t_weights, axis=(1, 2)) / (s_flat * r)
        outer = 2.0 * np.pi * s_flat ** 2 * s1(s_flat) * inner
    return float(np.sum(outer * sw_flat))


# ---------------------------------------------------------------------------
# stable building blocks for the closed forms
# ---------------------------------------------------------------------------

def _phi(x):
    """(exp(x) - 1) / x, with phi(0) = 1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-12
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x / 2.0, np.expm1(safe) / safe)


def _phi_prime(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, x)
    series = 0.5 + x / 3.0 + x ** 2 / 8.0 + x ** 3 / 30.0 + x ** 4 / 144.0
    exact = (np.exp(safe) * (safe - 1.0) + 1.0) / safe ** 2
    return np.where(small, series, exact)


def _half_competition(a, b, c):
    # int_0^1 int_0^s exp(a t + b s + c t) dt ds = [phi(a+b+c) - phi(b)]/(a+c)
    u = np.asarray(a + c, dtype=float)
    small = np.abs(u) < 1e-6
    safe = np.where(small, 1.0, u)
    exact = (_phi(b + u) - _phi(b)) / safe
    return np.where(small, _phi_prime(b + u / 2.0), exact)


def competition_integral(a, b, c):
    """int_0^1 int_0^1 e^(a s) e^(b t) e^(c min(s,t)) ds dt.

    Equals the closed form J(a,b,c) + J(b,a,c) of the weighted-thinning
    pair correlation, rewritten so the removable singularities at b -> 0,
    a+c -> 0 and a+b+c -> 0 are evaluated by 2nd-order expansions.
    Here a = log q_m, b = log q_n, c = log q_{m,n}(r).
    """
    return _half_competition(a, b, c) + _half_competition(b, a, c)


# ---------------------------------------------------------------------------
# marked-model kernel cache
# ---------------------------------------------------------------------------

class _MarkedKernels:
    """Per-spec cache of mark nodes, pairwise space integrals and q's."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self.d = spec.dim
        self.nodes, self.weights = spec.mu.quadrature()
        M = len(self.nodes)
        dbd = self.d * ball_volume(self.d)
        T = np.empty((M, M))
        for i in range(M):
            for k in range(i, M):
                t = tail_integral(spec.f, self.d, self.nodes[i], self.nodes[k])
                if not math.isfinite(t):
                    raise DivergentModelError(
                        "interaction tail integral diverges; the thinned "
                        "process contains almost surely no points")
                T[i, k] = T[k, i] = t
        self.space = dbd * T                      # int f(||x||, m_i, l_k) dx
        self.C = self.space @ self.weights        # C_m = int ... mu(dl)
        self.log_q = -spec.lam * self.C           # log mark survival factor q_m

    def conv_tensor(self, r: float) -> np.ndarray:
        """conv[i, j, k] = [f(., m_i, l_k) (*) f(., m_j, l_k)](r)."""
        M = len(self.nodes)
        out = np.empty((M, M, M))
        slices = [[self.spec.f.slice(self.nodes[i], self.nodes[k])
                   for k in range(M)] for i in range(M)]
        for i in range(M):
            for j in range(i, M):
                for k in range(M):
                    v = radial_self_convolution(slices[i][k], slices[j][k],
                                                self.d, r)
                    out[i, j, k] = out[j, i, k] = v
        return out

    def log_qmn(self, r: float) -> np.ndarray:
        """log q_{m,n}(r), shape (M, M)."""
        return self.spec.lam * (self.conv_tensor(r) @ self.weights)

    def f_matrix(self, r: float) -> np.ndarray:
        m = self.nodes
        return self.spec.f(np.full((len(m), len(m)), r), m[:, None], m[None, :])


# ---------------------------------------------------------------------------
# exact thinned intensities
# ---------------------------------------------------------------------------

def intensity_mat1(spec: ModelSpec) -> float:
    """lam * p0 * exp(-lam * int f(||x||) dx) for the unmarked model."""
    return intensity_report(spec).value


def intensity_marked(spec: ModelSpec) -> float:
    """Mark-averaged retention intensity of the marked mutual-deletion model."""
    return intensity_report(spec).value


def intensity_mat2(spec: ModelSpec, method: str = "auto") -> float:
    """Intensity of the weighted (competition) model.

    method "reduction" uses the mark-independent change-of-variables
    closed form p0 * E[(1 - exp(-lam C_m)) / C_m]; "direct" integrates
    q_m(w) over the weight distribution numerically; "auto" picks the
    reduction when the weight family is mark-independent.
    """
    return _intensity_mat2_report(spec, method).value


def intensity(spec: ModelSpec) -> float:
    """Analytic intensity of any model variant."""
    return intensity_report(spec).value


def intensity_report(spec: ModelSpec) -> IntensityResult:
    """Intensity with a structured divergence diagnostic instead of raising."""
    if spec.variant == "mat2":
        return _intensity_mat2_report(spec, "auto")
    try:
        if spec.variant == "mat1":
            C = space_integral(spec.f, spec.dim)
            if not math.isfinite(C):
                raise DivergentModelError
            value = spec.lam * spec.p0 * math.exp(-spec.lam * C)
        else:
            ker = _MarkedKernels(spec)
            value = spec.lam * spec.p0 * float(
                np.dot(ker.weights, np.exp(ker.log_q)))
    except DivergentModelError:
        return IntensityResult(0.0, True,
                               "non-integrable interaction: the thinning "
                               "removes all points almost surely")
    return IntensityResult(value)


def _intensity_mat2_report(spec: ModelSpec, method: str) -> IntensityResult:
    if spec.variant != "mat2":
        raise ValueError("intensity_mat2 requires a mat2 spec")
    try:
        ker = _MarkedKernels(spec)
    except DivergentModelError:
        return IntensityResult(0.0, True,
                               "non-integrable interaction: the thinning "
                               "removes all points almost surely")
    if method == "auto":
        method = "reduction" if spec.nu.mark_independent else "direct"
    if method == "reduction":
        if not spec.nu.mark_independent:
            raise ValueError("reduction path requires a mark-independent "
                             "weight distribution")
        # p0 * E[(1 - exp(-lam C_m)) / C_m] = lam p0 E[phi(-lam C_m)]
        value = spec.lam * spec.p0 * float(
            np.dot(ker.weights, _phi(ker.log_q)))
    elif method == "direct":
        value = spec.lam * spec.p0 * _mean_weight_retention(spec, ker)
    else:
        raise ValueError(f"unknown method {method!r}")
    return IntensityResult(value)


def _mean_weight_retention(spec: ModelSpec, ker: _MarkedKernels) -> float:
    """E_mu E_nu_m [ q_m(w) ] by numeric double integration."""
    total = 0.0
    for i, (m, wm) in enumerate(zip(ker.nodes, ker.weights)):
        wn, ww = spec.nu.quadrature(m)
        # log q_m(w) = -lam * sum_l mu_l F_{nu_l}(w) * space(m, l)
        F = np.stack([spec.nu.cdf(wn, l) for l in ker.nodes])   # (L, W)
        log_qmw = -spec.lam * np.einsum("l,l,lw->w", ker.weights,
                                        ker.space[i], F)
        total += wm * float(np.dot(ww, np.exp(log_qmw)))
    return total


def intensity_profile(spec: ModelSpec):
    """Callable lam -> intensity with the lam-independent kernels cached.

    All three variants have intensity of the form
    lam * p0 * E[exp(-lam * C)] (or its phi-transform) where the random
    kernel C does not depend on lam; precomputing it makes repeated
    evaluation along a lam axis cheap, which the intensity-constraint
    root solve relies on.  Raises DivergentModelError for non-integrable
    interactions.
    """
    p0 = spec.p0
    if spec.variant == "mat1":
        C = space_integral(spec.f, spec.dim)
        if not math.isfinite(C):
            raise DivergentModelError(
                "non-integrable interaction: the thinning removes all "
                "points almost surely")
        return lambda lam: lam * p0 * math.exp(-lam * C)
    ker = _MarkedKernels(spec)
    w, C = ker.weights, ker.C
    if spec.variant == "mat1-marked":
        return lambda lam: lam * p0 * float(np.dot(w, np.exp(-lam * C)))
    if spec.nu.mark_independent:
        return lambda lam: lam * p0 * float(np.dot(w, _phi(-lam * C)))
    kernels = []
    for i, m in enumerate(ker.nodes):
        wn, ww = spec.nu.quadrature(m)
        F = np.stack([spec.nu.cdf(wn, l) for l in ker.nodes])
        kernels.append((ww, np.einsum("l,l,lw->w", w, ker.space[i], F)))

    def profile(lam):
        tot = sum(wi * float(np.dot(ww, np.exp(-lam * k)))
                  for wi, (ww, k) in zip(w, kernels))
        return lam * p0 * tot

    return profile


# ---------------------------------------------------------------------------
# exact pair correlation functions
# ---------------------------------------------------------------------------

def pcf_mat1(spec: ModelSpec, r) -> np.ndarray:
    """(1 - f(r))^2 exp(lam [f (*) f](r)); independent of p0."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    sl = spec.f.slice()
    conv = np.array([radial_self_convolution(sl, sl, spec.dim, ri)
                     for ri in r_arr])
    # extreme lam can overflow to inf; callers comparing contrasts
    # discard such branches
    with np.errstate(over="ignore", invalid="ignore"):
        g = (1.0 - sl(r_arr)) ** 2 * np.exp(spec.lam * conv)
    return g if np.ndim(r) else float(g[0])


def pcf_marked(spec: ModelSpec, r) -> np.ndarray:
    """Mark-averaged pair correlation of the marked mutual-deletion model.

    The p0 factors cancel against the intensity and are dropped
    analytically; the result does not depend on p0.
    """
    ker = _MarkedKernels(spec)
    q = np.exp(ker.log_q)
    denom = float(np.dot(ker.weights, q)) ** 2
    if denom == 0.0:
        raise DivergentModelError("pair correlation undefined: intensity is 0")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r_arr)
    W = ker.weights
    for idx, ri in enumerate(r_arr):
        fmat = ker.f_matrix(ri)
        qmn = np.exp(ker.log_qmn(ri))
        integrand = (1.0 - fmat) ** 2 * q[:, None] * q[None, :] * qmn
        out[idx] = float(W @ integrand @ W) / denom
    return out if np.ndim(r) else float(out[0])


def pcf_mat2(spec: ModelSpec, r, method: str = "auto") -> np.ndarray:
    """Pair correlation of the weighted (competition) model; p0-free.

    For a mark-independent weight distribution the double weight integral
    I_r(m, n) collapses to the closed form J(a,b,c) + J(b,a,c); otherwise
    it is evaluated by nested adaptive quadrature split at the w = t
    diagonal (no closed form exists for mark-dependent weight families).
    """
    ker = _MarkedKernels(spec)
    if method == "auto":
        method = "closed" if spec.nu.mark_independent else "direct"
    W = ker.weights
    a = ker.log_q
    if method == "closed":
        if not spec.nu.mark_independent:
            raise ValueError("closed path requires a mark-independent "
                             "weight distribution")
        denom = float(np.dot(W, _phi(a))) ** 2
    elif method == "direct":
        denom = _mean_weight_retention(spec, ker) ** 2
    else:
        raise ValueError(f"unknown method {method!r}")
    if denom == 0.0:
        raise DivergentModelError("pair correlation undefined: intensity is 0")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.empty_like(r_arr)
    for idx, ri in enumerate(r_arr):
        if ri <= 0:
            raise ValueError("pcf_mat2 requires r > 0")
        fmat = ker.f_matrix(ri)
        if method == "closed":
            c = ker.log_qmn(ri)
            I = competition_integral(a[:, None], a[None, :], c)
        else:
            I = _competition_integral_general(spec, ker, ri)
        out[idx] = float(W @ ((1.0 - fmat) * I) @ W) / denom
    return out if np.ndim(r) else float(out[0])


def _competition_integral_general(spec: ModelSpec, ker: _MarkedKernels,
                                  r: float) -> np.ndarray:
    """I_r(m_i, n_j) for mark-dependent weights, by nested quadrature."""
    conv = ker.conv_tensor(r)
    M = len(ker.nodes)
    lam = spec.lam
    nu = spec.nu
    marks = ker.nodes
    muw = ker.weights
    out = np.empty((M, M))
    for i in range(M):
        for j in range(i, M):

            def log_qw(w, mark_idx):
                F = np.array([float(nu.cdf(w, l)) for l in marks])
                return -lam * float(np.dot(muw, ker.space[mark_idx] * F))

            def log_qmn(w, t):
                F = np.array([float(nu.cdf(min(w, t), l)) for l in marks])
                return lam * float(np.dot(muw, conv[i, j] * F))

            def inner(w):
                def h(t):
                    return (float(nu.pdf(t, marks[j]))
                            * math.exp(log_qw(t, j) + log_qmn(w, t)))
                lo, hi = nu.support(marks[j])
                parts = sorted({lo, hi, min(max(w, lo), hi)})
                v = 0.0
                for p0_, p1_ in zip(parts[:-1], parts[1:]):
                    v += integrate.quad(h, p0_, p1_, limit=100,
                                        epsabs=1e-12, epsrel=1e-9)[0]
                return v

            def outer(w):
                return (float(nu.pdf(w, marks[i]))
                        * math.exp(log_qw(w, i)) * inner(w))

            lo, hi = nu.support(marks[i])
            val = integrate.quad(outer, lo, hi, limit=100,
                                 epsabs=1e-12, epsrel=1e-7)[0]
            out[i, j] = out[j, i] = val
    return out


def pcf(spec: ModelSpec, r, **kw) -> np.ndarray:
    """Analytic pair correlation of any model variant."""
    if spec.variant == "mat1":
        return pcf_mat1(spec, r)
    if spec.variant == "mat1-marked":
        return pcf_marked(spec, r)
    return pcf_mat2(spec, r, **kw)


# ---------------------------------------------------------------------------
# derived summary curves
# ---------------------------------------------------------------------------

def k_function(spec: ModelSpec, r_grid: np.ndarray, refine: int = 8) -> np.ndarray:
    """K(r) = int_0^r g(s) d b_d s^(d-1) ds on r_grid (cumulative trapezoid)."""
    r_grid = np.asarray(r_grid, dtype=float)
    fine = np.unique(np.concatenate([np.linspace(1e-9, r_grid[-1],
                                                 refine * len(r_grid)), r_grid]))
    g = np.atleast_1d(pcf(spec, fine))
    d = spec.dim
    integrand = g * d * ball_volume(d) * fine ** (d - 1)
    K_fine = integrate.cumulative_trapezoid(integrand, fine, initial=0.0)
    return np.interp(r_grid, fine, K_fine)


def l_function(spec: ModelSpec, r_grid: np.ndarray, refine: int = 8) -> np.ndarray:
    """L(r) = (K(r) / b_d)^(1/d); L(r) = r under complete spatial randomness."""
    K = k_function(spec, r_grid, refine)
    return (K / ball_volume(spec.dim)) ** (1.0 / spec.dim)


def retained_mark_density(spec: ModelSpec, mark_grid: np.ndarray) -> np.ndarray:
    """Density of the mark of a typical retained point of a mat2 model.

    Proportional to E_nu_m[q_m(w)] times the mark density, normalized on
    the grid by trapezoid.
    """
    if spec.variant != "mat2":
        raise ValueError("retained_mark_density requires a mat2 model")
    if spec.mu.is_discrete:
        raise ValueError("retained mark density needs a continuous mark "
                         "distribution")
    ker = _MarkedKernels(spec)
    mark_grid = np.asarray(mark_grid, dtype=float)
    dbd = spec.dim * ball_volume(spec.dim)
    # C(m, l_k) on the evaluation grid
    C = np.array([
        [dbd * tail_integral(spec.f, spec.dim, m, l) for l in ker.nodes]
        for m in mark_grid])
    if spec.nu.mark_independent:
        retention = _phi(-spec.lam * C @ ker.weights)
    else:
        retention = np.empty(len(mark_grid))
        for idx, m in enumerate(mark_grid):
            wn, ww = spec.nu.quadrature(m)
            F = np.stack([spec.nu.cdf(wn, l) for l in ker.nodes])
            log_q = -spec.lam * np.einsum("l,l,lw->w", ker.weights, C[idx], F)
            retention[idx] = float(np.dot(ww, np.exp(log_q)))
    dens = retention * spec.mu.pdf(mark_grid)
    norm = np.trapezoid(dens, mark_grid)
    return dens / norm
