"""Mark and weight distributions with deterministic quadrature representations.

Continuous mark distributions are represented for integration by
Gauss-Legendre nodes mapped to their (truncated) support; the node weights
carry the probability density and are normalized so that constants
integrate exactly to 1.  This makes every analytic mark integral a fixed,
testable finite sum.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import stats

__all__ = ["MarkDistribution", "WeightDistribution"]

_GAMMA_QUANTILE_CAP = 0.9999  # default truncation quantile, per-instance overridable
_QUAD_TRUNCATION = 1e-12      # quantile mass dropped for untruncated gamma quadrature


def _gauss_legendre(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


@dataclass(frozen=True)
class MarkDistribution:
    """Distribution of real-valued marks.

    kind: "point-mass", "uniform", "gamma", "truncated-gamma" or
    "finite-discrete".  The gamma family is parameterized by (shape, scale);
    a rate quoted in length units is read as the scale parameter.  The
    truncated gamma renormalizes the density on [0, cap]; when no cap is
    given the 0.9999 quantile is used.
    """

    kind: str
    value: Optional[float] = None          # point-mass
    a: Optional[float] = None              # uniform lower
    b: Optional[float] = None              # uniform upper
    shape: Optional[float] = None          # gamma shape alpha
    scale: Optional[float] = None          # gamma scale beta
    cap: Optional[float] = None            # truncated-gamma cap
    values: Optional[tuple] = None         # finite-discrete atoms
    probs: Optional[tuple] = None          # finite-discrete probabilities
    quadrature_nodes: int = 64

    def __post_init__(self):
        if self.kind == "point-mass":
            if self.value is None:
                raise ValueError("point-mass needs value")
        elif self.kind == "uniform":
            if self.a is None or self.b is None or not self.b > self.a:
                raise ValueError("uniform needs a < b")
        elif self.kind in ("gamma", "truncated-gamma"):
            if not (self.shape and self.shape > 0 and self.scale and self.scale > 0):
                raise ValueError("gamma needs shape > 0 and scale > 0")
            if self.kind == "truncated-gamma":
                cap = self.cap
                if cap is None:
                    cap = float(stats.gamma.ppf(_GAMMA_QUANTILE_CAP, self.shape,
                                                scale=self.scale))
                    object.__setattr__(self, "cap", cap)
                if cap <= 0:
                    raise ValueError("truncated-gamma cap must be > 0")
        elif self.kind == "finite-discrete":
            if self.values is None or self.probs is None:
                raise ValueError("finite-discrete needs values and probs")
            v = tuple(float(x) for x in self.values)
            p = tuple(float(x) for x in self.probs)
            if len(v) != len(p) or not v:
                raise ValueError("values and probs must have equal positive length")
            if abs(sum(p) - 1.0) > 1e-12 or min(p) < 0:
                raise ValueError("probabilities must be nonnegative and sum to 1")
            object.__setattr__(self, "values", v)
            object.__setattr__(self, "probs", p)
        else:
            raise ValueError(f"unknown mark distribution kind {self.kind!r}")
        if self.quadrature_nodes < 8 and self.kind in ("uniform", "gamma",
                                                       "truncated-gamma"):
            raise ValueError("quadrature_nodes must be >= 8 for continuous kinds")

    # -- constructors ------------------------------------------------------

    @classmethod
    def point_mass(cls, value: float) -> "MarkDistribution":
        return cls("point-mass", value=value)

    @classmethod
    def uniform(cls, a: float, b: float, quadrature_nodes: int = 64):
        return cls("uniform", a=a, b=b, quadrature_nodes=quadrature_nodes)

    @classmethod
    def gamma(cls, shape: float, scale: float, quadrature_nodes: int = 64):
        return cls("gamma", shape=shape, scale=scale,
                   quadrature_nodes=quadrature_nodes)

    @classmethod
    def truncated_gamma(cls, shape: float, scale: float, cap: float = None,
                        quadrature_nodes: int = 64):
        return cls("truncated-gamma", shape=shape, scale=scale, cap=cap,
                   quadrature_nodes=quadrature_nodes)

    @classmethod
    def finite_discrete(cls, values, probs) -> "MarkDistribution":
        return cls("finite-discrete", values=tuple(values), probs=tuple(probs))

    # -- properties --------------------------------------------------------

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("point-mass", "finite-discrete")

    def support(self) -> tuple:
        """(lo, hi) with hi finite: the range used for quadrature and halos."""
        if self.kind == "point-mass":
            return (self.value, self.value)
        if self.kind == "uniform":
            return (self.a, self.b)
        if self.kind == "finite-discrete":
            return (min(self.values), max(self.values))
        if self.kind == "truncated-gamma":
            return (0.0, self.cap)
        hi = float(stats.gamma.ppf(1.0 - _QUAD_TRUNCATION, self.shape,
                                   scale=self.scale))
        return (0.0, hi)

    def mean(self) -> float:
        nodes, weights = self.quadrature()
        return float(np.dot(weights, nodes))

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "point-mass":
            return (x >= self.value).astype(float)
        if self.kind == "uniform":
            return np.clip((x - self.a) / (self.b - self.a), 0.0, 1.0)
        if self.kind == "finite-discrete":
            out = np.zeros_like(x, dtype=float)
            for v, p in zip(self.values, self.probs):
                out += p * (x >= v)
            return out
        cdf = stats.gamma.cdf(x, self.shape, scale=self.scale)
        if self.kind == "truncated-gamma":
            total = stats.gamma.cdf(self.cap, self.shape, scale=self.scale)
            cdf = np.where(x >= self.cap, 1.0, cdf / total)
        return cdf

    def pdf(self, x) -> np.ndarray:
        if self.is_discrete:
            raise ValueError("pdf undefined for discrete mark distributions")
        x = np.asarray(x, dtype=float)
        if self.kind == "uniform":
            inside = (x >= self.a) & (x <= self.b)
            return inside / (self.b - self.a)
        pdf = stats.gamma.pdf(x, self.shape, scale=self.scale)
        if self.kind == "truncated-gamma":
            total = stats.gamma.cdf(self.cap, self.shape, scale=self.scale)
            pdf = np.where(x > self.cap, 0.0, pdf / total)
        return pdf

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "point-mass":
            return np.full_like(u, self.value)
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * u
        if self.kind == "finite-discrete":
            order = np.argsort(self.values)
            vals = np.asarray(self.values)[order]
            cum = np.cumsum(np.asarray(self.probs)[order])
            idx = np.searchsorted(cum, u, side="left")
            return vals[np.clip(idx, 0, len(vals) - 1)]
        if self.kind == "truncated-gamma":
            total = stats.gamma.cdf(self.cap, self.shape, scale=self.scale)
            return stats.gamma.ppf(u * total, self.shape, scale=self.scale)
        return stats.gamma.ppf(u, self.shape, scale=self.scale)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.ppf(rng.random(size))

    @cached_property
    def _quadrature(self):
        if self.kind == "point-mass":
            return np.array([self.value]), np.array([1.0])
        if self.kind == "finite-discrete":
            return np.asarray(self.values, dtype=float), np.asarray(self.probs)
        lo, hi = self.support()
        nodes, glw = _gauss_legendre(lo, hi, self.quadrature_nodes)
        weights = glw * self.pdf(nodes)
        weights /= weights.sum()  # constants integrate exactly to 1
        return nodes, weights

    def quadrature(self):
        """(nodes, weights) such that sum w_i h(x_i) ~ E[h(mark)]."""
        nodes, weights = self._quadrature
        return nodes.copy(), weights.copy()


@dataclass(frozen=True)
class WeightDistribution:
    """Continuous weight ("time of appearance") distribution family.

    Either mark-independent (a single continuous distribution) or a
    mark-indexed family given by ``per_mark``, a callable returning the
    continuous distribution for a given mark.  Distributions must expose
    cdf/pdf/ppf (any frozen scipy.stats continuous distribution works);
    the default is Uniform[0, 1].  Atoms are rejected: the competition
    rule relies on weight ties having probability zero.
    """

    dist: object = field(default_factory=lambda: stats.uniform(0.0, 1.0))
    per_mark: Optional[Callable[[float], object]] = None
    quadrature_nodes: int = 64

    def __post_init__(self):
        probe = self._dist_for(1.0)
        for attr in ("cdf", "pdf", "ppf"):
            if not callable(getattr(probe, attr, None)):
                raise ValueError("weight distribution must expose cdf/pdf/ppf "
                                 "(continuous distributions only)")

    @classmethod
    def uniform(cls, a: float = 0.0, b: float = 1.0) -> "WeightDistribution":
        if not b > a:
            raise ValueError("uniform needs a < b")
        return cls(dist=stats.uniform(a, b - a))

    @classmethod
    def mark_indexed(cls, family: Callable[[float], object]) -> "WeightDistribution":
        return cls(dist=None, per_mark=family)

    @property
    def mark_independent(self) -> bool:
        return self.per_mark is None

    def _dist_for(self, mark: float):
        return self.dist if self.per_mark is None else self.per_mark(mark)

    def cdf(self, w, mark: float = 0.0) -> np.ndarray:
        return np.asarray(self._dist_for(mark).cdf(w), dtype=float)

    def pdf(self, w, mark: float = 0.0) -> np.ndarray:
        return np.asarray(self._dist_for(mark).pdf(w), dtype=float)

    def support(self, mark: float = 0.0) -> tuple:
        d = self._dist_for(mark)
        return (float(d.ppf(1e-12)), float(d.ppf(1.0 - 1e-12)))

    def sample(self, rng: np.random.Generator, marks: np.ndarray) -> np.ndarray:
        u = rng.random(len(marks))
        if self.per_mark is None:
            return np.asarray(self.dist.ppf(u), dtype=float)
        return np.array([self.per_mark(m).ppf(ui) for m, ui in zip(marks, u)])

    def quadrature(self, mark: float = 0.0):
        """(nodes, weights) for integrals against nu_mark, weights summing to 1."""
        lo, hi = self.support(mark)
        nodes, glw = _gauss_legendre(lo, hi, self.quadrature_nodes)
        weights = glw * self.pdf(nodes, mark)
        weights /= weights.sum()
        return nodes, weights
