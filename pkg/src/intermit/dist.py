"""Probability distributions over the reals and the algebra the analyzer needs.

Every random quantity in the engine (instruction timings, capacitor energy,
harvest times, symbolic program inputs) is a :class:`Dist`.  Values are
immutable; all operations return new objects.

Closed forms are used where they exist (``Normal + Normal``,
``Uniform + Normal``, constant shifts, finite discrete sums, mixtures
distributing over convolution).  Everything else is approximated on a
uniform histogram grid (:class:`Grid`): each cell carries its probability mass
spread evenly over the cell, so the CDF of a grid is piecewise linear.

``Normal(mean, std)`` takes the *standard deviation* as its second parameter.
"""
from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import special, stats
from scipy.signal import fftconvolve

from .errors import (
    DistError,
    EmptyMixture,
    GridOverflow,
    InvalidProbability,
    WeightSumOutOfTolerance,
)

__all__ = [
    "Dist", "Constant", "Normal", "Uniform", "Binomial", "Empirical", "Grid",
    "Mixture", "UniformNormal", "Truncated", "WeightedDist", "GridOptions",
    "grid_options", "get_grid_options", "affine", "negate", "convolve",
    "convolve_all", "mixture", "cdf", "quantile", "prob_and_condition",
    "restrict", "scaled_count", "to_grid", "kolmogorov_distance", "to_json",
    "from_json", "ZERO",
]


@dataclass(frozen=True)
class GridOptions:
    max_len: int = 4096
    clip_sigmas: float = 8.0
    max_components: int = 512
    closed_forms: bool = True
    max_step: float | None = None


_OPTIONS: contextvars.ContextVar[GridOptions] = contextvars.ContextVar(
    "intermit_grid_options", default=GridOptions()
)


def get_grid_options() -> GridOptions:
    return _OPTIONS.get()


@contextlib.contextmanager
def grid_options(**overrides):
    """Temporarily override numerical settings for the current context.

    >>> with grid_options(closed_forms=False):
    ...     d = convolve(Normal(0, 1), Normal(0, 1))
    >>> isinstance(d, Grid)
    True
    """
    token = _OPTIONS.set(replace(_OPTIONS.get(), **overrides))
    try:
        yield _OPTIONS.get()
    finally:
        _OPTIONS.reset(token)


def _as_array(x):
    return np.asarray(x, dtype=float)


def _scalarize(x, out):
    if np.ndim(x) == 0:
        return float(out)
    return out


class Dist:
    """Common interface of every distribution variant."""

    discrete = False

    def mean(self) -> float:
        raise NotImplementedError

    def var(self) -> float:
        raise NotImplementedError

    def std(self) -> float:
        return math.sqrt(max(self.var(), 0.0))

    def cdf(self, x):
        """P(X <= x), vectorized over ``x``."""
        raise NotImplementedError

    def cdf_left(self, x):
        """P(X < x); equals :meth:`cdf` for continuous variants."""
        return self.cdf(x)

    def quantile(self, p):
        """Smallest x with ``cdf(x) >= p``."""
        _check_prob(p)
        lo, hi = self.span()
        return _bisect_quantile(self.cdf, p, lo, hi)

    def sample(self, rng: np.random.Generator, size=None):
        raise NotImplementedError

    def span(self) -> tuple[float, float]:
        """Finite interval holding all but a negligible tail of the mass."""
        raise NotImplementedError

    def _affine(self, scale: float, offset: float) -> "Dist":
        raise NotImplementedError

    def _restrict(self, lo, hi, lo_closed, hi_closed):
        p = _interval_mass(self, lo, hi, lo_closed, hi_closed)
        if p <= 0.0:
            return 0.0, None
        return p, Truncated(self, lo, hi)

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        raise DistError(f"{type(self).__name__} has no atoms")

    def __add__(self, other):
        if isinstance(other, Dist):
            return convolve(self, other)
        return affine(self, 1.0, float(other))

    __radd__ = __add__

    def __neg__(self):
        return negate(self)

    def __sub__(self, other):
        if isinstance(other, Dist):
            return convolve(self, negate(other))
        return affine(self, 1.0, -float(other))

    def __mul__(self, k):
        return affine(self, float(k), 0.0)

    __rmul__ = __mul__


def _check_prob(p):
    arr = _as_array(p)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise InvalidProbability(f"quantile level must lie in (0, 1), got {p!r}")


def _bisect_quantile(cdf_fn, p, lo, hi, iters=200):
    p_arr = _as_array(p)
    width = max(hi - lo, 1e-12 * max(1.0, abs(lo), abs(hi)))
    a = np.full(p_arr.shape, lo - width)
    b = np.full(p_arr.shape, hi + width)
    for _ in range(iters):
        m = 0.5 * (a + b)
        if np.all((m == a) | (m == b)):
            break
        ok = _as_array(cdf_fn(m)) >= p_arr
        b = np.where(ok, m, b)
        a = np.where(ok, a, m)
    return _scalarize(p, b)


def _right_inverse(cdf_fn, q, p):
    """Nudge ``q`` upwards until ``cdf(q) >= p`` (guards floating round-off)."""
    q = float(q)
    step = max(abs(q), 1e-300) * 2.0 ** -52
    for _ in range(200):
        if float(cdf_fn(q)) >= p:
            return q
        q += step
        step *= 2.0
    return q


def _interval_mass(d, lo, hi, lo_closed, hi_closed):
    upper = d.cdf(hi) if hi_closed else d.cdf_left(hi)
    lower = d.cdf_left(lo) if lo_closed else d.cdf(lo)
    return float(min(max(upper - lower, 0.0), 1.0))


# ---------------------------------------------------------------------------
# closed-form variants


@dataclass(frozen=True)
class Constant(Dist):
    value: float
    discrete = True

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))

    def mean(self):
        return self.value

    def var(self):
        return 0.0

    def cdf(self, x):
        x_arr = _as_array(x)
        return _scalarize(x, (x_arr >= self.value).astype(float))

    def cdf_left(self, x):
        x_arr = _as_array(x)
        return _scalarize(x, (x_arr > self.value).astype(float))

    def quantile(self, p):
        _check_prob(p)
        return _scalarize(p, np.full(np.shape(p), self.value))

    def sample(self, rng, size=None):
        if size is None:
            return self.value
        return np.full(size, self.value)

    def span(self):
        return self.value, self.value

    def atoms(self):
        return np.array([self.value]), np.array([1.0])

    def _affine(self, scale, offset):
        return Constant(scale * self.value + offset)

    def _restrict(self, lo, hi, lo_closed, hi_closed):
        return _restrict_atoms(self, lo, hi, lo_closed, hi_closed)


ZERO = Constant(0.0)


@dataclass(frozen=True)
class Normal(Dist):
    mean_: float
    std_: float

    def __init__(self, mean, std):
        if not std >= 0:
            raise DistError(f"Normal std must be >= 0, got {std}")
        object.__setattr__(self, "mean_", float(mean))
        object.__setattr__(self, "std_", float(std))

    def __repr__(self):
        return f"Normal({self.mean_!r}, {self.std_!r})"

    def mean(self):
        return self.mean_

    def var(self):
        return self.std_ ** 2

    def cdf(self, x):
        x_arr = _as_array(x)
        if self.std_ == 0:
            out = (x_arr >= self.mean_).astype(float)
        else:
            out = special.ndtr((x_arr - self.mean_) / self.std_)
        return _scalarize(x, out)

    def quantile(self, p):
        _check_prob(p)
        q = self.mean_ + self.std_ * special.ndtri(_as_array(p))
        if np.ndim(p) == 0:
            return _right_inverse(self.cdf, q, float(p))
        return q

    def sample(self, rng, size=None):
        return rng.normal(self.mean_, self.std_, size)

    def span(self):
        k = get_grid_options().clip_sigmas
        return self.mean_ - k * self.std_, self.mean_ + k * self.std_

    def _affine(self, scale, offset):
        if scale == 0:
            return Constant(offset)
        return Normal(scale * self.mean_ + offset, abs(scale) * self.std_)


@dataclass(frozen=True)
class Uniform(Dist):
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise DistError(f"Uniform requires lo <= hi, got ({self.lo}, {self.hi})")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def var(self):
        return (self.hi - self.lo) ** 2 / 12.0

    def cdf(self, x):
        x_arr = _as_array(x)
        if self.hi == self.lo:
            out = (x_arr >= self.lo).astype(float)
        else:
            out = np.clip((x_arr - self.lo) / (self.hi - self.lo), 0.0, 1.0)
        return _scalarize(x, out)

    def quantile(self, p):
        _check_prob(p)
        q = self.lo + _as_array(p) * (self.hi - self.lo)
        if np.ndim(p) == 0:
            return _right_inverse(self.cdf, q, float(p))
        return q

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def span(self):
        return self.lo, self.hi

    def _affine(self, scale, offset):
        if scale == 0:
            return Constant(offset)
        a, b = scale * self.lo + offset, scale * self.hi + offset
        return Uniform(min(a, b), max(a, b))

    def _restrict(self, lo, hi, lo_closed, hi_closed):
        if self.hi == self.lo:
            return _restrict_atoms(Constant(self.lo), lo, hi, lo_closed, hi_closed)
        a, b = max(self.lo, lo), min(self.hi, hi)
        if b <= a:
            return 0.0, None
        return (b - a) / (self.hi - self.lo), Uniform(a, b)


@dataclass(frozen=True)
class UniformNormal(Dist):
    """Sum of independent ``Uniform(lo, hi)`` and ``Normal(mean, std)``.

    Appears whenever normally distributed costs are subtracted from a
    uniformly distributed capacitor level; its CDF is exact.
    """

    lo: float
    hi: float
    mean_: float
    std_: float

    def __post_init__(self):
        if not (self.lo <= self.hi and self.std_ >= 0):
            raise DistError("invalid UniformNormal parameters")

    def _parts(self):
        return Uniform(self.lo, self.hi), Normal(self.mean_, self.std_)

    def mean(self):
        return 0.5 * (self.lo + self.hi) + self.mean_

    def var(self):
        return (self.hi - self.lo) ** 2 / 12.0 + self.std_ ** 2

    def cdf(self, x):
        x_arr = _as_array(x)
        w = self.hi - self.lo
        s = self.std_
        if w == 0:
            return Normal(self.lo + self.mean_, s).cdf(x)
        if s == 0:
            return Uniform(self.lo + self.mean_, self.hi + self.mean_).cdf(x)

        def g(z):
            # antiderivative of the normal cdf in z
            t = z / s
            return z * special.ndtr(t) + s * np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)

        z1 = x_arr - self.mean_ - self.lo
        z2 = x_arr - self.mean_ - self.hi
        out = np.clip((g(z1) - g(z2)) / w, 0.0, 1.0)
        return _scalarize(x, out)

    def quantile(self, p):
        _check_prob(p)
        lo, hi = self.span()
        q = _bisect_quantile(self.cdf, p, lo, hi)
        return q

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size) + rng.normal(self.mean_, self.std_, size)

    def span(self):
        k = get_grid_options().clip_sigmas
        return self.lo + self.mean_ - k * self.std_, self.hi + self.mean_ + k * self.std_

    def _affine(self, scale, offset):
        if scale == 0:
            return Constant(offset)
        u = Uniform(self.lo, self.hi)._affine(scale, offset)
        n = Normal(self.mean_, self.std_)._affine(scale, 0.0)
        if isinstance(u, Constant):
            return affine(n, 1.0, u.value)
        if isinstance(n, Constant):
            return affine(u, 1.0, n.value)
        return UniformNormal(u.lo, u.hi, n.mean_, n.std_)


@dataclass(frozen=True)
class Binomial(Dist):
    n: int
    p: float
    discrete = True

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise DistError(f"Binomial n must be a nonnegative integer, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise DistError(f"Binomial p must lie in [0, 1], got {self.p}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))

    def mean(self):
        return self.n * self.p

    def var(self):
        return self.n * self.p * (1.0 - self.p)

    def cdf(self, x):
        x_arr = _as_array(x)
        return _scalarize(x, stats.binom.cdf(np.floor(x_arr), self.n, self.p))

    def cdf_left(self, x):
        x_arr = _as_array(x)
        return _scalarize(x, stats.binom.cdf(np.ceil(x_arr) - 1, self.n, self.p))

    def quantile(self, p):
        _check_prob(p)
        q = stats.binom.ppf(_as_array(p), self.n, self.p)
        if np.ndim(p) == 0:
            return _right_inverse(self.cdf, q, float(p))
        return q

    def sample(self, rng, size=None):
        out = rng.binomial(self.n, self.p, size)
        return out.astype(float) if size is not None else float(out)

    def span(self):
        return 0.0, float(self.n)

    def atoms(self):
        k = np.arange(self.n + 1, dtype=float)
        pmf = stats.binom.pmf(k, self.n, self.p)
        keep = pmf > 0
        return k[keep], pmf[keep] / pmf[keep].sum()

    def _affine(self, scale, offset):
        v, m = self.atoms()
        return Empirical(scale * v + offset, m)

    def _restrict(self, lo, hi, lo_closed, hi_closed):
        return _restrict_atoms(self, lo, hi, lo_closed, hi_closed)


class Empirical(Dist):
    """Finite discrete distribution given as (value, mass) points."""

    discrete = True
    __slots__ = ("values", "masses")

    def __init__(self, values, masses=None):
        if masses is None:
            pts = list(values)
            values = [float(v) for v, _ in pts]
            masses = [float(m) for _, m in pts]
        v = _as_array(values).ravel()
        m = _as_array(masses).ravel()
        if v.shape != m.shape or v.size == 0:
            raise DistError("Empirical needs equally many values and masses (at least one)")
        if np.any(m < 0) or not np.all(np.isfinite(v)):
            raise DistError("Empirical masses must be nonnegative and values finite")
        order = np.argsort(v, kind="stable")
        v, m = v[order], m[order]
        uniq, inv = np.unique(v, return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inv, m)
        keep = merged > 0
        total = merged[keep].sum()
        if total <= 0:
            raise DistError("Empirical distribution has zero total mass")
        vals, ms = uniq[keep], merged[keep] / total
        vals.flags.writeable = False
        ms.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "masses", ms)

    def __setattr__(self, name, value):
        raise AttributeError("Empirical is immutable")

    def __repr__(self):
        inner = ", ".join(f"{v:g}: {m:.6g}" for v, m in zip(self.values[:8], self.masses[:8]))
        more = ", ..." if self.values.size > 8 else ""
        return f"Empirical({{{inner}{more}}})"

    def __eq__(self, other):
        return (isinstance(other, Empirical) and np.array_equal(self.values, other.values)
                and np.array_equal(self.masses, other.masses))

    def __hash__(self):
        return hash(("Empirical", self.values.tobytes(), self.masses.tobytes()))

    @property
    def points(self):
        return list(zip(self.values.tolist(), self.masses.tolist()))

    def mean(self):
        return float(np.dot(self.values, self.masses))

    def var(self):
        mu = self.mean()
        return float(np.dot((self.values - mu) ** 2, self.masses))

    def cdf(self, x):
        x_arr = _as_array(x)
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        idx = np.searchsorted(self.values, x_arr, side="right")
        return _scalarize(x, np.minimum(cum[idx], 1.0))

    def cdf_left(self, x):
        x_arr = _as_array(x)
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        idx = np.searchsorted(self.values, x_arr, side="left")
        return _scalarize(x, np.minimum(cum[idx], 1.0))

    def quantile(self, p):
        _check_prob(p)
        cum = np.cumsum(self.masses)
        idx = np.searchsorted(cum, _as_array(p) - 1e-12, side="left")
        idx = np.minimum(idx, self.values.size - 1)
        q = self.values[idx]
        if np.ndim(p) == 0:
            return _right_inverse(self.cdf, q, float(p))
        return q

    def sample(self, rng, size=None):
        return rng.choice(self.values, size=size, p=self.masses)

    def span(self):
        return float(self.values[0]), float(self.values[-1])

    def atoms(self):
        return self.values, self.masses

    def _affine(self, scale, offset):
        return Empirical(scale * self.values + offset, self.masses)

    def _restrict(self, lo, hi, lo_closed, hi_closed):
        return _restrict_atoms(self, lo, hi, lo_closed, hi_closed)


def _restrict_atoms(d, lo, hi, lo_closed, hi_closed):
    v, m = d.atoms()
    above = (v > lo) | (lo_closed & (v == lo))
    below = (v < hi) | (hi_closed & (v == hi))
    keep = above & below
    p = float(m[keep].sum())
    if p <= 0.0:
        return 0.0, None
    if keep.all():
        return 1.0, d
    return min(p, 1.0), _simplify_discrete(Empirical(v[keep], m[keep]))


def _simplify_discrete(d):
    if isinstance(d, Empirical) and d.values.size == 1:
        return Constant(d.values[0])
    return d


# ---------------------------------------------------------------------------
# numerical carrier


class Grid(Dist):
    """Histogram on a uniform grid.

    Cell ``i`` is centred on ``origin + i * step`` and spreads its mass evenly
    over ``[centre - step/2, centre + step/2]``.
    """

    __slots__ = ("origin", "step", "masses")

    def __init__(self, origin, step, masses):
        m = _as_array(masses).ravel().copy()
        if not step > 0:
            raise DistError(f"Grid step must be > 0, got {step}")
        if m.size == 0:
            raise DistError("Grid needs at least one cell")
        if np.any(m < -1e-12):
            raise DistError("Grid masses must be nonnegative")
        m = np.clip(m, 0.0, None)
        total = m.sum()
        if total <= 0:
            raise DistError("Grid has zero total mass")
        m /= total
        nz = np.flatnonzero(m)
        first, last = nz[0], nz[-1]
        m = m[first:last + 1]
        m.flags.writeable = False
        object.__setattr__(self, "origin", float(origin) + first * float(step))
        object.__setattr__(self, "step", float(step))
        object.__setattr__(self, "masses", m)

    def __setattr__(self, name, value):
        raise AttributeError("Grid is immutable")

    def __repr__(self):
        return f"Grid(origin={self.origin:g}, step={self.step:g}, cells={self.masses.size})"

    def __eq__(self, other):
        return (isinstance(other, Grid) and self.origin == other.origin
                and self.step == other.step and np.array_equal(self.masses, other.masses))

    def __hash__(self):
        return hash(("Grid", self.origin, self.step, self.masses.tobytes()))

    @property
    def centers(self):
        return self.origin + self.step * np.arange(self.masses.size)

    @property
    def edges(self):
        return self.origin - 0.5 * self.step + self.step * np.arange(self.masses.size + 1)

    def mean(self):
        return float(np.dot(self.centers, self.masses))

    def var(self):
        c = self.centers
        mu = float(np.dot(c, self.masses))
        return float(np.dot((c - mu) ** 2, self.masses)) + self.step ** 2 / 12.0

    def _cum(self):
        return np.concatenate([[0.0], np.cumsum(self.masses)])

    def cdf(self, x):
        x_arr = _as_array(x)
        out = np.interp(x_arr, self.edges, self._cum(), left=0.0, right=1.0)
        return _scalarize(x, np.clip(out, 0.0, 1.0))

    def quantile(self, p):
        _check_prob(p)
        cum = self._cum()
        p_arr = _as_array(p)
        idx = np.clip(np.searchsorted(cum, p_arr, side="left"), 1, self.masses.size)
        lo_cum = cum[idx - 1]
        cell = self.masses[idx - 1]
        frac = np.where(cell > 0, (p_arr - lo_cum) / np.where(cell > 0, cell, 1.0), 0.0)
        q = self.edges[idx - 1] + np.clip(frac, 0.0, 1.0) * self.step
        if np.ndim(p) == 0:
            return _right_inverse(self.cdf, float(q), float(p))
        return q

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        cells = rng.choice(self.masses.size, size=n, p=self.masses)
        out = self.origin + self.step * (cells + rng.uniform(-0.5, 0.5, n))
        return float(out[0]) if size is None else out

    def span(self):
        e = self.edges
        return float(e[0]), float(e[-1])

    def _affine(self, scale, offset):
        if scale == 0:
            return Constant(offset)
        if scale > 0:
            return Grid(scale * self.origin + offset, scale * self.step, self.masses)
        last = self.origin + self.step * (self.masses.size - 1)
        return Grid(scale * last + offset, -scale * self.step, self.masses[::-1])

    def _restrict(self, lo, hi, lo_closed, hi_closed):
        e = self.edges
        overlap = np.clip(np.minimum(e[1:], hi) - np.maximum(e[:-1], lo), 0.0, None) / self.step
        m = self.masses * np.clip(overlap, 0.0, 1.0)
        p = float(m.sum())
        if p <= 1e-300:
            return 0.0, None
        return min(p, 1.0), Grid(self.origin, self.step, m)


# ---------------------------------------------------------------------------
# composite variants


@dataclass(frozen=True)
class WeightedDist:
    weight: float
    dist: Dist

    def __post_init__(self):
        if not 0.0 <= self.weight <= 1.0 + 1e-12:
            raise DistError(f"weight must lie in [0, 1], got {self.weight}")


class Mixture(Dist):
    """Finite mixture, kept as a component list; build through :func:`mixture`."""

    __slots__ = ("weights", "components")

    def __init__(self, weights, components):
        w = _as_array(weights).ravel()
        w = w / w.sum()
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", tuple(components))

    def __setattr__(self, name, value):
        raise AttributeError("Mixture is immutable")

    def __repr__(self):
        inner = ", ".join(f"{w:.4g}*{d!r}" for w, d in zip(self.weights[:4], self.components[:4]))
        more = ", ..." if len(self.components) > 4 else ""
        return f"Mixture([{inner}{more}])"

    def __eq__(self, other):
        return (isinstance(other, Mixture) and np.array_equal(self.weights, other.weights)
                and self.components == other.components)

    def __hash__(self):
        return hash(("Mixture", self.weights.tobytes(), self.components))

    def __iter__(self):
        return (WeightedDist(float(w), d) for w, d in zip(self.weights, self.components))

    def __len__(self):
        return len(self.components)

    def mean(self):
        return float(sum(w * d.mean() for w, d in zip(self.weights, self.components)))

    def var(self):
        mu = self.mean()
        second = sum(w * (d.var() + d.mean() ** 2) for w, d in zip(self.weights, self.components))
        return float(max(second - mu * mu, 0.0))

    def cdf(self, x):
        x_arr = _as_array(x)
        out = np.zeros(x_arr.shape)
        for w, d in zip(self.weights, self.components):
            out = out + w * _as_array(d.cdf(x_arr))
        return _scalarize(x, np.clip(out, 0.0, 1.0))

    def cdf_left(self, x):
        x_arr = _as_array(x)
        out = np.zeros(x_arr.shape)
        for w, d in zip(self.weights, self.components):
            out = out + w * _as_array(d.cdf_left(x_arr))
        return _scalarize(x, np.clip(out, 0.0, 1.0))

    def quantile(self, p):
        _check_prob(p)
        lo, hi = self.span()
        q = _bisect_quantile(self.cdf, p, lo, hi)
        return q

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        idx = rng.choice(len(self.components), size=n, p=self.weights)
        out = np.empty(n)
        for k, d in enumerate(self.components):
            sel = idx == k
            cnt = int(sel.sum())
            if cnt:
                out[sel] = d.sample(rng, cnt)
        return float(out[0]) if size is None else out

    def span(self):
        spans = [d.span() for d in self.components]
        return min(s[0] for s in spans), max(s[1] for s in spans)

    def _affine(self, scale, offset):
        return _mixture_from(self.weights, [affine(d, scale, offset) for d in self.components])

    def _restrict(self, lo, hi, lo_closed, hi_closed):
        ws, ds = [], []
        for w, d in zip(self.weights, self.components):
            p, dd = d._restrict(lo, hi, lo_closed, hi_closed)
            if dd is not None and p > 0:
                ws.append(w * p)
                ds.append(dd)
        total = float(sum(ws))
        if total <= 0:
            return 0.0, None
        return min(total, 1.0), _mixture_from(ws, ds)


class Truncated(Dist):
    """A continuous distribution conditioned on ``lo < X <= hi``."""

    __slots__ = ("base", "lo", "hi", "_flo", "_fhi")

    def __init__(self, base: Dist, lo: float, hi: float):
        if isinstance(base, Truncated):
            lo, hi = max(lo, base.lo), min(hi, base.hi)
            base = base.base
        flo = float(base.cdf(lo)) if np.isfinite(lo) else 0.0
        fhi = float(base.cdf(hi)) if np.isfinite(hi) else 1.0
        if fhi - flo <= 0:
            raise DistError("truncation interval carries no mass")
        for k, v in (("base", base), ("lo", float(lo)), ("hi", float(hi)), ("_flo", flo), ("_fhi", fhi)):
            object.__setattr__(self, k, v)

    def __setattr__(self, name, value):
        raise AttributeError("Truncated is immutable")

    def __repr__(self):
        return f"Truncated({self.base!r}, {self.lo:g}, {self.hi:g})"

    def __eq__(self, other):
        return (isinstance(other, Truncated) and self.base == other.base
                and self.lo == other.lo and self.hi == other.hi)

    def __hash__(self):
        return hash(("Truncated", self.base, self.lo, self.hi))

    def _moments(self):
        if isinstance(self.base, Normal) and self.base.std_ > 0:
            m, s = self.base.mean_, self.base.std_
            a, b = (self.lo - m) / s, (self.hi - m) / s
            mu, v = stats.truncnorm.stats(a, b, loc=m, scale=s, moments="mv")
            return float(mu), float(v)
        g = to_grid(self, get_grid_options().max_len)
        return g.mean(), g.var()

    def mean(self):
        return self._moments()[0]

    def var(self):
        return self._moments()[1]

    def cdf(self, x):
        x_arr = _as_array(x)
        z = self._fhi - self._flo
        inner = _as_array(self.base.cdf(np.clip(x_arr, self.lo, self.hi)))
        out = np.clip((inner - self._flo) / z, 0.0, 1.0)
        out = np.where(x_arr < self.lo, 0.0, np.where(x_arr >= self.hi, 1.0, out))
        return _scalarize(x, out)

    def quantile(self, p):
        _check_prob(p)
        lo, hi = self.span()
        return _bisect_quantile(self.cdf, p, lo, hi)

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        u = rng.uniform(self._flo, self._fhi, n)
        u = np.clip(u, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
        if isinstance(self.base, Normal):
            out = self.base.mean_ + self.base.std_ * special.ndtri(u)
        else:
            blo, bhi = self.base.span()
            out = _bisect_quantile(self.base.cdf, u, blo, bhi)
        out = np.clip(out, self.lo, self.hi)
        return float(out[0]) if size is None else out

    def span(self):
        blo, bhi = self.base.span()
        lo, hi = max(blo, self.lo), min(bhi, self.hi)
        if hi < lo:
            lo = hi = min(max(blo, self.lo), self.hi)
        return lo, hi

    def _affine(self, scale, offset):
        if scale == 0:
            return Constant(offset)
        a, b = scale * self.lo + offset, scale * self.hi + offset
        return Truncated(affine(self.base, scale, offset), min(a, b), max(a, b))

    def _restrict(self, lo, hi, lo_closed, hi_closed):
        nlo, nhi = max(lo, self.lo), min(hi, self.hi)
        if nhi <= nlo:
            return 0.0, None
        p = _interval_mass(self, nlo, nhi, lo_closed, hi_closed)
        if p <= 0:
            return 0.0, None
        return p, Truncated(self.base, nlo, nhi)


# ---------------------------------------------------------------------------
# operations


def affine(d: Dist, scale: float, offset: float) -> Dist:
    """Distribution of ``scale * X + offset``."""
    return d._affine(float(scale), float(offset))


def negate(d: Dist) -> Dist:
    return affine(d, -1.0, 0.0)


_SHIFTABLE = (Normal, Uniform, UniformNormal)


def _closed_sum(a: Dist, b: Dist):
    if isinstance(a, Normal) and isinstance(b, Normal):
        return Normal(a.mean_ + b.mean_, math.hypot(a.std_, b.std_))
    if isinstance(b, Uniform) and isinstance(a, (Normal, UniformNormal)):
        a, b = b, a
    if isinstance(a, Uniform) and isinstance(b, Normal):
        return UniformNormal(a.lo, a.hi, b.mean_, b.std_)
    if isinstance(b, UniformNormal) and isinstance(a, Normal):
        a, b = b, a
    if isinstance(a, UniformNormal) and isinstance(b, Normal):
        return UniformNormal(a.lo, a.hi, a.mean_ + b.mean_, math.hypot(a.std_, b.std_))
    if isinstance(a, Binomial) and isinstance(b, Binomial) and a.p == b.p:
        return Binomial(a.n + b.n, a.p)
    if b.discrete and isinstance(a, _SHIFTABLE):
        a, b = b, a
    if a.discrete and isinstance(b, _SHIFTABLE):
        # a continuous law shifted by each atom: exact, unlike a grid
        va, ma = a.atoms()
        keep = ma > 0
        if keep.sum() <= get_grid_options().max_components // 8:
            return _mixture_from(ma[keep], [affine(b, 1.0, v) for v in va[keep]])
    if a.discrete and b.discrete:
        va, ma = a.atoms()
        vb, mb = b.atoms()
        if va.size * vb.size <= 200_000:
            v = (va[:, None] + vb[None, :]).ravel()
            m = (ma[:, None] * mb[None, :]).ravel()
            return _simplify_discrete(Empirical(v, m))
    return None


def convolve(a: Dist, b: Dist) -> Dist:
    """Distribution of ``X + Y`` for independent ``X ~ a`` and ``Y ~ b``."""
    if isinstance(a, Constant):
        return affine(b, 1.0, a.value)
    if isinstance(b, Constant):
        return affine(a, 1.0, b.value)
    opts = get_grid_options()
    if opts.closed_forms:
        r = _closed_sum(a, b)
        if r is not None:
            return r
        if isinstance(a, Mixture) or isinstance(b, Mixture):
            return _convolve_mixture(a, b, opts)
    return _grid_convolve(a, b, opts)


def _convolve_mixture(a, b, opts):
    wa, ca = (a.weights, a.components) if isinstance(a, Mixture) else ([1.0], [a])
    wb, cb = (b.weights, b.components) if isinstance(b, Mixture) else ([1.0], [b])
    if len(ca) * len(cb) > opts.max_components:
        # shrink the larger side so the product fits the component budget
        if len(ca) >= len(cb):
            wa, ca = _compact(wa, ca, max(2, opts.max_components // len(cb)))
        else:
            wb, cb = _compact(wb, cb, max(2, opts.max_components // len(ca)))
        if len(ca) * len(cb) > opts.max_components:
            if len(ca) >= len(cb):
                return convolve(to_grid(a), b)
            return convolve(a, to_grid(b))
    ws, ds = [], []
    for x, da in zip(wa, ca):
        for y, db in zip(wb, cb):
            ws.append(x * y)
            ds.append(convolve(da, db))
    return _mixture_from(ws, ds)


def convolve_all(dists: Iterable[Dist]) -> Dist:
    out: Dist = ZERO
    for d in dists:
        out = convolve(out, d)
    return out


def _regrid(d: Dist, lo: float, step: float, width: float) -> Grid:
    n = max(1, int(math.ceil(width / step - 1e-9)))
    edges = lo + step * np.arange(n + 1)
    inner = _as_array(d.cdf(edges[1:-1])) if n > 1 else np.empty(0)
    cum = np.concatenate([[0.0], inner, [1.0]])
    masses = np.clip(np.diff(cum), 0.0, None)
    if masses.sum() <= 0:
        masses = np.ones(n) / n
    return Grid(lo + 0.5 * step, step, masses)


def _grid_convolve(a: Dist, b: Dist, opts: GridOptions) -> Grid:
    la, ha = a.span()
    lb, hb = b.span()
    wa, wb = ha - la, hb - lb
    total = wa + wb
    if total <= 0:
        return Grid(la + lb, 1.0, [1.0])
    step = total / max(opts.max_len - 2, 1)
    if opts.max_step is not None and step > opts.max_step:
        raise GridOverflow(
            f"support width {total:g} needs step {step:g} > max_step {opts.max_step:g} "
            f"at grid length {opts.max_len}"
        )
    ga = _regrid(a, la, step, wa)
    gb = _regrid(b, lb, step, wb)
    if ga.masses.size * gb.masses.size > 250_000:
        m = fftconvolve(ga.masses, gb.masses)
    else:
        m = np.convolve(ga.masses, gb.masses)
    m = np.clip(m, 0.0, None)
    return Grid(ga.origin + gb.origin, step, m)


def _component_key(d):
    try:
        return hash(d), d
    except TypeError:
        return id(d), d


def _mixture_from(weights, dists) -> Dist:
    """Mixture with arbitrary positive weights (normalized here)."""
    flat_w, flat_d = [], []
    for w, d in zip(weights, dists):
        w = float(w)
        if w <= 0:
            continue
        if isinstance(d, Mixture):
            flat_w.extend(w * d.weights)
            flat_d.extend(d.components)
        else:
            flat_w.append(w)
            flat_d.append(d)
    if not flat_d:
        raise EmptyMixture("mixture has no components with positive weight")
    total = float(sum(flat_w))
    merged: dict = {}
    order = []
    for w, d in zip(flat_w, flat_d):
        key = d
        if key in merged:
            merged[key] += w / total
        else:
            merged[key] = w / total
            order.append(key)
    if len(order) == 1:
        return order[0]
    if all(d.discrete for d in order):
        vs, ms = [], []
        for d in order:
            v, m = d.atoms()
            vs.append(v)
            ms.append(m * merged[d])
        return _simplify_discrete(Empirical(np.concatenate(vs), np.concatenate(ms)))
    weights = [merged[d] for d in order]
    limit = get_grid_options().max_components
    if len(order) > limit:
        weights, order = _compact(weights, order, max(2, limit // 8))
    return Mixture(weights, order)


def _compact(weights, comps, size):
    """At most ``size`` components: the heaviest ``size - 1`` stay exact and
    the rest are flattened into one grid component, so the approximation
    error is bounded by the flattened mass."""
    weights = np.asarray(weights, dtype=float)
    if len(comps) <= size:
        return weights, list(comps)
    order = np.argsort(-weights, kind="stable")
    keep, rest = order[:size - 1], order[size - 1:]
    rest_w = float(weights[rest].sum())
    tail = Mixture(weights[rest] / rest_w, [comps[i] for i in rest])
    return (np.concatenate([weights[keep], [rest_w]]),
            [comps[i] for i in keep] + [to_grid(tail)])


def mixture(components: Sequence) -> Dist:
    """Mixture of weighted components.

    ``components`` holds :class:`WeightedDist` items or ``(weight, dist)``
    pairs.  Weights must sum to one within 1e-6; they are renormalized.
    """
    comps = [c if isinstance(c, WeightedDist) else WeightedDist(float(c[0]), c[1]) for c in components]
    if not comps:
        raise EmptyMixture("mixture of an empty component list")
    total = sum(c.weight for c in comps)
    if abs(total - 1.0) > 1e-6:
        raise WeightSumOutOfTolerance(f"mixture weights sum to {total!r}, expected 1")
    return _mixture_from([c.weight for c in comps], [c.dist for c in comps])


def cdf(d: Dist, x):
    return d.cdf(x)


def quantile(d: Dist, p):
    return d.quantile(p)


def restrict(d: Dist, lo=-math.inf, hi=math.inf, lo_closed=False, hi_closed=True):
    """``(P(X in interval), X | X in interval)``; the dist is ``None`` when P is 0."""
    if not lo < hi and not (lo == hi and lo_closed and hi_closed):
        raise DistError(f"empty interval ({lo}, {hi})")
    return d._restrict(float(lo), float(hi), bool(lo_closed), bool(hi_closed))


def prob_and_condition(d: Dist, interval):
    """Probability of the half-open interval ``(lo, hi]`` and the conditioned dist."""
    lo, hi = interval
    return restrict(d, lo, hi, lo_closed=False, hi_closed=True)


def scaled_count(base: Dist, per_unit: Dist, c: int) -> Dist:
    """``base`` plus ``c`` times one draw of ``per_unit`` (count regression)."""
    if c < 0:
        raise DistError(f"count must be nonnegative, got {c}")
    return convolve(base, affine(per_unit, c, 0.0))


def to_grid(d: Dist, resolution_hint: int | None = None) -> Grid:
    """Histogram approximation of ``d`` with at most ``resolution_hint`` cells."""
    opts = get_grid_options()
    n = opts.max_len if resolution_hint is None else max(1, min(int(resolution_hint), opts.max_len))
    if isinstance(d, Grid) and d.masses.size <= n:
        return d
    if isinstance(d, Constant):
        return Grid(d.value, 1.0, [1.0])
    lo, hi = d.span()
    if hi <= lo:
        return Grid(lo, 1.0, [1.0])
    step = (hi - lo) / n
    return _regrid(d, lo, step, hi - lo)


def kolmogorov_distance(a: Dist, b: Dist, n: int = 20001) -> float:
    """Sup-norm distance between two CDFs, evaluated on a dense probe set."""
    la, ha = a.span()
    lb, hb = b.span()
    lo, hi = min(la, lb), max(ha, hb)
    probes = [np.linspace(lo, hi, n)]
    levels = np.linspace(1e-6, 1 - 1e-6, 2001)
    for d in (a, b):
        if d.discrete:
            probes.append(d.atoms()[0])
        else:
            probes.append(_as_array(d.quantile(levels)))
        if isinstance(d, Mixture):
            for comp in d.components[:64]:
                clo, chi = comp.span()
                probes.append(np.linspace(clo, chi, 257))
    x = np.unique(np.concatenate(probes))
    diff = np.abs(_as_array(a.cdf(x)) - _as_array(b.cdf(x)))
    diff_left = np.abs(_as_array(a.cdf_left(x)) - _as_array(b.cdf_left(x)))
    return float(max(diff.max(), diff_left.max()))


# ---------------------------------------------------------------------------
# JSON encoding


def to_json(d: Dist) -> dict:
    if isinstance(d, Constant):
        return {"kind": "constant", "value": d.value}
    if isinstance(d, Normal):
        return {"kind": "normal", "mean": d.mean_, "std": d.std_}
    if isinstance(d, Uniform):
        return {"kind": "uniform", "lo": d.lo, "hi": d.hi}
    if isinstance(d, Binomial):
        return {"kind": "binomial", "n": d.n, "p": d.p}
    if isinstance(d, Empirical):
        return {"kind": "empirical", "points": [[v, m] for v, m in d.points]}
    if isinstance(d, Mixture):
        return {"kind": "mixture",
                "components": [{"weight": float(w), "dist": to_json(c)} for w, c in zip(d.weights, d.components)]}
    if isinstance(d, Grid):
        return {"kind": "grid", "origin": d.origin, "step": d.step, "masses": d.masses.tolist()}
    if isinstance(d, UniformNormal):
        return {"kind": "uniform_normal", "lo": d.lo, "hi": d.hi, "mean": d.mean_, "std": d.std_}
    if isinstance(d, Truncated):
        return {"kind": "truncated", "base": to_json(d.base), "lo": _json_float(d.lo), "hi": _json_float(d.hi)}
    raise DistError(f"cannot encode {type(d).__name__}")


def _json_float(x):
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return x


def from_json(obj: dict) -> Dist:
    if not isinstance(obj, dict) or "kind" not in obj:
        raise DistError(f"distribution object needs a 'kind' field: {obj!r}")
    kind = obj["kind"]
    try:
        if kind == "constant":
            return Constant(obj["value"])
        if kind == "normal":
            return Normal(obj["mean"], obj["std"])
        if kind == "uniform":
            return Uniform(obj["lo"], obj["hi"])
        if kind == "binomial":
            return Binomial(obj["n"], obj["p"])
        if kind == "empirical":
            return _simplify_discrete(Empirical([(float(v), float(m)) for v, m in obj["points"]]))
        if kind == "mixture":
            return mixture([(c["weight"], from_json(c["dist"])) for c in obj["components"]])
        if kind == "grid":
            return Grid(obj["origin"], obj["step"], obj["masses"])
        if kind == "uniform_normal":
            return UniformNormal(obj["lo"], obj["hi"], obj["mean"], obj["std"])
        if kind == "truncated":
            return Truncated(from_json(obj["base"]), float(obj["lo"]), float(obj["hi"]))
    except (KeyError, TypeError) as exc:
        raise DistError(f"malformed {kind!r} distribution: {obj!r}") from exc
    raise DistError(f"unknown distribution kind {kind!r}")
