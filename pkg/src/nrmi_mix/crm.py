"""Generalized-gamma completely random measures.

Laplace exponents, jump moments, the tail mass ``N(v)`` of the (tilted)
Levy intensity

    rho(dv) = a * exp(-b v) / (Gamma(1 - gamma) v^(1 + gamma)) dv,   b = kappa + u,

its numerical inverse, and Ferguson-Klass simulation of the jumps in
decreasing order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special

from .exceptions import (
    DivergentTailError,
    InvalidParametersError,
    InversionError,
    TruncationCapError,
)

__all__ = [
    "NggParams",
    "TiltedTail",
    "AtomSeries",
    "laplace_exponent",
    "tau_moment",
    "tail_mass",
    "tail_mass_quad",
    "invert_tail_mass",
    "sample_atom_series",
]

_EULER = 0.57721566490153286061
# below this stability index the recurrence through Gamma(1 - gamma, z)
# loses too many digits to cancellation
_RECURRENCE_MIN_GAMMA = 0.05
_SERIES_SPLIT = 2.0


@dataclass(frozen=True)
class NggParams:
    """Parameters (a, kappa, gamma) of an NGG(a, kappa, gamma; P0) prior.

    ``gamma == 0`` is the Dirichlet (gamma CRM) case, ``gamma == 1/2`` the
    normalized inverse-Gaussian and ``kappa == 0`` the normalized stable.
    """

    a: float
    kappa: float
    gamma: float

    def __post_init__(self):
        a, kappa, gamma = float(self.a), float(self.kappa), float(self.gamma)
        if not (np.isfinite(a) and a > 0):
            raise InvalidParametersError(f"a must be positive, got {self.a}")
        if not (np.isfinite(kappa) and kappa >= 0):
            raise InvalidParametersError(f"kappa must be nonnegative, got {self.kappa}")
        if not (0 <= gamma < 1):
            raise InvalidParametersError(f"gamma must lie in [0, 1), got {self.gamma}")
        if kappa == 0 and gamma == 0:
            raise InvalidParametersError("at least one of kappa, gamma must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def dirichlet(cls, a: float, kappa: float = 1.0) -> "NggParams":
        return cls(a, kappa, 0.0)

    @classmethod
    def nig(cls, kappa: float, a: float = 1.0) -> "NggParams":
        return cls(a, kappa, 0.5)

    @classmethod
    def nstable(cls, gamma: float, a: float = 1.0) -> "NggParams":
        return cls(a, 0.0, gamma)

    @property
    def is_dirichlet(self) -> bool:
        return self.gamma == 0.0

    def tilted(self, tilt: float = 0.0) -> "TiltedTail":
        return TiltedTail(self, tilt)


@dataclass(frozen=True)
class TiltedTail:
    """An NGG intensity with an extra exponential tilt on top of kappa."""

    params: NggParams
    tilt: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.tilt) and self.tilt >= 0):
            raise InvalidParametersError(f"tilt must be nonnegative, got {self.tilt}")

    @property
    def rate(self) -> float:
        """Effective exponential rate ``b = kappa + tilt``."""
        return self.params.kappa + self.tilt

    def check_tail(self) -> None:
        if self.params.gamma == 0 and self.rate == 0:
            raise DivergentTailError("tail mass diverges for gamma = 0 and zero rate")


@dataclass
class AtomSeries:
    """Truncated Ferguson-Klass series: decreasing jumps and their locations."""

    jumps: np.ndarray
    locations: np.ndarray
    truncation_epsilon: float
    discarded_head: float
    xi: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.jumps)

    @property
    def total(self) -> float:
        return float(self.jumps.sum())

    @property
    def truncation_ratio(self) -> float:
        """First discarded jump relative to the retained total."""
        return self.discarded_head / self.total


def _as_tilted(tt) -> TiltedTail:
    if isinstance(tt, NggParams):
        return TiltedTail(tt, 0.0)
    return tt


def laplace_exponent(tt, u):
    """Laplace exponent ``psi(u)`` of the CRM total mass.

    ``(a/gamma) ((b+u)^gamma - b^gamma)`` for ``gamma > 0`` and
    ``a log(1 + u/b)`` for ``gamma = 0``, with ``b`` the effective rate of `tt`.
    """
    tt = _as_tilted(tt)
    p = tt.params
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise ValueError("u must be nonnegative")
    b = tt.rate
    if p.gamma == 0:
        if b == 0:
            raise InvalidParametersError("Laplace exponent undefined for gamma = 0, kappa = 0")
        with np.errstate(over="ignore", divide="ignore"):
            r = u / b
            out = p.a * np.where(r < 1e300, np.log1p(np.minimum(r, 1e300)), np.log(u) - np.log(b))
    elif b == 0:
        with np.errstate(over="ignore"):
            out = np.where(u == 0, 0.0, p.a / p.gamma * u ** p.gamma)
    else:
        with np.errstate(over="ignore"):
            r = u / b
            # expm1 form keeps the gamma -> 0 limit accurate; the direct form
            # avoids overflow when b is negligible next to u
            lg = np.log1p(np.minimum(r, 1e10))
            if p.gamma < 1e-12:
                ratio = lg * (1.0 + 0.5 * p.gamma * lg)  # expm1(g L) / g, series in g
            else:
                ratio = np.expm1(p.gamma * lg) / p.gamma
            small = p.a * b ** p.gamma * ratio
            direct = p.a / p.gamma * ((b + u) ** p.gamma - b ** p.gamma)
        out = np.where(r < 1e10, small, direct)
    out = np.where(u == 0, 0.0, out)
    return out if out.ndim else float(out)


def tau_moment(tt, n: int, u):
    """Jump moment ``int v^n exp(-u v) rho(dv)`` without the total mass `a`.

    Equals ``Gamma(n - gamma) / Gamma(1 - gamma) * (b + u)^(gamma - n)``.
    """
    tt = _as_tilted(tt)
    p = tt.params
    if n < 1:
        raise ValueError("n must be a positive integer")
    u = np.asarray(u, dtype=float)
    rate = tt.rate + u
    if np.any(rate <= 0):
        raise ValueError("kappa + u must be positive")
    logc = special.gammaln(n - p.gamma) - special.gammaln(1 - p.gamma)
    out = np.exp(logc + (p.gamma - n) * np.log(rate))
    return out if out.ndim else float(out)


# -- upper incomplete gamma with shape in (-1, 0) -----------------------------

def _gcf_neg(s: float, z: np.ndarray) -> np.ndarray:
    """Gamma(s, z) by modified Lentz continued fraction; accurate for z >= 2."""
    tiny = 1e-300
    bb = z + 1.0 - s
    c = np.full_like(z, 1.0 / tiny)
    d = 1.0 / bb
    h = d.copy()
    for i in range(1, 300):
        an = -i * (i - s)
        bb = bb + 2.0
        d = an * d + bb
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = bb + an / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = d * c
        h = h * delta
        if np.all(np.abs(delta - 1.0) < 1e-16):
            break
    return np.exp(-z + s * np.log(z)) * h


def _series_neg(gamma: float, z: np.ndarray, z0: float = _SERIES_SPLIT) -> np.ndarray:
    """Gamma(-gamma, z) for z < z0 as Gamma(-gamma, z0) plus a term-wise integral."""
    head = _gcf_neg(-gamma, np.array([z0]))[0]
    logz = np.log(z)
    # k = 0 term, exact in the gamma -> 0 limit
    if gamma > 0:
        acc = z0 ** (-gamma) * np.expm1(gamma * (math.log(z0) - logz)) / gamma
    else:
        acc = math.log(z0) - logz
    fact = 1.0
    for k in range(1, 40):
        fact *= k
        e = k - gamma
        term = (z0 ** e - np.exp(e * logz)) / e / fact
        acc = acc + term if k % 2 == 0 else acc - term
    return head + acc


def _upper_gamma_neg(gamma: float, z: np.ndarray) -> np.ndarray:
    """Upper incomplete gamma Gamma(-gamma, z) for 0 < gamma < 1, z > 0."""
    z = np.asarray(z, dtype=float)
    if gamma >= _RECURRENCE_MIN_GAMMA:
        with np.errstate(under="ignore"):
            lead = np.exp(-gamma * np.log(z) - z)
            rest = special.gamma(1.0 - gamma) * special.gammaincc(1.0 - gamma, z)
        return (lead - rest) / gamma
    out = np.empty_like(z)
    small = z < _SERIES_SPLIT
    if np.any(small):
        out[small] = _series_neg(gamma, z[small])
    if np.any(~small):
        out[~small] = _gcf_neg(-gamma, z[~small])
    return out


def _tail(tt: TiltedTail, v: np.ndarray) -> np.ndarray:
    p = tt.params
    b = tt.rate
    if p.gamma == 0:
        with np.errstate(under="ignore"):
            return p.a * special.exp1(b * v)
    if b == 0:
        return p.a * v ** (-p.gamma) / (p.gamma * special.gamma(1.0 - p.gamma))
    scale = p.a * b ** p.gamma / special.gamma(1.0 - p.gamma)
    return scale * _upper_gamma_neg(p.gamma, b * v)


def _log_intensity(tt: TiltedTail, v: np.ndarray) -> np.ndarray:
    """log of rho(v) = a exp(-b v) v^(-1-gamma) / Gamma(1-gamma)."""
    p = tt.params
    return (math.log(p.a) - special.gammaln(1.0 - p.gamma)
            - tt.rate * v - (1.0 + p.gamma) * np.log(v))


def tail_mass(tt, v):
    """Tail mass ``N(v)`` of the tilted intensity (closed form).

    Uses the exponential integral for ``gamma = 0`` and the upper incomplete
    gamma function of negative order otherwise.
    """
    tt = _as_tilted(tt)
    tt.check_tail()
    v = np.asarray(v, dtype=float)
    if np.any(v <= 0):
        raise ValueError("v must be positive")
    out = _tail(tt, np.atleast_1d(v))
    return out.reshape(v.shape) if v.ndim else float(out[0])


def tail_mass_quad(tt, v: float) -> float:
    """Tail mass ``N(v)`` by adaptive quadrature (independent of `tail_mass`).

    The integral is taken on ``log x`` over ``(v, V)``; the remainder beyond
    ``V`` is below 1e-12 of the partial integral (exponential tilt), or added
    in closed form when the rate is zero.
    """
    tt = _as_tilted(tt)
    tt.check_tail()
    p = tt.params
    b = tt.rate
    v = float(v)
    if v <= 0:
        raise ValueError("v must be positive")
    g = p.gamma

    def integrand(t):
        return math.exp(-b * math.exp(t) - g * t)

    if b > 0:
        upper = v + 40.0 / b
        remainder = 0.0
    else:
        upper = v * 1e6
        remainder = upper ** (-g) / g
    lo, hi = math.log(v), math.log(upper)
    # split so quad resolves the exponential cut-off near x ~ 1/b
    pts = sorted({lo, hi} | ({math.log(1.0 / b)} if b > 0 and lo < -math.log(b) < hi else set()))
    total = 0.0
    for left, right in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(integrand, left, right, epsabs=0.0, epsrel=1e-13, limit=200)
        total += val
    return p.a / special.gamma(1.0 - g) * (total + remainder)


def _log_tail_and_slope(tt: TiltedTail, w: np.ndarray):
    v = np.exp(w)
    with np.errstate(divide="ignore", under="ignore", invalid="ignore", over="ignore"):
        n = _tail(tt, v)
        logn = np.log(n)
        # d log N / d log v = -v rho(v) / N(v)
        slope = -np.exp(np.log(v) + _log_intensity(tt, v) - logn)
    return logn, slope


@np.errstate(under="ignore", over="ignore", invalid="ignore")
def _invert_many(tt: TiltedTail, xi: np.ndarray, upper: float = np.inf,
                 rtol: float = 1e-9, method: str = "numeric") -> np.ndarray:
    """Solve N(J) = xi elementwise; `upper` is a known bound J < upper."""
    p = tt.params
    b = tt.rate
    xi = np.asarray(xi, dtype=float)
    if np.any(xi <= 0):
        raise ValueError("xi must be positive")
    g1 = special.gamma(1.0 - p.gamma)
    if p.gamma > 0:
        # untilted stable solution; tilting only lowers N, so it bounds J above
        w0 = -np.log(xi * p.gamma * g1 / p.a) / p.gamma
        if b == 0 and method == "auto":
            return np.exp(w0)
    else:
        # N(v) > a(-log(bv) - euler) for the gamma intensity, so this bounds J below
        w0 = -xi / p.a - _EULER - math.log(b)
    logxi = np.log(xi)
    if np.isfinite(upper):
        w0 = np.minimum(w0, math.log(upper))
    w0 = np.array(w0, dtype=float)

    def g(w):
        logn, slope = _log_tail_and_slope(tt, w)
        return logn - logxi, slope

    gv, _ = g(w0)
    lo = np.where(gv > 0, w0, -np.inf)
    hi = np.where(gv > 0, np.inf, w0)
    step = 1.0
    for _ in range(2000):
        need_hi = np.isinf(hi)
        need_lo = np.isinf(lo)
        if not (need_hi.any() or need_lo.any()):
            break
        w = np.where(need_hi, lo + step, np.where(need_lo, hi - step, w0))
        gw, _ = g(w)
        pos = gw > 0
        upd = need_hi | need_lo
        lo = np.where(upd & pos, w, lo)
        hi = np.where(upd & ~pos, w, hi)
        step *= 2.0
    else:
        raise InversionError("could not bracket the tail-mass inverse", xi=xi, params=p)

    w = np.clip(w0, lo, hi)
    done = np.zeros(w.shape, dtype=bool)
    for _ in range(200):
        gv, slope = g(w)
        with np.errstate(over="ignore", invalid="ignore"):
            done = np.isfinite(gv) & (np.abs(np.expm1(gv)) <= rtol)
        if done.all():
            return np.exp(w)
        pos = gv > 0
        lo = np.where(~done & pos, w, lo)
        hi = np.where(~done & ~pos, w, hi)
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            wn = w - gv / slope
        bad = ~np.isfinite(wn) | (wn <= lo) | (wn >= hi)
        wn = np.where(bad, 0.5 * (lo + hi), wn)
        # bracket collapsed to floating resolution
        tight = (hi - lo) <= 4 * np.spacing(np.maximum(np.abs(lo), np.abs(hi)))
        done_now = tight & ~done
        w = np.where(done | done_now, w, wn)
        done = done | done_now
        if done.all():
            return np.exp(w)
    raise InversionError("tail-mass inversion did not converge", xi=xi[~done], params=p)


def invert_tail_mass(tt, xi, rtol: float = 1e-9, method: str = "numeric"):
    """Jump size ``J`` with ``N(J) = xi``.

    The root is bracketed by geometric expansion in ``log v`` and refined by
    safeguarded Newton steps. ``method="auto"`` uses the exact inverse when
    the intensity is untilted stable (``kappa + tilt = 0``).
    """
    tt = _as_tilted(tt)
    tt.check_tail()
    arr = np.asarray(xi, dtype=float)
    out = _invert_many(tt, np.atleast_1d(arr), rtol=rtol, method=method)
    return out.reshape(arr.shape) if arr.ndim else float(out[0])


BaseSampler = Callable[[int, np.random.Generator], np.ndarray]


def sample_atom_series(tt, base_sampler: Optional[BaseSampler], epsilon: float,
                       rng: np.random.Generator, max_atoms: int = 100_000,
                       xi=None, method: str = "numeric") -> AtomSeries:
    """Simulate the jumps of a tilted NGG CRM by the Ferguson-Klass series.

    Jumps ``J_j = N^{-1}(xi_j)`` are generated at the arrival times of a
    unit-rate Poisson process until the first ``l`` with
    ``J_{l+1} / sum_{j<=l} J_j < epsilon``; ``J_1..J_l`` are kept and
    ``J_{l+1}`` is reported as ``discarded_head``.

    Parameters
    ----------
    tt : TiltedTail or NggParams
    base_sampler : callable ``(size, rng) -> ndarray`` or None
        Draws i.i.d. locations from P0. None gives zero-width locations.
    epsilon : float
        Relative truncation threshold.
    rng : numpy.random.Generator
    max_atoms : int
        Hard cap on the series length.
    xi : array_like, optional
        Inject the Poisson arrival times instead of simulating them.
    method : {"numeric", "auto"}
        Passed to the inversion; "auto" uses the exact stable inverse.
    """
    tt = _as_tilted(tt)
    tt.check_tail()
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    injected = None if xi is None else np.asarray(xi, dtype=float)
    jumps_parts, xi_parts = [], []
    last_xi = 0.0
    prev = np.inf
    batch = 32
    used = 0
    n_total = 0
    stop = None
    while stop is None:
        if injected is not None:
            if used >= len(injected):
                raise ValueError("injected arrival times exhausted before truncation")
            xs = injected[used:used + batch]
            used += len(xs)
        else:
            xs = last_xi + np.cumsum(rng.standard_exponential(batch))
        last_xi = xs[-1]
        js = _invert_many(tt, xs, upper=prev, method=method)
        prev = js[-1]
        jumps_parts.append(js)
        xi_parts.append(xs)
        n_total += len(js)
        jumps = np.concatenate(jumps_parts) if len(jumps_parts) > 1 else js
        csum = np.cumsum(jumps)
        hit = np.flatnonzero(jumps[1:] < epsilon * csum[:-1])
        if hit.size:
            stop = int(hit[0]) + 1
        elif n_total > max_atoms:
            raise TruncationCapError(
                f"Ferguson-Klass series exceeded {max_atoms} atoms "
                f"(last ratio {jumps[-1] / csum[-2]:.3g})")
        batch = min(batch * 2, 8192)
    if stop > max_atoms:
        raise TruncationCapError(f"Ferguson-Klass series exceeded {max_atoms} atoms")
    jumps = np.concatenate(jumps_parts)
    xis = np.concatenate(xi_parts)
    kept = jumps[:stop].copy()
    if base_sampler is None:
        locations = np.empty((stop, 0))
    else:
        locations = base_sampler(stop, rng)
    return AtomSeries(jumps=kept, locations=locations, truncation_epsilon=float(epsilon),
                      discarded_head=float(jumps[stop]), xi=xis[:stop + 1])
