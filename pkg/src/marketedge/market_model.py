"""Joint sampling of (true value, market estimate, trader estimate).

Two generators are provided: an independent uniform cube and a Gaussian
copula with moment-matched marginals (Beta in betting mode, lognormal in stock
mode).  Within every triple, draws are consumed in the fixed order (r, m, t),
so a given (spec, n, seed) reproduces bit-identical samples.
"""
from __future__ import annotations

import enum
import functools
import io
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from scipy.special import betainc, betaln, ndtr

from . import rng
from .errors import (
    DomainError,
    EmptyInputError,
    InfeasibleSpecError,
    MarginOverflowError,
)

_TOP = 1.0 - 2.0**-53
_TINY = np.finfo(float).tiny


class Side(str, enum.Enum):
    ALPHA = "alpha"
    BETA = "beta"
    ABSTAIN = "abstain"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class EstimateTriple:
    r: float
    m: float
    t: float

    def check(self, mode: str = "betting") -> "EstimateTriple":
        vals = (self.r, self.m, self.t)
        if mode == "betting" and not all(0.0 < v < 1.0 for v in vals):
            raise DomainError(f"betting triple must lie in (0,1): {vals}")
        if mode == "stock" and not all(v > 0.0 for v in vals):
            raise DomainError(f"stock triple must be positive: {vals}")
        return self


@dataclass(frozen=True)
class TripleBatch:
    """Column-oriented batch of triples; iterates as :class:`EstimateTriple`."""

    r: np.ndarray
    m: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        for name in ("r", "m", "t"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.r.shape == self.m.shape == self.t.shape) or self.r.ndim != 1:
            raise ValueError("r, m, t must be 1-d arrays of equal length")

    @classmethod
    def from_triples(cls, triples: Sequence[EstimateTriple]) -> "TripleBatch":
        arr = np.array([(x.r, x.m, x.t) for x in triples], dtype=float).reshape(-1, 3)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def __len__(self):
        return self.r.shape[0]

    def __getitem__(self, i) -> EstimateTriple:
        return EstimateTriple(float(self.r[i]), float(self.m[i]), float(self.t[i]))

    def __iter__(self) -> Iterator[EstimateTriple]:
        for i in range(len(self)):
            yield self[i]

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("id,r,m,t\n")
        for i in range(len(self)):
            buf.write(f"{i},{self.r[i]:.12g},{self.m[i]:.12g},{self.t[i]:.12g}\n")
        return buf.getvalue()


# --------------------------------------------------------------------------
# Marginals


def beta_params(mean: float, var: float) -> tuple[float, float]:
    """Method-of-moments Beta(a, b) for the given mean and variance."""
    if not (0.0 < mean < 1.0):
        raise InfeasibleSpecError(f"Beta mean must lie in (0,1), got {mean}")
    if not (0.0 < var < mean * (1.0 - mean)):
        raise InfeasibleSpecError(
            f"Beta variance {var} infeasible for mean {mean} (need 0 < v < {mean * (1 - mean):.6g})"
        )
    k = mean * (1.0 - mean) / var - 1.0
    return mean * k, (1.0 - mean) * k


def lognormal_params(mean: float, var: float) -> tuple[float, float]:
    """(mu, sigma) of the log for a lognormal with the given mean and variance."""
    if mean <= 0.0 or var <= 0.0:
        raise InfeasibleSpecError(f"lognormal needs positive mean and variance, got {mean}, {var}")
    s2 = math.log1p(var / mean**2)
    return math.log(mean) - 0.5 * s2, math.sqrt(s2)


@functools.lru_cache(maxsize=64)
def _cdf_table(a: float, b: float):
    s = np.linspace(0.0, 1.0, 4097)
    x = 0.5 - 0.5 * np.cos(np.pi * s)  # clustered at both ends
    f = np.maximum.accumulate(betainc(a, b, x))
    return x, f


def beta_ppf(u, a: float, b: float, tol: float = 1e-10, maxiter: int = 100) -> np.ndarray:
    """Inverse regularized incomplete beta by safeguarded Newton iteration.

    A tabulated CDF supplies a bracketing start; Newton steps that would leave
    the bracket fall back to bisection.  Iteration stops once the step is
    below ``tol`` or after ``maxiter`` passes.
    """
    u = np.asarray(u, dtype=float)
    shape = u.shape
    u = u.ravel()
    x_tab, f_tab = _cdf_table(float(a), float(b))
    x = np.interp(u, f_tab, x_tab)
    j = np.clip(np.searchsorted(f_tab, u), 1, len(f_tab) - 1)
    lo = x_tab[j - 1].copy()
    hi = x_tab[j].copy()
    x[u <= 0.0] = 0.0
    x[u >= 1.0] = 1.0
    log_b = betaln(a, b)
    idx = np.nonzero((u > 0.0) & (u < 1.0))[0]
    for _ in range(maxiter):
        if idx.size == 0:
            break
        xa = x[idx]
        resid = betainc(a, b, xa) - u[idx]
        lo[idx] = np.where(resid < 0.0, xa, lo[idx])
        hi[idx] = np.where(resid > 0.0, xa, hi[idx])
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            pdf = np.exp((a - 1.0) * np.log(xa) + (b - 1.0) * np.log1p(-xa) - log_b)
            xn = xa - resid / pdf
        inside = np.isfinite(xn) & (xn > lo[idx]) & (xn < hi[idx])
        xn = np.where(inside, xn, 0.5 * (lo[idx] + hi[idx]))
        xn = np.where(resid == 0.0, xa, xn)  # exact hit, e.g. on a table node
        x[idx] = xn
        done = (np.abs(xn - xa) <= tol * np.minimum(xn, 1.0 - xn)) | (resid == 0.0)
        idx = idx[~done]
    return x.reshape(shape)


@dataclass(frozen=True)
class Marginal:
    """A moment-matched marginal distribution driven by a standard-normal latent."""

    kind: str  # "beta" or "lognormal"
    p1: float
    p2: float

    @classmethod
    def fit(cls, mode: str, mean: float, var: float) -> "Marginal":
        if mode == "betting":
            return cls("beta", *beta_params(mean, var))
        return cls("lognormal", *lognormal_params(mean, var))

    def from_latent(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "lognormal":
            return np.exp(self.p1 + self.p2 * z)
        a, b = self.p1, self.p2
        out = np.empty_like(z)
        low = z <= 0.0
        out[low] = beta_ppf(ndtr(z[low]), a, b)
        # upper half through the mirrored distribution keeps tail precision
        out[~low] = 1.0 - beta_ppf(ndtr(-z[~low]), b, a)
        return np.clip(out, _TINY, _TOP)


# --------------------------------------------------------------------------
# Specification


@dataclass(frozen=True)
class MarketSpec:
    mode: str = "betting"
    mean_r: float = 0.5
    mean_m: float = 0.5
    mean_t: float = 0.5
    var_r: float = 0.08
    var_m: float = 0.054
    var_t: float = 0.054
    corr_tm: float = 0.9
    corr_tr: float = 0.9
    corr_rm: float = 0.9
    margin: float = 0.0
    copula_calibration: str = "matched"

    def __post_init__(self):
        if self.mode not in ("betting", "stock"):
            raise InfeasibleSpecError(f"mode must be 'betting' or 'stock', got {self.mode!r}")
        if self.copula_calibration not in ("direct", "matched"):
            raise InfeasibleSpecError(
                f"copula_calibration must be 'direct' or 'matched', got {self.copula_calibration!r}"
            )
        if self.margin < 0.0:
            raise InfeasibleSpecError(f"margin must be nonnegative, got {self.margin}")
        self.marginals()  # feasibility of each marginal
        for name in ("corr_tm", "corr_tr", "corr_rm"):
            c = getattr(self, name)
            if not (-1.0 <= c <= 1.0):
                raise InfeasibleSpecError(f"{name}={c} outside [-1, 1]")
        ev = np.linalg.eigvalsh(self.correlation_matrix())
        if ev[0] < -1e-12:
            raise InfeasibleSpecError(
                f"correlation matrix is not positive semi-definite (min eigenvalue {ev[0]:.3g})"
            )

    def correlation_matrix(self) -> np.ndarray:
        """Target Pearson correlations in (r, m, t) order."""
        return np.array(
            [
                [1.0, self.corr_rm, self.corr_tr],
                [self.corr_rm, 1.0, self.corr_tm],
                [self.corr_tr, self.corr_tm, 1.0],
            ]
        )

    def marginals(self) -> tuple[Marginal, Marginal, Marginal]:
        return (
            Marginal.fit(self.mode, self.mean_r, self.var_r),
            Marginal.fit(self.mode, self.mean_m, self.var_m),
            Marginal.fit(self.mode, self.mean_t, self.var_t),
        )

    def latent_correlation(self) -> np.ndarray:
        """Latent normal correlation matrix producing the target Pearson values."""
        target = self.correlation_matrix()
        if self.copula_calibration == "direct":
            return target
        margs = self.marginals()
        lat = np.eye(3)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            lat[i, j] = lat[j, i] = calibrate_pair(margs[i], margs[j], float(target[i, j]))
        if np.linalg.eigvalsh(lat)[0] < -1e-12:
            raise InfeasibleSpecError("calibrated latent correlation matrix is not PSD")
        return lat

    def latent_factor(self) -> np.ndarray:
        return psd_cholesky(self.latent_correlation())

    def with_(self, **changes) -> "MarketSpec":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return MarketSpec(**fields)


# --------------------------------------------------------------------------
# Copula calibration

_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite_e.hermegauss(60)
_GH_WEIGHTS = _GH_WEIGHTS / _GH_WEIGHTS.sum()


def copula_pearson(rho: float, m1: Marginal, m2: Marginal) -> float:
    """Pearson correlation of two marginals joined by a Gaussian copula.

    Evaluated with a 60x60 tensor Gauss-Hermite rule, which is deterministic
    and accurate to well below the calibration tolerance for these marginals.
    """
    if m1.kind == m2.kind == "lognormal":
        s1, s2 = m1.p2, m2.p2
        return math.expm1(rho * s1 * s2) / math.sqrt(math.expm1(s1 * s1) * math.expm1(s2 * s2))
    z1, z2 = np.meshgrid(_GH_NODES, _GH_NODES, indexing="ij")
    w = np.outer(_GH_WEIGHTS, _GH_WEIGHTS)
    a = m1.from_latent(z1)
    b = m2.from_latent(rho * z1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * z2)
    da = a - (w * a).sum()
    db = b - (w * b).sum()
    return float((w * da * db).sum() / math.sqrt((w * da * da).sum() * (w * db * db).sum()))


@functools.lru_cache(maxsize=256)
def calibrate_pair(m1: Marginal, m2: Marginal, target: float, tol: float = 5e-3) -> float:
    """Latent correlation whose copula Pearson value equals ``target``."""
    if target == 0.0:
        return 0.0
    if m1.kind == m2.kind == "lognormal":
        s1, s2 = m1.p2, m2.p2
        arg = 1.0 + target * math.sqrt(math.expm1(s1 * s1) * math.expm1(s2 * s2))
        rho = math.log(arg) / (s1 * s2) if arg > 0.0 else -math.inf
        if not (-1.0 - 1e-12 <= rho <= 1.0 + 1e-12):
            raise InfeasibleSpecError(f"Pearson target {target} unattainable for lognormal marginals")
        return min(1.0, max(-1.0, rho))
    p_lo, p_hi = copula_pearson(-1.0, m1, m2), copula_pearson(1.0, m1, m2)
    if target >= p_hi:
        if target - p_hi > tol:
            raise InfeasibleSpecError(f"Pearson target {target} exceeds attainable {p_hi:.4f}")
        return 1.0
    if target <= p_lo:
        if p_lo - target > tol:
            raise InfeasibleSpecError(f"Pearson target {target} below attainable {p_lo:.4f}")
        return -1.0
    lo, hi = -1.0, 1.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if copula_pearson(mid, m1, m2) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def psd_cholesky(c: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Lower-triangular factor of a PSD correlation matrix, tolerating zero pivots.

    Perfectly (anti-)correlated variables receive exactly (negated) copies of
    the earlier row, so they map to bit-identical latents.
    """
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    f = np.zeros_like(c)
    for j in range(n):
        d = c[j, j] - f[j, :j] @ f[j, :j]
        if d < -tol:
            raise InfeasibleSpecError("correlation matrix is not positive semi-definite")
        f[j, j] = math.sqrt(max(d, 0.0))
        for i in range(j + 1, n):
            s = c[i, j] - f[i, :j] @ f[j, :j]
            if f[j, j] > tol:
                f[i, j] = s / f[j, j]
            elif abs(s) > 1e-8:
                raise InfeasibleSpecError("correlation matrix is not positive semi-definite")
    for i in range(n):
        for j in range(i):
            if c[i, j] == 1.0:
                f[i] = f[j]
                break
            if c[i, j] == -1.0:
                f[i] = -f[j]
                break
    return f


# --------------------------------------------------------------------------
# Sampling


def sample_uniform(n: int, seed) -> TripleBatch:
    """``n`` triples with r, m, t independent and uniform on (0, 1)."""
    if n < 1:
        raise EmptyInputError("sample_uniform needs n >= 1")
    gen = rng.as_generator(seed, "market_model.uniform")
    u = rng.uniforms(gen, (n, 3))
    return TripleBatch(u[:, 0], u[:, 1], u[:, 2])


def latent_combination(z: np.ndarray, row: np.ndarray) -> np.ndarray:
    """``z @ row`` for (n, 3) normals, written out so every caller rounds identically."""
    return z[:, 0] * row[0] + z[:, 1] * row[1] + z[:, 2] * row[2]


def latents_to_batch(z: np.ndarray, spec: MarketSpec, factor: np.ndarray | None = None) -> TripleBatch:
    """Map independent standard normals of shape (n, 3) to a triple batch."""
    factor = spec.latent_factor() if factor is None else factor
    mr, mm, mt = spec.marginals()
    return TripleBatch(
        mr.from_latent(latent_combination(z, factor[0])),
        mm.from_latent(latent_combination(z, factor[1])),
        mt.from_latent(latent_combination(z, factor[2])),
    )


def sample_correlated_beta(spec: MarketSpec, n: int, seed) -> TripleBatch:
    """Copula sample: Beta marginals in betting mode, lognormal in stock mode."""
    if n < 1:
        raise EmptyInputError("sampling needs n >= 1")
    gen = rng.as_generator(seed, "market_model.copula")
    return latents_to_batch(rng.normals(gen, (n, 3)), spec)


def apply_margin(m: float, margin: float) -> tuple[float, float, float, float]:
    """Two-way margined probabilities and decimal odds ``(p_a, p_b, o_a, o_b)``."""
    if not (0.0 < m < 1.0):
        raise DomainError(f"market probability must lie in (0,1), got {m}")
    if margin < 0.0:
        raise DomainError(f"margin must be nonnegative, got {margin}")
    pa, pb = m + margin, (1.0 - m) + margin
    if pa >= 1.0 or pb >= 1.0:
        raise MarginOverflowError(f"margin {margin} pushes a side probability to >= 1 (m={m})")
    return pa, pb, 1.0 / pa, 1.0 / pb


def realize_outcome(r: float, seed) -> Side:
    """Bernoulli trial: alpha with probability ``r``."""
    if not (0.0 <= r <= 1.0):
        raise DomainError(f"r must lie in [0,1], got {r}")
    u = rng.uniforms(rng.as_generator(seed, "market_model.outcome"), 1)[0]
    return Side.ALPHA if u < r else Side.BETA


@dataclass(frozen=True)
class Opportunity:
    id: int
    side: Side
    market_prob: float
    odds: float
    triple: EstimateTriple | None = None

    def __post_init__(self):
        if abs(self.odds * self.market_prob - 1.0) > 1e-12:
            raise DomainError("odds must be the reciprocal of market_prob")


def two_way_opportunities(id: int, triple: EstimateTriple, margin: float = 0.0) -> tuple[Opportunity, Opportunity]:
    pa, pb, oa, ob = apply_margin(triple.m, margin)
    return (
        Opportunity(id, Side.ALPHA, pa, oa, triple),
        Opportunity(id, Side.BETA, pb, ob, triple),
    )
