"""Allocation strategies and growth functionals.

Covers uniform staking, mean-variance (MPT) and Sharpe-ratio allocation on
the probability simplex, Kelly and fractional Kelly, the log-growth
evaluator, its KL-divergence decomposition, and the second-order check
relating Kelly to MPT with risk weight 1/2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, DomainError, NoPositiveEdgeError, RuinDomainError
from .metrics import kl

LOG_BASES = {"natural": 1.0, "ten": math.log(10.0)}
STRATEGY_KINDS = ("unif", "mpt", "sharpe", "kelly", "fractional_kelly")


@dataclass(frozen=True)
class Allocation:
    fractions: np.ndarray
    cash: float

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=float)
        object.__setattr__(self, "fractions", f)
        if np.any(f < 0.0):
            raise DomainError("allocation fractions must be nonnegative")
        if abs(f.sum() + self.cash - 1.0) > 1e-10:
            raise DomainError(f"fractions plus cash must equal 1, got {f.sum() + self.cash}")
        if self.cash < -1e-10:
            raise BudgetError(f"allocation overspends the budget (cash {self.cash})")

    @classmethod
    def from_fractions(cls, f) -> "Allocation":
        f = np.asarray(f, dtype=float)
        return cls(f, 1.0 - float(f.sum()))


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "sharpe"
    unit_stake: float | None = None  # unif; None means 1/n per round
    risk_weight: float = 0.5  # mpt
    kelly_fraction: float = 1.0
    log_base: str = "natural"

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise DomainError(f"unknown strategy {self.kind!r}; expected one of {STRATEGY_KINDS}")
        if self.unit_stake is not None and not self.unit_stake > 0.0:
            raise DomainError("unit_stake must be positive")
        if self.risk_weight < 0.0:
            raise DomainError("risk_weight must be nonnegative")
        if not (0.0 < self.kelly_fraction <= 1.0):
            raise DomainError("kelly_fraction must lie in (0, 1]")
        if self.log_base not in LOG_BASES:
            raise DomainError(f"log_base must be one of {tuple(LOG_BASES)}")


# --------------------------------------------------------------------------
# Uniform and Kelly


def allocate_unif(rois, d: float) -> Allocation:
    rois = np.asarray(rois, dtype=float)
    if not d > 0.0:
        raise DomainError("unit stake d must be positive")
    f = np.where(rois > 0.0, d, 0.0)
    total = f.sum()
    if total > 1.0 + 1e-12:
        raise BudgetError(f"{int((rois > 0).sum())} stakes of {d} exceed the unit budget")
    return Allocation(f, 1.0 - total)


def _check_beliefs(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any((t <= 0.0) | (t >= 1.0)) or abs(t.sum() - 1.0) > 1e-9:
        raise DomainError("beliefs must lie in (0,1) and sum to 1")
    return t


def allocate_kelly(beliefs) -> Allocation:
    """Zero-margin Kelly over exclusive outcomes: bet your beliefs."""
    t = _check_beliefs(beliefs)
    return Allocation(t.copy(), 0.0)


def allocate_fractional_kelly(beliefs, fraction: float) -> Allocation:
    t = _check_beliefs(beliefs)
    if not (0.0 < fraction <= 1.0):
        raise DomainError("Kelly fraction must lie in (0, 1]")
    if fraction == 1.0:
        return allocate_kelly(t)
    return Allocation(fraction * t, 1.0 - fraction)


def kelly_growth(r, f, m, log_base: str = "natural") -> float:
    """Expected log-growth ``sum r_i log(cash + f_i / m_i)``.

    ``f`` is an :class:`Allocation` or a plain vector whose remainder is cash.
    """
    alloc = f if isinstance(f, Allocation) else Allocation.from_fractions(f)
    r = np.asarray(r, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any((m <= 0.0) | (m >= 1.0)):
        raise DomainError("market probabilities must lie in (0,1)")
    wealth = alloc.cash + alloc.fractions / m
    if np.any(wealth[r > 0.0] <= 0.0):
        raise RuinDomainError("an outcome with positive probability leaves no wealth")
    terms = np.where(r > 0.0, r * np.log(np.where(wealth > 0.0, wealth, 1.0)), 0.0)
    return float(terms.sum() / LOG_BASES[log_base])


def kl_growth_identity(r, t, m, log_base: str = "natural") -> tuple[float, float, float]:
    """Full-Kelly growth with beliefs ``t`` alongside ``KL(r||m)`` and ``KL(r||t)``.

    At zero margin the first equals the difference of the other two.
    """
    r, t, m = (np.asarray(v, dtype=float) for v in (r, t, m))
    for v in (r, t, m):
        if np.any(v <= 0.0):
            raise DomainError("KL terms need strictly positive probability vectors")
    growth = kelly_growth(r, Allocation(t, 0.0), m, log_base)
    scale = LOG_BASES[log_base]
    return growth, kl(r, m) / scale, kl(r, t) / scale


def bet_profit_moments(r, m, f):
    """Mean and variance of the profit of stake ``f`` at fair odds ``1/m``."""
    r, m, f = (np.asarray(v, dtype=float) for v in (r, m, f))
    if np.any((r < 0.0) | (r > 1.0)) or np.any((m <= 0.0) | (m >= 1.0)) or np.any(f < 0.0):
        raise DomainError("need r in [0,1], m in (0,1), f >= 0")
    mean = (r / m - 1.0) * f
    var = (1.0 - r) * r * f * f / (m * m)
    if mean.ndim == 0:
        return float(mean), float(var)
    return mean, var


# --------------------------------------------------------------------------
# Simplex solvers


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {f >= 0, sum f = 1} (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def sharpe_ratio(mu, var, f) -> float:
    f = np.asarray(f, dtype=float)
    sd = math.sqrt(float(np.sum(np.asarray(var) * f * f)))
    return float(np.dot(mu, f)) / sd if sd > 0 else math.inf


def allocate_sharpe(mu, var) -> Allocation:
    """Maximise ``mu.f / sqrt(sum var_i f_i^2)`` over the simplex.

    With independent opportunities the maximiser is available in closed form:
    ``f_i`` proportional to ``max(mu_i, 0) / var_i``.  Stationarity of the
    ratio holds with equal ratio-gradient on the support and nonpositive
    gradient off it, so this is the exact optimum, not an approximation.
    """
    mu = np.asarray(mu, dtype=float)
    var = np.asarray(var, dtype=float)
    pos = mu > 0.0
    if not pos.any():
        raise NoPositiveEdgeError("no opportunity with positive expected profit")
    if np.any(var[pos] <= 0.0):
        raise DomainError("positive-edge opportunities need positive variance")
    w = np.zeros_like(mu)
    w[pos] = mu[pos] / var[pos]
    return Allocation(w / w.sum(), 0.0)


def mpt_objective(mu, cov, gamma, f) -> float:
    f = np.asarray(f, dtype=float)
    return float(mu @ f - gamma * f @ cov @ f)


def kkt_residual(grad: np.ndarray, f: np.ndarray, eps: float = 1e-12) -> float:
    """Simplex KKT violation for maximisation with gradient ``grad`` at ``f``."""
    support = f > eps
    lam = grad[support].max() if support.any() else grad.max()
    on = np.abs(grad[support] - lam)
    off = np.maximum(grad[~support] - lam, 0.0)
    return float(max(on.max(initial=0.0), off.max(initial=0.0)))


def _polish(mu, cov, gamma, f):
    """Solve the equality-constrained KKT system on the support of ``f``."""
    s = np.nonzero(f > 1e-9)[0]
    k = len(s)
    a = np.zeros((k + 1, k + 1))
    a[:k, :k] = 2.0 * gamma * cov[np.ix_(s, s)]
    a[:k, k] = 1.0
    a[k, :k] = 1.0
    rhs = np.append(mu[s], 1.0)
    sol = np.linalg.lstsq(a, rhs, rcond=None)[0]
    out = np.zeros_like(f)
    out[s] = sol[:k]
    if np.any(out < 0.0) or abs(out.sum() - 1.0) > 1e-12:
        return None
    return out


def allocate_mpt(mu, cov, gamma: float, tol: float = 1e-8, max_iter: int = 10_000) -> Allocation:
    """Maximise ``mu.f - gamma f'Cov f`` over the simplex (no short sales).

    Accelerated projected gradient with a Lipschitz step, followed by an exact
    solve on the detected support.
    """
    mu = np.asarray(mu, dtype=float)
    cov = np.asarray(cov, dtype=float)
    n = len(mu)
    if cov.shape != (n, n) or not np.allclose(cov, cov.T, atol=1e-12):
        raise DomainError("covariance must be a symmetric n x n matrix")
    ev = np.linalg.eigvalsh(cov)
    if ev[0] < -1e-10 * max(1.0, abs(ev[-1])):
        raise DomainError("covariance matrix is not positive semi-definite")
    if gamma < 0.0:
        raise DomainError("risk weight must be nonnegative")
    lip = 2.0 * gamma * max(ev[-1], 0.0)
    if lip == 0.0:
        f = np.zeros(n)
        f[int(np.argmax(mu))] = 1.0
        return Allocation(f, 0.0)

    def grad(x):
        return mu - 2.0 * gamma * cov @ x

    step = 1.0 / lip
    f = np.full(n, 1.0 / n)
    y, tk = f.copy(), 1.0
    for _ in range(max_iter):
        f_new = project_simplex(y + step * grad(y))
        if mpt_objective(mu, cov, gamma, f_new) < mpt_objective(mu, cov, gamma, f):
            y, tk = f.copy(), 1.0  # adaptive restart
            f_new = project_simplex(f + step * grad(f))
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = f_new + ((tk - 1.0) / t_next) * (f_new - f)
        f, tk = f_new, t_next
        if kkt_residual(grad(f), f) < 0.01 * tol:
            break
    best = f
    polished = _polish(mu, cov, gamma, f)
    if polished is not None and kkt_residual(grad(polished), polished) <= kkt_residual(grad(f), f):
        best = polished
    return Allocation(best, 0.0)


# --------------------------------------------------------------------------
# Kelly versus MPT


@dataclass(frozen=True)
class TaylorCheck:
    kelly: Allocation
    mpt_half: Allocation
    max_abs_diff: float
    in_regime: bool
    edges: np.ndarray = field(repr=False)


def kelly_taylor_mpt_check(r, m, regime: float = 0.1) -> TaylorCheck:
    """Compare exact Kelly ``f = r`` with MPT at ``gamma = 1/2``, ``Cov = E[rho rho']``.

    ``rho_i = 1[i wins]/m_i - 1`` is the return of a unit bet on outcome i.
    The comparison is meaningful only when every ``|E rho_i| < regime``.
    """
    r = _check_beliefs(r)
    m = np.asarray(m, dtype=float)
    if np.any((m <= 0.0) | (m >= 1.0)):
        raise DomainError("market probabilities must lie in (0,1)")
    q = r / m
    mu = q - 1.0
    second = np.diag(r / m**2) - q[:, None] - q[None, :] + 1.0
    mpt = allocate_mpt(mu, second, 0.5)
    kelly = allocate_kelly(r)
    diff = float(np.max(np.abs(mpt.fractions - kelly.fractions)))
    return TaylorCheck(kelly, mpt, diff, bool(np.all(np.abs(mu) < regime)), mu)
