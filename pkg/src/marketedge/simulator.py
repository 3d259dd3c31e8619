"""Round-based Monte-Carlo betting engine.

A round draws ``n`` triples, turns market probabilities into two-way odds,
lets a strategy stake its unit budget, settles each bet against a Bernoulli
outcome, and records profit, prediction accuracy and the joint-correctness
breakdown.

Random words are consumed per round as ``3n`` latent normals in (r, m, t)
order followed by ``n`` outcome uniforms, i.e. exactly ``n`` Philox counter
steps.  Round ``k`` of an experiment stream therefore starts at counter step
``k * n``, which lets blocks of rounds run on any number of threads and
still reproduce the serial result bit for bit.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logit, ndtri

from . import rng
from .datasets import LearnerDataset
from .errors import BudgetError, DomainError, EmptyInputError, MarginOverflowError
from .market_model import (
    MarketSpec,
    TripleBatch,
    beta_params,
    beta_ppf,
    latent_combination,
    sample_correlated_beta,
    sample_uniform,
)
from .metrics import breakdown_counts
from .returns import ORDERINGS, TIE, _CODE_TO_ORDERING, _ordering_codes, essentially_profitable
from .strategies import StrategyConfig, allocate_mpt

# --------------------------------------------------------------------------
# Allocation within rounds


def round_positions(t, m, y, strategy: StrategyConfig, margin: float = 0.0):
    """Stakes and settled profits for rounds laid out as arrays of shape (R, n).

    Single-sided strategies return arrays of shape (R, n); a side whose
    margined price reaches 1 never shows a positive edge and is not bet.
    Kelly-family
    strategies split the budget into one sub-bankroll of ``1/n`` per match and
    bet beliefs on both sides, returning shape (R, 2n) with alpha positions
    first.
    """
    t, m = np.atleast_2d(t), np.atleast_2d(m)
    y = np.atleast_2d(y).astype(bool)
    n = t.shape[-1]
    pa, pb = m + margin, 1.0 - m + margin
    if strategy.kind in ("kelly", "fractional_kelly"):
        if np.any(pa >= 1.0) or np.any(pb >= 1.0):
            raise MarginOverflowError(f"margin {margin} pushes a side probability to >= 1")
        frac = strategy.kelly_fraction if strategy.kind == "fractional_kelly" else 1.0
        fa, fb = frac * t / n, frac * (1.0 - t) / n
        stakes = np.concatenate([fa, fb], axis=-1)
        profits = np.concatenate(
            [np.where(y, fa * (1.0 / pa - 1.0), -fa), np.where(~y, fb * (1.0 / pb - 1.0), -fb)], axis=-1
        )
        return stakes, profits

    roi_a, roi_b = t / pa - 1.0, (1.0 - t) / pb - 1.0
    alpha = roi_a >= roi_b
    ts = np.where(alpha, t, 1.0 - t)
    ms = np.where(alpha, pa, pb)
    edge = np.where(alpha, roi_a, roi_b)
    pos = edge > 0.0
    win = np.where(alpha, y, ~y)

    if strategy.kind == "unif":
        d = strategy.unit_stake if strategy.unit_stake is not None else 1.0 / n
        f = np.where(pos, d, 0.0)
        if np.any(f.sum(axis=-1) > 1.0 + 1e-12):
            raise BudgetError(f"unit stake {d} times the number of positive-edge bets exceeds 1")
    else:
        mu = np.where(pos, edge, 0.0)
        var = ts * (1.0 - ts) / ms**2  # bet_profit_moments with t in place of r
        if strategy.kind == "sharpe":
            w = np.divide(mu, var, out=np.zeros_like(mu), where=pos)
            s = w.sum(axis=-1, keepdims=True)
            f = np.divide(w, s, out=np.zeros_like(w), where=s > 0.0)
        else:  # mpt
            f = np.zeros_like(mu)
            for k in range(mu.shape[0]):
                sel = np.nonzero(pos[k])[0]
                if sel.size:
                    a = allocate_mpt(mu[k, sel], np.diag(var[k, sel]), strategy.risk_weight)
                    f[k, sel] = a.fractions
    profits = np.where(win, f * (1.0 / ms - 1.0), -f)
    return f, profits


@dataclass(frozen=True)
class RoundResult:
    total_profit: float
    per_bet_profits: np.ndarray
    stakes: np.ndarray
    accuracy_flags: np.ndarray
    breakdown: np.ndarray  # counts: consensus, upset, missed, spotted
    triples: TripleBatch = field(repr=False)
    outcomes: np.ndarray = field(repr=False)


def _round_draws(u: np.ndarray, n: int):
    """Split a (R, 4n) block of uniforms into latent normals and outcome uniforms."""
    z = ndtri(u[:, : 3 * n]).reshape(-1, 3)
    return z, u[:, 3 * n :]


def run_round(spec: MarketSpec, strategy: StrategyConfig, n: int, seed) -> RoundResult:
    """One round of ``n`` bets; ``seed`` may be an int or a prepared generator."""
    if n < 1:
        raise EmptyInputError("a round needs at least one bet")
    gen = rng.as_generator(seed, "simulator.round")
    u = rng.uniforms(gen, (1, 4 * n))
    z, v = _round_draws(u, n)
    factor = spec.latent_factor()
    mr, mm, mt = spec.marginals()
    r = mr.from_latent(latent_combination(z, factor[0]))
    m = mm.from_latent(latent_combination(z, factor[1]))
    t = mt.from_latent(latent_combination(z, factor[2]))
    y = v[0] < r
    stakes, profits = round_positions(t, m, y, strategy, spec.margin)
    return RoundResult(
        total_profit=float(profits.sum()),
        per_bet_profits=profits[0],
        stakes=stakes[0],
        accuracy_flags=(t > 0.5) == y,
        breakdown=breakdown_counts(y, t, m),
        triples=TripleBatch(r, m, t),
        outcomes=y,
    )


# --------------------------------------------------------------------------
# Experiment grid


@dataclass(frozen=True)
class ExperimentGrid:
    base: MarketSpec = field(default_factory=MarketSpec)
    corr_tr: tuple = (0.85, 0.90, 0.95)
    corr_tm: tuple = (0.85, 0.90, 0.95)
    corr_rm: tuple = (0.85, 0.90, 0.95)
    rounds: int = 10_000
    bets_per_round: int = 30
    strategies: tuple = (StrategyConfig("sharpe"), StrategyConfig("unif"))

    def __post_init__(self):
        if self.rounds < 1 or self.bets_per_round < 1:
            raise DomainError("rounds and bets_per_round must be at least 1")
        if not (self.corr_tr and self.corr_tm and self.corr_rm):
            raise DomainError("every correlation axis needs at least one value")
        kinds = [s.kind for s in self.strategies]
        if len(set(kinds)) != len(kinds):
            raise DomainError("strategy kinds in a grid must be distinct")

    def cell_spec(self, tr: float, tm: float, rm: float) -> MarketSpec:
        return self.base.with_(corr_tr=tr, corr_tm=tm, corr_rm=rm)


@dataclass(frozen=True)
class CellResult:
    corr_tr: float
    corr_tm: float
    profit: dict  # kind -> (mean, se), fractions of the round budget
    accuracy: float
    breakdown: np.ndarray  # proportions: consensus, upset, missed, spotted


EXPERIMENT_HEADER = "corr_tr,corr_tm,w_sharpe,w_sharpe_se,w_unif,w_unif_se,accuracy,consensus,upset,missed,spotted"


@dataclass(frozen=True)
class ExperimentResult:
    cells: tuple[CellResult, ...]

    def cell(self, tr: float, tm: float) -> CellResult:
        for c in self.cells:
            if math.isclose(c.corr_tr, tr) and math.isclose(c.corr_tm, tm):
                return c
        raise KeyError((tr, tm))

    def to_csv(self, header_comment: str | None = None) -> str:
        """Percentages with 2 decimals; missing strategies are left blank."""
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write(EXPERIMENT_HEADER + "\n")

        def pct(kind):
            if kind not in c.profit:
                return ","
            mean, se = c.profit[kind]
            return f"{100 * mean:.2f},{100 * se:.2f}"

        for c in self.cells:
            b = 100 * c.breakdown
            buf.write(
                f"{c.corr_tr:.2f},{c.corr_tm:.2f},{pct('sharpe')},{pct('unif')},{100 * c.accuracy:.2f},"
                f"{b[0]:.2f},{b[1]:.2f},{b[2]:.2f},{b[3]:.2f}\n"
            )
        return buf.getvalue()


def experiment_stream_label(rm_index: int) -> str:
    return f"simulator.experiment/rm{rm_index}"


def _run_block(grid: ExperimentGrid, seed: int, j: int, start: int, count: int):
    """Simulate rounds [start, start+count) for every (tr, tm) cell at corr_rm index j."""
    n = grid.bets_per_round
    rm = grid.corr_rm[j]
    gen = rng.stream(seed, experiment_stream_label(j), step=start * n)
    z, v = _round_draws(rng.uniforms(gen, (count, 4 * n)), n)
    first = grid.cell_spec(grid.corr_tr[0], grid.corr_tm[0], rm)
    f0 = first.latent_factor()
    mr, mm, mt = first.marginals()
    r = mr.from_latent(latent_combination(z, f0[0])).reshape(count, n)
    m = mm.from_latent(latent_combination(z, f0[1])).reshape(count, n)
    y = v < r
    m_ok = (m > 0.5) == y
    out = {}
    for tr in grid.corr_tr:
        for tm in grid.corr_tm:
            spec = grid.cell_spec(tr, tm, rm)
            t = mt.from_latent(latent_combination(z, spec.latent_factor()[2])).reshape(count, n)
            profits = {}
            for s in grid.strategies:
                _, p = round_positions(t, m, y, s, spec.margin)
                profits[s.kind] = p.sum(axis=1)
            t_ok = (t > 0.5) == y
            counts = np.array(
                [
                    np.count_nonzero(t_ok & m_ok),
                    np.count_nonzero(~t_ok & ~m_ok),
                    np.count_nonzero(~t_ok & m_ok),
                    np.count_nonzero(t_ok & ~m_ok),
                ]
            )
            out[(tr, tm)] = (profits, counts)
    return out


def run_experiment(grid: ExperimentGrid, seed: int, threads: int = 1, block_rounds: int = 500) -> ExperimentResult:
    """Average each (corr_tr, corr_tm) cell over the corr_rm values and all rounds.

    Rounds for corr_rm index ``j`` come from stream
    ``simulator.experiment/rm{j}``; the (tr, tm) cells share those draws, so
    r, m and outcomes are common across cells and differences between cells
    reflect the trader estimates alone.  The standard error of a cell mean is
    ``sqrt(sum_j se_j^2) / J`` with ``se_j`` the round-level standard error.
    """
    for s in grid.strategies:
        if s.kind == "unif" and s.unit_stake is not None and s.unit_stake * grid.bets_per_round > 1.0 + 1e-12:
            raise BudgetError("unit_stake * bets_per_round exceeds the unit budget")
    for rm in grid.corr_rm:
        for tr in grid.corr_tr:
            for tm in grid.corr_tm:
                grid.cell_spec(tr, tm, rm).latent_factor()  # surface infeasibility early
    tasks = [
        (j, start, min(block_rounds, grid.rounds - start))
        for j in range(len(grid.corr_rm))
        for start in range(0, grid.rounds, block_rounds)
    ]

    def work(task):
        return _run_block(grid, seed, *task)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            blocks = list(ex.map(work, tasks))
    else:
        blocks = [work(tk) for tk in tasks]

    J = len(grid.corr_rm)
    cells = []
    for tr in grid.corr_tr:
        for tm in grid.corr_tm:
            profit = {}
            for s in grid.strategies:
                means, ses = [], []
                for j in range(J):
                    w = np.concatenate([b[(tr, tm)][0][s.kind] for tk, b in zip(tasks, blocks) if tk[0] == j])
                    means.append(w.mean())
                    ses.append(w.std(ddof=1) / math.sqrt(w.size) if w.size > 1 else 0.0)
                profit[s.kind] = (float(np.mean(means)), float(math.sqrt(np.sum(np.square(ses))) / J))
            counts = sum(b[(tr, tm)][1] for b in blocks)
            props = counts / counts.sum()
            cells.append(CellResult(tr, tm, profit, float(props[0] + props[3]), props))
    return ExperimentResult(tuple(cells))


# --------------------------------------------------------------------------
# Backtesting learned estimates


def backtest(t, m, y, bets_per_round: int = 30, margin: float = 0.0, kinds=("sharpe", "unif")) -> dict:
    """Per-round profits of each strategy on consecutive chunks of ``bets_per_round``.

    Trailing rows that do not fill a round are dropped.
    """
    t, m, y = (np.asarray(v, dtype=float) for v in (t, m, y))
    rounds = t.size // bets_per_round
    if rounds < 1:
        raise EmptyInputError("fewer rows than one round of bets")
    k = rounds * bets_per_round
    shape = (rounds, bets_per_round)
    tt, mm, yy = t[:k].reshape(shape), m[:k].reshape(shape), y[:k].reshape(shape) > 0.5
    out = {}
    for kind in kinds:
        _, p = round_positions(tt, mm, yy, StrategyConfig(kind), margin)
        out[kind] = p.sum(axis=1)
    return out


# --------------------------------------------------------------------------
# Synthetic market for the learner


@dataclass(frozen=True)
class LearnerMarketSpec:
    """Noise structure of the synthetic bookmaker-versus-learner market.

    The latent log-odds ``s = logit(r)`` is observed with noise by the
    bookmaker (``shared_noise`` plus ``book_noise``) and by two informative
    features: a public one that shares the bookmaker's ``shared_noise``
    component, and a private one with independent noise.  Any further feature
    columns are pure noise.  ``signal`` scales how much of ``s`` reaches the
    features; 0 makes them uninformative.
    """

    feature_dim: int = 2
    mean_r: float = 0.5
    var_r: float = 0.056
    shared_noise: float = 0.5
    book_noise: float = 0.1
    public_noise: float = 0.6
    private_noise: float = 1.2
    signal: float = 1.0

    def __post_init__(self):
        if self.feature_dim < 1:
            raise DomainError("feature_dim must be at least 1")
        for name in ("shared_noise", "book_noise", "public_noise", "private_noise", "signal"):
            if getattr(self, name) < 0.0:
                raise DomainError(f"{name} must be nonnegative")
        beta_params(self.mean_r, self.var_r)


def _posterior_mean(b: np.ndarray, prior_s: np.ndarray, prior_r: np.ndarray, sd: float) -> np.ndarray:
    """E[r | s + N(0, sd^2) = b] under an equal-weight discrete prior, interpolated on a grid."""
    grid = np.linspace(b.min(), b.max(), 4001)
    out = np.empty_like(grid)
    for k in range(0, grid.size, 500):
        g = grid[k : k + 500, None]
        logw = -0.5 * ((g - prior_s[None, :]) / sd) ** 2
        w = np.exp(logw - logw.max(axis=1, keepdims=True))
        out[k : k + 500] = (w * prior_r).sum(axis=1) / w.sum(axis=1)
    return np.interp(b, grid, out)


def synth_market_for_learner(n: int, spec: LearnerMarketSpec, seed) -> LearnerDataset:
    """Synthetic labelled market with a calibrated bookmaker.

    ``r`` is Beta distributed; the bookmaker quotes ``m = E[r | b]`` for its
    noisy log-odds reading ``b``, so ``m`` is calibrated by construction.
    The hidden ``r`` is retained on the returned dataset for audit.
    """
    if n < 1:
        raise EmptyInputError("n must be at least 1")
    gen = rng.as_generator(seed, "simulator.learner_market")
    k = spec.feature_dim
    u = rng.uniforms(gen, (n, 4 + k))
    a, b = beta_params(spec.mean_r, spec.var_r)
    r = np.clip(beta_ppf(u[:, 0], a, b), 1e-12, 1 - 1e-12)
    s = logit(r)
    e = ndtri(u[:, 1 : 3 + k])  # shared, book, public, private, extra noise
    book_sd = math.hypot(spec.shared_noise, spec.book_noise)
    if book_sd == 0.0:
        m = r.copy()
    else:
        reading = s + spec.shared_noise * e[:, 0] + spec.book_noise * e[:, 1]
        nodes = np.clip(beta_ppf((np.arange(2000) + 0.5) / 2000, a, b), 1e-12, 1 - 1e-12)
        m = _posterior_mean(reading, logit(nodes), nodes, book_sd)
    m = np.clip(m, 1e-9, 1 - 1e-9)
    x = np.empty((n, k))
    x[:, 0] = spec.signal * (s + spec.shared_noise * e[:, 0]) + spec.public_noise * e[:, 2]
    if k > 1:
        x[:, 1] = spec.signal * s + spec.private_noise * e[:, 3]
    if k > 2:
        x[:, 2:] = e[:, 4:]
    y = (u[:, 3 + k] < r).astype(float)
    return LearnerDataset(x, y, m, "betting", r)


# --------------------------------------------------------------------------
# Ordering census


@dataclass(frozen=True)
class CensusResult:
    frequencies: dict  # ordering label (including "tie") -> fraction
    profitable_fraction: float
    n: int

    def to_csv(self, header_comment: str | None = None) -> str:
        from .returns import ORDERING_TABLE

        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("ordering,decision,profitable,kelly_tendency,frequency\n")
        for name in (*ORDERINGS, TIE.ordering):
            row = ORDERING_TABLE.get(name, TIE)
            dec = "" if row.decision is None else ("buy" if row.decision.value == "alpha" else "sell")
            buf.write(
                f"{name},{dec},{str(row.profitable).lower()},{row.kelly_tendency or ''},"
                f"{self.frequencies[name]:.6f}\n"
            )
        buf.write(f"essentially_profitable,,,,{self.profitable_fraction:.6f}\n")
        return buf.getvalue()


def mirror_sample(n: int, seed, spread: float = 0.5) -> TripleBatch:
    """Mirror-image estimates: ``m = r + d`` and ``t = r - d`` with symmetric ``d``."""
    gen = rng.as_generator(seed, "simulator.mirror")
    u = rng.uniforms(gen, (n, 2))
    r = u[:, 0]
    d = spread * np.minimum(r, 1.0 - r) * (2.0 * u[:, 1] - 1.0)
    return TripleBatch(r, r + d, r - d)


def ordering_census(source, n: int, seed) -> CensusResult:
    """Ordering frequencies and profitable share for ``"uniform"``, ``"mirror"``,
    a :class:`MarketSpec`, or an existing :class:`TripleBatch`."""
    if isinstance(source, TripleBatch):
        batch = source
    elif isinstance(source, MarketSpec):
        batch = sample_correlated_beta(source, n, seed)
    elif source == "uniform":
        batch = sample_uniform(n, seed)
    elif source == "mirror":
        batch = mirror_sample(n, seed)
    else:
        raise DomainError(f"unknown census source {source!r}")
    if len(batch) < 1:
        raise EmptyInputError("census needs at least one triple")
    codes = _ordering_codes(batch.r, batch.m, batch.t)
    total = codes.size
    freq = {name: float(np.count_nonzero(codes == c)) / total for c, name in _CODE_TO_ORDERING.items()}
    freq = {name: freq[name] for name in ORDERINGS}
    freq[TIE.ordering] = float(np.count_nonzero(codes < 0)) / total
    prof = float(np.mean(essentially_profitable(batch)))
    return CensusResult(freq, prof, total)
