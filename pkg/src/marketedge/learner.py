"""Linear-logistic estimator trained with a decorrelation-augmented squared loss.

Two loss variants are supported for predictions ``t``, labels ``y`` and
market estimates ``m``::

    residual_cov     mean[(t - y)^2 + gamma (t - y)(m - y)]
    market_distance  mean[(t - y)^2 - gamma (t - m)^2]

The second needs no access to true probabilities and is the default in
betting mode.  Gradients are analytic and checked against central finite
differences in the test suite.
"""
from __future__ import annotations

import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from . import rng
from .datasets import LearnerDataset
from .errors import DivergenceError, DomainError
from .metrics import accuracy as _accuracy
from .metrics import pearson

LINKS = ("logistic", "identity")
VARIANTS = ("residual_cov", "market_distance")
LOGIT_CLIP = 30.0
DIVERGENCE_LIMIT = 1e12


class NegativeLossWarning(UserWarning):
    """The market-distance loss stayed negative over the second half of training."""


@dataclass
class LearnerModel:
    weights: np.ndarray
    link: str = "logistic"
    intercept: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.link not in LINKS:
            raise DomainError(f"link must be one of {LINKS}")
        if not np.all(np.isfinite(self.weights)):
            raise DomainError("weights must be finite")

    def design(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        x2 = x[None, :] if x.ndim == 1 else x
        if self.intercept:
            x2 = np.column_stack([np.ones(x2.shape[0]), x2])
        if x2.shape[1] != self.weights.shape[0]:
            raise DomainError(f"feature dimension {x2.shape[1]} != weight dimension {self.weights.shape[0]}")
        return x2


def _link(z: np.ndarray, link: str) -> np.ndarray:
    if link == "identity":
        return z
    return expit(np.clip(z, -LOGIT_CLIP, LOGIT_CLIP))


def predict(model: LearnerModel, x):
    """Probability (logistic link) or value (identity link) for one or many rows."""
    x = np.asarray(x, dtype=float)
    out = _link(model.design(x) @ model.weights, model.link)
    return float(out[0]) if x.ndim == 1 else out


def loss_mse_star(t, y, m, gamma: float, variant: str = "market_distance") -> float:
    t, y, m = (np.asarray(v, dtype=float) for v in (t, y, m))
    if variant == "residual_cov":
        return float(np.mean((t - y) ** 2 + gamma * (t - y) * (m - y)))
    if variant == "market_distance":
        return float(np.mean((t - y) ** 2 - gamma * (t - m) ** 2))
    raise DomainError(f"loss variant must be one of {VARIANTS}")


def _dloss_dt(t, y, m, gamma, variant):
    n = t.shape[0]
    if variant == "residual_cov":
        return (2.0 * (t - y) + gamma * (m - y)) / n
    if variant == "market_distance":
        return (2.0 * (t - y) - 2.0 * gamma * (t - m)) / n
    raise DomainError(f"loss variant must be one of {VARIANTS}")


def gradient(model: LearnerModel, batch: LearnerDataset, gamma: float, variant: str = "market_distance") -> np.ndarray:
    """Analytic gradient of the loss with respect to the weights."""
    if len(batch) == 0:
        raise DomainError("gradient needs a nonempty batch")
    d = model.design(batch.x)
    z = d @ model.weights
    t = _link(z, model.link)
    g = _dloss_dt(t, batch.y, batch.m, gamma, variant)
    if model.link == "logistic":
        g = g * t * (1.0 - t) * (np.abs(z) < LOGIT_CLIP)
    return d.T @ g


def batch_loss(model: LearnerModel, batch: LearnerDataset, gamma: float, variant: str) -> float:
    return loss_mse_star(predict(model, batch.x), batch.y, batch.m, gamma, variant)


def finite_difference_gradient(model, batch, gamma, variant, h: float = 1e-6) -> np.ndarray:
    w0 = model.weights
    out = np.empty_like(w0)
    for i in range(w0.size):
        e = np.zeros_like(w0)
        e[i] = h
        up = batch_loss(replace(model, weights=w0 + e), batch, gamma, variant)
        dn = batch_loss(replace(model, weights=w0 - e), batch, gamma, variant)
        out[i] = (up - dn) / (2.0 * h)
    return out


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.0
    learning_rate: float = 0.5
    epochs: int = 40
    batch: int = 256
    seed: int = 0
    loss_variant: str | None = None  # None picks by dataset mode
    link: str | None = None
    intercept: bool = True
    weight_decay: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0):
            raise DomainError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not self.learning_rate > 0.0:
            raise DomainError("learning_rate must be positive")
        if self.epochs < 1 or self.batch < 1:
            raise DomainError("epochs and batch must be at least 1")
        if self.loss_variant is not None and self.loss_variant not in VARIANTS:
            raise DomainError(f"loss_variant must be one of {VARIANTS}")
        if self.link is not None and self.link not in LINKS:
            raise DomainError(f"link must be one of {LINKS}")

    def resolved(self, mode: str) -> tuple[str, str]:
        variant = self.loss_variant or ("market_distance" if mode == "betting" else "residual_cov")
        link = self.link or ("logistic" if mode == "betting" else "identity")
        return variant, link


def train(dataset: LearnerDataset, config: TrainConfig, stream_index: int = 0):
    """Mini-batch gradient descent; returns ``(model, per-epoch full-data loss)``."""
    if len(dataset) == 0:
        raise DomainError("cannot train on an empty dataset")
    variant, link = config.resolved(dataset.mode)
    dim = dataset.dim + int(config.intercept)
    if dataset.dim == 0:
        w = np.zeros(dim)
    else:
        u = rng.uniforms(rng.stream(config.seed, f"learner.init/{stream_index}"), dim)
        w = (2.0 * u - 1.0) / math.sqrt(dim)
    model = LearnerModel(w, link, config.intercept)
    shuffle = rng.stream(config.seed, f"learner.shuffle/{stream_index}")
    n = len(dataset)
    trace = np.empty(config.epochs)
    for epoch in range(config.epochs):
        order = shuffle.permutation(n)
        for k in range(0, n, config.batch):
            idx = order[k : k + config.batch]
            sub = LearnerDataset(dataset.x[idx], dataset.y[idx], dataset.m[idx], dataset.mode)
            g = gradient(model, sub, config.gamma, variant)
            if config.weight_decay:
                g = g + config.weight_decay * model.weights
            model.weights = model.weights - config.learning_rate * g
        loss = batch_loss(model, dataset, config.gamma, variant)
        if config.weight_decay:
            loss += 0.5 * config.weight_decay * float(model.weights @ model.weights)
        if not np.isfinite(loss) or abs(loss) > DIVERGENCE_LIMIT or not np.all(np.isfinite(model.weights)):
            raise DivergenceError(
                f"training diverged at epoch {epoch} (loss {loss:.3g}); reduce learning_rate={config.learning_rate}"
            )
        trace[epoch] = loss
    tail = trace[config.epochs // 2 :]
    if config.gamma > 0 and tail.size and np.all(tail < 0.0):
        warnings.warn(NegativeLossWarning("loss negative throughout the second half of training"), stacklevel=2)
    return model, trace


# --------------------------------------------------------------------------
# Gamma sweep

SWEEP_HEADER = "gamma,profit_sharpe,profit_sharpe_se,profit_unif,profit_unif_se,accuracy,accuracy_se,corr_tm"


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    profit_sharpe: float
    profit_sharpe_se: float
    profit_unif: float
    profit_unif_se: float
    accuracy: float
    accuracy_se: float
    corr_tm: float
    corr_tm_se: float = 0.0


@dataclass(frozen=True)
class SweepTable:
    rows: tuple[SweepRow, ...]
    replicates: int

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def to_csv(self, header_comment: str | None = None) -> str:
        """Profits and accuracy in percent (2 decimals); corr_tm to 6 decimals."""
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write(SWEEP_HEADER + "\n")
        for r in self.rows:
            buf.write(
                f"{r.gamma:.2f},{100 * r.profit_sharpe:.2f},{100 * r.profit_sharpe_se:.2f},"
                f"{100 * r.profit_unif:.2f},{100 * r.profit_unif_se:.2f},{100 * r.accuracy:.2f},"
                f"{100 * r.accuracy_se:.2f},{r.corr_tm:.6f}\n"
            )
        return buf.getvalue()


def _evaluate(dataset, gamma, config, train_split, bets_per_round, margin, k):
    from .simulator import backtest

    tr, te = dataset.split(train_split)
    model, _ = train(tr, replace(config, gamma=gamma), stream_index=k)
    t = predict(model, te.x)
    profits = backtest(t, te.m, te.y, bets_per_round, margin)
    return _accuracy(te.y, t), pearson(t, te.m), profits["sharpe"], profits["unif"], len(te)


def _se(v: np.ndarray) -> float:
    return float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0


def gamma_sweep(
    datasets,
    gammas,
    config: TrainConfig,
    train_split: float | int = 0.25,
    bets_per_round: int = 30,
    margin: float = 0.0,
    threads: int = 1,
) -> SweepTable:
    """Train one model per (replicate, gamma) and backtest it on held-out rows.

    ``datasets`` is one dataset or a sequence of replicates; an item may also
    be a zero-argument callable that builds the replicate on demand, so large
    synthetic replicates need not coexist in memory.  Each replicate is split
    chronologically by ``train_split``.  All gammas within a replicate share
    the same initialisation and shuffling streams.  With several replicates,
    standard errors are taken across replicate means; with one, across rounds
    (profits) or outcomes (accuracy).
    """
    if isinstance(datasets, LearnerDataset) or callable(datasets):
        datasets = [datasets]
    gammas = [float(g) for g in gammas]
    for g in gammas:
        if not (0.0 <= g <= 1.0):
            raise DomainError(f"gamma values must lie in [0, 1], got {g}")
    if not gammas:
        raise DomainError("gamma sweep needs at least one gamma value")
    results = []  # results[k][i] for replicate k, gamma i
    for k, item in enumerate(datasets):
        data = item() if callable(item) else item

        def run(g, data=data, k=k):
            return _evaluate(data, g, config, train_split, bets_per_round, margin, k)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                results.append(list(ex.map(run, gammas)))
        else:
            results.append([run(g) for g in gammas])
        del data
    reps = len(results)
    rows = []
    for i, g in enumerate(gammas):
        res = [results[k][i] for k in range(reps)]
        acc = np.array([r[0] for r in res])
        corr = np.array([r[1] for r in res])
        if reps > 1:
            ps = np.array([r[2].mean() for r in res])
            pu = np.array([r[3].mean() for r in res])
            row = SweepRow(g, ps.mean(), _se(ps), pu.mean(), _se(pu), acc.mean(), _se(acc), corr.mean(), _se(corr))
        else:
            ps, pu, n_test = res[0][2], res[0][3], res[0][4]
            acc_se = math.sqrt(acc[0] * (1.0 - acc[0]) / n_test)
            row = SweepRow(g, ps.mean(), _se(ps), pu.mean(), _se(pu), acc[0], acc_se, corr[0], 0.0)
        rows.append(row)
    return SweepTable(tuple(rows), reps)
