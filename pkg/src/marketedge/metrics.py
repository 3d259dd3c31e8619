"""Estimator-quality measures and market diagnostics."""
from __future__ import annotations

import io
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, EmptyInputError, UndefinedCorrelationError

CLAMP = 1e-12


class ProbabilityClampWarning(UserWarning):
    """Emitted when log-based metrics clamp probabilities; ``count`` says how many."""

    def __init__(self, count: int):
        self.count = count
        super().__init__(f"{count} probabilities clamped to [{CLAMP}, 1-{CLAMP}]")


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise EmptyInputError("metric needs at least one observation")
    return a, b


def mse(truth, est) -> float:
    truth, est = _pair(truth, est)
    return float(np.mean((est - truth) ** 2))


def bias(truth, est) -> float:
    truth, est = _pair(truth, est)
    return float(np.mean(est - truth))


def cond_variance(truth, est) -> float:
    """Population variance of the error, so that ``mse = bias**2 + cond_variance``."""
    truth, est = _pair(truth, est)
    return float(np.var(est - truth))


def xent(outcomes, probs) -> float:
    y, p = _pair(outcomes, probs)
    clamped = np.clip(p, CLAMP, 1.0 - CLAMP)
    n_clamped = int(np.count_nonzero(clamped != p))
    if n_clamped:
        warnings.warn(ProbabilityClampWarning(n_clamped), stacklevel=2)
    return float(-np.mean(y * np.log(clamped) + (1.0 - y) * np.log1p(-clamped)))


def kl(p, q) -> float:
    """``sum p_i log(p_i / q_i)`` in nats."""
    p, q = _pair(p, q)
    if np.any(q <= 0.0) or np.any(p < 0.0):
        raise DomainError("KL divergence needs q > 0 and p >= 0")
    nz = p > 0.0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])))


def pearson(x, y) -> float:
    x, y = _pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    den = math.sqrt(float(dx @ dx) * float(dy @ dy))
    if den == 0.0:
        raise UndefinedCorrelationError("zero variance; correlation undefined")
    return float(dx @ dy) / den


def _residual(y, r):
    design = np.column_stack([np.ones_like(r), r])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ coef


def partial_corr_tm_given_r(triples) -> float:
    """Correlation of T and M after regressing each on R by least squares."""
    r, m, t = (np.asarray(getattr(triples, k), dtype=float) for k in ("r", "m", "t"))
    if r.size < 3:
        raise EmptyInputError("partial correlation needs at least 3 triples")
    et, em = _residual(t, r), _residual(m, r)
    scale = max(np.abs(t).max(), np.abs(m).max(), 1.0)
    if np.ptp(et) <= 1e-14 * scale or np.ptp(em) <= 1e-14 * scale:
        raise UndefinedCorrelationError("constant residual; partial correlation undefined")
    return pearson(et, em)


def accuracy(outcomes, probs) -> float:
    """Share of outcomes predicted correctly by the rule ``prob > 1/2``."""
    y, p = _pair(outcomes, probs)
    return float(np.mean((p > 0.5) == (y > 0.5)))


@dataclass(frozen=True)
class Breakdown:
    consensus: float
    upset: float
    missed: float
    spotted: float

    @classmethod
    def from_counts(cls, counts) -> "Breakdown":
        c = np.asarray(counts, dtype=float)
        return cls(*(c / c.sum()))


def breakdown_counts(outcomes, t_probs, m_probs) -> np.ndarray:
    """Counts of (consensus, upset, missed, spotted); works on any array shape."""
    y = np.asarray(outcomes) > 0.5
    t_ok = (np.asarray(t_probs) > 0.5) == y
    m_ok = (np.asarray(m_probs) > 0.5) == y
    return np.array(
        [
            np.count_nonzero(t_ok & m_ok),
            np.count_nonzero(~t_ok & ~m_ok),
            np.count_nonzero(~t_ok & m_ok),
            np.count_nonzero(t_ok & ~m_ok),
        ]
    )


def breakdown(outcomes, t_probs, m_probs) -> Breakdown:
    if np.size(outcomes) == 0:
        raise EmptyInputError("breakdown needs at least one outcome")
    return Breakdown.from_counts(breakdown_counts(outcomes, t_probs, m_probs))


@dataclass(frozen=True)
class CalibrationCurve:
    bin_lo: np.ndarray
    bin_hi: np.ndarray
    mean_prob: np.ndarray  # NaN for empty bins
    emp_freq: np.ndarray
    count: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.emp_freq - self.mean_prob

    @property
    def weighted_gap(self) -> float:
        """Count-weighted mean absolute gap over non-empty bins."""
        ok = self.count > 0
        return float(np.sum(np.abs(self.gap[ok]) * self.count[ok]) / self.count[ok].sum())

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("bin_lo,bin_hi,mean_prob,emp_freq,count\n")
        for lo, hi, mp, ef, c in zip(self.bin_lo, self.bin_hi, self.mean_prob, self.emp_freq, self.count):
            mp_s = "" if c == 0 else f"{mp:.6f}"
            ef_s = "" if c == 0 else f"{ef:.6f}"
            buf.write(f"{lo:.6f},{hi:.6f},{mp_s},{ef_s},{int(c)}\n")
        return buf.getvalue()


def calibration_curve(outcomes, probs, bins: int = 10) -> CalibrationCurve:
    if bins < 2:
        raise ValueError("need at least 2 bins")
    y, p = _pair(outcomes, probs)
    edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.clip((p * bins).astype(int), 0, bins - 1)
    count = np.bincount(idx, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_prob = np.bincount(idx, weights=p, minlength=bins) / count
        emp_freq = np.bincount(idx, weights=y, minlength=bins) / count
    return CalibrationCurve(edges[:-1], edges[1:], mean_prob, emp_freq, count)


@dataclass(frozen=True)
class EstimatorReport:
    mse: float
    xent: float
    bias: float
    cond_variance: float
    pearson_tm: float
    partial_corr_tm_given_r: float
    accuracy: float

    CSV_HEADER = "mse,xent,bias,cond_variance,pearson_tm,partial_corr_tm_given_r,accuracy"

    @classmethod
    def from_arrays(cls, r, m, t, outcomes) -> "EstimatorReport":
        """Score trader estimates ``t`` against truth ``r``, market ``m`` and outcomes."""
        from .market_model import TripleBatch

        return cls(
            mse=mse(r, t),
            xent=xent(outcomes, t),
            bias=bias(r, t),
            cond_variance=cond_variance(r, t),
            pearson_tm=pearson(t, m),
            partial_corr_tm_given_r=partial_corr_tm_given_r(TripleBatch(r, m, t)),
            accuracy=accuracy(outcomes, t),
        )

    def to_csv_row(self) -> str:
        return ",".join(f"{v:.6f}" for v in asdict(self).values())
