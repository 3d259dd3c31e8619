"""Expected and true returns, the trade decision rule, and ordering classes."""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .market_model import EstimateTriple, Side, TripleBatch

BUY, SELL = Side.ALPHA, Side.BETA


def _check_prob(*vals):
    for v in vals:
        if not (0.0 < v < 1.0):
            raise DomainError(f"probability must lie in (0,1), got {v}")


def _check_price(*vals):
    for v in vals:
        if not v > 0.0:
            raise DomainError(f"price must be positive, got {v}")


def expected_roi_bet(t: float, m_side: float, side: Side) -> float:
    """Estimated ROI of a unit bet priced at ``m_side`` given belief ``t`` in alpha."""
    _check_prob(t, m_side)
    p = t if Side(side) is Side.ALPHA else 1.0 - t
    return p / m_side - 1.0


def expected_roi_stock(t: float, m_side: float, side: Side) -> float:
    _check_price(t, m_side)
    if Side(side) is Side.ALPHA:
        return (t - m_side) / m_side
    return (m_side - t) / m_side


def true_expected_roi(r: float, m: float, decision: Side, mode: str = "betting", m_beta: float | None = None) -> float:
    """ROI under the true value ``r``.

    In betting mode a sell prices the beta side at ``1 - m`` unless a margined
    beta probability ``m_beta`` is supplied.
    """
    decision = Side(decision)
    if decision is Side.ABSTAIN:
        raise DomainError("true ROI is undefined for an abstain decision")
    if mode == "stock":
        _check_price(r, m)
        return (r - m) / m if decision is Side.ALPHA else (m - r) / m
    _check_prob(r, m)
    if decision is Side.ALPHA:
        return r / m - 1.0
    price = 1.0 - m if m_beta is None else m_beta
    return (1.0 - r) / price - 1.0


@dataclass(frozen=True)
class TradeDecision:
    side: Side
    estimated_roi: float


def decide(t: float, m_alpha: float, m_beta: float | None = None, mode: str = "betting") -> TradeDecision:
    """Take the side with the larger positive estimated ROI, else abstain.

    For betting, ``m_alpha``/``m_beta`` are the (possibly margined) side
    probabilities; ``m_beta`` defaults to ``1 - m_alpha``.  For stock, they are
    the buy and sell prices; ``m_beta`` defaults to ``m_alpha``.
    """
    if mode == "stock":
        m_beta = m_alpha if m_beta is None else m_beta
        ra = expected_roi_stock(t, m_alpha, Side.ALPHA)
        rb = expected_roi_stock(t, m_beta, Side.BETA)
    else:
        m_beta = 1.0 - m_alpha if m_beta is None else m_beta
        ra = expected_roi_bet(t, m_alpha, Side.ALPHA)
        rb = expected_roi_bet(t, m_beta, Side.BETA)
    assert not (ra > 0.0 and rb > 0.0), "both sides profitable implies a negative margin"
    if ra > 0.0 and ra >= rb:
        return TradeDecision(Side.ALPHA, ra)
    if rb > 0.0:
        return TradeDecision(Side.BETA, rb)
    return TradeDecision(Side.ABSTAIN, max(ra, rb))


# --------------------------------------------------------------------------
# Orderings


@dataclass(frozen=True)
class OrderingClass:
    ordering: str
    decision: Side | None
    profitable: bool
    kelly_tendency: str | None

    @property
    def degenerate(self) -> bool:
        return self.decision is None


ORDERING_TABLE: dict[str, OrderingClass] = {
    row.ordering: row
    for row in (
        OrderingClass("r<t<m", SELL, True, "overbet"),
        OrderingClass("r<m<t", BUY, False, "overbet"),
        OrderingClass("t<r<m", SELL, True, "underbet"),
        OrderingClass("t<m<r", SELL, False, "underbet"),
        OrderingClass("m<t<r", BUY, True, "underbet"),
        OrderingClass("m<r<t", BUY, True, "overbet"),
    )
}
TIE = OrderingClass("tie", None, False, None)
ORDERINGS = tuple(ORDERING_TABLE)

# code = 4*(r<m) + 2*(r<t) + (m<t); codes 2 and 5 are intransitive
_CODE_TO_ORDERING = {
    0: "t<m<r",
    1: "m<t<r",
    3: "m<r<t",
    4: "t<r<m",
    6: "r<t<m",
    7: "r<m<t",
}


def _ordering_codes(r, m, t) -> np.ndarray:
    code = 4 * (r < m).astype(np.int8) + 2 * (r < t).astype(np.int8) + (m < t).astype(np.int8)
    tie = (r == m) | (r == t) | (m == t)
    return np.where(tie, -1, code)


def classify_ordering(triple: EstimateTriple) -> OrderingClass:
    code = int(_ordering_codes(np.array(triple.r), np.array(triple.m), np.array(triple.t)))
    return TIE if code < 0 else ORDERING_TABLE[_CODE_TO_ORDERING[code]]


def classify_batch(batch: TripleBatch) -> np.ndarray:
    """Ordering label per triple ("tie" for any equality) as an object array."""
    codes = _ordering_codes(batch.r, batch.m, batch.t)
    labels = np.empty(codes.shape, dtype=object)
    labels[codes < 0] = TIE.ordering
    for code, name in _CODE_TO_ORDERING.items():
        labels[codes == code] = name
    return labels


def essentially_profitable(triple) -> bool | np.ndarray:
    """True where the trader sits on the profitable side of the mispricing.

    Accepts a single triple or a :class:`TripleBatch` (vectorised).
    """
    r, m, t = triple.r, triple.m, triple.t
    out = ((m < r) & (t > m)) | ((m > r) & (t < m))
    return bool(out) if np.ndim(out) == 0 else out


def classification_csv(batch: TripleBatch, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    buf.write("id,r,m,t,ordering,decision,profitable,kelly_tendency\n")
    labels = classify_batch(batch)
    for i, lab in enumerate(labels):
        row = ORDERING_TABLE.get(lab, TIE)
        dec = "" if row.decision is None else ("buy" if row.decision is BUY else "sell")
        buf.write(
            f"{i},{batch.r[i]:.12g},{batch.m[i]:.12g},{batch.t[i]:.12g},{row.ordering},{dec},"
            f"{str(row.profitable).lower()},{row.kelly_tendency or ''}\n"
        )
    return buf.getvalue()
