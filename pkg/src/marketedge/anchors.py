"""Published worked numbers, recomputed from the library for audit.

Each anchor pairs a reference value with a tolerance that reflects how the
reference was rounded in print (e.g. 0.66 for 0.6667 needs 0.01).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .returns import Side, decide, expected_roi_bet, expected_roi_stock, true_expected_roi
from .strategies import allocate_fractional_kelly, allocate_kelly, kelly_growth


@dataclass(frozen=True)
class Anchor:
    name: str
    reference: float
    tol: float
    compute: Callable[[], float]


def _half_kelly_growth(beliefs):
    return kelly_growth([0.5, 0.5], allocate_fractional_kelly(beliefs, 0.5), [0.3, 0.7], "ten")


WORKED_ANCHORS: tuple[Anchor, ...] = (
    Anchor("stock ROI, buy at 100 expecting 150", 0.5, 1e-12, lambda: expected_roi_stock(150.0, 100.0, Side.ALPHA)),
    Anchor("bet ROI at odds 2.0 with t=0.75", 0.5, 1e-12, lambda: expected_roi_bet(0.75, 0.5, Side.ALPHA)),
    Anchor("stock estimated ROI t=15, m=9", 0.6667, 1e-4, lambda: expected_roi_stock(15.0, 9.0, Side.ALPHA)),
    Anchor("stock true ROI r=10, m=9", 0.1111, 1e-4, lambda: true_expected_roi(10.0, 9.0, Side.ALPHA, "stock")),
    Anchor("bet decision t=0.9, m=0.5 estimated ROI", 0.8, 1e-12, lambda: decide(0.9, 0.5, 0.5).estimated_roi),
    Anchor("bet true ROI r=0.6, m=0.5", 0.2, 1e-12, lambda: true_expected_roi(0.6, 0.5, Side.ALPHA)),
    Anchor("bet estimated ROI t=0.7, m=0.3", 1.33, 0.005, lambda: expected_roi_bet(0.7, 0.3, Side.ALPHA)),
    Anchor("bet true ROI r=0.5, m=0.3", 0.66, 0.01, lambda: true_expected_roi(0.5, 0.3, Side.ALPHA)),
    Anchor(
        "full Kelly growth, coincident t=m",
        0.0,
        1e-12,
        lambda: kelly_growth([0.5, 0.5], allocate_kelly([0.3, 0.7]), [0.3, 0.7], "ten"),
    ),
    Anchor(
        "full Kelly growth, swapped t",
        0.0,
        1e-12,
        lambda: kelly_growth([0.5, 0.5], allocate_kelly([0.7, 0.3]), [0.3, 0.7], "ten"),
    ),
    Anchor("half Kelly growth, coincident t=m (base 10)", 0.0, 1e-12, lambda: _half_kelly_growth([0.3, 0.7])),
    Anchor("half Kelly growth, decorrelated t (base 10)", 0.038, 0.001, lambda: _half_kelly_growth([0.7, 0.3])),
)


def check_anchors(anchors=WORKED_ANCHORS) -> list[tuple[Anchor, float, bool]]:
    out = []
    for a in anchors:
        value = a.compute()
        out.append((a, value, abs(value - a.reference) <= a.tol))
    return out


def format_report(results) -> str:
    lines = []
    for a, value, ok in results:
        lines.append(
            f"{'PASS' if ok else 'FAIL'}  {a.name}: computed {value:.6f}, reference {a.reference:g} +/- {a.tol:g}"
        )
    failed = sum(not ok for *_, ok in results)
    lines.append(f"{len(results) - failed}/{len(results)} anchors reproduced")
    return "\n".join(lines) + "\n"

